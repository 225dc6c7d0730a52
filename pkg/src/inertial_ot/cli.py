"""Command-line pipeline.

Subcommands::

    generate  --out DIR --seqs-per-domain N --seed S
    train     --domains 0..m --head {cartesian,polar} [--per-domain]
    adapt     --source 0..m --method {ot,aug}
    eval      [--method fusion]
    shift
    report

``--source 0..m`` means the m+1 domains 0, 1, ..., m, which fills row m+1 of
the adaptation error matrix. Every option can also be given in a flat
``key = value`` file passed with ``--config``; flags win over file values.
A ``manifest.json`` written by an earlier run is accepted as a config file
as well, which is how a run is repeated.

The output root defaults to ``$INERTIAL_OT_OUTPUT`` (or ``./runs``).
Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import glob
import json
import logging
import os
import re
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .adapt import History, TrainConfig, gather, train_deepjdot, train_supervised
from .baseline import fusion_sequence
from .evaluate import (
    ErrorMatrix,
    SequenceErrors,
    ShiftMatrix,
    distance_error,
    evaluate_model,
    fragility_matrix,
    heading_error,
    latent_shift_matrix,
    raw_shift_matrix,
    write_cdf_csv,
    write_errors_csv,
)
from .io import DataError, load_dataset, save_dataset, sha256, write_json
from .sim import ConfigurationError, DatasetConfig, NoiseModel, build_dataset
from .tracker import CARTESIAN, POLAR, TrackerParams, TrainingError, with_head

log = logging.getLogger("inertial_ot")

OUTPUT_ENV = "INERTIAL_OT_OUTPUT"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
COMMANDS = ("generate", "train", "adapt", "eval", "shift", "report")


class UsageError(Exception):
    pass


class StageError(Exception):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _opt_float(v):
    return None if v is None or str(v).strip().lower() in ("", "none") else float(v)


def parse_range(text) -> list:
    """'0..3' -> [0, 1, 2, 3]; '5' -> [5]."""
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    s = str(text).strip()
    m = re.fullmatch(r"(\d+)\s*\.\.\s*(\d+)", s)
    if m:
        a, b = int(m.group(1)), int(m.group(2))
        if b < a:
            raise ValueError(f"empty range {s!r}")
        return list(range(a, b + 1))
    if re.fullmatch(r"\d+", s):
        return [int(s)]
    raise ValueError(f"bad range {s!r}, expected A..B")


def _int_list(text) -> list:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).replace(" ", "").split(",") if v]


# name, type, default, help, commands ("*" = all)
OPTIONS = [
    ("out", str, None, "output directory (dataset directory for generate)", "*"),
    ("data", str, None, "dataset directory (default: <out>/dataset)", "train adapt eval shift"),
    ("seed", int, 0, "random seed", "generate train adapt shift"),
    ("seeds", _int_list, None, "comma-separated seeds, overrides --seed", "train adapt shift"),
    ("seqs_per_domain", int, 100, "20 s sequences per domain", "generate"),
    ("train_fraction", float, 0.8, "fraction of sequences used for training", "generate"),
    ("noiseless", _bool, False, "disable sensor noise and bias", "generate"),
    ("accel_sigma", float, NoiseModel.accel_sigma, "accelerometer noise std (m/s^2)", "generate"),
    ("gyro_sigma", float, NoiseModel.gyro_sigma, "gyro noise std (rad/s)", "generate"),
    ("mag_sigma", float, NoiseModel.mag_sigma, "magnetometer noise std", "generate"),
    ("accel_bias_range", float, NoiseModel.accel_bias_range, "accelerometer bias half-range", "generate"),
    ("gyro_bias_range", float, NoiseModel.gyro_bias_range, "gyro bias half-range", "generate"),
    ("domains", parse_range, "0..0", "training domains A..B", "train"),
    ("per_domain", _bool, False, "train one model per listed domain", "train"),
    ("source", parse_range, "0..0", "source domains 0..m (m+1 domains)", "adapt"),
    ("method", str, None, "ot | aug (adapt, default ot); fusion (eval)", "adapt eval"),
    ("head", str, CARTESIAN, "regression head: cartesian | polar", "train adapt"),
    ("epochs", int, TrainConfig.epochs, "training epochs", "train adapt"),
    ("learning_rate", float, TrainConfig.learning_rate, "Adam step size", "train adapt"),
    ("batch_sequences", int, TrainConfig.batch_sequences, "sequences per minibatch", "train adapt"),
    ("grad_clip", float, TrainConfig.grad_clip, "global gradient-norm clip (0 = off)", "train adapt"),
    ("ot_subsample", int, TrainConfig.ot_subsample, "windows per side in each OT problem", "adapt"),
    ("alpha", float, TrainConfig.alpha, "latent weight in the OT cost", "adapt"),
    ("epsilon", _opt_float, None, "absolute entropic regularisation", "adapt"),
    ("relative_epsilon", float, TrainConfig.relative_epsilon, "epsilon as a fraction of mean cost", "adapt"),
    ("align_weight", float, TrainConfig.align_weight, "weight of the alignment term", "adapt"),
    ("sinkhorn_iters", int, TrainConfig.sinkhorn_iters, "Sinkhorn iteration cap", "adapt"),
    ("sinkhorn_tol", float, TrainConfig.sinkhorn_tol, "Sinkhorn marginal tolerance", "adapt"),
    ("pool_targets", _bool, TrainConfig.pool_targets, "mix target domains in each batch", "adapt"),
    ("n_ot", int, 256, "latent samples per domain for the latent shift", "shift"),
    ("cdf_points", int, 1000, "quantile points per CDF file", "shift"),
    ("gain", float, 0.02, "complementary-filter magnetometer gain", "eval"),
    ("trajectories", _bool, True, "write per-sequence fusion trajectories", "eval"),
]
_OPTION_TABLE = {name: (typ, default, cmds) for name, typ, default, _, cmds in OPTIONS}


def _applies(cmds, command):
    return cmds == "*" or command in cmds.split()


@dataclass
class ExperimentConfig:
    """Resolved settings for one invocation."""

    command: str
    output_dir: Path
    dataset_dir: Path | None = None
    seeds: list = field(default_factory=lambda: [0])
    head: str = CARTESIAN
    methods: list = field(default_factory=lambda: ["ot"])
    train: TrainConfig = field(default_factory=TrainConfig)
    noise: NoiseModel = field(default_factory=NoiseModel)
    flat: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.seeds:
            raise UsageError("seeds must be non-empty")
        if self.head not in (CARTESIAN, POLAR):
            raise UsageError(f"unknown head {self.head!r}")

    @classmethod
    def from_flat(cls, command, flat):
        out = Path(flat["out"])
        data = Path(flat["data"]) if flat.get("data") else None
        seeds = flat.get("seeds") or [flat.get("seed", 0)]
        head = flat.get("head", CARTESIAN)
        methods = [m for m in str(flat.get("method") or "").split(",") if m]
        if command == "adapt" and not methods:
            methods = ["ot"]
        noise = NoiseModel.noiseless() if flat.get("noiseless") else NoiseModel(
            **{k: flat.get(k, getattr(NoiseModel, k)) for k in
               ("accel_sigma", "gyro_sigma", "mag_sigma", "accel_bias_range", "gyro_bias_range")})
        tkeys = ("epochs", "learning_rate", "batch_sequences", "grad_clip", "ot_subsample", "alpha",
                 "epsilon", "relative_epsilon", "align_weight", "sinkhorn_iters", "sinkhorn_tol",
                 "pool_targets")
        base = TrainConfig()
        train = replace(base, seed=int(seeds[0]), tracker=with_head(base.tracker, head),
                        **{k: flat[k] for k in tkeys if k in flat})
        return cls(command, out, data, [int(s) for s in seeds], head, methods, train, noise, flat)


def _flat_to_text(flat) -> str:
    def fmt(v):
        if isinstance(v, list):
            if v and isinstance(v[0], int) and v == list(range(v[0], v[-1] + 1)):
                return f"{v[0]}..{v[-1]}"
            return ",".join(str(x) for x in v)
        return "none" if v is None else str(v)
    return "".join(f"{k} = {fmt(v)}\n" for k, v in sorted(flat.items()))


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines (``#`` comments) or a run manifest."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if path.suffix == ".json":
        try:
            snap = json.loads(text)
            return dict(snap["config"])
        except (ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"config {path} is not a run manifest: {exc}") from exc
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="inertial_ot", description="Indexed-domain inertial tracking with OT adaptation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for cmd in COMMANDS:
        sp = sub.add_parser(cmd)
        sp.add_argument("--config", help="flat key = value file or run manifest")
        sp.add_argument("-v", "--verbose", action="store_true")
        for name, typ, default, hlp, cmds in OPTIONS:
            if not _applies(cmds, cmd):
                continue
            flag = "--" + name.replace("_", "-")
            sp.add_argument(flag, dest=name, default=argparse.SUPPRESS, help=f"{hlp} (default {default})")
    return p


def resolve(argv=None):
    """Parse argv into (command, flat option dict, verbose)."""
    parser = build_parser()
    ns = vars(parser.parse_args(argv))
    command = ns.pop("command", None)
    if command is None:
        raise UsageError(parser.format_usage().strip())
    verbose = ns.pop("verbose", False)
    config_path = ns.pop("config", None)
    raw = read_config_file(config_path) if config_path else {}
    for k in raw:
        if k not in _OPTION_TABLE or not _applies(_OPTION_TABLE[k][2], command):
            raise UsageError(f"unknown config key {k!r} for {command}")
    raw.update(ns)
    flat = {}
    for name, (typ, default, cmds) in _OPTION_TABLE.items():
        if not _applies(cmds, command):
            continue
        v = raw.get(name, default)
        try:
            flat[name] = None if v is None else typ(v)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"--{name.replace('_', '-')}: {exc}") from exc
    root = os.environ.get(OUTPUT_ENV, "runs")
    if flat.get("out") is None:
        flat["out"] = str(Path(root) / "dataset") if command == "generate" else root
    if "data" in flat and flat["data"] is None:
        flat["data"] = str(Path(flat["out"]) / "dataset")
    return command, flat, verbose


# --------------------------------------------------------------------------
# run bookkeeping

class Run:
    """Collects stage timings and written files, then writes the manifest."""

    def __init__(self, cfg: ExperimentConfig, manifest_dir: Path, tag=""):
        self.cfg = cfg
        self.dir = Path(manifest_dir)
        self.name = f"manifest_{tag}.json" if tag else "manifest.json"
        self.stages = {}
        self.files = []

    def stage(self, name, fn, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            result = fn(*args, **kwargs)
        except (TrainingError, FloatingPointError) as exc:
            raise StageError(name, exc) from exc
        self.stages[name] = self.stages.get(name, 0.0) + time.perf_counter() - t0
        log.info("%s done in %.1f s", name, self.stages[name])
        return result

    def wrote(self, *paths):
        self.files.extend(Path(p) for p in paths)

    def finish(self):
        self.dir.mkdir(parents=True, exist_ok=True)
        files = sorted({p.resolve() for p in self.files})
        manifest = {
            "tool": "inertial_ot",
            "version": __version__,
            "command": self.cfg.command,
            "config": self.cfg.flat,
            "stages_seconds": {k: round(v, 3) for k, v in self.stages.items()},
            "files": {os.path.relpath(p, self.dir): sha256(p) for p in files},
        }
        write_json(self.dir / self.name, manifest)
        return self.dir / self.name


def _load(cfg: ExperimentConfig):
    if cfg.dataset_dir is None or not (cfg.dataset_dir / "dataset.json").exists():
        raise DataError(f"no dataset at {cfg.dataset_dir}; run `generate` first")
    return load_dataset(cfg.dataset_dir)


def _write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _f(v) -> str:
    return repr(float(v))


def _save_model(run: Run, run_dir: Path, params: TrackerParams, hist: History, info: dict):
    run_dir.mkdir(parents=True, exist_ok=True)
    params.save(run_dir / "checkpoint.json")
    hist.to_csv(run_dir / "history.csv")
    write_json(run_dir / "run.json", info)
    run.wrote(run_dir / "checkpoint.json", run_dir / "history.csv", run_dir / "run.json")


# --------------------------------------------------------------------------
# subcommands

def cmd_generate(cfg: ExperimentConfig):
    f = cfg.flat
    dcfg = DatasetConfig(seqs_per_domain=f["seqs_per_domain"], train_fraction=f["train_fraction"],
                         noise=cfg.noise)
    run = Run(cfg, cfg.output_dir)
    ds = run.stage("simulate", build_dataset, dcfg, cfg.seeds[0])
    written = run.stage("write", save_dataset, ds, cfg.output_dir)
    run.wrote(*written)
    return run


def cmd_train(cfg: ExperimentConfig):
    ds = _load(cfg)
    domains = cfg.flat["domains"]
    _check_domains(domains, ds)
    groups = [[d] for d in domains] if cfg.flat["per_domain"] else [domains]
    seeds = "-".join(str(s) for s in cfg.seeds)
    run = Run(cfg, cfg.output_dir / "train", f"d{domains[0]}-{domains[-1]}_{cfg.head}_s{seeds}")
    for seed in cfg.seeds:
        tcfg = replace(cfg.train, seed=seed)
        for grp in groups:
            name = f"d{grp[0]}-{grp[-1]}_{cfg.head}_s{seed}"
            data = gather(ds, grp, "train", tracker=tcfg.tracker)
            params, hist = run.stage(f"train {name}", train_supervised, data, tcfg)
            _save_model(run, cfg.output_dir / "train" / name, params, hist,
                        {"kind": "train", "domains": grp, "head": cfg.head, "seed": seed})
    return run


def _check_domains(domains, ds):
    n = ds.config.n_domains
    if any(not 0 <= d < n for d in domains):
        raise UsageError(f"domains must lie in 0..{n - 1}")


def cmd_adapt(cfg: ExperimentConfig):
    ds = _load(cfg)
    source = cfg.flat["source"]
    if source[0] != 0:
        raise UsageError("--source must start at domain 0 (0..m)")
    _check_domains(source, ds)
    n = ds.config.n_domains
    m = len(source)
    seeds = "-".join(str(s) for s in cfg.seeds)
    run = Run(cfg, cfg.output_dir / "adapt", f"{'-'.join(cfg.methods)}_m{m}_{cfg.head}_s{seeds}")
    for method in cfg.methods:
        if method not in ("ot", "aug"):
            raise UsageError(f"unknown adaptation method {method!r} (ot | aug)")
        for seed in cfg.seeds:
            tcfg = replace(cfg.train, seed=seed)
            src = gather(ds, source, "train", tracker=tcfg.tracker)
            name = f"{method}_m{m}_{cfg.head}_s{seed}"
            if method == "aug":
                params, hist = run.stage(f"adapt {name}", train_supervised, src, tcfg)
            else:
                targets = list(range(m, n))
                tgt = gather(ds, targets, "train", tracker=tcfg.tracker) if targets else None
                params, hist = run.stage(f"adapt {name}", train_deepjdot, src, tgt, tcfg)
            _save_model(run, cfg.output_dir / "adapt" / name, params, hist,
                        {"kind": "adapt", "method": method, "m": m, "source": source,
                         "head": cfg.head, "seed": seed})
    return run


def _runs(root: Path, kind: str):
    out = []
    for path in sorted(glob.glob(str(root / kind / "*" / "run.json"))):
        info = json.loads(Path(path).read_text(encoding="utf-8"))
        out.append((Path(path).parent, info))
    return out


def _suffix(head):
    return "" if head == CARTESIAN else f"_{head}"


def cmd_eval(cfg: ExperimentConfig):
    if any(m != "fusion" for m in cfg.methods):
        raise UsageError("eval evaluates every saved run; only --method fusion is selectable")
    ds = _load(cfg)
    out = cfg.output_dir / "eval"
    run = Run(cfg, out, "fusion" if "fusion" in cfg.methods else "")
    n = ds.config.n_domains
    if "fusion" in cfg.methods:
        _eval_fusion(cfg, ds, run, out)
        return run

    def p90_row(run_dir, info):
        params = TrackerParams.load(run_dir / "checkpoint.json")
        out.mkdir(parents=True, exist_ok=True)
        p90 = []
        for j in range(n):
            e = evaluate_model(params, ds, j, "test")
            path = out / f"errors_{run_dir.name}_d{j}.csv"
            write_errors_csv(path, e)
            run.wrote(path)
            p90.append(e.p90())
        return np.array(p90)

    adapt_runs = _runs(cfg.output_dir, "adapt")
    train_runs = _runs(cfg.output_dir, "train")
    if not adapt_runs and not train_runs:
        raise DataError(f"no train or adapt runs under {cfg.output_dir}")

    sweeps = {}
    for run_dir, info in adapt_runs:
        p90 = run.stage(f"eval {run_dir.name}", p90_row, run_dir, info)
        key = (info["method"], info["head"])
        sweeps.setdefault(key, {}).setdefault(info["m"], []).append(p90)
    for (method, head), rows in sorted(sweeps.items()):
        vals = np.full((n, n), np.nan)
        for m, lst in rows.items():
            vals[m - 1] = np.mean(lst, axis=0)
        path = out / f"error_matrix_{method}{_suffix(head)}.csv"
        ErrorMatrix(vals).to_csv(path)
        run.wrote(path)

    # per-domain models: fragility matrix over seeds with a complete set
    single = {}
    for run_dir, info in train_runs:
        if len(info["domains"]) == 1:
            single.setdefault((info["head"], info["seed"]), {})[info["domains"][0]] = run_dir
        else:
            run.stage(f"eval {run_dir.name}", p90_row, run_dir, info)
    for head in sorted({h for h, _ in single}):
        mats = []
        for (h, seed), dirs in sorted(single.items()):
            if h == head and len(dirs) == n:
                models = [TrackerParams.load(dirs[k] / "checkpoint.json") for k in range(n)]
                mats.append(run.stage(f"fragility s{seed}", fragility_matrix, models, ds).values)
        if mats:
            path = out / f"error_matrix_fragility{_suffix(head)}.csv"
            ErrorMatrix(np.mean(mats, axis=0), "fragility").to_csv(path)
            run.wrote(path)
    return run


def _eval_fusion(cfg, ds, run, out):
    p90 = []
    t0 = time.perf_counter()
    out.mkdir(parents=True, exist_ok=True)
    for k in range(ds.config.n_domains):
        dists, heads = [], []
        for sid in ds.test_ids:
            traj, gt = fusion_sequence(ds, k, int(sid), cfg.flat["gain"])
            dists.append(distance_error(traj, gt))
            heads.append(heading_error(traj, gt))
            if cfg.flat["trajectories"]:
                n = len(traj)
                t = ds.session(k).imu.t[int(sid) * n:(int(sid) + 1) * n]
                path = out / "fusion" / f"domain_{k}" / f"seq_{int(sid):03d}.csv"
                run.wrote(_write_csv(path, ["t", "x", "y", "phi"],
                                     [[_f(a), _f(b), _f(c), _f(e)] for a, (b, c, e) in zip(t, traj)]))
        errs = SequenceErrors(ds.test_ids, np.array(dists), np.array(heads))
        write_errors_csv(out / f"errors_fusion_d{k}.csv", errs)
        run.wrote(out / f"errors_fusion_d{k}.csv")
        p90.append(errs.p90())
    run.stages["fusion"] = time.perf_counter() - t0
    run.wrote(_write_csv(out / "p90_fusion.csv", [f"domain_{k}" for k in range(len(p90))],
                         [[_f(v) for v in p90]]))


def cmd_shift(cfg: ExperimentConfig):
    ds = _load(cfg)
    out = cfg.output_dir / "shift"
    run = Run(cfg, out)
    raw, cdfs = run.stage("raw shift", raw_shift_matrix, ds, cfg.flat["cdf_points"])
    out.mkdir(parents=True, exist_ok=True)
    raw.to_csv(out / "shift_raw.csv")
    run.wrote(out / "shift_raw.csv")
    for k, (v, q) in cdfs.items():
        write_cdf_csv(out / f"cdf_domain_{k}.csv", v, q)
        run.wrote(out / f"cdf_domain_{k}.csv")

    n = ds.config.n_domains
    single = {}
    for run_dir, info in _runs(cfg.output_dir, "train"):
        if len(info["domains"]) == 1 and info["head"] == cfg.head:
            single.setdefault(info["seed"], {})[info["domains"][0]] = run_dir
    mats = []
    for seed in cfg.seeds:
        dirs = single.get(seed, {})
        if len(dirs) != n:
            log.warning("seed %d: %d of %d per-domain models; skipping latent shift", seed, len(dirs), n)
            continue
        models = [TrackerParams.load(dirs[k] / "checkpoint.json") for k in range(n)]
        mats.append(run.stage(f"latent shift s{seed}", latent_shift_matrix, models, ds,
                              cfg.flat["n_ot"], seed).values)
    if mats:
        ShiftMatrix(np.mean(mats, axis=0), "latent_divergence").to_csv(out / "shift_latent.csv")
        run.wrote(out / "shift_latent.csv")
    return run


def _summary_rows(mats):
    rows = []
    for path in mats:
        method = Path(path).stem[len("error_matrix_"):]
        if method.startswith("fragility"):
            continue
        vals = ErrorMatrix.from_csv(path).values
        n = vals.shape[1]
        for m in range(1, n + 1):
            r = vals[m - 1]
            seen = r[:m]
            unseen = r[m:]
            rows.append([method, m,
                         _f(np.mean(seen)),
                         _f(np.mean(unseen)) if unseen.size else "nan",
                         _f(np.mean(r))])
    return rows


def cmd_report(cfg: ExperimentConfig):
    out = cfg.output_dir / "report"
    run = Run(cfg, out)
    mats = sorted(glob.glob(str(cfg.output_dir / "eval" / "error_matrix_*.csv")))
    if not mats:
        raise DataError(f"no error matrices under {cfg.output_dir / 'eval'}; run `eval` first")
    rows = run.stage("summarise", _summary_rows, mats)
    path = _write_csv(out / "summary.csv",
                      ["method", "m", "seen_p90_mean", "unseen_p90_mean", "all_p90_mean"], rows)
    run.wrote(path)
    return run


HANDLERS = {"generate": cmd_generate, "train": cmd_train, "adapt": cmd_adapt,
            "eval": cmd_eval, "shift": cmd_shift, "report": cmd_report}


def main(argv=None) -> int:
    try:
        command, flat, verbose = resolve(argv)
        logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                            format="%(asctime)s %(levelname)s %(message)s")
        cfg = ExperimentConfig.from_flat(command, flat)
        run = HANDLERS[command](cfg)
        path = run.finish()
        print(f"{command}: wrote {len(run.files)} files, manifest {path}")
        return EXIT_OK
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except StageError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigurationError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
