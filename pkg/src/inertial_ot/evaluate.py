"""
Error metrics, percentile summaries and the cross-domain analysis matrices
(fragility, raw acceleration shift, latent shift).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .ot import EmpiricalDistribution, SinkhornConfig, feature_cost, sinkhorn_divergence, wasserstein_1d
from .sim import Dataset, wrap_angle
from .tracker import CARTESIAN, TrackerParams, integrate_estimates, predict, window_batch


class UnsupportedMetricError(ValueError):
    pass


def _as_traj(traj):
    a = np.asarray(traj, dtype=float)
    if a.ndim != 2 or a.shape[1] < 2:
        raise ValueError(f"trajectory must be (T, >=2), got {a.shape}")
    return a


def distance_error(pred_traj, gt_traj) -> float:
    """Euclidean distance between final positions."""
    p, g = _as_traj(pred_traj), _as_traj(gt_traj)
    if len(p) != len(g):
        raise ValueError(f"trajectory lengths differ: {len(p)} vs {len(g)}")
    return float(np.hypot(*(p[-1, :2] - g[-1, :2])))


def ate_rmse(pred_traj, gt_traj) -> float:
    p, g = _as_traj(pred_traj), _as_traj(gt_traj)
    if len(p) != len(g):
        raise ValueError(f"trajectory lengths differ: {len(p)} vs {len(g)}")
    return float(np.sqrt(np.mean(np.sum((p[:, :2] - g[:, :2]) ** 2, axis=1))))


def heading_error(pred_traj, gt_traj) -> float:
    """|wrap(theta_pred - theta_gt)| at the final sample."""
    p, g = _as_traj(pred_traj), _as_traj(gt_traj)
    if len(p) != len(g):
        raise ValueError(f"trajectory lengths differ: {len(p)} vs {len(g)}")
    if p.shape[1] < 3 or not np.isfinite(p[-1, 2]):
        raise UnsupportedMetricError("trajectory carries no heading (Cartesian head)")
    return abs(float(wrap_angle(p[-1, 2] - g[-1, 2])))


def percentile(errors, p=90.0) -> float:
    """Nearest-rank percentile: the ceil(p/100 * N)-th smallest value."""
    e = np.sort(np.asarray(errors, dtype=float).ravel())
    if e.size == 0:
        raise ValueError("percentile of an empty list")
    if not 0.0 < p <= 100.0:
        raise ValueError("p must be in (0, 100]")
    rank = math.ceil(round(p * e.size / 100.0, 9))
    return float(e[max(rank, 1) - 1])


@dataclass
class SequenceErrors:
    sequence_ids: np.ndarray
    distance: np.ndarray
    heading: np.ndarray  # NaN when the method has no heading

    def p90(self) -> float:
        return percentile(self.distance, 90.0)


def evaluate_model(params: TrackerParams, dataset: Dataset, domain: int, split="test",
                   metric="final") -> SequenceErrors:
    batch = window_batch(dataset, domain, split, head=params.head,
                         window=params.config.window, n_windows=params.config.n_windows)
    _, est = predict(params, batch.inputs)
    dist, head = [], []
    fn = distance_error if metric == "final" else ate_rmse
    for e, b in zip(est, batch.boundaries):
        traj = integrate_estimates(e, params.head, b[0])
        dist.append(fn(traj, b))
        head.append(np.nan if params.head == CARTESIAN else heading_error(traj, b))
    return SequenceErrors(batch.sequence_ids, np.array(dist), np.array(head))


def _write_matrix(path, values, prefix):
    n = values.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"{prefix}{j}" for j in range(n)])
        for row in values:
            w.writerow([repr(float(v)) for v in row])


def _read_matrix(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)


@dataclass
class ErrorMatrix:
    """Rows: source count m (sweep) or training domain (fragility); columns: target domain."""

    values: np.ndarray
    kind: str = "adaptation_sweep"
    metric: str = "p90_distance_m"

    def to_csv(self, path):
        _write_matrix(path, self.values, "domain_")

    @classmethod
    def from_csv(cls, path, kind="adaptation_sweep", metric="p90_distance_m"):
        return cls(_read_matrix(path), kind, metric)

    def unseen_mean(self, m: int) -> float:
        """Mean over target columns >= m of sweep row m (1-based)."""
        return float(np.mean(self.values[m - 1, m:]))


@dataclass
class ShiftMatrix:
    values: np.ndarray
    kind: str = "raw_accel_w1"

    def to_csv(self, path):
        _write_matrix(path, self.values, "domain_")

    @classmethod
    def from_csv(cls, path, kind="raw_accel_w1"):
        return cls(_read_matrix(path), kind)

    def upper(self) -> np.ndarray:
        return self.values[np.triu_indices(len(self.values), 1)]


def fragility_matrix(per_domain_params, dataset: Dataset, split="test") -> ErrorMatrix:
    """Entry (i, j): p90 distance error of the model trained on domain i, tested on j."""
    n = dataset.config.n_domains
    if len(per_domain_params) != n or any(p is None for p in per_domain_params):
        raise ValueError(f"need {n} per-domain checkpoints")
    vals = np.empty((n, n))
    for i, params in enumerate(per_domain_params):
        for j in range(n):
            vals[i, j] = evaluate_model(params, dataset, j, split).p90()
    return ErrorMatrix(vals, "fragility")


def empirical_cdf(values, n_points=1000):
    """(value, quantile) pairs; ``n_points=None`` returns every sample."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if n_points is None:
        return v, np.arange(1, v.size + 1) / v.size
    q = np.arange(1, n_points + 1) / n_points
    idx = np.minimum(np.ceil(q * v.size).astype(int) - 1, v.size - 1)
    return v[idx], q


def accel_norms(dataset: Dataset, domain: int) -> np.ndarray:
    return np.linalg.norm(dataset.session(domain).imu.accel, axis=1)


def raw_shift_matrix(dataset: Dataset, cdf_points=1000):
    """W1 between per-domain distributions of the 3-D acceleration norm.

    Returns the shift matrix and a dict ``domain -> (values, quantiles)``.
    """
    n = dataset.config.n_domains
    norms = [np.sort(accel_norms(dataset, k)) for k in range(n)]
    vals = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            vals[i, j] = vals[j, i] = wasserstein_1d(norms[i], norms[j], cost_exponent=1)
    cdfs = {k: empirical_cdf(norms[k], cdf_points) for k in range(n)}
    return ShiftMatrix(vals, "raw_accel_w1"), cdfs


def domain_latents(params: TrackerParams, dataset: Dataset, domain: int, split="test") -> np.ndarray:
    batch = window_batch(dataset, domain, split, head=params.head,
                         window=params.config.window, n_windows=params.config.n_windows)
    lat, _ = predict(params, batch.inputs)
    return lat.reshape(-1, lat.shape[-1])


def latent_shift_matrix(per_domain_params, dataset: Dataset, n_ot=256, seed=0,
                        cfg: SinkhornConfig | None = None, split="test") -> ShiftMatrix:
    """Debiased Sinkhorn divergence between model i's latents on domain i and
    model j's latents on domain j (squared-Euclidean cost)."""
    cfg = SinkhornConfig(max_iters=2000) if cfg is None else cfg
    n = dataset.config.n_domains
    if len(per_domain_params) != n or any(p is None for p in per_domain_params):
        raise ValueError(f"need {n} per-domain checkpoints")
    rng = np.random.default_rng(seed)
    dists = []
    for k, params in enumerate(per_domain_params):
        z = domain_latents(params, dataset, k, split)
        idx = rng.choice(len(z), size=min(n_ot, len(z)), replace=False)
        dists.append(EmpiricalDistribution.uniform(z[np.sort(idx)]))
    cost = lambda X, Y: feature_cost(X, Y, 1.0, 2)  # noqa: E731
    vals = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            v, _ = sinkhorn_divergence(dists[i], dists[j], cost, cfg)
            vals[i, j] = vals[j, i] = v
    return ShiftMatrix(vals, "latent_divergence")


def write_errors_csv(path, errors: SequenceErrors):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sequence_id", "distance_error", "heading_error"])
        for sid, d, h in zip(errors.sequence_ids, errors.distance, errors.heading):
            w.writerow([int(sid), repr(float(d)), "" if not np.isfinite(h) else repr(float(h))])


def write_cdf_csv(path, values, quantiles):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["value", "quantile"])
        for v, q in zip(values, quantiles):
            w.writerow([repr(float(v)), repr(float(q))])
