"""
Training engines: supervised (single or multi-domain) training and DeepJDOT
style adaptation, where each step alternates between solving OT plans with
the network fixed and a gradient step with the plans fixed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .evaluate import ErrorMatrix, evaluate_model
from .ot import SinkhornConfig, is_symmetric_problem, pairwise_sqdist, sinkhorn, sinkhorn_symmetric
from .sim import Dataset
from .tracker import (
    TrackerConfig,
    TrackerParams,
    WindowBatch,
    backward,
    check_finite,
    fit_normalization,
    forward,
    init_params,
    loss_mse,
    predict,
    window_batch,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_opt: float = 1e-8
    epochs: int = 30
    batch_sequences: int = 16
    ot_subsample: int = 128
    alpha: float = 0.001
    epsilon: float | None = None
    relative_epsilon: float = 0.1
    sinkhorn_iters: int = 500
    sinkhorn_tol: float = 1e-6
    align_weight: float = 1.0
    grad_clip: float = 5.0
    pool_targets: bool = True
    max_retries: int = 3
    seed: int = 0
    tracker: TrackerConfig = field(default_factory=TrackerConfig)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.ot_subsample > self.batch_sequences * self.tracker.n_windows:
            raise ValueError("ot_subsample exceeds windows per batch")

    def sinkhorn_config(self) -> SinkhornConfig:
        return SinkhornConfig(self.epsilon, self.relative_epsilon, self.sinkhorn_iters,
                              self.sinkhorn_tol, 2)


class Adam:
    def __init__(self, params: TrackerParams, cfg: TrainConfig):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.weights.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.weights.items()}
        self.t = 0

    def step(self, params: TrackerParams, grads: dict):
        c = self.cfg
        if c.grad_clip:
            norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            if norm > c.grad_clip:
                grads = {k: g * (c.grad_clip / norm) for k, g in grads.items()}
        self.t += 1
        b1c = 1.0 - c.beta1 ** self.t
        b2c = 1.0 - c.beta2 ** self.t
        for k, w in params.weights.items():
            g = grads[k]
            self.m[k] = c.beta1 * self.m[k] + (1.0 - c.beta1) * g
            self.v[k] = c.beta2 * self.v[k] + (1.0 - c.beta2) * g * g
            w -= c.learning_rate * (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + c.eps_opt)


@dataclass
class History:
    rows: list = field(default_factory=list)

    def add(self, epoch, loss_regression, loss_alignment=0.0):
        self.rows.append((int(epoch), float(loss_regression), float(loss_alignment)))

    @property
    def regression(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows])

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("epoch,loss_regression,loss_alignment\n")
            for e, lr, la in self.rows:
                fh.write(f"{e},{lr!r},{la!r}\n")


def gather(dataset: Dataset, domains, split="train", head=None, tracker=None) -> WindowBatch:
    tracker = TrackerConfig() if tracker is None else tracker
    head = tracker.head if head is None else head
    return WindowBatch.concat([window_batch(dataset, d, split, head, tracker.window, tracker.n_windows)
                               for d in domains])


def _new_model(data: WindowBatch, cfg: TrainConfig) -> TrackerParams:
    params = init_params(cfg.tracker, cfg.seed)
    fit_normalization(params, data.inputs)
    return params


def _full_loss(params, data: WindowBatch) -> float:
    _, est = predict(params, data.inputs)
    return loss_mse(data.labels, est)


def train_supervised(data: WindowBatch, cfg: TrainConfig | None = None):
    """Minimise window MSE with Adam. Passing several domains' windows gives
    the multi-domain augmentation baseline.

    Returns ``(params, history)``; history epoch 0 is the loss at
    initialisation, later epochs the mean minibatch loss.
    """
    cfg = TrainConfig() if cfg is None else cfg
    if len(data) == 0:
        raise ValueError("empty training set")
    params = _new_model(data, cfg)
    opt = Adam(params, cfg)
    rng = np.random.default_rng([cfg.seed, 1])
    hist = History()
    hist.add(0, _full_loss(params, data))
    n = len(data)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total, count = 0.0, 0
        for i in range(0, n, cfg.batch_sequences):
            idx = order[i:i + cfg.batch_sequences]
            _, est, cache = forward(params, data.inputs[idx])
            loss = loss_mse(data.labels[idx], est)
            d_est = 2.0 * (est - data.labels[idx]) / (est.shape[0] * est.shape[1])
            grads = backward(params, cache, d_estimates=d_est)
            try:
                check_finite(loss, grads)
            except Exception as exc:
                exc.history = hist
                raise
            opt.step(params, grads)
            total += loss * len(idx)
            count += len(idx)
        hist.add(epoch, total / count)
    return params, hist


# --------------------------------------------------------------------------
# DeepJDOT pieces

@dataclass
class Couplings:
    """Plans held fixed during one gradient step."""

    joint: np.ndarray       # source x target, joint feature/label cost
    cross: np.ndarray       # source x target, feature cost
    self_src: np.ndarray
    self_tgt: np.ndarray
    alignment: float
    converged: bool


def solve_couplings(z_src, y_src, z_tgt, yhat_tgt, cfg: TrainConfig) -> Couplings:
    """Sinkhorn plans for one batch of subsampled windows (uniform weights).

    The joint plan uses alpha*||z_s - z_t||^2 + ||y_s - yhat_t||^2. The
    alignment value is the debiased divergence of the latents under the
    feature cost alpha*||.||^2, with one epsilon shared by its three problems.
    """
    scfg = cfg.sinkhorn_config()
    ns, nt = len(z_src), len(z_tgt)
    a = np.full(ns, 1.0 / ns)
    b = np.full(nt, 1.0 / nt)
    D_st = cfg.alpha * pairwise_sqdist(z_src, z_tgt)
    joint = sinkhorn(D_st + pairwise_sqdist(y_src, yhat_tgt), a, b, scfg)
    eps = scfg.resolve_epsilon(D_st)
    fixed = SinkhornConfig(eps, scfg.relative_epsilon, scfg.max_iters, scfg.marginal_tol, 2)
    cross = sinkhorn_symmetric(D_st, a, fixed) if is_symmetric_problem(D_st, a, b) \
        else sinkhorn(D_st, a, b, fixed)
    ss = sinkhorn_symmetric(cfg.alpha * pairwise_sqdist(z_src, z_src), a, fixed)
    tt = sinkhorn_symmetric(cfg.alpha * pairwise_sqdist(z_tgt, z_tgt), b, fixed)
    value = cross.transport_cost - 0.5 * (ss.transport_cost + tt.transport_cost)
    ok = joint.converged and cross.converged and ss.converged and tt.converged
    return Couplings(joint.gamma, cross.gamma, ss.gamma, tt.gamma, value, ok)


def transported_loss(gamma, y_src, yhat_tgt) -> float:
    """sum_ij gamma_ij ||y_i^s - yhat_j^t||^2."""
    return float(np.sum(gamma * pairwise_sqdist(y_src, yhat_tgt)))


def _plan_grad_cross(gamma, X, Y):
    """d/dX, d/dY of sum_ij gamma_ij ||x_i - y_j||^2."""
    dX = 2.0 * (gamma.sum(1)[:, None] * X - gamma @ Y)
    dY = 2.0 * (gamma.sum(0)[:, None] * Y - gamma.T @ X)
    return dX, dY


def composite_loss_and_grad(params: TrackerParams, xs, ys, xt, couplings: Couplings,
                            src_idx, tgt_idx, cfg: TrainConfig, passes=None):
    """Source MSE + transported target MSE + eta * alignment, plans fixed.

    ``src_idx``/``tgt_idx`` are flat window indices (into B*S) of the
    subsampled windows the plans were solved on. ``passes`` may carry the
    ``forward`` results for ``xs`` and ``xt`` at the current weights.
    """
    if passes is None:
        passes = forward(params, xs), forward(params, xt)
    (zs, es, cs), (zt, et, ct) = passes
    Bs, S = es.shape[:2]
    Bt = et.shape[0]
    D = zs.shape[-1]
    n_src = Bs * S

    l_src = loss_mse(ys, es)
    d_es = 2.0 * (es - ys) / n_src
    d_et = np.zeros_like(et)
    d_zs = np.zeros_like(zs)
    d_zt = np.zeros_like(zt)

    ys_sub = ys.reshape(-1, 2)[src_idx]
    et_sub = et.reshape(-1, 2)[tgt_idx]
    zs_sub = zs.reshape(-1, D)[src_idx]
    zt_sub = zt.reshape(-1, D)[tgt_idx]

    g = couplings.joint
    l_transport = transported_loss(g, ys_sub, et_sub)
    _, d_et_sub = _plan_grad_cross(g, ys_sub, et_sub)
    d_et.reshape(-1, 2)[tgt_idx] += d_et_sub

    eta, alpha = cfg.align_weight, cfg.alpha
    l_align = 0.0
    if eta:
        l_align = alpha * (np.sum(couplings.cross * pairwise_sqdist(zs_sub, zt_sub))
                           - 0.5 * np.sum(couplings.self_src * pairwise_sqdist(zs_sub, zs_sub))
                           - 0.5 * np.sum(couplings.self_tgt * pairwise_sqdist(zt_sub, zt_sub)))
        dzs, dzt = _plan_grad_cross(couplings.cross, zs_sub, zt_sub)
        a1, a2 = _plan_grad_cross(couplings.self_src, zs_sub, zs_sub)
        b1, b2 = _plan_grad_cross(couplings.self_tgt, zt_sub, zt_sub)
        dzs = dzs - 0.5 * (a1 + a2)
        dzt = dzt - 0.5 * (b1 + b2)
        d_zs.reshape(-1, D)[src_idx] += eta * alpha * dzs
        d_zt.reshape(-1, D)[tgt_idx] += eta * alpha * dzt

    loss = l_src + l_transport + eta * l_align
    gs = backward(params, cs, d_zs, d_es)
    gt = backward(params, ct, d_zt, d_et)
    grads = {k: gs[k] + gt[k] for k in gs}
    check_finite(loss, grads, source=l_src, transport=l_transport, alignment=l_align)
    parts = {"source": l_src, "transport": l_transport, "alignment": float(l_align),
             "batch_targets": Bt}
    return loss, grads, parts


def train_deepjdot(source: WindowBatch, target: WindowBatch | None, cfg: TrainConfig | None = None):
    """Adapt to unlabelled target windows (their labels are never read).

    Each step: forward a source and a target minibatch, subsample
    ``ot_subsample`` windows per side, solve the plans, then take one Adam
    step on the composite loss with the plans fixed. Without target data this
    reduces to :func:`train_supervised`.
    """
    cfg = TrainConfig() if cfg is None else cfg
    if target is None or len(target) == 0:
        return train_supervised(source, cfg)
    params = _new_model(source, cfg)
    opt = Adam(params, cfg)
    rng = np.random.default_rng([cfg.seed, 2])
    hist = History()
    hist.add(0, _full_loss(params, source))
    S = cfg.tracker.n_windows
    B = cfg.batch_sequences
    tgt_groups = [np.arange(len(target))] if cfg.pool_targets else \
        [np.flatnonzero(target.domain_tags == d) for d in np.unique(target.domain_tags)]
    n = len(source)
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        tot_reg = tot_al = 0.0
        count = 0
        for i in range(0, n, B):
            sidx = order[i:i + B]
            group = tgt_groups[step % len(tgt_groups)]
            step += 1
            tidx = rng.choice(group, size=min(len(sidx), len(group)), replace=False)
            xs, ys, xt = source.inputs[sidx], source.labels[sidx], target.inputs[tidx]
            n_ot = min(cfg.ot_subsample, len(sidx) * S, len(tidx) * S)
            sub_s = np.sort(rng.choice(len(sidx) * S, n_ot, replace=False))
            sub_t = np.sort(rng.choice(len(tidx) * S, n_ot, replace=False))

            passes = forward(params, xs), forward(params, xt)
            (zs, _, _), (zt, et, _) = passes
            D = zs.shape[-1]
            args = (zs.reshape(-1, D)[sub_s], ys.reshape(-1, 2)[sub_s],
                    zt.reshape(-1, D)[sub_t], et.reshape(-1, 2)[sub_t])
            # retries give the solver more iterations before giving up on the batch
            for attempt in range(cfg.max_retries):
                rcfg = replace(cfg, sinkhorn_iters=cfg.sinkhorn_iters * 2 ** attempt)
                cp = solve_couplings(*args, rcfg)
                if cp.converged:
                    break
                log.warning("sinkhorn did not converge (epoch %d, attempt %d)", epoch, attempt + 1)
            else:
                log.warning("skipping batch after %d attempts", cfg.max_retries)
                continue

            loss, grads, parts = composite_loss_and_grad(params, xs, ys, xt, cp, sub_s, sub_t,
                                                         cfg, passes)
            opt.step(params, grads)
            tot_reg += (parts["source"] + parts["transport"]) * len(sidx)
            tot_al += parts["alignment"] * len(sidx)
            count += len(sidx)
        hist.add(epoch, tot_reg / max(count, 1), tot_al / max(count, 1))
    return params, hist


# --------------------------------------------------------------------------
# sweeps

def source_domains(m: int):
    if not 1 <= m <= 8:
        raise ValueError("source count must be in 1..8")
    return list(range(m))


def train_split(dataset: Dataset, m: int, method: str, cfg: TrainConfig):
    """Train the model for source count m; ``method`` is 'ot' or 'aug'."""
    n = dataset.config.n_domains
    src = gather(dataset, source_domains(m), "train", tracker=cfg.tracker)
    if method in ("aug", "augmentation"):
        return train_supervised(src, cfg)
    if method == "ot":
        tgt_domains = list(range(m, n))
        tgt = gather(dataset, tgt_domains, "train", tracker=cfg.tracker) if tgt_domains else None
        return train_deepjdot(src, tgt, cfg)
    raise ValueError(f"unknown method {method!r}")


def adaptation_sweep(dataset: Dataset, method: str, cfg: TrainConfig | None = None,
                     rows=range(1, 9), seeds=None, callback=None) -> ErrorMatrix:
    """p90 distance-error matrix: row m trains on domains 0..m-1, column j is
    tested on domain j's test split. Rows not requested stay NaN; entries are
    averaged over ``seeds``."""
    cfg = TrainConfig() if cfg is None else cfg
    seeds = [cfg.seed] if seeds is None else list(seeds)
    n = dataset.config.n_domains
    vals = np.full((n, n), np.nan)
    for m in rows:
        acc = np.zeros(n)
        for s in seeds:
            scfg = _with_seed(cfg, s)
            params, hist = train_split(dataset, m, method, scfg)
            if callback is not None:
                callback(m, s, params, hist)
            acc += [evaluate_model(params, dataset, j, "test").p90() for j in range(n)]
        vals[m - 1] = acc / len(seeds)
    return ErrorMatrix(vals, "adaptation_sweep")


def train_per_domain(dataset: Dataset, cfg: TrainConfig | None = None):
    """One supervised model per domain, all from the same initial weights."""
    cfg = TrainConfig() if cfg is None else cfg
    out = []
    for k in range(dataset.config.n_domains):
        params, _ = train_supervised(gather(dataset, [k], "train", tracker=cfg.tracker), cfg)
        out.append(params)
    return out


def _with_seed(cfg: TrainConfig, seed: int) -> TrainConfig:
    return replace(cfg, seed=int(seed))
