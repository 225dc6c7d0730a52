"""
Entropic optimal transport: exact 1-D Wasserstein, log-domain Sinkhorn,
the joint feature/label ground cost and the debiased Sinkhorn divergence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SinkhornConfig:
    """Solver settings.

    ``epsilon=None`` means ``relative_epsilon * mean(C)`` so the
    regularisation strength does not depend on the cost scale.
    """

    epsilon: float | None = None
    relative_epsilon: float = 0.1
    max_iters: int = 500
    marginal_tol: float = 1e-6
    cost_exponent: int = 2

    def __post_init__(self):
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if not self.relative_epsilon > 0:
            raise ValueError("relative_epsilon must be > 0")
        if not self.marginal_tol > 0:
            raise ValueError("marginal_tol must be > 0")
        if self.cost_exponent not in (1, 2):
            raise ValueError("cost_exponent must be 1 or 2")

    def resolve_epsilon(self, C) -> float:
        if self.epsilon is not None:
            return float(self.epsilon)
        scale = float(np.mean(C))
        return self.relative_epsilon * scale if scale > 0 else self.relative_epsilon


@dataclass
class EmpiricalDistribution:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim == 1:
            self.points = self.points[:, None]
        self.weights = np.asarray(self.weights, dtype=float)
        _check_weights(self.weights, len(self.points))

    @classmethod
    def uniform(cls, points) -> "EmpiricalDistribution":
        points = np.asarray(points, dtype=float)
        n = len(points)
        if n == 0:
            raise ValueError("empty distribution")
        return cls(points, np.full(n, 1.0 / n))

    def __len__(self):
        return len(self.weights)


@dataclass
class Coupling:
    gamma: np.ndarray
    transport_cost: float
    converged: bool
    n_iter: int
    marginal_error: float
    epsilon: float
    f: np.ndarray
    g: np.ndarray

    def entropy(self) -> float:
        gm = self.gamma[self.gamma > 0]
        return float(-np.sum(gm * np.log(gm)))

    def regularized_cost(self) -> float:
        """<gamma, C> - epsilon * h(gamma)."""
        return self.transport_cost - self.epsilon * self.entropy()


def _check_weights(w, n):
    if w.shape != (n,):
        raise ValueError(f"weights shape {w.shape} does not match {n} points")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    if abs(w.sum() - 1.0) > 1e-9:
        raise ValueError(f"weights sum to {w.sum()!r}, expected 1")


def _ground_cost(d, p):
    return d if p == 1 else d ** p


def wasserstein_1d(a, b, cost_exponent=1, a_weights=None, b_weights=None) -> float:
    r"""Exact 1-D optimal transport cost between two empirical distributions.

    Computes :math:`\int_0^1 c(|F_a^{-1}(q) - F_b^{-1}(q)|)\,dq` with
    :math:`c(d) = d^p` by walking the merged quantile breakpoints of the two
    step CDFs. Inputs need not be pre-sorted.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("wasserstein_1d needs non-empty samples")
    if cost_exponent not in (1, 2):
        raise ValueError("cost_exponent must be 1 or 2")

    def cdf(x, w):
        order = np.argsort(x, kind="stable")
        if w is None:
            # k/n keeps uniform breakpoints free of cumsum rounding
            return x[order], np.arange(1, x.size + 1) / x.size
        w = np.asarray(w, dtype=float)
        _check_weights(w, x.size)
        cw = np.cumsum(w[order])
        cw[-1] = 1.0
        return x[order], cw

    xa, ca = cdf(a, a_weights)
    xb, cb = cdf(b, b_weights)
    q = np.union1d(ca, cb)
    dq = np.diff(np.concatenate([[0.0], q]))
    # quantile value on (q_prev, q]: first index with cum >= q
    ia = np.minimum(np.searchsorted(ca, q, side="left"), xa.size - 1)
    ib = np.minimum(np.searchsorted(cb, q, side="left"), xb.size - 1)
    return float(np.sum(_ground_cost(np.abs(xa[ia] - xb[ib]), cost_exponent) * dq))


def pairwise_sqdist(X, Y) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch {X.shape[1]} vs {Y.shape[1]}")
    D = (X * X).sum(1)[:, None] + (Y * Y).sum(1)[None, :] - 2.0 * X @ Y.T
    return np.maximum(D, 0.0)


def feature_cost(X, Y, alpha=1.0, exponent=2) -> np.ndarray:
    """alpha * ||x_i - y_j||^p for p in {1, 2}."""
    D = pairwise_sqdist(X, Y)
    return alpha * (D if exponent == 2 else np.sqrt(D))


def joint_cost(src_latents, src_labels, tgt_latents, tgt_predictions, alpha) -> np.ndarray:
    """C_ij = alpha * ||z_i^s - z_j^t||^2 + ||y_i^s - yhat_j^t||^2.

    Target predictions act as surrogate labels for the unlabelled domain.
    """
    src_latents = np.asarray(src_latents, dtype=float)
    tgt_latents = np.asarray(tgt_latents, dtype=float)
    src_labels = np.asarray(src_labels, dtype=float)
    tgt_predictions = np.asarray(tgt_predictions, dtype=float)
    if len(src_latents) != len(src_labels) or len(tgt_latents) != len(tgt_predictions):
        raise ValueError("latent and label counts differ")
    return alpha * pairwise_sqdist(src_latents, tgt_latents) + pairwise_sqdist(src_labels, tgt_predictions)


def _lse(A, axis):
    m = np.max(A, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(A - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


def _validate(C, mu_w, nu_w):
    C = np.asarray(C, dtype=float)
    mu_w = np.asarray(mu_w, dtype=float)
    nu_w = np.asarray(nu_w, dtype=float)
    if C.ndim != 2 or C.shape != (mu_w.size, nu_w.size):
        raise ValueError(f"cost shape {C.shape} vs weights {mu_w.size}, {nu_w.size}")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix has non-finite entries")
    _check_weights(mu_w, mu_w.size)
    _check_weights(nu_w, nu_w.size)
    return C, mu_w, nu_w


def _finish(C, f, g, eps, mu_w, nu_w, tol, it):
    gamma = np.exp((f[:, None] + g[None, :] - C) / eps)
    err = max(float(np.max(np.abs(gamma.sum(1) - mu_w))),
              float(np.max(np.abs(gamma.sum(0) - nu_w))))
    return Coupling(gamma, float(np.sum(gamma * C)), err <= tol, it, err, eps, f, g)


def sinkhorn(C, mu_w, nu_w, cfg: SinkhornConfig | None = None, init_g=None) -> Coupling:
    """Log-domain Sinkhorn for min <gamma, C> - eps * h(gamma) on Gamma(mu, nu).

    Alternates exact dual updates of the two potentials. After every column
    update the column marginals are exact, so convergence is judged on the row
    marginals. Non-convergence is reported through ``Coupling.converged``.
    ``init_g`` warm-starts the column potential, e.g. from a solve at a larger
    epsilon (see :func:`sinkhorn_annealed`).
    """
    cfg = SinkhornConfig() if cfg is None else cfg
    C, mu_w, nu_w = _validate(C, mu_w, nu_w)
    eps = cfg.resolve_epsilon(C)
    with np.errstate(divide="ignore"):
        log_mu, log_nu = np.log(mu_w), np.log(nu_w)
    Ce = C / eps
    f = np.zeros(mu_w.size)
    if init_g is None:
        g = eps * (log_nu - _lse(-Ce, 0))
    else:
        g = np.where(nu_w > 0, np.asarray(init_g, dtype=float), -np.inf)
    it = 0
    for it in range(1, cfg.max_iters + 1):
        r = _lse(g[None, :] / eps - Ce, 1)
        # row marginals of the current plan are exp(f/eps + r)
        if it > 1 and np.max(np.abs(np.exp(f / eps + r) - mu_w)) <= cfg.marginal_tol:
            it -= 1
            break
        f = eps * (log_mu - r)
        g = eps * (log_nu - _lse(f[:, None] / eps - Ce, 0))
    return _finish(C, f, g, eps, mu_w, nu_w, cfg.marginal_tol, it)


def sinkhorn_annealed(C, mu_w, nu_w, cfg: SinkhornConfig | None = None, start=1.0,
                      factor=0.5) -> Coupling:
    """Sinkhorn at a small epsilon, reached by halving epsilon from
    ``start * mean(C)`` and warm-starting each stage from the previous one."""
    cfg = SinkhornConfig() if cfg is None else cfg
    C = np.asarray(C, dtype=float)
    target = cfg.resolve_epsilon(C)
    eps = max(start * float(np.mean(C)), target)
    g = None
    while True:
        stage = SinkhornConfig(eps, cfg.relative_epsilon, cfg.max_iters, cfg.marginal_tol,
                               cfg.cost_exponent)
        cp = sinkhorn(C, mu_w, nu_w, stage, g)
        if eps <= target:
            return cp
        g = cp.g
        eps = max(eps * factor, target)


def sinkhorn_symmetric(C, w, cfg: SinkhornConfig | None = None) -> Coupling:
    """Self-transport plan for symmetric C and identical marginals.

    Uses the averaged fixed-point update f <- (f + T(f)) / 2, which keeps the
    plan symmetric and avoids the oscillation of plain alternation.
    """
    cfg = SinkhornConfig() if cfg is None else cfg
    C, w, _ = _validate(C, w, w)
    eps = cfg.resolve_epsilon(C)
    with np.errstate(divide="ignore"):
        log_w = np.log(w)
    Ce = C / eps
    f = np.zeros(w.size)
    it = 0
    for it in range(1, cfg.max_iters + 1):
        r = _lse(f[None, :] / eps - Ce, 1)
        if np.max(np.abs(np.exp(f / eps + r) - w)) <= cfg.marginal_tol:
            it -= 1
            break
        f = 0.5 * (f + eps * (log_w - r))
    return _finish(C, f, f, eps, w, w, cfg.marginal_tol, it)


def is_symmetric_problem(C, mu_w, nu_w) -> bool:
    C = np.asarray(C)
    return C.shape[0] == C.shape[1] and np.array_equal(mu_w, nu_w) and np.array_equal(C, C.T)


def _solve(C, mu_w, nu_w, cfg):
    if is_symmetric_problem(C, mu_w, nu_w):
        return sinkhorn_symmetric(C, mu_w, cfg)
    return sinkhorn(C, mu_w, nu_w, cfg)


def sinkhorn_divergence(mu: EmpiricalDistribution, nu: EmpiricalDistribution,
                        cost_builder=None, cfg: SinkhornConfig | None = None,
                        self_cost_builder=None, return_all=False):
    """Debiased value W(mu, nu) - (W(mu, mu) + W(nu, nu)) / 2.

    Each W is the transport cost <gamma, C> of a converged Sinkhorn plan. The
    three problems share one epsilon, resolved from the cross cost. A cross
    problem that is itself symmetric goes to the symmetric solver, so the
    value is exactly zero when ``nu`` equals ``mu``. ``self_cost_builder``
    (default: ``cost_builder``) builds the two self-transport costs.

    Returns ``(value, cross_coupling)``; with ``return_all`` also the two
    self couplings.
    """
    cfg = SinkhornConfig() if cfg is None else cfg
    if cost_builder is None:
        p = cfg.cost_exponent
        cost_builder = lambda X, Y: feature_cost(X, Y, 1.0, p)  # noqa: E731
    self_cost_builder = cost_builder if self_cost_builder is None else self_cost_builder

    C_xy = cost_builder(mu.points, nu.points)
    C_xx = self_cost_builder(mu.points, mu.points)
    C_yy = self_cost_builder(nu.points, nu.points)
    fixed = SinkhornConfig(cfg.resolve_epsilon(C_xy), cfg.relative_epsilon,
                           cfg.max_iters, cfg.marginal_tol, cfg.cost_exponent)
    cross = _solve(C_xy, mu.weights, nu.weights, fixed)
    self_mu = sinkhorn_symmetric(C_xx, mu.weights, fixed)
    self_nu = sinkhorn_symmetric(C_yy, nu.weights, fixed)
    value = cross.transport_cost - 0.5 * (self_mu.transport_cost + self_nu.transport_cost)
    if return_all:
        return value, cross, self_mu, self_nu
    return value, cross
