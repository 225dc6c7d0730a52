import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import linprog

from inertial_ot.ot import (
    EmpiricalDistribution,
    SinkhornConfig,
    feature_cost,
    joint_cost,
    sinkhorn,
    sinkhorn_annealed,
    sinkhorn_divergence,
    wasserstein_1d,
)


def lp_oracle(C, a, b):
    """Exact OT value by linear programming."""
    n, m = C.shape
    A = np.zeros((n + m, n * m))
    for i in range(n):
        A[i, i * m:(i + 1) * m] = 1
    for j in range(m):
        A[n + j, j::m] = 1
    res = linprog(C.ravel(), A_eq=A, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    return res.fun


def sorted_matching(a, b, p=1):
    return np.mean(np.abs(np.sort(a) - np.sort(b)) ** p)


# ---------------------------------------------------------------- 1-D Wasserstein

def test_w1d_point_masses():
    assert wasserstein_1d([0.0], [3.0]) == 3.0


def test_w1d_identical_is_zero():
    x = np.random.default_rng(0).normal(size=50)
    assert wasserstein_1d(x, x) == 0.0


def test_w1d_two_points():
    assert wasserstein_1d([0.0, 1.0], [1.0, 2.0]) == pytest.approx(1.0, abs=0)


def test_w1d_unsorted_input():
    assert wasserstein_1d([1.0, 0.0], [2.0, 1.0]) == 1.0


def test_w1d_matches_sorted_matching_exactly():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        a, b = rng.normal(size=16), rng.normal(size=16) * 2 + 0.5
        assert wasserstein_1d(a, b) == sorted_matching(a, b)


def test_w1d_unequal_sizes_against_lp():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=5), rng.normal(size=7)
    C = np.abs(a[:, None] - b[None, :])
    assert wasserstein_1d(a, b) == pytest.approx(lp_oracle(C, np.full(5, .2), np.full(7, 1 / 7)), abs=1e-9)


def test_w1d_weighted_against_lp():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=6), rng.normal(size=4)
    wa, wb = rng.dirichlet(np.ones(6)), rng.dirichlet(np.ones(4))
    C = (a[:, None] - b[None, :]) ** 2
    got = wasserstein_1d(a, b, cost_exponent=2, a_weights=wa, b_weights=wb)
    assert got == pytest.approx(lp_oracle(C, wa, wb), abs=1e-9)


def test_w1d_rejects_empty():
    with pytest.raises(ValueError):
        wasserstein_1d([], [1.0])


@settings(max_examples=50, deadline=None)
@given(arrays(float, 12, elements=st.floats(-100, 100)),
       arrays(float, 9, elements=st.floats(-100, 100)),
       st.floats(0.01, 100))
def test_w1d_scale_equivariance(a, b, s):
    assert wasserstein_1d(s * a, s * b) == pytest.approx(s * wasserstein_1d(a, b), rel=1e-9, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(arrays(float, 10, elements=st.floats(-10, 10)), arrays(float, 10, elements=st.floats(-10, 10)))
def test_w1d_symmetric_and_nonnegative(a, b):
    v = wasserstein_1d(a, b)
    assert v >= 0
    assert v == pytest.approx(wasserstein_1d(b, a), abs=1e-12)


def test_w1d_agrees_with_sinkhorn_small_epsilon():
    rng = np.random.default_rng(4)
    for _ in range(5):
        a, b = rng.normal(size=16), rng.normal(size=16) + 1.0
        C = np.abs(a[:, None] - b[None, :])
        w = np.full(16, 1 / 16)
        # |a - b| costs have many optimal plans, so convergence is slow; the
        # value settles long before the marginals reach 1e-6
        cp = sinkhorn(C, w, w, SinkhornConfig(epsilon=1e-2, max_iters=20000))
        assert cp.marginal_error <= 1e-4
        assert cp.transport_cost == pytest.approx(wasserstein_1d(a, b), abs=1e-3)


# ---------------------------------------------------------------- Sinkhorn

def test_sinkhorn_one_by_one():
    cp = sinkhorn(np.array([[2.5]]), np.array([1.0]), np.array([1.0]))
    assert np.allclose(cp.gamma, [[1.0]])
    assert cp.transport_cost == pytest.approx(2.5)


def test_sinkhorn_two_by_two_limit():
    C = np.array([[0.0, 1.0], [1.0, 0.0]])
    w = np.array([0.5, 0.5])
    cp = sinkhorn(C, w, w, SinkhornConfig(epsilon=1e-3, max_iters=5000))
    assert np.allclose(cp.gamma, np.diag([0.5, 0.5]), atol=1e-4)
    assert abs(cp.transport_cost - lp_oracle(C, w, w)) <= 1e-4


def test_sinkhorn_two_by_two_against_lp_random():
    rng = np.random.default_rng(5)
    for _ in range(20):
        C = rng.uniform(0, 1, (2, 2))
        a, b = rng.dirichlet([1, 1]), rng.dirichlet([1, 1])
        cp = sinkhorn_annealed(C, a, b, SinkhornConfig(epsilon=1e-4, max_iters=20000))
        assert cp.converged
        assert abs(cp.transport_cost - lp_oracle(C, a, b)) <= 1e-4


@pytest.mark.parametrize("n", [8, 64])
def test_sinkhorn_marginals_random(n):
    rng = np.random.default_rng(n)
    w = np.full(n, 1 / n)
    for _ in range(100):
        C = rng.uniform(0, 1, (n, n))
        cp = sinkhorn(C, w, w, SinkhornConfig(max_iters=5000))
        assert cp.converged
        assert np.max(np.abs(cp.gamma.sum(1) - w)) <= 1e-6
        assert np.max(np.abs(cp.gamma.sum(0) - w)) <= 1e-6
        assert np.all(cp.gamma >= 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2 ** 31))
def test_sinkhorn_marginal_feasibility_property(n, m, seed):
    rng = np.random.default_rng(seed)
    C = rng.uniform(0, 5, (n, m))
    a, b = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(m))
    cp = sinkhorn(C, a, b, SinkhornConfig(max_iters=5000))
    if cp.converged:
        assert cp.marginal_error <= 1e-6
        assert max(np.max(np.abs(cp.gamma.sum(1) - a)), np.max(np.abs(cp.gamma.sum(0) - b))) <= 1e-6


def test_annealed_matches_direct_solve():
    rng = np.random.default_rng(12)
    C = rng.uniform(0, 1, (6, 5))
    a, b = rng.dirichlet(np.ones(6)), rng.dirichlet(np.ones(5))
    cfg = SinkhornConfig(epsilon=0.05, max_iters=5000, marginal_tol=1e-10)
    direct, annealed = sinkhorn(C, a, b, cfg), sinkhorn_annealed(C, a, b, cfg)
    assert annealed.epsilon == 0.05
    assert np.allclose(direct.gamma, annealed.gamma, atol=1e-8)


def test_nonconvergence_is_flagged_not_raised():
    rng = np.random.default_rng(6)
    C = rng.uniform(0, 1, (30, 30))
    w = np.full(30, 1 / 30)
    cp = sinkhorn(C, w, w, SinkhornConfig(epsilon=1e-4, max_iters=2))
    assert not cp.converged
    assert np.all(np.isfinite(cp.gamma))


def test_monotone_epsilon_bias_4x4():
    rng = np.random.default_rng(7)
    w = np.full(4, 0.25)
    for _ in range(10):
        C = rng.uniform(0, 1, (4, 4))
        # uniform marginals: the LP optimum is a permutation
        best = min(sum(C[i, p[i]] for i in range(4)) for p in itertools.permutations(range(4))) / 4
        assert best == pytest.approx(lp_oracle(C, w, w), abs=1e-9)
        values, g = [], None
        for e in (1.0, 0.5, 0.3, 0.1, 0.05, 0.03, 0.01, 0.003, 1e-3, 5e-4):
            cp = sinkhorn(C, w, w, SinkhornConfig(epsilon=e, max_iters=20000), init_g=g)
            values.append(cp.transport_cost)
            g = cp.g
        assert all(v2 <= v1 + 1e-4 for v1, v2 in zip(values, values[1:]))
        assert min(values) >= best - 1e-4
        assert values[-1] - best <= 1e-4


def test_epsilon_resolution():
    C = np.full((3, 3), 2.0)
    assert SinkhornConfig().resolve_epsilon(C) == pytest.approx(0.2)
    assert SinkhornConfig(epsilon=0.5).resolve_epsilon(C) == 0.5
    with pytest.raises(ValueError):
        SinkhornConfig(epsilon=0.0)
    with pytest.raises(ValueError):
        SinkhornConfig(marginal_tol=0.0)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        sinkhorn(np.ones((2, 2)), np.array([0.5, 0.6]), np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        sinkhorn(np.ones((2, 3)), np.array([0.5, 0.5]), np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        sinkhorn(np.array([[np.nan, 1], [1, 0]]), np.array([0.5, 0.5]), np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        EmpiricalDistribution(np.zeros((3, 2)), np.array([-0.5, 1.0, 0.5]))


def test_entropy_convention():
    cp = sinkhorn(np.zeros((2, 2)), np.array([0.5, 0.5]), np.array([1.0, 0.0]))
    # one column carries no mass, so 0 log 0 terms are dropped
    assert cp.entropy() == pytest.approx(np.log(2))


# ---------------------------------------------------------------- costs

def test_joint_cost_zero_diagonal():
    rng = np.random.default_rng(8)
    z, y = rng.normal(size=(5, 3)), rng.normal(size=(5, 2))
    C = joint_cost(z, y, rng.normal(size=(5, 3)), y, alpha=0.0)
    assert np.allclose(np.diag(C), 0.0)


def test_joint_cost_arithmetic():
    C = joint_cost([[0.0, 0.0]], [[0.0, 0.0]], [[2.0, 0.0]], [[1.0, 0.0]], alpha=0.5)
    assert C[0, 0] == pytest.approx(3.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 2 * np.pi), st.integers(0, 2 ** 31))
def test_joint_cost_rotation_invariant(theta, seed):
    rng = np.random.default_rng(seed)
    zs, zt = rng.normal(size=(4, 2)), rng.normal(size=(6, 2))
    ys, yt = rng.normal(size=(4, 2)), rng.normal(size=(6, 2))
    R = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    C1 = joint_cost(zs, ys, zt, yt, 0.7)
    C2 = joint_cost(zs @ R.T, ys, zt @ R.T, yt, 0.7)
    assert np.allclose(C1, C2, atol=1e-9)


def test_feature_cost_exponent_one():
    C = feature_cost([[0.0, 0.0]], [[3.0, 4.0]], alpha=2.0, exponent=1)
    assert C[0, 0] == pytest.approx(10.0)


# ---------------------------------------------------------------- divergence

@settings(max_examples=30, deadline=None)
@given(st.integers(2, 40), st.integers(1, 5), st.integers(0, 2 ** 31))
def test_self_divergence_is_zero(n, d, seed):
    rng = np.random.default_rng(seed)
    mu = EmpiricalDistribution(rng.normal(size=(n, d)), rng.dirichlet(np.ones(n)))
    v, _ = sinkhorn_divergence(mu, mu, cfg=SinkhornConfig(max_iters=5000))
    assert abs(v) <= 1e-6


def test_divergence_translated_clusters():
    rng = np.random.default_rng(9)
    pts = np.concatenate([rng.normal(0, 0.05, (20, 2)), rng.normal(0, 0.05, (20, 2)) + [5.0, 0.0]])
    delta = np.array([0.0, 0.8])
    mu = EmpiricalDistribution.uniform(pts)
    nu = EmpiricalDistribution.uniform(pts + delta)
    v, cp = sinkhorn_divergence(mu, nu, cfg=SinkhornConfig(relative_epsilon=0.005, max_iters=20000))
    assert cp.converged
    assert v == pytest.approx(delta @ delta, rel=0.05)


def test_divergence_symmetric():
    rng = np.random.default_rng(10)
    mu = EmpiricalDistribution.uniform(rng.normal(size=(15, 3)))
    nu = EmpiricalDistribution.uniform(rng.normal(size=(20, 3)) + 0.5)
    cfg = SinkhornConfig(epsilon=0.3, max_iters=5000, marginal_tol=1e-11)
    v1, _ = sinkhorn_divergence(mu, nu, cfg=cfg)
    v2, _ = sinkhorn_divergence(nu, mu, cfg=cfg)
    assert v1 == pytest.approx(v2, abs=1e-8)


def test_divergence_custom_self_cost_and_return_all():
    rng = np.random.default_rng(11)
    mu = EmpiricalDistribution.uniform(rng.normal(size=(10, 2)))
    nu = EmpiricalDistribution.uniform(rng.normal(size=(12, 2)))
    cost = lambda X, Y: feature_cost(X, Y, 0.5)  # noqa: E731
    v, cross, smu, snu = sinkhorn_divergence(mu, nu, cost, SinkhornConfig(max_iters=5000),
                                             self_cost_builder=cost, return_all=True)
    assert smu.epsilon == snu.epsilon == cross.epsilon
    assert v == pytest.approx(cross.transport_cost - 0.5 * (smu.transport_cost + snu.transport_cost))
