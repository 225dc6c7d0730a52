import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inertial_ot.evaluate import (
    ErrorMatrix,
    SequenceErrors,
    ShiftMatrix,
    UnsupportedMetricError,
    ate_rmse,
    distance_error,
    domain_latents,
    empirical_cdf,
    evaluate_model,
    fragility_matrix,
    heading_error,
    latent_shift_matrix,
    percentile,
    raw_shift_matrix,
    write_cdf_csv,
    write_errors_csv,
)
from inertial_ot.ot import EmpiricalDistribution, SinkhornConfig, feature_cost, sinkhorn_divergence
from inertial_ot.sim import DatasetConfig, build_dataset, noiseless_config
from inertial_ot.tracker import POLAR, TrackerConfig, init_params

SMALL_TRACKER = TrackerConfig(hidden=8, latent=4, reg_hidden=4, conv_channels=(4, 4))


@pytest.fixture(scope="module")
def small_ds():
    return build_dataset(DatasetConfig(seqs_per_domain=5), seed=5)


# ---------------------------------------------------------------- distance and heading


def test_distance_error_examples():
    rng = np.random.default_rng(0)
    gt = np.column_stack([np.linspace(0, 10, 50), np.zeros(50), np.zeros(50)])
    assert distance_error(gt, gt) == 0.0
    off = gt.copy()
    off[-1, :2] += [3.0, 4.0]
    assert distance_error(off, gt) == pytest.approx(5.0)
    walk = np.column_stack([np.cumsum(rng.normal(size=(50, 2)), axis=0), np.zeros(50)])
    assert distance_error(walk, gt) == pytest.approx(np.sqrt((walk[-1, 0] - 10) ** 2 + walk[-1, 1] ** 2))


def test_distance_error_length_mismatch():
    with pytest.raises(ValueError):
        distance_error(np.zeros((3, 3)), np.zeros((4, 3)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_distance_error_translation_invariant(seed, dx, dy):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(20, 3)), rng.normal(size=(20, 3))
    shift = np.array([dx, dy, 0.0])
    assert distance_error(a + shift, b + shift) == pytest.approx(distance_error(a, b), abs=1e-9)


def test_ate_rmse():
    gt = np.zeros((4, 3))
    pred = np.zeros((4, 3))
    pred[:, 0] = [0.0, 1.0, 1.0, 2.0]
    assert ate_rmse(pred, gt) == pytest.approx(np.sqrt(6 / 4))


def test_heading_error_examples():
    same = np.array([[0.0, 0.0, 1.2]])
    assert heading_error(same, same) == 0.0
    pred = np.array([[0.0, 0.0, np.pi - 0.1]])
    gt = np.array([[0.0, 0.0, -np.pi + 0.1]])
    assert heading_error(pred, gt) == pytest.approx(0.2)


def test_heading_error_needs_heading():
    with pytest.raises(UnsupportedMetricError):
        heading_error(np.zeros((3, 2)), np.zeros((3, 3)))
    nan_heading = np.zeros((3, 3))
    nan_heading[:, 2] = np.nan
    with pytest.raises(UnsupportedMetricError):
        heading_error(nan_heading, np.zeros((3, 3)))


# ---------------------------------------------------------------- percentile


def test_percentile_examples():
    assert percentile(np.zeros(7), 90) == 0.0
    assert percentile([3.5], 90) == 3.5
    assert percentile(np.arange(1, 11), 90) == 9
    assert percentile(np.arange(1, 11), 100) == 10


def test_percentile_matches_sort_oracle():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(1, 60))
        p = float(rng.uniform(0.5, 100))
        e = rng.normal(size=n)
        rank = int(np.ceil(p / 100 * n))
        assert percentile(e, p) == sorted(e)[rank - 1]


def test_percentile_errors():
    with pytest.raises(ValueError):
        percentile([], 90)
    with pytest.raises(ValueError):
        percentile([1.0], 0)
    with pytest.raises(ValueError):
        percentile([1.0], 101)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40), st.floats(0.1, 100), st.floats(0.1, 100),
       st.randoms(use_true_random=False))
def test_percentile_monotone_and_permutation_invariant(values, p, q, rnd):
    lo, hi = sorted([p, q])
    assert percentile(values, lo) <= percentile(values, hi)
    shuffled = list(values)
    rnd.shuffle(shuffled)
    assert percentile(shuffled, hi) == percentile(values, hi)


# ---------------------------------------------------------------- matrices and CSV


def test_error_matrix_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    vals = rng.random((8, 8)) * 1e3
    vals[3, 5] = 1e-17
    ErrorMatrix(vals).to_csv(tmp_path / "m.csv")
    back = ErrorMatrix.from_csv(tmp_path / "m.csv")
    assert np.array_equal(back.values, vals)
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == ",".join(f"domain_{j}" for j in range(8))
    assert len(lines) == 9


def test_shift_matrix_roundtrip_with_nan(tmp_path):
    vals = np.arange(64.0).reshape(8, 8) / 7
    vals[1, 2] = np.nan
    ShiftMatrix(vals).to_csv(tmp_path / "s.csv")
    back = ShiftMatrix.from_csv(tmp_path / "s.csv")
    assert np.array_equal(back.values, vals, equal_nan=True)


def test_unseen_mean():
    vals = np.arange(64.0).reshape(8, 8)
    assert ErrorMatrix(vals).unseen_mean(4) == np.mean(vals[3, 4:])


def test_errors_and_cdf_csv(tmp_path):
    err = SequenceErrors(np.array([3, 9]), np.array([0.5, 1.25]), np.array([np.nan, 0.1]))
    write_errors_csv(tmp_path / "e.csv", err)
    assert (tmp_path / "e.csv").read_text() == (
        "sequence_id,distance_error,heading_error\n3,0.5,\n9,1.25,0.1\n")
    write_cdf_csv(tmp_path / "c.csv", [1.0, 2.0], [0.5, 1.0])
    assert (tmp_path / "c.csv").read_text() == "value,quantile\n1.0,0.5\n2.0,1.0\n"


def test_empirical_cdf():
    v, q = empirical_cdf([3.0, 1.0, 2.0, 4.0], n_points=None)
    assert np.array_equal(v, [1, 2, 3, 4]) and np.array_equal(q, [0.25, 0.5, 0.75, 1.0])
    v, q = empirical_cdf(np.arange(1, 11), n_points=5)
    assert np.array_equal(v, [2, 4, 6, 8, 10])
    assert np.all(np.diff(v) >= 0) and q[-1] == 1.0


# ---------------------------------------------------------------- shift and fragility


@pytest.fixture(scope="module")
def noiseless_shift():
    return raw_shift_matrix(build_dataset(noiseless_config(), seed=0))


def test_raw_shift_structure(noiseless_shift):
    m, cdfs = noiseless_shift
    assert np.all(np.diag(m.values) == 0)
    assert np.array_equal(m.values, m.values.T)
    assert np.all(np.diff(m.values[0, 1:]) >= 0)
    assert sorted(cdfs) == list(range(8))
    v, q = cdfs[0]
    assert len(v) == len(q) == 1000 and np.all(np.diff(v) >= 0)


def test_raw_shift_with_noise_is_symmetric(small_ds):
    m, _ = raw_shift_matrix(small_ds)
    assert np.all(np.diag(m.values) == 0) and np.array_equal(m.values, m.values.T)
    assert np.all(m.upper() > 0)


def test_evaluate_model_shapes(small_ds):
    params = init_params(TrackerConfig(**{**SMALL_TRACKER.__dict__, "head": POLAR}), 0)
    err = evaluate_model(params, small_ds, 2)
    assert np.array_equal(err.sequence_ids, small_ds.test_ids)
    assert np.all(err.distance >= 0) and np.all(np.isfinite(err.heading))
    cart = evaluate_model(init_params(SMALL_TRACKER, 0), small_ds, 2, split="train", metric="ate")
    assert len(cart.distance) == len(small_ds.train_ids) and np.all(np.isnan(cart.heading))


def test_fragility_and_latent_shift_shapes(small_ds):
    models = [init_params(SMALL_TRACKER, k) for k in range(8)]
    frag = fragility_matrix(models, small_ds)
    assert frag.values.shape == (8, 8) and frag.kind == "fragility"
    assert np.all(np.isfinite(frag.values)) and np.all(frag.values >= 0)
    lat = latent_shift_matrix(models, small_ds, n_ot=32)
    assert np.all(np.diag(lat.values) == 0)
    assert np.array_equal(lat.values, lat.values.T)
    assert np.all(lat.upper() > 0)


def test_missing_checkpoint_rejected(small_ds):
    models = [init_params(SMALL_TRACKER, 0)] * 7 + [None]
    with pytest.raises(ValueError):
        fragility_matrix(models, small_ds)
    with pytest.raises(ValueError):
        latent_shift_matrix(models[:7], small_ds)


def test_latent_self_divergence_near_zero(small_ds):
    # the same model on the same domain gives identical latent clouds
    z = domain_latents(init_params(SMALL_TRACKER, 3), small_ds, 0)[:128]
    mu = EmpiricalDistribution.uniform(z)
    v, _ = sinkhorn_divergence(mu, mu, lambda X, Y: feature_cost(X, Y, 1.0, 2), SinkhornConfig(max_iters=2000))
    assert abs(v) <= 1e-5
