import math

import numpy as np
import pytest

from sparse_minimax.channels import GaussianChannel, OneBitChannel, PoissonChannel, logistic
from sparse_minimax.core import ModelClassParams
from sparse_minimax.sim import (ObservationSet, SampleMask, TooManyFailures, draw_mask,
                                monte_carlo_risk, observe, trial_rng)

P = ModelClassParams(n1=6, n2=5, r=2, k=4, a_max=1.0)


def test_full_mask_is_deterministic():
    for seed in range(5):
        mask = draw_mask(4, 6, 24, np.random.default_rng(seed))
        assert mask.size == 24
        assert mask.as_bool().all()


def test_mask_size_clt():
    rng = np.random.default_rng(11)
    reps = 10 ** 4
    sizes = np.array([draw_mask(10, 10, 50, rng).size for _ in range(reps)])
    tol = 4 * math.sqrt(100 * 0.25 / reps)
    assert abs(sizes.mean() - 50) <= tol


def test_mask_same_seed_identical():
    a = draw_mask(7, 9, 20, np.random.default_rng(3))
    b = draw_mask(7, 9, 20, np.random.default_rng(3))
    assert a.included == b.included
    assert a.gamma == pytest.approx(20 / 63)


@pytest.mark.parametrize("m", [0, 31, 2.5])
def test_mask_rejects_bad_m(m):
    with pytest.raises(ValueError):
        draw_mask(5, 6, m, np.random.default_rng())


def test_mask_round_trip():
    included = np.random.default_rng(0).random((4, 5)) < 0.5
    mask = SampleMask.from_bool(included)
    np.testing.assert_array_equal(mask.as_bool(), included)
    # row-major order
    assert list(zip(mask.rows, mask.cols)) == sorted(zip(mask.rows, mask.cols))


def test_observe_noiseless_envelope(rng):
    x = rng.uniform(-2, 2, size=(6, 5))
    mask = draw_mask(6, 5, 30, rng)
    obs = observe(x, mask, GaussianChannel(1e-6), rng)
    assert np.max(np.abs(obs.values - x[mask.rows, mask.cols])) <= 1e-4


def test_observe_onebit_codomain(rng):
    x = rng.uniform(-1, 1, size=(6, 5))
    obs = observe(x, draw_mask(6, 5, 20, rng), OneBitChannel(logistic(), 1.0), rng)
    assert set(np.unique(obs.values)) <= {0.0, 1.0}


def test_observe_empty_mask(rng):
    mask = SampleMask.from_bool(np.zeros((3, 3), dtype=bool))
    obs = observe(np.zeros((3, 3)), mask, GaussianChannel(1.0), rng)
    assert obs.values.size == 0


def test_observe_shape_mismatch(rng):
    with pytest.raises(ValueError):
        observe(np.zeros((3, 3)), draw_mask(3, 4, 6, rng), GaussianChannel(1.0), rng)


def test_observations_csv_round_trip(tmp_path, rng):
    mask = draw_mask(5, 4, 10, rng)
    obs = observe(rng.uniform(0.5, 2, size=(5, 4)), mask, PoissonChannel(0.5), rng)
    obs.to_csv(tmp_path / "obs.csv")
    back = ObservationSet.from_csv(tmp_path / "obs.csv", 5, 4, 10, "poisson")
    assert back.mask.included == mask.included
    np.testing.assert_array_equal(back.values, obs.values)
    assert (tmp_path / "obs.csv").read_text().splitlines()[0] == "i,j,y"


def _fixed(rng):
    return np.arange(30.0).reshape(6, 5) / 30.0


def test_risk_identity_oracle_is_zero():
    box = {}

    def gen(rng):
        box["x"] = rng.uniform(-1, 1, size=(6, 5))
        return box["x"]

    res = monte_carlo_risk(gen, lambda obs, rng: box["x"], GaussianChannel(1.0), P, 15, 5, 0)
    assert res.mean == 0.0 and res.std_error == 0.0


def test_risk_zero_estimator_exact():
    x = _fixed(None)
    res = monte_carlo_risk(_fixed, lambda obs, rng: np.zeros((6, 5)), GaussianChannel(1.0),
                           P, 15, 7, 0)
    assert res.mean == pytest.approx(np.sum(x ** 2) / 30, rel=1e-15)
    assert res.std_error == pytest.approx(0.0, abs=1e-15)


def test_risk_independent_of_threads():
    def est(obs, rng):
        out = np.zeros((6, 5))
        out[obs.mask.rows, obs.mask.cols] = obs.values + rng.normal(size=obs.values.size)
        return out

    a = monte_carlo_risk(_fixed, est, GaussianChannel(0.5), P, 12, 20, 42, threads=1)
    b = monte_carlo_risk(_fixed, est, GaussianChannel(0.5), P, 12, 20, 42, threads=4)
    assert a.samples == b.samples
    c = monte_carlo_risk(_fixed, est, GaussianChannel(0.5), P, 12, 20, 43)
    assert c.samples != a.samples


def test_risk_failures():
    calls = {"n": 0}

    def flaky(obs, rng):
        calls["n"] += 1
        if rng.random() < 0.5:
            raise FloatingPointError("diverged")
        return np.zeros((6, 5))

    with pytest.raises(TooManyFailures):
        monte_carlo_risk(_fixed, flaky, GaussianChannel(1.0), P, 15, 40, 0)

    def one_bad(obs, rng):
        if obs.mask.size == 0 or calls.setdefault("first", True):
            calls["first"] = False
            raise FloatingPointError("diverged")
        return np.zeros((6, 5))

    res = monte_carlo_risk(_fixed, one_bad, GaussianChannel(1.0), P, 15, 20, 0)
    assert res.failures == 1 and res.trials == 20


def test_trial_rng_streams_differ():
    a = trial_rng(1, 0).random(4)
    b = trial_rng(1, 1).random(4)
    assert not np.array_equal(a, b)
    np.testing.assert_array_equal(a, trial_rng(1, 0).random(4))
    with pytest.raises(ValueError):
        trial_rng(-1, 0)
