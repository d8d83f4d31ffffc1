import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparse_minimax.core import (FactorPair, ModelClassParams, RiskEstimate, ShapeError,
                                 as_matrix, check_membership, load_csv, nnz, per_element_sq_error,
                                 product, random_factor_pair, save_csv)


def naive_product(d, a):
    n1, r = d.shape
    n2 = a.shape[1]
    out = np.zeros((n1, n2))
    for i in range(n1):
        for j in range(n2):
            for t in range(r):
                out[i, j] += d[i, t] * a[t, j]
    return out


def test_product_identity_and_zero():
    fp = FactorPair(np.eye(2), np.array([[1.0, 0.0], [0.0, 2.0]]))
    np.testing.assert_array_equal(product(fp), [[1, 0], [0, 2]])
    fp = FactorPair(np.zeros((3, 2)), np.arange(8.0).reshape(2, 4))
    np.testing.assert_array_equal(product(fp), np.zeros((3, 4)))


def test_product_matches_triple_loop(rng):
    d = rng.integers(-5, 6, size=(3, 2)).astype(float)
    a = rng.integers(-5, 6, size=(2, 4)).astype(float)
    np.testing.assert_array_equal(product(FactorPair(d, a)), naive_product(d, a))


def test_factor_pair_rejects_inner_mismatch():
    with pytest.raises(ShapeError):
        FactorPair(np.zeros((3, 2)), np.zeros((3, 4)))


def test_factor_pair_is_read_only():
    fp = FactorPair(np.zeros((2, 1)), np.ones((1, 2)))
    with pytest.raises(ValueError):
        fp.d[0, 0] = 1.0


@pytest.mark.parametrize("bad", [[1.0, 2.0], [[np.nan]], [[np.inf, 1.0]], np.zeros((0, 3))])
def test_as_matrix_rejects(bad):
    with pytest.raises(ValueError):
        as_matrix(bad)


@pytest.mark.parametrize("kw", [
    dict(n1=4, n2=4, r=5, k=1, a_max=1.0),
    dict(n1=4, n2=4, r=2, k=9, a_max=1.0),
    dict(n1=4, n2=4, r=2, k=0, a_max=1.0),
    dict(n1=4, n2=4, r=2, k=2, a_max=0.0),
    dict(n1=4, n2=4, r=2, k=2, a_max=1.0, x_min=2.0),
    dict(n1=4, n2=4, r=2, k=2, a_max=1.0, x_min=0.0),
])
def test_params_validation(kw):
    with pytest.raises(ValueError):
        ModelClassParams(**kw)


def test_params_x_max():
    assert ModelClassParams(8, 6, 3, 4, 0.5).x_max == 1.5


def test_membership_violations():
    p = ModelClassParams(n1=3, n2=3, r=2, k=2, a_max=1.0)
    d = np.zeros((3, 2))
    d[0, 0] = 1.5
    a = np.zeros((2, 3))
    a[0, 0] = 1.0
    v = check_membership(FactorPair(d, a), p)
    assert not v.ok
    assert [x.constraint for x in v.violations] == ["‖D‖∞ ≤ 1"]

    a = np.zeros((2, 3))
    a.flat[:3] = 0.5
    v = check_membership(FactorPair(np.zeros((3, 2)), a), p)
    assert [x.constraint for x in v.violations] == ["‖A‖₀ ≤ k"]

    a = np.zeros((2, 3))
    a[1, 2] = 0.9
    assert check_membership(FactorPair(np.full((3, 2), -1.0), a), p)


def test_membership_poisson_floor():
    p = ModelClassParams(n1=2, n2=2, r=1, k=2, a_max=1.0, x_min=0.5)
    ok = FactorPair(np.ones((2, 1)), np.array([[0.5, 0.7]]))
    bad = FactorPair(np.ones((2, 1)), np.array([[0.4, 0.7]]))
    assert check_membership(ok, p)
    assert [v.constraint for v in check_membership(bad, p).violations] == ["min X ≥ X_min"]


def test_membership_shape_mismatch():
    p = ModelClassParams(n1=3, n2=3, r=1, k=2, a_max=1.0)
    with pytest.raises(ShapeError):
        check_membership(FactorPair(np.zeros((2, 1)), np.zeros((1, 3))), p)


def test_per_element_sq_error():
    x = np.arange(6.0).reshape(2, 3)
    assert per_element_sq_error(x, x) == 0.0
    assert per_element_sq_error([[3.0]], [[1.0]]) == 4.0
    assert per_element_sq_error(np.ones((2, 2)), np.zeros((2, 2))) == 1.0
    with pytest.raises(ShapeError):
        per_element_sq_error(np.ones((2, 2)), np.ones((2, 3)))


def test_nnz_counts_exact_zeros():
    assert nnz(np.array([[0.0, 1e-300], [-0.0, 2.0]])) == 2


@settings(max_examples=60, deadline=None)
@given(n1=st.integers(1, 8), n2=st.integers(1, 8), data=st.data())
def test_random_factor_pair_in_class(n1, n2, data):
    r = data.draw(st.integers(1, min(n1, n2)))
    k = data.draw(st.integers(1, r * n2))
    seed = data.draw(st.integers(0, 2 ** 32 - 1))
    p = ModelClassParams(n1, n2, r, k, a_max=2.0)
    fp = random_factor_pair(p, np.random.default_rng(seed))
    assert check_membership(fp, p)
    assert nnz(fp.a) == k


@settings(max_examples=40, deadline=None)
@given(n1=st.integers(1, 8), n2=st.integers(1, 8), data=st.data())
def test_random_poisson_pair_in_class(n1, n2, data):
    r = data.draw(st.integers(1, min(n1, n2)))
    k = data.draw(st.integers(n2, r * n2))
    p = ModelClassParams(n1, n2, r, k, a_max=1.0, x_min=0.2)
    fp = random_factor_pair(p, np.random.default_rng(data.draw(st.integers(0, 999))))
    assert check_membership(fp, p)
    assert product(fp).min() >= 0.2


def test_csv_round_trip(tmp_path, rng):
    x = rng.standard_normal((4, 3))
    save_csv(tmp_path / "x.csv", x)
    np.testing.assert_array_equal(load_csv(tmp_path / "x.csv"), x)
    save_csv(tmp_path / "row.csv", x[:1])
    assert load_csv(tmp_path / "row.csv").shape == (1, 3)


def test_risk_estimate_validation():
    with pytest.raises(ValueError):
        RiskEstimate(mean=-1.0, std_error=0.0, trials=1)
    with pytest.raises(ValueError):
        RiskEstimate(mean=1.0, std_error=0.0, trials=0)
