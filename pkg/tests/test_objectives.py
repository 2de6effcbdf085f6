"""Gradient/loss formulas for the four objectives, checked by hand and by FD."""

from __future__ import annotations

import numpy as np
import pytest

from asgd.datagen import Dataset
from asgd.errors import AllDegenerate, DimensionMismatch
from asgd.objectives import (CoshLogisticObjective, GeometricQuantileObjective,
                             LogisticObjective, QuadraticObjective,
                             empirical_batch_gradient, empirical_loss,
                             gradient_at)


def _fd_gradient(loss, h, step):
    g = np.empty_like(h)
    for i in range(h.size):
        e = np.zeros_like(h)
        e[i] = step
        g[i] = (loss(h + e) - loss(h - e)) / (2.0 * step)
    return g


# ---------------------------------------------------------------- quadratic

def test_quadratic_gradients_by_hand():
    obj = QuadraticObjective([1.0, -1.0], sigma=2.0)
    x = np.array([3.0, 0.0])
    h = np.array([0.5, 0.5])
    assert np.array_equal(obj.stochastic_gradient(x, h), h - x)
    assert np.array_equal(obj.population_gradient(h), h - np.array([1.0, -1.0]))
    assert np.array_equal(obj.hessian().matrix, np.eye(2))
    assert obj.loss(x, h) == pytest.approx(0.5 * (2.5 ** 2 + 0.5 ** 2))


def test_quadratic_batch_is_mean_of_per_sample():
    obj = QuadraticObjective([0.0, 0.0])
    rng = np.random.default_rng(1)
    X = rng.standard_normal((13, 2))
    h = rng.standard_normal(2)
    per_sample = np.mean([obj.stochastic_gradient(x, h) for x in X], axis=0)
    assert np.allclose(obj.batch_gradient(X, h), per_sample)
    assert obj.batch_loss(X, h) == pytest.approx(
        np.mean([obj.loss(x, h) for x in X]))


def test_quadratic_initial_iterate_keep_or_zero():
    obj = QuadraticObjective([0.0, 0.0])
    inside = np.array([3000.0, 4000.0])       # norm 5000 <= 1e4
    boundary = np.array([6000.0, 8000.0])     # norm 1e4, kept (<=)
    outside = np.array([9000.0, 12000.0])     # norm 1.5e4, zeroed
    assert np.array_equal(obj.initial_iterate(inside, 1e4), inside)
    assert np.array_equal(obj.initial_iterate(boundary, 1e4), boundary)
    assert np.array_equal(obj.initial_iterate(outside, 1e4), np.zeros(2))


# ------------------------------------------------------- geometric quantile

def test_gq_gradient_by_hand():
    obj = GeometricQuantileObjective(2, direction=[0.3, 0.0])
    x = np.array([3.0, 4.0])
    h = np.array([0.0, 0.0])
    # -(x - h)/||x - h|| - v
    expect = -np.array([0.6, 0.8]) - np.array([0.3, 0.0])
    assert np.allclose(obj.stochastic_gradient(x, h), expect)


def test_gq_degenerate_returns_none():
    obj = GeometricQuantileObjective(2)
    h = np.array([1.0, 2.0])
    assert obj.stochastic_gradient(h.copy(), h) is None
    assert obj.stochastic_gradient(h + 1e-13, h) is None
    assert obj.stochastic_gradient(h + 1e-10, h) is not None


def test_gq_gradient_norm_bound():
    """||grad|| <= 1 + ||v|| for every non-degenerate sample."""
    obj = GeometricQuantileObjective(3, direction=[0.2, -0.4, 0.1])
    bound = 1.0 + np.linalg.norm([0.2, -0.4, 0.1])
    rng = np.random.default_rng(2)
    for _ in range(200):
        g = obj.stochastic_gradient(rng.standard_normal(3), rng.standard_normal(3))
        assert np.linalg.norm(g) <= bound + 1e-12
    norms, skipped = obj.gradient_norms(rng.standard_normal((500, 3)), None,
                                        rng.standard_normal(3))
    assert skipped == 0 and np.all(norms <= bound + 1e-12)


def test_gq_direction_validation():
    with pytest.raises(ValueError):
        GeometricQuantileObjective(2, direction=[1.0, 0.0])
    with pytest.raises(ValueError):
        GeometricQuantileObjective(2, direction=[0.8, 0.8])
    with pytest.raises(DimensionMismatch):
        GeometricQuantileObjective(2, direction=[0.1, 0.1, 0.1])
    assert GeometricQuantileObjective(2).is_median
    assert not GeometricQuantileObjective(2, direction=[0.5, 0.0]).is_median


def test_gq_batch_skips_degenerate_rows():
    obj = GeometricQuantileObjective(2)
    h = np.array([1.0, 1.0])
    X = np.array([[1.0, 1.0], [3.0, 1.0], [1.0, 1.0], [1.0, 3.0]])
    grad, skipped = obj.population_gradient_mc(h, X)
    assert skipped == 2
    assert np.allclose(grad, 0.5 * (np.array([-1.0, 0.0]) + np.array([0.0, -1.0])))
    with pytest.raises(AllDegenerate):
        obj.population_gradient_mc(h, np.array([[1.0, 1.0], [1.0, 1.0]]))


def test_gq_hessian_mc_matches_dense_loop_and_is_psd():
    obj = GeometricQuantileObjective(3)
    rng = np.random.default_rng(3)
    X = rng.standard_normal((50, 3)) + 1.0
    h = np.array([0.5, 0.0, -0.5])
    got = obj.hessian_mc(h, X).matrix
    acc = np.zeros((3, 3))
    for x in X:
        diff = x - h
        d = np.linalg.norm(diff)
        u = diff / d
        acc += (np.eye(3) - np.outer(u, u)) / d
    assert np.allclose(got, acc / 50.0, atol=1e-14)
    w = np.linalg.eigvalsh(got)
    assert w.min() >= -1e-14


# ------------------------------------------------------------- regressions

def test_cosh_gradient_by_hand():
    obj = CoshLogisticObjective(2)
    x = np.array([2.0, -1.0])
    h = np.array([0.5, 0.5])
    y = 1.0
    t = y - x @ h  # 0.5
    expect = -np.tanh(t) * x
    assert np.allclose(obj.stochastic_gradient(x, y, h), expect)


def test_logistic_gradient_by_hand():
    obj = LogisticObjective(2)
    x = np.array([1.0, 2.0])
    h = np.array([0.3, -0.2])
    y = -1.0
    s = 1.0 / (1.0 + np.exp(y * (x @ h)))
    assert np.allclose(obj.stochastic_gradient(x, y, h), -s * y * x)


def test_label_validation():
    obj = CoshLogisticObjective(2)
    x = np.array([1.0, 0.0])
    h = np.zeros(2)
    for bad in (0.0, 2.0, 0.5):
        with pytest.raises(ValueError):
            obj.stochastic_gradient(x, bad, h)
    with pytest.raises(ValueError):
        obj.batch_gradient(np.ones((3, 2)), h, np.array([1.0, -1.0, 0.0]))


def test_saturation_no_overflow():
    """Margins in the thousands must not overflow the loss or Hessian."""
    obj = CoshLogisticObjective(1)
    X = np.array([[1.0]])
    y = np.array([1.0])
    h = np.array([2000.0])
    assert np.isfinite(obj.batch_loss(X, h, y))
    assert np.isfinite(obj.batch_gradient(X, h, y)).all()
    assert np.isfinite(obj.hessian_mc(h, X, y).matrix).all()
    # log cosh t ~ |t| - log 2 for large |t|
    assert obj.batch_loss(X, h, y) == pytest.approx(1999.0 - np.log(2.0))
    lo = LogisticObjective(1)
    assert np.isfinite(lo.batch_loss(X, h, y))
    assert np.isfinite(lo.batch_gradient(X, -h, y)).all()


def test_logistic_loss_is_logaddexp():
    obj = LogisticObjective(2)
    X = np.array([[1.0, 2.0], [0.0, -1.0]])
    y = np.array([1.0, -1.0])
    h = np.array([0.3, 0.4])
    expect = np.mean(np.logaddexp(0.0, -y * (X @ h)))
    assert obj.batch_loss(X, h, y) == pytest.approx(expect, rel=1e-15)


def test_labeled_initial_iterate_modes():
    first = (np.array([2.0, 3.0]), 1.0)
    zero = CoshLogisticObjective(2)
    assert np.array_equal(zero.initial_iterate(first, 1e4), np.zeros(2))
    warm = LogisticObjective(2, init_mode="clipped_sample")
    assert np.array_equal(warm.initial_iterate(first, 1e4), np.array([2.0, 3.0]))
    assert np.array_equal(warm.initial_iterate((np.array([2e4, 0.0]), -1.0), 1e4),
                          np.zeros(2))
    with pytest.raises(ValueError):
        CoshLogisticObjective(2, init_mode="sample")


# ------------------------------------------------- finite-difference checks

@pytest.mark.parametrize("case", ["quadratic", "gq", "cosh", "logistic"])
def test_batch_gradient_matches_finite_differences(case):
    rng = np.random.default_rng(5)
    X = rng.standard_normal((40, 3)) * 1.5
    y = np.where(rng.standard_normal(40) >= 0, 1.0, -1.0)
    h = rng.standard_normal(3)
    if case == "quadratic":
        obj, ds = QuadraticObjective(np.zeros(3)), X
    elif case == "gq":
        obj, ds = GeometricQuantileObjective(3, direction=[0.1, 0.2, -0.3]), X
    elif case == "cosh":
        obj, ds = CoshLogisticObjective(3), (X, y)
    else:
        obj, ds = LogisticObjective(3), (X, y)
    step = 1e-6 * (1.0 + np.linalg.norm(h))
    fd = _fd_gradient(lambda hh: empirical_loss(obj, hh, ds), h, step)
    g = empirical_batch_gradient(obj, h, ds)
    assert np.linalg.norm(fd - g) <= 1e-5 * max(1.0, np.linalg.norm(g))


# ------------------------------------------------------- dataset dispatch

def test_gradient_at_dispatch():
    q = QuadraticObjective(np.zeros(2))
    assert np.array_equal(gradient_at(q, np.array([1.0, 0.0]), np.zeros(2)),
                          np.array([-1.0, 0.0]))
    c = CoshLogisticObjective(2)
    g = gradient_at(c, (np.array([1.0, 0.0]), 1.0), np.zeros(2))
    assert np.allclose(g, -np.tanh(1.0) * np.array([1.0, 0.0]))


def test_empirical_helpers_accept_dataset_tuple_and_array():
    X = np.array([[1.0, 2.0], [3.0, 4.0]])
    y = np.array([1.0, -1.0])
    q = QuadraticObjective(np.zeros(2))
    h = np.array([0.5, 0.5])
    from_arr = empirical_batch_gradient(q, h, X)
    from_ds = empirical_batch_gradient(q, h, Dataset(x=X, y=None, header=""))
    assert np.array_equal(from_arr, from_ds)
    c = CoshLogisticObjective(2)
    from_tuple = empirical_batch_gradient(c, h, (X, y))
    from_lds = empirical_batch_gradient(c, h, Dataset(x=X, y=y, header=""))
    assert np.array_equal(from_tuple, from_lds)
    with pytest.raises(ValueError):
        empirical_batch_gradient(c, h, X)  # labels missing
    with pytest.raises(ValueError):
        empirical_loss(q, h, X[:0])  # empty dataset
