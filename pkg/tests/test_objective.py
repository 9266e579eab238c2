"""Statistics, the one-step gradient signal, and the delay line."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from sdecal.objective import (
    KIND_LAG,
    KIND_SQ,
    KIND_SUM,
    DelayBuffer,
    NotReadyError,
    ObjectiveSpec,
    TargetStatistic,
    gradient_contribution,
    lag_steps,
    objective_closed_form_autocov,
    objective_estimate,
    pack_stats,
    statistic_gradient,
    statistic_value,
)


def test_statistic_values_by_hand():
    x = np.array([[1.0, 2.0], [3.0, -1.0]])
    np.testing.assert_array_equal(
        statistic_value(TargetStatistic(KIND_SUM, 0.0), x), [3.0, 2.0])
    np.testing.assert_array_equal(
        statistic_value(TargetStatistic(KIND_SQ, 0.0), x), [5.0, 10.0])
    x_lag = np.array([[0.5, 1.0], [1.0, 1.0]])
    np.testing.assert_array_equal(
        statistic_value(TargetStatistic(KIND_LAG, 0.0, lag=0.1), x, x_lag),
        [2.5, 2.0])


def test_lagged_value_requires_the_older_state():
    with pytest.raises(NotReadyError):
        statistic_value(TargetStatistic(KIND_LAG, 0.0, lag=0.1), np.ones((2, 1)))


def test_statistic_gradients():
    x = np.array([[1.0, -2.0]])
    np.testing.assert_array_equal(
        statistic_gradient(TargetStatistic(KIND_SUM, 0.0), x), [[1.0, 1.0]])
    np.testing.assert_array_equal(
        statistic_gradient(TargetStatistic(KIND_SQ, 0.0), x), [[2.0, -4.0]])
    with pytest.raises(ValueError):
        statistic_gradient(TargetStatistic(KIND_LAG, 0.0, lag=0.1), x)


def test_statistic_validation():
    with pytest.raises(ValueError):
        TargetStatistic(kind=99, target=0.0)
    with pytest.raises(ValueError):
        TargetStatistic(KIND_LAG, 0.0)          # missing lag
    with pytest.raises(ValueError):
        TargetStatistic(KIND_SUM, 0.0, lag=0.5)  # lag on an unlagged kind
    with pytest.raises(ValueError):
        ObjectiveSpec(stats=())


def test_lag_steps_rounding():
    assert lag_steps(0.1, 0.01) == 10
    assert lag_steps(0.1, 0.1) == 1
    with pytest.raises(ValueError):
        lag_steps(0.105, 0.01)
    with pytest.raises(ValueError):
        lag_steps(-0.1, 0.01)


def _hand_gradient_sum(x, x_tan, x_rep, target):
    # G = 2 (mean sum(x_rep) - target) * mean_i sum_d x_tan[i, d, :]
    resid = x_rep.sum(axis=1).mean() - target
    pairing = x_tan.sum(axis=1).mean(axis=0)
    return 2.0 * resid * pairing


def _hand_gradient_sq(x, x_tan, x_rep, target):
    resid = (x_rep ** 2).sum(axis=1).mean() - target
    pairing = np.einsum("ndl,nd->l", x_tan, 2.0 * x) / x.shape[0]
    return 2.0 * resid * pairing


def test_gradient_contribution_matches_hand_formulas():
    rng = np.random.default_rng(5)
    n, d, l = 7, 2, 3
    x = rng.normal(size=(n, d))
    x_tan = rng.normal(size=(n, d, l))
    x_rep = rng.normal(size=(n, d))
    obj = ObjectiveSpec((
        TargetStatistic(KIND_SUM, 0.3),
        TargetStatistic(KIND_SQ, 1.1),
    ))
    grad, warming = gradient_contribution(obj, x, x_tan, x_rep)
    want = (_hand_gradient_sum(x, x_tan, x_rep, 0.3)
            + _hand_gradient_sq(x, x_tan, x_rep, 1.1))
    np.testing.assert_allclose(grad, want, rtol=1e-13)
    assert not warming


def test_lagged_gradient_matches_hand_formula():
    rng = np.random.default_rng(6)
    n, d, l = 5, 2, 2
    now = tuple(rng.normal(size=s) for s in ((n, d), (n, d, l), (n, d)))
    old = tuple(rng.normal(size=s) for s in ((n, d), (n, d, l), (n, d)))
    obj = ObjectiveSpec((TargetStatistic(KIND_LAG, 0.4, lag=0.1),))

    x, x_tan, x_rep = now
    x_old, x_tan_old, x_rep_old = old
    resid = np.sum(x_rep_old * x_rep, axis=1).mean() - 0.4
    pairing = (np.einsum("ndl,nd->l", x_tan_old, x)
               + np.einsum("ndl,nd->l", x_tan, x_old)) / n
    want = 2.0 * resid * pairing

    grad, warming = gradient_contribution(obj, x, x_tan, x_rep,
                                          lag_snapshots={0: old})
    np.testing.assert_allclose(grad, want, rtol=1e-13)
    assert not warming


def test_warming_lag_contributes_zero_and_flags():
    rng = np.random.default_rng(7)
    n, d, l = 4, 1, 1
    x = rng.normal(size=(n, d))
    x_tan = rng.normal(size=(n, d, l))
    x_rep = rng.normal(size=(n, d))
    obj = ObjectiveSpec((
        TargetStatistic(KIND_SUM, 0.0),
        TargetStatistic(KIND_LAG, 0.0, lag=0.1),
    ))
    grad, warming = gradient_contribution(obj, x, x_tan, x_rep,
                                          lag_snapshots={1: None})
    only_sum = gradient_contribution(
        ObjectiveSpec((TargetStatistic(KIND_SUM, 0.0),)), x, x_tan, x_rep)[0]
    np.testing.assert_allclose(grad, only_sum, rtol=1e-15)
    assert warming
    assert math.isnan(objective_estimate(obj, x_rep, {1: None}))


def test_gradient_vanishes_when_replica_means_hit_targets():
    rng = np.random.default_rng(8)
    n, d, l = 6, 2, 2
    x = rng.normal(size=(n, d))
    x_tan = rng.normal(size=(n, d, l))
    x_rep = rng.normal(size=(n, d))
    target = float(np.mean(np.sum(x_rep ** 2, axis=1)))
    obj = ObjectiveSpec((TargetStatistic(KIND_SQ, target),))
    grad, _ = gradient_contribution(obj, x, x_tan, x_rep)
    np.testing.assert_allclose(grad, np.zeros(l), atol=1e-12)
    assert objective_estimate(obj, x_rep) == pytest.approx(0.0, abs=1e-24)


def test_objective_estimate_by_hand():
    x_rep = np.array([[1.0], [3.0]])
    obj = ObjectiveSpec((
        TargetStatistic(KIND_SUM, 1.0),   # mean 2 -> resid 1
        TargetStatistic(KIND_SQ, 2.0),    # mean 5 -> resid 3
    ))
    assert objective_estimate(obj, x_rep) == pytest.approx(1.0 + 9.0)


def test_shape_validation():
    obj = ObjectiveSpec((TargetStatistic(KIND_SUM, 0.0),))
    with pytest.raises(ValueError):
        gradient_contribution(obj, np.zeros(3), np.zeros((3, 1, 1)), np.zeros((3, 1)))
    with pytest.raises(ValueError):
        gradient_contribution(obj, np.zeros((3, 1)), np.zeros((3, 1)), np.zeros((3, 1)))
    with pytest.raises(ValueError):
        gradient_contribution(obj, np.zeros((3, 1)), np.zeros((3, 1, 1)), np.zeros((2, 1)))


def test_delay_buffer_returns_exactly_lagged_snapshots():
    buf = DelayBuffer(capacity=3, n_particles=2, state_dim=1, param_dim=1)
    mk = lambda v: (np.full((2, 1), v), np.full((2, 1, 1), 10.0 * v), np.full((2, 1), 100.0 * v))
    assert buf.push(*mk(0.0)) is None
    assert not buf.ready
    assert buf.push(*mk(1.0)) is None
    with pytest.raises(NotReadyError):
        buf.peek()
    assert buf.push(*mk(2.0)) is None
    assert buf.ready
    for k in range(3, 10):
        out = buf.push(*mk(float(k)))
        assert out is not None
        x_old, x_tan_old, x_rep_old = out
        assert x_old[0, 0] == k - 3
        assert x_tan_old[0, 0, 0] == 10.0 * (k - 3)
        assert x_rep_old[0, 0] == 100.0 * (k - 3)


def test_delay_buffer_snapshots_are_copies():
    buf = DelayBuffer(capacity=1, n_particles=1, state_dim=1, param_dim=1)
    buf.push(np.zeros((1, 1)), np.zeros((1, 1, 1)), np.zeros((1, 1)))
    snap = buf.push(np.ones((1, 1)), np.ones((1, 1, 1)), np.ones((1, 1)))
    snap[0][0, 0] = 123.0
    assert buf.peek()[0][0, 0] == 1.0


def test_closed_form_autocov_objective():
    # mu=2, lam=2, sigma=1: stationary N(1, 1/4), lag-0.1 product
    # 1 + exp(-0.2)/4
    j = objective_closed_form_autocov(2.0, 2.0, 1.0, 0.1,
                                      (1.0, 1.25, 1.0 + math.exp(-0.2) / 4.0))
    assert j == pytest.approx(0.0, abs=1e-15)
    j2 = objective_closed_form_autocov(2.0, 2.0, 1.0, 0.1, (0.0, 0.0, 0.0))
    assert j2 == pytest.approx(1.0 + 1.25 ** 2 + (1.0 + math.exp(-0.2) / 4.0) ** 2)
    with pytest.raises(ValueError):
        objective_closed_form_autocov(1.0, 0.0, 1.0, 0.1, (0, 0, 0))


def test_pack_stats():
    obj = ObjectiveSpec((
        TargetStatistic(KIND_SUM, 1.0),
        TargetStatistic(KIND_LAG, 1.6, lag=0.1),
    ))
    kinds, targets, lags = pack_stats(obj, dt=0.01)
    np.testing.assert_array_equal(kinds, [KIND_SUM, KIND_LAG])
    np.testing.assert_array_equal(targets, [1.0, 1.6])
    np.testing.assert_array_equal(lags, [0, 10])


@settings(max_examples=60, deadline=None)
@given(
    data=st.data(),
    n=st.integers(min_value=1, max_value=8),
    d=st.integers(min_value=1, max_value=3),
    l=st.integers(min_value=1, max_value=3),
)
def test_gradient_scales_linearly_in_the_residual(data, n, d, l):
    # doubling (mean f(rep) - target) exactly doubles G for a sum statistic
    elems = st.floats(min_value=-3.0, max_value=3.0, allow_nan=False)
    x = data.draw(hnp.arrays(np.float64, (n, d), elements=elems))
    x_tan = data.draw(hnp.arrays(np.float64, (n, d, l), elements=elems))
    x_rep = data.draw(hnp.arrays(np.float64, (n, d), elements=elems))
    mean = float(x_rep.sum(axis=1).mean())
    g1, _ = gradient_contribution(
        ObjectiveSpec((TargetStatistic(KIND_SUM, mean - 1.0),)), x, x_tan, x_rep)
    g2, _ = gradient_contribution(
        ObjectiveSpec((TargetStatistic(KIND_SUM, mean - 2.0),)), x, x_tan, x_rep)
    np.testing.assert_allclose(g2, 2.0 * g1, rtol=1e-9, atol=1e-12)
