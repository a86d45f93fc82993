"""Tests for core SSM types, discretization, simulation, and transforms."""

import math

import numpy as np
import pytest

from obsgrass.errors import (
    ConfigError,
    DimensionMismatchError,
    NonFiniteError,
    SingularStateError,
    SingularTransformError,
)
from obsgrass.ssm import (
    AggregatedStates,
    DenseSSM,
    DiagonalSSM,
    SequenceStateBundle,
    aggregate_states,
    decay_horizon,
    discretize_zoh,
    p_transform,
    simulate,
    soft_normalize,
    soft_normalize_deriv,
    ssm_from_json,
    ssm_to_json,
    truncated_observability,
)


# ---------------------------------------------------------------------------
# discretize_zoh

def test_zoh_scalar_oracle():
    # closed form: a_bar = exp(-1), b_bar = (e^-1 - 1)/(-1)
    a_bar, b_bar = discretize_zoh(np.array([[-1.0]]), np.array([1.0]), 1.0)
    assert abs(a_bar[0, 0] - math.exp(-1)) < 1e-15
    assert abs(b_bar[0] - (1 - math.exp(-1))) < 1e-15


def test_zoh_small_delta_limit():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((3, 3))
    b = rng.standard_normal(3)
    a_bar, b_bar = discretize_zoh(a, b, 1e-12)
    assert np.allclose(a_bar, np.eye(3), atol=1e-10)
    assert np.max(np.abs(b_bar)) < 1e-10


def test_zoh_diagonal_oracle():
    a = np.diag([-1.0, -2.0])
    b = np.array([1.0, 1.0])
    a_bar, b_bar = discretize_zoh(a, b, 0.5)
    assert np.allclose(np.diag(a_bar), [math.exp(-0.5), math.exp(-1.0)], atol=1e-14)
    assert np.allclose(a_bar - np.diag(np.diag(a_bar)), 0.0)
    # elementwise scalar oracle: (e^{da} - 1)/a
    expect = np.array([(math.exp(-0.5) - 1) / -1.0, (math.exp(-1.0) - 1) / -2.0])
    assert np.allclose(b_bar, expect, atol=1e-14)
    # 1-D input takes the elementwise path and must agree
    a_bar_d, b_bar_d = discretize_zoh(np.array([-1.0, -2.0]), b, 0.5)
    assert np.allclose(a_bar_d, np.diag(a_bar), atol=1e-14)
    assert np.allclose(b_bar_d, b_bar, atol=1e-14)


def test_zoh_series_matches_exact_when_invertible():
    rng = np.random.default_rng(7)
    for _ in range(50):
        n = rng.integers(1, 6)
        a = rng.standard_normal((n, n)) + 2.0 * np.eye(n)  # keep well-conditioned
        b = rng.standard_normal(n)
        delta = float(rng.uniform(0.05, 1.0))
        _, b_series = discretize_zoh(a, b, delta, method="series")
        _, b_exact = discretize_zoh(a, b, delta, method="exact")
        assert np.max(np.abs(b_series - b_exact)) < 1e-10


def test_zoh_singular_a():
    a = np.zeros((2, 2))
    b = np.array([1.0, 2.0])
    # series fallback handles A = 0: b_bar = delta * b
    a_bar, b_bar = discretize_zoh(a, b, 0.25)
    assert np.allclose(a_bar, np.eye(2))
    assert np.allclose(b_bar, 0.25 * b)
    with pytest.raises(SingularStateError):
        discretize_zoh(a, b, 0.25, method="exact")


def test_zoh_rejects_bad_args():
    with pytest.raises(ValueError):
        discretize_zoh(np.eye(2), np.ones(2), 0.0)
    with pytest.raises(DimensionMismatchError):
        discretize_zoh(np.eye(2), np.ones(3), 0.1)
    with pytest.raises(ValueError):
        discretize_zoh(np.eye(2), np.ones(2), 0.1, method="pade")


# ---------------------------------------------------------------------------
# simulate

def test_simulate_memoryless():
    ssm = DenseSSM(np.zeros((2, 2)), np.array([1.0, 0.0]), np.array([1.0, 0.0]))
    trace = simulate(ssm, [1.0, 1.0])
    assert np.allclose(trace.outputs, [1.0, 1.0])


def test_simulate_constant_state():
    ssm = DenseSSM(np.eye(2), np.zeros(2), np.array([1.0, 0.0]))
    trace = simulate(ssm, np.zeros(5), h0=np.array([1.0, 0.0]))
    assert np.allclose(trace.outputs, np.ones(5))


def test_simulate_diagonal_hand_recurrence():
    ssm = DiagonalSSM(np.array([0.5]), np.array([1.0]), np.array([1.0]))
    trace = simulate(ssm, [1.0, 0.0, 0.0])
    assert np.allclose(trace.outputs, [1.0, 0.5, 0.25])


def test_simulate_outputs_consistent_with_hidden():
    rng = np.random.default_rng(3)
    ssm = DenseSSM(0.4 * rng.standard_normal((4, 4)), rng.standard_normal(4),
                   rng.standard_normal(4))
    trace = simulate(ssm, rng.standard_normal(20))
    assert np.array_equal(trace.outputs, trace.hidden @ ssm.c)


def test_simulate_overflow_raises():
    ssm = DiagonalSSM(np.array([2.0]), np.array([1.0]), np.array([1.0]))
    with pytest.raises(NonFiniteError):
        simulate(ssm, np.ones(5000))


# ---------------------------------------------------------------------------
# p_transform

def test_p_transform_identity():
    rng = np.random.default_rng(1)
    ssm = DenseSSM(0.3 * rng.standard_normal((3, 3)), rng.standard_normal(3),
                   rng.standard_normal(3))
    out = p_transform(ssm, np.eye(3))
    assert np.allclose(out.a, ssm.a) and np.allclose(out.b, ssm.b) and np.allclose(out.c, ssm.c)


def test_p_transform_simulation_equivalence():
    # same inputs, initial states h0 and P h0: identical outputs
    rng = np.random.default_rng(11)
    n, steps = 4, 50
    ssm = DenseSSM(0.4 * rng.standard_normal((n, n)), rng.standard_normal(n),
                   rng.standard_normal(n))
    p = rng.standard_normal((n, n)) + 2.0 * np.eye(n)
    x = rng.standard_normal(steps)
    h0 = rng.standard_normal(n)
    y1 = simulate(ssm, x, h0).outputs
    y2 = simulate(p_transform(ssm, p), x, p @ h0).outputs
    assert np.max(np.abs(y1 - y2)) < 1e-10


def test_p_transform_permutation_relabels_diagonal():
    diag = DiagonalSSM(np.array([0.1, 0.2, 0.3]), np.ones(3), np.array([1.0, 2.0, 3.0]))
    perm = np.eye(3)[[2, 0, 1]]
    out = p_transform(diag.to_dense(), perm)
    assert np.allclose(np.diag(out.a), np.array([0.1, 0.2, 0.3])[[2, 0, 1]])
    assert np.allclose(out.a - np.diag(np.diag(out.a)), 0.0)
    rng = np.random.default_rng(4)
    x = rng.standard_normal(20)
    assert np.allclose(simulate(diag, x).outputs, simulate(out, x).outputs, atol=1e-12)


def test_p_transform_trace_equivalence_property():
    # n <= 8, T <= 100, cond(P) < 1e6: traces agree to 1e-8
    rng = np.random.default_rng(21)
    for _ in range(30):
        n = int(rng.integers(1, 9))
        steps = int(rng.integers(1, 101))
        a = rng.standard_normal((n, n))
        a *= 0.9 / max(np.max(np.abs(np.linalg.eigvals(a))), 1e-9)
        ssm = DenseSSM(a, rng.standard_normal(n), rng.standard_normal(n))
        p = rng.standard_normal((n, n)) + 1.5 * np.eye(n)
        if np.linalg.cond(p) >= 1e6:
            continue
        x = rng.standard_normal(steps)
        h0 = rng.standard_normal(n)
        y1 = simulate(ssm, x, h0).outputs
        y2 = simulate(p_transform(ssm, p), x, p @ h0).outputs
        assert np.max(np.abs(y1 - y2)) < 1e-8


def test_p_transform_singular_raises():
    ssm = DenseSSM(np.zeros((2, 2)), np.ones(2), np.ones(2))
    with pytest.raises(SingularTransformError):
        p_transform(ssm, np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(SingularTransformError):
        p_transform(ssm, np.diag([1.0, 1e-9]))  # cond 1e9 above threshold


# ---------------------------------------------------------------------------
# soft_normalize

def test_sn_zero_and_odd_symmetry():
    assert soft_normalize(0.0) == 0.0
    rng = np.random.default_rng(5)
    x = rng.standard_normal(100) * 10
    assert np.max(np.abs(soft_normalize(x) + soft_normalize(-x))) < 1e-15


def test_sn_at_one():
    # 2/(1+e^-1) - 1 = tanh(1/2)
    assert abs(soft_normalize(1.0) - 0.46212) < 5e-6
    assert abs(soft_normalize(1.0) - math.tanh(0.5)) < 1e-15
    assert abs(soft_normalize(1.0) - (2.0 / (1.0 + math.exp(-1.0)) - 1.0)) < 1e-15


def test_sn_open_interval_and_monotone():
    x = np.array([-1e308, -500.0, -40.0, -1.0, 0.0, 1.0, 40.0, 500.0, 1e308])
    y = soft_normalize(x)
    assert np.all(y > -1.0) and np.all(y < 1.0)
    assert np.all(np.diff(y) >= 0.0)
    rng = np.random.default_rng(6)
    xs = np.sort(rng.standard_normal(200) * 5)
    assert np.all(np.diff(soft_normalize(xs)) > 0.0)


def test_sn_deriv_matches_finite_difference():
    rng = np.random.default_rng(8)
    x = rng.standard_normal(50) * 3
    h = 1e-6
    fd = (soft_normalize(x + h) - soft_normalize(x - h)) / (2 * h)
    assert np.max(np.abs(fd - soft_normalize_deriv(x))) < 1e-9


# ---------------------------------------------------------------------------
# aggregate_states

def _bundle(a_bar, b_bar, c):
    return SequenceStateBundle(np.asarray(a_bar, float), np.asarray(b_bar, float),
                               np.asarray(c, float))


def test_aggregate_zeros():
    b = _bundle(np.zeros((2, 1, 3)), np.zeros((2, 1, 3)), np.zeros((2, 3)))
    agg = aggregate_states(b)
    assert np.array_equal(agg.a_tilde, np.zeros((2, 3)))


def test_aggregate_mean_cancellation():
    a_bar = np.zeros((1, 2, 2))
    a_bar[0, 0] = [0.7, -0.3]
    a_bar[0, 1] = [-0.7, 0.3]
    b = _bundle(a_bar, np.zeros((1, 2, 2)), np.zeros((1, 2)))
    assert np.allclose(aggregate_states(b).a_tilde, 0.0)


def test_aggregate_mean_then_sn():
    # mean of {0.5, 1.5} is 1.0, so a_tilde = SN(1)
    a_bar = np.array([[[0.5], [1.5]]])
    b = _bundle(a_bar, np.zeros((1, 2, 1)), np.zeros((1, 1)))
    assert abs(aggregate_states(b).a_tilde[0, 0] - 0.46212) < 5e-6


def test_aggregate_arbitrary_finite_bundle_stays_inside_unit_box():
    rng = np.random.default_rng(9)
    for _ in range(20):
        tau, o, n = (int(v) for v in rng.integers(1, 5, size=3))
        scale = 10.0 ** rng.integers(0, 300)
        agg = aggregate_states(_bundle(
            rng.standard_normal((tau, o, n)) * scale,
            rng.standard_normal((tau, o, n)) * scale,
            rng.standard_normal((tau, n)) * scale,
        ))
        for arr in (agg.a_tilde, agg.b_tilde, agg.c_tilde):
            assert np.all(np.abs(arr) < 1.0)


def test_aggregated_states_rejects_saturated_entries():
    ok = np.zeros((1, 2))
    with pytest.raises(NonFiniteError):
        AggregatedStates(np.array([[1.0, 0.0]]), ok, ok)


# ---------------------------------------------------------------------------
# truncated_observability

def test_observability_nilpotent():
    ssm = DenseSSM(np.zeros((2, 2)), np.zeros(2), np.array([1.0, 0.0]))
    o = truncated_observability(ssm, 4)
    assert np.array_equal(o[0], [1.0, 0.0])
    assert np.array_equal(o[1:], np.zeros((3, 2)))


def test_observability_identity_powers():
    ssm = DenseSSM(np.eye(2), np.zeros(2), np.array([1.0, 1.0]))
    o = truncated_observability(ssm, 5)
    assert np.array_equal(o, np.ones((5, 2)))


def test_observability_diagonal_hand_powers():
    ssm = DiagonalSSM(np.array([0.5, 0.25]), np.zeros(2), np.array([1.0, 1.0]))
    o = truncated_observability(ssm, 3)
    assert np.allclose(o, [[1, 1], [0.5, 0.25], [0.25, 0.0625]], atol=1e-15)
    dense = truncated_observability(ssm.to_dense(), 3)
    assert np.allclose(o, dense, atol=1e-15)


def test_observability_p_transform_right_multiplies_by_p_inverse():
    rng = np.random.default_rng(12)
    for _ in range(10):
        n = int(rng.integers(2, 6))
        a = rng.standard_normal((n, n))
        a *= 0.8 / max(np.max(np.abs(np.linalg.eigvals(a))), 1e-9)
        ssm = DenseSSM(a, rng.standard_normal(n), rng.standard_normal(n))
        p = rng.standard_normal((n, n)) + 1.5 * np.eye(n)
        o1 = truncated_observability(ssm, 40)
        o2 = truncated_observability(p_transform(ssm, p), 40)
        assert np.max(np.abs(o2 - o1 @ np.linalg.inv(p))) < 1e-8


def test_decay_horizon():
    k = decay_horizon(0.5)
    assert 0.5 ** k < 1e-12 and 0.5 ** (k - 2) >= 1e-12
    assert decay_horizon(0.9999999) == 5000
    assert decay_horizon(0.0) == 1
    assert decay_horizon(1.0) == 5000


# ---------------------------------------------------------------------------
# serialization

def test_json_round_trip_diagonal():
    ssm = DiagonalSSM(np.array([1 / 3, -0.1]), np.array([1e-17, 2.0]),
                      np.array([0.1, 0.2]))
    back = ssm_from_json(ssm_to_json(ssm))
    assert isinstance(back, DiagonalSSM)
    assert np.array_equal(back.a_diag, ssm.a_diag)
    assert np.array_equal(back.b, ssm.b)
    assert np.array_equal(back.c, ssm.c)


def test_json_round_trip_dense():
    rng = np.random.default_rng(13)
    ssm = DenseSSM(rng.standard_normal((3, 3)), rng.standard_normal(3),
                   rng.standard_normal(3))
    back = ssm_from_json(ssm_to_json(ssm))
    assert isinstance(back, DenseSSM)
    assert np.array_equal(back.a, ssm.a)


def test_json_17_significant_digits():
    ssm = DiagonalSSM(np.array([1 / 3]), np.array([1.0]), np.array([1.0]))
    assert "0.33333333333333331" in ssm_to_json(ssm)


def test_json_rejects_malformed():
    with pytest.raises(ConfigError):
        ssm_from_json("not json at all {")
    with pytest.raises(ConfigError):
        ssm_from_json('{"kind": "dense", "n": 2, "a": [[1,0],[0,1]], "b": [1,0]}')
    with pytest.raises(ConfigError):
        ssm_from_json('{"kind": "banded", "n": 1, "a": [0.5], "b": [1], "c": [1]}')
    with pytest.raises(ConfigError):
        ssm_from_json('{"kind": "diagonal", "n": 3, "a": [0.5], "b": [1], "c": [1]}')
    with pytest.raises(ConfigError):
        ssm_from_json('{"kind": "diagonal", "n": 1, "a": ["x"], "b": [1], "c": [1]}')


# ---------------------------------------------------------------------------
# type validation

def test_types_reject_bad_shapes_and_nonfinite():
    with pytest.raises(DimensionMismatchError):
        DenseSSM(np.zeros((2, 3)), np.zeros(2), np.zeros(2))
    with pytest.raises(DimensionMismatchError):
        DiagonalSSM(np.zeros(2), np.zeros(3), np.zeros(2))
    with pytest.raises(NonFiniteError):
        DiagonalSSM(np.array([np.nan]), np.zeros(1), np.zeros(1))


def test_values_immutable_after_construction():
    ssm = DiagonalSSM(np.array([0.5]), np.array([1.0]), np.array([1.0]))
    with pytest.raises((ValueError, RuntimeError)):
        ssm.a_diag[0] = 0.9
