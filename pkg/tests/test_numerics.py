import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gpebo.numerics import (
    DimensionError, FirstOrderFilterState, IntegrationError, TimeGrid, adjugate, determinant,
    determinant_series, filter_step, filtered_derivative_output, integrate, rk4_step,
)


def decay(t, x):
    return -x


# -- rk4 ---------------------------------------------------------------------

def test_rk4_zero_field_is_identity():
    out = rk4_step(lambda t, x: np.zeros_like(x), 0.0, np.array([1.0, 2.0]), 0.1)
    np.testing.assert_array_equal(out, [1.0, 2.0])


def test_rk4_single_step_exponential():
    out = rk4_step(decay, 0.0, np.array([1.0]), 1e-3)
    assert abs(out[0] - math.exp(-1e-3)) < 1e-15


def test_rk4_rotation_returns_after_full_period():
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    grid = TimeGrid(0.0, 2 * math.pi, 1e-3)
    out = integrate(lambda t, x: A @ x, grid, np.array([1.0, 0.0]))
    assert np.max(np.abs(out[-1] - [1.0, 0.0])) < 1e-9


def _decay_error(h):
    return abs(integrate(decay, TimeGrid(0.0, 10.0, h), np.array([1.0]))[-1, 0] - math.exp(-10.0))


def test_rk4_global_error_on_exponential():
    assert _decay_error(1e-3) < 1e-12


def test_rk4_fourth_order_convergence():
    errs = [_decay_error(h) for h in (0.1, 0.05, 0.025)]
    assert errs[0] / errs[1] >= 15
    assert errs[1] / errs[2] >= 15


def test_rk4_is_bit_deterministic():
    f = lambda t, x: np.array([x[1], -np.sin(x[0]) + 0.1 * np.cos(t)])
    a = integrate(f, TimeGrid(0, 5, 1e-2), np.array([0.3, 0.0]))
    b = integrate(f, TimeGrid(0, 5, 1e-2), np.array([0.3, 0.0]))
    assert a.tobytes() == b.tobytes()


def test_rk4_reports_time_and_component_of_non_finite_value():
    def f(t, x):
        return np.array([0.0, np.nan if t > 0.25 else 1.0, 0.0])
    with pytest.raises(IntegrationError) as exc:
        integrate(f, TimeGrid(0, 1, 0.1), np.zeros(3))
    assert exc.value.index == 1
    assert 0.25 < exc.value.t <= 0.35


def test_rk4_rejects_nonpositive_step():
    with pytest.raises(ValueError):
        rk4_step(decay, 0.0, np.ones(1), 0.0)


# -- grid ------------------------------------------------------------------------

def test_grid_lands_exactly_on_final_time():
    g = TimeGrid(0.0, 2 * math.pi, 1e-3)
    assert g.n_steps == round(2 * math.pi / 1e-3)
    t = g.times()
    assert t[0] == 0.0 and t[-1] == 2 * math.pi
    assert np.allclose(np.diff(t), g.step, rtol=0, atol=1e-15)


def test_grid_with_dividing_step_uses_it_unchanged():
    g = TimeGrid(0.0, 20.0, 1e-3)
    assert g.n_steps == 20000 and g.step == 1e-3


@pytest.mark.parametrize("t0, t1, h", [(0, 1, 0), (0, 1, -1e-3), (1, 1, 1e-3), (1, 0, 1e-3), (0, 1e-4, 1e-3)])
def test_grid_validation(t0, t1, h):
    with pytest.raises(ValueError):
        TimeGrid(t0, t1, h)


# -- filters ---------------------------------------------------------------------

def _run_filter(lam, v_of_t, t_end, h=1e-3, first_order_hold=False):
    f = FirstOrderFilterState(z=0.0, lam=lam)
    n = int(round(t_end / h))
    for k in range(n):
        nxt = v_of_t((k + 1) * h) if first_order_hold else None
        f = filter_step(f, v_of_t(k * h), h, v_next=nxt)
    return f


def test_filter_zero_input_stays_zero():
    f = _run_filter(1.0, lambda t: 0.0, 1.0)
    assert f.z == 0.0


def test_filter_step_response():
    c = 2.5
    f = _run_filter(1.0, lambda t: c, 5.0)
    assert abs(f.z - c * (1 - math.exp(-5.0))) < 1e-9


def test_filter_fixed_point():
    f = FirstOrderFilterState(z=3.0, lam=7.0)
    for _ in range(100):
        f = filter_step(f, 3.0, 1e-3)
    assert f.z == 3.0


def test_filter_converges_monotonically():
    f = FirstOrderFilterState(z=0.0, lam=2.0)
    zs = []
    for _ in range(5000):
        f = filter_step(f, 1.0, 1e-3)
        zs.append(float(f.z))
    zs = np.array(zs)
    assert np.all(np.diff(zs) > 0) and np.all(zs < 1.0)


def test_filter_shape_mismatch():
    f = FirstOrderFilterState(z=np.zeros(2), lam=1.0)
    with pytest.raises(DimensionError):
        filter_step(f, np.zeros(3), 1e-3)
    with pytest.raises(DimensionError):
        filtered_derivative_output(f, np.zeros(3))


def test_filter_rejects_nonpositive_gain():
    with pytest.raises(ValueError):
        FirstOrderFilterState(z=0.0, lam=0.0)


def test_filtered_derivative_of_constant_is_zero():
    assert filtered_derivative_output(FirstOrderFilterState(z=4.0, lam=3.0), 4.0) == 0.0


def test_filtered_derivative_of_ramp_closed_form():
    # lam (v - z) for v = t from z(0) = 0 is exactly 1 - exp(-lam t)
    lam = 1.0
    for t_end in (10.0 / lam, 14.0 / lam):
        f = _run_filter(lam, lambda t: t, t_end, first_order_hold=True)
        out = filtered_derivative_output(f, t_end)
        assert abs(out - (1 - math.exp(-lam * t_end))) < 1e-12
    # 1e-6 of the unit slope is reached once exp(-lam t) < 1e-6, i.e. t > 13.8/lam
    assert abs(out - 1.0) < 1e-6


def test_filtered_derivative_tracks_sine():
    lam, h = 100.0, 1e-3
    f = FirstOrderFilterState(z=0.0, lam=lam)
    worst = 0.0
    for k in range(int(10 / h)):
        t = k * h
        f = filter_step(f, math.sin(t), h, v_next=math.sin(t + h))
        if t + h > 1.0:
            worst = max(worst, abs(filtered_derivative_output(f, math.sin(t + h)) - math.cos(t + h)))
    assert worst < 2e-2


# -- adjugate / determinant ---------------------------------------------------------

def test_adjugate_examples():
    np.testing.assert_array_equal(adjugate(np.eye(2)), np.eye(2))
    np.testing.assert_array_equal(adjugate([[1, 2], [3, 4]]), [[4, -2], [-3, 1]])
    S = np.array([[1.0, 1.0], [1.0, 1.0]])
    np.testing.assert_array_equal(adjugate(S), [[1, -1], [-1, 1]])
    np.testing.assert_array_equal(adjugate(S) @ S, np.zeros((2, 2)))
    np.testing.assert_array_equal(adjugate([[5.0]]), [[1.0]])


def test_adjugate_of_zero_matrix():
    assert np.all(adjugate(np.zeros((3, 3))) == 0)
    np.testing.assert_array_equal(adjugate(np.zeros((2, 2))), np.zeros((2, 2)))


def test_determinant_examples():
    assert determinant(np.eye(3)) == 1.0
    assert determinant([[1, 2], [3, 4]]) == -2.0
    assert determinant([[1, 1], [1, 1]]) == 0.0


@pytest.mark.parametrize("bad", [np.zeros((2, 3)), np.zeros(3), np.zeros((0, 0)), np.zeros((2, 2, 2))])
def test_square_contract(bad):
    with pytest.raises(DimensionError):
        adjugate(bad)
    with pytest.raises(DimensionError):
        determinant(bad)


def test_determinant_series_matches_scalar():
    rng = np.random.default_rng(3)
    for n in (1, 2, 3, 4, 5):
        Ms = rng.uniform(-1, 1, (20, n, n))
        series = determinant_series(Ms)
        scalar = np.array([determinant(M) for M in Ms])
        if n <= 4:
            np.testing.assert_array_equal(series, scalar)
        else:
            np.testing.assert_allclose(series, scalar, rtol=1e-12)


def _square_matrices():
    def build(args):
        n, rank, seed = args
        rng = np.random.default_rng(seed)
        M = rng.uniform(-1, 1, (n, n))
        if rank < n:
            # rank-deficient: project onto `rank` random directions
            U = rng.uniform(-1, 1, (n, rank))
            V = rng.uniform(-1, 1, (rank, n))
            M = np.clip(U @ V / max(rank, 1), -1, 1) if rank else np.zeros((n, n))
        return M
    return st.tuples(st.integers(1, 5), st.integers(0, 5), st.integers(0, 2**31 - 1)).map(
        lambda a: build((a[0], min(a[1], a[0]), a[2])))


@settings(max_examples=300, deadline=None)
@given(_square_matrices())
def test_adjugate_identity_property(M):
    n = M.shape[0]
    d = determinant(M)
    assert np.max(np.abs(adjugate(M) @ M - d * np.eye(n))) < 1e-10
    assert np.max(np.abs(M @ adjugate(M) - d * np.eye(n))) < 1e-10


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_duplicated_row_gives_zero_determinant(n, seed):
    if n == 1:
        return
    rng = np.random.default_rng(seed)
    M = rng.integers(-5, 6, (n, n)).astype(float)
    M[-1] = M[0]
    assert determinant(M) == 0.0
