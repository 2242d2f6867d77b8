import math
from dataclasses import replace

import numpy as np
import pytest

from gpebo.numerics import DimensionError, rk4_step
from gpebo.observer import (
    ObserverConfig, PlantMaps, clipped_weight, drem_snapshot, estimate_state, estimate_state_fct,
    excitation_satisfied, fct_parameter, observer_init, observer_step, pack, packed_size, unpack,
)


def constant_maps(n, Lam, B=None, L=None, C=None):
    Lam = np.asarray(Lam, dtype=float)
    B = np.zeros(n) if B is None else np.asarray(B, dtype=float)
    L = np.zeros((n, n)) if L is None else np.asarray(L, dtype=float)
    C = np.zeros(n) if C is None else np.asarray(C, dtype=float)
    return PlantMaps(n=n, Lambda=lambda u, y: Lam, B=lambda u, y: B, L=lambda u, y: L,
                     C=lambda u, y: C, phi=lambda x: np.asarray(x, float),
                     phi_left_inverse=lambda w, y: np.asarray(w, float))


def oscillator_maps():
    """``x1' = x2, x2' = -x1`` with ``y = x1``: ``L = diag(1, 0)``, ``C = (y, 0)``."""
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    L = np.diag([1.0, 0.0])
    return PlantMaps(n=2, Lambda=lambda u, y: A, B=lambda u, y: np.zeros(2), L=lambda u, y: L,
                     C=lambda u, y: np.array([y, 0.0]), phi=lambda x: np.asarray(x, float),
                     phi_left_inverse=lambda w, y: np.asarray(w, float)), A


# -- construction ------------------------------------------------------------------

def test_init_two_dimensional():
    maps = constant_maps(2, np.zeros((2, 2)))
    s = observer_init(maps, ObserverConfig(), np.zeros(2), np.zeros(2))
    np.testing.assert_array_equal(s.Phi, np.eye(2))
    assert s.w == 1.0 and s.excitation_integral == 0.0
    assert drem_snapshot(s, maps, None, None).Delta == 0.0
    np.testing.assert_array_equal(s.Y, 0)
    np.testing.assert_array_equal(s.Omega, 0)


def test_init_scalar_mixing_passes_output_through():
    maps = constant_maps(1, [[0.0]], L=[[1.0]])
    s = observer_init(maps, ObserverConfig(), [0.0], [0.0])
    np.testing.assert_array_equal(s.Phi, [[1.0]])
    s = replace(s, Y=np.array([0.7]))
    np.testing.assert_array_equal(drem_snapshot(s, maps, None, None).mixed_output, [0.7])


def test_initial_estimate_is_left_inverse_of_sum():
    maps = constant_maps(3, np.zeros((3, 3)))
    s = observer_init(maps, ObserverConfig(), [1.0, 2.0, 3.0], [0.5, -1.0, 0.25])
    np.testing.assert_array_equal(estimate_state(s, maps, None), [1.5, 1.0, 3.25])


def test_theta_hat0_is_a_frozen_copy():
    maps = constant_maps(1, [[0.0]])
    th0 = np.array([0.3])
    s = observer_init(maps, ObserverConfig(), [0.0], th0)
    th0[0] = 9.0
    assert s.theta_hat0[0] == 0.3 and s.theta_hat[0] == 0.3


def test_init_dimension_errors():
    maps = constant_maps(2, np.zeros((2, 2)))
    with pytest.raises(DimensionError):
        observer_init(maps, ObserverConfig(), np.zeros(3), np.zeros(2))
    with pytest.raises(DimensionError):
        observer_init(maps, ObserverConfig(), np.zeros(2), np.zeros(1))


@pytest.mark.parametrize("kw", [dict(lam=0.0), dict(gamma=0.0), dict(gamma=-1.0), dict(mu=0.0),
                                dict(mu=1.0), dict(mode="fast"), dict(omega_regressor="both")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        ObserverConfig(**kw)


def test_olo_config_forces_zero_gain():
    cfg = ObserverConfig(gamma=5.0, mode="olo")
    assert cfg.gamma == 0.0 and cfg.excitation_threshold == math.inf


def test_pack_roundtrip():
    maps = constant_maps(3, np.zeros((3, 3)))
    s = observer_init(maps, ObserverConfig(), [1, 2, 3], [4, 5, 6])
    v = pack(s)
    assert v.shape == (packed_size(3),)
    p = unpack(v, 3)
    np.testing.assert_array_equal(p["xi"], [1, 2, 3])
    np.testing.assert_array_equal(p["Phi"], np.eye(3))
    np.testing.assert_array_equal(p["theta_hat"], [4, 5, 6])
    assert p["w"] == 1.0 and p["excitation_integral"] == 0.0
    with pytest.raises(DimensionError):
        unpack(v[:-1], 3)


# -- stepping -----------------------------------------------------------------------

def test_no_excitation_means_no_adaptation():
    maps = constant_maps(2, np.zeros((2, 2)))
    cfg = ObserverConfig(gamma=1e6)
    s = observer_init(maps, cfg, [0.0, 0.0], [0.3, -0.7])
    for _ in range(1000):
        s = observer_step(s, maps, cfg, None, None, 1e-3)
    np.testing.assert_array_equal(s.theta_hat, [0.3, -0.7])
    assert s.w == 1.0 and s.excitation_integral == 0.0


def test_fundamental_matrix_of_uniform_decay():
    a = 0.8
    maps = constant_maps(3, -a * np.eye(3))
    cfg = ObserverConfig()
    s = observer_init(maps, cfg, np.zeros(3), np.zeros(3))
    for _ in range(1000):
        s = observer_step(s, maps, cfg, None, None, 1e-3)
    assert abs(s.t - 1.0) < 1e-12
    assert np.max(np.abs(s.Phi - math.exp(-a) * np.eye(3))) < 1e-9


def test_oscillator_observer_converges_with_held_measurements():
    maps, A = oscillator_maps()
    cfg = ObserverConfig(lam=5.0, gamma=1e3)
    x = np.array([1.0, -0.5])
    s = observer_init(maps, cfg, [0.0, 0.0], [0.0, 0.0])
    h = 1e-3
    for _ in range(20000):
        s = observer_step(s, maps, cfg, None, x[0], h)
        x = rk4_step(lambda t, v: A @ v, 0.0, x, h)
    # holding y over a step leaves an O(h) bias
    assert np.max(np.abs(estimate_state(s, maps, x[0]) - x)) < 5e-3
    assert s.w < 1e-6 and s.t_c is not None


def test_omega_regressor_switch():
    # with a non-normal fundamental matrix the two gram choices differ
    Lam = np.array([[-1.0, 2.0], [0.0, -3.0]])
    L = np.array([[1.0, 0.0], [0.0, 0.5]])
    maps = constant_maps(2, Lam, L=L)
    states = {}
    for choice in ("psi", "phi"):
        cfg = ObserverConfig(omega_regressor=choice)
        s = observer_init(maps, cfg, np.zeros(2), np.zeros(2))
        for _ in range(500):
            s = observer_step(s, maps, cfg, None, None, 1e-3)
        states[choice] = s
    assert not np.allclose(states["psi"].Omega, states["phi"].Omega)
    # at the very first instant the derivative of Omega is lam times the chosen gram
    for choice, gram in (("psi", L.T @ L), ("phi", np.eye(2))):
        cfg = ObserverConfig(omega_regressor=choice)
        s = observer_step(observer_init(maps, cfg, np.zeros(2), np.zeros(2)), maps, cfg, None, None, 1e-6)
        np.testing.assert_allclose(s.Omega / 1e-6, gram, rtol=1e-5, atol=1e-5)


# -- DREM ----------------------------------------------------------------------------

def test_snapshot_of_zero_and_identity_gram():
    maps = constant_maps(3, np.zeros((3, 3)), L=np.eye(3))
    s = observer_init(maps, ObserverConfig(), np.zeros(3), np.zeros(3))
    s = replace(s, Y=np.array([1.0, 2.0, 3.0]))
    snap = drem_snapshot(s, maps, None, None)
    assert snap.Delta == 0.0
    np.testing.assert_array_equal(snap.mixed_output, 0)
    snap = drem_snapshot(replace(s, Omega=np.eye(3)), maps, None, None)
    assert snap.Delta == 1.0
    np.testing.assert_array_equal(snap.mixed_output, [1, 2, 3])
    np.testing.assert_array_equal(snap.Psi, np.eye(3))


def test_snapshot_scalar_zero_gram():
    maps = constant_maps(1, [[0.0]])
    s = replace(observer_init(maps, ObserverConfig(), [0.0], [0.0]), Y=np.array([0.4]))
    snap = drem_snapshot(s, maps, None, None)
    assert snap.Delta == 0.0 and snap.mixed_output[0] == 0.4


def test_mixed_output_equals_delta_theta_on_oscillator():
    maps, A = oscillator_maps()
    lam = 2.0
    cfg = ObserverConfig(lam=lam, gamma=1e-12)
    x0 = np.array([0.4, 1.1])
    x = x0.copy()
    s = observer_init(maps, cfg, [0.0, 0.0], [0.0, 0.0])
    theta = x0 - s.xi
    h = 1e-3
    # integrate plant and observer jointly so y is exact inside the step
    from gpebo.observer import observer_rhs
    v = np.concatenate([x, pack(s)])
    f = lambda t, z: np.concatenate([A @ z[:2], observer_rhs(z[2:], maps, cfg, None, z[0])])
    for _ in range(int(10 / lam / h)):
        v = rk4_step(f, 0.0, v, h)
    p = unpack(v[2:], 2)
    s = replace(s, Y=p["Y"], Omega=p["Omega"], Phi=p["Phi"], xi=p["xi"])
    snap = drem_snapshot(s, maps, None, v[0])
    assert np.max(np.abs(snap.mixed_output - snap.Delta * theta)) < 1e-6 * (1 + np.linalg.norm(theta))


# -- finite convergence time ----------------------------------------------------------

def test_fct_estimate_before_any_excitation():
    mu = 0.1
    maps = constant_maps(2, np.zeros((2, 2)))
    cfg = ObserverConfig(mu=mu, mode="fct")
    s = observer_init(maps, cfg, [1.0, 2.0], [0.5, 0.2])
    s = replace(s, theta_hat=np.array([0.6, 0.1]), Phi=np.array([[2.0, 0.0], [0.0, 3.0]]))
    expected = s.xi + s.Phi @ ((s.theta_hat - (1 - mu) * s.theta_hat0) / mu)
    np.testing.assert_allclose(estimate_state_fct(s, maps, cfg, None), expected, rtol=1e-13)


def test_fct_parameter_identity_is_exact():
    # (1 - w) theta = theta_hat - w theta_hat0 is inverted exactly once w < 1 - mu
    theta, th0 = np.array([1.5, -2.0]), np.array([0.3, 0.4])
    for w in (0.5, 0.05, 1e-9, 0.0):
        th = w * th0 + (1 - w) * theta
        np.testing.assert_allclose(fct_parameter(th, th0, w, 0.1), theta, rtol=1e-14, atol=1e-14)


def test_clipped_weight():
    np.testing.assert_array_equal(clipped_weight(np.array([1.0, 0.95, 0.9, 0.5]), 0.1), [0.9, 0.9, 0.9, 0.5])


def _constant_excitation(d, gamma, mu, h, n_steps):
    maps = constant_maps(1, [[0.0]], L=[[math.sqrt(d)]])
    cfg = ObserverConfig(gamma=gamma, mu=mu, mode="fct")
    s = replace(observer_init(maps, cfg, [0.0], [0.0]), Omega=np.array([[d]]))
    out = []
    for _ in range(n_steps):
        s = observer_step(s, maps, cfg, None, None, h)
        out.append(s)
    return cfg, out


def test_constant_excitation_crossing_time():
    d, gamma, mu, h = 0.5, 20.0, 0.1, 1e-3
    cfg, states = _constant_excitation(d, gamma, mu, h, 4000)
    expected = -math.log(1 - mu) / (gamma * d * d)
    ok, t_c = excitation_satisfied(states[-1], cfg)
    assert ok and abs(t_c - expected) <= h
    for s in states:
        assert abs(s.excitation_integral - d * d * s.t) < 1e-12
        assert abs(s.w - math.exp(-gamma * s.excitation_integral)) < 1e-9


def test_excitation_flag_matches_weight_threshold():
    cfg, states = _constant_excitation(0.5, 20.0, 0.1, 1e-3, 4000)
    for s in states:
        if abs(s.w - (1 - cfg.mu)) < 1e-12:
            continue
        assert excitation_satisfied(s, cfg)[0] == (s.w <= 1 - cfg.mu)


def test_no_excitation_never_satisfied():
    maps = constant_maps(1, [[0.0]])
    cfg = ObserverConfig(gamma=1e9)
    s = observer_init(maps, cfg, [0.0], [0.0])
    for _ in range(100):
        s = observer_step(s, maps, cfg, None, None, 1e-2)
    assert excitation_satisfied(s, cfg) == (False, None)
