import math

import numpy as np
import pytest

from gpebo.systems import reactor as rx

DP = rx.DigesterParams()
RP = rx.digester_reactor_params(DP)
R = lambda y: rx.rate_matrix(y, DP)


# -- kinetics and plant -----------------------------------------------------------------

def test_digester_defaults_match_published_constants():
    assert (DP.k1, DP.k3, DP.k4) == (268.0, 42.14, 116.5)
    assert (DP.mu_m1, DP.K_S1, DP.mu_m2, DP.K_S2, DP.K_I) == (1.2, 8.85, 0.74, 23.2, 0.0039)
    assert (DP.s10, DP.s20, DP.u) == (1.0, 1.0, 0.1)


def test_packaged_digester_file_matches_defaults():
    from gpebo.config import load_parameter_file
    pf = load_parameter_file("digester")
    assert rx.DigesterParams(**pf.get("default")) == DP


def test_growth_rate_examples():
    assert rx.growth_rates((0.0, 0.0), DP) == (0.0, 0.0)
    assert abs(rx.growth_rates((1e12, 0.0), DP)[0] - 1.2) < 1e-9
    assert abs(rx.growth_rates((8.85, 1.0), DP)[0] - 0.6) < 1e-15
    y2 = 3.0
    assert rx.growth_rates((0.0, y2), DP)[1] == 0.74 * y2 / (23.2 + y2 + 0.0039 * y2 * y2)


@pytest.mark.parametrize("y", [(-9.0, 1.0), (1.0, -30.0)])
def test_growth_rate_domain_error(y):
    with pytest.raises(ValueError):
        rx.growth_rates(y, DP)


def test_digester_parameters_must_be_positive():
    with pytest.raises(ValueError):
        rx.DigesterParams(k1=0.0)


def test_washout_field():
    y = np.array([0.3, 2.0])
    f = rx.reactor_field(rx.ReactorState(y, np.zeros(2)), RP, R)
    np.testing.assert_array_equal(f.x, [0.0, 0.0])
    np.testing.assert_allclose(f.y, -0.1 * y + [0.1, 0.1], rtol=1e-15)


def test_rank_deficient_stoichiometry_is_rejected():
    with pytest.raises(ValueError):
        rx.ReactorParams(K_y=[[1.0, 2.0], [2.0, 4.0]], K_x=np.eye(2), chi_y=[0, 0], chi_x=[0, 0], u=0.1)
    with pytest.raises(ValueError):
        rx.ReactorParams(K_y=[[1.0, 2.0]], K_x=np.eye(2), chi_y=[0], chi_x=[0, 0], u=0.1)


# -- GPEBO mappings -----------------------------------------------------------------------

def _printed_ydag(y):
    return -np.array([y[0] / DP.k3, y[1] / DP.k1 + DP.k4 * y[0] / (DP.k1 * DP.k3)])


def test_partial_coordinate_matches_printed_form():
    y = np.array([0.05, 4.0])
    np.testing.assert_allclose(RP.K_y_pinv @ y, _printed_ydag(y), rtol=1e-12)
    np.testing.assert_allclose(RP.K_y_pinv, np.linalg.inv(RP.K_y), rtol=1e-12, atol=1e-15)


def test_copy_system_input_matches_printed_vector():
    printed = DP.u * np.array([DP.s10 / DP.k3, DP.s20 / DP.k1 + DP.k4 * DP.s10 / (DP.k1 * DP.k3)])
    np.testing.assert_allclose(RP.B, printed, rtol=1e-12)
    assert np.all(RP.B > 0)


def test_regression_input_matches_printed_form():
    y, xi = np.array([0.7, 3.0]), np.array([0.2, -0.4])
    ydag, chi_l, Psi = rx.measured_signals(y, xi, np.eye(2), RP, R)
    mu1, mu2 = rx.growth_rates(y, DP)
    yd = -_printed_ydag(y)
    sd = np.array([DP.s10 / DP.k3, DP.s20 / DP.k1 + DP.k4 * DP.s10 / (DP.k1 * DP.k3)])
    printed = DP.u * yd - DP.u * sd + np.array([mu1 * (xi[0] - yd[0]), mu2 * (xi[1] - yd[1])])
    np.testing.assert_allclose(chi_l, printed, rtol=1e-12)
    np.testing.assert_array_equal(Psi, np.diag([mu1, mu2]))


def test_left_inverse_is_exact():
    maps = rx.reactor_plant_maps(RP)
    rng = np.random.default_rng(5)
    for _ in range(50):
        y, x = rng.uniform(0, 10, 2), rng.uniform(0, 2, 2)
        np.testing.assert_allclose(maps.phi_left_inverse(maps.phi(np.concatenate([y, x])), y), x,
                                   rtol=1e-13, atol=1e-15)
    np.testing.assert_array_equal(maps.Lambda(0.1, None), -0.1 * np.eye(2))
    np.testing.assert_array_equal(maps.B(0.1, None), RP.B)


def test_regression_starts_from_zero():
    s = rx.RegressionState.zeros(2, 2)
    y = np.array([0.05, 4.0])
    Y = rx.regression_output(s.Psi_f, s.z_ydag, s.z_chi, RP.K_y_pinv @ y, 100.0)
    mixed, Delta = rx.regression_mix(s.Psi_f, Y)
    assert Delta == 0.0
    np.testing.assert_array_equal(mixed, 0.0)


def test_regression_step_advances_filters():
    s = rx.RegressionState.zeros(2, 2)
    y, xi = np.array([0.05, 4.0]), np.zeros(2)
    new, mixed, Delta = rx.build_regression_step(s, xi, np.eye(2), y, RP, R, 100.0, 1e-3)
    mu = np.array(rx.growth_rates(y, DP))
    np.testing.assert_allclose(np.diag(new.Psi_f), mu * (1 - math.exp(-0.1)), rtol=1e-6)
    assert Delta > 0 and np.all(np.isfinite(mixed))


# -- simulated behaviour ---------------------------------------------------------------

def test_trajectory_is_bounded(run):
    cfg, tr = run("reactor-digester")
    assert np.all(np.isfinite(tr.raw))
    assert np.all(tr.plant >= 0) and tr.plant.max() < 100


def test_mass_balance_of_phi(run):
    cfg, tr = run("reactor-digester")
    h = cfg.step
    phi = tr.plant[:, 2:4] - tr.plant[:, 0:2] @ (RP.K_x @ RP.K_y_pinv).T
    dphi = (-phi[4:] + 8 * phi[3:-1] - 8 * phi[1:-3] + phi[:-4]) / (12 * h)
    res = dphi + RP.u * phi[2:-2] - RP.B
    assert np.max(np.abs(res)) < 1e-8


def test_fundamental_matrix_is_scalar_exponential(run):
    cfg, tr = run("reactor-digester")
    k = int(np.searchsorted(tr.times, 10.0))
    assert tr.times[k] == 10.0
    Phi = tr.raw[k, 6:10].reshape(2, 2)
    assert np.max(np.abs(Phi - math.exp(-1.0) * np.eye(2))) < 1e-9


def test_settled_regression_identity(run):
    cfg, tr = run("reactor-digester")
    theta = tr.theta[0]
    worst = 0.0
    for k in np.flatnonzero(tr.times >= 10.0 / cfg.lam)[::25]:
        z = tr.raw[k]
        Y = rx.regression_output(z[10:14].reshape(2, 2), z[14:16], z[16:18], RP.K_y_pinv @ z[0:2], cfg.lam)
        mixed, Delta = rx.regression_mix(z[10:14].reshape(2, 2), Y)
        worst = max(worst, np.max(np.abs(mixed - Delta * theta)))
    assert worst < 1e-4 * (1 + np.linalg.norm(theta))


def test_foliation_and_gram(run):
    from gpebo.checks import foliation_residual
    cfg, tr = run("reactor-digester")
    assert foliation_residual(tr, cfg) < 1e-6
    Pf = tr.raw[:, 10:14].reshape(-1, 2, 2)
    G = np.einsum("kji,kjl->kil", Pf, Pf)
    assert np.array_equal(G, np.swapaxes(G, 1, 2))
    assert np.all(tr.Delta >= 0.0)


def test_excitation_fades(run):
    cfg, tr = run("reactor-digester")
    peak = tr.Delta.max()
    last_rise = np.flatnonzero(np.diff(tr.Delta) > 0)[-1]
    # Delta decreases monotonically over the final 95% of the run and ends far below its peak
    assert tr.times[last_rise] < 0.05 * cfg.t_final
    assert tr.Delta[-1] < 1e-12 * peak
    assert np.all(np.diff(tr.excitation_integral) >= 0)


def test_open_loop_observer_keeps_estimate_frozen(run):
    cfg, tr = run("reactor-digester", variant="olo")
    assert cfg.gamma == 0.0
    np.testing.assert_array_equal(tr.theta_hat, tr.theta_hat[:1].repeat(tr.n_rows, axis=0))
    err = np.linalg.norm(tr.error, axis=1)
    # the open-loop error is Phi theta_tilde = exp(-u t) theta_tilde
    np.testing.assert_allclose(err[-1], err[0] * math.exp(-DP.u * cfg.t_final), rtol=1e-6)
