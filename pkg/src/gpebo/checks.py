"""Invariant checks evaluated on a finished trajectory (``--check``).

:func:`run_checks` gathers pass/fail flags by name; the ``*_residual``
helpers expose the underlying numbers for reporting and tests.
"""
from __future__ import annotations

import math

import numpy as np

from .config import ScenarioConfig
from .observer import fct_parameter
from .systems import power

TOL_FOLIATION = 1e-6
TOL_PEBO = 1e-9
TOL_W = 1e-9
TOL_KERNEL = 1e-10
TOL_SPEED = 1e-6
TOL_FCT_THETA = 1e-8
TOL_FCT_STATE = 1e-6


def _within_segments(traj, series):
    """Differences of ``series`` between consecutive rows of the same arming segment."""
    d = np.diff(series, axis=0)
    same = traj.armed_at[1:] == traj.armed_at[:-1]
    return d[same]


def foliation_residual(traj, cfg: ScenarioConfig) -> float:
    """``max |phi(x) - xi - Phi theta|`` over the run."""
    Z = traj.raw
    if cfg.system == "academic":
        return float(np.max(np.abs(Z[:, 1] - Z[:, 2] - traj.theta[:, 0])))
    if cfg.system == "power":
        n = traj.theta.shape[1]
        E, xi = Z[:, 2 * n:3 * n], Z[:, 4 * n:5 * n]
        Phi = Z[:, 5 * n:5 * n + n * n].reshape(-1, n, n)
        return float(np.max(np.abs(E - xi - np.einsum("kij,kj->ki", Phi, traj.theta))))
    y, x, xi = Z[:, 0:2], Z[:, 2:4], Z[:, 4:6]
    Phi = Z[:, 6:10].reshape(-1, 2, 2)
    phi = np.empty_like(x)
    for k0, k1, (_, rp) in traj.segments:
        rows = slice(k0, k1 + 1)
        phi[rows] = x[rows] - y[rows] @ (rp.K_x @ rp.K_y_pinv).T
    return float(np.max(np.abs(phi - xi - np.einsum("kij,kj->ki", Phi, traj.theta))))


def w_residual(traj, cfg: ScenarioConfig) -> float:
    return float(np.max(np.abs(traj.w - np.exp(-cfg.gamma * traj.excitation_integral))))


def regressor_kernel_residual(traj) -> float:
    """``max |L E|`` on the power system."""
    n = traj.theta.shape[1]
    Z = traj.raw
    worst = 0.0
    for k0, k1, (gens, net) in traj.segments:
        rows = slice(k0, k1 + 1)
        delta, E = Z[rows, :n], Z[rows, 2 * n:3 * n]
        S, T, Pe, Qe = power.electrical_series(delta, E, gens, net)
        L = Pe[:, :, None] * T - Qe[:, :, None] * S
        worst = max(worst, float(np.max(np.abs(np.einsum("kij,kj->ki", L, E)))))
    return worst


def power_identity_residual(traj) -> float:
    """``max |P_e I_d - Q_e I_q|``."""
    n = traj.theta.shape[1]
    Z = traj.raw
    worst = 0.0
    for k0, k1, (gens, net) in traj.segments:
        rows = slice(k0, k1 + 1)
        delta, E = Z[rows, :n], Z[rows, 2 * n:3 * n]
        S, T, Pe, Qe = power.electrical_series(delta, E, gens, net)
        Iq = np.einsum("kij,kj->ki", S, E)
        Id = np.einsum("kij,kj->ki", T, E)
        worst = max(worst, float(np.max(np.abs(Pe * Id - Qe * Iq))))
    return worst


def speed_residual(traj) -> float:
    """Speed-observer error against ``e(t_s) exp(-(D + k)(t - t_s))`` per parameter segment."""
    n = traj.theta.shape[1]
    err = traj.error[:, :n]
    worst = 0.0
    for k0, k1, (gens, _) in traj.segments:
        rate = power.stack(gens, "D") + power.stack(gens, "k_omega")
        t = traj.times[k0:k1 + 1] - traj.times[k0]
        model = err[k0] * np.exp(-np.outer(t, rate))
        worst = max(worst, float(np.max(np.abs(err[k0:k1 + 1] - model))))
    return worst


def fct_residuals(traj, cfg: ScenarioConfig):
    """``(theta mismatch, state mismatch)`` after each segment's threshold crossing, or ``None``."""
    if cfg.gamma == 0:
        return None
    thr = -math.log1p(-cfg.mu) / cfg.gamma
    th_fct = fct_parameter(traj.theta_hat, traj.theta_hat0, traj.w, cfg.mu)
    n = traj.theta.shape[1]
    Z = traj.raw
    E, xi = Z[:, 2 * n:3 * n], Z[:, 4 * n:5 * n]
    Phi = Z[:, 5 * n:5 * n + n * n].reshape(-1, n, n)
    after = traj.excitation_integral >= thr
    if not after.any():
        return None
    e_theta = float(np.max(np.abs(th_fct[after] - traj.theta[after])))
    x_hat = xi + np.einsum("kij,kj->ki", Phi, th_fct)
    e_state = float(np.max(np.abs(x_hat[after] - E[after])))
    return e_theta, e_state


def run_checks(traj, cfg: ScenarioConfig) -> dict:
    out = {
        "finite": bool(np.all(np.isfinite(traj.raw))),
        "w_consistency": w_residual(traj, cfg) < TOL_W,
        # w may underflow to 0 for very large gains, hence >= rather than >
        "w_nonincreasing": bool(np.all(_within_segments(traj, traj.w) <= 0.0)
                                and np.all((traj.w >= 0.0) & (traj.w <= 1.0))),
        "excitation_nondecreasing": bool(np.all(_within_segments(traj, traj.excitation_integral) >= 0.0)),
    }
    fol = foliation_residual(traj, cfg)
    if cfg.system == "academic":
        out["pebo_identity"] = fol < TOL_PEBO
        Om = traj.raw[:, 8:17].reshape(-1, 3, 3)
        out["omega_symmetric"] = bool(np.array_equal(Om, np.swapaxes(Om, 1, 2)))
        eig = np.linalg.eigvalsh(Om)
        scale = np.maximum(1.0, np.abs(eig).max(axis=1))
        out["omega_psd"] = bool(np.all(eig.min(axis=1) >= -1e-12 * scale))
    else:
        out["foliation"] = fol < TOL_FOLIATION
    if cfg.system == "power":
        out["regressor_kernel"] = regressor_kernel_residual(traj) < TOL_KERNEL
        out["power_identity"] = power_identity_residual(traj) < TOL_KERNEL
        out["speed_observer"] = speed_residual(traj) < TOL_SPEED
        if cfg.mode == "fct":
            r = fct_residuals(traj, cfg)
            out["fct_exact"] = r is None or (r[0] < TOL_FCT_THETA and r[1] < TOL_FCT_STATE)
    if cfg.system == "reactor":
        out["delta_nonnegative"] = bool(np.all(traj.Delta >= 0.0))
    return out


def scan_warnings(traj, cfg: ScenarioConfig) -> list:
    notes = []
    if cfg.system == "reactor":
        neg = np.flatnonzero(np.any(traj.plant < 0, axis=1))
        if neg.size:
            notes.append(f"negative concentration first at t={traj.times[neg[0]]:.17g}")
    return notes
