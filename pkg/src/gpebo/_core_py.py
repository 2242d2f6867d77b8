"""Pure-Python co-simulation kernels.

Same signatures and state layouts as the compiled ``_core`` extension; built
on the reference implementations in :mod:`gpebo.observer` and
:mod:`gpebo.systems`, so it doubles as the oracle the compiled path is
checked against.
"""
from __future__ import annotations

import numpy as np

from .numerics import rk4_step
from .observer import ObserverConfig
from .systems import academic, power, reactor

ACADEMIC_SIZE = 2 + academic.OBSERVER_SIZE


def _run(field, z0, t0, h, n_steps):
    z0 = np.array(z0, dtype=float)
    out = np.empty((int(n_steps) + 1, z0.size))
    out[0] = z0
    # rk4_step raises IntegrationError on non-finite values; numpy's own warning is redundant
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(int(n_steps)):
            out[k + 1] = rk4_step(field, t0 + k * h, out[k], h)
    return out


def simulate_academic(z0, lam, gamma, h, n_steps, t0=0.0):
    lam = float(lam)
    gamma = float(gamma)
    return _run(lambda t, z: academic.cosim_rhs(z, lam, gamma), z0, t0, h, n_steps)


def _observer_config(lam, gamma, omega_variant):
    return ObserverConfig(lam=float(lam), gamma=float(gamma) if gamma > 0 else 1.0,
                          mode="asymptotic" if gamma > 0 else "olo",
                          omega_regressor="phi" if omega_variant else "psi")


def simulate_power(z0, a, b, D, P, G, Bm, u, kw, Y, alpha, lam, gamma, omega_variant, h, n_steps, t0=0.0):
    n = len(a)
    gens = [power.GeneratorParams(a=a[i], b=b[i], D=D[i], P=P[i], G_m=G[i], B_m=Bm[i],
                                  E_f=u[i], nu=0.0, k_omega=kw[i]) for i in range(n)]
    net = power.NetworkParams(Y=np.asarray(Y, dtype=float).reshape(n, n),
                              alpha=np.asarray(alpha, dtype=float).reshape(n, n))
    cfg = _observer_config(lam, gamma, omega_variant)
    maps = power.voltage_plant_maps(gens, net)
    return _run(lambda t, z: power.cosim_rhs(z, gens, net, cfg, maps), z0, t0, h, n_steps)


def simulate_reactor(z0, K_y, K_x, chi_y, chi_x, u, kinetics, lam, gamma, h, n_steps, t0=0.0):
    """Digester co-simulation; ``kinetics = (mu_m1, K_S1, mu_m2, K_S2, K_I)``."""
    rp = reactor.ReactorParams(K_y=K_y, K_x=K_x, chi_y=chi_y, chi_x=chi_x, u=u)
    mu_m1, K_S1, mu_m2, K_S2, K_I = (float(k) for k in kinetics)

    def R(y):
        den1 = K_S1 + y[0]
        den2 = K_S2 + y[1] + K_I * y[1] * y[1]
        if den1 <= 0 or den2 <= 0:
            raise ValueError(f"growth-rate denominator not positive at y=({y[0]}, {y[1]})")
        return np.array([[mu_m1 * y[0] / den1, 0.0], [0.0, mu_m2 * y[1] / den2]])

    lam = float(lam)
    gamma = float(gamma)
    return _run(lambda t, z: reactor.cosim_rhs(z, rp, R, lam, gamma), z0, t0, h, n_steps)
