"""Reaction systems ``y' = -u y + K_y r + chi_y``, ``x' = -u x + K_x r + chi_x``.

``y`` is measured and ``x`` is not. The coordinates ``phi = x - K_x K_y^+ y``
cancel the reaction terms, giving ``phi' = -u phi + B``. When the rates are
linear in the hidden states, ``r = R(y) x``, the measured partial coordinate
``y^+ = K_y^+ y`` yields a linear regression in ``theta = phi(0) - xi(0)``,
which DREM reduces to ``mixed = Delta * theta``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..numerics import DimensionError, adjugate, determinant, rk4_step
from ..observer import PlantMaps, copy_system_rhs, estimator_rhs

RateBuilder = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ReactorParams:
    K_y: np.ndarray
    K_x: np.ndarray
    chi_y: np.ndarray
    chi_x: np.ndarray
    u: float

    def __post_init__(self):
        K_y = np.atleast_2d(np.array(self.K_y, dtype=float))
        K_x = np.atleast_2d(np.array(self.K_x, dtype=float))
        p, q = K_y.shape
        if K_x.shape[1] != q:
            raise DimensionError(f"K_x has {K_x.shape[1]} reaction columns, K_y has {q}")
        if p < q or np.linalg.matrix_rank(K_y) != q:
            raise ValueError("K_y must have full column rank (rank q <= p)")
        chi_y = np.array(self.chi_y, dtype=float).reshape(p)
        chi_x = np.array(self.chi_x, dtype=float).reshape(K_x.shape[0])
        object.__setattr__(self, "K_y", K_y)
        object.__setattr__(self, "K_x", K_x)
        object.__setattr__(self, "chi_y", chi_y)
        object.__setattr__(self, "chi_x", chi_x)
        object.__setattr__(self, "u", float(self.u))
        object.__setattr__(self, "_pinv", np.linalg.solve(K_y.T @ K_y, K_y.T))

    @property
    def p(self) -> int:
        return self.K_y.shape[0]

    @property
    def q(self) -> int:
        return self.K_y.shape[1]

    @property
    def d(self) -> int:
        return self.K_x.shape[0]

    @property
    def K_y_pinv(self) -> np.ndarray:
        """``(K_y^T K_y)^{-1} K_y^T``."""
        return self._pinv

    @property
    def B(self) -> np.ndarray:
        return -self.K_x @ self._pinv @ self.chi_y + self.chi_x


@dataclass(frozen=True)
class DigesterParams:
    """Two-step anaerobic digestion model; time in days."""

    k1: float = 268.0
    k3: float = 42.14
    k4: float = 116.5
    mu_m1: float = 1.2
    mu_m2: float = 0.74
    K_S1: float = 8.85
    K_S2: float = 23.2
    K_I: float = 0.0039
    s10: float = 1.0
    s20: float = 1.0
    u: float = 0.1

    def __post_init__(self):
        for f in self.__dataclass_fields__:
            if not getattr(self, f) > 0:
                raise ValueError(f"digester parameter {f} must be positive")


def digester_reactor_params(dp: DigesterParams) -> ReactorParams:
    return ReactorParams(
        K_y=[[-dp.k3, 0.0], [dp.k4, -dp.k1]],
        K_x=np.eye(2),
        chi_y=[dp.u * dp.s10, dp.u * dp.s20],
        chi_x=[0.0, 0.0],
        u=dp.u,
    )


def growth_rates(y, dp: DigesterParams):
    """Monod rate for the acidogens, Haldane rate for the methanogens."""
    y1, y2 = float(y[0]), float(y[1])
    den1 = dp.K_S1 + y1
    den2 = dp.K_S2 + y2 + dp.K_I * y2 * y2
    if den1 <= 0 or den2 <= 0:
        raise ValueError(f"growth-rate denominator not positive at y=({y1}, {y2})")
    return dp.mu_m1 * y1 / den1, dp.mu_m2 * y2 / den2


def rate_matrix(y, dp: DigesterParams) -> np.ndarray:
    mu1, mu2 = growth_rates(y, dp)
    return np.array([[mu1, 0.0], [0.0, mu2]])


@dataclass(frozen=True)
class ReactorState:
    y: np.ndarray
    x: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.y, self.x])


def reactor_field(state: ReactorState, rp: ReactorParams, R: RateBuilder) -> ReactorState:
    r = R(state.y) @ state.x
    return ReactorState(y=-rp.u * state.y + rp.K_y @ r + rp.chi_y,
                        x=-rp.u * state.x + rp.K_x @ r + rp.chi_x)


def check_nonnegative(state: ReactorState, t: float) -> None:
    if np.any(state.y < 0) or np.any(state.x < 0):
        warnings.warn(f"negative concentration at t={t}: y={state.y}, x={state.x}", RuntimeWarning, stacklevel=2)


def reactor_plant_maps(rp: ReactorParams) -> PlantMaps:
    """``phi = x - K_x K_y^+ y``, ``Lambda = -u I``, ``B = -K_x K_y^+ chi_y + chi_x``.

    ``phi`` takes the stacked state ``(y, x)``; the inverse returns ``x``.
    """
    G = rp.K_x @ rp.K_y_pinv
    d, p = rp.d, rp.p
    B = rp.B
    eye = np.eye(d)
    return PlantMaps(
        n=d,
        Lambda=lambda u, y: -float(u) * eye,
        B=lambda u, y: B,
        phi=lambda c: np.asarray(c, dtype=float)[p:] - G @ np.asarray(c, dtype=float)[:p],
        phi_left_inverse=lambda w, y: np.asarray(w, dtype=float) + G @ np.asarray(y, dtype=float),
    )


# -- regression --------------------------------------------------------------

@dataclass(frozen=True)
class RegressionState:
    Psi_f: np.ndarray
    z_ydag: np.ndarray  # lam/(p+lam)[y^+]
    z_chi: np.ndarray   # lam/(p+lam)[chi_l]

    @classmethod
    def zeros(cls, q: int, d: int) -> "RegressionState":
        return cls(Psi_f=np.zeros((q, d)), z_ydag=np.zeros(q), z_chi=np.zeros(q))

    def pack(self) -> np.ndarray:
        return np.concatenate([self.Psi_f.ravel(), self.z_ydag, self.z_chi])


def measured_signals(y, xi, Phi, rp: ReactorParams, R: RateBuilder):
    """Return ``(y^+, chi_l, Psi)``."""
    y = np.asarray(y, dtype=float)
    ydag = rp.K_y_pinv @ y
    Ry = R(y)
    chi_l = -rp.u * ydag + rp.K_y_pinv @ rp.chi_y + Ry @ (xi + rp.K_x @ ydag)
    return ydag, chi_l, Ry @ Phi


def regression_rhs(Psi_f, z_ydag, z_chi, ydag, chi_l, Psi, lam):
    return lam * (Psi - Psi_f), lam * (ydag - z_ydag), lam * (chi_l - z_chi)


def regression_output(Psi_f, z_ydag, z_chi, ydag, lam):
    """``Y = lam p/(p+lam)[y^+] - lam/(p+lam)[chi_l]``."""
    return lam * (ydag - z_ydag) - z_chi


def regression_mix(Psi_f, Y):
    """``(adj(Psi_f^T Psi_f) Psi_f^T Y, det(Psi_f^T Psi_f))``."""
    M = Psi_f.T @ Psi_f
    return adjugate(M) @ (Psi_f.T @ Y), determinant(M)


def build_regression_step(s: RegressionState, xi, Phi, y, rp: ReactorParams, R: RateBuilder, lam, h):
    """Advance the regression filters one step (``y``, ``xi``, ``Phi`` held).

    Returns the new state with the mixed output and determinant it produces.
    """
    q, d = s.Psi_f.shape
    ydag, chi_l, Psi = measured_signals(y, xi, Phi, rp, R)

    def field(t, v):
        dP, dz, dc = regression_rhs(v[:q * d].reshape(q, d), v[q * d:q * d + q], v[q * d + q:],
                                    ydag, chi_l, Psi, lam)
        return np.concatenate([dP.ravel(), dz, dc])

    v = rk4_step(field, 0.0, s.pack(), h)
    new = RegressionState(Psi_f=v[:q * d].reshape(q, d), z_ydag=v[q * d:q * d + q], z_chi=v[q * d + q:])
    Y = regression_output(new.Psi_f, new.z_ydag, new.z_chi, ydag, lam)
    mixed, Delta = regression_mix(new.Psi_f, Y)
    return new, mixed, Delta


# -- co-simulation -----------------------------------------------------------

def cosim_size(rp: ReactorParams) -> int:
    p, q, d = rp.p, rp.q, rp.d
    return p + d + d + d * d + q * d + 2 * q + d + 2


def cosim_slices(rp: ReactorParams) -> dict:
    p, q, d = rp.p, rp.q, rp.d
    sizes = [("y", p), ("x", d), ("xi", d), ("Phi", d * d), ("Psi_f", q * d),
             ("z_ydag", q), ("z_chi", q), ("theta_hat", d), ("w", 1), ("I", 1)]
    out, i = {}, 0
    for name, size in sizes:
        out[name] = slice(i, i + size)
        i += size
    return out


def cosim_rhs(z, rp: ReactorParams, R: RateBuilder, lam, gamma) -> np.ndarray:
    sl = cosim_slices(rp)
    q, d = rp.q, rp.d
    y, x, xi = z[sl["y"]], z[sl["x"]], z[sl["xi"]]
    Phi = z[sl["Phi"]].reshape(d, d)
    Psi_f = z[sl["Psi_f"]].reshape(q, d)
    z_ydag, z_chi = z[sl["z_ydag"]], z[sl["z_chi"]]
    dplant = reactor_field(ReactorState(y, x), rp, R)
    dxi, dPhi = copy_system_rhs(xi, Phi, -rp.u * np.eye(d), rp.B)
    ydag, chi_l, Psi = measured_signals(y, xi, Phi, rp, R)
    dPf, dz, dc = regression_rhs(Psi_f, z_ydag, z_chi, ydag, chi_l, Psi, lam)
    Y = regression_output(Psi_f, z_ydag, z_chi, ydag, lam)
    mixed, Delta = regression_mix(Psi_f, Y)
    dth, dw, dI = estimator_rhs(z[sl["theta_hat"]], z[sl["w"]][0], Delta, mixed, gamma)
    return np.concatenate([dplant.y, dplant.x, dxi, dPhi.ravel(), dPf.ravel(), dz, dc, dth, [dw, dI]])


def initial_vector(rp: ReactorParams, y0, x0, xi0, theta_hat0) -> np.ndarray:
    d, q = rp.d, rp.q
    return np.concatenate([np.asarray(y0, float), np.asarray(x0, float), np.asarray(xi0, float),
                           np.eye(d).ravel(), np.zeros(q * d + 2 * q), np.asarray(theta_hat0, float),
                           [1.0, 0.0]])
