"""Generalized parameter-estimation-based observer.

The plant is described by a :class:`PlantMaps` bundle. The observer runs a
copy of the plant in the ``phi`` coordinates, propagates the fundamental
matrix of the associated LTV error system, builds a scalar regression for
the unknown initial error ``theta`` by dynamic regressor extension and
mixing, and estimates ``theta`` with a gradient law.

State vectors are packed as ``[xi, Phi, Y, Omega, theta_hat, w, I]`` where
``I`` is the running integral of ``Delta**2``; the same layout is used by the
compiled co-simulation kernels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Any, Callable, Literal, Optional

import numpy as np

from .numerics import DimensionError, adjugate, determinant, rk4_step

Mode = Literal["asymptotic", "fct", "olo"]


@dataclass(frozen=True)
class PlantMaps:
    """Mappings that make a plant GPEBO-compatible.

    ``Lambda``, ``B``, ``L`` and ``C`` take the measured ``(u, y)``; ``phi``
    takes the plant state and ``phi_left_inverse`` takes ``(w, y)``. ``L`` and
    ``C`` may be ``None`` when the regression is built elsewhere (the reactor).
    """

    n: int
    Lambda: Callable[[Any, Any], np.ndarray]
    B: Callable[[Any, Any], np.ndarray]
    phi: Callable[[np.ndarray], np.ndarray]
    phi_left_inverse: Callable[[np.ndarray, Any], np.ndarray]
    L: Optional[Callable[[Any, Any], np.ndarray]] = None
    C: Optional[Callable[[Any, Any], np.ndarray]] = None


@dataclass(frozen=True)
class ObserverConfig:
    lam: float = 1.0
    gamma: float = 1.0
    mu: float = 0.1
    mode: Mode = "asymptotic"
    # "psi": Omega filters Psi^T Psi, so that Y = Omega theta;
    # "phi": Omega filters Phi Phi^T as printed in the original dynamics.
    omega_regressor: Literal["psi", "phi"] = "psi"

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if self.mode == "olo":
            object.__setattr__(self, "gamma", 0.0)
        elif not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not 0.0 < self.mu < 1.0:
            raise ValueError(f"mu must lie in (0, 1), got {self.mu}")
        if self.mode not in ("asymptotic", "fct", "olo"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.omega_regressor not in ("psi", "phi"):
            raise ValueError(f"unknown omega_regressor {self.omega_regressor!r}")

    @property
    def excitation_threshold(self) -> float:
        """``-ln(1 - mu) / gamma``; infinite when ``gamma == 0``."""
        if self.gamma == 0:
            return math.inf
        return -math.log1p(-self.mu) / self.gamma


@dataclass(frozen=True)
class ObserverState:
    xi: np.ndarray
    Phi: np.ndarray
    Y: np.ndarray
    Omega: np.ndarray
    theta_hat: np.ndarray
    theta_hat0: np.ndarray
    w: float = 1.0
    excitation_integral: float = 0.0
    t: float = 0.0
    t_c: Optional[float] = None

    @property
    def n(self) -> int:
        return self.xi.shape[0]


@dataclass(frozen=True)
class DremSnapshot:
    Psi: np.ndarray
    mixed_output: np.ndarray
    Delta: float


def packed_size(n: int) -> int:
    return 2 * n * n + 3 * n + 2


def pack(s: ObserverState) -> np.ndarray:
    return np.concatenate([s.xi, s.Phi.ravel(), s.Y, s.Omega.ravel(), s.theta_hat,
                           [s.w, s.excitation_integral]])


def unpack(v: np.ndarray, n: int) -> dict:
    """Split a packed vector into named views (no copies)."""
    if v.shape != (packed_size(n),):
        raise DimensionError(f"packed observer vector has shape {v.shape}, expected ({packed_size(n)},)")
    i = 0
    out = {}
    for name, size, shape in (("xi", n, (n,)), ("Phi", n * n, (n, n)), ("Y", n, (n,)),
                              ("Omega", n * n, (n, n)), ("theta_hat", n, (n,))):
        out[name] = v[i:i + size].reshape(shape)
        i += size
    out["w"] = v[i]
    out["excitation_integral"] = v[i + 1]
    return out


def _vector(x, n: int, what: str) -> np.ndarray:
    x = np.array(x, dtype=float).reshape(-1)
    if x.shape != (n,):
        raise DimensionError(f"{what} has {x.size} components, expected {n}")
    return x


def observer_init(maps: PlantMaps, cfg: ObserverConfig, xi0, theta_hat0, t0: float = 0.0) -> ObserverState:
    n = maps.n
    xi0 = _vector(xi0, n, "xi0")
    theta_hat0 = _vector(theta_hat0, n, "theta_hat0")
    return ObserverState(
        xi=xi0, Phi=np.eye(n), Y=np.zeros(n), Omega=np.zeros((n, n)),
        theta_hat=theta_hat0.copy(), theta_hat0=theta_hat0.copy(),
        w=1.0, excitation_integral=0.0, t=t0, t_c=None,
    )


# -- building blocks shared with the system-specific observers --------------

def copy_system_rhs(xi, Phi, Lam, B):
    """Derivatives of the plant copy and of the fundamental matrix."""
    return Lam @ xi + B, Lam @ Phi


def kreisselmeier_rhs(Y, Omega, Psi, Phi, residual, lam, omega_regressor="psi"):
    """Filtered regression: ``Y' = -lam Y + lam Psi^T r``, ``Omega' = -lam Omega + lam G``."""
    gram = Psi.T @ Psi if omega_regressor == "psi" else Phi @ Phi.T
    return lam * (Psi.T @ residual - Y), lam * (gram - Omega)


def mix(Omega, Y):
    """DREM mixing: ``(adj(Omega) Y, det(Omega))``."""
    return adjugate(Omega) @ Y, determinant(Omega)


def estimator_rhs(theta_hat, w, Delta, mixed, gamma):
    """Gradient law, FCT weight and excitation integral derivatives."""
    return -gamma * Delta * (Delta * theta_hat - mixed), -gamma * Delta * Delta * w, Delta * Delta


# ---------------------------------------------------------------------------

def observer_rhs(v: np.ndarray, maps: PlantMaps, cfg: ObserverConfig, u, y) -> np.ndarray:
    """Time derivative of a packed observer vector for measurements ``(u, y)``."""
    n = maps.n
    s = unpack(v, n)
    Lam = maps.Lambda(u, y)
    B = maps.B(u, y)
    L = maps.L(u, y)
    C = maps.C(u, y)
    dxi, dPhi = copy_system_rhs(s["xi"], s["Phi"], Lam, B)
    Psi = L @ s["Phi"]
    dY, dOmega = kreisselmeier_rhs(s["Y"], s["Omega"], Psi, s["Phi"], C - L @ s["xi"],
                                   cfg.lam, cfg.omega_regressor)
    mixed, Delta = mix(s["Omega"], s["Y"])
    dth, dw, dI = estimator_rhs(s["theta_hat"], s["w"], Delta, mixed, cfg.gamma)
    return np.concatenate([dxi, dPhi.ravel(), dY, dOmega.ravel(), dth, [dw, dI]])


def _with_vector(s: ObserverState, v: np.ndarray, t: float, threshold: float) -> ObserverState:
    p = unpack(v, s.n)
    I = float(p["excitation_integral"])
    t_c = s.t_c
    if t_c is None and I >= threshold:
        t_c = t
    return replace(s, xi=p["xi"].copy(), Phi=p["Phi"].copy(), Y=p["Y"].copy(),
                   Omega=p["Omega"].copy(), theta_hat=p["theta_hat"].copy(),
                   w=float(p["w"]), excitation_integral=I, t=t, t_c=t_c)


def observer_step(s: ObserverState, maps: PlantMaps, cfg: ObserverConfig, u, y, h: float) -> ObserverState:
    """One RK4 step with ``(u, y)`` held over the step.

    Co-simulation (see :mod:`gpebo.kernels`) integrates plant and observer
    jointly instead, which keeps the foliation identity exact to rounding.
    """
    v = rk4_step(lambda t, x: observer_rhs(x, maps, cfg, u, y), s.t, pack(s), h)
    return _with_vector(s, v, s.t + h, cfg.excitation_threshold)


def drem_snapshot(s: ObserverState, maps: PlantMaps, u, y) -> DremSnapshot:
    Psi = maps.L(u, y) @ s.Phi
    mixed, Delta = mix(s.Omega, s.Y)
    return DremSnapshot(Psi=Psi, mixed_output=mixed, Delta=Delta)


def estimate_state(s: ObserverState, maps: PlantMaps, y) -> np.ndarray:
    return np.asarray(maps.phi_left_inverse(s.xi + s.Phi @ s.theta_hat, y), dtype=float)


def clipped_weight(w, mu: float):
    """``w`` where ``w < 1 - mu``, otherwise ``1 - mu``."""
    return np.where(np.asarray(w) < 1.0 - mu, w, 1.0 - mu)


def fct_parameter(theta_hat, theta_hat0, w, mu: float):
    """``(theta_hat - w_c theta_hat0) / (1 - w_c)``; exact once excitation suffices.

    Broadcasts over a leading time axis when ``theta_hat`` and ``w`` are series.
    """
    wc = np.asarray(clipped_weight(w, mu), dtype=float)
    if np.ndim(theta_hat) > 1:
        wc = wc[:, None]
    return (np.asarray(theta_hat) - wc * np.asarray(theta_hat0)) / (1.0 - wc)


def estimate_state_fct(s: ObserverState, maps: PlantMaps, cfg: ObserverConfig, y) -> np.ndarray:
    theta = fct_parameter(s.theta_hat, s.theta_hat0, s.w, cfg.mu)
    return np.asarray(maps.phi_left_inverse(s.xi + s.Phi @ theta, y), dtype=float)


def excitation_satisfied(s: ObserverState, cfg: ObserverConfig) -> tuple[bool, Optional[float]]:
    """Whether the accumulated excitation has crossed ``-ln(1 - mu)/gamma``.

    Returns the flag and the first grid time at which it crossed.
    """
    ok = s.excitation_integral >= cfg.excitation_threshold
    return ok, (s.t_c if ok else None)


def crossing_time(times: np.ndarray, integral: np.ndarray, cfg: ObserverConfig) -> Optional[float]:
    """First grid time where a recorded excitation integral reaches the threshold."""
    hit = np.flatnonzero(np.asarray(integral) >= cfg.excitation_threshold)
    return float(times[hit[0]]) if hit.size else None
