"""Cubic oscillator ``x1' = x2**3, x2' = -x1, y = x1`` with a PEBO+DREM observer.

The copy ``xi' = -y`` gives ``x2 = xi + theta``. Expanding ``(xi + theta)**3``
makes the filtered output linear in ``Theta = (theta, theta**2, theta**3)``;
DREM mixing then yields a scalar regression for ``theta`` alone.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..numerics import adjugate, determinant, rk4_step
from ..observer import estimator_rhs

# packed layout: [xi, phi(3), z_y, z_cube, Omega(9), q(3), theta_hat, w, I]
OBSERVER_SIZE = 21


def academic_plant_field(x) -> np.ndarray:
    x1, x2 = x
    return np.array([x2 ** 3, -x1])


@dataclass(frozen=True)
class AcademicObserverState:
    xi: float = 0.0
    phi: np.ndarray = None  # filtered (3 xi^2, 3 xi, unit step)
    z_y: float = 0.0        # lam/(p+lam)[y]
    z_cube: float = 0.0     # lam/(p+lam)[xi^3]
    Omega: np.ndarray = None
    q: np.ndarray = None    # lam/(p+lam)[phi Y]
    theta_hat: float = 0.0
    w: float = 1.0
    excitation_integral: float = 0.0

    def __post_init__(self):
        for name, shape in (("phi", (3,)), ("Omega", (3, 3)), ("q", (3,))):
            val = getattr(self, name)
            object.__setattr__(self, name, np.zeros(shape) if val is None else np.array(val, dtype=float).reshape(shape))

    def pack(self) -> np.ndarray:
        return np.concatenate([[self.xi], self.phi, [self.z_y, self.z_cube], self.Omega.ravel(),
                               self.q, [self.theta_hat, self.w, self.excitation_integral]])

    @classmethod
    def unpack(cls, v) -> "AcademicObserverState":
        v = np.asarray(v, dtype=float)
        return cls(xi=v[0], phi=v[1:4], z_y=v[4], z_cube=v[5], Omega=v[6:15], q=v[15:18],
                   theta_hat=v[18], w=v[19], excitation_integral=v[20])


def academic_observer_init(xi0: float = 0.0, theta_hat0: float = 0.0) -> AcademicObserverState:
    return AcademicObserverState(xi=float(xi0), theta_hat=float(theta_hat0))


def filtered_output(v, y, lam):
    """``Y = lam p/(p+lam)[y] - lam/(p+lam)[xi^3]`` from a packed vector."""
    return lam * (y - v[4]) - v[5]


def academic_mix(v):
    """``(adj(Omega) q, det(Omega))`` from a packed vector."""
    Omega = v[6:15].reshape(3, 3)
    return adjugate(Omega) @ v[15:18], determinant(Omega)


def academic_observer_rhs(v, y, lam, gamma) -> np.ndarray:
    xi = v[0]
    phi = v[1:4]
    Omega = v[6:15].reshape(3, 3)
    Y = filtered_output(v, y, lam)
    mixed, Delta = academic_mix(v)
    dth, dw, dI = estimator_rhs(v[18], v[19], Delta, mixed[0], gamma)
    return np.concatenate([
        [-y],
        lam * (np.array([3.0 * xi * xi, 3.0 * xi, 1.0]) - phi),
        [lam * (y - v[4]), lam * (xi ** 3 - v[5])],
        (lam * (np.outer(phi, phi) - Omega)).ravel(),
        lam * (phi * Y - v[15:18]),
        [dth, dw, dI],
    ])


def academic_observer_step(s: AcademicObserverState, y, h, lam, gamma) -> AcademicObserverState:
    """One RK4 step with ``y`` held over the step."""
    v = rk4_step(lambda t, x: academic_observer_rhs(x, y, lam, gamma), 0.0, s.pack(), h)
    return AcademicObserverState.unpack(v)


def academic_estimate(s: AcademicObserverState) -> float:
    return s.xi + s.theta_hat


def cosim_rhs(z, lam, gamma) -> np.ndarray:
    """Plant and observer together: ``z = [x1, x2, observer...]``."""
    return np.concatenate([academic_plant_field(z[:2]), academic_observer_rhs(z[2:], z[0], lam, gamma)])


def initial_vector(x0, xi0=0.0, theta_hat0=0.0) -> np.ndarray:
    return np.concatenate([np.asarray(x0, dtype=float), academic_observer_init(xi0, theta_hat0).pack()])
