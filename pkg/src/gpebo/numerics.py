"""Fixed-step integration and the small linear-algebra kernel.

Everything here is deterministic: the same inputs produce bit-identical
outputs, which the scenario runner relies on for reproducible traces.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

Field = Callable[[float, np.ndarray], np.ndarray]


class DimensionError(ValueError):
    """Raised when array shapes do not agree with an operation's contract."""


class IntegrationError(ArithmeticError):
    """A vector field produced a non-finite value during integration."""

    def __init__(self, t: float, index: int, message: str = "non-finite field value"):
        self.t = float(t)
        self.index = int(index)
        super().__init__(f"{message} at t={self.t:.17g}, component {self.index}")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid from ``t0`` to ``t_final`` with nominal step ``h``.

    The step actually used is ``(t_final - t0) / n_steps``, so the last grid
    point is ``t_final`` exactly even when ``h`` does not divide the span.
    """

    t0: float
    t_final: float
    h: float

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"step must be positive, got h={self.h}")
        if not self.t_final > self.t0:
            raise ValueError(f"t_final ({self.t_final}) must exceed t0 ({self.t0})")
        if self.n_steps < 1:
            raise ValueError(f"span {self.t_final - self.t0} is shorter than half a step h={self.h}")

    @property
    def n_steps(self) -> int:
        return int(round((self.t_final - self.t0) / self.h))

    @property
    def step(self) -> float:
        return (self.t_final - self.t0) / self.n_steps

    def times(self) -> np.ndarray:
        # t0 + k*step rather than cumulative sums, so there is no drift
        t = self.t0 + self.step * np.arange(self.n_steps + 1)
        t[-1] = self.t_final
        return t

    def index_of(self, t: float) -> int:
        return int(round((t - self.t0) / self.step))


def _check_finite(k: np.ndarray, t: float) -> None:
    bad = np.flatnonzero(~np.isfinite(k))
    if bad.size:
        raise IntegrationError(t, bad[0])


def rk4_step(field: Field, t: float, x: np.ndarray, h: float) -> np.ndarray:
    """One classical Runge-Kutta step of ``x' = field(t, x)``."""
    if not h > 0:
        raise ValueError(f"step must be positive, got h={h}")
    x = np.asarray(x, dtype=float)
    k1 = np.asarray(field(t, x), dtype=float)
    _check_finite(k1, t)
    k2 = np.asarray(field(t + 0.5 * h, x + 0.5 * h * k1), dtype=float)
    _check_finite(k2, t + 0.5 * h)
    k3 = np.asarray(field(t + 0.5 * h, x + 0.5 * h * k2), dtype=float)
    _check_finite(k3, t + 0.5 * h)
    k4 = np.asarray(field(t + h, x + h * k3), dtype=float)
    _check_finite(k4, t + h)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(field: Field, grid: TimeGrid, x0: np.ndarray) -> np.ndarray:
    """Integrate on ``grid``; returns an array of shape (n_steps + 1, len(x0))."""
    x0 = np.asarray(x0, dtype=float)
    out = np.empty((grid.n_steps + 1,) + x0.shape)
    out[0] = x0
    h = grid.step
    for k in range(grid.n_steps):
        out[k + 1] = rk4_step(field, grid.t0 + k * h, out[k], h)
    return out


@dataclass(frozen=True)
class FirstOrderFilterState:
    """State of the low-pass ``lam/(p + lam)`` realised as ``z' = -lam z + lam v``."""

    z: np.ndarray
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"filter gain must be positive, got {self.lam}")
        object.__setattr__(self, "z", np.array(self.z, dtype=float))


def filter_step(f: FirstOrderFilterState, v, h: float, v_next=None) -> FirstOrderFilterState:
    """Advance the filter one RK4 step.

    ``v`` is held constant over the step unless ``v_next`` (the input at the
    end of the step) is given, in which case it is interpolated linearly.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != f.z.shape:
        raise DimensionError(f"input shape {v.shape} does not match filter state {f.z.shape}")
    if v_next is None:
        def field(t, z):
            return f.lam * (v - z)
    else:
        v_next = np.asarray(v_next, dtype=float)
        if v_next.shape != f.z.shape:
            raise DimensionError(f"input shape {v_next.shape} does not match filter state {f.z.shape}")
        slope = (v_next - v) / h

        def field(t, z):
            return f.lam * (v + slope * t - z)
    return replace(f, z=rk4_step(field, 0.0, f.z, h))


def filtered_derivative_output(f: FirstOrderFilterState, v) -> np.ndarray:
    """``lam p/(p + lam)[v]`` computed as ``lam (v - z)`` with ``z = lam/(p + lam)[v]``."""
    v = np.asarray(v, dtype=float)
    if v.shape != f.z.shape:
        raise DimensionError(f"input shape {v.shape} does not match filter state {f.z.shape}")
    return f.lam * (v - f.z)


def _square(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] == 0:
        raise DimensionError(f"expected a non-empty square matrix, got shape {M.shape}")
    return M


def _det_small(M: np.ndarray) -> float:
    n = M.shape[0]
    if n == 1:
        return M[0, 0]
    if n == 2:
        return M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    if n == 3:
        return (M[0, 0] * (M[1, 1] * M[2, 2] - M[1, 2] * M[2, 1])
                - M[0, 1] * (M[1, 0] * M[2, 2] - M[1, 2] * M[2, 0])
                + M[0, 2] * (M[1, 0] * M[2, 1] - M[1, 1] * M[2, 0]))
    # Laplace expansion along the first row
    total = 0.0
    for j in range(n):
        minor = np.delete(M[1:], j, axis=1)
        total += (-1.0) ** j * M[0, j] * _det_small(minor)
    return total


def determinant(M) -> float:
    """Cofactor expansion for n <= 4, LU (LAPACK) beyond."""
    M = _square(M)
    if M.shape[0] <= 4:
        return float(_det_small(M))
    return float(np.linalg.det(M))


def determinant_series(Ms) -> np.ndarray:
    """Determinants of a stack ``(K, n, n)`` with the same cofactor formulas as :func:`determinant`."""
    Ms = np.asarray(Ms, dtype=float)
    if Ms.ndim != 3 or Ms.shape[1] != Ms.shape[2]:
        raise DimensionError(f"expected a stack of square matrices, got shape {Ms.shape}")
    n = Ms.shape[1]
    if n > 4:
        return np.linalg.det(Ms)
    return np.asarray(_det_small(np.moveaxis(Ms, 0, -1)), dtype=float).reshape(Ms.shape[0])


def adjugate(M) -> np.ndarray:
    """Transpose of the cofactor matrix.

    Built from minors, so ``adjugate(M) @ M == det(M) * I`` holds for singular
    ``M`` as well. The 1x1 adjugate is ``[[1]]``.
    """
    M = _square(M)
    n = M.shape[0]
    if n == 1:
        return np.ones((1, 1))
    if n == 2:
        return np.array([[M[1, 1], -M[0, 1]], [-M[1, 0], M[0, 0]]])
    adj = np.empty((n, n))
    for i in range(n):
        rows = np.delete(M, i, axis=0)
        for j in range(n):
            minor = np.delete(rows, j, axis=1)
            adj[j, i] = (-1.0) ** (i + j) * determinant(minor)
    return adj
