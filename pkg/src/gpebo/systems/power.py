"""Multimachine flux-decay power system and its voltage/speed observers.

Per generator ``i`` (reduced form, ``d_i`` absorbed into the constants)::

    delta_i' = omega_i
    omega_i' = -D_i omega_i + P_i - P_ei
    E_i'     = -a_i E_i + b_i sum_j Y_ij E_j cos(delta_ij + alpha_ij) + u_i

with ``u_i = E_fi + nu_i``, ``P_ei = E_i I_qi``, ``Q_ei = E_i I_di`` and the
currents ``I_q = S(delta) E``, ``I_d = T(delta) E``.

The voltages obey ``E' = Lambda(delta) E + u``, which is affine in the state
with a measurable ``Lambda``, and ``L E = 0`` for the measurable matrix with
rows ``P_ei T_i - Q_ei S_i``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, fields, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from ..numerics import DimensionError, rk4_step
from ..observer import PlantMaps, ObserverConfig, observer_rhs, packed_size


@dataclass(frozen=True)
class GeneratorParams:
    a: float
    b: float
    D: float
    P: float
    G_m: float
    B_m: float
    E_f: float
    nu: float
    k_omega: float = 1.0

    def __post_init__(self):
        for name in ("a", "b", "D", "k_omega"):
            if not getattr(self, name) > 0:
                raise ValueError(f"generator parameter {name} must be positive, got {getattr(self, name)}")

    @property
    def u(self) -> float:
        return self.E_f + self.nu


@dataclass(frozen=True)
class NetworkParams:
    Y: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        Y = np.array(self.Y, dtype=float)
        alpha = np.array(self.alpha, dtype=float)
        if Y.ndim != 2 or Y.shape[0] != Y.shape[1] or alpha.shape != Y.shape:
            raise DimensionError(f"admittance arrays must be square and equal in shape, got {Y.shape}, {alpha.shape}")
        if not (np.array_equal(Y, Y.T) and np.array_equal(alpha, alpha.T)):
            raise ValueError("admittance magnitudes and angles must be symmetric")
        if np.any(np.diag(Y) != 0):
            raise ValueError("self-admittance lives in G_m/B_m; Y must have a zero diagonal")
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "alpha", alpha)

    @property
    def n(self) -> int:
        return self.Y.shape[0]


@dataclass(frozen=True)
class GridState:
    delta: np.ndarray
    omega: np.ndarray
    E: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.delta, self.omega, self.E])

    @classmethod
    def from_vector(cls, v) -> "GridState":
        v = np.asarray(v, dtype=float)
        n = v.size // 3
        return cls(delta=v[:n], omega=v[n:2 * n], E=v[2 * n:3 * n])


@dataclass(frozen=True)
class Measurements:
    delta: np.ndarray
    P_e: np.ndarray
    Q_e: np.ndarray
    u: np.ndarray


def stack(gens: Sequence[GeneratorParams], name: str) -> np.ndarray:
    return np.array([getattr(g, name) for g in gens], dtype=float)


def _angles(delta, net: NetworkParams) -> np.ndarray:
    delta = np.asarray(delta, dtype=float)
    return delta[:, None] - delta[None, :] + net.alpha


def current_matrices(delta, gens: Sequence[GeneratorParams], net: NetworkParams):
    """``S(delta)`` and ``T(delta)`` with ``I_q = S E`` and ``I_d = T E``."""
    if len(gens) != net.n:
        raise DimensionError(f"{len(gens)} generators but a {net.n}-node network")
    ang = _angles(delta, net)
    S = net.Y * np.sin(ang)
    T = -net.Y * np.cos(ang)
    idx = np.arange(net.n)
    S[idx, idx] = stack(gens, "G_m")
    T[idx, idx] = -stack(gens, "B_m")
    return S, T


def electrical_outputs(state: GridState, gens, net):
    """Return ``(I_q, I_d, P_e, Q_e)``."""
    S, T = current_matrices(state.delta, gens, net)
    Iq = S @ state.E
    Id = T @ state.E
    return Iq, Id, state.E * Iq, state.E * Id


def electrical_series(delta, E, gens, net):
    """Vectorised :func:`electrical_outputs` over a trajectory.

    ``delta`` and ``E`` have shape ``(K, n)``; returns ``(S, T, P_e, Q_e)``
    with ``S``, ``T`` of shape ``(K, n, n)``.
    """
    delta = np.asarray(delta, dtype=float)
    E = np.asarray(E, dtype=float)
    ang = delta[:, :, None] - delta[:, None, :] + net.alpha
    S = net.Y * np.sin(ang)
    T = -net.Y * np.cos(ang)
    idx = np.arange(net.n)
    S[:, idx, idx] = stack(gens, "G_m")
    T[:, idx, idx] = -stack(gens, "B_m")
    Pe = E * np.einsum("kij,kj->ki", S, E)
    Qe = E * np.einsum("kij,kj->ki", T, E)
    return S, T, Pe, Qe


def voltage_matrix(delta, gens, net) -> np.ndarray:
    """``Lambda(delta)``: ``-a_i`` on the diagonal, ``b_i Y_ij cos(delta_ij + alpha_ij)`` off it."""
    Lam = stack(gens, "b")[:, None] * net.Y * np.cos(_angles(delta, net))
    idx = np.arange(net.n)
    Lam[idx, idx] = -stack(gens, "a")
    return Lam


def grid_field(state: GridState, gens, net) -> GridState:
    _, _, Pe, _ = electrical_outputs(state, gens, net)
    domega = -stack(gens, "D") * state.omega + stack(gens, "P") - Pe
    dE = voltage_matrix(state.delta, gens, net) @ state.E + stack(gens, "u")
    return GridState(delta=state.omega.copy(), omega=domega, E=dE)


def measure(state: GridState, gens, net) -> Measurements:
    _, _, Pe, Qe = electrical_outputs(state, gens, net)
    return Measurements(delta=np.array(state.delta, dtype=float), P_e=Pe, Q_e=Qe, u=stack(gens, "u"))


def annihilator(y: Measurements, gens, net) -> np.ndarray:
    """The matrix with rows ``P_ei T_i(delta) - Q_ei S_i(delta)``; it satisfies ``L E = 0``."""
    S, T = current_matrices(y.delta, gens, net)
    return y.P_e[:, None] * T - y.Q_e[:, None] * S


def voltage_plant_maps(gens, net) -> PlantMaps:
    n = net.n
    zero = np.zeros(n)
    return PlantMaps(
        n=n,
        Lambda=lambda u, y: voltage_matrix(y.delta, gens, net),
        B=lambda u, y: np.asarray(u, dtype=float),
        L=lambda u, y: annihilator(y, gens, net),
        C=lambda u, y: zero,
        phi=lambda E: np.asarray(E, dtype=float),
        phi_left_inverse=lambda w, y: np.asarray(w, dtype=float),
    )


# -- rotor speed observer ---------------------------------------------------

def speed_estimate(xi_omega, delta, gens) -> np.ndarray:
    return np.asarray(xi_omega) + stack(gens, "k_omega") * np.asarray(delta)


def speed_observer_rhs(xi_omega, delta, P_e, gens) -> np.ndarray:
    """``xi' = -D w_hat + P - P_e - k w_hat`` with ``w_hat = xi + k delta``."""
    w_hat = speed_estimate(xi_omega, delta, gens)
    return -(stack(gens, "D") + stack(gens, "k_omega")) * w_hat + stack(gens, "P") - np.asarray(P_e)


def speed_observer_step(xi_omega, delta, P_e, gens, h, delta_next=None, P_e_next=None):
    """One RK4 step; returns ``(xi', w_hat')``.

    ``delta`` and ``P_e`` are held over the step unless end-of-step samples
    are given, in which case they are interpolated linearly.
    """
    delta = np.asarray(delta, dtype=float)
    P_e = np.asarray(P_e, dtype=float)
    d_slope = 0.0 if delta_next is None else (np.asarray(delta_next) - delta) / h
    p_slope = 0.0 if P_e_next is None else (np.asarray(P_e_next) - P_e) / h
    xi = rk4_step(lambda t, x: speed_observer_rhs(x, delta + d_slope * t, P_e + p_slope * t, gens),
                  0.0, np.asarray(xi_omega, dtype=float), h)
    d_end = delta if delta_next is None else np.asarray(delta_next, dtype=float)
    return xi, speed_estimate(xi, d_end, gens)


# -- parameter sets and load changes ---------------------------------------

_GEN_KEYS = {"a": "a", "b": "b", "D": "D", "P": "P", "Ef": "E_f", "nu": "nu", "kw": "k_omega"}
_KEY_RE = re.compile(r"^(a|b|D|P|Ef|nu|kw|G|B|Y|alpha)(\d+)$")


class ParameterError(KeyError):
    pass


def parameter_dict(gens, net) -> dict:
    """Flat parameter mapping using indexed keys (``a1``, ``B11``, ``Y12``, ...)."""
    out = {}
    for i, g in enumerate(gens, start=1):
        for key, attr in _GEN_KEYS.items():
            out[f"{key}{i}"] = getattr(g, attr)
        out[f"G{i}{i}"] = g.G_m
        out[f"B{i}{i}"] = g.B_m
    for i in range(net.n):
        for j in range(net.n):
            if i != j:
                out[f"Y{i + 1}{j + 1}"] = float(net.Y[i, j])
                out[f"alpha{i + 1}{j + 1}"] = float(net.alpha[i, j])
    return out


def _parse_key(key: str, n: int):
    m = _KEY_RE.match(key)
    if m is None:
        raise ParameterError(f"unknown parameter key {key!r}")
    name, digits = m.groups()
    if name in _GEN_KEYS:
        i = int(digits) - 1
        if not 0 <= i < n:
            raise ParameterError(f"parameter key {key!r} refers to a generator outside 1..{n}")
        return name, i, None
    if len(digits) != 2:
        raise ParameterError(f"parameter key {key!r} needs a two-digit node index")
    i, j = int(digits[0]) - 1, int(digits[1]) - 1
    if not (0 <= i < n and 0 <= j < n):
        raise ParameterError(f"parameter key {key!r} refers to a node outside 1..{n}")
    if name in ("G", "B") and i != j:
        raise ParameterError(f"shunt parameter {key!r} must be diagonal")
    if name in ("Y", "alpha") and i == j:
        raise ParameterError(f"line parameter {key!r} must be off-diagonal")
    return name, i, j


def apply_load_change(gens, net, changes: Mapping[str, float]):
    """Return new ``(gens, net)`` with the given indexed parameters replaced.

    Line parameters are kept symmetric: setting ``Y12`` also sets ``Y21``.
    """
    n = net.n
    gen_updates = [dict() for _ in range(n)]
    Y = net.Y.copy()
    alpha = net.alpha.copy()
    for key, value in changes.items():
        name, i, j = _parse_key(key, n)
        value = float(value)
        if name in _GEN_KEYS:
            gen_updates[i][_GEN_KEYS[name]] = value
        elif name == "G":
            gen_updates[i]["G_m"] = value
        elif name == "B":
            gen_updates[i]["B_m"] = value
        elif name == "Y":
            Y[i, j] = Y[j, i] = value
        else:
            alpha[i, j] = alpha[j, i] = value
    new_gens = [replace(g, **upd) for g, upd in zip(gens, gen_updates)]
    return new_gens, NetworkParams(Y=Y, alpha=alpha)


def params_from_table(table: Mapping[str, float], n: int, b_includes_admittance: bool = False,
                      k_omega: Optional[Sequence[float]] = None):
    """Build ``(gens, net)`` from an indexed table such as the two-machine data file.

    With ``b_includes_admittance`` the table's ``b_i`` is the product
    ``b_i Y_ij`` (two-machine form); it is divided back out here.
    """
    table = dict(table)
    Y = np.zeros((n, n))
    alpha = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                Y[i, j] = float(table.get(f"Y{i + 1}{j + 1}", table.get(f"Y{j + 1}{i + 1}", 0.0)))
                alpha[i, j] = float(table.get(f"alpha{i + 1}{j + 1}", table.get(f"alpha{j + 1}{i + 1}", 0.0)))
    if b_includes_admittance and n != 2:
        raise ParameterError("b_includes_admittance is only meaningful for two machines")
    gens = []
    for i in range(1, n + 1):
        b = float(table[f"b{i}"])
        if b_includes_admittance:
            b /= Y[i - 1, 2 - i]
        kw = float(table.get(f"kw{i}", 1.0)) if k_omega is None else float(k_omega[i - 1])
        gens.append(GeneratorParams(
            a=float(table[f"a{i}"]), b=b, D=float(table[f"D{i}"]), P=float(table[f"P{i}"]),
            G_m=float(table[f"G{i}{i}"]), B_m=float(table[f"B{i}{i}"]),
            E_f=float(table[f"Ef{i}"]), nu=float(table[f"nu{i}"]), k_omega=kw,
        ))
    known = set(parameter_dict(gens, NetworkParams(Y=Y, alpha=alpha)))
    for key in table:
        if key not in known:
            raise ParameterError(f"unknown parameter key {key!r}")
    return gens, NetworkParams(Y=Y, alpha=alpha)


# -- co-simulation ---------------------------------------------------------

def cosim_size(n: int) -> int:
    return 4 * n + packed_size(n)


def cosim_rhs(z, gens, net, cfg: ObserverConfig, maps: Optional[PlantMaps] = None) -> np.ndarray:
    """Plant, speed observer and voltage GPEBO: ``z = [delta, omega, E, xi_omega, observer...]``."""
    n = net.n
    if maps is None:
        maps = voltage_plant_maps(gens, net)
    state = GridState.from_vector(z[:3 * n])
    y = measure(state, gens, net)
    dplant = grid_field(state, gens, net).as_vector()
    dspeed = speed_observer_rhs(z[3 * n:4 * n], state.delta, y.P_e, gens)
    dobs = observer_rhs(z[4 * n:], maps, cfg, y.u, y)
    return np.concatenate([dplant, dspeed, dobs])
