"""Scenario execution: co-simulate plant and observer, fire events, summarise.

Each system has an adapter that knows its packed co-simulation layout, how
to call the kernel for one event-free segment, and how to turn the raw
trajectory into plant, measured, estimated and error columns.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .config import ConfigError, ScenarioConfig
from .numerics import determinant_series
from .observer import fct_parameter, packed_size
from .systems import academic, power, reactor


@dataclass
class Trajectory:
    """Full-resolution record of a run (every grid point)."""

    times: np.ndarray
    raw: np.ndarray              # packed co-simulation states, (K, nz)
    plant: np.ndarray
    observed: np.ndarray
    estimate: np.ndarray
    error: np.ndarray            # estimate minus truth
    Delta: np.ndarray
    w: np.ndarray
    excitation_integral: np.ndarray
    theta_hat: np.ndarray
    theta_hat0: np.ndarray       # frozen initial estimate in force at each row
    theta: np.ndarray            # oracle parameter in force at each row
    armed_at: np.ndarray         # index of the last (re)arming for each row
    columns: dict                # group -> list of names
    segments: list = field(default_factory=list)  # (k_start, k_end, parameters)

    @property
    def n_rows(self) -> int:
        return self.times.shape[0]


@dataclass
class RunSummary:
    scenario: str
    system: str
    mode: str
    steps: int
    t_final: float
    final_error: list            # sup |error| over the last 10% of the run, per component
    t_c: Optional[float]
    max_abs_delta: float
    invariants: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    wall_clock_s: float = 0.0

    @property
    def ok(self) -> bool:
        return all(self.invariants.values())

    def to_json(self) -> str:
        # wall-clock is left out so that summaries of identical runs are byte-identical
        d = {k: v for k, v in self.__dict__.items() if k != "wall_clock_s"}
        return json.dumps(d, indent=2, sort_keys=True) + "\n"


# -- adapters ---------------------------------------------------------------------

class _Academic:
    name = "academic"
    theta_dim = 1

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg

    def parameters(self, table):
        return None

    def initial_vector(self):
        i = self.cfg.initial
        return academic.initial_vector(i["x"], i["xi"][0], i["theta_hat"][0])

    def simulate(self, z0, params, n_steps, t0):
        return kernels.simulate_academic(z0, self.cfg.lam, self.cfg.gamma, self.cfg.step, n_steps, t0)

    def slices(self):
        # [x1, x2, xi, phi(3), z_y, z_cube, Omega(9), q(3), theta_hat, w, I]
        return dict(xi=slice(2, 3), theta_hat=slice(20, 21), w=21, I=22)

    def theta_at(self, z, params):
        return z[1:2] - z[2:3]

    def derive(self, Z, segments, param):
        x = Z[:, 0:2]
        est = Z[:, 2:3] + param
        Delta = determinant_series(Z[:, 8:17].reshape(-1, 3, 3))
        return dict(plant=x, observed=x[:, 0:1], estimate=est, error=est - x[:, 1:2], Delta=Delta)

    def columns(self):
        return dict(plant=["x1", "x2"], observed=["y"], estimate=["x2_hat"], error=["x2_err"])


class _Power:
    name = "power"

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.n = len(cfg.initial["E"])
        for key in ("delta", "omega", "omega_hat", "xi", "theta_hat"):
            if len(cfg.initial[key]) != self.n:
                raise ValueError(f"initial.{key} has {len(cfg.initial[key])} components, "
                                 f"initial.E has {self.n}")
        self.theta_dim = self.n
        self.b_in_Y = str(cfg.parameters.meta.get("b_includes_admittance", "no")).lower() in ("1", "yes", "true", "on")

    def parameters(self, table):
        return power.params_from_table(table, self.n, b_includes_admittance=self.b_in_Y,
                                       k_omega=self.cfg.k_omega)

    def initial_vector(self):
        i, n = self.cfg.initial, self.n
        gens, _ = self.parameters(self.cfg.base_parameters())
        xi_omega = np.array(i["omega_hat"]) - power.stack(gens, "k_omega") * np.array(i["delta"])
        obs = np.concatenate([i["xi"], np.eye(n).ravel(), np.zeros(n + n * n), i["theta_hat"], [1.0, 0.0]])
        return np.concatenate([i["delta"], i["omega"], i["E"], xi_omega, obs])

    def simulate(self, z0, params, n_steps, t0):
        gens, net = params
        s = lambda k: power.stack(gens, k)
        return kernels.simulate_power(z0, s("a"), s("b"), s("D"), s("P"), s("G_m"), s("B_m"), s("u"),
                                      s("k_omega"), net.Y, net.alpha, self.cfg.lam, self.cfg.gamma,
                                      int(self.cfg.omega_regressor == "phi"), self.cfg.step, n_steps, t0)

    def slices(self):
        n, o = self.n, 4 * self.n
        return dict(xi=slice(o, o + n), Phi=slice(o + n, o + n + n * n),
                    filters=slice(o + n + n * n, o + 2 * n + 2 * n * n),
                    theta_hat=slice(o + 2 * n + 2 * n * n, o + 3 * n + 2 * n * n),
                    w=o + packed_size(n) - 2, I=o + packed_size(n) - 1)

    def theta_at(self, z, params):
        n = self.n
        return z[2 * n:3 * n] - z[4 * n:5 * n]

    def derive(self, Z, segments, param):
        n = self.n
        sl = self.slices()
        delta, omega, E = Z[:, :n], Z[:, n:2 * n], Z[:, 2 * n:3 * n]
        Phi = Z[:, sl["Phi"]].reshape(-1, n, n)
        Pe = np.empty_like(E)
        Qe = np.empty_like(E)
        kw = np.empty(n)
        for k0, k1, (gens, net) in segments:
            _, _, Pe[k0:k1 + 1], Qe[k0:k1 + 1] = power.electrical_series(delta[k0:k1 + 1], E[k0:k1 + 1], gens, net)
            kw = power.stack(gens, "k_omega")
        omega_hat = Z[:, 3 * n:4 * n] + kw * delta
        E_hat = Z[:, sl["xi"]] + np.einsum("kij,kj->ki", Phi, param)
        Om = Z[:, sl["filters"]][:, n:].reshape(-1, n, n)
        return dict(
            plant=np.hstack([delta, omega, E]), observed=np.hstack([delta, Pe, Qe]),
            estimate=np.hstack([omega_hat, E_hat]), error=np.hstack([omega_hat - omega, E_hat - E]),
            Delta=determinant_series(Om),
        )

    def columns(self):
        idx = [str(i + 1) for i in range(self.n)]
        return dict(plant=[f"{v}{i}" for v in ("delta", "omega", "E") for i in idx],
                    observed=[f"{v}{i}" for v in ("delta_meas", "P_e", "Q_e") for i in idx],
                    estimate=[f"{v}{i}_hat" for v in ("omega", "E") for i in idx],
                    error=[f"{v}{i}_err" for v in ("omega", "E") for i in idx])


class _Reactor:
    name = "reactor"
    theta_dim = 2

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg

    def parameters(self, table):
        unknown = sorted(set(table) - set(reactor.DigesterParams.__dataclass_fields__))
        if unknown:
            raise ConfigError(f"unknown digester parameters {unknown}")
        dp = reactor.DigesterParams(**table)
        return dp, reactor.digester_reactor_params(dp)

    def initial_vector(self):
        i = self.cfg.initial
        _, rp = self.parameters(self.cfg.base_parameters())
        return reactor.initial_vector(rp, i["y"], i["x"], i["xi"], i["theta_hat"])

    def simulate(self, z0, params, n_steps, t0):
        dp, rp = params
        kin = (dp.mu_m1, dp.K_S1, dp.mu_m2, dp.K_S2, dp.K_I)
        return kernels.simulate_reactor(z0, rp.K_y, rp.K_x, rp.chi_y, rp.chi_x, rp.u, kin,
                                        self.cfg.lam, self.cfg.gamma, self.cfg.step, n_steps, t0)

    def slices(self):
        # [y 2, x 2, xi 2, Phi 4, Psi_f 4, z_ydag 2, z_chi 2, theta_hat 2, w, I]
        return dict(xi=slice(4, 6), Phi=slice(6, 10), filters=slice(10, 18), theta_hat=slice(18, 20), w=20, I=21)

    def theta_at(self, z, params):
        _, rp = params
        return z[2:4] - rp.K_x @ rp.K_y_pinv @ z[0:2] - z[4:6]

    def derive(self, Z, segments, param):
        y, x = Z[:, 0:2], Z[:, 2:4]
        Phi = Z[:, 6:10].reshape(-1, 2, 2)
        x_hat = np.empty_like(x)
        for k0, k1, (_, rp) in segments:
            G = rp.K_x @ rp.K_y_pinv
            rows = slice(k0, k1 + 1)
            x_hat[rows] = Z[rows, 4:6] + np.einsum("kij,kj->ki", Phi[rows], param[rows]) + y[rows] @ G.T
        Pf = Z[:, 10:14].reshape(-1, 2, 2)
        return dict(plant=np.hstack([y, x]), observed=y.copy(), estimate=x_hat, error=x_hat - x,
                    Delta=determinant_series(np.einsum("kji,kjl->kil", Pf, Pf)))

    def columns(self):
        return dict(plant=["y1", "y2", "x1", "x2"], observed=["y1_meas", "y2_meas"],
                    estimate=["x1_hat", "x2_hat"], error=["x1_err", "x2_err"])


ADAPTERS = {"academic": _Academic, "power": _Power, "reactor": _Reactor}


def _rearm(z, sl, dim):
    """Restart the observer at the current leaf: ``Phi = I``, filters zero, ``w = 1``.

    ``theta_hat`` is mapped through the old ``Phi`` so the state estimate is
    continuous across the restart.
    """
    z = z.copy()
    Phi = z[sl["Phi"]].reshape(dim, dim)
    th = Phi @ z[sl["theta_hat"]]
    z[sl["Phi"]] = np.eye(dim).ravel()
    z[sl["filters"]] = 0.0
    z[sl["theta_hat"]] = th
    z[sl["w"]] = 1.0
    z[sl["I"]] = 0.0
    return z


def simulate(cfg: ScenarioConfig) -> Trajectory:
    """Run the co-simulation on the full grid and derive every reported series."""
    ad = ADAPTERS[cfg.system](cfg)
    sl = ad.slices()
    n_steps = cfg.n_steps
    times = cfg.t0 + cfg.step * np.arange(n_steps + 1)
    times[-1] = cfg.t_final
    base = ad.parameters(cfg.base_parameters()) if cfg.parameters is not None else None
    cuts = [0] + [int(round((ev.time - cfg.t0) / cfg.step)) for ev in cfg.events] + [n_steps]
    sets = [base] + [ad.parameters(cfg.parameters.get(ev.parameter_set)) for ev in cfg.events]

    z0 = ad.initial_vector()
    Z = np.empty((n_steps + 1, z0.size))
    Z[0] = z0
    segments = []
    arm_points = [0]
    for j, params in enumerate(sets):
        k0, k1 = cuts[j], cuts[j + 1]
        if j > 0 and cfg.rearm:
            Z[k0] = _rearm(Z[k0], sl, ad.theta_dim)
            arm_points.append(k0)
        if k1 > k0:
            Z[k0:k1 + 1] = ad.simulate(Z[k0], params, k1 - k0, times[k0])
        segments.append((k0, k1, params))

    armed_at = np.zeros(n_steps + 1, dtype=int)
    theta = np.empty((n_steps + 1, ad.theta_dim))
    theta_hat0 = np.empty_like(theta)
    for a, b in zip(arm_points, arm_points[1:] + [n_steps + 1]):
        in_force = max(j for j in range(len(sets)) if cuts[j] <= a)
        armed_at[a:b] = a
        theta[a:b] = ad.theta_at(Z[a], sets[in_force])
        theta_hat0[a:b] = Z[a, sl["theta_hat"]]

    theta_hat = Z[:, sl["theta_hat"]]
    w = Z[:, sl["w"]]
    param = fct_parameter(theta_hat, theta_hat0, w, cfg.mu) if cfg.mode == "fct" else theta_hat
    d = ad.derive(Z, segments, param)
    return Trajectory(times=times, raw=Z, plant=d["plant"], observed=d["observed"], estimate=d["estimate"],
                      error=d["error"], Delta=d["Delta"], w=w, excitation_integral=Z[:, sl["I"]],
                      theta_hat=theta_hat, theta_hat0=theta_hat0, theta=theta, armed_at=armed_at,
                      columns=ad.columns(), segments=segments)


def crossing_time(traj: Trajectory, cfg: ScenarioConfig) -> Optional[float]:
    """First grid time at which the excitation integral reaches ``-ln(1 - mu)/gamma``."""
    if cfg.gamma == 0 or traj.n_rows == 0:
        return None
    hit = np.flatnonzero(traj.excitation_integral >= -math.log1p(-cfg.mu) / cfg.gamma)
    return float(traj.times[hit[0]]) if hit.size else None


def summarize(traj: Optional[Trajectory], cfg: ScenarioConfig, invariants=None, warnings=(),
              wall_clock=0.0) -> RunSummary:
    if traj is None or cfg.n_steps == 0:
        return RunSummary(scenario=cfg.label, system=cfg.system, mode=cfg.mode, steps=0, t_final=cfg.t_final,
                          final_error=[], t_c=None, max_abs_delta=0.0, invariants=dict(invariants or {}),
                          warnings=list(warnings), wall_clock_s=wall_clock)
    tail = traj.times >= cfg.t0 + 0.9 * (cfg.t_final - cfg.t0)
    return RunSummary(
        scenario=cfg.label, system=cfg.system, mode=cfg.mode, steps=cfg.n_steps, t_final=cfg.t_final,
        final_error=[float(v) for v in np.max(np.abs(traj.error[tail]), axis=0)],
        t_c=crossing_time(traj, cfg), max_abs_delta=float(np.max(np.abs(traj.Delta))),
        invariants=dict(invariants or {}), warnings=list(warnings), wall_clock_s=wall_clock,
    )


def trace_header(traj: Trajectory) -> list[str]:
    c = traj.columns
    return ["t"] + c["plant"] + c["observed"] + c["estimate"] + c["error"] + ["Delta", "w", "excitation_integral"]


def trace_rows(traj: Trajectory, emit_every: int) -> np.ndarray:
    """Decimated trace matrix; the final grid point is always kept."""
    idx = np.arange(0, traj.n_rows, emit_every)
    if idx.size and idx[-1] != traj.n_rows - 1:
        idx = np.append(idx, traj.n_rows - 1)
    return np.column_stack([traj.times, traj.plant, traj.observed, traj.estimate, traj.error,
                            traj.Delta, traj.w, traj.excitation_integral])[idx]


def emit_trace(path, header: list[str], rows: np.ndarray) -> None:
    """Comma-separated trace with a header row and 17 significant digits."""
    rows = np.asarray(rows, dtype=float).reshape(-1, len(header))
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join("%.17g" % v for v in r) + "\n")


def read_trace(path) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data.reshape(-1, len(header))


def empty_header(cfg: ScenarioConfig) -> list[str]:
    """Trace header for a run that takes no steps."""
    c = ADAPTERS[cfg.system](cfg).columns()
    return ["t"] + c["plant"] + c["observed"] + c["estimate"] + c["error"] + ["Delta", "w", "excitation_integral"]


def run_scenario(cfg: ScenarioConfig, trace_path=None, check: bool = False):
    """Simulate, optionally write the trace, and return ``(summary, trajectory)``.

    With ``check`` the inline invariant suite is evaluated and recorded in
    the summary's ``invariants``; the trajectory is ``None`` for an empty run.
    """
    from .checks import run_checks, scan_warnings

    start = time.perf_counter()
    if cfg.n_steps == 0:
        if trace_path is not None:
            emit_trace(trace_path, empty_header(cfg), np.empty((0, len(empty_header(cfg)))))
        return summarize(None, cfg, wall_clock=time.perf_counter() - start), None
    traj = simulate(cfg)
    invariants = run_checks(traj, cfg) if check else {}
    summary = summarize(traj, cfg, invariants, scan_warnings(traj, cfg), time.perf_counter() - start)
    if trace_path is not None:
        emit_trace(trace_path, trace_header(traj), trace_rows(traj, cfg.emit_every))
    return summary, traj
