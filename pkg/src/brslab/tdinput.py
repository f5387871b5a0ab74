"""Trajectory-dominated input sets: membership, lifting, and projection.

An input v is trajectory-dominated for initial state x and growth margin eta
when ||v(t)|| <= eta(||phi(t, x, v)||) along its own trajectory.  Such inputs
are in bijection with unit-ball disturbances d driving the auxiliary closed
loop x' = A x + f(x, d * eta(||x||)); lifting integrates the closed loop and
reads the input off the trajectory, projection divides the input back out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .compfun import ScalarFun
from .sysdyn import InputSignal, IntegratorConfig, SystemDef, Trajectory, integrate

__all__ = [
    "GrowthMargin",
    "DisturbanceSignal",
    "FeedbackSignal",
    "MembershipReport",
    "DivisionGuardError",
    "closed_loop",
    "lift_disturbance",
    "project_input",
    "check_membership",
    "sample_tdi",
    "disturbance_family",
]

EPS_DIV = 1e-9
TOL_MEMBERSHIP = 1e-6


@dataclass(frozen=True)
class GrowthMargin:
    """K-inf, unit-Lipschitz gauge bounding admissible input norms."""

    eta: ScalarFun

    def __post_init__(self):
        if not {"Kinf", "Lip1"} <= self.eta.tags:
            raise ValueError("growth margin must be tagged Kinf and Lip1")
        chords = np.diff(self.eta.values) / np.diff(self.eta.knots)
        if np.any(chords > 1 + 1e-12):
            raise ValueError("growth margin violates the unit-Lipschitz chord check")

    def __call__(self, s):
        return self.eta(s)


class DisturbanceSignal(InputSignal):
    """Piecewise-constant signal with every value in the closed unit ball."""

    def __init__(self, breakpoints, segment_values, tail_value):
        super().__init__(breakpoints, segment_values, tail_value)
        norms = np.linalg.norm(self._all_values(), axis=1)
        if np.any(norms > 1 + 1e-9):
            raise ValueError(f"disturbance norm {norms.max()} exceeds the unit ball")

    @classmethod
    def from_input(cls, u: InputSignal) -> "DisturbanceSignal":
        return cls(u.breakpoints, u.segment_values, u.tail_value)


class FeedbackSignal:
    """Input u(t) = d(t) * eta(||x_cl(t)||) read off a dense closed-loop path.

    Continuous within the disturbance's segments, so an open-loop
    integration driven by it reproduces the closed-loop trajectory to
    integrator accuracy (the exact matched input of the bijection).
    """

    def __init__(self, d: InputSignal, margin: GrowthMargin, traj: Trajectory):
        if traj.interpolant is None:
            raise ValueError("feedback signal needs a dense trajectory")
        self._d = d
        self._margin = margin
        self._traj = traj
        self.breakpoints = d.breakpoints

    @property
    def dim(self) -> int:
        return self._d.dim

    def eval(self, t: float) -> np.ndarray:
        x = self._traj.state_at(min(t, float(self._traj.times[-1])))
        return self._d.eval(t) * float(self._margin(np.linalg.norm(x)))

    def __call__(self, t: float) -> np.ndarray:
        return self.eval(t)

    def sup_norm(self, tau: float = math.inf) -> float:
        tau = min(tau, float(self._traj.times[-1]))
        mask = self._traj.times <= tau
        etas = np.asarray(self._margin(self._traj.norms()[mask]))
        dnorms = np.array(
            [np.linalg.norm(self._d.eval(t)) for t in self._traj.times[mask]]
        )
        return float((etas * dnorms).max())

    def to_piecewise(self, grid: np.ndarray) -> InputSignal:
        grid = np.asarray(grid, dtype=float)
        vals = np.vstack([self.eval(t) for t in grid])
        return InputSignal(grid[1:], vals[:-1], vals[-1])


@dataclass(frozen=True)
class MembershipReport:
    is_member: bool
    max_violation: float
    grid: np.ndarray

    def __post_init__(self):
        assert self.is_member == (self.max_violation <= TOL_MEMBERSHIP)


class DivisionGuardError(ValueError):
    """Input is non-dominated at a time where the margin vanishes."""


def closed_loop(sys: SystemDef, margin: GrowthMargin) -> SystemDef:
    """Auxiliary system driven by d * eta(||x||) in place of u."""
    eta = margin.eta

    def rhs_cl(x, d):
        return sys.rhs(x, d * float(eta(np.linalg.norm(x))))

    return SystemDef(
        state_dim=sys.state_dim,
        input_dim=sys.input_dim,
        rhs=rhs_cl,
        linear_part=sys.linear_part,
        name=f"{sys.name}:eta-loop" if sys.name else "eta-loop",
        lipschitz_hint=sys.lipschitz_hint,
    )


def lift_disturbance(
    sys: SystemDef,
    margin: GrowthMargin,
    x0,
    d: DisturbanceSignal,
    tau: float,
    cfg: IntegratorConfig | None = None,
    representation: str = "feedback",
):
    """Integrate the closed loop under d and read off the matched input.

    representation "feedback" returns the exact matched input backed by the
    dense closed-loop solution; "piecewise" samples it as a
    piecewise-constant signal on the trajectory grid (discrepancy controlled
    by grid refinement).
    """
    traj = integrate(closed_loop(sys, margin), x0, d, tau, cfg)
    u = FeedbackSignal(d, margin, traj)
    if representation == "piecewise":
        return u.to_piecewise(traj.times), traj
    if representation != "feedback":
        raise ValueError(f"unknown representation {representation!r}")
    return u, traj


def check_membership(
    sys: SystemDef,
    margin: GrowthMargin,
    x0,
    u,
    tau: float,
    grid: np.ndarray | None = None,
    cfg: IntegratorConfig | None = None,
) -> MembershipReport:
    """Grid check of ||u(t)|| <= eta(||phi(t, x0, u)||) along the open loop."""
    cfg = cfg or IntegratorConfig()
    if grid is not None:
        cfg = IntegratorConfig(
            cfg.rel_tol, cfg.abs_tol, cfg.max_step, cfg.blowup_threshold, grid
        )
    traj = integrate(sys, x0, u, tau, cfg)
    ts = traj.times
    u_norms = np.array([np.linalg.norm(u.eval(t)) for t in ts])
    eta_vals = np.asarray(margin(traj.norms()))
    max_violation = float((u_norms - eta_vals).max())
    return MembershipReport(max_violation <= TOL_MEMBERSHIP, max_violation, ts)


def project_input(
    sys: SystemDef,
    margin: GrowthMargin,
    x0,
    u,
    tau: float,
    cfg: IntegratorConfig | None = None,
    grid: np.ndarray | None = None,
) -> DisturbanceSignal:
    """Recover the disturbance d(t) = u(t) / eta(||phi(t, x0, u)||).

    Where the margin is below EPS_DIV the convention d = 0 applies, but only
    for dominated inputs; otherwise a DivisionGuardError names the time.
    """
    cfg = cfg or IntegratorConfig()
    traj = integrate(sys, x0, u, tau, cfg)
    ts = traj.times if grid is None else np.asarray(grid, dtype=float)
    d_vals = np.empty((ts.size, u.dim))
    for i, t in enumerate(ts):
        x = traj.state_at(t) if grid is not None else traj.states[i]
        e = float(margin(np.linalg.norm(x)))
        uv = u.eval(t)
        if e <= EPS_DIV:
            if np.linalg.norm(uv) > TOL_MEMBERSHIP:
                raise DivisionGuardError(
                    f"input not dominated at t={t}: margin {e} but ||u||="
                    f"{np.linalg.norm(uv)}"
                )
            d_vals[i] = 0.0
        else:
            dv = uv / e
            n = np.linalg.norm(dv)
            if n > 1.0:  # clip roundoff excursions back onto the unit ball
                dv = dv / n
            d_vals[i] = dv
    return DisturbanceSignal(ts[1:], d_vals[:-1], d_vals[-1])


def disturbance_family(
    input_dim: int, tau: float, n: int, seed: int
) -> list[DisturbanceSignal]:
    """Deterministic family: zero, the signed unit axes, then seeded random
    piecewise-constant signals with values on the unit sphere."""
    if n < 1:
        raise ValueError("need n >= 1")
    family: list[DisturbanceSignal] = [
        DisturbanceSignal.constant(np.zeros(input_dim))
    ]
    for i in range(input_dim):
        for sign in (1.0, -1.0):
            e = np.zeros(input_dim)
            e[i] = sign
            family.append(DisturbanceSignal.constant(e))
    idx = len(family)
    while len(family) < n:
        rng = np.random.default_rng(np.random.SeedSequence([seed, idx]))
        n_switch = int(rng.integers(1, 5))
        bps = np.sort(rng.uniform(0.0, tau, n_switch))
        bps = bps[np.concatenate([[True], np.diff(bps) > 0]) & (bps > 0)]
        vals = rng.standard_normal((bps.size + 1, input_dim))
        vals /= np.linalg.norm(vals, axis=1, keepdims=True)
        family.append(DisturbanceSignal(bps, vals[:-1], vals[-1]))
        idx += 1
    return family[:n]


def sample_tdi(
    sys: SystemDef,
    margin: GrowthMargin,
    x0,
    tau: float,
    n: int,
    seed: int,
    cfg: IntegratorConfig | None = None,
    representation: str = "feedback",
):
    """Lift n deterministic-under-seed disturbances into dominated inputs."""
    out = []
    for d in disturbance_family(sys.input_dim, tau, n, seed):
        out.append(lift_disturbance(sys, margin, x0, d, tau, cfg, representation))
    return out


def dump_tdi_samples(samples, out_dir) -> None:
    """Write each lifted (u, trajectory) pair as a CSV bundle."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, (u, traj) in enumerate(samples):
        traj.to_csv(out_dir / f"tdi_{i}.csv")
        ts = traj.times
        uv = np.vstack([np.atleast_1d(u.eval(t)) for t in ts])
        np.savetxt(
            out_dir / f"tdi_{i}_input.csv",
            np.column_stack([ts, uv]),
            delimiter=",",
            header="t," + ",".join(f"u{j}" for j in range(uv.shape[1])),
            comments="",
        )
