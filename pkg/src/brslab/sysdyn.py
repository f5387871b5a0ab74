"""Control-system abstraction, input signals, and trajectory integration.

Systems are x' = A x + f(x, u) with the linear part optional.  Inputs are
piecewise-constant signals (the dense approximating class for essentially
bounded inputs); integration restarts at every input breakpoint so the
right-hand side stays smooth within each solver step.  Blow-up is detected
by a norm-threshold event and reported as data, never as a crash.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

__all__ = [
    "InputSignal",
    "SystemDef",
    "Trajectory",
    "IntegratorConfig",
    "StepSizeError",
    "eval_input",
    "concat",
    "integrate",
    "detect_tmax",
    "semigroup_growth",
]


class StepSizeError(RuntimeError):
    """Integrator step size underflow; distinct from blow-up."""


def _as_vector(v) -> np.ndarray:
    return np.atleast_1d(np.asarray(v, dtype=float))


class InputSignal:
    """Piecewise-constant vector-valued signal on [0, inf).

    Segment i holds `segment_values[i]` on [b_{i-1}, b_i) (with b_{-1} = 0)
    and `tail_value` beyond the last breakpoint.  The value AT a breakpoint
    belongs to the new segment, matching the splice convention of
    concatenation.
    """

    def __init__(self, breakpoints: Sequence[float], segment_values, tail_value):
        self.breakpoints = np.asarray(breakpoints, dtype=float)
        self.tail_value = _as_vector(tail_value)
        if self.breakpoints.size:
            vals = np.atleast_2d(np.asarray(segment_values, dtype=float))
            if vals.shape[0] != self.breakpoints.size:
                raise ValueError("need one segment value per breakpoint")
            if np.any(np.diff(self.breakpoints) <= 0) or self.breakpoints[0] <= 0:
                raise ValueError("breakpoints must be positive and strictly increasing")
            self.segment_values = vals
        else:
            self.segment_values = np.empty((0, self.tail_value.size))

    @classmethod
    def constant(cls, value) -> "InputSignal":
        return cls([], [], value)

    @property
    def dim(self) -> int:
        return self.tail_value.size

    def eval(self, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError("signals are defined for t >= 0 only")
        idx = int(np.searchsorted(self.breakpoints, t, side="right"))
        if idx >= self.breakpoints.size:
            return self.tail_value
        return self.segment_values[idx]

    def __call__(self, t: float) -> np.ndarray:
        return self.eval(t)

    def _all_values(self) -> np.ndarray:
        return np.vstack([self.segment_values, self.tail_value[None, :]])

    def sup_norm(self, tau: float = math.inf) -> float:
        """Essential supremum of the value norm over [0, tau]."""
        starts = np.concatenate([[0.0], self.breakpoints])
        vals = self._all_values()
        active = starts <= tau
        return float(np.linalg.norm(vals[active], axis=1).max())

    def shift(self, t: float) -> "InputSignal":
        """The signal s -> self(s + t)."""
        if t < 0:
            raise ValueError("shift requires t >= 0")
        kept = np.flatnonzero(self.breakpoints > t)
        if kept.size == 0:
            return InputSignal([], [], self.eval(t))
        combined = self._all_values()
        new_bp = self.breakpoints[kept] - t
        # Segment before the first kept breakpoint holds the value at t;
        # each kept breakpoint j starts the segment combined[j + 1].
        new_vals = np.vstack([self.eval(t)[None, :], combined[kept[:-1] + 1]])
        return InputSignal(new_bp, new_vals, combined[kept[-1] + 1])


def eval_input(u: InputSignal, t: float) -> np.ndarray:
    return u.eval(t)


def concat(u1: InputSignal, u2: InputSignal, t: float) -> InputSignal:
    """Splice: value of u1 on [0, t), value of u2(s - t) for s >= t."""
    if t < 0:
        raise ValueError("concatenation time must be nonnegative")
    if t == 0:
        return InputSignal(u2.breakpoints.copy(), u2.segment_values.copy(), u2.tail_value)
    keep = u1.breakpoints < t
    bp1 = u1.breakpoints[keep]
    vals1 = u1._all_values()[: keep.sum() + 1]
    new_bp = np.concatenate([bp1, [t], t + u2.breakpoints])
    new_vals = np.vstack([vals1, u2.segment_values]) if u2.segment_values.size else vals1
    return InputSignal(new_bp, new_vals, u2.tail_value)


@dataclass(frozen=True)
class SystemDef:
    """Right-hand side x' = linear_part @ x + rhs(x, u)."""

    state_dim: int
    input_dim: int
    rhs: Callable[[np.ndarray, np.ndarray], np.ndarray]
    linear_part: np.ndarray | None = None
    name: str = ""
    lipschitz_hint: Callable[[float], float] | None = None

    def full_rhs(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        dx = _as_vector(self.rhs(x, u))
        if self.linear_part is not None:
            dx = dx + self.linear_part @ x
        return dx


@dataclass
class IntegratorConfig:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    max_step: float = math.inf
    blowup_threshold: float = 1e9
    dense_output_grid: np.ndarray | None = None

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_step <= 0 or self.blowup_threshold <= 0:
            raise ValueError("max_step and blowup_threshold must be positive")


@dataclass(frozen=True)
class Trajectory:
    """Time grid, states, maximal-time estimate, and blow-up flag."""

    times: np.ndarray
    states: np.ndarray
    t_max_estimate: float
    blew_up: bool
    interpolant: Callable[[float], np.ndarray] | None = field(
        default=None, compare=False, repr=False
    )

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.states, axis=1)

    def state_at(self, t) -> np.ndarray:
        if self.interpolant is None:
            raise ValueError("trajectory carries no dense interpolant")
        return self.interpolant(t)

    def to_csv(self, path) -> None:
        path = Path(path)
        header = "t," + ",".join(f"x{i}" for i in range(self.states.shape[1]))
        data = np.column_stack([self.times, self.states])
        np.savetxt(path, data, delimiter=",", header=header, comments="")
        sidecar = {
            "t_max": None if math.isinf(self.t_max_estimate) else self.t_max_estimate,
            "blew_up": bool(self.blew_up),
        }
        path.with_suffix(path.suffix + ".json").write_text(
            json.dumps(sidecar, sort_keys=True)
        )


class _SegmentInterpolant:
    """Dense output across the per-segment solver solutions."""

    def __init__(self, pieces):
        # pieces: list of (t_start, t_end, OdeSolution)
        self._pieces = pieces
        self._ends = np.array([b for _, b, _ in pieces])

    def __call__(self, t):
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        idx = np.minimum(
            np.searchsorted(self._ends, t_arr, side="left"), len(self._pieces) - 1
        )
        dim = self._pieces[0][2](self._pieces[0][0]).size
        out = np.empty((t_arr.size, dim))
        for j in np.unique(idx):
            a, b, sol = self._pieces[j]
            sel = idx == j
            out[sel] = sol(np.clip(t_arr[sel], a, b)).T
        return out[0] if np.isscalar(t) or np.asarray(t).ndim == 0 else out


def _segment_edges(u, tau: float) -> np.ndarray:
    bp = np.asarray(getattr(u, "breakpoints", ()), dtype=float)
    inner = bp[(bp > 0) & (bp < tau)]
    return np.concatenate([[0.0], inner, [tau]])


def integrate(
    sys: SystemDef, x0, u, tau: float, cfg: IntegratorConfig | None = None
) -> Trajectory:
    """Adaptive embedded Runge-Kutta solution of x' = rhs(x, u(t)) on [0, tau].

    `u` is an InputSignal or any object exposing `eval(t)` and
    `breakpoints`; integration restarts at every breakpoint.  On blow-up the
    trajectory is truncated at the threshold-crossing time.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    cfg = cfg or IntegratorConfig()
    x0 = _as_vector(x0)
    edges = _segment_edges(u, tau)
    grid = cfg.dense_output_grid
    if grid is not None:
        grid = np.asarray(grid, dtype=float)
        grid = grid[(grid >= 0) & (grid <= tau)]

    threshold = cfg.blowup_threshold

    def blowup_event(t, y):
        return float(np.linalg.norm(y) - threshold)

    blowup_event.terminal = True
    blowup_event.direction = 1.0

    piecewise_const = isinstance(u, InputSignal)
    pieces = []
    times = [0.0]
    states = [x0.copy()]
    x = x0
    blew_up = False
    t_max = math.inf

    for a, b in zip(edges[:-1], edges[1:]):
        if piecewise_const:
            uval = u.eval(a)
            f = lambda t, y, uv=uval: sys.full_rhs(y, uv)
        else:
            f = lambda t, y: sys.full_rhs(y, u.eval(t))
        sol = solve_ivp(
            f,
            (a, b),
            x,
            method="RK45",
            rtol=cfg.rel_tol,
            atol=cfg.abs_tol,
            max_step=cfg.max_step,
            dense_output=True,
            events=blowup_event,
        )
        if sol.status == -1:
            raise StepSizeError(f"integrator failed on [{a}, {b}]: {sol.message}")
        seg_end = sol.t[-1]
        pieces.append((a, seg_end, sol.sol))
        if grid is None:
            seg_times = sol.t[1:]
        else:
            seg_times = grid[(grid > a) & (grid <= seg_end)]
        for ti in seg_times:
            times.append(float(ti))
            states.append(sol.sol(ti))
        x = sol.y[:, -1]
        if sol.status == 1:  # blow-up event
            blew_up = True
            t_max = float(sol.t_events[0][0])
            if not times or times[-1] < t_max:
                times.append(t_max)
                states.append(x)
            break

    return Trajectory(
        times=np.asarray(times),
        states=np.vstack(states),
        t_max_estimate=t_max,
        blew_up=blew_up,
        interpolant=_SegmentInterpolant(pieces),
    )


def detect_tmax(
    sys: SystemDef, x0, u, tau: float, cfg: IntegratorConfig | None = None
) -> float:
    """Last reachable time before the norm crosses the blow-up threshold.

    Returns +inf when no crossing occurs up to tau.  The crossing time is
    located by the integrator's event root-finding.
    """
    traj = integrate(sys, x0, u, tau, cfg)
    return traj.t_max_estimate


def semigroup_growth(
    A: np.ndarray, t_cert: float = 10.0, n_grid: int = 60
) -> tuple[float, float]:
    """Certified pair (M, lambda) with ||exp(A t)|| <= M exp(lambda t).

    lambda is the spectral abscissa; M is the max ratio observed on a
    logarithmic time grid in (0, t_cert].
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be a square matrix")
    if not np.all(np.isfinite(A)):
        raise ValueError("A must have finite entries")
    lam = float(np.max(np.linalg.eigvals(A).real))
    ts = np.logspace(-3, math.log10(t_cert), n_grid)
    M = 1.0
    for t in ts:
        ratio = np.linalg.norm(expm(A * t), ord=2) / math.exp(lam * t)
        M = max(M, float(ratio))
    return M, lam
