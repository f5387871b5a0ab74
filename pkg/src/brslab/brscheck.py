"""Empirical reachability-bound fits and Lipschitz-flow probes.

Bounded reachability is checked by fitting dominating additive envelopes
chi1(t) + chi2(||x||) + chi3(||u||) + c over seeded trajectory samples.
Robust forward completeness over trajectory-dominated inputs is verified
against kappa^{-1}(t + ||x|| + c).  Flow regularity is probed by trajectory
pairs: open loop with a shared input, or closed loop with a shared
disturbance (the matched-input pairing of the bijection).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .compfun import ScalarFun, inverse
from .sysdyn import InputSignal, IntegratorConfig, SystemDef, integrate
from .tdinput import GrowthMargin, closed_loop, disturbance_family

__all__ = [
    "ReachSamples",
    "ReachBoundFit",
    "RFCBoundReport",
    "LipschitzProbeReport",
    "NotBrsError",
    "sample_reach",
    "fit_additive_bound",
    "verify_rfc_tdi",
    "find_rfc_offset",
    "probe_lipschitz_openloop",
    "probe_lipschitz_tdi",
    "gronwall_bound",
]

RATIO_CAP = 1e6
NEAR_ZERO_LADDER = tuple(10.0 ** (-k) for k in range(3, 13))


class NotBrsError(RuntimeError):
    """Samples contain blow-ups: the system is not BRS on the sampled box."""


@dataclass
class ReachSamples:
    t: np.ndarray
    norm_x: np.ndarray
    norm_u: np.ndarray
    norm_phi: np.ndarray

    def to_csv(self, path) -> None:
        np.savetxt(
            path,
            np.column_stack([self.t, self.norm_x, self.norm_u, self.norm_phi]),
            delimiter=",",
            header="t,norm_x,norm_u,norm_phi",
            comments="",
        )


@dataclass
class ReachBoundFit:
    chi1: ScalarFun
    chi2: ScalarFun
    chi3: ScalarFun
    c: float
    residual: float

    def bound(self, t, norm_x, norm_u):
        return self.chi1(t) + self.chi2(norm_x) + self.chi3(norm_u) + self.c


@dataclass
class RFCBoundReport:
    kappa: ScalarFun
    c: float
    max_violation: float
    holds: bool
    worst: tuple | None = None


@dataclass
class LipschitzProbeReport:
    tau: float
    C: float
    pair_count: int
    max_ratio: float
    L_estimate: float
    diverged: bool

    def to_json(self) -> str:
        obj = asdict(self)
        return json.dumps(obj, sort_keys=True)


def _random_in_ball(rng: np.random.Generator, dim: int, radius: float) -> np.ndarray:
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    return v * radius * rng.uniform() ** (1.0 / dim)


def _random_pc_input(
    rng: np.random.Generator, dim: int, tau: float, sup_bound: float
) -> InputSignal:
    n_switch = int(rng.integers(0, 4))
    bps = np.sort(rng.uniform(0.0, tau, n_switch)) if n_switch else np.array([])
    vals = rng.standard_normal((bps.size + 1, dim))
    vals /= np.linalg.norm(vals, axis=1, keepdims=True)
    vals *= rng.uniform(0.0, sup_bound, (bps.size + 1, 1))
    return InputSignal(bps, vals[:-1], vals[-1])


def sample_reach(
    sys: SystemDef,
    C: float,
    tau: float,
    n: int,
    seed: int,
    cfg: IntegratorConfig | None = None,
    grid_points: int = 8,
) -> ReachSamples:
    """Seeded reachability samples (t, ||x||, ||u||, ||phi(t,x,u)||).

    Initial states are uniform in the C-ball, inputs random piecewise
    constant with sup-norm below C; each draw is recorded on a time grid of
    [0, tau].  Blow-ups enter as +inf rows.
    """
    if C <= 0 or tau <= 0:
        raise ValueError("C and tau must be positive")
    cfg = cfg or IntegratorConfig(rel_tol=1e-8, abs_tol=1e-10)
    t_grid = np.linspace(0.0, tau, grid_points + 1)[1:]
    rows_t, rows_x, rows_u, rows_phi = [], [], [], []
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        x0 = _random_in_ball(rng, sys.state_dim, C)
        u = _random_pc_input(rng, sys.input_dim, tau, 0.999 * C)
        run_cfg = IntegratorConfig(
            cfg.rel_tol, cfg.abs_tol, cfg.max_step, cfg.blowup_threshold, t_grid
        )
        traj = integrate(sys, x0, u, tau, run_cfg)
        nx = float(np.linalg.norm(x0))
        nu = u.sup_norm()
        for t in t_grid:
            rows_t.append(t)
            rows_x.append(nx)
            rows_u.append(nu)
            if traj.blew_up and t >= traj.t_max_estimate:
                rows_phi.append(math.inf)
            else:
                rows_phi.append(float(np.linalg.norm(traj.state_at(t))))
    return ReachSamples(
        np.asarray(rows_t),
        np.asarray(rows_x),
        np.asarray(rows_u),
        np.asarray(rows_phi),
    )


def _monotone_envelope(m: np.ndarray, y: np.ndarray, n_bins: int = 32):
    """Nondecreasing PL envelope dominating every (m_i, y_i) at its abscissa.

    Knot j sits at a bin's left edge and carries the running maximum of all
    bins up to and including that bin, so the envelope dominates within each
    bin as well.
    """
    order = np.argsort(m)
    m, y = m[order], y[order]
    edges = np.quantile(m, np.linspace(0.0, 1.0, n_bins + 1))
    edges = np.unique(edges)
    knots = [0.0]
    maxima = []
    running = -math.inf
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (m >= lo) & (m <= hi)
        if not sel.any():
            continue
        running = max(running, float(y[sel].max()))
        maxima.append(running)
        if lo > knots[-1]:
            knots.append(float(lo))
    # first bin's max also covers [0, first edge]
    values = [maxima[0]] + maxima[: len(knots) - 1]
    return np.asarray(knots), np.asarray(values[: len(knots)])


def fit_additive_bound(samples: ReachSamples, inflation: float = 0.05) -> ReachBoundFit:
    """Fit a dominating bound chi1(t) + chi2(||x||) + chi3(||u||) + c.

    A single monotone envelope g of ||phi|| against max(t, ||x||, ||u||)
    dominates the data; since the max is one of the three coordinates and g
    is nonnegative and increasing, using g for every chi preserves
    domination (the same splitting as the component-wise characterization).
    """
    if np.any(~np.isfinite(samples.norm_phi)):
        raise NotBrsError("samples contain blow-ups: not BRS on the sampled box")
    m = np.maximum(np.maximum(samples.t, samples.norm_x), samples.norm_u)
    knots, env = _monotone_envelope(m, samples.norm_phi)
    c = float(env[0])
    eps = 1e-9 * max(1.0, knots[-1])
    values = (1.0 + inflation) * np.maximum(env - c, 0.0) + eps * knots / max(
        knots[-1], 1.0
    )
    if knots.size < 2:
        knots = np.array([0.0, 1.0])
        values = np.array([0.0, eps])
    last_slope = (values[-1] - values[-2]) / (knots[-1] - knots[-2])
    chi = ScalarFun(knots, values, max(last_slope, eps), frozenset({"K"}))
    residual = float(
        (samples.norm_phi - (chi(samples.t) + chi(samples.norm_x) + chi(samples.norm_u) + c)).max()
    )
    return ReachBoundFit(chi, chi, chi, c, residual)


def verify_rfc_tdi(
    sys: SystemDef,
    margin: GrowthMargin,
    kappa: ScalarFun,
    c: float,
    C: float,
    tau: float,
    n: int,
    seed: int,
    cfg: IntegratorConfig | None = None,
) -> RFCBoundReport:
    """Check ||phi|| <= kappa^{-1}(t + ||x|| + c) over lifted disturbances."""
    if not {"Kinf"} <= kappa.tags:
        raise ValueError("kappa must be tagged Kinf")
    cfg = cfg or IntegratorConfig(rel_tol=1e-8, abs_tol=1e-10)
    kappa_inv = inverse(kappa)
    cl = closed_loop(sys, margin)
    dists = disturbance_family(sys.input_dim, tau, max(3, n // 4), seed)
    max_violation = -math.inf
    worst = None
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 7, i]))
        x0 = _random_in_ball(rng, sys.state_dim, C)
        d = dists[i % len(dists)]
        traj = integrate(cl, x0, d, tau, cfg)
        nx = float(np.linalg.norm(x0))
        bound = np.asarray(kappa_inv(traj.times + nx + c))
        viol = traj.norms() - bound
        j = int(np.argmax(viol))
        if viol[j] > max_violation:
            max_violation = float(viol[j])
            worst = (float(traj.times[j]), nx, float(traj.norms()[j]))
    return RFCBoundReport(kappa, c, max_violation, max_violation <= 1e-9, worst)


def find_rfc_offset(
    sys: SystemDef,
    margin: GrowthMargin,
    kappa: ScalarFun,
    C: float,
    tau: float,
    n: int,
    seed: int,
    cfg: IntegratorConfig | None = None,
    candidates=(0.0, 1.0, 2.0, 4.0, 8.0),
) -> float:
    """Smallest offset from the sweep for which the RFC bound holds."""
    for c in candidates:
        report = verify_rfc_tdi(sys, margin, kappa, c, C, tau, n, seed, cfg)
        if report.holds:
            return float(c)
    raise NotBrsError(
        f"RFC bound fails for every offset in {candidates}: not RFC-TDI evidence"
    )


def _pair_ratio(sys, x1, x2, u, tau, cfg, grid) -> float:
    run_cfg = IntegratorConfig(
        cfg.rel_tol, cfg.abs_tol, cfg.max_step, cfg.blowup_threshold, grid
    )
    t1 = integrate(sys, x1, u, tau, run_cfg)
    t2 = integrate(sys, x2, u, tau, run_cfg)
    n = min(t1.times.size, t2.times.size)
    diff = np.linalg.norm(t1.states[:n] - t2.states[:n], axis=1)
    return float(diff.max() / np.linalg.norm(np.atleast_1d(x1) - np.atleast_1d(x2)))


def probe_lipschitz_openloop(
    sys: SystemDef,
    tau: float,
    C: float,
    pairs: int,
    seed: int,
    cfg: IntegratorConfig | None = None,
    u_fixed: InputSignal | None = None,
    ratio_cap: float = RATIO_CAP,
) -> LipschitzProbeReport:
    """Sup of ||phi(t,x1,u) - phi(t,x2,u)|| / ||x1 - x2|| over sampled pairs.

    Includes a geometric near-zero ladder of pairs (0, 1e-3 .. 1e-12) since
    non-Lipschitz behavior concentrates at the origin.  `diverged` flags any
    ratio beyond ratio_cap.
    """
    if tau <= 0 or C <= 0:
        raise ValueError("tau and C must be positive")
    cfg = cfg or IntegratorConfig(rel_tol=1e-10, abs_tol=1e-13)
    grid = np.linspace(0.0, tau, 65)
    e1 = np.zeros(sys.state_dim)
    e1[0] = 1.0
    pair_list = [(np.zeros(sys.state_dim), r * e1) for r in NEAR_ZERO_LADDER]
    for i in range(pairs):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 11, i]))
        pair_list.append(
            (_random_in_ball(rng, sys.state_dim, C), _random_in_ball(rng, sys.state_dim, C))
        )
    max_ratio = 0.0
    for i, (x1, x2) in enumerate(pair_list):
        if np.array_equal(x1, x2):
            continue
        if u_fixed is not None:
            u = u_fixed
        else:
            rng = np.random.default_rng(np.random.SeedSequence([seed, 13, i]))
            u = _random_pc_input(rng, sys.input_dim, tau, 0.999 * C)
        max_ratio = max(max_ratio, _pair_ratio(sys, x1, x2, u, tau, cfg, grid))
    diverged = max_ratio > ratio_cap
    return LipschitzProbeReport(
        tau, C, len(pair_list), max_ratio, max_ratio if not diverged else math.inf,
        diverged,
    )


def probe_lipschitz_tdi(
    sys: SystemDef,
    margin: GrowthMargin,
    tau: float,
    C: float,
    pairs: int,
    seed: int,
    cfg: IntegratorConfig | None = None,
    n_dist: int = 4,
    ratio_cap: float = RATIO_CAP,
) -> LipschitzProbeReport:
    """Pair probe under matched trajectory-dominated inputs.

    Each pair shares a disturbance lifted from both initial states through
    the closed loop, realizing the matched-input map u1 -> u2.
    """
    if tau <= 0 or C <= 0:
        raise ValueError("tau and C must be positive")
    cfg = cfg or IntegratorConfig(rel_tol=1e-9, abs_tol=1e-12)
    cl = closed_loop(sys, margin)
    grid = np.linspace(0.0, tau, 65)
    dists = disturbance_family(sys.input_dim, tau, n_dist, seed)
    pair_list = []
    e1 = np.zeros(sys.state_dim)
    e1[0] = 1.0
    pair_list.extend((np.zeros(sys.state_dim), r * e1) for r in NEAR_ZERO_LADDER[:4])
    for i in range(pairs):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 17, i]))
        pair_list.append(
            (_random_in_ball(rng, sys.state_dim, C), _random_in_ball(rng, sys.state_dim, C))
        )
    max_ratio = 0.0
    for x1, x2 in pair_list:
        if np.array_equal(x1, x2):
            continue
        for d in dists:
            max_ratio = max(max_ratio, _pair_ratio(cl, x1, x2, d, tau, cfg, grid))
    diverged = max_ratio > ratio_cap
    return LipschitzProbeReport(
        tau, C, len(pair_list), max_ratio, max_ratio if not diverged else math.inf,
        diverged,
    )


def gronwall_bound(M_sg: float, lambda_sg: float, L: float, tau: float) -> float:
    """Trajectory-sensitivity constant M exp((2 M L + lambda) tau)."""
    if M_sg < 1 or L < 0 or tau < 0:
        raise ValueError("need M_sg >= 1, L >= 0, tau >= 0")
    return M_sg * math.exp((2.0 * M_sg * L + lambda_sg) * tau)
