"""Converse Lyapunov construction for bounded reachability sets.

Pre-Lyapunov functions U_q(x) = sup over trajectory-dominated inputs and
time of G_q(e^{-s} eta(||phi||)) are estimated by sampling lifted
disturbances on dyadic time grids; the candidate is the truncated series
V(x) = 1 + sum_q 2^{-q} U_q(x) / (1 + M(q,q)) with the logarithmic variant
W = ln(1 + V).  All estimates are certified lower bounds of the exact sups,
so the sandwich and growth checks carry explicit slack.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .compfun import ScalarFun, chi_from_eta, theta
from .sysdyn import InputSignal, IntegratorConfig, SystemDef, integrate
from .tdinput import GrowthMargin, closed_loop, disturbance_family
from .brscheck import probe_lipschitz_tdi

__all__ = [
    "LyapunovConfig",
    "UqEstimate",
    "LyapunovValue",
    "GrowthReport",
    "LipschitzTable",
    "TailBudgetError",
    "NotRfcTdiError",
    "build_l_table",
    "estimate_Uq",
    "lyap_M",
    "eval_V",
    "sandwich_funs",
    "verify_growth",
    "radial_table",
    "dump_table",
]

L_INFLATION = 1.1


class TailBudgetError(ValueError):
    """Truncation order too small for the requested tail budget."""

    def __init__(self, Q: int, tail_bound: float, tail_tol: float, min_Q: int):
        self.min_Q = min_Q
        super().__init__(
            f"Q={Q} leaves tail bound {tail_bound:.3e} > tail_tol {tail_tol:.1e};"
            f" minimal admissible Q is {min_Q}"
        )


class NotRfcTdiError(RuntimeError):
    """Closed-loop blow-up inside the evaluation window: the system is not
    RFC over trajectory-dominated inputs on this ball."""


@dataclass
class LyapunovConfig:
    Q: int = 14
    n_dist: int = 6
    time_grid_density: int = 16
    seed: int = 0
    tail_tol: float = 1e-3
    dini_h_ladder: tuple = (1e-2, 1e-3)
    tol_growth: float = 0.1
    growth_abs_slack: float = 0.05
    workers: int = 1
    integrator: IntegratorConfig | None = None

    def __post_init__(self):
        if self.Q < 1:
            raise ValueError("Q must be at least 1")
        if self.tail_tol <= 0:
            raise ValueError("tail_tol must be positive")
        ladder = tuple(float(h) for h in self.dini_h_ladder)
        if any(h <= 0 for h in ladder) or any(np.diff(ladder) >= 0):
            raise ValueError("dini_h_ladder must be strictly decreasing and positive")
        object.__setattr__(self, "dini_h_ladder", ladder)
        if self.n_dist < 1 or self.time_grid_density < 1 or self.workers < 1:
            raise ValueError("n_dist, time_grid_density and workers must be >= 1")

    def int_cfg(self) -> IntegratorConfig:
        return self.integrator or IntegratorConfig(rel_tol=1e-8, abs_tol=1e-11)


@dataclass
class UqEstimate:
    q: int
    R: float
    theta_Rq: float
    value: float
    argmax: tuple  # (disturbance index, time)


@dataclass
class LyapunovValue:
    V: float
    W: float
    tail_bound: float
    per_q: list
    M_table: dict
    lower_bound_certificate: bool = True


@dataclass(frozen=True)
class LipschitzTable:
    """Probed flow-Lipschitz constants keyed by (horizon, ball radius).

    Lookups match keys to relative tolerance 1e-8, absorbing the float
    round-trip of horizon values.  `c` is the RFC offset the horizons were
    computed with.
    """

    entries: dict
    c: float = 0.0

    def lookup(self, tau: float, C: float) -> float:
        for (t0, c0), L in self.entries.items():
            if abs(t0 - tau) <= 1e-8 * max(1.0, abs(tau)) and abs(c0 - C) <= 1e-8 * max(
                1.0, abs(C)
            ):
                return L
        raise KeyError(
            f"no Lipschitz entry for (tau={tau}, C={C});"
            " run probe_lipschitz_tdi at these arguments and extend the table"
        )


def build_l_table(
    sys: SystemDef,
    margin: GrowthMargin,
    Q: int,
    c: float,
    seed: int,
    pairs: int = 2,
    n_dist: int = 3,
) -> LipschitzTable:
    """Probe L(Theta(q,q), q) for q = 1..Q, inflated by 10 percent."""
    entries = {}
    for q in range(1, Q + 1):
        tau = theta(float(q), q, c)
        report = probe_lipschitz_tdi(sys, margin, tau, float(q), pairs, seed, n_dist=n_dist)
        if report.diverged:
            raise NotRfcTdiError(
                f"closed-loop pair probe diverged at (tau={tau}, C={q})"
            )
        entries[(tau, float(q))] = L_INFLATION * report.max_ratio
    return LipschitzTable(entries, c)


def lyap_M(R: float, q: int, l_table: LipschitzTable) -> float:
    """Series normalization max{L(Theta(R,q), R), Theta(R,q)}."""
    tau = theta(float(R), q, l_table.c)
    return max(l_table.lookup(tau, float(R)), tau)


def _dyadic_grid(horizon: float, density: int) -> np.ndarray:
    """Grid 0..horizon with 2^m segments, m minimal for the density.

    Dyadic segment counts make a doubled density produce an exact superset
    grid, so sup estimates refine monotonically without float jitter.
    """
    n = 1 << max(0, math.ceil(math.log2(max(1.0, density * horizon))))
    return horizon * np.arange(n + 1) / n


def _uq_from_trajs(margin, trajs, q, grid):
    best = -math.inf
    arg = (0, 0.0)
    inv_q = 1.0 / q
    for i, traj in enumerate(trajs):
        states = np.atleast_2d(traj.state_at(grid))
        vals = np.exp(-grid) * np.asarray(margin(np.linalg.norm(states, axis=1)))
        gq = np.maximum(0.0, vals - inv_q)
        j = int(np.argmax(gq))
        if gq[j] > best:
            best = float(gq[j])
            arg = (i, float(grid[j]))
    return best, arg


def _closed_loop_trajs(sys, margin, x, tau, cfg: LyapunovConfig):
    cl = closed_loop(sys, margin)
    dists = disturbance_family(sys.input_dim, tau, cfg.n_dist, cfg.seed)
    icfg = cfg.int_cfg()

    def run(d):
        return integrate(cl, x, d, tau, icfg)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            trajs = list(pool.map(run, dists))
    else:
        trajs = [run(d) for d in dists]
    for traj in trajs:
        if traj.blew_up:
            raise NotRfcTdiError(
                f"closed loop from ||x||={np.linalg.norm(x):.3g} blew up at"
                f" t={traj.t_max_estimate:.3g} < {tau:.3g}:"
                " not RFC-TDI on this ball"
            )
    return trajs


def estimate_Uq(
    sys: SystemDef,
    margin: GrowthMargin,
    x,
    q: int,
    R: float,
    cfg: LyapunovConfig,
    c: float = 0.0,
) -> UqEstimate:
    """Sampled lower bound of U_q over lifted disturbances on [0, Theta(R,q)].

    The grid contains s = 0, so the estimate always dominates
    G_q(eta(||x||)), the zero-input zero-time substitution.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if R < np.linalg.norm(x) - 1e-12:
        raise ValueError("need R >= ||x|| so Theta(R,q) covers the ball of x")
    th = theta(float(R), q, c)
    trajs = _closed_loop_trajs(sys, margin, x, th, cfg)
    grid = _dyadic_grid(th, cfg.time_grid_density)
    value, arg = _uq_from_trajs(margin, trajs, q, grid)
    return UqEstimate(q, float(R), th, value, arg)


def _tail_bound(Q: int, nx: float, c: float) -> float:
    return 2.0 ** (1 - Q) * (1.0 + nx + c)


def eval_V(
    sys: SystemDef,
    margin: GrowthMargin,
    x,
    cfg: LyapunovConfig,
    l_table: LipschitzTable,
    R_override: float | None = None,
) -> LyapunovValue:
    """Truncated series V(x) = 1 + sum_q 2^{-q} U_q(x) / (1 + M(q,q)).

    All U_q share one set of closed-loop trajectories integrated to the
    largest horizon; each q reads its own dyadic grid off the dense output.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    nx = float(np.linalg.norm(x))
    c = l_table.c
    R = float(R_override) if R_override is not None else max(nx, 1.0)
    if R < nx - 1e-12:
        raise ValueError("R_override must cover ||x||")
    tail = _tail_bound(cfg.Q, nx, c)
    if tail > cfg.tail_tol:
        min_Q = math.ceil(1.0 + math.log2((1.0 + nx + c) / cfg.tail_tol))
        raise TailBudgetError(cfg.Q, tail, cfg.tail_tol, min_Q)
    thetas = [theta(R, q, c) for q in range(1, cfg.Q + 1)]
    trajs = _closed_loop_trajs(sys, margin, x, thetas[-1], cfg)
    V = 1.0
    per_q = []
    m_table = {}
    for q, th in zip(range(1, cfg.Q + 1), thetas):
        grid = _dyadic_grid(th, cfg.time_grid_density)
        value, arg = _uq_from_trajs(margin, trajs, q, grid)
        per_q.append(UqEstimate(q, R, th, value, arg))
        m_qq = lyap_M(q, q, l_table)
        m_table[q] = m_qq
        V += 2.0 ** (-q) * value / (1.0 + m_qq)
    return LyapunovValue(V, math.log1p(V), tail, per_q, m_table)


def sandwich_funs(
    margin: GrowthMargin,
    l_table: LipschitzTable,
    Q: int,
    s_max: float = 8.0,
) -> tuple[ScalarFun, ScalarFun, float]:
    """Two-sided comparison bounds alpha1(s) <= V <= alpha2(s) + C, C = 2 + c.

    alpha1 is the truncated series of G_q(eta(s)) terms; alpha2 is a
    piecewise-linear majorant of s + sum_{q <= floor(s)} 2^{-q}
    Theta(s,q)/(1+M(q,q)) on integer knots (interval-wise upper values keep
    it above the jumps of the floor).
    """
    eta = margin.eta
    c = l_table.c
    m_qq = {q: lyap_M(q, q, l_table) for q in range(1, Q + 1)}

    crossings = [float(np.interp(1.0 / q, eta.values, eta.knots)) for q in range(1, Q + 1)]
    grid = np.unique(
        np.concatenate([eta.knots, crossings, np.linspace(0.0, s_max, 33)])
    )
    grid = grid[grid <= max(s_max, eta.knots[-1])]

    def a1(s):
        ev = np.asarray(eta(s))
        return sum(
            2.0 ** (-q) * np.maximum(0.0, ev - 1.0 / q) / (1.0 + m_qq[q])
            for q in range(1, Q + 1)
        )

    a1_vals = a1(grid)
    a1_slope = max((a1_vals[-1] - a1_vals[-2]) / (grid[-1] - grid[-2]), 0.0)
    alpha1 = ScalarFun(grid, a1_vals, a1_slope)

    def upper(j: int) -> float:
        # dominates s + sum_{q <= floor(s)} ... for every s in [j-1, j]
        return j + sum(
            2.0 ** (-q) * theta(float(j), q, c) / (1.0 + m_qq[q])
            for q in range(1, min(j, Q) + 1)
        )

    k_max = int(math.ceil(s_max)) + 1
    knots2 = np.arange(0.0, k_max + 1.0)
    # knot k carries the bound over [k, k+1], so the interpolant never dips
    # below the floor-jump expression inside any interval
    vals2 = np.array([0.0] + [upper(k + 1) for k in range(1, knots2.size)])
    alpha2 = ScalarFun(knots2, vals2, 2.0, frozenset({"Kinf"}))
    return alpha1, alpha2, 2.0 + c


@dataclass
class GrowthReport:
    x: np.ndarray
    u_value: np.ndarray
    premise_lhs: float
    premise_rhs: float
    vacuous: bool
    V0: float = math.nan
    W0: float = math.nan
    per_h_V: dict = field(default_factory=dict)
    per_h_W: dict = field(default_factory=dict)
    dini_V: float = math.nan
    dini_W: float = math.nan
    passes_V: bool = True
    passes_W: bool = True
    lower_bound_certificate: bool = True

    def to_json(self) -> str:
        obj = asdict(self)
        obj["x"] = np.asarray(self.x).tolist()
        obj["u_value"] = np.asarray(self.u_value).tolist()
        return json.dumps(obj, sort_keys=True, default=float)


def verify_growth(
    sys: SystemDef,
    margin: GrowthMargin,
    x,
    u_value,
    cfg: LyapunovConfig,
    l_table: LipschitzTable,
    chi: ScalarFun | None = None,
) -> GrowthReport:
    """Dini check dV/dt <= V (and dW/dt <= 1) under the premise
    chi(||u||) <= ||x||, with chi defaulting to eta^{-1}(2 s).

    The Dini derivative is estimated by forward differences over the step
    ladder; the ball radius R is frozen across evaluations so grid layouts
    match and discretization bias cancels in the quotient.
    """
    chi = chi or chi_from_eta(margin.eta)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u_value = np.atleast_1d(np.asarray(u_value, dtype=float))
    lhs = float(chi(np.linalg.norm(u_value)))
    rhs = float(np.linalg.norm(x))
    if lhs > rhs:
        return GrowthReport(x, u_value, lhs, rhs, vacuous=True)
    h_max = max(cfg.dini_h_ladder)
    traj = integrate(sys, x, InputSignal.constant(u_value), h_max, cfg.int_cfg())
    if traj.blew_up:
        raise NotRfcTdiError("open loop blew up inside the Dini step window")
    R_frozen = max(1.0, rhs, float(traj.norms().max()))
    v0 = eval_V(sys, margin, x, cfg, l_table, R_override=R_frozen)
    report = GrowthReport(x, u_value, lhs, rhs, vacuous=False, V0=v0.V, W0=v0.W)
    for h in cfg.dini_h_ladder:
        xh = traj.state_at(h)
        vh = eval_V(sys, margin, xh, cfg, l_table, R_override=R_frozen)
        report.per_h_V[h] = (vh.V - v0.V) / h
        report.per_h_W[h] = (vh.W - v0.W) / h
    report.dini_V = max(report.per_h_V.values())
    report.dini_W = max(report.per_h_W.values())
    report.passes_V = report.dini_V <= v0.V * (1.0 + cfg.tol_growth) + cfg.growth_abs_slack
    report.passes_W = report.dini_W <= 1.0 + cfg.tol_growth
    return report


def radial_table(
    sys: SystemDef,
    margin: GrowthMargin,
    radii,
    cfg: LyapunovConfig,
    l_table: LipschitzTable,
) -> dict:
    """Evaluate V, W and the sandwich bounds along states r * e1."""
    radii = np.asarray(radii, dtype=float)
    alpha1, alpha2, C = sandwich_funs(
        margin, l_table, cfg.Q, s_max=max(8.0, float(radii.max()))
    )
    e1 = np.zeros(sys.state_dim)
    e1[0] = 1.0
    rows = {
        "norm_x": [],
        "V": [],
        "W": [],
        "tail_bound": [],
        "alpha1": [],
        "alpha2_plus_C": [],
    }
    for r in radii:
        lv = eval_V(sys, margin, r * e1, cfg, l_table)
        rows["norm_x"].append(float(r))
        rows["V"].append(lv.V)
        rows["W"].append(lv.W)
        rows["tail_bound"].append(lv.tail_bound)
        rows["alpha1"].append(float(alpha1(r)))
        rows["alpha2_plus_C"].append(float(alpha2(r)) + C)
    return {k: np.asarray(v) for k, v in rows.items()}


def dump_table(
    table: dict,
    out_dir,
    cfg: LyapunovConfig,
    l_table: LipschitzTable,
    extra_manifest: dict | None = None,
) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cols = ["norm_x", "V", "W", "tail_bound", "alpha1", "alpha2_plus_C"]
    np.savetxt(
        out_dir / "lyapunov_table.csv",
        np.column_stack([table[c] for c in cols]),
        delimiter=",",
        header=",".join(cols),
        comments="",
    )
    manifest = {
        "cfg": {
            "Q": cfg.Q,
            "n_dist": cfg.n_dist,
            "time_grid_density": cfg.time_grid_density,
            "seed": cfg.seed,
            "tail_tol": cfg.tail_tol,
            "dini_h_ladder": list(cfg.dini_h_ladder),
            "tol_growth": cfg.tol_growth,
        },
        "seed": cfg.seed,
        "c": l_table.c,
        "M_table": {
            f"{tau:.12g},{C:.12g}": L for (tau, C), L in sorted(l_table.entries.items())
        },
        "lower_bound_certificate": True,
    }
    manifest.update(extra_manifest or {})
    (out_dir / "lyapunov_manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2)
    )
