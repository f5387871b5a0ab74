"""Command-line front end: batch experiments emitting CSV/JSON artifacts.

Exit codes: 0 success, 1 falsified property (witness JSON on stdout),
2 usage or config error.  Every emitted JSON embeds the config hash and the
seed, and outputs are pure functions of (config, seed, binary version).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys as _sys
from pathlib import Path

import numpy as np

from . import examples as ex
from .brscheck import (
    NotBrsError,
    fit_additive_bound,
    find_rfc_offset,
    probe_lipschitz_openloop,
    probe_lipschitz_tdi,
    sample_reach,
    verify_rfc_tdi,
)
from .compfun import chi_from_eta, eta_from_chis
from .lyapunov import (
    LipschitzTable,
    LyapunovConfig,
    build_l_table,
    dump_table,
    eval_V,
    radial_table,
    sandwich_funs,
    verify_growth,
)
from .sysdyn import InputSignal, IntegratorConfig, integrate
from .tdinput import GrowthMargin


class ConfigError(ValueError):
    pass


def _config_hash(cfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True).encode("utf-8")
    ).hexdigest()[:16]


def _load_config(path: str | None, args) -> dict:
    if path is None:
        raise ConfigError("--config is required for this subcommand")
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if args.seed is not None:
        cfg["seed"] = args.seed
    if "seed" not in cfg:
        raise ConfigError("seed is mandatory (config key or --seed flag)")
    if not isinstance(cfg.get("system"), dict) or "name" not in cfg["system"]:
        raise ConfigError("config needs system: {name, params}")
    if cfg.get("eta_source", "paper") not in ("paper", "from_fit"):
        raise ConfigError("eta_source must be 'paper' or 'from_fit'")
    return cfg


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("BRSLAB_OUT") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _bundle(cfg: dict) -> ex.ExampleBundle:
    try:
        return ex.make(cfg["system"]["name"], cfg["system"].get("params"))
    except KeyError as exc:
        raise ConfigError(str(exc)) from exc


def _margin(bundle: ex.ExampleBundle, cfg: dict) -> GrowthMargin:
    source = cfg.get("eta_source", "paper")
    if source == "paper":
        if bundle.margin is None:
            raise ConfigError(
                f"example {bundle.name!r} ships no growth margin; use from_fit"
            )
        return bundle.margin
    samples = sample_reach(
        bundle.system,
        float(cfg.get("C", 2.0)),
        float(cfg.get("horizon", 3.0)),
        int(cfg.get("samples", 40)),
        int(cfg["seed"]),
    )
    fit = fit_additive_bound(samples)
    return GrowthMargin(eta_from_chis(fit.chi1, fit.chi2, fit.chi3))


def _int_cfg(cfg: dict) -> IntegratorConfig:
    sub = cfg.get("integrator", {})
    return IntegratorConfig(
        rel_tol=float(sub.get("rel_tol", 1e-9)),
        abs_tol=float(sub.get("abs_tol", 1e-12)),
        max_step=float(sub.get("max_step", math.inf)),
        blowup_threshold=float(sub.get("blowup_threshold", 1e9)),
    )


def _lyap_cfg(cfg: dict, args) -> LyapunovConfig:
    sub = dict(cfg.get("lyapunov", {}))
    sub.setdefault("seed", int(cfg["seed"]))
    if args.workers:
        sub["workers"] = args.workers
    try:
        return LyapunovConfig(**sub)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad lyapunov settings: {exc}") from exc


def _emit(out_path: Path, obj: dict, cfg: dict) -> None:
    obj = dict(obj)
    obj["config_hash"] = _config_hash(cfg)
    obj["seed"] = int(cfg["seed"])
    out_path.write_text(json.dumps(obj, sort_keys=True, indent=2, default=float))


def _fail(witness: dict, cfg: dict) -> int:
    witness = dict(witness)
    witness["config_hash"] = _config_hash(cfg)
    witness["seed"] = int(cfg["seed"])
    print(json.dumps(witness, sort_keys=True, default=float))
    return 1


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config, args)
    bundle = _bundle(cfg)
    x0 = np.asarray(cfg.get("x0", np.zeros(bundle.system.state_dim)), dtype=float)
    u = InputSignal.constant(
        np.asarray(cfg.get("u_constant", np.zeros(bundle.system.input_dim)), dtype=float)
    )
    tau = float(cfg.get("horizon", 1.0))
    traj = integrate(bundle.system, x0, u, tau, _int_cfg(cfg))
    out = _out_dir(args)
    traj.to_csv(out / "trajectory.csv")
    _emit(
        out / "simulate.json",
        {"t_max": traj.t_max_estimate, "blew_up": traj.blew_up,
         "final_state": traj.states[-1].tolist()},
        cfg,
    )
    return 0


def cmd_brs_fit(args) -> int:
    cfg = _load_config(args.config, args)
    bundle = _bundle(cfg)
    samples = sample_reach(
        bundle.system,
        float(cfg.get("C", 2.0)),
        float(cfg.get("horizon", 3.0)),
        int(cfg.get("samples", 40)),
        int(cfg["seed"]),
    )
    out = _out_dir(args)
    samples.to_csv(out / "reach_samples.csv")
    try:
        fit = fit_additive_bound(samples)
    except NotBrsError as exc:
        return _fail({"falsified": "BRS", "detail": str(exc)}, cfg)
    _emit(
        out / "brs_fit.json",
        {"chi": json.loads(fit.chi1.to_json()), "c": fit.c, "residual": fit.residual},
        cfg,
    )
    return 0


def cmd_rfc_verify(args) -> int:
    cfg = _load_config(args.config, args)
    bundle = _bundle(cfg)
    margin = _margin(bundle, cfg)
    report = verify_rfc_tdi(
        bundle.system,
        margin,
        margin.eta,
        float(cfg.get("c", 0.0)),
        float(cfg.get("C", 2.0)),
        float(cfg.get("horizon", 3.0)),
        int(cfg.get("samples", 20)),
        int(cfg["seed"]),
    )
    out = _out_dir(args)
    _emit(
        out / "rfc_report.json",
        {"holds": report.holds, "max_violation": report.max_violation,
         "c": report.c, "worst": report.worst},
        cfg,
    )
    if not report.holds:
        return _fail({"falsified": "RFC-TDI", "worst": report.worst}, cfg)
    return 0


def cmd_lipschitz_probe(args) -> int:
    cfg = _load_config(args.config, args)
    bundle = _bundle(cfg)
    tau = float(cfg.get("horizon", 1.0))
    C = float(cfg.get("C", 1.0))
    pairs = int(cfg.get("samples", 10))
    if args.mode == "open":
        u_fixed = None
        if "u_constant" in cfg:
            u_fixed = InputSignal.constant(np.asarray(cfg["u_constant"], dtype=float))
        report = probe_lipschitz_openloop(
            bundle.system, tau, C, pairs, int(cfg["seed"]), u_fixed=u_fixed
        )
    else:
        report = probe_lipschitz_tdi(
            bundle.system, _margin(bundle, cfg), tau, C, pairs, int(cfg["seed"])
        )
    out = _out_dir(args)
    _emit(out / f"lipschitz_{args.mode}.json", json.loads(report.to_json()), cfg)
    return 0


def _build_pipeline(cfg: dict, args):
    bundle = _bundle(cfg)
    margin = _margin(bundle, cfg)
    lyap_cfg = _lyap_cfg(cfg, args)
    if "c" in cfg:
        c = float(cfg["c"])
    else:
        c = find_rfc_offset(
            bundle.system, margin, margin.eta,
            float(cfg.get("C", 2.0)), float(cfg.get("horizon", 3.0)),
            int(cfg.get("samples", 12)), int(cfg["seed"]),
        )
    l_table = build_l_table(bundle.system, margin, lyap_cfg.Q, c, int(cfg["seed"]))
    return bundle, margin, lyap_cfg, l_table


def cmd_lyapunov_build(args) -> int:
    cfg = _load_config(args.config, args)
    bundle, margin, lyap_cfg, l_table = _build_pipeline(cfg, args)
    radii = np.asarray(cfg.get("radii", np.linspace(0.0, 2.0, 21).tolist()), dtype=float)
    table = radial_table(bundle.system, margin, radii, lyap_cfg, l_table)
    out = _out_dir(args)
    dump_table(table, out, lyap_cfg, l_table, {"config_hash": _config_hash(cfg)})
    return 0


def cmd_lyapunov_verify(args) -> int:
    cfg = _load_config(args.config, args)
    bundle, margin, lyap_cfg, l_table = _build_pipeline(cfg, args)
    radii = np.asarray(cfg.get("radii", np.linspace(0.0, 2.0, 21).tolist()), dtype=float)
    table = radial_table(bundle.system, margin, radii, lyap_cfg, l_table)
    bad = (table["alpha1"] > table["V"] + 1e-9) | (
        table["V"] > table["alpha2_plus_C"] + 1e-9
    )
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        return _fail(
            {"falsified": "sandwich", "norm_x": table["norm_x"][i],
             "V": table["V"][i], "alpha1": table["alpha1"][i],
             "alpha2_plus_C": table["alpha2_plus_C"][i]},
            cfg,
        )
    chi = chi_from_eta(margin.eta)
    rng = np.random.default_rng(np.random.SeedSequence([int(cfg["seed"]), 23]))
    checked = 0
    reports = []
    n_pairs = int(cfg.get("growth_pairs", 10))
    while checked < n_pairs:
        x = rng.uniform(0.1, 2.0) * _unit(rng, bundle.system.state_dim)
        u = rng.uniform(0.0, 1.0) * _unit(rng, bundle.system.input_dim)
        if float(chi(np.linalg.norm(u))) > np.linalg.norm(x):
            continue
        rep = verify_growth(bundle.system, margin, x, u, lyap_cfg, l_table)
        reports.append(json.loads(rep.to_json()))
        if not (rep.passes_V and rep.passes_W):
            return _fail({"falsified": "growth", "report": reports[-1]}, cfg)
        checked += 1
    out = _out_dir(args)
    _emit(out / "lyapunov_verify.json",
          {"sandwich_ok": True, "growth_reports": reports}, cfg)
    return 0


def _unit(rng, dim):
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def cmd_examples_list(args) -> int:
    print(ex.list_examples())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="brslab")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--workers", type=int, default=None)
        sp.add_argument("--out", default=None)

    sp = sub.add_parser("simulate", help="integrate a trajectory to CSV")
    common(sp)
    sp.set_defaults(fn=cmd_simulate)

    brs = sub.add_parser("brs", help="reachability-bound fitting")
    brs_sub = brs.add_subparsers(dest="subcommand", required=True)
    sp = brs_sub.add_parser("fit")
    common(sp)
    sp.set_defaults(fn=cmd_brs_fit)

    rfc = sub.add_parser("rfc", help="robust forward completeness checks")
    rfc_sub = rfc.add_subparsers(dest="subcommand", required=True)
    sp = rfc_sub.add_parser("verify")
    common(sp)
    sp.set_defaults(fn=cmd_rfc_verify)

    lip = sub.add_parser("lipschitz", help="flow regularity probes")
    lip_sub = lip.add_subparsers(dest="subcommand", required=True)
    sp = lip_sub.add_parser("probe")
    sp.add_argument("--mode", choices=("open", "tdi"), required=True)
    common(sp)
    sp.set_defaults(fn=cmd_lipschitz_probe)

    lyap = sub.add_parser("lyapunov", help="Lyapunov construction/verification")
    lyap_sub = lyap.add_subparsers(dest="subcommand", required=True)
    sp = lyap_sub.add_parser("build")
    common(sp)
    sp.set_defaults(fn=cmd_lyapunov_build)
    sp = lyap_sub.add_parser("verify")
    common(sp)
    sp.set_defaults(fn=cmd_lyapunov_verify)

    exs = sub.add_parser("examples", help="registry listing")
    exs_sub = exs.add_subparsers(dest="subcommand", required=True)
    sp = exs_sub.add_parser("list")
    common(sp)
    sp.set_defaults(fn=cmd_examples_list)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=_sys.stderr)
        return 2
    except NotBrsError as exc:
        print(json.dumps({"falsified": "BRS/RFC", "detail": str(exc)}))
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
