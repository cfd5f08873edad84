"""Command-line entry points: speeds, front, simulate, nonlin-speed, energy-scan, fisher-table.

Configuration is layered: built-in defaults, then an optional YAML file
(--config), then dotted --set overrides, then the command's own flags.
Every run writes report.json with the fully resolved configuration.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .errors import ConfigError, FrontlabError, InconclusiveError, InconsistentInputError, NoBracketError
from .pde import (FrameConfig, SimConfig, bump_ic, energy_balance_check, energy_monotone_violation,
                  estimate_c_nonlin, fit_invasion_speed, simulate, write_trace_csv)
from .potential import critical_point_at, find_critical_point, from_config, make_fisher
from .speed_atlas import build_atlas, delta_hess, delta_stab, v_min_relative
from .wave_ode import C_TOL, TOL_CONN, find_pushed_front, invading_minima, write_front
from .weighted_profiles import GridProfile, fmt17, read_profile_csv, variational_speed_scan, write_profile_csv

log = logging.getLogger("frontlab")

COMMANDS = ("speeds", "front", "simulate", "nonlin-speed", "energy-scan", "fisher-table")
OUTPUT_ENV = "FRONTLAB_OUTPUT"

DEFAULTS = {
    "potential": {"family": "fisher", "nu": 0.25},
    "e": [0.0],
    "box": [-3.0, 3.0],
    "grid": SimConfig().to_dict(),
    "ic": {"kind": "bump", "height": 1.0, "width": 20.0, "path": None},
    "search": {
        "bracket": None,
        "direction": None,
        "c_tol": C_TOL,
        "tol_conn": TOL_CONN,
        "c0_list": None,
        "case_tol": None,
        "nonlin_method": "shooting",
        "resolution": 0.02,
        "fallback_delta": 0.1,
    },
    "frame": FrameConfig().to_dict(),
    "scan": {"profile": None, "c_min": 0.05, "c_max": None, "n_grid": 64},
    "fisher_table": {"nu_list": [1.0, 0.7, 0.5, 0.25]},
    "snapshot_files_every": 20,
    "output": None,
}


# -- config plumbing -----------------------------------------------------------------

def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _set_dotted(cfg: dict, key: str, value) -> None:
    node = cfg
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {key}: {part} is not a section")
    node[parts[-1]] = value


def load_config(path=None, sets=(), flags=None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a mapping")
        cfg = _merge(cfg, data)
    for item in sets:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        _set_dotted(cfg, k.strip(), yaml.safe_load(v))
    for k, v in (flags or {}).items():
        if v is not None:
            _set_dotted(cfg, k, v)
    _validate(cfg)
    return cfg


def _check_keys(cfg: dict) -> None:
    """Reject keys that are not in DEFAULTS (typos would otherwise be silently ignored)."""
    for k, v in cfg.items():
        if k not in DEFAULTS:
            raise ConfigError(f"unknown config key {k!r}")
        ref = DEFAULTS[k]
        if k == "potential" or not isinstance(ref, dict):
            continue
        if not isinstance(v, dict):
            raise ConfigError(f"config section {k!r} must be a mapping")
        extra = sorted(set(v) - set(ref))
        if extra:
            raise ConfigError(f"unknown key(s) in {k}: {', '.join(extra)}")


def _validate(cfg: dict) -> None:
    _check_keys(cfg)
    s = cfg["search"]
    for key in ("c_tol", "tol_conn", "resolution"):
        if not float(s[key]) > 0:
            raise ConfigError(f"search.{key} must be positive")
    if s["bracket"] is not None and (len(s["bracket"]) != 2 or not float(s["bracket"][0]) < float(s["bracket"][1])):
        raise ConfigError("search.bracket must be [lo, hi] with lo < hi")
    if s["nonlin_method"] not in ("shooting", "pde", "none"):
        raise ConfigError("search.nonlin_method must be shooting, pde or none")
    f = cfg["frame"]
    for key in ("L", "dx", "dt", "T_max", "T_plateau", "tol_neg", "plateau_rel", "check_every"):
        if not float(f[key]) > 0:
            raise ConfigError(f"frame.{key} must be positive")
    _sim_config(cfg).validate()
    for nu in cfg["fisher_table"]["nu_list"]:
        if not 0 < float(nu) <= 1:
            raise ConfigError("fisher_table.nu_list entries must lie in (0, 1]")


def _sim_config(cfg: dict) -> SimConfig:
    g = dict(cfg["grid"])
    g["tracked_speeds"] = tuple(float(c) for c in (g.get("tracked_speeds") or ()))
    try:
        return SimConfig(**g)
    except TypeError as exc:
        raise ConfigError(f"bad grid block: {exc}") from None


def _frame_config(cfg: dict) -> FrameConfig:
    try:
        return FrameConfig(**cfg["frame"])
    except TypeError as exc:
        raise ConfigError(f"bad frame block: {exc}") from None


def output_dir(cfg: dict, command: str) -> Path:
    if cfg.get("output"):
        out = Path(cfg["output"])
    else:
        out = Path(os.environ.get(OUTPUT_ENV, "frontlab_runs")) / command
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from None
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory {out} is not writable")
    return out


def versions() -> dict:
    return {"frontlab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _clean(obj):
    """JSON-safe copy: numpy scalars and arrays to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path: Path, data: dict) -> None:
    with open(path, "w") as fh:
        json.dump(_clean(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- shared setup ----------------------------------------------------------------------

def _potential(cfg: dict):
    p = from_config(cfg["potential"])
    e = find_critical_point(p, cfg["e"])
    return p, e


def _require_invadable(p, e) -> float:
    vmin = v_min_relative(p, e)
    if vmin >= 0:
        raise ConfigError(f"V_min - V(e) = {vmin:.6g} >= 0: e is a global minimum and cannot be invaded")
    return vmin


def _case_tol(cfg, c_quad):
    t = cfg["search"]["case_tol"]
    return 1e-3 * c_quad if t is None else float(t)


def _nonlin_by_shooting(p, e, c_quad, cfg) -> tuple[float, float, str, float | None]:
    """(lo, hi, method, pushed speed) from the pushed-front search, pulled when none is found."""
    tol = _case_tol(cfg, c_quad)
    if c_quad - e.c_lin <= tol:
        return e.c_lin, e.c_lin, "c_lin = c_quad_hull", None
    s = cfg["search"]
    br = s["bracket"] or (e.c_lin + tol, c_quad - tol)
    try:
        prof = find_pushed_front(p, e, br, direction=s["direction"], c_tol=float(s["c_tol"]),
                                 tol_conn=float(s["tol_conn"]))
    except NoBracketError as exc:
        log.info("%s; treating the front as pulled", exc)
        return e.c_lin, e.c_lin, "shooting (no pushed front)", None
    a, b = prof.bracket if prof.bracket is not None else (prof.c, prof.c)
    return min(a, prof.c), max(b, prof.c), "shooting (pushed front)", prof.c


def _nonlin_by_pde(p, e, c_quad, cfg) -> tuple[float, float, str, None]:
    tol = _case_tol(cfg, c_quad)
    if c_quad - e.c_lin <= tol:
        return e.c_lin, e.c_lin, "c_lin = c_quad_hull", None
    s = cfg["search"]
    br = s["bracket"] or (e.c_lin, c_quad)
    u_minus = _u_minus(p, e)
    res = estimate_c_nonlin(p, e, br, u_minus, _frame_config(cfg), float(s["resolution"]))
    if res.warning:
        raise InconclusiveError(res.warning)
    return res.lo, res.hi, "pde energy bisection", None


def _u_minus(p, e):
    mins = invading_minima(p, e)
    if not mins:
        raise ConfigError("no invading minimum with V < V(e) found")
    return min(mins, key=lambda m: m.value).location


def _radii(p, e, c0, fallback):
    try:
        return delta_stab(p, e, c0), delta_hess(p, e, c0), False
    except InconsistentInputError:
        log.warning("invasion radii undefined at c0 = %.6g (V stays above the comparison quadratic); "
                    "using delta = %.6g for both", c0, fallback)
        return fallback, fallback, True


# -- commands --------------------------------------------------------------------------

def cmd_speeds(cfg: dict, out: Path) -> dict:
    p, e = _potential(cfg)
    _require_invadable(p, e)
    box = tuple(cfg["box"])
    probe = build_atlas(p, e, (), box, with_upp_diag=False)
    c_quad = probe.c_quad_hull
    c0_list = cfg["search"]["c0_list"]
    if c0_list is None:
        c0_list = [0.5 * (e.c_lin + c_quad)] if c_quad > e.c_lin else []
    method = cfg["search"]["nonlin_method"]
    nonlin = None
    pushed = None
    if method == "shooting" and p.dim == 1:
        lo, hi, how, pushed = _nonlin_by_shooting(p, e, c_quad, cfg)
        nonlin = (lo, hi, how)
    elif method in ("pde", "shooting"):
        lo, hi, how, _ = _nonlin_by_pde(p, e, c_quad, cfg)
        nonlin = (lo, hi, how)
    atlas = build_atlas(p, e, c0_list, box, nonlin=nonlin)
    atlas_d = atlas.to_dict()
    write_json(out / "atlas.json", atlas_d)
    print(_atlas_table(atlas_d, pushed))
    return {"atlas": atlas_d, "pushed_speed": pushed, "invariant_violations": atlas.check_invariants()}


def _atlas_table(a: dict, pushed) -> str:
    rows = [("c_lin", a["c_lin"]), ("mu_quad_hull", a["mu_quad_hull"]), ("c_quad_hull", a["c_quad_hull"]),
            ("c_nonlin lo", a["c_nonlin"]["lo"]), ("c_nonlin hi", a["c_nonlin"]["hi"]),
            ("c_upp_diag", a["c_upp_diag"]), ("pushed speed", pushed), ("case", a["case"])]
    lines = [f"{k:<14} {'-' if v is None else v}" for k, v in rows]
    for r in a["radii"]:
        lines.append(f"c0={r['c0']:.6g}: delta_stab={r['delta_stab']:.6g} delta_hess={r['delta_hess']:.6g} "
                     f"c_upp={r['c_upp']:.6g}")
    return "\n".join(lines)


def cmd_front(cfg: dict, out: Path) -> dict:
    p, e = _potential(cfg)
    s = cfg["search"]
    if s["bracket"] is None:
        raise ConfigError("front needs search.bracket")
    prof = find_pushed_front(p, e, s["bracket"], direction=s["direction"], c_tol=float(s["c_tol"]),
                             tol_conn=float(s["tol_conn"]))
    write_front(prof, out / "front.csv", out / "front.json")
    print(f"c* = {prof.c!r}  status = {prof.status}  steepness = {prof.steepness.rate:.6g} "
          f"({prof.steepness.verdict})")
    return {"front": prof.to_dict()}


def _initial_condition(cfg: dict, sim: SimConfig, p, e):
    ic = cfg["ic"]
    if ic["kind"] == "bump":
        return bump_ic(sim, e.location, float(ic["height"]), float(ic["width"]))
    if ic["kind"] == "file":
        if not ic.get("path"):
            raise ConfigError("ic.kind = file needs ic.path")
        return read_profile_csv(ic["path"], e.location)
    raise ConfigError(f"unknown ic.kind {ic['kind']!r}")


def cmd_simulate(cfg: dict, out: Path) -> dict:
    p, e = _potential(cfg)
    sim = _sim_config(cfg)
    res: dict = {}
    if sim.delta_stab is None or sim.delta_hess is None:
        c0 = sim.c0
        if c0 is None:
            probe = build_atlas(p, e, (), tuple(cfg["box"]), with_upp_diag=False)
            c0 = 0.5 * (e.c_lin + probe.c_quad_hull)
        ds, dh, fell_back = _radii(p, e, c0, float(cfg["search"]["fallback_delta"]))
        sim.c0 = c0
        sim.delta_stab = sim.delta_stab if sim.delta_stab is not None else ds
        sim.delta_hess = sim.delta_hess if sim.delta_hess is not None else dh
        res["radii_fallback"] = fell_back
    cfg["grid"] = sim.to_dict()
    ic = _initial_condition(cfg, sim, p, e)
    trace = simulate(p, ic, sim)
    write_trace_csv(out / "trace.csv", trace)
    every = int(cfg["snapshot_files_every"])
    if every > 0 and trace.snapshots:
        snap_dir = out / "snapshots"
        snap_dir.mkdir(exist_ok=True)
        for k in range(0, len(trace.snapshots), every):
            write_profile_csv(snap_dir / f"u_{k:05d}.csv", GridProfile(trace.x0, trace.dx, trace.snapshots[k], trace.e))
    res["status"] = trace.status
    try:
        speed, conf = fit_invasion_speed(trace)
        res["fitted_speed"], res["fit_confidence"] = speed, conf
        print(f"fitted invasion speed {speed!r} (confidence {conf:.3g}), status {trace.status}")
    except FrontlabError as exc:
        res["fitted_speed"] = None
        print(f"no invasion speed: {exc}")
    res["balance_defect"] = {str(c): energy_balance_check(trace, c) for c in trace.series}
    res["energy_increase"] = {str(c): energy_monotone_violation(trace, c) for c in trace.series}
    return res


def cmd_nonlin_speed(cfg: dict, out: Path) -> dict:
    p, e = _potential(cfg)
    _require_invadable(p, e)
    probe = build_atlas(p, e, (), tuple(cfg["box"]), with_upp_diag=False)
    s = cfg["search"]
    br = s["bracket"] or (e.c_lin, probe.c_quad_hull)
    res = estimate_c_nonlin(p, e, br, _u_minus(p, e), _frame_config(cfg), float(s["resolution"]))
    d = res.to_dict()
    write_json(out / "nonlin.json", d)
    print(f"c_nonlin in [{res.lo!r}, {res.hi!r}] (width {res.width:.3g})")
    if res.warning:
        write_json(out / "report_partial.json", d)
        raise InconclusiveError(res.warning)
    return {"bracket": d}


def cmd_energy_scan(cfg: dict, out: Path) -> dict:
    p, e = _potential(cfg)
    sc = cfg["scan"]
    if sc["profile"]:
        w = read_profile_csv(sc["profile"], e.location)
        source = str(sc["profile"])
    else:
        s = cfg["search"]
        if s["bracket"] is None:
            raise ConfigError("energy-scan needs scan.profile or search.bracket")
        prof = find_pushed_front(p, e, s["bracket"], direction=s["direction"], c_tol=float(s["c_tol"]),
                                 tol_conn=float(s["tol_conn"]))
        w = prof.to_grid()
        write_profile_csv(out / "profile.csv", w)
        source = f"pushed front at c = {prof.c!r}"
    c_max = sc["c_max"]
    if c_max is None:
        probe = build_atlas(p, e, (), tuple(cfg["box"]), with_upp_diag=False)
        c_max = probe.c_quad_hull
    scan = variational_speed_scan(w, p, c_max=float(c_max), n_grid=int(sc["n_grid"]), c_min=float(sc["c_min"]))
    with open(out / "scan.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["c", "E_c"])
        for c, v in zip(scan.c_grid, scan.energies):
            wr.writerow([fmt17(c), fmt17(v)])
    print(f"variational speed {scan.speed!r}")
    return {"source": source, "scan": scan.to_dict()}


def fisher_row(nu: float, cfg: dict) -> dict:
    p = make_fisher(nu)
    e = critical_point_at(p, [0.0])
    probe = build_atlas(p, e, (), tuple(cfg["box"]), with_upp_diag=False)
    sub = copy.deepcopy(cfg)
    sub["search"]["bracket"] = None
    if cfg["search"]["nonlin_method"] == "pde":
        lo, hi, how, pushed = _nonlin_by_pde(p, e, probe.c_quad_hull, sub)
    else:
        lo, hi, how, pushed = _nonlin_by_shooting(p, e, probe.c_quad_hull, sub)
    atlas = build_atlas(p, e, (), tuple(cfg["box"]), nonlin=(lo, hi, how), with_upp_diag=False)
    return {"nu": nu, "c_lin": atlas.c_lin, "c_quad_hull": atlas.c_quad_hull, "pushed_speed": pushed,
            "c_nonlin_lo": lo, "c_nonlin_hi": hi, "case": atlas.case,
            "verdict": "pushed" if atlas.case == 4 else "pulled", "method": how}


FISHER_COLUMNS = ["nu", "c_lin", "c_quad_hull", "pushed_speed", "c_nonlin_lo", "c_nonlin_hi", "case", "verdict"]


def cmd_fisher_table(cfg: dict, out: Path) -> dict:
    rows = [fisher_row(float(nu), cfg) for nu in cfg["fisher_table"]["nu_list"]]
    with open(out / "fisher_table.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(FISHER_COLUMNS)
        for r in rows:
            wr.writerow([fmt17(r[k]) if isinstance(r[k], float) else ("" if r[k] is None else r[k])
                         for k in FISHER_COLUMNS])
    for r in rows:
        ps = "-" if r["pushed_speed"] is None else f"{r['pushed_speed']:.10g}"
        print(f"nu={r['nu']:<6g} c_lin={r['c_lin']:.6g} c_quad={r['c_quad_hull']:.6g} pushed={ps} "
              f"case={r['case']} {r['verdict']}")
    return {"rows": rows}


HANDLERS = {"speeds": cmd_speeds, "front": cmd_front, "simulate": cmd_simulate,
            "nonlin-speed": cmd_nonlin_speed, "energy-scan": cmd_energy_scan, "fisher-table": cmd_fisher_table}


# -- argument parsing ----------------------------------------------------------------

def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a list of numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="frontlab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"frontlab {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a dotted config key, e.g. grid.dt=0.0025")
    common.add_argument("--output", "-o", help=f"output directory (default ${OUTPUT_ENV}/<command>)")
    common.add_argument("--nu", type=float, help="shorthand for a Fisher potential with this nu")
    common.add_argument("--bracket", type=_floats, help="speed bracket 'lo,hi'")
    common.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("speeds", parents=[common], help="speed atlas of a potential")
    sub.add_parser("front", parents=[common], help="pushed front by shooting")
    sp = sub.add_parser("simulate", parents=[common], help="laboratory-frame simulation")
    for name, typ in (("L", float), ("dx", float), ("dt", float), ("T", float), ("snapshot-every", float),
                      ("delta-stab", float), ("delta-hess", float), ("c0", float), ("margin", float)):
        sp.add_argument(f"--{name}", type=typ)
    sp.add_argument("--tracked-speeds", type=_floats)
    sp.add_argument("--order", type=int, choices=(2, 4), help="spatial order of the stencil (default 4)")
    sn = sub.add_parser("nonlin-speed", parents=[common], help="c_nonlin bracket from frame runs")
    sn.add_argument("--resolution", type=float)
    se = sub.add_parser("energy-scan", parents=[common], help="weighted energy versus frame speed")
    se.add_argument("--profile", help="profile CSV (x,u1..ud); default: computed pushed front")
    se.add_argument("--c-max", type=float)
    sf = sub.add_parser("fisher-table", parents=[common], help="Fisher classification table")
    sf.add_argument("--nu-list", type=_floats)
    sf.add_argument("--method", choices=("shooting", "pde"))
    return ap


def _flags(args) -> dict:
    f = {"output": args.output}
    if args.nu is not None:
        f["potential"] = {"family": "fisher", "nu": args.nu}
    if args.bracket is not None:
        f["search.bracket"] = list(args.bracket)
    if args.command == "simulate":
        for name in ("L", "dx", "dt", "T", "snapshot_every", "delta_stab", "delta_hess", "c0", "margin",
                     "order"):
            f[f"grid.{name}"] = getattr(args, name)
        if args.tracked_speeds is not None:
            f["grid.tracked_speeds"] = list(args.tracked_speeds)
    elif args.command == "nonlin-speed":
        f["search.resolution"] = args.resolution
    elif args.command == "energy-scan":
        f["scan.profile"] = args.profile
        f["scan.c_max"] = args.c_max
    elif args.command == "fisher-table":
        f["fisher_table.nu_list"] = None if args.nu_list is None else list(args.nu_list)
        f["search.nonlin_method"] = args.method
    return f


def run(command: str, cfg: dict) -> tuple[int, dict]:
    """Run one command with a resolved config; returns (exit code, report)."""
    report = {"command": command, "config": cfg, "versions": versions()}
    code = 0
    try:
        out = output_dir(cfg, command)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code, report
    try:
        report["results"] = HANDLERS[command](cfg, out)
        report["status"] = "ok"
    except FrontlabError as exc:
        code = exc.exit_code
        report["status"] = "error"
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
        print(f"error: {exc}", file=sys.stderr)
    report["config"] = cfg
    write_json(out / "report.json", report)
    return code, report


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    flags = _flags(args)
    pot = flags.pop("potential", None)
    try:
        cfg = load_config(args.config, args.set, flags)
        if pot is not None:
            cfg["potential"] = pot
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    code, _ = run(args.command, cfg)
    return code


if __name__ == "__main__":
    sys.exit(main())
