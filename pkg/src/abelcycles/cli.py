"""Command-line interface: ``abelcycles {analyze,check,sweep,continue,witness,oracle}``.

Parameters are always the six raw coefficients a0,a1,a2,b0,b1,b2. Every output
embeds the run configuration and the package version.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .continuation import (DECREASING, INCREASING, WitnessNotFound, continue_in_q0,
                           find_three_cycle_witness)
from .integrator import (DEFAULT_CONFIG, IntegratorConfig, closed_form_return_map, integrate,
                         integrate_batch, log_multiplier_quadrature)
from .model import AbelParams, TrigPoly, check_C1_C2, classify_hypotheses, reduce_to_normal_form
from .poincare import classify_zero_orbit, find_limit_cycles
from .structure import (BranchNonMonotone, GeometryViolation, analyze_geometry,
                        compute_W_profile)

EXIT_OK, EXIT_USAGE, EXIT_GEOMETRY, EXIT_ORACLE, EXIT_NOT_FOUND = 0, 1, 2, 3, 4
RAW_NAMES = ("a0", "a1", "a2", "b0", "b1", "b2")
NF_NAMES = ("p0", "p1", "q0", "q1", "q2")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunConfig:
    command: str
    params: tuple | None = None
    window: tuple = (-10.0, 10.0)
    grid_n: int = 512
    tolerances: dict = field(default_factory=DEFAULT_CONFIG.to_dict)
    output_path: str | None = None
    format: str = "json"
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.window[0] < self.window[1]:
            raise UsageError("window must satisfy lo < hi")
        if self.grid_n < 64:
            raise UsageError("grid must be at least 64")

    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(**self.tolerances)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["params"] = None if self.params is None else dict(zip(RAW_NAMES, self.params))
        d["window"] = list(self.window)
        return d


# --------------------------------------------------------------------------
# output helpers

def _clean(obj):
    """JSON-safe copy: NaN/inf become null, numpy scalars become Python numbers."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _header(rc: RunConfig) -> dict:
    return {"artifact": "abelcycles", "version": __version__, "run_config": rc.to_dict()}


def _emit(rc: RunConfig, text: str) -> None:
    if rc.output_path:
        with open(rc.output_path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json_text(obj) -> str:
    # float repr is the shortest string that round-trips exactly
    return json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n"


def _csv_text(rc: RunConfig, header: list, rows: list) -> str:
    buf = io.StringIO()
    buf.write(f"# abelcycles {__version__}\n")
    buf.write("# run_config: " + json.dumps(_clean(rc.to_dict()), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _parse_window(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError as exc:
        raise UsageError(f"malformed window {text!r}, expected lo:hi") from exc
    return lo, hi


def _parse_range(text: str) -> np.ndarray:
    parts = text.split(":")
    try:
        vals = [float(v) for v in parts]
    except ValueError as exc:
        raise UsageError(f"malformed range {text!r}") from exc
    if len(vals) != 3:
        raise UsageError(f"range must be lo:hi:step, got {text!r}")
    lo, hi, step = vals
    if not step > 0:
        raise UsageError("range step must be positive")
    if hi < lo:
        return np.empty(0)
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


# --------------------------------------------------------------------------
# commands

def cycle_diagnostics(eq, inventory) -> tuple[list, bool]:
    """Geometry and W diagnostics for every nonzero cycle when (C.1)/(C.2) hold."""
    g, f = eq.g(), eq.f()
    if g.is_zero():
        return [], False
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        c1, mono = check_C1_C2(g, f)
    if not c1 or mono == "indefinite":
        return [], False
    out, violated = [], False
    for c in inventory.cycles:
        entry = {"x_at_0": c.x_at_0}
        try:
            geo = analyze_geometry(c, g, f)
            entry["geometry"] = geo.to_dict()
            prof = compute_W_profile(c, g, f, geo)
            entry["W"] = prof.to_dict()
            if abs(c.multiplier - 1.0) >= 1e-3:
                entry["W"]["Lpp_loop"] = None
        except GeometryViolation as exc:
            entry["geometry_violation"] = {"message": str(exc), "interval": exc.interval}
            violated = True
        except BranchNonMonotone as exc:
            entry["geometry_violation"] = {"message": str(exc), "interval": None}
            violated = True
        out.append(entry)
    return out, violated


def cmd_analyze(rc: RunConfig) -> int:
    p = AbelParams.from_sequence(rc.params)
    cfg = rc.integrator()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        hyp = classify_hypotheses(p)
    inv = find_limit_cycles(p, rc.window, rc.grid_n, cfg)
    diags, violated = cycle_diagnostics(p, inv)
    report = {**_header(rc), "params": p.to_dict(), "hypotheses": hyp.to_dict(),
              "inventory": inv.to_dict(), "nonzero_count": inv.nonzero_count,
              "total_count": inv.total_count, "diagnostics": diags}
    _emit(rc, _json_text(report))
    return EXIT_GEOMETRY if violated else EXIT_OK


def cmd_check(rc: RunConfig) -> int:
    p = AbelParams.from_sequence(rc.params)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        hyp = classify_hypotheses(p)
    report = {**_header(rc), "params": p.to_dict(), "hypotheses": hyp.to_dict(),
              "zero_orbit": classify_zero_orbit(p).to_dict()}
    _emit(rc, _json_text(report))
    return EXIT_OK


SWEEP_HEADER = ["value", "cycle_count_pos", "cycle_count_neg", "zero_orbit_class",
                "min_abs_multiplier_minus_1", "status"]


def cmd_sweep(rc: RunConfig) -> int:
    name = rc.extra.get("vary")
    if name not in RAW_NAMES + NF_NAMES:
        raise UsageError(f"--vary must be one of {', '.join(RAW_NAMES + NF_NAMES)}")
    values = _parse_range(rc.extra.get("range") or "")
    p = AbelParams.from_sequence(rc.params)
    cfg = rc.integrator()
    rows = []
    for v in values:
        v = float(v)
        try:
            if name in RAW_NAMES:
                eq = AbelParams(**{**p.to_dict(), name: v})
            else:
                eq = reduce_to_normal_form(p).with_values(**{name: v})
            inv = find_limit_cycles(eq, rc.window, rc.grid_n, cfg)
            status = "ok" if not inv.warnings else "warning"
            rows.append([v, inv.count_pos, inv.count_neg, inv.zero_orbit.label,
                         inv.min_distance_to_one(), status])
        except Exception as exc:  # recorded per row, never aborts the sweep
            rows.append([v, "", "", "", "", f"error: {type(exc).__name__}: {exc}"])
    if rc.format == "json":
        _emit(rc, _json_text({**_header(rc), "rows": [dict(zip(SWEEP_HEADER, r)) for r in rows]}))
    else:
        _emit(rc, _csv_text(rc, SWEEP_HEADER, rows))
    return EXIT_OK


def cmd_continue(rc: RunConfig) -> int:
    p = AbelParams.from_sequence(rc.params)
    nf = reduce_to_normal_form(p)
    cfg = rc.integrator()
    inv = find_limit_cycles(nf, rc.window, rc.grid_n, cfg)
    idx = int(rc.extra.get("cycle", 0))
    if not inv.cycles:
        sys.stderr.write("no nonzero cycle to continue\n")
        return EXIT_USAGE
    if not 0 <= idx < len(inv.cycles):
        raise UsageError(f"--cycle must be in [0, {len(inv.cycles) - 1}]")
    direction = INCREASING if rc.extra.get("direction", "increasing") == "increasing" else DECREASING
    q_range = _parse_window(rc.extra.get("range") or f"{nf.q0 - 1.0}:{nf.q0 + 1.0}")
    br = continue_in_q0(nf, inv.cycles[idx], direction, q_range, cfg=cfg)
    if rc.format == "csv":
        rows = [[q, c.x_at_0, c.multiplier, c.stability] for q, c in br.points]
        _emit(rc, _csv_text(rc, ["q0", "x_at_0", "multiplier", "stability"], rows))
    else:
        _emit(rc, _json_text({**_header(rc), "branch": br.to_dict()}))
    return EXIT_OK


def cmd_witness(rc: RunConfig) -> int:
    q2 = float(rc.extra.get("q2", 1.0))
    budget = int(rc.extra.get("budget", 60))
    try:
        res = find_three_cycle_witness(rc.seed, q2=q2, budget=budget, cfg=rc.integrator(),
                                       window=rc.window)
    except WitnessNotFound as exc:
        _emit(rc, _json_text({**_header(rc), "found": False, "best_count": exc.best_count,
                              "search_trace": exc.trace}))
        return EXIT_NOT_FOUND
    _emit(rc, _json_text({**_header(rc), "found": True, **res.to_dict()}))
    return EXIT_OK


# --------------------------------------------------------------------------
# oracle suite

def oracle_rows(cfg: IntegratorConfig = DEFAULT_CONFIG, seed: int = 0, n_random: int = 100) -> list:
    """Closed-form and consistency checks of the integrator, one dict per row."""
    rows = []

    def row(name, err, threshold, detail=""):
        rows.append({"check": name, "max_error": err, "threshold": threshold,
                     "passed": bool(np.isfinite(err) and err < threshold), "detail": detail})

    cases = [("riccati", 1.0 / (2 * math.pi), (0.7, 0.4), np.linspace(-2.0, 0.45, 50)),
             ("cubic", 1.0 / (4 * math.pi), (0.5, 0.3), np.linspace(-0.6, 0.6, 50))]
    for case, coeff, osc, grid in cases:
        grid = grid[grid != 0.0]
        if case == "riccati":
            g, f = TrigPoly(0.0, (0.0,), (0.0,)), TrigPoly(coeff, (osc[1],), (osc[0],))
        else:
            g, f = TrigPoly(coeff, (osc[1],), (osc[0],)), TrigPoly(0.0, (0.0,), (0.0,))
        exact = [closed_form_return_map(case, coeff, x0, osc) for x0 in grid]
        keep = np.array([e is not None for e in exact])
        ex = np.array([e for e in exact if e is not None])
        b = integrate_batch(g, f, grid[keep], 0.0, cfg)
        for k, (label, got, thr) in enumerate((("P", b.P, 1e-8), ("Lp", b.Lp, 1e-6),
                                               ("Lpp", b.Lpp, 1e-6))):
            denom = np.maximum(np.abs(ex[:, k]), 1e-300)
            err = float(np.max(np.abs(got - ex[:, k]) / denom))
            row(f"{case}_{label}", err, thr, f"{int(keep.sum())} points")

    rng = np.random.default_rng(seed)
    errs = []
    while len(errs) < n_random:
        p = AbelParams.from_sequence(rng.uniform(-1.0, 1.0, 6))
        x0 = float(rng.uniform(-0.5, 0.5))
        traj = integrate(p.g(), p.f(), x0, 0.0, 2 * math.pi, cfg)
        if traj.status != "complete":
            continue
        q = math.exp(log_multiplier_quadrature(traj, p.g(), p.f()))
        errs.append(abs(traj.Lp - q) / q)
    row("multiplier_vs_quadrature", float(max(errs)), 1e-8, f"{n_random} random instances")

    one, zero = TrigPoly(1.0, (0.0,), (0.0,)), TrigPoly(0.0, (0.0,), (0.0,))
    traj = integrate(one, zero, 1.0, 0.0, 1.0, cfg)
    # x = (1 - 2t)^(-1/2) crosses the escape bound B at t = (1 - 1/B^2) / 2
    t_exact = 0.5 * (1.0 - cfg.escape_bound ** -2)
    err = abs(traj.t_escape - t_exact) if traj.status == "escaped" else math.inf
    row("blowup_time", err, 1e-6, f"status {traj.status}, t_escape {traj.t_escape}")
    return rows


def cmd_oracle(rc: RunConfig) -> int:
    rows = oracle_rows(rc.integrator(), rc.seed)
    lines = [f"{'check':28s} {'max_error':>12s} {'threshold':>10s}  result"]
    for r in rows:
        lines.append(f"{r['check']:28s} {r['max_error']:12.3e} {r['threshold']:10.1e}  "
                     f"{'PASS' if r['passed'] else 'FAIL'}")
    if rc.output_path:
        sys.stderr.write("\n".join(lines) + "\n")
        _emit(rc, _json_text({**_header(rc), "rows": rows}))
    else:
        sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK if all(r["passed"] for r in rows) else EXIT_ORACLE


COMMANDS = {"analyze": cmd_analyze, "check": cmd_check, "sweep": cmd_sweep,
            "continue": cmd_continue, "witness": cmd_witness, "oracle": cmd_oracle}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--params", help="a0,a1,a2,b0,b1,b2 or a JSON object")
    common.add_argument("--window", default="-10:10", help="x(0) window lo:hi")
    common.add_argument("--grid", type=int, default=512, help="grid points per window side")
    common.add_argument("--rel-tol", type=float, default=DEFAULT_CONFIG.rel_tol)
    common.add_argument("--abs-tol", type=float, default=DEFAULT_CONFIG.abs_tol)
    common.add_argument("--escape-bound", type=float, default=DEFAULT_CONFIG.escape_bound)
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--format", choices=("json", "csv"), default=None)
    common.add_argument("--seed", type=int, default=0)

    parser = _Parser(prog="abelcycles", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("analyze", parents=[common], help="cycle inventory with diagnostics")
    sub.add_parser("check", parents=[common], help="hypothesis report")
    sp = sub.add_parser("sweep", parents=[common], help="cycle counts along a parameter range")
    sp.add_argument("--vary", required=True, help="parameter name (raw or normal form)")
    sp.add_argument("--range", required=True, help="lo:hi:step")
    cp = sub.add_parser("continue", parents=[common], help="follow a cycle in q0")
    cp.add_argument("--cycle", type=int, default=0, help="index into the cycle inventory")
    cp.add_argument("--direction", choices=("increasing", "decreasing"), default="increasing")
    cp.add_argument("--range", help="q0 range lo:hi")
    wp = sub.add_parser("witness", parents=[common], help="search for three limit cycles")
    wp.add_argument("--q2", type=float, choices=(1.0, -1.0), default=1.0)
    wp.add_argument("--budget", type=int, default=60)
    sub.add_parser("oracle", parents=[common], help="integrator self-tests")
    return parser


def _run_config(ns: argparse.Namespace) -> RunConfig:
    params = None
    if ns.command in ("analyze", "check", "sweep", "continue"):
        if not ns.params:
            raise UsageError("--params is required")
        try:
            params = AbelParams.parse(ns.params).as_tuple()
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    try:
        tol = IntegratorConfig(rel_tol=ns.rel_tol, abs_tol=ns.abs_tol,
                               escape_bound=ns.escape_bound).to_dict()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    fmt = ns.format or ("csv" if ns.command == "sweep" else "json")
    extra = {k: getattr(ns, k) for k in ("vary", "range", "cycle", "direction", "q2", "budget")
             if hasattr(ns, k)}
    return RunConfig(ns.command, params, _parse_window(ns.window), ns.grid, tol, ns.out, fmt,
                     ns.seed, extra)


def _join_negative_values(argv: list) -> list:
    """Turn ``--window -10:10`` into ``--window=-10:10`` so argparse accepts it."""
    out, i = [], 0
    while i < len(argv):
        a = argv[i]
        if (a in ("--window", "--range", "--params") and i + 1 < len(argv)
                and argv[i + 1].startswith("-")):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
            continue
        out.append(a)
        i += 1
    return out


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        ns = build_parser().parse_args(_join_negative_values(argv))
        rc = _run_config(ns)
        return COMMANDS[rc.command](rc)
    except UsageError as exc:
        sys.stderr.write(f"abelcycles: usage error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
