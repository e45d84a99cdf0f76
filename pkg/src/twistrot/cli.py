"""Command-line front end.

Every run reads an optional TOML config (a ``[map]`` table plus one table
per command), applies flag overrides, writes the resolved configuration to
the output directory and then the command's artifacts.  Identical config
and seed give byte-identical files.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .expr import ParseError
from .maps import AnnulusMap, LiftSpec, _load_toml, lift_from_mapping, parse_lift, power_minus
from .pseudoorbit import (
    DEFAULT_CELL_CAP,
    DEFAULT_LADDER,
    EXIT_CLIMBING,
    EXIT_FREE_CURVE,
    EXIT_INDETERMINATE,
    ClimbingPath,
    FreeCurveCertificate,
    dichotomy,
    write_certificate,
)

EXIT_CONFIG = 64
EXIT_MODULE = 65
THREADS_ENV = "TWISTROT_THREADS"

INTERVAL_HEADER = [
    "source", "lower", "upper", "lower_radius", "upper_radius",
    "lower_cert", "upper_cert", "lower_snap", "upper_snap",
]

DEFAULTS: dict[str, dict] = {
    "run": {"out": "twistrot-out", "seed": 0, "threads": 0},
    "interval": {"grid": [32, 32], "n": 20000, "qmax": 64, "certify_qmax": 8, "fibers": 128},
    "certify": {"p": 0, "q": 1, "eps_ladder": list(DEFAULT_LADDER), "cell_cap": DEFAULT_CELL_CAP},
    "tongues": {
        "t_min": -0.1, "t_max": 0.1, "step": 0.01, "n": 20000, "grid": [16, 16],
        "qmax": 64, "lock_pq": "", "audit_s": 0, "audit_pq": "",
    },
    "orbits": {"p": 0, "q": 1, "grid": 48},
    "manifolds": {
        "p": 0, "q": 1, "arclength": 20.0, "h_max": 1e-3, "window": 2,
        "attractor_iters": 4, "band": 1.0,
    },
}

COMMANDS = ("interval", "certify", "tongues", "orbits", "manifolds")


class ConfigError(ValueError):
    pass


class ModuleFailure(RuntimeError):
    pass


@dataclass
class RunConfig:
    command: str
    map_text: str
    lift: LiftSpec
    params: dict
    out: Path
    seed: int
    threads: int
    resolved: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# configuration


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _parse_pq(text: str) -> Fraction | None:
    if not text:
        return None
    try:
        return Fraction(str(text))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"not a rational p/q: {text!r}") from exc


def validate(command: str, p: dict, run: dict) -> None:
    _check(isinstance(run["seed"], int) and run["seed"] >= 0, "seed must be a non-negative integer")
    _check(isinstance(run["threads"], int) and run["threads"] >= 0, "threads must be a non-negative integer")
    if "grid" in p:
        g = p["grid"]
        if command == "orbits":
            _check(int(g) >= 1, "grid must be >= 1")
        else:
            _check(len(g) == 2 and all(int(v) >= 1 for v in g), "grid must be two positive integers")
    for key in ("n", "qmax", "certify_qmax", "fibers", "q", "cell_cap"):
        if key in p:
            _check(int(p[key]) >= 1, f"{key} must be >= 1")
    for key in ("step", "arclength", "h_max", "band"):
        if key in p:
            _check(float(p[key]) > 0, f"{key} must be positive")
    for key in ("window", "attractor_iters", "audit_s"):
        if key in p:
            _check(int(p[key]) >= 0, f"{key} must be >= 0")
    if "t_min" in p:
        _check(float(p["t_max"]) >= float(p["t_min"]), "t range must be ordered (t_min <= t_max)")
    if "eps_ladder" in p:
        ladder = [float(e) for e in p["eps_ladder"]]
        _check(len(ladder) > 0 and all(e > 0 for e in ladder), "eps ladder entries must be positive")
        _check(all(b < a for a, b in zip(ladder, ladder[1:])), "eps ladder must be strictly decreasing")
    for key in ("lock_pq", "audit_pq"):
        if key in p:
            v = _parse_pq(p[key])
            _check(v is None or v.denominator >= 1, f"{key} must be p/q")


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twistrot", description="Vertical rotation sets of twist maps of the torus.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="TOML config file")
        src = sp.add_mutually_exclusive_group()
        src.add_argument("--map", dest="map_text", help="map definition text, e.g. 'k=1; phi1=0; phi2=0; t=0.3'")
        src.add_argument("--map-file", help="file holding map definition text or a TOML [map] table")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int)
        for key, default in DEFAULTS[name].items():
            if isinstance(default, list):
                kind = float if isinstance(default[0], float) else int
                sp.add_argument(_flag(key), dest=key, type=kind, nargs="+")
            else:
                sp.add_argument(_flag(key), dest=key, type=type(default))
    return parser


def _map_text_from(data) -> str:
    if isinstance(data, str):
        return data
    if "text" in data:
        return str(data["text"])
    return lift_from_mapping(data).to_text()


def resolve(args: argparse.Namespace) -> RunConfig:
    command = args.command
    data: dict = {}
    if args.config:
        try:
            data = _load_toml(Path(args.config))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    params = copy.deepcopy(DEFAULTS[command])
    params.update(data.get(command, {}))
    run = copy.deepcopy(DEFAULTS["run"])
    run.update(data.get("run", {}))
    for key in DEFAULTS[command]:
        v = getattr(args, key, None)
        if v is not None:
            params[key] = v
    for key in ("out", "seed", "threads"):
        v = getattr(args, key, None)
        if v is not None:
            run[key] = v
    unknown = set(params) - set(DEFAULTS[command])
    _check(not unknown, f"unknown {command} settings: {', '.join(sorted(unknown))}")
    if not run["threads"]:
        env = os.environ.get(THREADS_ENV, "1")
        _check(env.isdigit() and int(env) >= 1, f"{THREADS_ENV} must be a positive integer")
        run["threads"] = int(env)
    validate(command, params, run)

    if args.map_text is not None:
        text = args.map_text
    elif args.map_file is not None:
        try:
            raw = Path(args.map_file).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read map file: {exc}") from exc
        if args.map_file.endswith(".toml"):
            loaded = _load_toml(Path(args.map_file))
            text = _map_text_from(loaded.get("map", loaded))
        else:
            text = raw
    elif "map" in data:
        text = _map_text_from(data["map"])
    else:
        raise ConfigError("no map given (use --map, --map-file or a [map] table)")
    lift = parse_lift(text)
    resolved = {"command": command, "map": lift.to_text(), "run": dict(run), command: params}
    resolved["run"].pop("threads")  # execution detail, not part of the result
    return RunConfig(command, text, lift, params, Path(run["out"]), int(run["seed"]), int(run["threads"]), resolved)


# ---------------------------------------------------------------------------
# commands


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _interval_row(source, iv) -> list[str]:
    return [
        source, _fmt(float(iv.lower)), _fmt(float(iv.upper)), _fmt(float(iv.lower_radius)),
        _fmt(float(iv.upper_radius)), iv.lower_cert, iv.upper_cert, _fmt(iv.lower_snap), _fmt(iv.upper_snap),
    ]


def _csv(header, rows) -> str:
    import csv
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def cmd_interval(cfg: RunConfig) -> tuple[int, list[str]]:
    from .lecalvez import certified_bounds
    from .rotation import interval_sample, merge_bounds

    p = cfg.params
    inner = interval_sample(cfg.lift, tuple(p["grid"]), int(p["n"]), cfg.seed, cfg.threads, int(p["qmax"]))
    outer = certified_bounds(cfg.lift, int(p["certify_qmax"]), int(p["fibers"]))
    merged = merge_bounds(inner, outer)
    ok = outer.contains(inner)
    (cfg.out / "interval.csv").write_text(
        _csv(INTERVAL_HEADER, [_interval_row("inner", inner), _interval_row("outer", outer), _interval_row("merged", merged)])
    )
    lines = [
        f"inner [{inner.lower:.12g}, {inner.upper:.12g}] radius {max(inner.lower_radius, inner.upper_radius):.3g}",
        f"outer [{outer.lower:.12g}, {outer.upper:.12g}] (triplet-certified, qmax {p['certify_qmax']})",
        f"inner within outer: {'yes' if ok else 'NO'}",
    ]
    if not ok:
        raise ModuleFailure("sampled interval is not contained in the certified bounds\n" + "\n".join(lines))
    return 0, lines


def cmd_certify(cfg: RunConfig) -> tuple[int, list[str]]:
    p = cfg.params
    h = power_minus(cfg.lift, int(p["q"]), int(p["p"]))
    result = dichotomy(h, tuple(float(e) for e in p["eps_ladder"]), cell_cap=int(p["cell_cap"]))
    path = cfg.out / "certificate.txt"
    write_certificate(path, result, h)
    if isinstance(result, FreeCurveCertificate):
        return EXIT_FREE_CURVE, [
            f"free curve for p/q = {p['p']}/{p['q']}: eps {result.eps:g}, clearance {result.clearance:.6g}",
            f"{len(result.gamma)} vertices written to {path.name}",
        ]
    if isinstance(result, ClimbingPath):
        return EXIT_CLIMBING, [
            f"climbing pseudo orbit for p/q = {p['p']}/{p['q']}: eps {result.eps:g}, "
            f"{len(result.points)} points, max defect {result.max_defect(h):.3g}",
        ]
    return EXIT_INDETERMINATE, [f"indeterminate: {result.reason}"]


def cmd_tongues(cfg: RunConfig) -> tuple[int, list[str]]:
    from .lecalvez import triplet_monotonicity_audit
    from .rotation import MonotonicityWarning, monotonicity_violations, plateau_detect, t_values, tongue_csv, tongue_scan

    p = cfg.params
    lock = _parse_pq(p["lock_pq"])
    lock_check = None
    if lock is not None:
        def lock_check(t, L=cfg.lift, pq=lock):
            h = power_minus(L.translated(t), pq.denominator, pq.numerator)
            return isinstance(dichotomy(h), FreeCurveCertificate)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MonotonicityWarning)
        rows = tongue_scan(
            cfg.lift, (float(p["t_min"]), float(p["t_max"])), float(p["step"]), int(p["n"]),
            tuple(p["grid"]), int(p["qmax"]), cfg.seed, cfg.threads, lock_check,
        )
    (cfg.out / "tongues.csv").write_text(tongue_csv(rows))
    bad = monotonicity_violations(rows)
    lines = [f"{len(rows)} rows; monotonicity violations: {len(bad)}"]
    lines += [f"  violation t={float(a)!r} -> t'={float(b)!r}" for a, b in bad[:20]]
    for pl in plateau_detect(rows):
        lines.append(f"plateau {pl.side} = {_fmt(pl.value)} on [{float(pl.t_start)!r}, {float(pl.t_end)!r}] ({pl.rows} rows)")
    audit_pq = _parse_pq(p["audit_pq"])
    if audit_pq is not None:
        ts = t_values(float(p["t_min"]), float(p["t_max"]), float(p["step"]))
        # the audit conjugates relative to the base map, whose t is the scan origin
        audit = triplet_monotonicity_audit(cfg.lift, int(p["audit_s"]), audit_pq.numerator, audit_pq.denominator, ts)
        lines.append(f"triplet monotonicity audit: {'passed' if audit.passed else 'FAILED'} ({len(audit.regressions)} regressions)")
    return 0, lines


def cmd_orbits(cfg: RunConfig) -> tuple[int, list[str]]:
    from .periodic import CensusWarning, lefschetz_audit, orbits_csv

    p = cfg.params
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CensusWarning)
        rep = lefschetz_audit(cfg.lift, int(p["p"]), int(p["q"]), int(p["grid"]))
    (cfg.out / "orbits.csv").write_text(orbits_csv(rep.orbits))
    census = ", ".join(f"{k}: {v}" for k, v in sorted(rep.census.items()))
    lines = [
        f"(p, q) = ({rep.p}, {rep.q}); {len(rep.orbits)} orbits; census {{{census}}}",
        f"index sum {rep.index_sum} (expected {rep.expected}); audit {'passed' if rep.passed else 'not passed'}",
    ]
    lines += [f"warning: {w}" for w in rep.warnings]
    return 0, lines


def cmd_manifolds(cfg: RunConfig) -> tuple[int, list[str]]:
    from .manifolds import (
        attractor_approx, boundedness_check, crossings_csv, grow_branches, mesh_probe, svg_scene,
    )
    from .periodic import SADDLE, find_orbits

    p = cfg.params
    L, q, pp = cfg.lift, int(p["q"]), int(p["p"])
    saddle = None
    for s in range(abs(L.k) * q):
        saddle = next((o for o in find_orbits(L, s, pp, q) if o.kind == SADDLE), None)
        if saddle is not None:
            break
    if saddle is None:
        raise ModuleFailure(f"no hyperbolic saddle of type p/q = {pp}/{q} found")
    arcs = grow_branches(L, saddle, float(p["arclength"]), float(p["h_max"]), threads=cfg.threads)
    rep = mesh_probe(L, saddle, int(p["window"]), arcs=arcs)
    (cfg.out / "crossings.csv").write_text(crossings_csv(rep))
    lines = [
        f"saddle (s={saddle.s}) at ({saddle.lift[0]:.12g}, {saddle.lift[1]:.12g}), "
        f"eigenvalues {saddle.eigenvalues[0].real:.9g}, {saddle.eigenvalues[1].real:.9g}",
        f"mesh verdict: {rep.verdict}; {len(rep.vectors)} translates with transverse crossings; "
        f"{rep.transverse_count} transverse crossings",
    ]
    if not all(a.complete for a in arcs):
        lines.append("warning: some branches stopped at the vertex budget")
    band = float(p["band"])
    for arc in arcs:
        tag = f"{arc.kind}{'+' if arc.branch[1] > 0 else '-'}"
        for direction in ("above", "below"):
            b = boundedness_check(arc, direction, band)
            lines.append(f"{tag} {direction}: {b.verdict} ({b.value:.6g})")
    layers = {
        "gamma": [], "iterates": [],
        "unstable": [a.polyline for a in arcs if a.kind == "unstable"],
        "stable": [a.polyline for a in arcs if a.kind == "stable"],
        "crossings": np.array([[c.x, c.y] for cs in rep.crossings.values() for c in cs if c.transverse]).reshape(-1, 2),
    }
    iters = int(p["attractor_iters"])
    if iters > 0:
        h = power_minus(L, q, pp)
        cert = dichotomy(h)
        if isinstance(cert, FreeCurveCertificate):
            wu = np.vstack([a.polyline for a in arcs if a.kind == "unstable"])
            A = attractor_approx(h, cert, iters, unstable=wu)
            layers["gamma"] = [cert.gamma]
            layers["iterates"] = A.curves[1:]
            lines.append(
                f"attractor: {iters} nested iterates; hull top drops "
                + ", ".join(f"{v:.4g}" for v in A.hull_steps)
                + f"; sandwich {'holds' if A.sandwich else 'fails'}"
            )
        else:
            lines.append(f"attractor: skipped ({type(cert).__name__})")
    ys = np.concatenate([a.polyline[:, 1] for a in arcs])
    lo, hi = float(np.quantile(ys, 0.01)), float(np.quantile(ys, 0.99))
    (cfg.out / "manifolds.svg").write_text(svg_scene(layers, (lo - 0.1, hi + 0.1)))
    return 0, lines


HANDLERS = {
    "interval": cmd_interval,
    "certify": cmd_certify,
    "tongues": cmd_tongues,
    "orbits": cmd_orbits,
    "manifolds": cmd_manifolds,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else 0
    try:
        cfg = resolve(args)
    except (ConfigError, ParseError, ValueError) as exc:
        print(f"twistrot: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / "config.json").write_text(json.dumps(cfg.resolved, indent=2, sort_keys=True) + "\n")
    try:
        code, lines = HANDLERS[cfg.command](cfg)
    except Exception as exc:  # any module failure maps to one exit code
        print(f"twistrot {cfg.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_MODULE
    summary = "\n".join(lines) + "\n"
    (cfg.out / "summary.txt").write_text(summary)
    sys.stdout.write(summary)
    return code


if __name__ == "__main__":
    sys.exit(main())
