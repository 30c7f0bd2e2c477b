"""Command-line front end: ``qzrp {profile,canonical,simulate,verify}``.

Every command writes CSV (default) or JSON.  The resolved configuration is
echoed first: as ``# key = value`` comment lines in CSV, or under ``"config"``
in JSON.  Floats are written with 17 significant digits.

Configuration precedence is command-line flag, then ``--config`` file (flat
``key = value`` lines, ``#`` comments), then built-in defaults.
"""
from __future__ import annotations

import argparse
import json
from concurrent.futures import ProcessPoolExecutor
import logging
import math
import sys
from pathlib import Path
from typing import Any, Iterable, Sequence

from . import __version__
from .defect_kernel import DefectPattern
from .dynamics import SectorBasis, exact_site_law, gillespie
from .errors import QZRPError
from .profiles import CurrentMix, profile
from .qboson import canonical_profile
from .qseries import EnsembleParams, ModelParams, solve_fugacity
from .verify import SUITES, run_suite

log = logging.getLogger("qzrp")

DEFAULTS: dict[str, Any] = {
    "q": 0.2,
    "mu": 0.7,
    "rho": 1.5,
    "y": None,
    "defects": "1",
    "window": "-5:20",
    "shift": 0,
    "a": 1.0,
    "b": 0.0,
    "L": 8,
    "sector": None,
    "headroom": None,
    "seed": 0,
    "events": 1_000_000,
    "tol": 1e-10,
    "tol_scale": 1.0,
    "sweep": None,
    "jobs": 1,
    "suite": "all",
    "out": None,
    "format": "csv",
}

# options whose values may legitimately begin with "-"
_SIGNED_VALUE_FLAGS = ("--window", "--sweep")


def _fmt(x: Any) -> str:
    if isinstance(x, bool) or x is None:
        return json.dumps(x)
    if isinstance(x, float):
        if math.isnan(x) or math.isinf(x):
            return json.dumps(str(x))
        return f"{x:.17g}"
    if isinstance(x, int):
        return str(x)
    return str(x)


def _json(obj: Any) -> str:
    """JSON with floats written to 17 significant digits."""
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_json(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_json(v) for v in obj) + "]"
    if isinstance(obj, float):
        return _fmt(obj)
    if hasattr(obj, "item"):
        return _json(obj.item())
    return json.dumps(obj)


def load_config(path: str | Path) -> dict[str, str]:
    """Read a flat ``key = value`` file; blank lines and ``#`` comments are ignored."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in DEFAULTS:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def _coerce(key: str, value: Any) -> Any:
    if value is None:
        return None
    default = DEFAULTS[key]
    if isinstance(value, str):
        if value.lower() in ("none", ""):
            return None if key not in ("defects",) else ""
        if isinstance(default, bool):
            return value.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        if key in ("y", "headroom"):
            return float(value) if key == "y" else int(value)
    return value


def resolve(args: argparse.Namespace, keys: Iterable[str]) -> dict[str, Any]:
    """Merge defaults, config file and explicit flags for the given keys."""
    cfg = load_config(args.config) if getattr(args, "config", None) else {}
    out = {}
    for key in keys:
        value = DEFAULTS[key]
        if key in cfg:
            value = cfg[key]
        flag = getattr(args, key, None)
        if flag is not None:
            value = flag
        out[key] = _coerce(key, value)
    return out


def parse_window(text: str) -> range:
    """``"a:b"`` to the inclusive site range ``a..b``."""
    try:
        a, b = (int(t) for t in text.split(":"))
    except ValueError as exc:
        raise ValueError(f"window must look like a:b, got {text!r}") from exc
    if b < a:
        raise ValueError("window end precedes its start")
    return range(a, b + 1)


def parse_sweep(text: str) -> list[float]:
    """Comma list ``"0.5,1,2"`` or ``"start:stop:count"`` (inclusive, evenly spaced)."""
    if ":" in text:
        start, stop, count = text.split(":")
        n = int(count)
        if n < 2:
            return [float(start)]
        a, b = float(start), float(stop)
        return [a + (b - a) * i / (n - 1) for i in range(n)]
    return [float(t) for t in text.split(",") if t.strip()]


def _model(cfg: dict) -> ModelParams:
    return ModelParams(cfg["q"], cfg["mu"])


def _ensemble(cfg: dict, params: ModelParams) -> EnsembleParams:
    if cfg["y"] is not None:
        return EnsembleParams.from_y(cfg["y"], params)
    return EnsembleParams.from_rho(cfg["rho"], params, tol=cfg["tol"])


def _emit(fmt: str, config: dict, columns: Sequence[str], rows: list[Sequence[Any]], extra: dict | None = None) -> str:
    if fmt == "json":
        body = {"config": config}
        if extra:
            body.update(extra)
        body["columns"] = list(columns)
        body["rows"] = [list(r) for r in rows]
        return _json(body) + "\n"
    if fmt != "csv":
        raise ValueError("format must be csv or json")
    lines = [f"# {k} = {_fmt(v)}" for k, v in config.items()]
    for k, v in (extra or {}).items():
        lines.append(f"# {k} = {_json(v) if isinstance(v, (dict, list)) else _fmt(v)}")
    lines.append(",".join(columns))
    lines.extend(",".join(_fmt(x) for x in r) for r in rows)
    return "\n".join(lines) + "\n"


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
        log.info("wrote %s", out)
    else:
        sys.stdout.write(text)


# -- commands --------------------------------------------------------------------

PROFILE_COLUMNS = ("rho_avg", "r", "region", "rho", "j_plus", "j_minus", "j_mixed")


def _profile_rows(window: range, pattern: DefectPattern, ens: EnsembleParams, params: ModelParams, mix, shift: int):
    prof = profile(window, pattern, ens, params, mix, shift=shift)
    return [(ens.rho, *row) for row in prof.rows()]


def cmd_profile(args: argparse.Namespace) -> int:
    keys = ["q", "mu", "rho", "y", "defects", "window", "shift", "a", "b", "tol", "sweep", "jobs", "out", "format"]
    cfg = resolve(args, keys)
    params = _model(cfg)
    pattern = DefectPattern.parse(cfg["defects"])
    window = parse_window(cfg["window"])
    mix = CurrentMix(cfg["a"], cfg["b"])
    if cfg["sweep"]:
        points = [EnsembleParams.from_rho(r, params, tol=cfg["tol"]) for r in parse_sweep(cfg["sweep"])]
    else:
        points = [_ensemble(cfg, params)]
    rest = (params, mix, cfg["shift"])
    if cfg["jobs"] > 1 and len(points) > 1:
        # grid points run in worker processes; rows are gathered here in sweep order
        with ProcessPoolExecutor(max_workers=cfg["jobs"]) as pool:
            futures = [pool.submit(_profile_rows, window, pattern, ens, *rest) for ens in points]
            chunks = [f.result() for f in futures]
    else:
        chunks = [_profile_rows(window, pattern, ens, *rest) for ens in points]
    rows = [row for chunk in chunks for row in chunk]
    _write(_emit(cfg["format"], cfg, PROFILE_COLUMNS, rows), cfg["out"])
    return 0


CANONICAL_COLUMNS = ("r", "rho_canonical", "rho_grand")


def cmd_canonical(args: argparse.Namespace) -> int:
    cfg = resolve(args, ["q", "mu", "rho", "defects", "L", "sector", "headroom", "tol", "out", "format"])
    params = _model(cfg)
    pattern = DefectPattern.parse(cfg["defects"])
    L = cfg["L"]
    if cfg["sector"]:
        m1, m2 = (int(t) for t in str(cfg["sector"]).split(","))
        if m1 != pattern.total:
            raise ValueError(f"sector m1={m1} differs from the defect total {pattern.total}")
    else:
        m1, m2 = pattern.total, int(round(cfg["rho"] * L))
    res = canonical_profile(L, pattern.d, m2, params, headroom=cfg["headroom"], tol=cfg["tol"])
    rho_avg = m2 / L
    grand = profile(range(1, L + 1), pattern, EnsembleParams.from_rho(rho_avg, params), params)
    rows = [(r + 1, float(res.rho[r]), float(grand.rho[r])) for r in range(L)]
    report = {
        "m1": m1,
        "m2": m2,
        "second_class_configurations": math.comb(m2 + L - 1, L - 1),
        "headroom": res.headroom,
        "cutoff": res.cutoff,
        "last_change": res.last_change,
    }
    _write(_emit(cfg["format"], cfg, CANONICAL_COLUMNS, rows, report), cfg["out"])
    return 0


SIMULATE_COLUMNS = ("site", "class", "n", "probability", "stderr", "exact")
EXACT_LIMIT = 20_000


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = resolve(args, ["q", "mu", "L", "sector", "a", "b", "seed", "events", "out", "format"])
    params = _model(cfg)
    sector = tuple(int(t) for t in str(cfg["sector"] or "1,2").split(","))
    mix = CurrentMix(cfg["a"], cfg["b"])
    res = gillespie(cfg["L"], sector, params, mix, events=cfg["events"], seed=cfg["seed"])
    size = math.prod(math.comb(t + cfg["L"] - 1, cfg["L"] - 1) for t in sector)
    exact = exact_site_law(cfg["L"], sector, params, mix) if size <= EXACT_LIMIT else None
    rows = []
    for k in range(res.law.shape[0]):
        for c in range(res.law.shape[1]):
            for n in range(sector[c] + 1):
                ex = float(exact[k, c, n]) if exact is not None else float("nan")
                rows.append((k + 1, c + 1, n, float(res.law[k, c, n]), float(res.stderr[k, c, n]), ex))
    report = {"events": res.events, "simulated_time": res.time, "batches": res.batches, "seconds": res.wall}
    _write(_emit(cfg["format"], cfg, SIMULATE_COLUMNS, rows, report), cfg["out"])
    return 0


VERIFY_COLUMNS = ("suite", "check", "error", "tol", "passed")


def cmd_verify(args: argparse.Namespace) -> int:
    cfg = resolve(args, ["q", "mu", "suite", "tol_scale", "seed", "out", "format"])
    params = _model(cfg)
    names = sorted(SUITES) if cfg["suite"] == "all" else [s.strip() for s in cfg["suite"].split(",")]
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise ValueError(f"unknown suite(s) {unknown}; choose from {sorted(SUITES)}")
    reports = [run_suite(n, params, tol_scale=cfg["tol_scale"], seed=cfg["seed"]) for n in names]
    rows = [(r.suite, c.name, c.error, c.tol, c.passed) for r in reports for c in r.checks]
    timing = {r.suite: {"passed": r.passed, "seconds": r.seconds} for r in reports}
    _write(_emit(cfg["format"], cfg, VERIFY_COLUMNS, rows, {"suites": timing}), cfg["out"])
    return 0 if all(r.passed for r in reports) else 1


# -- parser ----------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, keys: Sequence[str]) -> None:
    spec = {
        "q": dict(type=float, help="deformation parameter in (0, 1)"),
        "mu": dict(type=float, help="spectral parameter mu in (0, 1)"),
        "rho": dict(type=float, help="average second-class density"),
        "y": dict(type=float, help="fugacity in (0, 1); overrides --rho"),
        "defects": dict(help="first-class occupancies on sites 1..s, e.g. 2,1,3"),
        "window": dict(help="inclusive site range a:b, e.g. -5:20"),
        "shift": dict(type=int, help="offset added to reported site labels"),
        "a": dict(type=float, help="weight of the right-moving generator"),
        "b": dict(type=float, help="weight of the left-moving generator"),
        "L": dict(type=int, help="ring size"),
        "sector": dict(help="particle totals m1,m2"),
        "headroom": dict(type=int, help="fixed Fock headroom (adaptive if omitted)"),
        "seed": dict(type=int, help="random seed"),
        "events": dict(type=int, help="number of simulated jumps"),
        "tol": dict(type=float, help="solver / convergence tolerance"),
        "tol_scale": dict(type=float, help="multiply every check tolerance"),
        "sweep": dict(help="density grid: comma list or start:stop:count"),
        "jobs": dict(type=int, help="worker processes for density sweeps"),
        "suite": dict(help=f"comma list of suites or 'all' ({', '.join(sorted(SUITES))})"),
        "out": dict(help="output path (stdout if omitted)"),
        "format": dict(choices=("csv", "json"), help="output format"),
    }
    for key in keys:
        flag = "--" + key.replace("_", "-")
        p.add_argument(flag, dest=key, default=None, **spec[key])
    p.add_argument("--config", help="flat key = value file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qzrp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("profile", help="grand-canonical density and current profile")
    _common(p, ["q", "mu", "rho", "y", "defects", "window", "shift", "a", "b", "tol", "sweep", "jobs", "out", "format"])
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("canonical", help="finite-ring canonical density profile")
    _common(p, ["q", "mu", "rho", "defects", "L", "sector", "headroom", "tol", "out", "format"])
    p.set_defaults(func=cmd_canonical)

    p = sub.add_parser("simulate", help="continuous-time Monte Carlo on a ring")
    _common(p, ["q", "mu", "L", "sector", "a", "b", "seed", "events", "out", "format"])
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run self-check suites")
    _common(p, ["q", "mu", "suite", "tol_scale", "seed", "out", "format"])
    p.set_defaults(func=cmd_verify)
    return parser


def _join_signed(argv: list[str]) -> list[str]:
    # allow "--window -5:20" as well as "--window=-5:20"
    out, i = [], 0
    while i < len(argv):
        if argv[i] in _SIGNED_VALUE_FLAGS and i + 1 < len(argv):
            out.append(f"{argv[i]}={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(_join_signed(argv))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (QZRPError, ValueError) as exc:
        parser.exit(2, f"qzrp: error: {exc}\n")


if __name__ == "__main__":
    sys.exit(main())
