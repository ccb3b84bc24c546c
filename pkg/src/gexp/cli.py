"""Command-line front end: config parsing, dispatch, CSV/JSON emission.

Subcommands map one-to-one onto the experiment runners plus three
single-operation commands (gheat, walk, capacity).  Output rows follow a
fixed schema: experiment, params, computed, reference, tolerance, verdict,
runtime_ms.  Runs are reproducible: identical configuration and seed emit
byte-identical output.  To keep that guarantee the runtime_ms column is
written as 0 unless --timings is given; measured wall-clock always goes to
stderr.

Configuration can come from a flat key=value file (one pair per line, #
comments); command-line flags override file values and unknown keys are
rejected.  GEXP_THREADS caps the worker count for subcommands that fan out
over independent jobs (0 or unset means automatic).
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analytic import gcap_onesided_sup, gcap_sup_abs
from .core import VolatilityBand, terminal_functional, running_max_abs_functional
from .experiments import (
    ExperimentRecord,
    LilSchedule,
    SmallDevSchedule,
    phi_battery,
    run_axioms,
    run_clt,
    run_donsker,
    run_lil,
    run_rosenthal,
    run_smalldev,
)
from .lattice import (
    SpatialGrid,
    StepFamily,
    WalkSpec,
    exact_walk_value,
    final_position_statistic,
    grid_walk_value,
    max_abs_statistic,
    max_signed_statistic,
    walk_capacity,
)
from .pde import PdeGrid, gnormal_value

__all__ = ["RunConfig", "parse_config", "dispatch", "main", "worker_count"]

_SUBCOMMANDS = ("gheat", "walk", "capacity", "clt", "donsker", "smalldev", "lil", "rosenthal", "axioms")

# Per-subcommand parameter schema: key -> (type tag, default).
_SCHEMAS: dict[str, dict[str, tuple[str, object]]] = {
    "gheat": {"phi": ("str", "convex"), "half_width": ("float", 8.0), "points": ("int", 801),
              "horizon": ("float", 1.0)},
    "walk": {"functional": ("str", "convex"), "n": ("int", 256), "k": ("int", 16),
             "backend": ("str", "grid"), "r": ("int", 4)},
    "capacity": {"event": ("str", "supabs"), "dir": ("str", "le"), "x": ("float", 0.5),
                 "n": ("int", 512), "k": ("int", 4), "delta": ("float", 0.1), "r": ("int", 8)},
    "clt": {"n_list": ("int_list", (64, 256, 1024)), "k": ("int", 16), "r": ("int", 4),
            "final_tol": ("float", 0.02), "two_time": ("bool", True), "two_time_n": ("int", 256)},
    "donsker": {"n_list": ("int_list", (256, 1024)), "x_list": ("float_list", (0.5, 1.0)),
                "k": ("int", 4), "delta": ("float", 0.1), "widen": ("float", 0.03),
                "moments": ("bool", True), "onesided": ("bool", True), "twosided": ("bool", True)},
    "smalldev": {"n_list": ("int_list", (512,)), "x": ("float_list", (0.4,)),
                 "power": ("float", 0.25), "k": ("int", 4), "delta": ("float", 0.1),
                 "widen": ("float", 0.03), "joint": ("bool", True), "joint_n": ("int", 1024),
                 "trend": ("bool", True)},
    "lil": {"sigma": ("str", "hi"), "seeds": ("int", 8), "n_max": ("int", 10**6),
            "first": ("int", 100), "win_lo": ("float", 0.6), "win_hi": ("float", 1.4),
            "min_pass": ("int", 6)},
    "rosenthal": {"p_list": ("int_list", (2,)), "n_list": ("int_list", (16, 64, 256, 1024)),
                  "k": ("int", 4), "r": ("int", 2)},
    "axioms": {"n": ("int", 6), "count": ("int", 50), "k": ("int", 2), "tol": ("float", 1e-9)},
}


@dataclass
class RunConfig:
    """Effective configuration of one CLI invocation."""

    subcommand: str
    band: VolatilityBand
    seed: int = 0
    out: str | None = None
    fmt: str = "csv"
    timings: bool = False
    params: dict = field(default_factory=dict)


class ConfigError(ValueError):
    pass


def worker_count() -> int:
    """Worker cap from GEXP_THREADS (0 or unset = automatic)."""
    raw = os.environ.get("GEXP_THREADS", "0")
    try:
        v = int(raw)
    except ValueError as exc:
        raise ConfigError(f"GEXP_THREADS must be an integer, got {raw!r}") from exc
    if v < 0:
        raise ConfigError(f"GEXP_THREADS must be >= 0, got {v}")
    if v == 0:
        return min(os.cpu_count() or 1, 8)
    return v


def _parse_value(key: str, tag: str, raw):
    if not isinstance(raw, str):
        return raw
    try:
        if tag == "int":
            return int(raw)
        if tag == "float":
            return float(raw)
        if tag == "bool":
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if tag == "int_list":
            return tuple(int(v) for v in raw.split(",") if v)
        if tag == "float_list":
            return tuple(float(v) for v in raw.split(",") if v)
        return raw
    except ValueError as exc:
        raise ConfigError(f"malformed value for key '{key}': {raw!r}") from exc


def _read_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gexp",
        description="Band-ambiguity walk expectations, capacities and limit-theorem experiments",
    )
    sub = parser.add_subparsers(dest="subcommand", metavar="{" + ",".join(_SUBCOMMANDS) + "}")
    for name, schema in _SCHEMAS.items():
        p = sub.add_parser(name)
        p.add_argument("--band", type=str, default=None, help="sigma_lo,sigma_hi (default 0.5,1.0)")
        p.add_argument("--seed", type=str, default=None, help="64-bit integer seed (default 0)")
        p.add_argument("--out", type=str, default=None, help="output path (default stdout)")
        p.add_argument("--format", type=str, default=None, choices=("csv", "json"))
        p.add_argument("--config", type=str, default=None, help="flat key=value config file")
        p.add_argument("--timings", action="store_true", help="write measured runtime_ms")
        for key in schema:
            p.add_argument(f"--{key}", type=str, default=None)
    return parser


def parse_config(argv: list[str]) -> RunConfig:
    """Resolve flags and the optional config file into a RunConfig.

    File values act as defaults; command-line flags override them.  Unknown
    file keys, malformed numbers and an inverted band are configuration
    errors.
    """
    parser = _build_parser()
    ns = parser.parse_args(argv)
    if ns.subcommand is None:
        raise ConfigError("missing subcommand; valid subcommands: " + ", ".join(_SUBCOMMANDS))
    schema = _SCHEMAS[ns.subcommand]

    file_values: dict[str, str] = {}
    if ns.config:
        file_values = _read_config_file(ns.config)
        known = set(schema) | {"band", "seed", "out", "format", "timings"}
        unknown = sorted(set(file_values) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s) for '{ns.subcommand}': {', '.join(unknown)}")

    def effective(key: str, flag_value):
        if flag_value is not None:
            return flag_value
        return file_values.get(key)

    band_raw = effective("band", ns.band) or "0.5,1.0"
    parts = band_raw.split(",")
    if len(parts) != 2:
        raise ConfigError(f"malformed value for key 'band': {band_raw!r}")
    try:
        lo, hi = float(parts[0]), float(parts[1])
    except ValueError as exc:
        raise ConfigError(f"malformed value for key 'band': {band_raw!r}") from exc
    if lo > hi:
        raise ConfigError(f"sigma_lo > sigma_hi: {lo!r} > {hi!r}")
    try:
        band = VolatilityBand(lo, hi)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    seed_raw = effective("seed", ns.seed)
    seed = _parse_value("seed", "int", seed_raw) if seed_raw is not None else 0

    fmt = effective("format", ns.format) or "csv"
    if fmt not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {fmt!r}")

    timings = ns.timings or _parse_value("timings", "bool", file_values.get("timings", "false"))

    params = {}
    for key, (tag, default) in schema.items():
        raw = effective(key, getattr(ns, key))
        params[key] = default if raw is None else _parse_value(key, tag, raw)

    return RunConfig(
        subcommand=ns.subcommand,
        band=band,
        seed=seed,
        out=effective("out", ns.out),
        fmt=fmt,
        timings=bool(timings),
        params=params,
    )


# ---------------------------------------------------------------------------
# Single-operation subcommands
# ---------------------------------------------------------------------------


def _pair_rows(prefix, value, tol, extra, refs=None):
    rows = []
    p = dict(extra)
    p["tol"] = tol
    t0 = time.perf_counter()
    if refs is not None:
        rows.append(_mk(f"{prefix}/upper", p, (value.upper,), refs[0], max(tol, 1e-3), "abs_diff", t0))
        rows.append(_mk(f"{prefix}/lower", p, (value.lower,), refs[1], max(tol, 1e-3), "abs_diff", t0))
    else:
        rows.append(_mk(f"{prefix}/upper", p, (value.upper,), None, math.inf, "info", t0))
        rows.append(_mk(f"{prefix}/lower", p, (value.lower,), None, math.inf, "info", t0))
    rows.append(_mk(f"{prefix}/pair_order", p, (value.lower - value.upper,), 0.0, tol, "le_slack", t0))
    return rows


def _mk(experiment, params, computed, reference, tolerance, check, t0):
    from .experiments import recompute_verdict

    row = ExperimentRecord(
        experiment=experiment,
        params=dict(params),
        computed=tuple(float(v) for v in computed),
        reference=None if reference is None else float(reference),
        tolerance=float(tolerance),
        check=check,
        verdict=True,
        runtime_ms=(time.perf_counter() - t0) * 1e3,
    )
    return ExperimentRecord(**{**row.__dict__, "verdict": recompute_verdict(row)})


def _job_gheat(cfg: RunConfig) -> list[ExperimentRecord]:
    battery = phi_battery()
    name = cfg.params["phi"]
    if name not in battery:
        raise ConfigError(f"unknown phi {name!r}; choices: {', '.join(battery)}")
    grid = PdeGrid(half_width=cfg.params["half_width"], points=cfg.params["points"],
                   horizon=cfg.params["horizon"])
    pv = gnormal_value(battery[name], cfg.band, grid)
    refs = None
    if name == "convex" and cfg.params["horizon"] == 1.0:
        refs = (cfg.band.sigma_hi**2, cfg.band.sigma_lo**2)
    elif name == "concave" and cfg.params["horizon"] == 1.0:
        refs = (-cfg.band.sigma_lo**2, -cfg.band.sigma_hi**2)
    extra = {"band": (cfg.band.sigma_lo, cfg.band.sigma_hi), "phi": name,
             "points": grid.points, "horizon": grid.horizon}
    return _pair_rows("gheat", pv.pair, pv.backend_tol, extra, refs)


def _walk_functional(name: str):
    battery = phi_battery()
    if name in battery:
        return terminal_functional(battery[name])
    if name == "max_square":
        return running_max_abs_functional(lambda m, x: m**2)
    raise ConfigError(f"unknown functional {name!r}; choices: {', '.join(list(battery) + ['max_square'])}")


def _job_walk(cfg: RunConfig) -> list[ExperimentRecord]:
    f = _walk_functional(cfg.params["functional"])
    fam = StepFamily.from_band(cfg.band, cfg.params["k"])
    spec = WalkSpec(n=cfg.params["n"], family=fam, scale="sqrt_n")
    backend = cfg.params["backend"]
    if backend == "exact":
        dv = exact_walk_value(spec, f)
    elif backend in ("grid", "auto"):
        grid = SpatialGrid.for_walk(spec, points_per_step=cfg.params["r"])
        dv = grid_walk_value(spec, grid, f)
    else:
        raise ConfigError(f"unknown backend {backend!r}")
    extra = {"band": (cfg.band.sigma_lo, cfg.band.sigma_hi), "functional": cfg.params["functional"],
             "n": spec.n, "k": fam.k, "backend": backend}
    tol = dv.backend_tol if math.isfinite(dv.backend_tol) else 1e-9
    return _pair_rows("walk", dv.pair, tol, extra)


def _job_capacity(cfg: RunConfig) -> list[ExperimentRecord]:
    x = cfg.params["x"]
    if not (x > 0):
        raise ConfigError(f"capacity threshold x must be positive, got {x!r}")
    event_name = cfg.params["event"]
    stats = {"supabs": max_abs_statistic, "supone": max_signed_statistic, "final": final_position_statistic}
    if event_name not in stats:
        raise ConfigError(f"unknown event {event_name!r}; choices: {', '.join(stats)}")
    direction = cfg.params["dir"]
    if direction not in ("le", "ge"):
        raise ConfigError(f"dir must be le or ge, got {direction!r}")
    fam = StepFamily.from_band(cfg.band, cfg.params["k"])
    spec = WalkSpec(n=cfg.params["n"], family=fam, scale="sqrt_n")
    t0 = time.perf_counter()
    br = walk_capacity(spec, (stats[event_name](), x, direction), cfg.params["delta"],
                       points_per_step=cfg.params["r"])
    p = {"band": (cfg.band.sigma_lo, cfg.band.sigma_hi), "event": event_name, "dir": direction,
         "x": x, "n": spec.n, "delta": br.delta, "tol": br.backend_tol}
    rows = [
        _mk("capacity/V_bracket", p, (br.inner.upper_cap, br.outer.upper_cap), None, math.inf, "info", t0),
        _mk("capacity/v_bracket", p, (br.inner.lower_cap, br.outer.lower_cap), None, math.inf, "info", t0),
        _mk("capacity/V_bracket_order", p, (br.inner.upper_cap - br.outer.upper_cap,), 0.0,
            max(br.backend_tol, 1e-9) if math.isfinite(br.backend_tol) else 1e-6, "le_slack", t0),
        _mk("capacity/v_bracket_order", p, (br.inner.lower_cap - br.outer.lower_cap,), 0.0,
            max(br.backend_tol, 1e-9) if math.isfinite(br.backend_tol) else 1e-6, "le_slack", t0),
    ]
    ref = None
    if event_name == "supabs":
        ref = gcap_sup_abs(x, cfg.band, direction)
    elif event_name == "supone" and direction == "ge":
        ref = gcap_onesided_sup(x, cfg.band)
    if ref is not None:
        rows.append(_mk("capacity/V_contains_limit", p, (br.inner.upper_cap, br.outer.upper_cap),
                        ref.upper_cap, 0.03, "bracket_contains", t0))
        rows.append(_mk("capacity/v_contains_limit", p, (br.inner.lower_cap, br.outer.lower_cap),
                        ref.lower_cap, 0.03, "bracket_contains", t0))
    return rows


def _job_clt(cfg: RunConfig) -> list[ExperimentRecord]:
    names = list(phi_battery())
    workers = worker_count()
    common = dict(
        n_list=cfg.params["n_list"], k_sigma=cfg.params["k"], points_per_step=cfg.params["r"],
        final_tol=cfg.params["final_tol"], two_time=False,
    )
    if workers > 1 and len(names) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda nm: run_clt(cfg.band, phi_names=(nm,), **common), names))
        rows = [r for part in parts for r in part]
    else:
        rows = run_clt(cfg.band, phi_names=names, **common)
    if cfg.params["two_time"]:
        rows.extend(
            run_clt(cfg.band, phi_names=(), n_list=cfg.params["n_list"], two_time=True,
                    two_time_n=cfg.params["two_time_n"])
        )
    return rows


def _job_donsker(cfg: RunConfig) -> list[ExperimentRecord]:
    return run_donsker(
        cfg.band, n_list=cfg.params["n_list"], x_list=cfg.params["x_list"],
        k_sigma=cfg.params["k"], delta=cfg.params["delta"], widen=cfg.params["widen"],
        include_moments=cfg.params["moments"], include_one_sided=cfg.params["onesided"],
        include_two_sided=cfg.params["twosided"],
    )


def _job_smalldev(cfg: RunConfig) -> list[ExperimentRecord]:
    schedule = SmallDevSchedule(power=cfg.params["power"], fixed_x=tuple(cfg.params["x"]))
    return run_smalldev(
        cfg.band, schedule=schedule, n_list=cfg.params["n_list"], k_sigma=cfg.params["k"],
        delta=cfg.params["delta"], widen=cfg.params["widen"], joint_n=cfg.params["joint_n"],
        include_joint=cfg.params["joint"], include_trend=cfg.params["trend"],
    )


def _job_lil(cfg: RunConfig) -> list[ExperimentRecord]:
    sigma = cfg.params["sigma"]
    if sigma not in ("lo", "hi"):
        sigma = _parse_value("sigma", "float", sigma)
    schedule = LilSchedule.geometric(cfg.params["n_max"], first=cfg.params["first"])
    seeds = [cfg.seed + i for i in range(cfg.params["seeds"])]
    return run_lil(
        cfg.band, schedule=schedule, sigma_choice=sigma, seeds=seeds, n_max=cfg.params["n_max"],
        window=(cfg.params["win_lo"], cfg.params["win_hi"]), min_pass=cfg.params["min_pass"],
    )


def _job_rosenthal(cfg: RunConfig) -> list[ExperimentRecord]:
    return run_rosenthal(
        cfg.band, p_list=cfg.params["p_list"], n_list=cfg.params["n_list"],
        k_sigma=cfg.params["k"], points_per_step=cfg.params["r"],
    )


def _job_axioms(cfg: RunConfig) -> list[ExperimentRecord]:
    return run_axioms(
        cfg.band, n=cfg.params["n"], count=cfg.params["count"], seed=cfg.seed,
        k_sigma=cfg.params["k"], tol=cfg.params["tol"],
    )


_JOBS = {
    "gheat": _job_gheat,
    "walk": _job_walk,
    "capacity": _job_capacity,
    "clt": _job_clt,
    "donsker": _job_donsker,
    "smalldev": _job_smalldev,
    "lil": _job_lil,
    "rosenthal": _job_rosenthal,
    "axioms": _job_axioms,
}


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------


def _fmt_num(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _fmt_param_value(v) -> str:
    # ":" keeps list values free of commas so the params CSV field stays atomic.
    if isinstance(v, (tuple, list)):
        return ":".join(_fmt_num(x) for x in v)
    return _fmt_num(v)


def _config_echo(cfg: RunConfig) -> str:
    items = [
        ("subcommand", cfg.subcommand),
        ("band", f"{_fmt_num(cfg.band.sigma_lo)},{_fmt_num(cfg.band.sigma_hi)}"),
        ("seed", cfg.seed),
        ("format", cfg.fmt),
    ]
    items += sorted((k, _fmt_param_value(v)) for k, v in cfg.params.items())
    return " ".join(f"{k}={v}" for k, v in items)


def _rows_to_csv(cfg: RunConfig, rows: list[ExperimentRecord]) -> str:
    buf = io.StringIO()
    buf.write(f"# config: {_config_echo(cfg)}\n")
    buf.write("experiment,params,computed,reference,tolerance,verdict,runtime_ms\n")
    for r in rows:
        params = ";".join(f"{k}={_fmt_param_value(v)}" for k, v in sorted(r.params.items()))
        computed = "|".join(_fmt_num(float(c)) for c in r.computed)
        reference = "" if r.reference is None else _fmt_num(r.reference)
        runtime = _fmt_num(r.runtime_ms) if cfg.timings else "0"
        buf.write(
            f"{r.experiment},{params},{computed},{reference},{_fmt_num(r.tolerance)},"
            f"{'pass' if r.verdict else 'FAIL'},{runtime}\n"
        )
    return buf.getvalue()


def _rows_to_json(cfg: RunConfig, rows: list[ExperimentRecord]) -> str:
    def as_jsonable(v):
        if isinstance(v, float):
            if math.isnan(v):
                return "nan"
            if math.isinf(v):
                return "inf" if v > 0 else "-inf"
        if isinstance(v, (tuple, list)):
            return [as_jsonable(x) for x in v]
        if isinstance(v, (np.integer,)):
            return int(v)
        if isinstance(v, (np.floating,)):
            return as_jsonable(float(v))
        return v

    payload = {
        "config": {
            "subcommand": cfg.subcommand,
            "band": [cfg.band.sigma_lo, cfg.band.sigma_hi],
            "seed": cfg.seed,
            "params": {k: as_jsonable(v) for k, v in sorted(cfg.params.items())},
        },
        "records": [
            {
                "experiment": r.experiment,
                "params": {k: as_jsonable(v) for k, v in sorted(r.params.items())},
                "computed": [as_jsonable(c) for c in r.computed],
                "reference": as_jsonable(r.reference),
                "tolerance": as_jsonable(r.tolerance),
                "verdict": "pass" if r.verdict else "FAIL",
                "runtime_ms": as_jsonable(r.runtime_ms) if cfg.timings else 0,
            }
            for r in rows
        ],
        "all_pass": all(r.verdict for r in rows),
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def dispatch(cfg: RunConfig) -> int:
    """Run the configured subcommand; 0 iff all verdicts pass, 1 otherwise."""
    t0 = time.perf_counter()
    rows = _JOBS[cfg.subcommand](cfg)
    text = _rows_to_csv(cfg, rows) if cfg.fmt == "csv" else _rows_to_json(cfg, rows)
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    elapsed = time.perf_counter() - t0
    n_fail = sum(1 for r in rows if not r.verdict)
    print(
        f"gexp {cfg.subcommand}: {len(rows)} rows, {n_fail} failing, {elapsed:.1f}s",
        file=sys.stderr,
    )
    return 0 if n_fail == 0 else 1


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"gexp: configuration error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # argparse errors already printed usage
        return 2 if exc.code not in (0, None) else 0
    try:
        return dispatch(cfg)
    except ConfigError as exc:
        print(f"gexp: configuration error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"gexp: invalid configuration: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
