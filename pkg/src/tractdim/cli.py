"""Command-line front end.

Subcommands: lemmas, dim, sample, oracle {box-dim, brute-pressure,
recheck}.  All reports are canonical JSON (sorted keys, repr floats) and
embed the fully resolved configuration plus a schema version, so a rerun
with the same config is byte-identical.  Exit codes: 0 success or
certified, 1 configuration error, 2 negative construction/certification
outcome, 3 numeric or oracle failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from . import oracle as oracle_mod
from .cantor_ifs import project_to_plane, sample_limit_set
from .errors import (ConfigError, ConstructionError, DomainError, GeometryError,
                     NumericError, TractdimError)
from .loglift import (MapFamily, branch_growth_bound, check_growth, expansion_margin,
                      exponential_family, inv_branch, normalize_family)
from .numerics import TWO_PI, write_csv, write_json
from .pressure import (bowen_root, build_weighted_system, certify_dim_gt_one,
                       level1_sum, pressure_bounds)
from .tractgeom import (GeometryBudget, anchor_line, build_G, build_squares,
                        distortion_constant, find_radius, trace_level_lines)

SCHEMA_VERSION = 1

DEFAULT_SMALL_CONFIG = {
    "family": {"kind": "exponential", "lambda_re": 1.0, "lambda_im": 0.0, "r0": math.e},
    "geometry": {"epsilon": 0.1, "inset": 0.5, "anchor": 12.0,
                 "scan": [8.0, 4000.0, 1.0], "margin": 0.0, "boundary_samples": 256},
    "pressure": {"mode": "enumerate", "t_grid": [0.5 + 0.05 * k for k in range(21)],
                 "bisect_tol": 1e-3, "collar": 32},
    "sampling": {"depth": 8, "count": 10000, "seed": 42},
    "oracle": {"source": "middle-thirds", "density": 10, "subsystem": 8,
               "word_length": 2, "t": 1.0},
    "workers": 1,
    "timing": False,
}

# Certificate scale: the anchor is tuned so the lower level-1 sum at t=1
# clears the distortion constant with better than 10% margin.
DEFAULT_CERTIFICATE_CONFIG = {
    "family": {"kind": "exponential", "lambda_re": 1.0, "lambda_im": 0.0, "r0": math.e},
    "geometry": {"epsilon": 0.1, "inset": 3.0, "anchor": 4000.0,
                 "scan": [1000.0, 20000.0, 100.0], "margin": 0.0,
                 "boundary_samples": 256},
    "pressure": {"mode": "tail", "t_grid": [0.5 + 0.05 * k for k in range(21)],
                 "bisect_tol": 1e-4, "collar": 32},
    "sampling": {"depth": 8, "count": 10000, "seed": 42},
    "oracle": {"source": "middle-thirds", "density": 10, "subsystem": 8,
               "word_length": 2, "t": 1.0},
    "workers": 1,
    "timing": False,
}


# ---------------------------------------------------------------------------
# Config handling
# ---------------------------------------------------------------------------

def _require_finite(name, value):
    if not isinstance(value, (int, float)) or isinstance(value, bool) \
            or not math.isfinite(float(value)):
        raise ConfigError(f"config field {name} must be a finite number, got {value!r}")
    return float(value)


@dataclass
class RunConfig:
    family: MapFamily
    budget: GeometryBudget
    anchor: float            # resolved, never "auto" after load
    scan: tuple
    mode: str
    t_grid: tuple
    bisect_tol: float
    collar: int
    depth: int
    count: int
    seed: int
    oracle: dict
    workers: int
    timing: bool
    resolved: dict = field(default_factory=dict)


def load_config(raw: dict) -> RunConfig:
    """Validate a raw config dict and resolve every "auto" before computing."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    fam = dict(DEFAULT_SMALL_CONFIG["family"], **raw.get("family", {}))
    geo = dict(DEFAULT_SMALL_CONFIG["geometry"], **raw.get("geometry", {}))
    prs = dict(DEFAULT_SMALL_CONFIG["pressure"], **raw.get("pressure", {}))
    smp = dict(DEFAULT_SMALL_CONFIG["sampling"], **raw.get("sampling", {}))
    orc = dict(DEFAULT_SMALL_CONFIG["oracle"], **raw.get("oracle", {}))
    if fam.get("kind") != "exponential":
        raise ConfigError("the CLI drives the exponential family; use the library "
                          "API for user-supplied families")
    lam = complex(_require_finite("lambda_re", fam.get("lambda_re", 1.0)),
                  _require_finite("lambda_im", fam.get("lambda_im", 0.0)))
    r0 = _require_finite("r0", fam.get("r0", math.e))
    family = normalize_family(exponential_family(lam=lam, r0=r0))
    epsilon = _require_finite("epsilon", geo.get("epsilon", 0.1))
    scan = geo.get("scan", [8.0, 4000.0, 1.0])
    if (not isinstance(scan, (list, tuple))) or len(scan) != 3:
        raise ConfigError("geometry.scan must be [lo, hi, step]")
    scan = tuple(_require_finite(f"scan[{i}]", v) for i, v in enumerate(scan))
    inset = geo.get("inset", 0.5)
    anchor = geo.get("anchor", "auto")
    if inset == "auto" and anchor == "auto":
        raise ConfigError("at most one of geometry.inset and geometry.anchor may be 'auto'")
    if inset == "auto":
        from .pressure import _auto_inset
        inset = _auto_inset(family, _require_finite("anchor", anchor))
    inset = _require_finite("inset", inset)
    budget = GeometryBudget(
        epsilon=epsilon, inset=inset,
        margin=_require_finite("margin", geo.get("margin", 0.0)),
        boundary_samples=int(_require_finite("boundary_samples",
                                             geo.get("boundary_samples", 256))))
    if anchor == "auto":
        anchor = find_radius(family, budget, *scan)
    anchor = _require_finite("anchor", anchor)
    mode = prs.get("mode", "enumerate")
    if mode not in ("enumerate", "tail"):
        raise ConfigError(f"pressure.mode must be enumerate or tail, got {mode!r}")
    t_grid = tuple(_require_finite(f"t_grid[{i}]", t)
                   for i, t in enumerate(prs.get("t_grid", [])))
    seed = int(_require_finite("seed", smp.get("seed", 42)))
    depth = int(_require_finite("depth", smp.get("depth", 8)))
    count = int(_require_finite("count", smp.get("count", 10000)))
    if depth < 1 or count < 1:
        raise ConfigError("sampling depth and count must be positive")
    workers = int(_require_finite("workers", raw.get("workers", 1)))
    resolved = {
        "family": {"kind": "exponential", "lambda_re": lam.real, "lambda_im": lam.imag,
                   "r0": family.r0},
        "geometry": {"epsilon": epsilon, "inset": inset, "anchor": anchor,
                     "scan": list(scan), "margin": budget.margin,
                     "boundary_samples": budget.boundary_samples},
        "pressure": {"mode": mode, "t_grid": list(t_grid),
                     "bisect_tol": _require_finite("bisect_tol", prs.get("bisect_tol", 1e-3)),
                     "collar": int(_require_finite("collar", prs.get("collar", 32)))},
        "sampling": {"depth": depth, "count": count, "seed": seed},
        "oracle": orc,
        # worker count is pure scheduling and must not influence any output,
        # so it is not echoed into byte-compared reports
        "timing": bool(raw.get("timing", False)),
        "schema_version": SCHEMA_VERSION,
    }
    return RunConfig(
        family=family, budget=budget, anchor=anchor, scan=scan, mode=mode,
        t_grid=t_grid, bisect_tol=resolved["pressure"]["bisect_tol"],
        collar=resolved["pressure"]["collar"], depth=depth, count=count,
        seed=seed, oracle=orc, workers=workers,
        timing=resolved["timing"], resolved=resolved)


def _read_config(path, base: dict) -> RunConfig:
    raw = dict(base)
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            try:
                user = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from exc
        for key, val in user.items():
            if isinstance(val, dict) and isinstance(raw.get(key), dict):
                raw[key] = dict(raw[key], **val)
            else:
                raw[key] = val
    return load_config(raw)


# ---------------------------------------------------------------------------
# lemmas
# ---------------------------------------------------------------------------

def cmd_lemmas(cfg: RunConfig, out_path: str) -> int:
    """Write the lemma report: pass/fail with numeric margins for every
    verifiable growth, expansion and level-line statement."""
    fam = cfg.family
    budget = cfg.budget
    spec = build_squares(cfg.anchor, budget.inset)
    dist = distortion_constant(cfg.anchor, fam.ln_r0)
    line = anchor_line(fam, cfg.anchor, budget.inset)
    checks = {}

    eq1_margin = float(abs(complex(np.asarray(fam.inv0_deriv(complex(cfg.anchor))).item()))
                       - cfg.anchor ** (-(1.0 + budget.epsilon)))
    checks["anchor_derivative_lower"] = {"margin": eq1_margin, "pass": eq1_margin > 0}

    eq4_margin = float(4.0 * math.pi / (cfg.anchor - fam.ln_r0)
                       - abs(complex(np.asarray(fam.inv0_deriv(complex(cfg.anchor))).item())))
    checks["anchor_derivative_upper"] = {"margin": eq4_margin, "pass": eq4_margin > 0}

    checks["tract_depth"] = {"margin": line.depth_margin, "pass": line.depth_margin > 0,
                             "real_part": line.real_part}

    rng = np.random.default_rng(cfg.seed)
    n_samples = 10_000
    zeta = (fam.ln_r0 + 0.1 + 29.9 * rng.random(n_samples)
            + 1j * (rng.random(n_samples) * 100.0 - 50.0))
    s_cycle = np.arange(n_samples) % 7 - 3
    w = np.asarray(fam.inv0(zeta)) + TWO_PI * 1j * s_cycle
    exp_margin = float(np.min(expansion_margin(fam, w)))
    checks["expansion_margin"] = {"margin": exp_margin, "pass": exp_margin > 0,
                                  "samples": n_samples}

    xs = np.geomspace(fam.ln_r0 + 1.0, 1e6, 200)
    bound, c0 = branch_growth_bound(fam, xs)
    re_vals = np.real(np.asarray(fam.inv0(xs.astype(complex))))
    growth_slack = float(np.max(re_vals - bound))
    checks["branch_growth_bound"] = {
        "max_excess": growth_slack, "pass": growth_slack <= 1e-9, "c0": c0}

    grid = [10.0 ** k for k in range(1, 13)]
    rep = check_growth(fam, grid, thresholds=[fam.ln_r0 + 2.0 * budget.inset])
    checks["branch_growth_to_infinity"] = {
        "strictly_increasing": rep.strictly_increasing,
        "first_past_threshold": rep.threshold_hits[0][1],
        "pass": rep.strictly_increasing and rep.threshold_hits[0][1] is not None}

    lines = trace_level_lines(fam, spec, budget)
    min_margin = min(lines.min_re_margins) if lines.min_re_margins else math.inf
    checks["level_lines"] = {
        "curve_count": lines.curve_count,
        "required_count": lines.required_count,
        "min_component_length": lines.min_component_length,
        "required_length": lines.required_length,
        "min_inf_re_margin": min_margin,
        "pass": (lines.curve_count >= lines.required_count
                 and lines.min_component_length >= lines.required_length
                 and min_margin > 0)}

    model = fam.tail_model()
    env = model.envelope(spec.outer.bounds())
    depth_direct = math.log(env.d_lo) - fam.ln_r0
    checks["first_level_in_half_plane"] = {"margin": depth_direct, "pass": depth_direct > 0}

    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "lemmas",
        "config": cfg.resolved,
        "distortion_c": dist.c,
        "checks": checks,
        "all_pass": all(c["pass"] for c in checks.values()),
    }
    write_json(out_path, report)
    return 0


# ---------------------------------------------------------------------------
# dim
# ---------------------------------------------------------------------------

def cmd_dim(cfg: RunConfig, out_path: str) -> int:
    cert = certify_dim_gt_one(
        cfg.family, anchor=cfg.anchor, epsilon=cfg.budget.epsilon,
        inset=cfg.budget.inset, margin=cfg.budget.margin,
        boundary_samples=cfg.budget.boundary_samples, mode=cfg.mode,
        bisect_tol=cfg.bisect_tol, scan=cfg.scan, collar=cfg.collar,
        workers=cfg.workers)
    payload = cert.to_json_dict(include_timing=cfg.timing)
    payload["schema_version"] = SCHEMA_VERSION
    payload["command"] = "dim"
    payload["config"] = cfg.resolved
    write_json(out_path, payload)
    if cfg.timing:
        print(f"certificate: {cert.verdict} in {cert.runtime_ms:.1f} ms", file=sys.stderr)
    return 0 if cert.certified else 2


# ---------------------------------------------------------------------------
# sample
# ---------------------------------------------------------------------------

def cmd_sample(cfg: RunConfig, out_path: str) -> int:
    fam = cfg.family
    spec = build_squares(cfg.anchor, cfg.budget.inset)
    dist = distortion_constant(cfg.anchor, fam.ln_r0)
    gset = build_G(fam, cfg.anchor, spec, cfg.budget, mode=cfg.mode, dist=dist,
                   collar=cfg.collar, workers=cfg.workers)
    if gset.n_explicit == 0:
        print("no explicit admissible letters at this configuration", file=sys.stderr)
        return 2
    sample = sample_limit_set(fam, gset, spec, depth=cfg.depth, count=cfg.count,
                              seed=cfg.seed)
    proj = project_to_plane(fam, sample)

    def rows():
        for i in range(sample.count):
            z = sample.points[i]
            yield (float(z.real), float(z.imag), "lifted", cfg.depth, int(sample.word_ranks[i]))
        for i in range(sample.count):
            p = proj.points[i]
            space = "plane_logpolar" if proj.log_polar[i] else "plane"
            yield (float(p.real), float(p.imag), space, cfg.depth, int(sample.word_ranks[i]))

    n = write_csv(out_path, ["re", "im", "space", "depth", "word_rank"], rows())
    print(f"wrote {n} rows", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------------

def _oracle_box_dim(cfg: RunConfig, out_path: str) -> int:
    source = cfg.oracle.get("source", "middle-thirds")
    if source == "middle-thirds":
        pts = oracle_mod.cantor_middle_thirds(count=100_000, depth=35, seed=cfg.seed)
        scales = [3.0 ** -k for k in range(1, 8)]
        expected, tol = math.log(2.0) / math.log(3.0), 0.05
    elif source == "csv":
        path = cfg.oracle.get("path")
        if not path:
            raise ConfigError("oracle.source=csv needs oracle.path")
        space = cfg.oracle.get("space", "lifted")
        data = np.genfromtxt(path, delimiter=",", names=True, dtype=None, encoding="utf-8")
        mask = data["space"] == space
        pts = data["re"][mask] + 1j * data["im"][mask]
        scales = cfg.oracle.get("scales")
        if scales is None:
            lo = np.min(pts.real), np.min(pts.imag)
            diam = float(np.hypot(np.ptp(pts.real), np.ptp(pts.imag)))
            scales = [diam * (10.0 ** -k) for k in np.linspace(0.5, 3.0, 6)]
        expected, tol = None, None
    else:
        raise ConfigError(f"unknown oracle source {source!r}")
    est = oracle_mod.box_counting_dim(pts, scales)
    report = {
        "schema_version": SCHEMA_VERSION, "command": "oracle box-dim",
        "config": cfg.resolved,
        "slope": est.slope, "counts": list(est.counts), "scales": list(est.scales),
        "residual": est.residual, "expected": expected, "tolerance": tol,
    }
    ok = expected is None or abs(est.slope - expected) <= tol
    report["pass"] = bool(ok)
    write_json(out_path, report)
    return 0 if ok else 3


def _oracle_brute_pressure(cfg: RunConfig, out_path: str) -> int:
    fam = cfg.family
    spec = build_squares(cfg.anchor, cfg.budget.inset)
    dist = distortion_constant(cfg.anchor, fam.ln_r0)
    gset = build_G(fam, cfg.anchor, spec, cfg.budget, mode="enumerate", dist=dist,
                   workers=cfg.workers)
    k = int(cfg.oracle.get("subsystem", 8))
    letters = gset.letters_by_weight(k)
    if len(letters) < k:
        raise ConstructionError(f"admissible set holds fewer than {k} letters")
    sub = _subsystem(fam, letters, spec, dist)
    t = float(cfg.oracle.get("t", 1.0))
    n = int(cfg.oracle.get("word_length", 2))
    brute = oracle_mod.brute_force_pressure(fam, letters, spec, n=n, t=t,
                                            distortion_c=dist.c)
    p_lo, p_hi = pressure_bounds(sub, t)
    ok = (p_lo - brute.slack_log) <= brute.value <= (p_hi + brute.slack_log)
    report = {
        "schema_version": SCHEMA_VERSION, "command": "oracle brute-pressure",
        "config": cfg.resolved, "letters": [list(l) for l in letters],
        "word_length": n, "t": t, "brute_value": brute.value,
        "level1_lo": p_lo, "level1_hi": p_hi, "slack_log": brute.slack_log,
        "pass": bool(ok),
    }
    write_json(out_path, report)
    return 0 if ok else 3


def _subsystem(fam, letters, spec, dist):
    from .pressure import WeightedSystem
    model = fam.tail_model()
    env = model.envelope(spec.outer.bounds())
    sigma = np.log(TWO_PI) + np.log(np.abs(np.asarray([s for (_, s) in letters], dtype=float)))
    lo, hi = model.log_weight_bounds(sigma, env)
    return WeightedSystem(log_lo=lo, log_hi=hi, distortion_c=dist.c, family=fam,
                          env=env, anchor=spec.anchor, rect_bounds=spec.outer.bounds())


def _oracle_recheck(cfg: RunConfig, out_path: str) -> int:
    fam = cfg.family
    spec = build_squares(cfg.anchor, cfg.budget.inset)
    dist = distortion_constant(cfg.anchor, fam.ln_r0)
    gset = build_G(fam, cfg.anchor, spec, cfg.budget, mode=cfg.mode, dist=dist,
                   collar=cfg.collar, workers=cfg.workers)
    rep = oracle_mod.recheck_gset(fam, gset, spec, cfg.budget,
                                  density=int(cfg.oracle.get("density", 10)),
                                  seed=cfg.seed)
    report = {
        "schema_version": SCHEMA_VERSION, "command": "oracle recheck",
        "config": cfg.resolved,
        "n_checked": rep.n_checked, "n_densely_sampled": rep.n_densely_sampled,
        "n_flagged": rep.n_flagged, "flagged": [list(f) for f in rep.flagged],
        "min_margin": rep.min_margin,
        "pass": rep.n_flagged == 0,
    }
    write_json(out_path, report)
    return 0 if rep.n_flagged == 0 else 3


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tractdim",
                                description="dimension certificates for Cantor "
                                            "repellers over logarithmic tracts")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("lemmas", "dim", "sample"):
        sp = sub.add_parser(name)
        _common_flags(sp)
    so = sub.add_parser("oracle")
    so.add_argument("oracle_command", choices=["box-dim", "brute-pressure", "recheck"])
    _common_flags(so)
    return p


def _common_flags(sp):
    sp.add_argument("--config", default=None, help="JSON config path")
    sp.add_argument("--out", default=None, help="output report path")
    sp.add_argument("--mode", choices=["enumerate", "tail"], default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--workers", type=int, default=None)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        base = DEFAULT_CERTIFICATE_CONFIG if args.command == "dim" else DEFAULT_SMALL_CONFIG
        cfg = _read_config(args.config, base)
        if args.mode is not None:
            cfg.mode = args.mode
            cfg.resolved["pressure"]["mode"] = args.mode
        if args.seed is not None:
            cfg.seed = args.seed
            cfg.resolved["sampling"]["seed"] = args.seed
        if args.workers is not None:
            cfg.workers = args.workers
        out = args.out or f"tractdim_{args.command.replace(' ', '_')}.json"
        if args.command == "lemmas":
            return cmd_lemmas(cfg, out)
        if args.command == "dim":
            return cmd_dim(cfg, out)
        if args.command == "sample":
            out = args.out or "tractdim_sample.csv"
            return cmd_sample(cfg, out)
        if args.command == "oracle":
            sub = {"box-dim": _oracle_box_dim,
                   "brute-pressure": _oracle_brute_pressure,
                   "recheck": _oracle_recheck}[args.oracle_command]
            return sub(cfg, out)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, GeometryError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ConstructionError as exc:
        print(f"construction: {exc}", file=sys.stderr)
        return 2
    except (NumericError,) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except TractdimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
