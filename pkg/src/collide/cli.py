"""Command-line front end: ``collide <subcommand> ...``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
Errors are reported as one JSON object on stderr.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .atlas import InvalidSpec, NegativeGap, atlas_pipeline
from .bessel import BesselSimConfig, KappaQuery, collision_bound, compare_conventions, kappa, kappa_quadrature, simulate_bessel_hitting_tail
from .config import ConfigError, atlas_from_config, config_hash, field_from_config, load_json, rbm_from_config
from .core import AmbiguousRegion, NoRegionContains, OnOrigin, OnZeroSet, ParameterOutOfRange, parse_triple, squared_gap
from .diagnostics import InsufficientSamples, classify_field
from .rbm import DimensionMismatch, NoConvergence, NotPositiveDefinite, corner_attainability, simulate_rbm
from .sde import NonFiniteState, SimConfig, SingularSigma, collision_stats, simulate

NUMERIC_ERRORS = (NoConvergence, NotPositiveDefinite, NonFiniteState, SingularSigma, InsufficientSamples)
CONFIG_ERRORS = (
    ConfigError, ParameterOutOfRange, InvalidSpec, NegativeGap, DimensionMismatch, NoRegionContains,
    AmbiguousRegion, OnZeroSet, OnOrigin, FileNotFoundError, ValueError, KeyError, TypeError,
)


class UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route argparse failures through the JSON error path
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class RunManifest:
    subcommand: str
    config_hash: str
    seed: int
    version: str
    wall_clock_seconds: float
    outputs: list[str] = field(default_factory=list)

    def write(self, directory: Path) -> Path:
        path = directory / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2) + "\n")
        return path


# ----------------------------------------------------------------------------
# output helpers


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"cannot parse number list {text!r}") from exc


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default)


def _write_table(path: Path, header: list[str], rows: np.ndarray, fmt: str) -> None:
    """Rows whose first column is an integer path id."""
    if fmt == "json":
        recs = [dict(zip(header, [int(r[0]), *map(float, r[1:])])) for r in rows]
        path.write_text(json.dumps(recs) + "\n")
        return
    with path.open("w") as fh:
        fh.write(",".join(header) + "\n")
        np.savetxt(fh, rows, fmt=["%d"] + ["%.17g"] * (rows.shape[1] - 1), delimiter=",")


def _path_rows(times: np.ndarray, *arrays: np.ndarray) -> np.ndarray:
    """Stack ``(paths, m, k)`` arrays into rows ``path_id, t, ...``."""
    P, m = arrays[0].shape[:2]
    cols = [np.repeat(np.arange(P), m)[:, None], np.tile(times, P)[:, None]]
    cols += [a.reshape(P * m, -1) for a in arrays]
    return np.hstack(cols)


def _out_target(args, default_name: str) -> Path | None:
    if getattr(args, "out", None):
        return Path(args.out)
    if getattr(args, "out_dir", None):
        return Path(args.out_dir) / default_name
    return None


def _finish(args, payload: dict, outputs: list[Path], cfg_obj, started: float, emit: bool = True) -> None:
    if emit:
        print(_dumps(payload))
    if not outputs:
        return
    dirs = sorted({p.parent for p in outputs})
    for d in dirs:
        names = sorted(str(p.name) for p in outputs if p.parent == d)
        RunManifest(args.command, config_hash(cfg_obj), args.seed, __version__, round(time.time() - started, 3), names).write(d)


def _ensure_dir(p: Path) -> Path:
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


# ----------------------------------------------------------------------------
# subcommands


def cmd_kappa(args) -> None:
    started = time.time()
    q = KappaQuery(args.T, args.y, args.delta, args.convention)
    payload = {"kappa": kappa(q), "convention": q.convention, "T": q.T, "y": q.y, "delta": q.exponent}
    if args.quadrature:
        payload["quadrature"] = kappa_quadrature(q)
    outs = []
    if (target := _out_target(args, "kappa.json")) is not None:
        _ensure_dir(target).write_text(_dumps(payload) + "\n")
        outs.append(target)
    _finish(args, payload, outs, vars_for_hash(args), started)


def cmd_bessel_tail(args) -> None:
    started = time.time()
    cfg = BesselSimConfig(args.delta, args.y, args.dt, args.T, args.paths, args.seed, args.threads)
    if args.compare:
        payload = compare_conventions(cfg)
    else:
        payload = simulate_bessel_hitting_tail(cfg).to_dict()
    outs = []
    if (target := _out_target(args, "bessel_tail.json")) is not None:
        _ensure_dir(target).write_text(_dumps(payload) + "\n")
        outs.append(target)
    _finish(args, payload, outs, vars_for_hash(args), started)


def _field_and_cfg(path: str):
    cfg = load_json(path)
    return field_from_config(cfg), cfg


def cmd_diagnose(args) -> None:
    started = time.time()
    fld, cfg = _field_and_cfg(args.field)
    triple = parse_triple(args.triple) if args.triple else tuple(t - 1 for t in cfg.get("triple", (1, 2, 3)))
    report = classify_field(fld, triple, samples=args.samples, seed=args.seed)
    payload = report.to_dict()
    payload["field_kind"] = cfg["kind"]
    outs = []
    if (target := _out_target(args, "diagnostics.json")) is not None:
        _ensure_dir(target).write_text(_dumps(payload) + "\n")
        outs.append(target)
    _finish(args, payload, outs, {"config": cfg, **vars_for_hash(args)}, started)


def _bound_summary(fld, cfg: SimConfig, samples: int, seed: int) -> dict:
    """Collision bound from sampled diagnostics, when they allow one."""
    rep = classify_field(fld, cfg.triple, samples=samples, seed=seed)
    if cfg.metric == "origin":
        delta0, c0, s0, what = rep.sampled_max_ED, rep.origin_c0_estimate, float(np.linalg.norm(cfg.x0)), "ED"
    else:
        delta0, c0, s0, what = rep.sampled_max_R, rep.c0_estimate, float(math.sqrt(squared_gap(cfg.x0, cfg.triple))), "R"
    out = {"statistic": what, "delta0": delta0, "c0": c0, "s0": s0, "T": cfg.T}
    if not (0 < delta0 < 2) or s0 <= 0:
        out["bound"] = None
        out["reason"] = f"sampled max {what} = {delta0:.6g} is not in (0, 2)"
        return out
    out["bound"] = {conv: collision_bound(cfg.T, s0, delta0, c0, conv) for conv in ("paper_delta", "classical_index")}
    return out


def cmd_simulate(args) -> None:
    started = time.time()
    fld, fcfg = _field_and_cfg(args.field)
    x0 = _floats(args.x0) if args.x0 else fcfg.get("x0")
    if x0 is None:
        raise UsageError("--x0 is required when the config has no x0")
    triple = parse_triple(args.triple) if args.triple else tuple(t - 1 for t in fcfg.get("triple", (1, 2, 3)))
    ladder = tuple(_floats(args.eps))
    target = _out_target(args, "ensemble.csv" if args.format == "csv" else "ensemble.json")
    cfg = SimConfig(
        fld, x0, dt=args.dt, T=args.T, paths=args.paths, seed=args.seed,
        collision_eps=min(ladder), triple=triple, metric=args.metric or fcfg.get("metric", "triple"),
        eps_ladder=ladder, record="stride" if target is not None else "final", stride=args.stride,
        threads=args.threads,
    )
    ens = simulate(cfg)
    stats = collision_stats(ens)
    payload = {
        "paths": cfg.paths, "dt": cfg.dt, "T": cfg.T, "seed": cfg.seed, "metric": cfg.metric,
        "triple": [t + 1 for t in cfg.triple], **stats.to_dict(),
    }
    if not args.no_bound:
        payload["bound_comparison"] = _bound_summary(fld, cfg, args.bound_samples, args.seed)
    outs = []
    if target is not None:
        _ensure_dir(target)
        header = ["path_id", "t"] + [f"x_{i + 1}" for i in range(fld.n)]
        _write_table(target, header, _path_rows(ens.times, ens.states), args.format)
        summary = target.with_name(target.stem + ".summary.json")
        summary.write_text(_dumps(payload) + "\n")
        outs += [target, summary]
    _finish(args, payload, outs, {"config": fcfg, **vars_for_hash(args)}, started)


def cmd_rbm(args) -> None:
    started = time.time()
    cfg = load_json(args.spec)
    spec = rbm_from_config(cfg)
    if args.action == "classify":
        payload = corner_attainability(spec).to_dict()
        outs = []
        if (target := _out_target(args, "classification.json")) is not None:
            _ensure_dir(target).write_text(_dumps(payload) + "\n")
            outs.append(target)
        _finish(args, payload, outs, {"config": cfg, **vars_for_hash(args)}, started)
        return
    path = simulate_rbm(spec, args.dt, args.T, args.paths, args.seed, args.threads)
    LT = path.L[:, -1]
    payload = {
        "paths": args.paths, "dt": args.dt, "T": args.T, "seed": args.seed,
        "mean_local_time": LT.mean(axis=0).tolist(),
        "min_Z": float(path.Z.min()),
        "fixed_point_iterations": path.iterations,
        "pairs": [f"{i + 1},{j + 1}" for i, j in path.pairs],
        "mean_min_pair_gap": path.min_pair_gap.mean(axis=0).tolist(),
    }
    outs = []
    target = _out_target(args, "path.csv" if args.format == "csv" else "path.json")
    if target is not None:
        _ensure_dir(target)
        idx = np.arange(0, path.times.size, args.stride)
        d = spec.dim
        header = ["path_id", "t"] + [f"z_{i + 1}" for i in range(d)] + [f"L_{i + 1}" for i in range(d)]
        _write_table(target, header, _path_rows(path.times[idx], path.Z[:, idx], path.L[:, idx]), args.format)
        outs.append(target)
    _finish(args, payload, outs, {"config": cfg, **vars_for_hash(args)}, started)


def cmd_atlas(args) -> None:
    started = time.time()
    cfg = load_json(args.spec)
    spec = atlas_from_config(cfg)
    x0 = _floats(args.x0) if args.x0 else cfg.get("x0")
    if x0 is None:
        raise UsageError("--x0 is required when the config has no x0")
    res = atlas_pipeline(spec, x0, args.dt, args.T, args.paths, args.seed, args.threads)
    summary = res.zeta_summary()
    classification = {"spec": spec.to_dict(), "corners": res.classification}
    outs = []
    out_dir = Path(args.out_dir) if args.out_dir else (Path(args.out).parent if args.out else None)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        idx = np.arange(0, res.times.size, args.stride)
        t = res.times[idx]
        n = spec.n
        ext = args.format
        tables = {
            f"ranked.{ext}": (["path_id", "t"] + [f"x_({k + 1})" for k in range(n)], (res.ranked[:, idx],)),
            f"gaps.{ext}": (
                ["path_id", "t"] + [f"Z_{k + 1}" for k in range(n - 1)] + [f"zeta_{k + 1}" for k in range(n - 1)],
                (res.gaps[:, idx], res.zeta[:, idx]),
            ),
            f"recovered.{ext}": (["path_id", "t"] + [f"psi_({k + 1})" for k in range(n)], (res.recovered[:, idx],)),
        }
        for name, (header, arrays) in tables.items():
            _write_table(out_dir / name, header, _path_rows(t, *arrays), args.format)
            outs.append(out_dir / name)
        (out_dir / "zeta_summary.json").write_text(_dumps(summary) + "\n")
        (out_dir / "classification.json").write_text(_dumps(classification) + "\n")
        outs += [out_dir / "zeta_summary.json", out_dir / "classification.json"]
    payload = {"zeta_summary": summary, "classification": classification}
    _finish(args, payload, outs, {"config": cfg, **vars_for_hash(args)}, started)


def vars_for_hash(args) -> dict:
    """Arguments that determine the numbers; output paths and threads excluded."""
    skip = {"func", "out", "out_dir", "threads"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


# ----------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1, help="worker threads; never changes the numbers")
    common.add_argument("--out", help="output file")
    common.add_argument("--out-dir", help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default="csv", help="format for path tables")

    p = _Parser(prog="collide", description="Triple-collision diagnostics and simulations.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("diagnose", parents=[common], help="sample R~, R and ED over a field")
    d.add_argument("--field", required=True)
    d.add_argument("--samples", type=int, default=10_000)
    d.add_argument("--triple", help="1-based triple such as 1,2,3")
    d.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("simulate", parents=[common], help="Euler-Maruyama paths and collision frequencies")
    s.add_argument("--field", required=True)
    s.add_argument("--x0")
    s.add_argument("--dt", type=float, default=1e-3)
    s.add_argument("--T", type=float, default=1.0)
    s.add_argument("--paths", type=int, default=10_000)
    s.add_argument("--eps", default="0.1,0.05,0.01", help="collision threshold ladder")
    s.add_argument("--triple")
    s.add_argument("--metric", choices=("triple", "origin"))
    s.add_argument("--stride", type=int, default=1, help="keep every stride-th step in the path table")
    s.add_argument("--no-bound", action="store_true", help="skip the sampled collision bound")
    s.add_argument("--bound-samples", type=int, default=2000)
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("rbm", parents=[common], help="reflected Brownian motion on the orthant")
    r.add_argument("action", nargs="?", choices=("simulate", "classify"), default="simulate")
    r.add_argument("--spec", required=True)
    r.add_argument("--dt", type=float, default=1e-3)
    r.add_argument("--T", type=float, default=1.0)
    r.add_argument("--paths", type=int, default=1000)
    r.add_argument("--stride", type=int, default=1)
    r.set_defaults(func=cmd_rbm)

    a = sub.add_parser("atlas", parents=[common], help="Atlas model pipeline")
    a.add_argument("--spec", required=True)
    a.add_argument("--x0")
    a.add_argument("--dt", type=float, default=1e-3)
    a.add_argument("--T", type=float, default=1.0)
    a.add_argument("--paths", type=int, default=1000)
    a.add_argument("--stride", type=int, default=1)
    a.set_defaults(func=cmd_atlas)

    k = sub.add_parser("kappa", parents=[common], help="Bessel hitting-time tail")
    k.add_argument("--T", type=float, required=True)
    k.add_argument("--y", type=float, required=True)
    k.add_argument("--delta", type=float, required=True)
    k.add_argument("--convention", default="paper", choices=("paper", "classical", "paper_delta", "classical_index"))
    k.add_argument("--quadrature", action="store_true", help="also report the quadrature value")
    k.set_defaults(func=cmd_kappa)

    b = sub.add_parser("bessel-tail", parents=[common], help="Monte Carlo Bessel hitting tail")
    b.add_argument("--delta", type=float, required=True)
    b.add_argument("--y", type=float, default=1.0)
    b.add_argument("--T", type=float, default=1.0)
    b.add_argument("--dt", type=float, default=1e-3)
    b.add_argument("--paths", type=int, default=10_000)
    b.add_argument("--compare", action="store_true", help="compare against both kappa conventions")
    b.set_defaults(func=cmd_bessel_tail)
    return p


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def run(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        args.func(args)
    except NUMERIC_ERRORS as exc:
        return _fail(type(exc).__name__, str(exc), 3)
    except CONFIG_ERRORS as exc:
        return _fail(type(exc).__name__, str(exc), 2)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
