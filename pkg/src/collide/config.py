"""JSON configuration for fields, Atlas specs and RBM specs."""
from __future__ import annotations

import hashlib
import json
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .atlas import AtlasSpec, build_gap_system
from .core import (
    CoefficientField,
    HalfSpace,
    PiecewiseField,
    PolyhedralRegion,
    RankDiagonalField,
    Region,
    identity_field,
)
from .diagnostics import build_bass_pardoux_field, build_remark23_field
from .rbm import RBMSpec


class ConfigError(ValueError):
    """Bad or missing configuration."""


BUNDLED = ("identity", "remark23", "bass_pardoux", "atlas_linear", "atlas_equal", "atlas_violating")


def bundled_path(name: str) -> Path:
    stem = name[:-5] if name.endswith(".json") else name
    if stem not in BUNDLED:
        raise ConfigError(f"no bundled config {name!r}; available: {', '.join(BUNDLED)}")
    return Path(str(resources.files("collide") / "configs" / f"{stem}.json"))


def load_json(path: str | Path) -> dict:
    """Read a config file. Names of bundled configs are accepted as well."""
    p = Path(path)
    if not p.exists():
        stem = p.name[:-5] if p.name.endswith(".json") else p.name
        if p.parent == Path(".") and stem in BUNDLED:
            p = bundled_path(stem)
        else:
            raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict) or "kind" not in data:
        raise ConfigError(f"{path}: expected an object with a 'kind' entry")
    return data


def config_hash(obj: Any) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"missing entry {key!r} for kind {cfg.get('kind')!r}")
    return cfg[key]


def _halfspace(spec: dict) -> HalfSpace:
    return HalfSpace(tuple(float(v) for v in _require(spec, "normal")), float(spec.get("offset", 0.0)), bool(spec.get("strict", False)))


def field_from_config(cfg: dict) -> CoefficientField:
    kind = cfg.get("kind")
    if kind == "identity":
        return identity_field(int(_require(cfg, "n")), cfg.get("mu"))
    if kind == "piecewise":
        n = int(_require(cfg, "n"))
        regions = []
        for r in _require(cfg, "regions"):
            pieces = tuple(PolyhedralRegion(tuple(_halfspace(h) for h in piece)) for piece in r.get("pieces", [[]]))
            sigma = np.asarray(_require(r, "sigma"), dtype=float)
            if sigma.shape != (n, n):
                raise ConfigError(f"region {r.get('label')}: sigma must be {n}x{n}")
            mu = np.asarray(r.get("mu", [0.0] * n), dtype=float)
            regions.append(Region(str(r.get("label", f"region{len(regions)}")), mu, sigma, pieces, bool(r.get("negligible", False))))
        A = [reg.sigma @ reg.sigma.T for reg in regions]
        ev = [np.linalg.eigvalsh(a) for a in A]
        return PiecewiseField(
            n,
            regions,
            drift_bound=float(max(np.abs(reg.mu).max() for reg in regions)),
            eig_floor=float(min(e[0] for e in ev)),
            eig_ceiling=float(max(e[-1] for e in ev)),
        )
    if kind in ("rank_diagonal", "atlas"):
        return RankDiagonalField(_require(cfg, "sigmas"), cfg.get("g"), float(cfg.get("gamma", 0.0)))
    if kind == "remark23":
        kw = {}
        if "alphas" in cfg:
            kw["alphas"] = cfg["alphas"]
        return build_remark23_field(pairing=cfg.get("pairing", "closed_form"), **kw)
    if kind == "bass_pardoux":
        return build_bass_pardoux_field(
            float(_require(cfg, "eps")), float(_require(cfg, "delta")), cfg.get("m"), int(cfg.get("n", 3)), int(cfg.get("seed", 0))
        )
    raise ConfigError(f"unknown field kind {kind!r}")


def atlas_from_config(cfg: dict) -> AtlasSpec:
    if cfg.get("kind") != "atlas":
        raise ConfigError(f"expected kind 'atlas', got {cfg.get('kind')!r}")
    return AtlasSpec(tuple(_require(cfg, "sigmas")), cfg.get("g"), float(cfg.get("gamma", 0.0)))


def rbm_from_config(cfg: dict) -> RBMSpec:
    """An explicit RBM spec, or the gap process of an Atlas spec."""
    kind = cfg.get("kind")
    if kind == "atlas":
        z0 = cfg.get("z0")
        return build_gap_system(atlas_from_config(cfg)).rbm_spec(z0)
    if kind != "rbm":
        raise ConfigError(f"expected kind 'rbm' or 'atlas', got {kind!r}")
    return RBMSpec(
        np.asarray(_require(cfg, "h"), float),
        np.asarray(_require(cfg, "R"), float),
        A=None if "A" not in cfg else np.asarray(cfg["A"], float),
        Sigma=None if "Sigma" not in cfg else np.asarray(cfg["Sigma"], float),
        z0=None if "z0" not in cfg else np.asarray(cfg["z0"], float),
    )
