"""Euler-Maruyama paths, collision statistics, the quadratic-variation clock
and the Girsanov weight."""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np

from .core import CoefficientField, OnZeroSet, ParameterOutOfRange, _check_triple, gap_projector
from .diagnostics import q_form, r_tilde
from .rng import map_blocks, path_normals

DEFAULT_LADDER = (0.1, 0.05, 0.01)


class NonFiniteState(FloatingPointError):
    """A simulated state became NaN or infinite."""


class SingularSigma(np.linalg.LinAlgError):
    """``sigma(x)`` could not be inverted along a path."""


@dataclass(frozen=True)
class SimConfig:
    field: CoefficientField
    x0: Sequence[float]
    dt: float = 1e-3
    T: float = 1.0
    paths: int = 10_000
    seed: int = 0
    collision_eps: float = 0.01
    triple: tuple[int, int, int] = (0, 1, 2)
    metric: str = "triple"  # or "origin": distance |x| instead of s(x)
    eps_ladder: tuple[float, ...] = DEFAULT_LADDER
    record: str = "final"  # "final", "full" or "stride"
    stride: int = 1
    girsanov: bool = False
    keep_noise: bool = False
    threads: int = 1

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=float)
        object.__setattr__(self, "x0", x0)
        if x0.shape != (self.field.n,):
            raise ParameterOutOfRange(f"x0 must have length {self.field.n}")
        if not np.all(np.isfinite(x0)):
            raise ParameterOutOfRange("x0 must be finite")
        if not (self.dt > 0 and self.T > 0 and self.collision_eps > 0):
            raise ParameterOutOfRange("dt, T and collision_eps must be positive")
        if self.paths < 1:
            raise ParameterOutOfRange("paths must be >= 1")
        if self.metric not in ("triple", "origin"):
            raise ParameterOutOfRange(f"unknown metric {self.metric!r}")
        if self.metric == "triple":
            object.__setattr__(self, "triple", _check_triple(self.field.n, self.triple))
        if self.record not in ("final", "full", "stride") or self.stride < 1:
            raise ParameterOutOfRange("record must be final, full or stride (stride >= 1)")
        if any(e <= 0 for e in self.eps_ladder):
            raise ParameterOutOfRange("eps ladder entries must be positive")

    @property
    def steps(self) -> int:
        return max(1, int(round(self.T / self.dt)))

    def record_indices(self) -> np.ndarray:
        k = self.steps
        if self.record == "final":
            return np.array([0, k])
        step = 1 if self.record == "full" else self.stride
        idx = np.arange(0, k + 1, step)
        return idx if idx[-1] == k else np.append(idx, k)

    def gap(self, X: np.ndarray) -> np.ndarray:
        """Distance to the collision set used for detection."""
        if self.metric == "origin":
            return np.sqrt(np.einsum("...i,...i->...", X, X))
        P = gap_projector(self.field.n, self.triple)
        return np.sqrt(np.maximum(np.einsum("...i,ij,...j->...", X, P, X), 0.0))


@dataclass
class PathEnsemble:
    times: np.ndarray
    states: np.ndarray  # (paths, len(times), n)
    min_gap: np.ndarray
    first_hit: np.ndarray  # time of first gap <= collision_eps, NaN if none
    seed: int
    dt: float
    collision_eps: float
    metric: str
    triple: tuple[int, int, int]
    log_eta: np.ndarray | None = None
    noise: np.ndarray | None = None  # (paths, steps, n) Brownian increments
    eps_ladder: tuple[float, ...] = DEFAULT_LADDER

    @property
    def paths(self) -> int:
        return self.states.shape[0]

    @property
    def final(self) -> np.ndarray:
        return self.states[:, -1]


def _simulate_block(cfg: SimConfig, idx: range) -> dict:
    f = cfg.field
    n, steps, dt = f.n, cfg.steps, cfg.dt
    dW = path_normals(cfg.seed, idx, steps, n)
    dW *= math.sqrt(dt)
    rec = cfg.record_indices()
    states = np.empty((len(idx), rec.size, n))
    X = np.broadcast_to(cfg.x0, (len(idx), n)).copy()
    states[:, 0] = X
    g = cfg.gap(X)
    min_gap = g.copy()
    first_hit = np.where(g <= cfg.collision_eps, 0.0, np.nan)
    log_eta = np.zeros(len(idx)) if cfg.girsanov else None
    r = 1
    for k in range(steps):
        inc = dW[:, k]
        mu, sdW = f.apply_sigma(X, inc)
        if log_eta is not None:
            log_eta += _log_eta_increment(f, X, mu, inc, dt)
        X = X + mu * dt + sdW
        if not np.all(np.isfinite(X)):
            raise NonFiniteState(f"non-finite state at step {k + 1}")
        g = cfg.gap(X)
        np.minimum(min_gap, g, out=min_gap)
        new = np.isnan(first_hit) & (g <= cfg.collision_eps)
        first_hit[new] = (k + 1) * dt
        if r < rec.size and rec[r] == k + 1:
            states[:, r] = X
            r += 1
    return {
        "states": states,
        "min_gap": min_gap,
        "first_hit": first_hit,
        "log_eta": log_eta,
        "noise": dW if cfg.keep_noise else None,
    }


def _log_eta_increment(f: CoefficientField, X, mu, dW, dt):
    if not np.any(mu):
        return np.zeros(X.shape[0])
    try:
        xi = f.solve_sigma(X, mu)
    except np.linalg.LinAlgError as exc:
        raise SingularSigma(str(exc)) from exc
    if not np.all(np.isfinite(xi)):
        raise SingularSigma("sigma^{-1} mu is not finite")
    return -np.einsum("bi,bi->b", xi, dW) - 0.5 * np.einsum("bi,bi->b", xi, xi) * dt


def _block_size(cfg: SimConfig) -> int:
    # keep the per-block noise array near 160 MB
    per_path = cfg.steps * cfg.field.n
    return int(max(1, min(1024, 20_000_000 // max(per_path, 1))))


def simulate(cfg: SimConfig) -> PathEnsemble:
    """Euler-Maruyama with coefficients frozen at the left end of each step.

    Every path draws from its own stream, so the ensemble does not depend on
    ``threads`` or on how paths are grouped.
    """
    parts = map_blocks(lambda idx: _simulate_block(cfg, idx), cfg.paths, cfg.threads, _block_size(cfg))

    def cat(key):
        vals = [p[key] for p in parts]
        return None if vals[0] is None else np.concatenate(vals)

    return PathEnsemble(
        times=cfg.record_indices() * cfg.dt,
        states=cat("states"),
        min_gap=cat("min_gap"),
        first_hit=cat("first_hit"),
        seed=cfg.seed,
        dt=cfg.dt,
        collision_eps=cfg.collision_eps,
        metric=cfg.metric,
        triple=cfg.triple,
        log_eta=cat("log_eta"),
        noise=cat("noise"),
        eps_ladder=tuple(cfg.eps_ladder),
    )


# ----------------------------------------------------------------------------
# collision statistics


@dataclass(frozen=True)
class CollisionStats:
    p_hat: float
    stderr: float
    eps: float
    curve: tuple[tuple[float, float, float], ...]  # (eps, p_hat, stderr)

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "p_hat": self.p_hat,
            "stderr": self.stderr,
            "curve": [{"eps": e, "p_hat": p, "stderr": s} for e, p, s in self.curve],
        }


def _proportion(hit: np.ndarray) -> tuple[float, float]:
    p = float(np.mean(hit))
    return p, math.sqrt(p * (1.0 - p) / hit.size)


def collision_stats(ens: PathEnsemble, ladder: Sequence[float] | None = None) -> CollisionStats:
    """Fraction of paths whose running minimum gap reached ``eps``."""
    ladder = tuple(ens.eps_ladder if ladder is None else ladder)
    p, se = _proportion(ens.min_gap <= ens.collision_eps)
    curve = tuple((float(e), *_proportion(ens.min_gap <= e)) for e in sorted(ladder, reverse=True))
    return CollisionStats(p, se, ens.collision_eps, curve)


# ----------------------------------------------------------------------------
# clock and time change


@dataclass
class ClockedGapPath:
    """Time-changed gap on a common ``u`` grid.

    Rows are paths. Entries past a path's first collision (``truncated_at``
    in clock units) are NaN, because the clock is only followed up to that
    point.
    """

    t: np.ndarray
    clock: np.ndarray  # (paths, len(t))
    u: np.ndarray
    gap: np.ndarray  # (paths, len(u)), the time-changed gap s(X(Lambda_u))
    drift_ratio: np.ndarray  # (paths, len(u)), R~ at the left grid point of Lambda_u
    truncated_at: np.ndarray  # clock value at first collision, +inf if none

    @property
    def truncated(self) -> np.ndarray:
        return np.isfinite(self.truncated_at)


def clock_and_time_change(
    ens: PathEnsemble, field: CoefficientField, du: float | None = None, u_max: float | None = None
) -> ClockedGapPath:
    """Left-Riemann clock ``sum Q(X) dt`` and the gap read off at ``Lambda_u``.

    Requires an ensemble recorded at every step. A path is followed up to the
    first grid point where its gap drops to ``collision_eps``.
    """
    if ens.metric != "triple":
        raise ParameterOutOfRange("clock needs the triple metric")
    t = ens.times
    if t.size < 3 or not np.allclose(np.diff(t), ens.dt):
        raise ParameterOutOfRange("clock needs record='full'")
    paths, m, n = ens.states.shape
    X = ens.states.reshape(-1, n)
    P = gap_projector(n, ens.triple)
    s = np.sqrt(np.maximum(np.einsum("bi,ij,bj->b", X, P, X), 0.0)).reshape(paths, m)
    if np.any(s[:, 0] <= ens.collision_eps):
        raise OnZeroSet("starting point lies on the collision set")
    hit = s <= ens.collision_eps
    stop = np.where(hit.any(axis=1), hit.argmax(axis=1), m - 1)  # last usable index
    ok = np.arange(m)[None, :] <= stop[:, None]
    Q = np.full((paths, m), np.nan)
    Rt = np.full((paths, m), np.nan)
    Q[ok] = q_form(field, X[ok.ravel()], ens.triple, tube=0.0)
    Rt[ok] = r_tilde(field, X[ok.ravel()], ens.triple, tube=0.0)
    clock = np.zeros((paths, m))
    clock[:, 1:] = np.cumsum(np.nan_to_num(Q[:, :-1]) * ens.dt, axis=1)
    clock[~ok] = np.nan
    end = clock[np.arange(paths), stop]
    truncated_at = np.where(hit.any(axis=1), end, np.inf)
    if u_max is None:
        u_max = float(np.min(end))
    if du is None:
        du = float(np.nanmedian(Q[:, 0])) * ens.dt
    u = np.arange(0.0, u_max + 0.5 * du, du)
    gap = np.full((paths, u.size), np.nan)
    dr = np.full((paths, u.size), np.nan)
    for p in range(paths):
        c = clock[p, : stop[p] + 1]
        valid = u <= c[-1]
        lam = np.interp(u[valid], c, t[: stop[p] + 1])
        gap[p, valid] = np.interp(lam, t[: stop[p] + 1], s[p, : stop[p] + 1])
        left = np.clip(np.searchsorted(c, u[valid], side="right") - 1, 0, stop[p])
        dr[p, valid] = Rt[p, left]
    return ClockedGapPath(t, clock, u, gap, dr, truncated_at)


# ----------------------------------------------------------------------------
# Girsanov


def girsanov_weight(states: np.ndarray, dW: np.ndarray, field: CoefficientField, dt: float) -> float:
    """``eta(T)`` for one path from its states ``(steps+1, n)`` and increments ``(steps, n)``."""
    X = np.asarray(states, dtype=float)[:-1]
    dW = np.asarray(dW, dtype=float)
    if X.shape != dW.shape:
        raise ParameterOutOfRange("need one more state than increments")
    mu, _, _ = field.coefficients(X)
    log_eta = float(np.sum(_log_eta_increment(field, X, mu, dW, dt)))
    return math.exp(log_eta)


@dataclass(frozen=True)
class MeanEstimate:
    mean: float
    stderr: float
    extra: dict = dc_field(default_factory=dict)


def girsanov_mean(ens: PathEnsemble) -> MeanEstimate:
    if ens.log_eta is None:
        raise ParameterOutOfRange("ensemble was simulated without girsanov=True")
    eta = np.exp(ens.log_eta)
    return MeanEstimate(float(eta.mean()), float(eta.std(ddof=1) / math.sqrt(eta.size)))


def squared_gap_mean(ens: PathEnsemble) -> MeanEstimate:
    """Sample mean of ``s^2(X(T))`` and its standard error."""
    P = gap_projector(ens.states.shape[2], ens.triple)
    s2 = np.einsum("bi,ij,bj->b", ens.final, P, ens.final)
    return MeanEstimate(float(s2.mean()), float(s2.std(ddof=1) / math.sqrt(s2.size)))
