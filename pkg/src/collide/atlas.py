"""Atlas-type rank-based models and their gap process."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import ParameterOutOfRange, RankDiagonalField, rank_vector
from .rbm import RBMSpec, corner_attainability, skorokhod_map
from .sde import SimConfig, simulate


class InvalidSpec(ValueError):
    pass


class NegativeGap(ValueError):
    pass


class ErgodicityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class AtlasSpec:
    """Rank drifts ``g``, common drift ``gamma`` and rank volatilities ``sigmas``.

    Ergodicity failures are collected in :attr:`warnings` and emitted as
    :class:`ErgodicityWarning`; non-positive volatilities are fatal.
    """

    sigmas: tuple[float, ...]
    g: tuple[float, ...] | None = None
    gamma: float = 0.0
    warnings: tuple[str, ...] = field(default=(), init=False)

    def __post_init__(self):
        s = tuple(float(v) for v in self.sigmas)
        n = len(s)
        if n < 2:
            raise InvalidSpec("need at least two particles")
        if any(v <= 0 for v in s):
            raise InvalidSpec("rank volatilities must be positive")
        g = tuple(0.0 for _ in s) if self.g is None else tuple(float(v) for v in self.g)
        if len(g) != n:
            raise InvalidSpec("g and sigmas must have the same length")
        object.__setattr__(self, "sigmas", s)
        object.__setattr__(self, "g", g)
        msgs = []
        partial = np.cumsum(g)
        for k in range(n - 1):
            if not partial[k] < 0:
                msgs.append(f"sum of g_1..g_{k + 1} is {partial[k]:g}, not negative")
        if abs(partial[-1]) > 1e-12:
            msgs.append(f"sum of all g is {partial[-1]:g}, not zero")
        object.__setattr__(self, "warnings", tuple(msgs))
        for m in msgs:
            warnings.warn(m, ErgodicityWarning, stacklevel=3)

    @property
    def n(self) -> int:
        return len(self.sigmas)

    @property
    def variances(self) -> np.ndarray:
        return np.asarray(self.sigmas) ** 2

    @property
    def ergodic(self) -> bool:
        return not self.warnings

    @property
    def linear_growth(self) -> bool:
        """Whether consecutive variance increments are all equal."""
        inc = np.diff(self.variances)
        return bool(np.all(np.abs(inc - inc[0]) <= 1e-12 * max(1.0, np.abs(self.variances).max())))

    @property
    def weak3(self) -> bool | None:
        """For three particles: ``s_2^2 - s_1^2 >= s_3^2 - s_2^2``."""
        if self.n != 3:
            return None
        v = self.variances
        return bool(v[1] - v[0] >= v[2] - v[1] - 1e-12)

    def field(self) -> RankDiagonalField:
        return RankDiagonalField(self.sigmas, self.g, self.gamma)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "sigmas": list(self.sigmas),
            "g": list(self.g),
            "gamma": self.gamma,
            "ergodic": self.ergodic,
            "warnings": list(self.warnings),
            "linear_growth": self.linear_growth,
            "weak3": self.weak3,
        }


@dataclass(frozen=True)
class GapSystem:
    h: np.ndarray
    A: np.ndarray
    R: np.ndarray
    Q: np.ndarray

    def rbm_spec(self, z0: Sequence[float] | None = None) -> RBMSpec:
        return RBMSpec(self.h, self.R, A=self.A, z0=None if z0 is None else np.asarray(z0, float))


def build_gap_system(spec: AtlasSpec) -> GapSystem:
    v = spec.variances
    g = np.asarray(spec.g)
    d = spec.n - 1
    h = g[:-1] - g[1:]
    A = np.diag(v[:-1] + v[1:])
    if d > 1:
        off = -v[1:-1]
        A += np.diag(off, 1) + np.diag(off, -1)
    Q = 0.5 * (np.eye(d, k=1) + np.eye(d, k=-1))
    return GapSystem(h, A, np.eye(d) - Q, Q)


def recovery_weights(n: int) -> np.ndarray:
    """``w[k, j] = n - j`` for ``j >= k`` and ``-j`` otherwise (1-based ``j``)."""
    j = np.arange(1, n)
    k = np.arange(1, n + 1)[:, None]
    return np.where(j[None, :] >= k, n - j[None, :], -j[None, :]).astype(float)


def recover_ranked(total, Z) -> np.ndarray:
    """Ranked positions from their sum and the gaps between neighbours.

    Works on a single state or on any leading batch shape.
    """
    Z = np.asarray(Z, dtype=float)
    if np.any(Z < 0):
        raise NegativeGap("gaps must be nonnegative")
    n = Z.shape[-1] + 1
    W = recovery_weights(n)
    return (np.asarray(total, dtype=float)[..., None] + Z @ W.T) / n


def coincidence_counts(X: np.ndarray, eps: float) -> np.ndarray:
    """``N_k``: particles within ``eps`` of the ``k``-th ranked position."""
    ranked = -np.sort(-X, axis=-1)
    return np.sum(np.abs(X[..., None, :] - ranked[..., :, None]) <= eps, axis=-1)


@dataclass
class AtlasResult:
    spec: AtlasSpec
    times: np.ndarray
    ranked: np.ndarray  # direct simulation, (paths, m, n)
    gaps: np.ndarray  # reflected gap process Z, (paths, m, n-1)
    recovered: np.ndarray  # Psi, (paths, m, n)
    total: np.ndarray  # (paths, m)
    zeta: np.ndarray  # (paths, m, n-1)
    coincidence: dict[float, np.ndarray]  # eps -> fraction of steps with N_k >= 3, per k
    sum_increment_var: tuple[float, float]  # sample variance of total increments / dt, and its stderr
    classification: dict

    def zeta_summary(self) -> dict:
        az = np.abs(self.zeta)
        return {
            "max_abs_zeta": float(az.max()),
            "mean_path_max_abs_zeta": float(az.max(axis=(1, 2)).mean()),
            "max_abs_zeta_by_gap": az.max(axis=(0, 1)).tolist(),
            "recovery_max_abs_error": float(np.abs(self.recovered - self.ranked).max()),
            "sum_increment_variance_rate": self.sum_increment_var[0],
            "sum_increment_variance_stderr": self.sum_increment_var[1],
            "expected_variance_rate": float(self.spec.variances.sum()),
            "triple_coincidence_fraction": {str(e): v.tolist() for e, v in self.coincidence.items()},
        }


def atlas_pipeline(
    spec: AtlasSpec,
    x0: Sequence[float],
    dt: float = 1e-3,
    T: float = 1.0,
    paths: int = 1000,
    seed: int = 0,
    threads: int = 1,
    coincidence_eps: Sequence[float] = (0.1, 0.01, 0.001),
) -> AtlasResult:
    """Direct simulation, coupled gap process, recovery and the zeta residual.

    The gap process is driven by the same increments as the direct
    simulation: at each step the increment of the particle holding rank
    ``k`` becomes the increment of the ``k``-th ranked Brownian motion.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (spec.n,):
        raise ParameterOutOfRange(f"x0 must have length {spec.n}")
    fld = spec.field()
    cfg = SimConfig(fld, x0, dt=dt, T=T, paths=paths, seed=seed, record="full", keep_noise=True,
                    threads=threads, collision_eps=1e-3, metric="origin")
    ens = simulate(cfg)
    X, dW = ens.states, ens.noise
    P, m, n = X.shape
    ranked_all, perm, _ = rank_vector(X.reshape(-1, n))
    ranked = ranked_all.reshape(P, m, n)
    perm = perm.reshape(P, m, n)
    # increments of the ranked Brownian motions: particle at rank k at the left end
    dB = np.take_along_axis(dW, perm[:, :-1], axis=2)
    sig = np.asarray(spec.sigmas)
    g = np.asarray(spec.g)
    gs = build_gap_system(spec)
    free_inc = gs.h * dt + sig[:-1] * dB[..., :-1] - sig[1:] * dB[..., 1:]
    z0 = -np.diff(ranked[:, 0], axis=-1)
    x_free = np.empty((P, m, n - 1))
    x_free[:, 0] = z0
    x_free[:, 1:] = z0[:, None, :] + np.cumsum(free_inc, axis=1)
    Z, _, _ = skorokhod_map(gs.R, x_free)
    Z = np.maximum(Z, 0.0)  # clear round-off below zero
    tot_inc = np.sum((g + spec.gamma) * dt + sig * dB, axis=2)
    total = np.empty((P, m))
    total[:, 0] = x0.sum()
    total[:, 1:] = x0.sum() + np.cumsum(tot_inc, axis=1)
    recovered = recover_ranked(total, Z)
    zeta = -np.diff(ranked, axis=-1) - Z
    coin = {}
    for e in coincidence_eps:
        N = coincidence_counts(X, e)
        coin[float(e)] = np.mean(N >= 3, axis=(0, 1))
    sum_inc = np.diff(X.sum(axis=2), axis=1).ravel() - (g.sum() + n * spec.gamma) * dt
    v = float(np.mean(sum_inc**2))
    v_se = float(np.std(sum_inc**2, ddof=1) / math.sqrt(sum_inc.size))
    classification = corner_attainability(gs.rbm_spec()).to_dict() if n >= 3 else {}
    return AtlasResult(spec, ens.times, ranked, Z, recovered, total, zeta, coin, (v / dt, v_se / dt), classification)
