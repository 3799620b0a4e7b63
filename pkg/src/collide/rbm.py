"""Reflected Brownian motion on the orthant.

Pathwise Skorokhod solver, the rotation that whitens the covariance, the
skew-symmetry residual, the two-dimensional wedge classifier and local-time
estimators.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import ParameterOutOfRange
from .rng import map_blocks, path_normals

SKEW_TOL = 1e-10
FIXED_POINT_TOL = 1e-12
FIXED_POINT_ITERS = 200


class NoConvergence(ArithmeticError):
    """Skorokhod fixed point did not settle within the iteration budget."""


class NotPositiveDefinite(np.linalg.LinAlgError):
    pass


class DimensionMismatch(ValueError):
    pass


def spectral_radius(M: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(M)))) if M.size else 0.0


@dataclass(frozen=True)
class RBMSpec:
    """Orthant RBM ``Z = z0 + h t + Sigma W + R L``.

    Give either ``Sigma`` or the covariance ``A``; the missing one is filled
    in (``Sigma`` as the Cholesky factor).
    """

    h: np.ndarray
    R: np.ndarray
    A: np.ndarray | None = None
    Sigma: np.ndarray | None = None
    z0: np.ndarray | None = None
    check: bool = True

    def __post_init__(self):
        h = np.atleast_1d(np.asarray(self.h, dtype=float))
        d = h.size
        R = np.asarray(self.R, dtype=float).reshape(d, d)
        if self.A is None and self.Sigma is None:
            raise ParameterOutOfRange("give A or Sigma")
        if self.A is None:
            S = np.asarray(self.Sigma, dtype=float).reshape(d, -1)
            A = S @ S.T
        else:
            A = np.asarray(self.A, dtype=float).reshape(d, d)
            if not np.allclose(A, A.T, atol=1e-12):
                raise NotPositiveDefinite("A is not symmetric")
            A = 0.5 * (A + A.T)
        if np.linalg.eigvalsh(A)[0] <= 0:
            raise NotPositiveDefinite("covariance is not positive definite")
        S = np.linalg.cholesky(A) if self.Sigma is None else np.asarray(self.Sigma, dtype=float).reshape(d, -1)
        z0 = np.zeros(d) if self.z0 is None else np.asarray(self.z0, dtype=float).reshape(d)
        for name, val in (("h", h), ("R", R), ("A", A), ("Sigma", S), ("z0", z0)):
            object.__setattr__(self, name, val)
        if self.check:
            if not np.allclose(np.diag(R), 1.0, atol=1e-12):
                raise ParameterOutOfRange("reflection matrix needs a unit diagonal")
            if spectral_radius(np.eye(d) - R) >= 1.0:
                raise ParameterOutOfRange("spectral radius of I - R must be < 1")
            if np.any(z0 < 0):
                raise ParameterOutOfRange("z0 must lie in the orthant")

    @property
    def dim(self) -> int:
        return self.h.size

    @property
    def offdiag(self) -> np.ndarray:
        """``Q`` with ``R = I - Q``."""
        return np.eye(self.dim) - self.R


# ----------------------------------------------------------------------------
# Skorokhod problem


@dataclass
class RBMPath:
    times: np.ndarray
    Z: np.ndarray  # (paths, steps+1, d)
    L: np.ndarray  # cumulative regulator, same shape
    pairs: tuple[tuple[int, int], ...]
    min_pair_gap: np.ndarray  # (paths, len(pairs)): min_t max(Z_i, Z_j)
    iterations: int = 0

    @property
    def dL(self) -> np.ndarray:
        return np.diff(self.L, axis=1)


def skorokhod_map(
    R: np.ndarray, x: np.ndarray, tol: float = FIXED_POINT_TOL, max_iters: int = FIXED_POINT_ITERS
) -> tuple[np.ndarray, np.ndarray, int]:
    """Discrete Skorokhod map of free paths ``x`` of shape ``(paths, steps+1, d)``.

    Returns ``(Z, L, worst_iteration_count)`` with ``Z = x + R L``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        Z, L, it = skorokhod_map(R, x[None], tol, max_iters)
        return Z[0], L[0], it
    R = np.atleast_2d(np.asarray(R, dtype=float))
    B = R - np.eye(R.shape[0])
    L = np.zeros_like(x)
    worst = 0
    Lk = np.zeros(x.shape[::2])
    for k in range(x.shape[1]):
        xk = x[:, k]
        cur = Lk
        for it in range(1, max_iters + 1):
            nxt = np.maximum(Lk, -(xk + cur @ B.T))
            change = np.max(np.abs(nxt - cur)) if nxt.size else 0.0
            cur = nxt
            if change < tol:
                break
        else:
            raise NoConvergence(f"no fixed point after {max_iters} iterations at step {k}")
        worst = max(worst, it)
        Lk = cur
        L[:, k] = Lk
    Z = x + L @ R.T
    return Z, L, worst


def free_path(spec: RBMSpec, dW: np.ndarray, dt: float) -> np.ndarray:
    """``z0 + h t + Sigma W`` on the grid, from increments ``(paths, steps, d)``."""
    dW = np.asarray(dW, dtype=float)
    inc = spec.h * dt + dW @ spec.Sigma.T
    x = np.empty((dW.shape[0], dW.shape[1] + 1, spec.dim))
    x[:, 0] = spec.z0
    x[:, 1:] = spec.z0 + np.cumsum(inc, axis=1)
    return x


def solve_path(spec: RBMSpec, dW: np.ndarray, dt: float, max_iters: int = FIXED_POINT_ITERS) -> RBMPath:
    """Reflect the free path driven by Brownian increments ``dW``."""
    dW = np.asarray(dW, dtype=float)
    if dW.ndim == 2:
        dW = dW[None]
    if dW.shape[2] != spec.Sigma.shape[1]:
        raise DimensionMismatch("increments do not match Sigma")
    Z, L, it = skorokhod_map(spec.R, free_path(spec, dW, dt), max_iters=max_iters)
    return _wrap(Z, L, dt, it)


def _wrap(Z, L, dt, it) -> RBMPath:
    d = Z.shape[2]
    pairs = tuple(itertools.combinations(range(d), 2))
    mpg = np.empty((Z.shape[0], len(pairs)))
    for c, (i, j) in enumerate(pairs):
        mpg[:, c] = np.min(np.maximum(Z[:, :, i], Z[:, :, j]), axis=1)
    return RBMPath(np.arange(Z.shape[1]) * dt, Z, L, pairs, mpg, it)


def simulate_rbm(
    spec: RBMSpec, dt: float, T: float, paths: int, seed: int = 0, threads: int = 1
) -> RBMPath:
    steps = max(1, int(round(T / dt)))
    k = spec.Sigma.shape[1]

    def run(idx):
        dW = path_normals(seed, idx, steps, k) * math.sqrt(dt)
        Z, L, it = skorokhod_map(spec.R, free_path(spec, dW, dt))
        return Z, L, it

    parts = map_blocks(run, paths, threads)
    Z = np.concatenate([p[0] for p in parts])
    L = np.concatenate([p[1] for p in parts])
    return _wrap(Z, L, dt, max(p[2] for p in parts))


def complementarity(path: RBMPath, eps: float) -> np.ndarray:
    """``sum 1{Z_i > eps} dL_i`` per path and face."""
    return np.sum((path.Z[:, 1:] > eps) * path.dL, axis=1)


# ----------------------------------------------------------------------------
# rotation and rescaling


@dataclass(frozen=True)
class TransformedSpec:
    U: np.ndarray  # columns are eigenvectors of A
    eigenvalues: np.ndarray
    Dg: np.ndarray  # diag(A) as a matrix
    c: np.ndarray  # Dg^{-1/2}
    M: np.ndarray  # whitening map y = M z
    N: np.ndarray  # columns: unit inward normals of the transformed faces
    Qt: np.ndarray  # columns: tangential parts of the scaled reflection directions
    Rt: np.ndarray  # transformed reflection matrix M R
    offsets: np.ndarray  # face offsets; zero since faces pass through the origin
    A: np.ndarray

    def identity_residuals(self) -> dict[str, float]:
        d = self.N.shape[1]
        return {
            "eigen": float(np.max(np.abs(self.U.T @ self.A @ self.U - np.diag(self.eigenvalues)))),
            "normals": float(np.max(np.abs(np.diag(self.N.T @ self.N) - 1.0))) if d else 0.0,
            "orthogonal": float(np.max(np.abs(np.diag(self.N.T @ self.Qt)))) if d else 0.0,
            "decomposition": float(np.max(np.abs(self.Rt - (self.N + self.Qt) * np.diag(self.c)))) if d else 0.0,
        }


def _sign_fix(U: np.ndarray) -> np.ndarray:
    U = U.copy()
    for j in range(U.shape[1]):
        nz = np.flatnonzero(np.abs(U[:, j]) > 1e-14)
        if nz.size and U[nz[0], j] < 0:
            U[:, j] *= -1
    return U


def rotate_rescale(spec: RBMSpec) -> TransformedSpec:
    """Whiten the covariance and split each reflection direction into a unit
    normal and a tangential part.

    With ``A = U diag(lam) U'`` the map ``y = lam^{-1/2} U' z`` sends the
    orthant to a wedge in which the driving noise is standard.
    """
    lam, U = np.linalg.eigh(spec.A)
    if lam[0] <= 0:
        raise NotPositiveDefinite("covariance is not positive definite")
    U = _sign_fix(U)
    Dg = np.diag(np.diag(spec.A))
    c = np.diag(1.0 / np.sqrt(np.diag(spec.A)))
    M = np.diag(lam**-0.5) @ U.T
    N = np.diag(lam**0.5) @ U.T @ c
    Rt = M @ spec.R
    Qt = Rt @ np.linalg.inv(c) - N
    return TransformedSpec(U, lam, Dg, c, M, N, Qt, Rt, np.zeros(spec.dim), spec.A)


# ----------------------------------------------------------------------------
# skew symmetry


@dataclass(frozen=True)
class SkewReport:
    residual: np.ndarray  # 2D - QD - DQ' - 2A
    normal_tangent: np.ndarray  # N'Qt + Qt'N
    conjugation_residual: float

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.residual))) if self.residual.size else 0.0

    @property
    def skew_symmetric(self) -> bool:
        return self.max_abs <= SKEW_TOL


def skew_symmetry_residual(spec: RBMSpec, ts: TransformedSpec | None = None) -> SkewReport:
    """Residual of the skew-symmetry condition, with the conjugation cross-check
    ``Dg^{1/2} (N'Qt + Qt'N) Dg^{1/2}`` computed from the rotated spec."""
    ts = ts or rotate_rescale(spec)
    Dg, Q, A = ts.Dg, spec.offdiag, spec.A
    res = 2.0 * Dg - Q @ Dg - Dg @ Q.T - 2.0 * A
    nt = ts.N.T @ ts.Qt + ts.Qt.T @ ts.N
    half = np.sqrt(Dg)
    conj = float(np.max(np.abs(half @ nt @ half - res))) if res.size else 0.0
    return SkewReport(res, nt, conj)


# ----------------------------------------------------------------------------
# wedge classification


class Verdict(str, enum.Enum):
    HITS_CORNER = "HitsCorner"
    NEVER_HITS = "NeverHits"
    NEVER_HITS_ANY = "NeverHitsAnyIntersection"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class WedgeReport:
    xi: float
    theta1: float
    theta2: float
    beta: float
    normal_tangent_sum: float  # n1'q2 + n2'q1
    verdict: Verdict
    beta_at_least_two: bool
    geometric_theta: tuple[float, float]

    def to_dict(self) -> dict:
        return {
            "xi": self.xi,
            "theta1": self.theta1,
            "theta2": self.theta2,
            "beta": self.beta,
            "normal_tangent_sum": self.normal_tangent_sum,
            "verdict": self.verdict.value,
            "beta_at_least_two": self.beta_at_least_two,
        }


def _geometric_thetas(N: np.ndarray, Qt: np.ndarray) -> tuple[float, float]:
    """Signed angles of the reflection directions from the face normals,
    positive when the tangential part points towards the corner."""
    out = []
    for j in (0, 1):
        i = 1 - j
        n = N[:, j]
        d = np.array([-n[1], n[0]])  # face direction
        if N[:, i] @ d < 0:
            d = -d  # d runs along face j into the wedge
        q = Qt[:, j]
        tangential = float(q @ d)
        out.append(math.atan2(-tangential, 1.0))
    return out[0], out[1]


def wedge_classifier_2d(spec: RBMSpec) -> WedgeReport:
    """Angles and corner verdict for a two-dimensional RBM.

    ``theta_j`` takes its size from ``|q_j|`` and its sign from the relation
    ``n_i'q_j = |q_j| sgn(-theta_j) sin(xi)``; the corner is reached exactly
    when ``beta = (theta_1 + theta_2)/xi`` is positive.
    """
    if spec.dim != 2:
        raise DimensionMismatch(f"wedge classifier needs dimension 2, got {spec.dim}")
    ts = rotate_rescale(spec)
    N, Qt = ts.N, ts.Qt
    xi = math.acos(max(-1.0, min(1.0, -float(N[:, 0] @ N[:, 1]))))
    n1q2 = float(N[:, 0] @ Qt[:, 1])
    n2q1 = float(N[:, 1] @ Qt[:, 0])
    thetas = []
    for cross, j in ((n2q1, 0), (n1q2, 1)):
        size = math.atan(float(np.linalg.norm(Qt[:, j])))
        sign = 0.0 if abs(cross) <= 1e-14 else -math.copysign(1.0, cross)
        thetas.append(sign * size)
    beta = (thetas[0] + thetas[1]) / xi
    if abs(beta) <= 1e-12:
        beta = 0.0
    verdict = Verdict.HITS_CORNER if beta > 0 else Verdict.NEVER_HITS
    return WedgeReport(
        xi, thetas[0], thetas[1], beta, n1q2 + n2q1, verdict, beta >= 2.0, _geometric_thetas(N, Qt)
    )


@dataclass(frozen=True)
class CornerReport:
    verdict: Verdict
    skew_max_abs: float
    pairs: dict[tuple[int, int], Verdict]
    wedge: WedgeReport | None = None

    def to_dict(self) -> dict:
        out = {
            "verdict": self.verdict.value,
            "skew_residual_max_abs": self.skew_max_abs,
            "pairs": {f"{i + 1},{j + 1}": v.value for (i, j), v in self.pairs.items()},
        }
        if self.wedge is not None:
            out["wedge"] = self.wedge.to_dict()
        return out


def corner_attainability(spec: RBMSpec) -> CornerReport:
    """Which intersections of faces the RBM can reach.

    Skew symmetry rules out every intersection. Without it the answer is
    known only in two dimensions, where the wedge classifier decides.
    """
    if spec.dim < 2:
        raise DimensionMismatch("need at least two faces")
    skew = skew_symmetry_residual(spec)
    pairs = list(itertools.combinations(range(spec.dim), 2))
    wedge = wedge_classifier_2d(spec) if spec.dim == 2 else None
    if skew.skew_symmetric:
        return CornerReport(Verdict.NEVER_HITS_ANY, skew.max_abs, {p: Verdict.NEVER_HITS for p in pairs}, wedge)
    if wedge is not None:
        return CornerReport(wedge.verdict, skew.max_abs, {pairs[0]: wedge.verdict}, wedge)
    return CornerReport(Verdict.UNKNOWN, skew.max_abs, {p: Verdict.UNKNOWN for p in pairs})


# ----------------------------------------------------------------------------
# local time


def local_time_tanaka(Y: np.ndarray, level: float = 0.0) -> np.ndarray:
    """Discrete ``Y(t) - Y(0) - int sgn(Y) dY`` along the last axis.

    Steps that start at or below ``level`` count as boundary steps. With
    ``level=0`` only exact zeros count, which misses pushes that start from a
    small positive value; a level of a few ``sqrt(dt)`` removes that bias.
    """
    Y = np.asarray(Y, dtype=float)
    dY = np.diff(Y, axis=-1)
    boundary = Y[..., :-1] <= level
    out = np.zeros_like(Y)
    out[..., 1:] = np.cumsum(np.where(boundary, dY, 0.0), axis=-1)
    return out


def local_time_occupation(Y: np.ndarray, dt: float, eps: float, sigma2: float = 1.0) -> np.ndarray:
    """``(2 eps)^{-1} * time spent in [0, eps] * sigma^2`` up to each grid point."""
    Y = np.asarray(Y, dtype=float)
    occ = np.zeros_like(Y)
    occ[..., 1:] = np.cumsum((Y[..., :-1] <= eps) * dt, axis=-1)
    return occ * sigma2 / (2.0 * eps)


@dataclass(frozen=True)
class LocalTimeComparison:
    solver: np.ndarray  # regulator L(T) per path
    tanaka: np.ndarray
    occupation: np.ndarray
    max_complementarity: float  # worst sum 1{Z > eps} dL relative to L(T)


def reflected_bm_local_times(
    dt: float, T: float, paths: int, seed: int = 0, level: float | None = None, eps: float | None = None,
    z0: float = 0.0, block: int = 500,
) -> LocalTimeComparison:
    """Local time at zero of one-dimensional reflected BM by three estimators.

    Paths are processed in blocks, keeping only per-path summaries.
    """
    level = 3.0 * math.sqrt(dt) if level is None else level
    eps = 10.0 * math.sqrt(dt) if eps is None else eps
    spec = RBMSpec(np.zeros(1), np.eye(1), A=np.eye(1), z0=np.array([z0]))
    steps = max(1, int(round(T / dt)))

    def run(idx):
        dW = path_normals(seed, idx, steps, 1) * math.sqrt(dt)
        Z, L, _ = skorokhod_map(spec.R, free_path(spec, dW, dt))
        Y = Z[:, :, 0]
        LT = L[:, -1, 0]
        comp = np.sum((Z[:, 1:, 0] > eps) * np.diff(L[:, :, 0], axis=1), axis=1)
        rel = np.where(LT > 0, comp / np.where(LT > 0, LT, 1.0), comp)
        return LT, local_time_tanaka(Y, level)[:, -1], local_time_occupation(Y, dt, eps)[:, -1], rel.max()

    parts = map_blocks(run, paths, 1, block)
    return LocalTimeComparison(
        np.concatenate([p[0] for p in parts]),
        np.concatenate([p[1] for p in parts]),
        np.concatenate([p[2] for p in parts]),
        float(max(p[3] for p in parts)),
    )
