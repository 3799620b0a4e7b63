"""Shared numeric primitives: difference matrices, ranking, partitions and
piecewise coefficient fields.

All coefficient fields evaluate in batches: ``X`` has shape ``(batch, n)``
and the returned drift and diffusion have shapes ``(batch, n)`` and
``(batch, n, n)``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class NoRegionContains(ValueError):
    """Raised when a partition fails to assign a point to any region."""


class AmbiguousRegion(ValueError):
    """Raised when a point lies in more than one region of a partition."""


class OnZeroSet(ValueError):
    """Raised when a functional is evaluated on (or too close to) the zero set."""


class OnOrigin(ValueError):
    pass


class ParameterOutOfRange(ValueError):
    pass


# ----------------------------------------------------------------------------
# difference matrix and the squared gap


def difference_matrix(n: int, triple: Sequence[int] = (0, 1, 2)) -> np.ndarray:
    """Return the ``(n, 3)`` integer matrix ``D = (d1, d2, d3)`` for ``triple``.

    ``d1 = e_i - e_j``, ``d2 = e_j - e_k``, ``d3 = e_k - e_i``. Indices are
    zero-based.
    """
    i, j, k = _check_triple(n, triple)
    D = np.zeros((n, 3), dtype=np.int64)
    D[i, 0], D[j, 0] = 1, -1
    D[j, 1], D[k, 1] = 1, -1
    D[k, 2], D[i, 2] = 1, -1
    return D


def _check_triple(n: int, triple: Sequence[int]) -> tuple[int, int, int]:
    i, j, k = (int(t) for t in triple)
    if not (0 <= i < j < k < n):
        raise ParameterOutOfRange(f"triple {triple!r} must satisfy 0 <= i < j < k < n={n}")
    return i, j, k


def parse_triple(text: str) -> tuple[int, int, int]:
    """Parse a one-based ``"1,2,3"`` triple into zero-based indices."""
    try:
        parts = sorted(int(p) - 1 for p in text.split(","))
    except ValueError:
        raise ParameterOutOfRange(f"cannot parse triple {text!r}") from None
    if len(parts) != 3 or len(set(parts)) != 3 or parts[0] < 0:
        raise ParameterOutOfRange(f"expected three distinct positive indices, got {text!r}")
    return parts[0], parts[1], parts[2]


def gap_projector(n: int, triple: Sequence[int] = (0, 1, 2)) -> np.ndarray:
    """``D D'`` as a float matrix."""
    D = difference_matrix(n, triple).astype(float)
    return D @ D.T


def squared_gap(x, triple: Sequence[int] = (0, 1, 2)):
    """Sum of the three squared pairwise distances among ``x_i, x_j, x_k``.

    Works on a single vector or on a batch ``(..., n)``.
    """
    x = np.asarray(x, dtype=float)
    i, j, k = _check_triple(x.shape[-1], triple)
    a, b, c = x[..., i], x[..., j], x[..., k]
    return (a - b) ** 2 + (b - c) ** 2 + (c - a) ** 2


# ----------------------------------------------------------------------------
# ranking


def rank_vector(x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sort ``x`` in descending order with index tie-breaking.

    Returns ``(ranked, perm, inverse)``, all zero-based: ``ranked[k] =
    x[perm[k]]`` and ``ranked[inverse[i]] = x[i]``. Among equal values the
    smaller index receives the higher rank (smaller ``k``).

    Accepts batches ``(..., n)``.
    """
    x = np.asarray(x, dtype=float)
    perm = np.argsort(-x, axis=-1, kind="stable")
    ranked = np.take_along_axis(x, perm, axis=-1)
    inverse = np.argsort(perm, axis=-1, kind="stable")
    return ranked, perm, inverse


def ranked_by_maxmin(x) -> np.ndarray:
    """Ranked values via ``x_(k) = max over k-subsets of their minimum``.

    Exponential in ``n``; kept as a combinatorial reference for small ``n``.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    return np.array(
        [max(min(x[list(c)]) for c in itertools.combinations(range(n), k)) for k in range(1, n + 1)]
    )


# ----------------------------------------------------------------------------
# polyhedral regions


@dataclass(frozen=True)
class HalfSpace:
    """``normal . x > offset`` (strict) or ``normal . x >= offset`` (weak).

    Membership uses an absolute tolerance on the signed distance: a weak
    constraint accepts ``>= -tol`` and a strict one requires ``> tol``, so a
    strict/weak pair with opposite normals splits space without overlap.
    """

    normal: tuple[float, ...]
    offset: float = 0.0
    strict: bool = False

    def signed_distance(self, X: np.ndarray) -> np.ndarray:
        a = np.asarray(self.normal, dtype=float)
        nrm = np.linalg.norm(a)
        return (X @ a - self.offset) / nrm

    def contains(self, X: np.ndarray, tol: float) -> np.ndarray:
        d = self.signed_distance(X)
        return d > tol if self.strict else d >= -tol


@dataclass(frozen=True)
class PolyhedralRegion:
    halfspaces: tuple[HalfSpace, ...]

    def contains(self, X, tol: float = 1e-9) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        inside = np.ones(X.shape[0], dtype=bool)
        for h in self.halfspaces:
            inside &= h.contains(X, tol)
        return inside

    def equality_normals(self) -> np.ndarray:
        """Normals of weak constraint pairs ``a.x >= b`` and ``-a.x >= -b``."""
        out = []
        hs = self.halfspaces
        for p, q in itertools.combinations(range(len(hs)), 2):
            a, b = hs[p], hs[q]
            if a.strict or b.strict:
                continue
            na, nb = np.asarray(a.normal, float), np.asarray(b.normal, float)
            if np.allclose(na, -nb) and np.isclose(a.offset, -b.offset):
                out.append(na / np.linalg.norm(na))
        if not out:
            return np.zeros((0, len(hs[0].normal)) if hs else (0, 0))
        return np.array(out)


def equality(normal: Sequence[float], offset: float = 0.0) -> tuple[HalfSpace, HalfSpace]:
    """Two weak half-spaces encoding ``normal . x = offset`` within tolerance."""
    a = tuple(float(v) for v in normal)
    return HalfSpace(a, offset, False), HalfSpace(tuple(-v for v in a), -offset, False)


# ----------------------------------------------------------------------------
# coefficient fields

MatrixFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Region:
    """One cell of a piecewise field.

    ``mu`` and ``sigma`` are constants (``(n,)`` and ``(n, n)``) or callables
    mapping a batch ``(b, n)`` to ``(b, n)`` / ``(b, n, n)``. ``pieces`` lists
    the polyhedra whose union forms the region; it may be empty when the
    partition locates points by other means. ``negligible`` marks regions
    that lie inside the zero set of interest (or are empty off it), which
    samplers skip.
    """

    label: str
    mu: np.ndarray | MatrixFn
    sigma: np.ndarray | MatrixFn
    pieces: tuple[PolyhedralRegion, ...] = ()
    negligible: bool = False

    @property
    def constant(self) -> bool:
        return not (callable(self.mu) or callable(self.sigma))


class CoefficientField:
    """Piecewise drift and diffusion over a partition of R^n.

    Subclasses implement :meth:`locate`; region coefficients are looked up
    from :attr:`regions` unless :meth:`coefficients` is overridden.
    """

    kind = "piecewise"

    def __init__(
        self,
        n: int,
        regions: Sequence[Region],
        drift_bound: float | None = None,
        eig_floor: float | None = None,
        eig_ceiling: float | None = None,
        tol: float = 1e-9,
    ):
        self.n = int(n)
        self.regions = tuple(regions)
        self.drift_bound = drift_bound
        self.eig_floor = eig_floor
        self.eig_ceiling = eig_ceiling
        self.tol = tol
        self._const = all(r.constant for r in self.regions)
        if self._const and self.regions:
            self._mu = np.stack([np.broadcast_to(np.asarray(r.mu, float), (self.n,)) for r in self.regions])
            self._sigma = np.stack([np.asarray(r.sigma, float).reshape(self.n, self.n) for r in self.regions])

    @property
    def labels(self) -> list[str]:
        return [r.label for r in self.regions]

    def locate(self, X: np.ndarray) -> np.ndarray:
        """Region index for each row of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        hits = np.zeros((len(self.regions), X.shape[0]), dtype=bool)
        for r, reg in enumerate(self.regions):
            for piece in reg.pieces:
                hits[r] |= piece.contains(X, self.tol)
        count = hits.sum(axis=0)
        if np.any(count == 0):
            bad = X[np.argmax(count == 0)]
            raise NoRegionContains(f"no region contains x={bad.tolist()}")
        if np.any(count > 1):
            bad = X[np.argmax(count > 1)]
            raise AmbiguousRegion(f"several regions contain x={bad.tolist()}")
        return np.argmax(hits, axis=0)

    def coefficients(self, X) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Drift ``(b, n)``, diffusion ``(b, n, n)`` and region ids ``(b,)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        ids = self.locate(X)
        if self._const:
            return self._mu[ids], self._sigma[ids], ids
        mu = np.empty(X.shape)
        sigma = np.empty(X.shape + (self.n,))
        for r in np.unique(ids):
            sel = ids == r
            reg = self.regions[r]
            mu[sel] = reg.mu(X[sel]) if callable(reg.mu) else reg.mu
            sigma[sel] = reg.sigma(X[sel]) if callable(reg.sigma) else reg.sigma
        return mu, sigma, ids

    def covariance(self, X) -> np.ndarray:
        """``A(x) = sigma(x) sigma(x)'`` for a batch."""
        _, s, _ = self.coefficients(X)
        return s @ np.swapaxes(s, -1, -2)

    def apply_sigma(self, X: np.ndarray, dW: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(mu(X), sigma(X) dW)``; overridden where sigma is diagonal."""
        mu, s, _ = self.coefficients(X)
        return mu, np.einsum("bij,bj->bi", s, dW)

    def solve_sigma(self, X: np.ndarray, v: np.ndarray) -> np.ndarray:
        """``sigma(X)^{-1} v`` row by row."""
        if self._const and self.regions:
            if not hasattr(self, "_sigma_inv"):
                self._sigma_inv = np.linalg.inv(self._sigma)
            return np.einsum("bij,bj->bi", self._sigma_inv[self.locate(X)], v)
        _, s, _ = self.coefficients(X)
        return np.linalg.solve(s, v[..., None])[..., 0]


def evaluate_field(field: CoefficientField, x) -> tuple[np.ndarray, np.ndarray, int]:
    """Coefficients at a single point: ``(mu, sigma, region_id)``."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    mu, sigma, ids = field.coefficients(x[None, :])
    return mu[0], sigma[0], int(ids[0])


class PiecewiseField(CoefficientField):
    """Field on an explicit list of polyhedral regions."""


class VoronoiConeField(CoefficientField):
    """Regions are double cones ``{x: |<x, y_v>| maximal over v}`` around unit axes.

    Region ``v`` is the union of two polyhedral cones (the ``+y_v`` and
    ``-y_v`` Voronoi cells); polyhedra are generated lazily for validation.
    Ties go to the smaller axis index.
    """

    kind = "voronoi_cones"

    def __init__(self, axes: np.ndarray, regions: Sequence[Region], **kw):
        self.axes = np.asarray(axes, dtype=float)
        super().__init__(self.axes.shape[1], regions, **kw)

    def locate(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.argmax(np.abs(X @ self.axes.T), axis=1)

    def cone_pieces(self, v: int) -> tuple[PolyhedralRegion, PolyhedralRegion]:
        """Explicit half-space description of region ``v`` (both signs)."""
        pieces = []
        for sgn in (1.0, -1.0):
            y = sgn * self.axes[v]
            hs = []
            for w, z in enumerate(self.axes):
                if w == v:
                    continue
                strict = w < v
                hs.append(HalfSpace(tuple(y - z), 0.0, strict))
                hs.append(HalfSpace(tuple(y + z), 0.0, strict))
            pieces.append(PolyhedralRegion(tuple(hs)))
        return tuple(pieces)


class RankDiagonalField(CoefficientField):
    """Rank-based field: particle ranked ``k`` gets drift ``g[k] + gamma`` and
    volatility ``sigmas[k]`` on its own coordinate.

    Region ids enumerate rank permutations (lexicographic index of ``perm``).
    """

    kind = "rank_diagonal"

    def __init__(self, sigmas: Sequence[float], g: Sequence[float] | None = None, gamma: float = 0.0):
        self.sigmas = np.asarray(sigmas, dtype=float)
        n = self.sigmas.size
        if np.any(self.sigmas <= 0):
            raise ParameterOutOfRange("rank volatilities must be positive")
        self.g = np.zeros(n) if g is None else np.asarray(g, dtype=float)
        if self.g.shape != (n,):
            raise ParameterOutOfRange("g must have one entry per rank")
        self.gamma = float(gamma)
        s2 = self.sigmas**2
        super().__init__(
            n,
            regions=(),
            drift_bound=float(np.max(np.abs(self.g + self.gamma))),
            eig_floor=float(s2.min()),
            eig_ceiling=float(s2.max()),
        )
        self._weights = np.array([np.prod(np.arange(n - 1 - k, 0, -1)) for k in range(n)], dtype=np.int64)

    def ranks(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return rank_vector(X)[2]

    def locate(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        perm = rank_vector(X)[1]
        # Lehmer code of the permutation
        n = self.n
        code = np.zeros(X.shape[0], dtype=np.int64)
        for k in range(n):
            smaller = (perm[:, k + 1 :] < perm[:, k : k + 1]).sum(axis=1)
            code += smaller * self._weights[k]
        return code

    def coefficients(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        inv = self.ranks(X)
        mu = self.g[inv] + self.gamma
        diag = self.sigmas[inv]
        sigma = np.zeros(X.shape + (self.n,))
        idx = np.arange(self.n)
        sigma[:, idx, idx] = diag
        return mu, sigma, self.locate(X)

    def apply_sigma(self, X, dW):
        inv = self.ranks(X)
        return self.g[inv] + self.gamma, self.sigmas[inv] * dW

    def solve_sigma(self, X, v):
        return v / self.sigmas[self.ranks(X)]


def identity_field(n: int, mu: Sequence[float] | None = None) -> PiecewiseField:
    """Single-region field with ``sigma = I`` and constant drift (default zero)."""
    m = np.zeros(n) if mu is None else np.asarray(mu, dtype=float)
    whole = PolyhedralRegion(())
    return PiecewiseField(
        n,
        [Region("all", m, np.eye(n), pieces=(whole,))],
        drift_bound=float(np.abs(m).max()) if n else 0.0,
        eig_floor=1.0,
        eig_ceiling=1.0,
    )


def constant_field(mu, sigma) -> PiecewiseField:
    sigma = np.asarray(sigma, dtype=float)
    n = sigma.shape[0]
    A = sigma @ sigma.T
    ev = np.linalg.eigvalsh(A)
    return PiecewiseField(
        n,
        [Region("all", np.asarray(mu, float), sigma, pieces=(PolyhedralRegion(()),))],
        drift_bound=float(np.abs(mu).max()),
        eig_floor=float(ev.min()),
        eig_ceiling=float(ev.max()),
    )


def min_eigenvalues(A: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of each symmetric matrix in a batch."""
    return np.linalg.eigvalsh(A)[..., 0]


def check_partition_coverage(field: CoefficientField, samples: int = 10_000, seed: int = 0) -> np.ndarray:
    """Locate ``samples`` standard-normal points; raises on gaps or overlaps."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((samples, field.n))
    return field.locate(X)


@dataclass(frozen=True)
class DifferenceMatrix:
    """Fixed ``D`` for an index triple together with its two checks."""

    n: int
    triple: tuple[int, int, int] = (0, 1, 2)
    D: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "D", difference_matrix(self.n, self.triple))

    @property
    def projector(self) -> np.ndarray:
        return self.D @ self.D.T

    def idempotence_residual(self) -> np.ndarray:
        """``DD'DD' - 3DD'`` in integer arithmetic."""
        P = self.projector
        return P @ P - 3 * P

    def column_sums(self) -> np.ndarray:
        return self.D.sum(axis=0)
