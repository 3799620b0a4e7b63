"""Collision functionals of a coefficient field and the sampling classifier.

For a triple ``(i, j, k)`` with difference matrix ``D`` and ``P = DD'``::

    Q(x)  = x'P A P x / x'P x
    R~(x) = trace(D'AD) * x'Px / x'PAPx = trace(AP) / Q(x)
    R(x)  = R~(x) + 2 x'P mu(x) / Q(x)
    ED(x) = |x|^2 trace(A) / x'Ax

``R~ >= 2`` everywhere rules triple collisions out; ``sup R~ < 2`` makes them
certain. Fields satisfying neither fall in a gray zone.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    CoefficientField,
    HalfSpace,
    OnOrigin,
    OnZeroSet,
    ParameterOutOfRange,
    PiecewiseField,
    PolyhedralRegion,
    Region,
    VoronoiConeField,
    difference_matrix,
    equality,
    gap_projector,
    min_eigenvalues,
)

ZERO_SET_TUBE = 1e-6
# samples with s(x) < ANGULAR_TUBE * |x| are dropped: they are nearly parallel to
# the zero set and the functionals lose digits there
ANGULAR_TUBE = 1e-2
THRESHOLD_TOL = 1e-9


class InsufficientSamples(RuntimeError):
    pass


class Classification(str, enum.Enum):
    NO_TRIPLE_COLLISION = "NoTripleCollision"
    TRIPLE_COLLISION_CERTAIN = "TripleCollisionCertain"
    GRAY = "Gray"


def _batch(x):
    x = np.asarray(x, dtype=float)
    return np.atleast_2d(x), x.ndim == 1


def _out(v, single):
    return float(v[0]) if single else v


def _gap_parts(field: CoefficientField, X, triple, tube):
    P = gap_projector(field.n, triple)
    V = X @ P  # P is symmetric
    s2 = np.einsum("bi,bi->b", X, V)
    if np.any(np.sqrt(np.maximum(s2, 0.0)) <= tube):
        raise OnZeroSet(f"squared gap below tube {tube}: {s2.min()!r}")
    mu, sigma, _ = field.coefficients(X)
    A = sigma @ np.swapaxes(sigma, -1, -2)
    N = np.einsum("bi,bij,bj->b", V, A, V)
    trAP = np.einsum("bij,ji->b", A, P)
    return V, s2, A, N, trAP, mu


def q_form(field: CoefficientField, x, triple=(0, 1, 2), tube: float = ZERO_SET_TUBE):
    X, single = _batch(x)
    _, s2, _, N, _, _ = _gap_parts(field, X, triple, tube)
    return _out(N / s2, single)


def r_tilde(field: CoefficientField, x, triple=(0, 1, 2), tube: float = ZERO_SET_TUBE):
    X, single = _batch(x)
    _, s2, _, N, trAP, _ = _gap_parts(field, X, triple, tube)
    return _out(trAP * s2 / N, single)


def r_drifted(field: CoefficientField, x, triple=(0, 1, 2), tube: float = ZERO_SET_TUBE):
    """``R~(x) + 2 x'P mu(x) / Q(x)``."""
    X, single = _batch(x)
    V, s2, _, N, trAP, mu = _gap_parts(field, X, triple, tube)
    Q = N / s2
    return _out(trAP / Q + 2.0 * np.einsum("bi,bi->b", V, mu) / Q, single)


def r_drifted_ratio(field: CoefficientField, x, triple=(0, 1, 2), tube: float = ZERO_SET_TUBE):
    """Same quantity as :func:`r_drifted`, from the single-fraction form
    ``[trace(D'AD) + 2x'P mu] x'Px / x'PAPx``."""
    X, single = _batch(x)
    P = gap_projector(X.shape[1], triple)
    mu, sigma, _ = field.coefficients(X)
    A = sigma @ np.swapaxes(sigma, -1, -2)
    D = difference_matrix(X.shape[1], triple).astype(float)
    tr = np.trace(np.swapaxes(D, 0, 1)[None] @ A @ D[None], axis1=1, axis2=2)
    s2 = np.einsum("bi,ij,bj->b", X, P, X)
    if np.any(np.sqrt(np.maximum(s2, 0.0)) <= tube):
        raise OnZeroSet("on zero set")
    num = (tr + 2.0 * np.einsum("bi,ij,bj->b", X, P, mu)) * s2
    den = np.einsum("bi,ij,bjk,kl,bl->b", X, P, A, P, X)
    return _out(num / den, single)


def effective_dimension(field: CoefficientField, x, tube: float = ZERO_SET_TUBE):
    X, single = _batch(x)
    r2 = np.einsum("bi,bi->b", X, X)
    if np.any(np.sqrt(r2) <= tube):
        raise OnOrigin("effective dimension is undefined at the origin")
    A = field.covariance(X)
    tr = np.trace(A, axis1=1, axis2=2)
    return _out(r2 * tr / np.einsum("bi,bij,bj->b", X, A, X), single)


def origin_q_form(field: CoefficientField, x, tube: float = ZERO_SET_TUBE):
    """Clock rate ``x'Ax / |x|^2`` of the radial process (``D`` replaced by ``I``)."""
    X, single = _batch(x)
    r2 = np.einsum("bi,bi->b", X, X)
    if np.any(np.sqrt(r2) <= tube):
        raise OnOrigin("origin")
    A = field.covariance(X)
    return _out(np.einsum("bi,bij,bj->b", X, A, X) / r2, single)


# ----------------------------------------------------------------------------
# example fields

SQRT3 = math.sqrt(3.0)
_ROOTS = (-2.0 + SQRT3, -2.0 - SQRT3)


def _remark23_factors():
    """Normals of the two linear factors of f1, f2, f3.

    ``f1 = [(x3-x1) - c(x2-x3)] [(x3-x1) - c'(x2-x3)]`` with ``c, c' = -2 +- sqrt 3``;
    f2 and f3 follow by cycling the indices.
    """
    out = []
    for c in _ROOTS:
        out.append(((-1.0, -c, 1.0 + c), (-c, 1.0 + c, -1.0), (1.0 + c, -1.0, -c)))
    # out[root][f] -> regroup as factors[f] = (La, Lb)
    return [(out[0][f], out[1][f]) for f in range(3)]


def remark23_f(x) -> np.ndarray:
    """``(f1, f2, f3)`` evaluated on a batch, shape ``(b, 3)``."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    cols = []
    for La, Lb in _remark23_factors():
        cols.append((X @ np.array(La)) * (X @ np.array(Lb)))
    return np.stack(cols, axis=1)


def _sign_pieces(La, Lb, sign: str) -> list[tuple[HalfSpace, ...]]:
    pos = lambda a: (HalfSpace(a, 0.0, True),)
    neg = lambda a: (HalfSpace(tuple(-v for v in a), 0.0, True),)
    zero = lambda a: equality(a)
    if sign == "+":
        return [pos(La) + pos(Lb), neg(La) + neg(Lb)]
    if sign == "-":
        return [pos(La) + neg(Lb), neg(La) + pos(Lb)]
    return [zero(La), zero(Lb) + pos(La), zero(Lb) + neg(La)]


def build_remark23_field(
    alphas: Sequence[float] = (0.5, -0.5, 0.5, -0.5, 0.5, -0.5), pairing: str = "closed_form"
) -> PiecewiseField:
    """Three-particle field with unit variances and one active correlation per region.

    ``alphas = (a1+, a1-, a2+, a2-, a3+, a3-)`` with ``0 < a_i+ <= 1/2`` and
    ``-1/2 <= a_i- < 0``. ``a12`` is switched on where ``f1 != 0`` with the
    sign of ``f1`` picking ``a1+`` or ``a1-``. Off the set ``f1 = 0`` the
    second and third correlations are selected by sign tests too:

    ``pairing="closed_form"``
        ``a23`` on ``{f1 = 0, f3 != 0}`` and ``a31`` on ``{f1 = f3 = 0, f2 != 0}``.
        Every region then has ``R~ > 2`` and ``ED > 2``.
    ``pairing="as_printed"``
        ``a23`` on ``{f1 = 0, f2 != 0}`` and ``a31`` on ``{f1 = f2 = 0, f3 != 0}``.
        Since ``f3 = -f2`` on ``{f1 = 0}``, ``R~ < 2`` on the two ``R2`` planes.

    The ``R3`` sets and the remaining ``Z`` cell lie in ``x1 = x2 = x3``
    (where all indicators vanish and ``A = I``) and are marked negligible.
    """
    a = [float(v) for v in alphas]
    if len(a) != 6:
        raise ParameterOutOfRange("need six alphas")
    for i in range(3):
        if not (0 < a[2 * i] <= 0.5):
            raise ParameterOutOfRange(f"alpha_{i + 1}+ = {a[2 * i]} not in (0, 1/2]")
        if not (-0.5 <= a[2 * i + 1] < 0):
            raise ParameterOutOfRange(f"alpha_{i + 1}- = {a[2 * i + 1]} not in [-1/2, 0)")
    if pairing == "closed_form":
        second, third = 2, 1
    elif pairing == "as_printed":
        second, third = 1, 2
    else:
        raise ParameterOutOfRange(f"unknown pairing {pairing!r}")
    factors = _remark23_factors()
    pairs = [(0, 1), (1, 2), (2, 0)]

    def region(label, tests, entry, value, negligible=False):
        A = np.eye(3)
        if entry is not None:
            p, q = pairs[entry]
            A[p, q] = A[q, p] = value
        conds = [_sign_pieces(*factors[f], s) for f, s in tests]
        pieces = tuple(PolyhedralRegion(sum(combo, ())) for combo in itertools.product(*conds))
        return Region(label, np.zeros(3), np.linalg.cholesky(A), pieces=pieces, negligible=negligible)

    regions = [
        region("R1+", [(0, "+")], 0, a[0]),
        region("R1-", [(0, "-")], 0, a[1]),
        region("R2+", [(0, "0"), (second, "+")], 1, a[2]),
        region("R2-", [(0, "0"), (second, "-")], 1, a[3]),
        # two vanishing f's force x1 = x2 = x3
        region("R3+", [(0, "0"), (second, "0"), (third, "+")], 2, a[4], negligible=True),
        region("R3-", [(0, "0"), (second, "0"), (third, "-")], 2, a[5], negligible=True),
        region("Z", [(0, "0"), (second, "0"), (third, "0")], None, 0.0, negligible=True),
    ]
    amax = max(abs(v) for v in a)
    fld = PiecewiseField(3, regions, drift_bound=0.0, eig_floor=1.0 - amax, eig_ceiling=1.0 + amax)
    fld.pairing = pairing
    return fld


def remark23_alpha_matrix(field: PiecewiseField, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Active ``(a12, a23, a31)`` at each point of a batch."""
    A = field.covariance(x)
    return A[:, 0, 1], A[:, 1, 2], A[:, 2, 0]


def remark23_ed_closed(field: PiecewiseField, x) -> np.ndarray:
    """Closed form ``2 + [|x|^2 - 4 a12 x1x2 - 4 a23 x2x3 - 4 a31 x3x1] / x'Ax``."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    a12, a23, a31 = remark23_alpha_matrix(field, X)
    x1, x2, x3 = X.T
    r2 = (X**2).sum(axis=1)
    num = r2 - 4 * a12 * x1 * x2 - 4 * a23 * x2 * x3 - 4 * a31 * x3 * x1
    xAx = r2 + 2 * (a12 * x1 * x2 + a23 * x2 * x3 + a31 * x3 * x1)
    return 2.0 + num / xAx


def remark23_rtilde_closed(field: PiecewiseField, x) -> np.ndarray:
    """Closed form ``2 + sum 4 a_ij [gap_ij^2 + 2 (other gaps)] / x'PAPx``."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    a12, a23, a31 = remark23_alpha_matrix(field, X)
    x1, x2, x3 = X.T
    p, q, r = x1 - x2, x2 - x3, x3 - x1
    num = 4 * a12 * (p**2 + 2 * q * r) + 4 * a23 * (q**2 + 2 * r * p) + 4 * a31 * (r**2 + 2 * q * p)
    V = X @ gap_projector(3)
    den = (V**2).sum(axis=1) + 2 * (a12 * V[:, 0] * V[:, 1] + a23 * V[:, 1] * V[:, 2] + a31 * V[:, 2] * V[:, 0])
    return 2.0 + num / den


def fibonacci_axes(m: int) -> np.ndarray:
    """``m`` nearly uniform unit axes in the upper hemisphere of R^3."""
    pts = []
    golden = math.pi * (3.0 - math.sqrt(5.0))
    total = 2 * m
    for k in range(total):
        z = 1.0 - (k + 0.5) * 2.0 / total
        if z <= 0:
            continue
        rho = math.sqrt(1.0 - z * z)
        pts.append((rho * math.cos(golden * k), rho * math.sin(golden * k), z))
    return np.array(pts)


def _random_axes(n: int, m: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    Y = rng.standard_normal((m, n))
    return Y / np.linalg.norm(Y, axis=1, keepdims=True)


def covering_sin2(axes: np.ndarray, samples: int = 200_000, seed: int = 0) -> float:
    """Sampled worst ``sin^2`` of the angle between a direction and its nearest axis."""
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((samples, axes.shape[1]))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    cos2 = np.max((U @ axes.T) ** 2, axis=1)
    return float(1.0 - cos2.min())


def build_bass_pardoux_field(
    eps: float, delta: float, m: int | None = None, n: int = 3, seed: int = 0
) -> VoronoiConeField:
    """Field whose covariance in each cone is ``y y' + eps^2 (I - y y')``.

    The cones are the Voronoi cells of ``m`` axes ``+-y``; the axis set is
    refined until every direction lies within the angle allowed by ``eps``
    and ``delta``.
    """
    if not (0 < eps < 0.5 and 0 < delta < 0.5):
        raise ParameterOutOfRange("need 0 < eps < 1/2 and 0 < delta < 1/2")
    if ((n - 1) * eps**2 + delta) / (1 - delta) >= 1:
        raise ParameterOutOfRange("((n-1) eps^2 + delta)/(1 - delta) must be < 1")
    if n < 2:
        raise ParameterOutOfRange("n >= 2")
    # |x'Ax/|x|^2 - 1| = sin^2 (1 - eps^2) <= delta and cos^2 >= 1 - eps
    limit = min(eps, delta / (1.0 - eps**2))
    auto = m is None
    m = m or (64 if n == 3 else 256)
    while True:
        axes = fibonacci_axes(m) if n == 3 else _random_axes(n, m, seed)
        worst = covering_sin2(axes, seed=seed)
        if worst <= limit * 0.98:
            break
        if not auto or m > 20_000:
            raise ParameterOutOfRange(f"{m} axes leave sin^2 angle {worst:.4f} > {limit:.4f}")
        m *= 2
    regions = []
    for v, y in enumerate(axes):
        yy = np.outer(y, y)
        sigma = yy + eps * (np.eye(n) - yy)  # symmetric root of yy' + eps^2 (I - yy')
        regions.append(Region(f"cone{v}", np.zeros(n), sigma))
    fld = VoronoiConeField(axes, regions, drift_bound=0.0, eig_floor=eps**2, eig_ceiling=1.0)
    fld.eps, fld.delta, fld.covering_sin2 = eps, delta, worst
    return fld


# ----------------------------------------------------------------------------
# classifier


@dataclass
class DiagnosticsReport:
    sampled_min_Rtilde: float
    sampled_max_Rtilde: float
    sampled_min_R: float
    sampled_max_R: float
    sampled_min_ED: float
    sampled_max_ED: float
    c0_estimate: float
    origin_c0_estimate: float
    classification: Classification
    origin_attainable: bool
    sample_count: int
    seed: int
    triple: tuple[int, int, int]
    region_counts: dict[str, int] = field(default_factory=dict)
    skipped_regions: list[str] = field(default_factory=list)
    certified: bool = True

    def to_dict(self) -> dict:
        d = asdict(self)
        d["classification"] = self.classification.value
        d["triple"] = [t + 1 for t in self.triple]
        return d


def classify_values(min_rt: float, max_rt: float, tol: float = THRESHOLD_TOL) -> Classification:
    if min_rt >= 2.0 - tol:
        return Classification.NO_TRIPLE_COLLISION
    if max_rt < 2.0 - tol:
        return Classification.TRIPLE_COLLISION_CERTAIN
    return Classification.GRAY


def _nullspace_basis(normals: np.ndarray, n: int) -> np.ndarray:
    if normals.size == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(normals)
    rank = int((s > 1e-12).sum())
    return vt[rank:].T


def _draw(rng, count, n, P3, jitter, basis):
    Z = rng.standard_normal((count, n))
    Z = Z @ P3 + jitter * (Z - Z @ P3)
    if basis.shape[1] < n:
        Z = (Z @ basis) @ basis.T
    return Z


def sample_region_points(
    field: CoefficientField,
    triple=(0, 1, 2),
    samples: int = 10_000,
    seed: int = 0,
    tube: float = ZERO_SET_TUBE,
    jitter: float = 1.0,
    max_rounds: int = 200,
) -> dict[int, np.ndarray]:
    """Stratified sample of points, ``samples`` per non-negligible region.

    Regions with explicit pieces are sampled piece by piece inside each
    piece's equality subspace; otherwise points are drawn globally and
    binned. Each region (and the global pool) has its own stream derived
    from ``seed``, so results do not depend on evaluation order.
    """
    n = field.n
    P3 = gap_projector(n, triple) / 3.0
    out: dict[int, list[np.ndarray]] = {}
    need = {r: samples for r, reg in enumerate(field.regions) if not reg.negligible}
    if isinstance(field, (VoronoiConeField,)) or not field.regions or any(not reg.pieces for reg in field.regions):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
        nreg = len(field.regions) if field.regions else _region_count(field)
        need = {r: samples for r in range(nreg) if not (field.regions and field.regions[r].negligible)}
        got = {r: 0 for r in need}
        batch = max(4 * samples, 4096)
        for _ in range(max_rounds):
            Z = _draw(rng, batch, n, P3, jitter, np.eye(n))
            Z = _unit_gap(Z[_off_tube(Z, P3, tube)], P3)
            ids = field.locate(Z)
            for r in list(need):
                take = Z[ids == r][: need[r] - got[r]]
                if take.size:
                    out.setdefault(r, []).append(take)
                    got[r] += take.shape[0]
            if all(got[r] >= need[r] for r in need):
                break
    else:
        for r, reg in enumerate(field.regions):
            if reg.negligible:
                continue
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(r + 1,)))
            got = 0
            conic = all(h.offset == 0.0 for p in reg.pieces for h in p.halfspaces)
            bases = [_nullspace_basis(p.equality_normals(), n) for p in reg.pieces]
            bases = [b for b in bases if b.shape[1] > 0]
            per = max(1, samples // max(1, len(bases)))
            for _ in range(max_rounds):
                for b in bases:
                    Z = _draw(rng, max(2 * per, 512), n, P3, jitter, b)
                    Z = Z[_off_tube(Z, P3, tube)]
                    if conic:
                        Z = _unit_gap(Z, P3)
                    Z = Z[field.locate(Z) == r][: samples - got]
                    if Z.size:
                        out.setdefault(r, []).append(Z)
                        got += Z.shape[0]
                if got >= samples:
                    break
    result = {r: np.concatenate(v)[:samples] for r, v in out.items()}
    missing = [r for r in need if r not in result]
    if missing:
        names = [field.regions[r].label if field.regions else str(r) for r in missing]
        raise InsufficientSamples(f"regions received no samples: {names}")
    return result


def _region_count(field: CoefficientField) -> int:
    return math.factorial(field.n)


def _off_tube(Z, P3, tube):
    s = np.sqrt(np.maximum(_s2(Z, P3), 0.0))
    return (s > tube) & (s > ANGULAR_TUBE * np.linalg.norm(Z, axis=1))


def _unit_gap(Z, P3):
    # cones are scale invariant; unit gap keeps the functionals well conditioned
    return Z / np.sqrt(_s2(Z, P3))[:, None]


def _s2(Z, P3):
    return 3.0 * np.einsum("bi,ij,bj->b", Z, P3, Z)


def classify_field(
    field: CoefficientField,
    triple=(0, 1, 2),
    samples: int = 10_000,
    seed: int = 0,
    tube: float = ZERO_SET_TUBE,
    jitter: float = 1.0,
    radial: Sequence[float] = (0.1, 1.0, 10.0),
) -> DiagnosticsReport:
    """Sampled extrema of ``R~``, ``R`` and ``ED`` with the threshold verdict.

    ``c0`` is ``3 x`` the smallest sampled eigenvalue of ``A`` (an estimate,
    not a certificate). Non-constant regions are additionally probed at the
    radial scales in ``radial``.
    """
    pts = sample_region_points(field, triple, samples, seed, tube, jitter)
    rt_min = r_min = ed_min = lam_min = math.inf
    rt_max = r_max = ed_max = -math.inf
    counts = {}
    total = 0
    for r, Z in sorted(pts.items()):
        reg = field.regions[r] if field.regions else None
        batches = [Z]
        if reg is not None and not reg.constant:
            batches = [Z * c for c in radial]
        for X in batches:
            rt = r_tilde(field, X, triple, tube)
            rd = r_drifted(field, X, triple, tube)
            ed = effective_dimension(field, X, tube)
            lam = min_eigenvalues(field.covariance(X))
            rt_min, rt_max = min(rt_min, rt.min()), max(rt_max, rt.max())
            r_min, r_max = min(r_min, rd.min()), max(r_max, rd.max())
            ed_min, ed_max = min(ed_min, ed.min()), max(ed_max, ed.max())
            lam_min = min(lam_min, lam.min())
            total += X.shape[0]
        counts[reg.label if reg is not None else f"cell{r}"] = int(Z.shape[0])
    skipped = [reg.label for reg in field.regions if reg.negligible]
    certified = all(reg.constant for reg in field.regions) if field.regions else True
    return DiagnosticsReport(
        sampled_min_Rtilde=float(rt_min),
        sampled_max_Rtilde=float(rt_max),
        sampled_min_R=float(r_min),
        sampled_max_R=float(r_max),
        sampled_min_ED=float(ed_min),
        sampled_max_ED=float(ed_max),
        c0_estimate=float(3.0 * lam_min),
        origin_c0_estimate=float(lam_min),
        classification=classify_values(rt_min, rt_max),
        origin_attainable=bool(ed_max < 2.0 - THRESHOLD_TOL),
        sample_count=total,
        seed=seed,
        triple=tuple(int(t) for t in triple),
        region_counts=counts,
        skipped_regions=skipped,
        certified=certified,
    )
