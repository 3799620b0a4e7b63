import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from collide.core import (
    AmbiguousRegion,
    DifferenceMatrix,
    HalfSpace,
    NoRegionContains,
    ParameterOutOfRange,
    PiecewiseField,
    PolyhedralRegion,
    RankDiagonalField,
    Region,
    check_partition_coverage,
    difference_matrix,
    equality,
    evaluate_field,
    gap_projector,
    identity_field,
    parse_triple,
    rank_vector,
    ranked_by_maxmin,
    squared_gap,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


@pytest.mark.parametrize("n", [3, 4, 6])
def test_difference_matrix_identities(n):
    for triple in itertools.combinations(range(n), 3):
        dm = DifferenceMatrix(n, triple)
        assert np.array_equal(dm.idempotence_residual(), np.zeros((n, n)))
        assert np.array_equal(dm.column_sums(), np.zeros(3))
        assert np.trace(dm.projector) == 6


def test_difference_matrix_entries():
    D = difference_matrix(4, (0, 2, 3))
    assert D.dtype == np.int64
    assert D.shape == (4, 3)
    assert np.all(D[1] == 0)


def test_parse_triple_is_one_based():
    assert parse_triple("1,2,3") == (0, 1, 2)
    assert parse_triple(" 2, 4 ,5") == (1, 3, 4)
    with pytest.raises(ValueError):
        parse_triple("1,1,2")
    with pytest.raises(ValueError):
        parse_triple("0,1,2")


def test_squared_gap_matches_pairwise_sum():
    x = np.array([3.0, -1.0, 0.5, 7.0])
    s2 = squared_gap(x, (0, 1, 2))
    assert s2 == pytest.approx((3 + 1) ** 2 + (-1 - 0.5) ** 2 + (0.5 - 3) ** 2)
    assert squared_gap(np.ones(4)) == 0.0


@given(arrays(float, 3, elements=finite))
def test_gap_projector_is_psd_and_kills_constants(x):
    P = gap_projector(3)
    assert x @ P @ x >= -1e-9 * (1 + x @ x)
    assert np.allclose(P @ np.ones(3), 0)


@given(arrays(float, st.integers(1, 6), elements=st.integers(-3, 3).map(float)))
def test_rank_vector_matches_maxmin_oracle(x):
    ranked, perm, inv = rank_vector(x)
    assert np.array_equal(ranked, ranked_by_maxmin(x))
    assert np.array_equal(x[perm], ranked)
    assert np.array_equal(ranked[inv], x)


def test_rank_vector_ties_go_to_smaller_index():
    _, perm, _ = rank_vector([1.0, 2.0, 1.0, 2.0])
    assert perm.tolist() == [1, 3, 0, 2]


def test_rank_vector_batches():
    X = np.random.default_rng(0).normal(size=(5, 4, 3))
    ranked, _, _ = rank_vector(X)
    assert np.all(np.diff(ranked, axis=-1) <= 0)


def test_halfspace_strict_and_weak():
    h = HalfSpace((1.0, 0.0), 0.0, strict=True)
    w = HalfSpace((1.0, 0.0), 0.0, strict=False)
    X = np.array([[0.0, 1.0], [1.0, 0.0], [-1.0, 0.0]])
    assert h.contains(X, 1e-9).tolist() == [False, True, False]
    assert w.contains(X, 1e-9).tolist() == [True, True, False]


def test_equality_pair_detected():
    reg = PolyhedralRegion(equality((1.0, -1.0, 0.0)))
    assert reg.equality_normals().shape[0] == 1
    assert reg.contains(np.array([[2.0, 2.0, 5.0]]))[0]


def _halfplane_field(overlap=False, gap=False):
    up = PolyhedralRegion((HalfSpace((1.0, 0.0), 0.0, strict=not overlap),))
    down = PolyhedralRegion((HalfSpace((-1.0, 0.0), 0.0, strict=gap),))
    return PiecewiseField(
        2,
        [Region("up", np.zeros(2), np.eye(2), (up,)), Region("down", np.ones(2), 2 * np.eye(2), (down,))],
    )


def test_piecewise_locate_and_evaluate():
    f = _halfplane_field()
    mu, sigma, r = evaluate_field(f, [1.0, 0.0])
    assert r == 0 and np.allclose(sigma, np.eye(2))
    mu, sigma, r = evaluate_field(f, [0.0, 3.0])  # boundary belongs to the weak side
    assert r == 1 and np.allclose(mu, 1.0)
    check_partition_coverage(f, 2000)


def test_locate_reports_gaps_and_overlaps():
    with pytest.raises(AmbiguousRegion):
        _halfplane_field(overlap=True).locate([[0.0, 1.0]])
    with pytest.raises(NoRegionContains):
        _halfplane_field(gap=True).locate([[0.0, 1.0]])


def test_evaluate_rejects_nonfinite():
    with pytest.raises(ValueError):
        evaluate_field(identity_field(3), [np.nan, 0, 0])


def test_rank_diagonal_cells_are_permutations():
    f = RankDiagonalField([1.0, 2.0, 3.0], g=[-1, 0.5, 0.5])
    pts = np.array([list(p) for p in itertools.permutations([3.0, 2.0, 1.0])])
    ids = f.locate(pts)
    assert sorted(ids.tolist()) == list(range(6))
    mu, sigma, _ = f.coefficients(np.array([[0.0, 5.0, 1.0]]))
    assert np.allclose(np.diag(sigma[0]), [3.0, 1.0, 2.0])
    assert np.allclose(mu[0], [0.5, -1.0, 0.5])
    with pytest.raises(ParameterOutOfRange):
        RankDiagonalField([1.0, 0.0])


def test_rank_diagonal_fast_paths_match_generic():
    f = RankDiagonalField([1.0, 2.0, 0.5])
    X = np.random.default_rng(1).normal(size=(50, 3))
    v = np.random.default_rng(2).normal(size=(50, 3))
    mu, sdw = f.apply_sigma(X, v)
    mu2, sigma, _ = f.coefficients(X)
    assert np.allclose(sdw, np.einsum("bij,bj->bi", sigma, v))
    assert np.allclose(f.solve_sigma(X, sdw), v)
