import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from collide.core import ParameterOutOfRange
from collide.rbm import (
    DimensionMismatch,
    NoConvergence,
    NotPositiveDefinite,
    RBMSpec,
    Verdict,
    complementarity,
    corner_attainability,
    local_time_occupation,
    local_time_tanaka,
    reflected_bm_local_times,
    rotate_rescale,
    simulate_rbm,
    skew_symmetry_residual,
    skorokhod_map,
    solve_path,
    spectral_radius,
    wedge_classifier_2d,
)


def atlas_rbm(variances, z0=None):
    v = np.asarray(variances, dtype=float)
    d = v.size - 1
    A = np.diag(v[:-1] + v[1:]) + np.diag(-v[1:-1], 1) + np.diag(-v[1:-1], -1)
    R = np.eye(d) - 0.5 * (np.eye(d, k=1) + np.eye(d, k=-1))
    return RBMSpec(np.zeros(d), R, A=A, z0=z0)


def random_spd(rng, d):
    M = rng.normal(size=(d, d))
    return M @ M.T + 0.5 * np.eye(d)


variances = st.lists(st.floats(0.1, 10.0), min_size=3, max_size=6)


def test_one_dimensional_oracle():
    rng = np.random.default_rng(0)
    x = np.cumsum(np.r_[0.2, rng.normal(scale=0.05, size=2000)])
    Z, L, _ = skorokhod_map(np.eye(1), x[:, None])
    oracle = x + np.maximum(0.0, np.maximum.accumulate(-x))
    assert np.max(np.abs(Z[:, 0] - oracle)) <= 1e-10


def test_zero_noise_interior_start_stays_put():
    spec = RBMSpec(np.zeros(2), np.eye(2) - 0.5 * np.eye(2)[::-1], A=np.eye(2), z0=[1.0, 2.0])
    p = solve_path(spec, np.zeros((100, 2)), 1e-2)
    assert np.all(p.L == 0)
    assert np.allclose(p.Z, [1.0, 2.0])


def test_atlas_reflection_spectral_radius():
    spec = atlas_rbm([1, 1, 1])
    assert spectral_radius(spec.offdiag) == pytest.approx(0.5)


def test_solver_invariants_multidimensional():
    spec = atlas_rbm([1.0, 2.0, 3.0, 4.0], z0=[0.05, 0.05, 0.05])
    dt = 1e-3
    p = simulate_rbm(spec, dt, 0.5, 50, seed=1)
    assert p.Z.min() >= -1e-12
    assert np.all(np.diff(p.L, axis=1) >= -1e-15)
    LT = p.L[:, -1]
    comp = complementarity(p, 10 * math.sqrt(dt))
    assert np.all(comp <= 1e-6 * np.maximum(LT, 1e-300))
    assert p.min_pair_gap.shape == (50, 3)


def test_no_convergence_when_reflection_is_too_oblique():
    R = np.array([[1.0, -1.5], [-1.5, 1.0]])
    spec = RBMSpec(np.zeros(2), R, A=np.eye(2), z0=[0.0, 0.0], check=False)
    x = np.zeros((1, 3, 2))
    x[0, 1:] = -1.0
    with pytest.raises(NoConvergence):
        skorokhod_map(spec.R, x)
    with pytest.raises(ParameterOutOfRange):
        RBMSpec(np.zeros(2), R, A=np.eye(2))


def test_spec_validation():
    with pytest.raises(NotPositiveDefinite):
        RBMSpec(np.zeros(2), np.eye(2), A=np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(ParameterOutOfRange):
        RBMSpec(np.zeros(2), 2 * np.eye(2), A=np.eye(2))


def test_identity_transform():
    ts = rotate_rescale(RBMSpec(np.zeros(3), np.eye(3), A=np.eye(3)))
    assert np.allclose(ts.Qt, 0)
    assert np.allclose(ts.N.T @ ts.N, np.eye(3))


@given(st.integers(0, 10_000), st.integers(2, 5))
def test_transform_identities_on_random_specs(seed, d):
    rng = np.random.default_rng(seed)
    A = random_spd(rng, d)
    Q = rng.uniform(-1, 1, size=(d, d))
    np.fill_diagonal(Q, 0)
    Q *= 0.9 / max(spectral_radius(Q), 1e-9)
    ts = rotate_rescale(RBMSpec(np.zeros(d), np.eye(d) - Q, A=A))
    res = ts.identity_residuals()
    assert max(res.values()) <= 1e-10
    # columns of U sign-fixed: first nonzero entry positive
    for j in range(d):
        col = ts.U[:, j]
        assert col[np.flatnonzero(np.abs(col) > 1e-14)[0]] > 0


def test_skew_examples():
    assert np.max(np.abs(skew_symmetry_residual(atlas_rbm([1, 2, 3, 4])).residual)) <= 1e-12
    assert np.max(np.abs(skew_symmetry_residual(atlas_rbm([1, 1, 1])).residual)) == 0.0
    r = skew_symmetry_residual(atlas_rbm([1, 1, 2]))
    assert r.residual[0, 1] == pytest.approx(-0.5, abs=1e-12)


@given(variances)
def test_conjugation_identity(v):
    assert skew_symmetry_residual(atlas_rbm(v)).conjugation_residual <= 1e-10 * max(v)


@given(st.fractions(Fraction(1, 10), 10), st.fractions(-2, 2), st.integers(3, 7))
def test_linear_growth_iff_zero_residual_exact(base, step, n):
    v = [base + k * step for k in range(n)]
    if min(v) <= 0:
        return
    # exact rational arithmetic of 2D - QD - DQ' - 2A on the Atlas pattern
    d = n - 1
    A = [[Fraction(0)] * d for _ in range(d)]
    for k in range(d):
        A[k][k] = v[k] + v[k + 1]
        if k + 1 < d:
            A[k][k + 1] = A[k + 1][k] = -v[k + 1]
    for i in range(d):
        for j in range(d):
            q_ij = Fraction(1, 2) if abs(i - j) == 1 else Fraction(0)
            val = (2 * A[i][i] if i == j else 0) - q_ij * A[j][j] - A[i][i] * q_ij - 2 * A[i][j]
            assert val == 0


@given(variances)
def test_residual_zero_matches_linear_growth(v):
    inc = np.diff(np.asarray(v) )
    linear = np.allclose(inc, inc[0], atol=1e-9)
    zero = skew_symmetry_residual(atlas_rbm(v)).max_abs <= 1e-8
    assert linear == zero


def test_wedge_examples():
    w = wedge_classifier_2d(atlas_rbm([1, 1, 1]))
    assert w.beta == 0.0 and w.verdict is Verdict.NEVER_HITS
    w = wedge_classifier_2d(RBMSpec(np.zeros(2), np.eye(2), A=np.eye(2)))
    assert w.normal_tangent_sum == 0 and w.verdict is Verdict.NEVER_HITS
    assert w.xi == pytest.approx(math.pi / 2)
    w = wedge_classifier_2d(atlas_rbm([1, 1, 2]))
    assert w.beta > 0 and w.verdict is Verdict.HITS_CORNER
    assert w.normal_tangent_sum < 0
    w = wedge_classifier_2d(atlas_rbm([1, 2, 2.5]))  # concave variances
    assert w.beta < 0 and w.verdict is Verdict.NEVER_HITS
    with pytest.raises(DimensionMismatch):
        wedge_classifier_2d(atlas_rbm([1, 2, 3, 4]))


@given(st.integers(0, 10_000))
def test_wedge_sign_relations_on_random_specs(seed):
    rng = np.random.default_rng(seed)
    A = random_spd(rng, 2)
    q = rng.uniform(-0.9, 0.9, size=2)
    spec = RBMSpec(np.zeros(2), np.array([[1.0, -q[0]], [-q[1], 1.0]]), A=A)
    w = wedge_classifier_2d(spec)
    # theta from the sign relation agrees with the explicit wedge geometry
    assert w.theta1 == pytest.approx(w.geometric_theta[0], abs=1e-9)
    assert w.theta2 == pytest.approx(w.geometric_theta[1], abs=1e-9)
    # entries of N'Q + Q'N and n_i'q_j + n_j'q_i agree in sign
    sk = skew_symmetry_residual(spec)
    if abs(w.normal_tangent_sum) > 1e-9:
        assert np.sign(sk.normal_tangent[0, 1]) == np.sign(w.normal_tangent_sum)
        assert np.sign(sk.residual[0, 1]) == np.sign(w.normal_tangent_sum)
        # beta and the sum have opposite signs
        assert np.sign(w.beta) == -np.sign(w.normal_tangent_sum)


def test_corner_attainability():
    assert corner_attainability(atlas_rbm([1, 2, 3, 4, 5])).verdict is Verdict.NEVER_HITS_ANY
    assert corner_attainability(atlas_rbm([1, 2, 2.5])).verdict is Verdict.NEVER_HITS
    assert corner_attainability(atlas_rbm([1, 1, 2])).verdict is Verdict.HITS_CORNER
    rng = np.random.default_rng(3)
    spec = RBMSpec(np.zeros(3), np.eye(3) - 0.2 * (np.ones((3, 3)) - np.eye(3)), A=random_spd(rng, 3))
    rep = corner_attainability(spec)
    assert rep.verdict is Verdict.UNKNOWN
    assert set(rep.pairs.values()) == {Verdict.UNKNOWN}
    with pytest.raises(DimensionMismatch):
        corner_attainability(RBMSpec(np.zeros(1), np.eye(1), A=np.eye(1)))


def test_local_time_zero_off_boundary():
    t = np.linspace(0, 1, 101)
    Y = 1.0 + 0.1 * np.sin(t)
    assert np.all(local_time_tanaka(Y, 0.01) == 0)
    assert np.all(local_time_occupation(Y, 0.01, 0.1) == 0)


def test_local_time_estimators_agree():
    res = reflected_bm_local_times(1e-3, 1.0, 2000, seed=2)
    assert res.tanaka.mean() == pytest.approx(res.solver.mean(), rel=0.05)
    assert res.max_complementarity <= 1e-6


def test_occupation_estimator_needs_a_band_wider_than_the_step():
    # the band must be wide against sqrt(dt) and narrow against the path scale
    res = reflected_bm_local_times(1e-4, 1.0, 1000, seed=2)
    assert res.occupation.mean() == pytest.approx(res.solver.mean(), rel=0.1)


def test_tanaka_with_exact_zeros_only_is_biased_low():
    dt = 1e-3
    rng = np.random.default_rng(5)
    x = np.cumsum(np.concatenate([np.zeros((500, 1)), rng.normal(scale=math.sqrt(dt), size=(500, 1000))], axis=1), axis=1)
    Z, L, _ = skorokhod_map(np.eye(1), x[..., None])
    naive = local_time_tanaka(Z[..., 0], 0.0)[:, -1].mean()
    banded = local_time_tanaka(Z[..., 0], 3 * math.sqrt(dt))[:, -1].mean()
    assert naive < 0.75 * L[:, -1, 0].mean()
    assert banded == pytest.approx(L[:, -1, 0].mean(), rel=0.05)
