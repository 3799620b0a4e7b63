import math

import pytest
from hypothesis import given, strategies as st
from scipy import special

from collide.bessel import (
    CLASSICAL,
    PAPER,
    BesselSimConfig,
    KappaQuery,
    collision_bound,
    kappa,
    kappa_loglog_slope,
    kappa_quadrature,
    kappa_value,
    reflected_bm_tail,
    simulate_bessel_hitting_tail,
)
from collide.core import ParameterOutOfRange

deltas = st.floats(0.05, 1.95)
conventions = st.sampled_from([PAPER, CLASSICAL])


def test_incomplete_gamma_identity():
    assert kappa(KappaQuery(1, 1, 0.5)) == pytest.approx(special.gammainc(0.5, 0.5), abs=1e-15)
    assert kappa(KappaQuery(1, 1, 0.5, CLASSICAL)) == pytest.approx(special.gammainc(0.75, 0.5), abs=1e-15)


@pytest.mark.parametrize("form", ["substituted", "direct"])
@pytest.mark.parametrize("conv", [PAPER, CLASSICAL])
def test_quadrature_matches_incomplete_gamma(form, conv):
    for d in (0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75):
        for y in (0.5, 1.0, 2.0):
            for T in (0.1, 1.0, 10.0):
                q = KappaQuery(T, y, d, conv)
                assert abs(kappa(q) - kappa_quadrature(q, form)) <= 1e-8


def test_limits():
    assert kappa_value(0.0, 1.0, 0.5) == 1.0
    assert kappa_value(1e-8, 1.0, 0.5) == pytest.approx(1.0)
    assert kappa_value(1e12, 1.0, 0.5) < 1e-5
    assert KappaQuery(0.0, 1.0, 0.5).convention == PAPER
    assert KappaQuery(1.0, 1.0, 0.5, "classical").convention == CLASSICAL


@given(st.floats(0.01, 100), st.floats(1.01, 10), st.floats(0.1, 5), deltas, conventions)
def test_monotone_in_T_and_y(T, factor, y, d, conv):
    k = kappa_value(T, y, d, conv)
    assert 0.0 <= k <= 1.0
    assert kappa_value(T * factor, y, d, conv) <= k
    assert kappa_value(T, y * factor, d, conv) >= k


@pytest.mark.parametrize("d", [0.25, 0.75, 1.25, 1.75])
def test_paper_convention_slope(d):
    assert kappa_loglog_slope(1.0, d, 1e2, 1e4) == pytest.approx(-d, rel=0.05)
    assert kappa_loglog_slope(1.0, d, 1e2, 1e4, CLASSICAL) == pytest.approx(-(1 - d / 2), rel=0.05)


def test_parameter_checks():
    for bad in [(-1, 1, 0.5), (1, 0, 0.5), (1, 1, 0.0), (1, 1, 2.0)]:
        with pytest.raises(ParameterOutOfRange):
            KappaQuery(*bad)
    with pytest.raises(ParameterOutOfRange):
        KappaQuery(1, 1, 0.5, "other")


def test_collision_bound_examples():
    assert collision_bound(1, 1, 0.5, 3) == pytest.approx(1 - special.gammainc(0.5, 1 / 6), abs=1e-14)
    assert collision_bound(1e15, 1, 0.5, 3) == pytest.approx(1.0, abs=1e-6)
    assert collision_bound(0.0, 1, 0.5, 3) == 0.0
    for bad in [(1, 1, 2.5, 3), (1, 1, 0.5, 0), (1, 0, 0.5, 1)]:
        with pytest.raises(ParameterOutOfRange):
            collision_bound(*bad)


def test_reflected_bm_tail():
    assert reflected_bm_tail(1, 1) == pytest.approx(2 * special.ndtr(1.0) - 1)


def test_dimension_one_matches_reflected_bm():
    r = simulate_bessel_hitting_tail(BesselSimConfig(1.0, 1.0, 1e-3, 1.0, 4000, seed=3))
    assert abs(r.tail - reflected_bm_tail(1.0, 1.0)) <= 3 * r.stderr


def test_high_dimension_absorption_is_a_discretisation_effect():
    coarse = simulate_bessel_hitting_tail(BesselSimConfig(3.0, 1.0, 1e-2, 10.0, 1000, seed=0))
    fine = simulate_bessel_hitting_tail(BesselSimConfig(3.0, 1.0, 1e-3, 10.0, 1000, seed=0))
    assert fine.absorbed < coarse.absorbed
    assert fine.absorbed / 1000 < 0.03


def test_low_dimension_absorption_grows_with_T():
    short = simulate_bessel_hitting_tail(BesselSimConfig(0.5, 1.0, 1e-2, 1.0, 1000, seed=1))
    long = simulate_bessel_hitting_tail(BesselSimConfig(0.5, 1.0, 1e-2, 50.0, 1000, seed=1))
    assert long.tail < short.tail
    assert long.tail < 0.2


def test_independent_of_threads():
    a = simulate_bessel_hitting_tail(BesselSimConfig(0.5, 1.0, 1e-2, 1.0, 2500, seed=5, threads=1))
    b = simulate_bessel_hitting_tail(BesselSimConfig(0.5, 1.0, 1e-2, 1.0, 2500, seed=5, threads=4))
    assert a == b


def test_config_validation():
    with pytest.raises(ParameterOutOfRange):
        BesselSimConfig(1.0, dt=0.0)
    with pytest.raises(ParameterOutOfRange):
        BesselSimConfig(1.0, paths=0)
