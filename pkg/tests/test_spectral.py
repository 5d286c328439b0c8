import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from covdesign.design_search import DesignSpec, default_spectral_grid, reference_radius
from covdesign.errors import InvalidArgument
from covdesign.pcf_models import PcfParams, RadialGrid, RadialProfile, pcf_pds, target_profile
from covdesign.spectral import (
    SUPPORTED_ORDERS,
    SpectralGrid,
    SpectrumProfile,
    bessel_j,
    check_realizability,
    empirical_psd,
    hankel_transform,
    pcf_to_psd,
    psd_at,
    structure_factor,
    window_leakage,
)


def test_bessel_trivial_values():
    assert bessel_j(0, 0.0) == 1.0
    assert bessel_j(1, 0.0) == 0.0


def test_bessel_first_zero():
    assert abs(bessel_j(0, 2.404826)) < 1e-5


@pytest.mark.parametrize("order", SUPPORTED_ORDERS)
def test_bessel_matches_scipy(order):
    x = np.concatenate([np.linspace(0, 20, 4001), np.linspace(20, 1000, 20001)])
    np.testing.assert_allclose(bessel_j(order, x), special.jv(order, x), atol=1e-10, rtol=0)


def test_bessel_rejects():
    with pytest.raises(InvalidArgument):
        bessel_j(4, 1.0)
    with pytest.raises(InvalidArgument):
        bessel_j(0, -1.0)


def test_hankel_zero_profile():
    g = RadialGrid(1.0, 10)
    assert hankel_transform(RadialProfile(g, np.zeros(10)), 0, 3.0, 1.0) == 0.0


@pytest.mark.parametrize("k", [0.5, 3.0, 17.0, 120.0])
def test_hankel_indicator(k):
    big_r = 0.4
    g = RadialGrid(1.0, 200)
    f = RadialProfile(g, (g.points <= big_r).astype(float), func=lambda r: (r <= big_r) * 1.0,
                      breaks=(big_r,))
    exact = big_r * special.j1(k * big_r) / k
    # absolute error measured against the scale of the integrand, R^2
    assert abs(hankel_transform(f, 0, k, 1.0) - exact) < 1e-6 * big_r**2


def test_hankel_linearity():
    g = RadialGrid(1.0, 200)
    f = RadialProfile(g, np.sin(3 * g.points))
    h = RadialProfile(g, g.points**2)
    both = RadialProfile(g, 2.0 * f.values - 0.5 * h.values)
    k = 7.0
    lhs = hankel_transform(both, 1, k, 1.0)
    rhs = 2.0 * hankel_transform(f, 1, k, 1.0) - 0.5 * hankel_transform(h, 1, k, 1.0)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_hankel_rejects_nonpositive_k():
    g = RadialGrid(1.0, 10)
    with pytest.raises(InvalidArgument):
        hankel_transform(RadialProfile(g, np.ones(10)), 0, 0.0, 1.0)


def test_pds_closed_form():
    spec = DesignSpec(1000, 2)
    r = reference_radius(spec)
    kg = default_spectral_grid(spec)
    k = kg.points
    prof = pcf_pds(r, RadialGrid(3 * r, 200))
    got = pcf_to_psd(prof, 1000, 2, kg).values
    want = 1 - 2 * math.pi * 1000 * r * special.j1(k * r) / k
    assert np.max(np.abs(got - want) / np.abs(want)) < 1e-4


def test_sfsd_closed_form():
    # d = 2 stair: 1 + (2 pi N / k) ((p0 - 1) r1 J1(k r1) - p0 r J1(k r))
    n, r, r1, p0 = 500, 0.02, 0.03, 1.6
    kg = SpectralGrid(1.0, 400.0, 300)
    k = kg.points
    prof = target_profile(PcfParams("sfsd", r, r1, p0), RadialGrid(0.08, 200))
    want = 1 + 2 * math.pi * n / k * ((p0 - 1) * r1 * special.j1(k * r1) - p0 * r * special.j1(k * r))
    np.testing.assert_allclose(pcf_to_psd(prof, n, 2, kg).values, want, rtol=0, atol=1e-5)


@pytest.mark.parametrize("d", range(2, 9))
def test_poisson_neutral(d):
    g = RadialGrid(0.3, 200)
    prof = RadialProfile(g, np.ones(200), func=lambda r: np.ones_like(r))
    p = pcf_to_psd(prof, 1000, d, SpectralGrid(1.0, 500.0, 200)).values
    assert np.max(np.abs(p - 1)) < 1e-6


def test_psd_tends_to_one_at_high_k():
    spec = DesignSpec(1000, 3)
    r = reference_radius(spec)
    prof = target_profile(PcfParams("sfsd", r, 1.3 * r, 1.5), RadialGrid(3 * r, 200))
    p = psd_at(prof, 1000, 3, [200 / r, 400 / r])
    assert np.all(np.abs(p - 1) < 0.05)
    assert abs(p[1] - 1) < abs(p[0] - 1) + 1e-3


@pytest.mark.parametrize("d", [1, 9])
def test_psd_rejects_dimension(d):
    prof = pcf_pds(0.1, RadialGrid(0.3, 10))
    with pytest.raises(InvalidArgument):
        pcf_to_psd(prof, 100, d, SpectralGrid(1.0, 2.0, 2))


def test_realizability_poisson():
    g = RadialGrid(0.3, 50)
    prof = RadialProfile(g, np.ones(50), func=lambda r: np.ones_like(r))
    kg = SpectralGrid(1.0, 100.0, 50)
    rep = check_realizability(prof, 100, 2, kg)
    assert rep.feasible
    assert rep.min_power == pytest.approx(1.0, abs=1e-9)
    assert rep.argmin_k in kg.points


def test_realizability_oversized_disk():
    spec = DesignSpec(1000, 2)
    prof = pcf_pds(0.5, RadialGrid(1.5, 200))
    rep = check_realizability(prof, 1000, 2, default_spectral_grid(spec))
    assert not rep.feasible
    assert rep.argmin_k in default_spectral_grid(spec).points


def test_realizability_needs_nonnegative_pcf():
    g = RadialGrid(0.3, 10)
    with pytest.raises(InvalidArgument):
        check_realizability(RadialProfile(g, -np.ones(10)), 100, 2, SpectralGrid(1.0, 2.0, 2))


def test_empirical_psd_trivial_cases():
    rng = np.random.default_rng(3)
    x = rng.random((40, 2))
    assert structure_factor(x, [0.0], np.array([[1.0, 0.0]]))[0] == pytest.approx(40.0)
    one = empirical_psd(x[:1], SpectralGrid(1.0, 50.0, 20))
    np.testing.assert_allclose(one.values, 1.0)


def test_empirical_psd_two_points():
    x = np.array([[0.0, 0.3], [0.5, 0.3]])
    assert structure_factor(x, [2.0], np.array([[1.0, 0.0]]))[0] == pytest.approx(2.0)


def test_empirical_psd_rejects_empty():
    with pytest.raises(InvalidArgument):
        empirical_psd(np.zeros((0, 2)), SpectralGrid(1.0, 2.0, 2))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_empirical_psd_deterministic(seed):
    x = np.random.default_rng(seed).random((30, 3))
    kg = SpectralGrid(1.0, 30.0, 10)
    a = empirical_psd(x, kg, 8, seed).values
    b = empirical_psd(x, kg, 8, seed).values
    assert np.array_equal(a, b)


def test_spectrum_csv_roundtrip(tmp_path):
    kg = SpectralGrid(1.0, 9.0, 5)
    s = SpectrumProfile(kg, np.arange(5.0))
    path = tmp_path / "p.csv"
    assert s.to_csv(path).startswith("k,P\n")
    back = SpectrumProfile.from_csv(path)
    np.testing.assert_array_equal(back.values, s.values)


def test_window_leakage_limits():
    kg = SpectralGrid(1e-9, 40.0, 5)
    leak = window_leakage(1000, 2, kg, 8, seeds=(0, 1))
    assert leak[0] == pytest.approx(1000.0)
    assert np.all(leak[1:] < leak[0])
