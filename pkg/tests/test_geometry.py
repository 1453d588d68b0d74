import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from foilopt import geometry as geo


def brute_cst(chi, coeffs, n1, n2, delta):
    """Independent CST evaluation: explicit binomial sum, no shared code."""
    from math import comb

    n = len(coeffs) - 1
    shape = sum(c * comb(n, k) * chi**k * (1 - chi) ** (n - k) for k, c in enumerate(coeffs))
    return chi**n1 * (1 - chi) ** n2 * shape + chi * delta


class TestClassFunction:
    def test_endpoints_zero(self):
        assert geo.class_function(0.0, 0.5, 1.0) == 0.0
        assert geo.class_function(1.0, 0.5, 1.0) == 0.0

    def test_midpoint(self):
        # sqrt(0.5) * 0.5
        assert geo.class_function(0.5, 0.5, 1.0) == pytest.approx(0.3535533906, abs=1e-9)

    def test_domain_error(self):
        with pytest.raises(ValueError):
            geo.class_function(-0.1, 0.5, 1.0)
        with pytest.raises(ValueError):
            geo.class_function(1.1, 0.5, 1.0)


class TestBernsteinShape:
    def test_partition_of_unity(self):
        rng = np.random.default_rng(7)
        chi = rng.uniform(0.0, 1.0, 200)
        vals = geo.bernstein_shape(chi, np.ones(6))
        assert np.max(np.abs(vals - 1.0)) < 1e-12

    def test_left_endpoint_is_a0(self):
        coeffs = np.array([0.3, -1.0, 2.0, 0.5, 0.1, -0.2])
        assert geo.bernstein_shape(0.0, coeffs) == pytest.approx(0.3, abs=1e-15)

    def test_basis_vector_midpoint(self):
        e2 = np.zeros(6)
        e2[2] = 1.0
        # C(5,2) * 0.5^5 = 10/32
        assert geo.bernstein_shape(0.5, e2) == pytest.approx(0.3125, abs=1e-15)


class TestCstSurface:
    CFG = geo.CstConfig()

    def test_le_zero(self):
        coeffs = np.array([0.2, 0.1, 0.3, 0.1, 0.2, 0.1])
        assert geo.cst_surface(0.0, coeffs, 0.0, self.CFG) == 0.0

    def test_closed_te(self):
        coeffs = np.array([0.2, 0.1, 0.3, 0.1, 0.2, 0.1])
        assert geo.cst_surface(1.0, coeffs, 0.0, self.CFG) == 0.0

    def test_against_brute_force_and_naca_thickness(self):
        design = geo.naca0012_cst()
        got = geo.cst_surface(0.5, design.upper, 0.0, self.CFG)
        want = brute_cst(0.5, design.upper, 0.5, 1.0, 0.0)
        assert got == pytest.approx(want, abs=1e-14)
        # the CST fit reproduces the analytic profile to a few 1e-4
        assert got == pytest.approx(geo.naca0012_analytic(0.5), abs=2e-3)

    @given(st.lists(st.floats(-0.5, 0.5), min_size=6, max_size=6))
    @settings(max_examples=100)
    def test_closed_te_random_designs(self, coeffs):
        coeffs = np.asarray(coeffs)
        assert abs(geo.cst_surface(1.0, coeffs, 0.0, self.CFG)) < 1e-14
        assert abs(geo.cst_surface(1.0, -coeffs, 0.0, self.CFG)) < 1e-14

    @given(st.floats(0.0, 1.0), st.lists(st.floats(-0.5, 0.5), min_size=6, max_size=6))
    @settings(max_examples=100)
    def test_symmetry(self, chi, coeffs):
        coeffs = np.asarray(coeffs)
        yu = geo.cst_surface(chi, coeffs, 0.0, self.CFG)
        yl = geo.cst_surface(chi, -coeffs, 0.0, self.CFG)
        assert yl == pytest.approx(-yu, abs=1e-14)


class TestAnalyticProfiles:
    def test_naca0012(self):
        assert geo.naca0012_analytic(0.0) == 0.0
        # coefficient sum 0.2969-0.1260-0.3516+0.2843-0.1036 = 0
        assert geo.naca0012_analytic(1.0) == pytest.approx(0.0, abs=1e-15)
        assert geo.naca0012_analytic(0.3) == pytest.approx(0.06002, abs=5e-5)

    def test_biconvex(self):
        assert geo.biconvex(0.0, 0.1) == 0.0
        assert geo.biconvex(1.0, 0.1) == 0.0
        assert geo.biconvex(0.5, 0.1) == pytest.approx(0.05, abs=1e-15)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            geo.naca0012_analytic(1.5)
        with pytest.raises(ValueError):
            geo.biconvex(-0.2, 0.1)


class TestNaca0012Cst:
    def test_values(self):
        d = geo.naca0012_cst()
        assert d.upper[0] == 0.17098638
        assert d.lower[3] == -0.13787830
        assert d.flatten().shape == (12,)
        assert d.is_symmetric()


class TestSampleBoundary:
    def test_station_normalization(self):
        chi = geo.chord_stations(49, 12.0)
        assert chi[0] == 1.0
        assert chi[-1] == 0.0
        assert np.all(np.diff(chi) < 0.0)

    def test_even_rejected(self):
        with pytest.raises(ValueError):
            geo.chord_stations(48, 12.0)

    def test_naca0012_counts_and_closure(self):
        curve = geo.sample_boundary(geo.naca0012_cst(), geo.CstConfig(), 49)
        assert curve.i_half == 25
        assert curve.points.shape == (49, 2)
        # seam: first and last points coincide at the TE
        np.testing.assert_allclose(curve.points[0], curve.points[-1], atol=1e-15)
        np.testing.assert_allclose(curve.points[0], [1.0, 0.0], atol=1e-15)
        # LE shared once
        np.testing.assert_allclose(curve.points[24], [0.0, 0.0], atol=1e-15)
        # lower surface negative, upper positive
        assert np.all(curve.y[1:24] < 0.0)
        assert np.all(curve.y[25:48] > 0.0)

    def test_midstation_sigmoid_value(self):
        # direct sigmoid evaluation oracle for station 13 of I_h = 25
        i_half, delta = 25, 12.0
        i = np.arange(1, i_half + 1, dtype=float)
        sigma = 1.0 / (1.0 + np.exp(-delta * (i / i_half - 0.5)))
        chi13 = 1.0 - (sigma[12] - sigma[0]) / (sigma[-1] - sigma[0])
        chi = geo.chord_stations(49, delta)
        assert chi[12] == pytest.approx(chi13, abs=1e-15)

    def test_mirror_symmetry_of_stations(self):
        curve = geo.sample_boundary(geo.naca0012_cst(), geo.CstConfig(), 49)
        # station i and 48-i share x and have opposite y
        for i in range(1, 24):
            assert curve.x[i] == pytest.approx(curve.x[48 - i], abs=1e-15)
            assert curve.y[i] == pytest.approx(-curve.y[48 - i], abs=1e-15)


class TestDesignIo:
    def test_round_trip(self, tmp_path):
        d = geo.naca0012_cst()
        path = tmp_path / "design.txt"
        geo.save_design(path, d)
        loaded = geo.load_design(path)
        np.testing.assert_array_equal(loaded.flatten(), d.flatten())

    def test_boundary_csv(self, tmp_path):
        curve = geo.sample_boundary(geo.naca0012_cst(), geo.CstConfig(), 49)
        path = tmp_path / "boundary.csv"
        geo.save_boundary_csv(path, curve)
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        assert data.shape == (49, 3)
        np.testing.assert_allclose(data[:, 1], curve.x)
