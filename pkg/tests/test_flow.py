import numpy as np
import pytest

from foilopt import flow, meshgen as mg
from foilopt.errors import MeshValidityError, NonphysicalStateError
from foilopt.flow import Af2Params, FreestreamSpec


class TestFreestream:
    def test_u_inf_m07(self):
        # direct evaluation: (2.4 / (0.4 + 2/0.49))^(1/2)
        assert flow.freestream_velocity(FreestreamSpec(mach=0.7)) == pytest.approx(
            0.7317917228850433, abs=1e-10
        )

    def test_sonic_normalization(self):
        # U_inf -> 1 as M -> 1
        assert flow.freestream_velocity(FreestreamSpec(mach=0.999999)) == pytest.approx(
            1.0, abs=1e-5
        )

    def test_low_mach_limit(self):
        # U_inf ~ M sqrt((gamma+1)/2) -> 0
        assert flow.freestream_velocity(FreestreamSpec(mach=0.001)) < 2e-3

    def test_farfield_potential(self):
        fs = FreestreamSpec(mach=0.5, alpha_aoa=0.0)
        u = flow.freestream_velocity(fs)
        assert flow.farfield_potential(2.0, 5.0, fs) == pytest.approx(2.0 * u)
        assert flow.farfield_potential(0.0, 0.0, fs) == 0.0
        fs90 = FreestreamSpec(mach=0.5, alpha_aoa=np.pi / 2)
        assert flow.farfield_potential(0.0, 3.0, fs90) == pytest.approx(3.0 * u)


class TestDensity:
    def test_unity_at_rest(self):
        assert flow.density(0.0, 0.0, 1.0, 1.0, 1.4) == pytest.approx(1.0)

    def test_sonic_value(self):
        # q^2 = 1 gives exactly the sonic density C1 = (1 - 1/6)^2.5
        assert flow.density(1.0, 0.0, 1.0, 0.0, 1.4) == pytest.approx(0.633938, abs=1e-6)
        assert flow.sonic_density(1.4) == pytest.approx(0.633938, abs=1e-6)

    def test_vacuum_guard(self):
        with pytest.raises(NonphysicalStateError):
            flow.density(6.0, 0.0, 1.0, 0.0, 1.4)


class TestSwitchingNu:
    def test_subsonic_zero(self):
        assert flow.switching_nu(1.0, 2.0, 1.4) == 0.0

    def test_boundary_zero(self):
        c1 = flow.sonic_density(1.4)
        assert flow.switching_nu(c1, 2.0, 1.4) == 0.0

    def test_supersonic_positive_and_clipped(self):
        assert flow.switching_nu(0.5, 2.0, 1.4) > 0.0
        assert flow.switching_nu(0.0, 100.0, 1.4) == 1.0


class TestArtificialDensity:
    def test_subsonic_reduces_to_midpoint(self):
        rho_face = np.array([[1.0, 0.9], [0.95, 0.85]])
        out, nu = flow.artificial_density(
            rho_face,
            np.roll(rho_face, -1, axis=0),
            np.roll(rho_face, 1, axis=0),
            rho_up=np.ones_like(rho_face),  # subsonic
            pos_mask=np.ones_like(rho_face, dtype=bool),
            kappa=2.0,
            gamma=1.4,
        )
        np.testing.assert_allclose(out, rho_face)
        np.testing.assert_allclose(np.asarray(nu), 0.0)

    def test_constant_field_invariant(self):
        rho_face = 0.5 * np.ones((4, 3))
        out, _ = flow.artificial_density(
            rho_face,
            rho_face.copy(),
            rho_face.copy(),
            rho_up=rho_face.copy(),
            pos_mask=np.zeros_like(rho_face, dtype=bool),
            kappa=2.0,
            gamma=1.4,
        )
        np.testing.assert_allclose(out, 0.5)

    def test_supersonic_upstream_bias(self):
        # decreasing density ramp, positive velocity: blend uses the i-1/2 value
        rho_nodes = np.array([0.60, 0.55, 0.50, 0.45])
        rho_face = 0.5 * (rho_nodes + np.roll(rho_nodes, -1))
        shift_bwd = np.roll(rho_face, 1)
        shift_fwd = np.roll(rho_face, -1)
        out, nu = flow.artificial_density(
            rho_face,
            shift_fwd,
            shift_bwd,
            rho_up=rho_nodes,
            pos_mask=np.ones(4, dtype=bool),
            kappa=2.0,
            gamma=1.4,
        )
        assert np.all(np.asarray(nu)[1:3] > 0.0)
        # biased toward the upstream (larger) face value on the ramp interior
        assert out[1] > rho_face[1]
        np.testing.assert_allclose(
            out, (1 - nu) * rho_face + nu * shift_bwd, atol=1e-15
        )


class TestResidual:
    def test_constant_potential_zero_residual(self, smooth_grid_small):
        g = smooth_grid_small
        met = mg.flow_metrics(g.x, g.y)
        fs = FreestreamSpec(mach=0.7)
        l = flow.flow_residual(np.ones_like(g.x), g.x, g.y, met, fs, 2.0)
        np.testing.assert_allclose(l, 0.0, atol=1e-15)

    def test_conservation_telescoping(self, smooth_grid_small):
        # the sum of residuals equals the net outer-boundary flux: interior
        # face fluxes cancel pairwise and the wall flux is identically zero
        g = smooth_grid_small
        met = mg.flow_metrics(g.x, g.y)
        fs = FreestreamSpec(mach=0.7)
        rng = np.random.default_rng(3)
        phi = flow.farfield_potential(g.x, g.y, fs) + 1e-4 * rng.standard_normal(g.x.shape)
        fd = flow._face_data(phi, g.x, g.y, met, fs, 2.0)
        l = flow.flow_residual(phi, g.x, g.y, met, fs, 2.0)
        gap = abs(l.sum() - fd.flux_eta[:, -1].sum())
        assert gap < 1e-12 * max(np.abs(fd.flux_eta).max(), 1.0)

    def test_freestream_residual_concentrated_near_body(self, smooth_grid_small):
        # per unit cell area the defect of the freestream field lives at the
        # wall, where tangency is violated
        g = smooth_grid_small
        met = mg.flow_metrics(g.x, g.y)
        fs = FreestreamSpec(mach=0.7)
        phi = flow.farfield_potential(g.x, g.y, fs)
        l = np.abs(flow.flow_residual(phi, g.x, g.y, met, fs, 2.0))
        assert l.max() > 0.0
        scaled = l / np.asarray(met.det)[:, : l.shape[1]]
        nja = l.shape[1]
        assert scaled[:, : nja // 3].max() > 30.0 * scaled[:, 2 * nja // 3 :].max()

    def test_residual_periodicity(self, smooth_grid_small):
        g = smooth_grid_small
        met = mg.flow_metrics(g.x, g.y)
        fs = FreestreamSpec(mach=0.7)
        rng = np.random.default_rng(1)
        phi = flow.farfield_potential(g.x, g.y, fs) + 1e-5 * rng.standard_normal(g.x.shape)
        l = flow.flow_residual(phi, g.x, g.y, met, fs, 2.0)
        gr = mg.Grid(np.roll(g.x, 5, axis=0), np.roll(g.y, 5, axis=0))
        met_r = mg.flow_metrics(gr.x, gr.y)
        l_r = flow.flow_residual(np.roll(phi, 5, axis=0), gr.x, gr.y, met_r, fs, 2.0)
        np.testing.assert_allclose(l_r, np.roll(l, 5, axis=0), atol=1e-13)


class TestAf2:
    def test_fixed_point(self, smooth_grid_small, flow_state_small):
        g = smooth_grid_small
        fs = flow_state_small.freestream
        met = mg.flow_metrics(g.x, g.y)
        params = Af2Params(tol=1e-10)
        phi_next, l_field, _ = flow.af2_iterate(
            flow_state_small.phi, g.x, g.y, met, fs, params, alpha=1.0, beta=0.15
        )
        # converged state moves by at most O(residual / alpha)
        assert np.abs(phi_next - flow_state_small.phi).max() < 1e-7

    def test_large_alpha_freezes(self, smooth_grid_small):
        g = smooth_grid_small
        fs = FreestreamSpec(mach=0.7)
        met = mg.flow_metrics(g.x, g.y)
        phi = flow.farfield_potential(g.x, g.y, fs)
        params = Af2Params()
        phi_a, _, _ = flow.af2_iterate(phi, g.x, g.y, met, fs, params, alpha=1e12, beta=0.15)
        assert np.abs(phi_a - phi).max() < 1e-9

    def test_first_cycle_reduces_residual(self, smooth_grid_small):
        g = smooth_grid_small
        fs = FreestreamSpec(mach=0.7)
        met = mg.flow_metrics(g.x, g.y)
        params = Af2Params()
        phi = flow.farfield_potential(g.x, g.y, fs)
        cycle = np.geomspace(params.alpha_hi, params.alpha_lo, params.cycle_length)
        res0 = flow.residual_norm(flow.flow_residual(phi, g.x, g.y, met, fs, params.kappa))
        for alpha in cycle:
            phi, _, _ = flow.af2_iterate(phi, g.x, g.y, met, fs, params, alpha, 0.15, check=False)
        res1 = flow.residual_norm(flow.flow_residual(phi, g.x, g.y, met, fs, params.kappa, check=False))
        assert res1 < res0


class TestSolveFlow:
    def test_converges_m07(self, flow_state_small):
        assert flow_state_small.converged
        assert flow_state_small.residual < 1e-10

    def test_low_mach_density_near_unity(self, smooth_grid_small):
        fs = FreestreamSpec(mach=0.1)
        st = flow.solve_flow(smooth_grid_small, fs, Af2Params(tol=1e-8))
        met = mg.flow_metrics(smooth_grid_small.x, smooth_grid_small.y)
        rho, _, _, _ = flow.pressure_field(st.phi, smooth_grid_small.x, smooth_grid_small.y, met, fs)
        assert np.abs(rho - 1.0).max() < 0.01

    def test_subsonic_no_switching(self, smooth_grid_small):
        fs = FreestreamSpec(mach=0.5)
        st = flow.solve_flow(smooth_grid_small, fs, Af2Params(tol=1e-8))
        met = mg.flow_metrics(smooth_grid_small.x, smooth_grid_small.y)
        fd = flow._face_data(st.phi, smooth_grid_small.x, smooth_grid_small.y, met, fs, 2.0)
        assert np.all(np.asarray(fd.nu_xi) == 0.0)
        assert np.all(np.asarray(fd.nu_eta) == 0.0)

    def test_invalid_grid_rejected_before_iterating(self, smooth_grid_small):
        g = smooth_grid_small.copy()
        g.y[:, 2] = g.y[:, 5]
        g.x[:, 2] = g.x[:, 5]
        with pytest.raises(MeshValidityError):
            flow.solve_flow(g, FreestreamSpec(mach=0.7), Af2Params(max_iters=2))

    def test_mirror_symmetry(self, smooth_grid_small, flow_state_small):
        ni = smooth_grid_small.ni
        mirror = flow.mirror_station(np.arange(ni), ni)
        asym = np.abs(flow_state_small.phi - flow_state_small.phi[mirror, :]).max()
        assert asym < 1e-8


class TestSurfaceCp:
    def test_cp_symmetry(self, smooth_grid_small, flow_state_small):
        cp = flow.surface_cp(flow_state_small, smooth_grid_small, flow_state_small.freestream)
        ni = smooth_grid_small.ni
        mirror = flow.mirror_station(np.arange(ni), ni)
        assert np.abs(cp - cp[mirror]).max() < 1e-8

    def test_stagnation_cp_low_mach(self, smooth_grid_small):
        # LE stagnation Cp approaches the isentropic value, which tends to 1
        fs = FreestreamSpec(mach=0.1)
        st = flow.solve_flow(smooth_grid_small, fs, Af2Params(tol=1e-9))
        cp = flow.surface_cp(st, smooth_grid_small, fs)
        m = fs.mach
        cp_stag = 2.0 / (fs.gamma * m**2) * (
            (1.0 + 0.5 * (fs.gamma - 1.0) * m**2) ** (fs.gamma / (fs.gamma - 1.0)) - 1.0
        )
        assert abs(cp.max() - cp_stag) < 0.02

    def test_freestream_field_cp_identically_zero(self, smooth_grid_small):
        # phi linear in (x, y) recovers v = U_inf exactly through the
        # discrete metric identities, so Cp vanishes to roundoff away from
        # the tangency-modified wall row
        g = smooth_grid_small
        met = mg.flow_metrics(g.x, g.y)
        fs = FreestreamSpec(mach=0.7)
        phi = flow.farfield_potential(g.x, g.y, fs)
        _, cp, vx, _ = flow.pressure_field(phi, g.x, g.y, met, fs)
        assert np.abs(cp[:, 1:]).max() < 1e-12
        np.testing.assert_allclose(vx[:, 1:], flow.freestream_velocity(fs), atol=1e-12)

    def test_upper_surface_stations(self):
        st = flow.upper_surface_stations(48)
        assert len(st) == 25
        assert st[0] == 0 and st[1] == 47 and st[-1] == 24
