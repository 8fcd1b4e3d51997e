import numpy as np
import pytest
from numpy.testing import assert_allclose

from nlslab.errors import ConfigurationError, PreconditionError
from nlslab.grid import Grid
from nlslab.ground_state import (
    GroundStatePair, compare_branches, elliptic_residual, energy, f_beta, load_ground_state, project_to_sphere,
    random_localized_field, save_ground_state, solve_ground_state,
)
from nlslab.observables import gamma_phi, modulational_stability_probe

from oracles import brute_force_orbit


def sech(x):
    return 1 / np.cosh(x)


class TestFunctionals:
    def test_f_beta(self):
        assert f_beta(0, 0, 1, 2) == 0
        assert f_beta(1, 0, 1, 3.0) == 0.5
        assert f_beta(1, 1, 1, 2) == 3.0

    def test_energy_zero(self, ref_grid):
        z = np.zeros(ref_grid.n)
        assert energy((z, z), 1, 2, ref_grid) == 0

    def test_energy_scalar_soliton(self, ref_grid):
        x = ref_grid.x
        u = np.sqrt(2) * sech(np.sqrt(2) * x)
        du = -2 * sech(np.sqrt(2) * x) * np.tanh(np.sqrt(2) * x)
        expected = 0.5 * ref_grid.integrate(du**2) - ref_grid.integrate(u**4 / 2)
        E = energy((u, np.zeros_like(u)), 1, 0.0, ref_grid)
        assert E == pytest.approx(expected, abs=1e-10)
        assert E < 0

    def test_energy_small_scaling(self, ref_grid):
        x = ref_grid.x
        U = (np.exp(-x**2), 0.5 * np.exp(-x**2))
        kin = ref_grid.integrate(np.abs(ref_grid.gradient(U[0])) ** 2 + np.abs(ref_grid.gradient(U[1])) ** 2)
        for lam in (1e-2, 1e-3):
            E = energy((lam * U[0], lam * U[1]), 1, 2, ref_grid)
            assert abs(E - 0.5 * lam**2 * kin) < 10 * lam**4


class TestResidual:
    def _pair(self, grid, r1, r2, beta):
        return GroundStatePair(r1, r2, 1.0, beta, grid)

    def test_scalar_soliton(self, ref_grid):
        x = ref_grid.x
        R = self._pair(ref_grid, np.sqrt(2) * sech(np.sqrt(2) * x), np.zeros_like(x), 0.0)
        assert R.residual_norm < 1e-8

    def test_symmetric_pair(self, ref_grid):
        x = ref_grid.x
        r = np.sqrt(2 / 3) * sech(np.sqrt(2) * x)
        assert self._pair(ref_grid, r, r, 2.0).residual_norm < 1e-8

    def test_zero_pair_is_trivial(self, ref_grid):
        z = np.zeros(ref_grid.n)
        R = self._pair(ref_grid, z, z, 2.0)
        assert R.residual_norm == 0
        assert R.is_trivial
        assert np.all(elliptic_residual(R)[0] == 0)


class TestSolver:
    @pytest.mark.parametrize("beta", [0.0, 2.0, 5.0])
    def test_analytic_family(self, ref_grid, beta):
        R = solve_ground_state(1.0, beta, ref_grid)
        amp = np.sqrt(2 / (1 + beta))
        assert R.residual_norm < 1e-10
        assert np.max(R.r1) == pytest.approx(amp, abs=1e-6)
        assert R.m1 == pytest.approx(2 * np.sqrt(2) / (1 + beta), abs=1e-6)
        assert R.m2 == pytest.approx(R.m1, abs=1e-12)

    def test_invariants(self, gs_beta2):
        R = gs_beta2
        assert np.all(R.r1 >= 0) and np.all(R.r2 >= 0)
        assert_allclose(R.r1[1:], R.r1[1:][::-1], atol=1e-15)
        assert R.m1 == R.grid.integrate(R.r1**2)
        assert np.isfinite(R.second_moment(1))
        assert R.minimality_gap >= -1e-10

    def test_energy_matches_analytic(self, gs_beta2):
        x = gs_beta2.grid.x
        r = np.sqrt(2 / 3) * sech(np.sqrt(2) * x)
        assert gs_beta2.energy == pytest.approx(energy((r, r), 1, 2, gs_beta2.grid), abs=1e-6)

    def test_semitrivial_branch(self, ref_grid):
        R = solve_ground_state(1.0, 0.5, ref_grid, init="semitrivial")
        assert R.m2 == 0
        assert np.max(R.r1) == pytest.approx(np.sqrt(2), abs=1e-6)

    def test_branch_comparison(self, ref_grid):
        out = compare_branches(1.0, 0.5, ref_grid)
        assert set(out) >= {"symmetric", "semitrivial"}

    def test_non_unit_power(self, ref_grid):
        R = solve_ground_state(1.5, 2.0, ref_grid)
        amp = ((1 + 1.5) / (1 + 2.0)) ** (1 / 3.0)
        assert R.residual_norm < 1e-10
        assert np.max(R.r1) == pytest.approx(amp, abs=1e-6)

    @pytest.mark.parametrize("p,beta", [(0.0, 1.0), (2.0, 1.0), (1.0, -0.1)])
    def test_rejects_parameters(self, ref_grid, p, beta):
        with pytest.raises(ConfigurationError):
            solve_ground_state(p, beta, ref_grid)

    def test_save_load_roundtrip(self, gs_beta2, tmp_path):
        csv_path, side = save_ground_state(gs_beta2, tmp_path / "gs.csv")
        assert csv_path.read_text().splitlines()[0] == "x,r1,r2"
        R = load_ground_state(csv_path)
        assert np.array_equal(R.r1, gs_beta2.r1)
        assert R.m1 == gs_beta2.m1 and R.energy == gs_beta2.energy


class TestOrbit:
    def test_energy_constant_on_orbit(self, gs_beta2):
        g = gs_beta2.grid
        for y, t1, t2 in [(0.37, 0.4, 2.0), (-3 * g.dx, 5.0, 1.0)]:
            U = (np.exp(1j * t1) * g.shift(gs_beta2.r1, y), np.exp(1j * t2) * g.shift(gs_beta2.r2, y))
            assert abs(energy(U, 1, 2, g) - gs_beta2.energy) < 1e-10

    def test_identity(self, gs_beta2):
        fit = gamma_phi(gs_beta2.R.astype(complex), gs_beta2)
        assert fit.Gamma < 1e-12
        assert abs(fit.y) < gs_beta2.grid.dx
        assert min(fit.theta1, 2 * np.pi - fit.theta1) < 1e-6

    def test_orbit_member(self, gs_beta2):
        g = gs_beta2.grid
        U = np.exp(1j * np.pi / 3) * np.stack([g.shift(gs_beta2.r1, 0.5), g.shift(gs_beta2.r2, 0.5)])
        fit = gamma_phi(U, gs_beta2)
        assert fit.Gamma < 1e-10
        assert abs(fit.y - 0.5) < g.dx
        assert fit.theta1 == pytest.approx(np.pi / 3, abs=1e-6)
        assert fit.theta2 == pytest.approx(np.pi / 3, abs=1e-6)

    def test_mass_precondition(self, gs_beta2):
        with pytest.raises(PreconditionError):
            gamma_phi(1.01 * gs_beta2.R.astype(complex), gs_beta2)

    def test_invariant_under_orbit_action(self, gs_beta2, rng):
        g = gs_beta2.grid
        eta = np.stack([random_localized_field(g, rng, 1.0), random_localized_field(g, rng, 1.0)])
        Phi = project_to_sphere(gs_beta2.R + 0.05 * eta, gs_beta2.m1 + gs_beta2.m2, g)
        base = gamma_phi(Phi, gs_beta2)
        moved = np.stack([np.exp(0.7j) * np.roll(Phi[0], 40), np.exp(2.1j) * np.roll(Phi[1], 40)])
        other = gamma_phi(moved, gs_beta2)
        assert abs(other.Gamma - base.Gamma) < 1e-9
        assert other.y == pytest.approx(base.y + 40 * g.dx, abs=1e-7)

    def test_against_brute_force(self, gs_small):
        g = gs_small.grid
        x = g.x
        bump = np.exp(-x**2 / 0.5)
        Phi = np.stack([gs_small.r1 + 0.02 * bump, gs_small.r2]).astype(complex)
        Phi = project_to_sphere(Phi, gs_small.m1 + gs_small.m2, g)
        fit = gamma_phi(Phi, gs_small)
        ref, _ = brute_force_orbit(Phi, gs_small.R, g, y_window=(-1, 1))
        assert abs(fit.Gamma - ref) < 1e-8


class TestStabilityProbe:
    def test_empty(self, gs_beta2):
        rep = modulational_stability_probe(gs_beta2, K=0)
        assert rep.samples == {}

    def test_scalar_ground_state(self, ref_grid):
        R = solve_ground_state(1.0, 0.0, ref_grid, init="semitrivial")
        rep = modulational_stability_probe(R, K=50, scale=0.05)
        assert rep.min_dE >= -1e-10
        assert not rep.not_minimum
        assert rep.stable
        assert all(np.isfinite(v) for v in rep.max_ratio.values())

    def test_unperturbed_point_excluded(self, gs_beta2):
        rep = modulational_stability_probe(gs_beta2, K=3, scale=0.0, halvings=0)
        assert all(G < 1e-12 and abs(dE) < 1e-12 for G, dE in rep.samples[0.0])
        assert np.isnan(rep.max_ratio[0.0])
