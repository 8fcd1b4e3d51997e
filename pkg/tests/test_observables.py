import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from nlslab.errors import OrderCheckFailed, PreconditionError, UsageError
from nlslab.evolution import EvolutionConfig, WavePair, evolve, grid_for_eps, initial_data
from nlslab.fitting import fit_order
from nlslab.grid import Grid
from nlslab.hamiltonian import PhasePoint
from nlslab.observables import (
    CSV_COLUMNS, Cutoff, DiagnosticsObserver, TestDictionary, best_fit_modulation, defect_alpha, defect_eta,
    defect_gamma, dual_norm_surrogate, energy_components, gamma_phi, h_eps_distance, h_eps_norm_sq, lemma_pote_check,
    mass_centers, modulated_family_member, momentum_density, predicted_initial_energy, total_momentum,
    total_momentum_spectral,
)
from nlslab.potentials import Potential, constant, harmonic
from oracles import brute_force_phases


def quad_heps_sq(D, grid, eps):
    """H_eps norm squared by pointwise quadrature, independent of the Fourier weights."""
    return float(sum(grid.integrate(np.abs(d) ** 2) / eps + eps * grid.integrate(np.abs(grid.gradient(d)) ** 2)
                     for d in D))


@pytest.fixture(scope="module")
def eps_grid():
    return grid_for_eps(0.2)


class TestMomentumDensity:
    def test_real_field(self, small_grid):
        f = np.exp(-small_grid.x**2)
        assert np.all(momentum_density(f, 0.3, small_grid) == 0)

    def test_plane_wave(self):
        g = Grid(math.pi, 64)
        assert_allclose(momentum_density(np.exp(3j * g.x), 0.5, g), 3.0, atol=1e-12)

    def test_modulated_profile(self, gs_beta2, eps_grid):
        s = initial_data(gs_beta2, 0.5, 1.3, -0.4, 0.2, eps_grid)
        P = [eps_grid.integrate(momentum_density(s.U[i], 0.2, eps_grid)) for i in range(2)]
        assert_allclose(P, [gs_beta2.m1 * 1.3, gs_beta2.m2 * -0.4], atol=1e-8)

    def test_two_evaluations_agree(self, gs_beta2, eps_grid, rng):
        s = initial_data(gs_beta2, -1.0, 0.7, 0.2, 0.2, eps_grid)
        s.U *= np.exp(1j * 0.3 * np.sin(eps_grid.x))
        assert abs(total_momentum(s) - total_momentum_spectral(s)) < 1e-10


class TestDefects:
    def test_alpha_zero_initially(self, gs_beta2, eps_grid):
        s = initial_data(gs_beta2, 1.0, 0.5, 0.5, 0.2, eps_grid)
        a = defect_alpha(s, PhasePoint.start(1.0, 0.5), gs_beta2.masses)
        assert max(map(abs, a)) < 1e-6

    def test_time_mismatch(self, gs_beta2, eps_grid):
        s = initial_data(gs_beta2, 1.0, 0.0, 0.0, 0.2, eps_grid)
        with pytest.raises(UsageError):
            defect_alpha(s, PhasePoint(1.0, 0.0, 1.0, 0.0, 0.5), gs_beta2.masses)

    def test_gauge_invariance(self, gs_beta2, eps_grid):
        s = initial_data(gs_beta2, 1.0, 0.5, 0.5, 0.2, eps_grid)
        pt, m, V = PhasePoint.start(1.0, 0.5), gs_beta2.masses, harmonic()
        chi = Cutoff(4.0)
        r = s.with_phase(0.9)
        assert_allclose(r.masses(), s.masses(), rtol=1e-12)
        assert_allclose(energy_components(r, V, V), energy_components(s, V, V), rtol=1e-12)
        assert_allclose(momentum_density(r.U[0], 0.2, eps_grid), momentum_density(s.U[0], 0.2, eps_grid), atol=1e-12)
        for f in (lambda st: defect_alpha(st, pt, m), lambda st: defect_eta(st, pt, V, V, chi, m),
                  lambda st: defect_gamma(st, pt, chi, m)):
            assert_allclose(f(r), f(s), atol=1e-12)

    def test_alpha_sum_conserved_for_constant_potential(self, gs_beta2, eps_grid):
        V = constant(0.4)
        s = initial_data(gs_beta2, -1.0, 1.0, 1.0, 0.2, eps_grid)
        cfg = EvolutionConfig(0.2, 0.02, 1.0, sample_stride=10)
        res = evolve(s, V, V, cfg, [lambda st, pt: sum(defect_alpha(st, pt, gs_beta2.masses))],
                     PhasePoint.start(-1.0, 1.0))
        a = np.array(res.series[0])
        assert np.max(np.abs(a - a[0])) < 1e-8

    def test_eta_constant_potential(self, gs_beta2, eps_grid):
        s = initial_data(gs_beta2, 0.0, 0.0, 0.0, 0.2, eps_grid)
        V = constant(0.7)
        eta = defect_eta(s, PhasePoint.start(0.0, 0.0), V, V, Cutoff(5.0), gs_beta2.masses)
        assert max(map(abs, eta)) < 1e-10

    def test_eta_quadratic_ratio(self, gs_beta2):
        V = harmonic()
        vals = []
        for eps in (0.1, 0.05):
            s = initial_data(gs_beta2, 1.0, 0.0, 0.0, eps, grid_for_eps(eps))
            chi = Cutoff(1.0 + 5 * eps * gs_beta2.width)
            vals.append(abs(defect_eta(s, PhasePoint.start(1.0, 0.0), V, V, chi, gs_beta2.masses)[0]))
        assert 2.5 <= vals[0] / vals[1] <= 6

    def test_gamma_even_profile(self, gs_beta2, eps_grid):
        s = initial_data(gs_beta2, 0.8, 0.0, 0.0, 0.2, eps_grid)
        g = defect_gamma(s, PhasePoint.start(0.8, 0.0), Cutoff(6.0), gs_beta2.masses)
        assert max(map(abs, g)) < 1e-10

    def test_gamma_one_cell_shift(self, gs_beta2, eps_grid):
        s = initial_data(gs_beta2, 0.8, 0.0, 0.0, 0.2, eps_grid)
        pt, m, chi = PhasePoint.start(0.8, 0.0), gs_beta2.masses, Cutoff(6.0)
        moved = WavePair(np.roll(s.U, 1, axis=1), eps_grid, 0.2, 1.0, 2.0)
        d = np.subtract(defect_gamma(moved, pt, chi, m), defect_gamma(s, pt, chi, m))
        assert_allclose(d, -np.asarray(m) * eps_grid.dx, atol=1e-10)

    def test_translation_equivariance(self, gs_beta2, eps_grid):
        eps, V = 0.2, constant()
        s = initial_data(gs_beta2, 0.5, 0.6, 0.6, eps, eps_grid)
        s.U *= np.exp(0.05j * np.cos(eps_grid.x))  # off the family but on the mass sphere
        pt, m, chi = PhasePoint.start(0.5, 0.6), gs_beta2.masses, Cutoff(6.0)
        k = 3
        moved = WavePair(np.roll(s.U, k, axis=1), eps_grid, eps, 1.0, 2.0)
        mpt = PhasePoint.start(0.5 + k * eps_grid.dx, 0.6)
        assert_allclose(defect_alpha(moved, mpt, m), defect_alpha(s, pt, m), atol=1e-9)
        assert_allclose(defect_gamma(moved, mpt, chi, m), defect_gamma(s, pt, chi, m), atol=1e-9)
        a, b = best_fit_modulation(s, gs_beta2, pt), best_fit_modulation(moved, gs_beta2, mpt)
        assert b.Heps == pytest.approx(a.Heps, abs=1e-9)
        assert b.Gamma == pytest.approx(a.Gamma, abs=1e-9)


class TestEnergy:
    def test_zero_field(self, small_grid):
        s = WavePair(np.zeros((2, small_grid.n), complex), small_grid, 0.5, 1.0, 2.0)
        assert energy_components(s, harmonic(), harmonic()) == (0.0, 0.0, 0.0)

    @pytest.mark.parametrize("V,W", [(harmonic(), harmonic()), (harmonic(0.5), constant(0.3))])
    def test_initial_energy_prediction(self, gs_beta2, V, W):
        eps = 0.1
        s = initial_data(gs_beta2, 1.0, 0.5, -0.2, eps, grid_for_eps(eps))
        E = energy_components(s, V, W)[2]
        assert E == pytest.approx(predicted_initial_energy(gs_beta2, V, W, 1.0, 0.5, -0.2, eps), abs=1e-8)


class TestHepsGeometry:
    def test_self_distance(self, gs_beta2, eps_grid):
        s = initial_data(gs_beta2, 0.0, 0.3, 0.3, 0.2, eps_grid)
        assert h_eps_distance(s, s) == 0.0

    def test_eps_mismatch(self, gs_beta2, eps_grid):
        s = initial_data(gs_beta2, 0.0, 0.0, 0.0, 0.2, eps_grid)
        t = WavePair(s.U.copy(), eps_grid, 0.1, 1.0, 2.0)
        with pytest.raises(UsageError):
            h_eps_distance(s, t)

    def test_scaled_component_difference(self, gs_beta2, eps_grid):
        eps, delta = 0.2, 1e-3
        s = initial_data(gs_beta2, 0.4, 0.8, 0.8, eps, eps_grid)
        U = s.U.copy()
        U[0] += delta * s.U[0]
        t = WavePair(U, eps_grid, eps, 1.0, 2.0)
        D = np.stack([delta * s.U[0], np.zeros(eps_grid.n)])
        assert h_eps_distance(t, s) == pytest.approx(math.sqrt(quad_heps_sq(D, eps_grid, eps)), rel=1e-10)

    def test_family_member_is_initial_data(self, gs_beta2, eps_grid):
        s = initial_data(gs_beta2, 0.4, 0.8, 0.8, 0.2, eps_grid)
        q = modulated_family_member(gs_beta2, 0.4, 0.8, 0.0, 0.0, 0.2, eps_grid)
        assert h_eps_distance(s, q) < 1e-10

    def test_phase_periodicity(self, gs_beta2, eps_grid):
        a = modulated_family_member(gs_beta2, 0.4, 0.8, 0.0, 0.0, 0.2, eps_grid)
        b = modulated_family_member(gs_beta2, 0.4, 0.8, 2 * np.pi, 2 * np.pi, 0.2, eps_grid)
        assert np.max(np.abs(a.U - b.U)) < 1e-12

    @pytest.mark.parametrize("x,xi,th", [(0.0, 0.0, (0, 0)), (-2.0, 1.5, (1.0, 4.0)), (3.0, (0.5, -0.5), (2, 2))])
    def test_member_mass(self, gs_beta2, eps_grid, x, xi, th):
        q = modulated_family_member(gs_beta2, x, xi, *th, 0.2, eps_grid)
        assert_allclose(q.masses(), gs_beta2.masses, rtol=1e-10)


class TestBestFit:
    def test_exact_member_at_start(self, gs_beta2, eps_grid):
        s = initial_data(gs_beta2, 1.0, 0.4, 0.4, 0.2, eps_grid)
        fit = best_fit_modulation(s, gs_beta2, PhasePoint.start(1.0, 0.4))
        d = [min(t, 2 * np.pi - t) for t in (fit.theta1, fit.theta2)]
        assert max(d) < 1e-8
        assert fit.Heps < 1e-8
        assert fit.in_tube

    def test_recovers_phases(self, gs_beta2, eps_grid):
        q = modulated_family_member(gs_beta2, -0.7, 0.9, 0.3, 1.2, 0.2, eps_grid)
        fit = best_fit_modulation(q, gs_beta2, PhasePoint.start(-0.7, 0.9))
        assert_allclose([fit.theta1, fit.theta2], [0.3, 1.2], atol=1e-6)

    def test_matches_phase_lattice(self, gs_beta2):
        eps = 0.1
        g = grid_for_eps(eps)
        V = harmonic()
        s = initial_data(gs_beta2, 1.0, 0.0, 0.0, eps, g)
        res = evolve(s, V, V, EvolutionConfig(eps, eps / 10, 0.5), point0=PhasePoint.start(1.0, 0.0))
        pt = res.point
        fit = best_fit_modulation(res.final, gs_beta2, pt)
        ref, _ = brute_force_phases(res.final, gs_beta2, pt)
        assert fit.Heps == pytest.approx(ref, abs=1e-8)

    def test_out_of_tube_is_reported(self, gs_beta2, eps_grid):
        s = initial_data(gs_beta2, 1.0, 0.0, 0.0, 0.2, eps_grid)
        s.U[1] *= 0.5
        fit = best_fit_modulation(s, gs_beta2, PhasePoint.start(1.0, 0.0), gamma_bound=1e-3)
        assert not fit.in_tube


class TestGammaPhi:
    def test_off_sphere(self, gs_beta2):
        with pytest.raises(PreconditionError):
            gamma_phi(1.1 * gs_beta2.R, gs_beta2)

    def test_scaled_matches_unscaled(self, gs_beta2, eps_grid):
        s = initial_data(gs_beta2, 0.0, 0.0, 0.0, 0.2, eps_grid)
        assert gamma_phi(s, gs_beta2, eps_scaling=0.2).Gamma < 1e-10


class TestDualSurrogate:
    D = TestDictionary()

    def test_size_and_bound(self):
        x = np.linspace(-10, 10, 20001)
        assert len(self.D) == 48
        assert self.D.c2_bound(x) <= 1 + 1e-9

    def test_discrete_delta(self, small_grid):
        j = 300
        dens = np.zeros(small_grid.n)
        dens[j] = 2.0 / small_grid.dx
        assert dual_norm_surrogate(dens, small_grid, (2.0, small_grid.x[j]), self.D) < 1e-9

    def test_empty_dictionary(self, small_grid):
        with pytest.raises(UsageError):
            dual_norm_surrogate(np.zeros(small_grid.n), small_grid, (1.0, 0.0), TestDictionary((), (), ()))

    def test_two_deltas_linear_in_separation(self, small_grid):
        zero = np.zeros(small_grid.n)
        y = 0.3
        K = [dual_norm_surrogate(zero, small_grid, [(1.0, y), (-1.0, y + d)], self.D) / d for d in (0.01, 0.02, 0.04)]
        assert max(K) / min(K) < 1.1

    def test_initial_mass_density_second_order(self, gs_beta2):
        errs = []
        ladder = (0.2, 0.1, 0.05)
        for eps in ladder:
            g = grid_for_eps(eps)
            s = initial_data(gs_beta2, 1.0, 0.0, 0.0, eps, g)
            errs.append(dual_norm_surrogate(np.abs(s.U[0]) ** 2 / eps, g, (gs_beta2.m1, 1.0), self.D))
        assert fit_order(zip(ladder, errs)).slope == pytest.approx(2.0, abs=0.2)


class TestPotentialExpansion:
    ladder = (0.2, 0.1, 0.05, 0.025)

    def test_constant(self, gs_beta2):
        assert lemma_pote_check(constant(3.0), gs_beta2, 1.0, self.ladder) == math.inf

    def test_nearly_linear(self, gs_beta2):
        A = Potential("cosine", {"a": 1.0, "kappa": 0.05})
        assert lemma_pote_check(A, gs_beta2, 1.0, self.ladder) >= 1.8

    def test_harmonic(self, gs_beta2):
        assert lemma_pote_check(harmonic(), gs_beta2, 1.0, self.ladder) == pytest.approx(2.0, abs=0.2)

    def test_rejects_low_order(self, gs_beta2):
        with pytest.raises(OrderCheckFailed):
            lemma_pote_check(harmonic(), gs_beta2, 1.0, self.ladder, min_slope=2.5)


class TestObserver:
    def test_initial_record(self, gs_beta2, eps_grid):
        eps, V = 0.2, harmonic()
        s = initial_data(gs_beta2, 1.0, 0.0, 0.0, eps, eps_grid)
        obs = DiagnosticsObserver(gs_beta2, V, V, eps_grid, eps, Cutoff(1.0 + 5 * eps * gs_beta2.width))
        rec = obs(s, PhasePoint.start(1.0, 0.0))
        assert rec.all_finite()
        assert len(rec.row()) == len(CSV_COLUMNS)
        assert list(rec.as_dict()) == list(CSV_COLUMNS)
        assert abs(rec.alpha1) < 1e-6 and rec.Heps < 1e-8
        assert_allclose(mass_centers(s, gs_beta2.masses), [1.0, 1.0], atol=1e-10)
