"""Diagnostics of a wave pair against the driving particle trajectory.

All quantities are for one space dimension. Masses and densities carry the
semiclassical scaling: the mass density of component i is eps^-1 |phi_i|^2
and its momentum density is Im(conj(phi_i) phi_i').
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ConfigurationError, OrderCheckFailed, PreconditionError, UsageError
from .evolution import WavePair, modulated_pair
from .fitting import fit_order
from .grid import Grid
from .ground_state import GroundStatePair, energy, f_beta, project_to_sphere, random_localized_field
from .hamiltonian import PhasePoint
from .potentials import Potential

CSV_COLUMNS = (
    "t", "N1", "N2", "E", "E1", "E2", "center1", "center2", "Ptot",
    "alpha1", "alpha2", "eta1", "eta2", "gamma1", "gamma2",
    "Gamma", "Heps", "dualM1", "dualM2", "dualP", "theta1", "theta2",
)


# ---------------------------------------------------------------- densities

def momentum_density(phi: np.ndarray, eps: float, grid: Grid) -> np.ndarray:
    """``eps^(1-N) Im(conj(phi) phi')`` with N = 1, i.e. ``Im(conj(phi) phi')``."""
    phi = grid.check(phi)
    if not np.iscomplexobj(phi):
        return np.zeros(phi.shape)
    return np.imag(np.conj(phi) * grid.gradient(np.asarray(phi, dtype=complex)))


def total_momentum(state: WavePair) -> float:
    """Quadrature of the summed momentum densities."""
    g = state.grid
    return float(sum(g.integrate(momentum_density(state.U[i], state.eps, g)) for i in range(2)))


def total_momentum_spectral(state: WavePair) -> float:
    """``Im <phi, phi'>`` summed over components, evaluated by Parseval."""
    g = state.grid
    F = g.fft(state.U)
    k = np.imag(g._ik)
    return float(2 * g.L / g.n**2 * np.sum(k * np.abs(F) ** 2))


def mass_centers(state: WavePair, masses=None) -> np.ndarray:
    """``int x |phi_i|^2 / (eps m_i)``; ``masses`` defaults to the state's own."""
    g = state.grid
    m = state.masses() if masses is None else np.asarray(masses, dtype=float)
    return g.integrate(g.x * np.abs(state.U) ** 2) / (state.eps * m)


def energy_components(state: WavePair, V: Potential, W: Potential) -> tuple[float, float, float]:
    """Component energies E1, E2 (each carrying half the coupling term) and their sum."""
    g, eps = state.grid, state.eps
    U = state.U
    kin = g.integrate(np.abs(g.gradient(U)) ** 2)
    pot = g.integrate(np.stack([V.value(g.x), W.value(g.x)]) * np.abs(U) ** 2)
    nl = float(g.integrate(f_beta(U[0], U[1], state.p, state.beta)))
    E = 0.5 * eps * kin + pot / eps - nl / (2 * eps)
    return float(E[0]), float(E[1]), float(E[0] + E[1])


def predicted_initial_energy(R: GroundStatePair, V: Potential, W: Potential, x0: float, xi1: float, xi2: float,
                             eps: float) -> float:
    """Energy of the initial data written in the soliton frame."""
    y = R.grid.x
    pot = R.grid.integrate(V.value(eps * y + x0) * R.r1**2 + W.value(eps * y + x0) * R.r2**2)
    return float(R.energy + 0.5 * (R.m1 * xi1**2 + R.m2 * xi2**2) + pot)


# ---------------------------------------------------------------- defects

@dataclass(frozen=True)
class Cutoff:
    """Even cutoff equal to 1 on [-A, A], 0 beyond 2A, quintic smoothstep between."""

    A: float

    def __post_init__(self):
        if not self.A > 0:
            raise ConfigurationError(f"cutoff radius must be positive, got {self.A}")

    def __call__(self, x):
        s = np.clip((np.abs(np.asarray(x, dtype=float)) - self.A) / self.A, 0.0, 1.0)
        return 1.0 - s**3 * (10 - 15 * s + 6 * s**2)

    @classmethod
    def for_trajectory(cls, points, R: GroundStatePair, eps: float, widths: float = 5.0) -> "Cutoff":
        reach = max(abs(s.x1) + abs(s.x2) for s in points)
        return cls(reach + widths * eps * R.width)


def _check_sync(state: WavePair, point: PhasePoint) -> None:
    if abs(state.t - point.t) > 1e-9 * max(1.0, abs(state.t)):
        raise UsageError(f"field time {state.t} and particle time {point.t} differ")


def defect_alpha(state: WavePair, point: PhasePoint, masses) -> tuple[float, float]:
    _check_sync(state, point)
    g = state.grid
    P = [float(g.integrate(momentum_density(state.U[i], state.eps, g))) for i in range(2)]
    return P[0] - masses[0] * point.xi1, P[1] - masses[1] * point.xi2


def defect_eta(state: WavePair, point: PhasePoint, V: Potential, W: Potential, chi, masses) -> tuple[float, float]:
    _check_sync(state, point)
    g, eps = state.grid, state.eps
    c = chi(g.x)
    e1 = masses[0] * float(V.value(point.x1)) - g.integrate(c * V.value(g.x) * np.abs(state.U[0]) ** 2) / eps
    e2 = masses[1] * float(W.value(point.x2)) - g.integrate(c * W.value(g.x) * np.abs(state.U[1]) ** 2) / eps
    return float(e1), float(e2)


def defect_gamma(state: WavePair, point: PhasePoint, chi, masses) -> tuple[float, float]:
    _check_sync(state, point)
    g, eps = state.grid, state.eps
    mom = g.integrate(g.x * chi(g.x) * np.abs(state.U) ** 2) / eps
    return float(masses[0] * point.x1 - mom[0]), float(masses[1] * point.x2 - mom[1])


# ---------------------------------------------------------------- H_eps geometry

def h_eps_weights(grid: Grid, eps: float) -> np.ndarray:
    """Fourier weights of ``eps^-1 ||f||^2 + eps ||f'||^2`` (Nyquist mode has no gradient)."""
    return 1.0 / eps + eps * np.abs(grid._ik) ** 2


def h_eps_norm_sq(U: np.ndarray, grid: Grid, eps: float) -> float:
    F = grid.fft(U)
    return float(2 * grid.L / grid.n**2 * np.sum(h_eps_weights(grid, eps) * np.abs(F) ** 2))


def h_eps_distance(Phi: WavePair, Q: WavePair) -> float:
    Phi.compatible(Q)
    return math.sqrt(h_eps_norm_sq(Phi.U - Q.U, Phi.grid, Phi.eps))


def modulated_family_member(R: GroundStatePair, x: float, xi, theta1: float, theta2: float, eps: float,
                            grid: Grid) -> WavePair:
    """``r_i((y - x)/eps) exp(i (y xi_i / eps + theta_i))`` sampled on ``grid``.

    ``xi`` is a scalar (common velocity) or a pair.
    """
    xi = (xi, xi) if np.ndim(xi) == 0 else tuple(xi)
    return modulated_pair(R, x, xi, (theta1, theta2), eps, grid)


@dataclass(frozen=True)
class OrbitFit:
    Gamma: float
    y: float
    theta1: float
    theta2: float


def _wrap(theta: float) -> float:
    return float(np.mod(theta, 2 * np.pi))


def orbit_distance(U: np.ndarray, targets: np.ndarray, grid: Grid, eps: float = 1.0) -> OrbitFit:
    """Minimize ``sum_i ||u_i - exp(i theta_i) t_i(. - y)||^2`` in the H_eps norm.

    For fixed y the optimal phases are the arguments of the inner products
    ``c_i(y) = <t_i(. - y), u_i>``; these are computed at every grid shift at
    once by FFT correlation, then the best shift is refined by golden-section
    search on the trigonometric interpolant of ``|c_1| + |c_2|``.
    """
    U = grid.check(np.asarray(U, dtype=complex))
    T = grid.check(np.asarray(targets, dtype=complex))
    w = h_eps_weights(grid, eps)
    Uh, Th = grid.fft(U), grid.fft(T)
    A = w * np.conj(Th) * Uh  # c_i(y) = dx/n * sum_k A_k e^{i k y}
    C = grid.dx * grid.ifft(A) * 1.0
    score = np.sum(np.abs(C), axis=0)
    m = int(np.argmax(score))
    y0 = (m if m <= grid.n // 2 else m - grid.n) * grid.dx
    half = grid.n // 2
    k = grid.k.copy()

    def coeffs(y):
        ph = np.exp(1j * k * y)
        ph[half] = np.cos(k[half] * y)
        return grid.dx / grid.n * (A @ ph)

    res = minimize_scalar(lambda y: -np.sum(np.abs(coeffs(y))), bracket=(y0 - grid.dx, y0, y0 + grid.dx),
                          method="golden", tol=1e-12)
    y = float(res.x) if -res.fun >= score[m] else y0
    c = coeffs(y)
    theta = [_wrap(np.angle(ci)) if abs(ci) > 0 else 0.0 for ci in c]
    shifted = np.stack([grid.shift(T[i], y) for i in range(2)])
    rot = np.exp(1j * np.array(theta))[:, None]
    gamma = h_eps_norm_sq(U - rot * shifted, grid, eps)
    return OrbitFit(gamma, y, theta[0], theta[1])


def gamma_phi(Phi, R: GroundStatePair, eps_scaling: float | None = None, mass_tol: float = 1e-6) -> OrbitFit:
    """Squared H^1 distance from ``Phi`` to the orbit of ``R`` under translations and phase rotations.

    With ``eps_scaling=None`` the field lives on ``R.grid``. With a value
    ``eps`` the comparison profiles are ``r_i(x / eps)`` on the field's grid
    and the H_eps norm replaces H^1 (equivalently, the unscaled problem after
    ``x -> eps x``).

    Raises:
        PreconditionError: total L^2 norm of ``Phi`` differs from that of ``R``.
    """
    if isinstance(Phi, WavePair):
        U, grid = Phi.U, Phi.grid
    else:
        U, grid = np.asarray(Phi, dtype=complex), R.grid
    eps = 1.0 if eps_scaling is None else float(eps_scaling)
    if eps_scaling is None:
        if grid != R.grid:
            raise UsageError("unscaled gamma_phi needs the field on the ground-state grid")
        targets = R.R
    else:
        targets = R.sample(grid.x[0] / eps, grid.dx / eps, grid.n)
    norm = math.sqrt(float(np.sum(grid.integrate(np.abs(U) ** 2))) / eps)
    ref = math.sqrt(R.m1 + R.m2)
    if abs(norm - ref) > mass_tol:
        raise PreconditionError(f"||Phi||_2 = {norm:.10g} is off the mass sphere ||R||_2 = {ref:.10g}")
    return orbit_distance(U, targets, grid, eps)


@dataclass(frozen=True)
class ModulationFit:
    theta1: float
    theta2: float
    Heps: float
    Gamma: float
    in_tube: bool


def best_fit_modulation(state: WavePair, R: GroundStatePair, point: PhasePoint,
                        gamma_bound: float = math.inf) -> ModulationFit:
    """Phases of the soliton family member closest to ``state`` at the particle's position and velocities.

    The member is centred at ``point.x1`` with velocities ``(xi1, xi2)``; only
    the two phases are optimized, in closed form. ``Gamma`` is the orbit
    distance of the field viewed from the soliton frame, with the velocity
    phase removed.
    """
    g, eps = state.grid, state.eps
    xi = np.array([point.xi1, point.xi2])[:, None]
    base = modulated_pair(R, point.x1, (point.xi1, point.xi2), (0.0, 0.0), eps, g, guard=math.inf).U
    w = h_eps_weights(g, eps)
    c = np.sum(w * np.conj(g.fft(base)) * g.fft(state.U), axis=-1)
    theta = [_wrap(np.angle(ci)) if abs(ci) > 0 else 0.0 for ci in c]
    Q = base * np.exp(1j * np.array(theta))[:, None]
    heps = math.sqrt(h_eps_norm_sq(state.U - Q, g, eps))
    u = state.U * np.exp(-1j * g.x * xi / eps)
    profiles = np.abs(base)
    fit = orbit_distance(u, profiles, g, eps)
    return ModulationFit(theta[0], theta[1], heps, fit.Gamma, fit.Gamma < gamma_bound)


# ---------------------------------------------------------------- dual-norm surrogate

@dataclass(frozen=True)
class TestDictionary:
    """Fixed family of C^2 test functions with sup |psi|, |psi'|, |psi''| <= 1.

    Version "v1": cosines ``cos(k x + phi) / (1 + k + k^2)`` for k in
    {1/4, 1/2, 1, 2, 4, 8} and phi in {0, pi/4, pi/2, 3pi/4}; bumps
    ``(1 - s^2)^3 / 6`` with ``s = x - c`` on |s| < 1 for 24 centres
    ``c = -2.875 + 0.25 j``.
    """

    __test__ = False  # not a pytest class

    freqs: tuple = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0)
    phases: tuple = (0.0, np.pi / 4, np.pi / 2, 3 * np.pi / 4)
    centers: tuple = tuple(-2.875 + 0.25 * j for j in range(24))
    bump_width: float = 1.0
    version: str = "v1"

    def __len__(self) -> int:
        return len(self.freqs) * len(self.phases) + len(self.centers)

    def _bump_scale(self) -> float:
        w = self.bump_width
        # sup of (1-s^2)^3, 6 s (1-s^2)^2 and 6|1-s^2||5s^2-1| on [-1, 1] are 1, 1.717..., 6
        return 1.0 / max(1.0, 6 / (5 * math.sqrt(5)) * 16 / 5 / w, 6.0 / w**2)

    def evaluate(self, x, derivative: int = 0) -> np.ndarray:
        """Values (or first/second derivatives) of all functions at ``x``, shape (len(self), len(x))."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        rows = []
        for k in self.freqs:
            for ph in self.phases:
                a = k * x + ph
                val = (np.cos(a), -k * np.sin(a), -k * k * np.cos(a))[derivative]
                rows.append(val / (1 + k + k * k))
        scale = self._bump_scale()
        w = self.bump_width
        for c in self.centers:
            s = (x - c) / w
            inside = np.abs(s) < 1
            q = np.where(inside, 1 - s**2, 0.0)
            if derivative == 0:
                val = q**3
            elif derivative == 1:
                val = -6 * s * q**2 / w
            else:
                val = 6 * q * (5 * s**2 - 1) / w**2 * inside
            rows.append(scale * val)
        return np.array(rows)

    def c2_bound(self, x) -> float:
        return float(max(np.max(np.abs(self.evaluate(x, d))) for d in range(3)))


def dual_norm_surrogate(density: np.ndarray, grid: Grid, target, D: TestDictionary,
                        basis: np.ndarray | None = None) -> float:
    """``max_j |int psi_j density dx - sum m psi_j(z)|`` over the dictionary.

    ``target`` is a pair ``(m, z)`` or a sequence of such pairs (a sum of
    point masses). ``basis`` may hold ``D.evaluate(grid.x)`` to avoid
    recomputation.
    """
    if D is None or len(D) == 0:
        raise UsageError("empty test dictionary")
    if np.ndim(target) == 1:
        target = [target]
    B = D.evaluate(grid.x) if basis is None else basis
    lhs = grid.dx * (B @ grid.check(density))
    rhs = sum(m * D.evaluate([z])[:, 0] for m, z in target)
    return float(np.max(np.abs(lhs - rhs)))


def lemma_pote_values(A: Potential, R: GroundStatePair, y: float, eps_ladder) -> np.ndarray:
    """``int [A(eps x + y) - A(y)] r_i^2 dx`` for each eps, shape (len(ladder), 2)."""
    x = R.grid.x
    out = []
    for eps in eps_ladder:
        d = A.value(eps * x + y) - float(A.value(y))
        out.append([R.grid.integrate(d * R.r1**2), R.grid.integrate(d * R.r2**2)])
    return np.array(out)


def lemma_pote_check(A: Potential, R: GroundStatePair, y: float, eps_ladder, min_slope: float = 1.8,
                     floor: float = 1e-14) -> float:
    """Log-log slope of ``max_i |int [A(eps x + y) - A(y)] r_i^2|`` against eps.

    Returns ``inf`` when every value is below ``floor`` (identically zero
    integrand).

    Raises:
        OrderCheckFailed: slope below ``min_slope``.
    """
    vals = np.max(np.abs(lemma_pote_values(A, R, y, eps_ladder)), axis=1)
    if np.all(vals <= floor):
        return math.inf
    slope = fit_order(zip(eps_ladder, vals)).slope
    if slope < min_slope:
        raise OrderCheckFailed(f"potential expansion slope {slope:.3f} < {min_slope}")
    return slope


# ---------------------------------------------------------------- stability probe

@dataclass
class StabilityReport:
    scales: list[float]
    samples: dict = field(default_factory=dict)  # scale -> list of (Gamma, dE)
    max_ratio: dict = field(default_factory=dict)
    min_dE: float = math.inf
    not_minimum: bool = False
    stable: bool = True

    def as_dict(self) -> dict:
        return {
            "scales": self.scales,
            "max_ratio": {str(k): v for k, v in self.max_ratio.items()},
            "min_dE": self.min_dE,
            "not_minimum": self.not_minimum,
            "stable": self.stable,
        }


def modulational_stability_probe(R: GroundStatePair, K: int = 50, scale: float = 0.05, halvings: int = 2,
                                 gamma_bound: float = 1.0, seed: int = 0, factor: float = 3.0,
                                 dE_floor: float = 1e-10) -> StabilityReport:
    """Sample mass-sphere perturbations of ``R`` and record (Gamma, E(Phi) - E(R)).

    The same K perturbation directions are used at ``scale``, ``scale/2``, ...
    Samples with Gamma above ``gamma_bound`` or with both quantities at zero
    are left out of the ratio statistics. ``stable`` means the largest and
    smallest per-scale maximum ratios are within ``factor`` of each other.
    """
    scales = [scale / 2**j for j in range(halvings + 1)]
    report = StabilityReport(scales)
    if K == 0:
        return report
    g = R.grid
    rng = np.random.default_rng(seed)
    width = max(R.width, 1.0)
    directions = []
    for _ in range(K):
        eta = np.stack([random_localized_field(g, rng, width), random_localized_field(g, rng, width)])
        directions.append(eta / math.sqrt(float(np.sum(g.integrate(np.abs(eta) ** 2 + np.abs(g.gradient(eta)) ** 2)))))
    total = R.m1 + R.m2
    for s in scales:
        pts, ratios = [], []
        for eta in directions:
            Phi = project_to_sphere(R.R + s * eta, total, g)
            dE = energy(Phi, R.p, R.beta, g) - R.energy
            G = gamma_phi(Phi, R).Gamma
            pts.append((G, dE))
            report.min_dE = min(report.min_dE, dE)
            if G < gamma_bound and not (G == 0 and abs(dE) <= dE_floor) and dE > 0:
                ratios.append(G / dE)
        report.samples[s] = pts
        report.max_ratio[s] = max(ratios) if ratios else math.nan
    report.not_minimum = report.min_dE < -dE_floor
    vals = [v for v in report.max_ratio.values() if np.isfinite(v)]
    report.stable = bool(vals) and max(vals) <= factor * min(vals) and not report.not_minimum
    return report


# ---------------------------------------------------------------- records

@dataclass
class DiagnosticsRecord:
    t: float
    N1: float
    N2: float
    E: float
    E1: float
    E2: float
    center1: float
    center2: float
    Ptot: float
    alpha1: float
    alpha2: float
    eta1: float
    eta2: float
    gamma1: float
    gamma2: float
    Gamma: float
    Heps: float
    dualM1: float
    dualM2: float
    dualP: float
    theta1: float
    theta2: float

    def row(self) -> list[float]:
        return [getattr(self, c) for c in CSV_COLUMNS]

    def as_dict(self) -> dict:
        return asdict(self)

    def all_finite(self) -> bool:
        return all(math.isfinite(getattr(self, f.name)) for f in fields(self))


class DiagnosticsObserver:
    """Callable ``(state, point) -> DiagnosticsRecord`` with grid-dependent data precomputed."""

    def __init__(self, R: GroundStatePair, V: Potential, W: Potential, grid: Grid, eps: float, chi: Cutoff,
                 dictionary: TestDictionary | None = None, gamma_bound: float = math.inf):
        self.R, self.V, self.W, self.grid, self.eps, self.chi = R, V, W, grid, eps, chi
        self.D = dictionary or TestDictionary()
        self.basis = self.D.evaluate(grid.x)
        self.gamma_bound = gamma_bound
        self.masses = (R.m1, R.m2)

    def __call__(self, state: WavePair, point: PhasePoint) -> DiagnosticsRecord:
        g, eps, m = self.grid, self.eps, self.masses
        N = state.masses()
        E1, E2, E = energy_components(state, self.V, self.W)
        cen = mass_centers(state, m)
        p = np.stack([momentum_density(state.U[i], eps, g) for i in range(2)])
        P = p.sum(axis=0)
        a1, a2 = defect_alpha(state, point, m)
        e1, e2 = defect_eta(state, point, self.V, self.W, self.chi, m)
        c1, c2 = defect_gamma(state, point, self.chi, m)
        fit = best_fit_modulation(state, self.R, point, self.gamma_bound)
        dens = np.abs(state.U) ** 2 / eps
        dm1 = dual_norm_surrogate(dens[0], g, (m[0], point.x1), self.D, self.basis)
        dm2 = dual_norm_surrogate(dens[1], g, (m[1], point.x2), self.D, self.basis)
        dP = dual_norm_surrogate(P, g, [(m[0] * point.xi1, point.x1), (m[1] * point.xi2, point.x2)], self.D,
                                 self.basis)
        return DiagnosticsRecord(
            state.t, float(N[0]), float(N[1]), E, E1, E2, float(cen[0]), float(cen[1]), float(g.integrate(P)),
            a1, a2, e1, e2, c1, c2, fit.Gamma, fit.Heps, dm1, dm2, dP, fit.theta1, fit.theta2,
        )
