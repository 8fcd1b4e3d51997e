"""Real even ground states of the coupled elliptic system and their functionals.

The profiles solve, for i = 1, 2 (j the other index),

    -1/2 r_i'' + r_i = r_i (|r_i|^{2p} + beta |r_j|^{p+1} |r_i|^{p-1})

and are computed by Newton's method on the strong form, restricted to even
functions. Linear solves use GMRES preconditioned with the exact inverse of
``-1/2 d^2/dx^2 + 1`` (diagonal in Fourier space).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import ConfigurationError, ConvergenceError, ProjectionFailure, UsageError
from .grid import Grid

log = logging.getLogger(__name__)

_DELTA = 1e-14


def f_beta(u1, u2, p: float, beta: float):
    """Coupled nonlinearity density F_beta(u1, u2)."""
    a1 = np.abs(u1)
    a2 = np.abs(u2)
    return (a1 ** (2 * p + 2) + a2 ** (2 * p + 2) + 2 * beta * a1 ** (p + 1) * a2 ** (p + 1)) / (p + 1)


def _pow_reg(a, e):
    """|a|**e with |a| replaced by sqrt(a**2 + delta**2) where |a| < delta and e < 0."""
    a = np.abs(a)
    if e >= 0:
        return a**e
    safe = np.where(a < _DELTA, np.sqrt(a**2 + _DELTA**2), a)
    return safe**e


def nonlinear_rate(a1, a2, p: float, beta: float):
    """Pointwise ``g_1 = |u1|^{2p} + beta |u2|^{p+1} |u1|^{p-1}`` from the moduli."""
    return a1 ** (2 * p) + beta * a2 ** (p + 1) * _pow_reg(a1, p - 1)


def energy(U, p: float, beta: float, grid: Grid) -> float:
    """Functional 1/2 ||grad U||^2 - int F_beta(U) on a pair of (real or complex) fields."""
    u1, u2 = U
    if len(u1) != len(u2):
        raise UsageError("components of U live on different grids")
    u1 = grid.check(u1)
    u2 = grid.check(u2)
    kin = grid.integrate(np.abs(grid.gradient(u1)) ** 2 + np.abs(grid.gradient(u2)) ** 2)
    return float(0.5 * kin - grid.integrate(f_beta(u1, u2, p, beta)))


def h1_norm_sq(f, grid: Grid) -> float:
    return float(grid.integrate(np.abs(f) ** 2 + np.abs(grid.gradient(f)) ** 2))


@dataclass(frozen=True, eq=False)
class GroundStatePair:
    """Even nonnegative profiles (r1, r2) on a reference grid with cached invariants."""

    r1: np.ndarray
    r2: np.ndarray
    p: float
    beta: float
    grid: Grid
    m1: float = field(default=np.nan)
    m2: float = field(default=np.nan)
    energy: float = field(default=np.nan)
    residual_norm: float = field(default=np.nan)
    minimality_gap: float = field(default=np.nan)

    def __post_init__(self):
        r1 = np.array(self.grid.check(self.r1), dtype=float)
        r2 = np.array(self.grid.check(self.r2), dtype=float)
        if not (np.all(np.isfinite(r1)) and np.all(np.isfinite(r2))):
            raise ConfigurationError("ground state profiles contain non-finite values")
        r1.flags.writeable = False
        r2.flags.writeable = False
        object.__setattr__(self, "r1", r1)
        object.__setattr__(self, "r2", r2)
        object.__setattr__(self, "m1", float(self.grid.integrate(r1**2)))
        object.__setattr__(self, "m2", float(self.grid.integrate(r2**2)))
        object.__setattr__(self, "energy", energy((r1, r2), self.p, self.beta, self.grid))
        res = elliptic_residual(self)
        object.__setattr__(self, "residual_norm", float(max(np.max(np.abs(res[0])), np.max(np.abs(res[1])))))

    @property
    def R(self) -> np.ndarray:
        return np.stack([self.r1, self.r2])

    @property
    def masses(self) -> tuple[float, float]:
        return self.m1, self.m2

    @property
    def is_trivial(self) -> bool:
        return self.m1 + self.m2 < 1e-20

    def second_moment(self, i: int) -> float:
        r = self.r1 if i == 1 else self.r2
        return float(self.grid.integrate(self.grid.x**2 * r**2))

    @property
    def width(self) -> float:
        """RMS width of the total density."""
        tot = self.m1 + self.m2
        return float(np.sqrt((self.second_moment(1) + self.second_moment(2)) / tot))

    def sample(self, y0: float, h: float, m: int) -> np.ndarray:
        """Profiles at the uniform points ``y0 + h*j``, j < m, shape (2, m); zero for |y| > L."""
        y = y0 + h * np.arange(m)
        out = np.zeros((2, m))
        inside = np.nonzero(np.abs(y) <= self.grid.L)[0]
        if inside.size:
            lo, hi = inside[0], inside[-1] + 1
            out[:, lo:hi] = self.grid.sample_uniform(self.R, y[lo], h, hi - lo)
        return out

    def at(self, y) -> np.ndarray:
        """Profiles at arbitrary points, shape (2, len(y)); zero for |y| >= L."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        out = np.zeros((2, y.size))
        inside = np.abs(y) < self.grid.L
        if np.any(inside):
            out[:, inside] = self.grid.interpolate(self.R, y[inside])
        return out

    def metadata(self) -> dict:
        return {
            "p": self.p,
            "beta": self.beta,
            "L": self.grid.L,
            "n": self.grid.n,
            "m1": self.m1,
            "m2": self.m2,
            "energy": self.energy,
            "residual_norm": self.residual_norm,
        }


def elliptic_residual(R) -> tuple[np.ndarray, np.ndarray]:
    """Componentwise ``-1/2 r'' + r - r g(r)`` for a GroundStatePair."""
    g = R.grid
    r1, r2 = np.asarray(R.r1, float), np.asarray(R.r2, float)
    a1, a2 = np.abs(r1), np.abs(r2)
    res1 = -0.5 * g.laplacian(r1) + r1 - r1 * nonlinear_rate(a1, a2, R.p, R.beta)
    res2 = -0.5 * g.laplacian(r2) + r2 - r2 * nonlinear_rate(a2, a1, R.p, R.beta)
    return res1, res2


def scalar_profile(x, p: float, amplitude_scale: float = 1.0) -> np.ndarray:
    """Exact solution of ``-r''/2 + r = r^{2p+1}``: (p+1)^{1/2p} sech^{1/p}(sqrt(2) p x)."""
    return amplitude_scale * (p + 1) ** (1 / (2 * p)) / np.cosh(np.sqrt(2) * p * np.asarray(x)) ** (1 / p)


def symmetric_ansatz(grid: Grid, p: float, beta: float) -> tuple[np.ndarray, np.ndarray]:
    r = scalar_profile(grid.x, p, (1 + beta) ** (-1 / (2 * p)))
    return r, r.copy()


def semitrivial_ansatz(grid: Grid, p: float, beta: float) -> tuple[np.ndarray, np.ndarray]:
    return scalar_profile(grid.x, p), np.zeros(grid.n)


def _symmetrize(f: np.ndarray) -> np.ndarray:
    # x -> -x maps node m to (n - m) mod n on [-L, L).
    return 0.5 * (f + np.roll(f[::-1], 1))


def _residual_vec(r1, r2, p, beta, grid):
    a1, a2 = np.abs(r1), np.abs(r2)
    res1 = -0.5 * grid.laplacian(r1) + r1 - r1 * nonlinear_rate(a1, a2, p, beta)
    res2 = -0.5 * grid.laplacian(r2) + r2 - r2 * nonlinear_rate(a2, a1, p, beta)
    return res1, res2


def _jacobian_blocks(r1, r2, p, beta):
    a1, a2 = np.abs(r1), np.abs(r2)
    s1, s2 = np.sign(r1), np.sign(r2)
    d11 = (2 * p + 1) * a1 ** (2 * p) + beta * p * a2 ** (p + 1) * _pow_reg(a1, p - 1)
    d22 = (2 * p + 1) * a2 ** (2 * p) + beta * p * a1 ** (p + 1) * _pow_reg(a2, p - 1)
    d12 = beta * (p + 1) * (s2 * a2**p) * (s1 * a1**p)
    return d11, d22, d12


def _newton_step(r1, r2, res1, res2, p, beta, grid, gmres_tol):
    n = grid.n
    d11, d22, d12 = _jacobian_blocks(r1, r2, p, beta)
    sym = 0.5 * grid.k**2 + 1.0

    def matvec(v):
        v1, v2 = v[:n], v[n:]
        out1 = -0.5 * grid.laplacian(v1) + v1 - d11 * v1 - d12 * v2
        out2 = -0.5 * grid.laplacian(v2) + v2 - d22 * v2 - d12 * v1
        return np.concatenate([out1, out2])

    def precond(v):
        return np.concatenate([grid.ifft(grid.fft(v[:n]) / sym).real, grid.ifft(grid.fft(v[n:]) / sym).real])

    A = LinearOperator((2 * n, 2 * n), matvec=matvec, dtype=float)
    M = LinearOperator((2 * n, 2 * n), matvec=precond, dtype=float)
    rhs = -np.concatenate([res1, res2])
    delta, info = gmres(A, rhs, M=M, rtol=gmres_tol, atol=0.0, restart=200, maxiter=20)
    if info < 0:
        raise ConvergenceError(f"GMRES breakdown (info={info})")
    return delta[:n], delta[n:]


def solve_ground_state(
    p: float,
    beta: float,
    grid: Grid,
    init: str | tuple = "symmetric",
    tol: float = 1e-10,
    max_iter: int = 50,
    clip_tol: float = 1e-6,
    verify: bool = True,
    n_perturbations: int = 20,
    seed: int = 0,
) -> GroundStatePair:
    """Newton iteration on the strong-form elliptic system.

    Args:
        p: Nonlinearity exponent, 0 < p < 2 in one dimension.
        beta: Coupling constant, nonnegative.
        grid: Reference grid.
        init: ``"symmetric"``, ``"semitrivial"`` or an explicit ``(r1, r2)`` pair.
        tol: Required sup norm of the residual.
        verify: Run the tangent-perturbation minimality check and record the
            smallest energy change in ``minimality_gap``.

    Raises:
        ConfigurationError: parameters outside the admissible range.
        ConvergenceError: residual not below ``tol`` after ``max_iter`` steps.
        ProjectionFailure: clipping a negative lobe moved an iterate by more than ``clip_tol``.
    """
    if not (0 < p < 2):
        raise ConfigurationError(f"p must lie in (0, 2) for N=1, got {p}")
    if beta < 0:
        raise ConfigurationError(f"beta must be nonnegative, got {beta}")
    if tol <= 0:
        raise ConfigurationError("tol must be positive")
    if isinstance(init, str):
        if init == "symmetric":
            r1, r2 = symmetric_ansatz(grid, p, beta)
        elif init == "semitrivial":
            r1, r2 = semitrivial_ansatz(grid, p, beta)
        else:
            raise ConfigurationError(f"unknown ansatz {init!r}")
    else:
        r1, r2 = (np.array(grid.check(c), dtype=float) for c in init)

    history = []
    for it in range(max_iter + 1):
        r1, r2 = _symmetrize(r1), _symmetrize(r2)
        res1, res2 = _residual_vec(r1, r2, p, beta, grid)
        err = float(max(np.max(np.abs(res1)), np.max(np.abs(res2))))
        history.append(err)
        log.debug("newton iteration %d: residual %.3e", it, err)
        # At least one step: the sampled ansatz is not exactly periodic.
        if err < tol and (it > 0 or err < 1e-3 * tol):
            break
        if it == max_iter or not np.isfinite(err):
            raise ConvergenceError(f"Newton did not reach residual {tol:g} (last {err:.3e})", history)
        d1, d2 = _newton_step(r1, r2, res1, res2, p, beta, grid, gmres_tol=min(1e-3, 1e-2 * tol / max(err, tol)))
        r1, r2 = r1 + _symmetrize(d1), r2 + _symmetrize(d2)
        c1, c2 = np.maximum(r1, 0.0), np.maximum(r2, 0.0)
        moved = max(np.max(c1 - r1), np.max(c2 - r2))
        if moved > clip_tol:
            raise ProjectionFailure(f"negative lobe of depth {moved:.3e} at iteration {it}")
        r1, r2 = c1, c2

    R = GroundStatePair(r1, r2, p, beta, grid)
    if R.is_trivial:
        raise ConvergenceError("Newton converged to the trivial solution", history)
    if verify:
        gap = minimality_gap(R, n_perturbations, seed=seed)
        R = replace_gap(R, gap)
        if gap < -1e-10:
            log.warning("ground state (p=%g, beta=%g) is not a constrained local minimum: energy gap %.3e", p, beta, gap)
    return R


def replace_gap(R: GroundStatePair, gap: float) -> GroundStatePair:
    out = replace(R)
    object.__setattr__(out, "minimality_gap", float(gap))
    return out


def random_localized_field(grid: Grid, rng: np.random.Generator, width: float, n_bumps: int = 6) -> np.ndarray:
    """Smooth complex field built from random Gaussians inside ``|x| < 2 width``."""
    x = grid.x
    out = np.zeros(grid.n, dtype=complex)
    for _ in range(n_bumps):
        c = rng.uniform(-2 * width, 2 * width)
        w = width * rng.uniform(0.3, 1.0)
        amp = rng.normal() + 1j * rng.normal()
        out += amp * np.exp(-((x - c) ** 2) / (2 * w**2))
    return out


def project_to_sphere(Phi: np.ndarray, target_mass: float, grid: Grid) -> np.ndarray:
    total = float(grid.integrate(np.sum(np.abs(Phi) ** 2, axis=0)))
    return Phi * np.sqrt(target_mass / total)


def minimality_gap(R: GroundStatePair, count: int = 20, scale: float = 1e-3, seed: int = 0) -> float:
    """Smallest 𝓔(Φ) - 𝓔(R) over random tangent perturbations pushed back to the mass sphere."""
    if count <= 0:
        return np.nan
    rng = np.random.default_rng(seed)
    g = R.grid
    Rv = R.R.astype(complex)
    mass = R.m1 + R.m2
    gaps = []
    for _ in range(count):
        h = np.stack([random_localized_field(g, rng, 2 * R.width) for _ in range(2)])
        along = g.integrate(np.sum(np.conj(Rv) * h, axis=0)).real / mass
        h = h - along * Rv
        h /= np.sqrt(g.integrate(np.sum(np.abs(h) ** 2, axis=0)) / mass)
        Phi = project_to_sphere(Rv + scale * h, mass, g)
        gaps.append(energy(Phi, R.p, R.beta, g) - R.energy)
    return float(min(gaps))


def compare_branches(p: float, beta: float, grid: Grid, tol: float = 1e-10) -> dict:
    """Energies and masses of the symmetric and semitrivial branches.

    Selection between them is left to the caller; when beta <= 1 the
    semitrivial state may have lower energy at equal total mass.
    """
    out = {}
    for name in ("symmetric", "semitrivial"):
        try:
            R = solve_ground_state(p, beta, grid, init=name, tol=tol, verify=False)
        except (ConvergenceError, ProjectionFailure) as exc:
            out[name] = {"error": str(exc)}
            continue
        out[name] = {"energy": R.energy, "m1": R.m1, "m2": R.m2, "residual_norm": R.residual_norm}
    return out


def save_ground_state(R: GroundStatePair, path) -> tuple[Path, Path]:
    """Write ``x, r1, r2`` CSV plus a JSON sidecar with the cached invariants."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.column_stack([R.grid.x, R.r1, R.r2])
    np.savetxt(path, data, delimiter=",", header="x,r1,r2", comments="", fmt="%.17g")
    side = path.with_suffix(".json")
    side.write_text(json.dumps(R.metadata(), indent=2))
    return path, side


def load_ground_state(path) -> GroundStatePair:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    grid = Grid(meta["L"], meta["n"])
    if not np.allclose(data[:, 0], grid.x, rtol=0, atol=1e-12):
        raise ConfigurationError(f"{path}: x column does not match the grid in the sidecar")
    return GroundStatePair(data[:, 1], data[:, 2], meta["p"], meta["beta"], grid)
