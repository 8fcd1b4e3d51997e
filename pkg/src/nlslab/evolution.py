"""Strang-split spectral time stepping for the coupled semiclassical NLS system.

In one space dimension the state (phi1, phi2) solves

    i eps d_t phi_1 = -eps^2/2 phi_1'' + (V - g_1) phi_1
    i eps d_t phi_2 = -eps^2/2 phi_2'' + (W - g_2) phi_2

with g_1 = |phi_1|^{2p} + beta |phi_2|^{p+1} |phi_1|^{p-1} and g_2 symmetric.
The pointwise part keeps both moduli fixed, so it is integrated exactly by a
phase rotation; the kinetic part is exact in Fourier space.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, GuardTripped, UsageError
from .grid import Grid, next_pow2
from .ground_state import GroundStatePair, nonlinear_rate
from .hamiltonian import PhasePoint, verlet_step
from .potentials import Potential

log = logging.getLogger(__name__)

OUTER_FRACTION = 0.1
DEFAULT_GUARD = 1e-8


@dataclass
class WavePair:
    """Two complex fields on a common grid; ``U`` has shape (2, n)."""

    U: np.ndarray
    grid: Grid
    eps: float
    p: float
    beta: float
    t: float = 0.0

    def __post_init__(self):
        U = np.asarray(self.U, dtype=complex)
        if U.ndim != 2 or U.shape[0] != 2:
            raise UsageError(f"WavePair needs a (2, n) array, got shape {U.shape}")
        self.grid.check(U)
        if not self.eps > 0:
            raise ConfigurationError(f"eps must be positive, got {self.eps}")
        self.U = U

    @classmethod
    def from_components(cls, phi1, phi2, grid, eps, p, beta, t=0.0) -> "WavePair":
        return cls(np.stack([np.asarray(phi1, complex), np.asarray(phi2, complex)]), grid, eps, p, beta, t)

    @property
    def phi1(self) -> np.ndarray:
        return self.U[0]

    @property
    def phi2(self) -> np.ndarray:
        return self.U[1]

    def masses(self) -> np.ndarray:
        """Rescaled masses ``eps^-1 ||phi_i||^2``."""
        return self.grid.integrate(np.abs(self.U) ** 2) / self.eps

    def copy(self) -> "WavePair":
        return WavePair(self.U.copy(), self.grid, self.eps, self.p, self.beta, self.t)

    def with_phase(self, c1: float, c2: float | None = None) -> "WavePair":
        c2 = c1 if c2 is None else c2
        rot = np.exp(1j * np.array([c1, c2]))[:, None]
        return WavePair(self.U * rot, self.grid, self.eps, self.p, self.beta, self.t)

    def compatible(self, other: "WavePair") -> None:
        if self.grid != other.grid:
            raise UsageError("wave pairs live on different grids")
        if self.eps != other.eps:
            raise UsageError(f"eps mismatch: {self.eps} vs {other.eps}")


def outer_mask(grid: Grid, fraction: float = OUTER_FRACTION) -> np.ndarray:
    """Nodes in the outer ``fraction`` of the domain length (both ends together)."""
    return np.abs(grid.x) > (1.0 - fraction) * grid.L


def outer_mass_fraction(state: WavePair) -> float:
    dens = np.abs(state.U) ** 2
    total = float(np.sum(dens))
    if total == 0:
        return 0.0
    return float(np.sum(dens[:, outer_mask(state.grid)]) / total)


def grid_for_eps(eps: float, L: float = 20.0, n_ref: int = 2048) -> Grid:
    """Grid on [-L, L) with at least ``n_ref / eps`` nodes (fixed points per soliton)."""
    if eps <= 0:
        raise ConfigurationError(f"eps must be positive, got {eps}")
    return Grid(L, next_pow2(n_ref / eps * (1 - 1e-12)))


def default_dt(eps: float, dx: float) -> float:
    return min(eps / 10.0, eps * dx)


def initial_data(R: GroundStatePair, x0: float, xi1: float, xi2: float, eps: float, grid: Grid,
                 guard: float = DEFAULT_GUARD) -> WavePair:
    """Sample ``phi_i(x) = r_i((x - x0)/eps) exp(i x xi_i / eps)`` on ``grid``.

    Raises:
        ConfigurationError: the profile carries more than ``guard`` of its mass
            in the outer tenth of the domain.
    """
    return modulated_pair(R, x0, (xi1, xi2), (0.0, 0.0), eps, grid, guard)


def modulated_pair(R: GroundStatePair, x0: float, xi, theta, eps: float, grid: Grid,
                   guard: float = DEFAULT_GUARD) -> WavePair:
    if eps <= 0:
        raise ConfigurationError(f"eps must be positive, got {eps}")
    prof = R.sample((grid.x[0] - x0) / eps, grid.dx / eps, grid.n)
    dens = prof**2
    total = float(np.sum(dens))
    if total > 0 and float(np.sum(dens[:, outer_mask(grid)])) > guard * total:
        raise ConfigurationError(
            f"soliton at x={x0} with eps={eps} reaches the outer {OUTER_FRACTION:.0%} of [-{grid.L}, {grid.L})"
        )
    xi = np.asarray(xi, dtype=float)[:, None]
    theta = np.asarray(theta, dtype=float)[:, None]
    U = prof * np.exp(1j * (grid.x * xi / eps + theta))
    return WavePair(U, grid, eps, R.p, R.beta)


@dataclass(frozen=True)
class EvolutionConfig:
    """Time-stepping parameters.

    ``dt`` is shrunk if needed so that ``T`` is an integer number of steps.
    """

    eps: float
    dt: float
    T: float
    sample_stride: int = 1
    boundary_mass_guard: float = DEFAULT_GUARD

    def __post_init__(self):
        for name in ("eps", "dt"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigurationError(f"{name} must be positive, got {v}")
        if not (math.isfinite(self.T) and self.T >= 0):
            raise ConfigurationError(f"T must be nonnegative, got {self.T}")
        if self.dt > self.eps * (1 + 1e-12):
            raise ConfigurationError(f"dt={self.dt} exceeds eps={self.eps}")
        if int(self.sample_stride) != self.sample_stride or self.sample_stride < 1:
            raise ConfigurationError("sample_stride must be a positive integer")
        if self.T > 0:
            steps = max(1, math.ceil(self.T / self.dt - 1e-9))
            object.__setattr__(self, "dt", self.T / steps)

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))


class SplitStepper:
    """Cached Strang integrator for fixed grid, potentials, eps and dt."""

    def __init__(self, grid: Grid, V: Potential, W: Potential, eps: float, p: float, beta: float, dt: float):
        self.grid, self.eps, self.p, self.beta, self.dt = grid, eps, p, beta, dt
        self.pot = np.stack([V.value(grid.x), W.value(grid.x)])
        self.kinetic_factor = np.exp(-0.5j * dt * eps * grid.k**2)

    def rates(self, U: np.ndarray) -> np.ndarray:
        a2 = U.real**2 + U.imag**2
        if self.p == 1:
            return a2 + self.beta * a2[::-1]
        a = np.sqrt(a2)
        return np.stack([nonlinear_rate(a[0], a[1], self.p, self.beta), nonlinear_rate(a[1], a[0], self.p, self.beta)])

    def nonlinear(self, U: np.ndarray, tau: float) -> None:
        phase = (-tau / self.eps) * (self.pot - self.rates(U))
        U *= np.exp(1j * phase)

    def kinetic(self, U: np.ndarray) -> None:
        U[:] = self.grid.ifft(self.kinetic_factor * self.grid.fft(U))

    def advance(self, U: np.ndarray, steps: int) -> None:
        """``steps`` Strang steps in place, fusing adjacent pointwise half steps."""
        if steps <= 0:
            return
        self.nonlinear(U, 0.5 * self.dt)
        for s in range(steps):
            self.kinetic(U)
            self.nonlinear(U, self.dt if s < steps - 1 else 0.5 * self.dt)


def strang_step(state: WavePair, V: Potential, W: Potential, dt: float) -> WavePair:
    """One Strang step: pointwise half step, kinetic step, pointwise half step."""
    if not dt > 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    stepper = SplitStepper(state.grid, V, W, state.eps, state.p, state.beta, dt)
    U = state.U.copy()
    stepper.advance(U, 1)
    return WavePair(U, state.grid, state.eps, state.p, state.beta, state.t + dt)


Observer = Callable[[WavePair, PhasePoint | None], object]


@dataclass
class EvolutionResult:
    """Samples collected by each observer, plus the final field and particle state."""

    times: list[float]
    series: list[list]
    final: WavePair
    point: PhasePoint | None = None
    points: list[PhasePoint] = field(default_factory=list)


def evolve(state0: WavePair, V: Potential, W: Potential, cfg: EvolutionConfig,
           observers: Sequence[Observer] = (), point0: PhasePoint | None = None) -> EvolutionResult:
    """Integrate from ``state0.t`` to ``state0.t + cfg.T``.

    The particle system is advanced with the same step as the field, and each
    observer is called with ``(state, point)`` at the start and every
    ``sample_stride`` steps (always including the final time).

    Raises:
        GuardTripped: non-finite values or more than ``boundary_mass_guard``
            of the mass in the outer tenth of the domain. ``last_good`` holds
            the most recent state that passed the checks.
    """
    if state0.eps != cfg.eps:
        raise UsageError(f"state eps {state0.eps} differs from config eps {cfg.eps}")
    stepper = SplitStepper(state0.grid, V, W, cfg.eps, state0.p, state0.beta, cfg.dt)
    U = state0.U.copy()
    t0 = state0.t
    point = point0
    times, points = [], []
    series: list[list] = [[] for _ in observers]
    mask = outer_mask(state0.grid)
    last_good = state0.copy()

    def sample(step: int):
        nonlocal last_good
        state = WavePair(U.copy(), state0.grid, cfg.eps, state0.p, state0.beta, t0 + step * cfg.dt)
        dens = np.abs(U) ** 2
        total = float(np.sum(dens))
        if not math.isfinite(total):
            raise GuardTripped(f"non-finite field at t={state.t:.6g}", last_good)
        if float(np.sum(dens[:, mask])) > cfg.boundary_mass_guard * total:
            raise GuardTripped(f"boundary mass guard tripped at t={state.t:.6g}", last_good)
        last_good = state
        times.append(state.t)
        if point is not None:
            points.append(point)
        for obs, out in zip(observers, series):
            out.append(obs(state, point))

    sample(0)
    step = 0
    total_steps = cfg.steps
    while step < total_steps:
        chunk = min(cfg.sample_stride, total_steps - step)
        stepper.advance(U, chunk)
        if point is not None:
            for _ in range(chunk):
                point = verlet_step(point, V, W, cfg.dt)
            point = PhasePoint(point.x1, point.xi1, point.x2, point.xi2, t0 + (step + chunk) * cfg.dt)
        step += chunk
        sample(step)
    return EvolutionResult(times, series, last_good, point, points)


def save_snapshot(state: WavePair, path, point: PhasePoint | None = None) -> tuple[Path, Path]:
    """Write ``x, Re phi1, Im phi1, Re phi2, Im phi2`` as CSV plus a JSON sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    U = state.U
    table = np.column_stack([state.grid.x, U[0].real, U[0].imag, U[1].real, U[1].imag])
    np.savetxt(path, table, delimiter=",", fmt="%.17g", header="x,re_phi1,im_phi1,re_phi2,im_phi2", comments="")
    meta = {"t": state.t, "eps": state.eps, "p": state.p, "beta": state.beta, "L": state.grid.L, "n": state.grid.n}
    if point is not None:
        meta["phase_point"] = point.as_dict()
    side = path.with_suffix(".json")
    side.write_text(json.dumps(meta, indent=2))
    return path, side


def load_snapshot(path) -> tuple[WavePair, PhasePoint | None]:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    table = np.loadtxt(path, delimiter=",", skiprows=1)
    grid = Grid(meta["L"], meta["n"])
    U = np.stack([table[:, 1] + 1j * table[:, 2], table[:, 3] + 1j * table[:, 4]])
    point = PhasePoint(**meta["phase_point"]) if "phase_point" in meta else None
    return WavePair(U, grid, meta["eps"], meta["p"], meta["beta"], meta["t"]), point
