"""Velocity-Verlet integration of the driving point-particle systems.

Each component i moves in its own potential, x_i'' = -grad P_i(x_i), with both
particles starting at the same position. For the 2D anisotropic oscillator
used in phase portraits the Verlet iterates are evaluated in closed form,
which reproduces step-by-step iteration to roundoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ConfigurationError
from .potentials import Potential


@dataclass(frozen=True)
class PhasePoint:
    x1: float
    xi1: float
    x2: float
    xi2: float
    t: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x1, self.xi1, self.x2, self.xi2, self.t)):
            raise ConfigurationError(f"non-finite phase point {self}")

    @classmethod
    def start(cls, x0: float, xi1: float, xi2: float | None = None) -> "PhasePoint":
        return cls(x0, xi1, x0, xi1 if xi2 is None else xi2, 0.0)

    def as_dict(self) -> dict:
        return {"x1": self.x1, "xi1": self.xi1, "x2": self.x2, "xi2": self.xi2, "t": self.t}


def _verlet(x, v, force, dt):
    v_half = v + 0.5 * dt * force(x)
    x_new = x + dt * v_half
    return x_new, v_half + 0.5 * dt * force(x_new)


def verlet_step(s: PhasePoint, V: Potential, W: Potential, dt: float) -> PhasePoint:
    """One velocity-Verlet step for both particles.

    ``dt`` may be negative to step backwards in time.
    """
    if dt == 0 or not math.isfinite(dt):
        raise ConfigurationError(f"dt must be finite and nonzero, got {dt}")
    x1, xi1 = _verlet(s.x1, s.xi1, lambda x: -float(V.grad(x)), dt)
    if V == W and s.x1 == s.x2 and s.xi1 == s.xi2:
        x2, xi2 = x1, xi1
    else:
        x2, xi2 = _verlet(s.x2, s.xi2, lambda x: -float(W.grad(x)), dt)
    return PhasePoint(x1, xi1, x2, xi2, s.t + dt)


def trajectory(s0: PhasePoint, V: Potential, W: Potential, dt: float, steps: int) -> list[PhasePoint]:
    out = [s0]
    s = s0
    for _ in range(steps):
        s = verlet_step(s, V, W, dt)
        out.append(s)
    return out


def hamiltonian_energy(s: PhasePoint, V: Potential, W: Potential) -> tuple[float, float]:
    return 0.5 * s.xi1**2 + float(V.value(s.x1)), 0.5 * s.xi2**2 + float(W.value(s.x2))


def verlet_jacobian_harmonic(omega: float, dt: float) -> np.ndarray:
    """Matrix of one Verlet step for x'' = -omega**2 x acting on (x, v)."""
    a = 1.0 - 0.5 * (omega * dt) ** 2
    return np.array([[a, dt], [-0.5 * dt * omega**2 * (1.0 + a), a]])


def harmonic_verlet_iterates(omega: float, x0: float, v0: float, dt: float, n: np.ndarray):
    """Positions and velocities after ``n`` Verlet steps, via M^n = U_{n-1} M - U_{n-2} I."""
    if omega == 0:
        n = np.asarray(n, dtype=float)
        return x0 + v0 * dt * n, np.full(n.shape, float(v0))
    M = verlet_jacobian_harmonic(omega, dt)
    a = M[0, 0]
    if abs(a) >= 1:
        raise ConfigurationError(f"Verlet unstable for omega*dt = {omega * dt:g} >= 2")
    # 2 asin(w dt / 2) equals acos(a) but keeps full precision for small w dt.
    theta = 2.0 * math.asin(0.5 * omega * dt)
    n = np.asarray(n, dtype=float)
    u1 = np.sin(n * theta) / math.sin(theta)
    u2 = np.sin((n - 1) * theta) / math.sin(theta)
    x = u1 * (M[0, 0] * x0 + M[0, 1] * v0) - u2 * x0
    v = u1 * (M[1, 0] * x0 + M[1, 1] * v0) - u2 * v0
    return x, v


def common_period(w1: float, w2: float, max_den: int = 1000, rtol: float = 1e-12) -> float | None:
    """Smallest T with w1*T and w2*T both multiples of 2*pi, or None if the ratio is not rational."""
    if w1 <= 0 or w2 <= 0:
        raise ConfigurationError("frequencies must be positive")
    frac = Fraction(w1 / w2).limit_denominator(max_den)
    if abs(frac.numerator / frac.denominator - w1 / w2) > rtol * (w1 / w2):
        return None
    return 2 * math.pi * frac.numerator / w1


@dataclass
class Portrait:
    """Sampled 2D oscillator trajectory with closure diagnostics."""

    table: np.ndarray  # columns t, x, y, xdot, ydot
    omega: tuple[float, float]
    dt: float
    period: float | None
    closure_distance: float | None
    closed: bool
    min_return_distance: float

    def occupied_cells(self, t_max: float | None = None, bins: int = 100) -> int:
        return occupied_cells(self.table, self.extent, t_max, bins)

    @property
    def extent(self) -> tuple[float, float]:
        x0, y0, vx, vy = self.table[0, 1:]
        w1, w2 = self.omega
        return math.hypot(x0, vx / w1), math.hypot(y0, vy / w2)


def occupied_cells(table: np.ndarray, extent, t_max=None, bins: int = 100) -> int:
    """Number of cells of a ``bins x bins`` grid over the amplitude box visited by (x, y)."""
    rows = table if t_max is None else table[table[:, 0] <= t_max * (1 + 1e-12)]
    ax, ay = (e * (1 + 1e-9) if e > 0 else 1.0 for e in extent)
    ix = np.clip(((rows[:, 1] + ax) / (2 * ax) * bins).astype(int), 0, bins - 1)
    iy = np.clip(((rows[:, 2] + ay) / (2 * ay) * bins).astype(int), 0, bins - 1)
    return int(np.unique(ix * bins + iy).size)


def lissajous_portrait(
    w1: float,
    w2: float,
    x0=(1.0, 0.0),
    v0=(0.0, 1.0),
    T: float = 2 * math.pi,
    dt: float = 1e-4,
    closure_tol: float = 1e-6,
) -> Portrait:
    """Verlet trajectory of x'' = -w1^2 x, y'' = -w2^2 y sampled at every step.

    For a rational frequency ratio the step is shrunk so that the common
    period is an integer number of steps; the closure distance is the
    phase-space distance between the start and the state one period later.
    """
    if T <= 0 or dt <= 0:
        raise ConfigurationError("T and dt must be positive")
    period = common_period(w1, w2)
    if period is not None:
        dt = period / math.ceil(period / dt - 1e-9)
    steps = int(math.floor(T / dt + 1e-9))
    n = np.arange(steps + 1)
    x, vx = harmonic_verlet_iterates(w1, x0[0], v0[0], dt, n)
    y, vy = harmonic_verlet_iterates(w2, x0[1], v0[1], dt, n)
    table = np.column_stack([n * dt, x, y, vx, vy])
    start = table[0, 1:]
    dist = np.linalg.norm(table[:, 1:] - start, axis=1)
    closure = None
    if period is not None:
        n_p = int(round(period / dt))
        xp, vxp = harmonic_verlet_iterates(w1, x0[0], v0[0], dt, np.array([n_p]))
        yp, vyp = harmonic_verlet_iterates(w2, x0[1], v0[1], dt, np.array([n_p]))
        closure = float(np.linalg.norm(np.array([xp[0], yp[0], vxp[0], vyp[0]]) - start))
    # Returns are counted only after the trajectory has left the start's neighbourhood.
    left = np.nonzero(dist >= 0.5 * dist.max())[0]
    min_ret = float(dist[left[0]:].min()) if left.size else 0.0
    closed = closure is not None and period <= T * (1 + 1e-12) and closure <= closure_tol
    return Portrait(table, (w1, w2), dt, period, closure, closed, min_ret)
