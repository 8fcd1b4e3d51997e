"""Periodic 1D grid with Fourier differentiation and rectangle-rule quadrature.

The domain is [-L, L) sampled at n equispaced nodes. For smooth periodic
integrands the rectangle rule is spectrally accurate, and derivatives are
taken by multiplying the discrete spectrum by powers of ``i k``.

Fields are plain numpy arrays of length ``n``; every operation checks the
length against the grid it is called on.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import ConfigurationError, UsageError


@dataclass(frozen=True)
class Grid:
    """Uniform periodic mesh on [-L, L).

    Attributes:
        L: Half-length of the domain.
        n: Number of nodes (power of two, at least 8).
    """

    L: float
    n: int

    def __post_init__(self):
        if not np.isfinite(self.L) or self.L <= 0:
            raise ConfigurationError(f"half-length must be positive, got {self.L}")
        if int(self.n) != self.n or self.n < 8 or (int(self.n) & (int(self.n) - 1)):
            raise ConfigurationError(f"n must be a power of two >= 8, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "L", float(self.L))

    @cached_property
    def dx(self) -> float:
        return 2.0 * self.L / self.n

    @cached_property
    def x(self) -> np.ndarray:
        nodes = -self.L + self.dx * np.arange(self.n)
        nodes.flags.writeable = False
        return nodes

    @cached_property
    def k(self) -> np.ndarray:
        """Signed wavenumbers in FFT order; the Nyquist mode is stored as +pi/dx."""
        j = np.fft.fftfreq(self.n, d=1.0 / self.n)
        j[self.n // 2] = self.n // 2
        k = np.pi * j / self.L
        k.flags.writeable = False
        return k

    @cached_property
    def _ik(self) -> np.ndarray:
        # Nyquist mode dropped so the discrete derivative is skew-symmetric.
        ik = 1j * self.k.copy()
        ik[self.n // 2] = 0.0
        return ik

    @cached_property
    def _k2(self) -> np.ndarray:
        return self.k**2

    def check(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f)
        if f.shape[-1] != self.n:
            raise UsageError(f"field of length {f.shape[-1]} does not live on a grid with n={self.n}")
        return f

    def fft(self, f):
        return sfft.fft(self.check(f), axis=-1)

    def ifft(self, F):
        return sfft.ifft(F, axis=-1)

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        out = self.ifft(-self._k2 * self.fft(f))
        return out.real if np.isrealobj(f) else out

    def gradient(self, f: np.ndarray) -> np.ndarray:
        out = self.ifft(self._ik * self.fft(f))
        return out.real if np.isrealobj(f) else out

    def integrate(self, f: np.ndarray) -> float | np.ndarray:
        """Rectangle rule ``dx * sum(f)`` along the last axis."""
        return self.dx * np.sum(self.check(f), axis=-1)

    def shift(self, f: np.ndarray, s: float) -> np.ndarray:
        """Band-limited translate ``f(x - s)``; exact circular shift when s is a multiple of dx."""
        m = s / self.dx
        if abs(m - round(m)) < 1e-12:
            return np.roll(self.check(f), int(round(m)), axis=-1)
        F0 = self.fft(f)
        F = F0 * np.exp(-1j * self.k * s)
        # Nyquist term treated as a cosine keeps real data real.
        F[..., self.n // 2] = F0[..., self.n // 2] * np.cos(self.k[self.n // 2] * s)
        out = self.ifft(F)
        return out.real if np.isrealobj(f) else out

    def _padded_spectrum(self, f):
        """Coefficients for signed modes -n/2..n/2 with the Nyquist term split evenly."""
        F = self.fft(f) / self.n
        half = self.n // 2
        G = np.concatenate([F[..., half:], F[..., :half + 1]], axis=-1)
        G[..., 0] *= 0.5
        G[..., -1] *= 0.5
        return G

    def interpolate(self, f: np.ndarray, points, chunk: int = 2048) -> np.ndarray:
        """Evaluate the trigonometric interpolant of ``f`` at arbitrary points.

        ``f`` may be a stack of fields (shape (..., n)). Cost is
        O(len(points) * n); use :meth:`sample_uniform` for equispaced targets.
        """
        G = self._padded_spectrum(f)
        modes = np.pi * np.arange(-(self.n // 2), self.n // 2 + 1) / self.L
        pts = np.atleast_1d(np.asarray(points, dtype=float)).ravel()
        out = np.empty(G.shape[:-1] + (pts.size,), dtype=complex)
        for start in range(0, pts.size, chunk):
            xi = pts[start:start + chunk] + self.L
            out[..., start:start + chunk] = G @ np.exp(1j * np.outer(modes, xi))
        return out.real if np.isrealobj(f) else out

    def sample_uniform(self, f: np.ndarray, y0: float, h: float, m: int) -> np.ndarray:
        """Trigonometric interpolant of ``f`` at ``y0 + h*j`` for j < m, via a chirp-z transform."""
        G = self._padded_spectrum(f)
        half = self.n // 2
        modes = np.arange(self.n + 1) - half
        G = G * np.exp(1j * np.pi * modes * (y0 + self.L) / self.L)
        vals = _chirp_z(G, m, np.pi * h / self.L)
        vals = vals * np.exp(-1j * np.pi * half * h * np.arange(m) / self.L)
        return vals.real if np.isrealobj(f) else vals

    def spectral_norm_sq(self, f: np.ndarray) -> float:
        """Parseval form of ``integrate(|f|**2)``."""
        F = self.fft(f)
        return 2.0 * self.L / self.n**2 * float(np.sum(np.abs(F) ** 2))


def _chirp_z(G: np.ndarray, m: int, alpha: float) -> np.ndarray:
    """``X_j = sum_k G_k exp(i alpha j k)`` for j < m (Bluestein's algorithm, last axis).

    Chirp phases are formed from exact integer squares, which keeps full
    precision for long outputs.
    """
    N = G.shape[-1]
    size = sfft.next_fast_len(N + m - 1)
    k = np.arange(max(N, m), dtype=float)
    chirp = np.exp(0.5j * alpha * k**2)
    a = np.zeros(G.shape[:-1] + (size,), dtype=complex)
    a[..., :N] = G * chirp[:N]
    b = np.zeros(size, dtype=complex)
    b[:m] = np.conj(chirp[:m])
    b[size - N + 1:] = np.conj(chirp[1:N][::-1])
    conv = sfft.ifft(sfft.fft(a, axis=-1) * sfft.fft(b), axis=-1)
    return chirp[:m] * conv[..., :m]


def make_grid(L: float, n: int) -> Grid:
    return Grid(L, n)


def next_pow2(m: float) -> int:
    return 1 << max(3, int(np.ceil(np.log2(m))))


def laplacian(f, grid: Grid):
    return grid.laplacian(f)


def gradient(f, grid: Grid):
    return grid.gradient(f)


def integrate(f, grid: Grid):
    return grid.integrate(f)
