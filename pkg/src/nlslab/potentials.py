"""External potentials with analytic value, gradient and Hessian.

Supported kinds and their parameters:

    constant       c
    harmonic       omega          V = omega**2 x**2 / 2
    gaussian_bump  a, b, s        V = a exp(-(x - b)**2 / (2 s**2))
    cosine         a, kappa       V = a cos(kappa x)

An offset ``mu = max(0, -min V)`` over the computational domain is added so
the potential is nonnegative there; it only changes the phase of solutions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

_PARAMS = {
    "constant": {"c": 0.0},
    "harmonic": {"omega": 1.0},
    "gaussian_bump": {"a": 1.0, "b": 0.0, "s": 1.0},
    "cosine": {"a": 1.0, "kappa": 1.0},
}


@dataclass(frozen=True)
class Potential:
    kind: str
    params: dict = field(default_factory=dict)
    offset: float = 0.0

    def __post_init__(self):
        if self.kind not in _PARAMS:
            raise ConfigurationError(f"unknown potential kind {self.kind!r}; expected one of {sorted(_PARAMS)}")
        unknown = set(self.params) - set(_PARAMS[self.kind])
        if unknown:
            raise ConfigurationError(f"unknown parameters {sorted(unknown)} for {self.kind} potential")
        merged = {**_PARAMS[self.kind], **{k: float(v) for k, v in self.params.items()}}
        if not all(np.isfinite(v) for v in merged.values()):
            raise ConfigurationError(f"non-finite parameter in {merged}")
        if self.kind == "gaussian_bump" and merged["s"] <= 0:
            raise ConfigurationError("gaussian_bump width s must be positive")
        object.__setattr__(self, "params", merged)

    def raw(self, x):
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.kind == "constant":
            return np.full_like(x, p["c"])
        if self.kind == "harmonic":
            return 0.5 * p["omega"] ** 2 * x**2
        if self.kind == "gaussian_bump":
            return p["a"] * np.exp(-((x - p["b"]) ** 2) / (2 * p["s"] ** 2))
        return p["a"] * np.cos(p["kappa"] * x)

    def value(self, x):
        return self.raw(x) + self.offset

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.kind == "constant":
            return np.zeros_like(x)
        if self.kind == "harmonic":
            return p["omega"] ** 2 * x
        if self.kind == "gaussian_bump":
            u = (x - p["b"]) / p["s"]
            return -p["a"] * u / p["s"] * np.exp(-0.5 * u**2)
        return -p["a"] * p["kappa"] * np.sin(p["kappa"] * x)

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.kind == "constant":
            return np.zeros_like(x)
        if self.kind == "harmonic":
            return np.full_like(x, p["omega"] ** 2)
        if self.kind == "gaussian_bump":
            u = (x - p["b"]) / p["s"]
            return p["a"] / p["s"] ** 2 * (u**2 - 1.0) * np.exp(-0.5 * u**2)
        return -p["a"] * p["kappa"] ** 2 * np.cos(p["kappa"] * x)

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}

    def with_offset_for(self, x) -> "Potential":
        """Copy with ``offset = max(0, -min raw(x))`` over the given nodes."""
        mu = max(0.0, -float(np.min(self.raw(x))))
        return Potential(self.kind, dict(self.params), mu)

    def shifted(self, c: float) -> "Potential":
        return Potential(self.kind, dict(self.params), self.offset + c)


def from_dict(spec: dict, x=None) -> Potential:
    """Build a potential from a ``{"kind": ..., params...}`` mapping.

    When nodes ``x`` are given the nonnegativity offset is computed on them.
    """
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigurationError(f"potential must be an object with a 'kind' key, got {spec!r}")
    params = {k: v for k, v in spec.items() if k != "kind"}
    pot = Potential(spec["kind"], params)
    return pot if x is None else pot.with_offset_for(x)


def constant(c: float = 0.0) -> Potential:
    return Potential("constant", {"c": c})


def harmonic(omega: float = 1.0) -> Potential:
    return Potential("harmonic", {"omega": omega})


def value(P: Potential, x):
    return P.value(x)


def grad(P: Potential, x):
    return P.grad(x)


def hessian(P: Potential, x):
    return P.hessian(x)
