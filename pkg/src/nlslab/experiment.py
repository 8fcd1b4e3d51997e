"""Scenario files, epsilon-ladder runs and convergence reports."""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, FitFailure
from .evolution import EvolutionConfig, default_dt, evolve, grid_for_eps, initial_data, save_snapshot
from .fitting import OrderFit, fit_order
from .grid import Grid
from .ground_state import GroundStatePair, save_ground_state, solve_ground_state
from .hamiltonian import PhasePoint, lissajous_portrait, trajectory
from .observables import CSV_COLUMNS, Cutoff, DiagnosticsObserver, DiagnosticsRecord
from .potentials import Potential, from_dict

log = logging.getLogger(__name__)

# Errors at or below this level are roundoff: the quantity vanishes identically
# for the scenario (e.g. by symmetry) and trivially satisfies any power bound.
ROUNDOFF_FLOOR = 1e-10

DT_RULES = ("auto", "eps_fraction", "fixed")


@dataclass
class Scenario:
    """One experiment: potentials, nonlinearity, initial particle data and the eps ladder.

    ``dt_rule`` is "auto" (``min(eps/10, eps*dx)``), "eps_fraction"
    (``dt_value * eps``) or "fixed" (``dt_value``).
    """

    name: str
    V: dict
    W: dict | None = None
    p: float = 1.0
    beta: float = 2.0
    x0: float = 0.0
    xi1: float = 0.0
    xi2: float | None = None
    eps_ladder: list = field(default_factory=lambda: [0.2, 0.1, 0.05])
    L: float = 20.0
    n_ref: int = 2048
    T: float = 1.0
    dt_rule: str = "auto"
    dt_value: float | None = None
    samples: int = 50
    seed: int = 0
    output: str = "runs"
    mode: str = "common"
    branch: str = "symmetric"
    gamma_bound: float = 1.0
    heps_order: float = 0.8
    concentration_order: float = 1.5
    workers: int = 1
    save_final_state: bool = False

    def __post_init__(self):
        if self.W is None:
            self.W = dict(self.V)
        if self.xi2 is None:
            self.xi2 = self.xi1
        self.validate()

    def validate(self) -> None:
        if not isinstance(self.name, str) or not self.name:
            raise ConfigurationError("scenario needs a non-empty name")
        self.potentials()
        ladder = [float(e) for e in self.eps_ladder]
        if len(ladder) < 3:
            raise ConfigurationError(f"eps_ladder needs at least 3 entries, got {len(ladder)}")
        if any(e <= 0 for e in ladder) or any(a <= b for a, b in zip(ladder, ladder[1:])):
            raise ConfigurationError(f"eps_ladder must be positive and strictly decreasing, got {ladder}")
        self.eps_ladder = ladder
        if not 0 < self.p < 2:
            raise ConfigurationError(f"p must lie in (0, 2), got {self.p}")
        if self.beta < 0:
            raise ConfigurationError(f"beta must be nonnegative, got {self.beta}")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ConfigurationError(f"T must be positive, got {self.T}")
        if self.dt_rule not in DT_RULES:
            raise ConfigurationError(f"dt_rule must be one of {DT_RULES}, got {self.dt_rule!r}")
        if self.dt_rule != "auto" and not (self.dt_value and self.dt_value > 0):
            raise ConfigurationError(f"dt_rule {self.dt_rule!r} needs a positive dt_value")
        if self.mode not in ("common", "general"):
            raise ConfigurationError(f"mode must be 'common' or 'general', got {self.mode!r}")
        if self.mode == "common" and (self.V != self.W or self.xi1 != self.xi2):
            raise ConfigurationError("common mode requires V == W and xi1 == xi2")
        if self.branch not in ("symmetric", "semitrivial"):
            raise ConfigurationError(f"branch must be 'symmetric' or 'semitrivial', got {self.branch!r}")
        if int(self.samples) != self.samples or self.samples < 1:
            raise ConfigurationError("samples must be a positive integer")
        if int(self.workers) != self.workers or self.workers < 1:
            raise ConfigurationError("workers must be a positive integer")
        Grid(self.L, self.n_ref)

    def potentials(self, x=None) -> tuple[Potential, Potential]:
        return from_dict(self.V, x), from_dict(self.W, x)

    def dt_for(self, eps: float, grid: Grid) -> float:
        if self.dt_rule == "auto":
            return default_dt(eps, grid.dx)
        if self.dt_rule == "eps_fraction":
            return self.dt_value * eps
        return self.dt_value

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        if not isinstance(data, dict):
            raise ConfigurationError("scenario must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown scenario keys: {unknown}")
        for req in ("name", "V"):
            if req not in data:
                raise ConfigurationError(f"scenario is missing required key {req!r}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc

    @classmethod
    def from_json(cls, path) -> "Scenario":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read scenario {path}: {exc}") from exc
        return cls.from_dict(data)


def ground_state_for(s: Scenario) -> GroundStatePair:
    return solve_ground_state(s.p, s.beta, Grid(s.L, s.n_ref), init=s.branch)


# ---------------------------------------------------------------- single runs

@dataclass
class EpsRun:
    """Diagnostics of one eps and the particle trajectory at the same times."""

    eps: float
    n: int
    dt: float
    steps: int
    records: list[DiagnosticsRecord]
    points: list[PhasePoint]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def center_error(self) -> np.ndarray:
        c1 = np.abs(self.column("center1") - np.array([p.x1 for p in self.points]))
        c2 = np.abs(self.column("center2") - np.array([p.x2 for p in self.points]))
        return np.maximum(c1, c2)

    def composite(self) -> np.ndarray:
        """alpha-hat + eta + gamma combination of the defects at each sample."""
        xi1 = np.array([p.xi1 for p in self.points])
        xi2 = np.array([p.xi2 for p in self.points])
        a1, a2 = self.column("alpha1"), self.column("alpha2")
        alpha_hat = np.abs(xi1 * a1 + xi2 * a2) + np.abs(a1 + a2)
        eta = np.abs(self.column("eta1") + self.column("eta2"))
        gamma = np.abs(self.column("gamma1")) + np.abs(self.column("gamma2"))
        return alpha_hat + eta + gamma

    def summary(self) -> dict:
        N1, N2 = self.column("N1"), self.column("N2")
        E = self.column("E")
        P = self.column("Ptot")
        comp = self.composite()
        return {
            "eps": self.eps,
            "n": self.n,
            "dt": self.dt,
            "steps": self.steps,
            "Heps": float(self.column("Heps").max()),
            "Gamma": float(self.column("Gamma").max()),
            "dualM": float(max(self.column("dualM1").max(), self.column("dualM2").max())),
            "dualP": float(self.column("dualP").max()),
            "center": float(self.center_error().max()),
            "mass_drift": float(max(np.abs(N1 / N1[0] - 1).max(), np.abs(N2 / N2[0] - 1).max())),
            "energy_drift": float(np.abs(E - E[0]).max()),
            "momentum_drift": float(np.abs(P - P[0]).max()),
            "eta0": float(max(abs(self.records[0].eta1), abs(self.records[0].eta2))),
            "gamma0": float(max(abs(self.records[0].gamma1), abs(self.records[0].gamma2))),
            "alpha0": float(max(abs(self.records[0].alpha1), abs(self.records[0].alpha2))),
            "rho0": float(comp[0]),
            "rho": float(comp.max()),
        }


def run_eps(s: Scenario, R: GroundStatePair, eps: float, outdir: Path | None = None) -> EpsRun:
    """Co-integrate field and particles at one eps and sample diagnostics."""
    grid = grid_for_eps(eps, s.L, s.n_ref)
    V, W = s.potentials(grid.x)
    cfg0 = EvolutionConfig(eps, s.dt_for(eps, grid), s.T)
    stride = max(1, cfg0.steps // s.samples)
    cfg = EvolutionConfig(eps, cfg0.dt, s.T, sample_stride=stride)
    start = PhasePoint.start(s.x0, s.xi1, s.xi2)
    path = trajectory(start, V, W, cfg.dt, cfg.steps)
    reach = max(max(abs(p.x1), abs(p.x2)) for p in path)
    if reach + 5 * eps * R.width > (1 - 0.1) * grid.L:
        raise ConfigurationError(f"particle trajectory reaches |x|={reach:.3g}, too close to the domain edge")
    chi = Cutoff.for_trajectory(path, R, eps)
    observer = DiagnosticsObserver(R, V, W, grid, eps, chi, gamma_bound=s.gamma_bound)
    state = initial_data(R, s.x0, s.xi1, s.xi2, eps, grid)
    res = evolve(state, V, W, cfg, [observer], start)
    run = EpsRun(eps, grid.n, cfg.dt, cfg.steps, res.series[0], res.points)
    if outdir is not None:
        write_diagnostics(run.records, outdir / "diagnostics.csv")
        if s.save_final_state:
            save_snapshot(res.final, outdir / "final_state.csv", res.point)
    return run


def write_diagnostics(records, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for r in records:
            fh.write(",".join(repr(float(v)) for v in r.row()) + "\n")
    return path


def read_diagnostics(path) -> list[DiagnosticsRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ConfigurationError(f"unexpected diagnostics columns in {path}")
        return [DiagnosticsRecord(**{k: float(v) for k, v in row.items()}) for row in reader]


def _run_job(args):
    s, R, eps, outdir = args
    return run_eps(s, R, eps, outdir)


def run_ladder(s: Scenario, R: GroundStatePair | None = None, root: Path | None = None) -> list[EpsRun]:
    R = R if R is not None else ground_state_for(s)
    jobs = [(s, R, eps, None if root is None else root / f"eps_{eps:g}") for eps in s.eps_ladder]
    if s.workers > 1:
        with ProcessPoolExecutor(max_workers=s.workers) as pool:
            return list(pool.map(_run_job, jobs))
    return [_run_job(j) for j in jobs]


# ---------------------------------------------------------------- reports

@dataclass
class OrderCheck:
    """Fitted order of one error metric against a one-sided target."""

    metric: str
    target: float | None
    errors: list[float]
    fit: OrderFit | None
    status: str  # "pass", "fail", "roundoff" or "info"
    monotone: bool
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.status in ("pass", "roundoff", "info")

    def as_dict(self) -> dict:
        return {
            "metric": self.metric,
            "target": self.target,
            "errors": self.errors,
            "slope": None if self.fit is None else self.fit.slope,
            "fit": None if self.fit is None else self.fit.as_dict(),
            "status": self.status,
            "monotone": self.monotone,
            "note": self.note,
        }


def check_order(metric: str, eps, errors, target: float | None, floor: float = ROUNDOFF_FLOOR) -> OrderCheck:
    """Fit the order of ``errors`` and compare it with ``target`` (None: report only).

    When every error is at or below ``floor`` the quantity vanishes to
    roundoff and the bound holds trivially; the slope is then meaningless and
    is not fitted.
    """
    errors = [float(e) for e in errors]
    monotone = all(a >= b for a, b in zip(errors, errors[1:]))
    if all(abs(e) <= floor for e in errors):
        return OrderCheck(metric, target, errors, None, "roundoff", monotone,
                          f"all errors <= {floor:g}; bound holds trivially")
    try:
        fit = fit_order(zip(eps, errors))
    except FitFailure as exc:
        return OrderCheck(metric, target, errors, None, "fail" if target is not None else "info", monotone, str(exc))
    if target is None:
        status = "info"
    else:
        status = "pass" if fit.slope >= target else "fail"
    note = "" if monotone else "error ladder is not monotone"
    return OrderCheck(metric, target, errors, fit, status, monotone, note)


@dataclass
class ConvergenceReport:
    scenario: dict
    per_eps: list[dict]
    slopes: dict
    passed: bool
    kind: str = "common"

    def as_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "per_eps": self.per_eps,
            "slopes": {k: v.as_dict() for k, v in self.slopes.items()},
            "pass": self.passed,
        }

    def summary_text(self) -> str:
        lines = [f"scenario {self.scenario['name']} ({self.kind})"]
        head = f"{'eps':>8} {'n':>7} {'dt':>10} {'Heps':>11} {'dualM':>11} {'dualP':>11} {'center':>11} {'rho0':>11}"
        lines.append(head)
        for row in self.per_eps:
            lines.append(
                f"{row['eps']:>8g} {row['n']:>7d} {row['dt']:>10.3e} {row['Heps']:>11.4e} {row['dualM']:>11.4e} "
                f"{row['dualP']:>11.4e} {row['center']:>11.4e} {row['rho0']:>11.4e}"
            )
        for name, chk in self.slopes.items():
            slope = "n/a" if chk.fit is None else f"{chk.fit.slope:.3f}"
            target = "" if chk.target is None else f" (target >= {chk.target})"
            extra = f" [{chk.note}]" if chk.note else ""
            lines.append(f"{name}: slope {slope}{target} -> {chk.status}{extra}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"

    def write(self, root: Path) -> None:
        root.mkdir(parents=True, exist_ok=True)
        (root / "report.json").write_text(json.dumps(self.as_dict(), indent=2, default=_json_default))
        (root / "summary.txt").write_text(self.summary_text())


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _output_root(s: Scenario, write: bool) -> Path | None:
    return Path(s.output) / s.name if write else None


def run_scenario(s: Scenario, R: GroundStatePair | None = None, write: bool = True,
                 runs: list[EpsRun] | None = None) -> ConvergenceReport:
    """Run the ladder and fit the orders of the soliton-approximation errors.

    Targets: sup-in-time H_eps distance of order ``heps_order``; dual mass
    and momentum surrogates and the centre error of order
    ``concentration_order``.
    """
    if s.mode != "common":
        raise ConfigurationError("run_scenario needs mode 'common'; use run_two_potential for general data")
    return _ladder_report(s, R, write, runs, "common")


def _ladder_report(s, R, write, runs, kind) -> ConvergenceReport:
    root = _output_root(s, write)
    R = R if R is not None else ground_state_for(s)
    if root is not None:
        save_ground_state(R, root / "ground_state.csv")
    runs = runs if runs is not None else run_ladder(s, R, root)
    per_eps = [r.summary() for r in runs]
    eps = [r.eps for r in runs]
    col = lambda k: [row[k] for row in per_eps]
    if kind == "common":
        slopes = {
            "Heps": check_order("Heps", eps, col("Heps"), s.heps_order),
            "dualM": check_order("dualM", eps, col("dualM"), s.concentration_order),
            "dualP": check_order("dualP", eps, col("dualP"), s.concentration_order),
            "center": check_order("center", eps, col("center"), s.concentration_order),
        }
    else:
        slopes = {
            "rho0": check_order("rho0", eps, col("rho0"), None),
            "rho": check_order("rho", eps, col("rho"), None),
            "Heps": check_order("Heps", eps, col("Heps"), None),
        }
    report = ConvergenceReport(s.to_dict(), per_eps, slopes, all(c.passed for c in slopes.values()), kind)
    if root is not None:
        report.write(root)
        if kind == "general":
            for r in runs:
                write_composite(r, root / f"eps_{r.eps:g}" / "composite.csv")
    return report


def write_composite(run: EpsRun, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    t = run.column("t")
    table = np.column_stack([t, run.composite(), run.column("Heps")])
    np.savetxt(path, table, delimiter=",", fmt="%.17g", header="t,rho,Heps", comments="")
    return path


def run_two_potential(s: Scenario, R: GroundStatePair | None = None, write: bool = True,
                      runs: list[EpsRun] | None = None) -> ConvergenceReport:
    """General system with possibly different potentials and velocities.

    Records the defect composite and the H_eps distance to the family
    centred at x1(t); fitted slopes are informational and never fail.
    """
    return _ladder_report(s, R, write, runs, "general")


# ---------------------------------------------------------------- other commands

def portrait_command(w1: float, w2: float, x0, v0, T: float, dt: float, out) -> dict:
    """Write a Lissajous trajectory CSV and a JSON sidecar with the closure data."""
    por = lissajous_portrait(w1, w2, x0, v0, T, dt)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(out, por.table, delimiter=",", fmt="%.17g", header="t,x,y,xdot,ydot", comments="")
    meta = {
        "omega": list(por.omega),
        "dt": por.dt,
        "period": por.period,
        "closed": por.closed,
        "closure_distance": por.closure_distance,
        "min_return_distance": por.min_return_distance,
        "occupied_cells": por.occupied_cells(),
    }
    out.with_suffix(".json").write_text(json.dumps(meta, indent=2))
    return meta


def read_error_table(path) -> list[tuple[float, float]]:
    """Two-column CSV (eps, error) with an optional header row."""
    rows = []
    try:
        with open(path, newline="") as fh:
            for rec in csv.reader(fh):
                if not rec or rec[0].strip().startswith("#"):
                    continue
                try:
                    rows.append((float(rec[0]), float(rec[1])))
                except ValueError:
                    if rows:
                        raise
    except (OSError, ValueError, IndexError) as exc:
        raise ConfigurationError(f"cannot read error table {path}: {exc}") from exc
    return rows
