"""Bihari/Gronwall bounds and the paired mean-square stability experiment."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .noise import sample_paths
from .problem import (
    ConditionReport,
    HypothesisConstants,
    HypothesisError,
    KappaForm,
    Prehistory,
    ProblemSpec,
    check_existence_condition,
    check_stability_condition,
    prehistory_b_norm,
)
from .solver import GridSpec, PicardConfig, Trajectory, build_grid, picard_solve

__all__ = [
    "BihariInput",
    "bihari_bound",
    "epsilon_time",
    "Perturbation",
    "StabilityReport",
    "perturbation_size",
    "ms_stability_experiment",
    "stability_sweep",
    "loglog_slope",
]


@dataclass(frozen=True, eq=False)
class BihariInput:
    """u(t) <= u0 + int_0^t v(s) kappa(u(s)) ds with v sampled on ``grid``."""

    u0: float
    v_samples: np.ndarray
    grid: np.ndarray
    kappa: KappaForm

    def __post_init__(self) -> None:
        if not self.u0 >= 0:
            raise ValueError(f"u0 must be nonnegative, got {self.u0}")
        v = np.asarray(self.v_samples, dtype=float)
        grid = np.asarray(self.grid, dtype=float)
        if v.shape != grid.shape or grid.ndim != 1 or grid.size < 2:
            raise ValueError("v_samples must be sampled on the grid")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must increase strictly")
        object.__setattr__(self, "v_samples", v)
        object.__setattr__(self, "grid", grid)

    def integral(self) -> np.ndarray:
        """int_0^{t_k} v at every grid node (trapezoid)."""
        return cumulative_trapezoid(self.v_samples, self.grid, initial=0.0)


def bihari_bound(inp: BihariInput, t: float) -> float:
    """G^{-1}(G(u0) + int_0^t v); +inf when the argument leaves the range of G."""
    t = float(t)
    if not (inp.grid[0] <= t <= inp.grid[-1]):
        raise ValueError(f"t = {t} outside the sampled interval")
    total = float(np.interp(t, inp.grid, inp.integral()))
    g0 = inp.kappa.G(inp.u0)
    if g0 == -math.inf:
        # u0 = 0 with a divergent int_{0+} ds / kappa: the solution is identically 0
        return 0.0
    return inp.kappa.G_inv(g0 + total)


def epsilon_time(kappa: KappaForm, epsilon: float, u0: float, v_samples, grid) -> float | None:
    """Smallest grid time t1 with int_{t1}^T v <= int_{u0}^{eps} ds / kappa(s).

    Returns ``None`` when no grid time qualifies.  With a zero budget
    (u0 = eps) only v identically 0 qualifies, and then t1 = grid[0].
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not (0.0 <= u0 <= epsilon):
        raise ValueError("u0 must lie in [0, epsilon]")
    v = np.asarray(v_samples, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if np.any(v < 0):
        raise ValueError("v must be nonnegative")
    if u0 == epsilon:
        return float(grid[0]) if not np.any(v > 0) else None
    g0 = kappa.G(u0)
    budget = math.inf if g0 == -math.inf else kappa.G(epsilon) - g0
    cum = cumulative_trapezoid(v, grid, initial=0.0)
    tail = cum[-1] - cum
    ok = np.nonzero(tail <= budget * (1.0 + 1e-12))[0]
    if ok.size == 0:
        return None
    return float(grid[ok[0]])


@dataclass(frozen=True, eq=False)
class Perturbation:
    """Second initial datum is (phi + dphi, x1 + dx1); ``dphi=None`` leaves phi alone."""

    dphi: Prehistory | None
    dx1: np.ndarray

    def scaled(self, c: float) -> "Perturbation":
        return Perturbation(None if self.dphi is None else self.dphi.scaled(c), c * np.asarray(self.dx1, dtype=float))

    def apply(self, spec: ProblemSpec) -> ProblemSpec:
        phi = spec.phi if self.dphi is None else spec.phi.plus(self.dphi)
        return spec.replace(phi=phi, x1=spec.x1 + np.asarray(self.dx1, dtype=float))


def perturbation_size(spec: ProblemSpec, pert: Perturbation) -> float:
    """delta = ||dphi||_B^2 + |dx1|^2 for deterministic data."""
    dphi = 0.0 if pert.dphi is None else prehistory_b_norm(pert.dphi, spec.phase)
    return dphi**2 + float(np.sum(np.asarray(pert.dx1, dtype=float) ** 2))


@dataclass(frozen=True)
class StabilityReport:
    delta: float
    estimate: float
    standard_error: float
    paths: int
    condition: ConditionReport | None
    applicable: bool
    converged: bool

    def __post_init__(self) -> None:
        if self.estimate < 0:
            raise ValueError("estimate must be nonnegative")


def _premise(spec: ProblemSpec, consts: HypothesisConstants | None) -> tuple[ConditionReport | None, bool]:
    if consts is None:
        return None, False
    try:
        stab = check_stability_condition(spec, consts)
    except HypothesisError:
        return None, False
    exist = check_existence_condition(spec, consts)
    return stab, bool(stab.satisfied and exist.satisfied)


def _paired(base: Trajectory, other: Trajectory) -> tuple[float, float, bool]:
    d = np.max(np.sum((base.values - other.values) ** 2, axis=-1), axis=-1)
    P = d.size
    est = float(np.mean(d))
    se = float(np.std(d, ddof=1) / math.sqrt(P)) if P > 1 else 0.0
    conv = all(x.converged for x in base.diagnostics + other.diagnostics)
    return est, se, conv


def _solve(spec, grid, paths, seed, config, workers):
    times, _ = build_grid(grid, spec.impulses.times)
    noise = sample_paths(spec.noise.with_seed(seed), times, paths)
    traj, _ = picard_solve(spec, grid, noise, config, workers=workers)
    return traj


def ms_stability_experiment(
    spec: ProblemSpec,
    perturbation: Perturbation,
    paths: int,
    seed: int,
    grid: GridSpec | None = None,
    config: PicardConfig | None = None,
    consts: HypothesisConstants | None = None,
    workers: int = 1,
) -> StabilityReport:
    """Monte Carlo E sup_t |x - y|^2 for the two initial data under common noise."""
    grid = grid or GridSpec(spec.horizon, 200)
    config = config or PicardConfig()
    cond, applicable = _premise(spec, consts)
    base = _solve(spec, grid, paths, seed, config, workers)
    other = _solve(perturbation.apply(spec), grid, paths, seed, config, workers)
    est, se, conv = _paired(base, other)
    return StabilityReport(perturbation_size(spec, perturbation), est, se, int(paths), cond, applicable, conv)


def stability_sweep(
    spec: ProblemSpec,
    direction: Perturbation,
    deltas,
    paths: int,
    seed: int,
    grid: GridSpec | None = None,
    config: PicardConfig | None = None,
    consts: HypothesisConstants | None = None,
    workers: int = 1,
) -> list[StabilityReport]:
    """One paired experiment per target delta, scaling ``direction``; the base solve is shared."""
    grid = grid or GridSpec(spec.horizon, 200)
    config = config or PicardConfig()
    cond, applicable = _premise(spec, consts)
    size = perturbation_size(spec, direction)
    if size <= 0 and any(d > 0 for d in deltas):
        raise ValueError("perturbation direction is zero")
    base = _solve(spec, grid, paths, seed, config, workers)
    out = []
    for delta in deltas:
        delta = float(delta)
        if delta < 0:
            raise ValueError("delta must be nonnegative")
        pert = direction.scaled(math.sqrt(delta / size) if delta > 0 else 0.0)
        other = _solve(pert.apply(spec), grid, paths, seed, config, workers)
        est, se, conv = _paired(base, other)
        out.append(StabilityReport(perturbation_size(spec, pert), est, se, int(paths), cond, applicable, conv))
    return out


def loglog_slope(deltas, estimates) -> float:
    """Least-squares slope of log(estimate) against log(delta)."""
    x = np.log(np.asarray(deltas, dtype=float))
    y = np.log(np.asarray(estimates, dtype=float))
    return float(np.polyfit(x, y, 1)[0])
