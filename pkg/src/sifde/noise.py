"""Truncated Q-Wiener process and left-endpoint Ito sums.

w(t) = sum_n sqrt(lambda_n) beta_n(t) e_n with the e_n taken as coordinate
directions of G.  Standard normals for path ``p`` and mode ``n`` come from a PCG64
stream keyed by ``SeedSequence(seed, spawn_key=(p, n))`` and are consumed in
step order, so entry (step, mode) depends only on (seed, p, n, step): it is
the same whatever order paths are generated in and however many modes are
kept.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "QWienerSpec",
    "QWienerPath",
    "standard_normals",
    "sample_path",
    "sample_paths",
    "ito_integral",
    "hs_norm_sq",
    "isometry_sum",
]


@dataclass(frozen=True)
class QWienerSpec:
    """Eigenvalues of Q on the first ``modes`` coordinate directions of G.

    ``trace`` is the full (untruncated) trace of Q when known analytically.
    """

    q_eigenvalues: tuple[float, ...]
    seed: int = 0
    trace: float | None = None

    def __post_init__(self) -> None:
        lam = tuple(float(v) for v in self.q_eigenvalues)
        if not lam:
            raise ValueError("at least one noise mode is required")
        if any(not (v >= 0.0 and np.isfinite(v)) for v in lam):
            raise ValueError("Q eigenvalues must be finite and nonnegative")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "q_eigenvalues", lam)
        object.__setattr__(self, "seed", int(self.seed))
        if self.trace is not None and self.trace < sum(lam) * (1 - 1e-12):
            raise ValueError("analytic trace is below the truncated trace")

    @property
    def modes(self) -> int:
        return len(self.q_eigenvalues)

    @property
    def lambdas(self) -> np.ndarray:
        return np.asarray(self.q_eigenvalues)

    @property
    def truncated_trace(self) -> float:
        return float(sum(self.q_eigenvalues))

    @property
    def discarded_trace(self) -> float | None:
        """Trace mass dropped by the truncation, when the full trace is known."""
        if self.trace is None:
            return None
        return float(self.trace - self.truncated_trace)

    def with_seed(self, seed: int) -> "QWienerSpec":
        return QWienerSpec(self.q_eigenvalues, seed, self.trace)


@dataclass(frozen=True, eq=False)
class QWienerPath:
    """Increments on a grid; shape (..., steps, modes) with optional path axes."""

    grid: np.ndarray
    increments: np.ndarray

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=float)
        inc = np.asarray(self.increments, dtype=float)
        if inc.shape[-2] != grid.size - 1:
            raise ValueError("one increment row per grid interval is required")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "increments", inc)

    def values(self) -> np.ndarray:
        """w at the grid nodes, starting from w(0) = 0."""
        inc = self.increments
        zero = np.zeros(inc.shape[:-2] + (1, inc.shape[-1]))
        return np.concatenate([zero, np.cumsum(inc, axis=-2)], axis=-2)


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("noise grid needs at least two nodes")
    if grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
        raise ValueError("noise grid must start at 0 and increase strictly")
    return grid


def standard_normals(seed: int, path_index: int, steps: int, modes: int) -> np.ndarray:
    """(steps, modes) normals; column n is the stream keyed by (seed, path_index, n)."""
    out = np.empty((steps, modes))
    for n in range(modes):
        key = np.random.SeedSequence(seed, spawn_key=(int(path_index), n))
        out[:, n] = np.random.Generator(np.random.PCG64(key)).standard_normal(steps)
    return out


def sample_path(spec: QWienerSpec, grid, path_index: int = 0) -> QWienerPath:
    grid = _check_grid(grid)
    z = standard_normals(spec.seed, path_index, grid.size - 1, spec.modes)
    scale = np.sqrt(np.diff(grid))[:, None] * np.sqrt(spec.lambdas)[None, :]
    return QWienerPath(grid, scale * z)


def sample_paths(
    spec: QWienerSpec, grid, paths: int | Sequence[int], workers: int = 1
) -> QWienerPath:
    """Stack of independent paths with a leading path axis.

    ``paths`` is a count (indices 0..paths-1) or explicit path indices.
    """
    grid = _check_grid(grid)
    indices = list(range(paths)) if isinstance(paths, (int, np.integer)) else [int(p) for p in paths]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda p: sample_path(spec, grid, p).increments, indices))
    else:
        rows = [sample_path(spec, grid, p).increments for p in indices]
    inc = np.stack(rows) if rows else np.zeros((0, grid.size - 1, spec.modes))
    return QWienerPath(grid, inc)


def ito_integral(
    kernel: Callable[[float, float], np.ndarray] | None,
    sigma_values: Callable[[float], np.ndarray] | np.ndarray,
    path: QWienerPath,
    t: float,
) -> np.ndarray:
    """Left-endpoint sum  sum_{s_j < t} kernel(t, s_j) sigma(s_j) dw_j.

    ``kernel=None`` is the identity.  ``sigma_values`` is either a callable of
    s or an array of operators (N x N_w) indexed by grid node.
    """
    grid = path.grid
    j_end = int(np.searchsorted(grid, t))
    if j_end >= grid.size or grid[j_end] != t:
        raise ValueError(f"time {t} is not a node of the noise grid")
    inc = path.increments
    total = None
    for j in range(j_end):
        sig = sigma_values(grid[j]) if callable(sigma_values) else np.asarray(sigma_values)[j]
        term = np.einsum("ij,...j->...i", np.asarray(sig, dtype=float), inc[..., j, :])
        if kernel is not None:
            term = np.einsum("ij,...j->...i", np.asarray(kernel(t, grid[j]), dtype=float), term)
        total = term if total is None else total + term
    if total is None:
        sig = sigma_values(grid[0]) if callable(sigma_values) else np.asarray(sigma_values)[0]
        return np.zeros(inc.shape[:-2] + (np.asarray(sig).shape[0],))
    return total


def hs_norm_sq(op, spec: QWienerSpec) -> float:
    """sum_n lambda_n |op e_n|^2, the squared norm of op Q^{1/2}."""
    op = np.atleast_2d(np.asarray(op, dtype=float))
    if op.shape[1] != spec.modes:
        raise ValueError(f"operator has {op.shape[1]} columns, noise has {spec.modes} modes")
    return float(np.sum(op**2 * spec.lambdas[None, :]))


def isometry_sum(
    kernel: Callable[[float, float], np.ndarray] | None,
    sigma_values: Callable[[float], np.ndarray] | np.ndarray,
    spec: QWienerSpec,
    grid,
    t: float,
) -> float:
    """Discrete Ito isometry sum_j ||kernel(t, s_j) sigma_j Q^{1/2}||_HS^2 ds_j."""
    grid = _check_grid(grid)
    j_end = int(np.searchsorted(grid, t))
    if j_end >= grid.size or grid[j_end] != t:
        raise ValueError(f"time {t} is not a node of the noise grid")
    out = 0.0
    for j in range(j_end):
        sig = sigma_values(grid[j]) if callable(sigma_values) else np.asarray(sigma_values)[j]
        op = np.asarray(sig, dtype=float)
        if kernel is not None:
            op = np.asarray(kernel(t, grid[j]), dtype=float) @ op
        out += hs_norm_sq(op, spec) * (grid[j + 1] - grid[j])
    return out
