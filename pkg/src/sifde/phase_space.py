"""rho-weighted phase space of histories on (-inf, 0].

A history segment is stored as samples on an increasing abscissa in theta;
a jump inside the window shows up as two samples at the same abscissa (left
limit first, then the value).  The norm is

    ||psi||_B = int_{-inf}^0 rho(s) sup_{s <= theta <= 0} |psi(theta)| ds

evaluated exactly for piecewise-constant running maxima: on each sample
interval the running sup is taken from the samples to its right and the
weight integral uses the closed-form cumulative mass of rho.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "RhoForm",
    "PhaseSpaceSpec",
    "HistoryPath",
    "HistorySegment",
    "prehistory_grid",
    "segment",
    "segment_layout",
    "b_norm",
    "b_norm_from_magnitudes",
    "expected_b_norm",
    "lemma21_bound",
]


@dataclass(frozen=True)
class RhoForm:
    """Weight rho on (-inf, 0].

    ``kind="exponential"`` is rho(s) = exp(rate * s).  ``kind="tabulated"``
    interpolates ``values`` linearly on ``theta`` (ending at 0) and takes the
    user-supplied ``total`` as l; mass below ``theta[0]`` is ``total`` minus
    the tabulated integral.
    """

    kind: str
    rate: float = 0.0
    theta: tuple[float, ...] = ()
    values: tuple[float, ...] = ()
    total: float = 0.0

    def __post_init__(self) -> None:
        if self.kind == "exponential":
            if not (self.rate > 0.0 and math.isfinite(self.rate)):
                raise ValueError(f"exponential rho needs a positive rate, got {self.rate}")
        elif self.kind == "tabulated":
            th = np.asarray(self.theta, dtype=float)
            va = np.asarray(self.values, dtype=float)
            if th.size < 2 or th.shape != va.shape:
                raise ValueError("tabulated rho needs matching theta/values of length >= 2")
            if np.any(np.diff(th) <= 0) or th[-1] != 0.0:
                raise ValueError("tabulated theta must increase strictly and end at 0")
            if np.any(va <= 0):
                raise ValueError("rho must be positive")
            if self.total < self._table_mass() * (1.0 - 1e-12):
                raise ValueError("total mass l is smaller than the tabulated integral")
        else:
            raise ValueError(f"unsupported rho form {self.kind!r}")

    @classmethod
    def exponential(cls, rate: float) -> "RhoForm":
        return cls("exponential", rate=float(rate))

    def _table_mass(self) -> float:
        th = np.asarray(self.theta)
        va = np.asarray(self.values)
        return float(np.sum(0.5 * (va[1:] + va[:-1]) * np.diff(th)))

    @property
    def l(self) -> float:
        """int_{-inf}^0 rho."""
        if self.kind == "exponential":
            return 1.0 / self.rate
        return float(self.total)

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.kind == "exponential":
            return np.exp(self.rate * s)
        th = np.asarray(self.theta)
        return np.interp(s, th, np.asarray(self.values), left=self.values[0])

    def cumulative(self, s) -> np.ndarray:
        """W(s) = int_{-inf}^s rho for s <= 0."""
        s = np.asarray(s, dtype=float)
        if self.kind == "exponential":
            return np.exp(self.rate * np.minimum(s, 0.0)) / self.rate
        th = np.asarray(self.theta)
        va = np.asarray(self.values)
        below = self.total - self._table_mass()
        seg = 0.5 * (va[1:] + va[:-1]) * np.diff(th)
        cum = below + np.concatenate([[0.0], np.cumsum(seg)])
        # exact integral of the linear interpolant up to s
        idx = np.clip(np.searchsorted(th, s, side="right") - 1, 0, th.size - 2)
        h = s - th[idx]
        slope = (va[idx + 1] - va[idx]) / (th[idx + 1] - th[idx])
        inside = cum[idx] + va[idx] * h + 0.5 * slope * h * h
        return np.where(s < th[0], below, np.minimum(inside, self.total))

    def mass(self, a: float, b: float) -> float:
        """int_a^b rho for a <= b <= 0."""
        return float(self.cumulative(b) - self.cumulative(a))


@dataclass(frozen=True)
class PhaseSpaceSpec:
    """Weight rho together with the truncation of the infinite past."""

    rho: RhoForm
    truncation_horizon: float
    tail_tolerance: float

    def __post_init__(self) -> None:
        if not self.truncation_horizon > 0:
            raise ValueError("truncation horizon must be positive")
        if not self.tail_tolerance > 0:
            raise ValueError("tail tolerance must be positive")
        if self.rho.kind == "tabulated" and self.rho.theta[0] > -self.truncation_horizon:
            raise ValueError("tabulated rho must cover [-T_h, 0]")
        tail = self.tail_mass
        if tail > self.tail_tolerance:
            raise ValueError(
                f"rho mass beyond -T_h is {tail:.3e}, above tolerance {self.tail_tolerance:.3e}"
            )

    @classmethod
    def exponential(cls, rate: float, tail_tolerance: float = 1e-12) -> "PhaseSpaceSpec":
        """rho(s) = exp(rate s) with the shortest horizon meeting the tail tolerance."""
        rate = float(rate)
        horizon = max(-math.log(rate * tail_tolerance) / rate, 1.0)
        # nudge up so the strict check survives rounding
        return cls(RhoForm.exponential(rate), horizon * (1.0 + 1e-12), float(tail_tolerance))

    @property
    def l(self) -> float:
        return self.rho.l

    @property
    def tail_mass(self) -> float:
        return float(self.rho.cumulative(-self.truncation_horizon))

    def a1_constant(self, delta: float) -> float:
        """Constant L with |psi(0)| <= L ||psi||_B for histories sampled at spacing delta."""
        return 1.0 / self.rho.mass(-float(delta), 0.0)


def prehistory_grid(horizon: float, step: float, growth: float = 1.05, max_step: float = 0.05) -> np.ndarray:
    """Increasing abscissae from at most -horizon up to 0.

    Spacing starts at ``step`` next to 0 and grows geometrically up to ``max_step``.
    """
    if not (horizon > 0 and step > 0):
        raise ValueError("horizon and step must be positive")
    pts = [0.0]
    h = float(step)
    cap = max(float(max_step), h)
    while pts[-1] > -horizon:
        pts.append(pts[-1] - h)
        h = min(h * growth, cap)
    return np.asarray(pts[::-1])


@dataclass(frozen=True, eq=False)
class HistoryPath:
    """Cadlag path on [0, b] plus the prehistory phi on [-T_h, 0].

    ``values`` hold right limits at the grid nodes; ``left_values[k]`` is the
    left limit at node ``jump_indices[k]``.  Leading axes (e.g. Monte Carlo
    paths) are allowed in front of the (sample, state) axes.
    """

    pre_theta: np.ndarray
    pre_values: np.ndarray
    grid: np.ndarray
    values: np.ndarray
    jump_indices: tuple[int, ...] = ()
    left_values: np.ndarray | None = None
    phi: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        pre_theta = np.asarray(self.pre_theta, dtype=float)
        grid = np.asarray(self.grid, dtype=float)
        pre_values = np.asarray(self.pre_values, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if pre_theta[-1] != 0.0 or np.any(np.diff(pre_theta) <= 0):
            raise ValueError("prehistory abscissae must increase strictly and end at 0")
        if grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
            raise ValueError("path grid must start at 0 and increase strictly")
        if pre_values.shape[-2] != pre_theta.size or values.shape[-2] != grid.size:
            raise ValueError("sample counts do not match their grids")
        jumps = tuple(int(j) for j in self.jump_indices)
        if any(j <= 0 or j >= grid.size for j in jumps) or list(jumps) != sorted(set(jumps)):
            raise ValueError("jump indices must be increasing interior nodes")
        if self.left_values is None:
            left = values[..., list(jumps), :]
        else:
            left = np.asarray(self.left_values, dtype=float)
        if left.shape[-2] != len(jumps):
            raise ValueError("one left limit per jump index is required")
        object.__setattr__(self, "pre_theta", pre_theta)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "pre_values", pre_values)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "jump_indices", jumps)
        object.__setattr__(self, "left_values", left)

    @property
    def jump_times(self) -> np.ndarray:
        return self.grid[list(self.jump_indices)]

    def node_index(self, t: float) -> int:
        j = int(np.searchsorted(self.grid, t))
        if j >= self.grid.size or self.grid[j] != t:
            raise ValueError(f"time {t} is not a node of the path grid")
        return j

    def stacked(self) -> np.ndarray:
        """Prehistory (theta < 0), node values and left limits along one sample axis."""
        return np.concatenate(
            [self.pre_values[..., :-1, :], self.values, self.left_values], axis=-2
        )


@dataclass(frozen=True, eq=False)
class HistorySegment:
    """theta -> x(t + theta) on the induced grid of [-T_h, 0]."""

    anchor_time: float
    theta: np.ndarray
    samples: np.ndarray

    @property
    def value(self) -> np.ndarray:
        return self.samples[..., -1, :]


def segment_layout(
    pre_theta: np.ndarray,
    grid: np.ndarray,
    jump_indices: tuple[int, ...],
    horizon: float,
    j: int,
    side: str = "right",
) -> tuple[np.ndarray, np.ndarray]:
    """Indices into ``HistoryPath.stacked()`` and abscissae of the segment at node ``j``.

    ``side="left"`` ends the segment with the left limit at a jump node.
    """
    if side not in ("right", "left"):
        raise ValueError("side must be 'right' or 'left'")
    t = float(grid[j])
    n_pre = pre_theta.size - 1
    n_nodes = grid.size
    pre_idx = np.nonzero(pre_theta[:-1] >= t - horizon)[0]
    idx = list(pre_idx)
    ab = list(pre_theta[pre_idx])
    jump_pos = {node: k for k, node in enumerate(jump_indices)}
    for k in range(j + 1):
        if grid[k] < t - horizon:
            continue
        if k in jump_pos:
            idx.append(n_pre + n_nodes + jump_pos[k])
            ab.append(grid[k])
            if k == j and side == "left":
                break
        idx.append(n_pre + k)
        ab.append(grid[k])
    return np.asarray(idx, dtype=int), np.asarray(ab, dtype=float) - t


def segment(path: HistoryPath, t: float, horizon: float, side: str = "right") -> HistorySegment:
    """The history x_t restricted to [-horizon, 0]; ``t`` must be a grid node."""
    j = path.node_index(float(t))
    idx, theta = segment_layout(path.pre_theta, path.grid, path.jump_indices, horizon, j, side)
    return HistorySegment(float(t), theta, path.stacked()[..., idx, :])


def b_norm_from_magnitudes(theta: np.ndarray, magnitudes: np.ndarray, spec: PhaseSpaceSpec) -> np.ndarray:
    """B-norm from sample magnitudes |psi(theta_k)| on an increasing abscissa.

    Leading axes of ``magnitudes`` are batch axes.
    """
    theta = np.asarray(theta, dtype=float)
    mags = np.asarray(magnitudes, dtype=float)
    # running sup from the right
    running = np.flip(np.maximum.accumulate(np.flip(mags, axis=-1), axis=-1), axis=-1)
    w = spec.rho.cumulative(theta)
    interval = np.diff(w)
    out = (running[..., 1:] * interval).sum(axis=-1)
    # mass left of the first sample sees the full-window sup
    return out + running[..., 0] * w[0]


def b_norm(seg: HistorySegment, spec: PhaseSpaceSpec) -> np.ndarray | float:
    """Pathwise B-norm; returns an array when the segment carries batch axes."""
    mags = np.linalg.norm(seg.samples, axis=-1)
    out = b_norm_from_magnitudes(seg.theta, mags, spec)
    return float(out) if np.ndim(out) == 0 else out


def expected_b_norm(seg: HistorySegment, spec: PhaseSpaceSpec) -> float:
    """Norm with (E|psi(theta)|^2)^{1/2}, the mean taken over the leading axis."""
    mags = np.sqrt(np.mean(np.sum(seg.samples**2, axis=-1), axis=0))
    return float(b_norm_from_magnitudes(seg.theta, mags, spec))


def lemma21_bound(N_b: float, Gamma_b: float, norm_phi: float, sup_path: float) -> float:
    """N_b ||phi||_B + Gamma_b sup_{0<=r<=s} |x(r)|."""
    return float(N_b) * float(norm_phi) + float(Gamma_b) * float(sup_path)
