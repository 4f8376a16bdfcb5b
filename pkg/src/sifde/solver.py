"""Mild-solution map and successive approximations.

For a history x on the grid the map returns, at every node t,

    S(t)phi(0) + Sint(t)[x1 - g(0, phi)]
    + sum_{t_i <= t} S(t - t_i) I_i + Sint(t - t_i)[J_i - g(t_i, x_{t_i} + I_i) + g(t_i, x_{t_i})]
    + int_0^t S(t - s) g(s, x_s) ds + int_0^t T(t - s) f(s, x_s) ds
    + sum_{s_k < t} T(t - s_k) sigma(s_k, x_{s_k}) dw_k

with Sint(t) = int_0^t S exact, trapezoid sums for the two convolutions
(left limits at the right end of an interval that ends on an impulse node)
and the left-endpoint Ito sum.  Impulse maps read the pre-impulse segment.
All kernels act diagonally in the eigenbasis of A and are tabulated once
per (A, q, grid).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .mittag import SpectralOperator, mittag_leffler
from .noise import QWienerPath
from .phase_space import HistoryPath, HistorySegment, prehistory_grid, segment, segment_layout
from .problem import LinearFunctional, OperatorCoefficient, ProblemSpec, VectorCoefficient

__all__ = [
    "GridSpec",
    "Trajectory",
    "PicardDiagnostics",
    "PicardConfig",
    "MildMap",
    "build_grid",
    "mild_evaluate",
    "picard_solve",
    "iterate_diff",
    "mean_diff_sequence",
    "history_path",
]

_CHUNK = 64


@dataclass(frozen=True)
class GridSpec:
    horizon: float
    base_steps: int
    refined: bool = False

    def __post_init__(self) -> None:
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if int(self.base_steps) < 1:
            raise ValueError("base_steps must be positive")

    @property
    def step(self) -> float:
        return self.horizon / self.base_steps


def build_grid(spec: GridSpec, impulse_times=()) -> tuple[np.ndarray, tuple[int, ...]]:
    """Uniform nodes plus every impulse time; returns (times, impulse node indices)."""
    n = int(spec.base_steps)
    h = spec.step
    nodes = [k * h for k in range(n)] + [float(spec.horizon)]
    extra = []
    for t in impulse_times:
        t = float(t)
        if not (0.0 < t < spec.horizon):
            raise ValueError(f"impulse time {t} outside (0, b)")
        k = int(round(t / h))
        if abs(k * h - t) <= 1e-12 * spec.horizon:
            nodes[k] = t
        else:
            extra.append(t)
        if spec.refined:
            nxt = (math.floor(t / h) + 1) * h
            extra.append(t + 0.25 * min(h, nxt - t) if nxt - t > 1e-12 * spec.horizon else t + 0.25 * h)
    times = np.unique(np.asarray(nodes + extra, dtype=float))
    idx = tuple(int(np.searchsorted(times, float(t))) for t in impulse_times)
    return times, idx


@dataclass(frozen=True)
class PicardDiagnostics:
    iterations: int
    diffs: tuple[float, ...]
    converged: bool
    tolerance_used: float


@dataclass(frozen=True)
class PicardConfig:
    tolerance: float = 1e-8
    max_iterations: int = 25

    def __post_init__(self) -> None:
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Node values (right limits) and left limits at the impulse nodes.

    Arrays may carry a leading path axis; ``diagnostics`` then holds one
    entry per path.
    """

    grid: np.ndarray
    values: np.ndarray
    impulse_indices: tuple[int, ...]
    left_limits: np.ndarray
    diagnostics: tuple[PicardDiagnostics, ...] = field(default=())

    @property
    def is_batch(self) -> bool:
        return self.values.ndim == 3

    def path(self, p: int) -> "Trajectory":
        diag = (self.diagnostics[p],) if self.diagnostics else ()
        return Trajectory(self.grid, self.values[p], self.impulse_indices, self.left_limits[p], diag)


def iterate_diff(a: Trajectory, b: Trajectory):
    """sup over nodes of |a(t) - b(t)|^2 (per path for batches)."""
    if a.grid.shape != b.grid.shape or not np.array_equal(a.grid, b.grid):
        raise ValueError("trajectories live on different grids")
    return _sup_sq(a.values - b.values)


def _sup_sq(d: np.ndarray):
    out = np.max(np.sum(d * d, axis=-1), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def mean_diff_sequence(diagnostics) -> np.ndarray:
    """Ensemble mean of per-path diffs; a converged path contributes 0 afterwards."""
    length = max(len(d.diffs) for d in diagnostics)
    table = np.zeros((len(diagnostics), length))
    for p, d in enumerate(diagnostics):
        table[p, : len(d.diffs)] = d.diffs
    return table.mean(axis=0)


# ---------------------------------------------------------------------------
# kernel tables


@lru_cache(maxsize=16)
def _kernel_tables(A: SpectralOperator, q: float, times_key: tuple[float, ...]):
    """S, T, Sint at t_j - t_k (k <= j), shape (n, n, N); zero above the diagonal."""
    t = np.asarray(times_key)
    n = t.size
    jj, kk = np.tril_indices(n)
    d = np.round(t[jj] - t[kk], 13)
    uniq, inv = np.unique(d, return_inverse=True)
    lam = A.eigenvalues
    z = lam[None, :] * uniq[:, None] ** q
    s_u = mittag_leffler(z, q, 1.0)
    with np.errstate(divide="ignore"):
        pw = np.where(uniq > 0, uniq ** (q - 1.0), 0.0)
    t_u = pw[:, None] * mittag_leffler(z, q, q)
    i_u = uniq[:, None] * mittag_leffler(z, q, 2.0)
    tables = []
    for vals in (s_u, t_u, i_u):
        full = np.zeros((n, n, lam.size))
        full[jj, kk] = vals[inv]
        full.setflags(write=False)
        tables.append(full)
    return tuple(tables)


# ---------------------------------------------------------------------------
# the mild map


def history_path(spec: ProblemSpec, times: np.ndarray, impulse_idx, values, left, pre_theta=None) -> HistoryPath:
    if pre_theta is None:
        pre_theta = _pre_theta(spec, times)
    pre = spec.phi(pre_theta)
    if np.ndim(values) == 3:
        pre = np.broadcast_to(pre, (values.shape[0],) + pre.shape)
    return HistoryPath(pre_theta, pre, times, values, tuple(impulse_idx), left)


def _pre_theta(spec: ProblemSpec, times: np.ndarray) -> np.ndarray:
    h = float(np.min(np.diff(times)))
    theta = prehistory_grid(spec.phase.truncation_horizon, h)
    return theta[theta >= -spec.phase.truncation_horizon]


@dataclass
class _FunctionalOps:
    """Weights of one functional for right segments, left segments and appended-jump segments."""

    right_pre: np.ndarray  # (n, N) constant prehistory contribution
    right_path: np.ndarray  # (n, n + m)
    left_pre: np.ndarray  # (m, N)
    left_path: np.ndarray  # (m, n + m)
    plus_pre: np.ndarray
    plus_path: np.ndarray
    plus_last: np.ndarray  # (m,) weight of the appended sample


class MildMap:
    """The mild-solution operator for one problem on one grid."""

    def __init__(self, spec: ProblemSpec, times: np.ndarray, impulse_idx: tuple[int, ...]):
        self.spec = spec
        self.times = np.asarray(times, dtype=float)
        self.impulse_idx = tuple(impulse_idx)
        self.n = self.times.size
        self.m = len(self.impulse_idx)
        self.N = spec.dimension
        self.pre_theta = _pre_theta(spec, self.times)
        self.pre_values = spec.phi(self.pre_theta)
        self.horizon = spec.phase.truncation_horizon
        S, T, Sint = _kernel_tables(spec.A, spec.q, tuple(self.times.tolist()))
        self.S, self.T, self.Sint = S, T, Sint
        h = np.diff(self.times)
        start = np.zeros((self.n, self.n))
        end = np.zeros((self.n, self.n))
        for j in range(1, self.n):
            start[j, :j] = 0.5 * h[:j]
            end[j, 1 : j + 1] = 0.5 * h[:j]
        # mode-major kernels for batched matmul
        self.KS_start = np.ascontiguousarray(np.moveaxis(S * start[:, :, None], 2, 0))
        self.KS_end = np.ascontiguousarray(np.moveaxis(S * end[:, :, None], 2, 0))
        self.KT_start = np.ascontiguousarray(np.moveaxis(T * start[:, :, None], 2, 0))
        self.KT_end = np.ascontiguousarray(np.moveaxis(T * end[:, :, None], 2, 0))
        self.KT_ito = np.ascontiguousarray(np.moveaxis(T[:, :-1, :], 2, 0))
        c = spec.coefficients
        self._coefs = {"g": c.g, "f": c.f, "sigma": c.sigma}
        self.generic = not (
            isinstance(c.g, VectorCoefficient)
            and isinstance(c.f, VectorCoefficient)
            and isinstance(c.sigma, OperatorCoefficient)
            and all(isinstance(mp, VectorCoefficient) for mp in spec.impulses.I + spec.impulses.J)
        )
        self._ops: dict[LinearFunctional, _FunctionalOps] = {}
        if not self.generic:
            for coef in [c.g, c.f, c.sigma, *spec.impulses.I, *spec.impulses.J]:
                if coef.functional not in self._ops:
                    self._ops[coef.functional] = self._build_ops(coef.functional)
        # initial iterate (first two terms) in spectral coordinates
        phi0 = self.pre_values[-1]
        seg0 = HistorySegment(0.0, self.pre_theta, self.pre_values)
        self.g0 = np.asarray(c.g(0.0, seg0), dtype=float)
        a = spec.A.to_spectral(phi0)
        b = spec.A.to_spectral(spec.x1 - self.g0)
        self.x0_hat = S[:, 0, :] * a + Sint[:, 0, :] * b

    # -- functional weights -------------------------------------------------

    def _build_ops(self, fn: LinearFunctional) -> _FunctionalOps:
        n, m = self.n, self.m
        n_pre = self.pre_theta.size - 1
        sat_pre = fn.saturate(self.pre_values[:-1])

        def split(idx, w):
            pre_part = np.zeros(self.N)
            path = np.zeros(n + m)
            is_pre = idx < n_pre
            if np.any(is_pre):
                pre_part = w[is_pre] @ sat_pre[idx[is_pre]]
            np.add.at(path, idx[~is_pre] - n_pre, w[~is_pre])
            return pre_part, path

        rp, rw = np.zeros((n, self.N)), np.zeros((n, n + m))
        for j in range(n):
            idx, th = segment_layout(self.pre_theta, self.times, self.impulse_idx, self.horizon, j)
            rp[j], rw[j] = split(idx, fn.weights(th))
        lp, lw = np.zeros((m, self.N)), np.zeros((m, n + m))
        pp, pw, last = np.zeros((m, self.N)), np.zeros((m, n + m)), np.zeros(m)
        for i, j in enumerate(self.impulse_idx):
            idx, th = segment_layout(self.pre_theta, self.times, self.impulse_idx, self.horizon, j, "left")
            lp[i], lw[i] = split(idx, fn.weights(th))
            w = fn.weights(np.append(th, 0.0))
            pp[i], pw[i] = split(idx, w[:-1])
            last[i] = w[-1]
        return _FunctionalOps(rp, rw, lp, lw, pp, pw, last)

    # -- evaluation ---------------------------------------------------------

    def initial(self, paths: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        x0 = self.spec.A.from_spectral(self.x0_hat)
        left = x0[list(self.impulse_idx)]
        if paths is None:
            return x0, left
        return np.broadcast_to(x0, (paths,) + x0.shape).copy(), np.broadcast_to(left, (paths,) + left.shape).copy()

    def _functional_values(self, fn, stacked_sat):
        ops = self._ops[fn]
        right = ops.right_pre + np.einsum("jk,pkn->pjn", ops.right_path, stacked_sat)
        left = ops.left_pre + np.einsum("ik,pkn->pin", ops.left_path, stacked_sat)
        return right, left

    def _plus_values(self, fn, stacked_sat, appended):
        ops = self._ops[fn]
        return (
            ops.plus_pre
            + np.einsum("ik,pkn->pin", ops.plus_path, stacked_sat)
            + ops.plus_last[None, :, None] * fn.saturate(appended)
        )

    def _coefficient_values(self, X, XL, dw):
        """g right/left, f right/left, sigma dw, I, J, g(t_i, x_{t_i} + I_i)."""
        spec = self.spec
        c = spec.coefficients
        imp = spec.impulses
        stacked = np.concatenate([X, XL], axis=1)
        if self.generic:
            return self._generic_values(X, XL, dw)
        cache: dict = {}

        def fvals(fn):
            if fn not in cache:
                cache[fn] = self._functional_values(fn, fn.saturate(stacked))
            return cache[fn]

        gR, gLf = fvals(c.g.functional)
        g_right = c.g.from_functional(gR)
        g_left = c.g.from_functional(gLf)
        fR, fLf = fvals(c.f.functional)
        f_right = c.f.from_functional(fR)
        f_left = c.f.from_functional(fLf)
        sR, _ = fvals(c.sigma.functional)
        ito = c.sigma.apply_from_functional(sR[:, :-1, :], dw)
        P = X.shape[0]
        I_vals = np.zeros((P, self.m, self.N))
        J_vals = np.zeros((P, self.m, self.N))
        for i in range(self.m):
            I_vals[:, i] = imp.I[i].from_functional(fvals(imp.I[i].functional)[1][:, i])
            J_vals[:, i] = imp.J[i].from_functional(fvals(imp.J[i].functional)[1][:, i])
        if self.m:
            appended = XL + I_vals
            g_sat = c.g.functional.saturate(stacked)
            g_plus = c.g.from_functional(self._plus_values(c.g.functional, g_sat, appended))
        else:
            g_plus = np.zeros_like(I_vals)
        return g_right, g_left, f_right, f_left, ito, I_vals, J_vals, g_plus

    def _generic_values(self, X, XL, dw):
        spec = self.spec
        c = spec.coefficients
        imp = spec.impulses
        path = history_path(spec, self.times, self.impulse_idx, X, XL, self.pre_theta)
        P = X.shape[0]
        g_right = np.zeros((P, self.n, self.N))
        f_right = np.zeros((P, self.n, self.N))
        ito = np.zeros((P, self.n - 1, self.N))
        for j, t in enumerate(self.times):
            seg = segment(path, t, self.horizon)
            g_right[:, j] = c.g(t, seg)
            f_right[:, j] = c.f(t, seg)
            if j < self.n - 1:
                sig = np.asarray(c.sigma(t, seg), dtype=float)
                ito[:, j] = np.einsum("pij,pj->pi" if sig.ndim == 3 else "ij,pj->pi", sig, dw[:, j])
        g_left = np.zeros((P, self.m, self.N))
        f_left = np.zeros((P, self.m, self.N))
        I_vals = np.zeros((P, self.m, self.N))
        J_vals = np.zeros((P, self.m, self.N))
        g_plus = np.zeros((P, self.m, self.N))
        for i, j in enumerate(self.impulse_idx):
            t = float(self.times[j])
            seg = segment(path, t, self.horizon, side="left")
            g_left[:, i] = c.g(t, seg)
            f_left[:, i] = c.f(t, seg)
            I_vals[:, i] = imp.I[i](t, seg)
            J_vals[:, i] = imp.J[i](t, seg)
            plus = HistorySegment(
                t,
                np.append(seg.theta, 0.0),
                np.concatenate([seg.samples, (seg.value + I_vals[:, i])[:, None, :]], axis=1),
            )
            g_plus[:, i] = c.g(t, plus)
        return g_right, g_left, f_right, f_left, ito, I_vals, J_vals, g_plus

    def apply(self, X: np.ndarray, XL: np.ndarray, dw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """One application of the mild map to a batch (P, n, N) with left limits (P, m, N)."""
        A = self.spec.A
        g_r, g_l, f_r, f_l, ito, I_vals, J_vals, g_plus = self._coefficient_values(X, XL, dw)
        idx = list(self.impulse_idx)
        g_end = g_r.copy()
        f_end = f_r.copy()
        if self.m:
            g_end[:, idx] = g_l
            f_end[:, idx] = f_l

        def modes(v):  # (P, k, N) -> (N, k, P) in spectral coordinates
            return np.ascontiguousarray(np.transpose(A.to_spectral(v), (2, 1, 0)))

        acc = (
            self.KS_start @ modes(g_r)
            + self.KS_end @ modes(g_end)
            + self.KT_start @ modes(f_r)
            + self.KT_end @ modes(f_end)
            + self.KT_ito @ modes(ito)
        )
        out_hat = np.transpose(acc, (2, 1, 0)) + self.x0_hat[None]
        if self.m:
            I_hat = A.to_spectral(I_vals)
            B_hat = A.to_spectral(J_vals - g_plus + g_l)
            for i, j in enumerate(self.impulse_idx):
                out_hat[:, j:] += self.S[j:, j, :][None] * I_hat[:, i, None, :]
                out_hat[:, j:] += self.Sint[j:, j, :][None] * B_hat[:, i, None, :]
        X_new = A.from_spectral(out_hat)
        XL_new = X_new[:, idx] - I_vals if self.m else np.zeros((X.shape[0], 0, self.N))
        return X_new, XL_new


def _prepare(spec: ProblemSpec, grid: GridSpec, noise: QWienerPath) -> tuple[MildMap, np.ndarray, bool]:
    if abs(grid.horizon - spec.horizon) > 1e-12 * spec.horizon:
        raise ValueError("grid horizon differs from the problem horizon")
    times, idx = build_grid(grid, spec.impulses.times)
    if noise.grid.shape != times.shape or not np.array_equal(noise.grid, times):
        raise ValueError("noise path grid does not match the solver grid")
    if noise.increments.shape[-1] != spec.noise.modes:
        raise ValueError("noise path has the wrong number of modes")
    dw = noise.increments
    single = dw.ndim == 2
    if single:
        dw = dw[None]
    return MildMap(spec, times, idx), dw, single


def mild_evaluate(spec: ProblemSpec, grid: GridSpec, noise: QWienerPath, input: Trajectory) -> Trajectory:
    """Apply the mild-solution map once to ``input``."""
    mm, dw, single = _prepare(spec, grid, noise)
    if not np.array_equal(input.grid, mm.times):
        raise ValueError("input trajectory grid does not match the solver grid")
    X = input.values[None] if single else input.values
    XL = input.left_limits[None] if single else input.left_limits
    Xn, XLn = mm.apply(X, XL, dw)
    if single:
        Xn, XLn = Xn[0], XLn[0]
    return Trajectory(mm.times, Xn, mm.impulse_idx, XLn)


def _solve_chunk(mm: MildMap, dw: np.ndarray, config: PicardConfig):
    P = dw.shape[0]
    X, XL = mm.initial(P)
    active = np.ones(P, dtype=bool)
    diffs: list[list[float]] = [[] for _ in range(P)]
    for _ in range(config.max_iterations):
        if not np.any(active):
            break
        Xn, XLn = mm.apply(X, XL, dw)
        d = np.max(np.sum((Xn - X) ** 2, axis=-1), axis=-1)
        for p in np.nonzero(active)[0]:
            diffs[p].append(float(d[p]))
        X[active] = Xn[active]
        XL[active] = XLn[active]
        active &= d > config.tolerance
    diags = tuple(
        PicardDiagnostics(len(diffs[p]), tuple(diffs[p]), bool(diffs[p][-1] <= config.tolerance), config.tolerance)
        for p in range(P)
    )
    return X, XL, diags


def picard_solve(
    spec: ProblemSpec,
    grid: GridSpec,
    noise: QWienerPath,
    config: PicardConfig | None = None,
    workers: int = 1,
    chunk: int = _CHUNK,
) -> tuple[Trajectory, PicardDiagnostics | tuple[PicardDiagnostics, ...]]:
    """Successive approximations from x^0 = S(t)phi(0) + Sint(t)[x1 - g(0, phi)].

    Every iterate reuses the same noise increments.  Each path stops on its own
    once sup_t |x^n - x^{n-1}|^2 <= tolerance; paths are processed in fixed
    chunks so results do not depend on ``workers``.
    """
    config = config or PicardConfig()
    mm, dw, single = _prepare(spec, grid, noise)
    P = dw.shape[0]
    bounds = [(s, min(s + chunk, P)) for s in range(0, P, chunk)]
    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: _solve_chunk(mm, dw[b[0] : b[1]], config), bounds))
    else:
        parts = [_solve_chunk(mm, dw[a:b], config) for a, b in bounds]
    X = np.concatenate([p[0] for p in parts])
    XL = np.concatenate([p[1] for p in parts])
    diags = tuple(d for p in parts for d in p[2])
    if single:
        traj = Trajectory(mm.times, X[0], mm.impulse_idx, XL[0], diags)
        return traj, diags[0]
    return Trajectory(mm.times, X, mm.impulse_idx, XL, diags), diags
