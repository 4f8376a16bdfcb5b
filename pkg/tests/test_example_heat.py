from __future__ import annotations

import dataclasses
import math

import numpy as np
import pytest
from scipy import integrate

from sifde.example_heat import (
    HeatExampleParams,
    build_heat_example,
    compute_kernel_constants,
    heat_constants,
    lipschitz_constants,
    impulse_kernel_condition,
    truncation_estimate,
)
from sifde.noise import sample_paths
from sifde.phase_space import HistorySegment, b_norm, lemma21_bound, segment
from sifde.problem import check_existence_condition, check_lemma31_condition
from sifde.solver import GridSpec, PicardConfig, build_grid, history_path, picard_solve


def _solve(spec, steps, paths, seed=0):
    grid = GridSpec(spec.horizon, steps)
    times, _ = build_grid(grid, spec.impulses.times)
    noise = sample_paths(spec.noise.with_seed(seed), times, paths)
    return picard_solve(spec, grid, noise, PicardConfig(1e-10, 25))


def test_spectrum_and_eigenfunctions(heat_spec):
    N = heat_spec.dimension
    assert N == 8
    assert np.array_equal(heat_spec.A.eigenvalues, -np.arange(1, N + 1, dtype=float) ** 2)
    for n in range(1, N + 1):
        norm = integrate.quad(lambda x: 2.0 / math.pi * math.sin(n * x) ** 2, 0.0, math.pi)[0]
        assert norm == pytest.approx(1.0, rel=1e-12)


def test_kernel_constants_closed_forms():
    kc = compute_kernel_constants(HeatExampleParams(p_scale=1.0, p_rate=3.0, q_scale=0.0))
    assert kc.l == 0.5
    assert kc.p == (0.5, 0.5)
    assert kc.q == (0.0, 0.0)
    quad = integrate.quad(lambda t: math.exp(6 * t - 2 * t), -np.inf, 0.0)[0]
    assert kc.p[0] == pytest.approx(math.sqrt(quad), rel=1e-12)


def test_kernel_constant_L0_against_quadrature():
    params = HeatExampleParams()
    kc = compute_kernel_constants(params)
    c, r, s = params.rho_rate, params.h_rate, params.h_scale

    def inner(k):
        # (d^k/dx^k sin x)^2 integrates to pi/2 for k = 0, 1
        val = integrate.tplquad(
            lambda eta, x, t: (s * math.exp(r * t) * math.sin(eta) * (math.sin(x) if k == 0 else math.cos(x))) ** 2
            / math.exp(c * t),
            -40.0, 0.0, 0.0, math.pi, 0.0, math.pi,
        )[0]
        return math.sqrt(val)

    expected = max(inner(0), inner(1))
    assert kc.L0 == pytest.approx(expected, rel=1e-6)


def test_zero_kernels_give_zero_maps():
    spec = build_heat_example(HeatExampleParams(h_scale=0.0, p_scale=0.0, q_scale=0.0))
    c = spec.coefficients
    assert c.g.is_zero
    assert all(I.is_zero for I in spec.impulses.I)
    assert all(J.is_zero for J in spec.impulses.J)
    assert spec.impulses.p == (0.0, 0.0) and spec.impulses.q == (0.0, 0.0)


def test_unsupported_family_and_divergence():
    with pytest.raises(ValueError, match="unsupported"):
        compute_kernel_constants(HeatExampleParams(h_family="gaussian"))
    with pytest.raises(ValueError, match="unsupported"):
        compute_kernel_constants(HeatExampleParams(impulse_family="power"))
    with pytest.raises(ValueError, match=r"\(b\)"):
        compute_kernel_constants(HeatExampleParams(p_rate=0.5))
    with pytest.raises(ValueError, match=r"\(c\)"):
        compute_kernel_constants(HeatExampleParams(q_rate=1.0))
    with pytest.raises(ValueError, match=r"\(a\)"):
        compute_kernel_constants(HeatExampleParams(h_rate=1.0))
    with pytest.raises(ValueError):
        lipschitz_constants(HeatExampleParams(f_rate=1.0))


def test_default_condition_has_headroom(heat_spec, heat_consts):
    kc = compute_kernel_constants(HeatExampleParams())
    value = impulse_kernel_condition(heat_consts, kc)
    assert value < 1.0
    rep = check_existence_condition(heat_spec, heat_consts)
    assert rep.satisfied and rep.value < 0.5
    assert check_lemma31_condition(heat_spec, heat_consts).satisfied


def test_impulse_kernel_condition_arithmetic():
    from conftest import unit_constants
    from sifde.example_heat import KernelConstants

    kc = KernelConstants(0.0, (0.01, 0.02), (0.005, 0.0), 0.5)
    # m = 2, M = 1: max{14*0.5*0.03 + 28*0.5*0.005, 14*0.03 + 14*0.005}
    assert impulse_kernel_condition(unit_constants(), kc) == pytest.approx(max(0.21 + 0.07, 0.42 + 0.07), rel=1e-15)


def test_scaling_impulses_breaks_existence(heat_consts):
    big = build_heat_example(HeatExampleParams(p_scale=0.2, q_scale=0.2))
    consts = heat_constants(big)
    assert not check_existence_condition(big, consts).satisfied


def test_phase_space_bound_along_trajectories(heat_spec):
    traj, diags = _solve(heat_spec, 60, 3)
    assert all(d.converged for d in diags)
    phase = heat_spec.phase
    norm_phi = heat_spec.phi_norm()
    for p in range(3):
        path = history_path(heat_spec, traj.grid, traj.impulse_indices, traj.values[p], traj.left_limits[p])
        mags = np.linalg.norm(traj.values[p], axis=-1)
        for k in range(0, traj.grid.size, 7):
            t = traj.grid[k]
            seg = segment(path, t, phase.truncation_horizon)
            lhs = b_norm(seg, phase)
            sup = float(np.max(mags[: k + 1]))
            if traj.impulse_indices:
                left = np.linalg.norm(traj.left_limits[p], axis=-1)
                sup = max([sup] + [left[i] for i, j in enumerate(traj.impulse_indices) if j <= k])
            assert lhs <= lemma21_bound(1.0, phase.l, norm_phi, sup) * (1 + 1e-9)


def test_saturated_impulse_map_is_lipschitz(heat_spec):
    J = heat_spec.impulses.J[0]
    fn = J.functional
    rng = np.random.default_rng(11)
    theta = np.linspace(-12.0, 0.0, 241)
    rho = np.asarray(heat_spec.phase.rho(theta))
    assert np.allclose(rho, np.exp(2.0 * theta))
    q1 = heat_spec.impulses.q[0]
    for _ in range(50):
        a = rng.normal(scale=3.0, size=(theta.size, heat_spec.dimension))
        b = a + rng.normal(scale=rng.choice([1e-3, 1.0]), size=a.shape)
        sa, sb = fn.saturate(a), fn.saturate(b)
        # pointwise: the saturation never expands distances
        assert np.all(np.linalg.norm(sa - sb, axis=-1) <= np.linalg.norm(a - b, axis=-1) * (1 + 1e-12))
        # the impulse map obeys the weighted-L2 constant
        diff = np.linalg.norm(J(0.0, HistorySegment(0.0, theta, a)) - J(0.0, HistorySegment(0.0, theta, b)))
        d2 = np.sum((a - b) ** 2, axis=-1)
        weighted = math.sqrt(integrate.trapezoid(rho * d2, theta))
        assert diff <= q1 * weighted * (1 + 1e-2)


def test_spectral_truncation(heat_consts):
    spec8 = build_heat_example()
    spec16 = build_heat_example(HeatExampleParams(modes=16))
    est = truncation_estimate(spec8, 16, heat_consts)
    assert est > 0
    t8, _ = _solve(spec8, 60, 4, seed=3)
    t16, _ = _solve(spec16, 60, 4, seed=3)
    sup8 = np.max(np.linalg.norm(t8.values, axis=-1), axis=-1)
    sup16 = np.max(np.linalg.norm(t16.values, axis=-1), axis=-1)
    assert np.all(np.abs(sup16 - sup8) < est)


def test_picard_converges_on_sampled_paths(heat_spec):
    _, diags = _solve(heat_spec, 100, 8, seed=1)
    assert all(d.converged and d.iterations <= 25 for d in diags)


def test_params_validation():
    with pytest.raises(ValueError):
        HeatExampleParams(modes=0)
    with pytest.raises(ValueError):
        HeatExampleParams(modes=1, z_modes=(0.0, 1.0))
    with pytest.raises(ValueError):
        HeatExampleParams(h_eta_mode=0)
    p = dataclasses.replace(HeatExampleParams(), impulse_times=(0.5,))
    assert build_heat_example(p).impulses.m == 1
