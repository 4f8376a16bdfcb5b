from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from sifde.phase_space import (
    HistoryPath,
    HistorySegment,
    PhaseSpaceSpec,
    RhoForm,
    b_norm,
    expected_b_norm,
    lemma21_bound,
    prehistory_grid,
    segment,
)

SPEC = PhaseSpaceSpec.exponential(2.0)


def test_exponential_weight_constants():
    assert SPEC.l == 0.5
    assert SPEC.tail_mass <= SPEC.tail_tolerance
    assert SPEC.rho(np.array([0.0, -1.0])) == pytest.approx([1.0, math.exp(-2.0)])
    assert SPEC.rho.mass(-1.0, 0.0) == pytest.approx((1 - math.exp(-2)) / 2, rel=1e-15)


def test_invalid_weights_rejected():
    with pytest.raises(ValueError):
        RhoForm.exponential(-1.0)
    with pytest.raises(ValueError):
        PhaseSpaceSpec(RhoForm.exponential(2.0), 1.0, 1e-12)  # tail e^{-2}/2 too heavy


def test_tabulated_weight():
    theta = np.linspace(-20, 0, 2001)
    vals = np.exp(2 * theta)
    table = float(np.sum(0.5 * np.diff(theta) * (vals[1:] + vals[:-1])))
    rho = RhoForm("tabulated", theta=tuple(theta), values=tuple(vals), total=table + math.exp(-40) / 2)
    spec = PhaseSpaceSpec(rho, 20.0, 1e-3)
    assert spec.l == pytest.approx(0.5, rel=1e-4)  # trapezoid on h = 0.01
    assert spec.tail_mass == pytest.approx(math.exp(-40) / 2, rel=1e-6)
    seg = HistorySegment(0.0, theta, np.full((theta.size, 1), 3.0))
    assert b_norm(seg, spec) == pytest.approx(1.5, rel=1e-4)


def test_zero_and_constant_segments():
    theta = prehistory_grid(SPEC.truncation_horizon, 1e-2)
    assert theta[-1] == 0.0 and theta[0] <= -SPEC.truncation_horizon
    zero = HistorySegment(0.0, theta, np.zeros((theta.size, 2)))
    assert b_norm(zero, SPEC) == 0.0
    const = HistorySegment(0.0, theta, np.full((theta.size, 1), 3.0))
    assert b_norm(const, SPEC) == pytest.approx(1.5, rel=1e-12)


def test_step_segment_uses_running_sup():
    # psi = 1 on [-1, 0], 0 before; the sup over [s, 0] is 1 for every s
    theta = np.concatenate([np.linspace(-SPEC.truncation_horizon, -1, 50), np.linspace(-1, 0, 50)])
    samples = np.where(np.arange(100) >= 50, 1.0, 0.0)[:, None]
    seg = HistorySegment(0.0, theta, samples)
    assert b_norm(seg, SPEC) == pytest.approx(0.5, rel=1e-12)
    # reversed step (1 in the past only): sup over [s, 0] is 1 exactly for s < -1
    rev = HistorySegment(0.0, theta, 1.0 - samples)
    assert b_norm(rev, SPEC) == pytest.approx(math.exp(-2) / 2, rel=1e-12)


def test_b_norm_against_quadrature():
    # smooth psi(theta) = 1 + sin(3 theta) has a nontrivial running sup
    theta = np.linspace(-SPEC.truncation_horizon, 0, 200001)
    psi = np.abs(1 + 0.5 * np.sin(3 * theta))
    seg = HistorySegment(0.0, theta, psi[:, None])

    def sup_right(s):
        grid = np.linspace(s, 0, 4001)
        return np.max(np.abs(1 + 0.5 * np.sin(3 * grid)))

    ref = quad(lambda s: math.exp(2 * s) * sup_right(s), -SPEC.truncation_horizon, 0, limit=400)[0]
    assert b_norm(seg, SPEC) == pytest.approx(ref, rel=1e-5)


def _path(values, grid, jumps=(), left=None, pre_value=None):
    pre_theta = prehistory_grid(SPEC.truncation_horizon, 0.05)
    n = np.asarray(values).shape[-1]
    pre = np.zeros((pre_theta.size, n)) if pre_value is None else np.broadcast_to(pre_value, (pre_theta.size, n))
    pre = np.array(pre)
    pre[-1] = values[0]
    return HistoryPath(pre_theta, pre, grid, values, jumps, left)


def test_segment_at_zero_is_prehistory():
    grid = np.linspace(0, 1, 11)
    pre_theta = prehistory_grid(SPEC.truncation_horizon, 0.05)
    pre = np.cos(pre_theta)[:, None]
    values = np.ones((11, 1))
    path = HistoryPath(pre_theta, pre, grid, values)
    seg = segment(path, 0.0, SPEC.truncation_horizon)
    mask = pre_theta >= -SPEC.truncation_horizon
    assert np.array_equal(seg.theta, pre_theta[mask])
    assert np.array_equal(seg.samples[:, 0], pre[mask, 0])


def test_constant_path_gives_constant_segment():
    grid = np.linspace(0, 1, 11)
    path = _path(np.full((11, 2), 4.0), grid, pre_value=4.0)
    seg = segment(path, grid[7], SPEC.truncation_horizon)
    assert np.all(seg.samples == 4.0)
    assert np.array_equal(seg.value, [4.0, 4.0])


def test_segment_with_jump_matches_resampling():
    grid = np.linspace(0, 1, 21)
    values = (1 + grid)[:, None] * np.array([1.0, -1.0])
    values[10:] += 2.0  # jump at node 10
    left = ((1 + grid[10]) * np.array([1.0, -1.0]))[None]
    path = _path(values, grid, (10,), left)
    t = grid[15]
    seg = segment(path, t, SPEC.truncation_horizon)
    assert np.array_equal(seg.value, values[15])

    def brute(s):
        # cadlag re-sampling of the stitched path at absolute time s
        if s < 0:
            return path.pre_values[np.searchsorted(path.pre_theta, s), :]
        k = int(np.searchsorted(grid, s))
        return values[k]

    post = seg.theta >= grid[10] - t
    # every sample at or after the jump (except the stored left limit) is post-jump
    pos = np.nonzero(post)[0]
    assert np.array_equal(seg.samples[pos[0]], left[0])
    for k in pos[1:]:
        assert np.array_equal(seg.samples[k], brute(t + seg.theta[k]))
    left_seg = segment(path, grid[10], SPEC.truncation_horizon, side="left")
    assert np.array_equal(left_seg.value, left[0])


def test_segment_off_grid_raises():
    grid = np.linspace(0, 1, 11)
    path = _path(np.zeros((11, 1)), grid)
    with pytest.raises(ValueError):
        segment(path, 0.55, SPEC.truncation_horizon)


def test_lemma21_bound_examples():
    assert lemma21_bound(1, 1, 0, 0) == 0
    assert lemma21_bound(2, 3, 1, 4) == 14
    assert lemma21_bound(1, SPEC.l, 0.3, 2.0) == pytest.approx(0.3 + 0.5 * 2.0)


def test_rho_space_realizes_lemma21():
    # ||x_t||_B <= ||phi||_B + l sup_{0<=s<=t} |x(s)| for the rho-weighted space
    rng = np.random.default_rng(5)
    grid = np.linspace(0, 1, 41)
    pre_theta = prehistory_grid(SPEC.truncation_horizon, 0.01)
    for _ in range(20):
        pre = rng.normal(size=(pre_theta.size, 2))
        values = rng.normal(size=(41, 2)) * 3
        pre[-1] = values[0]
        path = HistoryPath(pre_theta, pre, grid, values)
        phi = HistorySegment(0.0, pre_theta, pre)
        for j in (0, 10, 40):
            seg = segment(path, grid[j], SPEC.truncation_horizon)
            bound = lemma21_bound(1.0, SPEC.l, b_norm(phi, SPEC), np.max(np.linalg.norm(values[: j + 1], axis=-1)))
            assert b_norm(seg, SPEC) <= bound * (1 + 1e-12)


@settings(max_examples=50, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    delta=st.sampled_from([0.01, 0.05, 0.2]),
)
def test_axiom_a1_point_bound(seed, delta):
    rng = np.random.default_rng(seed)
    theta = prehistory_grid(SPEC.truncation_horizon, delta, growth=1.0, max_step=delta)
    samples = rng.normal(size=(theta.size, 3)) * rng.uniform(0, 10)
    seg = HistorySegment(0.0, theta, samples)
    # the last spacing is delta, so the sup over [-delta, 0] is at least |psi(0)|
    L = SPEC.a1_constant(theta[-1] - theta[-2])
    assert np.linalg.norm(seg.value) <= L * b_norm(seg, SPEC) * (1 + 1e-12)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_b_norm_monotone(seed):
    rng = np.random.default_rng(seed)
    theta = prehistory_grid(SPEC.truncation_horizon, 0.05)
    small = rng.normal(size=(theta.size, 2))
    big = small * (1 + rng.uniform(0, 2, size=(theta.size, 1)))
    assert b_norm(HistorySegment(0, theta, small), SPEC) <= b_norm(HistorySegment(0, theta, big), SPEC)


def test_tail_contribution_is_bounded():
    theta = prehistory_grid(SPEC.truncation_horizon, 0.05)
    theta = theta[theta >= -SPEC.truncation_horizon]
    # mass only in the far past
    samples = np.zeros((theta.size, 1))
    samples[0] = 7.0
    assert b_norm(HistorySegment(0, theta, samples), SPEC) <= SPEC.rho.cumulative(theta[1]) * 7.0 * (1 + 1e-12)
    assert SPEC.rho.cumulative(-SPEC.truncation_horizon) * 7.0 <= SPEC.tail_tolerance * 7.0


def test_expected_b_norm_aggregates_paths_first():
    theta = np.linspace(-SPEC.truncation_horizon, 0, 101)
    a = np.ones((theta.size, 1))
    batch = np.stack([a, -a, 3 * a, -3 * a])
    seg = HistorySegment(0.0, theta, batch)
    assert expected_b_norm(seg, SPEC) == pytest.approx(math.sqrt(5) * 0.5, rel=1e-12)
    assert np.allclose(b_norm(seg, SPEC), [0.5, 0.5, 1.5, 1.5], rtol=1e-12)
