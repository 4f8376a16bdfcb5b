"""Acceptance criteria 1-9; each test prints one PASS/FAIL line."""

from __future__ import annotations

import math
from importlib.resources import files

import numpy as np
import pytest

from conftest import make_spec, ml_series_oracle, unit_constants
from sifde.cli import main
from sifde.example_heat import HeatExampleParams, compute_kernel_constants
from sifde.mittag import MLOrder, SpectralOperator, ml_scalar, mittag_leffler, sq_apply, sq_integral_apply, tq_values
from sifde.noise import QWienerSpec, isometry_sum, ito_integral, sample_paths
from sifde.problem import (
    KappaForm,
    a_priori_bound,
    check_existence_condition,
    check_lemma31_condition,
    check_stability_condition,
)
from sifde.solver import GridSpec, PicardConfig, build_grid, mean_diff_sequence, picard_solve
from sifde.stability import BihariInput, Perturbation, bihari_bound, epsilon_time, loglog_slope, stability_sweep

HEAT_CFG = str(files("sifde") / "data" / "heat.cfg")


def _heat_solve(spec, paths, seed=0, steps=200):
    grid = GridSpec(spec.horizon, steps)
    times, _ = build_grid(grid, spec.impulses.times)
    noise = sample_paths(spec.noise.with_seed(seed), times, paths)
    return picard_solve(spec, grid, noise, PicardConfig(1e-8, 25))


def test_criterion_1_mittag_leffler_identities(record):
    z = np.linspace(-30.0, 30.0, 100)
    exp_err = max(abs(ml_scalar(MLOrder(1.0, 1.0), v) - math.exp(v)) / math.exp(v) for v in z)
    x = np.linspace(0.0, 20.0, 201)
    cos_err = max(abs(ml_scalar(MLOrder(2.0, 1.0), -v * v) - math.cos(v)) for v in x)
    oracle_err = 0.0
    zg = np.linspace(-100.0, 10.0, 200)
    for q in (1.2, 1.5, 1.8):
        for beta in (1.0, q):
            got = mittag_leffler(zg, q, beta)
            ref = ml_series_oracle(zg, q, beta, terms=400, dps=60)
            # relative 1e-9, or absolute 1e-12 near zeros of the function
            rel = np.abs(got - ref) / np.maximum(np.abs(ref), 1e-3)
            oracle_err = max(oracle_err, float(np.max(rel)))
    ok = exp_err <= 1e-10 and cos_err <= 1e-10 and oracle_err <= 1e-9
    record(1, "Mittag-Leffler identities", ok,
           f"exp rel {exp_err:.2e}, cos abs {cos_err:.2e}, oracle rel {oracle_err:.2e} (limits 1e-10/1e-10/1e-9)")
    assert ok


def test_criterion_2_closed_form_linear_solve(record):
    spec = make_spec(phi0=[1.0], x1=[0.5], alpha=0.5, horizon=1.0)
    grid = GridSpec(1.0, 200)
    times, _ = build_grid(grid)
    traj, diag = picard_solve(spec, grid, sample_paths(spec.noise, times, 1))
    exact = np.array([sq_apply(spec.A, 1.5, t, [1.0]) + sq_integral_apply(spec.A, 1.5, t, [0.5]) for t in times])
    err = float(np.max(np.abs(traj.values[0] - exact)))
    d = diag[0]
    ok = err <= 1e-7 and d.converged and d.iterations <= 2
    record(2, "closed-form linear solve", ok, f"sup error {err:.2e} (<= 1e-7), iterations {d.iterations} (<= 2)")
    assert ok


def test_criterion_3_ito_isometry(record):
    A = SpectralOperator.diagonal([-1.0, -2.0, -5.0])
    q = 1.5
    noise = QWienerSpec((0.5, 0.3, 0.2), seed=2024)
    assert abs(noise.truncated_trace - 1.0) < 1e-15
    sigma = np.array([[1.0, 0.2, 0.0], [0.0, 0.5, 0.3], [0.1, 0.0, 0.8]])
    grid = np.linspace(0.0, 1.0, 201)
    path = sample_paths(noise, grid, 10_000)

    def kernel(t, s):
        return np.diag(tq_values(A, q, t - s))

    val = ito_integral(kernel, lambda s: sigma, path, 1.0)
    sq = np.sum(val**2, axis=-1)
    mean = float(sq.mean())
    se = float(sq.std(ddof=1) / math.sqrt(sq.size))
    target = isometry_sum(kernel, lambda s: sigma, noise, grid, 1.0)
    gap = abs(mean - target)
    ok = gap <= 3 * se and gap <= 0.05 * target
    record(3, "Ito isometry", ok,
           f"MC {mean:.6f} vs isometry {target:.6f}: gap {gap:.2e} = {gap / se:.2f} SE, {100 * gap / target:.2f}% (<= 3 SE, 5%)")
    assert ok


def test_criterion_4_picard_contraction(record, heat_spec, heat_consts):
    cond = check_existence_condition(heat_spec, heat_consts)
    traj, diags = _heat_solve(heat_spec, 100)
    iters = max(d.iterations for d in diags)
    conv = all(d.converged for d in diags)
    seq = mean_diff_sequence(diags)
    decreasing = bool(np.all(np.diff(seq[1:]) < 0))
    ok = heat_spec.dimension == 8 and cond.value < 0.5 and conv and iters <= 25 and decreasing
    record(4, "Picard contraction on the heat example", ok,
           f"condition {cond.value:.4g} (< 0.5), all converged {conv}, max iterations {iters} (<= 25), "
           f"mean diffs {', '.join(f'{v:.2e}' for v in seq)}")
    assert ok


def test_criterion_5_a_priori_bound(record, heat_spec, heat_consts):
    assert check_lemma31_condition(heat_spec, heat_consts).satisfied
    traj, diags = _heat_solve(heat_spec, 1000, seed=1)
    sup = np.max(np.sum(traj.values**2, axis=-1), axis=-1)
    mean = float(sup.mean())
    se = float(sup.std(ddof=1) / math.sqrt(sup.size))
    bound = a_priori_bound(heat_spec, heat_consts, heat_spec.phi_norm() ** 2)
    ok = all(d.converged for d in diags) and mean <= bound + 3 * se
    record(5, "a-priori bound", ok, f"E sup|x|^2 = {mean:.4f} +- {se:.1e} <= bound {bound:.4g}")
    assert ok


def test_criterion_6_mean_square_stability(record, heat_spec, heat_consts):
    assert check_stability_condition(heat_spec, heat_consts).satisfied
    direction = Perturbation(heat_spec.phi, np.array(heat_spec.x1))
    deltas = [0.0, 1e-4, 1e-3, 1e-2, 1e-1]
    reps = stability_sweep(heat_spec, direction, deltas, 500, 3, GridSpec(1.0, 200), PicardConfig(1e-8, 25), heat_consts)
    est = [r.estimate for r in reps]
    nondecreasing = all(b >= a for a, b in zip(est, est[1:]))
    slope = loglog_slope(deltas[1:], est[1:])
    ok = reps[0].estimate == 0.0 and nondecreasing and slope >= 0.9 and all(r.applicable and r.converged for r in reps)
    record(6, "mean-square stability sweep", ok,
           f"estimates {', '.join(f'{v:.3e}' for v in est)}; slope {slope:.4f} (>= 0.9); delta=0 estimate {est[0]!r}")
    assert ok


def test_criterion_7_bihari_suite(record):
    rng = np.random.default_rng(7)
    gron = 0.0
    for _ in range(200):
        grid = np.sort(np.concatenate([[0.0, 2.0], rng.uniform(0, 2, 20)]))
        grid = np.unique(grid)
        v = rng.uniform(0, 3, grid.size)
        u0 = float(rng.uniform(1e-3, 10))
        inp = BihariInput(u0, v, grid, KappaForm("linear", 1.0))
        cum = inp.integral()
        for k in range(grid.size):
            gron = max(gron, abs(bihari_bound(inp, grid[k]) - u0 * math.exp(cum[k])) / (u0 * math.exp(cum[k])))
    tg = np.linspace(0.0, 3.0, 3001)
    inp = BihariInput(1.0, np.ones(tg.size), tg, KappaForm("sqrt", 1.0))
    sq = max(abs(bihari_bound(inp, t) - (1 + t / 2) ** 2) / (1 + t / 2) ** 2 for t in tg[::50])
    t1 = epsilon_time(KappaForm("linear", 1.0), 0.1, 0.01, np.ones(tg.size), tg)
    target = 3.0 - math.log(10.0)
    eps_ok = t1 is not None and target <= t1 < target + (tg[1] - tg[0])
    ok = gron <= 1e-12 and sq <= 1e-10 and eps_ok
    record(7, "Bihari suite", ok, f"Gronwall rel {gron:.1e} (<= 1e-12), sqrt rel {sq:.1e} (<= 1e-10), t1 = {t1} (target {target:.4f})")
    assert ok


def test_criterion_8_condition_arithmetic(record):
    c = unit_constants()
    checks = []
    r = check_existence_condition(make_spec(), c)
    checks.append(("m=0 existence", (r.value_a, r.value_b, r.satisfied), (0.0, 0.0, True)))
    r = check_existence_condition(make_spec(p=(0.01,), q=(0.001,)), c)
    checks.append(("existence 0.084/0.077", (r.value_a, r.value_b, r.satisfied), (0.084, 0.077, True)))
    r = check_existence_condition(make_spec(p=(0.2,), q=(0.0,)), c)
    checks.append(("existence 1.4", (r.value_a, r.satisfied), (1.4, False)))
    r = check_lemma31_condition(make_spec(p=(0.01,), q=(0.001,)), c)
    checks.append(("lemma 0.084", (r.value, r.satisfied), (0.084, True)))
    r = check_lemma31_condition(make_spec(p=(1 / 7,), q=(0.0,)), c)
    checks.append(("boundary 1", (r.value, r.satisfied), (1.0, False)))
    r = check_stability_condition(make_spec(p=(0.01,), q=(0.01,)), c)
    checks.append(("stability 0.42", (r.value, r.satisfied), (0.42, True)))
    r = check_stability_condition(make_spec(p=(0.02, 0.02), q=(0.0, 0.0)), c)
    checks.append(("stability 1.68", (r.value, r.satisfied), (1.68, False)))
    kc = compute_kernel_constants(HeatExampleParams(p_scale=1.0, p_rate=3.0, q_scale=0.0))
    checks.append(("heat l, p1", (kc.l, kc.p[0], kc.q[0]), (0.5, 0.5, 0.0)))
    bad = [name for name, got, want in checks if got != want]
    ok = not bad
    record(8, "condition-checker arithmetic", ok, f"{len(checks) - len(bad)}/{len(checks)} exact" + (f"; mismatched: {bad}" if bad else "; boundary value 1 NOT satisfied"))
    assert ok


def _snapshot(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_criterion_9_determinism(record, tmp_path):
    commands = {
        "solve": ["solve", "--problem", HEAT_CFG, "--seed", "11", "--paths", "150"],
        "check": ["check", "--problem", HEAT_CFG],
        "stability": ["stability", "--problem", HEAT_CFG, "--delta-grid", "1e-3:1e-1:3", "--paths", "80", "--seed", "11"],
        "ml-eval": ["ml-eval", "--q", "1.5", "--beta", "1.5", "--z=-50,-1,0,2.5"],
    }
    results = {}
    for name, argv in commands.items():
        runs = []
        variants = [[], [], ["--workers", "4"]] if name in ("solve", "stability") else [[], []]
        for k, extra in enumerate(variants):
            out = tmp_path / f"{name}{k}"
            rc = main(argv + extra + ["--out", str(out)])
            runs.append((rc, _snapshot(out)))
        results[name] = all(r == runs[0] for r in runs) and runs[0][0] == 0
    emitted = []
    for k in range(2):
        out = tmp_path / f"heat{k}.cfg"
        main(["example-heat", "--emit", str(out)])
        emitted.append(out.read_bytes())
    results["example-heat"] = emitted[0] == emitted[1] == open(HEAT_CFG, "rb").read()
    ok = all(results.values())
    record(9, "determinism", ok, ", ".join(f"{k}: {'identical' if v else 'DIFFERENT'}" for k, v in results.items())
           + " (solve/stability also with --workers 4)")
    assert ok
