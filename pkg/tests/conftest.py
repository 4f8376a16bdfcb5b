"""Shared oracles and fixtures."""

from __future__ import annotations

import mpmath as mp
import numpy as np
import pytest


def ml_series_oracle(zs, q: float, beta: float, terms: int = 400, dps: int = 60) -> np.ndarray:
    """sum_k z^k / Gamma(q k + beta) in extended precision."""
    with mp.workdps(dps):
        qq, bb = mp.mpf(q), mp.mpf(beta)
        coef = [mp.rgamma(qq * k + bb) for k in range(terms)]
        out = []
        for z in np.atleast_1d(zs):
            z = mp.mpf(float(z))
            s, p = mp.mpf(0), mp.mpf(1)
            for c in coef:
                s += p * c
                p *= z
            out.append(float(s))
    return np.array(out)


@pytest.fixture(scope="session")
def heat_spec():
    from sifde.example_heat import build_heat_example

    return build_heat_example()


@pytest.fixture(scope="session")
def heat_consts(heat_spec):
    from sifde.example_heat import heat_constants

    return heat_constants(heat_spec)


def make_spec(
    p=(),
    q=(),
    horizon: float = 1.0,
    K1: float | None = 0.0,
    K: float = 0.0,
    eigenvalues=(-1.0,),
    alpha: float = 0.5,
    phi0=None,
    x1=None,
    times=None,
    g=None,
    f=None,
    sigma=None,
    I=None,
    J=None,
    noise_eigs=None,
    kappa=None,
):
    """Small problem with zero coefficients unless given; impulse maps default to 0."""
    from sifde.mittag import SpectralOperator
    from sifde.noise import QWienerSpec
    from sifde.phase_space import PhaseSpaceSpec
    from sifde.problem import (
        CoefficientSet,
        ImpulseSpec,
        KappaForm,
        OperatorCoefficient,
        Prehistory,
        ProblemSpec,
        VectorCoefficient,
    )

    n = len(eigenvalues)
    m = len(p)
    if times is None:
        times = tuple(horizon * (i + 1) / (m + 1) for i in range(m))
    noise = QWienerSpec(tuple(noise_eigs) if noise_eigs is not None else (1.0,) * n, seed=0)
    coefs = CoefficientSet(
        g if g is not None else VectorCoefficient.zero(n),
        f if f is not None else VectorCoefficient.zero(n),
        sigma if sigma is not None else OperatorCoefficient.zero(n, noise.modes),
        kappa or KappaForm("linear", 1.0),
        K,
        K1,
    )
    imp = ImpulseSpec(
        tuple(times),
        tuple(I) if I is not None else tuple(VectorCoefficient.zero(n) for _ in range(m)),
        tuple(J) if J is not None else tuple(VectorCoefficient.zero(n) for _ in range(m)),
        tuple(p),
        tuple(q),
    )
    phi = Prehistory.constant(np.zeros(n) if phi0 is None else phi0)
    return ProblemSpec(
        SpectralOperator.diagonal(eigenvalues),
        alpha,
        horizon,
        coefs,
        imp,
        PhaseSpaceSpec.exponential(2.0),
        noise,
        phi,
        np.zeros(n) if x1 is None else np.asarray(x1, dtype=float),
    )


def unit_constants(Gamma_b: float = 1.0, M: float = 1.0, M_b: float = 1.0):
    from sifde.problem import HypothesisConstants

    return HypothesisConstants(M=M, M_b=M_b, Gamma_b=Gamma_b, N_b=1.0)


ACCEPTANCE: list[str] = []


@pytest.fixture()
def record(capsys):
    """Print and remember one PASS/FAIL line for an acceptance criterion."""

    def _record(number: int, title: str, passed: bool, detail: str) -> bool:
        line = f"CRITERION {number} {'PASS' if passed else 'FAIL'}: {title} -- {detail}"
        ACCEPTANCE.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
