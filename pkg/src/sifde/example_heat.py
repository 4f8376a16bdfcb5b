"""Impulsive stochastic fractional heat equation on [0, pi] with infinite delay.

State coordinates are the coefficients in the Dirichlet eigenbasis
e_n(x) = sqrt(2/pi) sin(n x), so A = diag(-n^2) with the identity basis.
Kernel families (all closed form for rho(s) = exp(c s)):

    h(s, eta, x) = c_h exp(r_h s) sin(a eta) sin(k x)
    pbar_i(theta) = c_p exp(r_p theta),  qbar_i(theta) = c_q exp(r_q theta)
    f = c_f int exp(r_f theta) u(t + theta) dtheta
    sigma = s_0 I + c_s diag(int exp(r_s theta) u(t + theta) dtheta)

The velocity jump uses the physical saturation u / (1 + |u|) evaluated on an
interior grid of [0, pi].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mittag import SpectralOperator
from .noise import QWienerSpec
from .phase_space import PhaseSpaceSpec
from .problem import (
    CoefficientSet,
    HypothesisConstants,
    ImpulseSpec,
    KappaForm,
    LinearFunctional,
    OperatorCoefficient,
    Prehistory,
    ProblemSpec,
    VectorCoefficient,
    measured_constants,
)

__all__ = [
    "HeatExampleParams",
    "KernelConstants",
    "build_heat_example",
    "compute_kernel_constants",
    "heat_constants",
    "impulse_kernel_condition",
    "lipschitz_constants",
    "truncation_estimate",
]

_HALF_PI = 0.5 * math.pi


@dataclass(frozen=True)
class HeatExampleParams:
    modes: int = 8
    alpha: float = 0.5
    horizon: float = 1.0
    rho_rate: float = 2.0
    tail_tolerance: float = 1e-12
    h_family: str = "separable-exp-sine"
    h_scale: float = 0.2
    h_rate: float = 3.0
    h_eta_mode: int = 1
    h_x_mode: int = 1
    f_scale: float = 0.5
    f_rate: float = 2.0
    sigma_base: float = 0.1
    sigma_scale: float = 0.1
    sigma_rate: float = 2.0
    impulse_times: tuple[float, ...] = (1.0 / 3.0, 2.0 / 3.0)
    impulse_family: str = "exponential"
    p_scale: float = 0.01
    p_rate: float = 3.0
    q_scale: float = 0.01
    q_rate: float = 3.0
    saturation_points: int = 64
    noise_decay: float = 2.0
    seed: int = 0
    phi_rate: float = 1.0
    phi_modes: tuple[float, ...] = (math.sqrt(_HALF_PI),)
    z_modes: tuple[float, ...] = (0.0, 0.5 * math.sqrt(_HALF_PI))

    def __post_init__(self) -> None:
        if self.modes < 1:
            raise ValueError("modes must be positive")
        if len(self.phi_modes) > self.modes or len(self.z_modes) > self.modes:
            raise ValueError("initial data has more modes than the truncation")
        if self.h_eta_mode < 1 or self.h_x_mode < 1:
            raise ValueError("kernel mode indices start at 1")


@dataclass(frozen=True)
class KernelConstants:
    L0: float
    p: tuple[float, ...]
    q: tuple[float, ...]
    l: float


def _weighted_l2(scale: float, rate: float, rho_rate: float, condition: str) -> float:
    """(int_{-inf}^0 (scale e^{rate s})^2 / e^{rho_rate s} ds)^{1/2}."""
    if scale == 0.0:
        return 0.0
    expo = 2.0 * rate - rho_rate
    if expo <= 0:
        raise ValueError(f"condition ({condition}) fails: kernel^2 / rho is not integrable")
    return abs(scale) / math.sqrt(expo)


def compute_kernel_constants(params: HeatExampleParams) -> KernelConstants:
    """L0, p_i, q_i and l in closed form for the supported kernel families."""
    if params.h_family != "separable-exp-sine":
        raise ValueError(f"unsupported kernel family {params.h_family!r}")
    if params.impulse_family != "exponential":
        raise ValueError(f"unsupported impulse kernel family {params.impulse_family!r}")
    c = params.rho_rate
    base = _weighted_l2(params.h_scale, params.h_rate, c, "a")
    # int sin^2(a eta) d eta = pi/2; x-factor: pi/2 for k = 0, k^2 pi/2 for k = 1
    L0 = base * _HALF_PI * max(1.0, float(params.h_x_mode))
    m = len(params.impulse_times)
    p = _weighted_l2(params.p_scale, params.p_rate, c, "b")
    q = _weighted_l2(params.q_scale, params.q_rate, c, "c")
    return KernelConstants(L0, (p,) * m, (q,) * m, 1.0 / c)


def lipschitz_constants(params: HeatExampleParams) -> dict:
    """Lipschitz constants of g, f, sigma with respect to the B-norm (unsquared).

    A delay integral with weight e^{r theta}, r >= c, is bounded by the
    B-norm since e^{r theta} <= rho(theta) and |w(theta)| is below the
    running sup.
    """
    c = params.rho_rate
    for name, rate, scale in (
        ("h", params.h_rate, params.h_scale),
        ("f", params.f_rate, params.f_scale),
        ("sigma", params.sigma_rate, params.sigma_scale),
    ):
        if scale != 0.0 and rate < c:
            raise ValueError(f"{name} delay rate {rate} is below the rho rate {c}")
    inside = params.h_eta_mode <= params.modes and params.h_x_mode <= params.modes
    lam_max = max(_q_eigenvalues(params))
    return {
        "g": abs(params.h_scale) * _HALF_PI if inside else 0.0,
        "f": abs(params.f_scale),
        "sigma": abs(params.sigma_scale) * math.sqrt(lam_max),
    }


def _q_eigenvalues(params: HeatExampleParams) -> tuple[float, ...]:
    return tuple(float(n) ** (-params.noise_decay) for n in range(1, params.modes + 1))


def _pad(v, n: int) -> tuple[float, ...]:
    out = np.zeros(n)
    out[: len(v)] = v
    return tuple(out.tolist())


def build_heat_example(params: HeatExampleParams | None = None) -> ProblemSpec:
    params = params or HeatExampleParams()
    kc = compute_kernel_constants(params)
    lip = lipschitz_constants(params)
    N = params.modes
    A = SpectralOperator.diagonal(-np.arange(1, N + 1, dtype=float) ** 2)
    phase = PhaseSpaceSpec.exponential(params.rho_rate, params.tail_tolerance)
    lam = _q_eigenvalues(params)
    trace = math.pi**2 / 6.0 if params.noise_decay == 2.0 else None
    noise = QWienerSpec(lam, params.seed, trace)

    g_mat = np.zeros((N, N))
    if params.h_eta_mode <= N and params.h_x_mode <= N:
        g_mat[params.h_x_mode - 1, params.h_eta_mode - 1] = params.h_scale * _HALF_PI
    g = VectorCoefficient(g_mat, np.zeros(N), LinearFunctional("delay", params.h_rate))
    f = VectorCoefficient(params.f_scale * np.eye(N), np.zeros(N), LinearFunctional("delay", params.f_rate))
    sigma = OperatorCoefficient(
        params.sigma_base * np.eye(N), params.sigma_scale, LinearFunctional("delay", params.sigma_rate)
    )
    L = max(kc.L0**2, lip["g"] ** 2, lip["f"] ** 2, lip["sigma"] ** 2)
    K = params.sigma_base**2 * sum(lam)
    coefs = CoefficientSet(g, f, sigma, KappaForm("linear", L if L > 0 else 1.0), K, lip["g"] ** 2)

    I_maps = tuple(
        VectorCoefficient(params.p_scale * np.eye(N), np.zeros(N), LinearFunctional("delay", params.p_rate))
        for _ in params.impulse_times
    )
    J_maps = tuple(
        VectorCoefficient(
            params.q_scale * np.eye(N),
            np.zeros(N),
            LinearFunctional("delay", params.q_rate, "sine-physical", params.saturation_points),
        )
        for _ in params.impulse_times
    )
    impulses = ImpulseSpec(params.impulse_times, I_maps, J_maps, kc.p, kc.q)
    phi = Prehistory(((params.phi_rate, _pad(params.phi_modes, N)),))
    x1 = np.asarray(_pad(params.z_modes, N))
    return ProblemSpec(A, params.alpha, params.horizon, coefs, impulses, phase, noise, phi, x1)


def heat_constants(spec: ProblemSpec, points: int = 2001) -> HypothesisConstants:
    """Measured M, M_b with Gamma_b = l and N_b = 1 for the rho-weighted space."""
    return measured_constants(spec, points=points, N_b=1.0, Gamma_b=spec.phase.l)


def impulse_kernel_condition(consts: HypothesisConstants, kc: KernelConstants) -> float:
    """max{7mM^2 l sum p + 14mM^2 l sum q, 7mM^2 sum p + 7mM^2 sum q}."""
    m = len(kc.p)
    M2 = consts.M**2
    sp, sq = math.fsum(kc.p), math.fsum(kc.q)
    return max(7 * m * M2 * kc.l * sp + 14 * m * M2 * kc.l * sq, 7 * m * M2 * sp + 7 * m * M2 * sq)


def truncation_estimate(spec: ProblemSpec, reference_modes: int, consts: HypothesisConstants, sigmas: float = 5.0) -> float:
    """Size of the noise forcing dropped by truncating at the current mode count.

    ``sigmas`` times the root of the Ito-isometry mass that the base noise
    s_0 dw would put into modes N+1..reference_modes, bounded with
    ||T_q(t)|| <= t^{q-1} M_b.
    """
    sig = spec.coefficients.sigma
    s0 = float(np.max(np.abs(np.diag(sig.base)))) if isinstance(sig, OperatorCoefficient) else 0.0
    N = spec.dimension
    decay = -math.log(spec.noise.q_eigenvalues[-1]) / math.log(N) if N > 1 else 2.0
    dropped = sum(float(n) ** (-decay) for n in range(N + 1, reference_modes + 1))
    q, b = spec.q, spec.horizon
    mass = consts.M_b**2 * b ** (2 * q - 1) / (2 * q - 1) * s0**2 * dropped
    return sigmas * math.sqrt(mass)
