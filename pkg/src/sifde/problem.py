"""Problem description, coefficient families and the checkable conditions.

Coefficients are declarative so a problem round-trips through a config
file.  Every state-dependent coefficient reads the history segment through
a ``LinearFunctional``: either the current value x(t) or a weighted delay
integral  int_{-T_h}^0 exp(rate theta) sat(x(t+theta)) dtheta  (trapezoid on
the segment abscissae), optionally after a pointwise saturation
u -> u / (1 + |u|).
"""

from __future__ import annotations

import math
import warnings
from fractions import Fraction
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .mittag import SpectralOperator, operator_bounds
from .noise import QWienerSpec, hs_norm_sq
from .phase_space import HistorySegment, PhaseSpaceSpec, b_norm, prehistory_grid

__all__ = [
    "HypothesisError",
    "KappaForm",
    "LinearFunctional",
    "VectorCoefficient",
    "OperatorCoefficient",
    "CoefficientSet",
    "ImpulseSpec",
    "Prehistory",
    "prehistory_b_norm",
    "ProblemSpec",
    "HypothesisConstants",
    "ConditionReport",
    "measured_constants",
    "check_existence_condition",
    "check_lemma31_condition",
    "check_stability_condition",
    "a_priori_constants",
    "a_priori_bound",
    "stability_nu",
    "certify_lipschitz",
]


class HypothesisError(ValueError):
    """A problem input violates one of the standing hypotheses (tag e.g. 'H2')."""

    def __init__(self, tag: str, message: str):
        self.tag = tag
        super().__init__(f"({tag}) {message}")


# ---------------------------------------------------------------------------
# concave modulus


@dataclass(frozen=True)
class KappaForm:
    """Concave modulus kappa with closed-form G(r) = int_1^r ds / kappa(s).

    kinds: ``linear`` L u; ``log-modulated`` L u ln(1/u) for u <= delta,
    continued by its tangent; ``sqrt`` L sqrt(u); ``tabulated`` piecewise
    linear through (table_u, table_k) starting at (0, 0).
    """

    kind: str
    L: float = 1.0
    delta: float = 0.0
    table_u: tuple[float, ...] = ()
    table_k: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if not (self.L > 0 and math.isfinite(self.L)):
            raise HypothesisError("H1", f"kappa scale must be positive, got {self.L}")
        if self.kind == "log-modulated":
            if not (0.0 < self.delta < math.exp(-1.0)):
                raise HypothesisError("H1", "log-modulated kappa needs 0 < delta < 1/e")
        elif self.kind == "tabulated":
            u = np.asarray(self.table_u, dtype=float)
            k = np.asarray(self.table_k, dtype=float)
            if u.size < 2 or u.shape != k.shape or u[0] != 0.0 or k[0] != 0.0:
                raise HypothesisError("H1", "tabulated kappa must start at (0, 0)")
            slopes = np.diff(k) / np.diff(u)
            if np.any(np.diff(u) <= 0) or np.any(slopes < 0) or np.any(np.diff(slopes) > 1e-12):
                raise HypothesisError("H1", "tabulated kappa must be increasing and concave")
        elif self.kind not in ("linear", "sqrt"):
            raise ValueError(f"unsupported kappa form {self.kind!r}")

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        L = self.L
        if self.kind == "linear":
            out = L * u
        elif self.kind == "sqrt":
            out = L * np.sqrt(u)
        elif self.kind == "log-modulated":
            a, beta = self.affine_bound()
            with np.errstate(divide="ignore", invalid="ignore"):
                small = np.where(u > 0, L * u * np.log(1.0 / np.where(u > 0, u, 1.0)), 0.0)
            out = np.where(u <= self.delta, small, a + beta * u)
        else:
            tu = np.asarray(self.table_u)
            tk = np.asarray(self.table_k)
            slope_end = (tk[-1] - tk[-2]) / (tu[-1] - tu[-2])
            out = np.where(u <= tu[-1], np.interp(u, tu, tk), tk[-1] + slope_end * (u - tu[-1]))
        return out if out.ndim else float(out)

    @property
    def osgood(self) -> bool:
        """Whether int_{0+} ds / kappa(s) diverges."""
        if self.kind in ("linear", "log-modulated"):
            return True
        if self.kind == "sqrt":
            return False
        return True  # tabulated starts linearly at 0

    def affine_bound(self) -> tuple[float, float]:
        """(a, beta) with kappa(u) <= a + beta u for all u >= 0."""
        if self.kind == "linear":
            return 0.0, float(self.L)
        if self.kind == "log-modulated":
            d = self.delta
            return float(self.L * d), float(self.L * (math.log(1.0 / d) - 1.0))
        if self.kind == "sqrt":
            # L sqrt(u) <= L/2 + (L/2) u
            return 0.5 * self.L, 0.5 * self.L
        k = np.asarray(self.table_k)
        u = np.asarray(self.table_u)
        slope = (k[1] - k[0]) / (u[1] - u[0])
        return 0.0, float(slope)

    def G(self, r: float) -> float:
        """int_1^r ds / kappa(s); -inf at r = 0 for Osgood forms."""
        r = float(r)
        if r < 0:
            raise ValueError("G is defined on [0, inf)")
        L = self.L
        if self.kind == "linear":
            return -math.inf if r == 0 else math.log(r) / L
        if self.kind == "sqrt":
            return 2.0 * (math.sqrt(r) - 1.0) / L
        if self.kind == "log-modulated":
            a, beta = self.affine_bound()
            d = self.delta
            if r >= d:
                return (math.log(a + beta * r) - math.log(a + beta)) / beta
            if r == 0:
                return -math.inf
            g_d = (math.log(a + beta * d) - math.log(a + beta)) / beta
            return g_d + (math.log(math.log(1.0 / d)) - math.log(math.log(1.0 / r))) / L
        return self._table_G(r)

    def _table_G(self, r: float) -> float:
        if r == 0:
            return -math.inf
        u1, slope0 = self.table_u[1], self.table_k[1] / self.table_u[1]
        if r < u1 and u1 != 1.0:
            # kappa = slope0 s on the first piece: logarithmic in closed form
            return self._table_G(u1) + math.log(r / u1) / slope0
        lo, hi = sorted((1.0, r))
        # split at the table kinks so each piece is smooth
        cuts = [lo] + [u for u in self.table_u if lo < u < hi] + [hi]
        total = math.fsum(
            integrate.quad(lambda s: 1.0 / float(self(s)), a, b, limit=200, epsabs=1e-13, epsrel=1e-12)[0]
            for a, b in zip(cuts, cuts[1:])
        )
        return float(total if r >= 1.0 else -total)

    def G_inv(self, y: float) -> float:
        """Inverse of G; +inf outside the range of G."""
        y = float(y)
        L = self.L
        if y == -math.inf:
            return 0.0 if self.osgood else math.nan
        if self.kind == "linear":
            try:
                return math.exp(L * y)
            except OverflowError:
                return math.inf
        if self.kind == "sqrt":
            if y < -2.0 / L:
                return math.inf
            return (1.0 + 0.5 * L * y) ** 2
        if self.kind == "log-modulated":
            a, beta = self.affine_bound()
            d = self.delta
            g_d = self.G(d)
            if y >= g_d:
                try:
                    return (math.exp(beta * y + math.log(a + beta)) - a) / beta
                except OverflowError:
                    return math.inf
            inner = math.log(math.log(1.0 / d)) - L * (y - g_d)
            return math.exp(-math.exp(inner))
        # tabulated: bracket then bisect to 1e-10 relative
        u1, slope0 = self.table_u[1], self.table_k[1] / self.table_u[1]
        g1 = self._table_G(u1)
        if y <= g1:
            return u1 * math.exp(slope0 * (y - g1))
        hi = max(1.0, u1)
        while self._table_G(hi) < y:
            hi *= 2.0
            if hi > 1e300:
                return math.inf
        return float(optimize.brentq(lambda r: self._table_G(r) - y, u1, hi, xtol=1e-300, rtol=1e-10))

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind, "L": float(self.L)}
        if self.kind == "log-modulated":
            out["delta"] = float(self.delta)
        if self.kind == "tabulated":
            out["table_u"] = [float(v) for v in self.table_u]
            out["table_k"] = [float(v) for v in self.table_k]
        return out


# ---------------------------------------------------------------------------
# coefficient families

_SATURATIONS = ("none", "componentwise", "sine-physical")


@dataclass(frozen=True)
class LinearFunctional:
    """Segment -> state vector; linear up to the pointwise saturation."""

    kind: str = "point"
    rate: float = 0.0
    saturation: str = "none"
    grid_points: int = 64

    def __post_init__(self) -> None:
        if self.kind not in ("point", "delay"):
            raise ValueError(f"unsupported functional kind {self.kind!r}")
        if self.kind == "delay" and not self.rate > 0:
            raise ValueError("delay functional needs a positive rate")
        if self.saturation not in _SATURATIONS:
            raise ValueError(f"unsupported saturation {self.saturation!r}")
        if self.grid_points < 1:
            raise ValueError("grid_points must be positive")

    def saturate(self, samples: np.ndarray) -> np.ndarray:
        if self.saturation == "none":
            return samples
        if self.saturation == "componentwise":
            return samples / (1.0 + np.abs(samples))
        E, P = _sine_tables(samples.shape[-1], self.grid_points)
        u = samples @ E.T
        return (u / (1.0 + np.abs(u))) @ P.T

    def weights(self, theta: np.ndarray) -> np.ndarray:
        """Per-sample quadrature weights (the functional is sum_k w_k sat(psi_k))."""
        theta = np.asarray(theta, dtype=float)
        w = np.zeros(theta.size)
        if self.kind == "point":
            w[-1] = 1.0
            return w
        h = np.diff(theta)
        e = np.exp(self.rate * theta)
        w[:-1] += 0.5 * h * e[:-1]
        w[1:] += 0.5 * h * e[1:]
        return w

    def __call__(self, seg: HistorySegment) -> np.ndarray:
        w = self.weights(seg.theta)
        return np.einsum("k,...kn->...n", w, self.saturate(seg.samples))

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.kind == "delay":
            out["rate"] = float(self.rate)
        out["saturation"] = self.saturation
        if self.saturation == "sine-physical":
            out["grid_points"] = int(self.grid_points)
        return out


_SINE_CACHE: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}


def _sine_tables(modes: int, points: int) -> tuple[np.ndarray, np.ndarray]:
    """Synthesis E (points x modes) of sqrt(2/pi) sin(k x_j) and its discrete adjoint P."""
    key = (modes, points)
    if key not in _SINE_CACHE:
        x = np.arange(1, points + 1) * math.pi / (points + 1)
        k = np.arange(1, modes + 1)
        E = math.sqrt(2.0 / math.pi) * np.sin(np.outer(x, k))
        P = (math.pi / (points + 1)) * E.T
        E.setflags(write=False)
        P.setflags(write=False)
        _SINE_CACHE[key] = (E, P)
    return _SINE_CACHE[key]


@dataclass(frozen=True, eq=False)
class VectorCoefficient:
    """x_t -> offset + matrix . F(x_t)."""

    matrix: np.ndarray
    offset: np.ndarray
    functional: LinearFunctional = field(default_factory=LinearFunctional)

    def __post_init__(self) -> None:
        m = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        o = np.asarray(self.offset, dtype=float).reshape(-1)
        if m.shape != (o.size, o.size):
            raise ValueError(f"matrix {m.shape} does not match offset of length {o.size}")
        m.setflags(write=False)
        o.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "offset", o)

    @classmethod
    def zero(cls, n: int) -> "VectorCoefficient":
        return cls(np.zeros((n, n)), np.zeros(n))

    @property
    def dimension(self) -> int:
        return self.offset.size

    @property
    def is_zero(self) -> bool:
        return not (np.any(self.matrix) or np.any(self.offset))

    @property
    def state_dependent(self) -> bool:
        return bool(np.any(self.matrix))

    def from_functional(self, F: np.ndarray) -> np.ndarray:
        return self.offset + F @ self.matrix.T

    def __call__(self, t: float, seg: HistorySegment) -> np.ndarray:
        return self.from_functional(self.functional(seg))

    def to_dict(self) -> dict:
        return {
            "offset": self.offset.tolist(),
            "matrix": self.matrix.tolist(),
            "functional": self.functional.to_dict(),
        }

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VectorCoefficient):
            return NotImplemented
        return (
            np.array_equal(self.matrix, other.matrix)
            and np.array_equal(self.offset, other.offset)
            and self.functional == other.functional
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class OperatorCoefficient:
    """x_t -> base + diag_scale . diag(F(x_t)), an operator G -> H."""

    base: np.ndarray
    diag_scale: float = 0.0
    functional: LinearFunctional = field(default_factory=LinearFunctional)

    def __post_init__(self) -> None:
        b = np.atleast_2d(np.asarray(self.base, dtype=float))
        if self.diag_scale != 0.0 and b.shape[0] != b.shape[1]:
            raise ValueError("a state-dependent diagonal needs dim G = dim H")
        b.setflags(write=False)
        object.__setattr__(self, "base", b)
        object.__setattr__(self, "diag_scale", float(self.diag_scale))

    @classmethod
    def zero(cls, n: int, modes: int) -> "OperatorCoefficient":
        return cls(np.zeros((n, modes)))

    @property
    def is_zero(self) -> bool:
        return not np.any(self.base) and self.diag_scale == 0.0

    @property
    def state_dependent(self) -> bool:
        return self.diag_scale != 0.0

    def from_functional(self, F: np.ndarray) -> np.ndarray:
        out = np.broadcast_to(self.base, F.shape[:-1] + self.base.shape).copy()
        if self.diag_scale:
            idx = np.arange(self.base.shape[0])
            out[..., idx, idx] += self.diag_scale * F
        return out

    def apply_from_functional(self, F: np.ndarray, dw: np.ndarray) -> np.ndarray:
        """sigma(F) dw without forming the operator."""
        out = dw @ self.base.T
        if self.diag_scale:
            out = out + self.diag_scale * F * dw
        return out

    def __call__(self, t: float, seg: HistorySegment) -> np.ndarray:
        return self.from_functional(self.functional(seg))

    def to_dict(self) -> dict:
        return {
            "base": self.base.tolist(),
            "diag_scale": self.diag_scale,
            "functional": self.functional.to_dict(),
        }

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, OperatorCoefficient):
            return NotImplemented
        return (
            np.array_equal(self.base, other.base)
            and self.diag_scale == other.diag_scale
            and self.functional == other.functional
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class CoefficientSet:
    """g, f, sigma with the modulus kappa and the constants K and K1.

    ``g``, ``f`` and ``sigma`` are usually the declarative families above;
    any callable ``(t, segment) -> value`` is accepted (evaluated node by node).
    """

    g: object
    f: object
    sigma: object
    kappa: KappaForm
    K_zero: float
    K1: float | None = None

    def __post_init__(self) -> None:
        if self.kappa.kind not in ("linear", "log-modulated"):
            raise HypothesisError("H1", f"kappa form {self.kappa.kind!r} is not an admissible modulus")
        if not self.K_zero >= 0:
            raise HypothesisError("H3", "K must be nonnegative")
        if self.K1 is not None and not self.K1 >= 0:
            raise HypothesisError("H4", "K1 must be nonnegative")


@dataclass(frozen=True)
class ImpulseSpec:
    times: tuple[float, ...] = ()
    I: tuple = ()
    J: tuple = ()
    p: tuple[float, ...] = ()
    q: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        object.__setattr__(self, "I", tuple(self.I))
        object.__setattr__(self, "J", tuple(self.J))
        object.__setattr__(self, "p", tuple(float(v) for v in self.p))
        object.__setattr__(self, "q", tuple(float(v) for v in self.q))
        m = len(self.times)
        if not (len(self.I) == len(self.J) == len(self.p) == len(self.q) == m):
            raise ValueError("impulse times, maps and constants must have equal length")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("impulse times must increase strictly")
        if any(v < 0 for v in self.p + self.q):
            raise HypothesisError("H2", "Lipschitz constants p_i, q_i must be nonnegative")

    @property
    def m(self) -> int:
        return len(self.times)


@dataclass(frozen=True, eq=False)
class Prehistory:
    """phi(theta) = sum_k vector_k exp(rate_k theta) on (-inf, 0]."""

    terms: tuple[tuple[float, tuple[float, ...]], ...]

    def __post_init__(self) -> None:
        terms = tuple((float(r), tuple(float(v) for v in vec)) for r, vec in self.terms)
        if not terms:
            raise ValueError("prehistory needs at least one term")
        if len({len(v) for _, v in terms}) != 1:
            raise ValueError("prehistory vectors must share a dimension")
        if any(r < 0 for r, _ in terms):
            raise ValueError("prehistory rates must be nonnegative (bounded history)")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def constant(cls, vector) -> "Prehistory":
        return cls(((0.0, tuple(np.asarray(vector, dtype=float).tolist())),))

    @property
    def dimension(self) -> int:
        return len(self.terms[0][1])

    def __call__(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        out = np.zeros(theta.shape + (self.dimension,))
        for rate, vec in self.terms:
            out += np.exp(rate * theta)[..., None] * np.asarray(vec)
        return out

    def plus(self, other: "Prehistory") -> "Prehistory":
        return Prehistory(self.terms + other.terms)

    def scaled(self, c: float) -> "Prehistory":
        return Prehistory(tuple((r, tuple(c * x for x in v)) for r, v in self.terms))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Prehistory):
            return NotImplemented
        return self.terms == other.terms

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    A: SpectralOperator
    alpha: float
    horizon: float
    coefficients: CoefficientSet
    impulses: ImpulseSpec
    phase: PhaseSpaceSpec
    noise: QWienerSpec
    phi: Prehistory
    x1: np.ndarray

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha < 1.0):
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        x1 = np.asarray(self.x1, dtype=float).reshape(-1)
        x1.setflags(write=False)
        object.__setattr__(self, "x1", x1)
        n = self.A.dimension
        if x1.size != n or self.phi.dimension != n:
            raise ValueError("x1 and phi must match the operator dimension")
        if any(not (0.0 < t < self.horizon) for t in self.impulses.times):
            raise ValueError("impulse times must lie strictly inside (0, b)")
        c = self.coefficients
        for name in ("g", "f"):
            coef = getattr(c, name)
            if isinstance(coef, VectorCoefficient) and coef.dimension != n:
                raise ValueError(f"{name} has dimension {coef.dimension}, expected {n}")
        if isinstance(c.sigma, OperatorCoefficient) and c.sigma.base.shape != (n, self.noise.modes):
            raise ValueError(f"sigma must be {n}x{self.noise.modes}")
        for maps in (self.impulses.I, self.impulses.J):
            for mp in maps:
                if isinstance(mp, VectorCoefficient) and mp.dimension != n:
                    raise ValueError("impulse map dimension mismatch")
        self._check_h3()

    @property
    def q(self) -> float:
        return 1.0 + self.alpha

    @property
    def dimension(self) -> int:
        return self.A.dimension

    def zero_segment(self) -> HistorySegment:
        theta = np.linspace(-self.phase.truncation_horizon, 0.0, 3)
        return HistorySegment(0.0, theta, np.zeros((theta.size, self.dimension)))

    def _check_h3(self) -> None:
        zero = self.zero_segment()
        c = self.coefficients
        K = c.K_zero
        tol = 1e-12 * max(1.0, K)
        for t in np.linspace(0.0, self.horizon, 5):
            gz = float(np.sum(np.asarray(c.g(t, zero)) ** 2))
            fz = float(np.sum(np.asarray(c.f(t, zero)) ** 2))
            sz = hs_norm_sq(np.asarray(c.sigma(t, zero)), self.noise)
            worst = max(gz, fz, sz)
            if worst > K + tol:
                raise HypothesisError("H3", f"coefficients at the zero history reach {worst:.6g} > K = {K:.6g}")
        for i, (I, J) in enumerate(zip(self.impulses.I, self.impulses.J)):
            if np.any(np.asarray(I(self.impulses.times[i], zero)) != 0) or np.any(
                np.asarray(J(self.impulses.times[i], zero)) != 0
            ):
                raise HypothesisError("H3", f"impulse maps of t_{i + 1} do not vanish at 0")

    def replace(self, **changes) -> "ProblemSpec":
        fields = dict(
            A=self.A,
            alpha=self.alpha,
            horizon=self.horizon,
            coefficients=self.coefficients,
            impulses=self.impulses,
            phase=self.phase,
            noise=self.noise,
            phi=self.phi,
            x1=self.x1,
        )
        fields.update(changes)
        return ProblemSpec(**fields)

    def phi_norm(self, step: float = 1e-3) -> float:
        """||phi||_B of the deterministic prehistory."""
        return prehistory_b_norm(self.phi, self.phase, step)


def prehistory_b_norm(phi: Prehistory, phase: PhaseSpaceSpec, step: float = 1e-3) -> float:
    """B-norm of an analytic prehistory sampled on the standard prehistory grid."""
    theta = prehistory_grid(phase.truncation_horizon, step)
    theta = theta[theta >= -phase.truncation_horizon]
    seg = HistorySegment(0.0, theta, phi(theta))
    return float(b_norm(seg, phase))


# ---------------------------------------------------------------------------
# constants and conditions


@dataclass(frozen=True)
class HypothesisConstants:
    """Operator bounds M, M_b and the phase-space constants Gamma_b, N_b."""

    M: float
    M_b: float
    Gamma_b: float
    N_b: float
    source: str = "user-supplied"
    M1: float | None = None

    def __post_init__(self) -> None:
        if not (self.M > 0 and self.M_b > 0):
            raise ValueError("M and M_b must be positive")
        if not (self.Gamma_b > 0 and self.N_b > 0):
            raise ValueError("Gamma_b and N_b must be positive")
        if self.source not in ("user-supplied", "empirically-measured"):
            raise ValueError(f"unknown constants source {self.source!r}")
        if not all(math.isfinite(v) for v in (self.M, self.M_b, self.Gamma_b, self.N_b)):
            raise ValueError("constants must be finite")


def measured_constants(spec: ProblemSpec, points: int = 2001, N_b: float = 1.0, Gamma_b: float | None = None) -> HypothesisConstants:
    """M, M_b (and the constant-style M1) measured on a dense grid of [0, b]."""
    bounds = operator_bounds(spec.A, spec.q, spec.horizon, points)
    return HypothesisConstants(
        M=bounds["M"],
        M_b=bounds["M_b"],
        Gamma_b=spec.phase.l if Gamma_b is None else Gamma_b,
        N_b=N_b,
        source="empirically-measured",
        M1=bounds["M1"],
    )


@dataclass(frozen=True)
class ConditionReport:
    name: str
    value_a: float
    value_b: float
    satisfied: bool
    constants_used: HypothesisConstants
    threshold: float = 1.0

    def __post_init__(self) -> None:
        if self.satisfied != (max(self.value_a, self.value_b) < self.threshold):
            raise ValueError("satisfied flag disagrees with the values")

    @property
    def value(self) -> float:
        return max(self.value_a, self.value_b)


def _round_below_one(v) -> float:
    # keep the float on the same side of the threshold as the exact value
    out = float(v)
    if v < 1 and out >= 1.0:
        out = math.nextafter(1.0, 0.0)
    return out


def _report(name: str, a, b, consts: HypothesisConstants) -> ConditionReport:
    return ConditionReport(name, _round_below_one(a), _round_below_one(b), bool(max(a, b) < 1), consts)


def _intended(x: float) -> Fraction:
    """Simplest small-denominator rational inside the rounding interval of ``x``.

    A float such as 0.01 or 1/7 stands for the rational the user meant; values
    with no such rational (measured constants) are taken at their exact
    binary value.
    """
    x = float(x)
    exact = Fraction(x)
    if x == 0.0 or not math.isfinite(x):
        return exact
    guess = exact.limit_denominator(10**6)
    if abs(guess - exact) <= Fraction(math.ulp(x)) / 2:
        return guess
    return exact


def _exact(values) -> list[Fraction]:
    return [_intended(v) for v in values]


def check_existence_condition(spec: ProblemSpec, consts: HypothesisConstants) -> ConditionReport:
    """max{7mM^2 G_b sum p + 14mM^2 b^2 G_b sum q, 7mM^2 sum p + 7mM^2 b sum q} < 1.

    Evaluated in exact rational arithmetic (inputs read by ``_intended``) and
    rounded once, so decision and reported values cannot disagree.
    """
    imp = spec.impulses
    m = imp.m
    M, b, Gb = _exact((consts.M, spec.horizon, consts.Gamma_b))
    sp, sq = sum(_exact(imp.p), Fraction(0)), sum(_exact(imp.q), Fraction(0))
    a = 7 * m * M**2 * Gb * sp + 14 * m * M**2 * b**2 * Gb * sq
    c = 7 * m * M**2 * sp + 7 * m * M**2 * b * sq
    return _report("existence", a, c, consts)


def check_lemma31_condition(spec: ProblemSpec, consts: HypothesisConstants) -> ConditionReport:
    """Single branch 7mM^2 G_b sum p + 14mM^2 b^2 G_b sum q < 1."""
    imp = spec.impulses
    m = imp.m
    M, b, Gb = _exact((consts.M, spec.horizon, consts.Gamma_b))
    sp, sq = sum(_exact(imp.p), Fraction(0)), sum(_exact(imp.q), Fraction(0))
    a = 7 * m * M**2 * Gb * sp + 14 * m * M**2 * b**2 * Gb * sq
    return _report("a-priori", a, a, consts)


def check_stability_condition(spec: ProblemSpec, consts: HypothesisConstants) -> ConditionReport:
    """21mM^2 sum p + 21mM^2 b sum q < 1; needs the (H4) constant K1."""
    if spec.coefficients.K1 is None:
        raise HypothesisError("H4", "Lipschitz constant K1 of g is missing; stability premise unverifiable")
    imp = spec.impulses
    m = imp.m
    M, b = _exact((consts.M, spec.horizon))
    sp, sq = sum(_exact(imp.p), Fraction(0)), sum(_exact(imp.q), Fraction(0))
    v = 21 * m * M**2 * sp + 21 * m * M**2 * b * sq
    return _report("stability", v, v, consts)


def a_priori_constants(
    spec: ProblemSpec,
    consts: HypothesisConstants,
    norm_phi_sq: float,
    kappa_affine: tuple[float, float] | None = None,
) -> dict:
    """c1, c2, c3 of the a-priori estimate and both exponent variants of the bound."""
    cond = check_lemma31_condition(spec, consts)
    if not cond.satisfied:
        raise ValueError(f"a-priori condition fails (value {cond.value_a:.6g} >= 1); bound undefined")
    c = spec.coefficients
    a_aff, beta = c.kappa.affine_bound() if kappa_affine is None else kappa_affine
    imp = spec.impulses
    m, M, Mb, b, q = imp.m, consts.M, consts.M_b, spec.horizon, spec.q
    M2, Mb2 = M**2, Mb**2
    K = c.K_zero
    sp = math.fsum(imp.p)
    norm_phi_sq = float(norm_phi_sq)
    norm_phi = math.sqrt(norm_phi_sq)
    phi0_sq = float(np.sum(spec.phi(np.array([0.0]))[0] ** 2))
    x1_sq = float(np.sum(spec.x1**2))
    kappa_phi = float(c.kappa(norm_phi_sq))
    c1 = (
        7 * M2 * phi0_sq
        + 21 * M2 * b**2 * (x1_sq + kappa_phi + K)
        + 14 * M2 * b**2 * K
        + 14 * Mb2 * b ** (2 * q) / (2 * q - 1) * K
        + 14 * Mb2 * b ** (2 * q - 1) * K
    )
    D = 1.0 - cond.value_a
    c2 = (c1 + 7 * m * M2 * consts.N_b * sp * norm_phi + 14 * m * M2 * b**2 * sp * norm_phi) / D + (
        14 * m**2 * M2 * b * a_aff + (14 * M2 * b**2 + 14 * Mb2 * b ** (2 * q) + 14 * Mb2 * b ** (2 * q)) * a_aff
    ) / D
    c3 = (
        (14 * m * M2 * b * sp + 14 * M2 * b + 14 * Mb2 * b ** (2 * q - 1) / (2 * q - 1) + 14 * Mb2 * b ** (2 * q - 2))
        * beta
        / D
    )
    plain = norm_phi_sq + c2 * math.exp(c3)
    scaled = norm_phi_sq + c2 * math.exp(c3 * b)
    return {
        "c1": c1,
        "c2": c2,
        "c3": c3,
        "denominator": D,
        "bound_exp_c3": plain,
        "bound_exp_c3b": scaled,
        "bound": max(plain, scaled),
    }


def a_priori_bound(
    spec: ProblemSpec,
    consts: HypothesisConstants,
    norm_phi_sq: float,
    kappa_affine: tuple[float, float] | None = None,
) -> float:
    """||phi||_B^2 + c2 max(e^{c3}, e^{c3 b}); bounds E sup |x(t)|^2."""
    return a_priori_constants(spec, consts, norm_phi_sq, kappa_affine)["bound"]


def stability_nu(spec: ProblemSpec, consts: HypothesisConstants, L: float) -> float:
    """Proof constant nu = max{6M^2 b^2, 6M^2 b^2 K1 + 3M^2 L^2} (reported only)."""
    if spec.coefficients.K1 is None:
        raise HypothesisError("H4", "K1 missing")
    M2, b = consts.M**2, spec.horizon
    return max(6 * M2 * b**2, 6 * M2 * b**2 * spec.coefficients.K1 + 3 * M2 * L**2)


def certify_lipschitz(
    jump_map,
    constant: float,
    phase: PhaseSpaceSpec,
    dimension: int,
    samples: int = 200,
    seed: int = 0,
    name: str = "jump map",
) -> float:
    """Largest observed |F(x) - F(y)|^2 / ||x - y||_B^2 over random segment pairs.

    Emits a warning when it exceeds ``constant``; never raises.
    """
    rng = np.random.default_rng(seed)
    theta = np.linspace(-phase.truncation_horizon, 0.0, 400)
    worst = 0.0
    for _ in range(samples):
        scale = rng.exponential(1.0)
        x = scale * rng.standard_normal((theta.size, dimension))
        y = x + scale * rng.standard_normal((theta.size, dimension)) * rng.uniform(0, 1)
        sx = HistorySegment(0.0, theta, x)
        sy = HistorySegment(0.0, theta, y)
        num = float(np.sum((np.asarray(jump_map(0.0, sx)) - np.asarray(jump_map(0.0, sy))) ** 2))
        den = float(b_norm(HistorySegment(0.0, theta, x - y), phase)) ** 2
        if den > 0:
            worst = max(worst, num / den)
    if worst > constant:
        warnings.warn(f"(H2) {name}: observed ratio {worst:.4g} exceeds constant {constant:.4g}", stacklevel=2)
    return worst
