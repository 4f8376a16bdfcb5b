"""Mittag-Leffler function and the solution operator families S_q, T_q.

The generator is held as a finite spectral truncation, so every operator
family reduces to scalar Mittag-Leffler evaluations on the eigenvalues:

    S_q(t) = E_{q,1}(A t^q),    T_q(t) = t^{q-1} E_{q,q}(A t^q),
    int_0^t S_q(s) ds = t E_{q,2}(A t^q).

Scalar evaluation uses the power series near the origin and, elsewhere, the
Laplace-inversion integral along two rays plus the residues of the poles
enclosed between them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import rgamma

__all__ = [
    "MLOrder",
    "SpectralOperator",
    "mittag_leffler",
    "ml_scalar",
    "sq_apply",
    "tq_apply",
    "sq_integral_apply",
    "operator_bounds",
]

# |z| at or below this uses the power series
_SERIES_RADIUS = 1.0
# largest exponent accepted before reporting overflow
_LOG_MAX = 700.0
_GAUSS_NODES = 20
_GRADED_PANELS = 60
_CHUNK = 512


@dataclass(frozen=True)
class MLOrder:
    """Parameter pair (q, beta) of E_{q,beta}."""

    q: float
    beta: float

    def __post_init__(self) -> None:
        if not (0.0 < self.q <= 2.0):
            raise ValueError(f"order q must lie in (0, 2], got {self.q}")
        if not self.beta > 0.0:
            raise ValueError(f"beta must be positive, got {self.beta}")


@dataclass(frozen=True, eq=False)
class SpectralOperator:
    """Self-adjoint generator given by eigenvalues and an orthonormal basis.

    Column ``k`` of ``basis`` is the eigenvector for ``eigenvalues[k]``.
    """

    eigenvalues: np.ndarray
    basis: np.ndarray

    def __post_init__(self) -> None:
        lam = np.asarray(self.eigenvalues, dtype=float).reshape(-1)
        basis = np.asarray(self.basis, dtype=float)
        n = lam.size
        if n == 0:
            raise ValueError("operator needs at least one eigenpair")
        if basis.shape != (n, n):
            raise ValueError(f"basis must be {n}x{n}, got {basis.shape}")
        if not np.allclose(basis.T @ basis, np.eye(n), rtol=0.0, atol=1e-10):
            raise ValueError("basis is not orthonormal")
        lam.setflags(write=False)
        basis = basis.copy()
        basis.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "basis", basis)

    @classmethod
    def diagonal(cls, eigenvalues) -> "SpectralOperator":
        lam = np.asarray(eigenvalues, dtype=float).reshape(-1)
        return cls(lam, np.eye(lam.size))

    @property
    def dimension(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def is_diagonal(self) -> bool:
        return bool(np.array_equal(self.basis, np.eye(self.dimension)))

    def to_spectral(self, v: np.ndarray) -> np.ndarray:
        """Coordinates in the eigenbasis; acts on the last axis."""
        return v if self.is_diagonal else v @ self.basis

    def from_spectral(self, c: np.ndarray) -> np.ndarray:
        return c if self.is_diagonal else c @ self.basis.T

    def apply_function(self, values: np.ndarray, v: np.ndarray) -> np.ndarray:
        """basis . diag(values) . basis^T . v"""
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.dimension:
            raise ValueError(
                f"vector dimension {v.shape[-1]} does not match operator dimension {self.dimension}"
            )
        return self.from_spectral(values * self.to_spectral(v))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SpectralOperator):
            return NotImplemented
        return bool(
            np.array_equal(self.eigenvalues, other.eigenvalues)
            and np.array_equal(self.basis, other.basis)
        )

    def __hash__(self) -> int:
        return hash((self.eigenvalues.tobytes(), self.basis.tobytes()))


# ---------------------------------------------------------------------------
# scalar kernel


def _series(z: np.ndarray, q: float, beta: float) -> np.ndarray:
    # only used for |z| <= _SERIES_RADIUS, so terms decay like 1/Gamma(qk+beta)
    kmax = int(math.ceil((45.0 - beta) / q)) + 2
    k = np.arange(max(kmax, 8), dtype=float)
    coef = rgamma(q * k + beta)
    powers = z[:, None] ** k[None, :]
    return powers @ coef


@lru_cache(maxsize=8)
def _gauss_panels(alpha_minus_beta: float) -> tuple[np.ndarray, np.ndarray, float]:
    """Nodes and weights in r for the ray integral, plus the end cap size.

    Panels are graded geometrically toward r = 0 where the integrand behaves
    like r^(alpha-beta); unit panels cover [1, 56].
    """
    x, w = np.polynomial.legendre.leggauss(_GAUSS_NODES)
    edges = [2.0 ** (-k) for k in range(_GRADED_PANELS, -1, -1)]
    edges += [float(v) for v in range(2, 57)]
    edges = np.asarray(edges)
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    nodes = (mid[:, None] + half[:, None] * x[None, :]).reshape(-1)
    weights = (half[:, None] * w[None, :]).reshape(-1)
    return nodes, weights, float(edges[0])


def _ray_angle(q: float, negative: bool) -> float:
    if negative and q > 1.0:
        pole = math.pi / q
        below = pole - 0.5 * math.pi
        above = math.pi - pole
        return pole - 0.5 * below if below >= above else pole + 0.5 * above
    return 0.75 * math.pi


def _residues(z: np.ndarray, q: float, beta: float, theta: float) -> np.ndarray:
    """Sum of (1/q) s^(1-beta) e^s over poles s^q = z with |arg s| < theta."""
    out = np.zeros(z.shape, dtype=float)
    absz = np.abs(z)
    rad = absz ** (1.0 / q)
    neg = z < 0
    pos = ~neg
    if np.any(pos):
        s = rad[pos]
        if np.any(s > _LOG_MAX):
            raise OverflowError("Mittag-Leffler value exceeds the floating point range")
        out[pos] = s ** (1.0 - beta) * np.exp(s) / q
    if np.any(neg):
        ang = math.pi / q
        if ang < theta:
            s = rad[neg] * np.exp(1j * ang)
            # conjugate pair at +-pi/q
            out[neg] = 2.0 * np.real(s ** (1.0 - beta) * np.exp(s)) / q
    return out


def _ray_integral(z: np.ndarray, q: float, beta: float, theta: float) -> np.ndarray:
    a = q - beta
    nodes, weights, cap = _gauss_panels(a)
    e_theta = np.exp(1j * theta)
    s = nodes * e_theta
    # e^s s^(q-beta) ds/dr with the r^(q-beta) factor kept explicit
    base = np.exp(s) * nodes**a * np.exp(1j * theta * (a + 1.0)) * weights
    sq = nodes**q * np.exp(1j * q * theta)
    out = np.empty(z.shape, dtype=float)
    for start in range(0, z.size, _CHUNK):
        zc = z[start : start + _CHUNK]
        vals = (base[None, :] / (sq[None, :] - zc[:, None])).sum(axis=1)
        # [0, cap]: integrand ~ r^a e^{i theta (a+1)} / (-z)
        vals += cap ** (a + 1.0) / (a + 1.0) * np.exp(1j * theta * (a + 1.0)) / (-zc)
        out[start : start + _CHUNK] = vals.imag / math.pi
    return out


def _contour(z: np.ndarray, q: float, beta: float) -> np.ndarray:
    """E_{q,beta}(z) for |z| > series radius via rays plus residues."""
    if beta >= 1.0 + q:
        # lower beta: E_{q,b}(z) = (E_{q,b-q}(z) - 1/Gamma(b-q)) / z
        return (_contour(z, q, beta - q) - rgamma(beta - q)) / z
    out = np.empty(z.shape, dtype=float)
    for negative in (True, False):
        mask = (z < 0) if negative else (z > 0)
        if not np.any(mask):
            continue
        theta = _ray_angle(q, negative)
        zz = z[mask]
        out[mask] = _ray_integral(zz, q, beta, theta) + _residues(zz, q, beta, theta)
    return out


def mittag_leffler(z, q: float, beta: float = 1.0) -> np.ndarray:
    """Two-parameter Mittag-Leffler function E_{q,beta}(z) for real z.

    Vectorised over ``z``. Raises ``OverflowError`` when the result is beyond
    the double precision range.
    """
    MLOrder(q, beta)
    z = np.asarray(z, dtype=float)
    shape = z.shape
    z = z.reshape(-1)
    if not np.all(np.isfinite(z)):
        raise ValueError("z must be finite")
    out = np.empty(z.shape, dtype=float)
    if q == 1.0 and beta == 1.0:
        with np.errstate(over="raise"):
            try:
                out[:] = np.exp(z)
            except FloatingPointError:
                raise OverflowError("Mittag-Leffler value exceeds the floating point range") from None
        return out.reshape(shape)
    small = np.abs(z) <= _SERIES_RADIUS
    if np.any(small):
        out[small] = _series(z[small], q, beta)
    if np.any(~small):
        out[~small] = _contour(z[~small], q, beta)
    if not np.all(np.isfinite(out)):
        raise OverflowError("Mittag-Leffler value exceeds the floating point range")
    return out.reshape(shape)


def ml_scalar(order: MLOrder, z: float) -> float:
    """E_{q,beta}(z) for a single real argument."""
    return float(mittag_leffler(np.array([z]), order.q, order.beta)[0])


# ---------------------------------------------------------------------------
# operator families


def _check_time(t: float) -> float:
    t = float(t)
    if not t >= 0.0:
        raise ValueError(f"time must be nonnegative, got {t}")
    return t


def sq_values(A: SpectralOperator, q: float, t: float) -> np.ndarray:
    """Eigenvalues of S_q(t)."""
    t = _check_time(t)
    return mittag_leffler(A.eigenvalues * t**q, q, 1.0)


def tq_values(A: SpectralOperator, q: float, t: float) -> np.ndarray:
    """Eigenvalues of T_q(t)."""
    t = _check_time(t)
    if t == 0.0:
        return np.zeros(A.dimension)
    return t ** (q - 1.0) * mittag_leffler(A.eigenvalues * t**q, q, q)


def sq_integral_values(A: SpectralOperator, q: float, t: float) -> np.ndarray:
    """Eigenvalues of int_0^t S_q(s) ds, summed term by term: t E_{q,2}(lambda t^q)."""
    t = _check_time(t)
    if t == 0.0:
        return np.zeros(A.dimension)
    return t * mittag_leffler(A.eigenvalues * t**q, q, 2.0)


def sq_apply(A: SpectralOperator, q: float, t: float, v) -> np.ndarray:
    return A.apply_function(sq_values(A, q, t), v)


def tq_apply(A: SpectralOperator, q: float, t: float, v) -> np.ndarray:
    return A.apply_function(tq_values(A, q, t), v)


def sq_integral_apply(A: SpectralOperator, q: float, t: float, v) -> np.ndarray:
    return A.apply_function(sq_integral_values(A, q, t), v)


def operator_bounds(A: SpectralOperator, q: float, horizon: float, points: int = 2001) -> dict:
    """Empirical operator-norm bounds over a uniform grid of [0, horizon].

    Returns ``M = max ||S_q(t)||``, ``M_b = max t^{1-q} ||T_q(t)||`` and the
    constant-style bound ``M1 = max ||T_q(t)||``. Norms are spectral norms,
    i.e. the largest eigenvalue modulus.
    """
    t = np.linspace(0.0, float(horizon), int(points))
    z = A.eigenvalues[None, :] * t[:, None] ** q
    s = np.abs(mittag_leffler(z, q, 1.0)).max(axis=1)
    tb = np.abs(mittag_leffler(z, q, q)).max(axis=1)
    with np.errstate(divide="ignore"):
        tt = np.where(t > 0, t ** (q - 1.0), 0.0)
    return {
        "M": float(s.max()),
        "M_b": float(tb.max()),
        "M1": float((tt * tb).max()),
    }

