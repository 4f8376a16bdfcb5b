"""Strict TOML problem files: load into a ProblemSpec and save canonically.

Layout (every section is a TOML table; unknown keys are rejected)::

    [problem]       alpha, horizon, x1
    [operator]      eigenvalues, basis (omitted for the identity basis)
    [phase_space]   truncation_horizon, tail_tolerance
    [phase_space.rho]  kind, rate | theta, values, total
    [[prehistory.terms]]  rate, vector
    [noise]         q_eigenvalues, seed, trace (optional)
    [coefficients]  K_zero, K1 (optional)
    [coefficients.kappa]  kind, L, delta, table_u, table_k
    [coefficients.g] / .f   matrix, offset, functional
    [coefficients.sigma]    base, diag_scale, functional
    [impulses]      times, p, q, plus [[impulses.I]] / [[impulses.J]]
    [constants]     M, M_b, Gamma_b, N_b, source, M1 (optional section)
    [solver]        steps, refined, tolerance, max_iterations (optional section)

Saving uses the shortest round-trip float representation, so
``save(load(text)) == text`` for any canonically saved file.
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .mittag import SpectralOperator
from .noise import QWienerSpec
from .phase_space import PhaseSpaceSpec, RhoForm
from .problem import (
    CoefficientSet,
    HypothesisConstants,
    HypothesisError,
    ImpulseSpec,
    KappaForm,
    LinearFunctional,
    OperatorCoefficient,
    Prehistory,
    ProblemSpec,
    VectorCoefficient,
)
from .solver import GridSpec, PicardConfig

__all__ = [
    "ConfigError",
    "ProblemConfig",
    "load_config",
    "load_problem_config",
    "loads_config",
    "dumps_config",
    "save_config",
]


class ConfigError(ValueError):
    """Malformed or non-strict configuration; the message carries key and line context."""


@dataclass(frozen=True, eq=False)
class ProblemConfig:
    spec: ProblemSpec
    constants: HypothesisConstants | None = None
    grid: GridSpec | None = None
    picard: PicardConfig | None = None


_MISSING = object()


def _line_of(text: str, key: str) -> int | None:
    leaf = key.split(".")[-1].split("[")[0]
    pat = re.compile(rf"^\s*(\[\[?[^\]]*\b{re.escape(leaf)}\b[^\]]*\]\]?|{re.escape(leaf)}\s*=)")
    for n, line in enumerate(text.splitlines(), 1):
        if pat.match(line):
            return n
    return None


class _Table:
    """Consumes keys of one TOML table and rejects leftovers."""

    def __init__(self, data, path: str, text: str):
        if not isinstance(data, dict):
            raise self._error(text, path, f"'{path}' must be a table")
        self.data = dict(data)
        self.path = path
        self.text = text

    @staticmethod
    def _error(text: str, key: str, msg: str) -> ConfigError:
        line = _line_of(text, key)
        where = f" (line {line})" if line else ""
        return ConfigError(f"{msg}{where}")

    def key(self, name: str) -> str:
        return f"{self.path}.{name}" if self.path else name

    def get(self, name: str, kind=None, default=_MISSING):
        if name not in self.data:
            if default is _MISSING:
                raise self._error(self.text, self.path, f"missing key '{self.key(name)}'")
            return default
        value = self.data.pop(name)
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if kind is not None and not isinstance(value, kind) or isinstance(value, bool) and kind in (int, float):
            raise self._error(self.text, self.key(name), f"key '{self.key(name)}' has the wrong type")
        return value

    def table(self, name: str, default=_MISSING) -> "_Table | None":
        if name not in self.data and default is not _MISSING:
            return default
        return _Table(self.get(name, dict), self.key(name), self.text)

    def tables(self, name: str) -> list["_Table"]:
        items = self.get(name, list, [])
        return [_Table(v, f"{self.key(name)}[{i}]", self.text) for i, v in enumerate(items)]

    def floats(self, name: str, default=_MISSING) -> list[float]:
        value = self.get(name, list, default)
        if value is default:
            return value
        try:
            return [float(_num(v)) for v in value]
        except TypeError:
            raise self._error(self.text, self.key(name), f"key '{self.key(name)}' must be a list of numbers")

    def matrix(self, name: str) -> np.ndarray:
        rows = self.get(name, list)
        try:
            out = np.array([[float(_num(v)) for v in row] for row in rows], dtype=float)
        except TypeError:
            raise self._error(self.text, self.key(name), f"key '{self.key(name)}' must be a list of number lists")
        if out.ndim != 2:
            raise self._error(self.text, self.key(name), f"key '{self.key(name)}' is not rectangular")
        return out

    def done(self) -> None:
        if self.data:
            name = sorted(self.data)[0]
            raise self._error(self.text, self.key(name), f"unknown key '{self.key(name)}'")


def _num(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TypeError
    return v


# ---------------------------------------------------------------------------
# reading


def _functional(t: _Table | None) -> LinearFunctional:
    if t is None:
        return LinearFunctional()
    out = LinearFunctional(
        t.get("kind", str, "point"),
        t.get("rate", float, 0.0),
        t.get("saturation", str, "none"),
        t.get("grid_points", int, 64),
    )
    t.done()
    return out


def _vector_coef(t: _Table) -> VectorCoefficient:
    out = VectorCoefficient(t.matrix("matrix"), np.asarray(t.floats("offset")), _functional(t.table("functional", None)))
    t.done()
    return out


def _operator_coef(t: _Table) -> OperatorCoefficient:
    out = OperatorCoefficient(t.matrix("base"), t.get("diag_scale", float, 0.0), _functional(t.table("functional", None)))
    t.done()
    return out


def _build(root: _Table) -> ProblemConfig:
    pb = root.table("problem")
    alpha, horizon, x1 = pb.get("alpha", float), pb.get("horizon", float), pb.floats("x1")
    pb.done()

    op = root.table("operator")
    lam = op.floats("eigenvalues")
    basis = op.matrix("basis") if "basis" in op.data else np.eye(len(lam))
    op.done()
    A = SpectralOperator(np.asarray(lam), basis)

    ps = root.table("phase_space")
    rt = ps.table("rho")
    rho = RhoForm(
        rt.get("kind", str),
        rt.get("rate", float, 0.0),
        tuple(rt.floats("theta", [])),
        tuple(rt.floats("values", [])),
        rt.get("total", float, 0.0),
    )
    rt.done()
    phase = PhaseSpaceSpec(rho, ps.get("truncation_horizon", float), ps.get("tail_tolerance", float))
    ps.done()

    pre = root.table("prehistory")
    terms = []
    for t in pre.tables("terms"):
        terms.append((t.get("rate", float), tuple(t.floats("vector"))))
        t.done()
    pre.done()
    phi = Prehistory(tuple(terms))

    nz = root.table("noise")
    noise = QWienerSpec(tuple(nz.floats("q_eigenvalues")), nz.get("seed", int, 0), nz.get("trace", float, None))
    nz.done()

    co = root.table("coefficients")
    kt = co.table("kappa")
    kappa = KappaForm(
        kt.get("kind", str),
        kt.get("L", float, 1.0),
        kt.get("delta", float, 0.0),
        tuple(kt.floats("table_u", [])),
        tuple(kt.floats("table_k", [])),
    )
    kt.done()
    coefs = CoefficientSet(
        _vector_coef(co.table("g")),
        _vector_coef(co.table("f")),
        _operator_coef(co.table("sigma")),
        kappa,
        co.get("K_zero", float),
        co.get("K1", float, None),
    )
    co.done()

    im = root.table("impulses", None)
    if im is None:
        impulses = ImpulseSpec()
    else:
        times = im.floats("times")
        p, q = im.floats("p"), im.floats("q")
        I = tuple(_vector_coef(t) for t in im.tables("I"))
        J = tuple(_vector_coef(t) for t in im.tables("J"))
        im.done()
        impulses = ImpulseSpec(tuple(times), I, J, tuple(p), tuple(q))

    consts = None
    ct = root.table("constants", None)
    if ct is not None:
        consts = HypothesisConstants(
            ct.get("M", float),
            ct.get("M_b", float),
            ct.get("Gamma_b", float),
            ct.get("N_b", float),
            ct.get("source", str, "user-supplied"),
            ct.get("M1", float, None),
        )
        ct.done()

    grid = picard = None
    st = root.table("solver", None)
    if st is not None:
        steps = st.get("steps", int, None)
        grid = None if steps is None else GridSpec(horizon, steps, st.get("refined", bool, False))
        picard = PicardConfig(st.get("tolerance", float, 1e-8), st.get("max_iterations", int, 25))
        st.done()
    root.done()

    spec = ProblemSpec(A, alpha, horizon, coefs, impulses, phase, noise, phi, np.asarray(x1))
    return ProblemConfig(spec, consts, grid, picard)


def loads_config(text: str) -> ProblemConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"parse error: {exc}") from None
    try:
        return _build(_Table(data, "", text))
    except (ConfigError, HypothesisError):
        raise
    except ValueError as exc:
        raise ConfigError(f"invalid value: {exc}") from None


def load_config(path) -> ProblemConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return loads_config(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def load_problem_config(path) -> ProblemSpec:
    return load_config(path).spec


# ---------------------------------------------------------------------------
# writing


def _coef_dict(coef, name: str) -> dict:
    if not isinstance(coef, (VectorCoefficient, OperatorCoefficient)):
        raise ConfigError(f"coefficient '{name}' is a custom callable and cannot be serialized")
    return coef.to_dict()


def _dump_dict(cfg: ProblemConfig) -> dict:
    spec = cfg.spec
    out: dict = {
        "problem": {"alpha": float(spec.alpha), "horizon": float(spec.horizon), "x1": spec.x1.tolist()},
    }
    op: dict = {"eigenvalues": spec.A.eigenvalues.tolist()}
    if not spec.A.is_diagonal:
        op["basis"] = spec.A.basis.tolist()
    out["operator"] = op

    rho = spec.phase.rho
    rd: dict = {"kind": rho.kind}
    if rho.kind == "exponential":
        rd["rate"] = float(rho.rate)
    else:
        rd.update(theta=list(rho.theta), values=list(rho.values), total=float(rho.total))
    out["phase_space"] = {
        "truncation_horizon": float(spec.phase.truncation_horizon),
        "tail_tolerance": float(spec.phase.tail_tolerance),
        "rho": rd,
    }
    out["prehistory"] = {"terms": [{"rate": r, "vector": list(v)} for r, v in spec.phi.terms]}
    nz: dict = {"q_eigenvalues": list(spec.noise.q_eigenvalues), "seed": spec.noise.seed}
    if spec.noise.trace is not None:
        nz["trace"] = float(spec.noise.trace)
    out["noise"] = nz

    c = spec.coefficients
    co: dict = {"K_zero": float(c.K_zero)}
    if c.K1 is not None:
        co["K1"] = float(c.K1)
    co["kappa"] = c.kappa.to_dict()
    co["g"] = _coef_dict(c.g, "g")
    co["f"] = _coef_dict(c.f, "f")
    co["sigma"] = _coef_dict(c.sigma, "sigma")
    out["coefficients"] = co

    im = spec.impulses
    if im.m:
        out["impulses"] = {
            "times": list(im.times),
            "p": list(im.p),
            "q": list(im.q),
            "I": [_coef_dict(v, f"I[{i}]") for i, v in enumerate(im.I)],
            "J": [_coef_dict(v, f"J[{i}]") for i, v in enumerate(im.J)],
        }
    if cfg.constants is not None:
        k = cfg.constants
        cd: dict = {"M": k.M, "M_b": k.M_b, "Gamma_b": k.Gamma_b, "N_b": k.N_b, "source": k.source}
        if k.M1 is not None:
            cd["M1"] = k.M1
        out["constants"] = {key: (float(v) if not isinstance(v, str) else v) for key, v in cd.items()}
    if cfg.grid is not None or cfg.picard is not None:
        sd: dict = {}
        if cfg.grid is not None:
            sd["steps"] = int(cfg.grid.base_steps)
            sd["refined"] = bool(cfg.grid.refined)
        pc = cfg.picard or PicardConfig()
        sd["tolerance"] = float(pc.tolerance)
        sd["max_iterations"] = int(pc.max_iterations)
        out["solver"] = sd
    return out


def dumps_config(cfg: ProblemConfig | ProblemSpec) -> str:
    if isinstance(cfg, ProblemSpec):
        cfg = ProblemConfig(cfg)
    return tomli_w.dumps(_dump_dict(cfg))


def save_config(cfg: ProblemConfig | ProblemSpec, path) -> None:
    Path(path).write_text(dumps_config(cfg), encoding="utf-8")
