"""Drift pairs, noise covariances, test functions and hypothesis checks.

Two drift families are provided:

* :class:`LinearDrift` -- mode-diagonal affine drifts
  ``F(x, y) = a x + b y + f0`` and ``G(x, y) = g x - c y + g0``.  The frozen
  fast process is then a product of independent Ornstein-Uhlenbeck modes and
  its invariant law is Gaussian with mean ``(g x + g0) / (alpha + c)``.
* :class:`NemytskiiDrift` -- pointwise maps ``F(x, y)(xi) = f(x(xi), y(xi))``
  built from globally smooth scalar terms and evaluated on a collocation grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import (
    ConfigError,
    HypothesisViolation,
    InvalidArgumentError,
    UnsupportedOperationError,
)
from .spectral import SpectralField, eigenvalues, sine_analysis, sine_synthesis

Coef = Union[float, Sequence[float]]


def _per_mode(value: Coef, n: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if arr.shape != (n,):
        raise InvalidArgumentError(f"{name} has {arr.size} entries, expected 1 or {n}")
    return arr.copy()


def _coef_to_json(value: Coef):
    arr = np.asarray(value, dtype=float)
    return float(arr) if arr.ndim == 0 else [float(v) for v in arr]


def _check_keys(d: dict, allowed: set, where: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object, got {type(d).__name__}")
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}")


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"{where}: missing required key '{key}'")
    return d[key]


# -- covariances -----------------------------------------------------------


@dataclass(frozen=True)
class CovarianceSpec:
    """Diagonal covariance ``Q e_k = lambda_k e_k``.

    ``rule="constant"`` gives ``lambda_k = c``; ``rule="power"`` gives
    ``lambda_k = c k**(-p)``.
    """

    rule: str = "power"
    c: float = 1.0
    p: float = 2.0

    def __post_init__(self):
        if self.rule not in ("constant", "power"):
            raise InvalidArgumentError(f"unknown covariance rule '{self.rule}'")

    def lambdas(self, n: int) -> np.ndarray:
        k = np.arange(1, n + 1, dtype=float)
        if self.rule == "constant":
            return np.full(n, float(self.c))
        return self.c * k ** (-self.p)

    def trace(self, n: int) -> float:
        return float(np.sum(self.lambdas(n)))

    def trace_A(self, n: int, l: float) -> float:
        """Partial sum of ``lambda_k alpha_k`` over the first ``n`` modes."""
        return float(np.sum(self.lambdas(n) * eigenvalues(n, l)))

    def trace_bounded(self) -> bool:
        if self.c == 0:
            return True
        return self.rule == "power" and self.p > 1

    def trace_A_bounded(self) -> bool:
        # lambda_k alpha_k ~ k^(2 - p)
        if self.c == 0:
            return True
        return self.rule == "power" and self.p > 3

    def to_dict(self) -> dict:
        return {"rule": self.rule, "c": float(self.c), "p": float(self.p)}

    @classmethod
    def from_dict(cls, d: dict, where: str = "covariance") -> CovarianceSpec:
        _check_keys(d, {"rule", "c", "p"}, where)
        try:
            return cls(rule=d.get("rule", "power"), c=float(d.get("c", 1.0)), p=float(d.get("p", 2.0)))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from exc


# -- drifts ----------------------------------------------------------------


@dataclass(frozen=True)
class LinearDrift:
    a: Coef = 0.0
    b: Coef = 0.0
    f0: Coef = 0.0
    g: Coef = 0.0
    c: Coef = 0.0
    g0: Coef = 0.0

    family = "linear"

    def coefficients(self, n: int) -> dict[str, np.ndarray]:
        out = {name: _per_mode(getattr(self, name), n, name) for name in ("a", "b", "f0", "g", "c", "g0")}
        if np.any(out["c"] < 0):
            raise InvalidArgumentError("fast damping c_k must be >= 0")
        return out

    def lipschitz(self, n: int) -> tuple[float, float, float]:
        """``(K_F, K_G, L_g)`` for the first ``n`` modes."""
        p = self.coefficients(n)
        K_F = float(np.max(np.abs(p["a"]) + np.abs(p["b"])))
        K_G = float(np.max(np.abs(p["g"]) + np.abs(p["c"])))
        L_g = float(np.max(np.abs(p["c"])))
        return K_F, K_G, L_g

    def F(self, x: np.ndarray, y: np.ndarray, l: float) -> np.ndarray:
        p = self.coefficients(x.shape[-1])
        return p["a"] * x + p["b"] * y + p["f0"]

    def G(self, x: np.ndarray, y: np.ndarray, l: float) -> np.ndarray:
        p = self.coefficients(x.shape[-1])
        return p["g"] * x - p["c"] * y + p["g0"]

    def to_dict(self) -> dict:
        d = {"family": "linear"}
        d.update({name: _coef_to_json(getattr(self, name)) for name in ("a", "b", "f0", "g", "c", "g0")})
        return d


_SCALAR_FNS = {
    "const": (lambda z: np.ones_like(z), 0.0),
    "id": (lambda z: z, 1.0),
    "sin": (np.sin, 1.0),
    "tanh": (np.tanh, 1.0),
}


@dataclass(frozen=True)
class Term:
    """One summand ``coef * fn(wu * u + wv * v)`` of a scalar map."""

    coef: float
    fn: str = "id"
    wu: float = 0.0
    wv: float = 0.0

    def __post_init__(self):
        if self.fn not in _SCALAR_FNS:
            raise InvalidArgumentError(f"unknown scalar function '{self.fn}' (menu: {sorted(_SCALAR_FNS)})")


@dataclass(frozen=True)
class ScalarMap:
    terms: tuple[Term, ...] = ()

    def __call__(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        out = np.zeros(np.broadcast(u, v).shape)
        for t in self.terms:
            fn = _SCALAR_FNS[t.fn][0]
            out = out + t.coef * fn(t.wu * u + t.wv * v)
        return out

    def sup_du(self) -> float:
        # every menu function has |fn'| <= 1
        return sum(abs(t.coef * t.wu) * _SCALAR_FNS[t.fn][1] for t in self.terms)

    def sup_dv(self) -> float:
        return sum(abs(t.coef * t.wv) * _SCALAR_FNS[t.fn][1] for t in self.terms)

    def to_list(self) -> list[dict]:
        return [{"coef": t.coef, "fn": t.fn, "wu": t.wu, "wv": t.wv} for t in self.terms]

    @classmethod
    def from_list(cls, items, where: str) -> ScalarMap:
        if not isinstance(items, list):
            raise ConfigError(f"{where}: expected a list of terms")
        terms = []
        for i, item in enumerate(items):
            _check_keys(item, {"coef", "fn", "wu", "wv"}, f"{where}[{i}]")
            try:
                terms.append(
                    Term(
                        coef=float(_require(item, "coef", f"{where}[{i}]")),
                        fn=item.get("fn", "id"),
                        wu=float(item.get("wu", 0.0)),
                        wv=float(item.get("wv", 0.0)),
                    )
                )
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{where}[{i}]: {exc}") from exc
        return cls(tuple(terms))


@dataclass(frozen=True)
class NemytskiiDrift:
    f: ScalarMap = field(default_factory=ScalarMap)
    g: ScalarMap = field(default_factory=ScalarMap)
    grid_factor: int = 2

    family = "nemytskii"

    def lipschitz(self, n: int) -> tuple[float, float, float]:
        K_F = max(self.f.sup_du(), self.f.sup_dv())
        K_G = max(self.g.sup_du(), self.g.sup_dv())
        return K_F, K_G, self.g.sup_dv()

    def _pointwise(self, fn: ScalarMap, x: np.ndarray, y: np.ndarray, l: float) -> np.ndarray:
        n = x.shape[-1]
        grid = self.grid_factor * n
        u = sine_synthesis(SpectralField(x, l), grid)
        v = sine_synthesis(SpectralField(y, l), grid)
        return sine_analysis(fn(u, v), l, n).coeffs

    def F(self, x, y, l):
        return self._pointwise(self.f, x, y, l)

    def G(self, x, y, l):
        return self._pointwise(self.g, x, y, l)

    def to_dict(self) -> dict:
        return {"family": "nemytskii", "f": self.f.to_list(), "g": self.g.to_list(), "grid_factor": self.grid_factor}


def drift_from_dict(d: dict, where: str = "model.drift"):
    family = _require(d, "family", where)
    if family == "linear":
        _check_keys(d, {"family", "a", "b", "f0", "g", "c", "g0"}, where)
        kwargs = {}
        for name in ("a", "b", "f0", "g", "c", "g0"):
            if name in d:
                v = d[name]
                if isinstance(v, list):
                    kwargs[name] = tuple(float(t) for t in v)
                elif isinstance(v, (int, float)) and not isinstance(v, bool):
                    kwargs[name] = float(v)
                else:
                    raise ConfigError(f"{where}.{name}: expected a number or list of numbers")
        return LinearDrift(**kwargs)
    if family == "nemytskii":
        _check_keys(d, {"family", "f", "g", "grid_factor"}, where)
        return NemytskiiDrift(
            f=ScalarMap.from_list(d.get("f", []), f"{where}.f"),
            g=ScalarMap.from_list(d.get("g", []), f"{where}.g"),
            grid_factor=int(d.get("grid_factor", 2)),
        )
    raise ConfigError(f"{where}.family: unknown family '{family}'")


@dataclass(frozen=True)
class ModelSpec:
    drift: LinearDrift | NemytskiiDrift
    q1: CovarianceSpec = field(default_factory=lambda: CovarianceSpec("power", 1.0, 4.0))
    q2: CovarianceSpec = field(default_factory=lambda: CovarianceSpec("power", 1.0, 2.0))
    sigma1: float = 0.0
    sigma2: float = 0.0
    length_l: float = math.pi

    def __post_init__(self):
        if self.length_l <= 0:
            raise InvalidArgumentError("domain length must be positive")
        if self.sigma1 < 0 or self.sigma2 < 0:
            raise InvalidArgumentError("noise strengths must be nonnegative")

    @property
    def is_linear(self) -> bool:
        return self.drift.family == "linear"

    def to_dict(self) -> dict:
        return {
            "length_l": float(self.length_l),
            "drift": self.drift.to_dict(),
            "q1": self.q1.to_dict(),
            "q2": self.q2.to_dict(),
            "sigma1": float(self.sigma1),
            "sigma2": float(self.sigma2),
        }

    @classmethod
    def from_dict(cls, d: dict, where: str = "model") -> ModelSpec:
        _check_keys(d, {"length_l", "drift", "q1", "q2", "sigma1", "sigma2"}, where)
        try:
            return cls(
                drift=drift_from_dict(_require(d, "drift", where), f"{where}.drift"),
                q1=CovarianceSpec.from_dict(d.get("q1", {"rule": "power", "c": 1.0, "p": 4.0}), f"{where}.q1"),
                q2=CovarianceSpec.from_dict(d.get("q2", {"rule": "power", "c": 1.0, "p": 2.0}), f"{where}.q2"),
                sigma1=float(d.get("sigma1", 0.0)),
                sigma2=float(d.get("sigma2", 0.0)),
                length_l=float(d.get("length_l", math.pi)),
            )
        except InvalidArgumentError as exc:
            raise ConfigError(f"{where}: {exc}") from exc


# -- hypothesis validation -------------------------------------------------


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[Check, ...]
    alpha1: float
    K_F: float
    K_G: float
    L_g: float
    beta: float
    trace_q1: float
    trace_q2: float
    trace_A_q1: float

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def require(self) -> ValidationReport:
        if not self.ok:
            raise HypothesisViolation(self)
        return self

    def summary(self) -> str:
        lines = [f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}" for c in self.checks]
        lines.append(f"beta = alpha1 - L_g = {self.beta:.6g}")
        return "\n".join(lines)


def validate_hypotheses(spec: ModelSpec, n: int) -> ValidationReport:
    alpha1 = float(eigenvalues(1, spec.length_l)[0])
    try:
        K_F, K_G, L_g = spec.drift.lipschitz(n)
    except InvalidArgumentError as exc:
        K_F = K_G = L_g = math.inf
        bad_drift = str(exc)
    else:
        bad_drift = ""
    beta = alpha1 - L_g
    lam1 = spec.q1.lambdas(n)
    lam2 = spec.q2.lambdas(n)
    tr1, tr2 = spec.q1.trace(n), spec.q2.trace(n)
    trA1 = spec.q1.trace_A(n, spec.length_l)
    checks = [
        Check(
            "drift coefficients",
            not bad_drift,
            0.0 if not bad_drift else 1.0,
            bad_drift or "well formed",
        ),
        Check(
            "L_g < alpha_1",
            L_g < alpha1,
            L_g,
            f"L_g={L_g:.6g}, alpha_1={alpha1:.6g}",
        ),
        Check(
            "Q1 nonnegative",
            bool(np.all(lam1 >= 0)),
            float(np.min(lam1)),
            f"min lambda_1k={np.min(lam1):.6g}",
        ),
        Check(
            "Q2 nonnegative",
            bool(np.all(lam2 >= 0)),
            float(np.min(lam2)),
            f"min lambda_2k={np.min(lam2):.6g}",
        ),
        Check("Tr(Q1) bounded", spec.q1.trace_bounded(), tr1, f"partial trace {tr1:.6g} at n={n}"),
        Check("Tr(Q2) bounded", spec.q2.trace_bounded(), tr2, f"partial trace {tr2:.6g} at n={n}"),
        Check(
            "Tr((-A)Q1) bounded",
            spec.q1.trace_A_bounded(),
            trA1,
            f"partial sum {trA1:.6g} at n={n}" + ("" if spec.q1.trace_A_bounded() else " (diverges as n grows)"),
        ),
    ]
    return ValidationReport(tuple(checks), alpha1, K_F, K_G, L_g, beta, tr1, tr2, trA1)


# -- drift evaluation ------------------------------------------------------


def _check_pair(spec: ModelSpec, x: SpectralField, y: SpectralField) -> None:
    x._check_compatible(y)
    if x.length_l != spec.length_l:
        raise InvalidArgumentError("field length does not match the model domain")


def apply_F(spec: ModelSpec, x: SpectralField, y: SpectralField) -> SpectralField:
    _check_pair(spec, x, y)
    return x.with_coeffs(spec.drift.F(x.coeffs, y.coeffs, spec.length_l))


def apply_G(spec: ModelSpec, x: SpectralField, y: SpectralField) -> SpectralField:
    _check_pair(spec, x, y)
    return x.with_coeffs(spec.drift.G(x.coeffs, y.coeffs, spec.length_l))


def _linear_only(spec: ModelSpec, what: str) -> LinearDrift:
    if not spec.is_linear:
        raise UnsupportedOperationError(f"{what} needs the linear family; use the ergodic estimator")
    return spec.drift


def stationary_fast_mean(spec: ModelSpec, x: np.ndarray) -> np.ndarray:
    """Mean of the frozen fast process's invariant law (linear family)."""
    drift = _linear_only(spec, "stationary_fast_mean")
    n = x.shape[-1]
    p = drift.coefficients(n)
    return (p["g"] * x + p["g0"]) / (eigenvalues(n, spec.length_l) + p["c"])


def fbar_linear_coefficients(spec: ModelSpec, n: int) -> tuple[np.ndarray, np.ndarray]:
    """``(slope, offset)`` with ``Fbar(x) = slope * x + offset`` per mode."""
    drift = _linear_only(spec, "fbar_closed_form")
    p = drift.coefficients(n)
    gamma = eigenvalues(n, spec.length_l) + p["c"]
    return p["a"] + p["b"] * p["g"] / gamma, p["f0"] + p["b"] * p["g0"] / gamma


def fbar_closed_form(spec: ModelSpec, x: SpectralField) -> SpectralField:
    slope, offset = fbar_linear_coefficients(spec, x.n)
    return x.with_coeffs(slope * x.coeffs + offset)


# -- test functions --------------------------------------------------------


class TestFunction:
    """Bounded smooth observable ``phi: H -> R``."""

    __test__ = False  # keep pytest from collecting this class

    family = ""

    def value(self, x: np.ndarray):
        raise NotImplementedError

    def grad(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sup_grad_norm(self) -> float:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class CosinePhi(TestFunction):
    """``phi(x) = cos((x, v))``."""

    direction: np.ndarray

    family = "cosine"

    def __post_init__(self):
        object.__setattr__(self, "direction", np.asarray(self.direction, dtype=float))

    def _check(self, x: np.ndarray) -> None:
        if x.shape[-1] != self.direction.shape[-1]:
            raise InvalidArgumentError("test-function direction and field have different mode counts")

    def value(self, x):
        self._check(x)
        return np.cos(x @ self.direction)

    def grad(self, x):
        self._check(x)
        return -np.sin(x @ self.direction)[..., None] * self.direction

    def sup_grad_norm(self) -> float:
        return float(np.linalg.norm(self.direction))

    def to_dict(self) -> dict:
        return {"family": "cosine", "direction": [float(v) for v in self.direction]}


@dataclass(frozen=True, eq=False)
class RationalPhi(TestFunction):
    """``phi(x) = 1 / (1 + |x|^2)``."""

    family = "rational"

    def value(self, x):
        return 1.0 / (1.0 + np.sum(x * x, axis=-1))

    def grad(self, x):
        d = 1.0 + np.sum(x * x, axis=-1)
        return -2.0 * x / (d * d)[..., None]

    def sup_grad_norm(self) -> float:
        # |2r / (1 + r^2)^2| peaks at r = 1/sqrt(3)
        r = 1.0 / math.sqrt(3.0)
        return 2 * r / (1 + r * r) ** 2

    def to_dict(self) -> dict:
        return {"family": "rational"}


def phi_from_dict(d: dict, n: int, where: str = "phi") -> TestFunction:
    _check_keys(d, {"family", "direction", "direction_mode"}, where)
    family = _require(d, "family", where)
    if family == "cosine":
        if "direction" in d:
            v = np.asarray(d["direction"], dtype=float)
            if v.shape != (n,):
                raise ConfigError(f"{where}.direction: expected {n} entries, got {v.size}")
        else:
            k = int(d.get("direction_mode", 1))
            if not 1 <= k <= n:
                raise ConfigError(f"{where}.direction_mode: {k} outside 1..{n}")
            v = np.zeros(n)
            v[k - 1] = 1.0
        return CosinePhi(v)
    if family == "rational":
        return RationalPhi()
    raise ConfigError(f"{where}.family: unknown test-function family '{family}'")


def phi_eval(phi: TestFunction, x: SpectralField):
    return phi.value(x.coeffs)


def phi_grad(phi: TestFunction, x: SpectralField) -> SpectralField:
    return x.with_coeffs(phi.grad(x.coeffs))


def benchmark_spec(b: float = 1.0) -> ModelSpec:
    """The linear benchmark used throughout the weak-order studies."""
    return ModelSpec(
        drift=LinearDrift(a=-0.2, b=b, f0=0.0, g=1.0, c=0.5, g0=0.0),
        q1=CovarianceSpec("power", 1.0, 4.0),
        q2=CovarianceSpec("power", 1.0, 2.0),
        sigma1=0.5,
        sigma2=0.5,
        length_l=math.pi,
    )
