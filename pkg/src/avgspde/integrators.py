"""Stochastic exponential Euler for the slow-fast system and its relatives.

The linear part and the additive noise of every equation are integrated
exactly (semigroup factor plus exact-variance stochastic convolution); the
drift is frozen at the left end point of each step.  One uniform step
advances both components of the coupled system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._backend import kernels
from .errors import InvalidArgumentError, SimulationError
from .models import ModelSpec, fbar_linear_coefficients
from .noise import NoiseStream, ProcessTag, stoch_conv_variance
from .spectral import SpectralField, eigenvalues, exp_euler_weight

EXPLOSION_BOUND = 1e6


@dataclass(frozen=True)
class SimParams:
    epsilon: float = 1.0
    T: float = 1.0
    h_macro: float = 1e-2
    h_coupled: float | None = None
    n: int = 8
    M: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise InvalidArgumentError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if self.T <= 0:
            raise InvalidArgumentError("horizon T must be positive")
        if not 0 < self.h_macro <= self.T:
            raise InvalidArgumentError("need 0 < h_macro <= T")
        if self.h_coupled is not None and not 0 < self.h_coupled <= self.h_macro:
            raise InvalidArgumentError("need 0 < h_coupled <= h_macro")
        if self.n < 1 or self.M < 1:
            raise InvalidArgumentError("n and M must be positive")

    @property
    def coupled_step(self) -> float:
        return self.h_coupled if self.h_coupled is not None else min(self.h_macro, self.epsilon / 20)

    def with_epsilon(self, epsilon: float) -> SimParams:
        # an explicit h_coupled is tied to one epsilon; let the default rule re-derive it
        return SimParams(epsilon, self.T, self.h_macro, None, self.n, self.M, self.seed)


def step_grid(T: float, h: float) -> tuple[int, float]:
    """Number of steps and effective step so that the grid ends exactly at ``T`` (step rounded down)."""
    if h <= 0:
        raise InvalidArgumentError("step must be positive")
    steps = max(1, math.ceil(T / h - 1e-9))
    return steps, T / steps


@dataclass(frozen=True)
class StepCoefficients:
    """Per-mode factors of one exponential-Euler step of size ``h``."""

    h: float
    epsilon: float
    ex: np.ndarray  # slow semigroup factor
    wx: np.ndarray  # slow drift weight
    sx: np.ndarray  # slow noise standard deviation
    ey: np.ndarray
    wy: np.ndarray  # fast drift weight, 1/eps already folded in
    sy: np.ndarray


def step_coefficients(spec: ModelSpec, n: int, h: float, epsilon: float = 1.0) -> StepCoefficients:
    alpha = eigenvalues(n, spec.length_l)
    return StepCoefficients(
        h=h,
        epsilon=epsilon,
        ex=np.exp(-alpha * h),
        wx=exp_euler_weight(alpha, h, 1.0),
        sx=np.sqrt(stoch_conv_variance(alpha, spec.q1.lambdas(n), spec.sigma1, h, 1.0)),
        ey=np.exp(-alpha * h / epsilon),
        wy=exp_euler_weight(alpha, h, epsilon) / epsilon,
        sy=np.sqrt(stoch_conv_variance(alpha, spec.q2.lambdas(n), spec.sigma2, h, epsilon, fast=True)),
    )


# -- states ----------------------------------------------------------------


@dataclass(frozen=True)
class CoupledState:
    x: SpectralField
    y: SpectralField
    t: float = 0.0

    def __post_init__(self):
        self.x._check_compatible(self.y)
        if self.t < 0:
            raise InvalidArgumentError("time must be nonnegative")


@dataclass(frozen=True)
class VariationState:
    eta: SpectralField
    t: float = 0.0


# -- averaged-drift providers ---------------------------------------------


class ClosedFormFbar:
    """Averaged drift of the linear family, ``Fbar(x) = slope * x + offset``."""

    def __init__(self, spec: ModelSpec, n: int):
        self.spec = spec
        self.slope, self.offset = fbar_linear_coefficients(spec, n)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.slope * x + self.offset

    def jacobian_apply(self, x: np.ndarray, eta: np.ndarray) -> np.ndarray:
        return self.slope * eta


def finite_difference_jacobian(fbar: Callable[[np.ndarray], np.ndarray], rel_step: float = 1e-5):
    """Directional derivative ``Fbar'(x) eta`` by central differences.

    The step is ``rel_step * (1 + |x|)`` along the unit vector of ``eta``.
    """

    def apply(x: np.ndarray, eta: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        eta = np.asarray(eta, dtype=float)
        size = np.linalg.norm(eta, axis=-1, keepdims=True)
        unit = np.divide(eta, size, out=np.zeros_like(eta), where=size > 0)
        delta = rel_step * (1.0 + np.linalg.norm(x, axis=-1, keepdims=True))
        return size * (fbar(x + delta * unit) - fbar(x - delta * unit)) / (2.0 * delta)

    return apply


# -- single steps ----------------------------------------------------------


def step_coupled(
    state: CoupledState,
    spec: ModelSpec,
    params: SimParams,
    streams: tuple[NoiseStream, NoiseStream],
    coef: StepCoefficients | None = None,
) -> CoupledState:
    """One step of the slow-fast system with step ``params.coupled_step``."""
    n = state.x.n
    if coef is None:
        coef = step_coefficients(spec, n, params.coupled_step, params.epsilon)
    w1, w2 = streams
    x, y = state.x.coeffs, state.y.coeffs
    l = spec.length_l
    F = spec.drift.F(x, y, l)
    G = spec.drift.G(x, y, l)
    z1 = w1.normals(n)
    z2 = w2.normals(n)
    x_new = coef.ex * x + coef.wx * F + coef.sx * z1
    y_new = coef.ey * y + coef.wy * G + coef.sy * z2
    return CoupledState(state.x.with_coeffs(x_new), state.y.with_coeffs(y_new), state.t + coef.h)


def step_frozen(
    y: SpectralField,
    x_frozen: SpectralField,
    spec: ModelSpec,
    h: float,
    stream: NoiseStream,
    coef: StepCoefficients | None = None,
) -> SpectralField:
    """Fast equation with the slow variable held fixed, on the unit time scale."""
    if h <= 0:
        raise InvalidArgumentError("step must be positive")
    if coef is None:
        coef = step_coefficients(spec, y.n, h, 1.0)
    G = spec.drift.G(np.broadcast_to(x_frozen.coeffs, y.coeffs.shape), y.coeffs, spec.length_l)
    z = stream.normals(y.n)
    return y.with_coeffs(coef.ey * y.coeffs + coef.wy * G + coef.sy * z)


def step_averaged(
    x: SpectralField,
    fbar: Callable[[np.ndarray], np.ndarray],
    spec: ModelSpec,
    h: float,
    stream: NoiseStream,
    coef: StepCoefficients | None = None,
) -> SpectralField:
    """Averaged slow equation; pass the W1 stream of the coupled run to share noise."""
    if h <= 0:
        raise InvalidArgumentError("step must be positive")
    if coef is None:
        coef = step_coefficients(spec, x.n, h, 1.0)
    z = stream.normals(x.n)
    return x.with_coeffs(coef.ex * x.coeffs + coef.wx * fbar(x.coeffs) + coef.sx * z)


def step_first_variation(
    v: VariationState,
    xbar_t: SpectralField,
    jacobian_apply: Callable[[np.ndarray, np.ndarray], np.ndarray],
    h: float,
) -> VariationState:
    """Deterministic first-variation equation along an averaged path."""
    if h <= 0:
        raise InvalidArgumentError("step must be positive")
    eta = v.eta
    alpha = eigenvalues(eta.n, eta.length_l)
    new = np.exp(-alpha * h) * eta.coeffs + exp_euler_weight(alpha, h, 1.0) * jacobian_apply(xbar_t.coeffs, eta.coeffs)
    return VariationState(eta.with_coeffs(new), v.t + h)


# -- path drivers ----------------------------------------------------------


def _check_finite(*arrays: np.ndarray) -> None:
    for a in arrays:
        if a is None:
            continue
        norms = np.linalg.norm(a, axis=-1)
        if not np.all(np.isfinite(norms)) or np.any(norms > EXPLOSION_BOUND):
            raise SimulationError(f"sample norm exceeded {EXPLOSION_BOUND:g}; check the hypotheses and step size")


def _initial(value, batch: int, n: int) -> np.ndarray:
    if value is None:
        return np.zeros((batch, n))
    arr = np.asarray(value.coeffs if isinstance(value, SpectralField) else value, dtype=float)
    if arr.shape[-1] != n:
        raise InvalidArgumentError(f"initial state has {arr.shape[-1]} modes, expected {n}")
    out = np.empty((batch, n))
    out[...] = arr
    return out


def linear_coef_table(spec: ModelSpec, coef: StepCoefficients, n: int) -> np.ndarray:
    """Row table consumed by the fused ``linear_paths`` kernel."""
    p = spec.drift.coefficients(n)
    slope, offset = fbar_linear_coefficients(spec, n)
    rows = {
        "ex": coef.ex, "wx": coef.wx, "sx": coef.sx,
        "ey": coef.ey, "wy": coef.wy, "sy": coef.sy,
        "abar": slope, "fbar0": offset,
        **p,
    }
    return np.ascontiguousarray(np.vstack([rows[name] for name in kernels.LINEAR_ROWS]))


@dataclass
class PathResult:
    """Terminal (or recorded) states of a batch of paths, with stream draw counts."""

    x: np.ndarray | None = None
    y: np.ndarray | None = None
    xbar: np.ndarray | None = None
    draws: dict = field(default_factory=dict)
    steps: int = 0
    h: float = 0.0


def simulate_pair(
    spec: ModelSpec,
    params: SimParams,
    sample_indices,
    x0=None,
    y0=None,
    *,
    coupled: bool = True,
    averaged: bool = True,
    fbar: Callable | None = None,
    h: float | None = None,
    T: float | None = None,
    use_kernel: bool | None = None,
) -> PathResult:
    """Coupled and/or averaged paths on one shared step grid and shared W1 noise.

    The grid is ``params.coupled_step`` unless ``h`` is given.  The linear
    family runs through the fused kernel; other families (or an explicit
    ``fbar``) step through :func:`step_coupled` / :func:`step_averaged`.
    """
    idx = np.atleast_1d(np.asarray(sample_indices, dtype=np.int64))
    n, eps = params.n, params.epsilon
    steps, h_eff = step_grid(params.T if T is None else T, params.coupled_step if h is None else h)
    coef = step_coefficients(spec, n, h_eff, eps)
    x = _initial(x0, idx.size, n)
    y = _initial(y0, idx.size, n)
    xbar = x.copy()
    w1 = NoiseStream(params.seed, idx, ProcessTag.W1)
    w2 = NoiseStream(params.seed, idx, ProcessTag.W2)
    if use_kernel is None:
        use_kernel = spec.is_linear and fbar is None
    if use_kernel:
        table = linear_coef_table(spec, coef, n)
        kernels.linear_paths(x, y, xbar, w1.keys, w2.keys, table, 0, steps, coupled, averaged)
        w1.skip(steps * n)
        if coupled:
            w2.skip(steps * n)
        draws = {"W1_coupled": w1.counter if coupled else 0, "W1_averaged": w1.counter if averaged else 0, "W2": w2.counter}
    else:
        if averaged and fbar is None:
            fbar = ClosedFormFbar(spec, n)
        w1_avg = w1.replay() if averaged else None
        l = spec.length_l
        state = CoupledState(SpectralField(x, l), SpectralField(y, l))
        xb = SpectralField(xbar, l)
        for j in range(steps):
            if coupled:
                state = step_coupled(state, spec, params, (w1, w2), coef)
            if averaged:
                xb = step_averaged(xb, fbar, spec, h_eff, w1_avg, coef)
            if j % 256 == 255:
                _check_finite(state.x.coeffs, xb.coeffs)
        x, y, xbar = state.x.coeffs, state.y.coeffs, xb.coeffs
        draws = {
            "W1_coupled": w1.counter if coupled else 0,
            "W1_averaged": w1_avg.counter if averaged else 0,
            "W2": w2.counter,
        }
    res = PathResult(
        x=x if coupled else None,
        y=y if coupled else None,
        xbar=xbar if averaged else None,
        draws=draws,
        steps=steps,
        h=h_eff,
    )
    _check_finite(res.x, res.y, res.xbar)
    return res


def simulate_frozen(
    spec: ModelSpec,
    x_frozen,
    y0,
    T: float,
    h: float,
    stream: NoiseStream,
    record: Callable[[int, np.ndarray], None] | None = None,
) -> np.ndarray:
    """Run the frozen fast process for each row of ``stream`` up to ``T``.

    ``record(j, y)`` is called with the state after step ``j`` (``j = 0`` is
    the initial state) when given.
    """
    n = np.shape(x_frozen)[-1]
    steps, h_eff = step_grid(T, h)
    coef = step_coefficients(spec, n, h_eff, 1.0)
    y = _initial(y0, stream.batch, n)
    x = np.broadcast_to(np.asarray(x_frozen, dtype=float), y.shape)
    l = spec.length_l
    if record is not None:
        record(0, y)
    for j in range(1, steps + 1):
        G = spec.drift.G(x, y, l)
        y = coef.ey * y + coef.wy * G + coef.sy * stream.normals(n).reshape(y.shape)
        if record is not None:
            record(j, y)
    _check_finite(y)
    return y


def simulate_terminal(
    kind: str,
    spec: ModelSpec,
    params: SimParams,
    sample_index,
    x0=None,
    y0=None,
    **kwargs,
) -> PathResult:
    """Terminal state(s) at ``params.T`` for one sample index or a batch.

    ``kind`` is ``"coupled"`` (step ``params.coupled_step``), ``"averaged"``
    (step ``params.h_macro`` unless ``h`` is passed) or ``"frozen"`` (fast
    equation at ``x0`` on the unit time scale, step ``params.h_macro``).
    """
    if kind == "coupled":
        return simulate_pair(spec, params, sample_index, x0, y0, coupled=True, averaged=False, **kwargs)
    if kind == "averaged":
        kwargs.setdefault("h", params.h_macro)
        return simulate_pair(spec, params, sample_index, x0, y0, coupled=False, averaged=True, **kwargs)
    if kind == "frozen":
        idx = np.atleast_1d(np.asarray(sample_index, dtype=np.int64))
        x = _initial(x0, 1, params.n)[0]
        stream = NoiseStream(params.seed, idx, ProcessTag.W2)
        y = simulate_frozen(spec, x, y0, params.T, kwargs.get("h", params.h_macro), stream)
        return PathResult(y=y, draws={"W2": stream.counter}, steps=stream.counter // params.n)
    raise InvalidArgumentError(f"unknown simulation kind '{kind}'")


def simulate_recorded(
    spec: ModelSpec,
    params: SimParams,
    sample_indices,
    record_times,
    x0=None,
    y0=None,
    *,
    averaged: bool = False,
) -> np.ndarray:
    """Slow component at each of ``record_times`` (multiples of the coupled step).

    Returns an array of shape ``(len(record_times), M, n)``.  The linear
    family is advanced segment by segment through the fused kernel, with
    the stream offset carried across segments so the path is the same as
    one uninterrupted run.
    """
    if not spec.is_linear:
        raise InvalidArgumentError("recorded paths are only implemented for the linear family")
    idx = np.atleast_1d(np.asarray(sample_indices, dtype=np.int64))
    n = params.n
    h = params.coupled_step
    marks = np.rint(np.asarray(record_times, dtype=float) / h).astype(np.int64)
    if np.any(np.diff(marks) < 0) or np.any(marks < 0):
        raise InvalidArgumentError("record_times must be nondecreasing and nonnegative")
    coef = step_coefficients(spec, n, h, params.epsilon)
    table = linear_coef_table(spec, coef, n)
    x = _initial(x0, idx.size, n)
    y = _initial(y0, idx.size, n)
    xbar = x.copy()
    w1 = NoiseStream(params.seed, idx, ProcessTag.W1)
    w2 = NoiseStream(params.seed, idx, ProcessTag.W2)
    out = np.empty((marks.size, idx.size, n))
    done = 0
    for i, mark in enumerate(marks):
        if mark > done:
            kernels.linear_paths(x, y, xbar, w1.keys, w2.keys, table, done, int(mark - done), not averaged, averaged)
            done = int(mark)
        out[i] = xbar if averaged else x
    _check_finite(x, xbar)
    return out
