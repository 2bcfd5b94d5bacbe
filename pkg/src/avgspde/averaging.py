"""Ergodic estimation of the averaged drift and mixing diagnostics for the frozen fast process."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EstimationError, InvalidArgumentError
from .integrators import step_coefficients, step_grid
from .models import ModelSpec, fbar_linear_coefficients, validate_hypotheses
from .noise import NoiseStream, ProcessTag


@dataclass(frozen=True)
class ErgodicParams:
    """Time-average settings; ``None`` horizons default to ``8/beta`` and ``80/beta``."""

    t_burn: float | None = None
    t_avg: float | None = None
    h: float = 0.01
    replicas: int = 8

    def __post_init__(self):
        for name in ("t_burn", "t_avg"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise InvalidArgumentError(f"{name} must be positive")
        if self.h <= 0 or self.replicas < 2:
            raise InvalidArgumentError("need h > 0 and at least 2 replicas")

    def resolve(self, beta: float) -> ErgodicParams:
        if beta <= 0:
            raise InvalidArgumentError("mixing rate beta must be positive")
        return ErgodicParams(
            self.t_burn if self.t_burn is not None else 8.0 / beta,
            self.t_avg if self.t_avg is not None else 80.0 / beta,
            self.h,
            self.replicas,
        )

    def to_dict(self) -> dict:
        return {"t_burn": self.t_burn, "t_avg": self.t_avg, "h": self.h, "replicas": self.replicas}


def _beta(spec: ModelSpec, n: int) -> float:
    return validate_hypotheses(spec, n).require().beta


def _frozen_stepper(spec: ModelSpec, n: int, h: float):
    coef = step_coefficients(spec, n, h, 1.0)
    l = spec.length_l

    def step(x, y, z):
        return coef.ey * y + coef.wy * spec.drift.G(x, y, l) + coef.sy * z

    return step


def estimate_fbar_ergodic(
    spec: ModelSpec,
    x,
    params: ErgodicParams = ErgodicParams(),
    stream: NoiseStream | None = None,
    y0=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Replica-averaged time average of ``F(x, Y^x_s)`` over ``[t_burn, t_burn + t_avg]``.

    ``x`` may carry leading batch axes; all batch entries share the replica
    noise (common random numbers), which keeps finite differences of the
    estimate smooth in ``x``.  Returns ``(estimate, stderr)`` per mode.
    """
    x = np.asarray(getattr(x, "coeffs", x), dtype=float)
    n = x.shape[-1]
    p = params.resolve(_beta(spec, n))
    if stream is None:
        stream = NoiseStream(0, np.arange(p.replicas), ProcessTag.AUX)
    if stream.batch != p.replicas:
        raise InvalidArgumentError(f"stream has {stream.batch} rows, expected {p.replicas} replicas")
    burn, h = step_grid(p.t_burn, p.h)
    avg = max(1, int(round(p.t_avg / h)))
    step = _frozen_stepper(spec, n, h)
    shape = x.shape[:-1] + (p.replicas, n)
    xb = np.broadcast_to(x[..., None, :], shape)
    y = np.zeros(shape) if y0 is None else np.broadcast_to(np.asarray(y0, dtype=float), shape).copy()
    for _ in range(burn):
        y = step(xb, y, stream.normals(n).reshape(p.replicas, n))
    acc = np.zeros(shape)
    l = spec.length_l
    for _ in range(avg):
        y = step(xb, y, stream.normals(n).reshape(p.replicas, n))
        acc += spec.drift.F(xb, y, l)
    per_replica = acc / avg
    est = per_replica.mean(axis=-2)
    se = per_replica.std(axis=-2, ddof=1) / np.sqrt(p.replicas)
    return est, se


class ErgodicFbar:
    """Averaged-drift provider that re-estimates ``Fbar`` on every call."""

    def __init__(self, spec: ModelSpec, params: ErgodicParams = ErgodicParams(), seed: int = 0):
        self.spec = spec
        self.params = params
        self.seed = seed

    def __call__(self, x: np.ndarray) -> np.ndarray:
        stream = NoiseStream(self.seed, np.arange(self.params.replicas), ProcessTag.AUX)
        return estimate_fbar_ergodic(self.spec, x, self.params, stream)[0]


def _closed_fbar(spec: ModelSpec, x: np.ndarray) -> np.ndarray:
    slope, offset = fbar_linear_coefficients(spec, x.shape[-1])
    return slope * x + offset


@dataclass(frozen=True)
class Curve:
    t: np.ndarray
    value: np.ndarray
    stderr: np.ndarray

    def rows(self):
        return list(zip(self.t.tolist(), self.value.tolist(), self.stderr.tolist()))


def _record_indices(t_grid, h: float) -> np.ndarray:
    marks = np.rint(np.asarray(t_grid, dtype=float) / h).astype(np.int64)
    if np.any(marks < 0) or np.any(np.diff(marks) < 0):
        raise InvalidArgumentError("t_grid must be nonnegative and nondecreasing")
    return marks


def mixing_gap_curve(
    spec: ModelSpec,
    x,
    y,
    t_grid,
    M: int = 2000,
    h: float = 0.01,
    stream: NoiseStream | None = None,
    fbar: np.ndarray | None = None,
) -> Curve:
    """Monte-Carlo ``|E F(x, Y^x_t(y)) - Fbar(x)|`` on ``t_grid``.

    ``fbar`` defaults to the closed form (linear family); other families
    must pass a precomputed value.  The stderr column is the Monte-Carlo
    noise scale ``sqrt(sum_k var_k / M)`` of the mean vector.
    """
    x = np.asarray(getattr(x, "coeffs", x), dtype=float)
    y = np.asarray(getattr(y, "coeffs", y), dtype=float)
    n = x.shape[-1]
    if fbar is None:
        fbar = _closed_fbar(spec, x)
    if stream is None:
        stream = NoiseStream(0, np.arange(M), ProcessTag.AUX)
    M = stream.batch
    marks = _record_indices(t_grid, h)
    step = _frozen_stepper(spec, n, h)
    l = spec.length_l
    xb = np.broadcast_to(x, (M, n))
    ys = np.broadcast_to(y, (M, n)).copy()
    gaps = np.empty(marks.size)
    ses = np.empty(marks.size)
    j = 0
    for i, mark in enumerate(marks):
        while j < mark:
            ys = step(xb, ys, stream.normals(n))
            j += 1
        Fv = spec.drift.F(xb, ys, l)
        gaps[i] = np.linalg.norm(Fv.mean(axis=0) - fbar)
        ses[i] = np.sqrt(np.sum(Fv.var(axis=0, ddof=1)) / M) if M > 1 else 0.0
    return Curve(np.asarray(t_grid, dtype=float), gaps, ses)


@dataclass(frozen=True)
class DecayFit:
    rate: float
    intercept: float
    residual: float
    points: int


def fit_exponential_decay(curve, stderr=None, floor_factor: float = 10.0) -> DecayFit:
    """Least-squares fit of ``log gap = intercept - rate t``.

    Accepts a :class:`Curve` or a sequence of ``(t, gap)`` / ``(t, gap, stderr)``
    rows.  Points with ``gap <= floor_factor * stderr`` (or ``gap <= 0``)
    are dropped.  The reported rate is clamped at zero.
    """
    if isinstance(curve, Curve):
        t, g, se = curve.t, curve.value, curve.stderr
    else:
        arr = np.asarray(curve, dtype=float)
        t, g = arr[:, 0], arr[:, 1]
        se = arr[:, 2] if arr.shape[1] > 2 else np.zeros_like(g)
    if stderr is not None:
        se = np.asarray(stderr, dtype=float)
    keep = (g > floor_factor * se) & (g > 0)
    if keep.sum() < 4:
        raise EstimationError(f"only {int(keep.sum())} points above the noise floor; need 4")
    tt, lg = t[keep], np.log(g[keep])
    slope, intercept = np.polyfit(tt, lg, 1)
    resid = lg - (slope * tt + intercept)
    return DecayFit(max(0.0, float(-slope)), float(intercept), float(np.sqrt(np.mean(resid**2))), int(keep.sum()))


def mixing_derivative_decay(
    spec: ModelSpec,
    x,
    y,
    direction,
    t_grid,
    M: int = 500,
    fd_step: float | None = None,
    h: float = 0.01,
    stream: NoiseStream | None = None,
    ergodic: ErgodicParams = ErgodicParams(),
) -> Curve:
    """Central-difference estimate of ``|D_x (Fbar(x) - E F(x, Y^x_t(y))) . direction|``.

    Both perturbed systems ``x +- delta direction`` are driven by the same
    noise, so the Monte-Carlo error of the difference stays ``O(delta)``.
    """
    x = np.asarray(getattr(x, "coeffs", x), dtype=float)
    y = np.asarray(getattr(y, "coeffs", y), dtype=float)
    d = np.asarray(getattr(direction, "coeffs", direction), dtype=float)
    n = x.shape[-1]
    if fd_step is None:
        fd_step = 1e-4 * (1.0 + np.linalg.norm(x))
    xp, xm = x + fd_step * d, x - fd_step * d
    if spec.is_linear:
        fb_p, fb_m = _closed_fbar(spec, xp), _closed_fbar(spec, xm)
    else:
        reps = np.arange(ergodic.replicas)
        fb_p = estimate_fbar_ergodic(spec, xp, ergodic, NoiseStream(0, reps, ProcessTag.AUX))[0]
        fb_m = estimate_fbar_ergodic(spec, xm, ergodic, NoiseStream(0, reps, ProcessTag.AUX))[0]
    if stream is None:
        stream = NoiseStream(0, np.arange(M), ProcessTag.AUX)
    M = stream.batch
    marks = _record_indices(t_grid, h)
    step = _frozen_stepper(spec, n, h)
    l = spec.length_l
    XP, XM = np.broadcast_to(xp, (M, n)), np.broadcast_to(xm, (M, n))
    yp = np.broadcast_to(y, (M, n)).copy()
    ym = yp.copy()
    vals = np.empty(marks.size)
    ses = np.empty(marks.size)
    j = 0
    for i, mark in enumerate(marks):
        while j < mark:
            z = stream.normals(n)
            yp = step(XP, yp, z)
            ym = step(XM, ym, z)
            j += 1
        per_path = ((fb_p - spec.drift.F(XP, yp, l)) - (fb_m - spec.drift.F(XM, ym, l))) / (2 * fd_step)
        vals[i] = np.linalg.norm(per_path.mean(axis=0))
        ses[i] = np.sqrt(np.sum(per_path.var(axis=0, ddof=1)) / M) if M > 1 else 0.0
    # an identically zero curve (F independent of y) is an exact answer, not a failure
    if np.any(vals > 0) and not np.any(vals > 10 * ses):
        raise EstimationError("derivative curve never rises above the Monte-Carlo noise floor")
    return Curve(np.asarray(t_grid, dtype=float), vals, ses)
