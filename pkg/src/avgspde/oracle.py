"""Noise-free weak values for linear models and Monte-Carlo expansion coefficients.

For the linear family every Fourier mode ``k`` of the coupled system is a
two-dimensional Ornstein-Uhlenbeck process, so its law at time ``T`` is
Gaussian with moments obtained from the mean and Lyapunov ODEs.  The
averaged equation is a scalar OU process per mode and has a closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .averaging import ErgodicFbar, ErgodicParams
from .errors import InvalidArgumentError, UnsupportedOperationError
from .integrators import ClosedFormFbar, finite_difference_jacobian, step_coefficients, step_grid
from .models import (
    CosinePhi,
    LinearDrift,
    ModelSpec,
    TestFunction,
    fbar_linear_coefficients,
    validate_hypotheses,
)
from .noise import NoiseStream, ProcessTag
from .spectral import eigenvalues, phi1

RK4_TOLERANCE = 1e-8


@dataclass(frozen=True)
class GaussianModeMoments:
    """Per-mode Gaussian law of ``(X_k, Y_k)``."""

    mx: np.ndarray
    my: np.ndarray
    sxx: np.ndarray
    sxy: np.ndarray
    syy: np.ndarray
    substep_change: float = 0.0

    @property
    def n(self) -> int:
        return self.mx.size

    def determinants(self) -> np.ndarray:
        return self.sxx * self.syy - self.sxy**2


def _linear(spec: ModelSpec, what: str) -> LinearDrift:
    if not spec.is_linear:
        raise UnsupportedOperationError(f"{what} is only available for the linear family")
    return spec.drift


def _vec(v, n: int) -> np.ndarray:
    v = np.asarray(getattr(v, "coeffs", 0.0 if v is None else v), dtype=float)
    return np.broadcast_to(v, (n,)).astype(float)


def mode_blocks(spec: ModelSpec, eps: float, n: int):
    """Drift matrices ``B`` (rows ``b11 b12 b21 b22``), forcing ``f`` and noise intensities ``D``."""
    p = _linear(spec, "mode_blocks").coefficients(n)
    alpha = eigenvalues(n, spec.length_l)
    B = np.stack([-alpha + p["a"], p["b"], p["g"] / eps, -(alpha + p["c"]) / eps], axis=1)
    f = np.stack([p["f0"], p["g0"] / eps], axis=1)
    D = np.stack(
        [spec.sigma1**2 * spec.q1.lambdas(n), spec.sigma2**2 * spec.q2.lambdas(n) / eps],
        axis=1,
    )
    return B, f, D


def _rk4(B, f, D, m0, T, substeps):
    rho = np.maximum(np.abs(B[:, 0]) + np.abs(B[:, 1]), np.abs(B[:, 2]) + np.abs(B[:, 3]))
    N = np.maximum(16, np.ceil(T * rho * substeps)).astype(np.int64)
    return kernels.rk4_moments(B, f, D, m0, N, float(T))


def gaussian_moments_coupled(
    spec: ModelSpec,
    eps: float,
    T: float,
    x0=None,
    y0=None,
    ode_substeps: int = 8,
    n: int | None = None,
    max_doublings: int = 6,
) -> GaussianModeMoments:
    """Moments of the coupled linear system at ``T`` by RK4, refined until
    substep doubling changes every mode by less than ``1e-8`` relative."""
    if not 0 < eps <= 1 or T <= 0:
        raise InvalidArgumentError("need 0 < eps <= 1 and T > 0")
    if n is None:
        n = np.size(getattr(x0, "coeffs", x0)) if x0 is not None else 8
    B, f, D = mode_blocks(spec, eps, n)
    m0 = np.stack([_vec(x0, n), _vec(y0, n)], axis=1)
    sub = ode_substeps
    cur = _rk4(B, f, D, m0, T, sub)
    for _ in range(max_doublings):
        sub *= 2
        fine = _rk4(B, f, D, m0, T, sub)
        scale = np.maximum(np.max(np.abs(fine), axis=1), 1e-300)
        change = float(np.max(np.max(np.abs(fine - cur), axis=1) / scale))
        cur = fine
        if change < RK4_TOLERANCE:
            break
    return GaussianModeMoments(cur[:, 0], cur[:, 1], cur[:, 2], cur[:, 3], cur[:, 4], change)


def gaussian_moments_averaged(spec: ModelSpec, T: float, x0=None, n: int | None = None) -> GaussianModeMoments:
    """Exact law of the averaged linear equation (one scalar OU process per mode)."""
    if T <= 0:
        raise InvalidArgumentError("T must be positive")
    if n is None:
        n = np.size(getattr(x0, "coeffs", x0)) if x0 is not None else 8
    x0 = _vec(x0, n)
    slope, offset = fbar_linear_coefficients(spec, n)
    kappa = eigenvalues(n, spec.length_l) - slope
    mean = np.exp(-kappa * T) * x0 + offset * T * phi1(-kappa * T)
    var = spec.sigma1**2 * spec.q1.lambdas(n) * T * phi1(-2 * kappa * T)
    z = np.zeros(n)
    return GaussianModeMoments(mean, z, var, z.copy(), z.copy())


def _cosine(phi: TestFunction) -> np.ndarray:
    if not isinstance(phi, CosinePhi):
        raise UnsupportedOperationError("Gaussian weak values need a cosine test function")
    return phi.direction


def weak_value_gaussian(moments: GaussianModeMoments, phi: TestFunction) -> float:
    """``E cos((X, v)) = cos(m) exp(-s^2 / 2)`` for the Gaussian slow marginal."""
    v = _cosine(phi)
    m = float(v @ moments.mx)
    s2 = float((v * v) @ moments.sxx)
    return math.cos(m) * math.exp(-0.5 * s2)


def slow_independent_of_fast(spec: ModelSpec) -> bool:
    """True when ``F`` does not depend on ``y``; then the slow law equals the averaged one."""
    if spec.is_linear:
        return bool(np.all(np.asarray(spec.drift.b, dtype=float) == 0))
    return all(t.wv == 0 or t.coef == 0 or t.fn == "const" for t in spec.drift.f.terms)


# -- Monte-Carlo derivatives of the averaged weak value --------------------


def _providers(spec: ModelSpec, n: int, fbar, jacobian, ergodic: ErgodicParams):
    if fbar is None:
        fbar = ClosedFormFbar(spec, n) if spec.is_linear else ErgodicFbar(spec, ergodic)
    if jacobian is None:
        jacobian = getattr(fbar, "jacobian_apply", None) or finite_difference_jacobian(fbar)
    return fbar, jacobian


def _averaged_with_variations(spec, t, x, directions, M, h, stream, fbar, jacobian, phi):
    """Per-sample ``phi(Xbar_t)`` and ``(phi'(Xbar_t), eta^d_t)`` for each direction ``d``."""
    n = x.size
    if t == 0:
        vals = np.full(M, float(phi.value(x)))
        return vals, np.broadcast_to(directions @ phi.grad(x), (M, directions.shape[0])).copy()
    steps, h_eff = step_grid(t, h)
    coef = step_coefficients(spec, n, h_eff, 1.0)
    X = np.broadcast_to(x, (M, n)).copy()
    eta = np.broadcast_to(directions, (M,) + directions.shape).copy()
    for _ in range(steps):
        eta = coef.ex * eta + coef.wx * jacobian(X[:, None, :], eta)
        X = coef.ex * X + coef.wx * fbar(X) + coef.sx * stream.normals(n)
    return phi.value(X), np.einsum("mn,mdn->md", phi.grad(X), eta)


def estimate_Dx_ubar(
    spec: ModelSpec,
    t: float,
    x,
    direction,
    phi: TestFunction,
    M: int = 2000,
    h: float = 0.01,
    stream: NoiseStream | None = None,
    seed: int = 0,
    fbar=None,
    jacobian=None,
    ergodic: ErgodicParams = ErgodicParams(),
) -> tuple[float, float]:
    """Monte-Carlo ``D_x ubar(t, x) . direction = E (phi'(Xbar_t), eta_t)`` with its standard error."""
    x = np.asarray(getattr(x, "coeffs", x), dtype=float)
    d = np.asarray(getattr(direction, "coeffs", direction), dtype=float)
    if d.shape != x.shape or not np.any(d):
        raise InvalidArgumentError("direction must be a nonzero field with the same modes as x")
    if t < 0:
        raise InvalidArgumentError("t must be nonnegative")
    if stream is None:
        stream = NoiseStream(seed, np.arange(M), ProcessTag.AUX)
    fbar, jacobian = _providers(spec, x.size, fbar, jacobian, ergodic)
    _, deriv = _averaged_with_variations(spec, t, x, d[None, :], stream.batch, h, stream, fbar, jacobian, phi)
    col = deriv[:, 0]
    se = float(col.std(ddof=1) / math.sqrt(col.size)) if col.size > 1 else 0.0
    return float(col.mean()), se


# -- the first-order corrector ---------------------------------------------


@dataclass(frozen=True)
class ExpansionEstimates:
    ubar: float
    ubar_stderr: float
    u1: float
    u1_stderr: float
    S: float
    quad_step: float
    tail_bound: float
    grad_ubar: np.ndarray = field(repr=False, default=None)


def quadrature_nodes(S: float, first: float, ratio: float = 1.3) -> np.ndarray:
    """Integer step indices ``0 = j_0 < j_1 < ...`` whose spacing grows geometrically (unit = ``first``)."""
    last = int(round(S / first))
    nodes = [0]
    width = 1.0
    while nodes[-1] < last:
        nodes.append(min(last, nodes[-1] + max(1, int(round(width)))))
        width *= ratio
    return np.asarray(nodes, dtype=np.int64)


def estimate_u1(
    spec: ModelSpec,
    t: float,
    x,
    y,
    phi: TestFunction,
    S: float | None = None,
    quad_step: float = 0.01,
    M: int = 2000,
    seed: int = 0,
    h: float = 0.01,
    ratio: float = 1.3,
    ergodic: ErgodicParams = ErgodicParams(),
) -> ExpansionEstimates:
    """First-order corrector ``u1(t, x, y) = int_0^S E (F(x, Y^x_s(y)) - Fbar(x), D_x ubar(t, x)) ds``.

    The gradient of ``ubar`` is estimated once (all basis directions share
    the same averaged paths); the inner expectation is a Monte-Carlo mean
    over frozen paths, integrated per path by the trapezoidal rule on a
    geometric grid.  The reported error combines both Monte-Carlo parts.
    """
    x = np.asarray(getattr(x, "coeffs", x), dtype=float)
    y = np.broadcast_to(np.asarray(getattr(y, "coeffs", y), dtype=float), x.shape)
    n = x.size
    beta = validate_hypotheses(spec, n).require().beta
    if S is None:
        S = 10.0 / beta
    if S < 10.0 / beta - 1e-12:
        raise InvalidArgumentError(f"truncation S={S:g} is below 10/beta={10 / beta:g}")
    if quad_step <= 0 or M < 2:
        raise InvalidArgumentError("need quad_step > 0 and M >= 2")

    fbar, jacobian = _providers(spec, n, None, None, ergodic)
    aux = NoiseStream(seed, np.arange(M), ProcessTag.AUX)
    vals, deriv = _averaged_with_variations(spec, t, x, np.eye(n), M, h, aux, fbar, jacobian, phi)
    grad = deriv.mean(axis=0)
    grad_se = deriv.std(axis=0, ddof=1) / math.sqrt(M)
    if spec.is_linear and isinstance(phi, CosinePhi) and t > 0:
        ubar, ubar_se = weak_value_gaussian(gaussian_moments_averaged(spec, t, x), phi), 0.0
    else:
        ubar, ubar_se = float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(M))

    fbar_x = np.asarray(fbar(x), dtype=float)
    nodes = quadrature_nodes(S, quad_step, ratio)
    s_nodes = nodes * quad_step
    frozen = NoiseStream(seed, np.arange(M), ProcessTag.W2)
    coef = step_coefficients(spec, n, quad_step, 1.0)
    l = spec.length_l
    X = np.broadcast_to(x, (M, n))
    Y = np.broadcast_to(y, (M, n)).copy()
    gaps = np.empty((nodes.size, M, n))
    j = 0
    for i, node in enumerate(nodes):
        while j < node:
            Y = coef.ey * Y + coef.wy * spec.drift.G(X, Y, l) + coef.sy * frozen.normals(n)
            j += 1
        gaps[i] = spec.drift.F(X, Y, l) - fbar_x
    # per-path integral of the gap vector, then project on the gradient
    w = np.zeros(nodes.size)
    ds = np.diff(s_nodes)
    w[:-1] += ds / 2
    w[1:] += ds / 2
    int_gap = np.einsum("i,imn->mn", w, gaps)
    per_path = int_gap @ grad
    u1 = float(per_path.mean())
    mean_gap = int_gap.mean(axis=0)
    var = per_path.var(ddof=1) / M + float(np.sum((mean_gap * grad_se) ** 2))
    initial = abs(float(gaps[0].mean(axis=0) @ grad))
    tail = math.exp(-beta * S / 2) * initial
    return ExpansionEstimates(ubar, ubar_se, u1, math.sqrt(var), float(S), quad_step, tail, grad)


# -- expansion residuals ---------------------------------------------------


@dataclass(frozen=True)
class ResidualRow:
    eps: float
    diff: float
    scaled: float


def expansion_residual_study(
    spec: ModelSpec,
    eps_grid,
    T: float,
    x,
    y,
    phi: TestFunction,
    ode_substeps: int = 8,
) -> list[ResidualRow]:
    """``(eps, u^eps - ubar, (u^eps - ubar) / eps)`` from the Gaussian oracle."""
    x = np.asarray(getattr(x, "coeffs", x), dtype=float)
    n = x.size
    _cosine(phi)
    ubar = weak_value_gaussian(gaussian_moments_averaged(spec, T, x, n), phi)
    rows = []
    for eps in eps_grid:
        eps = float(eps)
        if slow_independent_of_fast(spec):
            diff = 0.0
        else:
            m = gaussian_moments_coupled(spec, eps, T, x, y, ode_substeps, n)
            diff = weak_value_gaussian(m, phi) - ubar
        rows.append(ResidualRow(eps, diff, diff / eps))
    return rows
