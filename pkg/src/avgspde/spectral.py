"""Dirichlet-Laplacian eigenbasis on [0, l].

Fields are stored as coefficient vectors in the orthonormal basis
``e_k(xi) = sqrt(2/l) sin(k pi xi / l)``, ``k = 1..n``.  The eigenvalue
attached to ``e_k`` is taken positive, ``alpha_k = (k pi / l)**2``, so the
generator acts as ``-alpha_k`` on mode ``k``.

Every function here accepts batched coefficient arrays: the mode axis is the
last axis and leading axes index samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidArgumentError


def eigenvalue(k, l):
    """Return ``(k pi / l)**2``; ``k`` may be an integer or an integer array."""
    k_arr = np.asarray(k)
    if l <= 0:
        raise InvalidArgumentError(f"domain length must be positive, got {l}")
    if np.any(k_arr < 1):
        raise InvalidArgumentError("mode index must be >= 1")
    out = (k_arr * np.pi / l) ** 2
    return float(out) if out.ndim == 0 else out


def eigenvalues(n: int, l: float) -> np.ndarray:
    if n < 1:
        raise InvalidArgumentError(f"mode count must be >= 1, got {n}")
    return eigenvalue(np.arange(1, n + 1), l)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Sine-basis coefficients of a function on [0, length_l].

    ``coeffs[..., k-1]`` is the coefficient of ``e_k``.  A leading batch axis
    is allowed; ``norm`` and ``inner`` then return one value per row.
    """

    coeffs: np.ndarray
    length_l: float

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim == 0 or c.shape[-1] < 1:
            raise InvalidArgumentError("a field needs at least one mode")
        if not np.all(np.isfinite(c)):
            raise InvalidArgumentError("field coefficients must be finite")
        if self.length_l <= 0:
            raise InvalidArgumentError("domain length must be positive")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, n: int, length_l: float) -> SpectralField:
        return cls(np.zeros(n), length_l)

    @classmethod
    def basis(cls, k: int, n: int, length_l: float, scale: float = 1.0) -> SpectralField:
        if not 1 <= k <= n:
            raise InvalidArgumentError(f"basis index {k} outside 1..{n}")
        c = np.zeros(n)
        c[k - 1] = scale
        return cls(c, length_l)

    @property
    def n(self) -> int:
        return self.coeffs.shape[-1]

    def norm(self):
        # Parseval: the basis is orthonormal in L^2(0, l)
        return np.linalg.norm(self.coeffs, axis=-1)

    def inner(self, other: SpectralField):
        self._check_compatible(other)
        return np.sum(self.coeffs * other.coeffs, axis=-1)

    def _check_compatible(self, other: SpectralField) -> None:
        if not isinstance(other, SpectralField):
            raise InvalidArgumentError("expected a SpectralField")
        if other.n != self.n or other.length_l != self.length_l:
            raise InvalidArgumentError(
                f"incompatible fields: n={self.n}, l={self.length_l} vs "
                f"n={other.n}, l={other.length_l}"
            )

    def with_coeffs(self, coeffs) -> SpectralField:
        return SpectralField(coeffs, self.length_l)

    def __add__(self, other: SpectralField) -> SpectralField:
        self._check_compatible(other)
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other: SpectralField) -> SpectralField:
        self._check_compatible(other)
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __mul__(self, scalar) -> SpectralField:
        return self.with_coeffs(self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> SpectralField:
        return self.with_coeffs(-self.coeffs)

    def __repr__(self) -> str:
        return f"SpectralField(n={self.n}, l={self.length_l}, shape={self.coeffs.shape})"


def semigroup_apply(x: SpectralField, t: float) -> SpectralField:
    """Heat semigroup: multiply mode ``k`` by ``exp(-alpha_k t)``."""
    if t < 0:
        raise InvalidArgumentError(f"semigroup time must be >= 0, got {t}")
    alpha = eigenvalues(x.n, x.length_l)
    return x.with_coeffs(np.exp(-alpha * t) * x.coeffs)


def phi1(z):
    """``(exp(z) - 1) / z`` with the removable singularity filled in."""
    z = np.asarray(z, dtype=float)
    safe = np.where(z == 0.0, 1.0, z)
    out = np.where(z == 0.0, 1.0, np.expm1(safe) / safe)
    return float(out) if out.ndim == 0 else out


def exp_euler_weight(alpha, h: float, scale: float = 1.0):
    """Integral of ``exp(-alpha s / scale)`` over ``s`` in ``[0, h]``.

    Equals ``scale (1 - exp(-alpha h / scale)) / alpha``, evaluated through
    ``phi1`` so that ``alpha h / scale -> 0`` does not cancel.
    """
    if h <= 0 or scale <= 0:
        raise InvalidArgumentError("step and scale must be positive")
    alpha = np.asarray(alpha, dtype=float)
    z = alpha * h / scale
    # for z > 1 the factored form never rounds above scale/alpha
    big = z > 1.0
    safe = np.where(big, alpha, 1.0)
    out = np.where(big, (scale / safe) * -np.expm1(-np.where(big, z, 1.0)), h * phi1(-np.where(big, 0.0, z)))
    return float(out) if out.ndim == 0 else out


def fractional_norm(x: SpectralField, gamma: float):
    """Norm of ``(-A)^gamma x``, i.e. ``sqrt(sum alpha_k^(2 gamma) x_k^2)``."""
    if not 0.0 <= gamma <= 1.0:
        raise InvalidArgumentError(f"gamma must lie in [0, 1], got {gamma}")
    alpha = eigenvalues(x.n, x.length_l)
    return np.sqrt(np.sum(alpha ** (2 * gamma) * x.coeffs**2, axis=-1))


def collocation_points(grid_size: int, l: float) -> np.ndarray:
    """Interior points ``j l / (grid_size + 1)``, ``j = 1..grid_size`` (DST-I grid)."""
    return np.arange(1, grid_size + 1) * l / (grid_size + 1)


@lru_cache(maxsize=64)
def _synthesis_matrix(n: int, grid_size: int, l: float) -> np.ndarray:
    j = np.arange(1, grid_size + 1)[:, None]
    k = np.arange(1, n + 1)[None, :]
    mat = np.sqrt(2.0 / l) * np.sin(np.pi * j * k / (grid_size + 1))
    mat.setflags(write=False)
    return mat


def sine_synthesis(x: SpectralField, grid_size: int | None = None) -> np.ndarray:
    """Evaluate ``sum_k x_k e_k`` on the interior collocation grid."""
    if grid_size is None:
        grid_size = 2 * x.n
    if grid_size < x.n:
        raise InvalidArgumentError(
            f"grid_size={grid_size} < n={x.n} would alias the highest modes"
        )
    return x.coeffs @ _synthesis_matrix(x.n, grid_size, x.length_l).T


def sine_analysis(samples, l: float, n: int | None = None) -> SpectralField:
    """Project grid samples onto the first ``n`` modes.

    Inverse of :func:`sine_synthesis` whenever ``n <= grid_size`` (discrete
    orthogonality of the type-I sine transform).
    """
    samples = np.asarray(samples, dtype=float)
    grid_size = samples.shape[-1]
    if n is None:
        n = grid_size
    if grid_size < n:
        raise InvalidArgumentError(f"{grid_size} samples cannot resolve {n} modes")
    weight = l / (grid_size + 1)
    return SpectralField(weight * samples @ _synthesis_matrix(n, grid_size, l), l)
