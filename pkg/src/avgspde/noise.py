"""Reproducible Q-Wiener increments.

Each stream is identified by ``(master_seed, sample_index, tag)``.  The triple
is hashed to 128 bits which key a Philox4x32-10 counter generator, so the
``i``-th normal of a stream depends on nothing but the triple and ``i``.
Batches of sample indices are advanced in lockstep; row ``m`` of a batch is
bit-identical to the stream of ``sample_index[m]`` run on its own.
"""

from __future__ import annotations

import enum
import hashlib
import math

import numpy as np

from ._backend import kernels
from .errors import InvalidArgumentError
from .models import CovarianceSpec
from .spectral import SpectralField, eigenvalues, phi1


class ProcessTag(enum.IntEnum):
    W1 = 1  # slow-equation noise
    W2 = 2  # fast-equation noise
    AUX = 3  # everything else (frozen runs, replicas, quadrature paths)


def derive_keys(master_seed: int, sample_indices, tag: ProcessTag) -> np.ndarray:
    """128-bit stream identities as a ``(M, 4)`` uint32 array."""
    idx = np.atleast_1d(np.asarray(sample_indices, dtype=np.int64))
    if np.any(idx < 0):
        raise InvalidArgumentError("sample indices must be nonnegative")
    seed = int(master_seed) & 0xFFFFFFFFFFFFFFFF
    out = np.empty((idx.size, 4), dtype=np.uint32)
    prefix = seed.to_bytes(8, "little") + int(tag).to_bytes(1, "little")
    for m, s in enumerate(idx.tolist()):
        digest = hashlib.blake2b(prefix + s.to_bytes(8, "little"), digest_size=16, person=b"avgspde-stream").digest()
        out[m] = np.frombuffer(digest, dtype="<u4")
    return out


class NoiseStream:
    """Counter-based normal stream for one or many sample indices."""

    def __init__(self, master_seed: int, sample_index, tag: ProcessTag = ProcessTag.AUX):
        self.master_seed = int(master_seed)
        self.tag = ProcessTag(tag)
        self.scalar = np.ndim(sample_index) == 0
        self.sample_index = np.atleast_1d(np.asarray(sample_index, dtype=np.int64))
        self.keys = derive_keys(self.master_seed, self.sample_index, self.tag)
        self.counter = 0

    @property
    def batch(self) -> int:
        return self.sample_index.size

    def normals(self, count: int) -> np.ndarray:
        """Next ``count`` standard normals per sample: shape ``(M, count)``, or ``(count,)`` for a scalar stream."""
        z = kernels.normals(self.keys, self.counter, count)
        self.counter += count
        return z[0] if self.scalar else z

    def skip(self, count: int) -> None:
        self.counter += count

    def replay(self) -> NoiseStream:
        """A fresh stream with the same identity, positioned at draw 0."""
        return NoiseStream(self.master_seed, self.sample_index[0] if self.scalar else self.sample_index, self.tag)

    def __repr__(self):
        return f"NoiseStream(seed={self.master_seed}, samples={self.batch}, tag={self.tag.name}, counter={self.counter})"


def wiener_increment(stream: NoiseStream, q: CovarianceSpec, h: float, n: int, length_l: float = math.pi) -> SpectralField:
    """Increment over ``h`` of ``sum_k sqrt(lambda_k) B_k e_k``; consumes ``n`` draws."""
    if h <= 0:
        raise InvalidArgumentError(f"time step must be positive, got {h}")
    z = stream.normals(n)
    return SpectralField(np.sqrt(q.lambdas(n) * h) * z, length_l)


def stoch_conv_variance(alpha, lambdas, sigma: float, h: float, scale: float = 1.0, fast: bool = False):
    """Per-mode variance of ``sigma int_0^h S_{(h-s)/scale} dW_s``.

    Slow form: ``sigma^2 lambda scale (1 - exp(-2 alpha h / scale)) / (2 alpha)``.
    With ``fast=True`` the leading ``scale`` is dropped, which is the variance
    for drift ``A / eps`` and noise ``sigma / sqrt(eps)`` with ``scale = eps``.
    """
    if h <= 0 or scale <= 0:
        raise InvalidArgumentError("step and scale must be positive")
    alpha = np.asarray(alpha, dtype=float)
    # scale (1 - e^{-2 alpha h / scale}) / (2 alpha) == h phi1(-2 alpha h / scale)
    base = h * phi1(-2.0 * alpha * h / scale)
    if fast:
        base = base / scale
    return sigma**2 * np.asarray(lambdas, dtype=float) * base


def stoch_conv_increment(
    stream: NoiseStream,
    q: CovarianceSpec,
    sigma: float,
    h: float,
    scale: float,
    n: int,
    fast: bool = False,
    length_l: float = math.pi,
) -> SpectralField:
    """Exact-variance one-step stochastic convolution; consumes ``n`` draws."""
    v = stoch_conv_variance(eigenvalues(n, length_l), q.lambdas(n), sigma, h, scale, fast)
    z = stream.normals(n)
    return SpectralField(np.sqrt(v) * z, length_l)
