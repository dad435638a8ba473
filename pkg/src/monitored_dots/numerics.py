"""Dense linear algebra helpers, special functions and seeded ensemble samplers.

Complex Gaussian entries follow the density ``f(v) = exp(-|v|^2) / pi``, i.e.
real and imaginary parts are independent ``N(0, 1/2)`` so that ``E|v|^2 = 1``.
Haar unitaries are obtained from the QR decomposition of such a matrix with the
phases of ``diag(R)`` moved into ``Q``.
"""

from __future__ import annotations

import math
from typing import Union

import numpy as np
from scipy import special as _sp

__all__ = [
    "DomainError",
    "NumericalError",
    "RngStream",
    "as_generator",
    "sample_ginibre",
    "sample_haar_unitary",
    "sample_haar_isometry",
    "sample_gue",
    "svd_singular_values",
    "digamma",
    "trigamma",
    "log_gamma",
    "log_gamma_complex",
    "bessel_i1",
    "log_bessel_i0",
    "log_bessel_i1",
    "reg_inc_beta",
    "log_factorial",
]


class DomainError(ValueError):
    """An argument lies outside the domain of a function."""


class NumericalError(RuntimeError):
    """A numerical procedure failed to converge or lost its guarantees."""


class RngStream:
    """Seeded random stream keyed by ``(seed, stream_id)``.

    The pair is mapped through ``numpy.random.SeedSequence`` with the stream id
    as spawn key, so distinct ids give statistically independent PCG64 streams
    and identical pairs reproduce identical sequences.

    Attributes:
        seed: Non-negative 64-bit seed shared by an experiment.
        stream_id: Non-negative substream index, typically the trajectory id.
        gen: The underlying ``numpy.random.Generator``.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        seed, stream_id = int(seed), int(stream_id)
        if seed < 0 or stream_id < 0:
            raise DomainError("seed and stream_id must be non-negative")
        if seed >= 2**64 or stream_id >= 2**64:
            raise DomainError("seed and stream_id must fit in 64 bits")
        self.seed = seed
        self.stream_id = stream_id
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream_id,))
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


RngLike = Union[RngStream, np.random.Generator, int, None]


def as_generator(rng: RngLike) -> np.random.Generator:
    """Return a numpy Generator for an RngStream, Generator, integer seed or None."""
    if isinstance(rng, RngStream):
        return rng.gen
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        return np.random.default_rng()
    return RngStream(int(rng)).gen


def _check_dims(*dims: int) -> None:
    for d in dims:
        if int(d) != d or d < 1:
            raise DomainError(f"matrix dimensions must be positive integers, got {d!r}")


def sample_ginibre(n: int, m: int, rng: RngLike) -> np.ndarray:
    """Draw an ``n x m`` complex Ginibre matrix with ``E|v|^2 = 1`` per entry."""
    _check_dims(n, m)
    gen = as_generator(rng)
    z = gen.standard_normal((n, m, 2))
    return (z[..., 0] + 1j * z[..., 1]) * math.sqrt(0.5)


def _phase_fixed_qr(z: np.ndarray) -> np.ndarray:
    q, r = np.linalg.qr(z)
    d = np.diagonal(r).copy()
    absd = np.abs(d)
    # a zero pivot has probability zero; keep the column as is if it happens
    ph = np.where(absd > 0, d / np.where(absd > 0, absd, 1.0), 1.0)
    return q * ph[np.newaxis, :]


def sample_haar_unitary(n: int, rng: RngLike) -> np.ndarray:
    """Draw an ``n x n`` unitary from the Haar measure on U(n)."""
    _check_dims(n)
    return _phase_fixed_qr(sample_ginibre(n, n, rng))


def sample_haar_isometry(n: int, k: int, rng: RngLike) -> np.ndarray:
    """Draw ``k`` Haar-distributed orthonormal columns in ``C^n`` (``k <= n``).

    The result has the law of the first ``k`` columns of a Haar unitary.
    """
    _check_dims(n, k)
    if k > n:
        raise DomainError("an isometry needs k <= n")
    return _phase_fixed_qr(sample_ginibre(n, k, rng))


def sample_gue(n: int, rng: RngLike) -> np.ndarray:
    """Draw a GUE matrix with joint eigenvalue density proportional to ``Delta^2 exp(-|x|^2)``."""
    a = sample_ginibre(n, n, rng)
    return 0.5 * (a + a.conj().T)


def svd_singular_values(a: np.ndarray) -> np.ndarray:
    """Singular values of ``a`` in non-increasing order.

    Raises:
        DomainError: if ``a`` is empty or has non-finite entries.
        NumericalError: if the LAPACK driver does not converge.
    """
    a = np.asarray(a)
    if a.ndim != 2 or a.size == 0:
        raise DomainError("expected a non-empty 2-d matrix")
    if not np.all(np.isfinite(a)):
        raise DomainError("matrix has non-finite entries")
    try:
        s = np.linalg.svd(a, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    return s


# Asymptotic coefficients B_{2k}/(2k) and B_{2k} for psi and psi'.
_PSI_ASY = (1 / 12, -1 / 120, 1 / 252, -1 / 240, 1 / 132, -691 / 32760, 1 / 12)
_TRI_ASY = (1 / 6, -1 / 30, 1 / 42, -1 / 30, 5 / 66, -691 / 2730, 7 / 6)
_SHIFT = 10.0


def _as_positive(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError(f"{name} requires finite positive arguments")
    return arr


def _scalar_or_array(arr: np.ndarray, like):
    return float(arr) if np.ndim(like) == 0 else arr


def digamma(x):
    """Digamma function for positive real arguments.

    Upward recurrence ``psi(x) = psi(x + 1) - 1/x`` until ``x >= 10``, then the
    Stirling-type asymptotic series.
    """
    x0 = _as_positive(x, "digamma")
    x = np.array(x0, dtype=float, copy=True)
    acc = np.zeros_like(x)
    while True:
        small = x < _SHIFT
        if not np.any(small):
            break
        acc = np.where(small, acc - 1.0 / x, acc)
        x = np.where(small, x + 1.0, x)
    inv2 = 1.0 / (x * x)
    series = np.zeros_like(x)
    for c in reversed(_PSI_ASY):
        series = (series + c) * inv2
    out = np.log(x) - 0.5 / x - series + acc
    return _scalar_or_array(out, x0)


def trigamma(x):
    """Trigamma function ``psi'(x)`` for positive real arguments."""
    x0 = _as_positive(x, "trigamma")
    x = np.array(x0, dtype=float, copy=True)
    acc = np.zeros_like(x)
    while True:
        small = x < _SHIFT
        if not np.any(small):
            break
        acc = np.where(small, acc + 1.0 / (x * x), acc)
        x = np.where(small, x + 1.0, x)
    inv2 = 1.0 / (x * x)
    series = np.zeros_like(x)
    for c in reversed(_TRI_ASY):
        series = (series + c) * inv2
    out = 1.0 / x + 0.5 * inv2 + series / x + acc
    return _scalar_or_array(out, x0)


def log_gamma(x):
    """Natural log of the gamma function for positive real arguments."""
    arr = _as_positive(x, "log_gamma")
    return _scalar_or_array(_sp.gammaln(arr), x)


def log_gamma_complex(z):
    """Principal branch of log-gamma for complex arguments with positive real part."""
    arr = np.asarray(z, dtype=complex)
    if np.any(arr.real <= 0):
        raise DomainError("log_gamma_complex requires Re z > 0")
    out = _sp.loggamma(arr)
    return complex(out) if np.ndim(z) == 0 else out


def log_factorial(n):
    """``log(n!)`` for non-negative integers."""
    arr = np.asarray(n, dtype=float)
    if np.any(arr < 0) or np.any(arr != np.round(arr)):
        raise DomainError("log_factorial requires non-negative integers")
    return _scalar_or_array(_sp.gammaln(arr + 1.0), n)


def bessel_i1(x):
    """Modified Bessel function of the first kind, order one."""
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)):
        raise DomainError("bessel_i1 requires finite arguments")
    return _scalar_or_array(_sp.i1(arr), x)


def log_bessel_i1(x):
    """``log I_1(x)`` for ``x > 0``, evaluated without overflow."""
    arr = _as_positive(x, "log_bessel_i1")
    return _scalar_or_array(np.log(_sp.i1e(arr)) + arr, x)


def log_bessel_i0(x):
    """``log I_0(x)`` for ``x >= 0``, evaluated without overflow."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(~np.isfinite(arr)):
        raise DomainError("log_bessel_i0 requires finite x >= 0")
    return _scalar_or_array(np.log(_sp.i0e(arr)) + arr, x)


def reg_inc_beta(a: float, b: float, x):
    """Regularized incomplete beta function ``I_x(a, b)``."""
    if not (a > 0 and b > 0):
        raise DomainError("reg_inc_beta requires a > 0 and b > 0")
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
        raise DomainError("reg_inc_beta requires x in [0, 1]")
    return _scalar_or_array(_sp.betainc(a, b, arr), x)
