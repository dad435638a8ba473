"""Renyi entropies of trajectory states and their closed-form predictions.

Starting from the maximally mixed state, the state along a trajectory is
``K K^dagger / tr(K K^dagger)``, so its Renyi entropies depend only on the
normalized squared singular values ``q_n = sigma_n^2 / sum_m sigma_m^2``:

    S^(alpha) = log(sum_n q_n^alpha) / (1 - alpha).

The non-fluctuating part ``S_bar`` replaces the sums by their means,
``S_bar^(alpha) = log(m^(alpha) / (m^(1))^alpha) / (1 - alpha)`` with
``m^(alpha) = E[sum_n sigma_n^(2 alpha)]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

import numpy as np
from scipy.special import logsumexp

from .circuits import SingularSpectrum, TrajectoryRecord
from .numerics import DomainError

__all__ = [
    "RenyiSeries",
    "renyi_from_spectrum",
    "renyi_short_time_prediction",
    "renyi_integer_moment_exact",
    "renyi2_closed_form",
    "renyi_long_time_form",
    "renyi_log_decay_rates",
    "renyi_series",
    "renyi_nonfluctuating",
]

SpectrumLike = Union[SingularSpectrum, np.ndarray, Sequence[float]]


@dataclass(frozen=True)
class RenyiSeries:
    """Across-trajectory statistics of ``S^(alpha)(t)`` on a time grid."""

    alpha: float
    t_grid: np.ndarray
    mean_S: np.ndarray
    mean_log_S: np.ndarray
    var_S: np.ndarray


def _log_sigma(spec: SpectrumLike) -> np.ndarray:
    ls = spec.log_sigma if isinstance(spec, SingularSpectrum) else np.asarray(spec, dtype=float)
    ls = ls[np.isfinite(ls)]
    if ls.size == 0:
        raise DomainError("empty spectrum")
    return ls


def renyi_from_spectrum(spec: SpectrumLike, alpha: float) -> float:
    """Renyi entropy of the normalized squared singular values.

    Accepts a :class:`SingularSpectrum` or an array of log singular values.
    All sums are taken in the log domain after shifting by the largest value;
    ``alpha = 1`` uses ``-sum q log q`` directly.
    """
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    ls = _log_sigma(spec)
    w = 2.0 * (ls - ls.max())
    log_z = logsumexp(w)
    log_q = w - log_z
    if alpha == 1:
        q = np.exp(log_q)
        return float(max(-np.sum(q * log_q), 0.0))
    if math.isinf(alpha):
        return float(-log_q.max())
    val = logsumexp(alpha * log_q) / (1.0 - alpha)
    return float(max(val, 0.0))


def renyi_short_time_prediction(
    M: int, t: float, alpha: float, include_constant: bool = False
) -> float:
    """Short-time law ``S_bar ~ log M - log t`` for ``1 << t << M``.

    With ``include_constant`` the order-one term implied by the short-time
    density moments ``m^(alpha) ~ M^(alpha t + 1) / ((alpha t + 1) N^(alpha (t-1)))``
    is kept, giving ``log M + (alpha log(t + 1) - log(alpha t + 1)) / (1 - alpha)``.
    That density only holds for ``t >> 1`` and its constant does not match
    the exact moments at small ``t``, so the leading law is the default.
    """
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    if M < 1 or t <= 0:
        raise DomainError("need M >= 1 and t > 0")
    if not include_constant:
        return math.log(M) - math.log(t)
    if alpha == 1:
        return math.log(M) - math.log(t + 1.0) + t / (t + 1.0)
    return math.log(M) + (alpha * math.log(t + 1.0) - math.log(alpha * t + 1.0)) / (1.0 - alpha)


def renyi_integer_moment_exact(M: int, t: int, alpha: int) -> float:
    """``S_bar^(alpha)(t)`` from the exact integer moments of Ginibre products.

    Uses ``m^(alpha) = (1/alpha!) sum_r (-1)^r C(alpha-1, r)
    [(M-r-1+alpha)! / (M-r-1)!]^t`` and ``m^(1) = M^t`` (products of
    ``t - 1`` unit-variance Ginibre factors, up to an overall scale that
    cancels). The alternating sum is evaluated in exact integer arithmetic.
    """
    if int(alpha) != alpha or alpha < 2:
        raise DomainError("alpha must be an integer >= 2")
    if alpha > M:
        raise DomainError("alpha must not exceed M")
    if int(t) != t or t < 1:
        raise DomainError("t must be a positive integer")
    alpha, t, M = int(alpha), int(t), int(M)
    total = 0
    for r in range(alpha):
        falling = math.factorial(M - r - 1 + alpha) // math.factorial(M - r - 1)
        total += (-1) ** r * math.comb(alpha - 1, r) * falling**t
    ratio = Fraction(total, math.factorial(alpha) * M ** (alpha * t))
    if ratio <= 0:
        raise DomainError("non-positive moment ratio")
    log_ratio = math.log(ratio.numerator) - math.log(ratio.denominator)
    return log_ratio / (1.0 - alpha)


def renyi2_closed_form(M: int, t: int) -> float:
    """``S_bar^(2)(t) = -log(((1 + 1/M)^t - (1 - 1/M)^t) / 2)``."""
    if M < 1 or t < 1:
        raise DomainError("need M >= 1 and t >= 1")
    return -math.log(0.5 * ((1.0 + 1.0 / M) ** t - (1.0 - 1.0 / M) ** t))


def renyi_long_time_form(nu, alpha: float):
    """Two-level asymptotics of ``S^(alpha)`` in ``nu = sigma_2^2 / sigma_1^2``.

    ``alpha/(alpha-1) nu`` for ``alpha > 1``, ``-nu log nu`` for ``alpha = 1``
    (taken positive) and ``nu^alpha / (1 - alpha)`` for ``alpha < 1``.
    """
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    v = np.asarray(nu, dtype=float)
    if np.any(v < 0) or np.any(v > 1):
        raise DomainError("nu must lie in [0, 1]")
    if alpha > 1:
        out = alpha / (alpha - 1.0) * v
    elif alpha == 1:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(v > 0, -v * np.log(np.where(v > 0, v, 1.0)), 0.0)
    else:
        out = v**alpha / (1.0 - alpha)
    return float(out) if np.ndim(nu) == 0 else out


def renyi_log_decay_rates(tau_p: float, alpha: float) -> float:
    """Asymptotic slope of ``E[log S^(alpha)(t)]``: ``-1/tau_P`` (alpha >= 1) or ``-alpha/tau_P``."""
    if not tau_p > 0:
        raise DomainError("tau_p must be positive")
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    return -min(alpha, 1.0) / tau_p


def renyi_series(records: Sequence[TrajectoryRecord], alpha: float) -> RenyiSeries:
    """Mean, variance and mean log of ``S^(alpha)(t)`` at the commonly recorded steps."""
    if not records:
        raise DomainError("no records")
    common = set(records[0].times.tolist())
    for rec in records[1:]:
        common &= set(rec.times.tolist())
    times = np.array(sorted(common), dtype=int)
    s = np.array(
        [[renyi_from_spectrum(rec.spectrum_at(t), alpha) for t in times] for rec in records]
    )
    with np.errstate(divide="ignore"):
        log_s = np.log(s)
    return RenyiSeries(
        alpha=float(alpha),
        t_grid=times,
        mean_S=s.mean(axis=0),
        mean_log_S=log_s.mean(axis=0),
        var_S=s.var(axis=0, ddof=1) if len(records) > 1 else np.zeros(times.size),
    )


def renyi_nonfluctuating(spectra: Sequence[SpectrumLike], alpha: float) -> float:
    """Sample estimate of ``S_bar^(alpha)`` from an ensemble of spectra.

    The moments ``m^(alpha) = E[sum sigma^(2 alpha)]`` are replaced by sample
    means, evaluated in the log domain.
    """
    if not alpha > 0 or alpha == 1:
        raise DomainError("alpha must be positive and different from 1")
    logs = [_log_sigma(sp) for sp in spectra]
    if not logs:
        raise DomainError("no spectra")
    n = len(logs)
    log_m_alpha = logsumexp([logsumexp(2.0 * alpha * ls) for ls in logs]) - math.log(n)
    log_m_one = logsumexp([logsumexp(2.0 * ls) for ls in logs]) - math.log(n)
    return float((log_m_alpha - alpha * log_m_one) / (1.0 - alpha))
