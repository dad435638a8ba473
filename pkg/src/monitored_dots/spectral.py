"""Lyapunov spectra, purification times and level densities of Kraus products.

For Model II the non-zero singular values of ``K(t)`` are those of a product
of ``M x M`` truncations of Haar unitaries, whose Lyapunov exponents are

    lambda_n = -(psi(N - n + 1) - psi(M - n + 1)) / 2,   n = 1..M,

so that the purification time ``tau_P = 1 / (2 (lambda_1 - lambda_2))`` is
``1 / tau_P = 1/(M - 1) - 1/(N - 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .circuits import Model, TrajectoryRecord
from .numerics import DomainError, digamma

__all__ = [
    "GridDensity",
    "LyapunovEstimate",
    "PurificationStats",
    "lyapunov_exact_projective",
    "purification_time_exact",
    "lyapunov_fit",
    "purification_fit",
    "empirical_density",
    "stack_log_sigma",
]


@dataclass(frozen=True)
class GridDensity:
    """A level density sampled on an ascending grid.

    Attributes:
        grid: Ascending abscissae (bin centres or quadrature nodes).
        values: Non-negative density values.
        mass: Integral of the density over the grid.
        edges: Bin edges for histogram densities, else None.
    """

    grid: np.ndarray
    values: np.ndarray
    mass: float
    edges: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.grid.shape != self.values.shape:
            raise DomainError("grid and values must have the same shape")
        if not np.all(np.isfinite(self.values)):
            raise DomainError("density values must be finite")


@dataclass(frozen=True)
class LyapunovEstimate:
    """Per-mode Lyapunov exponent estimates (natural log per step)."""

    lambda_hat: np.ndarray
    stderr: np.ndarray
    t_window: tuple
    n_traj: int


@dataclass(frozen=True)
class PurificationStats:
    """Purification-time fit.

    Attributes:
        tau_p_hat: Inverse slope of ``-E[log nu(t)]``.
        tau_p_stderr: Delta-method standard error of ``tau_p_hat``.
        tau_p_exact: Closed-form value, when available.
        times: Recorded steps.
        log_nu_series: ``E[log nu(t)]`` (typical value).
        log_mean_nu_series: ``log E[nu(t)]`` (mean value).
    """

    tau_p_hat: float
    tau_p_stderr: float
    tau_p_exact: Optional[float]
    times: np.ndarray
    log_nu_series: np.ndarray
    log_mean_nu_series: np.ndarray


def lyapunov_exact_projective(N: int, M: int) -> np.ndarray:
    """Exact Lyapunov spectrum of Model II Kraus operators (length ``M``)."""
    if not (1 <= M <= N):
        raise DomainError("need 1 <= M <= N")
    n = np.arange(1, M + 1, dtype=float)
    return -0.5 * (digamma(N - n + 1.0) - digamma(M - n + 1.0))


def purification_time_exact(N: int, M: int) -> float:
    """Exact Model II purification time from ``1/tau_P = 1/(M-1) - 1/(N-1)``.

    Raises:
        DomainError: for ``M = 1`` (no second singular value) or ``M = N``
            (no measurements, the purification time is infinite).
    """
    if M == 1:
        raise DomainError("M = 1: the second Lyapunov exponent does not exist")
    if M == N:
        raise DomainError("M = N: no measurements, the purification time is infinite")
    if not (2 <= M < N):
        raise DomainError("need 2 <= M < N")
    return 1.0 / (1.0 / (M - 1) - 1.0 / (N - 1))


def stack_log_sigma(
    records: Sequence[TrajectoryRecord],
    n_modes: Optional[int] = None,
) -> tuple:
    """Collect recorded log singular values into an array.

    Returns:
        ``(times, Y)`` with ``Y[i, k, n]`` the log singular value ``n`` of
        trajectory ``i`` at ``times[k]``, restricted to steps recorded in every
        trajectory and to the smallest common number of modes.
    """
    if not records:
        raise DomainError("no trajectory records")
    common = set(records[0].times.tolist())
    for rec in records[1:]:
        common &= set(rec.times.tolist())
    times = np.array(sorted(common), dtype=int)
    if times.size == 0:
        raise DomainError("records share no recorded step")
    width = min(sp.log_sigma.size for rec in records for sp in rec.spectra if sp.t in common)
    if n_modes is not None:
        width = min(width, n_modes)
    y = np.empty((len(records), times.size, width))
    for i, rec in enumerate(records):
        lookup = {sp.t: sp for sp in rec.spectra}
        for k, t in enumerate(times):
            y[i, k] = lookup[t].log_sigma[:width]
    return times, y


def _window(times: np.ndarray, window: Optional[tuple]) -> np.ndarray:
    if window is None:
        tmax = times.max()
        window = (tmax / 4.0, tmax)
    sel = (times >= window[0]) & (times <= window[1])
    if np.count_nonzero(sel) < 2:
        raise DomainError("fewer than 2 recorded times in the fit window")
    return sel


def _slopes(t: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least-squares slopes of ``y[i, :, ...]`` against ``t`` for every trajectory ``i``."""
    tc = t - t.mean()
    yc = y - y.mean(axis=1, keepdims=True)
    return np.tensordot(tc, yc, axes=([0], [1])) / np.dot(tc, tc)


def lyapunov_fit(
    records: Sequence[TrajectoryRecord],
    window: Optional[tuple] = None,
    n_modes: Optional[int] = None,
) -> LyapunovEstimate:
    """Fit per-mode slopes of ``log sigma_n(t)`` over a time window.

    The estimate is the least-squares slope of the across-trajectory mean,
    equal to the mean of per-trajectory slopes; its standard error is the
    spread of those slopes. With a single trajectory the regression residual
    is used instead. The default window is ``[t_max/4, t_max]``.
    """
    times, y = stack_log_sigma(records, n_modes)
    sel = _window(times, window)
    t = times[sel].astype(float)
    ys = y[:, sel, :]
    slopes = _slopes(t, ys)
    if slopes.ndim == 1:
        slopes = slopes[np.newaxis, :]
    n = len(records)
    lam = slopes.mean(axis=0)
    if n > 1:
        se = slopes.std(axis=0, ddof=1) / math.sqrt(n)
    elif t.size > 2:
        resid = ys[0] - (ys[0].mean(axis=0) + np.outer(t - t.mean(), lam))
        se = np.sqrt((resid**2).sum(axis=0) / (t.size - 2) / ((t - t.mean()) ** 2).sum())
    else:
        se = np.full_like(lam, math.nan)
    return LyapunovEstimate(lambda_hat=lam, stderr=se, t_window=(int(t.min()), int(t.max())), n_traj=n)


def _exact_tau(records: Sequence[TrajectoryRecord]) -> Optional[float]:
    cfg = records[0].config
    if cfg.model is Model.MODEL_II and 2 <= cfg.M < cfg.N:
        return purification_time_exact(cfg.N, cfg.M)
    if cfg.model is Model.WEAK and cfg.epsilon > 0 and cfg.n_measured > 0:
        from .weak import compute_gamma

        return 1.0 / compute_gamma(cfg.L, cfg.p, cfg.epsilon).gamma
    return None


def purification_fit(
    records: Sequence[TrajectoryRecord],
    window: Optional[tuple] = None,
) -> PurificationStats:
    """Fit ``tau_P`` from the slope of ``-E[log nu(t)]``, ``nu = sigma_2^2 / sigma_1^2``."""
    times, y = stack_log_sigma(records)
    if y.shape[2] < 2:
        raise DomainError("purification needs at least two singular values")
    log_nu = 2.0 * (y[:, :, 1] - y[:, :, 0])
    sel = _window(times, window)
    t = times[sel].astype(float)
    slopes = _slopes(t, log_nu[:, sel])
    rate = -float(np.mean(slopes))
    n = len(records)
    rate_se = float(np.std(slopes, ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    if rate <= 0:
        raise DomainError("log nu does not decrease over the fit window")
    m = log_nu.max(axis=0)
    log_mean = m + np.log(np.mean(np.exp(log_nu - m), axis=0))
    return PurificationStats(
        tau_p_hat=1.0 / rate,
        tau_p_stderr=rate_se / rate**2,
        tau_p_exact=_exact_tau(records),
        times=times,
        log_nu_series=log_nu.mean(axis=0),
        log_mean_nu_series=log_mean,
    )


def empirical_density(
    records: Sequence[TrajectoryRecord],
    t: int,
    bins: int = 50,
    value_range: Optional[tuple] = None,
    shift: float = 0.0,
) -> GridDensity:
    """Histogram of log singular values at step ``t``, normalized to the mean mode count.

    ``shift * t`` is added to every value, which maps weak-model spectra onto
    the ``z`` variables when ``shift`` is the per-step drift offset.
    """
    values = []
    for rec in records:
        values.append(rec.spectrum_at(t).log_sigma + shift * t)
    if not values:
        raise DomainError("no records")
    flat = np.concatenate(values)
    if value_range is not None:
        lo, hi = value_range
        if not hi > lo:
            raise DomainError("empty bin range")
    else:
        lo, hi = flat.min(), flat.max()
    if not hi > lo:
        # all values identical: one bin around them
        lo, hi = lo - 0.5, hi + 0.5
        bins = 1
    counts, edges = np.histogram(flat, bins=bins, range=(lo, hi))
    width = np.diff(edges)
    dens = counts / (len(records) * width)
    centres = 0.5 * (edges[1:] + edges[:-1])
    return GridDensity(grid=centres, values=dens, mass=float(np.sum(dens * width)), edges=edges)
