"""Theory of the weak-measurement model.

With ``Gamma`` the noise strength, the rescaled log singular values

    z_n(t) = log sigma_n(t) + (pL log 2 + Gamma N / 8) t,    s = Gamma t / 8,

obey the Fokker-Planck equation ``d_s P = sum_n (-d_n(D_n P) + d_n^2 P)`` with
drift ``D_n = 2 sum_{m != n} coth(z_n - z_m)``. Its solution from ``z = 0`` is

    P(z, s) = exp(-N(N^2-1)s/3) prod_{j<k} (z_j-z_k) sinh(z_j-z_k) exp(-|z|^2/4s)
              / ((4 pi s)^(N/2) (2s)^(N(N-1)/2) prod_{n<N} n!)

on the ordered sector ``z_1 > ... > z_N``. This module provides that density,
two samplers for it (Langevin and Metropolis), the very-short-time log-GUE
predictions, the singular integral equation for the mean level density, the
uniform-ansatz predictions and the long-time two-level law.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy import integrate, linalg, optimize

from . import kernels
from .numerics import (
    DomainError,
    NumericalError,
    RngLike,
    as_generator,
    log_bessel_i0,
    log_bessel_i1,
    log_factorial,
    sample_gue,
)
from .spectral import GridDensity

__all__ = [
    "WeakParams",
    "ZState",
    "FPSample",
    "IEDensity",
    "TwoLevelLaw",
    "TwoLevelStats",
    "compute_gamma",
    "weak_lambda_spectrum",
    "drift_velocities",
    "drift",
    "effective_potential",
    "fp_exact_logpdf",
    "fokker_planck_residual",
    "gue_initial_state",
    "langevin_step",
    "langevin_evolve",
    "langevin_ensemble",
    "fp_exact_sample",
    "integrated_autocorr_time",
    "vst_semicircle_density",
    "vst_renyi",
    "solve_integral_equation",
    "uniform_profile_distance",
    "uniform_ansatz_check",
    "ansatz_deviation",
    "weak_short_time_renyi",
    "renyi_covariance_prediction",
    "lyapunov_exact_weak",
    "two_level_stats",
    "sigma_to_z",
    "z_to_sigma",
    "s_of_t",
    "t_of_s",
]

_PERTURBATIVE_LIMIT = 0.1


@dataclass(frozen=True)
class WeakParams:
    """Parameters of the weak-measurement model.

    Attributes:
        L: Number of qubits.
        N: Hilbert-space dimension ``2**L``.
        p: Fraction of weakly measured qubits per layer.
        epsilon: Measurement strength.
        gamma: Noise strength ``Gamma``.
        drift_shift: Per-step offset ``pL log 2 + Gamma N / 8`` mapping
            ``log sigma_n`` to ``z_n``.
        perturbative: Whether ``pL eps^2`` is small (at most 0.1).
    """

    L: int
    N: int
    p: float
    epsilon: float
    gamma: float
    drift_shift: float
    perturbative: bool

    @property
    def n_measured(self) -> int:
        return int(round(self.p * self.L))

    @property
    def trace_lambda_sq(self) -> float:
        """``tr Lambda^2 = 2^L ((1 + eps^2)^(pL) - 1)``."""
        return self.N * math.expm1(self.n_measured * math.log1p(self.epsilon**2))


def compute_gamma(L: int, p: float, epsilon: float) -> WeakParams:
    """Noise strength ``Gamma = 4/(N^2-1) (1 - 1/N) tr Lambda^2`` and derived quantities.

    Raises:
        DomainError: if ``pL`` is not an integer or ``epsilon`` is outside [0, 1].
    """
    if int(L) != L or L < 1:
        raise DomainError("L must be a positive integer")
    if not 0.0 <= p <= 1.0:
        raise DomainError("p must lie in [0, 1]")
    if not 0.0 <= epsilon <= 1.0:
        raise DomainError("epsilon must lie in [0, 1]")
    pl = p * L
    if abs(pl - round(pl)) > 1e-9:
        raise DomainError("pL must be an integer")
    k = int(round(pl))
    n = 2 ** int(L)
    tr2 = n * math.expm1(k * math.log1p(epsilon**2))
    gamma = 4.0 / (n * n - 1.0) * (1.0 - 1.0 / n) * tr2 if n > 1 else 0.0
    ok = k * epsilon**2 <= _PERTURBATIVE_LIMIT
    if not ok:
        warnings.warn(
            f"pL eps^2 = {k * epsilon**2:.3g} is not small; the Langevin description may fail",
            stacklevel=2,
        )
    return WeakParams(
        L=int(L),
        N=n,
        p=float(p),
        epsilon=float(epsilon),
        gamma=gamma,
        drift_shift=k * math.log(2.0) + gamma * n / 8.0,
        perturbative=ok,
    )


def weak_lambda_spectrum(n_measured: int, epsilon: float, L: int) -> tuple:
    """Eigenvalues ``l_n = (1+eps)^n (1-eps)^(pL-n) - 1`` of ``Lambda`` and their multiplicities.

    Returns:
        ``(values, multiplicities)`` for ``n = 0..pL``.
    """
    if not 0 <= n_measured <= L:
        raise DomainError("need 0 <= pL <= L")
    n = np.arange(n_measured + 1)
    vals = (1.0 + epsilon) ** n * (1.0 - epsilon) ** (n_measured - n) - 1.0
    mult = np.array([math.comb(n_measured, int(j)) for j in n]) * 2 ** (L - n_measured)
    return vals, mult


def s_of_t(t, gamma: float):
    """Rescaled time ``s = Gamma t / 8``."""
    return gamma * np.asarray(t, dtype=float) / 8.0 if np.ndim(t) else gamma * t / 8.0


def t_of_s(s, gamma: float):
    """Circuit time ``t = 8 s / Gamma``."""
    if not gamma > 0:
        raise DomainError("gamma must be positive")
    return 8.0 * np.asarray(s, dtype=float) / gamma if np.ndim(s) else 8.0 * s / gamma


def sigma_to_z(log_sigma, t: float, params: WeakParams) -> np.ndarray:
    """Map log singular values at step ``t`` to ``z_n = log sigma_n + drift_shift * t``."""
    return np.asarray(log_sigma, dtype=float) + params.drift_shift * t


def z_to_sigma(z, t: float, params: WeakParams) -> np.ndarray:
    """Inverse of :func:`sigma_to_z`, returning log singular values."""
    return np.asarray(z, dtype=float) - params.drift_shift * t


@dataclass(frozen=True)
class ZState:
    """Ordered ``z`` vector at rescaled time ``s``."""

    z: np.ndarray
    s: float

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        if z.ndim != 1 or z.size == 0:
            raise DomainError("z must be a non-empty vector")
        if not np.all(np.isfinite(z)):
            raise DomainError("z must be finite")
        if np.any(np.diff(z) >= 0):
            raise DomainError("z must be strictly decreasing")
        object.__setattr__(self, "z", z)

    @property
    def N(self) -> int:
        return self.z.size


def drift_velocities(N: int) -> np.ndarray:
    """Asymptotic drift velocities ``c_n = 2(N + 1 - 2n)``."""
    n = np.arange(1, N + 1)
    return 2.0 * (N + 1 - 2 * n)


def drift(z) -> np.ndarray:
    """Drift ``D_n(z) = 2 sum_{m != n} coth(z_n - z_m)``; accepts one vector or a batch."""
    arr = np.asarray(z, dtype=float)
    out = kernels.coth_drift(np.atleast_2d(arr))
    return out[0] if arr.ndim == 1 else out


def effective_potential(z) -> float:
    """``V = (1/4) sum D_n^2 + (1/2) sum d_n D_n`` evaluated at ``z``.

    Uses ``d_n D_n = -2 sum_{m != n} csch^2(z_n - z_m)``; for the exact drift this
    is the constant ``N(N^2-1)/3``.
    """
    z = np.asarray(z, dtype=float)
    d = drift(z)
    diff = z[:, None] - z[None, :]
    off = ~np.eye(z.size, dtype=bool)
    csch2 = np.zeros_like(diff)
    csch2[off] = 1.0 / np.sinh(diff[off]) ** 2
    return float(0.25 * np.sum(d * d) - np.sum(csch2))


def _log_sinh(d: np.ndarray) -> np.ndarray:
    return d + np.log(-np.expm1(-2.0 * d)) - math.log(2.0)


def _log_norm(N: int, s: float) -> float:
    return (
        -0.5 * N * math.log(4.0 * math.pi * s)
        - 0.5 * N * (N - 1) * math.log(2.0 * s)
        - float(np.sum(log_factorial(np.arange(1, N))))
        - N * (N * N - 1) * s / 3.0
    )


def fp_exact_logpdf(state) -> float:
    """Natural log of the exact Fokker-Planck density at an ordered point.

    Accepts a :class:`ZState` or a pair ``(z, s)``. All factors are combined in
    the log domain. A point on a collision plane has log density ``-inf``.

    Raises:
        DomainError: if ``s <= 0`` or ``z`` is not in non-increasing order.
    """
    if isinstance(state, ZState):
        z, s = state.z, state.s
    else:
        z, s = state
        z = np.asarray(z, dtype=float)
    if not s > 0:
        raise DomainError("s must be positive")
    n = z.size
    if np.any(np.diff(z) > 0):
        raise DomainError("z must be in non-increasing order")
    val = _log_norm(n, s) - float(np.dot(z, z)) / (4.0 * s)
    if n > 1:
        iu = np.triu_indices(n, 1)
        d = z[iu[0]] - z[iu[1]]
        if np.any(d <= 0):
            return -math.inf
        val += float(np.sum(np.log(d) + _log_sinh(d)))
    return val


def fokker_planck_residual(z, s: float, h: float = 1e-4) -> float:
    """Relative residual of the Fokker-Planck equation for the exact density.

    With ``l = log P`` the equation divided by ``P`` reads
    ``d_s l = sum_n (-d_n D_n - D_n d_n l + d_n^2 l + (d_n l)^2)``. All
    derivatives are central finite differences of step ``h``. The residual is
    normalized by the sum of absolute values of the terms.
    """
    z = np.asarray(z, dtype=float)
    n = z.size

    def ell(zz, ss):
        return fp_exact_logpdf((zz, ss))

    lhs = (ell(z, s + h) - ell(z, s - h)) / (2.0 * h)
    l0 = ell(z, s)
    d = drift(z)
    terms = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        lp, lm = ell(z + e, s), ell(z - e, s)
        dl = (lp - lm) / (2.0 * h)
        d2l = (lp - 2.0 * l0 + lm) / (h * h)
        dd = (drift(z + e)[k] - drift(z - e)[k]) / (2.0 * h)
        terms.extend([-dd, -d[k] * dl, d2l, dl * dl])
    rhs = float(np.sum(terms))
    scale = abs(lhs) + float(np.sum(np.abs(terms)))
    return abs(lhs - rhs) / scale


def gue_initial_state(N: int, s0: float, rng: RngLike) -> np.ndarray:
    """Draw ``z`` from the very-short-time law ``z = sqrt(4 s0) x`` with ``x`` GUE eigenvalues.

    The GUE is normalized so that its eigenvalue density is proportional to
    ``Delta(x)^2 exp(-|x|^2)``; values are returned in decreasing order.
    """
    if not s0 > 0:
        raise DomainError("s0 must be positive")
    if N == 1:
        return np.array([math.sqrt(2.0 * s0) * as_generator(rng).standard_normal()])
    x = np.linalg.eigvalsh(sample_gue(N, rng))[::-1]
    return math.sqrt(4.0 * s0) * x


_POOL = 4096


def langevin_evolve(
    z0: np.ndarray,
    ds: float,
    rng: RngLike,
    dt_max: float = 1e-3,
    dt_min: float = 1e-20,
) -> np.ndarray:
    """Integrate ``dz = D(z) ds + sqrt(2) dW`` over a span ``ds`` for a batch of walkers.

    Steps are ``min(dt_max, 0.1 * min_gap^2)``; steps that break the ordering
    are halved and redrawn. Normals are drawn in per-walker pools that are
    refilled on demand.

    Args:
        z0: Initial states, shape ``(W, N)`` or ``(N,)``, strictly decreasing.
        ds: Rescaled time to integrate over.
        rng: Random source.
        dt_max: Largest step.
        dt_min: Smallest step before a collision is declared.

    Returns:
        Final states with the shape of ``z0``.

    Raises:
        NumericalError: if a walker cannot keep its ordering (collision).
    """
    if not ds >= 0:
        raise DomainError("ds must be non-negative")
    if not dt_max > 0:
        raise DomainError("dt_max must be positive")
    z0 = np.asarray(z0, dtype=float)
    single = z0.ndim == 1
    z = np.ascontiguousarray(np.atleast_2d(z0).copy())
    if np.any(np.diff(z, axis=1) >= 0):
        raise DomainError("initial states must be strictly decreasing")
    gen = as_generator(rng)
    n_w, n = z.shape
    s_rem = np.full(n_w, float(ds))
    pos = np.zeros(n_w, dtype=np.int64)
    normals = gen.standard_normal((n_w, _POOL, n))
    while True:
        status = kernels.langevin_run(z, s_rem, normals, pos, dt_max, dt_min)
        if np.any(status == kernels.STATUS_COLLISION):
            bad = np.flatnonzero(status == kernels.STATUS_COLLISION)
            raise NumericalError(f"Langevin walkers {bad.tolist()} collided")
        dry = np.flatnonzero(status == kernels.STATUS_POOL_EXHAUSTED)
        if dry.size == 0:
            break
        normals[dry] = gen.standard_normal((dry.size, _POOL, n))
        pos[dry] = 0
    return z[0] if single else z


def langevin_step(state: ZState, params: Optional[WeakParams], dt_s: float, rng: RngLike) -> ZState:
    """Advance one state by ``dt_s`` in rescaled time.

    The step is an Euler-Maruyama update, split into gap-controlled substeps
    when ``dt_s`` exceeds ``0.1 * min_gap^2``. In circuit units one step of
    ``t`` corresponds to ``dt_s = Gamma / 8``.
    """
    if not dt_s > 0:
        raise DomainError("dt_s must be positive")
    if params is not None and params.N != state.N:
        raise DomainError("state size does not match params.N")
    z = langevin_evolve(state.z, dt_s, rng, dt_max=dt_s)
    return ZState(z, state.s + dt_s)


def langevin_ensemble(
    N: int,
    s: float,
    n_walkers: int,
    rng: RngLike,
    s0: Optional[float] = None,
    dt_max: float = 1e-3,
    batch: int = 2000,
) -> np.ndarray:
    """Ensemble of Langevin walkers started from the log-GUE law at ``s0``.

    Args:
        N: Number of levels.
        s: Final rescaled time.
        n_walkers: Number of independent walkers.
        rng: Random source.
        s0: Start time; defaults to ``min(1e-4, s/100) / N``, deep in the
            very-short-time regime where the log-GUE law is accurate.
        dt_max: Largest integration step.
        batch: Walkers integrated per kernel call.

    Returns:
        Array of shape ``(n_walkers, N)``.
    """
    if not s > 0:
        raise DomainError("s must be positive")
    if s0 is None:
        s0 = min(1e-4, s / 100.0) / N
    if not 0 < s0 < s:
        raise DomainError("need 0 < s0 < s")
    gen = as_generator(rng)
    z0 = np.array([gue_initial_state(N, s0, gen) for _ in range(n_walkers)])
    out = np.empty_like(z0)
    for lo in range(0, n_walkers, batch):
        out[lo : lo + batch] = langevin_evolve(z0[lo : lo + batch], s - s0, gen, dt_max=dt_max)
    return out


def integrated_autocorr_time(x: np.ndarray, c: float = 5.0) -> float:
    """Integrated autocorrelation time of chains ``x`` of shape ``(C, T)``.

    The autocorrelation is averaged over chains and summed with Sokal's
    self-consistent window ``M >= c * tau``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n_t = x.shape[1]
    if n_t < 4:
        raise DomainError("chains too short for an autocorrelation estimate")
    xc = x - x.mean(axis=1, keepdims=True)
    nfft = 1 << (2 * n_t - 1).bit_length()
    f = np.fft.rfft(xc, n=nfft, axis=1)
    acf = np.fft.irfft(f * np.conj(f), n=nfft, axis=1)[:, :n_t].mean(axis=0)
    if acf[0] <= 0:
        return 1.0
    rho = acf / acf[0]
    tau = 1.0
    for m in range(1, n_t):
        tau += 2.0 * rho[m]
        if m >= c * tau:
            break
    return max(float(tau), 1.0)


@dataclass(frozen=True)
class FPSample:
    """Metropolis samples of the exact density with diagnostics.

    Attributes:
        z: Samples, shape ``(n_samples, N)``, rows strictly decreasing.
        s: Rescaled time.
        acceptance: Mean acceptance rate per coordinate during production.
        iat: Integrated autocorrelation time (sweeps) per coordinate from the pilot run.
        thin: Sweeps between retained samples.
        n_chains: Number of independent chains.
        scale: Final proposal scale per coordinate.
        warnings: Diagnostic messages; empty when all checks pass.
    """

    z: np.ndarray
    s: float
    acceptance: np.ndarray
    iat: np.ndarray
    thin: int
    n_chains: int
    scale: np.ndarray
    warnings: List[str] = field(default_factory=list)

    @property
    def flagged(self) -> bool:
        return bool(self.warnings)

    def states(self) -> List[ZState]:
        return [ZState(row, self.s) for row in self.z]


def _metropolis_block(z, s, scale, gen, sweeps, record_every):
    c, n = z.shape
    xi = gen.standard_normal((c, sweeps, n))
    log_u = np.log(gen.random((c, sweeps, n)))
    n_out = sweeps // record_every if record_every else 0
    out = np.empty((c, max(n_out, 0), n))
    acc = kernels.metropolis_sweeps(z, float(s), scale, xi, log_u, int(record_every), out)
    return acc, out


def fp_exact_sample(
    N: int,
    s: float,
    n_samples: int,
    rng: RngLike,
    n_chains: Optional[int] = None,
    burn_in: int = 10_000,
    pilot: int = 2_000,
    target_acceptance: float = 0.4,
) -> FPSample:
    """Sample the exact Fokker-Planck density by per-coordinate Metropolis.

    Chains start at ``c_n s`` plus a small jitter (spaced apart when ``s`` is
    small). During burn-in the proposal scale of each coordinate is adapted
    towards ``target_acceptance``. A pilot run measures the integrated
    autocorrelation time ``tau``; production keeps every ``ceil(2 tau)``-th
    sweep, so that retained samples are approximately independent.

    Args:
        N: Number of levels.
        s: Rescaled time.
        n_samples: Number of retained samples.
        rng: Random source.
        n_chains: Independent chains; defaults to ``min(n_samples, 256)``.
        burn_in: Burn-in sweeps per chain.
        pilot: Pilot sweeps per chain used for the autocorrelation estimate.
        target_acceptance: Acceptance rate aimed at during adaptation.
    """
    if not s > 0:
        raise DomainError("s must be positive")
    if N < 1 or n_samples < 1:
        raise DomainError("need N >= 1 and n_samples >= 1")
    gen = as_generator(rng)
    c = int(n_chains or min(n_samples, 256))
    c_n = drift_velocities(N)
    width = math.sqrt(2.0 * s)
    # keep starting points ordered and well inside the sector
    base = c_n * s + np.linspace(1.0, -1.0, N) * width * (N > 1)
    z = np.ascontiguousarray(base[None, :] + 0.01 * width * gen.standard_normal((c, N)))
    z.sort(axis=1)
    z = np.ascontiguousarray(z[:, ::-1])
    scale = np.full(N, 2.4 * width / math.sqrt(max(N, 1)))
    block = 500
    done = 0
    while done < burn_in:
        k = min(block, burn_in - done)
        acc, _ = _metropolis_block(z, s, scale, gen, k, 0)
        rate = acc.mean(axis=0) / k
        scale *= np.exp(np.clip(rate - target_acceptance, -0.5, 0.5) * 2.0)
        done += k
    _, trace = _metropolis_block(z, s, scale, gen, pilot, 1)
    iat = np.array([integrated_autocorr_time(trace[:, :, i]) for i in range(N)])
    thin = int(math.ceil(2.0 * iat.max()))
    per_chain = int(math.ceil(n_samples / c))
    acc_total = np.zeros(N)
    kept = []
    remaining = per_chain * thin
    chunk = max(thin, (20_000 // thin) * thin)
    while remaining > 0:
        k = min(chunk, remaining)
        acc, out = _metropolis_block(z, s, scale, gen, k, thin)
        acc_total += acc.sum(axis=0)
        kept.append(out)
        remaining -= k
    samples = np.concatenate(kept, axis=1)
    # interleave chains so that any prefix mixes all of them
    samples = samples.transpose(1, 0, 2).reshape(-1, N)[:n_samples]
    acceptance = acc_total / (c * per_chain * thin)
    msgs = []
    if np.any(acceptance < 0.15) or np.any(acceptance > 0.7):
        msgs.append(f"acceptance {np.round(acceptance, 3).tolist()} outside [0.15, 0.7]")
    if iat.max() > pilot / 50.0:
        msgs.append(f"autocorrelation time {iat.max():.1f} too long for the pilot of {pilot} sweeps")
    return FPSample(
        z=samples,
        s=float(s),
        acceptance=acceptance,
        iat=iat,
        thin=thin,
        n_chains=c,
        scale=scale.copy(),
        warnings=msgs,
    )


def vst_semicircle_density(N: int, gamma: float, t: float, z):
    """Very-short-time density ``(2/pi)(1/Gamma t) sqrt(N Gamma t - z^2)`` on ``|z| <= sqrt(N Gamma t)``."""
    gt = gamma * t
    if not gt > 0:
        raise DomainError("Gamma t must be positive")
    zz = np.asarray(z, dtype=float)
    r2 = N * gt - zz * zz
    out = np.where(r2 > 0, 2.0 / (math.pi * gt) * np.sqrt(np.where(r2 > 0, r2, 0.0)), 0.0)
    return float(out) if np.ndim(z) == 0 else out


def vst_renyi(N: int, gamma: float, t: float, alpha: float) -> float:
    """Non-fluctuating Renyi entropy implied by the very-short-time semicircle.

    ``S = log[(1/alpha) (N/Gamma t)^((1-alpha)/2) I_1(2 alpha w) / I_1(2 w)^alpha] / (1-alpha)``
    with ``w = sqrt(N Gamma t)``. At ``alpha = 1`` the analytic limit
    ``2 + log(N/Gamma t)/2 + log I_1(2w) - 2w I_0(2w)/I_1(2w)`` is used.
    """
    gt = gamma * t
    if not gt > 0:
        raise DomainError("Gamma t must be positive")
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    w = math.sqrt(N * gt)
    half_log = 0.5 * math.log(N / gt)
    if alpha == 1:
        ratio = math.exp(log_bessel_i0(2.0 * w) - log_bessel_i1(2.0 * w))
        return 2.0 + half_log + log_bessel_i1(2.0 * w) - 2.0 * w * ratio
    val = (
        -math.log(alpha)
        + (1.0 - alpha) * half_log
        + log_bessel_i1(2.0 * alpha * w)
        - alpha * log_bessel_i1(2.0 * w)
    )
    return val / (1.0 - alpha)


@dataclass(frozen=True)
class IEDensity(GridDensity):
    """Solution of the singular integral equation.

    Attributes:
        a: Support half-width.
        s: Rescaled time.
        N: Number of levels.
        cond: 2-norm condition number of the collocation matrix at ``a``.
        clipped_mass: Mass removed by clipping negative values.
        clip_flag: Whether the clipped mass exceeds 0.1% of ``N``.
    """

    a: float = 0.0
    s: float = 0.0
    N: int = 0
    cond: float = 0.0
    clipped_mass: float = 0.0
    clip_flag: bool = False


def _ie_kernel(x: np.ndarray) -> np.ndarray:
    return 1.0 / x + 1.0 / np.tanh(x)


def _ie_system(a: float, s: float, m: int):
    """Symmetric collocation matrix for ``2m`` intervals on ``[-a, a]``.

    Unknowns are the density at nodes ``w_j = j h``, ``j = 0..m-1`` (the value
    at ``|w| = a`` is zero); equations sit at the midpoints ``(i + 1/2) h``.
    """
    h = a / m
    w = h * np.arange(m)
    zc = h * (np.arange(m) + 0.5)
    mat = h * (_ie_kernel(zc[:, None] - w[None, :]) + _ie_kernel(zc[:, None] + w[None, :]))
    mat[:, 0] = h * _ie_kernel(zc)
    return mat, w, zc


def _ie_density(a: float, s: float, m: int):
    mat, w, zc = _ie_system(a, s, m)
    rho = linalg.solve(mat, zc / (2.0 * s))
    h = a / m
    mass = h * (rho[0] + 2.0 * np.sum(rho[1:]))
    return rho, w, mass, mat


def solve_integral_equation(s: float, N: int, grid_size: int = 1000) -> IEDensity:
    """Mean level density solving ``PV int rho(w) [1/(z-w) + coth(z-w)] dw = z / 2s``.

    The density is supported on ``[-a, a]`` and vanishes at the endpoints.
    The principal-value integral is discretized on a uniform grid with the
    density at nodes and the equation imposed at midpoints, using the even
    symmetry of ``rho``. The endpoint ``a`` is fixed by ``int rho = N``.

    Args:
        s: Rescaled time.
        N: Number of levels (total mass).
        grid_size: Number of intervals on ``[-a, a]`` (even, at least 100).

    Raises:
        NumericalError: if the root finding for ``a`` fails or the matrix is
            ill-conditioned.
    """
    if not s > 0:
        raise DomainError("s must be positive")
    if grid_size < 100:
        raise DomainError("grid_size must be at least 100")
    if N < 1:
        raise DomainError("N must be positive")
    m = grid_size // 2

    def excess(a):
        return _ie_density(a, s, m)[2] - N

    guess = max(math.sqrt(8.0 * s * N), min(2.0 * s * N, 1e6))
    lo, hi = 0.25 * min(math.sqrt(8.0 * s * N), 2.0 * s * N + 1.0), 2.0 * guess + 2.0
    for _ in range(60):
        if excess(lo) < 0:
            break
        lo *= 0.5
    for _ in range(60):
        if excess(hi) > 0:
            break
        hi *= 2.0
    try:
        a = optimize.brentq(excess, lo, hi, xtol=1e-13 * hi, rtol=1e-14, maxiter=200)
    except (ValueError, RuntimeError) as exc:
        raise NumericalError(f"root finding for the support edge failed: {exc}") from exc
    rho, w, mass, mat = _ie_density(a, s, m)
    cond = float(np.linalg.cond(mat))
    if not np.isfinite(cond) or cond > 1e12:
        raise NumericalError(f"collocation matrix ill-conditioned (cond = {cond:.3g})")
    h = a / m
    neg = rho < 1e-12
    weights = np.full(m, 2.0 * h)
    weights[0] = h
    clipped = float(np.sum(weights[neg] * np.abs(np.minimum(rho[neg], 0.0))))
    rho = np.where(neg, 0.0, rho)
    grid = np.concatenate([-w[:0:-1], w, [a]])
    grid = np.concatenate([[-a], grid])
    values = np.concatenate([[0.0], rho[:0:-1], rho, [0.0]])
    mass_q = float(integrate.trapezoid(values, grid))
    return IEDensity(
        grid=grid,
        values=values,
        mass=mass_q,
        a=float(a),
        s=float(s),
        N=int(N),
        cond=cond,
        clipped_mass=clipped,
        clip_flag=clipped > 1e-3 * N,
    )


def uniform_profile_distance(dens: GridDensity, a: Optional[float] = None) -> float:
    """L2 distance between the shape of a density and the uniform profile.

    The density is rescaled to ``x = z/a`` on ``[-1, 1]`` with unit mass and
    compared with ``1/2``. ``a`` defaults to the outermost grid point.
    """
    if a is None:
        a = float(np.max(np.abs(dens.grid)))
    x = dens.grid / a
    f = dens.values * a / dens.mass
    return float(math.sqrt(integrate.trapezoid((f - 0.5) ** 2, x)))


def _check_inside(a: float, z) -> np.ndarray:
    zz = np.asarray(z, dtype=float)
    if not a > 0:
        raise DomainError("a must be positive")
    if np.any(np.abs(zz) >= a):
        raise DomainError("need |z| < a")
    return zz


def uniform_ansatz_check(a: float, N: int, z):
    """``(N/2a) log[((a+z) sinh(a+z)) / ((a-z) sinh(a-z))]``, the integral operator on the uniform ansatz."""
    zz = _check_inside(a, z)
    val = 0.5 * N / a * (np.log((a + zz) / (a - zz)) + _log_sinh(a + zz) - _log_sinh(a - zz))
    return float(val) if np.ndim(z) == 0 else val


def ansatz_deviation(a: float, N: int, z):
    """Deviation ``eta(z)`` of the uniform-ansatz left-hand side from linearity, ``lhs - N z / a``."""
    zz = _check_inside(a, z)
    val = np.asarray(uniform_ansatz_check(a, N, zz)) - N * zz / a
    return float(val) if np.ndim(z) == 0 else val


def weak_short_time_renyi(N: int, gamma_t: float, alpha: float) -> float:
    """Uniform-ansatz Renyi entropy for ``1/N << Gamma t << 1``.

    ``S = log[(1/alpha) (2/Gamma t)^(1-alpha) sinh(alpha b) / sinh(b)^alpha] / (1-alpha)``
    with ``b = N Gamma t / 2``; ``alpha = 1`` uses the limit
    ``log(2/Gamma t) + log sinh b + 1 - b coth b``.
    """
    if not gamma_t > 0:
        raise DomainError("Gamma t must be positive")
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    b = 0.5 * N * gamma_t
    lsh = float(_log_sinh(np.array(b)))
    if alpha == 1:
        return math.log(2.0 / gamma_t) + lsh + 1.0 - b / math.tanh(b)
    lsh_a = float(_log_sinh(np.array(alpha * b)))
    val = -math.log(alpha) + (1.0 - alpha) * math.log(2.0 / gamma_t) + lsh_a - alpha * lsh
    return val / (1.0 - alpha)


def renyi_covariance_prediction(gamma_t: float, alpha: float, beta: float) -> float:
    """Short-time covariance of Renyi-entropy fluctuations.

    ``alpha beta (Gamma t)^2 / (4 (alpha-1)(beta-1)) [(beta-1)^2/(beta+1)
    + (alpha-1)^2/(alpha+1) - (alpha-beta)^2/(alpha+beta)]``, with the finite
    limits taken when ``alpha`` or ``beta`` equals one.
    """
    if not (alpha > 0 and beta > 0):
        raise DomainError("alpha and beta must be positive")
    g2 = gamma_t**2
    if alpha == 1 and beta == 1:
        return 0.25 * g2
    if alpha == 1 or beta == 1:
        b = beta if alpha == 1 else alpha
        return 0.25 * b * g2 * (1.0 + 3.0 * b) / (1.0 + b) ** 2
    bracket = (
        (beta - 1.0) ** 2 / (beta + 1.0)
        + (alpha - 1.0) ** 2 / (alpha + 1.0)
        - (alpha - beta) ** 2 / (alpha + beta)
    )
    return alpha * beta * g2 / (4.0 * (alpha - 1.0) * (beta - 1.0)) * bracket


def lyapunov_exact_weak(params: WeakParams) -> np.ndarray:
    """Lyapunov exponents ``lambda_n = -pL log 2 + (Gamma/8)(N + 2 - 4n)``."""
    n = np.arange(1, params.N + 1)
    return -params.n_measured * math.log(2.0) + params.gamma / 8.0 * (params.N + 2 - 4 * n)


@dataclass(frozen=True)
class TwoLevelLaw:
    """Long-time law of the two largest levels with exact mutual repulsion.

    In ``zbar = (z_1 + z_2)/2`` and ``zeta = z_1 - z_2`` the density factorizes
    into a Gaussian ``A(zbar)`` of mean ``(c1 + c2) s / 2`` and variance ``s``,
    and ``B(zeta) = (zeta / (dc s)) [g(zeta - dc s) - g(zeta + dc s)]`` with
    ``g`` the centred Gaussian density of variance ``4s`` and ``dc = c1 - c2``.
    """

    s: float
    c1: float
    c2: float

    def __post_init__(self):
        if not self.s > 0:
            raise DomainError("s must be positive")
        if not self.c1 > self.c2:
            raise DomainError("need c1 > c2")

    @classmethod
    def for_levels(cls, s: float, N: int) -> "TwoLevelLaw":
        if N < 2:
            raise DomainError("need N >= 2")
        c = drift_velocities(N)
        return cls(s=s, c1=float(c[0]), c2=float(c[1]))

    @property
    def shift(self) -> float:
        return (self.c1 - self.c2) * self.s

    def pdf_zeta(self, zeta):
        """``B(zeta)`` for ``zeta >= 0`` (zero for negative arguments)."""
        x = np.asarray(zeta, dtype=float)
        s, m = self.s, self.shift
        pos = np.where(x > 0, x, 0.0)
        lead = -((pos - m) ** 2) / (8.0 * s)
        # e^{-(x+m)^2/8s} = e^{-(x-m)^2/8s} e^{-x m / 2s}
        val = pos / m / math.sqrt(8.0 * math.pi * s) * np.exp(lead) * (-np.expm1(-pos * m / (2.0 * s)))
        out = np.where(x > 0, val, 0.0)
        return float(out) if np.ndim(zeta) == 0 else out

    def pdf_zbar(self, zbar):
        """``A(zbar)``, Gaussian with mean ``(c1 + c2) s / 2`` and variance ``s``."""
        x = np.asarray(zbar, dtype=float)
        mu = 0.5 * (self.c1 + self.c2) * self.s
        out = np.exp(-((x - mu) ** 2) / (2.0 * self.s)) / math.sqrt(2.0 * math.pi * self.s)
        return float(out) if np.ndim(zbar) == 0 else out

    def upper_limit(self) -> float:
        return self.shift + 40.0 * math.sqrt(self.s) + 40.0


def _quad(f, lo, hi, points=None, tol=1e-10):
    val, err, *rest = integrate.quad(f, lo, hi, points=points, epsabs=0.0, epsrel=tol, limit=500, full_output=1)
    if len(rest) > 1 and rest[0] != 0 and err > 1e-8 * max(abs(val), 1e-300):
        raise NumericalError(f"quadrature did not converge: {rest[1]}")
    return val, err


@dataclass(frozen=True)
class TwoLevelStats:
    """Quadrature results over ``B(zeta)``; ``nu = exp(-2 zeta)``."""

    mass: float
    mean_zeta: float
    E_log_nu: float
    E_nu: float
    log_E_nu: float
    pdf_zeta: Callable


def two_level_stats(s: float, N: int = 2, c1: Optional[float] = None, c2: Optional[float] = None) -> TwoLevelStats:
    """Moments of ``nu = sigma_2^2 / sigma_1^2`` under the long-time two-level law.

    ``E[log nu] = -2 E[zeta]`` and ``E[nu] = int B(zeta) exp(-2 zeta)``. The
    latter is evaluated with its exponentially small constant factored out,
    so ``log_E_nu`` stays accurate when ``E[nu]`` underflows.

    Raises:
        NumericalError: if a quadrature does not converge.
    """
    law = TwoLevelLaw.for_levels(s, N) if c1 is None else TwoLevelLaw(s, c1, c2)
    m = law.shift
    hi = law.upper_limit()
    pts = [max(m - 4.0 * math.sqrt(s), 1e-6), m, m + 4.0 * math.sqrt(s)]
    pts = [p for p in pts if 0 < p < hi]
    mass, _ = _quad(law.pdf_zeta, 0.0, hi, points=pts)
    mean, _ = _quad(lambda x: x * law.pdf_zeta(x), 0.0, hi, points=pts)

    # the leading branch of B(x) e^{-2x} has exponent -(x - c)^2/8s + (c^2 - m^2)/8s with
    # c = m - 8s; for c <= 0 its peak sits at x = 0 and the constant is -m^2/8s
    c = m - 8.0 * s
    pref = 1.0 / (m * math.sqrt(8.0 * math.pi * s))
    if c > 0:
        d = (c * c - m * m) / (8.0 * s)

        def g(x):
            return pref * x * math.exp(-((x - c) ** 2) / (8.0 * s)) * (-math.expm1(-x * m / (2.0 * s)))

    else:
        d = -m * m / (8.0 * s)

        def g(x):
            return pref * x * math.exp(-x * x / (8.0 * s) + x * c / (4.0 * s)) * (-math.expm1(-x * m / (2.0 * s)))

    lo_pts = [p for p in (max(c, 0.0) + 1.0, max(c, 0.0) + 4.0 * math.sqrt(s)) if 0 < p < hi]
    scaled, _ = _quad(g, 0.0, hi, points=sorted(set(lo_pts)))
    log_e_nu = d + math.log(scaled)
    if abs(mass - 1.0) > 1e-6:
        raise NumericalError(f"B(zeta) normalization {mass} differs from one")
    return TwoLevelStats(
        mass=mass,
        mean_zeta=mean,
        E_log_nu=-2.0 * mean,
        E_nu=math.exp(log_e_nu),
        log_E_nu=log_e_nu,
        pdf_zeta=law.pdf_zeta,
    )
