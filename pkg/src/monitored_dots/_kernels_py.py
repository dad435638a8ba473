"""Pure numpy implementations of the hot kernels.

These define the reference semantics of the compiled kernels in
``_kernels.pyx``: given the same pre-drawn random arrays, both produce the
same trajectories up to floating-point summation order. Every kernel works
on a batch of independent walkers/chains and is vectorized across the batch.
"""

from __future__ import annotations

import math

import numpy as np

STATUS_OK = 0
STATUS_POOL_EXHAUSTED = 1
STATUS_COLLISION = 2


def _log_sinh(d: np.ndarray) -> np.ndarray:
    # d > 0; log(sinh d) = d + log(1 - exp(-2d)) - log 2
    return d + np.log(-np.expm1(-2.0 * d)) - math.log(2.0)


def pair_potential(d: np.ndarray) -> np.ndarray:
    """``log(d) + log(sinh d)`` for positive separations ``d``."""
    return np.log(d) + _log_sinh(d)


def coth_drift(z: np.ndarray) -> np.ndarray:
    """Drift ``D_n = 2 sum_{m != n} coth(z_n - z_m)`` for a batch ``z`` of shape ``(W, N)``."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    w, n = z.shape
    out = np.zeros((w, n))
    for m in range(n):
        diff = z - z[:, m : m + 1]
        diff[:, m] = 1.0
        c = 1.0 / np.tanh(diff)
        c[:, m] = 0.0
        out += c
    return 2.0 * out


def _min_gap(z: np.ndarray) -> np.ndarray:
    if z.shape[1] < 2:
        return np.full(z.shape[0], np.inf)
    return np.min(z[:, :-1] - z[:, 1:], axis=1)


def _ordered(z: np.ndarray) -> np.ndarray:
    if z.shape[1] < 2:
        return np.ones(z.shape[0], dtype=bool)
    return np.all(z[:, :-1] > z[:, 1:], axis=1)


def langevin_run(
    z: np.ndarray,
    s_rem: np.ndarray,
    normals: np.ndarray,
    pos: np.ndarray,
    dt_max: float,
    dt_min: float,
) -> np.ndarray:
    """Advance walkers by Euler-Maruyama steps of ``dz = D(z) ds + sqrt(2) dW``.

    Each walker integrates until its remaining time ``s_rem`` is used up. The
    step is ``dt = min(dt_max, 0.1 * min_gap**2, s_rem)``; a step that breaks
    the ordering ``z_1 > ... > z_N`` is discarded, ``dt`` is halved and a new
    normal vector is drawn.

    Args:
        z: Walker positions, shape ``(W, N)``, updated in place.
        s_rem: Remaining rescaled time per walker, updated in place.
        normals: Pool of standard normals, shape ``(W, P, N)``.
        pos: Next unused pool row per walker, updated in place.
        dt_max: Largest step.
        dt_min: Smallest step before a collision is reported.

    Returns:
        Status per walker: 0 done, 1 pool exhausted (resumable after a
        refill), 2 collision.
    """
    n_w, n = z.shape
    pool = normals.shape[1]
    status = np.zeros(n_w, dtype=np.int64)
    dt = np.zeros(n_w)
    drift = np.zeros((n_w, n))
    fresh = np.ones(n_w, dtype=bool)
    rows = np.arange(n_w)
    while True:
        act = (s_rem > 0) & (status == STATUS_OK)
        if not act.any():
            break
        new = act & fresh
        if new.any():
            zi = z[new]
            drift[new] = coth_drift(zi)
            g = _min_gap(zi)
            dt[new] = np.minimum(np.minimum(dt_max, 0.1 * g * g), s_rem[new])
            fresh[new] = False
        dry = act & (pos >= pool)
        status[dry] = STATUS_POOL_EXHAUSTED
        fresh[dry] = True
        act &= ~dry
        idx = rows[act]
        if idx.size == 0:
            continue
        xi = normals[idx, pos[idx]]
        pos[idx] += 1
        h = dt[idx]
        zp = z[idx] + drift[idx] * h[:, None] + np.sqrt(2.0 * h)[:, None] * xi
        ok = _ordered(zp)
        good = idx[ok]
        z[good] = zp[ok]
        s_rem[good] -= dt[good]
        s_rem[good] = np.where(s_rem[good] > 0, s_rem[good], 0.0)
        fresh[good] = True
        bad = idx[~ok]
        dt[bad] *= 0.5
        stuck = bad[dt[bad] < dt_min]
        status[stuck] = STATUS_COLLISION
    return status


def metropolis_sweeps(
    z: np.ndarray,
    s: float,
    scale: np.ndarray,
    xi: np.ndarray,
    log_u: np.ndarray,
    record_every: int,
    out: np.ndarray,
) -> np.ndarray:
    """Per-coordinate random-walk Metropolis sweeps targeting the exact density.

    The target is ``sum_{j<k} [log(z_j - z_k) + log sinh(z_j - z_k)] - |z|^2 / 4s``
    on the ordered sector; proposals leaving the sector are rejected.

    Args:
        z: Chain states, shape ``(C, N)``, updated in place.
        s: Rescaled time.
        scale: Proposal scale per coordinate, shape ``(N,)``.
        xi: Standard normals, shape ``(C, S, N)`` for ``S`` sweeps.
        log_u: Logs of uniforms, same shape as ``xi``.
        record_every: Store the state after every ``record_every``-th sweep.
        out: Output array of shape ``(C, S // record_every, N)``.

    Returns:
        Accepted-move counts, shape ``(C, N)``.
    """
    n_c, n = z.shape
    sweeps = xi.shape[1]
    acc = np.zeros((n_c, n), dtype=np.int64)
    inv4s = 1.0 / (4.0 * s)
    for k in range(sweeps):
        for i in range(n):
            old = z[:, i]
            new = old + scale[i] * xi[:, k, i]
            ok = np.ones(n_c, dtype=bool)
            if i > 0:
                ok &= new < z[:, i - 1]
            if i < n - 1:
                ok &= new > z[:, i + 1]
            delta = -(new * new - old * old) * inv4s
            for m in range(n):
                if m == i:
                    continue
                d_new = np.abs(np.where(ok, new, old) - z[:, m])
                d_old = np.abs(old - z[:, m])
                delta = delta + pair_potential(d_new) - pair_potential(d_old)
            take = ok & (log_u[:, k, i] < delta)
            z[:, i] = np.where(take, new, old)
            acc[:, i] += take
        if record_every and (k + 1) % record_every == 0:
            out[:, (k + 1) // record_every - 1] = z
    return acc
