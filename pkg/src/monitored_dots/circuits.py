"""Kraus-operator products for Haar-random monitored quantum dots.

A trajectory alternates Haar-random unitary layers ``U_j`` on ``N = 2**L``
states with measurement layers ``P_j``, giving the Kraus operator

    K(t) = P_t U_t ... P_1 U_1.

Model I measures every qubit independently with probability ``p``; Model II
measures a fixed set of ``pL`` qubits, pinning the rank at ``M = 2**((1-p)L)``.
The weak model replaces projectors by ``diag(1 + eps, 1 - eps) / 2`` on each of
the ``pL`` monitored qubits.

Products are kept in the graded form ``K = Q diag(exp(g)) T W`` with ``Q`` an
isometry, ``T`` unit upper triangular and ``W`` an implicit right isometry that
never affects singular values. Exponentially separated scales live in ``g``,
so trajectories of thousands of layers stay well inside double precision.

Basis index ``b`` carries qubit ``q`` in bit ``(b >> (L - 1 - q)) & 1``; the
outcome ``+1`` corresponds to bit 0.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .numerics import (
    DomainError,
    NumericalError,
    RngLike,
    RngStream,
    as_generator,
    sample_ginibre,
    sample_haar_isometry,
    sample_haar_unitary,
)

__all__ = [
    "Model",
    "CircuitConfig",
    "StabilizedProduct",
    "SingularSpectrum",
    "LayerMeta",
    "TrajectoryRecord",
    "RankCollapseError",
    "graded_log_singular_values",
    "weak_layer_diagonal",
    "step_projective",
    "step_weak",
    "run_trajectory",
    "rank_collapse_time_mc",
    "ginibre_product_log_spectrum",
]

OUTCOME_MODES = ("fixed", "uniform", "born")
_EXP_CLIP = 700.0


class RankCollapseError(NumericalError):
    """The Kraus product lost all of its rank."""


class Model(str, enum.Enum):
    """Measurement protocol of a circuit."""

    MODEL_I = "I"
    MODEL_II = "II"
    WEAK = "weak"

    @classmethod
    def parse(cls, value) -> "Model":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "").replace("-", "")
        aliases = {
            "i": cls.MODEL_I,
            "modeli": cls.MODEL_I,
            "1": cls.MODEL_I,
            "ii": cls.MODEL_II,
            "modelii": cls.MODEL_II,
            "2": cls.MODEL_II,
            "weak": cls.WEAK,
        }
        if key not in aliases:
            raise DomainError(f"unknown model {value!r}")
        return aliases[key]


@dataclass(frozen=True)
class CircuitConfig:
    """Full specification of a circuit experiment.

    Attributes:
        L: Number of qubits; the Hilbert space dimension is ``N = 2**L``.
        p: Measurement density in [0, 1].
        model: Measurement protocol.
        epsilon: Weak-measurement strength (weak model only).
        t_max: Number of layers per trajectory.
        n_traj: Number of trajectories in the experiment.
        seed: 64-bit experiment seed; trajectory ``i`` uses stream ``i``.
        outcomes: ``"fixed"`` (all +1), ``"uniform"`` (independent fair bits)
            or ``"born"`` (drawn from the conditional Born probabilities).
        record_every: Stride of recorded spectra; 0 selects the geometric grid
            of powers of two plus the endpoints.
        track_born: Evolve a pure state alongside the product to accumulate
            per-layer Born factors (projective models only).
        rank_floor: Modes with ``log(sigma_n / sigma_1) < -rank_floor`` do not
            count towards the reported rank.
        record_at: Extra steps at which spectra are recorded.
    """

    L: int
    p: float
    model: Model = Model.MODEL_II
    epsilon: float = 0.0
    t_max: int = 1
    n_traj: int = 1
    seed: int = 0
    outcomes: str = "fixed"
    record_every: int = 0
    track_born: bool = True
    rank_floor: float = 200.0
    record_at: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "model", Model.parse(self.model))
        if int(self.L) != self.L or self.L < 1:
            raise DomainError("L must be a positive integer")
        if self.L > 14:
            raise DomainError("L > 14 exceeds dense-matrix feasibility")
        if not 0.0 <= self.p <= 1.0:
            raise DomainError("p must lie in [0, 1]")
        if not 0.0 <= self.epsilon <= 1.0:
            raise DomainError("epsilon must lie in [0, 1]")
        if self.t_max < 1 or self.n_traj < 1:
            raise DomainError("t_max and n_traj must be positive")
        if self.seed < 0:
            raise DomainError("seed must be non-negative")
        if self.outcomes not in OUTCOME_MODES:
            raise DomainError(f"outcomes must be one of {OUTCOME_MODES}")
        if self.record_every < 0:
            raise DomainError("record_every must be non-negative")
        if self.model in (Model.MODEL_II, Model.WEAK):
            pl = self.p * self.L
            if abs(pl - round(pl)) > 1e-9:
                raise DomainError("Model II and the weak model need pL to be an integer")
        if self.model is Model.WEAK and self.outcomes == "born":
            raise NotImplementedError(
                "Born-weighted outcome sampling has no fixed convention for weak measurements"
            )

    @property
    def N(self) -> int:
        return 2**self.L

    @property
    def n_measured(self) -> int:
        """Qubits measured per layer (Model II and weak model)."""
        if self.model is Model.MODEL_I:
            raise DomainError("Model I has a random number of measurements per layer")
        return int(round(self.p * self.L))

    @property
    def M(self) -> int:
        """Rank ``2**((1-p)L)`` of Model II Kraus operators."""
        if self.model is not Model.MODEL_II:
            raise DomainError("M is defined for Model II only")
        return 2 ** (self.L - self.n_measured)

    def record_times(self) -> np.ndarray:
        """Sorted steps at which spectra are recorded."""
        if self.record_every:
            ts = set(range(self.record_every, self.t_max + 1, self.record_every))
        else:
            ts = {2**k for k in range(int(math.log2(self.t_max)) + 1)}
        ts |= {1, self.t_max}
        ts |= {int(t) for t in self.record_at}
        return np.array(sorted(t for t in ts if 1 <= t <= self.t_max), dtype=int)


@functools.lru_cache(maxsize=16)
def _bit_table(L: int) -> np.ndarray:
    b = np.arange(2**L)[:, None]
    q = np.arange(L)[None, :]
    return ((b >> (L - 1 - q)) & 1).astype(np.int8)


def _range_rows(L: int, measured: np.ndarray, outcomes: np.ndarray) -> np.ndarray:
    """Basis states compatible with the given outcomes on the measured qubits."""
    bits = _bit_table(L)
    if len(measured) == 0:
        return np.arange(2**L)
    ok = np.all(bits[:, measured] == outcomes[None, :], axis=1)
    return np.flatnonzero(ok)


def weak_layer_diagonal(L: int, measured, outcomes, epsilon: float) -> np.ndarray:
    """Diagonal of the weak measurement layer in the computational basis.

    Each monitored qubit contributes ``(1 + eps) / 2`` when its bit agrees with
    the outcome bit and ``(1 - eps) / 2`` otherwise.
    """
    measured = np.asarray(measured, dtype=int)
    outcomes = np.asarray(outcomes, dtype=np.int8)
    bits = _bit_table(L)
    diag = np.ones(2**L)
    for q, o in zip(measured, outcomes):
        agree = bits[:, q] == o
        diag *= np.where(agree, 0.5 * (1.0 + epsilon), 0.5 * (1.0 - epsilon))
    return diag


def _coupling_splits(t: np.ndarray, tol: float) -> list:
    """Contiguous diagonal blocks of an upper-triangular ``t`` decoupled below ``tol``."""
    r = t.shape[0]
    a = np.abs(np.triu(t, 1))
    c = np.maximum.accumulate(a, axis=0)
    c = np.maximum.accumulate(c[:, ::-1], axis=1)[:, ::-1]
    starts = [0]
    for k in range(1, r):
        if c[k - 1, k] < tol:
            starts.append(k)
    starts.append(r)
    return [np.arange(starts[i], starts[i + 1]) for i in range(len(starts) - 1)]


def graded_log_singular_values(
    log_r: np.ndarray,
    tri: np.ndarray,
    tol: float = 1e-13,
    max_spread: float = 10.0,
    max_iter: int = 500,
) -> np.ndarray:
    """Log singular values of ``diag(exp(log_r)) @ tri`` without forming it.

    Repeated QR of the conjugate transpose is run entirely on the log scales
    and a unit upper-triangular factor, which drives the factor towards the
    identity while keeping every scale representable. Once the factor splits
    into blocks whose scales span at most ``max_spread`` nats, each block is
    handed to a dense SVD after local rescaling.

    Returns:
        Log singular values in non-increasing order.
    """
    g = np.array(log_r, dtype=float, copy=True)
    t = np.array(tri, dtype=complex, copy=True)
    r = g.size
    if r == 0:
        return g
    if r == 1:
        return g
    for _ in range(max_iter):
        blocks = _coupling_splits(t, tol)
        if all(np.ptp(g[b]) <= max_spread for b in blocks):
            break
        _, s = np.linalg.qr(t.conj().T)
        d = np.diagonal(s).copy()
        ad = np.abs(d)
        if np.any(ad == 0):
            raise NumericalError("singular triangular factor in graded SVD")
        expo = np.clip(g[None, :] - g[:, None], -_EXP_CLIP, _EXP_CLIP)
        t = np.triu(s / d[:, None] * np.exp(expo))
        g = g + np.log(ad)
    else:
        blocks = _coupling_splits(t, tol)
    out = []
    for b in blocks:
        gb = g[b]
        gm = gb.max()
        sub = np.exp(gb - gm)[:, None] * t[np.ix_(b, b)]
        with np.errstate(divide="ignore"):
            out.append(np.log(np.linalg.svd(sub, compute_uv=False)) + gm)
    return np.sort(np.concatenate(out))[::-1]


@dataclass
class StabilizedProduct:
    """Running Kraus product ``K = q diag(exp(log_r)) tri W`` with implicit isometry ``W``.

    Attributes:
        q: ``N x r`` matrix with orthonormal columns.
        log_r: Accumulated log scale of each direction.
        tri: ``r x r`` unit upper-triangular coupling between directions.
        t: Number of layers applied.
        support: Basis rows on which ``q`` (and ``psi``) can be non-zero, or
            None for all rows.
        psi: Optional normalized pure state evolved by the same layers.
        fresh: True while ``K`` is a pure isometry (no measurement yet), in
            which case the unitary layers can be absorbed into ``W``.
    """

    q: np.ndarray
    log_r: np.ndarray
    tri: np.ndarray
    t: int = 0
    support: Optional[np.ndarray] = None
    psi: Optional[np.ndarray] = None
    fresh: bool = True

    @classmethod
    def identity(cls, n: int, track_state: bool = False) -> "StabilizedProduct":
        psi = None
        if track_state:
            psi = np.zeros(n, dtype=complex)
            psi[0] = 1.0
        return cls(
            q=np.eye(n, dtype=complex),
            log_r=np.zeros(n),
            tri=np.eye(n, dtype=complex),
            psi=psi,
        )

    @property
    def N(self) -> int:
        return self.q.shape[0]

    @property
    def rank(self) -> int:
        return self.q.shape[1]

    def support_rows(self) -> np.ndarray:
        return np.arange(self.N) if self.support is None else self.support

    def dense(self) -> np.ndarray:
        """Dense ``N x r`` matrix with the singular values of ``K`` (tests only)."""
        return self.q @ (np.exp(self.log_r)[:, None] * self.tri)

    def log_singular_values(self) -> np.ndarray:
        """Non-zero log singular values of ``K`` in non-increasing order."""
        return graded_log_singular_values(self.log_r, self.tri)

    def apply(self, x: np.ndarray, rows: Optional[np.ndarray] = None) -> "StabilizedProduct":
        """Return the product after left multiplication.

        Args:
            x: ``k x r`` matrix equal to ``A @ q`` for the new layer ``A``,
                restricted to the output rows.
            rows: Output rows of ``x`` in the ``N``-dimensional space, or None
                for all ``N`` rows.
        """
        k, r = x.shape
        g, tri = self.log_r, self.tri
        if k >= r:
            qx, rx = np.linalg.qr(x)
            d = np.diagonal(rx).copy()
            ad = np.abs(d)
            if np.any(ad == 0) or not np.all(np.isfinite(ad)):
                raise NumericalError("layer annihilated a direction of the product")
            qx = qx * (d / ad)[None, :]
            expo = np.clip(g[None, :] - g[:, None], -_EXP_CLIP, _EXP_CLIP)
            y = np.triu(rx / d[:, None] * np.exp(expo))
            new_g = g + np.log(ad)
            new_tri = y @ tri
        else:
            gmax = g.max()
            h = (x * np.exp(g - gmax)[None, :]) @ tri
            _, s = np.linalg.qr(h.conj().T)
            qx, r2 = np.linalg.qr(s.conj().T)
            d = np.diagonal(r2).copy()
            ad = np.abs(d)
            if not np.any(ad > 0):
                raise RankCollapseError("Kraus product has rank zero")
            if np.any(ad == 0):
                raise NumericalError("rank dropped below the structural rank")
            qx = qx * (d / ad)[None, :]
            new_g = gmax + np.log(ad)
            new_tri = np.triu(r2 / d[:, None])
        if rows is None:
            q_new = qx
        else:
            q_new = np.zeros((self.N, qx.shape[1]), dtype=complex)
            q_new[rows] = qx
        return StabilizedProduct(
            q=q_new,
            log_r=new_g,
            tri=new_tri,
            t=self.t + 1,
            support=rows,
            psi=self.psi,
            fresh=False,
        )


@dataclass(frozen=True)
class SingularSpectrum:
    """Singular values of a Kraus product at one recorded step.

    Attributes:
        t: Step.
        log_sigma: Non-zero log singular values, non-increasing.
        rank: Number of modes within ``rank_floor`` nats of the largest.
    """

    t: int
    log_sigma: np.ndarray
    rank: int

    @classmethod
    def from_log_sigma(cls, t: int, log_sigma, floor: float = 200.0) -> "SingularSpectrum":
        ls = np.sort(np.asarray(log_sigma, dtype=float))[::-1]
        rank = int(np.count_nonzero(ls >= ls[0] - floor)) if ls.size else 0
        return cls(t=int(t), log_sigma=ls, rank=rank)


@dataclass(frozen=True)
class LayerMeta:
    """Bookkeeping for one measurement layer."""

    t: int
    measured: tuple
    outcomes: tuple
    rank: int
    born_log_factor: Optional[float] = None

    @property
    def n_measured(self) -> int:
        return len(self.measured)


@dataclass
class TrajectoryRecord:
    """Output of one trajectory.

    Attributes:
        config: Circuit configuration.
        stream_id: Random substream (trajectory id).
        spectra: Recorded spectra on the configured time grid.
        born_log_prob: Running ``log p(m)``; None when not tracked.
        born_log_factors: Per-layer ``log p(m_j | m_<j)``.
        outcome_counts: Number of measured qubits in each layer.
        stopping_time: Model I rank-collapse step, if reached.
    """

    config: CircuitConfig
    stream_id: int
    spectra: list = field(default_factory=list)
    born_log_prob: Optional[float] = None
    born_log_factors: Optional[np.ndarray] = None
    outcome_counts: Optional[np.ndarray] = None
    stopping_time: Optional[int] = None

    def spectrum_at(self, t: int) -> SingularSpectrum:
        for sp in self.spectra:
            if sp.t == t:
                return sp
        raise KeyError(f"step {t} was not recorded")

    @property
    def times(self) -> np.ndarray:
        return np.array([sp.t for sp in self.spectra], dtype=int)


def _draw_measured(cfg: CircuitConfig, gen: np.random.Generator) -> np.ndarray:
    if cfg.model is Model.MODEL_I:
        mask = gen.random(cfg.L) < cfg.p
        return np.flatnonzero(mask)
    return np.arange(cfg.n_measured)


def _draw_outcomes(
    cfg: CircuitConfig,
    measured: np.ndarray,
    gen: np.random.Generator,
    amplitudes: Optional[np.ndarray],
) -> np.ndarray:
    k = len(measured)
    if cfg.outcomes == "fixed" or k == 0:
        return np.zeros(k, dtype=np.int8)
    if cfg.outcomes == "uniform":
        return gen.integers(0, 2, size=k).astype(np.int8)
    # Born rule: marginal probabilities of the measured bits
    bits = _bit_table(cfg.L)[:, measured]
    codes = bits @ (1 << np.arange(k - 1, -1, -1))
    probs = np.bincount(codes, weights=np.abs(amplitudes) ** 2, minlength=2**k)
    probs = probs / probs.sum()
    code = gen.choice(2**k, p=probs)
    return ((code >> np.arange(k - 1, -1, -1)) & 1).astype(np.int8)


def _advance(
    state: StabilizedProduct,
    cfg: CircuitConfig,
    gen: np.random.Generator,
    diag_fn,
) -> tuple:
    """Apply one unitary layer followed by one measurement layer.

    ``diag_fn(measured, outcomes)`` returns None for a projector or the
    diagonal of a weak layer. Only the columns of the Haar unitary that act on
    the current support are drawn; their joint law is that of a Haar isometry.
    """
    n = state.N
    track = state.psi is not None
    if cfg.outcomes == "born" and not track:
        raise DomainError("Born-rule outcomes need track_born=True")
    support = state.support_rows()
    weak = diag_fn is not None and cfg.model is Model.WEAK

    if state.fresh and not weak:
        # K = W is an isometry: the unitary joins W and only psi needs it
        amp = sample_haar_isometry(n, 1, gen)[:, 0] if track else None
        measured = _draw_measured(cfg, gen)
        outcomes = _draw_outcomes(cfg, measured, gen, amp)
        rows = _range_rows(cfg.L, measured, outcomes)
        k = rows.size
        new = StabilizedProduct(
            q=np.eye(n, dtype=complex)[:, rows],
            log_r=np.zeros(k),
            tri=np.eye(k, dtype=complex),
            t=state.t + 1,
            support=None if k == n else rows,
            psi=None,
            fresh=(k == n),
        )
        log_factor = None
        if track:
            phi = amp[rows]
            prob = float(np.vdot(phi, phi).real)
            psi = np.zeros(n, dtype=complex)
            psi[rows] = phi / math.sqrt(prob)
            new.psi = psi
            log_factor = math.log(prob)
        return new, measured, outcomes, log_factor

    v = sample_haar_isometry(n, support.size, gen)
    amp = v @ state.psi[support] if track else None
    measured = _draw_measured(cfg, gen)
    outcomes = _draw_outcomes(cfg, measured, gen, amp)
    diag = None if diag_fn is None else diag_fn(measured, outcomes)
    if diag is None:
        rows = _range_rows(cfg.L, measured, outcomes)
        scale = None
    else:
        rows = np.flatnonzero(diag > 0)
        scale = diag[rows]
    x = v[rows] @ state.q[support]
    if scale is not None:
        x = scale[:, None] * x
    new = state.apply(x, rows=None if rows.size == n else rows)
    log_factor = None
    if track:
        phi = amp[rows] if scale is None else scale * amp[rows]
        prob = float(np.vdot(phi, phi).real)
        if prob <= 0:
            raise RankCollapseError("measurement outcome has zero probability")
        psi = np.zeros(n, dtype=complex)
        psi[rows] = phi / math.sqrt(prob)
        new.psi = psi
        log_factor = math.log(prob)
    return new, measured, outcomes, log_factor


def step_projective(
    state: StabilizedProduct, cfg: CircuitConfig, rng: RngLike
) -> tuple:
    """Apply one Haar layer and one projective measurement layer.

    Returns:
        The updated product and a :class:`LayerMeta`. When the state carries a
        pure state ``psi`` the meta holds the log conditional Born probability
        of the drawn outcomes.
    """
    if cfg.model is Model.WEAK:
        raise DomainError("step_projective needs Model I or Model II")
    gen = as_generator(rng)
    new, measured, outcomes, log_factor = _advance(state, cfg, gen, None)
    meta = LayerMeta(
        t=new.t,
        measured=tuple(int(m) for m in measured),
        outcomes=tuple(int(o) for o in outcomes),
        rank=new.rank,
        born_log_factor=log_factor,
    )
    return new, meta


def step_weak(state: StabilizedProduct, cfg: CircuitConfig, rng: RngLike) -> StabilizedProduct:
    """Apply one Haar layer and one weak measurement layer on ``pL`` qubits."""
    if cfg.model is not Model.WEAK:
        raise DomainError("step_weak needs the weak model")
    gen = as_generator(rng)
    eps = cfg.epsilon

    def diag_fn(measured, outcomes):
        return weak_layer_diagonal(cfg.L, measured, outcomes, eps)

    new, _, _, _ = _advance(state, cfg, gen, diag_fn)
    return new


def run_trajectory(cfg: CircuitConfig, stream_id: int = 0) -> TrajectoryRecord:
    """Evolve one trajectory and record spectra on the configured grid.

    Model I trajectories stop at the first step where the rank reaches one;
    the spectrum at that step is always recorded.
    """
    rng = RngStream(cfg.seed, stream_id)
    gen = rng.gen
    weak = cfg.model is Model.WEAK
    track = cfg.track_born and not weak
    state = StabilizedProduct.identity(cfg.N, track_state=track)
    record_at = set(int(t) for t in cfg.record_times())
    spectra = []
    factors = []
    counts = []
    stopping = None
    for t in range(1, cfg.t_max + 1):
        if weak:
            state = step_weak(state, cfg, gen)
            counts.append(cfg.n_measured)
        else:
            state, meta = step_projective(state, cfg, gen)
            counts.append(meta.n_measured)
            if track:
                factors.append(meta.born_log_factor)
        collapsed = cfg.model is Model.MODEL_I and state.rank == 1 and stopping is None
        if t in record_at or collapsed:
            spectra.append(
                SingularSpectrum.from_log_sigma(t, state.log_singular_values(), cfg.rank_floor)
            )
        if collapsed:
            stopping = t
            break
    factors_arr = np.array(factors, dtype=float) if track else None
    return TrajectoryRecord(
        config=cfg,
        stream_id=int(stream_id),
        spectra=spectra,
        born_log_prob=float(factors_arr.sum()) if track else None,
        born_log_factors=factors_arr,
        outcome_counts=np.array(counts, dtype=int),
        stopping_time=stopping,
    )


def rank_collapse_time_mc(cfg: CircuitConfig) -> tuple:
    """Monte-Carlo mean rank-collapse time of Model I.

    A layer collapses the rank to one exactly when all ``L`` qubits are
    measured, an event of probability ``p**L`` that is independent across
    layers, so each trajectory's stopping time is geometric. Trajectory ``i``
    draws from stream ``i``.

    Returns:
        ``(mean, stderr)`` over ``cfg.n_traj`` trajectories.
    """
    if cfg.model is not Model.MODEL_I:
        raise DomainError("rank collapse is defined for Model I")
    if cfg.p == 0:
        raise DomainError("p = 0: the rank never collapses (infinite stopping time)")
    q = cfg.p**cfg.L
    times = np.empty(cfg.n_traj)
    for i in range(cfg.n_traj):
        times[i] = RngStream(cfg.seed, i).gen.geometric(q)
    mean = float(times.mean())
    stderr = float(times.std(ddof=1) / math.sqrt(cfg.n_traj)) if cfg.n_traj > 1 else math.nan
    return mean, stderr


def ginibre_product_log_spectrum(m: int, n: int, t: int, rng: RngLike) -> np.ndarray:
    """Log singular values of ``G(t) = B_{t-1} ... B_1`` with ``B_j = A_j / sqrt(n)``.

    ``A_j`` are ``m x m`` complex Ginibre matrices. ``G(1)`` is the identity,
    matching a Model II product right after its first measurement layer.
    """
    if t < 1:
        raise DomainError("t must be at least 1")
    gen = as_generator(rng)
    state = StabilizedProduct.identity(m)
    scale = 1.0 / math.sqrt(n)
    for _ in range(t - 1):
        b = sample_ginibre(m, m, gen) * scale
        state = state.apply(b @ state.q)
    return state.log_singular_values()
