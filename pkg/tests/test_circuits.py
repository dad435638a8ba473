import itertools
import math

import numpy as np
import pytest
from scipy import stats

from monitored_dots.circuits import (
    CircuitConfig,
    Model,
    StabilizedProduct,
    ginibre_product_log_spectrum,
    rank_collapse_time_mc,
    run_trajectory,
    step_projective,
    step_weak,
    weak_layer_diagonal,
)
from monitored_dots.numerics import DomainError, RngStream, sample_haar_unitary


def within_3se(x, target):
    x = np.asarray(x, dtype=float)
    return abs(x.mean() - target) <= 3.0 * x.std(ddof=1) / math.sqrt(x.size)


class TestConfig:
    def test_dimensions(self):
        cfg = CircuitConfig(L=6, p=0.5)
        assert (cfg.N, cfg.M, cfg.n_measured) == (64, 8, 3)

    def test_model_parse(self):
        assert CircuitConfig(L=2, p=0.5, model="weak", epsilon=0.1).model is Model.WEAK

    @pytest.mark.parametrize(
        "kw",
        [
            dict(L=0, p=0.5),
            dict(L=3, p=1.5),
            dict(L=3, p=0.5),  # pL not an integer in Model II
            dict(L=2, p=0.5, epsilon=2.0),
            dict(L=2, p=0.5, t_max=0),
            dict(L=2, p=0.5, outcomes="bogus"),
            dict(L=15, p=0.0),
        ],
    )
    def test_invalid(self, kw):
        with pytest.raises(DomainError):
            CircuitConfig(**kw)

    def test_weak_born_unimplemented(self):
        with pytest.raises(NotImplementedError):
            CircuitConfig(L=2, p=0.5, model="weak", epsilon=0.1, outcomes="born")

    def test_record_times(self):
        cfg = CircuitConfig(L=2, p=0.5, t_max=10, record_at=(3,))
        assert cfg.record_times().tolist() == [1, 2, 3, 4, 8, 10]
        cfg = CircuitConfig(L=2, p=0.5, t_max=10, record_every=5)
        assert cfg.record_times().tolist() == [1, 5, 10]


class TestProjective:
    def test_no_measurement_is_unitary(self):
        cfg = CircuitConfig(L=3, p=0.0, t_max=6, record_every=1)
        rec = run_trajectory(cfg, 0)
        for sp in rec.spectra:
            assert np.allclose(sp.log_sigma, 0.0, atol=1e-12)
            assert sp.rank == 8

    def test_full_measurement_rank_one(self):
        cfg = CircuitConfig(L=2, p=1.0, t_max=3, record_every=1)
        rec = run_trajectory(cfg, 0)
        assert rec.spectra[0].rank == 1

    def test_rank_pinned_at_M(self):
        cfg = CircuitConfig(L=3, p=1 / 3, t_max=2, record_every=1)
        rec = run_trajectory(cfg, 1)
        assert rec.spectrum_at(2).rank == 4
        assert rec.spectrum_at(2).log_sigma.size == 4

    def test_rank_every_step(self):
        cfg = CircuitConfig(L=4, p=0.5, t_max=3, record_every=1)
        for i in range(5):
            assert all(sp.rank == 4 for sp in run_trajectory(cfg, i).spectra)

    def test_model1_rank_monotone(self):
        cfg = CircuitConfig(L=3, p=0.5, model="I", t_max=1)
        state = StabilizedProduct.identity(8)
        gen = RngStream(3).gen
        ranks = []
        for _ in range(20):
            state, meta = step_projective(state, cfg, gen)
            ranks.append(meta.rank)
        assert all(b <= a for a, b in zip(ranks, ranks[1:]))

    def test_model1_full_measurement_stops(self):
        cfg = CircuitConfig(L=2, p=1.0, model="I", t_max=50)
        assert all(run_trajectory(cfg, i).stopping_time == 1 for i in range(5))

    def test_stabilized_matches_direct(self):
        # brute force: multiply explicit layers, compare singular values
        L, t_max = 3, 5
        cfg = CircuitConfig(L=L, p=1 / 3, t_max=1)
        gen = RngStream(5).gen
        state = StabilizedProduct.identity(cfg.N)
        for _ in range(t_max):
            state, _ = step_projective(state, cfg, gen)
        direct = np.linalg.svd(state.dense(), compute_uv=False)
        direct = np.log(direct[direct > 1e-300])[: state.rank]
        assert np.allclose(np.sort(direct)[::-1], state.log_singular_values(), rtol=1e-8, atol=1e-10)

    def test_long_run_stays_finite(self):
        cfg = CircuitConfig(L=3, p=1 / 3, t_max=2000, record_every=500)
        rec = run_trajectory(cfg, 0)
        final = rec.spectrum_at(2000).log_sigma
        assert np.all(np.isfinite(final)) and final[0] < -100

    def test_reproducible(self):
        cfg = CircuitConfig(L=3, p=1 / 3, t_max=8, seed=4)
        a, b = run_trajectory(cfg, 2), run_trajectory(cfg, 2)
        assert np.array_equal(a.spectra[-1].log_sigma, b.spectra[-1].log_sigma)
        assert a.born_log_prob == b.born_log_prob

    def test_outcome_choice_irrelevant_for_spectrum(self):
        fixed = CircuitConfig(L=2, p=0.5, t_max=3, seed=1, outcomes="fixed", track_born=False)
        unif = CircuitConfig(L=2, p=0.5, t_max=3, seed=2, outcomes="uniform", track_born=False)
        a = [run_trajectory(fixed, i).spectrum_at(3).log_sigma[0] for i in range(400)]
        b = [run_trajectory(unif, i).spectrum_at(3).log_sigma[0] for i in range(400)]
        assert stats.ks_2samp(a, b).pvalue > 0.01

    def test_porter_thomas_factor(self):
        cfg = CircuitConfig(L=3, p=1.0, t_max=1, seed=7)
        f = np.exp([run_trajectory(cfg, i).born_log_factors[0] for i in range(3000)])
        assert stats.kstest(f, stats.beta(1, 7).cdf).pvalue > 0.01

    def test_born_normalization_exhaustive(self):
        # sum over all outcome strings of p(m) for fixed measured qubits and unitaries
        L = 2
        gen = RngStream(11).gen
        us = [sample_haar_unitary(4, gen) for _ in range(2)]
        bits = np.array([[(i >> (L - 1 - q)) & 1 for q in range(L)] for i in range(4)])
        total = 0.0
        for o1, o2 in itertools.product((0, 1), repeat=2):
            p1 = np.diag((bits[:, 0] == o1).astype(float))
            p2 = np.diag((bits[:, 0] == o2).astype(float))
            k = p2 @ us[1] @ p1 @ us[0]
            total += np.trace(k @ k.conj().T).real / 4.0
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_born_sampling_normalized_factors(self):
        cfg = CircuitConfig(L=2, p=0.5, t_max=4, outcomes="born", seed=3)
        rec = run_trajectory(cfg, 0)
        assert np.all(rec.born_log_factors <= 0)

    def test_step_projective_rejects_weak(self):
        cfg = CircuitConfig(L=2, p=0.5, model="weak", epsilon=0.1)
        with pytest.raises(DomainError):
            step_projective(StabilizedProduct.identity(4), cfg, RngStream(0))


class TestRankCollapse:
    def test_p_one(self):
        mean, _ = rank_collapse_time_mc(CircuitConfig(L=4, p=1.0, model="I", n_traj=100))
        assert mean == 1.0

    def test_half(self):
        mean, se = rank_collapse_time_mc(CircuitConfig(L=3, p=0.5, model="I", n_traj=10_000, seed=1))
        assert abs(mean - 8.0) <= 3 * se

    def test_point_eight(self):
        mean, se = rank_collapse_time_mc(CircuitConfig(L=2, p=0.8, model="I", n_traj=10_000, seed=2))
        assert abs(mean - 1.5625) <= 3 * se

    def test_p_zero(self):
        with pytest.raises(DomainError):
            rank_collapse_time_mc(CircuitConfig(L=2, p=0.0, model="I", n_traj=10))

    def test_model2_rejected(self):
        with pytest.raises(DomainError):
            rank_collapse_time_mc(CircuitConfig(L=2, p=0.5, n_traj=10))


class TestWeak:
    def test_layer_eigenvalues(self):
        # explicit Kronecker product of single-qubit operators
        eps = 0.3
        up = np.diag([(1 + eps) / 2, (1 - eps) / 2])
        kron = np.kron(up, np.eye(2))
        diag = weak_layer_diagonal(2, [0], [0], eps)
        assert np.allclose(np.diag(kron), diag)
        assert sorted(diag) == pytest.approx([0.35, 0.35, 0.65, 0.65])

    def test_epsilon_zero_identity(self):
        cfg = CircuitConfig(L=2, p=0.5, model="weak", epsilon=0.0, t_max=5, record_every=1)
        rec = run_trajectory(cfg, 0)
        for sp in rec.spectra:
            spacing = sp.log_sigma - sp.log_sigma[0]
            assert np.allclose(spacing, 0.0, atol=1e-12)

    def test_epsilon_one_projective(self):
        cfg = CircuitConfig(L=3, p=1 / 3, model="weak", epsilon=1.0, t_max=1)
        state = step_weak(StabilizedProduct.identity(8), cfg, RngStream(0))
        assert state.rank == 4

    def test_weak_rejects_projective(self):
        with pytest.raises(DomainError):
            step_weak(StabilizedProduct.identity(4), CircuitConfig(L=2, p=0.5), RngStream(0))


class TestGinibreProxy:
    def test_identity_at_t1(self):
        assert np.allclose(ginibre_product_log_spectrum(4, 16, 1, RngStream(0)), 0.0)

    def test_sigma1_matches_kraus(self):
        # M/N = 1/64; the equivalence is exact only as N grows, so the check is loose
        cfg = CircuitConfig(L=8, p=3 / 4, t_max=3, seed=3, track_born=False)
        a = [run_trajectory(cfg, i).spectrum_at(3).log_sigma[0] for i in range(2000)]
        gen = RngStream(4).gen
        b = [ginibre_product_log_spectrum(cfg.M, cfg.N, 3, gen)[0] for _ in range(2000)]
        assert stats.ks_2samp(a, b).pvalue > 0.01
