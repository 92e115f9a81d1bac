"""Tests for block sampling, likelihood fitting, and the model-vs-empirical
information comparison."""

from __future__ import annotations

import numpy as np
import pytest

from copdex.criteria import Design
from copdex.errors import DomainError
from copdex.information import Block, BlockModel, joint_pmf, make_parameter
from copdex.information import _log_joint_pmf_at
from copdex.margins import MarginalModelSpec
from copdex.validation import (
    _BernoulliPairBatch,
    _batched_scoring,
    fim_vs_empirical,
    mle_fit,
    realize_design,
    sample_block,
)


def line_model(response="bernoulli", family="clayton"):
    link = "logit" if response == "bernoulli" else "log"
    margin = MarginalModelSpec(response, link, (("intercept",), ("linear", 0)))
    return BlockModel(margin=margin, copula_family=family, k=2)


class TestSampleBlock:
    def test_empirical_frequencies_match_joint_pmf(self):
        model = line_model()
        param = make_parameter([0.3, -0.5], alpha=(1.5,), include_dependence=True)
        blk = Block(((-1.0,), (1.0,)))
        n = 20000
        draws = sample_block(blk, model, param, n, seed=11)
        assert draws.shape == (n, 2)
        for y1 in (0, 1):
            for y2 in (0, 1):
                p = joint_pmf(blk, model, param, (y1, y2))
                freq = np.mean((draws[:, 0] == y1) & (draws[:, 1] == y2))
                se = np.sqrt(p * (1.0 - p) / n)
                assert abs(freq - p) <= 4.0 * se + 1e-12

    def test_seed_determinism(self):
        model = line_model()
        param = make_parameter([0.0, 0.5], alpha=(2.0,))
        blk = Block(((0.0,), (1.0,)))
        a = sample_block(blk, model, param, 500, seed=7)
        b = sample_block(blk, model, param, 500, seed=7)
        np.testing.assert_array_equal(a, b)

    def test_rejects_leaky_outcome_window(self):
        # a loose tail tolerance leaves more than the allowed mass outside
        # the enumerated grid, which would bias the draws
        model = line_model("poisson", "gumbel")
        param = make_parameter([1.0, 0.5], alpha=(1.5,))
        blk = Block(((0.5,), (1.0,)))
        with pytest.raises(DomainError):
            sample_block(blk, model, param, 10, seed=0, tail_tol=1e-4)

    def test_rejects_empty_sample(self):
        model = line_model()
        param = make_parameter([0.0, 0.0], alpha=(1.0,))
        with pytest.raises(DomainError):
            sample_block(Block(((0.0,), (1.0,))), model, param, 0)


class TestRealizeDesign:
    def make_design(self, weights):
        pts = [(-1.0, 0.5), (0.0, 1.0), (-0.5, 0.25), (0.75, 1.0)]
        blocks = tuple(
            Block(((a,), (b,))) for (a, b), _ in zip(pts, weights)
        )
        return Design(blocks=blocks, weights=weights)

    def test_largest_remainder_rounding(self):
        d = self.make_design((0.355, 0.310, 0.335))
        blocks, counts = realize_design(d, 20)
        by_weight = dict(zip(d.blocks, counts))
        # raw counts 7.1, 6.2, 6.7 floor to 19; the largest remainder 0.7
        # receives the leftover block
        assert counts.sum() == 20
        assert sorted(counts) == [6, 7, 7]
        assert by_weight[d.blocks[0]] == 7

    def test_zero_count_blocks_dropped(self):
        d = self.make_design((0.96, 0.04))
        blocks, counts = realize_design(d, 10)
        assert len(blocks) == 1
        assert counts.tolist() == [10]

    def test_remainder_ties_go_to_earlier_blocks(self):
        d = self.make_design((0.25, 0.25, 0.25, 0.25))
        blocks, counts = realize_design(d, 2)
        assert counts.tolist() == [1, 1]
        assert blocks == d.blocks[:2]

    def test_counts_always_total_requested(self):
        d = self.make_design((0.47, 0.31, 0.22))
        for n in (1, 3, 7, 19, 100):
            _, counts = realize_design(d, n)
            assert counts.sum() == n

    def test_rejects_nonpositive_total(self):
        d = self.make_design((0.5, 0.5))
        with pytest.raises(DomainError):
            realize_design(d, 0)


class TestMleFit:
    def observations(self, model, param, n=400, seed=5):
        blocks = [Block(((-1.0,), (0.0,))), Block(((0.0,), (1.0,)))]
        data = []
        for i, blk in enumerate(blocks):
            draws = sample_block(blk, model, param, n // 2, seed=seed + i)
            data.extend((blk, y) for y in draws)
        return data

    def test_recovers_generating_parameters(self):
        model = line_model()
        truth = make_parameter([0.4, -0.6], alpha=(1.5,), include_dependence=True)
        data = self.observations(model, truth, n=600)
        start = make_parameter([0.0, 0.0], alpha=(1.0,), include_dependence=True)
        fit = mle_fit(data, model, start)
        assert fit.converged
        assert not fit.separation
        assert fit.n_obs == 600
        assert np.isfinite(fit.log_likelihood)
        np.testing.assert_allclose(fit.param.beta, truth.beta, atol=0.35)

    def test_fixed_coordinates_stay_fixed(self):
        model = line_model()
        truth = make_parameter([0.2, 0.5], alpha=(2.0,), include_dependence=False)
        data = self.observations(model, truth, n=200)
        start = make_parameter([0.0, 0.0], alpha=(2.0,), include_dependence=False)
        fit = mle_fit(data, model, start)
        # the dependence parameter is not estimable here, so it must come
        # back exactly at its starting value
        assert fit.param.alpha == (2.0,)

    def test_separation_flagged_on_degenerate_data(self):
        model = line_model()
        blk = Block(((0.0,), (1.0,)))
        data = [(blk, (1, 1))] * 40
        start = make_parameter([0.0, 0.0], alpha=(1.0,))
        fit = mle_fit(data, model, start)
        assert fit.separation

    def test_rejects_empty_observations(self):
        model = line_model()
        start = make_parameter([0.0, 0.0], alpha=(1.0,))
        with pytest.raises(DomainError):
            mle_fit([], model, start)


class TestBatchedPath:
    def setup_batch(self):
        model = line_model()
        param = make_parameter([0.2, -0.4], alpha=(1.2,), include_dependence=True)
        blocks = (Block(((-1.0,), (0.5,))), Block(((0.0,), (1.0,))))
        counts = np.array([3, 2])
        return model, param, _BernoulliPairBatch(model, param, blocks, counts)

    def test_cell_log_probs_match_scalar_oracle(self):
        model, param, batch = self.setup_batch()
        theta0 = np.asarray(param.gamma)[list(param.estimable_indices())]
        lp = batch.log_probs(theta0[None, :])[0]
        points = batch.points
        for ci in range(batch.n_cells):
            i1, i2 = batch.cell_point[ci]
            blk = Block((points[i1], points[i2]))
            want = _log_joint_pmf_at(
                model, np.asarray(param.gamma), blk, batch.cell_y[ci]
            )
            assert lp[ci] == pytest.approx(want, abs=1e-12)

    def test_batched_scoring_agrees_with_generic_fit(self):
        model, param, batch = self.setup_batch()
        theta0 = np.asarray(param.gamma)[list(param.estimable_indices())]
        rng = np.random.default_rng(3)
        base_lp = batch.log_probs(theta0[None, :])[0]
        cell_counts = np.zeros((1, batch.n_cells))
        data = []
        for bi in range(batch.n_blocks):
            sel = np.flatnonzero(batch.cell_block == bi)
            pvals = np.exp(base_lp[sel])
            pvals /= pvals.sum()
            n_b = 60
            draws = rng.multinomial(n_b, pvals)
            cell_counts[0, sel] = draws
            for k, ci in enumerate(sel):
                i1, i2 = batch.cell_point[ci]
                blk = Block((batch.points[i1], batch.points[i2]))
                data.extend([(blk, tuple(batch.cell_y[ci]))] * int(draws[k]))
        theta_hat, conv = _batched_scoring(batch, cell_counts, theta0)
        assert conv[0]
        fit = mle_fit(data, model, param)
        want = np.asarray(fit.param.gamma)[list(param.estimable_indices())]
        np.testing.assert_allclose(theta_hat[0], want, atol=2e-3)


class TestFimVsEmpirical:
    def two_block_design(self):
        return Design(
            blocks=(Block(((-1.0,), (0.0,))), Block(((0.0,), (1.0,)))),
            weights=(0.5, 0.5),
        )

    def test_bernoulli_pairs_smoke(self):
        model = line_model()
        param = make_parameter([0.3, -0.4], alpha=(1.5,), include_dependence=True)
        comp = fim_vs_empirical(
            self.two_block_design(), model, param,
            n_blocks=40, replications=400, seed=2, threshold=0.30,
        )
        assert comp.valid
        assert comp.n_converged >= 392
        assert np.isfinite(comp.rel_frobenius)
        assert comp.passed == (comp.rel_frobenius < 0.30)
        assert comp.model_cov.shape == comp.empirical_cov.shape == (3, 3)

    def test_seed_determinism(self):
        model = line_model()
        param = make_parameter([0.1, 0.2], alpha=(1.2,), include_dependence=True)
        kwargs = dict(n_blocks=30, replications=120, seed=9, threshold=0.5)
        a = fim_vs_empirical(self.two_block_design(), model, param, **kwargs)
        b = fim_vs_empirical(self.two_block_design(), model, param, **kwargs)
        assert a.rel_frobenius == b.rel_frobenius

    def test_poisson_fallback_path(self):
        model = line_model("poisson", "gumbel")
        param = make_parameter([0.2, 0.4], alpha=(1.5,), include_dependence=True)
        comp = fim_vs_empirical(
            self.two_block_design(), model, param,
            n_blocks=12, replications=24, seed=4, threshold=1.5,
        )
        assert comp.n_replications == 24
        assert comp.n_total_blocks == 12
        assert np.isfinite(comp.rel_frobenius)

    def test_rejects_single_replication(self):
        model = line_model()
        param = make_parameter([0.0, 0.0], alpha=(1.0,))
        with pytest.raises(DomainError):
            fim_vs_empirical(
                self.two_block_design(), model, param, n_blocks=10, replications=1
            )
