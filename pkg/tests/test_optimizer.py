"""Tests for the design optimizer on problems with known optima."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import expit

from copdex.criteria import CriterionSpec, Design, PriorSpec, criterion_value
from copdex.errors import DomainError, InfeasibleError
from copdex.information import Block, BlockModel, ExactSum, fim_tensor, make_parameter
from copdex.margins import MarginalModelSpec
from copdex.optimizer import (
    CandidateSet,
    OptimizerOptions,
    canonicalize,
    grid_candidates,
    level_pair_candidates,
    optimize,
    optimize_certified,
    refine_weights,
)

D = CriterionSpec(kind="D")


def line_model(response):
    link = "logit" if response == "bernoulli" else "log"
    margin = MarginalModelSpec(response, link, (("intercept",), ("linear", 0)))
    return BlockModel(margin=margin, copula_family="product", k=2)


def point_prior(beta):
    return PriorSpec(kind="point", point=make_parameter(beta))


def marginal_exposure(design, coord):
    """Fraction of unit slots the design places at a coordinate value."""
    total = 0.0
    for b, w in zip(design.blocks, design.weights):
        hits = sum(1 for pt in b.points if abs(pt[0] - coord) < 1e-9)
        total += w * hits / len(b.points)
    return total


class TestCandidateSets:
    def test_grid_pair_count_and_step(self):
        cands = grid_candidates(np.linspace(-1.0, 1.0, 41))
        assert len(cands.blocks) == 41 * 42 // 2
        assert cands.grid_step == pytest.approx(0.05, abs=1e-12)

    def test_level_pair_counts(self):
        assert len(level_pair_candidates(6).blocks) == 21
        assert len(level_pair_candidates(6, include_pure=False).blocks) == 15

    def test_duplicates_and_unit_order_collapse(self):
        cands = CandidateSet(
            blocks=(Block(((1.0,), (0.0,))), Block(((0.0,), (1.0,)))),
        )
        assert len(cands.blocks) == 1

    def test_rejects_empty_and_degenerate_grids(self):
        with pytest.raises(DomainError):
            CandidateSet(blocks=())
        with pytest.raises(DomainError):
            grid_candidates([0.5])
        with pytest.raises(DomainError):
            level_pair_candidates(1)

    def test_options_validation(self):
        with pytest.raises(DomainError):
            OptimizerOptions(max_iters=0)
        with pytest.raises(DomainError):
            OptimizerOptions(convergence_tol=0.0)
        with pytest.raises(DomainError):
            OptimizerOptions(step_rule="newton")
        with pytest.raises(DomainError):
            OptimizerOptions(merge_radius=-0.1)


class TestKnownOptima:
    def test_logistic_line_optimum_value(self):
        # eta spans [-1, 1], inside the saturation range, so the optimal
        # design loads the interval endpoints with equal marginal exposure
        # and the optimal log determinant is 2 ln(2 p (1 - p)) at eta = 1
        model = line_model("bernoulli")
        prior = point_prior([0.0, 1.0])
        cands = grid_candidates(np.linspace(-1.0, 1.0, 21))
        res = optimize(
            model, prior, D, cands,
            options=OptimizerOptions(convergence_tol=1e-6, max_iters=2000),
        )
        assert res.converged
        p = expit(1.0)
        psi_true = 2.0 * np.log(2.0 * p * (1.0 - p))
        assert res.psi == pytest.approx(psi_true, abs=1e-4)
        clean = canonicalize(res.design, prune_tol=1e-3)
        for b in clean.blocks:
            for pt in b.points:
                assert abs(abs(pt[0]) - 1.0) < 1e-9
        assert marginal_exposure(clean, -1.0) == pytest.approx(0.5, abs=1e-3)

    def test_poisson_line_optimum_determinant(self):
        # with log link and slope 1 the per-unit endpoint information is
        # [[cosh 1, sinh 1], [sinh 1, cosh 1]] with determinant exactly 1;
        # a block carries two units, so the optimal determinant is 4
        model = line_model("poisson")
        prior = point_prior([0.0, 1.0])
        cands = grid_candidates(np.linspace(-1.0, 1.0, 21))
        res = optimize(
            model, prior, D, cands,
            options=OptimizerOptions(convergence_tol=1e-6, max_iters=2000),
        )
        assert res.converged
        assert res.psi == pytest.approx(np.log(4.0), abs=1e-4)
        assert marginal_exposure(
            canonicalize(res.design, prune_tol=1e-3), 1.0
        ) == pytest.approx(0.5, abs=1e-3)

    def test_step_rules_agree(self):
        model = line_model("bernoulli")
        prior = point_prior([0.2, 0.8])
        cands = grid_candidates(np.linspace(-1.0, 1.0, 11))
        psis = []
        for rule in ("wynn", "golden"):
            res = optimize(
                model, prior, D, cands,
                options=OptimizerOptions(
                    convergence_tol=1e-6, max_iters=3000, step_rule=rule
                ),
            )
            assert res.converged
            psis.append(res.psi)
        assert psis[0] == pytest.approx(psis[1], abs=1e-5)


class TestOptimizeCertified:
    def test_violating_cert_blocks_are_folded_back_in(self):
        # the pool stops short of the best coordinates, so round one must
        # fail certification and the refinement rounds must recover them
        model = line_model("bernoulli")
        prior = point_prior([0.0, 1.0])
        pool = grid_candidates(np.linspace(-0.6, 0.6, 7))
        cert = grid_candidates(np.linspace(-1.0, 1.0, 21))
        result, report = optimize_certified(
            model, prior, D, pool, cert,
            options=OptimizerOptions(convergence_tol=1e-6, max_iters=2000),
            tolerance=1e-3,
        )
        assert result.converged
        assert report.passed
        coords = {p[0] for b in result.design.blocks for p in b.points}
        assert 1.0 in coords and -1.0 in coords

    def test_passing_pool_returns_after_one_round(self):
        model = line_model("bernoulli")
        prior = point_prior([0.0, 1.0])
        pool = grid_candidates(np.linspace(-1.0, 1.0, 11))
        result, report = optimize_certified(
            model, prior, D, pool, pool,
            options=OptimizerOptions(convergence_tol=1e-6, max_iters=2000),
            tolerance=1e-3,
        )
        assert report.passed
        assert report.n_candidates == len(pool.blocks)


class TestOptimizeInvariants:
    def test_design_state_and_history(self):
        model = line_model("bernoulli")
        prior = point_prior([0.0, 1.5])
        cands = grid_candidates(np.linspace(-1.0, 1.0, 11))
        res = optimize(model, prior, D, cands)
        w = res.design.weight_array()
        assert np.all(w > 0.0)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        cand_points = {b.points for b in cands.blocks}
        for b in res.design.blocks:
            assert b.points in cand_points
        psis = [h["psi"] for h in res.history]
        assert np.all(np.diff(psis) >= -1e-9)
        assert res.gap >= -1e-8
        assert res.converged == (res.gap <= 1e-3)

    def test_iteration_cap_reports_nonconvergence(self):
        model = line_model("bernoulli")
        prior = point_prior([0.0, 1.0])
        cands = grid_candidates(np.linspace(-1.0, 1.0, 21))
        res = optimize(
            model, prior, D, cands,
            options=OptimizerOptions(
                max_iters=1, convergence_tol=1e-12, refine_every=50,
                refine_iters=1,
            ),
        )
        assert not res.converged
        assert res.gap > 1e-12

    def test_singular_candidates_rejected(self):
        # a single repeated point can never identify the slope
        model = line_model("bernoulli")
        prior = point_prior([0.0, 1.0])
        cands = CandidateSet(blocks=(Block(((0.0,), (0.0,))),))
        with pytest.raises(InfeasibleError):
            optimize(model, prior, D, cands)


class TestRefineWeights:
    def test_matches_dense_weight_search(self):
        model = line_model("bernoulli")
        prior = point_prior([0.0, 1.0])
        blocks = (
            Block(((-1.0,), (-1.0,))),
            Block(((-1.0,), (1.0,))),
            Block(((0.0,), (1.0,))),
        )
        start = Design(blocks=blocks, weights=(1 / 3, 1 / 3, 1 / 3))
        refined = refine_weights(start, model, prior, D)
        psi_ref = criterion_value(refined, model, prior, D)

        param = prior.point
        tensor = fim_tensor(blocks, model, [param], ExactSum())[0]
        grid = np.linspace(0.0, 1.0, 201)
        best = -np.inf
        for w1 in grid:
            for w2 in grid[grid <= 1.0 - w1 + 1e-12]:
                m = w1 * tensor[0] + w2 * tensor[1] + (1 - w1 - w2) * tensor[2]
                sign, logdet = np.linalg.slogdet(m)
                if sign > 0 and logdet > best:
                    best = logdet
        assert psi_ref >= best - 1e-4

    def test_support_fixed_and_weights_normalized(self):
        model = line_model("bernoulli")
        prior = point_prior([0.3, 0.9])
        blocks = (
            Block(((-1.0,), (0.0,))),
            Block(((-1.0,), (1.0,))),
            Block(((0.5,), (1.0,))),
        )
        start = Design(blocks=blocks, weights=(0.5, 0.25, 0.25))
        refined = refine_weights(start, model, prior, D)
        assert {b.points for b in refined.blocks} <= {b.points for b in blocks}
        assert refined.weight_array().sum() == pytest.approx(1.0, abs=1e-12)

    def test_refinement_never_lowers_criterion(self):
        model = line_model("poisson")
        prior = point_prior([0.2, 0.7])
        blocks = (
            Block(((-1.0,), (1.0,))),
            Block(((0.0,), (1.0,))),
        )
        start = Design(blocks=blocks, weights=(0.9, 0.1))
        before = criterion_value(start, model, prior, D)
        refined = refine_weights(start, model, prior, D)
        after = criterion_value(refined, model, prior, D)
        assert after >= before - 1e-12


class TestCanonicalize:
    def test_prunes_and_renormalizes(self):
        d = Design(
            blocks=(
                Block(((-1.0,), (1.0,))),
                Block(((0.0,), (1.0,))),
                Block(((0.0,), (0.5,))),
            ),
            weights=(0.6, 0.4 - 1e-9, 1e-9),
        )
        clean = canonicalize(d, prune_tol=1e-6)
        assert clean.n_blocks == 2
        assert clean.weight_array().sum() == pytest.approx(1.0, abs=1e-15)

    def test_prune_cannot_empty_design(self):
        d = Design(blocks=(Block(((0.0,), (1.0,))),), weights=(1.0,))
        with pytest.raises(DomainError):
            canonicalize(d, prune_tol=2.0)

    @settings(max_examples=30, deadline=None)
    @given(
        ws=st.lists(
            st.floats(min_value=1e-3, max_value=1.0), min_size=1, max_size=5
        )
    )
    def test_idempotent(self, ws):
        pts = [(float(i) / 10.0,) for i in range(len(ws))]
        blocks = tuple(Block((p, (1.0,))) for p in pts)
        norm = np.asarray(ws) / np.sum(ws)
        d = Design(blocks=blocks, weights=tuple(norm))
        once = canonicalize(d, prune_tol=1e-4)
        twice = canonicalize(once, prune_tol=1e-4)
        assert once.blocks == twice.blocks
        np.testing.assert_allclose(
            once.weight_array(), twice.weight_array(), atol=1e-15
        )
