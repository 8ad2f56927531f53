"""Model search: MAP fits vs grid oracle, Laplace vs quadrature, screening,
neighborhoods, and the stochastic search vs exhaustive enumeration."""

from itertools import combinations

import numpy as np
import pytest
from scipy.integrate import quad

import survmix as sm
from survmix.dataset import scale_design
from survmix.priors import imom_log_density, model_log_prior
from survmix.search import (
    ClusterShard,
    ModelFitError,
    fit_map_coefficients,
    log_laplace_model_score,
    neighborhoods,
    s5_search,
    screen_variables,
)

IMOM = sm.ImomHyper()
CFG = sm.SearchConfig(iterations=40, screen_size=10)


def synth_shard(n, p, beta, seed, censor=0.0):
    """Unit-baseline exponential data on a scaled design; returns (shard, dataset)."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    eta = X @ beta
    t = rng.exponential(size=n) / np.exp(eta)
    events = np.ones(n, dtype=int)
    if censor > 0:
        c = rng.exponential(scale=1.0 / censor, size=n)
        events = (t <= c).astype(int)
        t = np.minimum(t, c)
    ds = sm.SurvivalDataset(t, events, X, [f"x{j}" for j in range(p)])
    std, _ = scale_design(ds)
    return ClusterShard(std), std


class TestFitMap:
    def test_empty_model_exact(self):
        shard, std = synth_shard(50, 3, np.zeros(3), seed=0)
        coef, hess = fit_map_coefficients(shard, sm.EMPTY_MODEL, IMOM, CFG)
        assert coef.model.size == 0 and hess.shape == (0, 0)
        mp = sm.ModelPriorHyper(p=3)
        ms = log_laplace_model_score(shard, sm.EMPTY_MODEL, IMOM, mp, CFG)
        assert ms.log_score == pytest.approx(
            sm.log_likelihood(std, sm.EMPTY_COEF) + model_log_prior(0, mp))

    def test_single_covariate_against_grid_oracle(self):
        shard, _ = synth_shard(500, 2, np.array([1.0, 0.0]), seed=1)
        coef, _ = fit_map_coefficients(shard, sm.ModelIndex((0,)), IMOM, CFG)
        grid = np.arange(-5.0, 5.0, 1e-3)
        grid = grid[np.abs(grid) > 1e-9]
        x = shard.X[:, 0]
        # evaluate log posterior exactly on the grid
        vals = np.array([
            float(shard.events @ (b * x) - np.exp(shard.log_times + b * x).sum())
            + imom_log_density(b, IMOM) for b in grid
        ])
        b_grid = grid[np.argmax(vals)]
        assert 0.8 < coef.values[0] < 1.2
        assert coef.values[0] == pytest.approx(b_grid, abs=2e-3)

    def test_sign_symmetry(self):
        shard, std = synth_shard(200, 2, np.array([0.9, 0.0]), seed=2)
        model = sm.ModelIndex((0,))
        coef_pos, _ = fit_map_coefficients(shard, model, IMOM, CFG)
        flipped = sm.SurvivalDataset(std.times, std.events,
                                     std.design * np.array([-1.0, 1.0]), std.names)
        coef_neg, _ = fit_map_coefficients(ClusterShard(flipped), model, IMOM, CFG)
        assert coef_neg.values[0] == pytest.approx(-coef_pos.values[0], rel=1e-5)
        mp = sm.ModelPriorHyper(p=2)
        s1 = log_laplace_model_score(shard, model, IMOM, mp, CFG)
        s2 = log_laplace_model_score(ClusterShard(flipped), model, IMOM, mp, CFG)
        assert s1.log_score == pytest.approx(s2.log_score, rel=1e-8)

    def test_gradient_norm_at_mode(self):
        shard, _ = synth_shard(300, 4, np.array([0.8, -0.5, 0.0, 0.0]), seed=3)
        model = sm.ModelIndex((0, 1, 2))
        coef, _ = fit_map_coefficients(shard, model, IMOM, CFG)
        x = shard.X[:, list(model.indices)]
        eta = x @ coef.values
        ch = np.exp(shard.log_times + eta)
        grad = x.T @ (shard.events - ch) + np.array(
            [sm.imom_log_density_grad(b, IMOM) for b in coef.values])
        assert np.max(np.abs(grad)) <= CFG.tol

    def test_coefficients_repelled_from_origin(self):
        shard, _ = synth_shard(120, 5, np.zeros(5), seed=4)
        for m in [(0,), (1, 3), (0, 1, 2, 3)]:
            coef, _ = fit_map_coefficients(shard, sm.ModelIndex(m), IMOM, CFG)
            assert np.all(np.abs(coef.values) >= 1e-8)

    def test_oversized_model_soft_fails(self):
        shard, _ = synth_shard(12, 6, np.zeros(6), seed=5)
        with pytest.raises(ModelFitError):
            fit_map_coefficients(shard, sm.ModelIndex((0, 1, 2, 3, 4)), IMOM,
                                 sm.SearchConfig(max_model_size=4))

    def test_hessian_positive_definite_at_mode(self):
        shard, _ = synth_shard(400, 3, np.array([1.2, -0.7, 0.0]), seed=6)
        _, hess = fit_map_coefficients(shard, sm.ModelIndex((0, 1)), IMOM, CFG)
        assert np.all(np.linalg.eigvalsh(hess) > 0)


def quadrature_log_marginal_1d(shard, j, lo=-10.0, hi=10.0):
    """Independent oracle: log integral of likelihood * slab over one coefficient."""
    x = shard.X[:, j]

    def logf(b):
        eta = b * x
        return (float(shard.events @ eta - np.exp(shard.log_times + eta).sum())
                + imom_log_density(b, IMOM))

    grid = np.linspace(lo, hi, 4001)
    grid = grid[np.abs(grid) > 1e-8]
    shift = max(logf(b) for b in grid)

    def f(b):
        return np.exp(max(logf(b) - shift, -745.0))

    left, _ = quad(f, lo, -1e-8, limit=300)
    right, _ = quad(f, 1e-8, hi, limit=300)
    return shift + np.log(left + right)


class TestLaplaceScore:
    def test_empty_model_closed_form(self):
        ds = sm.SurvivalDataset([1.0, 1.0], [1, 1], [[0.5], [-0.5]], ["x0"])
        shard = ClusterShard(ds)
        mp = sm.ModelPriorHyper(p=1)
        ms = log_laplace_model_score(shard, sm.EMPTY_MODEL, IMOM, mp, CFG)
        assert ms.log_score == pytest.approx(-2.0 + model_log_prior(0, mp))

    def test_one_dim_matches_quadrature(self):
        shard, _ = synth_shard(500, 2, np.array([0.8, 0.0]), seed=7)
        mp = sm.ModelPriorHyper(p=2)
        ms = log_laplace_model_score(shard, sm.ModelIndex((0,)), IMOM, mp, CFG)
        laplace_marginal = ms.log_score - model_log_prior(1, mp)
        oracle = quadrature_log_marginal_1d(shard, 0)
        assert abs(laplace_marginal - oracle) <= 0.1

    def test_score_invariant_to_column_relabeling(self):
        shard, std = synth_shard(150, 3, np.array([0.7, -0.4, 0.0]), seed=8)
        mp = sm.ModelPriorHyper(p=3)
        base = log_laplace_model_score(shard, sm.ModelIndex((0, 1)), IMOM, mp, CFG)
        perm = [2, 0, 1]  # old column j lands at position perm.index(j)
        permuted = sm.SurvivalDataset(std.times, std.events, std.design[:, perm],
                                      [std.names[j] for j in perm])
        moved = log_laplace_model_score(ClusterShard(permuted), sm.ModelIndex((1, 2)),
                                        IMOM, mp, CFG)
        assert moved.log_score == pytest.approx(base.log_score, rel=1e-9)

    def test_argmax_invariant_under_time_rescaling(self):
        # exhaustive rescoring oracle over all models of size <= 1
        shard, std = synth_shard(200, 3, np.array([1.0, 0.0, 0.0]), seed=9)
        mp = sm.ModelPriorHyper(p=3)
        small = [sm.EMPTY_MODEL] + [sm.ModelIndex((j,)) for j in range(3)]

        def argmax_for(dataset):
            sh = ClusterShard(dataset)
            scores = [log_laplace_model_score(sh, m, IMOM, mp, CFG).log_score
                      for m in small]
            return int(np.argmax(scores))

        doubled = sm.SurvivalDataset(2.0 * std.times, std.events, std.design, std.names)
        assert argmax_for(std) == argmax_for(doubled)


class TestScreening:
    def test_signal_covariate_enters_screen_set(self):
        beta = np.zeros(6)
        beta[3] = 1.5
        shard, _ = synth_shard(500, 6, beta, seed=10)
        mp = sm.ModelPriorHyper(p=6)
        null = log_laplace_model_score(shard, sm.EMPTY_MODEL, IMOM, mp, CFG)
        s = screen_variables(shard, null, 1)
        assert 3 in s

    def test_full_screen_is_everything(self):
        shard, _ = synth_shard(60, 5, np.zeros(5), seed=11)
        mp = sm.ModelPriorHyper(p=5)
        null = log_laplace_model_score(shard, sm.EMPTY_MODEL, IMOM, mp, CFG)
        assert screen_variables(shard, null, 5).tolist() == [0, 1, 2, 3, 4]

    def test_current_model_always_included(self):
        beta = np.zeros(6)
        beta[0] = 1.0
        shard, _ = synth_shard(200, 6, beta, seed=12)
        mp = sm.ModelPriorHyper(p=6)
        current = log_laplace_model_score(shard, sm.ModelIndex((4, 5)), IMOM, mp, CFG)
        s = set(screen_variables(shard, current, 1).tolist())
        assert {4, 5} <= s


class TestNeighborhoods:
    def test_definition(self):
        adds, dels = neighborhoods(sm.ModelIndex((0, 1)), np.array([0, 1, 2]), cap=5)
        assert [m.indices for m in adds] == [(0, 1, 2)]
        assert sorted(m.indices for m in dels) == [(0,), (1,)]

    def test_empty_model_has_no_deletions(self):
        adds, dels = neighborhoods(sm.EMPTY_MODEL, np.array([0, 3]), cap=5)
        assert dels == []
        assert [m.indices for m in adds] == [(0,), (3,)]

    def test_counting(self):
        model = sm.ModelIndex((1, 4, 7))
        screen = np.array([0, 1, 2, 4, 9])
        adds, dels = neighborhoods(model, screen, cap=10)
        assert len(adds) == len(set(screen.tolist()) - set(model.indices))
        assert len(dels) == model.size

    def test_cap_blocks_additions(self):
        adds, _ = neighborhoods(sm.ModelIndex((0, 1)), np.array([2, 3]), cap=2)
        assert adds == []


class TestS5Search:
    def test_deterministic_trace(self):
        shard, _ = synth_shard(150, 6, np.array([1.0, -0.8, 0.0, 0.0, 0.0, 0.0]), seed=13)
        mp = sm.ModelPriorHyper(p=6)
        cfg = sm.SearchConfig(iterations=25, screen_size=6)
        r1 = s5_search(shard, sm.EMPTY_MODEL, IMOM, mp, cfg, np.random.default_rng(99))
        r2 = s5_search(shard, sm.EMPTY_MODEL, IMOM, mp, cfg, np.random.default_rng(99))
        assert [(m.indices, s) for m, s in r1.trace] == [(m.indices, s) for m, s in r2.trace]
        assert r1.best.model == r2.best.model

    def test_trace_length_bound(self):
        shard, _ = synth_shard(100, 5, np.zeros(5), seed=14)
        mp = sm.ModelPriorHyper(p=5)
        cfg = sm.SearchConfig(iterations=10, screen_size=5)
        res = s5_search(shard, sm.EMPTY_MODEL, IMOM, mp, cfg, np.random.default_rng(0))
        max_neighborhood = 5 + 4  # |screen| adds + |m| dels at most
        assert len(res.trace) <= cfg.iterations * (max_neighborhood + 1)

    def test_zero_signal_prefers_tiny_models(self):
        mp = sm.ModelPriorHyper(p=8)
        cfg = sm.SearchConfig(iterations=30, screen_size=8)
        small = 0
        for seed in range(10):
            shard, _ = synth_shard(200, 8, np.zeros(8), seed=100 + seed)
            res = s5_search(shard, sm.EMPTY_MODEL, IMOM, mp, cfg,
                            np.random.default_rng(seed))
            small += res.best.model.size <= 1
        assert small >= 9

    def test_finds_enumeration_map_small_space(self):
        mp = sm.ModelPriorHyper(p=6)
        cfg = sm.SearchConfig(iterations=40, screen_size=6)
        hits = 0
        for seed in range(5):
            beta = np.zeros(6)
            beta[:2] = [1.2, -0.9]
            shard, _ = synth_shard(150, 6, beta, seed=200 + seed)
            best = None
            for size in range(0, 6):
                for m in combinations(range(6), size):
                    try:
                        s = log_laplace_model_score(shard, sm.ModelIndex(m), IMOM, mp, cfg)
                    except ModelFitError:
                        continue
                    if best is None or s.log_score > best.log_score:
                        best = s
            res = s5_search(shard, sm.EMPTY_MODEL, IMOM, mp, cfg,
                            np.random.default_rng(seed))
            hits += res.best.model == best.model
        assert hits >= 4

    def test_stays_put_when_all_candidates_fail(self):
        # two subjects: every nonempty model soft-fails the size cap, so the
        # walk stays at the empty model and the result is still well-formed
        ds = sm.SurvivalDataset([1.0, 2.0], [1, 1], [[0.5, 1.0], [-0.5, 2.0]],
                                ["a", "b"])
        shard = ClusterShard(ds)
        mp = sm.ModelPriorHyper(p=2)
        cfg = sm.SearchConfig(iterations=5, screen_size=2)
        res = s5_search(shard, sm.EMPTY_MODEL, IMOM, mp, cfg, np.random.default_rng(1))
        assert res.best.model == sm.EMPTY_MODEL

    def test_trace_lines_serializable(self):
        import json
        shard, _ = synth_shard(80, 3, np.array([1.0, 0.0, 0.0]), seed=15)
        mp = sm.ModelPriorHyper(p=3)
        res = s5_search(shard, sm.EMPTY_MODEL, IMOM, mp,
                        sm.SearchConfig(iterations=8, screen_size=3),
                        np.random.default_rng(2))
        for line in res.trace_lines():
            rec = json.loads(line)
            assert set(rec) == {"model", "log_score"}
