import json
import math

import numpy as np
import pytest

from darls.channels import ChannelError, InProcessChannel, local_channels
from darls.driver import (LearnAborted, LearnConfig, accept, bic_score, darls,
                          geometric_schedule, result_to_dict, save_result,
                          save_trace_csv, select_lambda_bic)
from darls.engine import WorkerPool, permutation_score
from darls.graphs import structure_metrics, support_from_permutation
from darls.model import get_family, sample_gldag, shard_loss, zero_params
from darls.prox import ProxConfig
from darls.wire import WireMessage

from helpers import make_pool, split_rows

FAST = LearnConfig(lambda_grid=(0.02, 0.05), n_steps=8,
                   prox=ProxConfig(tol=1e-6, max_iter=100), seed=3)


def chain_shards(rng, p=3, n=1200, k=2, strength=1.3):
    beta = zero_params(p)
    for j in range(1, p):
        beta[j, j] = strength * (1 if j % 2 else -1)
    data = sample_gldag(beta, get_family("logistic"), n, rng)
    truth = beta[1:, :] != 0
    return split_rows(data, k, rng), truth, data


class TestSchedule:
    def test_endpoints_and_geometry(self):
        temps = geometric_schedule(5e-2, 5e-5, 1000)
        assert len(temps) == 1001
        assert temps[0] == pytest.approx(5e-2, rel=1e-12)
        assert temps[-1] / temps[0] == pytest.approx(5e-5 / 5e-2, rel=1e-10)
        ratios = temps[1:] / temps[:-1]
        assert (np.diff(temps) < 0).all()
        np.testing.assert_allclose(ratios, ratios[0], rtol=1e-12)

    def test_zero_steps(self):
        temps = geometric_schedule(5e-2, 5e-5, 0)
        assert len(temps) == 1


class TestAccept:
    def test_improvements_always_accepted(self, rng):
        for _ in range(100):
            f_old = float(rng.standard_normal())
            assert accept(f_old - abs(rng.standard_normal()), f_old, 1e-9, rng)
            assert accept(f_old, f_old, 1e-9, rng)

    def test_rate_at_delta_equals_temperature(self, rng):
        # P(accept) = exp(-1) when the loss increase equals the temperature.
        hits = sum(accept(1.0 + 0.05, 1.0, 0.05, rng) for _ in range(100_000))
        assert hits / 100_000 == pytest.approx(math.exp(-1), abs=0.005)

    def test_rate_at_half_delta(self, rng):
        hits = sum(accept(1.0 + 0.025, 1.0, 0.05, rng) for _ in range(100_000))
        se = math.sqrt(math.exp(-0.5) * (1 - math.exp(-0.5)) / 100_000)
        assert abs(hits / 100_000 - math.exp(-0.5)) <= 3 * se

    def test_frozen_chain_rejects_uphill(self, rng):
        assert not accept(2.0, 1.0, 1e-300, rng)
        with pytest.raises(ValueError):
            accept(1.0, 2.0, 0.0, rng)


class TestSelectLambdaBic:
    def test_degenerate_grid(self, rng):
        shards, _, _ = chain_shards(rng, n=400)
        with make_pool(shards, "logistic") as pool:
            assert select_lambda_bic(pool, np.arange(3), [0.05, 0.05, 0.05], FAST) == 0.05

    def test_empty_graph_bookkeeping(self, rng):
        # A grid point large enough to zero every coefficient: the BIC is
        # 2n * (intercept-only loss) + p * log(n).
        shards, _, data = chain_shards(rng, n=1000)
        lam = 5.0
        with make_pool(shards, "logistic") as pool:
            chosen = select_lambda_bic(pool, np.arange(3), [lam], FAST)
            assert chosen == lam
            scored = permutation_score(pool, np.arange(3), lam,
                                       rounds=FAST.dane_rounds, prox_cfg=FAST.prox)
            assert (scored.beta[1:, :] == 0).all()
            bic = bic_score(pool, scored.objective, scored.beta, lam)
        family = get_family("logistic")
        intercept_only = zero_params(3)
        means = data.mean(axis=0)
        intercept_only[0, :] = np.log(means / (1 - means))
        oracle = 2 * data.shape[0] * shard_loss(data, intercept_only, family) \
            + 3 * math.log(data.shape[0])
        assert bic == pytest.approx(oracle, rel=1e-6)

    def test_strong_chain_keeps_signal(self, rng):
        # Brute-force BIC over the grid with a pooled solver as the oracle:
        # the driver's choice must achieve the oracle's minimum, and the fit
        # at the chosen penalty must keep at least two coefficients.
        from helpers import pooled_solution

        shards, _, data = chain_shards(rng, n=5000, k=2)
        grid = list(np.geomspace(0.01, 0.1, 8))
        family = get_family("logistic")
        perm = np.arange(3)
        support = support_from_permutation(perm)
        n = data.shape[0]
        oracle = {}
        for lam in grid:
            fit = pooled_solution(data, family, support, lam)
            n_params = int(np.count_nonzero(fit[1:, :])) + 3
            oracle[lam] = 2 * n * shard_loss(data, fit, family) + math.log(n) * n_params
        cfg = LearnConfig(lambda_grid=tuple(grid), n_steps=0,
                          prox=ProxConfig(tol=1e-8, max_iter=1000))
        with make_pool(shards, "logistic") as pool:
            chosen = select_lambda_bic(pool, perm, grid, cfg)
            scored = permutation_score(pool, perm, chosen, rounds=cfg.dane_rounds,
                                       prox_cfg=cfg.prox)
        assert oracle[chosen] <= min(oracle.values()) + 1e-6 * abs(min(oracle.values()))
        assert int(np.count_nonzero(scored.beta[1:, :])) >= 2


class TestDarls:
    def test_zero_steps_returns_initial_score(self, rng):
        shards, _, _ = chain_shards(rng, n=600)
        cfg = LearnConfig(lambda_grid=(0.03,), n_steps=0, seed=11)
        with make_pool(shards, "logistic") as pool:
            result = darls(pool, cfg)
        assert len(result.trace) == 1
        assert result.trace[0]["iteration"] == 0
        assert tuple(result.trace[0]["proposal"]) == result.permutation

    def test_reproducible_and_best_tracking(self, rng):
        shards, _, _ = chain_shards(rng, n=800)
        outputs = []
        for _ in range(2):
            with make_pool([s.copy() for s in shards], "logistic") as pool:
                outputs.append(result_to_dict(darls(pool, FAST)))
        assert outputs[0] == outputs[1]
        trace = outputs[0]["trace"]
        accepted_objectives = {rec["objective"] for rec in trace if rec["accepted"]}
        best = min(rec["objective"] for rec in trace)
        assert best in accepted_objectives
        assert outputs[0]["objective"] == best
        assert best <= trace[0]["objective"]

    def test_two_node_recovers_skeleton(self):
        # p=2, strong edge, n=2e4, K=4: the single undirected edge must be
        # recovered (no misses, no extras).  Direction is a coin flip at
        # p=2: both orderings realize the same penalized optimum because
        # the slope equals the direction-symmetric log odds ratio.
        recovered = 0
        for seed in range(10):
            rng = np.random.default_rng(9000 + seed)
            beta = zero_params(2)
            beta[1, 1] = 1.5
            data = sample_gldag(beta, get_family("logistic"), 20_000, rng)
            shards = split_rows(data, 4, rng)
            cfg = LearnConfig(lambda_grid=tuple(np.geomspace(0.01, 0.1, 5)),
                              n_steps=6, seed=seed)
            with make_pool(shards, "logistic") as pool:
                result = darls(pool, cfg)
            metrics = structure_metrics(result.support, beta[1:, :] != 0)
            if metrics.fp == 0 and metrics.m == 0 and metrics.p == 1:
                recovered += 1
        assert recovered >= 9

    def test_memoized_run_identical_to_uncached(self, rng):
        # Between acceptances the warm start is frozen, so a cache hit must
        # reproduce a fresh rescore bit for bit.
        shards, _, _ = chain_shards(rng, p=4, n=600)
        cfg = LearnConfig(lambda_grid=(0.03,), n_steps=30, seed=21)
        outputs = []
        for memoize in (True, False):
            with make_pool([s.copy() for s in shards], "logistic") as pool:
                outputs.append(result_to_dict(darls(pool, cfg, memoize=memoize)))
        assert outputs[0] == outputs[1]

    def test_abort_attaches_partial_trace(self, rng):
        shards, _, _ = chain_shards(rng, n=400)

        class Flaky(InProcessChannel):
            def __init__(self, core, budget):
                super().__init__(core)
                self.budget = budget

            def request(self, msg):
                self.budget -= 1
                if self.budget <= 0:
                    raise ChannelError("simulated link loss")
                return super().request(msg)

        channels = local_channels(shards, "logistic")
        flaky = [Flaky(c.core, budget=60) for c in channels]
        with pytest.raises(LearnAborted) as err:
            with WorkerPool(flaky, "logistic") as pool:
                darls(pool, FAST)
        assert len(err.value.trace) >= 1

    def test_trace_temperatures_follow_schedule(self, rng):
        shards, _, _ = chain_shards(rng, n=400)
        with make_pool(shards, "logistic") as pool:
            result = darls(pool, FAST)
        temps = geometric_schedule(FAST.t_init, FAST.t_final, FAST.n_steps)
        for rec in result.trace[1:]:
            assert rec["temperature"] == pytest.approx(temps[rec["iteration"] - 1])


class TestResultArtifacts:
    def test_json_and_csv_outputs(self, tmp_path, rng):
        shards, truth, _ = chain_shards(rng, n=800)
        with make_pool(shards, "logistic") as pool:
            result = darls(pool, FAST)
        out = tmp_path / "result.json"
        save_result(out, result)
        loaded = json.loads(out.read_text())
        assert loaded["p"] == 3
        assert loaded["n"] == 800
        assert loaded["workers"] == 2
        assert loaded["lambda"] == result.lambda_selected
        assert len(loaded["beta"]) == 4
        assert all(len(row) == 3 for row in loaded["beta"])
        assert len(loaded["trace"]) == FAST.n_steps + 1
        for i, j, w in loaded["edges"]:
            assert w > 0 and 0 <= i < 3 and 0 <= j < 3
        csv_path = tmp_path / "trace.csv"
        save_trace_csv(csv_path, result.trace)
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0] == "iteration,temperature,objective,accepted,incumbent,best"
        assert len(lines) == len(result.trace) + 1

    def test_config_round_trip(self):
        cfg = LearnConfig(family="poisson", lambda_grid=(0.02, 0.07), tau=3,
                          n_steps=50, seed=9, prox=ProxConfig(tol=1e-7))
        assert LearnConfig.from_dict(cfg.to_dict()) == cfg
        with pytest.raises(ValueError):
            LearnConfig.from_dict({"unknown_key": 1})

    def test_config_validation(self):
        with pytest.raises(ValueError):
            LearnConfig(lambda_grid=())
        with pytest.raises(ValueError):
            LearnConfig(alpha=1.0)
        with pytest.raises(ValueError):
            LearnConfig(t_init=1e-5, t_final=1e-2)
