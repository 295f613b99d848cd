from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import slicemarl.harness as H
from slicemarl.agents import LearnerConfig
from slicemarl.env import NetworkConfig, Slice, SliceEnv, rbg_rate
from slicemarl.errors import ConstraintError, EpisodeError
from slicemarl.harness import (
    D_A_MSMA,
    D_A_USMA,
    Algorithm,
    ExperimentConfig,
    Learners,
    compare,
    contention_grant,
    pct_delta,
    run_episode,
    run_experiment,
    sweep,
)

SMALL = ExperimentConfig(episodes=6, ttis_per_episode=200)


def small(**kw):
    return replace(SMALL, **kw)


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert (cfg.episodes, cfg.ttis_per_episode, cfg.decision_interval_ttis) == (500, 2000, 10)
        assert cfg.algorithm is Algorithm.PVDN
        assert cfg.decisions_per_episode == 200

    @pytest.mark.parametrize(
        "kw,key",
        [
            ({"episodes": 0}, "episodes"),
            ({"decision_interval_ttis": 0}, "decision_interval_ttis"),
            ({"ttis_per_episode": 5}, "ttis_per_episode"),
            ({"omega_usma": -1.0}, "omega_usma"),
        ],
    )
    def test_rejects(self, kw, key):
        with pytest.raises(ConstraintError) as ei:
            ExperimentConfig(**kw)
        assert ei.value.key == key

    def test_unknown_algorithm(self):
        with pytest.raises(ValueError):
            ExperimentConfig(algorithm="qmix")

    def test_with_load(self):
        net = ExperimentConfig().with_load(3.0).network
        assert net.urllc_load_mbps == net.embb_load_mbps == 3.0


class TestContention:
    def test_fits(self):
        assert contention_grant(4, 9, 13, 0.1) == (4, 9)
        assert contention_grant(4, 9, 13, 0.9) == (4, 9)

    def test_overflow(self):
        assert contention_grant(8, 9, 13, 0.1) == (8, 5)
        assert contention_grant(8, 9, 13, 0.9) == (4, 9)

    @given(st.integers(0, 13), st.integers(0, 13), st.floats(0, 1, exclude_max=True))
    def test_feasible_and_never_above_request(self, a, b, coin):
        g_u, g_m = contention_grant(a, b, 13, coin)
        assert 0 <= g_u <= a and 0 <= g_m <= b and g_u + g_m <= 13
        # nothing is wasted when the requests overflow
        assert g_u + g_m == min(13, a + b)


class TestEpisode:
    def test_hand_traced_single_decision(self):
        net = replace(NetworkConfig(), bler=0.0, fading_enabled=False, urllc_load_mbps=0.0, embb_load_mbps=0.0)
        cfg = ExperimentConfig(
            network=net,
            learner=LearnerConfig(epsilon=0.0),
            algorithm=Algorithm.INDEPENDENT,
            episodes=1,
            ttis_per_episode=10,
        )
        env = SliceEnv(net, 10)
        dist = np.full(15, 50.0)
        dist[10:] = [20.0, 40.0, 60.0, 80.0, 100.0]
        arr = np.zeros((10, 15), dtype=np.int64)
        arr[0, 0] = 1
        env.load_trace(dist, arr, np.zeros(1, dtype=np.int64), np.ones((10, 13)))
        learners = Learners.fresh(Algorithm.INDEPENDENT, 13, cfg.learner)
        learners.usma.values[0, 2] = 1.0
        learners.msma.values[0, 5] = 1.0
        rec = {}
        m = run_episode(env, learners, cfg, np.random.default_rng(0), preloaded=True, record=rec)

        # hand trace: grants (2, 5); the packet goes out in TTI 0 -> 1 ms;
        # the 5 eMBB RBGs cover each eMBB UE once per TTI
        g = 10.0 ** (-(128.1 + 37.6 * np.log10(dist / 1000.0)) / 10.0)
        thr = sum(rbg_rate(g[u], net) for u in range(10, 15)) / 5
        b_max = 13 * rbg_rate(g[10], net) / 5
        r_u, r_m = (5e-3 - 1e-3) / 5e-3, thr / b_max
        assert rec["decisions"][0, D_A_USMA] == 2 and rec["decisions"][0, D_A_MSMA] == 5
        assert m.mean_urllc_delay_s == pytest.approx(1e-3, rel=1e-12)
        assert m.mean_embb_throughput_bps == pytest.approx(thr, rel=1e-12)
        assert m.mean_reward == pytest.approx(r_u + r_m, rel=1e-12)
        # terminal backup bootstraps from an all-zero row
        assert learners.usma.values[0, 2] == pytest.approx(1 + 0.5 * (r_u - 1), rel=1e-12)
        assert learners.msma.values[0, 5] == pytest.approx(1 + 0.5 * (r_m - 1), rel=1e-12)
        assert learners.usma.visits.sum() == learners.msma.visits.sum() == 1

    def test_zero_traffic_constant_trace(self):
        net = replace(NetworkConfig(), urllc_load_mbps=0.0, embb_load_mbps=0.0)
        cfg = ExperimentConfig(network=net, learner=LearnerConfig(epsilon=0.0), episodes=3, ttis_per_episode=300)
        for algo in Algorithm:
            env = SliceEnv(net, 300)
            learners = Learners.fresh(algo, 13, cfg.learner)
            rec = {}
            run_episode(env, learners, replace(cfg, algorithm=algo), np.random.default_rng(1), record=rec)
            joint = rec["decisions"][:, H.D_JOINT]
            assert np.all(joint == 1.0), algo

    def test_grants_feasible_and_conserved(self):
        for algo in Algorithm:
            cfg = small(algorithm=algo, episodes=1).with_load(3.0)
            env = SliceEnv(cfg.network, cfg.ttis_per_episode)
            rec = {}
            m = run_episode(env, Learners.fresh(algo, 13, cfg.learner), cfg, np.random.default_rng(3), record=rec)
            d = rec["decisions"]
            assert np.all(d[:, D_A_USMA] + d[:, D_A_MSMA] <= 13)
            assert m.action_histogram.sum(axis=1).tolist() == [20, 20]
            for s in Slice:
                t = env.totals(s)
                assert t["arrived"] == t["delivered"] + t["queued"] + t["dropped"]

    def test_failure_carries_episode_context(self, monkeypatch):
        def boom(*a, **k):
            raise ValueError("kaput")

        monkeypatch.setattr(H, "episode_kernel", boom)
        cfg = small(episodes=1)
        env = SliceEnv(cfg.network, cfg.ttis_per_episode)
        with pytest.raises(EpisodeError, match="episode 7"):
            run_episode(env, Learners.fresh(cfg.algorithm, 13, cfg.learner), cfg, np.random.default_rng(0), 7)

    def test_frozen_tables_replay(self):
        cfg = small(algorithm=Algorithm.VDN)
        trained = Learners.fresh(Algorithm.VDN, 13, cfg.learner)
        run_experiment(cfg, learners=trained)
        greedy = replace(cfg, learner=LearnerConfig(epsilon=0.0))
        out = []
        for _ in range(2):
            lr = Learners(Algorithm.VDN, trained.usma.copy(), trained.msma.copy(), greedy.learner)
            env = SliceEnv(cfg.network, cfg.ttis_per_episode)
            m = run_episode(env, lr, greedy, np.random.default_rng(42))
            out.append((m.mean_reward, m.mean_urllc_delay_s, m.mean_embb_throughput_bps, m.action_histogram.tolist()))
        assert out[0] == out[1]


class TestExperiment:
    def test_one_episode(self):
        assert len(run_experiment(small(episodes=1)).per_episode) == 1

    @pytest.mark.parametrize("algo", list(Algorithm))
    def test_same_seed_identical(self, algo):
        a, b = run_experiment(small(algorithm=algo)), run_experiment(small(algorithm=algo))
        assert a.series("reward").tolist() == b.series("reward").tolist()
        assert a.converged_window_stats == b.converged_window_stats

    def test_seeds_differ(self):
        a, b = run_experiment(small(seed=0)), run_experiment(small(seed=1))
        assert a.series("reward").tolist() != b.series("reward").tolist()

    def test_window(self):
        r = run_experiment(small(episodes=20))
        mean, std = r.converged_window_stats["reward"]
        tail = r.series("reward")[-2:]
        assert mean == pytest.approx(tail.mean()) and std == pytest.approx(tail.std())


class TestSweep:
    def test_product_count_and_keys(self):
        res, fail = sweep(small(episodes=2), [1, 2, 3], list(Algorithm), [0])
        assert len(res) == 9 and not fail
        assert (2.0, "vdn", 0) in res

    def test_single_cell_matches_run(self):
        base = small(episodes=3)
        res, _ = sweep(base, [2.0], ["pvdn"], [4])
        direct = run_experiment(replace(base.with_load(2.0), algorithm="pvdn", seed=4))
        assert res[(2.0, "pvdn", 4)].series("reward").tolist() == direct.series("reward").tolist()

    def test_order_independent(self):
        base = small(episodes=2)
        fwd, _ = sweep(base, [1.0, 3.0], ["vdn", "independent"], [0, 1])
        rev, _ = sweep(base, [3.0, 1.0], ["independent", "vdn"], [1, 0])
        assert fwd.keys() == rev.keys()
        for k in fwd:
            assert fwd[k].series("delay").tolist() == rev[k].series("delay").tolist()

    def test_failures_reported_per_key(self, monkeypatch):
        real = H.run_experiment

        def flaky(cfg, **kw):
            if cfg.seed == 1:
                raise RuntimeError("injected")
            return real(cfg, **kw)

        monkeypatch.setattr(H, "run_experiment", flaky)
        res, fail = sweep(small(episodes=1), [1.0], ["pvdn"], [0, 1, 2])
        assert sorted(res) == [(1.0, "pvdn", 0), (1.0, "pvdn", 2)]
        assert list(fail) == [(1.0, "pvdn", 1)] and "injected" in fail[(1.0, "pvdn", 1)]

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            sweep(SMALL, [], ["pvdn"], [0])

    def test_workers(self):
        a, _ = sweep(small(episodes=2), [1.0], ["vdn"], [0, 1], workers=2)
        b, _ = sweep(small(episodes=2), [1.0], ["vdn"], [0, 1])
        for k in a:
            assert a[k].series("reward").tolist() == b[k].series("reward").tolist()


class TestCompare:
    def test_pct_delta(self):
        assert pct_delta(100.0, 80.0) == pytest.approx(0.25)
        assert pct_delta(5.0, 5.0) == 0.0

    # ratios kept within 1e4 so 1 + delta does not cancel catastrophically
    @given(st.floats(0.01, 100.0), st.floats(0.01, 100.0))
    def test_antisymmetry(self, a, b):
        d_ba = pct_delta(b, a)
        assert pct_delta(a, b) == pytest.approx(-d_ba / (1 + d_ba), rel=1e-9, abs=1e-12)

    def test_identical_inputs(self):
        r = run_experiment(small(episodes=2))
        rep = compare([r, replace(r, config=replace(r.config, algorithm=Algorithm.VDN))], "delay")
        assert rep.deltas[("pvdn", "vdn")] == 0.0
        assert rep.wins[("pvdn", "vdn")] == 0

    def test_wins_and_direction(self):
        res, _ = sweep(small(episodes=3), [2.0], list(Algorithm), [0, 1])
        rep = compare(list(res.values()), "delay")
        assert rep.n_seeds == 2
        for (x, y), w in rep.wins.items():
            assert w + rep.wins[(y, x)] <= 2
        assert any("better in" in line for line in rep.lines())

    def test_mismatched_configs(self):
        a = run_experiment(small(episodes=1))
        b = run_experiment(small(episodes=1).with_load(3.0))
        with pytest.raises(ConstraintError):
            compare([a, b], "reward")
