from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slicemarl import io
from slicemarl.cli import main, parse_seeds
from slicemarl.errors import ConfigNotFoundError, ConfigSyntaxError, ConstraintError, CoverageError, UnknownKeyError
from slicemarl.harness import Algorithm, ExperimentConfig, run_experiment, sweep

GOLDEN_HEADER = "run_id,algorithm,seed,load_mbps,episode,mean_reward,mean_urllc_delay_s,mean_embb_throughput_bps"
SMALL = ExperimentConfig(episodes=5, ttis_per_episode=100)


@pytest.fixture(scope="module")
def grid():
    res, _ = sweep(SMALL, [1.0, 2.0, 3.0], list(Algorithm), [0, 1])
    return list(res.values())


class TestConfig:
    def test_empty_document_gives_defaults(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("")
        cfg = io.parse_config(p)
        assert cfg == ExperimentConfig()
        assert (cfg.learner.alpha, cfg.learner.gamma, cfg.learner.epsilon) == (0.5, 0.2, 0.3)
        assert (cfg.network.bandwidth_hz, cfg.network.num_rbgs) == (20e6, 13)

    def test_partial(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("network:\n  urllc_load_mbps: 3\nrun:\n  algorithm: vdn\n  episodes: 10\n")
        cfg = io.parse_config(p)
        assert cfg.network.urllc_load_mbps == 3.0 and isinstance(cfg.network.urllc_load_mbps, float)
        assert cfg.algorithm is Algorithm.VDN and cfg.episodes == 10

    def test_epsilon_out_of_range(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("learner:\n  epsilon: 1.5\n")
        with pytest.raises(ConstraintError) as ei:
            io.parse_config(p)
        assert ei.value.key == "epsilon" and "epsilon" in ei.value.machine_line()

    @pytest.mark.parametrize(
        "text,exc,key",
        [
            ("network:\n  bandwith_hz: 1\n", UnknownKeyError, "network.bandwith_hz"),
            ("extras:\n  a: 1\n", UnknownKeyError, "extras"),
            ("run:\n  episodes: many\n", ConstraintError, "episodes"),
            ("run:\n  episodes: 2.5\n", ConstraintError, "episodes"),
            ("network:\n  fading_enabled: 1\n", ConstraintError, "fading_enabled"),
            ("run:\n  algorithm: qmix\n", ConstraintError, "algorithm"),
            ("network:\n  bler: 1.0\n", ConstraintError, "bler"),
        ],
    )
    def test_rejections(self, tmp_path, text, exc, key):
        p = tmp_path / "c.yaml"
        p.write_text(text)
        with pytest.raises(exc) as ei:
            io.parse_config(p)
        assert ei.value.key == key

    def test_distinct_error_kinds(self, tmp_path):
        codes = set()
        for text in ("a: [", "zzz: 1", "learner:\n  alpha: 0\n"):
            p = tmp_path / "c.yaml"
            p.write_text(text)
            with pytest.raises((ConfigSyntaxError, UnknownKeyError, ConstraintError)) as ei:
                io.parse_config(p)
            codes.add(ei.value.code)
        with pytest.raises(ConfigNotFoundError) as ei:
            io.parse_config(tmp_path / "missing.yaml")
        codes.add(ei.value.code)
        assert codes == {"malformed_config", "unknown_key", "constraint_violation", "missing_file"}

    @settings(max_examples=50, deadline=None)
    @given(
        load=st.floats(0.0, 10.0),
        eps=st.floats(0.0, 1.0),
        algo=st.sampled_from(list(Algorithm)),
        seed=st.integers(0, 10**6),
        fading=st.booleans(),
        episodes=st.integers(1, 1000),
    )
    def test_round_trip(self, load, eps, algo, seed, fading, episodes):
        cfg = ExperimentConfig(
            learner=replace(ExperimentConfig().learner, epsilon=eps),
            algorithm=algo,
            seed=seed,
            episodes=episodes,
        ).with_load(load)
        cfg = replace(cfg, network=replace(cfg.network, fading_enabled=fading))
        text = io.dump_config(cfg)
        back = io.load_config_text(text)
        assert back == cfg
        assert io.dump_config(back) == text

    def test_run_id(self):
        a, b = ExperimentConfig(), ExperimentConfig(seed=1)
        assert io.run_id(a) == io.run_id(ExperimentConfig())
        assert io.run_id(a) != io.run_id(b)
        assert len(io.run_id(a)) == 16


class TestMetrics:
    def test_golden_header_and_rows(self, tmp_path):
        r = run_experiment(SMALL)
        p = tmp_path / "m.csv"
        assert io.write_metrics(r, p) == 5
        lines = p.read_text().splitlines()
        assert lines[0] == GOLDEN_HEADER
        assert len(lines) == 6

    def test_precision(self, tmp_path):
        r = run_experiment(SMALL)
        p = tmp_path / "m.csv"
        io.write_metrics(r, p)
        for line in p.read_text().splitlines()[1:]:
            for field in line.split(",")[5:]:
                digits = field.lstrip("-").split("e")[0].replace(".", "").lstrip("0")
                assert len(digits) >= 9, field

    def test_fmt_float(self):
        assert io.fmt_float(0.5) == "0.50000000000000000"
        for x in (0.1, 1 / 3, 2.5e-3, 3.7e7, 1e-300):
            assert float(io.fmt_float(x)) == x

    def test_500_episode_run(self, tmp_path):
        r = run_experiment(replace(SMALL, episodes=500, ttis_per_episode=20))
        p = tmp_path / "m.csv"
        assert io.write_metrics(r, p) == 500
        assert len(p.read_text().splitlines()) == 501

    def test_same_seed_byte_identical(self, tmp_path):
        for name in ("a.csv", "b.csv"):
            io.write_metrics(run_experiment(SMALL), tmp_path / name)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_read_back_full_precision(self, tmp_path):
        r = run_experiment(SMALL)
        p = tmp_path / "m.csv"
        io.write_metrics(r, p)
        rows = io.read_metrics(p)
        assert [row["mean_reward"] for row in rows] == r.series("reward").tolist()
        assert [row["mean_urllc_delay_s"] for row in rows] == r.series("delay").tolist()
        assert [row["mean_embb_throughput_bps"] for row in rows] == r.series("throughput").tolist()
        assert {row["run_id"] for row in rows} == {io.run_id(r.config)}

    def test_write_read_write_identical(self, tmp_path):
        r = run_experiment(SMALL)
        io.save_run(r, tmp_path / "a")
        (back,) = io.load_results(tmp_path / "a")
        io.save_run(back, tmp_path / "b")
        rid = io.run_id(r.config)
        assert (tmp_path / "a" / f"run-{rid}.csv").read_bytes() == (tmp_path / "b" / f"run-{rid}.csv").read_bytes()
        assert back.converged_window_stats == r.converged_window_stats

    def test_append(self, tmp_path):
        p = tmp_path / "m.csv"
        a, b = run_experiment(SMALL), run_experiment(replace(SMALL, seed=3))
        io.write_metrics(a, p, append=True)
        io.write_metrics(b, p, append=True)
        lines = p.read_text().splitlines()
        assert lines.count(GOLDEN_HEADER) == 1 and len(lines) == 11
        assert {r["run_id"] for r in io.read_metrics(p)} == {io.run_id(a.config), io.run_id(b.config)}

    def test_unwritable_path(self, tmp_path):
        with pytest.raises(OSError, match="nope"):
            io.write_metrics(run_experiment(replace(SMALL, episodes=1)), tmp_path / "nope" / "m.csv")

    def test_bad_header(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("a,b\n1,2\n")
        with pytest.raises(ConfigSyntaxError):
            io.read_metrics(p)


class TestFigures:
    def test_convergence_shape(self, tmp_path):
        res, _ = sweep(replace(SMALL, episodes=500, ttis_per_episode=20), [2.0], list(Algorithm), [0])
        fig = io.emit_figure_data(list(res.values()), "convergence", tmp_path / "f.csv")
        assert len(fig.x) == 500
        assert fig.labels == ["independent", "independent_ma20", "vdn", "vdn_ma20", "pvdn", "pvdn_ma20"]
        lines = (tmp_path / "f.csv").read_text().splitlines()
        assert len(lines) == 501 and lines[0].split(",")[0] == "episode"
        assert all(len(line.split(",")) == 7 for line in lines)

    @pytest.mark.parametrize("which", ["latency_vs_load", "throughput_vs_load"])
    def test_load_figures_shape(self, grid, tmp_path, which):
        fig = io.emit_figure_data(grid, which, tmp_path / "f.csv")
        assert fig.x.tolist() == [1.0, 2.0, 3.0]
        assert fig.labels == ["independent", "vdn", "pvdn"]
        assert all(len(y) == 3 for y in fig.series.values())
        back = io.read_figure(tmp_path / "f.csv")
        assert back.x.tolist() == [1.0, 2.0, 3.0]
        for k, y in fig.series.items():
            assert back.series[k].tolist() == y.tolist()

    def test_values_are_seed_means(self, grid):
        fig = io.emit_figure_data(grid, "latency_vs_load")
        cell = [r for r in grid if r.config.algorithm is Algorithm.VDN and io.load_of(r.config) == 2.0]
        assert fig.series["vdn"][1] == np.mean([r.converged_window_stats["delay"][0] for r in cell])

    def test_missing_algorithms_named(self, grid):
        only = [r for r in grid if r.config.algorithm is Algorithm.PVDN]
        with pytest.raises(CoverageError) as ei:
            io.emit_figure_data(only, "latency_vs_load")
        assert "independent" in str(ei.value) and "vdn" in str(ei.value)

    def test_missing_load_named(self, grid):
        holes = [r for r in grid if not (r.config.algorithm is Algorithm.VDN and io.load_of(r.config) == 3.0)]
        with pytest.raises(CoverageError, match="vdn@3"):
            io.emit_figure_data(holes, "throughput_vs_load")

    def test_moving_average(self):
        y = np.arange(1.0, 31.0)
        ma = io.moving_average(y, 20)
        assert ma[0] == 1.0 and ma[1] == 1.5
        assert ma[19] == np.mean(y[:20]) and ma[29] == np.mean(y[10:30])

    def test_unknown_figure(self, grid):
        with pytest.raises(ValueError):
            io.emit_figure_data(grid, "pie")


class TestCli:
    def test_seed_ranges(self):
        assert parse_seeds("0..9") == list(range(10))
        assert parse_seeds("3,1") == [3, 1]

    def test_end_to_end(self, tmp_path, capsys):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("run:\n  episodes: 4\n  ttis_per_episode: 100\n")
        out = tmp_path / "res"
        assert main(["sweep", "--config", str(cfg), "--loads", "1,2", "--seeds", "0..1", "--out", str(out)]) == 0
        assert len(list(out.glob("run-*.csv"))) == 12
        assert main(["run", "--config", str(cfg), "--seed", "5", "--algo", "vdn", "--out", str(tmp_path / "one")]) == 0
        assert main(["compare", "--in", str(out), "--metric", "delay"]) == 0
        text = capsys.readouterr().out
        assert "load 1 Mbps" in text and "pvdn vs independent" in text
        for which in ("convergence", "latency", "throughput"):
            assert main(["figure", "--in", str(out), "--which", which, "--out", str(tmp_path / f"{which}.csv")]) == 0
        assert len((tmp_path / "latency.csv").read_text().splitlines()) == 3
        assert len((tmp_path / "convergence.csv").read_text().splitlines()) == 5

    @pytest.mark.parametrize(
        "argv,code",
        [
            (["run", "--config", "/nonexistent.yaml", "--out", "x"], "missing_file"),
            (["bogus"], "usage"),
            (["sweep", "--seeds", "a..b", "--out", "x"], "usage"),
            (["sweep", "--algos", "qmix", "--out", "x"], "usage"),
            (["compare", "--in", "/nonexistent", "--metric", "delay"], "missing_file"),
        ],
    )
    def test_errors(self, argv, code, capsys):
        assert main(argv) != 0
        err = capsys.readouterr().err.strip().splitlines()[-1]
        assert err.startswith(f"error code={code}")

    def test_constraint_error_line(self, tmp_path, capsys):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("learner:\n  epsilon: 1.5\n")
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) != 0
        assert "error code=constraint_violation key=epsilon" in capsys.readouterr().err

    def test_figure_coverage_error(self, tmp_path, capsys):
        out = tmp_path / "res"
        cfg = tmp_path / "c.yaml"
        cfg.write_text("run:\n  episodes: 2\n  ttis_per_episode: 50\n")
        main(["sweep", "--config", str(cfg), "--loads", "1", "--algos", "pvdn", "--seeds", "0", "--out", str(out)])
        assert main(["figure", "--in", str(out), "--which", "latency", "--out", str(tmp_path / "f.csv")]) != 0
        assert "error code=missing_coverage" in capsys.readouterr().err
