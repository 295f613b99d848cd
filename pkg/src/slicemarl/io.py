"""Config files, per-episode metric CSVs and figure data.

Configs are YAML documents with three optional sections::

    network: {urllc_load_mbps: 2.0, ...}   # NetworkConfig fields
    learner: {alpha: 0.5, ...}             # LearnerConfig fields
    run: {algorithm: pvdn, episodes: 500, ...}

Anything left out takes its default; unknown keys are rejected.
"""

from __future__ import annotations

import csv
import hashlib
import json
from collections import defaultdict
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
import yaml

from .agents import LearnerConfig
from .env import NetworkConfig
from .errors import ConfigNotFoundError, ConfigSyntaxError, ConstraintError, CoverageError, UnknownKeyError
from .harness import Algorithm, EpisodeMetrics, ExperimentConfig, RunResult, window_stats

METRICS_HEADER = (
    "run_id",
    "algorithm",
    "seed",
    "load_mbps",
    "episode",
    "mean_reward",
    "mean_urllc_delay_s",
    "mean_embb_throughput_bps",
)
ALGORITHMS = tuple(a.value for a in Algorithm)
FIGURES = ("convergence", "latency_vs_load", "throughput_vs_load")
MA_WINDOW = 20

_RUN_FIELDS = ("algorithm", "episodes", "ttis_per_episode", "seed", "decision_interval_ttis", "omega_usma", "omega_msma")


def fmt_float(x: float) -> str:
    """17 significant digits, trailing zeros kept: exact round-trip and a fixed width of precision."""
    return f"{float(x):#.17g}"


# ---------------------------------------------------------------------------
# config


def _coerce(section: str, key: str, value, default):
    """Check ``value`` against the type of the field's default; ints widen to float."""
    where = f"{section}.{key}"
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        if ok:
            value = float(value)
    else:
        ok = isinstance(value, str)
    if not ok:
        raise ConstraintError(f"{where} must be of type {type(default).__name__}, got {value!r}", key=key)
    return value


def _section(doc: dict, name: str, allowed: dict) -> dict:
    raw = doc.get(name) or {}
    if not isinstance(raw, dict):
        raise ConfigSyntaxError(f"section '{name}' must be a mapping")
    out = {}
    for key, value in raw.items():
        if key not in allowed:
            raise UnknownKeyError(f"unknown key '{name}.{key}'", key=f"{name}.{key}")
        out[key] = _coerce(name, key, value, allowed[key])
    return out


def config_from_dict(doc: dict | None) -> ExperimentConfig:
    doc = doc or {}
    if not isinstance(doc, dict):
        raise ConfigSyntaxError("config document must be a mapping with sections network/learner/run")
    for name in doc:
        if name not in ("network", "learner", "run"):
            raise UnknownKeyError(f"unknown section '{name}'", key=str(name))
    base = ExperimentConfig()
    net = _section(doc, "network", asdict(base.network))
    lrn = _section(doc, "learner", asdict(base.learner))
    run_defaults = {k: getattr(base, k) for k in _RUN_FIELDS}
    run_defaults["algorithm"] = base.algorithm.value
    run = _section(doc, "run", run_defaults)
    if "algorithm" in run and run["algorithm"] not in ALGORITHMS:
        raise ConstraintError(f"run.algorithm must be one of {', '.join(ALGORITHMS)}", key="algorithm")
    return ExperimentConfig(network=NetworkConfig(**net), learner=LearnerConfig(**lrn), **run)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    run = {k: getattr(cfg, k) for k in _RUN_FIELDS}
    run["algorithm"] = cfg.algorithm.value
    return {"network": asdict(cfg.network), "learner": asdict(cfg.learner), "run": run}


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def load_config_text(text: str) -> ExperimentConfig:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigSyntaxError(f"malformed YAML: {exc}") from exc
    return config_from_dict(doc)


def parse_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError as exc:
        raise ConfigNotFoundError(f"config file not found: {path}", key=str(path)) from exc
    return load_config_text(text)


def write_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(dump_config(cfg))


def run_id(cfg: ExperimentConfig) -> str:
    """Stable short hash of the full config (the seed is part of it)."""
    blob = json.dumps(config_to_dict(cfg), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_of(cfg: ExperimentConfig) -> float:
    """Offered load that labels a run; sweeps set both slices to the same value."""
    return float(cfg.network.urllc_load_mbps)


# ---------------------------------------------------------------------------
# metrics


def write_metrics(result: RunResult, path: str | Path, *, append: bool = False) -> int:
    """Write one row per episode; returns the number of data rows written."""
    path = Path(path)
    cfg = result.config
    rid = run_id(cfg)
    header = append and path.exists() and path.stat().st_size > 0
    try:
        with open(path, "a" if append else "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if not header:
                w.writerow(METRICS_HEADER)
            for m in result.per_episode:
                w.writerow(
                    [
                        rid,
                        cfg.algorithm.value,
                        cfg.seed,
                        fmt_float(load_of(cfg)),
                        m.episode,
                        fmt_float(m.mean_reward),
                        fmt_float(m.mean_urllc_delay_s),
                        fmt_float(m.mean_embb_throughput_bps),
                    ]
                )
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc
    return len(result.per_episode)


def read_metrics(path: str | Path) -> list[dict]:
    """Parse a metrics CSV back into typed rows."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != METRICS_HEADER:
            raise ConfigSyntaxError(f"{path}: unexpected metrics header {header}")
        rows = []
        for rec in reader:
            row = dict(zip(METRICS_HEADER, rec))
            for k in ("seed", "episode"):
                row[k] = int(row[k])
            for k in ("load_mbps", "mean_reward", "mean_urllc_delay_s", "mean_embb_throughput_bps"):
                row[k] = float(row[k])
            rows.append(row)
    return rows


def save_run(result: RunResult, out_dir: str | Path) -> Path:
    """Write ``run-<id>.csv`` plus the config it came from; returns the CSV path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rid = run_id(result.config)
    write_config(result.config, out_dir / f"run-{rid}.yaml")
    csv_path = out_dir / f"run-{rid}.csv"
    write_metrics(result, csv_path)
    return csv_path


def load_results(in_dir: str | Path) -> list[RunResult]:
    """Rebuild RunResults from every metrics CSV in ``in_dir`` (configs read from sibling YAML files)."""
    in_dir = Path(in_dir)
    if not in_dir.is_dir():
        raise ConfigNotFoundError(f"results directory not found: {in_dir}", key=str(in_dir))
    by_run: dict[str, dict[int, dict]] = defaultdict(dict)
    for p in sorted(in_dir.glob("*.csv")):
        for row in read_metrics(p):
            by_run[row["run_id"]][row["episode"]] = row
    results = []
    for rid, episodes in sorted(by_run.items()):
        cfg_path = in_dir / f"run-{rid}.yaml"
        if cfg_path.exists():
            cfg = parse_config(cfg_path)
        else:
            # bare CSV: recover what the rows carry
            any_row = next(iter(episodes.values()))
            cfg = replace(
                ExperimentConfig(episodes=len(episodes)).with_load(any_row["load_mbps"]),
                algorithm=any_row["algorithm"],
                seed=any_row["seed"],
            )
        per_episode = [
            EpisodeMetrics(
                episode=e,
                mean_reward=r["mean_reward"],
                mean_urllc_delay_s=r["mean_urllc_delay_s"],
                mean_embb_throughput_bps=r["mean_embb_throughput_bps"],
                action_histogram=None,
            )
            for e, r in sorted(episodes.items())
        ]
        results.append(RunResult(cfg, per_episode, window_stats(per_episode)))
    if not results:
        raise CoverageError(f"no metrics CSV files found in {in_dir}", key=str(in_dir))
    return results


# ---------------------------------------------------------------------------
# figure data


@dataclass
class FigureData:
    figure: str
    x_label: str
    x: np.ndarray
    series: dict[str, np.ndarray]

    def __post_init__(self):
        for label, y in self.series.items():
            if len(y) != len(self.x):
                raise ValueError(f"series '{label}' has {len(y)} points for {len(self.x)} x-values")

    @property
    def labels(self) -> list[str]:
        return list(self.series)

    def write(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([self.x_label, *self.series])
            cols = list(self.series.values())
            for i, x in enumerate(self.x):
                xs = str(int(x)) if self.x_label == "episode" else repr(float(x))
                w.writerow([xs, *(fmt_float(c[i]) for c in cols)])


def read_figure(path: str | Path) -> FigureData:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    arr = np.array([[float(v) for v in r] for r in body]).reshape(len(body), len(head))
    figure = "convergence" if head[0] == "episode" else "by_load"
    return FigureData(figure, head[0], arr[:, 0], {h: arr[:, i] for i, h in enumerate(head[1:], start=1)})


def moving_average(y: np.ndarray, window: int = MA_WINDOW) -> np.ndarray:
    """Trailing mean; the first ``window - 1`` points average what is available."""
    y = np.asarray(y, dtype=float)
    c = np.cumsum(np.insert(y, 0, 0.0))
    idx = np.arange(1, len(y) + 1)
    lo = np.maximum(0, idx - window)
    return (c[idx] - c[lo]) / (idx - lo)


def _coverage(results, algorithms, loads) -> dict[tuple[float, str], list[RunResult]]:
    cells: dict[tuple[float, str], list[RunResult]] = defaultdict(list)
    for r in results:
        cells[(load_of(r.config), r.config.algorithm.value)].append(r)
    present = {a for _, a in cells}
    absent_algos = [a for a in algorithms if a not in present]
    if absent_algos:
        raise CoverageError(f"results are missing algorithm(s): {', '.join(absent_algos)}", key=",".join(absent_algos))
    holes = [f"{a}@{l:g}" for l in loads for a in algorithms if (l, a) not in cells]
    if holes:
        raise CoverageError(f"results are missing (algorithm@load): {', '.join(holes)}", key=",".join(holes))
    return cells


def emit_figure_data(
    results: list[RunResult],
    figure: str,
    path: str | Path | None = None,
    *,
    algorithms=ALGORITHMS,
    loads=None,
    load: float | None = None,
) -> FigureData:
    """Tabulate one figure and optionally write it as CSV.

    ``convergence`` averages the per-episode reward over seeds at a single
    load (``load``, default: the median load present) and adds a moving
    average next to each raw series. The load figures take converged-window
    means averaged over seeds.
    """
    if figure not in FIGURES:
        raise ValueError(f"figure must be one of {', '.join(FIGURES)}")
    algorithms = [Algorithm(a).value for a in algorithms]
    present_loads = sorted({load_of(r.config) for r in results})
    if figure == "convergence":
        if load is None:
            if not present_loads:
                raise CoverageError("no results", key="results")
            load = present_loads[(len(present_loads) - 1) // 2]
        cells = _coverage(results, algorithms, [float(load)])
        lengths = {len(r.per_episode) for a in algorithms for r in cells[(float(load), a)]}
        if len(lengths) != 1:
            raise ConstraintError("runs differ in episode count", key="episodes")
        n = lengths.pop()
        series = {}
        for a in algorithms:
            raw = np.mean([r.series("reward") for r in cells[(float(load), a)]], axis=0)
            series[a] = raw
            series[f"{a}_ma{MA_WINDOW}"] = moving_average(raw)
        data = FigureData(figure, "episode", np.arange(n), series)
    else:
        loads = present_loads if loads is None else sorted(float(l) for l in loads)
        cells = _coverage(results, algorithms, loads)
        metric = "delay" if figure == "latency_vs_load" else "throughput"
        series = {
            a: np.array([np.mean([r.converged_window_stats[metric][0] for r in cells[(l, a)]]) for l in loads])
            for a in algorithms
        }
        data = FigureData(figure, "load_mbps", np.array(loads, dtype=float), series)
    if path is not None:
        data.write(path)
    return data
