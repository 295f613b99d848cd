"""Episode loop, experiments, load sweeps and algorithm comparison."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from itertools import product

import numpy as np
from numba import njit

from .agents import (
    LearnerConfig,
    QTable,
    egreedy_core,
    joint_greedy_core,
    pair_from_index,
    q_update_core,
    row_max,
)
from .env import (
    K_EMBB_CAPACITY_BPS,
    K_URLLC_DELIVERED,
    K_URLLC_LATENCY_SUM,
    N_KPI,
    P_TTI,
    NetworkConfig,
    SliceEnv,
    serve_tti_kernel,
    slice_queued,
)
from .errors import ConstraintError, EpisodeError
from .mdp import (
    QUEUE_BIN_EDGES,
    beta_core,
    encode_index,
    msma_reward,
    num_states,
    queue_bin,
    shaped_core,
    throughput_scale,
    usma_reward,
)

log = logging.getLogger(__name__)



class Algorithm(str, Enum):
    INDEPENDENT = "independent"
    VDN = "vdn"
    PVDN = "pvdn"

    @property
    def code(self) -> int:
        return {"independent": 0, "vdn": 1, "pvdn": 2}[self.value]


ALGO_IND, ALGO_VDN, ALGO_PVDN = 0, 1, 2

# per-decision record written by the kernel
(
    D_A_USMA,
    D_A_MSMA,
    D_R_USMA,
    D_R_MSMA,
    D_JOINT,
    D_SHAPED,
    D_BETA,
    D_DELAY,
    D_THROUGHPUT,
    D_URLLC_DELIVERED,
    D_URLLC_LAT_SUM,
) = range(11)
N_DEC = 11


@dataclass(frozen=True)
class ExperimentConfig:
    network: NetworkConfig = field(default_factory=NetworkConfig)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    algorithm: Algorithm = Algorithm.PVDN
    episodes: int = 500
    ttis_per_episode: int = 2000
    seed: int = 0
    decision_interval_ttis: int = 10
    omega_usma: float = 1.0
    omega_msma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        if not (isinstance(self.episodes, int) and self.episodes >= 1):
            raise ConstraintError("episodes must be an integer >= 1", key="episodes")
        if not (isinstance(self.decision_interval_ttis, int) and self.decision_interval_ttis >= 1):
            raise ConstraintError("decision_interval_ttis must be an integer >= 1", key="decision_interval_ttis")
        if not (isinstance(self.ttis_per_episode, int) and self.ttis_per_episode >= self.decision_interval_ttis):
            raise ConstraintError(
                "ttis_per_episode must be an integer >= decision_interval_ttis", key="ttis_per_episode"
            )
        if not isinstance(self.seed, int):
            raise ConstraintError("seed must be an integer", key="seed")
        for name in ("omega_usma", "omega_msma"):
            if not (isinstance(getattr(self, name), (int, float)) and getattr(self, name) >= 0):
                raise ConstraintError(f"{name} must be >= 0", key=name)

    @property
    def decisions_per_episode(self) -> int:
        return -(-self.ttis_per_episode // self.decision_interval_ttis)

    def with_load(self, load_mbps: float) -> ExperimentConfig:
        """Same experiment with both slices offered ``load_mbps``."""
        net = replace(self.network, urllc_load_mbps=load_mbps, embb_load_mbps=load_mbps)
        return replace(self, network=net)


@dataclass
class EpisodeMetrics:
    episode: int
    mean_reward: float
    mean_urllc_delay_s: float
    mean_embb_throughput_bps: float
    action_histogram: np.ndarray | None  # (2, num_rbgs + 1): rows USMA, MSMA; None when read back from CSV
    mean_shaped_reward: float = 0.0
    mean_beta: float = 0.5


@dataclass
class RunResult:
    config: ExperimentConfig
    per_episode: list[EpisodeMetrics]
    converged_window_stats: dict[str, tuple[float, float]]

    def series(self, metric: str) -> np.ndarray:
        attr = METRIC_ATTRS.get(metric, metric)
        return np.array([getattr(m, attr) for m in self.per_episode])


METRIC_ATTRS = {
    "reward": "mean_reward",
    "delay": "mean_urllc_delay_s",
    "throughput": "mean_embb_throughput_bps",
}


@dataclass
class Learners:
    algorithm: Algorithm
    usma: QTable
    msma: QTable
    config: LearnerConfig

    @classmethod
    def fresh(cls, algorithm: Algorithm, num_rbgs: int, config: LearnerConfig) -> Learners:
        s, a = num_states(num_rbgs), num_rbgs + 1
        return cls(Algorithm(algorithm), QTable(s, a), QTable(s, a), config)


# ---------------------------------------------------------------------------
# compiled episode loop


@njit(cache=True)
def contention_grant(a_u, a_m, num_rbgs, coin):
    """Resolve two uncoordinated requests that overflow the carrier.

    Nobody arbitrates between independent learners, so whichever request lands
    first (USMA when ``coin < 0.5``) is served in full and the other slice gets
    what is left.
    """
    if a_u + a_m <= num_rbgs:
        return a_u, a_m
    if coin < 0.5:
        return a_u, num_rbgs - a_u
    return num_rbgs - a_m, a_m


@njit(cache=True)
def _update(values, visits, obs, act, rew, j, d_now, bootstrap, gamma, alpha):
    """Backup decision ``j`` with the return over decisions j..d_now-1 plus a bootstrapped tail."""
    g = 0.0
    disc = 1.0
    for k in range(j, d_now):
        g += disc * rew[k]
        disc *= gamma
    q_update_core(values, visits, obs[j], act[j], g + disc * bootstrap, alpha)


@njit(cache=True)
def _backlog_age(a, t_next, tti):
    """Mean sojourn so far of queued URLLC packets, counted through TTI ``t_next - 1``."""
    total, n = 0.0, 0
    for j in range(a.slice_n[0]):
        u = a.slice_ues[0, j]
        base = a.pkt_off[u]
        for k in range(base + a.head[u], base + a.n_arrived[u]):
            if a.pkt_state[k] == 0:
                total += t_next - a.pkt_arrival[k]
                n += 1
    return total / n * tti


@njit(cache=True)
def episode_kernel(
    a,
    p,
    algo,
    num_rbgs,
    interval,
    n_ttis,
    qu,
    qm,
    vu,
    vm,
    alpha,
    gamma,
    epsilon,
    n_step,
    unif,
    d_tar,
    b_max,
    w_u,
    w_m,
    edges,
    rec,
    hist,
    tti_thr,
):
    """One training episode entirely in compiled code.

    ``unif`` holds five uniforms per decision: explore coin and pick for USMA,
    the same for MSMA, and the contention coin used by independent learners.
    """
    n_act = num_rbgs + 1
    n_dec = rec.shape[0]
    kpi = np.zeros(N_KPI)
    obs_u = np.zeros(n_dec + 1, dtype=np.int64)
    obs_m = np.zeros(n_dec + 1, dtype=np.int64)
    act_u = np.zeros(n_dec, dtype=np.int64)
    act_m = np.zeros(n_dec, dtype=np.int64)
    rew_u = np.zeros(n_dec)
    rew_m = np.zeros(n_dec)
    lim_m = np.full(n_dec + 1, n_act, dtype=np.int64)

    last_u, last_m = 0, 0
    carry_delay = 0.0
    prev_delay, prev_thr = 0.0, 0.0
    t = 0
    for d in range(n_dec):
        bin_u = queue_bin(slice_queued(a, 0), edges)
        bin_m = queue_bin(slice_queued(a, 1), edges)
        obs_u[d] = encode_index(bin_u, last_u, last_m, n_act)
        if d >= n_step:
            _update(qu, vu, obs_u, act_u, rew_u, d - n_step, d, row_max(qu[obs_u[d]], n_act), gamma, alpha)

        if algo == ALGO_PVDN:
            a_u = egreedy_core(qu[obs_u[d]], n_act, epsilon, unif[d, 0], unif[d, 1])
            obs_m[d] = encode_index(bin_m, last_m, a_u, n_act)
            lim_m[d] = n_act - a_u
        else:
            obs_m[d] = encode_index(bin_m, last_m, last_u, n_act)
        if d >= n_step:
            _update(qm, vm, obs_m, act_m, rew_m, d - n_step, d, row_max(qm[obs_m[d]], lim_m[d]), gamma, alpha)

        if algo == ALGO_PVDN:
            a_m = egreedy_core(qm[obs_m[d]], lim_m[d], epsilon, unif[d, 2], unif[d, 3])
        elif algo == ALGO_VDN:
            if unif[d, 0] < epsilon:
                n_pairs = n_act * (n_act + 1) // 2
                a_u, a_m = pair_from_index(min(int(unif[d, 1] * n_pairs), n_pairs - 1), num_rbgs)
            else:
                a_u, a_m = joint_greedy_core(qu[obs_u[d]], qm[obs_m[d]], num_rbgs)
        else:
            a_u = egreedy_core(qu[obs_u[d]], n_act, epsilon, unif[d, 0], unif[d, 1])
            a_m = egreedy_core(qm[obs_m[d]], n_act, epsilon, unif[d, 2], unif[d, 3])
        act_u[d], act_m[d] = a_u, a_m
        # only independent requests can overflow; the other two select feasible pairs
        g_u, g_m = contention_grant(a_u, a_m, num_rbgs, unif[d, 4])
        hist[0, a_u] += 1
        hist[1, a_m] += 1

        lat_sum, lat_n, thr_sum = 0.0, 0.0, 0.0
        steps = 0
        while steps < interval and t < n_ttis:
            serve_tti_kernel(a, p, t, g_u, g_m, kpi)
            lat_sum += kpi[K_URLLC_LATENCY_SUM]
            lat_n += kpi[K_URLLC_DELIVERED]
            thr = kpi[K_EMBB_CAPACITY_BPS] / a.slice_n[1]
            tti_thr[t] = thr
            thr_sum += thr
            t += 1
            steps += 1

        if lat_n > 0:
            delay = lat_sum / lat_n
        elif slice_queued(a, 0) > 0:
            # starved backlog: age of what is waiting, so withholding RBGs is never free
            delay = _backlog_age(a, t, p[P_TTI])
        else:
            delay = carry_delay
        carry_delay = delay
        thr_mean = thr_sum / steps
        r_u = usma_reward(delay, d_tar)
        r_m = msma_reward(thr_mean, b_max)
        if d > 0:
            db_hat = (thr_mean - prev_thr) / b_max
            dd_hat = (delay - prev_delay) / d_tar
        else:
            db_hat, dd_hat = 0.0, 0.0
        beta = beta_core(dd_hat, db_hat)
        shaped = shaped_core(r_u, r_m, db_hat, dd_hat, beta, w_u, w_m)
        joint = r_u + r_m
        prev_delay, prev_thr = delay, thr_mean

        if algo == ALGO_IND:
            rew_u[d], rew_m[d] = r_u, r_m
        elif algo == ALGO_VDN:
            rew_u[d], rew_m[d] = joint, joint
        else:
            rew_u[d], rew_m[d] = shaped, shaped

        rec[d, D_A_USMA] = g_u
        rec[d, D_A_MSMA] = g_m
        rec[d, D_R_USMA] = r_u
        rec[d, D_R_MSMA] = r_m
        rec[d, D_JOINT] = joint
        rec[d, D_SHAPED] = shaped
        rec[d, D_BETA] = beta
        rec[d, D_DELAY] = delay
        rec[d, D_THROUGHPUT] = thr_mean
        rec[d, D_URLLC_DELIVERED] = lat_n
        rec[d, D_URLLC_LAT_SUM] = lat_sum
        last_u, last_m = g_u, g_m

    # truncated episode: bootstrap the outstanding backups from the final state
    bin_u = queue_bin(slice_queued(a, 0), edges)
    bin_m = queue_bin(slice_queued(a, 1), edges)
    obs_u[n_dec] = encode_index(bin_u, last_u, last_m, n_act)
    if algo == ALGO_PVDN:
        greedy_u = egreedy_core(qu[obs_u[n_dec]], n_act, 0.0, 1.0, 0.0)
        obs_m[n_dec] = encode_index(bin_m, last_m, greedy_u, n_act)
        lim_m[n_dec] = n_act - greedy_u
    else:
        obs_m[n_dec] = encode_index(bin_m, last_m, last_u, n_act)
    boot_u = row_max(qu[obs_u[n_dec]], n_act)
    boot_m = row_max(qm[obs_m[n_dec]], lim_m[n_dec])
    for j in range(max(0, n_dec - n_step), n_dec):
        _update(qu, vu, obs_u, act_u, rew_u, j, n_dec, boot_u, gamma, alpha)
        _update(qm, vm, obs_m, act_m, rew_m, j, n_dec, boot_m, gamma, alpha)


# ---------------------------------------------------------------------------


def run_episode(
    env: SliceEnv,
    learners: Learners,
    cfg: ExperimentConfig,
    rng: np.random.Generator,
    episode: int = 0,
    *,
    epsilon: float | None = None,
    record: dict | None = None,
    preloaded: bool = False,
) -> EpisodeMetrics:
    """Train ``learners`` for one episode; queues start empty, tables carry over.

    The generator is split into an environment stream and an agent stream so
    that, for equal seeds, every algorithm sees the same traffic and channel.
    With ``preloaded=True`` the environment keeps the trace it was given via
    :meth:`SliceEnv.load_trace` and only the agent stream is used.
    """
    env_rng, agent_rng = rng.spawn(2)
    net = cfg.network
    if env.horizon != cfg.ttis_per_episode:
        raise ConstraintError("environment horizon must equal ttis_per_episode", key="ttis_per_episode")
    try:
        if not preloaded:
            env.reset(env_rng)
        elif env.arrays is None or env.tti != 0:
            raise RuntimeError("preloaded environment must be freshly loaded")
        n_dec = cfg.decisions_per_episode
        unif = agent_rng.random((n_dec, 5))
        b_max = throughput_scale(env)
        rec = np.zeros((n_dec, N_DEC))
        hist = np.zeros((2, net.num_rbgs + 1), dtype=np.int64)
        tti_thr = np.zeros(cfg.ttis_per_episode)
        eps = learners.config.epsilon if epsilon is None else epsilon
        lc = learners.config
        episode_kernel(
            env.arrays,
            env.params,
            learners.algorithm.code,
            net.num_rbgs,
            cfg.decision_interval_ttis,
            cfg.ttis_per_episode,
            learners.usma.values,
            learners.msma.values,
            learners.usma.visits,
            learners.msma.visits,
            lc.alpha,
            lc.gamma,
            eps,
            lc.n_step,
            unif,
            net.d_tar_s,
            b_max,
            cfg.omega_usma,
            cfg.omega_msma,
            QUEUE_BIN_EDGES,
            rec,
            hist,
            tti_thr,
        )
    except Exception as exc:
        raise EpisodeError(f"episode {episode} failed: {exc}") from exc
    env.tti = cfg.ttis_per_episode

    delivered = rec[:, D_URLLC_DELIVERED].sum()
    if record is not None:
        record["decisions"] = rec
        record["tti_throughput"] = tti_thr
    return EpisodeMetrics(
        episode=episode,
        mean_reward=float(rec[:, D_JOINT].mean()),
        mean_urllc_delay_s=float(rec[:, D_URLLC_LAT_SUM].sum() / delivered) if delivered else 0.0,
        mean_embb_throughput_bps=float(tti_thr.mean()),
        action_histogram=hist,
        mean_shaped_reward=float(rec[:, D_SHAPED].mean()),
        mean_beta=float(rec[:, D_BETA].mean()),
    )


def converged_window(per_episode: list[EpisodeMetrics], frac: float = 0.1) -> slice:
    n = len(per_episode)
    k = max(1, int(round(n * frac)))
    return slice(n - k, n)


def window_stats(per_episode: list[EpisodeMetrics]) -> dict[str, tuple[float, float]]:
    win = per_episode[converged_window(per_episode)]
    stats = {}
    for key, attr in METRIC_ATTRS.items():
        vals = np.array([getattr(m, attr) for m in win])
        stats[key] = (float(vals.mean()), float(vals.std()))
    return stats


def run_experiment(cfg: ExperimentConfig, *, learners: Learners | None = None) -> RunResult:
    """Train from scratch (or from ``learners``) for ``cfg.episodes`` episodes."""
    if not isinstance(cfg, ExperimentConfig):
        raise TypeError("run_experiment expects an ExperimentConfig")
    net = cfg.network
    if learners is None:
        learners = Learners.fresh(cfg.algorithm, net.num_rbgs, cfg.learner)
    env = SliceEnv(net, cfg.ttis_per_episode)
    root = np.random.SeedSequence(cfg.seed)
    per_episode = []
    for e, child in enumerate(root.spawn(cfg.episodes)):
        eps = cfg.learner.epsilon_at(e, cfg.episodes)
        per_episode.append(run_episode(env, learners, cfg, np.random.default_rng(child), e, epsilon=eps))
    log.debug("finished %s seed=%d", cfg.algorithm.value, cfg.seed)
    return RunResult(cfg, per_episode, window_stats(per_episode))


SweepKey = tuple[float, str, int]


def _sweep_cell(cfg: ExperimentConfig):
    try:
        return run_experiment(cfg), None
    except Exception as exc:  # reported per cell, the rest of the grid still runs
        return None, f"{type(exc).__name__}: {exc}"


def sweep(
    base_cfg: ExperimentConfig,
    loads_mbps,
    algorithms,
    seeds,
    *,
    workers: int = 1,
) -> tuple[dict[SweepKey, RunResult], dict[SweepKey, str]]:
    """Run the loads x algorithms x seeds grid.

    Returns ``(results, failures)`` keyed by ``(load_mbps, algorithm, seed)``.
    """
    loads, algos, seeds = list(loads_mbps), [Algorithm(a) for a in algorithms], list(seeds)
    if not (loads and algos and seeds):
        raise ValueError("loads, algorithms and seeds must all be non-empty")
    keys = [(float(l), a.value, int(s)) for l, a, s in product(loads, algos, seeds)]
    cfgs = [replace(base_cfg.with_load(l), algorithm=Algorithm(a), seed=s) for l, a, s in keys]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_sweep_cell, cfgs))
    else:
        outcomes = [_sweep_cell(c) for c in cfgs]
    results, failures = {}, {}
    for key, (res, err) in zip(keys, outcomes):
        if err is None:
            results[key] = res
        else:
            log.error("sweep cell %s failed: %s", key, err)
            failures[key] = err
    return results, failures


def pct_delta(a: float, b: float) -> float:
    """Relative change of ``a`` against baseline ``b``."""
    return (a - b) / b


@dataclass
class ComparisonReport:
    metric: str
    means: dict[str, float]
    deltas: dict[tuple[str, str], float]
    wins: dict[tuple[str, str], int]
    n_seeds: int

    def lines(self) -> list[str]:
        out = [f"metric: {self.metric} (converged window, mean over {self.n_seeds} seed(s))"]
        for algo, m in sorted(self.means.items(), key=lambda kv: kv[1]):
            out.append(f"  {algo:<12s} {m:.9g}")
        for (x, y), d in sorted(self.deltas.items()):
            out.append(f"  {x} vs {y}: {100 * d:+.2f}%  better in {self.wins[(x, y)]}/{self.n_seeds} seeds")
        return out


LOWER_IS_BETTER = {"delay"}


def compare(results: list[RunResult], metric: str) -> ComparisonReport:
    """Converged-window means per algorithm, pairwise % deltas and per-seed win counts."""
    if metric not in METRIC_ATTRS:
        raise ValueError(f"metric must be one of {sorted(METRIC_ATTRS)}")
    if not results:
        raise ValueError("no results to compare")
    ref = _strip(results[0].config)
    for r in results[1:]:
        if _strip(r.config) != ref:
            raise ConstraintError("results were produced with different configurations", key="config")
    by_algo: dict[str, dict[int, float]] = {}
    for r in results:
        by_algo.setdefault(r.config.algorithm.value, {})[r.config.seed] = r.converged_window_stats[metric][0]
    means = {k: float(np.mean(list(v.values()))) for k, v in by_algo.items()}
    deltas, wins = {}, {}
    lower = metric in LOWER_IS_BETTER
    seeds = set.intersection(*(set(v) for v in by_algo.values()))
    for x, y in product(by_algo, by_algo):
        if x == y:
            continue
        deltas[(x, y)] = pct_delta(means[x], means[y]) if means[y] != 0 else float("nan")
        wins[(x, y)] = sum(
            (by_algo[x][s] < by_algo[y][s]) if lower else (by_algo[x][s] > by_algo[y][s]) for s in seeds
        )
    return ComparisonReport(metric, means, deltas, wins, len(seeds))


def _strip(cfg: ExperimentConfig) -> ExperimentConfig:
    return replace(cfg, algorithm=Algorithm.PVDN, seed=0)
