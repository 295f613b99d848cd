"""Observations, per-slice rewards and the cooperative shaped reward."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from numba import njit

from .env import NetworkConfig, Slice, SliceEnv, slice_queued


class Agent(IntEnum):
    USMA = 0  # URLLC slice manager
    MSMA = 1  # eMBB slice manager


# inclusive upper edges of queue bins 0..3; anything larger is bin 4
QUEUE_BIN_EDGES = np.array([0, 2, 5, 10], dtype=np.int64)


@njit(cache=True)
def queue_bin(n_queued, edges):
    for i in range(edges.shape[0]):
        if n_queued <= edges[i]:
            return i
    return edges.shape[0]


@njit(cache=True)
def encode_index(qbin, own, peer, n_actions):
    return (qbin * n_actions + own) * n_actions + peer


def num_states(num_rbgs: int, n_bins: int = len(QUEUE_BIN_EDGES) + 1) -> int:
    return n_bins * (num_rbgs + 1) ** 2


@dataclass(frozen=True)
class Observation:
    own_queue_bin: int
    own_last_action: int
    peer_last_action: int

    def index(self, num_rbgs: int) -> int:
        n = num_rbgs + 1
        if not (0 <= self.own_last_action < n and 0 <= self.peer_last_action < n):
            raise ValueError(f"action fields must lie in 0..{num_rbgs}")
        if not 0 <= self.own_queue_bin <= len(QUEUE_BIN_EDGES):
            raise ValueError("queue bin out of range")
        return int(encode_index(self.own_queue_bin, self.own_last_action, self.peer_last_action, n))

    @classmethod
    def from_index(cls, idx: int, num_rbgs: int) -> Observation:
        n = num_rbgs + 1
        rest, peer = divmod(int(idx), n)
        qbin, own = divmod(rest, n)
        return cls(qbin, own, peer)


def encode_observation(
    env: SliceEnv,
    agent: Agent,
    last_actions: tuple[int, int],
    peer_action: int | None = None,
) -> Observation:
    """Observation of ``agent`` from its own slice backlog and the last actions.

    ``last_actions`` is ``(usma, msma)``. ``peer_action`` overrides the peer
    field; prioritized selection passes USMA's fresh choice here for MSMA.
    """
    slc = Slice.URLLC if agent == Agent.USMA else Slice.EMBB
    queued = slice_queued(env.arrays, int(slc)) if env.arrays is not None else 0
    own = last_actions[int(agent)]
    peer = last_actions[1 - int(agent)] if peer_action is None else peer_action
    return Observation(int(queue_bin(queued, QUEUE_BIN_EDGES)), int(own), int(peer))


# ---------------------------------------------------------------------------
# rewards


@njit(cache=True)
def usma_reward(delay_s, d_tar_s):
    r = (d_tar_s - delay_s) / d_tar_s
    return min(1.0, max(-1.0, r))


@njit(cache=True)
def msma_reward(throughput_bps, b_max):
    return min(1.0, max(0.0, throughput_bps / b_max))


def reward_usma(kpi, cfg: NetworkConfig) -> float:
    return float(usma_reward(float(kpi.urllc_avg_delay_s), cfg.d_tar_s))


def reward_msma(kpi, b_max: float) -> float:
    """Throughput reward normalised by ``b_max`` (see :func:`throughput_scale`)."""
    if b_max <= 0:
        raise ValueError("b_max must be > 0")
    return float(msma_reward(float(kpi.embb_avg_throughput_bps), b_max))


def throughput_scale(env: SliceEnv) -> float:
    """Peak of the per-UE eMBB throughput KPI: every RBG at the best UE's fading-free rate, averaged over the slice."""
    return env.cfg.num_rbgs * env.max_embb_rate() / env.cfg.num_embb_ue


@njit(cache=True)
def beta_core(dd_hat, db_hat):
    num = abs(dd_hat)
    den = num + abs(db_hat)
    if den == 0.0:
        return 0.5
    return num / den


@njit(cache=True)
def shaped_core(r_usma, r_msma, db_hat, dd_hat, beta, w_usma, w_msma):
    return w_usma * (r_usma - beta * db_hat) + w_msma * (r_msma - (1.0 - beta) * dd_hat)


def adaptive_beta(delta_d: float, delta_b: float, d_scale: float = 1.0, b_scale: float = 1.0) -> float:
    """Latency share of the combined (normalised) KPI movement, in [0, 1].

    Both deltas are divided by their scales first; 0/0 resolves to 0.5.
    """
    return float(beta_core(delta_d / d_scale, delta_b / b_scale))


@dataclass(frozen=True)
class RewardBundle:
    r_usma: float
    r_msma: float
    delta_b: float
    delta_d: float
    beta: float
    omega_usma: float
    omega_msma: float
    shaped: float
    joint: float


def shaped_reward(
    r_usma: float,
    r_msma: float,
    delta_b: float,
    delta_d: float,
    *,
    b_max: float = 1.0,
    d_tar: float = 1.0,
    omega_usma: float = 1.0,
    omega_msma: float = 1.0,
    beta: float | None = None,
) -> RewardBundle:
    """Cooperative reward: each slice's reward minus a beta-weighted penalty on the other slice's KPI change.

    ``delta_b`` (bits/s) and ``delta_d`` (s) are raw; they are normalised by
    ``b_max`` and ``d_tar`` before use. Pass the defaults of 1.0 when the
    deltas are already dimensionless.
    """
    db_hat, dd_hat = delta_b / b_max, delta_d / d_tar
    if beta is None:
        beta = float(beta_core(dd_hat, db_hat))
    shaped = float(shaped_core(r_usma, r_msma, db_hat, dd_hat, beta, omega_usma, omega_msma))
    return RewardBundle(
        r_usma=r_usma,
        r_msma=r_msma,
        delta_b=delta_b,
        delta_d=delta_d,
        beta=beta,
        omega_usma=omega_usma,
        omega_msma=omega_msma,
        shaped=shaped,
        joint=r_usma + r_msma,
    )


def feasible_joint_actions(num_rbgs: int) -> list[tuple[int, int]]:
    """All (usma, msma) RBG requests whose sum fits the carrier, lexicographically ordered."""
    return [(a1, a2) for a1 in range(num_rbgs + 1) for a2 in range(num_rbgs + 1 - a1)]
