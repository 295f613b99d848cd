"""Tabular learners and the three action-selection schemes.

Every selection routine consumes exactly two uniforms per agent decision
(explore coin, explore pick) whether or not it explores. That keeps random
streams aligned across algorithms and is what makes the priority-dominance
property of :func:`select_pvdn` hold at equal generator state.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .errors import ConstraintError
from .mdp import Observation


@dataclass(frozen=True)
class LearnerConfig:
    alpha: float = 0.5
    gamma: float = 0.2
    epsilon: float = 0.3
    n_step: int = 1
    epsilon_decay: bool = False
    epsilon_min: float = 0.01

    def __post_init__(self):
        if not (isinstance(self.alpha, (int, float)) and 0.0 < self.alpha <= 1.0):
            raise ConstraintError("alpha must be in (0, 1]", key="alpha")
        if not (isinstance(self.gamma, (int, float)) and 0.0 <= self.gamma < 1.0):
            raise ConstraintError("gamma must be in [0, 1)", key="gamma")
        if not (isinstance(self.epsilon, (int, float)) and 0.0 <= self.epsilon <= 1.0):
            raise ConstraintError("epsilon must be in [0, 1]", key="epsilon")
        if not (isinstance(self.n_step, int) and self.n_step >= 1):
            raise ConstraintError("n_step must be an integer >= 1", key="n_step")
        if not (isinstance(self.epsilon_min, (int, float)) and 0.0 <= self.epsilon_min <= 1.0):
            raise ConstraintError("epsilon_min must be in [0, 1]", key="epsilon_min")

    def epsilon_at(self, episode: int, episodes: int) -> float:
        """Exploration rate for ``episode``; linear decay to ``epsilon_min`` when enabled (never upward)."""
        if not self.epsilon_decay or episodes <= 1:
            return self.epsilon
        floor = min(self.epsilon, self.epsilon_min)
        frac = min(1.0, episode / (episodes - 1))
        return self.epsilon + (floor - self.epsilon) * frac


class QTable:
    """Dense action-value table; unvisited entries read as zero."""

    def __init__(self, n_states: int, n_actions: int):
        self.values = np.zeros((n_states, n_actions))
        self.visits = np.zeros((n_states, n_actions), dtype=np.int64)

    @property
    def n_states(self) -> int:
        return self.values.shape[0]

    @property
    def n_actions(self) -> int:
        return self.values.shape[1]

    def __getitem__(self, key) -> float:
        o, a = key
        return float(self.values[o, a])

    def __setitem__(self, key, value: float) -> None:
        if not math.isfinite(value):
            raise ValueError("Q-values must be finite")
        o, a = key
        self.values[o, a] = value

    def copy(self) -> QTable:
        t = QTable(self.n_states, self.n_actions)
        t.values[:] = self.values
        t.visits[:] = self.visits
        return t

    def to_csv(self, path: str | Path, *, nonzero_only: bool = True) -> int:
        """Write ``state,action,value,visits`` rows; returns the row count."""
        rows = 0
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["state", "action", "value", "visits"])
            for o in range(self.n_states):
                for a in range(self.n_actions):
                    v, n = self.values[o, a], self.visits[o, a]
                    if nonzero_only and v == 0.0 and n == 0:
                        continue
                    w.writerow([o, a, repr(float(v)), int(n)])
                    rows += 1
        return rows

    @classmethod
    def from_csv(cls, path: str | Path, n_states: int, n_actions: int) -> QTable:
        t = cls(n_states, n_actions)
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                o, a = int(row["state"]), int(row["action"])
                t.values[o, a] = float(row["value"])
                t.visits[o, a] = int(row["visits"])
        return t


def _index(obs, num_rbgs: int) -> int:
    return obs.index(num_rbgs) if isinstance(obs, Observation) else int(obs)


# ---------------------------------------------------------------------------
# compiled cores, shared with the episode kernel


@njit(cache=True)
def egreedy_core(row, n_allowed, epsilon, u_explore, u_pick):
    if u_explore < epsilon:
        return min(int(u_pick * n_allowed), n_allowed - 1)
    best = 0
    for a in range(1, n_allowed):
        if row[a] > row[best]:
            best = a
    return best


@njit(cache=True)
def joint_greedy_core(row_u, row_m, num_rbgs):
    """Factored argmax of row_u[a1] + row_m[a2] s.t. a1 + a2 <= num_rbgs.

    Ties go to the lexicographically smallest (a1, a2).
    """
    # prefix argmax of the MSMA row, lowest index on ties
    n = num_rbgs + 1
    pre = np.empty(n, dtype=np.int64)
    pre[0] = 0
    for k in range(1, n):
        pre[k] = k if row_m[k] > row_m[pre[k - 1]] else pre[k - 1]
    best_u, best_m = 0, pre[num_rbgs]
    best = row_u[0] + row_m[best_m]
    for a1 in range(1, n):
        a2 = pre[num_rbgs - a1]
        v = row_u[a1] + row_m[a2]
        if v > best:
            best, best_u, best_m = v, a1, a2
    return best_u, best_m


@njit(cache=True)
def pair_from_index(idx, num_rbgs):
    """Inverse of the lexicographic enumeration of the feasible triangle."""
    a1 = 0
    width = num_rbgs + 1
    while idx >= width:
        idx -= width
        a1 += 1
        width -= 1
    return a1, idx


@njit(cache=True)
def row_max(row, n_allowed):
    m = row[0]
    for a in range(1, n_allowed):
        if row[a] > m:
            m = row[a]
    return m


@njit(cache=True)
def q_update_core(values, visits, o, a, target, alpha):
    values[o, a] += alpha * (target - values[o, a])
    visits[o, a] += 1


# ---------------------------------------------------------------------------
# python-facing operations


def q_update(
    table: QTable,
    obs,
    act: int,
    reward: float,
    next_obs,
    cfg: LearnerConfig,
    *,
    next_allowed: int | None = None,
) -> QTable:
    """One-step Q-learning backup; ``next_allowed`` restricts the bootstrap max to actions 0..next_allowed-1."""
    if not math.isfinite(reward):
        raise ValueError("reward must be finite")
    o = _index(obs, table.n_actions - 1)
    o2 = _index(next_obs, table.n_actions - 1)
    n = table.n_actions if next_allowed is None else next_allowed
    target = reward + cfg.gamma * row_max(table.values[o2], n)
    q_update_core(table.values, table.visits, o, int(act), target, cfg.alpha)
    return table


def n_step_target(rewards, bootstrap: float, gamma: float) -> float:
    """Forward-view return r_0 + g r_1 + ... + g^(n-1) r_(n-1) + g^n * bootstrap."""
    g = 0.0
    for k, r in enumerate(rewards):
        g += gamma**k * r
    return g + gamma ** len(rewards) * bootstrap


def select_independent(
    table: QTable,
    obs,
    rng: np.random.Generator,
    cfg: LearnerConfig,
    *,
    n_allowed: int | None = None,
    epsilon: float | None = None,
) -> int:
    """Epsilon-greedy over actions ``0..n_allowed-1`` (default: the whole row)."""
    u = rng.random(2)
    o = _index(obs, table.n_actions - 1)
    n = table.n_actions if n_allowed is None else n_allowed
    eps = cfg.epsilon if epsilon is None else epsilon
    return int(egreedy_core(table.values[o], n, eps, u[0], u[1]))


def select_vdn_joint(
    t_usma: QTable,
    t_msma: QTable,
    o_usma,
    o_msma,
    feasible: list[tuple[int, int]] | None,
    rng: np.random.Generator,
    cfg: LearnerConfig,
    *,
    epsilon: float | None = None,
) -> tuple[int, int]:
    """Joint epsilon-greedy on the summed tables over a feasible pair set.

    ``feasible=None`` means the full triangle ``a1 + a2 <= num_rbgs``, for
    which the factored argmax is used.
    """
    num_rbgs = t_usma.n_actions - 1
    u = rng.random(2)
    eps = cfg.epsilon if epsilon is None else epsilon
    row_u = t_usma.values[_index(o_usma, num_rbgs)]
    row_m = t_msma.values[_index(o_msma, num_rbgs)]
    if feasible is None:
        if u[0] < eps:
            n_pairs = (num_rbgs + 1) * (num_rbgs + 2) // 2
            a1, a2 = pair_from_index(min(int(u[1] * n_pairs), n_pairs - 1), num_rbgs)
        else:
            a1, a2 = joint_greedy_core(row_u, row_m, num_rbgs)
        return int(a1), int(a2)

    if not feasible:
        raise ValueError("feasible joint-action set is empty")
    pairs = sorted(feasible)
    if u[0] < eps:
        return pairs[min(int(u[1] * len(pairs)), len(pairs) - 1)]
    best, best_v = pairs[0], row_u[pairs[0][0]] + row_m[pairs[0][1]]
    for a1, a2 in pairs[1:]:
        v = row_u[a1] + row_m[a2]
        if v > best_v:
            best, best_v = (a1, a2), v
    return best


def select_pvdn(
    t_usma: QTable,
    t_msma: QTable,
    o_usma,
    msma_queue_bin: int,
    msma_last_action: int,
    rng: np.random.Generator,
    cfg: LearnerConfig,
    *,
    epsilon: float | None = None,
) -> tuple[int, int, Observation]:
    """USMA picks first; MSMA then sees that pick and chooses from the leftover RBGs.

    Returns ``(a_usma, a_msma, msma_observation)``.
    """
    num_rbgs = t_usma.n_actions - 1
    eps = cfg.epsilon if epsilon is None else epsilon
    u = rng.random(4)
    a1 = int(egreedy_core(t_usma.values[_index(o_usma, num_rbgs)], num_rbgs + 1, eps, u[0], u[1]))
    o_m = Observation(int(msma_queue_bin), int(msma_last_action), a1)
    a2 = int(egreedy_core(t_msma.values[o_m.index(num_rbgs)], num_rbgs - a1 + 1, eps, u[2], u[3]))
    return a1, a2, o_m


def vdn_joint_q(t_usma: QTable, t_msma: QTable, o1, a1: int, o2, a2: int) -> float:
    num_rbgs = t_usma.n_actions - 1
    return float(t_usma.values[_index(o1, num_rbgs), a1] + t_msma.values[_index(o2, num_rbgs), a2])
