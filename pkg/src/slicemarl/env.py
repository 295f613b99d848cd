"""Single-cell downlink environment with one URLLC and one eMBB slice.

The per-TTI work (arrivals, round-robin intra-slice scheduling, Shannon-rate
service, HARQ retransmission, latency bookkeeping) lives in numba kernels that
operate on a flat :class:`EnvArrays` bundle, so the training loop in
:mod:`slicemarl.harness` can drive them without leaving compiled code.
:class:`SliceEnv` is the Python-facing wrapper used by tests and tooling.

All randomness for an episode (UE drop, Poisson arrivals, per-packet HARQ
failure counts, fading) is drawn up front by :meth:`SliceEnv.reset` from the
generator it is given, which makes the kernels deterministic functions of
their inputs.
"""

from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import asdict, dataclass, field, fields
from enum import IntEnum

import numpy as np
from numba import njit

from .errors import AllocationError, ConstraintError


class Slice(IntEnum):
    URLLC = 0
    EMBB = 1


# packet lifecycle states
QUEUED, DELIVERED, DROPPED = 0, 1, 2

# rows of EnvArrays.counters
C_ARRIVED, C_DELIVERED, C_DROPPED, C_RETX = 0, 1, 2, 3

# slots of the float parameter vector handed to the kernels
P_RBG_BW, P_RBG_POWER, P_NOISE, P_TTI, P_HARQ, P_MAXQ, P_EDGE, P_BETA_C, P_MEC, P_INTERF = range(10)
N_PARAMS = 10

# slots of the per-TTI KPI vector written by serve_tti_kernel
(
    K_URLLC_DELIVERED,
    K_URLLC_LATENCY_SUM,
    K_EMBB_DELIVERED,
    K_EMBB_DELIVERED_BITS,
    K_EMBB_CAPACITY_BPS,
    K_URLLC_DELIVERED_BITS,
    K_URLLC_RETX,
    K_EMBB_RETX,
) = range(8)
N_KPI = 8



@dataclass(frozen=True)
class NetworkConfig:
    """Physical, traffic and protocol constants of the simulated cell."""

    cell_radius_m: float = 125.0
    bandwidth_hz: float = 20e6
    num_rbgs: int = 13
    tti_s: float = 1e-3
    num_urllc_ue: int = 10
    num_embb_ue: int = 5
    total_tx_power_dbm: float = 40.0
    noise_density_dbm_hz: float = -174.0
    bler: float = 0.1
    harq_rtt_ttis: int = 4
    urllc_packet_bits: int = 1600
    embb_packet_bits: int = 12000
    urllc_load_mbps: float = 2.0
    embb_load_mbps: float = 2.0
    d_tar_s: float = 5e-3
    fading_enabled: bool = True
    edge_delay_enabled: bool = False
    mec_capacity_cycles_s: float = 2e9
    compute_fraction: float = 0.5
    task_cycles: float = 1e6
    # 0 means unbounded per-UE queues
    max_queue_packets: int = 0
    min_distance_m: float = 10.0

    def __post_init__(self):
        _require(self.num_rbgs >= 1, "num_rbgs", "must be >= 1")
        _require(self.num_urllc_ue >= 1, "num_urllc_ue", "must be >= 1")
        _require(self.num_embb_ue >= 1, "num_embb_ue", "must be >= 1")
        for name in (
            "cell_radius_m",
            "bandwidth_hz",
            "tti_s",
            "urllc_packet_bits",
            "embb_packet_bits",
            "d_tar_s",
            "mec_capacity_cycles_s",
            "min_distance_m",
        ):
            _require(_finite(getattr(self, name)) and getattr(self, name) > 0, name, "must be > 0")
        for name in ("total_tx_power_dbm", "noise_density_dbm_hz"):
            _require(_finite(getattr(self, name)), name, "must be finite")
        for name in ("urllc_load_mbps", "embb_load_mbps", "task_cycles"):
            _require(_finite(getattr(self, name)) and getattr(self, name) >= 0, name, "must be >= 0")
        _require(0.0 <= self.bler < 1.0, "bler", "must be in [0, 1)")
        _require(self.harq_rtt_ttis >= 1, "harq_rtt_ttis", "must be >= 1")
        _require(0.0 < self.compute_fraction <= 1.0, "compute_fraction", "must be in (0, 1]")
        _require(self.max_queue_packets >= 0, "max_queue_packets", "must be >= 0 (0 = unbounded)")
        _require(
            self.min_distance_m <= self.cell_radius_m,
            "min_distance_m",
            "must not exceed cell_radius_m",
        )

    @property
    def num_ues(self) -> int:
        return self.num_urllc_ue + self.num_embb_ue

    @property
    def rbg_bandwidth_hz(self) -> float:
        return self.bandwidth_hz / self.num_rbgs

    @property
    def rbg_power_w(self) -> float:
        return dbm_to_watt(self.total_tx_power_dbm) / self.num_rbgs

    @property
    def noise_density_w_hz(self) -> float:
        return dbm_to_watt(self.noise_density_dbm_hz)

    def arrival_rate_per_ue(self, slc: Slice) -> float:
        """Mean packet arrivals per TTI for one UE of ``slc``."""
        if slc == Slice.URLLC:
            load, bits, n = self.urllc_load_mbps, self.urllc_packet_bits, self.num_urllc_ue
        else:
            load, bits, n = self.embb_load_mbps, self.embb_packet_bits, self.num_embb_ue
        return load * 1e6 / bits * self.tti_s / n

    def params(self) -> np.ndarray:
        p = np.zeros(N_PARAMS)
        p[P_RBG_BW] = self.rbg_bandwidth_hz
        p[P_RBG_POWER] = self.rbg_power_w
        p[P_NOISE] = self.rbg_bandwidth_hz * self.noise_density_w_hz
        p[P_TTI] = self.tti_s
        p[P_HARQ] = self.harq_rtt_ttis
        p[P_MAXQ] = self.max_queue_packets
        p[P_EDGE] = 1.0 if self.edge_delay_enabled else 0.0
        p[P_BETA_C] = self.compute_fraction
        p[P_MEC] = self.mec_capacity_cycles_s
        p[P_INTERF] = 0.0  # single cell: no co-channel eNBs
        return p

    def to_dict(self) -> dict:
        return asdict(self)


def _finite(x) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)


def _require(ok: bool, key: str, constraint: str) -> None:
    if not ok:
        raise ConstraintError(f"{key} {constraint}", key=key)


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass
class Packet:
    arrival_tti: int
    size_bits: int
    retx_count: int = 0
    compute_cycles: float = 0.0

    def __post_init__(self):
        if self.size_bits <= 0:
            raise ValueError("size_bits must be > 0")
        if self.retx_count < 0:
            raise ValueError("retx_count must be >= 0")


@dataclass
class UeState:
    id: int
    slice: Slice
    distance_m: float
    queue: list[Packet] = field(default_factory=list)


@dataclass
class RbgAllocation:
    """Per-slice RBG budgets; ``ue_assignment`` is filled in by the scheduler.

    ``ue_assignment`` holds ``(rbg_index, ue_id)`` pairs so that a duplicated
    RBG index is representable and can be rejected.
    """

    urllc_rbgs: int
    embb_rbgs: int
    ue_assignment: tuple[tuple[int, int], ...] = ()

    def validate(self, num_rbgs: int) -> None:
        if self.urllc_rbgs < 0 or self.embb_rbgs < 0:
            raise AllocationError("RBG counts must be non-negative")
        if self.urllc_rbgs + self.embb_rbgs > num_rbgs:
            raise AllocationError(
                f"urllc_rbgs + embb_rbgs = {self.urllc_rbgs + self.embb_rbgs} exceeds {num_rbgs} RBGs"
            )
        seen = set()
        for rbg, _ue in self.ue_assignment:
            if not 0 <= rbg < num_rbgs:
                raise AllocationError(f"RBG index {rbg} out of range")
            if rbg in seen:
                raise AllocationError(f"RBG {rbg} assigned more than once")
            seen.add(rbg)


@dataclass(frozen=True)
class KpiSample:
    tti: int
    embb_avg_throughput_bps: float
    urllc_avg_delay_s: float
    urllc_delivered: int
    embb_delivered: int
    urllc_queued: int
    embb_queued: int
    urllc_dropped: int
    embb_dropped: int
    embb_delivered_bps: float = 0.0


# ---------------------------------------------------------------------------
# channel / rate / edge formulas


@njit(cache=True)
def path_loss_db(distance_m):
    return 128.1 + 37.6 * math.log10(distance_m / 1000.0)


def channel_gain(ue: UeState, rbg: int, rng: np.random.Generator | None, *, fading: bool = True) -> float:
    """Linear power gain of ``ue`` on one RBG: path loss times unit-mean fading.

    Fading is i.i.d. over RBGs and TTIs, so ``rbg`` does not enter the
    distribution; it is kept for call-site symmetry with the rate formula.
    """
    if not ue.distance_m > 0:
        raise ValueError("distance_m must be > 0; path loss is undefined at the origin")
    gain = 10.0 ** (-path_loss_db(float(ue.distance_m)) / 10.0)
    if fading:
        if rng is None:
            raise ValueError("fading requires a random generator")
        gain *= rng.exponential(1.0)
    return gain


@njit(cache=True)
def shannon_rate(gain, rbg_bw, rbg_power, noise_w, interference_w):
    """b_RB * log2(1 + p*g / (b_RB*N0 + I)) in bits/s."""
    return rbg_bw * math.log2(1.0 + rbg_power * gain / (noise_w + interference_w))


def rbg_rate(gain: float, cfg: NetworkConfig, interference_w: float = 0.0) -> float:
    if gain < 0:
        raise ValueError("gain must be >= 0")
    b = cfg.rbg_bandwidth_hz
    return shannon_rate(float(gain), b, cfg.rbg_power_w, b * cfg.noise_density_w_hz, float(interference_w))


def edge_delay(compute_cycles: float, compute_fraction: float, mec_capacity: float) -> float:
    """Time to process ``compute_cycles`` on a ``compute_fraction`` share of the MEC server."""
    if not 0.0 < compute_fraction <= 1.0:
        raise ValueError("compute_fraction must be in (0, 1]")
    if mec_capacity <= 0:
        raise ValueError("mec_capacity must be > 0")
    return compute_cycles / (compute_fraction * mec_capacity)


def sample_arrivals(rng: np.random.Generator, cfg: NetworkConfig, tti: int = 0) -> np.ndarray:
    """Poisson packet counts for every UE (URLLC UEs first) in one TTI."""
    return rng.poisson(_ue_rates(cfg))


def _ue_rates(cfg: NetworkConfig) -> np.ndarray:
    return np.concatenate(
        [
            np.full(cfg.num_urllc_ue, cfg.arrival_rate_per_ue(Slice.URLLC)),
            np.full(cfg.num_embb_ue, cfg.arrival_rate_per_ue(Slice.EMBB)),
        ]
    )


def drop_ues(rng: np.random.Generator, cfg: NetworkConfig) -> np.ndarray:
    """Distances uniform over the annulus [min_distance_m, cell_radius_m]."""
    lo, hi = cfg.min_distance_m**2, cfg.cell_radius_m**2
    return np.sqrt(rng.uniform(lo, hi, size=cfg.num_ues))


# ---------------------------------------------------------------------------
# kernels

EnvArrays = namedtuple(
    "EnvArrays",
    [
        "ue_slice",  # int64[U]
        "path_gain",  # float64[U]
        "slice_ues",  # int64[2, maxn] UE ids per slice
        "slice_n",  # int64[2]
        "arr_count",  # int64[T, U]
        "fading",  # float64[T, R]
        "pkt_off",  # int64[U+1] packet range per UE
        "pkt_arrival",  # int64[P]
        "pkt_size",  # float64[P]
        "pkt_fail",  # int64[P] pre-drawn HARQ failures
        "pkt_cycles",  # float64[P]
        "pkt_remaining",  # float64[P]
        "pkt_ready",  # int64[P]
        "pkt_retx",  # int64[P]
        "pkt_state",  # int64[P]
        "pkt_deliver",  # int64[P]
        "n_arrived",  # int64[U]
        "head",  # int64[U]
        "queued",  # int64[U]
        "rr_next",  # int64[2]
        "counters",  # int64[2, 4]
        "assign",  # int64[R]
        "cand",  # int64[maxn] scratch
    ],
)


@njit(cache=True)
def _ready_packet(a, u, t):
    base = a.pkt_off[u]
    for k in range(base + a.head[u], base + a.n_arrived[u]):
        if a.pkt_state[k] == QUEUED and a.pkt_ready[k] <= t:
            return k
    return -1


@njit(cache=True)
def _advance_head(a, u):
    base = a.pkt_off[u]
    h = a.head[u]
    while h < a.n_arrived[u] and a.pkt_state[base + h] != QUEUED:
        h += 1
    a.head[u] = h


@njit(cache=True)
def serve_tti_kernel(a, p, t, k_urllc, k_embb, out):
    """Advance the cell by TTI ``t`` under per-slice RBG budgets.

    Caller guarantees ``k_urllc + k_embb <= num_rbgs``. ``out`` receives the
    per-TTI KPI vector (see the ``K_*`` slots).
    """
    out[:] = 0.0
    n_ue = a.ue_slice.shape[0]
    max_q = int(p[P_MAXQ])

    for u in range(n_ue):
        s = a.ue_slice[u]
        for _ in range(a.arr_count[t, u]):
            k = a.pkt_off[u] + a.n_arrived[u]
            a.n_arrived[u] += 1
            a.counters[s, C_ARRIVED] += 1
            if max_q > 0 and a.queued[u] >= max_q:
                a.pkt_state[k] = DROPPED
                a.counters[s, C_DROPPED] += 1
            else:
                a.queued[u] += 1
        _advance_head(a, u)

    # intra-slice round robin over UEs holding a transmittable packet
    a.assign[:] = -1
    first = 0
    for s in range(2):
        k = k_urllc if s == 0 else k_embb
        n = a.slice_n[s]
        m = 0
        for j in range(n):
            pos = (a.rr_next[s] + j) % n
            if _ready_packet(a, a.slice_ues[s, pos], t) >= 0:
                a.cand[m] = pos
                m += 1
        if m == 0:
            for j in range(n):
                a.cand[j] = (a.rr_next[s] + j) % n
            m = n
        if m > 0 and k > 0:
            for i in range(k):
                a.assign[first + i] = a.slice_ues[s, a.cand[i % m]]
            a.rr_next[s] = (a.cand[(k - 1) % m] + 1) % n
        first += k

    tti = p[P_TTI]
    harq = int(p[P_HARQ])
    for r in range(first):
        u = a.assign[r]
        if u < 0:
            continue
        s = a.ue_slice[u]
        rate = shannon_rate(a.path_gain[u] * a.fading[t, r], p[P_RBG_BW], p[P_RBG_POWER], p[P_NOISE], p[P_INTERF])
        if s == 1:
            out[K_EMBB_CAPACITY_BPS] += rate
        budget = rate * tti
        while budget > 0.0:
            k = _ready_packet(a, u, t)
            if k < 0:
                break
            tx = min(budget, a.pkt_remaining[k])
            a.pkt_remaining[k] -= tx
            budget -= tx
            if a.pkt_remaining[k] > 0.0:
                break
            if a.pkt_retx[k] < a.pkt_fail[k]:
                # NACK: whole packet goes back to the head after the HARQ RTT
                a.pkt_retx[k] += 1
                a.pkt_remaining[k] = a.pkt_size[k]
                a.pkt_ready[k] = t + harq
                continue
            a.pkt_state[k] = DELIVERED
            a.pkt_deliver[k] = t
            a.queued[u] -= 1
            a.counters[s, C_DELIVERED] += 1
            a.counters[s, C_RETX] += a.pkt_retx[k]
            _advance_head(a, u)
            if s == 0:
                latency = (t - a.pkt_arrival[k] + 1) * tti
                if p[P_EDGE] > 0.0:
                    latency += a.pkt_cycles[k] / (p[P_BETA_C] * p[P_MEC])
                out[K_URLLC_DELIVERED] += 1.0
                out[K_URLLC_LATENCY_SUM] += latency
                out[K_URLLC_DELIVERED_BITS] += a.pkt_size[k]
                out[K_URLLC_RETX] += a.pkt_retx[k]
            else:
                out[K_EMBB_DELIVERED] += 1.0
                out[K_EMBB_DELIVERED_BITS] += a.pkt_size[k]
                out[K_EMBB_RETX] += a.pkt_retx[k]


@njit(cache=True)
def slice_queued(a, s):
    total = 0
    for j in range(a.slice_n[s]):
        total += a.queued[a.slice_ues[s, j]]
    return total


# ---------------------------------------------------------------------------


class SliceEnv:
    """Stateful single-cell environment over a fixed episode horizon.

    >>> env = SliceEnv(NetworkConfig(), horizon_ttis=100)
    >>> env.reset(np.random.default_rng(0))
    >>> kpi = env.serve_tti(RbgAllocation(4, 9))
    """

    def __init__(self, cfg: NetworkConfig, horizon_ttis: int = 2000):
        if horizon_ttis < 1:
            raise ConstraintError("horizon_ttis must be >= 1", key="horizon_ttis")
        self.cfg = cfg
        self.horizon = int(horizon_ttis)
        self.params = cfg.params()
        self.tti = 0
        self.arrays: EnvArrays | None = None
        self.distances: np.ndarray | None = None
        self.last_allocation: RbgAllocation | None = None
        self._out = np.zeros(N_KPI)

    def reset(self, rng: np.random.Generator) -> None:
        """Clear queues and draw a fresh UE drop, traffic and channel realisation."""
        cfg = self.cfg
        T, U, R = self.horizon, cfg.num_ues, cfg.num_rbgs
        distances = drop_ues(rng, cfg)
        arr_count = rng.poisson(_ue_rates(cfg), size=(T, U))
        pkt_fail = rng.geometric(1.0 - cfg.bler, size=int(arr_count.sum())) - 1
        fading = rng.exponential(1.0, size=(T, R)) if cfg.fading_enabled else np.ones((T, R))
        self.load_trace(distances, arr_count, pkt_fail, fading)

    def load_trace(self, distances, arr_count, pkt_fail, fading) -> None:
        """Start an episode from explicit inputs instead of random draws.

        ``arr_count`` is (horizon, num_ues) packet arrivals per TTI,
        ``pkt_fail`` the HARQ failure count of every packet (grouped by UE,
        then arrival order) and ``fading`` the (horizon, num_rbgs) power gains.
        """
        cfg = self.cfg
        T, U, R = self.horizon, cfg.num_ues, cfg.num_rbgs
        distances = np.asarray(distances, dtype=np.float64)
        arr_count = np.asarray(arr_count, dtype=np.int64)
        fading = np.asarray(fading, dtype=np.float64)
        if distances.shape != (U,) or np.any(distances <= 0):
            raise ValueError(f"distances must be {U} positive values")
        if arr_count.shape != (T, U) or np.any(arr_count < 0):
            raise ValueError(f"arr_count must be a non-negative ({T}, {U}) array")
        if fading.shape != (T, R) or np.any(fading < 0):
            raise ValueError(f"fading must be a non-negative ({T}, {R}) array")
        self.distances = distances
        path_gain = 10.0 ** (-(128.1 + 37.6 * np.log10(distances / 1000.0)) / 10.0)
        per_ue = arr_count.sum(axis=0)
        pkt_off = np.zeros(U + 1, dtype=np.int64)
        np.cumsum(per_ue, out=pkt_off[1:])
        P = int(pkt_off[-1])
        pkt_fail = np.asarray(pkt_fail, dtype=np.int64)
        if pkt_fail.shape != (P,) or np.any(pkt_fail < 0):
            raise ValueError(f"pkt_fail must hold {P} non-negative counts")
        # arrival tti of every packet, grouped by UE then time
        pkt_arrival = np.repeat(np.tile(np.arange(T), U), arr_count.T.ravel()).astype(np.int64)

        ue_slice = np.array([0] * cfg.num_urllc_ue + [1] * cfg.num_embb_ue, dtype=np.int64)
        sizes = np.where(ue_slice == 0, cfg.urllc_packet_bits, cfg.embb_packet_bits).astype(np.float64)
        pkt_size = np.repeat(sizes, per_ue)
        maxn = max(cfg.num_urllc_ue, cfg.num_embb_ue)
        slice_ues = np.full((2, maxn), -1, dtype=np.int64)
        slice_ues[0, : cfg.num_urllc_ue] = np.arange(cfg.num_urllc_ue)
        slice_ues[1, : cfg.num_embb_ue] = cfg.num_urllc_ue + np.arange(cfg.num_embb_ue)
        cycles = cfg.task_cycles if cfg.edge_delay_enabled else 0.0

        self.arrays = EnvArrays(
            ue_slice=ue_slice,
            path_gain=path_gain,
            slice_ues=slice_ues,
            slice_n=np.array([cfg.num_urllc_ue, cfg.num_embb_ue], dtype=np.int64),
            arr_count=arr_count,
            fading=fading,
            pkt_off=pkt_off,
            pkt_arrival=pkt_arrival,
            pkt_size=pkt_size,
            pkt_fail=pkt_fail,
            pkt_cycles=np.full(P, cycles),
            pkt_remaining=pkt_size.copy(),
            pkt_ready=np.zeros(P, dtype=np.int64),
            pkt_retx=np.zeros(P, dtype=np.int64),
            pkt_state=np.zeros(P, dtype=np.int64),
            pkt_deliver=np.full(P, -1, dtype=np.int64),
            n_arrived=np.zeros(U, dtype=np.int64),
            head=np.zeros(U, dtype=np.int64),
            queued=np.zeros(U, dtype=np.int64),
            rr_next=np.zeros(2, dtype=np.int64),
            counters=np.zeros((2, 4), dtype=np.int64),
            assign=np.full(R, -1, dtype=np.int64),
            cand=np.zeros(maxn, dtype=np.int64),
        )
        self.tti = 0
        self.last_allocation = None

    def _check_ready(self):
        if self.arrays is None:
            raise RuntimeError("call reset() before stepping the environment")
        if self.tti >= self.horizon:
            raise RuntimeError(f"episode horizon of {self.horizon} TTIs exhausted")

    def serve_tti(self, alloc: RbgAllocation) -> KpiSample:
        self._check_ready()
        alloc.validate(self.cfg.num_rbgs)
        a, out = self.arrays, self._out
        serve_tti_kernel(a, self.params, self.tti, alloc.urllc_rbgs, alloc.embb_rbgs, out)
        assignment = tuple((r, int(u)) for r, u in enumerate(a.assign) if u >= 0)
        self.last_allocation = RbgAllocation(alloc.urllc_rbgs, alloc.embb_rbgs, assignment)
        n_urllc = int(out[K_URLLC_DELIVERED])
        kpi = KpiSample(
            tti=self.tti,
            embb_avg_throughput_bps=out[K_EMBB_CAPACITY_BPS] / self.cfg.num_embb_ue,
            urllc_avg_delay_s=out[K_URLLC_LATENCY_SUM] / n_urllc if n_urllc else 0.0,
            urllc_delivered=n_urllc,
            embb_delivered=int(out[K_EMBB_DELIVERED]),
            urllc_queued=int(slice_queued(a, 0)),
            embb_queued=int(slice_queued(a, 1)),
            urllc_dropped=int(a.counters[0, C_DROPPED]),
            embb_dropped=int(a.counters[1, C_DROPPED]),
            embb_delivered_bps=out[K_EMBB_DELIVERED_BITS] / self.cfg.tti_s / self.cfg.num_embb_ue,
        )
        self.tti += 1
        return kpi

    # -- inspection helpers -------------------------------------------------

    def totals(self, slc: Slice) -> dict[str, int]:
        a = self.arrays
        return {
            "arrived": int(a.counters[slc, C_ARRIVED]),
            "delivered": int(a.counters[slc, C_DELIVERED]),
            "dropped": int(a.counters[slc, C_DROPPED]),
            "queued": int(slice_queued(a, int(slc))),
            "retx": int(a.counters[slc, C_RETX]),
        }

    def delivered_latencies(self, slc: Slice) -> np.ndarray:
        """End-to-end latency (s) of every packet of ``slc`` delivered so far."""
        a = self.arrays
        lo, hi = a.pkt_off[0], a.pkt_off[-1]
        mask = (a.pkt_state[lo:hi] == DELIVERED) & (np.repeat(a.ue_slice, np.diff(a.pkt_off)) == slc)
        lat = (a.pkt_deliver[mask] - a.pkt_arrival[mask] + 1) * self.cfg.tti_s
        if self.cfg.edge_delay_enabled:
            lat = lat + a.pkt_cycles[mask] / (self.cfg.compute_fraction * self.cfg.mec_capacity_cycles_s)
        return lat

    def delivered_retx(self, slc: Slice) -> np.ndarray:
        a = self.arrays
        mask = (a.pkt_state == DELIVERED) & (np.repeat(a.ue_slice, np.diff(a.pkt_off)) == slc)
        return a.pkt_retx[mask]

    def ue_states(self) -> list[UeState]:
        a, cfg = self.arrays, self.cfg
        states = []
        for u in range(cfg.num_ues):
            base = a.pkt_off[u]
            queue = [
                Packet(int(a.pkt_arrival[k]), int(a.pkt_size[k]), int(a.pkt_retx[k]), float(a.pkt_cycles[k]))
                for k in range(base + a.head[u], base + a.n_arrived[u])
                if a.pkt_state[k] == QUEUED
            ]
            states.append(UeState(u, Slice(int(a.ue_slice[u])), float(self.distances[u]), queue))
        return states

    def max_embb_rate(self) -> float:
        """Peak single-RBG rate over the current eMBB UEs, fading ignored."""
        a = self.arrays
        g = a.path_gain[a.ue_slice == 1].max()
        return rbg_rate(float(g), self.cfg)


def network_field_names() -> list[str]:
    return [f.name for f in fields(NetworkConfig)]
