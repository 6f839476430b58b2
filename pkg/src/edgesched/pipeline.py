"""Cross-device pipeline latency/energy closed forms and an event-driven oracle.

The schedule model: the batch is cut into m chunks (micro-batches); each chunk
traverses the S scheduled stages in order; a stage processes one chunk at a
time and its occupancy per chunk is compute time plus the hop to the next
stage. The closed form prices this as (S+m-1) bottleneck slots minus the
bottleneck's hop (the final upload is not part of the pipeline). With a single
stage there is no hop at all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .comm import device_d2d_delay
from .config import ClusterProfile, ModelSpec, RoundEnvironment, SystemConfig
from .errors import InfeasibleError


def micro_batch_size(batch_items: int, m: int) -> int:
    """Items per chunk: ceil(b/m). Requires 1 <= m <= b."""
    if m < 1:
        raise ValueError(f"micro-batch count must be >= 1, got {m}")
    if m > batch_items:
        raise ValueError(f"micro-batch count {m} exceeds batch size {batch_items}")
    return -(-batch_items // m)


@dataclass(frozen=True)
class SegmentPlan:
    """Block partition delta (one entry per device, zeros allowed) plus chunking."""

    delta: tuple[int, ...]
    m: int

    @property
    def n_segments(self) -> int:
        return sum(1 for d in self.delta if d > 0)

    @property
    def scheduled(self) -> tuple[int, ...]:
        return tuple(k for k, d in enumerate(self.delta) if d > 0)

    def micro_batch(self, model: ModelSpec) -> int:
        return micro_batch_size(model.batch_items, self.m)

    def validate(self, cluster: ClusterProfile, model: ModelSpec) -> None:
        """Structural invariants: block conservation, segment count, memory."""
        if len(self.delta) != cluster.n_devices:
            raise InfeasibleError("C1", f"plan covers {len(self.delta)} devices, cluster has {cluster.n_devices}")
        if any(d < 0 or d != int(d) for d in self.delta):
            raise InfeasibleError("C1", f"block counts must be nonnegative integers, got {self.delta}")
        if sum(self.delta) != model.n_blocks:
            raise InfeasibleError("C1", f"blocks assigned {sum(self.delta)} != {model.n_blocks}")
        s = self.n_segments
        if not 1 <= s <= cluster.n_devices:
            raise InfeasibleError("C2", f"segment count {s} outside [1, {cluster.n_devices}]")
        if not 1 <= self.m <= model.batch_items:
            raise InfeasibleError("C1", f"micro-batch count {self.m} outside [1, {model.batch_items}]")
        for k, d in enumerate(self.delta):
            dev = cluster.devices[k]
            if d * dev.mem_per_block_bytes > dev.mem_budget_bytes * (1 + 1e-12):
                raise InfeasibleError(
                    "C7", f"device {k}: {d} blocks need {d * dev.mem_per_block_bytes} B > {dev.mem_budget_bytes} B"
                )


def stage_time(blocks: int, micro_batch: int, flops_per_sec: float, model: ModelSpec) -> float:
    """Per-chunk compute time of one stage: delta*(b_hat*o_fwd + o_bwd)/speed."""
    if blocks == 0:
        return 0.0
    return blocks * (micro_batch * model.fwd_flops + model.bwd_flops) / flops_per_sec


def stage_profile(
    plan: SegmentPlan, cfg: SystemConfig, env: RoundEnvironment, n: int
) -> tuple[list[int], list[float], list[float]]:
    """Scheduled device indices with their per-chunk compute and hop times."""
    cluster = cfg.clusters[n]
    b_hat = plan.micro_batch(cfg.model)
    devs, times, hops = [], [], []
    for k in plan.scheduled:
        speed = env.compute_speed(cluster, n, k)
        devs.append(k)
        times.append(stage_time(plan.delta[k], b_hat, speed, cfg.model))
        hops.append(device_d2d_delay(cfg, env, n, k))
    return devs, times, hops


def _bottleneck(stage_times: Sequence[float], hop_times: Sequence[float]) -> tuple[int, float]:
    """Index (first among ties) and value of the max stage+hop occupancy."""
    best_i, best_u = 0, -math.inf
    for i, (t, d) in enumerate(zip(stage_times, hop_times)):
        u = t + d
        if u > best_u:
            best_i, best_u = i, u
    return best_i, best_u


def pipeline_latency_from_times(stage_times: Sequence[float], hop_times: Sequence[float], m: int) -> float:
    """Closed form (S+m-1)*max(t_k + d_k) - d at the bottleneck; S=1 has no hop."""
    s = len(stage_times)
    if s == 0:
        raise InfeasibleError("C2", "empty pipeline plan")
    if len(hop_times) != s:
        raise ValueError("stage_times and hop_times must have equal length")
    if m < 1:
        raise ValueError(f"chunk count must be >= 1, got {m}")
    if s == 1:
        return m * stage_times[0]
    j, u = _bottleneck(stage_times, hop_times)
    return (s + m - 1) * u - hop_times[j]


def pipeline_latency(plan: SegmentPlan, cfg: SystemConfig, env: RoundEnvironment, n: int) -> float:
    """Closed-form pipeline latency of cluster n under the given plan."""
    _, times, hops = stage_profile(plan, cfg, env, n)
    return pipeline_latency_from_times(times, hops, plan.m)


def device_compute_energy(
    blocks: int, micro_batch: int, flops_per_cycle: float, clock_hz: float, kappa: float, model: ModelSpec
) -> float:
    """Per-chunk compute energy kappa * cycles * f^2, cycles = work/phi."""
    if blocks == 0:
        return 0.0
    work = blocks * (micro_batch * model.fwd_flops + model.bwd_flops)
    return kappa * (work / flops_per_cycle) * clock_hz**2


def pipeline_energy(plan: SegmentPlan, cfg: SystemConfig, env: RoundEnvironment, n: int) -> float:
    """Training energy 2m * sum over scheduled devices of (compute + hop energy)."""
    cluster = cfg.clusters[n]
    b_hat = plan.micro_batch(cfg.model)
    total = 0.0
    for k in plan.scheduled:
        dev = cluster.devices[k]
        e_comp = device_compute_energy(
            plan.delta[k], b_hat, dev.flops_per_cycle, env.clock_hz[n][k], dev.kappa, cfg.model
        )
        e_hop = dev.d2d_power_w * device_d2d_delay(cfg, env, n, k)
        total += e_comp + e_hop
    return 2 * plan.m * total


def event_sim_makespan(stage_times: Sequence[float], hop_times: Sequence[float], m: int) -> float:
    """Event-driven makespan oracle for the chunked pipeline.

    Simulates the occupancy recursion chunk by chunk: a chunk enters stage k
    when both the stage is free and the chunk has left stage k-1; occupancy is
    compute plus hop. Returns the instant the last chunk finishes computing at
    the last stage (its hop leaves the pipeline). Single-stage pipelines have
    no hops.
    """
    s = len(stage_times)
    if s == 0:
        raise ValueError("empty pipeline")
    if len(hop_times) != s:
        raise ValueError("stage_times and hop_times must have equal length")
    if m < 1:
        raise ValueError(f"chunk count must be >= 1, got {m}")
    if s == 1:
        return m * stage_times[0]
    occupancy = [t + d for t, d in zip(stage_times, hop_times)]
    free_at = [0.0] * s  # when each stage finishes its current chunk
    done = 0.0
    for _ in range(m):
        leave_prev = 0.0
        for k in range(s):
            start = max(free_at[k], leave_prev)
            end = start + occupancy[k]
            free_at[k] = end
            leave_prev = end
        done = free_at[s - 1] - hop_times[s - 1]
    return done
