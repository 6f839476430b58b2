"""Virtual queues, the drift-plus-penalty objective, and its two components.

The queue accumulates per-round excess of the balance bound over its cap; the
scheduler minimizes V*tau(t) + sum_n Y_n*(S_n + p_n) each round, split into an
intra-cluster part (pipeline + segment penalty) and an inter-cluster part
(uplink + power penalty).
"""

from __future__ import annotations

from dataclasses import dataclass

from .comm import uplink_delay
from .config import RoundEnvironment, SystemConfig
from .decision import SchedulingDecision
from .pipeline import pipeline_latency


@dataclass(frozen=True)
class QueueState:
    """Per-cluster virtual queue values after round t (all nonnegative)."""

    values: tuple[float, ...]
    round_index: int

    def __post_init__(self):
        if any(v < 0 for v in self.values):
            raise ValueError(f"queue values must be nonnegative, got {self.values}")

    @property
    def total(self) -> float:
        return sum(self.values)


def queue_update(values: tuple[float, ...], gamma_t: float, gamma_max: float) -> tuple[float, ...]:
    """Y <- max(Y + gamma_t - gamma_max, 0), applied to every cluster queue.

    The balance bound is system-wide, so every queue receives the same
    increment.
    """
    return tuple(max(y + gamma_t - gamma_max, 0.0) for y in values)


def cluster_pipeline_delays(decision: SchedulingDecision, cfg: SystemConfig, env: RoundEnvironment) -> list[float]:
    return [pipeline_latency(decision.plans[n], cfg, env, n) for n in range(cfg.n_clusters)]


def cluster_uplink_delays(decision: SchedulingDecision, cfg: SystemConfig, env: RoundEnvironment) -> list[float]:
    """Per-cluster upload delay; math.inf for clusters on a virtual channel."""
    return [uplink_delay(cfg, env, n, decision.assignment, decision.powers_w[n]) for n in range(cfg.n_clusters)]


def round_delay(decision: SchedulingDecision, cfg: SystemConfig, env: RoundEnvironment) -> float:
    """tau(t) = max over clusters of pipeline + upload delay.

    Clusters that skip the upload this round contribute pipeline latency only.
    """
    pipes = cluster_pipeline_delays(decision, cfg, env)
    total = []
    for n in range(cfg.n_clusters):
        if decision.assignment.is_transmitting(n):
            total.append(pipes[n] + uplink_delay(cfg, env, n, decision.assignment, decision.powers_w[n]))
        else:
            total.append(pipes[n])
    return max(total)


def drift_penalty(
    decision: SchedulingDecision,
    cfg: SystemConfig,
    env: RoundEnvironment,
    queues: tuple[float, ...],
    v_factor: float,
) -> float:
    """Drift-plus-penalty objective V*tau(t) + sum_n Y_n*(S_n + p_n)."""
    penalty = sum(
        y * (plan.n_segments + p) for y, plan, p in zip(queues, decision.plans, decision.powers_w)
    )
    return v_factor * round_delay(decision, cfg, env) + penalty


def lambda_aux(
    decision: SchedulingDecision,
    cfg: SystemConfig,
    env: RoundEnvironment,
    queues: tuple[float, ...],
    v_factor: float,
) -> float:
    """Intra-cluster component: V*max_n(pipeline) + sum_n Y_n*S_n."""
    pipes = cluster_pipeline_delays(decision, cfg, env)
    return v_factor * max(pipes) + sum(y * plan.n_segments for y, plan in zip(queues, decision.plans))


def upsilon_aux(
    decision: SchedulingDecision,
    cfg: SystemConfig,
    env: RoundEnvironment,
    queues: tuple[float, ...],
    v_factor: float,
) -> float:
    """Inter-cluster component: V*max over transmitting uplink delays + sum_n Y_n*p_n."""
    ups = [
        uplink_delay(cfg, env, n, decision.assignment, decision.powers_w[n])
        for n in range(cfg.n_clusters)
        if decision.assignment.is_transmitting(n)
    ]
    head = max(ups) if ups else 0.0
    return v_factor * head + sum(y * p for y, p in zip(queues, decision.powers_w))
