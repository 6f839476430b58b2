"""Per-round scheduling decision and its feasibility validation."""

from __future__ import annotations

from dataclasses import dataclass

from .comm import ChannelAssignment, cu_transmit_energy, device_d2d_delay
from .config import RoundEnvironment, SystemConfig
from .errors import InfeasibleError
from .pipeline import SegmentPlan, device_compute_energy


@dataclass(frozen=True)
class SchedulingDecision:
    """One round's control: per-cluster plans, channel matching, head powers."""

    plans: tuple[SegmentPlan, ...]
    assignment: ChannelAssignment
    powers_w: tuple[float, ...]
    round_index: int

    def segment_counts(self) -> tuple[int, ...]:
        return tuple(p.n_segments for p in self.plans)


def device_round_energy(
    plan: SegmentPlan, cfg: SystemConfig, env: RoundEnvironment, n: int, k: int
) -> float:
    """Per-chunk device energy: compute (kappa*cycles*f^2) plus the hop energy.

    This is the per-device form the scheduling constraints use; the reported
    training energy additionally scales with the chunk count.
    """
    dev = cfg.clusters[n].devices[k]
    if plan.delta[k] == 0:
        return 0.0
    b_hat = plan.micro_batch(cfg.model)
    e_comp = device_compute_energy(plan.delta[k], b_hat, dev.flops_per_cycle, env.clock_hz[n][k], dev.kappa, cfg.model)
    e_hop = dev.d2d_power_w * device_d2d_delay(cfg, env, n, k)
    return e_comp + e_hop


def validate_decision(decision: SchedulingDecision, cfg: SystemConfig, env: RoundEnvironment) -> None:
    """Assert the structural and resource constraints of an emitted decision.

    Covers block conservation, segment counts, matching structure, power
    boxes, memory, and the per-round energy budgets for heads and devices.
    Raises InfeasibleError naming the violated constraint.
    """
    n_clusters = cfg.n_clusters
    if len(decision.plans) != n_clusters or len(decision.powers_w) != n_clusters:
        raise InfeasibleError("C1", "decision does not cover every cluster")
    if decision.assignment.n_clusters != n_clusters or decision.assignment.n_channels != cfg.n_channels:
        raise InfeasibleError("C3", "assignment shape does not match the system")
    for n, plan in enumerate(decision.plans):
        plan.validate(cfg.clusters[n], cfg.model)  # C1, C2, C7
        p = decision.powers_w[n]
        if not 0.0 <= p <= cfg.clusters[n].uplink_power_max_w * (1 + 1e-12):
            raise InfeasibleError("C6", f"cluster {n} power {p} outside [0, {cfg.clusters[n].uplink_power_max_w}]")
        e_com = cu_transmit_energy(cfg, env, n, decision.assignment, p)
        if e_com > cfg.clusters[n].uplink_energy_budget_j * (1 + 1e-9):
            raise InfeasibleError("C8", f"cluster {n} upload energy {e_com} J exceeds budget")
        for k in plan.scheduled:
            e_k = device_round_energy(plan, cfg, env, n, k)
            if e_k > cfg.clusters[n].devices[k].energy_budget_j * (1 + 1e-9):
                raise InfeasibleError("C9", f"cluster {n} device {k} energy {e_k} J exceeds budget")
