"""Brute-force reference solvers for tests and acceptance checks.

These deliberately re-derive every quantity inline (rates, latency, energy,
balance bound) instead of importing the production evaluators, so that a bug
in one path cannot hide in the other. They are exhaustive, guarded against
intractable sizes, and never called by the production scheduler.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .config import RoundEnvironment, SystemConfig
from .errors import OracleGuardError

_SEG_GUARD = {"devices": 6, "blocks": 12, "batch": 64}
_ASSIGN_GUARD = 6
_GRID_GUARD = 5_000_000


def _oracle_latency(times: list[float], hops: list[float], m: int) -> float:
    s = len(times)
    if s == 1:
        return m * times[0]
    u = [t + d for t, d in zip(times, hops)]
    j = max(range(s), key=lambda i: (u[i], -i))  # first index attaining the max
    return (s + m - 1) * u[j] - hops[j]


def brute_force_segment_plan(
    cfg: SystemConfig,
    env: RoundEnvironment,
    n: int,
    queues: tuple[float, ...],
    v_factor: float,
    cu_power_w: float,
    enforce_balance: bool = True,
) -> tuple[tuple[int, ...], int, int, float]:
    """Exhaustive (delta, S, m) optimum for one cluster.

    Returns (delta, n_segments, m, objective); ties resolved by smallest
    objective, then smallest S, then lexicographically smallest delta, then
    smallest m. Guarded to small instances.
    """
    cluster = cfg.clusters[n]
    model = cfg.model
    k_dev = cluster.n_devices
    if k_dev > _SEG_GUARD["devices"] or model.n_blocks > _SEG_GUARD["blocks"] or model.batch_items > _SEG_GUARD["batch"]:
        raise OracleGuardError(
            f"segment-plan oracle guard: need K<={_SEG_GUARD['devices']}, L<={_SEG_GUARD['blocks']}, "
            f"b<={_SEG_GUARD['batch']}"
        )

    ln2 = math.log(2.0)
    n0 = cfg.noise_density_w_per_hz
    speeds, hops, hop_energy, kf2phi, mem_cap, e_budget = [], [], [], [], [], []
    for k, dev in enumerate(cluster.devices):
        speeds.append(dev.flops_per_cycle * env.clock_hz[n][k])
        sinr = dev.d2d_power_w * env.d2d_gain[n][k] / (
            env.d2d_interference_w[n] + cluster.d2d_bandwidth_hz * n0
        )
        rate = cluster.d2d_bandwidth_hz * math.log(1.0 + sinr) / ln2
        hop = (model.act_seg_bits + model.grad_seg_bits) / rate
        hops.append(hop)
        hop_energy.append(dev.d2d_power_w * hop)
        kf2phi.append(dev.kappa * env.clock_hz[n][k] ** 2 / dev.flops_per_cycle)
        mem_cap.append(int(dev.mem_budget_bytes // dev.mem_per_block_bytes))
        e_budget.append(dev.energy_budget_j)

    s_cap = k_dev
    if enforce_balance:
        params = cfg.convergence
        phi2 = params.phi_bound**2
        eps = params.c_interference / (cu_power_w * env.uplink_gain[n] + env.uplink_interference_w[n])
        slack = 2.0 * cfg.n_clusters * params.gamma_max / (params.beta * params.eta**2) - eps - phi2
        if slack <= 0:
            s_cap = 0
        else:
            s_cap = min(s_cap, int(math.floor(math.sqrt(model.n_blocks * slack / phi2) * (1 + 1e-12))))

    best: tuple | None = None

    def all_compositions(i: int, rem: int, current: list[int]):
        if i == k_dev:
            if rem == 0:
                yield tuple(current)
            return
        for d in range(0, min(mem_cap[i], rem) + 1):
            current.append(d)
            yield from all_compositions(i + 1, rem - d, current)
            current.pop()

    queue_sum = sum(queues)
    for delta in all_compositions(0, model.n_blocks, []):
        scheduled = [k for k, d in enumerate(delta) if d > 0]
        s = len(scheduled)
        if s == 0 or s > s_cap:
            continue
        for m in range(1, model.batch_items + 1):
            b_hat = -(-model.batch_items // m)
            work = b_hat * model.fwd_flops + model.bwd_flops
            ok = True
            for k in scheduled:
                if delta[k] * work * kf2phi[k] + hop_energy[k] > e_budget[k] * (1 + 1e-12):
                    ok = False
                    break
            if not ok:
                continue
            times = [delta[k] * work / speeds[k] for k in scheduled]
            hop_list = [hops[k] for k in scheduled]
            obj = v_factor * _oracle_latency(times, hop_list, m) + s * queue_sum
            key = (obj, s, delta, m)
            if best is None or key < best:
                best = key
    if best is None:
        raise OracleGuardError("segment-plan oracle: instance is infeasible")
    obj, s, delta, m = best
    return delta, s, m, obj


def brute_force_assignment(cost: np.ndarray) -> tuple[tuple[int | None, ...], float]:
    """Exhaustive minimum-cost matching with virtual-channel exclusions.

    Exactly min(N, J) clusters are placed on distinct real channels; the rest
    sit out at zero cost. Lexicographic tie-break with excluded clusters
    ordered after any real channel.
    """
    cost = np.asarray(cost, dtype=float)
    n_clusters, n_channels = cost.shape
    if n_clusters > _ASSIGN_GUARD or n_channels > _ASSIGN_GUARD:
        raise OracleGuardError(f"assignment oracle guard: need N, J <= {_ASSIGN_GUARD}")
    n_tx = min(n_clusters, n_channels)
    best_key: tuple | None = None
    best_assigned: tuple[int | None, ...] | None = None
    best_total = math.inf
    for chosen in itertools.combinations(range(n_clusters), n_tx):
        for channels in itertools.permutations(range(n_channels), n_tx):
            total = sum(cost[c, j] for c, j in zip(chosen, channels))
            assigned: list[int | None] = [None] * n_clusters
            for c, j in zip(chosen, channels):
                assigned[c] = j
            key = (total, tuple(n_channels if a is None else a for a in assigned))
            if best_key is None or key < best_key:
                best_key = key
                best_assigned = tuple(assigned)
                best_total = total
    assert best_assigned is not None
    return best_assigned, best_total


def grid_search_power(
    bandwidth: float,
    gain: float,
    interference: float,
    noise_density: float,
    payload_bits: float,
    param_bits: float,
    p_max: float,
    e_max: float,
    y_n: float,
    v_factor: float,
    eps_cap: float,
    c_interference: float,
    points: int,
) -> tuple[float, float]:
    """Dense grid argmin of V*payload/(B*f(p)) + Y*p over feasible p.

    Feasibility uses the true nonlinear constraints: upload energy within
    budget and interference error within eps_cap. Returns (p, objective).
    """
    if not 2 <= points <= _GRID_GUARD:
        raise OracleGuardError(f"grid oracle guard: need 2 <= points <= {_GRID_GUARD}")
    p = np.linspace(0.0, p_max, points)
    noise_floor = interference + bandwidth * noise_density
    f = np.log2(1.0 + p * gain / noise_floor)
    with np.errstate(divide="ignore", invalid="ignore"):
        delay = payload_bits / (bandwidth * f)
        energy = p * param_bits / (bandwidth * f)
        eps = c_interference / (p * gain + interference)
        obj = v_factor * delay + y_n * p
    energy[p == 0.0] = 0.0
    feasible = (energy <= e_max * (1 + 1e-12)) & (eps <= eps_cap * (1 + 1e-12)) & np.isfinite(obj)
    if not feasible.any():
        raise OracleGuardError("grid oracle: no feasible power on the grid")
    idx = int(np.flatnonzero(feasible)[np.argmin(obj[feasible])])
    return float(p[idx]), float(obj[idx])
