"""Per-tick bandwidth allocation.

`schedule_cluster` is the buffer-aware probabilistic scheduler run inside
each cluster partition; MCIOS is the same routine over one global partition,
and BIOS is a greedy priority walk that ignores buffer state.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .loaddist import LoadDistribution, p_full


def efficiency_now(app, t: float) -> float:
    """Achieved efficiency n_i(t) W_i / (t - r_i); rho_i at the release instant."""
    if t < app.release:
        raise ValueError(f"{app.app_id}: t={t} precedes release {app.release}")
    if t == app.release:
        return app.rho
    return app.instances_done * app.spec.compute_work / (t - app.release)


def slowdown_key(app, t: float) -> float:
    return efficiency_now(app, t) / app.rho


def lost_work_key(app, t: float) -> float:
    return app.nodes * (app.rho - efficiency_now(app, t))


@dataclass(frozen=True)
class StrategyConfig:
    kind: str = "minmax"  # mindilation | maxsyseff | minmax
    gamma: float = 0.5
    dilation_key: Callable = field(default=slowdown_key, compare=False, repr=False)
    efficiency_key: Callable = field(default=lost_work_key, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("mindilation", "maxsyseff", "minmax"):
            raise ValueError(f"unknown strategy {self.kind!r}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")

    @property
    def label(self) -> str:
        return f"minmax:{self.gamma:g}" if self.kind == "minmax" else self.kind


def parse_strategy(text: str) -> StrategyConfig:
    text = text.strip().lower()
    if text in ("mindilation", "maxsyseff"):
        return StrategyConfig(text)
    if text.startswith("minmax"):
        _, _, g = text.partition(":")
        if not g and text[6:].startswith("-"):
            g = text[7:]
        try:
            return StrategyConfig("minmax", float(g) if g else 0.5)
        except ValueError:
            raise ValueError(f"bad strategy {text!r}") from None
    raise ValueError(f"unknown strategy {text!r}")


def priority_order(apps, strategy: StrategyConfig, t: float) -> list:
    apps = list(apps)
    md = sorted(apps, key=lambda a: (strategy.dilation_key(a, t), a.release, a.app_id))
    if strategy.kind == "mindilation":
        return md
    mse = sorted(apps, key=lambda a: (-strategy.efficiency_key(a, t), a.release, a.app_id))
    if strategy.kind == "maxsyseff":
        return mse
    g = strategy.gamma
    r_md = {a.app_id: k for k, a in enumerate(md)}
    r_mse = {a.app_id: k for k, a in enumerate(mse)}
    return sorted(apps, key=lambda a: (g * r_md[a.app_id] + (1 - g) * r_mse[a.app_id], a.release, a.app_id))


@dataclass
class Allocation:
    pfs: dict = field(default_factory=dict)  # app_id -> GB/s straight to the PFS
    buffer: dict = field(default_factory=dict)  # app_id -> GB/s into the burst buffer, priority order
    drain: float = 0.0  # GB/s moved from the buffer to the PFS
    case: str = "idle"
    p_full: float | None = None

    def rate(self, app_id) -> float:
        return self.pfs.get(app_id, 0.0) + self.buffer.get(app_id, 0.0)

    @property
    def pfs_usage(self) -> float:
        return sum(self.pfs.values()) + self.drain

    def key(self) -> tuple:
        return (tuple(sorted(self.pfs.items())), tuple(sorted(self.buffer.items())), self.drain, self.case)


def schedule_cluster(pending, partition, dist: LoadDistribution, strategy: StrategyConfig, t: float,
                     rng, literal_line15: bool = False) -> Allocation:
    """Buffer-aware probabilistic allocation inside one partition.

    `partition` needs drain_budget, buffer_capacity, occupancy and debt.
    """
    budget = partition.drain_budget
    stored = partition.occupancy + partition.debt
    if not pending:
        return Allocation(drain=min(stored, budget))
    order = priority_order(pending, strategy, t)
    demand = sum(a.bandwidth for a in order)
    if demand <= budget:
        return Allocation(pfs={a.app_id: float(a.bandwidth) for a in order},
                          drain=min(stored, budget - demand), case="A")

    L, cap = partition.occupancy, partition.buffer_capacity
    pf = p_full(dist, L, cap, budget)
    acc, m = 0, 0
    while acc + order[m].bandwidth < budget:
        acc += order[m].bandwidth
        m += 1
    selected = list(order[:m])
    for i in range(m, len(order)):
        # rng is drawn for every candidate so the stream does not depend on pf
        if rng.random() < pf ** (i - m) * (1.0 - pf):
            selected.append(order[i])
    sel_load = sum(a.bandwidth for a in selected)
    excess = sel_load - budget
    if literal_line15:
        fits = sel_load - L - budget < cap
    else:
        fits = L + excess <= cap
    if excess >= 0 and fits and partition.debt <= 0:
        alloc = Allocation(case="B-buffer", p_full=pf)
        left = float(budget)
        for a in selected:
            direct = min(float(a.bandwidth), left)
            left -= direct
            if direct > 0:
                alloc.pfs[a.app_id] = direct
            if a.bandwidth - direct > 0:
                alloc.buffer[a.app_id] = a.bandwidth - direct
        return alloc
    alloc = Allocation({a.app_id: float(a.bandwidth) for a in order[:m]}, case="B-truncate", p_full=pf)
    alloc.pfs[order[m].app_id] = float(budget - acc)
    return alloc


def schedule_mcios(pending, partition, dist, strategy, t, rng, literal_line15: bool = False) -> Allocation:
    """Cluster-oblivious baseline: the same routine over one global partition."""
    return schedule_cluster(pending, partition, dist, strategy, t, rng, literal_line15)


def schedule_bios(pending, partition, strategy: StrategyConfig, t: float) -> Allocation:
    """Greedy best-effort walk in priority order; overflow goes to the buffer while it has room."""
    left = float(partition.drain_budget)
    room = partition.debt <= 0 and partition.occupancy < partition.buffer_capacity
    alloc = Allocation(case="bios")
    for a in priority_order(pending, strategy, t):
        direct = min(float(a.bandwidth), left)
        left -= direct
        if direct > 0:
            alloc.pfs[a.app_id] = direct
        if room and a.bandwidth - direct > 0:
            alloc.buffer[a.app_id] = a.bandwidth - direct
    alloc.drain = min(partition.occupancy + partition.debt, left)
    return alloc
