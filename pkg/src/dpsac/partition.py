"""Expected-load based partitioning of PFS bandwidth and burst-buffer capacity."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .model import SystemConfig


@dataclass
class Partition:
    cid: int
    expected_load: float
    share: float
    buffer_capacity: int
    drain_budget: int
    occupancy: float = 0.0
    debt: float = 0.0  # carried bytes beyond capacity, drained before new admissions

    @property
    def stored(self) -> float:
        return self.occupancy + self.debt

    @property
    def spare(self) -> float:
        return max(0.0, self.buffer_capacity - self.occupancy) if self.debt <= 0 else 0.0


def expected_load(members) -> float:
    """Sum of P_i * B_i over (P_i, B_i) pairs."""
    return math.fsum(P * B for P, B in members)


def _as_items(loads):
    if isinstance(loads, dict):
        return list(loads.items())
    return list(enumerate(loads))


def compute_shares(loads, system: SystemConfig) -> list[Partition]:
    """Split S and B proportionally to each cluster's expected load.

    `loads` maps cluster id -> EIO (a plain sequence is indexed 0..K-1).
    Capacities and drain budgets are floored so nothing is over-committed;
    a cluster is never left with a zero drain budget.
    """
    items = _as_items(loads)
    if not items:
        raise ValueError("no clusters to partition")
    teio = math.fsum(e for _, e in items)
    if teio <= 0 or any(e < 0 for _, e in items):
        raise ValueError("expected loads must be non-negative with a positive total")
    if teio >= system.pfs_bandwidth:
        warnings.warn(f"total expected load {teio:.3f} >= PFS bandwidth {system.pfs_bandwidth}")
    parts = []
    for cid, e in items:
        u = e / teio
        parts.append(Partition(cid, e, u,
                               int(math.floor(u * system.buffer_size + 1e-9)),
                               max(1, int(math.floor(u * system.pfs_bandwidth + 1e-9)))))
    # the max(1, .) guard may push the total over B; take it back from the largest
    excess = sum(p.drain_budget for p in parts) - system.pfs_bandwidth
    while excess > 0:
        big = max(parts, key=lambda p: p.drain_budget)
        big.drain_budget -= 1
        excess -= 1
    return parts


def repartition(old_parts, old_clusters, new_clusters, new_loads, system: SystemConfig) -> list[Partition]:
    """Recompute shares for `new_clusters` and carry buffered bytes over.

    old_parts: cid -> Partition; old_clusters: cid -> Cluster (last known
    layout, including clusters whose members all left); new_loads: cid -> EIO.
    A predecessor's bytes go to the new clusters holding its former members,
    split by their expected load, or to the nearest new centroid when none of
    its members survive.
    """
    new_clusters = list(new_clusters)
    parts = compute_shares({c.cid: new_loads[c.cid] for c in new_clusters}, system)
    by_cid = {p.cid: p for p in parts}
    where = {app: c.cid for c in new_clusters for app in c.ids}
    carried = {p.cid: 0.0 for p in parts}

    for cid, old in old_parts.items():
        amount = old.stored
        if amount <= 0:
            continue
        if not new_clusters:
            raise ValueError(f"occupancy {amount} of cluster {cid} has no successor")
        prev = old_clusters.get(cid)
        succ = []
        if prev is not None:
            succ = sorted({where[a] for a in prev.ids if a in where})
        if not succ:
            if prev is None:
                raise ValueError(f"occupancy {amount} of cluster {cid} is unattributable")
            c0 = prev.centroid
            succ = [min(new_clusters, key=lambda c: abs(c.centroid - c0)).cid]
        weights = [by_cid[s].expected_load for s in succ]
        tot = math.fsum(weights)
        if tot <= 0:
            weights, tot = [1.0] * len(succ), float(len(succ))
        for s, w in zip(succ, weights):
            carried[s] += amount * w / tot

    for p in parts:
        amount = carried[p.cid]
        p.occupancy = min(amount, p.buffer_capacity)
        p.debt = amount - p.occupancy
    return parts
