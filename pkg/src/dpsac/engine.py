"""Deterministic discrete-event simulation of periodic applications sharing a
PFS and a partitioned burst buffer."""
from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .cluster1d import (DEFAULT_MAX_CLUSTERS, BatchAction, Cluster, batch_policy, cluster_batch,
                        merge_clusters)
from .loaddist import add_app, load_distribution
from .model import ApplicationRuntime, ScenarioSpec, SystemConfig
from .partition import Partition, expected_load, repartition
from .scheduler import StrategyConfig, efficiency_now, schedule_bios, schedule_cluster
from .updater import CidAllocator, make_updater, remove_application

log = logging.getLogger(__name__)

SCHEDULERS = ("dpsac", "mcios", "bios")

# event priorities at equal timestamps
ARRIVAL, PHASE, TICK = 0, 1, 2

EPS = 1e-9


class SimulationError(RuntimeError):
    pass


@dataclass
class AppResult:
    app_id: str
    name: str
    nodes: int
    rho: float
    rho_tilde: float
    dilation: float
    release: float
    finish: float


@dataclass
class MetricsReport:
    system_efficiency: float
    dilation: float
    ceiling: float  # (1/N) sum beta_i rho_i
    apps: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    audit: dict = field(default_factory=dict)


def compute_metrics(apps, system: SystemConfig | None = None) -> MetricsReport:
    """Processor-weighted mean efficiency and worst-case slowdown at each d_i."""
    apps = list(apps)
    if not apps:
        raise ValueError("no applications to report on")
    results = []
    for a in apps:
        if a.finish is None or a.instances_done < a.spec.num_instances:
            raise ValueError(f"{a.app_id} has not finished")
        rt = efficiency_now(a, a.finish)
        results.append(AppResult(a.app_id, a.spec.name, a.nodes, a.rho, rt,
                                 a.rho / rt if rt > 0 else math.inf, a.release, a.finish))
    total_nodes = sum(r.nodes for r in results)
    eff = math.fsum(r.nodes * r.rho_tilde for r in results) / total_nodes
    ceiling = math.fsum(r.nodes * r.rho for r in results) / total_nodes
    return MetricsReport(eff, max(r.dilation for r in results), ceiling, results)


@dataclass
class RunConfig:
    scheduler: str = "dpsac"
    updater: str = "st"
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    seed: int = 1
    max_clusters: int = DEFAULT_MAX_CLUSTERS
    threshold: float = 0.1
    bins: int = 20
    literal_line15: bool = False
    horizon_factor: float = 10.0
    record_trace: bool = False

    def __post_init__(self):
        if self.scheduler not in SCHEDULERS:
            raise ValueError(f"unknown scheduler {self.scheduler!r}")
        if self.max_clusters < 1:
            raise ValueError("max_clusters must be >= 1")


class Simulator:
    """One run. Not thread-safe; build one per run."""

    def __init__(self, scenario: ScenarioSpec, config: RunConfig | None = None):
        self.scenario = scenario
        self.cfg = config or RunConfig()
        self.system = scenario.system
        sched_ss, upd_ss = np.random.SeedSequence(self.cfg.seed).spawn(2)
        self.rng = np.random.default_rng(sched_ss)
        self.upd_rng = np.random.default_rng(upd_ss)
        self.next_cid = CidAllocator()
        self.updater = make_updater(self.cfg.updater, max_clusters=self.cfg.max_clusters,
                                    threshold=self.cfg.threshold, bins=self.cfg.bins,
                                    next_cid=self.next_cid)
        self.clustered = self.cfg.scheduler == "dpsac"

        self.clock = 0.0
        self.apps: dict[str, ApplicationRuntime] = {}
        self.clusters: list[Cluster] = []
        self.dists = {}
        self.parts: dict[int, Partition] = {}
        self.ghosts: dict[int, tuple] = {}  # cid -> (Partition, last Cluster, time unit)
        self.home: dict[str, int] = {}
        self.tick_token: dict[int, int] = {}
        self.commit_end: dict[int, float] = {}
        self.windows: list = []  # (end, pfs usage) of committed ticks

        self._queue = []
        self._seq = 0
        self._pending_arrivals = 0
        self.trace = []
        self.repartitions = 0
        self.splits = 0
        self.audit = dict(max_byte_drift=0.0, min_occupancy=0.0, max_over_capacity=-math.inf,
                          max_cluster_overuse=-math.inf, max_global_overuse=-math.inf,
                          max_app_overrate=-math.inf, buffer_in=0.0, buffer_out=0.0,
                          buffer_drift=0.0, ticks=0)
        total = sum(s.num_instances * s.period for s in scenario.batch_apps())
        total += sum(s.num_instances * s.period for _, s in scenario.joins())
        self.horizon = self.cfg.horizon_factor * total

    # -- queue ------------------------------------------------------------
    def _push(self, t, prio, kind, payload):
        heapq.heappush(self._queue, (t, prio, self._seq, kind, payload))
        self._seq += 1

    # -- run --------------------------------------------------------------
    def run(self) -> MetricsReport:
        batch = [(f"{s.name}#{k}", s) for k, s in enumerate(self.scenario.batch_apps())]
        self._push(0.0, ARRIVAL, "arrive", batch)
        self._pending_arrivals += 1
        counts = {}
        for t, spec in self.scenario.joins():
            n = counts[spec.name] = counts.get(spec.name, 0) + 1
            self._push(t, ARRIVAL, "arrive", [(f"{spec.name}@join{n}", spec)])
            self._pending_arrivals += 1

        while self._queue:
            t, _, _, kind, payload = heapq.heappop(self._queue)
            if t > self.horizon:
                unfinished = sorted(a for a, r in self.apps.items() if not r.done)
                raise SimulationError(f"horizon {self.horizon:.0f}s exceeded; unfinished: {unfinished}")
            self.clock = t
            if kind == "arrive":
                self._pending_arrivals -= 1
                self._on_arrival(payload)
            elif kind == "phase":
                self._on_phase(payload)
            else:
                self._on_tick(*payload)
            if self._pending_arrivals == 0 and all(a.done for a in self.apps.values()):
                break

        if not all(a.done for a in self.apps.values()):
            raise SimulationError("event queue drained with unfinished applications")
        return self._report()

    def _report(self) -> MetricsReport:
        rep = compute_metrics(self.apps.values(), self.system)
        for a in self.apps.values():
            drift = abs(a.bytes_pfs + a.bytes_buffer - a.spec.num_instances * a.spec.io_volume)
            self.audit["max_byte_drift"] = max(self.audit["max_byte_drift"], drift)
        stored = sum(p.stored for p in self.parts.values()) + sum(g[0].stored for g in self.ghosts.values())
        self.audit["buffer_drift"] = abs(self.audit["buffer_in"] - self.audit["buffer_out"] - stored)
        rep.audit = dict(self.audit, repartitions=self.repartitions, splits=self.splits,
                         final_clusters=len(self.clusters))
        rep.meta = dict(scenario=self.scenario.name, scheduler=self.cfg.scheduler, updater=self.cfg.updater,
                        strategy=self.cfg.strategy.label, gamma=self.cfg.strategy.gamma, seed=self.cfg.seed)
        return rep

    # -- membership -------------------------------------------------------
    def _load(self, app_id):
        s = self.apps[app_id].spec
        return (s.bandwidth, s.io_probability)

    def _fresh_dist(self, cluster: Cluster):
        members = sorted(cluster.members, key=lambda m: (m[1], m[0]))
        return load_distribution(self._load(a) for a, _ in members)

    def _cluster(self, cid) -> Cluster | None:
        for c in self.clusters:
            if c.cid == cid:
                return c
        return None

    def _unit(self, cid) -> float:
        c = self._cluster(cid)
        if c is not None:
            return c.time_unit
        return self.ghosts[cid][2]

    def _set_layout(self, clusters):
        """Adopt a new cluster layout and recompute partitions."""
        old_parts = dict(self.parts)
        old_clusters = {c.cid: c for c in self.clusters}
        for cid, (p, c, _) in self.ghosts.items():
            old_parts[cid] = p
            old_clusters[cid] = c
        loads = {c.cid: expected_load((self.apps[a].spec.io_probability, self.apps[a].bandwidth)
                                      for a in c.ids) for c in clusters}
        parts = repartition(old_parts, old_clusters, clusters, loads, self.system)
        block = max([self.clock] + list(self.commit_end.values()))
        self.clusters = list(clusters)
        self.parts = {p.cid: p for p in parts}
        self.ghosts = {}
        self.dists = {c.cid: self._fresh_dist(c) for c in clusters}
        self.home = {a: c.cid for c in clusters for a in c.ids}
        self.tick_token = {}
        self.commit_end = {c.cid: block for c in clusters}
        self.repartitions += 1
        for c in clusters:
            self._wake(c.cid)

    def _on_arrival(self, batch):
        for app_id, spec in batch:
            rt = ApplicationRuntime(app_id, spec, self.clock, remaining=spec.compute_work)
            self.apps[app_id] = rt
            self._push(self.clock + spec.compute_work, PHASE, "phase", app_id)
        members = [(a, s.io_time) for a, s in batch]

        if not self.clusters:
            if self.clustered and len(members) > 1:
                new = cluster_batch(members, self.cfg.max_clusters, self.next_cid)
            else:
                new = [Cluster(self.next_cid(), tuple(members))]
            self._set_layout(new)
            self.updater.reset(self.clusters, self.upd_rng)
            return

        if not self.clustered:
            c = self.clusters[0]
            grown = Cluster(c.cid, c.members + tuple(members))
            self.clusters = [grown]
            for a, _ in members:
                self.dists[c.cid] = add_app(self.dists[c.cid], self._load(a))
                self.home[a] = c.cid
            return

        if batch_policy(len(members), self.clusters) is BatchAction.CLUSTER_AND_MERGE:
            new = cluster_batch(members, self.cfg.max_clusters, self.next_cid)
            self._set_layout(merge_clusters(new, self.clusters))
            self.updater.reset(self.clusters, self.upd_rng)
            return

        for app_id, length in members:
            out = self.updater.insert(self.clusters, app_id, length, self.upd_rng)
            if out.structure_changed:
                self.splits += out.split is not None
                self._set_layout(out.clusters)
            else:
                self.clusters = out.clusters
                self.dists[out.cid] = add_app(self.dists[out.cid], self._load(app_id))
                self.home[app_id] = out.cid

    def _on_exit(self, app_id):
        cid = self.home.pop(app_id)
        clusters, dists, left, deleted = remove_application(self.clusters, self.dists, app_id, self._load(app_id))
        self.clusters, self.dists = clusters, dists
        self.updater.removed(left, app_id, dict(left.members)[app_id], deleted)
        if deleted:
            part = self.parts.pop(cid)
            if part.stored > EPS:
                self.ghosts[cid] = (part, left, left.time_unit)
            else:
                self.tick_token.pop(cid, None)

    # -- phases -----------------------------------------------------------
    def _on_phase(self, app_id):
        a = self.apps[app_id]
        if a.phase == "compute":
            a.phase = "io"
            a.remaining = a.spec.io_volume
            a.io_started = self.clock
            self._wake(self.home[app_id])
            return
        assert a.phase == "io" and a.remaining == 0.0, (app_id, a.phase, a.remaining)
        a.instances_done += 1
        if a.instances_done == a.spec.num_instances:
            a.phase = "done"
            a.finish = self.clock
            self._on_exit(app_id)
        else:
            a.phase = "compute"
            a.remaining = a.spec.compute_work
            self._push(self.clock + a.spec.compute_work, PHASE, "phase", app_id)

    # -- ticks ------------------------------------------------------------
    def _wake(self, cid):
        """Queue a tick for an idle `cid` as soon as its last commitment ends."""
        if cid in self.tick_token:
            return
        t = max(self.clock, self.commit_end.get(cid, 0.0))
        self.tick_token[cid] = self._seq
        self._push(t, TICK, "tick", (cid, self._seq))

    def _pending(self, cluster: Cluster | None):
        if cluster is None:
            return []
        return [self.apps[a] for a in cluster.ids
                if self.apps[a].phase == "io" and self.apps[a].remaining > 0]

    def _on_tick(self, cid, token):
        if self.tick_token.get(cid) != token:
            return  # superseded by a layout change
        del self.tick_token[cid]
        cluster = self._cluster(cid)
        if cluster is not None:
            part, unit, dist = self.parts[cid], cluster.time_unit, self.dists[cid]
        elif cid in self.ghosts:
            part, _, unit = self.ghosts[cid]
            dist = None
        else:
            return
        pending = self._pending(cluster)
        if not pending and part.stored <= EPS:
            return

        t = self.clock
        if self.cfg.scheduler == "bios":
            alloc = schedule_bios(pending, part, self.cfg.strategy, t)
        else:
            alloc = schedule_cluster(pending, part, dist, self.cfg.strategy, t, self.rng,
                                     self.cfg.literal_line15)
        self._check_allocation(part, alloc, t, unit)
        if self.cfg.record_trace:
            self.trace.append((round(t, 9), alloc.key()))
        self._advance(part, alloc, unit)
        self.commit_end[cid] = t + unit
        self.audit["ticks"] += 1

        if cluster is None and part.stored <= EPS:
            del self.ghosts[cid]
            return
        if self._pending(cluster) or part.stored > EPS:
            self.tick_token[cid] = self._seq
            self._push(t + unit, TICK, "tick", (cid, self._seq))

    def _check_allocation(self, part, alloc, t, dt):
        au = self.audit
        for app_id in set(alloc.pfs) | set(alloc.buffer):
            over = alloc.rate(app_id) - self.apps[app_id].bandwidth
            au["max_app_overrate"] = max(au["max_app_overrate"], over)
            if over > EPS:
                raise SimulationError(f"{app_id} allocated above its peak rate")
        usage = alloc.pfs_usage
        au["max_cluster_overuse"] = max(au["max_cluster_overuse"], usage - part.drain_budget)
        if usage > part.drain_budget + EPS:
            raise SimulationError(f"partition PFS budget exceeded at t={t}")
        self.windows = [w for w in self.windows if w[0] > t + EPS]
        total = usage + sum(u for _, u in self.windows)
        au["max_global_overuse"] = max(au["max_global_overuse"], total - self.system.pfs_bandwidth)
        if total > self.system.pfs_bandwidth + EPS:
            raise SimulationError(f"global PFS bandwidth exceeded at t={t}: {total}")
        self.windows.append((t + dt, usage))

    def _advance(self, part: Partition, alloc, dt):
        for app_id, when in advance_tick(self.apps, part, alloc, dt, self.clock, self.audit):
            self._push(when, PHASE, "phase", app_id)


def advance_tick(apps, part: Partition, alloc, dt: float, t0: float = 0.0, audit: dict | None = None):
    """Integrate one tick of `alloc` over [t0, t0 + dt) in place.

    The buffer can fill, empty or finish paying off its debt mid-tick and
    apps can finish early, so the interval is cut into segments at each of
    those instants. Buffer inflow is admitted in allocation order while the
    partition has room; a full partition admits only as fast as it drains and
    an empty one drains only what flows in. Returns (app_id, completion time)
    for apps whose remaining I/O reached zero.
    """
    audit = audit if audit is not None else {}
    ids = list(dict.fromkeys(list(alloc.pfs) + list(alloc.buffer)))
    runs = [apps[a] for a in ids]
    pfs = [alloc.pfs.get(a, 0.0) for a in ids]
    want = [alloc.buffer.get(a, 0.0) for a in ids]
    pos = {a: k for k, a in enumerate(alloc.buffer)}
    buf_order = sorted((i for i, a in enumerate(ids) if a in pos), key=lambda i: pos[ids[i]])
    cap = part.buffer_capacity
    done = []
    tau = 0.0
    while dt - tau > EPS:
        live = [i for i, a in enumerate(runs) if a.remaining > 0]
        demand = sum(want[i] for i in live)
        stored = part.occupancy + part.debt
        if part.debt > EPS:
            admit = 0.0
        elif part.occupancy >= cap - EPS:
            admit = min(demand, alloc.drain)
        else:
            admit = demand
        drain = alloc.drain if stored > EPS else min(alloc.drain, admit)
        got = [0.0] * len(runs)
        left = admit
        for i in buf_order:
            if runs[i].remaining > 0:
                got[i] = min(want[i], left)
                left -= got[i]
        rates = [(pfs[i] + got[i]) if runs[i].remaining > 0 else 0.0 for i in range(len(runs))]

        h = dt - tau
        for i, r in enumerate(rates):
            if r > 0:
                h = min(h, runs[i].remaining / r)
        net = admit - drain
        if part.debt > EPS:
            if drain > 0:
                h = min(h, part.debt / drain)
        elif net > EPS:
            h = min(h, (cap - part.occupancy) / net)
        elif net < -EPS:
            h = min(h, part.occupancy / -net)
        h = max(h, 0.0)

        for i, a in enumerate(runs):
            if rates[i] <= 0:
                continue
            a.remaining -= rates[i] * h
            a.bytes_pfs += pfs[i] * h
            a.bytes_buffer += got[i] * h
            if a.remaining <= 1e-9 * max(1.0, a.spec.io_volume):
                a.remaining = 0.0
                done.append((a.app_id, t0 + tau + h))
        audit["buffer_in"] = audit.get("buffer_in", 0.0) + admit * h
        audit["buffer_out"] = audit.get("buffer_out", 0.0) + drain * h
        if part.debt > EPS:
            part.debt = max(0.0, part.debt - drain * h)
            if part.debt <= EPS:
                part.debt = 0.0
        else:
            part.occupancy += net * h
            if part.occupancy > cap - EPS:
                part.occupancy = float(cap)
            if part.occupancy < EPS:
                part.occupancy = 0.0
        audit["min_occupancy"] = min(audit.get("min_occupancy", 0.0), part.occupancy)
        audit["max_over_capacity"] = max(audit.get("max_over_capacity", -math.inf), part.occupancy - cap)
        tau += h
        if h == 0.0 and not any(r > 0 for r in rates) and abs(net) <= EPS:
            break
    return done


def run(scenario: ScenarioSpec, scheduler: str = "dpsac", updater: str = "st",
        strategy: StrategyConfig | None = None, seed: int = 1, **kw) -> MetricsReport:
    cfg = RunConfig(scheduler=scheduler, updater=updater, strategy=strategy or StrategyConfig(), seed=seed, **kw)
    return Simulator(scenario, cfg).run()
