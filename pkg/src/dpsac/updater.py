"""Absorbing application arrivals and exits into an existing clustering.

Three strategies: simple thresholding on the drift of a cluster's running
centroid, distribution-based thresholding with Jensen-Shannon divergence over
a length histogram, and online k-means with a doubling facility cost.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cluster1d import Cluster, can_split, split_at_largest_gap
from .loaddist import remove_app

DEFAULT_THRESHOLD = 0.1
DEFAULT_BINS = 20


@dataclass(frozen=True)
class SplitDirective:
    cid: int  # the cluster that was split
    into: tuple  # the two successor cluster ids


@dataclass
class InsertOutcome:
    cid: int  # cluster now holding the new application
    clusters: list
    split: SplitDirective | None = None
    created: bool = False  # a brand-new cluster was opened for the application

    @property
    def structure_changed(self) -> bool:
        return self.split is not None or self.created


def closest_cluster(clusters, length: float) -> int:
    """Index of the cluster whose centroid is nearest `length` (first on ties)."""
    if not clusters:
        raise ValueError("no clusters to insert into")
    return min(range(len(clusters)), key=lambda k: abs(clusters[k].centroid - length))


def _replace(clusters, idx, *new):
    return list(clusters[:idx]) + list(new) + list(clusters[idx + 1:])


class CidAllocator:
    def __init__(self, start: int = 0):
        self._next = start

    def __call__(self) -> int:
        cid = self._next
        self._next += 1
        return cid


class Updater:
    name = "base"

    def __init__(self, max_clusters: int = 5, threshold: float = DEFAULT_THRESHOLD, next_cid=None):
        self.max_clusters = max_clusters
        self.threshold = threshold
        self.next_cid = next_cid or CidAllocator(10_000)

    def reset(self, clusters, rng=None):
        """Take a freshly (re)built clustering as the new baseline."""

    def insert(self, clusters, app_id: str, length: float, rng=None) -> InsertOutcome:
        raise NotImplementedError

    def removed(self, cluster: Cluster, app_id: str, length: float, deleted: bool):
        """Bookkeeping after `app_id` left `cluster`."""


# ---------------------------------------------------------------------------
# simple thresholding

@dataclass
class CentroidTrack:
    base: float  # centroid frozen at the last (re)clustering
    running: float  # cumulative centroid


class SimpleThresholdUpdater(Updater):
    name = "st"

    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        self.tracks: dict[int, CentroidTrack] = {}

    def reset(self, clusters, rng=None):
        self.tracks = {c.cid: CentroidTrack(c.centroid, c.centroid) for c in clusters}

    def _track(self, c: Cluster) -> CentroidTrack:
        if c.cid not in self.tracks:
            self.tracks[c.cid] = CentroidTrack(c.centroid, c.centroid)
        return self.tracks[c.cid]

    def change_ratio(self, cluster: Cluster, running: float) -> float:
        span = max(cluster.lengths) - min(cluster.lengths)
        if span <= 0:
            return 0.0
        return abs(running - self._track(cluster).base) / span

    def insert(self, clusters, app_id, length, rng=None):
        idx = closest_cluster(clusters, length)
        target = clusters[idx]
        track = self._track(target)
        n = target.size
        running = (track.running * n + length) / (n + 1)
        ratio = self.change_ratio(target, running)  # span of the members before insertion
        grown = target.with_member(app_id, length)
        track.running = running
        if ratio >= self.threshold and grown.size > self.max_clusters and can_split(grown):
            a, b = split_at_largest_gap(grown, self.next_cid(), self.next_cid())
            del self.tracks[target.cid]
            for half in (a, b):
                self.tracks[half.cid] = CentroidTrack(half.centroid, half.centroid)
            home = a.cid if app_id in a.ids else b.cid
            return InsertOutcome(home, _replace(clusters, idx, a, b), SplitDirective(target.cid, (a.cid, b.cid)))
        return InsertOutcome(target.cid, _replace(clusters, idx, grown))

    def removed(self, cluster, app_id, length, deleted):
        if deleted:
            self.tracks.pop(cluster.cid, None)


# ---------------------------------------------------------------------------
# distribution-based thresholding

def js_divergence(p, q) -> float:
    """Jensen-Shannon divergence (nats) between two histograms over the same bins."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"histograms have different bins: {p.shape} vs {q.shape}")
    if p.sum() <= 0 or q.sum() <= 0:
        raise ValueError("histograms must have positive mass")
    p = p / p.sum()
    q = q / q.sum()
    m = 0.5 * (p + q)

    def kl(a):
        nz = a > 0
        return float(np.sum(a[nz] * np.log(a[nz] / m[nz])))

    js = 0.5 * kl(p) + 0.5 * kl(q)
    return min(max(js, 0.0), math.log(2.0))


@dataclass
class LengthHistogram:
    lo: float
    width: float
    bins: int = DEFAULT_BINS

    @classmethod
    def spanning(cls, lengths, bins: int = DEFAULT_BINS) -> "LengthHistogram":
        lo, hi = min(lengths), max(lengths)
        width = (hi - lo) / bins
        return cls(lo, width if width > 0 else 1.0, bins)

    def bin_of(self, length: float) -> int:
        return int(min(self.bins - 1, max(0, math.floor((length - self.lo) / self.width))))

    def counts(self, lengths) -> np.ndarray:
        out = np.zeros(self.bins)
        for l in lengths:
            out[self.bin_of(l)] += 1
        return out


class DistThresholdUpdater(Updater):
    name = "dt"

    def __init__(self, *args, bins: int = DEFAULT_BINS, check_period: int | None = None, **kw):
        super().__init__(*args, **kw)
        self.nbins = bins
        self.check_period = check_period or self.max_clusters
        self.hist: LengthHistogram | None = None
        self.p = self.q = None
        self.changes = 0
        self.checks: list[float] = []  # divergences evaluated, for inspection

    def reset(self, clusters, rng=None):
        lengths = [l for c in clusters for l in c.lengths]
        self.hist = LengthHistogram.spanning(lengths, self.nbins)
        self.p = self.hist.counts(lengths)
        self.q = self.p.copy()
        self.changes = 0

    def _most_changed(self, clusters):
        p = self.p / self.p.sum()
        q = self.q / self.q.sum()
        best, best_idx = -1.0, None
        for k, c in enumerate(clusters):
            b = self.hist.bin_of(c.centroid)
            if p[b] <= 0 or not can_split(c):
                continue
            score = abs(p[b] - q[b]) / p[b]
            if score > best:
                best, best_idx = score, k
        return best_idx

    def insert(self, clusters, app_id, length, rng=None):
        if self.hist is None:
            self.reset(clusters)
        idx = closest_cluster(clusters, length)
        grown = clusters[idx].with_member(app_id, length)
        clusters = _replace(clusters, idx, grown)
        self.q[self.hist.bin_of(length)] += 1
        self.changes += 1
        if self.changes < self.check_period:
            return InsertOutcome(grown.cid, clusters)
        self.changes = 0
        js = js_divergence(self.p, self.q)
        self.checks.append(js)
        if js < self.threshold:
            return InsertOutcome(grown.cid, clusters)
        o = self._most_changed(clusters)
        if o is None:
            return InsertOutcome(grown.cid, clusters)
        victim = clusters[o]
        span = sorted({self.hist.bin_of(l) for l in victim.lengths})
        a, b = split_at_largest_gap(victim, self.next_cid(), self.next_cid())
        lo, hi = span[0], span[-1]
        self.p[lo:hi + 1] = self.q[lo:hi + 1]
        home = grown.cid
        if victim.cid == grown.cid:
            home = a.cid if app_id in a.ids else b.cid
        return InsertOutcome(home, _replace(clusters, o, a, b), SplitDirective(victim.cid, (a.cid, b.cid)))


# ---------------------------------------------------------------------------
# online k-means

@dataclass
class Center:
    value: float
    cid: int
    count: int = 0


@dataclass
class OnlineKMeansState:
    centers: list
    k: int
    w_star: float
    f1: float
    r: int = 1
    q: int = 0
    f: float = 0.0
    n: int = 0
    history: list = field(default_factory=list)  # facility cost per epoch

    def epoch_limit(self) -> float:
        return 3 * self.k * (1 + math.log(self.n)) if self.n > 0 else 3 * self.k

    def nearest(self, v: float) -> int:
        return min(range(len(self.centers)), key=lambda i: abs(self.centers[i].value - v))


def ok_init(centers, cids=None, counts=None, w_star: float | None = None) -> OnlineKMeansState:
    """State after lines 1-3: w* from the closest pair of centers, f_1 = w*/k."""
    centers = [float(c) for c in centers]
    cids = list(cids) if cids is not None else list(range(len(centers)))
    counts = list(counts) if counts is not None else [0] * len(centers)
    if w_star is None:
        distinct = sorted(set(centers))
        if len(distinct) < 2:
            raise ValueError("online k-means needs at least two distinct centers")
        w_star = min((b - a) ** 2 for a, b in zip(distinct, distinct[1:])) / 2
    k = len(centers)
    f1 = w_star / k
    return OnlineKMeansState([Center(v, c, n) for v, c, n in zip(centers, cids, counts)],
                             k, w_star, f1, f=f1, history=[f1])


@dataclass(frozen=True)
class Arrive:
    length: float


@dataclass(frozen=True)
class Depart:
    center: int  # cid of the departing application's center


@dataclass
class CenterChange:
    center: int  # cid the application is assigned to (Arrive) or left (Depart)
    added: bool = False
    retired: int | None = None  # cid of a center dropped by the yield step
    removed: bool = False  # Depart emptied and removed its center
    probability: float = 0.0


def ok_update(state: OnlineKMeansState, event, rng=None, new_cid=None, owned=None) -> CenterChange:
    """Apply one arrival or departure.

    `owned(cid)` reports whether a center still has applications; `new_cid`
    names a freshly opened center.
    """
    if state is None:
        raise ValueError("online k-means used before initialisation")
    state.n += 1
    if isinstance(event, Depart):
        idx = next((i for i, c in enumerate(state.centers) if c.cid == event.center), None)
        if idx is None:
            raise KeyError(event.center)
        c = state.centers[idx]
        c.count -= 1
        if c.count <= 0:
            del state.centers[idx]
            return CenterChange(c.cid, removed=True)
        return CenterChange(c.cid)

    v = event.length
    near = state.nearest(v) if state.centers else None
    d2 = (state.centers[near].value - v) ** 2 if near is not None else math.inf
    p = min(d2 / state.f, 1.0)
    u = rng.random() if rng is not None else 1.0
    if u < p:
        cid = new_cid() if new_cid is not None else max((c.cid for c in state.centers), default=-1) + 1
        state.centers.append(Center(v, cid, 1))
        state.q += 1
        if state.q >= state.epoch_limit():
            state.r += 1
            state.q = 0
            state.f *= 2
            state.history.append(state.f)
        retired = None
        if near is not None:
            prev = state.centers[near]
            if (owned(prev.cid) if owned is not None else prev.count > 0) is False:
                retired = prev.cid
                del state.centers[near]
        return CenterChange(cid, added=True, retired=retired, probability=p)
    c = state.centers[near]
    c.count += 1
    return CenterChange(c.cid, probability=p)


class OnlineKMeansUpdater(Updater):
    name = "ok"

    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        self.state: OnlineKMeansState | None = None

    def reset(self, clusters, rng=None):
        centers = [c.centroid for c in clusters]
        try:
            self.state = ok_init(centers, [c.cid for c in clusters], [c.size for c in clusters])
        except ValueError:
            # too few distinct centers: fall back to the closest distinct member lengths
            lengths = sorted({l for c in clusters for l in c.lengths})
            gaps = [(b - a) ** 2 for a, b in zip(lengths, lengths[1:])]
            w_star = min(gaps) / 2 if gaps else 1.0
            self.state = ok_init(centers, [c.cid for c in clusters], [c.size for c in clusters], w_star)

    def insert(self, clusters, app_id, length, rng=None):
        if self.state is None:
            self.reset(clusters)
        live = {c.cid for c in clusters}
        change = ok_update(self.state, Arrive(length), rng, new_cid=self.next_cid,
                           owned=lambda cid: cid in live)
        if change.added:
            return InsertOutcome(change.center, list(clusters) + [Cluster(change.center, ((app_id, length),))],
                                 created=True)
        idx = next(i for i, c in enumerate(clusters) if c.cid == change.center)
        return InsertOutcome(change.center, _replace(clusters, idx, clusters[idx].with_member(app_id, length)))

    def removed(self, cluster, app_id, length, deleted):
        if self.state is not None and any(c.cid == cluster.cid for c in self.state.centers):
            ok_update(self.state, Depart(cluster.cid))


UPDATERS = {"st": SimpleThresholdUpdater, "dt": DistThresholdUpdater, "ok": OnlineKMeansUpdater}


def make_updater(kind: str, **kw) -> Updater:
    try:
        cls = UPDATERS[kind]
    except KeyError:
        raise ValueError(f"unknown updater {kind!r}; choose from {sorted(UPDATERS)}") from None
    if kind != "dt":
        kw.pop("bins", None)
    return cls(**kw)


def remove_application(clusters, dists, app_id: str, load):
    """Drop `app_id` from its cluster and its load from that cluster's distribution.

    Shares are deliberately left alone. Returns (clusters, dists, cluster the
    app left, whether that cluster was deleted).
    """
    for idx, c in enumerate(clusters):
        if app_id in c.ids:
            break
    else:
        raise KeyError(f"application {app_id!r} is not clustered")
    rest = c.without_member(app_id)
    dists = dict(dists)
    if rest is None:
        dists.pop(c.cid, None)
        return list(clusters[:idx]) + list(clusters[idx + 1:]), dists, c, True
    dists[c.cid] = remove_app(dists[c.cid], load)
    return _replace(clusters, idx, rest), dists, c, False
