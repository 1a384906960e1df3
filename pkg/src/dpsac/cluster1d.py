"""Optimal 1-D k-means by dynamic programming, elbow selection and cluster merging."""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass

DEFAULT_MAX_CLUSTERS = 5


@dataclass(frozen=True)
class Cluster:
    cid: int
    members: tuple  # of (app_id, length)

    def __post_init__(self):
        if not self.members:
            raise ValueError("a cluster needs at least one member")

    @property
    def lengths(self) -> list[float]:
        return [l for _, l in self.members]

    @property
    def ids(self) -> list[str]:
        return [a for a, _ in self.members]

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def centroid(self) -> float:
        return math.fsum(self.lengths) / len(self.members)

    @property
    def time_unit(self) -> float:
        # a member's length is its io_time, so the time unit coincides with the centroid
        return self.centroid

    def with_member(self, app_id: str, length: float) -> "Cluster":
        return Cluster(self.cid, self.members + ((app_id, length),))

    def without_member(self, app_id: str) -> "Cluster | None":
        rest = tuple(m for m in self.members if m[0] != app_id)
        if len(rest) == len(self.members):
            raise KeyError(app_id)
        return Cluster(self.cid, rest) if rest else None


def prefix_sums(values):
    s, s2 = [0.0], [0.0]
    for v in values:
        s.append(s[-1] + v)
        s2.append(s2[-1] + v * v)
    return s, s2


def within_ss(prefix, j: int, i: int) -> float:
    """Sum of squared deviations of the 1-based inclusive range j..i, in O(1)."""
    s, s2 = prefix
    if not 1 <= j <= i < len(s):
        raise IndexError(f"range {j}..{i} outside 1..{len(s) - 1}")
    n = i - j + 1
    tot = s[i] - s[j - 1]
    return max(0.0, (s2[i] - s2[j - 1]) - tot * tot / n)


@dataclass
class ClusteringResult:
    order: list[int]  # sorted position -> input index
    wss: list[float]  # wss[K-1] for K = 1..K_max
    partitions: list[list[list[int]]]  # partitions[K-1] = groups of input indices
    D: list[list[float]]
    CI: list[list[int]]
    chosen_K: int

    def groups(self, K: int | None = None) -> list[list[int]]:
        return self.partitions[(K or self.chosen_K) - 1]


def kmeans_1d_dp(lengths, K_max: int) -> ClusteringResult:
    lengths = list(lengths)
    n = len(lengths)
    if n == 0:
        raise ValueError("cannot cluster an empty input")
    if not 1 <= K_max <= n:
        raise ValueError(f"K_max must lie in 1..{n}, got {K_max}")
    order = sorted(range(n), key=lambda k: lengths[k])
    x = [lengths[k] for k in order]
    pre = prefix_sums(x)

    D = [[0.0] * (K_max + 1) for _ in range(n + 1)]
    CI = [[0] * (K_max + 1) for _ in range(n + 1)]
    for m in range(1, K_max + 1):
        for i in range(1, n + 1):
            if i < m:
                continue  # fewer points than clusters; never read by the recurrence
            best, arg = math.inf, m
            # a single cluster must start at the first element: D[j-1, 0] is only
            # a valid predecessor for j = 1
            j_hi = 1 if m == 1 else i
            for j in range(m, j_hi + 1):
                cand = D[j - 1][m - 1] + within_ss(pre, j, i)
                if cand < best:
                    best, arg = cand, j
            D[i][m] = best
            CI[i][m] = arg

    wss, partitions = [], []
    for K in range(1, K_max + 1):
        wss.append(D[n][K])
        bounds, i = [], n
        for m in range(K, 0, -1):
            j = CI[i][m]
            bounds.append((j, i))
            i = j - 1
        bounds.reverse()
        partitions.append([[order[p - 1] for p in range(j, i + 1)] for j, i in bounds])
    return ClusteringResult(order, wss, partitions, D, CI, elbow_select(wss))


def elbow_select(wss_by_K) -> int:
    """Pick K at the largest positive second difference of the wss curve."""
    w = list(wss_by_K)
    if not w:
        raise ValueError("empty wss curve")
    if len(w) == 1:
        return 1
    if len(w) == 2:
        return 2 if w[1] < w[0] else 1
    best_k, best = 1, 0.0
    for K in range(2, len(w)):
        score = (w[K - 2] - w[K - 1]) - (w[K - 1] - w[K])
        if score > best:
            best_k, best = K, score
    return best_k


def exhaustive_wss(sorted_values, K: int) -> float:
    """Brute-force minimum wss over all contiguous K-partitions (test oracle)."""
    n = len(sorted_values)
    best = math.inf
    for cuts in itertools.combinations(range(1, n), K - 1):
        edges = (0,) + cuts + (n,)
        tot = 0.0
        for a, b in zip(edges, edges[1:]):
            seg = sorted_values[a:b]
            mu = sum(seg) / len(seg)
            tot += sum((v - mu) ** 2 for v in seg)
        best = min(best, tot)
    return best


def cluster_batch(members, max_clusters: int, next_cid) -> list[Cluster]:
    """Cluster (app_id, length) pairs; `next_cid` is a callable handing out fresh ids."""
    members = list(members)
    result = kmeans_1d_dp([l for _, l in members], min(max_clusters, len(members)))
    return [Cluster(next_cid(), tuple(members[k] for k in g)) for g in result.groups()]


def _closest(target: Cluster, candidates) -> int:
    c = target.centroid
    return min(range(len(candidates)), key=lambda k: abs(candidates[k].centroid - c))


def merge_clusters(new, existing) -> list[Cluster]:
    """Fold the smaller side into its closest counterparts on the larger side."""
    new, existing = list(new), list(existing)
    if not new:
        return existing
    if not existing:
        return new
    if len(new) < len(existing):
        sources, targets = new, existing
    else:
        sources, targets = existing, new
    extra = [[] for _ in targets]
    for src in sources:
        extra[_closest(src, targets)].extend(src.members)
    return [Cluster(t.cid, t.members + tuple(x)) for t, x in zip(targets, extra)]


def split_at_largest_gap(cluster: Cluster, cid_a: int, cid_b: int) -> tuple[Cluster, Cluster]:
    ordered = sorted(cluster.members, key=lambda m: m[1])
    gaps = [ordered[k + 1][1] - ordered[k][1] for k in range(len(ordered) - 1)]
    if not gaps or max(gaps) <= 0:
        raise ValueError(f"cluster {cluster.cid} has no gap to split at")
    k = gaps.index(max(gaps))
    return Cluster(cid_a, tuple(ordered[: k + 1])), Cluster(cid_b, tuple(ordered[k + 1:]))


def can_split(cluster: Cluster) -> bool:
    return cluster.size >= 2 and max(cluster.lengths) > min(cluster.lengths)


class BatchAction(enum.Enum):
    INSERT = "insert"
    CLUSTER_AND_MERGE = "cluster-and-merge"


def batch_policy(batch_size: int, existing) -> BatchAction:
    existing = list(existing)
    if not existing:
        return BatchAction.INSERT if batch_size <= 1 else BatchAction.CLUSTER_AND_MERGE
    mean_size = sum(c.size for c in existing) / len(existing)
    return BatchAction.INSERT if batch_size <= mean_size else BatchAction.CLUSTER_AND_MERGE
