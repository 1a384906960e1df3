"""Instantaneous I/O load distribution and the buffer-occupancy Markov chain.

Loads are integer GB/s. A distribution is the law of X = sum_i B_i X_i with
independent X_i ~ Bernoulli(P_i).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

# below this 1 - P the deconvolution is rebuilt from scratch instead
DECONV_MIN_COMPLEMENT = 1e-6


def _check_app(app):
    B, P = app
    if int(B) != B or B <= 0:
        raise ValueError(f"bandwidth must be a positive integer, got {B!r}")
    if not 0.0 <= P <= 1.0:
        raise ValueError(f"probability must lie in [0, 1], got {P!r}")
    return int(B), float(P)


@dataclass(frozen=True, eq=False)
class LoadDistribution:
    pmf: np.ndarray
    apps: tuple = ()  # of (B_i, P_i)

    def __post_init__(self):
        self.pmf.setflags(write=False)

    @property
    def max_load(self) -> int:
        return len(self.pmf) - 1

    def mean(self) -> float:
        return float(np.dot(np.arange(len(self.pmf)), self.pmf))

    def __len__(self):
        return len(self.pmf)


def point_mass() -> LoadDistribution:
    return LoadDistribution(np.ones(1))


def _fold(pmf: np.ndarray, B: int, P: float) -> np.ndarray:
    # Dist(k) <- (1-P) Dist(k) + P Dist(k-B), over a support extended by B
    out = np.zeros(len(pmf) + B)
    out[: len(pmf)] = (1.0 - P) * pmf
    out[B:] += P * pmf
    return out


def load_distribution(apps) -> LoadDistribution:
    dist = point_mass()
    for app in apps:
        dist = add_app(dist, app)
    return dist


def add_app(dist: LoadDistribution, app) -> LoadDistribution:
    B, P = _check_app(app)
    return LoadDistribution(_fold(dist.pmf, B, P), dist.apps + ((B, P),))


def remove_app(dist: LoadDistribution, app) -> LoadDistribution:
    B, P = _check_app(app)
    try:
        k = dist.apps.index((B, P))
    except ValueError:
        raise KeyError(f"application {(B, P)} does not contribute to this distribution") from None
    rest = dist.apps[:k] + dist.apps[k + 1:]
    if 1.0 - P < DECONV_MIN_COMPLEMENT:
        return load_distribution(rest)

    src = dist.pmf
    n = len(src) - B
    out = np.zeros(n)
    # the two sweep directions invert the same fold; pick the one whose error
    # amplification factor is below 1
    if P <= 0.5:
        for k in range(n):
            prev = out[k - B] if k >= B else 0.0
            out[k] = (src[k] - P * prev) / (1.0 - P)
    else:
        for k in range(len(src) - 1, B - 1, -1):
            upper = out[k] if k < n else 0.0
            out[k - B] = (src[k] - (1.0 - P) * upper) / P
    np.clip(out, 0.0, 1.0, out=out)
    return LoadDistribution(out, rest)


def brute_force_distribution(apps) -> np.ndarray:
    """Enumerate all 2^n transfer subsets (test oracle)."""
    apps = [_check_app(a) for a in apps]
    out = np.zeros(sum(B for B, _ in apps) + 1)
    for mask in itertools.product((0, 1), repeat=len(apps)):
        prob, load = 1.0, 0
        for bit, (B, P) in zip(mask, apps):
            prob *= P if bit else 1.0 - P
            load += B * bit
        out[load] += prob
    return out


def tail(dist: LoadDistribution, threshold: float) -> float:
    """Pr(X >= threshold); fractional thresholds round up to the next integer load."""
    if threshold <= 0:
        return 1.0
    k0 = math.ceil(threshold - 1e-9)
    if k0 > dist.max_load:
        return 0.0
    return float(min(1.0, math.fsum(dist.pmf[k0:])))


def transition_matrix(dist: LoadDistribution, capacity: int, drain: int) -> np.ndarray:
    """One-step occupancy transitions over states 0..capacity.

    Interior moves follow m -> m + load - drain; mass that would leave the
    state space piles up at the empty and full states.
    """
    capacity, drain = int(capacity), int(drain)
    if capacity < 0 or drain < 0:
        raise ValueError("capacity and drain must be non-negative")
    M = np.zeros((capacity + 1, capacity + 1))
    loads = np.arange(len(dist.pmf))
    for m in range(capacity + 1):
        nxt = np.clip(m + loads - drain, 0, capacity)
        np.add.at(M[m], nxt, dist.pmf)
    return M


def p_full(dist: LoadDistribution, occupancy: float, capacity: float, drain: float) -> float:
    """Probability that the next time unit fills the buffer partition."""
    if not 0 <= occupancy <= capacity:
        raise ValueError(f"occupancy {occupancy} outside [0, {capacity}]")
    return tail(dist, capacity - occupancy + drain)
