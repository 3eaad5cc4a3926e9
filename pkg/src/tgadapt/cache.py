"""Two-tier edge-feature cache with top-k frequency replacement.

The fast tier holds at most k edge features; everything lives in the slow
tier.  Per-epoch access counters drive replacement at epoch boundaries:
if the current residents overlap the epoch's k most-accessed edges by
fewer than epsilon entries, the residents are swapped for that top-k.
A clairvoyant per-epoch top-k ("oracle") provides the hit-rate upper
bound for comparison.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass
class EpochStats:
    hits: int = 0
    misses: int = 0

    @property
    def requests(self):
        return self.hits + self.misses

    def hit_rate(self):
        return self.hits / self.requests if self.requests else None


@dataclass
class CacheState:
    num_edges: int
    k: int
    epsilon: int
    features: np.ndarray = None          # slow tier: all edge features
    resident: np.ndarray = None          # bool, fast-tier membership
    counters: np.ndarray = None          # per-edge accesses this epoch
    epoch_stats: list = field(default_factory=list)
    replacements: list = field(default_factory=list)
    sim_fast_cost: float = 0.0
    sim_slow_cost: float = 0.0

    def __post_init__(self):
        if self.resident is None:
            self.resident = np.zeros(self.num_edges, dtype=bool)
        if self.counters is None:
            self.counters = np.zeros(self.num_edges, dtype=np.int64)
        if not self.epoch_stats:
            self.epoch_stats.append(EpochStats())

    @property
    def resident_count(self):
        return int(self.resident.sum())


def make_cache(num_edges, k, epsilon=None, features=None):
    """k and epsilon may be absolute counts or fractions (of num_edges and
    of k respectively); epsilon defaults to 0.9 * k."""
    if 0 < k < 1:
        k = int(k * num_edges)
    k = int(k)
    if epsilon is None:
        epsilon = 0.9
    if 0 < epsilon <= 1 and isinstance(epsilon, float):
        epsilon = int(np.ceil(epsilon * k))
    return CacheState(num_edges=int(num_edges), k=k, epsilon=int(epsilon),
                      features=features)


def lookup(state, eids, slow_cost_per_row=0.0):
    """Serve features for ``eids`` (either tier), count each occurrence,
    and return per-eid hit flags."""
    eids = np.asarray(eids, dtype=np.int64)
    if eids.size and (eids.min() < 0 or eids.max() >= state.num_edges):
        raise IndexError(f"edge id out of range [0, {state.num_edges})")
    hits = state.resident[eids]
    np.add.at(state.counters, eids, 1)
    st = state.epoch_stats[-1]
    st.hits += int(hits.sum())
    st.misses += int(eids.size - hits.sum())
    state.sim_fast_cost += float(hits.sum())
    state.sim_slow_cost += float((eids.size - hits.sum()) * slow_cost_per_row)
    feats = state.features[eids] if state.features is not None else None
    return feats, hits


def _topk_edges(counters, k):
    """k most-accessed touched edges, ties broken toward lower eid.

    Work is linear in the number of touched edges plus k log k.
    """
    touched = np.nonzero(counters)[0]
    if touched.size == 0 or k == 0:
        return np.empty(0, dtype=np.int64)
    counts = counters[touched]
    if touched.size > k:
        # composite key: count descending, eid ascending
        key = counts.astype(np.int64) * np.int64(counters.shape[0]) - touched
        part = np.argpartition(key, touched.size - k)[touched.size - k:]
        touched, counts = touched[part], counts[part]
    order = np.lexsort((touched, -counts))
    return touched[order]


def maybe_replace(state):
    """Epoch-boundary replacement decision; counters reset either way."""
    topk = _topk_edges(state.counters, state.k)
    overlap = int(state.resident[topk].sum())
    replaced = overlap < state.epsilon
    if replaced:
        state.resident[:] = False
        state.resident[topk] = True
    state.replacements.append(bool(replaced))
    state.counters[:] = 0
    state.epoch_stats.append(EpochStats())
    return replaced


def oracle_cache(trace_counts, k):
    """Per-epoch hit rate of the clairvoyant strategy that caches each
    epoch's true top-k before the epoch runs.

    ``trace_counts`` is (num_epochs, num_edges) access counts.
    """
    trace_counts = np.asarray(trace_counts)
    rates = []
    for epoch in trace_counts:
        total = int(epoch.sum())
        if total == 0:
            rates.append(None)
            continue
        topk = _topk_edges(epoch, k)
        rates.append(float(epoch[topk].sum() / total))
    return rates


def run_trace(state, trace):
    """Feed a per-epoch trace (lists of eids) through the cache; returns
    per-epoch hit rates."""
    rates = []
    for epoch_eids in trace:
        lookup(state, epoch_eids)
        rates.append(state.epoch_stats[-1].hit_rate())
        maybe_replace(state)
    return rates


def cache_report(state, oracle_rates=None):
    """JSON-ready metrics for the run so far."""
    epochs = []
    for i, st in enumerate(state.epoch_stats):
        if st.requests == 0 and i == len(state.epoch_stats) - 1:
            break  # trailing empty epoch opened by the last replacement
        epochs.append({
            "epoch": i,
            "requests": st.requests,
            "hits": st.hits,
            "hit_rate": st.hit_rate(),
            "zero_denominator": st.requests == 0,
            "oracle_hit_rate": (oracle_rates[i] if oracle_rates is not None
                                and i < len(oracle_rates) else None),
            "replaced": state.replacements[i] if i < len(state.replacements) else None,
        })
    report = {
        "budget_k": state.k,
        "epsilon": state.epsilon,
        "final_resident_count": state.resident_count,
        "replacement_events": int(sum(state.replacements)),
        "epochs": epochs,
        "simulated_fast_cost": state.sim_fast_cost,
        "simulated_slow_cost": state.sim_slow_cost,
    }
    json.dumps(report)  # schema sanity: must round-trip
    return report
