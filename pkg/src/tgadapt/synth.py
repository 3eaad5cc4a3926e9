"""Synthetic continuous-time dynamic graphs with planted noise.

Nodes belong to communities and interact (mostly) inside their current
community, preferring recently contacted partners.  Two noise mechanisms
mirror what degrades real dynamic graphs: nodes can migrate to another
community mid-stream, leaving behind misleading old links and a stale
node feature, and a configurable fraction of events are injected
cross-community "deprecated" links.  Source activity is Zipf-skewed so
neighborhoods carry heavy repeat imbalance.  Ground-truth noise flags are
emitted for diagnostics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .graph import build_graph, save_dataset


@dataclass(frozen=True)
class SynthConfig:
    nodes: int = 5000
    events: int = 100_000
    communities: int = 16
    deprecated_prob: float = 0.0   # chance an event is a misleading cross link
    migrate_frac: float = 0.0      # fraction of nodes that switch community
    skew: float = 1.2              # Zipf exponent for source activity
    repeat_prob: float = 0.5       # chance of re-contacting a recent partner
    recent_window: int = 5
    feature_noise: float = 0.05
    seed: int = 0


def _bounded_zipf_cdf(n, s):
    weights = np.arange(1, n + 1, dtype=np.float64) ** (-s)
    return np.cumsum(weights / weights.sum())


def generate(cfg):
    """Build the event stream; returns (TemporalGraph, labels dict).

    labels["noise"][eid] flags injected deprecated links; labels
    ["community"][eid] is the source's community when the event fired.
    """
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x5D7E]))
    C, N, E = cfg.communities, cfg.nodes, cfg.events

    home = rng.integers(0, C, size=N)
    members = [np.nonzero(home == c)[0] for c in range(C)]
    if any(m.size < 2 for m in members):
        raise ValueError("every community needs at least two members; "
                         "increase nodes or decrease communities")

    migrated = rng.random(N) < cfg.migrate_frac
    new_home = (home + 1 + rng.integers(0, C - 1, size=N)) % C
    migrate_at = rng.uniform(0.25 * E, 0.75 * E, size=N)
    migrate_at[~migrated] = np.inf

    # Zipf-ranked activity over a shuffled node order
    rank_of = rng.permutation(N)
    node_at_rank = np.argsort(rank_of)
    cdf = _bounded_zipf_cdf(N, cfg.skew)
    src_ranks = np.searchsorted(cdf, rng.random(E), side="left")
    srcs = node_at_rank[src_ranks]

    recent = [[] for _ in range(N)]  # per-node recent partners (newest last)
    dst = np.empty(E, dtype=np.int64)
    noise = np.zeros(E, dtype=bool)
    community_at = np.empty(E, dtype=np.int64)
    u_noise = rng.random(E)
    u_repeat = rng.random(E)

    for i in range(E):
        t = float(i + 1)
        u = int(srcs[i])
        cur = int(new_home[u]) if t >= migrate_at[u] else int(home[u])
        community_at[i] = cur
        if u_noise[i] < cfg.deprecated_prob:
            # misleading link: the old community if u migrated, else any other
            bad = int(home[u]) if (migrated[u] and t >= migrate_at[u]) else \
                int((cur + 1 + rng.integers(0, C - 1)) % C)
            pool = members[bad]
            v = int(pool[rng.integers(pool.size)])
            noise[i] = True
        else:
            v = -1
            if u_repeat[i] < cfg.repeat_prob:
                candidates = [w for w in recent[u][-cfg.recent_window:]
                              if (int(new_home[w]) if t >= migrate_at[w] else int(home[w])) == cur
                              and w != u]
                if candidates:
                    v = int(candidates[rng.integers(len(candidates))])
            if v < 0:
                pool = members[cur]
                v = int(pool[rng.integers(pool.size)])
                while v == u:
                    v = int(pool[rng.integers(pool.size)])
        dst[i] = v
        recent[u].append(v)
        if len(recent[u]) > 4 * cfg.recent_window:
            del recent[u][: 2 * cfg.recent_window]
        recent[v].append(u)
        if len(recent[v]) > 4 * cfg.recent_window:
            del recent[v][: 2 * cfg.recent_window]

    feats = np.zeros((N, C), dtype=np.float32)
    feats[np.arange(N), home] = 1.0
    feats += rng.normal(0.0, cfg.feature_noise, size=feats.shape).astype(np.float32)

    ts = np.arange(1, E + 1, dtype=np.float64)
    g = build_graph(srcs, dst, ts, num_nodes=N, node_features=feats)
    labels = {
        "noise": noise,
        "community": community_at,
        "source_rank": src_ranks,
        "migrated": migrated,
    }
    return g, labels


def generate_files(cfg, directory, name="synth"):
    """Generate and persist dataset files plus diagnostics; returns the
    manifest path.  Same seed -> identical files."""
    directory = Path(directory)
    g, labels = generate(cfg)
    manifest = save_dataset(g, directory, name=name)
    with open(directory / f"{name}.labels.csv", "w") as fh:
        fh.write("eid,noise,source_community,source_rank\n")
        for i in range(g.num_events):
            fh.write(f"{i},{int(labels['noise'][i])},{labels['community'][i]},"
                     f"{labels['source_rank'][i]}\n")
    with open(directory / f"{name}.synth-config.json", "w") as fh:
        json.dump(asdict(cfg), fh, indent=2, sort_keys=True)
    return manifest
