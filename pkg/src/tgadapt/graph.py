"""Dynamic graph storage: event ingestion, time-sorted CSR, splits.

Events are timestamped edges ``(src, dst, ts[, edge features])``.  The
adjacency is bidirectional per event (both endpoints see the interaction)
and every per-node neighbor list is sorted by timestamp, so a binary
search locates the valid temporal window of any (node, time) query.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .matio import load_matrix, save_matrix


class DataError(ValueError):
    """Malformed input data (parse, schema or validation failure)."""


@dataclass(frozen=True)
class Event:
    src: int
    dst: int
    ts: float
    eid: int


@dataclass(frozen=True)
class SplitSpec:
    """Half-open eid ranges; train precedes val precedes test."""

    train_range: tuple
    val_range: tuple
    test_range: tuple

    def train_eids(self):
        return np.arange(*self.train_range, dtype=np.int64)

    def val_eids(self):
        return np.arange(*self.val_range, dtype=np.int64)

    def test_eids(self):
        return np.arange(*self.test_range, dtype=np.int64)


@dataclass
class TemporalGraph:
    """Immutable after construction; safe for unrestricted concurrent reads.

    ``tcsr_*`` arrays hold, per node, the (neighbor, ts, eid) adjacency
    entries sorted by (ts, eid) ascending.  ``src/dst/ts`` are indexed by
    eid, and eids are assigned in global timestamp order.
    """

    num_nodes: int
    src: np.ndarray
    dst: np.ndarray
    ts: np.ndarray
    tcsr_offsets: np.ndarray
    tcsr_neighbors: np.ndarray
    tcsr_ts: np.ndarray
    tcsr_eids: np.ndarray
    node_features: np.ndarray = field(default=None)
    edge_features: np.ndarray = field(default=None)

    @property
    def num_events(self):
        return self.src.shape[0]

    @property
    def d_v(self):
        return 0 if self.node_features is None else self.node_features.shape[1]

    @property
    def d_e(self):
        return 0 if self.edge_features is None else self.edge_features.shape[1]

    def events(self):
        return [Event(int(s), int(d), float(t), i)
                for i, (s, d, t) in enumerate(zip(self.src, self.dst, self.ts))]

    def degree(self, v):
        return int(self.tcsr_offsets[v + 1] - self.tcsr_offsets[v])

    def adjacency(self, v):
        lo, hi = self.tcsr_offsets[v], self.tcsr_offsets[v + 1]
        return self.tcsr_neighbors[lo:hi], self.tcsr_ts[lo:hi], self.tcsr_eids[lo:hi]


def build_graph(src, dst, ts, num_nodes=None, node_features=None, edge_features=None):
    """Assemble a TemporalGraph from parallel event arrays.

    Events are re-ordered by (ts, input position) and eids reassigned to
    match; feature rows follow their events.
    """
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    ts = np.asarray(ts, dtype=np.float64)
    if not (src.shape == dst.shape == ts.shape):
        raise DataError("src/dst/ts length mismatch")
    if ts.size and (~np.isfinite(ts)).any():
        raise DataError("non-finite timestamp")
    if ts.size and ts.min() < 0:
        raise DataError("negative timestamp")
    if src.size and min(src.min(), dst.min()) < 0:
        raise DataError("negative node id")

    order = np.argsort(ts, kind="stable")
    src, dst, ts = src[order], dst[order], ts[order]
    if edge_features is not None:
        edge_features = np.asarray(edge_features, dtype=np.float32)
        if edge_features.shape[0] != src.shape[0]:
            raise DataError("edge feature row count does not match event count")
        edge_features = edge_features[order]

    inferred = int(max(src.max(), dst.max())) + 1 if src.size else 0
    if num_nodes is None:
        num_nodes = inferred
    elif num_nodes < inferred:
        raise DataError(f"num_nodes={num_nodes} smaller than max node id {inferred - 1}")
    if node_features is not None:
        node_features = np.asarray(node_features, dtype=np.float32)
        if node_features.shape[0] != num_nodes:
            raise DataError("node feature row count does not match num_nodes")

    ne = src.shape[0]
    eids = np.arange(ne, dtype=np.int64)
    # Bidirectional adjacency: each event appears in both endpoint lists.
    nodes_cat = np.concatenate([src, dst])
    peers_cat = np.concatenate([dst, src])
    ts_cat = np.concatenate([ts, ts])
    eid_cat = np.concatenate([eids, eids])
    adj_order = np.lexsort((eid_cat, ts_cat, nodes_cat))

    deg = np.bincount(nodes_cat, minlength=num_nodes)
    offsets = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(deg, out=offsets[1:])

    return TemporalGraph(
        num_nodes=int(num_nodes),
        src=src, dst=dst, ts=ts,
        tcsr_offsets=offsets,
        tcsr_neighbors=peers_cat[adj_order],
        tcsr_ts=ts_cat[adj_order],
        tcsr_eids=eid_cat[adj_order],
        node_features=node_features,
        edge_features=edge_features,
    )


# ---------------------------------------------------------------------------
# ingestion from disk
# ---------------------------------------------------------------------------

def ingest_events(path, d_e=None, num_nodes=None, node_feature_path=None):
    """Parse a comma-separated event file: ``src,dst,ts[,f1,...,fde]``.

    ``d_e`` fixes the expected edge-feature width; by default the first
    row decides and later rows must agree.
    """
    path = Path(path)
    srcs, dsts, tss, feats = [], [], [], []
    width = d_e
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) < 3:
                raise DataError(f"{path}:{lineno}: expected at least src,dst,ts")
            try:
                s, d = int(parts[0]), int(parts[1])
                t = float(parts[2])
                f = [float(x) for x in parts[3:]]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if not np.isfinite(t):
                raise DataError(f"{path}:{lineno}: non-finite timestamp {parts[2]!r}")
            if width is None:
                width = len(f)
            elif len(f) != width:
                raise DataError(
                    f"{path}:{lineno}: edge feature width {len(f)} != expected {width}")
            srcs.append(s)
            dsts.append(d)
            tss.append(t)
            feats.append(f)

    width = width or 0
    edge_features = np.array(feats, dtype=np.float32).reshape(len(srcs), width) if width else None
    node_features = None
    if node_feature_path is not None:
        node_features = load_features(node_feature_path)
        if node_features.shape[1] == 0:
            node_features = None
    return build_graph(srcs, dsts, tss, num_nodes=num_nodes,
                       node_features=node_features, edge_features=edge_features)


def load_manifest(path):
    """Dataset manifest: names of the event/feature files plus dimensions."""
    path = Path(path)
    with open(path) as fh:
        spec = json.load(fh)
    base = path.parent
    node_path = spec.get("node_features")
    g = ingest_events(
        base / spec["events"],
        d_e=spec.get("d_e"),
        num_nodes=spec.get("num_nodes"),
        node_feature_path=(base / node_path) if node_path else None,
    )
    if spec.get("d_v") is not None and g.d_v != spec["d_v"]:
        raise DataError(f"manifest d_v={spec['d_v']} but node features have width {g.d_v}")
    if spec.get("d_e") is not None and g.d_e != spec["d_e"]:
        raise DataError(f"manifest d_e={spec['d_e']} but edge features have width {g.d_e}")
    return g


def save_dataset(graph, directory, name="dataset"):
    """Write the canonical event file + feature files + manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    events_file = f"{name}.events.csv"
    with open(directory / events_file, "w") as fh:
        for i in range(graph.num_events):
            row = f"{graph.src[i]},{graph.dst[i]},{float(graph.ts[i])!r}"
            if graph.edge_features is not None:
                row += "," + ",".join(repr(float(x)) for x in graph.edge_features[i])
            fh.write(row + "\n")
    manifest = {
        "events": events_file,
        "num_nodes": graph.num_nodes,
        "d_v": graph.d_v,
        "d_e": graph.d_e,
        "node_features": None,
    }
    if graph.node_features is not None:
        nf = f"{name}.nodes.fmat"
        save_features(directory / nf, graph.node_features)
        manifest["node_features"] = nf
    mpath = directory / f"{name}.manifest.json"
    with open(mpath, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return mpath


def save_features(path, array):
    save_matrix(path, np.asarray(array, dtype=np.float32))


def load_features(path):
    arr = load_matrix(path)
    return arr.astype(np.float32, copy=False)


# ---------------------------------------------------------------------------
# queries and splits
# ---------------------------------------------------------------------------

def temporal_neighborhood_size(graph, v, t):
    """Number of interactions of ``v`` strictly before ``t``."""
    if not 0 <= v < graph.num_nodes:
        raise DataError(f"node id {v} out of range")
    lo, hi = graph.tcsr_offsets[v], graph.tcsr_offsets[v + 1]
    return int(np.searchsorted(graph.tcsr_ts[lo:hi], t, side="left"))


def chronological_split(graph, ratios=(0.6, 0.2, 0.2), window=None):
    """Split eids chronologically; an optional window keeps only the last
    ``window`` events."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"split ratios must sum to 1, got {ratios}")
    ne = graph.num_events
    if window is None:
        window = ne
    if window > ne:
        raise DataError(f"window {window} exceeds event count {ne}")
    start = ne - window
    b1 = start + int(np.floor(ratios[0] * window))
    b2 = start + int(np.floor((ratios[0] + ratios[1]) * window))
    return SplitSpec(train_range=(start, b1), val_range=(b1, b2), test_range=(b2, start + window))


def graphs_equal(a, b):
    """Structural equality, including features bit-for-bit."""
    if a.num_nodes != b.num_nodes or a.num_events != b.num_events:
        return False
    arrays = ["src", "dst", "ts", "tcsr_offsets", "tcsr_neighbors", "tcsr_ts", "tcsr_eids"]
    for name in arrays:
        if not np.array_equal(getattr(a, name), getattr(b, name)):
            return False
    for name in ["node_features", "edge_features"]:
        fa, fb = getattr(a, name), getattr(b, name)
        if (fa is None) != (fb is None):
            return False
        if fa is not None and not np.array_equal(fa, fb):
            return False
    return True
