"""Neighbor and target embeddings for the adaptive sampler.

Each candidate neighbor is described by four information sources, kept at
balanced widths: projected node/edge features, a fixed cosine time
encoding of the timespan, a sinusoidal encoding of how often the same
node repeats inside the neighborhood, and a 0/1 identity row marking
which other slots hold the same node.  Absent feature kinds (width-0
stores) contribute no block and consume no parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass(frozen=True)
class EncoderConfig:
    d_time: int
    d_freq: int
    d_feat: int
    m: int
    alpha: float = None
    beta: float = None

    def __post_init__(self):
        if min(self.d_time, self.d_freq, self.d_feat) < 1 or self.m < 1:
            raise ValueError("encoder dimensions and scope m must be >= 1")
        if self.alpha is None:
            object.__setattr__(self, "alpha", float(np.sqrt(self.d_time)))
        if self.beta is None:
            object.__setattr__(self, "beta", float(np.sqrt(self.d_time)))
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("time-encoding constants must be positive")

    @classmethod
    def balanced(cls, dim, m, alpha=None, beta=None):
        """The default balance rule: one width for features, time, frequency."""
        return cls(d_time=dim, d_freq=dim, d_feat=dim, m=m, alpha=alpha, beta=beta)


@dataclass
class NeighborEmbedding:
    z: Tensor            # (m, d_enc); masked rows exactly zero
    mask: np.ndarray     # (m,) validity flags
    config: EncoderConfig = field(repr=False, default=None)


def _dt(store):
    return getattr(store, "dtype", np.float64)


def _omega(cfg):
    i = np.arange(1, cfg.d_time + 1, dtype=np.float64)
    return cfg.alpha ** (-(i - 1.0) / cfg.beta)


def time_encode(dt, cfg):
    """cos(dt * alpha^{-(i-1)/beta}) for i = 1..d_time."""
    return time_encode_array(np.asarray(dt, dtype=np.float64), cfg)


def time_encode_array(dts, cfg):
    return np.cos(dts[..., None] * _omega(cfg))


def freq_encode(freq, cfg):
    return freq_encode_array(np.asarray(freq, dtype=np.float64), cfg)


def freq_encode_array(freqs, cfg):
    """Sinusoidal multiplicity encoding: slot pair i holds
    (cos, sin) of freq / 10000^(2i/d_freq)."""
    d = cfg.d_freq
    pairs = (d + 1) // 2
    i = np.arange(1, pairs + 1, dtype=np.float64)
    angle = freqs[..., None] / np.power(10000.0, 2.0 * i / d)
    out = np.empty(freqs.shape + (2 * pairs,), dtype=np.float64)
    out[..., 0::2] = np.cos(angle)
    out[..., 1::2] = np.sin(angle)
    return out[..., :d]


def compute_frequencies(neighbors):
    """Multiplicity of each entry's node id within the list."""
    neighbors = np.asarray(neighbors)
    if neighbors.size == 0:
        return np.zeros(0, dtype=np.int64)
    eq = neighbors[:, None] == neighbors[None, :]
    return eq.sum(axis=1).astype(np.int64)


def identity_encode(neighbors, m=None):
    """0/1 co-occurrence rows: entry (j, i) is 1 iff slots j and i hold the
    same node.  Columns beyond the list length stay 0."""
    neighbors = np.asarray(neighbors)
    k = neighbors.shape[0]
    m = k if m is None else m
    out = np.zeros((k, m), dtype=np.float64)
    if k:
        out[:, :k] = neighbors[:, None] == neighbors[None, :]
    return out


def _masked_identity_block(ids, mask):
    """Batched identity encoding: (B, m, m) with invalid slots zeroed."""
    eq = ids[:, :, None] == ids[:, None, :]
    eq = eq & mask[:, :, None] & mask[:, None, :]
    return eq.astype(np.float64)


def encoded_width(cfg, d_v, d_e):
    """d_enc: feature blocks only exist for feature kinds the graph has."""
    return ((cfg.d_feat if d_v else 0) + (cfg.d_feat if d_e else 0)
            + cfg.d_time + cfg.d_freq + cfg.m)


def target_width(cfg, d_v):
    return (cfg.d_feat if d_v else 0) + cfg.d_time + cfg.d_freq


def init_encoder_params(store, cfg, d_v, d_e):
    if d_v:
        store.get_or_glorot("encoder/W_node", (d_v, cfg.d_feat))
    if d_e:
        store.get_or_glorot("encoder/W_edge", (d_e, cfg.d_feat))


def project_features(x_u, x_e, store, cfg):
    """GeLU of a learned projection per feature kind; width-0 inputs give
    width-0 outputs without touching any parameter."""
    outs = []
    for x, pname in ((x_u, "encoder/W_node"), (x_e, "encoder/W_edge")):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(1, -1)
        if x.shape[1] == 0:
            outs.append(Tensor(np.zeros((x.shape[0], 0))))
            continue
        W = store[pname]
        if x.shape[1] != W.shape[0]:
            raise ad.DimensionError(
                f"{pname} expects width {W.shape[0]}, got {x.shape[1]}")
        outs.append(ad.gelu(ad.matmul(Tensor(x), W)))
    return outs[0], outs[1]


def encode_neighborhood_batch(ids, dts, mask, node_rows, edge_rows, cfg, store):
    """Build taped neighbor embeddings (B, m, d_enc) for a padded batch.

    ids/dts/mask are (B, m) with padded slots masked off; node_rows and
    edge_rows are (B, m, d_v) / (B, m, d_e) feature slices (possibly
    width 0).  Masked rows come out exactly zero and pass no gradient.
    """
    B, m = ids.shape
    if m != cfg.m:
        raise ValueError(f"batch has scope {m}, config expects {cfg.m}")
    dt = _dt(store)
    maskf = mask.astype(dt)
    blocks = []

    for rows, pname in ((node_rows, "encoder/W_node"), (edge_rows, "encoder/W_edge")):
        width = 0 if rows is None else rows.shape[-1]
        if width == 0:
            continue
        W = store[pname]
        flat = ad.matmul(Tensor(np.asarray(rows, dtype=dt).reshape(B * m, width)), W)
        blocks.append(ad.reshape(ad.gelu(flat), (B, m, cfg.d_feat)))

    dts_valid = np.where(mask, dts, 0.0)
    blocks.append(Tensor(time_encode_array(dts_valid, cfg).astype(dt)))

    ie = _masked_identity_block(ids, mask)
    freqs = ie.sum(axis=2)  # padded slots get frequency 0
    blocks.append(Tensor(freq_encode_array(freqs, cfg).astype(dt)))
    blocks.append(Tensor(ie.astype(dt)))

    z = ad.concat(blocks, axis=2)
    return ad.mul(z, maskf[:, :, None])


def encode_target_batch(ids, node_rows, cfg, store):
    """Target embeddings (B, d_tv): projected node feature (if any), the
    zero-timespan time encoding, and the frequency-one encoding."""
    B = ids.shape[0]
    dt = _dt(store)
    blocks = []
    width = 0 if node_rows is None else node_rows.shape[-1]
    if width:
        W = store["encoder/W_node"]
        blocks.append(ad.gelu(ad.matmul(Tensor(np.asarray(node_rows, dtype=dt)), W)))
    blocks.append(Tensor(np.broadcast_to(time_encode_array(np.zeros(1), cfg),
                                         (B, cfg.d_time)).astype(dt)))
    blocks.append(Tensor(np.broadcast_to(freq_encode_array(np.ones(1), cfg),
                                         (B, cfg.d_freq)).astype(dt)))
    return ad.concat(blocks, axis=1)


def build_neighbor_embedding(nbhd, graph, cfg, store):
    """Single-neighborhood convenience wrapper over the batched encoder."""
    k = len(nbhd)
    ids = np.zeros((1, cfg.m), dtype=np.int64)
    dts = np.zeros((1, cfg.m), dtype=np.float64)
    mask = np.zeros((1, cfg.m), dtype=bool)
    ids[0, :k] = nbhd.nodes
    dts[0, :k] = nbhd.query.t - nbhd.ts
    mask[0, :k] = True
    node_rows = None
    if graph.d_v:
        node_rows = np.zeros((1, cfg.m, graph.d_v), dtype=np.float64)
        node_rows[0, :k] = graph.node_features[nbhd.nodes]
    edge_rows = None
    if graph.d_e:
        edge_rows = np.zeros((1, cfg.m, graph.d_e), dtype=np.float64)
        edge_rows[0, :k] = graph.edge_features[nbhd.eids]
    z = encode_neighborhood_batch(ids, dts, mask, node_rows, edge_rows, cfg, store)
    return NeighborEmbedding(z=ad.reshape(z, (cfg.m, encoded_width(cfg, graph.d_v, graph.d_e))),
                             mask=mask[0], config=cfg)


def build_target_embedding(v, graph, cfg, store):
    node_rows = graph.node_features[[v]] if graph.d_v else None
    out = encode_target_batch(np.array([v]), node_rows, cfg, store)
    return ad.reshape(out, (target_width(cfg, graph.d_v),))
