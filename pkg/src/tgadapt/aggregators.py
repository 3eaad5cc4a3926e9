"""Temporal aggregators and the link-prediction head.

Messages concatenate the neighbor's previous-layer embedding, the edge
feature of the specific interaction, and a time encoding of the span.
The attention aggregator exposes its unnormalized exponential scores and
value rows, which the sampler's surrogate loss needs as frozen inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass(frozen=True)
class ModelConfig:
    aggregator: str = "graphmixer"      # "tgat" | "graphmixer"
    layers: int = None                  # default: 2 for tgat, 1 for graphmixer
    hidden: int = 100
    d_time: int = 100

    def __post_init__(self):
        if self.aggregator not in ("tgat", "graphmixer"):
            raise ValueError(f"unknown aggregator {self.aggregator!r}")
        if self.layers is None:
            object.__setattr__(self, "layers", 2 if self.aggregator == "tgat" else 1)
        if self.layers < 1 or self.hidden < 1 or self.d_time < 1:
            raise ValueError("layers, hidden and d_time must be >= 1")


def tgat_time_encode(dts, store, prefix="model"):
    """Learnable encoding cos(dt * w + b); dts is a plain array."""
    w = store[f"{prefix}/time_w"]
    b = store[f"{prefix}/time_b"]
    dt = Tensor(np.asarray(dts, dtype=store.dtype)[..., None])
    return ad.cosine_elementwise(ad.add(ad.mul(dt, w), b))


def init_time_encode_params(store, d_time, prefix="model", time_span=None):
    """Learnable frequencies start on a geometric ladder covering
    [1, time_span] so every timescale in the data is resolvable."""
    if f"{prefix}/time_w" not in store:
        span = float(time_span) if time_span else float(d_time)
        span = max(span, 2.0)
        w = span ** (-np.arange(d_time, dtype=np.float64) / max(d_time - 1, 1))
        store.add(f"{prefix}/time_w", w)
        store.zeros(f"{prefix}/time_b", (d_time,))


def build_messages(h_prev, edge_rows, dts, mask, store, d_time, prefix="model"):
    """Per-slot messages [h_prev || x_edge || time_enc(dt)], masked rows zero.

    h_prev: Tensor (B, s, d_in); edge_rows: (B, s, d_e) array or None.
    """
    blocks = [h_prev]
    if edge_rows is not None and edge_rows.shape[-1]:
        blocks.append(Tensor(np.asarray(edge_rows, dtype=store.dtype)))
    blocks.append(tgat_time_encode(np.where(mask, dts, 0.0), store, prefix))
    msg = ad.concat(blocks, axis=2)
    return ad.mul(msg, mask.astype(store.dtype)[:, :, None])


def init_tgat_params(store, layer, d_in, d_msg, d_out, prefix="model"):
    p = f"{prefix}/tgat{layer}"
    if f"{p}/W_q" not in store:
        store.glorot(f"{p}/W_q", (d_in + store[f"{prefix}/time_w"].shape[0], d_out))
        store.zeros(f"{p}/b_s", (d_out,))
        store.glorot(f"{p}/W_k", (d_msg, d_out))
        store.zeros(f"{p}/b_k", (d_out,))
        store.glorot(f"{p}/W_v", (d_msg, d_out))
        store.zeros(f"{p}/b_v", (d_out,))


def tgat_layer(h_target_prev, messages, mask, store, layer, d_e, sort_keys=None,
               prefix="model"):
    """Single-head attention over the valid message slots.

    Returns (h, tau, V): the aggregated embedding (B, d_out), the
    exponential attention scores with masked slots at 0, and the value
    rows.  Targets with no valid message fall back to the value
    projection of their own self-message.  ``sort_keys`` (ts, eid) sorts
    slots most-recent-first inside the layer so the reduction order, and
    therefore the output bits, cannot depend on the caller's slot order.
    """
    p = f"{prefix}/tgat{layer}"
    B, s, _ = messages.shape
    if sort_keys is not None:
        ts_key, eid_key = sort_keys
        order = np.lexsort((-eid_key, -ts_key, ~mask))  # valid rows first, ts desc
        rows = np.arange(B)[:, None]
        messages = ad.index(messages, (rows, order))
        mask = mask[rows, order]

    valid = mask.any(axis=1)
    counts = np.maximum(mask.sum(axis=1), 1).astype(np.float64)

    zero_dt = tgat_time_encode(np.zeros((B,)), store, prefix)
    q = ad.affine(ad.concat([h_target_prev, zero_dt], axis=1),
                  store[f"{p}/W_q"], store[f"{p}/b_s"])          # (B, d)

    d_msg = messages.shape[2]
    flat = ad.reshape(messages, (B * s, d_msg))
    K = ad.reshape(ad.affine(flat, store[f"{p}/W_k"], store[f"{p}/b_k"]), (B, s, -1))
    V = ad.reshape(ad.affine(flat, store[f"{p}/W_v"], store[f"{p}/b_v"]), (B, s, -1))

    scores = ad.sum_over_axis(ad.mul(ad.reshape(q, (B, 1, -1)), K), axis=2)
    scores = ad.mul(scores, 1.0 / np.sqrt(counts)[:, None])
    attn = ad.softmax_masked(scores, mask)
    h_attn = ad.sum_over_axis(ad.mul(ad.reshape(attn, (B, s, 1)), V), axis=1)

    # empty neighborhoods: value projection of the self-message
    self_msg = ad.concat([h_target_prev,
                          Tensor(np.zeros((B, d_e), dtype=store.dtype)),
                          zero_dt], axis=1)
    h_self = ad.affine(self_msg, store[f"{p}/W_v"], store[f"{p}/b_v"])
    h = ad.where_mask(valid[:, None], h_attn, h_self)

    tau = ad.mul(ad.exp(ad.where_mask(mask, scores, Tensor(np.zeros((B, s), dtype=store.dtype)))),
                 mask.astype(store.dtype))
    return h, tau, V


def init_graphmixer_params(store, slots, d_msg, prefix="model"):
    from .mixer import init_mixer_params
    init_mixer_params(store, f"{prefix}/gmixer", slots, d_msg)


def graphmixer_layer(messages, store, prefix="model"):
    """One mixer layer then the mean over all slots (padding included; the
    slot count is fixed and zero rows take part in the average)."""
    from .mixer import mixer_forward
    mixed = mixer_forward(messages, store, f"{prefix}/gmixer")
    return ad.mean_over_axis(mixed, axis=1)


def init_predictor_params(store, d_emb, hidden, prefix="model"):
    if f"{prefix}/pred_W1" not in store:
        store.glorot(f"{prefix}/pred_W1", (2 * d_emb, hidden))
        store.zeros(f"{prefix}/pred_b1", (hidden,))
        store.glorot(f"{prefix}/pred_W2", (hidden, 1))
        store.zeros(f"{prefix}/pred_b2", (1,))


def edge_predictor(h_u, h_v, store, prefix="model"):
    """Two-layer perceptron over concatenated endpoint embeddings -> logit."""
    x = ad.concat([h_u, h_v], axis=1)
    h = ad.relu(ad.affine(x, store[f"{prefix}/pred_W1"], store[f"{prefix}/pred_b1"]))
    out = ad.affine(h, store[f"{prefix}/pred_W2"], store[f"{prefix}/pred_b2"])
    return ad.reshape(out, (x.shape[0],))


def model_loss(pos_logits, neg_logits):
    """Mean binary cross entropy over positive/negative pairs, in the
    numerically stable logit form."""
    if pos_logits.shape != neg_logits.shape:
        raise ad.DimensionError("positive and negative logit counts differ")
    per_pair = ad.add(ad.softplus(ad.scale(pos_logits, -1.0)), ad.softplus(neg_logits))
    return ad.mean_over_axis(per_pair, axis=0)
