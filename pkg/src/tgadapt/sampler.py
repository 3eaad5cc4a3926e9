"""Learned neighbor-sampling policy and its score-function surrogate loss.

The policy embeds each candidate neighborhood (one mixer layer over the
neighbor axis), decodes per-slot logits with one of four predictors, and
samples n slots without replacement by sequential renormalized draws.
Because sampling is not differentiable, the policy parameters learn from
a surrogate loss: frozen per-pick coefficients times the log-probability
of each pick, built so its gradient matches the log-derivative estimate
of the model-loss gradient for the matching aggregator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .mixer import init_mixer_params, mixer_forward

DECODER_KINDS = ("linear", "gat", "gatv2", "trans")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    decoder: str = "linear"
    n: int = 10
    m: int = 25
    negative_slope: float = 0.2

    def __post_init__(self):
        if self.decoder not in DECODER_KINDS:
            raise ConfigError(f"unknown decoder {self.decoder!r}; expected one of {DECODER_KINDS}")
        if not 1 <= self.n <= self.m:
            raise ConfigError(f"need 1 <= n <= m, got n={self.n} m={self.m}")


@dataclass
class PolicyOutput:
    q: Tensor                 # (B, m), zero on masked slots, sums to 1 over valid
    log_q: Tensor             # (B, m), stable, sentinel on masked slots
    mask: np.ndarray          # (B, m)
    selected: np.ndarray = None        # (B, n) slot indices, -1 where unused
    selected_mask: np.ndarray = None   # (B, n)
    selected_log_q: Tensor = None      # (B, n), taped


def init_sampler_params(store, scfg, d_enc, d_target):
    init_mixer_params(store, "sampler/mixer", scfg.m, d_enc)
    k = scfg.decoder
    if k == "linear":
        store.get_or_glorot("sampler/w_linear", (d_enc, 1))
    elif k == "gat":
        store.get_or_glorot("sampler/W_gat", (d_enc, d_enc))
        store.get_or_glorot("sampler/a_gat", (2 * d_enc, 1))
    elif k == "gatv2":
        store.get_or_glorot("sampler/W_gatv2", (2 * d_enc, d_enc))
        store.get_or_glorot("sampler/a_gatv2", (d_enc, 1))
    elif k == "trans":
        store.get_or_glorot("sampler/W_trans_target", (d_target, d_enc))
        store.get_or_glorot("sampler/W_trans_nbr", (d_enc, d_enc))


def mixer_transform(z, mask, store):
    """One mixer layer over the neighborhood; masked rows forced to zero."""
    out = mixer_forward(z, store, "sampler/mixer")
    return ad.mul(out, mask.astype(store.dtype)[:, :, None])


def pad_target_to_neighbor_layout(z_target, ecfg, d_v, d_e, dtype=np.float64):
    """Embed the target's [feat || time || freq] blocks into the neighbor
    row layout by inserting zero edge-feature and identity blocks, so one
    shared projection can consume both."""
    B = z_target.shape[0]
    blocks = []
    off = ecfg.d_feat if d_v else 0
    if off:
        blocks.append(ad.index(z_target, (slice(None), slice(0, off))))
    if d_e:
        blocks.append(Tensor(np.zeros((B, ecfg.d_feat), dtype=dtype)))
    blocks.append(ad.index(z_target, (slice(None), slice(off, off + ecfg.d_time + ecfg.d_freq))))
    blocks.append(Tensor(np.zeros((B, ecfg.m), dtype=dtype)))
    return ad.concat(blocks, axis=1)


def decode_policy(z_raw, z_mixed, z_target, mask, scfg, ecfg, store, d_v, d_e):
    """Per-slot sampling distribution.

    The linear and bilinear decoders consume the mixer output; the two
    attention-style decoders score the raw neighbor rows against the
    target.  Softmax runs over valid slots only and log-probabilities are
    taken from the logits, never from log(q).
    """
    B, m, d_enc = z_raw.shape
    k = scfg.decoder
    if k == "linear":
        flat = ad.reshape(z_mixed, (B * m, d_enc))
        logits = ad.reshape(ad.matmul(flat, store["sampler/w_linear"]), (B, m))
    elif k == "gat":
        zt = pad_target_to_neighbor_layout(z_target, ecfg, d_v, d_e, store.dtype)
        W = store["sampler/W_gat"]
        pu = ad.reshape(ad.matmul(ad.reshape(z_raw, (B * m, d_enc)), W), (B, m, -1))
        pv = ad.reshape(ad.matmul(zt, W), (B, 1, -1))
        d_att = W.shape[1]
        a = store["sampler/a_gat"]
        a_u = ad.reshape(ad.index(a, (slice(0, d_att), slice(None))), (1, 1, d_att))
        a_v = ad.reshape(ad.index(a, (slice(d_att, 2 * d_att), slice(None))), (1, 1, d_att))
        raw = ad.add(ad.sum_over_axis(ad.mul(pu, a_u), axis=2),
                     ad.sum_over_axis(ad.mul(pv, a_v), axis=2))
        logits = ad.leaky_relu(raw, scfg.negative_slope)
    elif k == "gatv2":
        zt = pad_target_to_neighbor_layout(z_target, ecfg, d_v, d_e, store.dtype)
        zt_rows = ad.reshape(zt, (B, 1, d_enc))
        zt_tiled = ad.mul(zt_rows, Tensor(np.ones((B, m, 1), dtype=store.dtype)))
        pair = ad.reshape(ad.concat([z_raw, zt_tiled], axis=2), (B * m, 2 * d_enc))
        hidden = ad.leaky_relu(ad.matmul(pair, store["sampler/W_gatv2"]), scfg.negative_slope)
        logits = ad.reshape(ad.matmul(hidden, store["sampler/a_gatv2"]), (B, m))
    elif k == "trans":
        qt = ad.matmul(z_target, store["sampler/W_trans_target"])        # (B, d)
        kn = ad.reshape(ad.matmul(ad.reshape(z_mixed, (B * m, d_enc)),
                                  store["sampler/W_trans_nbr"]), (B, m, -1))
        raw = ad.sum_over_axis(ad.mul(ad.reshape(qt, (B, 1, -1)), kn), axis=2)
        counts = np.maximum(mask.sum(axis=1), 1).astype(np.float64)
        logits = ad.mul(raw, 1.0 / np.sqrt(counts)[:, None])
    else:  # pragma: no cover - guarded by SamplerConfig
        raise ConfigError(f"unknown decoder {k!r}")

    q = ad.softmax_masked(logits, mask)
    log_q = ad.log_softmax_masked(logits, mask)
    return PolicyOutput(q=q, log_q=log_q, mask=mask)


def sample_without_replacement(policy, n, rng):
    """Draw up to n distinct valid slots per row by sequential renormalized
    draws from q; records log q of each pick under the original q.

    Rows with fewer than n valid slots return all their valid slots.
    """
    q = np.array(policy.q.data, dtype=np.float64)
    B, m = q.shape
    selected = np.full((B, n), -1, dtype=np.int64)
    sel_mask = np.zeros((B, n), dtype=bool)
    probs = q.copy()
    for k in range(n):
        total = probs.sum(axis=1)
        alive = total > 1e-12
        if not alive.any():
            break
        u = rng.random(B) * total
        cums = np.cumsum(probs, axis=1)
        pick = (cums < u[:, None]).sum(axis=1)
        pick = np.minimum(pick, m - 1)
        selected[alive, k] = pick[alive]
        sel_mask[alive, k] = True
        probs[alive, pick[alive]] = 0.0

    # restore the finder's most-recent-first slot order (draw order is
    # irrelevant to the math; a fixed order keeps reductions deterministic)
    order = np.argsort(np.where(sel_mask, selected, np.iinfo(np.int64).max),
                       axis=1, kind="stable")
    selected = np.take_along_axis(selected, order, axis=1)
    sel_mask = np.take_along_axis(sel_mask, order, axis=1)

    gather_idx = np.maximum(selected, 0)
    rows = np.arange(B)[:, None]
    slq = ad.index(policy.log_q, (np.broadcast_to(rows, (B, n)), gather_idx))
    slq = ad.mul(slq, sel_mask.astype(policy.log_q.dtype))
    policy.selected = selected
    policy.selected_mask = sel_mask
    policy.selected_log_q = slq
    return policy


# ---------------------------------------------------------------------------
# surrogate losses (log-derivative construction with frozen coefficients)
# ---------------------------------------------------------------------------

def _frozen(x):
    if isinstance(x, Tensor):
        return np.array(x.data, copy=True)
    return np.asarray(x, dtype=np.float64)


def tgat_sample_coefficients(dL_dh, tau, V, sel_mask, contrib_mask):
    """Per-pick coefficients for the attention aggregator.

    With lam = sum_j tau_j and mu = sum_j tau_j V_j over the picks, the
    coefficient of log q(u_j) is
        <dL/dh, V_j> tau_j / (lam^3 n)  -  <dL/dh, mu> tau_j / (lam^4 n),
    the quotient-rule combination of the two log-derivative terms.
    """
    dL_dh, tau, V = _frozen(dL_dh), _frozen(tau), _frozen(V)
    tau = tau * sel_mask
    n_eff = np.maximum(sel_mask.sum(axis=1), 1).astype(np.float64)
    lam = tau.sum(axis=1)
    active = contrib_mask & (sel_mask.any(axis=1))
    if np.any(active & (lam <= 0.0)):
        raise FloatingPointError("attention normalizer must be positive")
    lam_safe = np.where(lam > 0, lam, 1.0)
    mu = (tau[:, :, None] * V).sum(axis=1)                       # (B, d)
    dot_v = (dL_dh[:, None, :] * V).sum(axis=2)                  # (B, n)
    dot_mu = (dL_dh * mu).sum(axis=1)                            # (B,)
    c = (dot_v * tau / lam_safe[:, None] ** 3
         - dot_mu[:, None] * tau / lam_safe[:, None] ** 4) / n_eff[:, None]
    return c * sel_mask * active[:, None]


def sample_loss_tgat(dL_dh, tau, V, selected_log_q, sel_mask=None, contrib_mask=None):
    """Surrogate loss whose policy gradient matches the attention
    aggregator's log-derivative estimate; all coefficients are frozen."""
    B, n = selected_log_q.shape
    if sel_mask is None:
        sel_mask = np.ones((B, n), dtype=bool)
    if contrib_mask is None:
        contrib_mask = np.ones(B, dtype=bool)
    c = tgat_sample_coefficients(dL_dh, tau, V, sel_mask, contrib_mask)
    return ad.sum_all(ad.mul(selected_log_q, Tensor(c)))


def graphmixer_sample_coefficients(dL_dh, w_prime, mu, sel_mask, contrib_mask):
    """Per-pick coefficients for the mixer aggregator:
    c_j = (1/n) sum_k dL/dh_k * w'_{jk} * mu_{jk}, everything frozen."""
    dL_dh, w_prime, mu = _frozen(dL_dh), _frozen(w_prime), _frozen(mu)
    if w_prime.ndim == 2:
        w_prime = np.broadcast_to(w_prime, mu.shape)
    n_eff = np.maximum(sel_mask.sum(axis=1), 1).astype(np.float64)
    c = (dL_dh[:, None, :] * w_prime * mu).sum(axis=2) / n_eff[:, None]
    return c * sel_mask * contrib_mask[:, None]


def sample_loss_graphmixer(dL_dh, w_prime, mu, selected_log_q, sel_mask=None,
                           contrib_mask=None):
    B, n = selected_log_q.shape
    if sel_mask is None:
        sel_mask = np.ones((B, n), dtype=bool)
    if contrib_mask is None:
        contrib_mask = np.ones(B, dtype=bool)
    c = graphmixer_sample_coefficients(dL_dh, w_prime, mu, sel_mask, contrib_mask)
    return ad.sum_all(ad.mul(selected_log_q, Tensor(c)))


def update_sampler(loss, store, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One backward pass plus one Adam step on the sampler's store only."""
    ad.backward(loss)
    store.adam_step(lr, beta1=beta1, beta2=beta2, eps=eps)
