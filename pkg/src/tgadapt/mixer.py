"""One MLP-Mixer layer shared by the aggregator and the sampling policy.

Channel mixing first (per-slot MLP over the embedding axis), then token
mixing (per-channel MLP over the slot axis), each as LayerNorm -> Linear
-> GeLU -> Linear with a residual connection.
"""

from __future__ import annotations

from . import autodiff as ad


def init_mixer_params(store, prefix, slots, width, hidden_channel=None, hidden_token=None):
    hc = hidden_channel or width
    ht = hidden_token or slots
    if f"{prefix}/ln1_gamma" not in store:
        store.ones(f"{prefix}/ln1_gamma", (width,))
        store.zeros(f"{prefix}/ln1_beta", (width,))
        store.glorot(f"{prefix}/Wc1", (width, hc))
        store.zeros(f"{prefix}/bc1", (hc,))
        store.glorot(f"{prefix}/Wc2", (hc, width))
        store.zeros(f"{prefix}/bc2", (width,))
        store.ones(f"{prefix}/ln2_gamma", (width,))
        store.zeros(f"{prefix}/ln2_beta", (width,))
        store.glorot(f"{prefix}/Wt1", (slots, ht))
        store.zeros(f"{prefix}/bt1", (ht,))
        store.glorot(f"{prefix}/Wt2", (ht, slots))
        store.zeros(f"{prefix}/bt2", (slots,))


def mixer_forward(x, store, prefix):
    """Apply the mixer layer to ``x`` of shape (B, slots, width)."""
    B, s, d = x.shape

    def channel_mlp(t):
        flat = ad.reshape(t, (B * s, d))
        h = ad.gelu(ad.affine(flat, store[f"{prefix}/Wc1"], store[f"{prefix}/bc1"]))
        return ad.reshape(ad.affine(h, store[f"{prefix}/Wc2"], store[f"{prefix}/bc2"]), (B, s, d))

    def token_mlp(t):
        tt = ad.transpose(t, (0, 2, 1))           # (B, d, s)
        flat = ad.reshape(tt, (B * d, s))
        h = ad.gelu(ad.affine(flat, store[f"{prefix}/Wt1"], store[f"{prefix}/bt1"]))
        out = ad.affine(h, store[f"{prefix}/Wt2"], store[f"{prefix}/bt2"])
        return ad.transpose(ad.reshape(out, (B, d, s)), (0, 2, 1))

    y = ad.add(x, channel_mlp(ad.layer_norm(x, store[f"{prefix}/ln1_gamma"],
                                            store[f"{prefix}/ln1_beta"])))
    z = ad.add(y, token_mlp(ad.layer_norm(y, store[f"{prefix}/ln2_gamma"],
                                          store[f"{prefix}/ln2_beta"])))
    return z
