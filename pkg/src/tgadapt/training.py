"""End-to-end training: batch selection, neighbor finding, feature
slicing through the cache, adaptive sampling, propagation, dual losses,
and ranking evaluation.

One iteration follows the two-fold adaptive scheme: draw a batch of
training edges weighted by importance scores, sample candidate neighbors
per layer with the static finder, sub-sample supporting neighbors with
the learned policy, propagate, update the model from the prediction loss,
update the policy from the frozen-coefficient surrogate loss, and refresh
the importance scores from the positive logits.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import sampler as smp
from .aggregators import (ModelConfig, build_messages, edge_predictor,
                          graphmixer_layer, init_graphmixer_params,
                          init_predictor_params, init_tgat_params,
                          init_time_encode_params, model_loss, tgat_layer)
from .autodiff import Tensor
from .cache import cache_report, lookup, make_cache, maybe_replace
from .encoders import (EncoderConfig, encode_neighborhood_batch,
                       encode_target_batch, encoded_width,
                       init_encoder_params, target_width)
from .finder import batch_find_arrays
from .graph import DataError, chronological_split, load_manifest
from .params import ParamStore
from .selector import init_scores, select_batch, update_scores


class ConfigError(ValueError):
    pass


class EvaluationError(ValueError):
    pass


@dataclass
class RunConfig:
    manifest: str = None
    aggregator: str = "graphmixer"
    decoder: str = None                # default pairing per aggregator
    finder_policy: str = None          # default: uniform (tgat) / recent (graphmixer)
    m: int = 25
    n: int = 10
    batch_size: int = 600
    epochs: int = 200
    lr: float = 1e-4
    sampler_lr: float = None           # default: same as lr
    gamma: float = 0.1
    cache_fraction: float = 0.2
    cache_epsilon: float = None        # fraction of k; default 0.9
    adaptive_minibatch: bool = True
    adaptive_neighbor: bool = True
    hidden: int = 100
    enc_dim: int = 100                 # shared d_feat = d_time = d_freq
    model_time_dim: int = 100
    split_ratios: tuple = (0.6, 0.2, 0.2)
    window: int = None
    eval_negatives: int = 49
    eval_every: int = 0                # epochs between val evaluations; 0 = end only
    eval_chunk: int = 64
    time_span: float = None            # auto: graph timestamp span
    seeds: tuple = (0,)
    deterministic: bool = True
    precision: str = "float64"
    workers: int = None
    out_dir: str = None

    def __post_init__(self):
        if self.aggregator not in ("tgat", "graphmixer"):
            raise ConfigError(f"unknown aggregator {self.aggregator!r}")
        if self.decoder is None:
            self.decoder = "gatv2" if self.aggregator == "tgat" else "linear"
        if self.finder_policy is None:
            self.finder_policy = "uniform" if self.aggregator == "tgat" else "recent"
        if self.finder_policy not in ("uniform", "recent"):
            raise ConfigError(f"unknown finder policy {self.finder_policy!r}")
        if not (1 <= self.n <= self.m):
            raise ConfigError(f"need 1 <= n <= m, got n={self.n}, m={self.m}")
        if min(self.batch_size, self.epochs, self.hidden, self.enc_dim,
               self.model_time_dim, self.eval_negatives) < 1:
            raise ConfigError("counts must be >= 1")
        if self.precision not in ("float64", "float32"):
            raise ConfigError(f"unknown precision {self.precision!r}")
        if self.sampler_lr is None:
            self.sampler_lr = self.lr

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("split_ratios", "seeds"):
            if key in d and isinstance(d[key], list):
                d[key] = tuple(d[key])
        return cls(**d)


def derive_seed(seed, *keys):
    ss = np.random.SeedSequence([int(seed) & 0x7FFFFFFF] + [int(k) & 0x7FFFFFFF for k in keys])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def substream(seed, *keys):
    return np.random.default_rng(derive_seed(seed, *keys))


# stream purpose codes
_S_MODEL, _S_SAMPLER, _S_BATCH, _S_NEG, _S_FINDER, _S_POLICY, _S_EVAL = range(7)


class Trainer:
    """Holds one seed's training state; see module docstring for the loop."""

    def __init__(self, graph, split, cfg, seed, check_causality=False):
        self.graph = graph
        self.split = split
        self.cfg = cfg
        self.seed = int(seed)
        self.dtype = np.dtype(cfg.precision)
        self.check_causality = check_causality
        self.causality_violations = 0

        self.model_cfg = ModelConfig(aggregator=cfg.aggregator, hidden=cfg.hidden,
                                     d_time=cfg.model_time_dim)
        self.L = self.model_cfg.layers
        self.budget = cfg.m if cfg.adaptive_neighbor else cfg.n

        span = cfg.time_span
        if span is None:
            span = float(graph.ts[-1] - graph.ts[0]) if graph.num_events > 1 else None
        self.time_span = span

        self.model_store = ParamStore(derive_seed(seed, _S_MODEL), dtype=self.dtype)
        self._init_model_params()

        self.sampler_store = None
        if cfg.adaptive_neighbor:
            # spread the fixed-encoding frequencies across the data's
            # actual timespan; the default ladder only resolves tiny spans
            if span and span > 2.0:
                beta = (cfg.enc_dim - 1) / np.log10(span) if cfg.enc_dim > 1 else 1.0
                self.ecfg = EncoderConfig(d_time=cfg.enc_dim, d_freq=cfg.enc_dim,
                                          d_feat=cfg.enc_dim, m=cfg.m,
                                          alpha=10.0, beta=max(beta, 1e-3))
            else:
                self.ecfg = EncoderConfig.balanced(cfg.enc_dim, cfg.m)
            self.scfg = smp.SamplerConfig(decoder=cfg.decoder, n=cfg.n, m=cfg.m)
            self.sampler_store = ParamStore(derive_seed(seed, _S_SAMPLER), dtype=self.dtype)
            init_encoder_params(self.sampler_store, self.ecfg, graph.d_v, graph.d_e)
            d_enc = encoded_width(self.ecfg, graph.d_v, graph.d_e)
            d_tv = target_width(self.ecfg, graph.d_v)
            smp.init_sampler_params(self.sampler_store, self.scfg, d_enc, d_tv)

        train_eids = split.train_eids()
        if train_eids.size == 0:
            raise DataError("empty training split")
        self.train_eids = train_eids
        self.iters_per_epoch = int(np.ceil(train_eids.size / cfg.batch_size))
        self.scores = init_scores(train_eids.size, cfg.gamma,
                                  base_eid=int(train_eids[0])) if cfg.adaptive_minibatch else None
        self.dst_pool = np.unique(graph.dst[train_eids])

        self.cache = None
        if graph.d_e and cfg.cache_fraction and cfg.cache_fraction > 0:
            self.cache = make_cache(graph.num_events, cfg.cache_fraction,
                                    epsilon=cfg.cache_epsilon, features=graph.edge_features)

        self.iteration = 0
        self.epoch = 0
        self.phase_seconds = {"NF": 0.0, "AS": 0.0, "FS": 0.0, "PP": 0.0}

    # -- initialization ----------------------------------------------------

    def _init_model_params(self):
        g, cfg = self.graph, self.cfg
        init_time_encode_params(self.model_store, self.model_cfg.d_time,
                                time_span=self.time_span)
        d_T = self.model_cfg.d_time
        if cfg.aggregator == "tgat":
            d = self.model_cfg.hidden
            d_in1 = g.d_v
            init_tgat_params(self.model_store, 1, d_in1, d_in1 + g.d_e + d_T, d)
            if self.L >= 2:
                init_tgat_params(self.model_store, 2, d, d + g.d_e + d_T, d)
            self.d_emb = d
        else:
            d_msg = g.d_v + g.d_e + d_T
            init_graphmixer_params(self.model_store, cfg.n, d_msg)
            self.d_emb = d_msg
        init_predictor_params(self.model_store, self.d_emb, self.model_cfg.hidden)

    # -- per-layer neighborhood pipeline ------------------------------------

    def _edge_feature_rows(self, eids, mask, train_mode):
        """FS: slice edge features for masked (B, k) eid blocks."""
        g = self.graph
        if not g.d_e:
            return None
        flat = eids[mask]
        t0 = time.perf_counter()
        if train_mode and self.cache is not None:
            feats, _ = lookup(self.cache, flat)
        else:
            feats = g.edge_features[flat]
        out = np.zeros(eids.shape + (g.d_e,), dtype=self.dtype)
        out[mask] = feats
        self.phase_seconds["FS"] += time.perf_counter() - t0
        return out

    def _node_feature_rows(self, ids, mask=None):
        g = self.graph
        if not g.d_v:
            return None
        rows = g.node_features[ids].astype(self.dtype)
        if mask is not None:
            rows = rows * mask[..., None].astype(self.dtype)
        return rows

    def _layer_neighborhoods(self, nodes, times, layer, train_mode, it_key):
        """NF + AS for one layer: candidates, then the supporting subset.

        Returns a record with padded (B, n) selection arrays, plus the
        policy output when the adaptive sampler ran.
        """
        g, cfg = self.graph, self.cfg
        B = nodes.shape[0]

        t0 = time.perf_counter()
        fseed = derive_seed(self.seed, _S_FINDER, it_key, layer)
        idx, cnt = batch_find_arrays(g, nodes, times, self.budget,
                                     policy=cfg.finder_policy, seed=fseed,
                                     workers=cfg.workers)
        slot = np.arange(self.budget)[None, :]
        mask = slot < cnt[:, None]
        safe = np.where(mask, idx, 0)
        ids = np.where(mask, g.tcsr_neighbors[safe], 0)
        tss = np.where(mask, g.tcsr_ts[safe], 0.0)
        eids = np.where(mask, g.tcsr_eids[safe], 0)
        dts = np.where(mask, times[:, None] - tss, 0.0)
        self.phase_seconds["NF"] += time.perf_counter() - t0

        if self.check_causality and mask.any():
            self.causality_violations += int((tss[mask] >= np.repeat(times, mask.sum(1))).sum())

        if not cfg.adaptive_neighbor:
            return {
                "B": B, "policy": None, "contrib": np.zeros(B, dtype=bool),
                "sel_ids": ids, "sel_dts": dts, "sel_eids": eids, "sel_mask": mask,
            }

        edge_rows = self._edge_feature_rows(eids, mask, train_mode)
        node_rows = self._node_feature_rows(ids, mask)
        if node_rows is not None:
            node_rows = node_rows.reshape(B, cfg.m, g.d_v)

        t0 = time.perf_counter()
        z_raw = encode_neighborhood_batch(ids, dts, mask, node_rows, edge_rows,
                                          self.ecfg, self.sampler_store)
        z_mixed = smp.mixer_transform(z_raw, mask, self.sampler_store)
        z_target = encode_target_batch(nodes, self._node_feature_rows(nodes),
                                       self.ecfg, self.sampler_store)
        policy = smp.decode_policy(z_raw, z_mixed, z_target, mask, self.scfg,
                                   self.ecfg, self.sampler_store, g.d_v, g.d_e)
        rng = substream(self.seed, _S_POLICY, it_key, layer)
        smp.sample_without_replacement(policy, cfg.n, rng)
        self.phase_seconds["AS"] += time.perf_counter() - t0

        sel = policy.selected
        smask = policy.selected_mask
        safe_sel = np.maximum(sel, 0)
        rows = np.arange(B)[:, None]
        return {
            "B": B, "policy": policy,
            "contrib": cnt > cfg.n,  # only neighborhoods with a real choice
            "sel_ids": np.where(smask, ids[rows, safe_sel], 0),
            "sel_dts": np.where(smask, dts[rows, safe_sel], 0.0),
            "sel_eids": np.where(smask, eids[rows, safe_sel], 0),
            "sel_mask": smask,
        }

    def _forward(self, nodes, times, train_mode, it_key):
        """Embed (nodes, times) through the stacked aggregators.

        Returns (h_top, records) where records[l] carries everything the
        sample loss needs for layer l.
        """
        g, cfg = self.graph, self.cfg
        act = {self.L: (np.asarray(nodes, dtype=np.int64), np.asarray(times, dtype=np.float64))}
        records = {}
        for l in range(self.L, 0, -1):
            tn, tt = act[l]
            rec = self._layer_neighborhoods(tn, tt, l, train_mode, it_key)
            records[l] = rec
            if l > 1:
                # next layer embeds the targets themselves (their h^{l-1}
                # is this layer's query) plus the selected neighbors at
                # their interaction times
                width = rec["sel_ids"].shape[1]
                nxt_n = np.concatenate([tn, rec["sel_ids"].ravel()])
                nxt_t = np.concatenate([tt, np.repeat(tt, width) - rec["sel_dts"].ravel()])
                act[l - 1] = (nxt_n, nxt_t)

        t0 = time.perf_counter()
        if cfg.aggregator == "graphmixer":
            rec = records[1]
            sel_w = rec["sel_ids"].shape[1]
            edge_rows = self._edge_feature_rows(rec["sel_eids"], rec["sel_mask"], train_mode)
            nbr_feats = self._node_feature_rows(rec["sel_ids"], rec["sel_mask"])
            h_prev = Tensor(nbr_feats if nbr_feats is not None
                            else np.zeros(rec["sel_ids"].shape + (0,), dtype=self.dtype))
            msgs = build_messages(h_prev, edge_rows, rec["sel_dts"], rec["sel_mask"],
                                  self.model_store, self.model_cfg.d_time)
            rec["messages"] = msgs
            h = graphmixer_layer(msgs, self.model_store)
            rec["h"] = h.retain_grad()  # dL/dh feeds the surrogate loss
            self.phase_seconds["PP"] += time.perf_counter() - t0
            return h, records

        # tgat: bottom-up through the activation sets
        h_prev_np = None
        h = None
        for l in range(1, self.L + 1):
            rec = records[l]
            B = rec["B"]
            n_slots = rec["sel_ids"].shape[1]
            edge_rows = self._edge_feature_rows(rec["sel_eids"], rec["sel_mask"], train_mode)
            if l == 1:
                nbr_feats = self._node_feature_rows(rec["sel_ids"], rec["sel_mask"])
                h_nbr = Tensor(nbr_feats if nbr_feats is not None
                               else np.zeros(rec["sel_ids"].shape + (0,), dtype=self.dtype))
                tgt_feats = self._node_feature_rows(act[1][0])
                h_tgt = Tensor(tgt_feats if tgt_feats is not None
                               else np.zeros((B, 0), dtype=self.dtype))
            else:
                h_tgt = ad.index(h, (slice(0, B),))
                h_nbr = ad.reshape(ad.index(h, (slice(B, None),)),
                                   (B, n_slots, self.d_emb))
            msgs = build_messages(h_nbr, edge_rows, rec["sel_dts"], rec["sel_mask"],
                                  self.model_store, self.model_cfg.d_time)
            h_out, tau, V = tgat_layer(h_tgt, msgs, rec["sel_mask"], self.model_store,
                                       l, g.d_e)
            rec["h"] = h_out.retain_grad()  # dL/dh feeds the surrogate loss
            rec["tau"] = tau
            rec["V"] = V
            h = h_out
        self.phase_seconds["PP"] += time.perf_counter() - t0
        return h, records

    # -- training loop -------------------------------------------------------

    def _select_batch_eids(self, it_key):
        cfg = self.cfg
        if cfg.adaptive_minibatch:
            rng = substream(self.seed, _S_BATCH, it_key)
            return select_batch(self.scores, min(cfg.batch_size, self.train_eids.size), rng)
        start = (self.iteration % self.iters_per_epoch) * cfg.batch_size
        return self.train_eids[start:start + cfg.batch_size]

    def train_iteration(self):
        g, cfg = self.graph, self.cfg
        it_key = self.iteration
        eids = self._select_batch_eids(it_key)
        b = eids.size
        srcs, dsts, ts = g.src[eids], g.dst[eids], g.ts[eids]
        rng = substream(self.seed, _S_NEG, it_key)
        negs = self.dst_pool[rng.integers(0, self.dst_pool.size, size=b)]

        nodes = np.concatenate([srcs, dsts, negs])
        times = np.concatenate([ts, ts, ts])
        h, records = self._forward(nodes, times, train_mode=True, it_key=it_key)

        t0 = time.perf_counter()
        h_src = ad.index(h, (slice(0, b),))
        h_dst = ad.index(h, (slice(b, 2 * b),))
        h_neg = ad.index(h, (slice(2 * b, 3 * b),))
        pos_logits = edge_predictor(h_src, h_dst, self.model_store)
        neg_logits = edge_predictor(h_src, h_neg, self.model_store)
        loss = model_loss(pos_logits, neg_logits)
        ad.backward(loss)
        self.model_store.adam_step(cfg.lr)
        self.phase_seconds["PP"] += time.perf_counter() - t0

        if cfg.adaptive_neighbor:
            t0 = time.perf_counter()
            s_loss = self._build_sample_loss(records)
            if s_loss is not None:
                smp.update_sampler(s_loss, self.sampler_store, cfg.sampler_lr)
            self.phase_seconds["AS"] += time.perf_counter() - t0

        if cfg.adaptive_minibatch:
            update_scores(self.scores, eids, pos_logits.data)

        self.iteration += 1
        return float(loss.data)

    def _build_sample_loss(self, records):
        cfg = self.cfg
        total = None
        for l, rec in records.items():
            policy = rec["policy"]
            if policy is None or rec["h"].grad is None:
                continue
            dL_dh = rec["h"].grad
            if cfg.aggregator == "tgat":
                term = smp.sample_loss_tgat(dL_dh, rec["tau"], rec["V"],
                                            policy.selected_log_q,
                                            sel_mask=rec["sel_mask"],
                                            contrib_mask=rec["contrib"])
            else:
                msgs = rec["messages"].data
                store = self.model_store
                Wc1 = store["model/gmixer/Wc1"].data
                Wt1 = store["model/gmixer/Wt1"].data
                Wt2 = store["model/gmixer/Wt2"].data
                mu = msgs @ Wc1                                # (B, n, d)
                w_row = 1.0 + (Wt1 @ Wt2).sum(axis=1)          # slot -> mean weight
                w_prime = np.broadcast_to(w_row[None, :, None], mu.shape)
                term = smp.sample_loss_graphmixer(dL_dh, w_prime, mu,
                                                  policy.selected_log_q,
                                                  sel_mask=rec["sel_mask"],
                                                  contrib_mask=rec["contrib"])
            total = term if total is None else ad.add(total, term)
        return total

    def train_epoch(self):
        losses = []
        for _ in range(self.iters_per_epoch):
            losses.append(self.train_iteration())
        if self.cache is not None:
            maybe_replace(self.cache)
        self.epoch += 1
        return float(np.mean(losses))

    # -- evaluation ----------------------------------------------------------

    def score_edges(self, srcs, cands, times, eval_key=0):
        """Logits for (src, candidate) pairs at the given times; cands is
        (B, C) against a shared source per row."""
        srcs = np.asarray(srcs)
        cands = np.asarray(cands)
        B, C = cands.shape
        nodes = np.concatenate([srcs, cands.ravel()])
        times = np.asarray(times)
        all_times = np.concatenate([times, np.repeat(times, C)])
        h, _ = self._forward(nodes, all_times, train_mode=False, it_key=eval_key)
        h_src = ad.index(h, (slice(0, B),))
        h_src_rep = ad.reshape(ad.mul(ad.reshape(h_src, (B, 1, self.d_emb)),
                                      Tensor(np.ones((B, C, 1), dtype=self.dtype))),
                               (B * C, self.d_emb))
        h_cand = ad.index(h, (slice(B, None),))
        logits = edge_predictor(h_src_rep, h_cand, self.model_store)
        return logits.data.reshape(B, C)

    def evaluate(self, eids, num_negatives=None, eval_code=0):
        cfg = self.cfg
        num_negatives = num_negatives or cfg.eval_negatives
        eids = np.asarray(eids)
        if eids.size == 0:
            raise EvaluationError("empty evaluation split")
        g = self.graph
        rng = substream(self.seed, _S_EVAL, eval_code)
        rr = []
        for lo in range(0, eids.size, cfg.eval_chunk):
            chunk = eids[lo:lo + cfg.eval_chunk]
            srcs, dsts, ts = g.src[chunk], g.dst[chunk], g.ts[chunk]
            negs = sample_negatives(rng, self.dst_pool, dsts, num_negatives)
            cands = np.concatenate([dsts[:, None], negs], axis=1)
            logits = self.score_edges(srcs, cands, ts, eval_key=1_000_000 + lo)
            ranks = 1 + (logits[:, 1:] >= logits[:, :1]).sum(axis=1)
            rr.extend(1.0 / ranks)
        return float(np.mean(rr))

    def save_checkpoints(self, directory):
        directory = Path(directory)
        self.model_store.save(directory / "model")
        if self.sampler_store is not None:
            self.sampler_store.save(directory / "sampler")

    def load_checkpoints(self, directory):
        directory = Path(directory)
        self.model_store.load(directory / "model")
        if self.sampler_store is not None:
            self.sampler_store.load(directory / "sampler")


def sample_negatives(rng, pool, true_dsts, k):
    """(B, k) negatives drawn from the pool, never equal to the true
    destination of their row."""
    if pool.size < 2:
        raise EvaluationError("need at least two candidate destinations")
    B = true_dsts.shape[0]
    negs = pool[rng.integers(0, pool.size, size=(B, k))]
    while True:
        bad = negs == true_dsts[:, None]
        nbad = int(bad.sum())
        if nbad == 0:
            return negs
        negs[bad] = pool[rng.integers(0, pool.size, size=nbad)]


def evaluate_mrr(score_fn, srcs, dsts, times, dst_pool, num_negatives=49, rng=None):
    """Rank each positive edge's logit among itself plus sampled negative
    destinations (rank 1 = highest, ties pessimistic); returns the mean
    reciprocal rank.  ``score_fn(srcs, cands, times) -> (B, C) logits``."""
    srcs, dsts, times = map(np.asarray, (srcs, dsts, times))
    if srcs.size == 0:
        raise EvaluationError("empty evaluation split")
    rng = rng or np.random.default_rng(0)
    negs = sample_negatives(rng, np.asarray(dst_pool), dsts, num_negatives)
    cands = np.concatenate([dsts[:, None], negs], axis=1)
    logits = np.asarray(score_fn(srcs, cands, times))
    ranks = 1 + (logits[:, 1:] >= logits[:, :1]).sum(axis=1)
    return float(np.mean(1.0 / ranks))


# ---------------------------------------------------------------------------
# experiment driver
# ---------------------------------------------------------------------------

def run_experiment(cfg, graph=None, out_dir=None):
    """Full multi-seed run: train, evaluate, and write metrics/checkpoints.

    Returns the summary dict.  In deterministic mode the metrics files
    contain no wall-clock fields, so equal seeds give equal bytes.
    """
    if graph is None:
        if not cfg.manifest:
            raise ConfigError("config needs a dataset manifest")
        graph = load_manifest(cfg.manifest)
    out_dir = Path(out_dir or cfg.out_dir or "runs")
    out_dir.mkdir(parents=True, exist_ok=True)
    split = chronological_split(graph, cfg.split_ratios, cfg.window)

    per_seed = []
    for seed in cfg.seeds:
        trainer = Trainer(graph, split, cfg, seed)
        epochs_out = []
        t_start = time.perf_counter()
        for epoch in range(cfg.epochs):
            phase_before = dict(trainer.phase_seconds)
            e0 = time.perf_counter()
            train_loss = trainer.train_epoch()
            epoch_wall = time.perf_counter() - e0
            rec = {"epoch": epoch, "train_loss": train_loss}
            if cfg.eval_every and (epoch + 1) % cfg.eval_every == 0:
                rec["val_mrr"] = trainer.evaluate(split.val_eids(), eval_code=epoch)
            if trainer.cache is not None:
                st = trainer.cache.epoch_stats[epoch]
                rec["cache_hit_rate"] = st.hit_rate()
                rec["cache_replaced"] = trainer.cache.replacements[epoch]
            if not cfg.deterministic:
                rec["phase_seconds"] = {k: trainer.phase_seconds[k] - phase_before[k]
                                        for k in trainer.phase_seconds}
                rec["epoch_seconds"] = epoch_wall
            epochs_out.append(rec)
        val_mrr = trainer.evaluate(split.val_eids(), eval_code=10_000)
        test_mrr = trainer.evaluate(split.test_eids(), eval_code=20_000)
        record = {
            "seed": seed,
            "config": _config_dict(cfg),
            "epochs": epochs_out,
            "final": {"val_mrr": val_mrr, "test_mrr": test_mrr},
        }
        if not cfg.deterministic:
            record["total_seconds"] = time.perf_counter() - t_start
            record["phase_seconds_total"] = dict(trainer.phase_seconds)
        path = out_dir / f"metrics_seed{seed}.json"
        with open(path, "w") as fh:
            json.dump(record, fh, indent=2, sort_keys=True)
        trainer.save_checkpoints(out_dir / f"checkpoint_seed{seed}")
        if trainer.cache is not None:
            with open(out_dir / f"cache_seed{seed}.json", "w") as fh:
                json.dump(cache_report(trainer.cache), fh, indent=2, sort_keys=True)
        per_seed.append(record)

    tests = [r["final"]["test_mrr"] for r in per_seed]
    vals = [r["final"]["val_mrr"] for r in per_seed]
    summary = {
        "config": _config_dict(cfg),
        "seeds": list(cfg.seeds),
        "test_mrr_mean": float(np.mean(tests)),
        "test_mrr_std": float(np.std(tests)),
        "val_mrr_mean": float(np.mean(vals)),
        "val_mrr_std": float(np.std(vals)),
    }
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return summary


def _config_dict(cfg):
    d = asdict(cfg)
    d["split_ratios"] = list(d["split_ratios"])
    d["seeds"] = list(d["seeds"])
    return d
