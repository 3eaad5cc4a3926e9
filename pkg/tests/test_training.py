"""Trainer orchestration: iteration semantics, ablation identity,
ranking evaluation, determinism, reporting, CLI."""

import json
import time

import numpy as np
import pytest

from tgadapt import autodiff as ad
from tgadapt.aggregators import (build_messages, edge_predictor,
                                 graphmixer_layer, init_graphmixer_params,
                                 init_predictor_params, init_time_encode_params,
                                 model_loss)
from tgadapt.autodiff import Tensor, ancestors
from tgadapt.cli import main as cli_main
from tgadapt.finder import batch_find_arrays
from tgadapt.graph import chronological_split
from tgadapt.params import ParamStore
from tgadapt.synth import SynthConfig, generate, generate_files
from tgadapt.training import (ConfigError, EvaluationError, RunConfig, Trainer,
                              _S_FINDER, _S_MODEL, _S_NEG, derive_seed,
                              evaluate_mrr, run_experiment, substream)


@pytest.fixture(scope="module")
def toy_data():
    g, labels = generate(SynthConfig(nodes=120, events=2500, communities=4,
                                     deprecated_prob=0.2, migrate_frac=0.3, seed=11))
    return g, chronological_split(g)


def tiny_cfg(**kw):
    base = dict(aggregator="graphmixer", finder_policy="uniform", m=6, n=3,
                batch_size=32, epochs=1, hidden=8, enc_dim=5, model_time_dim=6,
                lr=1e-3, eval_chunk=64, seeds=(0,))
    base.update(kw)
    return RunConfig(**base)


class TestRunConfig:
    def test_defaults_pair_decoder_with_aggregator(self):
        assert RunConfig(aggregator="tgat").decoder == "gatv2"
        assert RunConfig(aggregator="graphmixer").decoder == "linear"
        assert RunConfig(aggregator="tgat").finder_policy == "uniform"
        assert RunConfig(aggregator="graphmixer").finder_policy == "recent"

    def test_budget_ordering_enforced(self):
        with pytest.raises(ConfigError):
            RunConfig(m=5, n=10)

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"learning_rate": 0.1})


class TestTrainIteration:
    def test_losses_finite_and_decreasing_trend(self, toy_data):
        g, split = toy_data
        tr = Trainer(g, split, tiny_cfg(), seed=0)
        losses = [tr.train_iteration() for _ in range(12)]
        assert np.isfinite(losses).all()
        assert np.mean(losses[-4:]) < np.mean(losses[:4]) + 0.05

    def test_tgat_two_layer_iteration(self, toy_data):
        g, split = toy_data
        cfg = tiny_cfg(aggregator="tgat", m=4, n=2, batch_size=12)
        tr = Trainer(g, split, cfg, seed=0)
        losses = [tr.train_iteration() for _ in range(3)]
        assert np.isfinite(losses).all()

    def test_fixed_seed_bit_identical_loss_trajectory(self, toy_data):
        g, split = toy_data

        def run():
            tr = Trainer(g, split, tiny_cfg(), seed=7)
            return [tr.train_iteration() for _ in range(6)]

        a, b = run(), run()
        assert a == b

    def test_policy_is_top_down(self, toy_data):
        """The sampling distribution must not depend on any aggregator
        parameter or hidden state."""
        g, split = toy_data
        cfg = tiny_cfg(aggregator="tgat", m=4, n=2, batch_size=8)
        tr = Trainer(g, split, cfg, seed=1)
        nodes = g.src[split.train_eids()[:8]]
        times = g.ts[split.train_eids()[:8]]
        _, records = tr._forward(nodes, times, train_mode=True, it_key=0)
        model_params = {id(p) for p in tr.model_store.parameters()}
        for rec in records.values():
            anc = {id(t) for t in ancestors(rec["policy"].q)}
            assert not (anc & model_params)

    def test_sampler_updates_leave_model_untouched(self, toy_data):
        g, split = toy_data
        tr = Trainer(g, split, tiny_cfg(), seed=2)
        tr.train_iteration()
        model_before = {n: tr.model_store[n].data.copy() for n in tr.model_store.names()}
        sampler_before = {n: tr.sampler_store[n].data.copy()
                          for n in tr.sampler_store.names()}
        # second iteration changes both stores through their own losses
        tr.train_iteration()
        assert any(not np.array_equal(model_before[n], tr.model_store[n].data)
                   for n in model_before)
        assert any(not np.array_equal(sampler_before[n], tr.sampler_store[n].data)
                   for n in sampler_before)


def reference_baseline_losses(graph, split, cfg, seed, iters):
    """Straight-line baseline trainer: chronological batches, static finder
    with budget n, mixer aggregation, no sampler anywhere.  Written
    independently of the Trainer class as the hand-stepped reference."""
    store = ParamStore(derive_seed(seed, _S_MODEL), dtype=np.float64)
    d_T = cfg.model_time_dim
    d_msg = graph.d_v + graph.d_e + d_T
    init_time_encode_params(store, d_T, time_span=float(graph.ts[-1] - graph.ts[0]))
    init_graphmixer_params(store, cfg.n, d_msg)
    init_predictor_params(store, d_msg, cfg.hidden)

    train_eids = split.train_eids()
    iters_per_epoch = int(np.ceil(train_eids.size / cfg.batch_size))
    pool = np.unique(graph.dst[train_eids])
    losses = []
    for it in range(iters):
        start = (it % iters_per_epoch) * cfg.batch_size
        eids = train_eids[start:start + cfg.batch_size]
        b = eids.size
        srcs, dsts, ts = graph.src[eids], graph.dst[eids], graph.ts[eids]
        rng = substream(seed, _S_NEG, it)
        negs = pool[rng.integers(0, pool.size, size=b)]
        nodes = np.concatenate([srcs, dsts, negs])
        times = np.concatenate([ts, ts, ts])

        fseed = derive_seed(seed, _S_FINDER, it, 1)
        idx, cnt = batch_find_arrays(graph, nodes, times, cfg.n,
                                     policy=cfg.finder_policy, seed=fseed)
        slot = np.arange(cfg.n)[None, :]
        mask = slot < cnt[:, None]
        safe = np.where(mask, idx, 0)
        ids = np.where(mask, graph.tcsr_neighbors[safe], 0)
        dts = np.where(mask, times[:, None] - graph.tcsr_ts[safe], 0.0)
        seids = np.where(mask, graph.tcsr_eids[safe], 0)

        edge_rows = None
        if graph.d_e:
            flat = seids[mask]
            edge_rows = np.zeros(seids.shape + (graph.d_e,))
            edge_rows[mask] = graph.edge_features[flat]
        nbr = graph.node_features[ids] * mask[..., None] if graph.d_v else None
        h_prev = Tensor(nbr if nbr is not None else np.zeros(ids.shape + (0,)))
        msgs = build_messages(h_prev, edge_rows, dts, mask, store, d_T)
        h = graphmixer_layer(msgs, store)
        h_src = ad.index(h, (slice(0, b),))
        h_dst = ad.index(h, (slice(b, 2 * b),))
        h_neg = ad.index(h, (slice(2 * b, 3 * b),))
        loss = model_loss(edge_predictor(h_src, h_dst, store),
                          edge_predictor(h_src, h_neg, store))
        ad.backward(loss)
        store.adam_step(cfg.lr)
        losses.append(float(loss.data))
    return losses, store


class TestAblationIdentity:
    def test_switches_off_match_straight_line_reference(self, toy_data):
        """Both adaptive switches off and m = n: the trainer must be
        bit-identical to the reference that never builds a sampler."""
        g, split = toy_data
        cfg = tiny_cfg(adaptive_minibatch=False, adaptive_neighbor=False,
                       m=3, n=3, cache_fraction=0.0)
        tr = Trainer(g, split, cfg, seed=5)
        assert tr.sampler_store is None
        trainer_losses = [tr.train_iteration() for _ in range(5)]
        ref_losses, ref_store = reference_baseline_losses(g, split, cfg, 5, 5)
        assert trainer_losses == ref_losses
        for name in ref_store.names():
            np.testing.assert_array_equal(tr.model_store[name].data,
                                          ref_store[name].data)

    def test_cache_on_does_not_change_values(self, toy_data):
        g, split = toy_data
        base = tiny_cfg(adaptive_minibatch=False, adaptive_neighbor=False,
                        m=3, n=3, cache_fraction=0.0)
        cached = tiny_cfg(adaptive_minibatch=False, adaptive_neighbor=False,
                          m=3, n=3, cache_fraction=0.2)
        l1 = [Trainer(g, split, base, seed=6).train_iteration() for _ in range(1)]
        l2 = [Trainer(g, split, cached, seed=6).train_iteration() for _ in range(1)]
        assert l1 == l2


class TestEvaluateMrr:
    def test_oracle_predictor_gives_exactly_one(self, toy_data):
        g, split = toy_data
        eids = split.test_eids()[:200]

        def oracle(srcs, cands, times):
            return (cands == cands[:, :1]).astype(float)

        mrr = evaluate_mrr(oracle, g.src[eids], g.dst[eids], g.ts[eids],
                           np.unique(g.dst), rng=np.random.default_rng(0))
        assert mrr == 1.0

    def test_known_ranks_arithmetic(self):
        logits = {0: [5.0, 1, 1, 1, 1], 1: [3.0, 4, 1, 1, 1], 2: [2.0, 4, 3, 2.5, 1]}

        def scorer(srcs, cands, times):
            return np.array([logits[i] for i in range(3)])

        mrr = evaluate_mrr(scorer, np.arange(3), np.arange(3), np.zeros(3),
                           np.arange(10), num_negatives=4,
                           rng=np.random.default_rng(0))
        np.testing.assert_allclose(mrr, (1 + 0.5 + 0.25) / 3)

    def test_pessimistic_tie_handling(self):
        def scorer(srcs, cands, times):
            return np.zeros((1, 5))

        mrr = evaluate_mrr(scorer, np.zeros(1, int), np.zeros(1, int), np.zeros(1),
                           np.arange(10), num_negatives=4,
                           rng=np.random.default_rng(0))
        np.testing.assert_allclose(mrr, 1 / 5)

    def test_random_predictor_near_closed_form(self):
        rng = np.random.default_rng(3)

        def scorer(srcs, cands, times):
            return rng.normal(size=cands.shape)

        n_edges = 4000
        mrr = evaluate_mrr(scorer, np.zeros(n_edges, int), np.ones(n_edges, int),
                           np.zeros(n_edges), np.arange(50),
                           rng=np.random.default_rng(4))
        expect = np.mean(1.0 / np.arange(1, 51))
        sigma = np.std(1.0 / np.arange(1, 51)) / np.sqrt(n_edges)
        assert abs(mrr - expect) < 3 * sigma

    def test_empty_split_rejected(self):
        with pytest.raises(EvaluationError):
            evaluate_mrr(lambda s, c, t: None, [], [], [], np.arange(5))

    def test_negatives_never_equal_positive(self, toy_data):
        g, split = toy_data
        seen = {"bad": 0}

        def scorer(srcs, cands, times):
            seen["bad"] += int((cands[:, 1:] == cands[:, :1]).sum())
            return np.zeros(cands.shape)

        eids = split.test_eids()[:100]
        evaluate_mrr(scorer, g.src[eids], g.dst[eids], g.ts[eids],
                     np.unique(g.dst), rng=np.random.default_rng(5))
        assert seen["bad"] == 0

    def test_trainer_evaluate_deterministic(self, toy_data):
        g, split = toy_data
        tr = Trainer(g, split, tiny_cfg(), seed=3)
        tr.train_iteration()
        a = tr.evaluate(split.val_eids()[:80])
        b = tr.evaluate(split.val_eids()[:80])
        assert a == b


class TestCausality:
    def test_no_future_reads_during_evaluation(self, toy_data):
        g, split = toy_data
        tr = Trainer(g, split, tiny_cfg(), seed=4, check_causality=True)
        tr.train_iteration()
        tr.evaluate(split.test_eids()[:100])
        assert tr.causality_violations == 0


class TestRunExperiment:
    def test_tiny_config_emits_schema_valid_json(self, toy_data, tmp_path):
        g, _ = toy_data
        cfg = tiny_cfg(epochs=2, eval_every=1, window=1000)
        summary = run_experiment(cfg, graph=g, out_dir=tmp_path)
        assert set(summary) >= {"test_mrr_mean", "test_mrr_std", "config", "seeds"}
        rec = json.loads((tmp_path / "metrics_seed0.json").read_text())
        assert len(rec["epochs"]) == 2
        assert all("train_loss" in e for e in rec["epochs"])
        assert "val_mrr" in rec["epochs"][0]
        assert (tmp_path / "checkpoint_seed0" / "model" / "manifest.json").exists()

    def test_ablation_matrix_four_records(self, toy_data, tmp_path):
        g, _ = toy_data
        outs = {}
        for mb in (True, False):
            for nb in (True, False):
                cfg = tiny_cfg(epochs=1, adaptive_minibatch=mb, adaptive_neighbor=nb,
                               window=800)
                key = (mb, nb)
                outs[key] = run_experiment(cfg, graph=g,
                                           out_dir=tmp_path / f"{mb}_{nb}")
        assert len({json.dumps(v, sort_keys=True) for v in outs.values()}) == 4
        for v in outs.values():
            assert np.isfinite(v["test_mrr_mean"])

    def test_deterministic_mode_byte_identical_metrics(self, toy_data, tmp_path):
        g, _ = toy_data
        cfg = tiny_cfg(epochs=2, eval_every=1, window=800, deterministic=True)
        run_experiment(cfg, graph=g, out_dir=tmp_path / "a")
        run_experiment(cfg, graph=g, out_dir=tmp_path / "b")
        for name in ("metrics_seed0.json", "summary.json"):
            assert (tmp_path / "a" / name).read_bytes() == \
                   (tmp_path / "b" / name).read_bytes()

    def test_checkpoint_roundtrip_same_scores(self, toy_data, tmp_path):
        g, split = toy_data
        cfg = tiny_cfg(epochs=1, window=800)
        run_experiment(cfg, graph=g, out_dir=tmp_path)
        split2 = chronological_split(g, cfg.split_ratios, cfg.window)
        tr = Trainer(g, split2, cfg, 0)
        tr.load_checkpoints(tmp_path / "checkpoint_seed0")
        # eval_code matches the experiment driver's final test evaluation
        mrr = tr.evaluate(split2.test_eids(), eval_code=20_000)
        rec = json.loads((tmp_path / "metrics_seed0.json").read_text())
        np.testing.assert_allclose(mrr, rec["final"]["test_mrr"])


class TestPhaseTiming:
    def test_four_phases_cover_most_of_epoch_wall_time(self, toy_data):
        """NF + AS + FS + PP must account for >= 90% of a training epoch
        on a benchmark-sized config."""
        g, split = toy_data
        cfg = tiny_cfg(batch_size=128, m=12, n=6, enc_dim=8, hidden=16,
                       deterministic=False)
        tr = Trainer(g, split, cfg, seed=8)
        tr.train_iteration()  # warm the JIT and allocator
        before = dict(tr.phase_seconds)
        t0 = time.perf_counter()
        tr.train_epoch()
        wall = time.perf_counter() - t0
        covered = sum(tr.phase_seconds[k] - before[k] for k in tr.phase_seconds)
        assert covered <= wall
        assert covered / wall >= 0.9, f"phases cover only {covered / wall:.1%}"


class TestEnvOverrides:
    def test_seed_and_workers_env(self, tmp_path, monkeypatch, capsys):
        generate_files(SynthConfig(nodes=80, events=600, communities=4, seed=1),
                       tmp_path / "d")
        cfg = {"manifest": str(tmp_path / "d" / "synth.manifest.json"),
               "aggregator": "graphmixer", "finder_policy": "uniform",
               "m": 4, "n": 2, "batch_size": 30, "epochs": 1, "hidden": 6,
               "enc_dim": 4, "model_time_dim": 4, "seeds": [0],
               "out_dir": str(tmp_path / "r")}
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        monkeypatch.setenv("TGADAPT_SEED", "17")
        monkeypatch.setenv("TGADAPT_WORKERS", "1")
        assert cli_main(["train", "--config", str(path)]) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["seeds"] == [17]
        assert summary["config"]["workers"] == 1


class TestCli:
    def test_synth_train_eval_pipeline(self, tmp_path, capsys):
        assert cli_main(["synth", "--nodes", "100", "--events", "1200",
                         "--communities", "4", "--seed", "3",
                         "--out", str(tmp_path / "data")]) == 0
        manifest = json.loads(capsys.readouterr().out)["manifest"]
        cfg = {"manifest": manifest, "aggregator": "graphmixer",
               "finder_policy": "uniform", "m": 5, "n": 3, "batch_size": 32,
               "epochs": 1, "hidden": 6, "enc_dim": 4, "model_time_dim": 6,
               "seeds": [0], "out_dir": str(tmp_path / "run")}
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        assert cli_main(["train", "--config", str(cfg_path)]) == 0
        summary = json.loads(capsys.readouterr().out)
        assert "test_mrr_mean" in summary
        assert cli_main(["eval", "--config", str(cfg_path), "--checkpoint",
                         str(tmp_path / "run" / "checkpoint_seed0")]) == 0
        out = json.loads(capsys.readouterr().out)
        assert np.isfinite(out["test_mrr"])

    def test_bench_cache_runs(self, capsys):
        assert cli_main(["bench-cache", "--edges", "500", "--accesses", "5000",
                         "--epochs", "3", "--k", "0.1"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["budget_k"] == 50

    def test_bench_finder_runs(self, capsys):
        assert cli_main(["bench-finder", "--nodes", "200", "--events", "3000",
                         "--queries", "500", "--m", "5"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert "uniform" in report["policies"]

    def test_config_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"not_a_key": 1}))
        assert cli_main(["train", "--config", str(bad)]) == 1

    def test_data_error_exit_code(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"manifest": str(tmp_path / "missing.json")}))
        assert cli_main(["train", "--config", str(cfg)]) == 2

    def test_ingest_roundtrip(self, tmp_path, capsys):
        events = tmp_path / "ev.csv"
        events.write_text("0,1,1.0,0.5\n1,2,2.0,0.25\n")
        assert cli_main(["ingest", "--events", str(events),
                         "--out", str(tmp_path / "ds")]) == 0
        info = json.loads(capsys.readouterr().out)
        assert info["num_events"] == 2 and info["d_e"] == 1
