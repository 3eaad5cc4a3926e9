"""Graph store: ingestion, T-CSR invariants, splits, feature files."""

import numpy as np
import pytest

from conftest import random_graph
from tgadapt.graph import (DataError, build_graph, chronological_split,
                           graphs_equal, ingest_events, load_features,
                           load_manifest, save_dataset, save_features,
                           temporal_neighborhood_size)
from tgadapt.matio import MatrixFormatError


class TestIngestion:
    def test_three_row_example(self, tmp_path):
        p = tmp_path / "events.csv"
        p.write_text("0,1,1.0\n1,2,2.0\n0,2,3.0\n")
        g = ingest_events(p)
        assert g.num_nodes == 3 and g.num_events == 3
        nbrs, ts, eids = g.adjacency(0)
        np.testing.assert_array_equal(nbrs, [1, 2])
        np.testing.assert_array_equal(ts, [1.0, 3.0])
        np.testing.assert_array_equal(eids, [0, 2])

    def test_empty_file(self, tmp_path):
        p = tmp_path / "empty.csv"
        p.write_text("")
        g = ingest_events(p)
        assert g.num_events == 0
        np.testing.assert_array_equal(g.tcsr_offsets, [0])

    def test_out_of_order_rows_reassign_eids(self, tmp_path):
        p = tmp_path / "events.csv"
        p.write_text("0,1,5.0\n1,2,2.0\n")
        g = ingest_events(p)
        # the ts=2.0 event must get eid 0
        assert g.ts[0] == 2.0 and g.src[0] == 1

    def test_sort_then_assign_oracle_on_shuffled_input(self, rng, tmp_path):
        rows = [(int(rng.integers(0, 20)), int(rng.integers(0, 20)), float(t))
                for t in rng.random(100) * 50]
        p = tmp_path / "events.csv"
        p.write_text("".join(f"{s},{d},{t!r}\n" for s, d, t in rows))
        g = ingest_events(p)
        expected = sorted(range(len(rows)), key=lambda i: rows[i][2])
        for eid, orig in enumerate(expected):
            assert g.ts[eid] == rows[orig][2]
            assert g.src[eid] == rows[orig][0]

    def test_malformed_row_reports_line(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("0,1,1.0\n0,x,2.0\n")
        with pytest.raises(DataError, match=":2"):
            ingest_events(p)

    def test_inconsistent_feature_width(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("0,1,1.0,0.5\n0,1,2.0,0.5,0.6\n")
        with pytest.raises(DataError, match="width"):
            ingest_events(p)

    def test_non_finite_ts(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("0,1,nan\n")
        with pytest.raises(DataError, match="non-finite"):
            ingest_events(p)


class TestTcsrInvariants:
    def test_per_node_timestamps_non_decreasing(self, rng):
        g = random_graph(rng, num_nodes=30, num_events=500)
        for v in range(g.num_nodes):
            _, ts, _ = g.adjacency(v)
            assert (np.diff(ts) >= 0).all()

    def test_adjacency_entry_count_is_twice_events(self, rng):
        g = random_graph(rng, num_nodes=30, num_events=500)
        assert g.tcsr_offsets[-1] == 2 * g.num_events
        assert (np.diff(g.tcsr_offsets) >= 0).all()

    def test_roundtrip_identical(self, rng, tmp_path):
        g = random_graph(rng, num_nodes=25, num_events=300, d_v=3, d_e=2)
        manifest = save_dataset(g, tmp_path, name="rt")
        g2 = load_manifest(manifest)
        assert graphs_equal(g, g2)


class TestNeighborhoodSize:
    def test_strict_inequality_with_ties(self):
        g = build_graph([0, 0, 0, 0], [1, 2, 3, 4], [1.0, 3.0, 3.0, 7.0])
        assert temporal_neighborhood_size(g, 0, 3.0) == 1

    def test_zero_time(self, rng):
        g = random_graph(rng)
        for v in range(5):
            assert temporal_neighborhood_size(g, v, 0.0) == 0

    def test_matches_linear_scan(self, rng):
        g = random_graph(rng, num_nodes=20, num_events=300)
        for _ in range(200):
            v = int(rng.integers(0, g.num_nodes))
            t = float(rng.random() * 110)
            _, ts, _ = g.adjacency(v)
            assert temporal_neighborhood_size(g, v, t) == int((ts < t).sum())

    def test_monotone_in_time(self, rng):
        g = random_graph(rng, num_nodes=10, num_events=200)
        for v in range(10):
            sizes = [temporal_neighborhood_size(g, v, t) for t in np.linspace(0, 120, 40)]
            assert (np.diff(sizes) >= 0).all()


class TestSplits:
    def test_even_ratios(self, rng):
        g = random_graph(rng, num_events=10)
        s = chronological_split(g, (0.6, 0.2, 0.2))
        assert s.train_range == (0, 6) and s.val_range == (6, 8) and s.test_range == (8, 10)

    def test_window(self, rng):
        g = random_graph(rng, num_events=1000)
        s = chronological_split(g, (0.6, 0.2, 0.2), window=100)
        assert s.train_range == (900, 960)
        assert s.val_range == (960, 980)
        assert s.test_range == (980, 1000)

    def test_floor_boundaries(self, rng):
        g = random_graph(rng, num_events=5)
        s = chronological_split(g, (0.6, 0.2, 0.2))
        assert s.train_range == (0, 3) and s.val_range == (3, 4) and s.test_range == (4, 5)

    def test_window_too_large(self, rng):
        g = random_graph(rng, num_events=10)
        with pytest.raises(DataError):
            chronological_split(g, window=11)

    def test_bad_ratios(self, rng):
        g = random_graph(rng, num_events=10)
        with pytest.raises(DataError):
            chronological_split(g, (0.5, 0.2, 0.2))


class TestFeatureFiles:
    def test_bit_exact_roundtrip(self, tmp_path, rng):
        arr = rng.normal(size=(2, 3)).astype(np.float32)
        save_features(tmp_path / "f.fmat", arr)
        back = load_features(tmp_path / "f.fmat")
        assert back.dtype == np.float32
        assert np.array_equal(arr.view(np.uint32), back.view(np.uint32))

    def test_zero_row_store(self, tmp_path):
        save_features(tmp_path / "z.fmat", np.zeros((0, 4), dtype=np.float32))
        back = load_features(tmp_path / "z.fmat")
        assert back.shape == (0, 4)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "t.fmat"
        save_features(path, np.ones((4, 4), dtype=np.float32))
        raw = path.read_bytes()
        path.write_bytes(raw[:-8])
        with pytest.raises(MatrixFormatError, match="mismatch"):
            load_features(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.fmat"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(MatrixFormatError, match="magic"):
            load_features(path)
