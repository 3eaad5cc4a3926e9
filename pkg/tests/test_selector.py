"""Importance-score maintenance and weighted batch selection."""

import numpy as np
import pytest
from scipy import stats

from tgadapt.selector import IndexError_, init_scores, select_batch, update_scores


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


class TestInit:
    def test_uniform_start_value(self):
        s = init_scores(5, gamma=0.1)
        np.testing.assert_allclose(s.scores, 0.6)

    def test_zero_gamma(self):
        np.testing.assert_allclose(init_scores(3, gamma=0.0).scores, 0.5)

    def test_fresh_scores_select_uniformly(self):
        s = init_scores(6, gamma=0.1)
        rng = np.random.default_rng(0)
        counts = np.zeros(6)
        for _ in range(6000):
            counts[select_batch(s, 1, rng)[0]] += 1
        assert (np.abs(counts / 6000 - 1 / 6) < 0.02).all()


class TestSelect:
    def test_full_batch_is_whole_set(self):
        s = init_scores(4, gamma=0.1)
        rng = np.random.default_rng(1)
        np.testing.assert_array_equal(np.sort(select_batch(s, 4, rng)), np.arange(4))

    def test_single_edge(self):
        s = init_scores(1, gamma=0.1)
        assert select_batch(s, 1, np.random.default_rng(2))[0] == 0

    def test_dominant_weight_dominates(self):
        s = init_scores(3, gamma=0.0)
        s.scores[:] = [1.0, 1e-4, 1e-4]
        rng = np.random.default_rng(3)
        picks = np.array([select_batch(s, 1, rng)[0] for _ in range(2000)])
        assert (picks == 0).mean() > 0.99

    def test_batch_is_distinct(self):
        s = init_scores(10, gamma=0.1)
        rng = np.random.default_rng(4)
        for _ in range(50):
            batch = select_batch(s, 6, rng)
            assert len(set(batch.tolist())) == 6

    def test_oversized_batch_rejected(self):
        s = init_scores(3, gamma=0.1)
        with pytest.raises(ValueError):
            select_batch(s, 4, np.random.default_rng(0))

    def test_base_eid_offset(self):
        s = init_scores(5, gamma=0.1, base_eid=100)
        batch = select_batch(s, 5, np.random.default_rng(5))
        assert batch.min() >= 100 and batch.max() < 105

    def test_selection_frequency_proportional_chisquare(self):
        """Frozen scores: single-draw batches must follow P exactly."""
        s = init_scores(8, gamma=0.1)
        rng_scores = np.random.default_rng(6)
        s.scores[:] = rng_scores.uniform(0.2, 1.1, 8)
        p = s.scores / s.scores.sum()
        rng = np.random.default_rng(7)
        trials = 30_000
        counts = np.zeros(8)
        for _ in range(trials):
            counts[select_batch(s, 1, rng)[0]] += 1
        chi2 = ((counts - trials * p) ** 2 / (trials * p)).sum()
        assert chi2 < stats.chi2.ppf(1 - 1e-3, df=7)


class TestUpdate:
    def test_zero_logit(self):
        s = init_scores(3, gamma=0.1)
        update_scores(s, [1], [0.0])
        np.testing.assert_allclose(s.scores[1], 0.6)

    def test_sigmoid_limits(self):
        s = init_scores(2, gamma=0.1)
        update_scores(s, [0, 1], [1e3, -1e3])
        np.testing.assert_allclose(s.scores, [1.1, 0.1], atol=1e-12)

    def test_matches_closed_form_on_random_logits(self, rng):
        s = init_scores(20, gamma=0.25)
        logits = rng.normal(size=20) * 3
        update_scores(s, np.arange(20), logits)
        np.testing.assert_allclose(s.scores, _sigmoid(logits) + 0.25, rtol=1e-12)

    def test_untouched_edges_keep_scores(self):
        s = init_scores(5, gamma=0.1)
        update_scores(s, [2], [5.0])
        np.testing.assert_allclose(s.scores[[0, 1, 3, 4]], 0.6)

    def test_out_of_range_eid_rejected(self):
        s = init_scores(3, gamma=0.1, base_eid=10)
        with pytest.raises(IndexError_):
            update_scores(s, [13], [0.0])
        with pytest.raises(IndexError_):
            update_scores(s, [9], [0.0])


class TestProperties:
    def test_gamma_flattens_score_ratio(self, rng):
        logits = rng.normal(size=30) * 2
        ratios = []
        for gamma in (0.0, 0.1, 0.5, 2.0):
            s = init_scores(30, gamma=gamma)
            update_scores(s, np.arange(30), logits)
            ratios.append(s.scores.max() / s.scores.min())
        assert all(a > b for a, b in zip(ratios, ratios[1:]))

    def test_scores_never_reach_zero(self, rng):
        s = init_scores(10, gamma=0.05)
        update_scores(s, np.arange(10), rng.normal(size=10) * 100)
        assert (s.scores > 0).all()
        assert (s.scores > s.gamma - 1e-15).all()
        assert (s.scores <= 1 + s.gamma + 1e-15).all()
