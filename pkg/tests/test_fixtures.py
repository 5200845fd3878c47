import math

import numpy as np
import pytest

from oodfuse.analysis import entropy_profile
from oodfuse.fixtures import (
    make_complementary,
    make_flat,
    make_graded,
    make_redundant,
)
from oodfuse.metrics import fpr_at_tpr
from oodfuse.scoring import ScoreRuleConfig, apply_rule
from oodfuse.selection import HistogramSpec, enumerate_candidates, select


def mcm(tensor, temperature=1.0):
    return apply_rule(tensor, ScoreRuleConfig(rule="mcm", temperature=temperature))


class TestComplementary:
    def test_shapes_and_sidecar(self):
        id_t, ood_ts, sidecar = make_complementary(0, n_id=200, n_ood=150,
                                                   n_ood_sets=2)
        assert id_t.data.shape == (200, 12, 10)
        assert len(ood_ts) == 2
        assert all(t.data.shape == (150, 12, 10) for t in ood_ts)
        assert sidecar["planted_subset"] == [2, 5, 11]

    def test_deterministic(self):
        a, _, _ = make_complementary(42, n_id=50, n_ood=50, n_ood_sets=1)
        b, _, _ = make_complementary(42, n_id=50, n_ood=50, n_ood_sets=1)
        np.testing.assert_array_equal(a.data, b.data)

    def test_seed_changes_data(self):
        a, _, _ = make_complementary(1, n_id=50, n_ood=50, n_ood_sets=1)
        b, _, _ = make_complementary(2, n_id=50, n_ood=50, n_ood_sets=1)
        assert not np.array_equal(a.data, b.data)

    def test_planted_combo_wins_selection(self):
        id_t, _, sidecar = make_complementary(7)
        scores = mcm(id_t, temperature=1.0)
        result = select(scores, enumerate_candidates(12, 3), HistogramSpec(32))
        assert list(result.best.layers) == sidecar["planted_subset"]

    def test_planted_combo_beats_final_layer(self):
        id_t, ood_ts, sidecar = make_complementary(3)
        s_id = mcm(id_t)
        planted = sidecar["planted_subset"]
        fused_id = s_id.data[:, planted].mean(axis=1)
        final_id = s_id.data[:, -1]
        gains = []
        for t in ood_ts:
            s_ood = mcm(t)
            f_planted, _ = fpr_at_tpr(fused_id, s_ood.data[:, planted].mean(axis=1))
            f_final, _ = fpr_at_tpr(final_id, s_ood.data[:, -1])
            gains.append(f_final - f_planted)
        assert np.mean(gains) >= 0.10


class TestRedundant:
    def test_layers_strongly_correlated(self):
        id_t, _, _ = make_redundant(5, n_id=400, n_ood=100, n_ood_sets=1)
        scores = mcm(id_t).data
        corr = np.corrcoef(scores.T)
        off = corr[~np.eye(scores.shape[1], dtype=bool)]
        assert off.min() > 0.8

    def test_deterministic(self):
        a, _, _ = make_redundant(9, n_id=40, n_ood=40, n_ood_sets=1)
        b, _, _ = make_redundant(9, n_id=40, n_ood=40, n_ood_sets=1)
        np.testing.assert_array_equal(a.data, b.data)


class TestFlat:
    def test_entropy_close_to_log_c(self):
        probs, sidecar = make_flat(1, n_samples=200)
        prof = entropy_profile(probs)
        target = math.log(sidecar["n_classes"])
        assert np.all(np.abs(prof - target) / target < 0.01)

    def test_rows_sum_to_one(self):
        probs, _ = make_flat(2, n_samples=50)
        np.testing.assert_allclose(probs.data.sum(axis=2), 1.0, atol=1e-9)


class TestGraded:
    def test_shapes(self):
        t_id, oods, sidecar = make_graded(0, n_id=100, n_ood=90, n_ood_sets=2)
        assert t_id.data.shape == (100, 11)
        assert len(oods) == 2 and oods[0].data.shape == (90, 11)

    def test_separability_degrades_with_depth_noise(self):
        # later layers carry more noise, so the final layer should separate
        # better than the first
        t_id, oods, _ = make_graded(4)
        f_first, _ = fpr_at_tpr(t_id.data[:, 0], oods[0].data[:, 0])
        f_last, _ = fpr_at_tpr(t_id.data[:, -1], oods[0].data[:, -1])
        assert f_first < f_last

    def test_deterministic(self):
        a, _, _ = make_graded(8, n_id=30, n_ood=30, n_ood_sets=1)
        b, _, _ = make_graded(8, n_id=30, n_ood=30, n_ood_sets=1)
        np.testing.assert_array_equal(a.data, b.data)
