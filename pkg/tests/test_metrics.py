import numpy as np
import pytest

from oodfuse.errors import DomainError
from oodfuse.metrics import auroc, evaluate, fpr_at_tpr
from oodfuse.selection import LayerCombination
from oodfuse.tensors import ScoreTensor, default_meta


def make_scores(data):
    data = np.asarray(data, dtype=float)
    return ScoreTensor(data, default_meta(data.shape[1]))


# --- independent oracles ------------------------------------------------------

def oracle_auroc(ids, oods):
    wins = ties = 0
    for a in ids:
        for b in oods:
            if a > b:
                wins += 1
            elif a == b:
                ties += 1
    return (wins + 0.5 * ties) / (len(ids) * len(oods))


def oracle_fpr(ids, oods, target=0.95):
    # scan every candidate threshold (all observed id values, descending)
    best_t = None
    for t in sorted(set(ids), reverse=True):
        tpr = sum(1 for v in ids if v >= t) / len(ids)
        if tpr >= target:
            best_t = t
            break
    fpr = sum(1 for v in oods if v >= best_t) / len(oods)
    return fpr, best_t


class TestFprAtTpr:
    def test_perfect_separation(self):
        fpr, _ = fpr_at_tpr(np.full(100, 1.0), np.full(100, 0.0))
        assert fpr == 0.0

    def test_identical_vectors(self):
        v = np.arange(100) / 100.0  # N divisible by 20
        fpr, _ = fpr_at_tpr(v, v)
        assert fpr == pytest.approx(0.95)

    def test_hand_threshold_scan(self):
        ids = np.arange(1, 11) / 10.0  # 0.1 .. 1.0
        oods = np.array([0.05, 0.55])
        fpr, threshold = fpr_at_tpr(ids, oods, 0.95)
        assert threshold == pytest.approx(0.1)
        assert fpr == pytest.approx(0.5)

    def test_matches_threshold_scan_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            ids = rng.normal(0.5, 0.3, size=int(rng.integers(5, 200)))
            oods = rng.normal(0.2, 0.3, size=int(rng.integers(5, 200)))
            fpr, t = fpr_at_tpr(ids, oods)
            efpr, et = oracle_fpr(list(ids), list(oods))
            assert t == pytest.approx(et, abs=0)
            assert fpr == pytest.approx(efpr, abs=1e-12)

    def test_achieved_tpr_at_least_target(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            ids = rng.normal(size=int(rng.integers(3, 50)))
            _, t = fpr_at_tpr(ids, ids, 0.95)
            assert (ids >= t).mean() >= 0.95

    def test_monotone_in_ood_scores(self):
        rng = np.random.default_rng(2)
        ids = rng.normal(0.5, 0.2, size=100)
        oods = rng.normal(0.0, 0.2, size=100)
        f1, _ = fpr_at_tpr(ids, oods)
        f2, _ = fpr_at_tpr(ids, oods + 0.3)
        assert f2 >= f1

    def test_empty_raises(self):
        with pytest.raises(DomainError):
            fpr_at_tpr(np.array([]), np.array([1.0]))
        with pytest.raises(DomainError):
            fpr_at_tpr(np.array([1.0]), np.array([]))


class TestAuroc:
    def test_perfect(self):
        assert auroc([2.0, 3.0], [0.0, 1.0]) == 1.0

    def test_all_ties(self):
        assert auroc(np.full(10, 0.5), np.full(7, 0.5)) == 0.5

    def test_pair_count_example(self):
        assert auroc([0.9, 0.4], [0.5, 0.1]) == pytest.approx(0.75)

    def test_matches_pairwise_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            ids = np.round(rng.normal(0.5, 0.3, size=int(rng.integers(3, 60))), 2)
            oods = np.round(rng.normal(0.3, 0.3, size=int(rng.integers(3, 60))), 2)
            assert auroc(ids, oods) == pytest.approx(
                oracle_auroc(list(ids), list(oods)), abs=1e-12
            )

    def test_complement_symmetry(self):
        rng = np.random.default_rng(4)
        ids = np.round(rng.normal(size=40), 1)
        oods = np.round(rng.normal(size=30), 1)
        assert auroc(ids, oods) + auroc(oods, ids) == pytest.approx(1.0, abs=1e-12)

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(5)
        ids = rng.normal(size=50)
        oods = rng.normal(size=50)
        a = auroc(ids, oods)
        b = auroc(np.exp(ids), np.exp(oods))
        assert a == pytest.approx(b, abs=1e-12)

    def test_pooled_relabeled_is_half(self):
        rng = np.random.default_rng(6)
        pool = rng.normal(size=80)
        assert auroc(pool, pool) == pytest.approx(0.5, abs=1e-12)


class TestEvaluate:
    def test_single_ood_set_average(self):
        rng = np.random.default_rng(7)
        t_id = make_scores(rng.normal(1.0, 0.1, size=(50, 3)))
        t_ood = make_scores(rng.normal(0.0, 0.1, size=(50, 3)))
        report = evaluate(t_id, {"x": t_ood}, LayerCombination([2]))
        assert report.average_fpr95 == report.per_dataset["x"].fpr95
        assert report.average_auroc == report.per_dataset["x"].auroc

    def test_two_set_unweighted_average(self):
        # engineered so one set gives fpr 0.2 and the other 0.4
        t_id = make_scores(np.linspace(0.01, 1.0, 100)[:, None])
        ood1 = np.concatenate([np.full(20, 0.5), np.full(80, -1.0)])
        ood2 = np.concatenate([np.full(40, 0.5), np.full(60, -1.0)])
        report = evaluate(
            t_id,
            {"a": make_scores(ood1[:, None]), "b": make_scores(ood2[:, None])},
            LayerCombination([0]),
        )
        assert report.per_dataset["a"].fpr95 == pytest.approx(0.2)
        assert report.per_dataset["b"].fpr95 == pytest.approx(0.4)
        assert report.average_fpr95 == pytest.approx(0.3)

    def test_three_dataset_fixture_against_oracle(self):
        rng = np.random.default_rng(8)
        t_id = make_scores(rng.normal(0.7, 0.2, size=(60, 4)))
        oods = {f"d{i}": make_scores(rng.normal(0.2, 0.2, size=(40, 4))) for i in range(3)}
        combo = LayerCombination([1, 3])
        report = evaluate(t_id, oods, combo)

        def oracle_fpr(ids, oods_v):
            t = [v for v in sorted(set(ids), reverse=True)
                 if sum(1 for x in ids if x >= v) / len(ids) >= 0.95][0]
            return sum(1 for x in oods_v if x >= t) / len(oods_v)

        fused_id = list(t_id.data[:, [1, 3]].mean(axis=1))
        fprs, aurocs = [], []
        for name, t in oods.items():
            fused_ood = list(t.data[:, [1, 3]].mean(axis=1))
            efpr = oracle_fpr(fused_id, fused_ood)
            wins = sum(
                1.0 if a > b else 0.5 if a == b else 0.0
                for a in fused_id for b in fused_ood
            )
            eauroc = wins / (len(fused_id) * len(fused_ood))
            assert report.per_dataset[name].fpr95 == pytest.approx(efpr, abs=1e-12)
            assert report.per_dataset[name].auroc == pytest.approx(eauroc, abs=1e-12)
            fprs.append(efpr)
            aurocs.append(eauroc)
        assert report.average_fpr95 == pytest.approx(np.mean(fprs), abs=1e-12)
        assert report.average_auroc == pytest.approx(np.mean(aurocs), abs=1e-12)

    def test_layer_mismatch(self):
        t_id = make_scores(np.zeros((5, 4)))
        t_ood = make_scores(np.zeros((5, 3)))
        with pytest.raises(DomainError):
            evaluate(t_id, {"x": t_ood}, LayerCombination([0]))

    def test_requires_ood(self):
        t_id = make_scores(np.zeros((5, 4)))
        with pytest.raises(DomainError):
            evaluate(t_id, {}, LayerCombination([0]))
