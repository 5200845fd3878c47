"""Acceptance suite. Each test covers one headline requirement and prints a
single [PASS]/[FAIL] line so the whole gate can be read off the terminal."""

import itertools
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest
import scipy.linalg
from scipy.stats import spearmanr

from oodfuse.analysis import entropy_fpr_scatter, svcca
from oodfuse.fixtures import make_complementary, make_graded
from oodfuse.io import read_tensor, write_tensor
from oodfuse.metrics import auroc, evaluate, fpr_at_tpr
from oodfuse.scoring import ScoreRuleConfig, apply_rule
from oodfuse.selection import (
    HistogramSpec,
    LayerCombination,
    enumerate_candidates,
    histogram_entropy,
    select,
)
from oodfuse.tensors import ProbTensor, RawLogits, ScoreTensor, default_meta
from oodfuse.errors import FormatError, ValidationError


@contextmanager
def criterion(capsys, name):
    try:
        yield
    except BaseException:
        with capsys.disabled():
            print(f"[FAIL] {name}")
        raise
    with capsys.disabled():
        print(f"[PASS] {name}")


# --- naive re-implementations used as oracles ----------------------------------

def naive_entropy(fused, bins):
    lo, hi = min(fused), max(fused)
    if lo == hi:
        return 0.0
    counts = [0] * bins
    width = (hi - lo) / bins
    for v in fused:
        b = min(int((v - lo) / width), bins - 1)
        counts[b] += 1
    total = sum(counts)
    return -sum((c / total) * math.log(c / total) for c in counts if c > 0)


def naive_best(data, max_len, bins):
    combos = []
    L = data.shape[1]
    for size in range(1, max_len + 1):
        for combo in itertools.combinations(range(L), size):
            if L - 1 in combo:
                combos.append(combo)
    combos.sort(key=lambda c: (len(c), c))
    best, best_h = None, None
    for combo in combos:
        fused = data[:, list(combo)].mean(axis=1)
        h = naive_entropy(list(fused), bins)
        if best_h is None or h < best_h:
            best, best_h = combo, h
    return best, best_h


def oracle_auroc(ids, oods):
    wins = sum(
        1.0 if a > b else 0.5 if a == b else 0.0 for a in ids for b in oods
    )
    return wins / (len(ids) * len(oods))


def oracle_fpr(ids, oods, target=0.95):
    for t in sorted(set(ids), reverse=True):
        if sum(1 for v in ids if v >= t) / len(ids) >= target:
            return sum(1 for v in oods if v >= t) / len(oods), t
    raise AssertionError("unreachable")


def textbook_cca_mean(x, y, var_keep=0.99):
    def truncate(a):
        ac = a - a.mean(axis=0)
        u, s, vt = np.linalg.svd(ac, full_matrices=False)
        mass = np.cumsum(s ** 2) / (s ** 2).sum()
        keep = min(int(np.searchsorted(mass, var_keep) + 1),
                   int((s > 1e-12 * s[0]).sum()))
        return ac @ vt[:keep].T

    xt, yt = truncate(x), truncate(y)
    sxx = xt.T @ xt / len(xt)
    syy = yt.T @ yt / len(yt)
    sxy = xt.T @ yt / len(xt)
    wx = np.real(scipy.linalg.fractional_matrix_power(sxx, -0.5))
    wy = np.real(scipy.linalg.fractional_matrix_power(syy, -0.5))
    corrs = np.linalg.svd(wx @ sxy @ wy, compute_uv=False)
    return float(np.clip(corrs, 0, 1).mean())


def mcm(tensor, temperature=1.0):
    return apply_rule(tensor, ScoreRuleConfig(rule="mcm", temperature=temperature))


# --- criteria -------------------------------------------------------------------

def test_selection_oracle_equivalence(capsys):
    with criterion(capsys, "selection-oracle equivalence (20 tensors, 1e-12)"):
        rng = np.random.default_rng(100)
        start = time.perf_counter()
        for _ in range(20):
            data = rng.normal(size=(200, 12))
            tensor = ScoreTensor(data, default_meta(12))
            result = select(tensor, enumerate_candidates(12, 5), HistogramSpec(32))
            exp_combo, exp_h = naive_best(data, 5, 32)
            assert result.best.layers == exp_combo
            assert result.criterion_values[result.best] == pytest.approx(
                exp_h, abs=1e-12
            )
        assert time.perf_counter() - start < 5.0


def test_metric_oracles(capsys):
    with criterion(capsys, "metric oracles (100 instances, 1e-12)"):
        rng = np.random.default_rng(101)
        start = time.perf_counter()
        for _ in range(100):
            n_id = int(rng.integers(3, 501))
            n_ood = int(rng.integers(3, 501))
            ids = np.round(rng.normal(0.5, 0.3, size=n_id), 2)
            oods = np.round(rng.normal(0.3, 0.3, size=n_ood), 2)
            assert auroc(ids, oods) == pytest.approx(
                oracle_auroc(list(ids), list(oods)), abs=1e-12
            )
            fpr, t = fpr_at_tpr(ids, oods)
            efpr, et = oracle_fpr(list(ids), list(oods))
            assert t == et
            assert fpr == pytest.approx(efpr, abs=1e-12)
        assert time.perf_counter() - start < 5.0


def _complementary_fprs(seed=0, temperature=1.0, bins=32):
    id_logits, ood_logits, _ = make_complementary(seed)
    s_id = mcm(id_logits, temperature)
    s_ood = {f"d{i}": mcm(t, temperature) for i, t in enumerate(ood_logits)}
    result = select(s_id, enumerate_candidates(12, 5), HistogramSpec(bins))
    selected = evaluate(s_id, s_ood, result.best).average_fpr95
    baseline = evaluate(s_id, s_ood, LayerCombination([11])).average_fpr95
    return result.best, selected, baseline


def test_planted_fixture_detection_gain(capsys):
    with criterion(capsys, "planted-fixture gain >= 10 points over final layer"):
        start = time.perf_counter()
        _, selected, baseline = _complementary_fprs(seed=0)
        assert baseline - selected >= 0.10
        assert time.perf_counter() - start < 10.0


def test_ablation_stability(capsys):
    with criterion(capsys, "ablation stability across bins {16..128} and tau {0.25..2}"):
        outcomes = {
            (bins, tau): _complementary_fprs(seed=0, temperature=tau, bins=bins)
            for bins in (16, 32, 64, 128)
            for tau in (0.25, 1.0, 2.0)
        }
        combos = {best for best, _, _ in outcomes.values()}
        fprs = {sel for _, sel, _ in outcomes.values()}
        assert len(combos) == 1
        assert len(fprs) == 1


def test_entropy_bounds_and_identities(capsys):
    with criterion(capsys, "entropy bounds [0, ln B] and exact identities"):
        rng = np.random.default_rng(102)
        for _ in range(10_000):
            bins = int(rng.integers(2, 65))
            values = rng.normal(size=int(rng.integers(2, 40)))
            h = histogram_entropy(values, HistogramSpec(bins))
            assert 0.0 <= h <= math.log(bins) + 1e-12
        # all mass in one bin
        assert histogram_entropy(np.full(100, 0.5), HistogramSpec(32)) == 0.0
        # exactly uniform over B bins
        bins = 32
        centers = (np.arange(bins) + 0.5) / bins
        values = np.repeat(centers, 100)
        assert histogram_entropy(values, HistogramSpec(bins)) == math.log(bins)


def test_variance_reduction_clause(capsys):
    with criterion(capsys, "fused variance identity (1e-10) and strict reduction"):
        rng = np.random.default_rng(103)
        triple = np.array([0.2, 0.5, 0.8])
        data = np.array([triple[rng.permutation(3)] for _ in range(3000)])
        combo = [0, 1, 2]
        fused = data.mean(axis=1)
        cov = np.cov(data.T, ddof=0)
        identity = cov.sum() / len(combo) ** 2
        assert np.var(fused) == pytest.approx(identity, abs=1e-10)
        mean_layer_var = np.mean(np.diag(cov))
        assert np.var(fused) < mean_layer_var / len(combo)


def test_svcca_sanity(capsys):
    with criterion(capsys, "svcca: self=1, rotation-invariant, matches CCA oracle"):
        rng = np.random.default_rng(104)
        x = rng.normal(size=(400, 30))
        assert svcca(x, x) == pytest.approx(1.0, abs=1e-6)
        q, _ = np.linalg.qr(rng.normal(size=(30, 30)))
        assert svcca(x, x @ q) == pytest.approx(1.0, abs=1e-6)
        for _ in range(50):
            a = rng.normal(size=(400, 30))
            b = rng.normal(size=(400, 30))
            assert svcca(a, b) == pytest.approx(textbook_cca_mean(a, b), abs=1e-6)


def test_entropy_fpr_correlation(capsys):
    with criterion(capsys, "entropy-FPR Spearman rho > 0.4 over 50+ candidates"):
        t_id, oods, _ = make_graded(0)
        candidates = enumerate_candidates(t_id.layer_count, 3)
        assert len(candidates) >= 50
        rows = entropy_fpr_scatter(
            t_id,
            {f"d{i}": t for i, t in enumerate(oods)},
            candidates,
            HistogramSpec(32),
        )
        rho = spearmanr([r[1] for r in rows], [r[2] for r in rows]).statistic
        assert rho > 0.4


def test_io_round_trip_and_mutation_rejection(capsys, tmp_path):
    with criterion(capsys, "1000 files round-trip byte-exactly; 1000 mutations rejected"):
        rng = np.random.default_rng(105)
        path = tmp_path / "t.lftn"
        path2 = tmp_path / "t2.lftn"
        originals = []
        for i in range(1000):
            L = int(rng.integers(1, 5))
            N = int(rng.integers(1, 6))
            meta = default_meta(
                L, temperature=float(rng.choice([0.25, 0.5, 1.0, 2.0]))
            )
            pick = int(rng.integers(0, 3))
            if pick == 0:
                tensor = ScoreTensor(rng.normal(size=(N, L)), meta)
            elif pick == 1:
                C = int(rng.integers(2, 5))
                raw = rng.uniform(0.05, 1.0, size=(N, L, C))
                tensor = ProbTensor(raw / raw.sum(axis=2, keepdims=True), meta)
            else:
                K = int(rng.integers(2, 5))
                tensor = RawLogits(rng.normal(size=(N, L, K)), meta)
            write_tensor(tensor, path)
            write_tensor(read_tensor(path), path2)
            raw_bytes = path.read_bytes()
            assert raw_bytes == path2.read_bytes()
            originals.append(raw_bytes)

        rejected = 0
        for i in range(1000):
            original = originals[int(rng.integers(0, len(originals)))]
            hdr_len = int.from_bytes(original[22:26], "little")
            pos = int(rng.integers(0, 26 + hdr_len))
            new = int(rng.integers(0, 256))
            if new == original[pos]:
                new = (new + 1) % 256
            mutated = bytearray(original)
            mutated[pos] = new
            path.write_bytes(bytes(mutated))
            try:
                read_tensor(path)
            except (FormatError, ValidationError):
                rejected += 1
        assert rejected == 1000
