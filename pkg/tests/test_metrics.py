import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flow2d import MetricError
from flow2d.metrics import ScoredSet, auroc, eval_report, pixel_auroc


def auroc_bruteforce(scores, labels):
    """O(n^2) pair counting: P(anomalous > normal), ties counted 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = ties = 0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1
            elif p == n:
                ties += 1
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


class TestAuroc:
    def test_perfect_separation(self):
        assert auroc(ScoredSet([1.0, 2.0], [0, 1])) == 1.0

    def test_all_ties(self):
        assert auroc(ScoredSet([3.0] * 6, [0, 0, 0, 1, 1, 1])) == 0.5

    def test_reversed_separation(self):
        assert auroc(ScoredSet([2.0, 1.0], [0, 1])) == 0.0

    def test_single_class_rejected(self):
        with pytest.raises(MetricError):
            auroc(ScoredSet([1.0, 2.0], [1, 1]))
        with pytest.raises(MetricError):
            auroc(ScoredSet([1.0, 2.0], [0, 0]))

    def test_matches_bruteforce_on_fixed_50(self):
        rng = np.random.default_rng(42)
        scores = np.round(rng.standard_normal(50), 1)  # rounding forces ties
        labels = rng.integers(0, 2, size=50)
        labels[0], labels[1] = 0, 1
        assert auroc(ScoredSet(scores, labels)) == pytest.approx(
            auroc_bruteforce(scores, labels), abs=1e-12
        )

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 100_000), st.integers(2, 60), st.integers(1, 4))
    def test_matches_bruteforce_random(self, seed, n, quant):
        rng = np.random.default_rng(seed)
        scores = np.round(rng.standard_normal(n) * quant, 1)
        labels = rng.integers(0, 2, size=n)
        labels[0], labels[-1] = 0, 1
        assert auroc(ScoredSet(scores, labels)) == pytest.approx(
            auroc_bruteforce(scores, labels), abs=1e-12
        )

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_invariant_under_increasing_transforms(self, seed):
        rng = np.random.default_rng(seed)
        scores = rng.standard_normal(30)
        labels = rng.integers(0, 2, size=30)
        labels[0], labels[-1] = 0, 1
        base = auroc(ScoredSet(scores, labels))
        assert auroc(ScoredSet(np.exp(scores), labels)) == pytest.approx(base, abs=1e-12)
        assert auroc(ScoredSet(3.0 * scores + 11.0, labels)) == pytest.approx(base, abs=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_label_flip_complement(self, seed):
        rng = np.random.default_rng(seed)
        scores = np.round(rng.standard_normal(40), 1)
        labels = rng.integers(0, 2, size=40)
        labels[0], labels[-1] = 0, 1
        a = auroc(ScoredSet(scores, labels))
        b = auroc(ScoredSet(scores, 1 - labels))
        assert a + b == pytest.approx(1.0, abs=1e-12)


class TestPixelAuroc:
    def test_map_equals_mask_is_perfect(self):
        masks = [np.zeros((4, 4)), np.zeros((4, 4))]
        masks[1][1:3, 1:3] = 1
        maps = [m.astype(np.float64) for m in masks]
        assert pixel_auroc(maps, masks) == 1.0

    def test_constant_map_is_chance(self):
        masks = [np.zeros((4, 4)), np.ones((4, 4))]
        maps = [np.full((4, 4), 0.5)] * 2
        assert pixel_auroc(maps, masks) == 0.5

    def test_matches_bruteforce_on_4x4(self):
        rng = np.random.default_rng(9)
        maps = [rng.standard_normal((4, 4)) for _ in range(3)]
        masks = [rng.integers(0, 2, size=(4, 4)) for _ in range(3)]
        masks[0][:] = 0  # one all-normal image
        got = pixel_auroc(maps, masks)
        want = auroc_bruteforce(
            np.concatenate([m.reshape(-1) for m in maps]),
            np.concatenate([m.reshape(-1) for m in masks]),
        )
        assert got == pytest.approx(want, abs=1e-12)

    def test_resolution_mismatch(self):
        from flow2d import ShapeError

        with pytest.raises(ShapeError):
            pixel_auroc([np.zeros((4, 4))], [np.zeros((8, 8))])


class TestEvalReport:
    def test_single_category(self, tmp_path):
        report = eval_report({"widget": (1.0, 0.9)},
                             csv_path=tmp_path / "r.csv", json_path=tmp_path / "r.json")
        assert report.mean == (1.0, 0.9)
        lines = (tmp_path / "r.csv").read_text().strip().splitlines()
        assert lines[0] == "category,image_auroc,pixel_auroc"
        assert lines[1].startswith("widget,1.0,0.9")
        assert lines[-1].startswith("mean,")

    def test_two_categories_mean(self):
        report = eval_report({"a": (1.0, 0.8), "b": (0.5, 0.6)})
        assert report.mean == (0.75, pytest.approx(0.7))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            eval_report({})

    def test_json_payload(self, tmp_path):
        import json

        eval_report({"a": (0.9, 0.8)}, json_path=tmp_path / "r.json")
        payload = json.loads((tmp_path / "r.json").read_text())
        assert payload["categories"]["a"]["image_auroc"] == 0.9
        assert payload["mean"]["pixel_auroc"] == 0.8
