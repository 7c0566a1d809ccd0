import csv
import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sentipanel.metrics import ConfusionMatrix, confusion, f1_score, metrics, prf, report_csv, report_text

# Per-emotion precision/recall with the reference F1 column.
EMOTION_TABLE = [
    ("fear", 0.8987, 0.9405, 0.9191),
    pytest.param(
        "disgust",
        0.6895,
        0.6102,
        0.6475,
        marks=pytest.mark.xfail(strict=True, reason="printed Pr/Re give 0.647431; reference F1 needs unrounded inputs"),
    ),
    ("joy", 0.8427, 0.7845, 0.8126),
    ("surprise", 0.8788, 0.8985, 0.8885),
    ("confidence", 0.9570, 0.9727, 0.9648),
    ("sadness", 0.7197, 0.8123, 0.7632),
    ("anger", 0.7947, 0.7579, 0.7759),
    ("uncertainty", 0.8251, 0.7992, 0.8119),
]


class TestConfusion:
    def test_all_correct_diagonal(self):
        cm = confusion([(0, 0), (1, 1), (2, 2), (1, 1)], 3)
        assert np.array_equal(cm.counts, np.diag([1, 2, 1]))

    def test_empty(self):
        cm = confusion([], 4)
        assert cm.counts.shape == (4, 4) and cm.total == 0

    def test_off_diagonal(self):
        cm = confusion([(0, 1), (1, 1)], 2)
        assert cm.counts[0, 1] == 1 and cm.counts[1, 1] == 1 and cm.total == 2

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            confusion([(0, 3)], 3)

    def test_not_square(self):
        with pytest.raises(ValueError):
            ConfusionMatrix(np.zeros((2, 3)))


class TestMetrics:
    @pytest.mark.parametrize("name,pr,re,f1", EMOTION_TABLE)
    def test_reference_f1(self, name, pr, re, f1):
        assert round(f1_score(pr, re), 4) == f1

    @pytest.mark.parametrize("row", [r.values if hasattr(r, "values") else r for r in EMOTION_TABLE])
    def test_reference_f1_within_rounding_interval(self, row):
        # F1 is increasing in both arguments, so the interval ends come from the corners
        _, pr, re, f1 = row
        lo = f1_score(pr - 5e-5, re - 5e-5)
        hi = f1_score(pr + 5e-5, re + 5e-5)
        assert lo - 5e-5 <= f1 <= hi + 5e-5

    def test_hand_counts(self):
        pr, re, f1, undefined = prf(1, 1, 0)
        assert pr == 0.5 and re == 1.0 and abs(f1 - 2 / 3) < 1e-15 and undefined == ()

    def test_zero_denominator_flag(self):
        m = metrics(confusion([(0, 0), (0, 0)], 2))
        assert m.per_class[1].precision == 0.0 and m.per_class[1].recall == 0.0
        assert set(m.per_class[1].undefined) == {"precision", "recall", "f1"}
        assert m.per_class[0].undefined == ()

    def test_empty_error(self):
        with pytest.raises(ValueError):
            metrics(confusion([], 3))

    def test_brute_force_four_class(self):
        rng = np.random.default_rng(0)
        pairs = [tuple(map(int, rng.integers(0, 4, 2))) for _ in range(500)]
        m = metrics(confusion(pairs, 4))
        for c in range(4):
            tp = sum(t == c and p == c for t, p in pairs)
            fp = sum(t != c and p == c for t, p in pairs)
            fn = sum(t == c and p != c for t, p in pairs)
            assert m.per_class[c].precision == tp / (tp + fp)
            assert m.per_class[c].recall == tp / (tp + fn)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=60))
    def test_bounds_and_identities(self, pairs):
        m = metrics(confusion(pairs, 5))
        assert 0.0 <= m.accuracy <= 1.0
        support = np.array([s.support for s in m.per_class])
        recall = np.array([s.recall for s in m.per_class])
        assert abs(m.accuracy - float(support @ recall) / support.sum()) < 1e-12
        assert m.accuracy == sum(t == p for t, p in pairs) / len(pairs)
        for s in m.per_class:
            assert 0.0 <= s.precision <= 1.0 and 0.0 <= s.recall <= 1.0 and 0.0 <= s.f1 <= 1.0
            if not s.undefined:
                assert min(s.precision, s.recall) - 1e-15 <= s.f1 <= max(s.precision, s.recall) + 1e-15

    def test_direct_formula_on_random_fixtures(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            k = int(rng.integers(2, 6))
            n = int(rng.integers(1, 40))
            t, p = rng.integers(0, k, n), rng.integers(0, k, n)
            m = metrics(confusion(zip(t.tolist(), p.tolist()), k))
            assert m.accuracy == np.mean(t == p)
            for c in range(k):
                tp = np.sum((t == c) & (p == c))
                pred = np.sum(p == c)
                true = np.sum(t == c)
                assert m.per_class[c].precision == (tp / pred if pred else 0.0)
                assert m.per_class[c].recall == (tp / true if true else 0.0)


class TestReports:
    def _fixture(self):
        return metrics(confusion([(0, 0), (0, 1), (1, 1), (2, 1)], 3))

    def test_csv(self):
        rows = list(csv.reader(io.StringIO(report_csv(self._fixture(), ["a", "b", "c"]))))
        assert rows[0] == ["class", "precision", "recall", "f1"]
        assert rows[1] == ["a", "1.0000", "0.5000", "0.6667"]
        assert len(rows) == 4

    def test_text_four_decimals_and_flag(self):
        text = report_text(self._fixture(), ["a", "b", "c"])
        assert "0.6667" in text and "accuracy 0.5000" in text
        assert "0.0000*" in text and "zero denominator" in text
