"""Seeded synthetic text corpora with planted class vocabulary."""

from __future__ import annotations

from typing import Sequence

import numpy as np
import pandas as pd

from .corpus import LabeledCorpus, LabeledRecord
from .labels import EMOTIONS, IDENTIFY_CLASSES

# common function characters used as neutral filler
FILLER = tuple("的了是在我有他这中大来上个们到说就出要以时和地为子")
_SIGNAL_BASE = 0x4E00 + 0x800


def signal_chars(task_index: int, n_classes: int, per_class: int) -> list[list[str]]:
    """Disjoint blocks of CJK characters, one block per class of one task."""
    start = _SIGNAL_BASE + 0x100 * task_index
    return [[chr(start + c * per_class + j) for j in range(per_class)] for c in range(n_classes)]


def planted_text(
    rng: np.random.Generator,
    signal: Sequence[str],
    n_signal: int = 2,
    length: tuple[int, int] = (8, 20),
    extra: Sequence[str] = (),
) -> str:
    """Filler characters with ``n_signal`` class characters inserted at random positions."""
    chars = list(rng.choice(FILLER, int(rng.integers(length[0], length[1] + 1))))
    for ch in [*(rng.choice(signal) for _ in range(n_signal)), *extra]:
        chars.insert(int(rng.integers(0, len(chars) + 1)), str(ch))
    return "".join(chars)


def demo_corpus(
    seed: int = 0,
    n_train: int = 400,
    n_dev: int = 100,
    n_test: int = 100,
    per_class: int = 4,
) -> LabeledCorpus:
    """Two-task corpus: pandemic relatedness (2 classes) and emotion (8 classes).

    Emotion texts are pandemic texts, so they also carry one pandemic marker
    character; this is the cross-task signal the shared trunk can exploit.
    Identify texts of both classes carry two characters of a random emotion,
    so relatedness has to be read from the marker characters alone.
    """
    rng = np.random.default_rng([seed, 11])
    ident = signal_chars(0, 2, per_class)
    emo = signal_chars(1, len(EMOTIONS), per_class)
    corpus = LabeledCorpus()
    for split, n in (("train", n_train), ("dev", n_dev), ("test", n_test)):
        for _ in range(n):
            y = int(rng.integers(2))
            mood = [str(ch) for ch in rng.choice(emo[int(rng.integers(len(EMOTIONS)))], 2)]
            corpus.records.append(LabeledRecord(planted_text(rng, ident[y], extra=mood), "identify", y, split))
        for _ in range(n):
            y = int(rng.integers(len(EMOTIONS)))
            marker = [str(rng.choice(ident[1]))]
            corpus.records.append(LabeledRecord(planted_text(rng, emo[y], extra=marker), "emotion", y, split))
    return corpus


def related_tasks_corpus(
    seed: int = 0,
    n_rich: int = 320,
    n_poor: int = 32,
    n_dev: int = 200,
    n_classes: int = 4,
    per_class: int = 6,
) -> LabeledCorpus:
    """A data-rich task ``rich`` and a low-resource task ``poor`` whose classes
    are marked by the same planted characters.

    ``poor`` texts are shorter and carry one signal character, so learning the
    character-to-class map from its own few examples is hard.
    """
    rng = np.random.default_rng([seed, 13])
    signal = signal_chars(2, n_classes, per_class)
    corpus = LabeledCorpus()
    for _ in range(n_rich):
        y = int(rng.integers(n_classes))
        corpus.records.append(LabeledRecord(planted_text(rng, signal[y]), "rich", y, "train"))
    for split, n in (("train", n_poor), ("dev", n_dev)):
        for _ in range(n):
            y = int(rng.integers(n_classes))
            corpus.records.append(LabeledRecord(planted_text(rng, signal[y], 1, (6, 14)), "poor", y, split))
    return corpus


def demo_posts(panel: pd.DataFrame, seed: int = 0, per_class: int = 4) -> pd.DataFrame:
    """City-day posts whose true labels reproduce the panel's counts.

    Each city-day gets ``total_texts`` posts: one per emotion count, carrying
    that emotion's characters plus two pandemic markers like the identify
    examples of :func:`demo_corpus`, and the rest written like unrelated
    identify examples (which also carry emotion characters).  Returns a frame with ``city``,
    ``date`` and ``text`` columns in panel order.
    """
    rng = np.random.default_rng([seed, 17])
    ident = signal_chars(0, 2, per_class)
    emo = signal_chars(1, len(EMOTIONS), per_class)
    rows = []
    for rec in panel.itertuples(index=False):
        labels = [e for e, name in enumerate(EMOTIONS) for _ in range(int(getattr(rec, name)))]
        labels += [None] * (int(rec.total_texts) - len(labels))
        for y in rng.permutation(np.array(labels, dtype=object)):
            if y is None:
                mood = [str(ch) for ch in rng.choice(emo[int(rng.integers(len(EMOTIONS)))], 2)]
                text = planted_text(rng, ident[0], extra=mood)
            else:
                text = planted_text(rng, emo[y], extra=[str(ch) for ch in rng.choice(ident[1], 2)])
            rows.append((rec.city, rec.date, text))
    return pd.DataFrame(rows, columns=["city", "date", "text"])
