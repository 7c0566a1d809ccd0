"""Labeled multi-task corpora stored as UTF-8 TSV."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

CORPUS_HEADER = ("text", "task", "label", "split")
SPLITS = ("train", "dev", "test")


class CorpusFormatError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledRecord:
    text: str
    task: str
    label: int
    split: str = "train"

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")
        if self.label < 0:
            raise ValueError(f"label must be non-negative, got {self.label}")


@dataclass
class LabeledCorpus:
    records: list[LabeledRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def tasks(self) -> list[str]:
        """Task ids in order of first appearance."""
        return list(dict.fromkeys(r.task for r in self.records))

    def select(self, task: str | None = None, split: str | None = None) -> list[LabeledRecord]:
        return [
            r for r in self.records if (task is None or r.task == task) and (split is None or r.split == split)
        ]

    def texts_labels(self, task: str, split: str) -> tuple[list[str], list[int]]:
        rows = self.select(task, split)
        return [r.text for r in rows], [r.label for r in rows]

    def extend(self, records: Iterable[LabeledRecord]) -> None:
        self.records.extend(records)


def write_corpus(corpus: LabeledCorpus | Iterable[LabeledRecord], path: str | Path) -> None:
    rows = corpus.records if isinstance(corpus, LabeledCorpus) else list(corpus)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\t".join(CORPUS_HEADER) + "\n")
        for r in rows:
            if any(ch in r.text for ch in "\t\n\r"):
                raise CorpusFormatError(f"text may not contain tabs or newlines: {r.text!r}")
            fh.write(f"{r.text}\t{r.task}\t{r.label}\t{r.split}\n")


def read_corpus(path: str | Path) -> LabeledCorpus:
    """Parse a corpus file; errors cite the offending line number."""
    records = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE)
        header = next(reader, None)
        if header is None or tuple(header) != CORPUS_HEADER:
            raise CorpusFormatError(f"{path}: header must be {'<TAB>'.join(CORPUS_HEADER)}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise CorpusFormatError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            text, task, label, split = row
            try:
                records.append(LabeledRecord(text, task, int(label), split))
            except ValueError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: {exc}") from None
    return LabeledCorpus(records)
