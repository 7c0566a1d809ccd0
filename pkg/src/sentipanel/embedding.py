"""Character vocabulary and CBOW embeddings trained with negative sampling."""

from __future__ import annotations

import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PAD, UNK = "<pad>", "<unk>"
PAD_ID, UNK_ID = 0, 1
EMB_MAGIC = "sentipanel-emb"
EMB_VERSION = "v1"

_ESCAPES = {"\\": "\\\\", "\t": "\\t", "\n": "\\n", "\r": "\\r"}
_UNESCAPES = {v: k for k, v in _ESCAPES.items()}


class EmbeddingFormatError(ValueError):
    pass


def segment(text: str) -> list[str]:
    """Split text into characters, keeping combining marks, variation
    selectors and zero-width joiner sequences attached to their base."""
    out: list[str] = []
    join_next = False
    for ch in text:
        if out and (join_next or unicodedata.combining(ch) or "\ufe00" <= ch <= "\ufe0f" or ch == "\u200d"):
            out[-1] += ch
        else:
            out.append(ch)
        join_next = ch == "\u200d"
    return out


@dataclass
class Vocabulary:
    itos: list[str] = field(default_factory=lambda: [PAD, UNK])

    def __post_init__(self):
        if self.itos[:2] != [PAD, UNK]:
            raise ValueError("ids 0 and 1 are reserved for <pad> and <unk>")
        self.stoi = {s: i for i, s in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate vocabulary entry")

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, ch: str) -> bool:
        return ch in self.stoi and self.stoi[ch] > UNK_ID

    def id(self, ch: str) -> int:
        return self.stoi.get(ch, UNK_ID)

    def encode(self, text: str) -> list[int]:
        return [self.id(ch) for ch in segment(text)]

    def decode(self, ids: Iterable[int]) -> str:
        return "".join(self.itos[i] for i in ids if i != PAD_ID)


def build_vocab(corpus: Sequence[str], min_count: int = 1) -> Vocabulary:
    """Assign ids to every character seen at least ``min_count`` times.

    Ids follow descending frequency, ties broken by code point order, so the
    result does not depend on corpus order.
    """
    if not corpus:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    counts = Counter(ch for text in corpus for ch in segment(text))
    kept = sorted((c for c, n in counts.items() if n >= min_count), key=lambda c: (-counts[c], c))
    return Vocabulary([PAD, UNK, *kept])


@dataclass
class EmbeddingMatrix:
    vocab: Vocabulary
    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.vocab):
            raise ValueError(f"need {len(self.vocab)} rows, got shape {self.vectors.shape}")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("embedding contains non-finite values")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __getitem__(self, ch: str) -> np.ndarray:
        return self.vectors[self.vocab.id(ch)]


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b / (na * nb))


def nearest_neighbors(matrix: EmbeddingMatrix, char: str, k: int = 10) -> list[tuple[str, float]]:
    """Top-``k`` entries by cosine similarity to ``char``, excluding the query."""
    if char not in matrix.vocab:
        raise KeyError(f"{char!r} is not in the vocabulary")
    q = matrix.vocab.stoi[char]
    V = matrix.vectors
    norms = np.linalg.norm(V, axis=1)
    denom = norms * norms[q]
    sims = np.divide(V @ V[q], denom, out=np.zeros(len(V)), where=denom > 0)
    order = sorted((i for i in range(len(V)) if i != q), key=lambda i: (-sims[i], i))
    return [(matrix.vocab.itos[i], float(sims[i])) for i in order[:k]]


# ---------------------------------------------------------------- training


@dataclass
class CbowLog:
    """Per-epoch losses.

    ``epoch_loss`` is the full-corpus objective after each epoch, scored
    against one fixed draw of negatives so epochs are comparable;
    ``running_loss`` averages the mini-batch losses seen during the epoch.
    """

    epoch_loss: list[float] = field(default_factory=list)
    running_loss: list[float] = field(default_factory=list)


def _sgns_loss(h, w_out, targets) -> np.ndarray:
    score = np.einsum("bd,bkd->bk", h, w_out[targets])
    sig = 0.5 * (1.0 + np.tanh(0.5 * score))
    return -np.log(np.maximum(sig[:, 0], 1e-12)) - np.sum(np.log(np.maximum(1.0 - sig[:, 1:], 1e-12)), axis=1)


def _noise_table(ids: list[np.ndarray], V: int) -> np.ndarray:
    counts = np.zeros(V)
    for seq in ids:
        np.add.at(counts, seq, 1.0)
    counts[:2] = 0.0
    weights = counts**0.75
    if weights.sum() == 0:
        raise ValueError("corpus has no in-vocabulary characters")
    return weights / weights.sum()


def _context_matrix(seq: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray]:
    n = len(seq)
    offsets = [o for o in range(-window, window + 1) if o != 0]
    idx = np.arange(n)[:, None] + np.array(offsets)[None, :]
    valid = (idx >= 0) & (idx < n)
    ctx = np.where(valid, seq[np.clip(idx, 0, n - 1)], PAD_ID)
    return ctx, valid


def train_cbow(
    corpus: Sequence[str],
    vocab: Vocabulary,
    d: int = 200,
    window: int = 2,
    negatives: int = 5,
    epochs: int = 5,
    seed: int = 0,
    learning_rate: float = 0.02,
    batch_positions: int = 16,
    log: CbowLog | None = None,
) -> EmbeddingMatrix:
    """Train input vectors by predicting each character from its averaged context.

    The output layer is negative sampling: the centre character is a
    positive example and ``negatives`` draws from the unigram^0.75
    distribution are negatives.  Updates are applied in mini-batches of
    ``batch_positions`` centre positions with a linearly decaying learning
    rate.  The PAD row stays zero.
    """
    if d < 1:
        raise ValueError("embedding dimension d must be >= 1")
    if window < 1:
        raise ValueError("window must be >= 1")
    if negatives < 0 or epochs < 0:
        raise ValueError("negatives and epochs must be nonnegative")
    rng = np.random.default_rng(seed)
    V = len(vocab)
    w_in = rng.uniform(-0.5 / d, 0.5 / d, size=(V, d))
    w_in[PAD_ID] = 0.0
    w_out = np.zeros((V, d))
    if epochs == 0:
        return EmbeddingMatrix(vocab, w_in)

    seqs = [np.array(vocab.encode(t), dtype=np.intp) for t in corpus]
    seqs = [s for s in seqs if len(s) >= 2]
    if not seqs:
        raise ValueError("corpus needs texts of at least two characters")
    noise = _noise_table(seqs, V)
    noise_cdf = np.cumsum(noise)

    ctx_rows, mask_rows, centers = [], [], []
    for s in seqs:
        ctx, valid = _context_matrix(s, window)
        ctx_rows.append(ctx)
        mask_rows.append(valid)
        centers.append(s)
    ctx_all = np.concatenate(ctx_rows)
    mask_all = np.concatenate(mask_rows) & (ctx_all > UNK_ID)
    center_all = np.concatenate(centers)
    keep = (center_all > UNK_ID) & mask_all.any(axis=1)
    ctx_all, mask_all, center_all = ctx_all[keep], mask_all[keep], center_all[keep]
    n = len(center_all)
    if n == 0:
        raise ValueError("no trainable positions in corpus")
    total_steps = epochs * ((n + batch_positions - 1) // batch_positions)
    step = 0
    labels = np.zeros(1 + negatives)
    labels[0] = 1.0
    eval_rng = np.random.default_rng([seed, 1])
    eval_targets = np.concatenate(
        [center_all[:, None], _draw(noise_cdf, eval_rng, (n, negatives), V)], axis=1
    )

    for _ in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for lo in range(0, n, batch_positions):
            sel = order[lo : lo + batch_positions]
            lr = learning_rate * max(1e-4, 1.0 - step / total_steps)
            step += 1
            ctx, m = ctx_all[sel], mask_all[sel].astype(np.float64)
            cnt = m.sum(axis=1, keepdims=True)
            h = np.einsum("bw,bwd->bd", m, w_in[ctx]) / cnt
            neg = _draw(noise_cdf, rng, (len(sel), negatives), V)
            targets = np.concatenate([center_all[sel][:, None], neg], axis=1)
            wt = w_out[targets]  # (b, 1+neg, d)
            score = np.einsum("bd,bkd->bk", h, wt)
            sig = 0.5 * (1.0 + np.tanh(0.5 * score))
            epoch_loss += float(
                -np.sum(np.log(np.maximum(sig[:, 0], 1e-12)))
                - np.sum(np.log(np.maximum(1.0 - sig[:, 1:], 1e-12)))
            )
            g = (labels[None, :] - sig) * lr  # ascent direction on log-likelihood
            grad_h = np.einsum("bk,bkd->bd", g, wt)
            np.add.at(w_out, targets.reshape(-1), (g[:, :, None] * h[:, None, :]).reshape(-1, d))
            upd = (m / cnt)[:, :, None] * grad_h[:, None, :]
            np.add.at(w_in, ctx.reshape(-1), upd.reshape(-1, d))
            w_in[PAD_ID] = 0.0
        if log is not None:
            log.running_loss.append(epoch_loss / n)
            m_all = mask_all.astype(np.float64)
            h_all = np.einsum("bw,bwd->bd", m_all, w_in[ctx_all]) / m_all.sum(axis=1, keepdims=True)
            log.epoch_loss.append(float(np.mean(_sgns_loss(h_all, w_out, eval_targets))))
    return EmbeddingMatrix(vocab, w_in)


def _draw(cdf: np.ndarray, rng: np.random.Generator, shape, V: int) -> np.ndarray:
    return np.minimum(np.searchsorted(cdf, rng.random(shape), side="right"), V - 1)


# ---------------------------------------------------------------- file format


def _escape(tok: str) -> str:
    return "".join(_ESCAPES.get(c, c) for c in tok)


def _unescape(tok: str) -> str:
    out, i = [], 0
    while i < len(tok):
        pair = tok[i : i + 2]
        if pair in _UNESCAPES:
            out.append(_UNESCAPES[pair])
            i += 2
        else:
            out.append(tok[i])
            i += 1
    return "".join(out)


def save_embeddings(matrix: EmbeddingMatrix, path: str | Path) -> None:
    V, d = matrix.vectors.shape
    lines = [f"{EMB_MAGIC} {EMB_VERSION} {V} {d}"]
    for tok, row in zip(matrix.vocab.itos, matrix.vectors):
        lines.append(_escape(tok) + "\t" + " ".join(repr(float(x)) for x in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_embeddings(path: str | Path) -> EmbeddingMatrix:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise EmbeddingFormatError(f"{path}: empty embedding file")
    head = lines[0].split(" ")
    if len(head) != 4 or head[0] != EMB_MAGIC:
        raise EmbeddingFormatError(f"{path}: missing '{EMB_MAGIC}' header")
    if head[1] != EMB_VERSION:
        raise EmbeddingFormatError(f"{path}: unsupported version {head[1]!r}")
    V, d = int(head[2]), int(head[3])
    if len(lines) - 1 != V:
        raise EmbeddingFormatError(f"{path}: header says {V} rows, found {len(lines) - 1}")
    itos, rows = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        tok, sep, nums = line.partition("\t")
        if not sep:
            raise EmbeddingFormatError(f"{path}:{lineno}: expected TAB after the character")
        vals = nums.split(" ")
        if len(vals) != d:
            raise EmbeddingFormatError(f"{path}:{lineno}: expected {d} values, got {len(vals)}")
        itos.append(_unescape(tok))
        rows.append([float(v) for v in vals])
    return EmbeddingMatrix(Vocabulary(itos), np.array(rows))
