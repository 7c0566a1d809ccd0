"""Multi-task character classifier: shared convolution and bi-LSTM trunk with
per-task LSTM, attention pooling and softmax heads.

Parameter names are ``embed.table``, ``trunk.*`` for the shared layers and
``head.<task_id>.*`` for each task, so the parts updated on a task's step can
be selected by prefix.
"""

from __future__ import annotations

import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import LabeledCorpus
from .embedding import EmbeddingMatrix, Vocabulary
from .layers import (
    PAD_ID,
    ConvLayer,
    LstmParams,
    attention_pool,
    bilstm,
    conv_multichannel,
    embed_batch,
    lstm_sequence,
)
from .optim import OptimizerState, clip_gradients, optimizer_step
from .params import ParameterStore
from .tensor import Tensor, add, matmul, select_step, softmax_cross_entropy, _softmax

CHECKPOINT_MAGIC = b"ACLMM\x01"
EMBED = "embed.table"


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    classes: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        if not self.task_id or any(ch in self.task_id for ch in ". \t\n"):
            raise ValueError(f"task_id must be non-empty without dots or whitespace, got {self.task_id!r}")
        if len(self.classes) < 2:
            raise ValueError(f"task {self.task_id!r} needs at least 2 classes")
        if len(set(self.classes)) != len(self.classes):
            raise ValueError(f"task {self.task_id!r} has duplicate class names")

    @property
    def num_classes(self) -> int:
        return len(self.classes)


@dataclass
class TaskHead:
    lstm: LstmParams
    w_out: Tensor
    b_out: Tensor


@dataclass
class AclmmModel:
    store: ParameterStore
    vocab: Vocabulary
    tasks: dict[str, TaskSpec]
    conv: ConvLayer
    fwd: LstmParams
    bwd: LstmParams
    heads: dict[str, TaskHead]
    max_len: int = 140

    @property
    def kernel_size(self) -> int:
        return self.conv.kernel_size

    @property
    def channels(self) -> int:
        return self.conv.channels

    @property
    def embeddings(self) -> Tensor:
        return self.store[EMBED]

    def trunk_names(self, include_embeddings: bool = True) -> list[str]:
        names = self.store.names("trunk.")
        return ([EMBED] if include_embeddings else []) + names

    def head_names(self, task_id: str) -> list[str]:
        self._task(task_id)
        return self.store.names(f"head.{task_id}.")

    def _task(self, task_id: str) -> TaskSpec:
        try:
            return self.tasks[task_id]
        except KeyError:
            raise KeyError(f"unknown task {task_id!r}; registered: {sorted(self.tasks)}") from None

    # ------------------------------------------------------------ forward

    def encode(self, texts: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        """Right-padded ids ``(B, S)`` and the conv-output mask ``(B, S - k + 1)``.

        Texts are truncated to ``max_len`` characters and padded to at least
        ``k`` so every text yields one or more convolution windows.
        """
        k = self.kernel_size
        seqs = [self.vocab.encode(t)[: self.max_len] for t in texts]
        lengths = np.array([len(s) for s in seqs], dtype=np.intp)
        S = max(int(lengths.max(initial=0)), k)
        ids = np.full((len(seqs), S), PAD_ID, dtype=np.intp)
        for row, s in zip(ids, seqs):
            row[: len(s)] = s
        windows = np.maximum(lengths, k) - k + 1
        mask = np.arange(S - k + 1)[None, :] < windows[:, None]
        return ids, mask

    def logits(self, texts: Sequence[str], task_id: str) -> tuple[Tensor, Tensor, np.ndarray]:
        """Class logits ``(B, n_classes)``, attention weights and the window mask."""
        head = self.heads[self._task(task_id).task_id]
        if len(texts) == 0:
            raise ValueError("no texts given")
        ids, mask = self.encode(texts)
        x = embed_batch(ids, self.embeddings)
        feats = conv_multichannel(x, self.conv)
        shared = bilstm(feats, self.fwd, self.bwd, mask)
        states = lstm_sequence(shared, head.lstm, mask)
        # padded steps carry the state, so the last row is the final real output
        query = select_step(states, states.shape[1] - 1)
        alpha, summary = attention_pool(states, query, mask)
        return add(matmul(summary, head.w_out), head.b_out), alpha, mask

    def loss(self, texts: Sequence[str], labels: Sequence[int], task_id: str) -> Tensor:
        """Mean cross-entropy of the task head on one batch."""
        n_classes = self._task(task_id).num_classes
        labels = np.asarray(labels, dtype=np.intp)
        if np.any((labels < 0) | (labels >= n_classes)):
            raise ValueError(f"label outside 0..{n_classes - 1} for task {task_id!r}")
        z, _, _ = self.logits(texts, task_id)
        return softmax_cross_entropy(z, labels)[0]


@dataclass
class Prediction:
    label: int
    probs: np.ndarray
    attention: np.ndarray


def build_model(
    embedding: EmbeddingMatrix,
    k: int,
    c: int,
    tasks: Sequence[TaskSpec],
    seed: int = 0,
    max_len: int = 140,
) -> AclmmModel:
    """Create a model whose embedding table is a trainable copy of ``embedding``.

    The bi-LSTM has ``c`` units per direction, so each task LSTM reads and
    emits ``2c``-wide states.
    """
    if k < 1 or c < 1:
        raise ValueError("k and c must be positive")
    if max_len < 1:
        raise ValueError("max_len must be positive")
    ids = [t.task_id for t in tasks]
    if not ids:
        raise ValueError("at least one task is required")
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise ValueError(f"duplicate task_id: {', '.join(dup)}")
    store = ParameterStore(seed)
    store.add(EMBED, embedding.vectors.copy())
    d = embedding.dim
    conv = ConvLayer.create(store, "trunk.conv", k, d, c)
    fwd = LstmParams.create(store, "trunk.bilstm.fwd", c, c)
    bwd = LstmParams.create(store, "trunk.bilstm.bwd", c, c)
    heads = {}
    for t in tasks:
        prefix = f"head.{t.task_id}"
        heads[t.task_id] = TaskHead(
            LstmParams.create(store, f"{prefix}.lstm", 2 * c, 2 * c),
            store.create(f"{prefix}.out.W", (2 * c, t.num_classes)),
            store.create(f"{prefix}.out.b", (t.num_classes,), init="zeros"),
        )
    return AclmmModel(store, embedding.vocab, {t.task_id: t for t in tasks}, conv, fwd, bwd, heads, max_len)


# ---------------------------------------------------------------- inference


def _predict_chunk(model: AclmmModel, texts: Sequence[str], task_id: str) -> list[Prediction]:
    z, alpha, mask = model.logits(texts, task_id)
    probs = _softmax(z.data, None)
    out = []
    for p, a, m in zip(probs, alpha.data, mask):
        out.append(Prediction(int(np.argmax(p)), p, a[m].copy()))
    return out


def predict_batch(
    model: AclmmModel,
    texts: Sequence[str],
    task_id: str,
    batch_size: int = 64,
    workers: int = 1,
) -> list[Prediction]:
    """Classify ``texts`` in order.

    Each result holds the argmax class (lowest index on ties), the class
    probabilities and one attention weight per convolution window.
    """
    model._task(task_id)
    chunks = [texts[i : i + batch_size] for i in range(0, len(texts), batch_size)]
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda ch: _predict_chunk(model, ch, task_id), chunks))
    else:
        parts = [_predict_chunk(model, ch, task_id) for ch in chunks]
    return [p for part in parts for p in part]


def forward(model: AclmmModel, text: str, task_id: str) -> np.ndarray:
    """Class probabilities for one text."""
    return predict_batch(model, [text], task_id)[0].probs


# ---------------------------------------------------------------- training


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    max_len: int = 140
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    seed: int = 0
    schedule: str = "round_robin"
    freeze_embeddings: bool = False
    clip_norm: float | None = None
    lr_decay: str = "constant"

    def __post_init__(self):
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ValueError(f"clip_norm must be positive, got {self.clip_norm}")
        if self.lr_decay not in ("constant", "linear"):
            raise ValueError(f"lr_decay must be 'constant' or 'linear', got {self.lr_decay!r}")
        if self.epochs < 0 or self.batch_size < 1 or self.max_len < 1:
            raise ValueError("epochs must be >= 0, batch_size and max_len positive")
        if self.schedule not in ("round_robin", "proportional"):
            raise ValueError(f"schedule must be 'round_robin' or 'proportional', got {self.schedule!r}")
        OptimizerState(self.optimizer, self.learning_rate)


@dataclass
class TaskEpoch:
    train_loss: float
    dev_loss: float | None
    dev_accuracy: float | None


@dataclass
class TrainLog:
    epochs: list[dict[str, TaskEpoch]] = field(default_factory=list)

    def series(self, task_id: str, key: str) -> list[float | None]:
        return [getattr(e[task_id], key) for e in self.epochs if task_id in e]


def evaluate(model: AclmmModel, texts: Sequence[str], labels: Sequence[int], task_id: str) -> tuple[float, float]:
    """Mean cross-entropy and accuracy of the task head."""
    preds = predict_batch(model, texts, task_id)
    labels = np.asarray(labels, dtype=np.intp)
    picked = np.array([max(p.probs[y], 1e-12) for p, y in zip(preds, labels)])
    acc = float(np.mean([p.label == y for p, y in zip(preds, labels)]))
    return float(-np.mean(np.log(picked))), acc


class _Batcher:
    """Endless reshuffled passes over one task's training examples."""

    def __init__(self, texts: list[str], labels: list[int], batch_size: int, rng: np.random.Generator):
        self.texts, self.labels = texts, np.asarray(labels, dtype=np.intp)
        self.batch_size, self.rng = batch_size, rng
        self.order = rng.permutation(len(texts))
        self.pos = 0

    def next(self) -> tuple[list[str], np.ndarray]:
        if self.pos >= len(self.order):
            self.order = self.rng.permutation(len(self.texts))
            self.pos = 0
        idx = self.order[self.pos : self.pos + self.batch_size]
        self.pos += len(idx)
        return [self.texts[i] for i in idx], self.labels[idx]


def _merge(corpora: LabeledCorpus | Iterable[LabeledCorpus]) -> LabeledCorpus:
    if isinstance(corpora, LabeledCorpus):
        return corpora
    merged = LabeledCorpus()
    for c in corpora:
        merged.extend(c.records)
    return merged


def train_multitask(
    model: AclmmModel,
    corpora: LabeledCorpus | Iterable[LabeledCorpus],
    cfg: TrainConfig | None = None,
    tasks: Sequence[str] | None = None,
    on_epoch=None,
) -> tuple[AclmmModel, TrainLog]:
    """Train the trunk and task heads, one batch per task step.

    With the round-robin schedule every cycle takes one batch from each task
    in turn; an epoch is as many cycles as the largest training split needs
    batches.  A step on task T updates the shared trunk and T's head only.
    ``tasks`` restricts training to a subset of the corpus tasks.
    """
    cfg = cfg or TrainConfig()
    corpus = _merge(corpora)
    task_ids = list(tasks) if tasks is not None else corpus.tasks
    if not task_ids:
        raise ValueError("corpus has no records")
    data = {}
    for t in task_ids:
        spec = model._task(t)
        texts, labels = corpus.texts_labels(t, "train")
        if not texts:
            raise ValueError(f"task {t!r} has an empty train split")
        bad = [y for y in labels if y >= spec.num_classes]
        if bad:
            raise ValueError(f"task {t!r} has label {bad[0]} >= num_classes {spec.num_classes}")
        data[t] = (texts, labels, corpus.texts_labels(t, "dev"))

    model.max_len = cfg.max_len
    rng = np.random.default_rng([cfg.seed, 7])
    batchers = {t: _Batcher(d[0], d[1], cfg.batch_size, rng) for t, d in data.items()}
    sizes = np.array([len(data[t][0]) for t in task_ids], dtype=float)
    cycles = math.ceil(sizes.max() / cfg.batch_size)
    opt = OptimizerState(cfg.optimizer, cfg.learning_rate)
    trunk = model.trunk_names(include_embeddings=not cfg.freeze_embeddings)
    log = TrainLog()

    for epoch in range(cfg.epochs):
        if cfg.schedule == "round_robin":
            order = [t for _ in range(cycles) for t in task_ids]
        else:
            draws = rng.choice(len(task_ids), size=cycles * len(task_ids), p=sizes / sizes.sum())
            order = [task_ids[i] for i in draws]
        losses: dict[str, list[float]] = {t: [] for t in task_ids}
        if cfg.lr_decay == "linear":
            # down to a tenth of the initial rate in the final epoch
            opt.learning_rate = cfg.learning_rate * (1.0 - 0.9 * epoch / max(cfg.epochs - 1, 1))
        for t in order:
            texts, labels = batchers[t].next()
            model.store.zero_grad()
            loss = model.loss(texts, labels, t)
            loss.backward()
            names = trunk + model.head_names(t)
            if cfg.clip_norm is not None:
                clip_gradients(model.store, names, cfg.clip_norm)
            optimizer_step(model.store, opt, names)
            losses[t].append(float(loss.data))
        model.store.zero_grad()
        record = {}
        for t in task_ids:
            dev_texts, dev_labels = data[t][2]
            dev_loss, dev_acc = evaluate(model, dev_texts, dev_labels, t) if dev_texts else (None, None)
            train_loss = float(np.mean(losses[t])) if losses[t] else float("nan")
            record[t] = TaskEpoch(train_loss, dev_loss, dev_acc)
        log.epochs.append(record)
        if on_epoch is not None:
            on_epoch(epoch + 1, record)
    return model, log


# ---------------------------------------------------------------- checkpoints


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


def save_checkpoint(model: AclmmModel, path: str | Path) -> None:
    """Binary layout: magic, length-prefixed UTF-8 JSON metadata, then for
    each parameter its name, shape and little-endian float64 values."""
    meta = {
        "kernel_size": model.kernel_size,
        "channels": model.channels,
        "max_len": model.max_len,
        "tasks": [{"task_id": t.task_id, "classes": list(t.classes)} for t in model.tasks.values()],
        "vocab": model.vocab.itos,
    }
    blob = json.dumps(meta, ensure_ascii=False, sort_keys=True).encode("utf-8")
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", len(blob)), blob, struct.pack("<I", len(model.store))]
    for name, p in model.store.items():
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)) + nb)
        parts.append(struct.pack("<B", p.data.ndim) + struct.pack(f"<{p.data.ndim}I", *p.data.shape))
        parts.append(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointTruncatedError(f"checkpoint truncated at byte {len(self.buf)} (needed {self.pos + n})")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path: str | Path) -> AclmmModel:
    buf = Path(path).read_bytes()
    head = buf[: len(CHECKPOINT_MAGIC)]
    if head != CHECKPOINT_MAGIC:
        if head[:5] == CHECKPOINT_MAGIC[:5] and len(head) == 6:
            raise CheckpointVersionError(f"unsupported checkpoint version {head[5]}; expected {CHECKPOINT_MAGIC[5]}")
        raise CheckpointVersionError("not a checkpoint: bad magic header")
    r = _Reader(buf)
    r.take(len(CHECKPOINT_MAGIC))
    (meta_len,) = r.unpack("<I")
    try:
        meta = json.loads(r.take(meta_len).decode("utf-8"))
        tasks = [TaskSpec(t["task_id"], tuple(t["classes"])) for t in meta["tasks"]]
        vocab = Vocabulary(list(meta["vocab"]))
        k, c, max_len = int(meta["kernel_size"]), int(meta["channels"]), int(meta["max_len"])
    except CheckpointTruncatedError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"corrupt checkpoint metadata: {exc}") from None

    (count,) = r.unpack("<I")
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        n = int(np.prod(shape, dtype=np.int64))
        arrays[name] = np.frombuffer(r.take(8 * n), dtype="<f8").astype(np.float64).reshape(shape)
    if r.pos != len(buf):
        raise CheckpointError(f"{len(buf) - r.pos} unexpected trailing bytes")

    if EMBED not in arrays or arrays[EMBED].ndim != 2:
        raise CheckpointShapeError(f"checkpoint lacks a 2-D {EMBED!r}")
    if arrays[EMBED].shape[0] != len(vocab):
        raise CheckpointShapeError(f"{EMBED} has {arrays[EMBED].shape[0]} rows, vocabulary has {len(vocab)}")
    model = build_model(EmbeddingMatrix(vocab, arrays[EMBED]), k, c, tasks, max_len=max_len)
    expected = set(model.store.names())
    if set(arrays) != expected:
        diff = sorted(set(arrays) ^ expected)
        raise CheckpointShapeError(f"parameter set mismatch: {', '.join(diff)}")
    for name, arr in arrays.items():
        p = model.store[name]
        if arr.shape != p.shape:
            raise CheckpointShapeError(f"{name}: checkpoint shape {arr.shape}, architecture expects {p.shape}")
        p.data[...] = arr
    return model
