"""Shared fixtures for the model tests and the acceptance suite."""

import numpy as np

from sentipanel.embedding import EmbeddingMatrix, build_vocab
from sentipanel.model import TaskSpec, build_model
from sentipanel.synthetic import EMOTIONS, IDENTIFY_CLASSES
from sentipanel.tensor import add

TASKS = [TaskSpec("identify", IDENTIFY_CLASSES), TaskSpec("emotion", EMOTIONS)]
GRAD_BATCHES = {"identify": (["疫情好可怕", "好"], [1, 0]), "emotion": (["今天天气很好", "abc"], [3, 7])}


def gradcheck_model(seed: int = 0, c: int = 4, d: int = 6, scale: float = 0.5):
    """Two-task model at a random, unsaturated parameter point, with its loss.

    Every parameter (biases included) is redrawn from N(0, scale^2).  At the
    Glorot/zero-bias initial point many recurrent-weight gradients are near
    1e-8, where one ulp of loss noise over a 1e-4 central difference already
    exceeds 1e-4 relative error.
    """
    texts = [t for batch, _ in GRAD_BATCHES.values() for t in batch]
    vocab = build_vocab(texts)
    model = build_model(EmbeddingMatrix(vocab, np.zeros((len(vocab), d))), 3, c, TASKS, seed=seed)
    rng = np.random.default_rng(seed)
    for _, p in model.store.items():
        p.data[...] = rng.normal(scale=scale, size=p.shape)

    def loss(store):
        out = None
        for task, (batch, labels) in GRAD_BATCHES.items():
            term = model.loss(batch, labels, task)
            out = term if out is None else add(out, term)
        return out

    return model, loss
