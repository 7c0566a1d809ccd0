"""Acceptance criteria 1-8.

Each test prints one ``criterion N: PASS|FAIL`` line (also collected in the
terminal summary) and then asserts it.  Run alone with
``pytest tests/test_acceptance.py -v``.
"""

import csv
import hashlib
import time

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sentipanel.cli import run
from sentipanel.corpus import write_corpus
from sentipanel.embedding import EmbeddingMatrix, build_vocab, train_cbow
from sentipanel.gradcheck import grad_check_detail
from sentipanel.labels import EMOTIONS
from sentipanel.metrics import f1_score
from sentipanel.model import TaskSpec, build_model, load_checkpoint, predict_batch, save_checkpoint, train_multitask
from sentipanel.model import TrainConfig
from sentipanel.panel import (
    aggregate_shares,
    bp_lm_cd_test,
    f_pool_test,
    hausman_test,
    hc_covariance,
    ols_fit,
    re_fit,
    within_fit,
)
from sentipanel.panel.simulate import monte_carlo
from sentipanel.synthetic import demo_corpus, related_tasks_corpus
from sentipanel.tensor import softmax

from helpers import TASKS, gradcheck_model

# Per-emotion precision, recall and reference F1.
EMOTION_TABLE = [
    ("fear", 0.8987, 0.9405, 0.9191),
    ("disgust", 0.6895, 0.6102, 0.6475),
    ("joy", 0.8427, 0.7845, 0.8126),
    ("surprise", 0.8788, 0.8985, 0.8885),
    ("confidence", 0.9570, 0.9727, 0.9648),
    ("sadness", 0.7197, 0.8123, 0.7632),
    ("anger", 0.7947, 0.7579, 0.7759),
    ("uncertainty", 0.8251, 0.7992, 0.8119),
]


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def final_dev_accuracy(log_path, task):
    with open(log_path, encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.DictReader(fh, delimiter="\t") if r["task"] == task]
    return int(rows[-1]["epoch"]), float(rows[-1]["dev_accuracy"])


def test_criterion_1_gradient_integrity(acceptance):
    start = time.perf_counter()
    model, loss = gradcheck_model()
    detail = grad_check_detail(loss, model.store, n_coords=64)
    seconds = time.perf_counter() - start
    worst_name = max(detail, key=detail.get)
    small = sorted(n for n in model.store.names() if model.store[n].data.size < 64)
    ok = detail[worst_name] < 1e-4 and seconds < 60
    acceptance(
        1,
        ok,
        f"max rel err {detail[worst_name]:.2e} ({worst_name}) over {len(detail)} tensors, "
        f"{len(small)} smaller than 64 checked in full; {seconds:.1f} s",
    )
    assert ok


@pytest.mark.xfail(strict=True, reason="the disgust row's printed F1 is not the harmonic mean of its printed Pr/Re")
def test_criterion_2_metric_fixture(acceptance):
    misses = [(name, f"{f1_score(p, r):.6f}", f1) for name, p, r, f1 in EMOTION_TABLE if round(f1_score(p, r), 4) != f1]
    ok = not misses
    detail = f"{len(EMOTION_TABLE) - len(misses)}/{len(EMOTION_TABLE)} rows reproduce to 4 decimals"
    if misses:
        detail += "; mismatched: " + ", ".join(f"{n} computed {c} vs printed {f}" for n, c, f in misses)
    acceptance(2, ok, detail)
    assert ok


def test_criterion_3_estimator_oracle(acceptance):
    rng = np.random.default_rng(2024)
    ols_worst = 0.0
    fe_worst = 0.0
    for _ in range(100):
        n, k = int(rng.integers(10, 80)), int(rng.integers(1, 8))
        X = rng.normal(size=(n, k)) * rng.uniform(0.1, 10, k)
        y = rng.normal(size=n)
        ols_worst = max(ols_worst, np.abs(ols_fit(y, X).beta - np.linalg.solve(X.T @ X, X.T @ y)).max())

        n_groups = int(rng.integers(2, 8))
        sizes = rng.integers(4, 12, n_groups)
        groups = np.repeat(np.arange(n_groups), sizes)
        Xg = rng.normal(size=(groups.size, 3))
        yg = Xg @ rng.normal(size=3) + rng.normal(scale=3, size=n_groups)[groups] + rng.normal(size=groups.size)
        dummies = np.column_stack([(groups == g).astype(float) for g in range(1, n_groups)])
        lsdv = ols_fit(yg, np.column_stack([np.ones(groups.size), Xg, dummies]))
        fe_worst = max(fe_worst, np.abs(lsdv.beta[1:4] - within_fit(yg, Xg, groups).beta).max())
    ok = ols_worst < 1e-8 and fe_worst < 1e-8
    acceptance(3, ok, f"max |dbeta| QR vs normal equations {ols_worst:.1e}, LSDV vs within {fe_worst:.1e} (100 fixtures)")
    assert ok


def test_criterion_4_statistic_fixtures(acceptance):
    hausman = hausman_test([1.0, 0.0], np.diag([1.25, 2.0]), [0.0, 0.0], np.eye(2)).statistic
    e = np.tile(np.random.default_rng(0).normal(size=31), 10)
    lm, _ = bp_lm_cd_test(e, np.repeat(np.arange(10), 31), np.tile(np.arange(31), 10))
    f = f_pool_test(12.5, 12.5, n_groups=10, n=310, k=5).statistic
    ok = abs(hausman - 4.0) < 1e-9 and lm.statistic == 1395.0 and f == 0.0
    acceptance(4, ok, f"hausman H={hausman!r}, bp_lm={lm.statistic!r}, f_pool={f!r}")
    assert ok


def test_criterion_5_monte_carlo(acceptance):
    summary = monte_carlo(replications=200, seed=0)
    coverage = summary.min_coverage()
    reject = summary.min_f_reject()
    ok = coverage >= 0.90 and reject >= 0.95 and summary.seconds < 300
    acceptance(
        5,
        ok,
        f"min FE 95% CI coverage {coverage:.3f}, min F-pool rejection {reject:.3f}, "
        f"{summary.replications} panels in {summary.seconds:.0f} s",
    )
    assert ok


def test_criterion_6_learnability(acceptance, tmp_path):
    start = time.perf_counter()
    codes = [run(["demo", "--out", str(tmp_path / name), "--seed", "0"]) for name in ("a", "b")]
    seconds = (time.perf_counter() - start) / 2
    epoch, ident = final_dev_accuracy(tmp_path / "a" / "train_log.tsv", "identify")
    _, emo = final_dev_accuracy(tmp_path / "a" / "train_log.tsv", "emotion")
    same = all(
        digest(tmp_path / "a" / name) == digest(tmp_path / "b" / name)
        for name in ("embeddings.txt", "model.ckpt", "train_log.tsv", "classified.tsv", "regression.json")
    )
    ok = codes == [0, 0] and epoch <= 20 and ident >= 0.95 and emo >= 0.90 and same and seconds < 300
    acceptance(
        6,
        ok,
        f"dev accuracy after {epoch} epochs: identify {ident:.3f}, emotion {emo:.3f}; "
        f"{'bit-identical' if same else 'DIFFERENT'} across two runs; {seconds:.0f} s per run",
    )
    assert ok


def test_criterion_7_mtl_ordering(acceptance):
    # Equal numbers of low-resource updates: a round-robin epoch is ten cycles
    # here (320 rich examples / batch 32), the single-task epoch one batch.
    specs = [TaskSpec("rich", tuple("abcd")), TaskSpec("poor", tuple("abcd"))]
    mtl, stl = [], []
    for seed in range(10):
        corpus = related_tasks_corpus(seed)
        vocab = build_vocab([r.text for r in corpus if r.split == "train"])
        emb = train_cbow([r.text for r in corpus], vocab, d=16, epochs=0, seed=seed)
        multi = build_model(emb, 3, 8, specs, seed=seed)
        _, log_m = train_multitask(multi, corpus, TrainConfig(epochs=10, learning_rate=1e-2, seed=seed))
        single = build_model(emb, 3, 8, specs[1:], seed=seed)
        _, log_s = train_multitask(single, corpus, TrainConfig(epochs=100, learning_rate=1e-2, seed=seed), tasks=["poor"])
        mtl.append(log_m.series("poor", "dev_accuracy")[-1])
        stl.append(log_s.series("poor", "dev_accuracy")[-1])
    ok = np.mean(mtl) >= np.mean(stl)
    acceptance(7, ok, f"mean low-resource dev accuracy over 10 seeds: multitask {np.mean(mtl):.3f}, single-task {np.mean(stl):.3f}")
    assert ok


def _simplex_property():
    vocab = build_vocab(["疫情好可怕", "今天天气很好", "abc"])
    emb = EmbeddingMatrix(vocab, np.random.default_rng(0).normal(scale=0.5, size=(len(vocab), 6)))
    model = build_model(emb, 3, 4, TASKS, seed=0)

    @settings(max_examples=40, deadline=None)
    @given(
        st.lists(st.text(alphabet="疫情好可怕今天气很abcx", max_size=25), min_size=1, max_size=4),
        st.lists(st.floats(-50, 50), min_size=1, max_size=12),
    )
    def prop(texts, logits):
        for task in ("identify", "emotion"):
            for pred in predict_batch(model, texts, task):
                assert np.all(pred.probs >= 0) and abs(pred.probs.sum() - 1) < 1e-12
                assert np.all(pred.attention >= 0) and abs(pred.attention.sum() - 1) < 1e-12
        p = softmax(np.array(logits)).data
        assert np.all(p >= 0) and abs(p.sum() - 1) < 1e-12

    prop()


def _checkpoint_property(tmp_path):
    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 5), st.integers(2, 6))
    def prop(seed, c, k):
        vocab = build_vocab(["疫情好可怕", "今天天气很好"])
        emb = EmbeddingMatrix(vocab, np.random.default_rng(seed).normal(size=(len(vocab), 5)))
        model = build_model(emb, k, c, TASKS, seed=seed)
        path = tmp_path / f"{seed}-{c}-{k}.ckpt"
        save_checkpoint(model, path)
        back = load_checkpoint(path)
        assert back.store.names() == model.store.names()
        for name in model.store.names():
            assert back.store[name].data.tobytes() == model.store[name].data.tobytes()
        save_checkpoint(back, path.with_suffix(".again"))
        assert path.read_bytes() == path.with_suffix(".again").read_bytes()

    prop()


def _shares_property():
    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.lists(st.integers(0, 60), min_size=8, max_size=8), st.integers(0, 60)), min_size=1, max_size=6))
    def prop(rows):
        table = []
        for i, (em, other) in enumerate(rows):
            A = sum(em)
            table.append(["c", pd.Timestamp(2021, 1, 1 + i).date(), A + other + (0 if A else 1), A, *em])
        frame = pd.DataFrame(table, columns=["city", "date", "total_texts", "pandemic_texts", *EMOTIONS])
        shares, diags = aggregate_shares(frame)
        assert diags == []
        assert shares["attention"].between(0, 1).all()
        ok = ~shares["emotion_missing"]
        vals = shares.loc[ok, [f"{e}_share" for e in EMOTIONS]].to_numpy()
        assert ((vals >= 0) & (vals <= 1)).all()
        assert np.allclose(vals.sum(axis=1), 1.0, atol=1e-12, rtol=0)

    prop()


def _covariance_property():
    def check(V):
        assert np.array_equal(V, V.T)
        assert np.linalg.eigvalsh(V).min() >= -1e-10 * max(1.0, np.abs(V).max())

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000))
    def prop(seed):
        rng = np.random.default_rng(seed)
        groups = np.repeat(np.arange(5), rng.integers(4, 10, 5))
        X = rng.normal(size=(groups.size, 3)) * rng.uniform(0.1, 5, 3)
        y = X @ rng.normal(size=3) + rng.normal(size=5)[groups] + rng.normal(size=groups.size) * (1 + groups)
        Xc = np.column_stack([np.ones(groups.size), X])
        res = ols_fit(y, Xc)
        check(res.cov)
        for kind in ("HC0", "HC1"):
            check(hc_covariance(Xc, res.resid, kind))
        check(within_fit(y, X, groups).cov)
        check(re_fit(y, X, groups).cov)

    prop()


def _cli_determinism_property(tmp_path):
    write_corpus(demo_corpus(seed=0, n_train=24, n_dev=8, n_test=8), tmp_path / "corpus.tsv")
    (tmp_path / "run.ini").write_text(
        "[paths]\ncorpus = corpus.tsv\n[embed]\ndim = 6\nepochs = 1\n[model]\nchannels = 3\n[train]\nepochs = 1\n",
        encoding="utf-8",
    )

    @settings(max_examples=4, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def prop(seed):
        digests = []
        for name in ("a", "b"):
            out = tmp_path / f"{seed}{name}"
            for stage in ("embed", "train"):
                assert run([stage, "--config", str(tmp_path / "run.ini"), "--seed", str(seed), "--out", str(out)]) == 0
            digests.append([digest(out / p) for p in ("embeddings.txt", "model.ckpt", "train_log.tsv")])
        assert digests[0] == digests[1]

    prop()


@pytest.mark.filterwarnings("ignore:negative random-effect variance")
def test_criterion_8_invariant_suites(acceptance, tmp_path):
    suites = {
        "attention/softmax simplex": _simplex_property,
        "checkpoint round trip": lambda: _checkpoint_property(tmp_path),
        "share bounds and sum-to-one": _shares_property,
        "covariance symmetry/PSD": _covariance_property,
        "CLI determinism": lambda: _cli_determinism_property(tmp_path),
    }
    failed = []
    for name, suite in suites.items():
        try:
            suite()
        except Exception as exc:  # noqa: BLE001  report every suite before failing
            failed.append(f"{name} ({type(exc).__name__})")
    ok = not failed
    acceptance(8, ok, f"{len(suites) - len(failed)}/{len(suites)} property suites green" + (": " + ", ".join(failed) if failed else ""))
    assert ok
