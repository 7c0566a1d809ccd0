import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sentipanel.embedding import (
    EmbeddingFormatError,
    EmbeddingMatrix,
    CbowLog,
    Vocabulary,
    build_vocab,
    cosine,
    load_embeddings,
    nearest_neighbors,
    save_embeddings,
    segment,
    train_cbow,
)


def planted_corpus(seed: int, n: int = 300) -> list[str]:
    """x and y always share a text (and its filler); z lives in other texts."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        if i % 2 == 0:
            chars = list(rng.choice(list("abcdef"), 8))
            for ch in "xy":
                chars.insert(int(rng.integers(0, len(chars) + 1)), ch)
        else:
            chars = list(rng.choice(list("ghijkl"), 8))
            chars.insert(int(rng.integers(0, 9)), "z")
        out.append("".join(chars))
    return out


class TestVocab:
    def test_aba(self):
        v = build_vocab(["aba"])
        assert v.itos == ["<pad>", "<unk>", "a", "b"] and len(v) == 4

    def test_min_count(self):
        v = build_vocab(["aba"], min_count=2)
        assert "b" not in v and v.id("b") == 1

    def test_empty(self):
        with pytest.raises(ValueError):
            build_vocab([])

    def test_character_segmentation(self):
        assert segment("疫情 好") == ["疫", "情", " ", "好"]
        assert segment("éx") == ["é", "x"]
        v = build_vocab(["武汉加油"])
        assert len(v) == 6

    def test_order_independent(self):
        assert build_vocab(["abc", "cba", "zz"]).itos == build_vocab(["zz", "cba", "abc"]).itos

    @given(st.lists(st.text(min_size=1, max_size=20), min_size=1, max_size=5))
    def test_roundtrip(self, texts):
        v = build_vocab(texts)
        for t in texts:
            assert v.decode(v.encode(t)) == t

    def test_reserved(self):
        with pytest.raises(ValueError):
            Vocabulary(["a", "b"])


class TestCbow:
    def test_zero_epochs_returns_init(self):
        corpus = planted_corpus(0, 20)
        v = build_vocab(corpus)
        m0 = train_cbow(corpus, v, d=8, epochs=0, seed=3)
        rng = np.random.default_rng(3)
        init = rng.uniform(-0.5 / 8, 0.5 / 8, size=(len(v), 8))
        init[0] = 0.0
        assert np.array_equal(m0.vectors, init)

    def test_config_errors(self):
        v = build_vocab(["abc"])
        with pytest.raises(ValueError):
            train_cbow(["abc"], v, d=0)
        with pytest.raises(ValueError):
            train_cbow(["abc"], v, window=0)

    def test_reproducible_and_seed_sensitive(self):
        corpus = planted_corpus(1, 60)
        v = build_vocab(corpus)
        a = train_cbow(corpus, v, d=8, epochs=2, seed=5)
        b = train_cbow(corpus, v, d=8, epochs=2, seed=5)
        c = train_cbow(corpus, v, d=8, epochs=2, seed=6)
        assert np.array_equal(a.vectors, b.vectors)
        assert not np.array_equal(a.vectors, c.vectors)

    def test_planted_cooccurrence_over_seeds(self):
        wins = 0
        for seed in range(20):
            corpus = planted_corpus(seed)
            m = train_cbow(corpus, build_vocab(corpus), d=16, epochs=5, seed=seed)
            wins += cosine(m["x"], m["y"]) > cosine(m["x"], m["z"])
        assert wins >= 19

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_loss_non_increasing(self, seed):
        corpus = planted_corpus(seed)
        log = CbowLog()
        train_cbow(corpus, build_vocab(corpus), d=16, epochs=8, seed=seed, log=log)
        assert len(log.epoch_loss) == 8 and len(log.running_loss) == 8
        assert all(b <= a for a, b in zip(log.epoch_loss, log.epoch_loss[1:])), log.epoch_loss

    def test_pad_row_zero(self):
        corpus = planted_corpus(0, 40)
        m = train_cbow(corpus, build_vocab(corpus), d=8, epochs=2)
        assert np.all(m.vectors[0] == 0)


class TestNeighbors:
    def test_duplicate_row_first(self):
        v = Vocabulary(["<pad>", "<unk>", "a", "b", "c"])
        vecs = np.array([[0, 0], [1, 1], [1, 2], [3, -1], [1, 2]], dtype=float)
        out = nearest_neighbors(EmbeddingMatrix(v, vecs), "a", 2)
        assert out[0][0] == "c" and abs(out[0][1] - 1.0) < 1e-12

    def test_k_larger_than_vocab(self):
        v = Vocabulary(["<pad>", "<unk>", "a", "b"])
        m = EmbeddingMatrix(v, np.random.default_rng(0).normal(size=(4, 3)))
        assert len(nearest_neighbors(m, "a", 50)) == 3

    def test_unknown(self):
        v = Vocabulary(["<pad>", "<unk>", "a"])
        with pytest.raises(KeyError):
            nearest_neighbors(EmbeddingMatrix(v, np.ones((3, 2))), "q")

    def test_planted_ranking(self):
        corpus = planted_corpus(4)
        m = train_cbow(corpus, build_vocab(corpus), d=16, epochs=5, seed=4)
        ranked = [c for c, _ in nearest_neighbors(m, "x", 20)]
        assert ranked.index("y") < ranked.index("z")


class TestFile:
    def test_roundtrip_bit_exact(self, tmp_path):
        v = build_vocab(["a\tb\\c\n疫情"])
        m = EmbeddingMatrix(v, np.random.default_rng(0).normal(size=(len(v), 5)))
        path = tmp_path / "emb.txt"
        save_embeddings(m, path)
        first = path.read_text(encoding="utf-8").split("\n", 1)[0]
        assert first == f"sentipanel-emb v1 {len(v)} 5"
        back = load_embeddings(path)
        assert back.vocab.itos == v.itos
        assert np.array_equal(back.vectors, m.vectors)

    def test_bad_header(self, tmp_path):
        p = tmp_path / "e.txt"
        p.write_text("word2vec 3 2\n", encoding="utf-8")
        with pytest.raises(EmbeddingFormatError):
            load_embeddings(p)

    def test_bad_version(self, tmp_path):
        p = tmp_path / "e.txt"
        p.write_text("sentipanel-emb v9 2 1\n<pad>\t0.0\n<unk>\t0.0\n", encoding="utf-8")
        with pytest.raises(EmbeddingFormatError, match="version"):
            load_embeddings(p)

    def test_row_count_mismatch(self, tmp_path):
        p = tmp_path / "e.txt"
        p.write_text("sentipanel-emb v1 3 1\n<pad>\t0.0\n<unk>\t0.0\n", encoding="utf-8")
        with pytest.raises(EmbeddingFormatError):
            load_embeddings(p)
