import csv
import datetime as dt
import hashlib
import io

import pytest

from sentipanel.cli import ConfigError, load_config, run, validate_inputs
from sentipanel.corpus import LabeledRecord, write_corpus
from sentipanel.metrics import f1_score
from sentipanel.panel import write_panel
from sentipanel.panel.simulate import simulate_panel
from sentipanel.synthetic import demo_corpus, demo_posts, signal_chars

SMALL = """\
[run]
seed = 3
out = out

[paths]
corpus = corpus.tsv

[embed]
dim = 8
epochs = 1

[model]
channels = 4

[train]
epochs = 2
"""


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture
def small(tmp_path):
    write_corpus(demo_corpus(seed=0, n_train=24, n_dev=8, n_test=8), tmp_path / "corpus.tsv")
    (tmp_path / "run.ini").write_text(SMALL, encoding="utf-8")
    return tmp_path


@pytest.fixture(scope="module")
def demo_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("demo")
    codes = [run(["demo", "--out", str(root / name), "--seed", "0"]) for name in ("a", "b")]
    return root, codes


class TestConfig:
    def test_defaults_and_overrides(self, small):
        cfg = load_config(small / "run.ini", ["train.epochs=7", "tasks.extra=a, b, c"], seed=11)
        assert cfg["train"]["epochs"] == 7 and cfg.seed == 11
        assert cfg["embed"]["dim"] == 8 and cfg["embed"]["window"] == 2
        assert cfg["tasks"]["extra"] == ("a", "b", "c")
        assert cfg.out_dir == small / "out"
        assert cfg.path("corpus") == small / "corpus.tsv"
        assert cfg.path("embeddings") == small / "out" / "embeddings.txt"

    @pytest.mark.parametrize(
        "override, message",
        [
            ("train.epochz=3", "unknown config key train.epochz"),
            ("nosection.key=1", "unknown config section"),
            ("train.epochs=many", "train.epochs"),
            ("train.freeze_embeddings=maybe", "not a boolean"),
            ("model.channels=0", "must be positive"),
            ("regress.dependents=fear,happiness", "happiness"),
            ("trainepochs=3", "section.key=value"),
        ],
    )
    def test_invalid(self, small, override, message):
        with pytest.raises(ConfigError, match=message):
            load_config(small / "run.ini", [override])

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.ini")


class TestExitCodes:
    def test_unknown_subcommand(self, capsys):
        assert run(["fly"]) == 2
        assert "usage" in capsys.readouterr().err

    def test_invalid_config(self, small, capsys):
        assert run(["embed", "--config", str(small / "run.ini"), "--set", "embed.dim=-1"]) == 2
        err = capsys.readouterr().err
        assert err.count("\n") == 1 and err.startswith("sentipanel: error: embed.dim")

    def test_config_required(self, capsys):
        assert run(["embed"]) == 2

    def test_missing_input(self, small, capsys):
        assert run(["train", "--config", str(small / "run.ini")]) == 2
        assert "embeddings file not found" in capsys.readouterr().err

    def test_regress_missing_column(self, small, capsys):
        panel = simulate_panel(seed=0).panel.drop(columns="density")
        write_panel(panel, small / "panel.csv")
        code = run(["regress", "--config", str(small / "run.ini"), "--set", "paths.panel=panel.csv"])
        err = capsys.readouterr().err
        assert code == 2
        assert "missing required column: density" in err and err.count("\n") == 1

    def test_stage_failure(self, small, capsys):
        ini = str(small / "run.ini")
        assert run(["embed", "--config", ini]) == 0
        assert run(["train", "--config", ini]) == 0
        (small / "posts.tsv").write_text("city\tdate\ttext\nc\t2021-01-01\t疫情\n", encoding="utf-8")
        capsys.readouterr()
        code = run(["classify", "--config", ini, "--set", "paths.posts=posts.tsv", "--set", "classify.emotion_task=mood"])
        err = capsys.readouterr().err
        assert code == 1 and "mood" in err and err.count("\n") == 1


class TestValidate:
    def test_clean(self, small):
        cfg = load_config(small / "run.ini")
        assert validate_inputs(cfg, "embed") == []

    def test_label_out_of_range_names_task(self, small):
        write_corpus(
            [LabeledRecord("一二", "identify", 1), LabeledRecord("三四", "emotion", 8), LabeledRecord("五", "emotion", 2)],
            small / "corpus.tsv",
        )
        diags = validate_inputs(load_config(small / "run.ini"), "embed")
        assert len(diags) == 1
        assert "corpus.tsv:3:" in diags[0] and "'emotion'" in diags[0] and "8 classes" in diags[0]

    def test_duplicate_covariate_row(self, small):
        panel = simulate_panel(seed=0).panel
        cov = panel[["city", "date", "cases", "foreign", "risk", "distance", "pmedical", "pgovernment", "density"]]
        buf = io.StringIO()
        cov.iloc[[0, 1, 2, 1]].to_csv(buf, index=False, lineterminator="\n")
        (small / "out").mkdir()
        (small / "out" / "covariates.csv").write_text(buf.getvalue(), encoding="utf-8")
        (small / "out" / "classified.tsv").write_text(
            "city\tdate\ttext\tpandemic\tpandemic_prob\temotion\temotion_prob\tidentify_attention\temotion_attention\n",
            encoding="utf-8",
        )
        diags = validate_inputs(load_config(small / "run.ini"), "aggregate")
        assert len(diags) == 1
        assert "(city00, 2021-01-02) on lines 3 and 5" in diags[0]

    def test_duplicate_panel_row(self, small):
        panel = simulate_panel(seed=0).panel
        write_panel(panel.iloc[[0, 1, 0]], small / "panel.csv")
        cfg = load_config(small / "run.ini", ["paths.panel=panel.csv"])
        diags = validate_inputs(cfg, "regress")
        assert len(diags) == 1 and "lines 2 and 4" in diags[0]


class TestStages:
    def test_inputs_not_mutated_and_rerun_identical(self, small):
        ini = str(small / "run.ini")
        before = digest(small / "corpus.tsv")
        assert run(["embed", "--config", ini]) == 0
        assert run(["train", "--config", ini]) == 0
        first = {p: digest(small / "out" / p) for p in ("embeddings.txt", "model.ckpt", "train_log.tsv")}
        assert run(["embed", "--config", ini]) == 0
        assert run(["train", "--config", ini]) == 0
        assert {p: digest(small / "out" / p) for p in first} == first
        assert digest(small / "corpus.tsv") == before

    def test_seed_changes_artifacts(self, small):
        ini = str(small / "run.ini")
        run(["embed", "--config", ini])
        a = digest(small / "out" / "embeddings.txt")
        run(["embed", "--config", ini, "--seed", "4"])
        assert digest(small / "out" / "embeddings.txt") != a


class TestDemo:
    def test_completes(self, demo_runs):
        root, codes = demo_runs
        assert codes == [0, 0]
        for name in ("embeddings.txt", "model.ckpt", "classified.tsv", "panel.csv", "regression.txt", "regression.json"):
            assert (root / "a" / name).is_file()
        assert "# observations" in (root / "a" / "regression.txt").read_text(encoding="utf-8")

    def test_byte_identical(self, demo_runs):
        root, _ = demo_runs
        files = sorted(p.name for p in (root / "a").iterdir())
        assert "sentipanel.log" in files
        for name in files:
            if name != "sentipanel.log":
                assert digest(root / "a" / name) == digest(root / "b" / name), name

    def test_timestamps_only_in_log(self, demo_runs):
        root, _ = demo_runs
        today = dt.date.today().isoformat()
        assert today in (root / "a" / "sentipanel.log").read_text(encoding="utf-8")
        for p in (root / "a").iterdir():
            if p.name != "sentipanel.log":
                assert today.encode() not in p.read_bytes(), p.name

    def test_eval_f1_identity(self, demo_runs):
        root, _ = demo_runs
        for task in ("identify", "emotion"):
            rows = list(csv.DictReader(open(root / "a" / f"eval_{task}.csv", encoding="utf-8")))
            assert rows
            for r in rows:
                pr, re, f1 = float(r["precision"]), float(r["recall"]), float(r["f1"])
                assert abs(f1_score(pr, re) - f1) <= 1e-4

    def test_classified_columns(self, demo_runs):
        root, _ = demo_runs
        with open(root / "a" / "classified.tsv", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh, delimiter="\t", quoting=csv.QUOTE_NONE)
            row = next(r for r in reader if r["pandemic"] == "1")
        weights = [float(w) for w in row["identify_attention"].split()]
        assert abs(sum(weights) - 1.0) < 1e-5
        assert row["emotion"]


class TestDemoPosts:
    def test_counts_reproduce_panel(self):
        panel = simulate_panel(seed=1, n_cities=2, n_days=3, mean_texts=(5.0, 30.0)).panel
        posts = demo_posts(panel, seed=1)
        markers = set(signal_chars(0, 2, 4)[1])
        posts["pandemic"] = [bool(markers & set(t)) for t in posts["text"]]
        per_day = posts.groupby(["city", "date"], sort=False)["pandemic"].agg(["size", "sum"]).reset_index()
        assert per_day["size"].tolist() == panel["total_texts"].tolist()
        assert per_day["sum"].tolist() == panel["pandemic_texts"].tolist()

    def test_seeded(self):
        panel = simulate_panel(seed=1, n_cities=2, n_days=2, mean_texts=(5.0, 20.0)).panel
        assert demo_posts(panel, seed=4).equals(demo_posts(panel, seed=4))
        assert not demo_posts(panel, seed=4).equals(demo_posts(panel, seed=5))
