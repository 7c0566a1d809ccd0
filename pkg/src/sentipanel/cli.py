"""Command-line pipeline: embeddings, training, evaluation, classification,
aggregation and regression, plus a synthetic end-to-end demo.

Usage::

    sentipanel <subcommand> --config <path> [--seed N] [--out DIR] [--set section.key=value ...]

Exit codes: 0 success, 1 runtime failure, 2 usage, configuration or input error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd

from .corpus import CorpusFormatError, LabeledCorpus, read_corpus, write_corpus
from .embedding import EmbeddingFormatError, build_vocab, load_embeddings, save_embeddings, train_cbow
from .labels import EMOTIONS, IDENTIFY_CLASSES
from .metrics import confusion, metrics, report_csv, report_text
from .model import (
    CheckpointError,
    TaskSpec,
    TrainConfig,
    build_model,
    load_checkpoint,
    predict_batch,
    save_checkpoint,
    train_multitask,
)
from .panel.data import (
    COVARIATES,
    PANEL_COLUMNS,
    ClassifiedText,
    count_classified,
    normalize_panel,
    panel_diagnostics,
    read_panel,
    write_panel,
)
from .panel.design import RegressionSpec, default_regressors
from .panel.protocol import run_protocol
from .panel.simulate import simulate_panel
from .synthetic import demo_corpus, demo_posts

COMMANDS = ("embed", "train", "eval", "classify", "aggregate", "regress", "demo")
POSTS_HEADER = ("city", "date", "text")
CLASSIFIED_HEADER = (
    "city", "date", "text", "pandemic", "pandemic_prob", "emotion", "emotion_prob",
    "identify_attention", "emotion_attention",
)
COVARIATE_HEADER = ("city", "date", *COVARIATES)
KNOWN_TASKS = {"identify": IDENTIFY_CLASSES, "emotion": EMOTIONS}

log = logging.getLogger("sentipanel")


class ConfigError(ValueError):
    """Invalid configuration or command-line overrides (exit code 2)."""


class InputError(ValueError):
    """Missing or malformed input files (exit code 2)."""


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none", "off") else float(text)


def _list(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


# section -> key -> (parser, default); paths default to files in the output directory
SCHEMA: dict[str, dict[str, tuple[Callable, object]]] = {
    "run": {"seed": (int, 0), "out": (str, "out")},
    "paths": {
        "corpus": (str, "corpus.tsv"),
        "embeddings": (str, "embeddings.txt"),
        "checkpoint": (str, "model.ckpt"),
        "posts": (str, "posts.tsv"),
        "classified": (str, "classified.tsv"),
        "covariates": (str, "covariates.csv"),
        "panel": (str, "panel.csv"),
    },
    "embed": {
        "dim": (int, 32),
        "window": (int, 2),
        "negatives": (int, 5),
        "epochs": (int, 5),
        "learning_rate": (float, 0.02),
        "batch_positions": (int, 16),
    },
    "model": {"kernel_size": (int, 3), "channels": (int, 16), "max_len": (int, 140)},
    "train": {
        "epochs": (int, 20),
        "batch_size": (int, 32),
        "learning_rate": (float, 0.005),
        "optimizer": (str, "adam"),
        "schedule": (str, "round_robin"),
        "freeze_embeddings": (_bool, False),
        "clip_norm": (_optional_float, 1.0),
        "lr_decay": (str, "linear"),
    },
    "tasks": {},
    "eval": {"split": (str, "test")},
    "classify": {"identify_task": (str, "identify"), "emotion_task": (str, "emotion"), "batch_size": (int, 64)},
    "regress": {
        "dependents": (_list, ("fear", "confidence", "attention", "netout")),
        "alpha": (float, 0.05),
        "robust_kind": (str, "HC1"),
        "robust_hausman": (_bool, False),
    },
}

# artifacts written into the output directory by each stage
ARTIFACTS = {
    "embed": "embeddings.txt",
    "train": "model.ckpt",
    "classify": "classified.tsv",
    "aggregate": "panel.csv",
}


@dataclass
class PipelineConfig:
    """Typed configuration; relative input paths resolve against ``base_dir``
    and then the output directory."""

    values: dict[str, dict[str, object]]
    base_dir: Path
    out_dir: Path
    explicit_paths: set[str] = field(default_factory=set)
    overrides: tuple[str, ...] = ()

    def __getitem__(self, section: str) -> dict[str, object]:
        return self.values[section]

    @property
    def seed(self) -> int:
        return int(self.values["run"]["seed"])

    def path(self, key: str) -> Path:
        """Input path for ``key``: as configured (relative to the config file)
        or, when not configured, the stage artifact in the output directory."""
        raw = Path(str(self.values["paths"][key]))
        if raw.is_absolute():
            return raw
        if key in self.explicit_paths:
            return self.base_dir / raw
        return self.out_dir / raw

    def task_specs(self, tasks: list[str], corpus: LabeledCorpus | None = None) -> list[TaskSpec]:
        out = []
        for t in tasks:
            if t in self.values["tasks"]:
                classes = self.values["tasks"][t]
            elif t in KNOWN_TASKS:
                classes = KNOWN_TASKS[t]
            else:
                top = max((r.label for r in corpus.select(t)), default=0) if corpus is not None else 0
                classes = tuple(str(i) for i in range(max(top + 1, 2)))
            out.append(TaskSpec(t, tuple(classes)))
        return out


def load_config(path: str | Path | None, overrides: list[str] = (), seed: int | None = None, out: str | None = None) -> PipelineConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {' '.join(str(exc).split())}") from None
        base = path.resolve().parent
    raw: dict[str, dict[str, str]] = {s: dict(parser[s]) for s in parser.sections()}
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot or not name:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        raw.setdefault(section, {})[name] = value.strip()
    values: dict[str, dict[str, object]] = {}
    for section, keys in raw.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        if section != "tasks":
            for k in keys:
                if k not in SCHEMA[section]:
                    raise ConfigError(f"unknown config key {section}.{k}")
    for section, keys in SCHEMA.items():
        values[section] = {}
        for k, (parse, default) in keys.items():
            if k in raw.get(section, {}):
                try:
                    values[section][k] = parse(raw[section][k])
                except ValueError as exc:
                    raise ConfigError(f"{section}.{k}: {exc}") from None
            else:
                values[section][k] = default
    values["tasks"] = {t: _list(v) for t, v in raw.get("tasks", {}).items()}
    for t, classes in values["tasks"].items():
        if len(classes) < 2:
            raise ConfigError(f"tasks.{t} needs at least 2 class names")
    if seed is not None:
        values["run"]["seed"] = seed
    if out is not None:
        values["run"]["out"] = out
    out_dir = Path(str(values["run"]["out"]))
    if not out_dir.is_absolute():
        out_dir = (Path.cwd() if out is not None else base) / out_dir
    _check_ranges(values)
    return PipelineConfig(values, base, out_dir, set(raw.get("paths", {})), tuple(overrides))


def _check_ranges(values) -> None:
    positive = [("embed", "dim"), ("embed", "window"), ("embed", "batch_positions"), ("model", "kernel_size"),
                ("model", "channels"), ("model", "max_len"), ("train", "batch_size"), ("classify", "batch_size")]
    for s, k in positive:
        if values[s][k] < 1:
            raise ConfigError(f"{s}.{k} must be positive, got {values[s][k]}")
    for s, k in [("embed", "negatives"), ("embed", "epochs"), ("train", "epochs")]:
        if values[s][k] < 0:
            raise ConfigError(f"{s}.{k} must be non-negative, got {values[s][k]}")
    for s, k in [("embed", "learning_rate"), ("train", "learning_rate")]:
        if not values[s][k] > 0:
            raise ConfigError(f"{s}.{k} must be positive, got {values[s][k]}")
    if values["train"]["optimizer"] not in ("adam", "sgd"):
        raise ConfigError(f"train.optimizer must be adam or sgd, got {values['train']['optimizer']!r}")
    if values["train"]["schedule"] not in ("round_robin", "proportional"):
        raise ConfigError(f"train.schedule must be round_robin or proportional, got {values['train']['schedule']!r}")
    clip = values["train"]["clip_norm"]
    if clip is not None and not clip > 0:
        raise ConfigError(f"train.clip_norm must be positive or none, got {clip}")
    if values["train"]["lr_decay"] not in ("constant", "linear"):
        raise ConfigError(f"train.lr_decay must be constant or linear, got {values['train']['lr_decay']!r}")
    if values["eval"]["split"] not in ("train", "dev", "test"):
        raise ConfigError(f"eval.split must be train, dev or test, got {values['eval']['split']!r}")
    if values["regress"]["robust_kind"] not in ("HC0", "HC1"):
        raise ConfigError(f"regress.robust_kind must be HC0 or HC1, got {values['regress']['robust_kind']!r}")
    if not 0 < values["regress"]["alpha"] < 1:
        raise ConfigError(f"regress.alpha must lie in (0, 1), got {values['regress']['alpha']}")
    unknown = [d for d in values["regress"]["dependents"] if d not in (*EMOTIONS, "attention", "netout")]
    if unknown:
        raise ConfigError(f"regress.dependents: unknown dependent variable(s) {', '.join(unknown)}")


# ---------------------------------------------------------------- validation

INPUTS = {
    "embed": ("corpus",),
    "train": ("corpus", "embeddings"),
    "eval": ("corpus", "checkpoint"),
    "classify": ("checkpoint", "posts"),
    "aggregate": ("classified", "covariates"),
    "regress": ("panel",),
}


def _duplicates(path: Path, keys) -> list[str]:
    seen: dict[tuple, int] = {}
    out = []
    for i, key in enumerate(keys):
        line = i + 2
        if key in seen:
            out.append(f"{path}: duplicate (city, date) = ({key[0]}, {key[1]}) on lines {seen[key]} and {line}")
        else:
            seen[key] = line
    return out


def _header(path: Path, expected: tuple[str, ...], delimiter: str, optional: tuple[str, ...] = ()) -> list[str]:
    with open(path, encoding="utf-8", newline="") as fh:
        header = next(csv.reader(fh, delimiter=delimiter), None)
    allowed = [list(expected), *([list(expected) + list(optional)] if optional else [])]
    if header not in allowed:
        missing = [c for c in expected if c not in (header or [])]
        what = f"missing required column: {missing[0]}" if missing else f"header must be {','.join(expected)}"
        return [f"{path}: {what}"]
    return []


def validate_inputs(cfg: PipelineConfig, command: str) -> list[str]:
    """Problems with the inputs of ``command``; an empty list means clean."""
    diags = []
    for key in INPUTS.get(command, ()):
        p = cfg.path(key)
        if not p.is_file():
            diags.append(f"{key} file not found: {p}")
    if diags:
        return diags
    if "corpus" in INPUTS[command]:
        p = cfg.path("corpus")
        try:
            corpus = read_corpus(p)
        except CorpusFormatError as exc:
            return [str(exc)]
        if command == "eval":
            try:
                tasks = load_checkpoint(cfg.path("checkpoint")).tasks
                specs = {t: tasks[t] for t in corpus.tasks if t in tasks}
                diags += [f"{p}: task {t!r} is not in the checkpoint" for t in corpus.tasks if t not in tasks]
            except CheckpointError as exc:
                return [f"{cfg.path('checkpoint')}: {exc}"]
        else:
            specs = {s.task_id: s for s in cfg.task_specs(corpus.tasks, corpus)}
        for i, r in enumerate(corpus.records):
            spec = specs.get(r.task)
            if spec is not None and r.label >= spec.num_classes:
                diags.append(
                    f"{p}:{i + 2}: label {r.label} out of range for task {r.task!r} ({spec.num_classes} classes)"
                )
    if command == "classify":
        p = cfg.path("posts")
        diags += _header(p, POSTS_HEADER, "\t")
        if not diags:
            try:
                load_checkpoint(cfg.path("checkpoint"))
            except CheckpointError as exc:
                diags.append(f"{cfg.path('checkpoint')}: {exc}")
    if command == "aggregate":
        diags += _header(cfg.path("classified"), CLASSIFIED_HEADER, "\t")
        p = cfg.path("covariates")
        head = _header(p, COVARIATE_HEADER, ",", ("netout",))
        diags += head
        if not head:
            cov = pd.read_csv(p, dtype=str, keep_default_na=False)
            diags += _duplicates(p, zip(cov["city"], cov["date"]))
    if command == "train":
        try:
            load_embeddings(cfg.path("embeddings"))
        except EmbeddingFormatError as exc:
            diags.append(f"{cfg.path('embeddings')}: {exc}")
    if command == "regress":
        p = cfg.path("panel")
        raw = pd.read_csv(p, dtype=str, keep_default_na=False)
        diags += [f"{p}: {d}" for d in panel_diagnostics(raw)]
    return diags


# ---------------------------------------------------------------- stages


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def cmd_embed(cfg: PipelineConfig) -> list[Path]:
    corpus = read_corpus(cfg.path("corpus"))
    texts = [r.text for r in corpus]
    vocab = build_vocab(texts)
    e = cfg["embed"]
    emb = train_cbow(
        texts, vocab, d=e["dim"], window=e["window"], negatives=e["negatives"], epochs=e["epochs"],
        seed=cfg.seed, learning_rate=e["learning_rate"], batch_positions=e["batch_positions"],
    )
    out = cfg.out_dir / ARTIFACTS["embed"]
    save_embeddings(emb, out)
    return [out]


def cmd_train(cfg: PipelineConfig) -> list[Path]:
    corpus = read_corpus(cfg.path("corpus"))
    emb = load_embeddings(cfg.path("embeddings"))
    m, t = cfg["model"], cfg["train"]
    model = build_model(emb, m["kernel_size"], m["channels"], cfg.task_specs(corpus.tasks, corpus), cfg.seed, m["max_len"])
    train_cfg = TrainConfig(
        epochs=t["epochs"], batch_size=t["batch_size"], max_len=m["max_len"], optimizer=t["optimizer"],
        learning_rate=t["learning_rate"], seed=cfg.seed, schedule=t["schedule"],
        freeze_embeddings=t["freeze_embeddings"], clip_norm=t["clip_norm"], lr_decay=t["lr_decay"],
    )

    def progress(epoch, entry):
        for task, ep in entry.items():
            log.info("epoch %d %s train_loss=%.6f dev_accuracy=%s", epoch, task, ep.train_loss, ep.dev_accuracy)

    model, history = train_multitask(model, corpus, train_cfg, on_epoch=progress)
    ckpt = cfg.out_dir / ARTIFACTS["train"]
    save_checkpoint(model, ckpt)
    lines = ["epoch\ttask\ttrain_loss\tdev_loss\tdev_accuracy"]
    for i, entry in enumerate(history.epochs, start=1):
        for task, ep in entry.items():
            lines.append(f"{i}\t{task}\t{ep.train_loss!r}\t{_num(ep.dev_loss)}\t{_num(ep.dev_accuracy)}")
    log_path = cfg.out_dir / "train_log.tsv"
    _write_text(log_path, "\n".join(lines) + "\n")
    return [ckpt, log_path]


def _num(x) -> str:
    return "" if x is None else repr(float(x))


def cmd_eval(cfg: PipelineConfig) -> list[Path]:
    corpus = read_corpus(cfg.path("corpus"))
    model = load_checkpoint(cfg.path("checkpoint"))
    split = cfg["eval"]["split"]
    written = []
    for task in corpus.tasks:
        texts, labels = corpus.texts_labels(task, split)
        if not texts:
            continue
        preds = predict_batch(model, texts, task, cfg["classify"]["batch_size"])
        spec = model.tasks[task]
        m = metrics(confusion(zip(labels, (p.label for p in preds)), spec.num_classes))
        txt = cfg.out_dir / f"eval_{task}.txt"
        _write_text(txt, f"task {task} split {split} n={len(texts)}\n" + report_text(m, spec.classes))
        csv_path = cfg.out_dir / f"eval_{task}.csv"
        _write_text(csv_path, report_csv(m, spec.classes))
        written += [txt, csv_path]
    if not written:
        raise ValueError(f"corpus has no {split!r} records")
    return written


def _weights(a: np.ndarray) -> str:
    return " ".join(f"{w:.6f}" for w in a)


def cmd_classify(cfg: PipelineConfig) -> list[Path]:
    model = load_checkpoint(cfg.path("checkpoint"))
    c = cfg["classify"]
    ident, emo = c["identify_task"], c["emotion_task"]
    for t in (ident, emo):
        model._task(t)
    posts = pd.read_csv(cfg.path("posts"), sep="\t", dtype=str, keep_default_na=False, quoting=csv.QUOTE_NONE)
    texts = posts["text"].tolist()
    pandemic_index = model.tasks[ident].classes.index("pandemic") if "pandemic" in model.tasks[ident].classes else 1
    id_preds = predict_batch(model, texts, ident, c["batch_size"])
    hits = [i for i, p in enumerate(id_preds) if p.label == pandemic_index]
    emo_preds = dict(zip(hits, predict_batch(model, [texts[i] for i in hits], emo, c["batch_size"])))
    out = cfg.out_dir / ARTIFACTS["classify"]
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write("\t".join(CLASSIFIED_HEADER) + "\n")
        for i, (city, date, text) in enumerate(zip(posts["city"], posts["date"], texts)):
            p = id_preds[i]
            e = emo_preds.get(i)
            fields = [
                city, date, text, str(int(i in emo_preds)), f"{p.probs[pandemic_index]:.6f}",
                model.tasks[emo].classes[e.label] if e else "", f"{e.probs[e.label]:.6f}" if e else "",
                _weights(p.attention), _weights(e.attention) if e else "",
            ]
            fh.write("\t".join(fields) + "\n")
    return [out]


def cmd_aggregate(cfg: PipelineConfig) -> list[Path]:
    classified = pd.read_csv(
        cfg.path("classified"), sep="\t", dtype=str, keep_default_na=False, quoting=csv.QUOTE_NONE
    )
    cov = pd.read_csv(cfg.path("covariates"), dtype=str, keep_default_na=False)
    index = {name: i for i, name in enumerate(EMOTIONS)}
    items = []
    for city, date, pandemic, emotion in zip(
        classified["city"], classified["date"], classified["pandemic"], classified["emotion"]
    ):
        if emotion and emotion not in index:
            raise InputError(f"{cfg.path('classified')}: unknown emotion label {emotion!r}")
        items.append(ClassifiedText(city, date, pandemic == "1", index[emotion] if emotion else None))
    counts = count_classified(items)
    keys = set(zip(cov["city"], cov["date"]))
    stray = sorted({(c, d) for c, d in zip(counts["city"], counts["date"])} - keys)
    if stray:
        raise InputError(f"classified posts for ({stray[0][0]}, {stray[0][1]}) have no covariate row")
    panel = cov[["city", "date"]].merge(counts, on=["city", "date"], how="left")
    count_cols = list(PANEL_COLUMNS[2:12])
    panel[count_cols] = panel[count_cols].fillna(0).astype(np.int64)
    for c in cov.columns[2:]:
        panel[c] = cov[c].to_numpy()
    panel = normalize_panel(panel[[c for c in PANEL_COLUMNS if c in panel.columns]])
    out = cfg.out_dir / ARTIFACTS["aggregate"]
    write_panel(panel, out)
    empty = int((panel["total_texts"] == 0).sum())
    if empty:
        log.info("aggregate: %d city-days without posts", empty)
    return [out]


def cmd_regress(cfg: PipelineConfig) -> list[Path]:
    panel = read_panel(cfg.path("panel"))
    r = cfg["regress"]
    specs = [RegressionSpec(d, default_regressors()) for d in r["dependents"]]
    report = run_protocol(panel, specs, alpha=r["alpha"], robust_kind=r["robust_kind"], robust_hausman=r["robust_hausman"])
    txt = cfg.out_dir / "regression.txt"
    js = cfg.out_dir / "regression.json"
    _write_text(txt, report.to_text())
    _write_text(js, report.to_json())
    return [txt, js]


DEMO_CONFIG = """\
; synthetic end-to-end demo; every path is relative to this file
[run]
seed = {seed}
out = .

[paths]
corpus = corpus.tsv
posts = posts.tsv
covariates = covariates.csv

[embed]
dim = 32
epochs = 5

[model]
kernel_size = 3
channels = 16

[train]
epochs = 20
learning_rate = 0.005
clip_norm = 1.0
lr_decay = linear
"""


def cmd_demo(cfg: PipelineConfig) -> list[Path]:
    """Write a synthetic corpus, posts and covariates, then run every stage."""
    out = cfg.out_dir
    seed = cfg.seed
    corpus = demo_corpus(seed=seed, n_train=800, n_dev=200, n_test=200)
    write_corpus(corpus, out / "corpus.tsv")
    sim = simulate_panel(seed=seed, mean_texts=(10.0, 100.0))
    posts = demo_posts(sim.panel, seed=seed)
    posts = posts.assign(date=[d.isoformat() for d in posts["date"]])
    posts.to_csv(out / "posts.tsv", sep="\t", index=False, lineterminator="\n", quoting=csv.QUOTE_NONE)
    cov = sim.panel[["city", "date", *COVARIATES, "netout"]].copy()
    write_panel_like(cov, out / "covariates.csv")
    config_path = out / "demo.ini"
    _write_text(config_path, DEMO_CONFIG.format(seed=seed))
    written = [out / "corpus.tsv", out / "posts.tsv", out / "covariates.csv", config_path]
    # command-line overrides apply to the stages too
    stage_cfg = load_config(config_path, stage_overrides(cfg.overrides))
    for name in ("embed", "train", "eval", "classify", "aggregate", "regress"):
        diags = validate_inputs(stage_cfg, name)
        if diags:
            raise RuntimeError(f"demo stage {name}: {diags[0]}")
        t0 = time.perf_counter()
        written += STAGES[name](stage_cfg)
        log.info("demo stage %s finished in %.2f s", name, time.perf_counter() - t0)
    return written


def stage_overrides(overrides) -> list[str]:
    """Overrides that make sense inside the demo; output location and input
    paths are fixed by the demo itself."""
    return [o for o in overrides if not o.strip().startswith(("run.out", "paths."))]


def write_panel_like(frame: pd.DataFrame, path: Path) -> None:
    out = frame.copy()
    out["date"] = [d.isoformat() for d in out["date"]]
    for c in ("distance", "pmedical", "pgovernment", "density", "netout"):
        if c in out.columns:
            out[c] = [repr(float(v)) for v in out[c]]
    out.to_csv(path, index=False, lineterminator="\n")


STAGES: dict[str, Callable[[PipelineConfig], list[Path]]] = {
    "embed": cmd_embed,
    "train": cmd_train,
    "eval": cmd_eval,
    "classify": cmd_classify,
    "aggregate": cmd_aggregate,
    "regress": cmd_regress,
    "demo": cmd_demo,
}


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sentipanel", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", choices=COMMANDS, help="pipeline stage to run")
    parser.add_argument("--config", help="INI configuration file")
    parser.add_argument("--seed", type=int, help="global seed (overrides run.seed)")
    parser.add_argument("--out", help="output directory (overrides run.out)")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
        help="override one configuration key; repeatable",
    )
    return parser


def _setup_log(out_dir: Path) -> logging.Handler:
    handler = logging.FileHandler(out_dir / "sentipanel.log", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    return handler


def run(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return int(exc.code or 0)
    try:
        if args.command != "demo" and args.config is None:
            raise ConfigError("--config is required")
        cfg = load_config(args.config, args.overrides, args.seed, args.out)
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
    except (ConfigError, OSError) as exc:
        return _fail(exc, 2)
    handler = _setup_log(cfg.out_dir)
    try:
        log.info("start %s seed=%d config=%s", args.command, cfg.seed, args.config)
        if args.command != "demo":
            diags = validate_inputs(cfg, args.command)
            if diags:
                for d in diags:
                    log.error(d)
                more = f" (and {len(diags) - 1} more)" if len(diags) > 1 else ""
                return _fail(InputError(diags[0] + more), 2)
        t0 = time.perf_counter()
        written = STAGES[args.command](cfg)
        log.info("done %s in %.2f s: %s", args.command, time.perf_counter() - t0, ", ".join(map(str, written)))
        for p in written:
            print(p)
        return 0
    except InputError as exc:
        log.error(str(exc))
        return _fail(exc, 2)
    except Exception as exc:  # any stage failure becomes exit 1 with one line
        log.exception("stage failed")
        return _fail(exc, 1)
    finally:
        log.removeHandler(handler)
        handler.close()


def _fail(exc: BaseException, code: int) -> int:
    message = " ".join(str(exc).split()) or type(exc).__name__
    print(f"sentipanel: error: {message}", file=sys.stderr)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
