"""Pipeline orchestration shared by the CLI commands.

Everything here is deterministic for a fixed (corpus, split, config): the
vocabulary is rebuilt from the train part, model init/shuffling/dropout run
off the config seed, and checkpoints embed a vocabulary fingerprint so an
evaluation cannot silently run with the wrong encoder.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from . import models as models_mod
from .corpus import Corpus, DataSplit, SettingSpec, build_examples
from .embeddings import load_pretrained_embeddings, random_embeddings
from .encoding import (class_index_map, encode_char_examples,
                       encode_word_examples)
from .errors import ConfigError, LevelMismatchError
from .graph import GcnSpec, build_graph, train_gcn
from .metrics import macro_prf, paired_t_test
from .nn import TrainConfig, train
from .taxonomy import load_default
from .tokens import CharAlphabet, Vocabulary, build_vocab

logger = logging.getLogger(__name__)

ALL_MODEL_KINDS = ("char_cnn", "text_cnn", "text_rnn", "text_rcnn", "text_gcn")
CONTEXT_CHOICES = ("none", "both", "same", "other")
_CONTEXT_SOURCE = {"both": "both", "same": "same_user", "other": "other_user"}

DEFAULT_LR = {"char_cnn": 1e-4, "text_cnn": 1e-4, "text_rnn": 1e-4,
              "text_rcnn": 1e-4, "text_gcn": 0.02}


def setting_from_config(cfg: dict) -> SettingSpec:
    context = cfg.get("context", "none")
    if context not in CONTEXT_CHOICES:
        raise ConfigError(f"context must be one of {CONTEXT_CHOICES}, got {context!r}")
    return SettingSpec(
        level=int(cfg.get("level", 1)),
        use_context=context != "none",
        use_rephrased_train=cfg.get("rephrased_train", "off") == "on",
        test_rephrased=cfg.get("rephrased_test", "off") == "on",
        context_source=_CONTEXT_SOURCE.get(context, "both"),
    )


def vocab_fingerprint(vocab: Vocabulary) -> str:
    digest = hashlib.sha256("\n".join(vocab.index_to_token).encode("utf-8"))
    return digest.hexdigest()[:16]


def build_training_vocab(corpus: Corpus, split: DataSplit, setting: SettingSpec,
                         max_size: int) -> Vocabulary:
    """Vocabulary over the train part's texts (rephrasings included only when
    they feed training examples)."""
    def texts():
        for dlg_id in split.train:
            for utt in corpus.by_id[dlg_id].utterances:
                yield utt.text
                if setting.use_rephrased_train:
                    yield from utt.rephrasings
    return build_vocab(texts(), max_size=max_size)


@dataclass
class EvalOutcome:
    report: object                 # MetricsReport
    golds: list[str]
    preds: list[str]
    correct: np.ndarray            # (N,) 0/1 per test example


def _predict_labels(probs: np.ndarray, class_ids: list[str]) -> list[str]:
    return [class_ids[int(np.argmax(row))] for row in probs]


def _score(probs, examples, class_ids, setting) -> EvalOutcome:
    golds = [ex.label for ex in examples]
    preds = _predict_labels(probs, class_ids)
    report = macro_prf(golds, preds, class_ids, setting=setting.describe())
    correct = np.fromiter((g == p for g, p in zip(golds, preds)), dtype=np.int64)
    return EvalOutcome(report, golds, preds, correct)


class Pipeline:
    """Train/evaluate one model kind under one setting."""

    def __init__(self, cfg: dict, corpus: Corpus, split: DataSplit):
        self.cfg = cfg
        self.corpus = corpus
        self.split = split
        self.taxonomy = load_default()
        self.setting = setting_from_config(cfg)
        self.kind = cfg.get("model", "text_cnn")
        if self.kind not in ALL_MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}")
        if self.kind == "text_gcn" and self.setting.use_context:
            raise ConfigError("text_gcn builds its graph over response text only; "
                              "use --context none")
        self.classes = self.taxonomy.level_classes(self.setting.level)
        self.class_ids = [c.id for c in self.classes]
        self.class_to_index = class_index_map(self.classes)

    # --- data ---

    def examples(self, part: str):
        ids = self.split.part(part)
        return build_examples(self.corpus, ids, part, self.setting, self.taxonomy)

    def make_vocab(self) -> Vocabulary:
        return build_training_vocab(self.corpus, self.split, self.setting,
                                    int(self.cfg.get("vocab_size", 36000)))

    def _max_len(self) -> int:
        default = 1014 if self.kind == "char_cnn" else 128
        return int(self.cfg.get("max_len") or default)

    def _encode(self, examples, vocab):
        if self.kind == "char_cnn":
            return encode_char_examples(examples, CharAlphabet(),
                                        self.class_to_index, self._max_len())
        return encode_word_examples(examples, vocab, self.class_to_index,
                                    self._max_len())

    def _train_config(self) -> TrainConfig:
        lr = self.cfg.get("lr") or DEFAULT_LR[self.kind]
        max_epochs = int(self.cfg.get("epochs", 100))
        return TrainConfig(
            learning_rate=float(lr),
            batch_size=int(self.cfg.get("batch_size", 64)),
            max_epochs=max_epochs,
            patience=min(int(self.cfg.get("patience", 10)), max_epochs),
            dropout=float(self.cfg.get("dropout", 0.5)),
            seed=int(self.cfg.get("seed", 0)),
            clip_norm=float(self.cfg["clip"]) if self.cfg.get("clip") else None,
        )

    def _header_extra(self, vocab: Vocabulary | None) -> dict:
        extra = {
            "level": self.setting.level,
            "setting": self.setting.describe(),
            "seed": int(self.cfg.get("seed", 0)),
        }
        if vocab is not None:
            extra["vocab_fingerprint"] = vocab_fingerprint(vocab)
        return extra

    # --- word/char models ---

    def _build_classifier(self, vocab: Vocabulary | None, dropout: float, seed: int):
        spec = models_mod.ClassifierSpec(
            kind=self.kind,
            num_classes=len(self.classes),
            vocab_size=len(vocab) if vocab is not None else 0,
            embedding_dim=int(self.cfg.get("embedding_dim", 200)),
            hidden=int(self.cfg.get("hidden", 128)),
            dropout=dropout,
            max_len=self._max_len(),
        )
        table = None
        if vocab is not None:
            emb_path = self.cfg.get("embeddings")
            if emb_path:
                table = load_pretrained_embeddings(emb_path, vocab,
                                                   dim=spec.embedding_dim, seed=seed)
                logger.info("embedding coverage: %.3f", table.coverage)
            else:
                table = random_embeddings(vocab, dim=spec.embedding_dim, seed=seed)
        return models_mod.build(spec, seed=seed, embedding_table=table)

    def train_to(self, run_dir: Path) -> dict:
        """Train and write model.ckpt / history.json / vocab.txt."""
        if self.kind == "text_gcn":
            return self._train_gcn_to(run_dir)
        cfg = self._train_config()
        vocab = None
        if self.kind != "char_cnn":
            vocab = self.make_vocab()
            vocab.save(run_dir / "vocab.txt")
        train_set = self._encode(self.examples("train"), vocab)
        val_set = self._encode(self.examples("validation"), vocab)
        model = self._build_classifier(vocab, cfg.dropout, cfg.seed)
        result = train(model, train_set, val_set, cfg)
        models_mod.save_model(run_dir / "model.ckpt", model,
                              extra_config=self._header_extra(vocab))
        history = {
            "history": result.history,
            "best_epoch": result.best_epoch,
            "best_val_loss": result.best_val_loss,
            "stopped_early": result.stopped_early,
        }
        (run_dir / "history.json").write_text(json.dumps(history, indent=2, sort_keys=True))
        return history

    def evaluate_checkpoint(self, ckpt_path, vocab_path=None,
                            force: bool = False) -> EvalOutcome:
        header, _ = ckpt_io.load(ckpt_path)
        self._check_header(header, force)
        if header["model_kind"] == "text_gcn":
            return self._evaluate_gcn_checkpoint(ckpt_path, vocab_path, header)
        model, _ = models_mod.load_model(ckpt_path)
        vocab = None
        if self.kind != "char_cnn":
            vocab = self._load_vocab_for(ckpt_path, vocab_path, header, force)
        test_examples = self.examples("test")
        test_set = self._encode(test_examples, vocab)
        probs = model.predict_proba(test_set.inputs, test_set.lengths)
        return self._score_with_labels(probs, test_examples, test_set)

    def _score_with_labels(self, probs, examples, encoded) -> EvalOutcome:
        outcome = _score(probs, examples, self.class_ids, self.setting)
        # encoded labels double-check the class map stayed aligned
        assert list(encoded.labels) == [self.class_to_index[g] for g in outcome.golds]
        self._attach_level1_diagnostic(outcome)
        return outcome

    def _attach_level1_diagnostic(self, outcome: EvalOutcome):
        """Cross-level consistency readout: scores after projecting golds and
        predictions to level 1. Hierarchy is never enforced at prediction
        time; this is reporting only."""
        if self.setting.level == 1:
            return
        golds1 = [self.taxonomy.project(g, 1).id for g in outcome.golds]
        preds1 = [self.taxonomy.project(p, 1).id for p in outcome.preds]
        projected = macro_prf(golds1, preds1, ["non-malevolent", "malevolent"])
        outcome.report.setting["level1_projection"] = {
            "macro_precision": round(projected.macro_precision, 2),
            "macro_recall": round(projected.macro_recall, 2),
            "macro_f1": round(projected.macro_f1, 2),
        }

    def _check_header(self, header: dict, force: bool):
        cfg = header.get("config", {})
        ck_level = cfg.get("level")
        if ck_level is not None and ck_level != self.setting.level and not force:
            raise LevelMismatchError(
                f"checkpoint was trained at level {ck_level}, requested level "
                f"{self.setting.level} (use --force to override)")
        if header.get("model_kind") != self.kind and not force:
            raise LevelMismatchError(
                f"checkpoint holds a {header.get('model_kind')!r} model, "
                f"requested {self.kind!r} (use --force to override)")

    def _load_vocab_for(self, ckpt_path, vocab_path, header, force) -> Vocabulary:
        path = Path(vocab_path) if vocab_path else Path(ckpt_path).parent / "vocab.txt"
        vocab = Vocabulary.load(path)
        want = header.get("config", {}).get("vocab_fingerprint")
        if want and vocab_fingerprint(vocab) != want and not force:
            raise ConfigError(
                f"vocabulary {path} does not match the checkpoint fingerprint")
        return vocab

    # --- GCN ---

    def _gcn_assembly(self, vocab: Vocabulary):
        parts = [self.examples(p) for p in ("train", "validation", "test")]
        all_examples = parts[0] + parts[1] + parts[2]
        n_train, n_val, n_test = (len(p) for p in parts)
        graph = build_graph(all_examples, vocab,
                            window=int(self.cfg.get("window", 20)))
        train_labels = {i: self.class_to_index[ex.label]
                        for i, ex in enumerate(parts[0])}
        val_labels = {n_train + i: self.class_to_index[ex.label]
                      for i, ex in enumerate(parts[1])}
        return graph, parts, (n_train, n_val, n_test), train_labels, val_labels

    def _gcn_spec(self) -> GcnSpec:
        return GcnSpec(
            num_classes=len(self.classes),
            hidden=int(self.cfg.get("hidden", 128)),
            learning_rate=float(self.cfg.get("lr") or DEFAULT_LR["text_gcn"]),
            dropout=float(self.cfg.get("dropout", 0.5)),
            window=int(self.cfg.get("window", 20)),
        )

    def _train_gcn_to(self, run_dir: Path) -> dict:
        vocab = self.make_vocab()
        vocab.save(run_dir / "vocab.txt")
        graph, parts, counts, train_labels, val_labels = self._gcn_assembly(vocab)
        spec = self._gcn_spec()
        max_epochs = int(self.cfg.get("epochs", 100))
        result = train_gcn(graph, spec, train_labels, val_labels,
                           max_epochs=max_epochs,
                           patience=min(int(self.cfg.get("patience", 10)), max_epochs),
                           seed=int(self.cfg.get("seed", 0)))
        extra = self._header_extra(vocab)
        extra.update(spec.to_config())
        extra["node_counts"] = list(counts)
        extra["n_nodes"] = graph.n_nodes
        ckpt_io.save(run_dir / "model.ckpt", "text_gcn", extra,
                     [("w0", result.weights["w0"]), ("w1", result.weights["w1"])])
        history = {
            "history": result.history,
            "best_epoch": result.best_epoch,
            "best_val_loss": result.best_val_loss,
        }
        (run_dir / "history.json").write_text(json.dumps(history, indent=2, sort_keys=True))
        return history

    def _evaluate_gcn_checkpoint(self, ckpt_path, vocab_path, header) -> EvalOutcome:
        from .graph import _gcn_forward, normalize  # internal reuse
        from .nn.layers import SoftmaxCrossEntropy

        vocab = self._load_vocab_for(ckpt_path, vocab_path, header, force=False)
        graph, parts, counts, _, _ = self._gcn_assembly(vocab)
        stored = header["config"]
        if stored.get("n_nodes") != graph.n_nodes or stored.get("node_counts") != list(counts):
            raise ConfigError(
                "rebuilt graph does not match the checkpoint (different corpus, "
                "split or setting)")
        _, tensors = ckpt_io.load(ckpt_path)
        a_hat = normalize(graph).astype(np.float32)
        _, _, logits = _gcn_forward(a_hat, tensors["w0"], tensors["w1"], None)
        n_train, n_val, n_test = counts
        test_rows = logits[n_train + n_val:n_train + n_val + n_test]
        probs = SoftmaxCrossEntropy.probabilities(test_rows)
        outcome = _score(probs, parts[2], self.class_ids, self.setting)
        self._attach_level1_diagnostic(outcome)
        return outcome


# --- experiment matrix ---

def _cell_name(kind: str, level: int, context: str, reph: str) -> str:
    return f"{kind}-l{level}-ctx_{context}-reph_{reph}"


def matrix_cells(cfg: dict) -> list[dict]:
    """Expand the grid into per-cell config dicts (one row per cell)."""
    kinds = cfg.get("matrix_models") or ["text_cnn"]
    levels = cfg.get("matrix_levels") or [1, 2, 3]
    contexts = cfg.get("matrix_context") or ["none", "both"]
    rephrased = cfg.get("matrix_rephrased") or ["off", "on"]
    cells = []
    for kind in kinds:
        if kind not in ALL_MODEL_KINDS:
            raise ConfigError(f"unknown model kind {kind!r} in matrix_models")
        for level in levels:
            for context in contexts:
                if kind == "text_gcn" and context != "none":
                    continue  # transductive graph uses response text only
                for reph in rephrased:
                    cell = dict(cfg)
                    cell.update(model=kind, level=int(level), context=context,
                                rephrased_train=reph, rephrased_test="off")
                    cell["name"] = _cell_name(kind, int(level), context, reph)
                    cells.append(cell)
    return cells


def _is_baseline(cell: dict) -> bool:
    return cell["context"] == "none" and cell["rephrased_train"] == "off"


def _baseline_key(cell: dict) -> tuple:
    return (cell["model"], cell["level"])


def run_matrix(cfg: dict, corpus: Corpus, split: DataSplit, out_dir: Path) -> list[dict]:
    """Train/evaluate every grid cell; returns result rows (partial on
    failure: crashed cells carry an `error` field instead of scores).

    Every row reports scores on the plain test set; rephrased-train cells
    additionally report the rephrased-test variant in its own column group
    (text_gcn excepted: its transductive graph pins the test set at
    training time). Significance is always computed on the shared plain
    test set against the per-(model, level) no-context/no-rephrase
    baseline.
    """
    cells = matrix_cells(cfg)
    cells_dir = out_dir / "cells"
    cells_dir.mkdir(exist_ok=True)
    env_cap = os.environ.get("MALCLASS_THREADS")
    workers = max(1, min(len(cells),
                         int(env_cap) if env_cap else (os.cpu_count() or 1)))

    def run_cell(cell: dict) -> dict:
        name = cell["name"]
        cell_dir = cells_dir / name
        cell_dir.mkdir(exist_ok=True)
        pipe = Pipeline(cell, corpus, split)
        pipe.train_to(cell_dir)
        outcome = pipe.evaluate_checkpoint(cell_dir / "model.ckpt")
        (cell_dir / "report.json").write_text(outcome.report.to_json())
        row = {
            "cell": cell, "name": name,
            "precision": outcome.report.macro_precision,
            "recall": outcome.report.macro_recall,
            "f1": outcome.report.macro_f1,
            "per_class_f1": outcome.report.per_class_f1_vector(),
            "correct": outcome.correct,
        }
        if cell["rephrased_train"] == "on" and cell["model"] != "text_gcn":
            variant = dict(cell, rephrased_test="on")
            vpipe = Pipeline(variant, corpus, split)
            voutcome = vpipe.evaluate_checkpoint(cell_dir / "model.ckpt")
            (cell_dir / "report_test_rephrased.json").write_text(
                voutcome.report.to_json())
            row["reph_precision"] = voutcome.report.macro_precision
            row["reph_recall"] = voutcome.report.macro_recall
            row["reph_f1"] = voutcome.report.macro_f1
        return row

    rows: list[dict] = []
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(run_cell, cell): cell for cell in cells}
        for future, cell in futures.items():
            try:
                rows.append(future.result())
            except Exception as exc:  # preserve partial results
                logger.error("cell %s failed: %s", cell["name"], exc)
                rows.append({"cell": cell, "name": cell["name"], "error": str(exc)})

    # significance vs the per-(model, level) baseline cell
    baselines = {_baseline_key(r["cell"]): r for r in rows
                 if "error" not in r and _is_baseline(r["cell"])}
    per_example = bool(cfg.get("per_example"))
    for row in rows:
        if "error" in row:
            continue
        base = baselines.get(_baseline_key(row["cell"]))
        if base is None or base is row:
            continue
        if per_example:
            if len(row["correct"]) != len(base["correct"]):
                continue
            t, p = paired_t_test(row["correct"].tolist(), base["correct"].tolist())
        else:
            t, p = paired_t_test(row["per_class_f1"], base["per_class_f1"])
        row["t_vs_baseline"] = t
        row["p_vs_baseline"] = p
        row["significance"] = "p<0.05" if p < 0.05 else ("p<0.1" if p < 0.1 else "")
    return rows


def write_matrix_tsv(rows: list[dict], path) -> None:
    cols = ("level", "model", "context", "rephrased_train",
            "precision", "recall", "f1",
            "reph_test_precision", "reph_test_recall", "reph_test_f1",
            "t_vs_baseline", "p_vs_baseline", "significance", "error")
    def sort_key(row):
        c = row["cell"]
        return (c["level"], c["model"], c["context"], c["rephrased_train"])
    def fmt(row, key):
        return f"{row[key]:.2f}" if key in row else ""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(cols) + "\n")
        for row in sorted(rows, key=sort_key):
            c = row["cell"]
            vals = [str(c["level"]), c["model"], c["context"], c["rephrased_train"]]
            if "error" in row:
                vals += [""] * 9 + [row["error"]]
            else:
                vals += [f"{row['precision']:.2f}", f"{row['recall']:.2f}",
                         f"{row['f1']:.2f}",
                         fmt(row, "reph_precision"), fmt(row, "reph_recall"),
                         fmt(row, "reph_f1")]
                if "p_vs_baseline" in row:
                    vals += [f"{row['t_vs_baseline']:.4g}",
                             f"{row['p_vs_baseline']:.4g}",
                             row["significance"]]
                else:
                    vals += ["", "", ""]
                vals.append("")
            fh.write("\t".join(vals) + "\n")
