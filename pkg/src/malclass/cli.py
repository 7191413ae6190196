"""Single entry point for the whole pipeline.

Subcommands: taxonomy, ingest, split, train, eval, predict, matrix, mine,
uncertain, agreement, gradcheck. Each run resolves its configuration
(config file values overridden by flags), echoes it into an output
directory named by the config hash, and is reproducible byte-for-byte from
(inputs, seed, config).

Exit codes: 0 success, 2 usage/validation failure, 3 I/O failure,
4 training divergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from . import errors as err
from . import models as models_mod
from .corpus import Corpus, DataSplit, Example, ingest, stratified_split
from .encoding import encode_char_inputs, encode_word_inputs
from .experiments import (ALL_MODEL_KINDS, CONTEXT_CHOICES, Pipeline,
                          run_matrix, write_matrix_tsv)
from .metrics import (ConfusionMatrix, cohen_kappa, fleiss_kappa,
                      fleiss_kappa_by_group, human_agreement)
from .mining import (iter_pool, iter_pool_turns, load_lexicon, stream_mine,
                     uncertainty_filter)
from .nn import grad_check
from .taxonomy import load_default
from .tokens import CharAlphabet, Vocabulary

logger = logging.getLogger("malclass")

VALIDATION_ERRORS = (
    err.ConfigError, err.ParseError, err.LabelError, err.TurnCountError,
    err.UnknownLabelError, err.WrongLevelError, err.LevelAboveError,
    err.LengthMismatchError, err.InsufficientRatersError,
    err.ProbabilityRangeError, err.LevelMismatchError, err.ShapeMismatchError,
    err.CheckpointError, err.DimensionMismatchError, err.UnknownDocError,
    err.EmptyCorpusError, ValueError,
)

CONFIG_KEYS = {
    "model", "level", "context", "rephrased_train", "rephrased_test",
    "corpus", "split", "seed", "epochs", "lr", "batch_size", "hidden",
    "dropout", "patience", "out", "lenient", "clip", "per_example",
    "embeddings", "vocab_size", "max_len", "embedding_dim", "window",
    "ratios", "matrix_models", "matrix_levels", "matrix_context",
    "matrix_rephrased",
}


def _load_config_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise err.ConfigError(f"{path}: invalid JSON config ({exc})") from exc
    if not isinstance(cfg, dict):
        raise err.ConfigError(f"{path}: config must be a JSON object")
    unknown = set(cfg) - CONFIG_KEYS
    if unknown:
        raise err.ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    return cfg


def _resolve_config(args) -> dict:
    cfg = _load_config_file(args.config) if getattr(args, "config", None) else {}
    for key in CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _config_hash(command: str, cfg: dict) -> str:
    canon = json.dumps({"command": command, **cfg}, sort_keys=True, default=str)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


def _run_dir(command: str, cfg: dict) -> Path:
    out = Path(cfg.get("out") or "runs")
    run = out / f"{command}-{_config_hash(command, cfg)}"
    run.mkdir(parents=True, exist_ok=True)
    (run / "resolved_config.json").write_text(
        json.dumps(cfg, indent=2, sort_keys=True, default=str) + "\n")
    return run


def _load_inputs(cfg) -> tuple[Corpus, DataSplit]:
    if not cfg.get("corpus"):
        raise err.ConfigError("--corpus is required")
    if not cfg.get("split"):
        raise err.ConfigError("--split is required")
    corpus = ingest(cfg["corpus"], lenient=bool(cfg.get("lenient")))
    return corpus, DataSplit.load(cfg["split"])


# --- subcommand implementations ---

def cmd_taxonomy(args) -> int:
    doc = load_default().to_json()
    if args.out:
        Path(args.out).write_text(doc + "\n")
    else:
        print(doc)
    return 0


def cmd_ingest(args) -> int:
    corpus = ingest(args.corpus, lenient=bool(args.lenient))
    print(corpus.stats().to_json())
    return 0


def cmd_split(args) -> int:
    cfg = _resolve_config(args)
    if not cfg.get("corpus"):
        raise err.ConfigError("--corpus is required")
    ratios = cfg.get("ratios") or (0.7, 0.1, 0.2)
    if isinstance(ratios, str):
        ratios = tuple(float(r) for r in ratios.split(","))
    corpus = ingest(cfg["corpus"], lenient=bool(cfg.get("lenient")))
    split = stratified_split(corpus, ratios=tuple(ratios),
                             seed=int(cfg.get("seed", 0)))
    run = _run_dir("split", cfg)
    split.save(run / "split.json")
    print(f"train {len(split.train)} / validation {len(split.validation)} "
          f"/ test {len(split.test)}")
    print(run / "split.json")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    corpus, split = _load_inputs(cfg)
    run = _run_dir("train", cfg)
    pipe = Pipeline(cfg, corpus, split)
    history = pipe.train_to(run)
    print(f"best epoch {history['best_epoch']} "
          f"val loss {history['best_val_loss']:.6f}")
    print(run / "model.ckpt")
    return 0


def cmd_eval(args) -> int:
    cfg = _resolve_config(args)
    header, _ = ckpt_io.load(args.checkpoint)
    # checkpoint echo supplies defaults for anything not set explicitly
    stored = header.get("config", {})
    for key in ("level", "seed"):
        cfg.setdefault(key, stored.get(key))
    stored_setting = stored.get("setting", {})
    if "context" not in cfg and stored_setting:
        src = {"both": "both", "same_user": "same", "other_user": "other"}
        cfg["context"] = (src[stored_setting["context_source"]]
                          if stored_setting.get("use_context") else "none")
    if "rephrased_train" not in cfg and stored_setting:
        cfg["rephrased_train"] = "on" if stored_setting.get("use_rephrased_train") else "off"
    if "rephrased_test" not in cfg and stored_setting:
        cfg["rephrased_test"] = "on" if stored_setting.get("test_rephrased") else "off"
    cfg.setdefault("model", header.get("model_kind"))
    corpus, split = _load_inputs(cfg)
    run = _run_dir("eval", cfg)
    pipe = Pipeline(cfg, corpus, split)
    outcome = pipe.evaluate_checkpoint(args.checkpoint, vocab_path=args.vocab,
                                       force=bool(args.force))
    (run / "report.json").write_text(outcome.report.to_json() + "\n")
    cm = ConfusionMatrix.from_pairs(outcome.golds, outcome.preds, pipe.class_ids)
    cm.to_csv(run / "confusion.csv")
    print(f"macro P {outcome.report.macro_precision:.2f} "
          f"R {outcome.report.macro_recall:.2f} F1 {outcome.report.macro_f1:.2f}")
    print(run / "report.json")
    return 0


def _read_predict_inputs(path) -> list[Example]:
    examples = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise err.ParseError(f"invalid JSON ({exc.msg})", line_no) from exc
            if "text" not in obj:
                raise err.ParseError("expected a 'text' field", line_no)
            context = tuple((str(s), str(t)) for s, t in obj.get("context", []))
            examples.append(Example(str(obj["text"]), context, "", "input", line_no))
    if not examples:
        raise err.ParseError("no inputs")
    return examples


def cmd_predict(args) -> int:
    header, _ = ckpt_io.load(args.checkpoint)
    kind = header.get("model_kind")
    if kind == "text_gcn":
        raise err.ConfigError(
            "text_gcn is transductive: test responses must be graph nodes at "
            "training time, so prediction on unseen text is unsupported")
    model, _ = models_mod.load_model(args.checkpoint)
    stored = header.get("config", {})
    level = int(stored.get("level", 1))
    classes = load_default().level_classes(level)
    examples = _read_predict_inputs(args.input)
    if kind == "char_cnn":
        inputs, lengths = encode_char_inputs(examples, CharAlphabet(),
                                             model.spec.max_len)
    else:
        vocab_path = args.vocab or Path(args.checkpoint).parent / "vocab.txt"
        vocab = Vocabulary.load(vocab_path)
        inputs, lengths = encode_word_inputs(examples, vocab, model.spec.max_len)
    predictions = models_mod.predict(model, inputs, lengths,
                                     [c.name for c in classes])
    sink = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for pred in predictions:
            doc = {"label": pred.label,
                   "probabilities": [float(p) for p in pred.probabilities]}
            sink.write(json.dumps(doc) + "\n")
    finally:
        if args.out:
            sink.close()
    return 0


def cmd_matrix(args) -> int:
    cfg = _resolve_config(args)
    corpus, split = _load_inputs(cfg)
    run = _run_dir("matrix", cfg)
    rows = run_matrix(cfg, corpus, split, run)
    write_matrix_tsv(rows, run / "results.tsv")
    failures = [r for r in rows if "error" in r]
    print(f"{len(rows) - len(failures)}/{len(rows)} cells completed")
    print(run / "results.tsv")
    if failures:
        for r in failures:
            logger.error("cell %s: %s", r["name"], r["error"])
        return 4 if any("diverg" in r["error"].lower() for r in failures) else 2
    return 0


def cmd_mine(args) -> int:
    cfg = _resolve_config(args)
    lexicon = load_lexicon(args.lexicon)
    if not lexicon:
        raise err.ConfigError(f"lexicon {args.lexicon} is empty")
    run = _run_dir("mine", cfg)
    ranked = stream_mine(lexicon, lambda: iter_pool(args.pool), int(args.top))
    out_path = run / "candidates.tsv"
    with open(out_path, "w", encoding="utf-8") as fh:
        for doc_id, score in ranked:
            fh.write(f"{doc_id}\t{score!r}\n")
    print(f"{len(ranked)} candidates")
    print(out_path)
    return 0


def cmd_uncertain(args) -> int:
    cfg = _resolve_config(args)
    lo, hi = float(args.lo), float(args.hi)
    if not (0.0 <= lo <= hi <= 1.0):
        raise err.ConfigError(f"need 0 <= lo <= hi <= 1, got lo={lo} hi={hi}")
    header, _ = ckpt_io.load(args.checkpoint)
    kind = header.get("model_kind")
    if kind == "text_gcn":
        raise err.ConfigError("text_gcn cannot score unseen dialogues "
                              "(transductive model)")
    model, _ = models_mod.load_model(args.checkpoint)
    level = int(header.get("config", {}).get("level", 1))
    classes = load_default().level_classes(level)
    nonmal = [i for i, c in enumerate(classes) if c.name == "non-malevolent"]
    if len(nonmal) != 1:
        raise err.ConfigError("cannot locate the non-malevolent class")
    nonmal_idx = nonmal[0]
    vocab = alphabet = None
    if kind == "char_cnn":
        alphabet = CharAlphabet()
    else:
        vocab_path = args.vocab or Path(args.checkpoint).parent / "vocab.txt"
        vocab = Vocabulary.load(vocab_path)

    run = _run_dir("uncertain", cfg)
    out_path = run / "uncertain.tsv"
    seen = kept = 0
    # one dialogue resident at a time; its malevolence is the max over turns
    with open(out_path, "w", encoding="utf-8") as fh:
        for dlg_id, texts in iter_pool_turns(args.pool):
            seen += 1
            examples = [Example(t, (), "", dlg_id, i) for i, t in enumerate(texts)]
            if not examples:
                continue
            if kind == "char_cnn":
                inputs, lengths = encode_char_inputs(examples, alphabet,
                                                     model.spec.max_len)
            else:
                inputs, lengths = encode_word_inputs(examples, vocab,
                                                     model.spec.max_len)
            probs = model.predict_proba(inputs, lengths)
            p_mal = float((1.0 - probs[:, nonmal_idx]).max())
            if uncertainty_filter([(dlg_id, p_mal)], lo, hi):
                kept += 1
                fh.write(f"{dlg_id}\t{p_mal!r}\n")
    print(f"{kept}/{seen} dialogues in [{lo}, {hi}]")
    print(out_path)
    return 0


def _read_annotation_items(path):
    items = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise err.ParseError(f"invalid JSON ({exc.msg})", line_no) from exc
            labels = obj.get("labels")
            if not isinstance(labels, list) or not labels:
                raise err.ParseError("expected a non-empty 'labels' list", line_no)
            if len(labels) < 2:
                raise err.InsufficientRatersError(
                    f"line {line_no}: every item needs at least 2 ratings")
            items.append({"labels": [str(x) for x in labels],
                          "final": obj.get("final")})
    if not items:
        raise err.ParseError("no annotation items")
    return items


def cmd_agreement(args) -> int:
    cfg = _resolve_config(args)
    taxonomy = load_default()
    items = _read_annotation_items(args.annotations)
    run = _run_dir("agreement", cfg)

    def project_name(label: str, level: int) -> str:
        return taxonomy.project(taxonomy.validate(label, 3).id, level).name

    def is_malevolent(item) -> bool:
        # gold ("final") wins; otherwise majority vote, ties malevolent
        if item["final"] is not None:
            return project_name(str(item["final"]), 1) == "malevolent"
        votes = [project_name(lab, 1) == "malevolent" for lab in item["labels"]]
        return sum(votes) * 2 >= len(votes)

    report: dict = {"items": len(items)}
    for level in (1, 2, 3):
        classes = taxonomy.level_classes(level)
        a = [project_name(it["labels"][0], level) for it in items]
        b = [project_name(it["labels"][1], level) for it in items]
        overall = cohen_kappa(a, b)
        mal_idx = [i for i, it in enumerate(items) if is_malevolent(it)]
        kappa_mal = (cohen_kappa([a[i] for i in mal_idx], [b[i] for i in mal_idx])
                     if len(mal_idx) >= 1 else None)
        name_to_col = {c.name: k for k, c in enumerate(classes)}
        table = []
        for it in items:
            row = [0] * len(classes)
            for lab in it["labels"]:
                row[name_to_col[project_name(lab, level)]] += 1
            table.append(row)
        groups = fleiss_kappa_by_group(table)
        ha = human_agreement(a, b, [c.name for c in classes])
        report[f"level{level}"] = {
            "cohen_kappa": round(overall, 4),
            "cohen_kappa_malevolent": (round(kappa_mal, 4)
                                       if kappa_mal is not None else None),
            "fleiss_kappa_by_raters": {str(n): [round(k, 4), c]
                                       for n, (k, c) in groups.items()},
            "fleiss_kappa_combined": round(fleiss_kappa(table), 4),
            "human_agreement": {
                "precision": round(ha.macro_precision, 2),
                "recall": round(ha.macro_recall, 2),
                "f1": round(ha.macro_f1, 2),
            },
        }
    doc = json.dumps(report, indent=2, sort_keys=True)
    (run / "agreement.json").write_text(doc + "\n")
    print(doc)
    return 0


def cmd_gradcheck(args) -> int:
    kinds = [args.model] if args.model else ["text_cnn", "text_rnn",
                                             "text_rcnn", "char_cnn"]
    rng = np.random.default_rng(0)
    worst = 0.0
    for kind in kinds:
        max_len = 256 if kind == "char_cnn" else 16
        spec = models_mod.ClassifierSpec(
            kind=kind, num_classes=3, vocab_size=50, embedding_dim=12,
            hidden=8, dropout=0.0, max_len=max_len, conv_channels=8,
            dtype="float64")
        model = models_mod.build(spec, seed=1)
        high = 71 if kind == "char_cnn" else 50
        inputs = rng.integers(1, high, size=(4, max_len)).astype(np.int32)
        lengths = np.full(4, max_len, dtype=np.int64)
        labels = rng.integers(0, 3, size=4).astype(np.int64)
        rel = grad_check(model, inputs, lengths, labels,
                         samples=int(args.samples), seed=7)
        worst = max(worst, rel)
        print(f"{kind:10s} max relative error {rel:.3e}")
    print("PASS" if worst < 1e-4 else "FAIL")
    return 0 if worst < 1e-4 else 2


# --- argument parsing ---

def _add_common_model_flags(p):
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--corpus", help="corpus JSONL path")
    p.add_argument("--split", help="split JSON path")
    p.add_argument("--seed", type=int)
    p.add_argument("--level", type=int, choices=(1, 2, 3))
    p.add_argument("--model", choices=ALL_MODEL_KINDS)
    p.add_argument("--context", choices=CONTEXT_CHOICES)
    p.add_argument("--rephrased-train", dest="rephrased_train", choices=("on", "off"))
    p.add_argument("--rephrased-test", dest="rephrased_test", choices=("on", "off"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--patience", type=int)
    p.add_argument("--vocab-size", dest="vocab_size", type=int)
    p.add_argument("--max-len", dest="max_len", type=int)
    p.add_argument("--embeddings", help="pretrained embedding vectors (text)")
    p.add_argument("--clip", type=float, help="global gradient-norm clip")
    p.add_argument("--lenient", action="store_const", const=True)
    p.add_argument("--out", help="output directory root (default: runs)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="malclass",
        description="Hierarchical malevolent dialogue response classification")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("taxonomy", help="export the category tree as JSON")
    p.add_argument("--out")
    p.set_defaults(func=cmd_taxonomy)

    p = sub.add_parser("ingest", help="validate a corpus file and print statistics")
    p.add_argument("--corpus", required=True)
    p.add_argument("--lenient", action="store_const", const=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", help="stratified train/validation/test split")
    p.add_argument("--config")
    p.add_argument("--corpus")
    p.add_argument("--seed", type=int)
    p.add_argument("--ratios", help="comma-separated, e.g. 0.7,0.1,0.2")
    p.add_argument("--lenient", action="store_const", const=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train a classifier under a setting")
    _add_common_model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test part")
    _add_common_model_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", help="vocabulary file (default: next to checkpoint)")
    p.add_argument("--force", action="store_true",
                   help="ignore level/kind mismatches with the checkpoint")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="classify JSONL inputs {text, context?}")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--vocab")
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("matrix", help="run the experiment grid")
    _add_common_model_flags(p)
    p.add_argument("--per-example", dest="per_example", action="store_const",
                   const=True, help="t-test on per-example correctness")
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("mine", help="rank pool dialogues by lexicon BM25")
    p.add_argument("--lexicon", required=True)
    p.add_argument("--pool", required=True)
    p.add_argument("--top", type=int, default=2000)
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("uncertain",
                       help="pool dialogues with malevolence probability in a band")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--pool", required=True)
    p.add_argument("--lo", type=float, default=0.2)
    p.add_argument("--hi", type=float, default=0.8)
    p.add_argument("--vocab")
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_uncertain)

    p = sub.add_parser("agreement", help="inter-annotator agreement report")
    p.add_argument("--annotations", required=True,
                   help="JSONL of {labels: [...], final?: label}")
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--model", choices=("char_cnn", "text_cnn", "text_rnn", "text_rcnn"))
    p.add_argument("--samples", type=int, default=200)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except err.DivergenceError as exc:
        logger.error("%s", exc)
        return 4
    except VALIDATION_ERRORS as exc:
        logger.error("%s", exc)
        return 2
    except err.FileError as exc:
        logger.error("%s", exc)
        return 3
    except OSError as exc:
        logger.error("%s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
