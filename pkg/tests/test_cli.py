import json

import pytest

from malclass.cli import main
from malclass.synthetic import make_labeled_corpus, write_jsonl

from conftest import corpus_to_jsonl


@pytest.fixture
def workdir(tmp_path, toy_corpus, monkeypatch):
    monkeypatch.chdir(tmp_path)
    corpus = make_labeled_corpus(
        40, seed=2, labels=["violence", "privacy-invasion"],
        malevolent_fraction=0.6, rephrase_prob=0.3)
    write_jsonl(corpus, tmp_path / "corpus.jsonl")
    assert main(["split", "--corpus", "corpus.jsonl", "--seed", "7",
                 "--out", "runs"]) == 0
    split_path = next((tmp_path / "runs").glob("split-*/split.json"))
    return tmp_path, split_path


def find_run(root, prefix):
    runs = sorted(p for p in (root / "runs").iterdir() if p.name.startswith(prefix))
    assert runs, f"no {prefix} run directory"
    return runs[-1]


def test_taxonomy_export(capsys):
    assert main(["taxonomy"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert len(rows) == 31


def test_ingest_stats(tmp_path, toy_corpus, capsys):
    path = corpus_to_jsonl(toy_corpus, tmp_path / "c.jsonl")
    assert main(["ingest", "--corpus", str(path)]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["dialogues"] == 3 and stats["rephrased"] == 1


def test_ingest_missing_file_exits_3(tmp_path):
    assert main(["ingest", "--corpus", str(tmp_path / "nope.jsonl")]) == 3


def test_split_deterministic_bytes(workdir):
    root, split_path = workdir
    before = split_path.read_bytes()
    assert main(["split", "--corpus", "corpus.jsonl", "--seed", "7",
                 "--out", "runs"]) == 0
    assert split_path.read_bytes() == before


def test_split_bad_ratios_exit_2(workdir):
    assert main(["split", "--corpus", "corpus.jsonl", "--ratios",
                 "0.5,0.2,0.2"]) == 2


def test_train_eval_predict_roundtrip(workdir, capsys):
    root, split_path = workdir
    rc = main(["train", "--corpus", "corpus.jsonl", "--split", str(split_path),
               "--model", "text_cnn", "--level", "1", "--epochs", "3",
               "--lr", "0.005", "--hidden", "8", "--max-len", "24",
               "--seed", "1", "--out", "runs"])
    assert rc == 0
    run = find_run(root, "train-")
    assert (run / "model.ckpt").exists()
    assert (run / "vocab.txt").exists()
    assert (run / "resolved_config.json").exists()
    history = json.loads((run / "history.json").read_text())
    assert len(history["history"]) == 3

    rc = main(["eval", "--checkpoint", str(run / "model.ckpt"),
               "--corpus", "corpus.jsonl", "--split", str(split_path),
               "--out", "runs"])
    assert rc == 0
    eval_run = find_run(root, "eval-")
    report = json.loads((eval_run / "report.json").read_text())
    assert 0 <= report["macro_f1"] <= 100
    assert (eval_run / "confusion.csv").exists()

    inputs = root / "inputs.jsonl"
    inputs.write_text(json.dumps({"text": "violencew1 violencew2"}) + "\n" +
                      json.dumps({"text": "hello",
                                  "context": [["A", "hi there"]]}) + "\n")
    rc = main(["predict", "--checkpoint", str(run / "model.ckpt"),
               "--input", str(inputs), "--out", str(root / "preds.jsonl")])
    assert rc == 0
    lines = (root / "preds.jsonl").read_text().strip().split("\n")
    assert len(lines) == 2
    pred = json.loads(lines[0])
    assert pred["label"] in {"malevolent", "non-malevolent"}
    assert len(pred["probabilities"]) == 2


def test_eval_level_mismatch_exits_2(workdir):
    root, split_path = workdir
    assert main(["train", "--corpus", "corpus.jsonl", "--split", str(split_path),
                 "--model", "text_cnn", "--level", "1", "--epochs", "1",
                 "--hidden", "4", "--max-len", "16", "--out", "runs"]) == 0
    run = find_run(root, "train-")
    rc = main(["eval", "--checkpoint", str(run / "model.ckpt"),
               "--corpus", "corpus.jsonl", "--split", str(split_path),
               "--level", "3", "--out", "runs"])
    assert rc == 2


def test_train_epochs_1_has_single_epoch(workdir):
    root, split_path = workdir
    assert main(["train", "--corpus", "corpus.jsonl", "--split", str(split_path),
                 "--model", "text_rnn", "--level", "1", "--epochs", "1",
                 "--hidden", "4", "--max-len", "12", "--out", "runs"]) == 0
    run = find_run(root, "train-")
    history = json.loads((run / "history.json").read_text())
    assert len(history["history"]) == 1


def test_gcn_train_eval(workdir):
    root, split_path = workdir
    rc = main(["train", "--corpus", "corpus.jsonl", "--split", str(split_path),
               "--model", "text_gcn", "--level", "1", "--epochs", "30",
               "--hidden", "8", "--out", "runs", "--seed", "3"])
    assert rc == 0
    run = find_run(root, "train-")
    rc = main(["eval", "--checkpoint", str(run / "model.ckpt"),
               "--corpus", "corpus.jsonl", "--split", str(split_path),
               "--out", "runs"])
    assert rc == 0


def test_gcn_rejects_context(workdir):
    root, split_path = workdir
    rc = main(["train", "--corpus", "corpus.jsonl", "--split", str(split_path),
               "--model", "text_gcn", "--level", "1", "--context", "both",
               "--out", "runs"])
    assert rc == 2


def test_gcn_predict_unsupported(workdir):
    root, split_path = workdir
    assert main(["train", "--corpus", "corpus.jsonl", "--split", str(split_path),
                 "--model", "text_gcn", "--level", "1", "--epochs", "2",
                 "--hidden", "4", "--out", "runs", "--seed", "5"]) == 0
    run = find_run(root, "train-")
    inputs = root / "in.jsonl"
    inputs.write_text('{"text": "anything"}\n')
    rc = main(["predict", "--checkpoint", str(run / "model.ckpt"),
               "--input", str(inputs)])
    assert rc == 2


def test_mine_command(workdir):
    root, _ = workdir
    lex = root / "lexicon.txt"
    lex.write_text("violencew0\nviolencew1 violencew2\n")
    rc = main(["mine", "--lexicon", str(lex), "--pool", "corpus.jsonl",
               "--top", "5", "--out", "runs"])
    assert rc == 0
    run = find_run(root, "mine-")
    lines = (run / "candidates.tsv").read_text().strip().split("\n")
    assert len(lines) == 5
    top_id, top_score = lines[0].split("\t")
    assert float(top_score) > 0


def test_uncertain_command(workdir):
    root, split_path = workdir
    assert main(["train", "--corpus", "corpus.jsonl", "--split", str(split_path),
                 "--model", "text_cnn", "--level", "1", "--epochs", "2",
                 "--hidden", "4", "--max-len", "16", "--out", "runs",
                 "--seed", "2"]) == 0
    run = find_run(root, "train-")
    rc = main(["uncertain", "--checkpoint", str(run / "model.ckpt"),
               "--pool", "corpus.jsonl", "--lo", "0.0", "--hi", "1.0",
               "--out", "runs"])
    assert rc == 0
    urun = find_run(root, "uncertain-")
    lines = (urun / "uncertain.tsv").read_text().strip().split("\n")
    assert len(lines) == 40  # the whole band keeps every dialogue

    assert main(["uncertain", "--checkpoint", str(run / "model.ckpt"),
                 "--pool", "corpus.jsonl", "--lo", "0.9", "--hi", "0.1"]) == 2


def test_agreement_command(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    items = [
        {"labels": ["violence", "violence"], "final": "violence"},
        {"labels": ["non-malevolent", "non-malevolent"]},
        {"labels": ["jealousy", "jealousy", "jealousy"]},
        {"labels": ["blame", "arrogance"], "final": "blame"},
    ]
    path = tmp_path / "ann.jsonl"
    path.write_text("\n".join(json.dumps(i) for i in items) + "\n")
    assert main(["agreement", "--annotations", str(path)]) == 0
    run = find_run(tmp_path, "agreement-")
    report = json.loads((run / "agreement.json").read_text())
    assert report["items"] == 4
    assert report["level1"]["cohen_kappa"] == 1.0  # both raters agree at level 1
    assert report["level3"]["cohen_kappa"] < 1.0

    single = tmp_path / "single.jsonl"
    single.write_text(json.dumps({"labels": ["violence"]}) + "\n")
    assert main(["agreement", "--annotations", str(single)]) == 2


def test_matrix_small_grid(workdir):
    root, split_path = workdir
    cfg = {
        "matrix_models": ["text_cnn"],
        "matrix_levels": [1],
        "matrix_context": ["none", "both"],
        "matrix_rephrased": ["off", "on"],
        "epochs": 2, "hidden": 4, "max_len": 16, "seed": 1, "lr": 0.005,
    }
    cfg_path = root / "matrix.json"
    cfg_path.write_text(json.dumps(cfg))
    rc = main(["matrix", "--config", str(cfg_path), "--corpus", "corpus.jsonl",
               "--split", str(split_path), "--out", "runs"])
    assert rc == 0
    run = find_run(root, "matrix-")
    lines = (run / "results.tsv").read_text().strip().split("\n")
    header, rows = lines[0], lines[1:]
    # 2x2 grid (context x rephrased) -> 4 result rows
    assert len(rows) == 4
    assert header.split("\t")[0] == "level"
    cells = [r.split("\t") for r in rows]
    by_key = {(c[2], c[3]): c for c in cells}
    p_col = header.split("\t").index("p_vs_baseline")
    reph_f1_col = header.split("\t").index("reph_test_f1")
    # baseline row has no significance annotation; the others do
    assert by_key[("none", "off")][p_col] == ""
    assert by_key[("both", "off")][p_col] != ""
    assert by_key[("none", "on")][p_col] != ""
    # rephrased-train rows carry the rephrased-test column group
    assert by_key[("none", "on")][reph_f1_col] != ""
    assert by_key[("none", "off")][reph_f1_col] == ""


def test_unknown_config_key_rejected(workdir, tmp_path):
    root, split_path = workdir
    bad = root / "bad.json"
    bad.write_text(json.dumps({"learning": 1}))
    rc = main(["train", "--config", str(bad), "--corpus", "corpus.jsonl",
               "--split", str(split_path)])
    assert rc == 2


def test_matrix_respects_thread_cap(workdir, monkeypatch):
    root, split_path = workdir
    monkeypatch.setenv("MALCLASS_THREADS", "1")
    cfg = {"matrix_models": ["text_cnn"], "matrix_levels": [2],
           "matrix_context": ["none"], "matrix_rephrased": ["off"],
           "epochs": 1, "hidden": 4, "max_len": 12, "seed": 0}
    cfg_path = root / "m1.json"
    cfg_path.write_text(json.dumps(cfg))
    assert main(["matrix", "--config", str(cfg_path), "--corpus", "corpus.jsonl",
                 "--split", str(split_path), "--out", "runs"]) == 0


def test_eval_report_carries_level1_diagnostic(workdir):
    root, split_path = workdir
    assert main(["train", "--corpus", "corpus.jsonl", "--split", str(split_path),
                 "--model", "text_cnn", "--level", "3", "--epochs", "2",
                 "--hidden", "4", "--max-len", "16", "--seed", "4",
                 "--out", "runs"]) == 0
    run = find_run(root, "train-")
    assert main(["eval", "--checkpoint", str(run / "model.ckpt"),
                 "--corpus", "corpus.jsonl", "--split", str(split_path),
                 "--out", "runs"]) == 0
    eval_run = find_run(root, "eval-")
    report = json.loads((eval_run / "report.json").read_text())
    assert "level1_projection" in report["setting"]
    assert 0 <= report["setting"]["level1_projection"]["macro_f1"] <= 100


def test_eval_rephrased_test_variants_share_dialogues(workdir, capsys):
    root, split_path = workdir
    assert main(["train", "--corpus", "corpus.jsonl", "--split", str(split_path),
                 "--model", "text_cnn", "--level", "1", "--epochs", "2",
                 "--hidden", "4", "--max-len", "16",
                 "--rephrased-train", "on", "--seed", "6", "--out", "runs"]) == 0
    run = find_run(root, "train-")
    capsys.readouterr()
    reports = {}
    for flag in ("on", "off"):
        assert main(["eval", "--checkpoint", str(run / "model.ckpt"),
                     "--corpus", "corpus.jsonl", "--split", str(split_path),
                     "--rephrased-test", flag, "--out", "runs"]) == 0
        report_path = capsys.readouterr().out.strip().split("\n")[-1]
        reports[flag] = json.loads((root / report_path).read_text())
    assert reports["on"]["setting"]["test_rephrased"] is True
    assert reports["off"]["setting"]["test_rephrased"] is False
    support_on = sum(v["support"] for v in reports["on"]["per_class"].values())
    support_off = sum(v["support"] for v in reports["off"]["per_class"].values())
    assert support_on >= support_off  # rephrasings only ever add examples
