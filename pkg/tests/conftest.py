import json

import pytest

from malclass.corpus import Corpus, Dialogue, Utterance


def make_dialogue(dlg_id, turns):
    """turns: list of (speaker, text, level3_label[, rephrasings])."""
    utterances = []
    for turn in turns:
        speaker, text, label = turn[:3]
        reph = tuple(turn[3]) if len(turn) > 3 else ()
        utterances.append(Utterance(speaker, text, label, reph))
    return Dialogue(dlg_id, tuple(utterances))


@pytest.fixture
def toy_corpus():
    """Three dialogues, two malevolent, with one rephrased turn."""
    d1 = make_dialogue("d1", [
        ("A", "hello there", "non-malevolent.l3"),
        ("B", "i will kill you", "violence", ["you are dead meat"]),
        ("A", "that is scary", "non-malevolent.l3"),
    ])
    d2 = make_dialogue("d2", [
        ("A", "what is your password", "privacy-invasion"),
        ("B", "not telling", "non-malevolent.l3"),
        ("A", "come on tell me", "dominance"),
        ("B", "no", "non-malevolent.l3"),
    ])
    d3 = make_dialogue("d3", [
        ("A", "nice weather today", "non-malevolent.l3"),
        ("B", "yes lovely", "non-malevolent.l3"),
        ("A", "see you later", "non-malevolent.l3"),
    ])
    return Corpus([d1, d2, d3])


def corpus_to_jsonl(corpus, path, label_style="name"):
    from malclass.taxonomy import load_default

    taxonomy = load_default()
    with open(path, "w", encoding="utf-8") as fh:
        for d in corpus.dialogues:
            doc = {
                "dialogue_id": d.dialogue_id,
                "turns": [
                    {"speaker": u.speaker, "text": u.text,
                     "label": (taxonomy.by_id[u.label_l3].name
                               if label_style == "name" else u.label_l3),
                     "rephrased": list(u.rephrasings)}
                    for u in d.utterances
                ],
            }
            fh.write(json.dumps(doc) + "\n")
    return path
