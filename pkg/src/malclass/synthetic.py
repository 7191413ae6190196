"""Synthetic corpora for tests, demos and split-property checks.

`make_labeled_corpus` produces dialogues whose turn texts carry a strong
lexical signature per class, so classifiers can actually learn them.
`make_mdrdc_shaped_corpus` reproduces the published dataset statistics
(6,000 dialogues, 3,661 with a malevolent turn, 31,380 utterances, 10,299
malevolent turns, 2,870 rephrasings) for pipeline checks that need the
real release's shape without its content.
"""

from __future__ import annotations

import random

from .corpus import Corpus, Dialogue, Utterance
from .taxonomy import load_default

MALEVOLENT_LEAVES = [
    c.id for c in load_default().level_classes(3) if c.id != "non-malevolent.l3"
]
NON_MALEVOLENT = "non-malevolent.l3"


def _class_token(label: str, k: int) -> str:
    stem = label.replace(".l3", "").replace("-", "")
    return f"{stem}w{k}"


def _make_text(rng: random.Random, label: str, n_tokens=(3, 8), pool=6) -> str:
    words = [_class_token(label, rng.randrange(pool))
             for _ in range(rng.randint(*n_tokens))]
    if rng.random() < 0.5:
        words.append(f"filler{rng.randrange(12)}")
    return " ".join(words)


def _speakers(rng: random.Random, n: int) -> list[str]:
    out = ["A"]
    for _ in range(n - 1):
        out.append(rng.choice("AB") if rng.random() < 0.2 else ("B" if out[-1] == "A" else "A"))
    return out


def make_labeled_corpus(n_dialogues: int, seed: int = 0,
                        labels: list[str] | None = None,
                        malevolent_fraction: float = 0.6,
                        rephrase_prob: float = 0.0,
                        turns=(3, 10)) -> Corpus:
    """Random dialogues with lexically separable classes.

    `labels` restricts the malevolent leaf labels in play (default: all 17).
    """
    rng = random.Random(seed)
    leaves = labels if labels is not None else MALEVOLENT_LEAVES
    dialogues = []
    for d in range(n_dialogues):
        n = rng.randint(*turns)
        malevolent_dialogue = rng.random() < malevolent_fraction
        utterances = []
        for t, speaker in enumerate(_speakers(rng, n)):
            if malevolent_dialogue and rng.random() < 0.5:
                label = rng.choice(leaves)
            else:
                label = NON_MALEVOLENT
            rephrased = ()
            if rephrase_prob and rng.random() < rephrase_prob:
                rephrased = (_make_text(rng, label),)
            utterances.append(Utterance(speaker, _make_text(rng, label), label, rephrased))
        dialogues.append(Dialogue(f"dlg-{d:05d}", tuple(utterances)))
    return Corpus(dialogues)


def _spread(rng: random.Random, total: int, n: int, low: int, high: int) -> list[int]:
    """n integers in [low, high] summing exactly to `total`."""
    assert n * low <= total <= n * high
    counts = [rng.randint(low, high) for _ in range(n)]
    diff = total - sum(counts)
    step = 1 if diff > 0 else -1
    while diff != 0:
        i = rng.randrange(n)
        if low <= counts[i] + step <= high:
            counts[i] += step
            diff -= step
    return counts


def make_mdrdc_shaped_corpus(seed: int = 0) -> Corpus:
    """A 6,000-dialogue corpus matching the released dataset's statistics."""
    rng = random.Random(seed)
    n_dialogues, n_malevolent_dlg = 6000, 3661
    n_utterances, n_malevolent_utt = 31380, 10299
    n_reph_mal, n_reph_non = 2865, 5

    turn_counts = _spread(rng, n_utterances, n_dialogues, 3, 10)
    # first n_malevolent_dlg dialogues are the malevolent stratum
    mal_capacity = sum(turn_counts[:n_malevolent_dlg])
    mal_per_dlg = _spread(rng, n_malevolent_utt, n_malevolent_dlg, 1,
                          min(10, mal_capacity))
    # clamp per-dialogue malevolent turns to the dialogue length
    for i in range(n_malevolent_dlg):
        while mal_per_dlg[i] > turn_counts[i]:
            j = rng.randrange(n_malevolent_dlg)
            if mal_per_dlg[j] < turn_counts[j]:
                mal_per_dlg[i] -= 1
                mal_per_dlg[j] += 1

    dialogues = []
    mal_slots: list[tuple[int, int]] = []   # (dialogue, turn) of malevolent turns
    non_slots: list[tuple[int, int]] = []
    for d in range(n_dialogues):
        n = turn_counts[d]
        if d < n_malevolent_dlg:
            mal_turns = set(rng.sample(range(n), mal_per_dlg[d]))
        else:
            mal_turns = set()
        utterances = []
        for t, speaker in enumerate(_speakers(rng, n)):
            if t in mal_turns:
                label = rng.choice(MALEVOLENT_LEAVES)
                mal_slots.append((d, t))
            else:
                label = NON_MALEVOLENT
                non_slots.append((d, t))
            utterances.append(Utterance(speaker, _make_text(rng, label), label))
        dialogues.append(Dialogue(f"dlg-{d:05d}", tuple(utterances)))

    # attach rephrasings
    for d, t in rng.sample(mal_slots, n_reph_mal) + rng.sample(non_slots, n_reph_non):
        old = dialogues[d].utterances[t]
        utts = list(dialogues[d].utterances)
        utts[t] = Utterance(old.speaker, old.text, old.label_l3,
                            (_make_text(rng, old.label_l3),))
        dialogues[d] = Dialogue(dialogues[d].dialogue_id, tuple(utts))
    return Corpus(dialogues)


def write_jsonl(corpus: Corpus, path) -> None:
    import json

    with open(path, "w", encoding="utf-8") as fh:
        for d in corpus.dialogues:
            doc = {
                "dialogue_id": d.dialogue_id,
                "turns": [
                    {"speaker": u.speaker, "text": u.text,
                     "label": load_default().by_id[u.label_l3].name,
                     "rephrased": list(u.rephrasings)}
                    for u in d.utterances
                ],
            }
            fh.write(json.dumps(doc) + "\n")
