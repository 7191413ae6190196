"""Dialogue data model: JSONL ingestion, stratified splits, examples.

JSONL line schema, one dialogue per line::

    {"dialogue_id": str,
     "turns": [{"speaker": "A"|"B", "text": str,
                "label": <level-3 id>, "rephrased": [str, ...]}]}

Split file schema::

    {"train": [ids], "validation": [ids], "test": [ids],
     "seed": int, "ratios": [f, f, f]}
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass

from .errors import ConfigError, LabelError, ParseError, TurnCountError
from .errors import UnknownLabelError, WrongLevelError
from .taxonomy import Taxonomy, load_default

logger = logging.getLogger(__name__)

MIN_TURNS, MAX_TURNS = 3, 10
SPEAKERS = ("A", "B")
PARTS = ("train", "validation", "test")


@dataclass(frozen=True)
class Utterance:
    speaker: str
    text: str
    label_l3: str                      # resolved level-3 category id
    rephrasings: tuple[str, ...] = ()


@dataclass(frozen=True)
class Dialogue:
    dialogue_id: str
    utterances: tuple[Utterance, ...]

    def is_malevolent(self) -> bool:
        """Dialogue-level stratum key: any turn labelled malevolent."""
        return any(u.label_l3 != "non-malevolent.l3" for u in self.utterances)


@dataclass
class CorpusStats:
    dialogues: int
    utterances: int
    malevolent_utterances: int
    rephrased: int
    malevolent_dialogues: int
    per_class: dict[str, int]

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True)


class Corpus:
    def __init__(self, dialogues: list[Dialogue]):
        self.dialogues = list(dialogues)
        self.by_id = {d.dialogue_id: d for d in self.dialogues}
        if len(self.by_id) != len(self.dialogues):
            raise ParseError("duplicate dialogue ids")

    def __len__(self) -> int:
        return len(self.dialogues)

    def stats(self) -> CorpusStats:
        per_class: dict[str, int] = {}
        n_utt = n_mal = n_reph = n_mal_dlg = 0
        for d in self.dialogues:
            if d.is_malevolent():
                n_mal_dlg += 1
            for u in d.utterances:
                n_utt += 1
                n_reph += len(u.rephrasings)
                per_class[u.label_l3] = per_class.get(u.label_l3, 0) + 1
                if u.label_l3 != "non-malevolent.l3":
                    n_mal += 1
        return CorpusStats(len(self.dialogues), n_utt, n_mal, n_reph, n_mal_dlg, per_class)


def _parse_turn(obj, line_no: int, taxonomy: Taxonomy) -> Utterance:
    if not isinstance(obj, dict):
        raise ParseError("turn is not an object", line_no)
    speaker = obj.get("speaker")
    if speaker not in SPEAKERS:
        raise ParseError(f"speaker must be one of {SPEAKERS}, got {speaker!r}", line_no)
    text = obj.get("text")
    if not isinstance(text, str) or not text.strip():
        raise ParseError("turn text must be a non-empty string", line_no)
    label = obj.get("label")
    if not isinstance(label, str):
        raise ParseError("turn label must be a string", line_no)
    try:
        cat = taxonomy.validate(label, level=3)
    except (UnknownLabelError, WrongLevelError) as exc:
        raise LabelError(f"line {line_no}: {exc}") from exc
    rephrased = obj.get("rephrased", [])
    if not isinstance(rephrased, list) or any(
        not isinstance(r, str) or not r.strip() for r in rephrased
    ):
        raise ParseError("rephrased must be a list of non-empty strings", line_no)
    return Utterance(speaker, text, cat.id, tuple(rephrased))


def ingest(path, taxonomy: Taxonomy | None = None, lenient: bool = False) -> Corpus:
    """Read and validate a JSONL corpus file.

    Dialogues outside the 3..10 turn range raise TurnCountError unless
    `lenient`, in which case they are kept with a warning.
    """
    taxonomy = taxonomy or load_default()
    dialogues: list[Dialogue] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", line_no) from exc
            if not isinstance(obj, dict) or "dialogue_id" not in obj or "turns" not in obj:
                raise ParseError("expected object with dialogue_id and turns", line_no)
            turns = obj["turns"]
            if not isinstance(turns, list):
                raise ParseError("turns must be a list", line_no)
            if not MIN_TURNS <= len(turns) <= MAX_TURNS:
                msg = (f"dialogue {obj['dialogue_id']!r} has {len(turns)} turns "
                       f"(expected {MIN_TURNS}..{MAX_TURNS})")
                if not lenient:
                    raise TurnCountError(msg + "; rerun with lenient mode to keep it")
                logger.warning("%s; kept (lenient)", msg)
            utterances = tuple(_parse_turn(t, line_no, taxonomy) for t in turns)
            dialogues.append(Dialogue(str(obj["dialogue_id"]), utterances))
    if not dialogues:
        raise ParseError("no dialogues")
    corpus = Corpus(dialogues)
    st = corpus.stats()
    logger.info(
        "ingested %d dialogues, %d utterances (%d malevolent), %d rephrasings",
        st.dialogues, st.utterances, st.malevolent_utterances, st.rephrased,
    )
    return corpus


# --- splitting ---

@dataclass
class DataSplit:
    train: list[str]
    validation: list[str]
    test: list[str]
    seed: int
    ratios: tuple[float, float, float]

    def part(self, name: str) -> list[str]:
        if name not in PARTS:
            raise ConfigError(f"unknown split part {name!r}")
        return getattr(self, name)

    def save(self, path):
        doc = {
            "train": self.train, "validation": self.validation, "test": self.test,
            "seed": self.seed, "ratios": list(self.ratios),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "DataSplit":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        return cls(doc["train"], doc["validation"], doc["test"],
                   doc["seed"], tuple(doc["ratios"]))


def _largest_remainder(n: int, ratios) -> list[int]:
    """Integer quotas for `n` items; deviates from exact proportion by <= 1."""
    exact = [n * r for r in ratios]
    counts = [int(e) for e in exact]
    remainders = sorted(
        range(len(ratios)), key=lambda i: (-(exact[i] - counts[i]), i)
    )
    for i in remainders[: n - sum(counts)]:
        counts[i] += 1
    return counts


def stratified_split(corpus: Corpus, ratios=(0.7, 0.1, 0.2), seed: int = 0) -> DataSplit:
    """Partition dialogues into train/validation/test, stratified on the
    dialogue-level binary label, with largest-remainder rounding.

    Deterministic for a given (corpus, ratios, seed). Ids are shuffled
    within each stratum after sorting, so line order in the source file
    does not matter.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must sum to 1.0, got {sum(ratios)}")
    strata: dict[bool, list[str]] = {False: [], True: []}
    for d in corpus.dialogues:
        strata[d.is_malevolent()].append(d.dialogue_id)
    rng = random.Random(seed)
    parts: dict[str, list[str]] = {p: [] for p in PARTS}
    for key in sorted(strata):
        ids = sorted(strata[key])
        if not ids:
            continue
        if len(ids) < len(PARTS):
            logger.warning(
                "stratum %s has only %d dialogue(s); parts cannot all be served",
                "malevolent" if key else "non-malevolent", len(ids),
            )
        rng.shuffle(ids)
        counts = _largest_remainder(len(ids), ratios)
        offset = 0
        for part, count in zip(PARTS, counts):
            parts[part].extend(ids[offset:offset + count])
            offset += count
    return DataSplit(
        sorted(parts["train"]), sorted(parts["validation"]), sorted(parts["test"]),
        seed, tuple(ratios),
    )


# --- examples ---

CONTEXT_SOURCES = ("both", "same_user", "other_user")


@dataclass(frozen=True)
class SettingSpec:
    """One cell of the experimental input grid."""

    level: int = 1
    use_context: bool = False
    use_rephrased_train: bool = False
    test_rephrased: bool = False
    context_source: str = "both"

    def __post_init__(self):
        if self.level not in (1, 2, 3):
            raise ConfigError(f"level must be 1, 2 or 3, got {self.level}")
        if self.context_source not in CONTEXT_SOURCES:
            raise ConfigError(f"context_source must be one of {CONTEXT_SOURCES}")
        if self.context_source != "both" and not self.use_context:
            raise ConfigError("context_source other than 'both' requires use_context")

    def describe(self) -> dict:
        return {
            "level": self.level,
            "use_context": self.use_context,
            "use_rephrased_train": self.use_rephrased_train,
            "test_rephrased": self.test_rephrased,
            "context_source": self.context_source,
        }


@dataclass(frozen=True)
class Example:
    response_text: str
    context: tuple[tuple[str, str], ...]   # (speaker, text), oldest first
    label: str                             # category id at the setting's level
    dialogue_id: str
    turn_index: int


def context_window(dialogue: Dialogue, turn_index: int, k: int = 3,
                   context_source: str = "both") -> list[tuple[str, str]]:
    """Up to `k` utterances strictly before `turn_index`, most recent last.

    same_user keeps only turns by the responding speaker, other_user only
    turns by the other speaker; filtering happens before the window clamp.
    """
    if not 0 <= turn_index < len(dialogue.utterances):
        raise IndexError(f"turn_index {turn_index} out of range")
    speaker = dialogue.utterances[turn_index].speaker
    prior = dialogue.utterances[:turn_index]
    if context_source == "same_user":
        prior = [u for u in prior if u.speaker == speaker]
    elif context_source == "other_user":
        prior = [u for u in prior if u.speaker != speaker]
    elif context_source != "both":
        raise ConfigError(f"unknown context_source {context_source!r}")
    return [(u.speaker, u.text) for u in prior[-k:]]


def build_examples(corpus: Corpus, split_ids: list[str], part: str,
                   setting: SettingSpec, taxonomy: Taxonomy | None = None,
                   context_turns: int = 3) -> list[Example]:
    """One example per utterance of the selected dialogues, plus one per
    rephrasing when the setting includes rephrased data for `part`.

    Rephrased examples reuse the original surrounding utterances as context.
    """
    taxonomy = taxonomy or load_default()
    if part not in PARTS:
        raise ConfigError(f"unknown split part {part!r}")
    if part == "test":
        expand = setting.test_rephrased
    else:
        expand = setting.use_rephrased_train
    examples: list[Example] = []
    for dlg_id in split_ids:
        dialogue = corpus.by_id[dlg_id]
        for idx, utt in enumerate(dialogue.utterances):
            if setting.use_context:
                ctx = tuple(context_window(dialogue, idx, context_turns,
                                           setting.context_source))
            else:
                ctx = ()
            label = taxonomy.project(utt.label_l3, setting.level).id
            examples.append(Example(utt.text, ctx, label, dlg_id, idx))
            if expand:
                for variant in utt.rephrasings:
                    examples.append(Example(variant, ctx, label, dlg_id, idx))
    return examples
