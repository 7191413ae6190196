"""The three-level malevolence taxonomy: 2 / 11 / 18 classes per level.

Level 1 splits responses into malevolent vs non-malevolent.  The malevolent
subtree has ten 2nd-level groups and seventeen 3rd-level leaves; the
non-malevolent class is mirrored at every level so that each level is a
total partition of the label space.

Five groups (unconcernedness, anger, obscenity, jealousy, self-hurt) carry
the same name at levels 2 and 3.  Their node ids are suffixed (``anger.l2``,
``anger.l3``) to keep ids unique; the bare name resolves by level context.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

from .errors import LevelAboveError, UnknownLabelError, WrongLevelError

__all__ = ["Category", "Taxonomy", "load_default"]

# (id, display_name, level, parent_id); row order fixes class index order.
_TABLE = (
    ("non-malevolent", "Non-malevolent", 1, None),
    ("malevolent", "Malevolent", 1, None),
    ("non-malevolent.l2", "Non-malevolent", 2, "non-malevolent"),
    ("unconcernedness.l2", "Unconcernedness", 2, "malevolent"),
    ("hate", "Hate", 2, "malevolent"),
    ("insult", "Insult", 2, "malevolent"),
    ("anger.l2", "Anger", 2, "malevolent"),
    ("threat", "Threat", 2, "malevolent"),
    ("stereotype", "Stereotype", 2, "malevolent"),
    ("obscenity.l2", "Obscenity", 2, "malevolent"),
    ("jealousy.l2", "Jealousy", 2, "malevolent"),
    ("self-hurt.l2", "Self-hurt", 2, "malevolent"),
    ("other-immorality", "Other immorality", 2, "malevolent"),
    ("non-malevolent.l3", "Non-malevolent", 3, "non-malevolent.l2"),
    ("unconcernedness.l3", "Unconcernedness", 3, "unconcernedness.l2"),
    ("detachment", "Detachment", 3, "hate"),
    ("disgust", "Disgust", 3, "hate"),
    ("blame", "Blame", 3, "insult"),
    ("arrogance", "Arrogance", 3, "insult"),
    ("anger.l3", "Anger", 3, "anger.l2"),
    ("dominance", "Dominance", 3, "threat"),
    ("violence", "Violence", 3, "threat"),
    ("negative-intergroup-attitude", "Negative intergroup attitude", 3, "stereotype"),
    ("phobia", "Phobia", 3, "stereotype"),
    ("anti-authority", "Anti-authority", 3, "stereotype"),
    ("obscenity.l3", "Obscenity", 3, "obscenity.l2"),
    ("jealousy.l3", "Jealousy", 3, "jealousy.l2"),
    ("self-hurt.l3", "Self-hurt", 3, "self-hurt.l2"),
    ("deceit", "Deceit", 3, "other-immorality"),
    ("privacy-invasion", "Privacy invasion", 3, "other-immorality"),
    ("immoral-illegal", "Immoral & illegal", 3, "other-immorality"),
)

_EXPECTED_PER_LEVEL = {1: 2, 2: 11, 3: 18}


@dataclass(frozen=True)
class Category:
    id: str
    display_name: str
    level: int
    parent_id: str | None

    @property
    def name(self) -> str:
        """External label string: the id without the level suffix."""
        if self.id.endswith((".l2", ".l3")):
            return self.id[:-3]
        return self.id


class Taxonomy:
    """Immutable, validated category tree with level projection."""

    def __init__(self, categories: tuple[Category, ...]):
        self.categories = categories
        self.by_id = {c.id: c for c in categories}
        self._by_name: dict[str, list[Category]] = {}
        for c in categories:
            self._by_name.setdefault(c.name, []).append(c)
        self._children: dict[str, list[Category]] = {c.id: [] for c in categories}
        for c in categories:
            if c.parent_id is not None:
                self._children[c.parent_id].append(c)
        self._check()

    def _check(self):
        if len(self.by_id) != len(self.categories):
            raise ValueError("duplicate category ids")
        for level, want in _EXPECTED_PER_LEVEL.items():
            got = len(self.level_classes(level))
            if got != want:
                raise ValueError(f"level {level} has {got} classes, expected {want}")
        for c in self.categories:
            if c.level == 1:
                if c.parent_id is not None:
                    raise ValueError(f"level-1 node {c.id} has a parent")
                continue
            parent = self.by_id.get(c.parent_id or "")
            if parent is None or parent.level != c.level - 1:
                raise ValueError(f"{c.id}: parent must exist one level up")
        if set(c.id for c in self.level_classes(1)) != {"malevolent", "non-malevolent"}:
            raise ValueError("level-1 ids must be malevolent / non-malevolent")
        for leaf in self.level_classes(3):
            if self.project(leaf.id, 1).level != 1:
                raise ValueError(f"{leaf.id} has no level-1 ancestor")

    # --- lookups ---

    def level_classes(self, level: int) -> list[Category]:
        """Categories at one level, in canonical (class index) order."""
        return [c for c in self.categories if c.level == level]

    def children(self, category_id: str) -> list[Category]:
        cat = self.resolve(category_id)
        return list(self._children[cat.id])

    def resolve(self, label: str, level: int | None = None) -> Category:
        """Map a label string to a node.

        With a level, an exact id or bare name at that level wins; without
        one, exact ids win and a bare shared name resolves to its deepest
        node.
        """
        cat = self.by_id.get(label)
        matches = self._by_name.get(label, [])
        if level is None:
            if cat is not None:
                return cat
            if not matches:
                raise UnknownLabelError(f"unknown category {label!r}")
            return max(matches, key=lambda c: c.level)
        if cat is not None and cat.level == level:
            return cat
        for c in matches:
            if c.level == level:
                return c
        if cat is not None or matches:
            raise WrongLevelError(f"{label!r} does not exist at level {level}")
        raise UnknownLabelError(f"unknown category {label!r}")

    # --- operations ---

    def project(self, label_id: str, target_level: int) -> Category:
        """Ancestor (or self) of `label_id` at `target_level`."""
        cat = self.resolve(label_id)
        if target_level > cat.level:
            raise LevelAboveError(
                f"cannot project {label_id!r} (level {cat.level}) up to level {target_level}"
            )
        while cat.level > target_level:
            cat = self.by_id[cat.parent_id]  # validated: parents always exist
        return cat

    def validate(self, label_id: str, level: int) -> Category:
        """Return the category if the label exists at `level`, else raise."""
        return self.resolve(label_id, level=level)

    # --- export ---

    def to_json(self) -> str:
        rows = [
            {"id": c.id, "display_name": c.display_name, "level": c.level, "parent_id": c.parent_id}
            for c in self.categories
        ]
        return json.dumps(rows, indent=2, sort_keys=False)


@lru_cache(maxsize=1)
def load_default() -> Taxonomy:
    """The built-in taxonomy (validated at construction)."""
    return Taxonomy(tuple(Category(*row) for row in _TABLE))
