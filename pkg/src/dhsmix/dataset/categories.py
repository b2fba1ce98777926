"""Evaluation category subgroups for SUN RGB-D style label sets."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

SUNRGBD16_NAMES = (
    "bed",
    "toilet",
    "night stand",
    "bathtub",
    "chair",
    "dresser",
    "sofa",
    "table",
    "desk",
    "bookshelf",
    "sofa chair",
    "kitchen counter",
    "kitchen cabinet",
    "garbage bin",
    "microwave",
    "sink",
)
SUBGROUP_ORDER = ("sunrgbd10", "sunrgbd16", "sunrgbd66", "sunrgbd79")


@dataclass(frozen=True)
class CategorySet:
    name: str
    categories: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "categories", tuple(self.categories))
        if len(set(self.categories)) != len(self.categories):
            dupes = sorted({c for c in self.categories if self.categories.count(c) > 1})
            raise ValueError(f"category set {self.name!r} has duplicate names: {dupes}")

    def __len__(self):
        return len(self.categories)

    def __contains__(self, name):
        return name in self.categories

    def __iter__(self):
        return iter(self.categories)

    def issubset(self, other: "CategorySet") -> bool:
        return set(self.categories) <= set(other.categories)

    def category_ids(self) -> dict[str, int]:
        """1-based ids in list order, as used in emitted annotation documents."""
        return {name: i + 1 for i, name in enumerate(self.categories)}


SUNRGBD16 = CategorySet("sunrgbd16", SUNRGBD16_NAMES)
SUNRGBD10 = CategorySet("sunrgbd10", SUNRGBD16_NAMES[:10])


def builtin_subgroups() -> dict[str, CategorySet]:
    return {"sunrgbd10": SUNRGBD10, "sunrgbd16": SUNRGBD16}


def check_nesting(groups: dict[str, CategorySet]) -> None:
    """Raise unless the configured standard subgroups nest in size order."""
    present = [groups[n] for n in SUBGROUP_ORDER if n in groups]
    for small, large in zip(present, present[1:]):
        if not small.issubset(large):
            missing = sorted(set(small) - set(large))
            raise ValueError(f"{small.name} is not contained in {large.name}; missing {missing}")


def load_subgroups(path=None) -> dict[str, CategorySet]:
    """Built-in SUNRGBD10/16 plus any subgroups listed in a JSON config.

    The config maps a subgroup name to its ordered category list, e.g.
    ``{"sunrgbd66": [...], "sunrgbd79": [...]}``; entries override built-ins.
    """
    groups = builtin_subgroups()
    if path is not None:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise ValueError(f"{path}: expected an object mapping subgroup names to lists")
        for name, cats in raw.items():
            if not isinstance(cats, list) or not all(isinstance(c, str) for c in cats):
                raise ValueError(f"{path}: subgroup {name!r} must be a list of names")
            groups[name.lower()] = CategorySet(name.lower(), cats)
    check_nesting(groups)
    return groups


def largest_subgroup(groups: dict[str, CategorySet]) -> CategorySet:
    return max(groups.values(), key=len)
