"""Item and outfit data model.

Six-part taxonomy, category-to-part classification, outer-upper hybrid
resolution, outfit validity rules, and the NDJSON serialization used by
every other module. All values are immutable after construction; the
operations here are pure functions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence, Union


class OutfitPart(Enum):
    OUTER = "outer"
    UPPER = "upper"
    LOWER = "lower"
    FULL = "full"
    FEET = "feet"
    ACCESSORY = "accessory"


# Fixed slot order used for canonical forms and feature concatenation.
MAIN_PARTS = (
    OutfitPart.OUTER,
    OutfitPart.UPPER,
    OutfitPart.LOWER,
    OutfitPart.FULL,
    OutfitPart.FEET,
)

MAX_ACCESSORIES = 3


class CatalogError(Exception):
    pass


class UnknownCategory(CatalogError):
    """Category token not present in the lexicon."""


class SlotConflict(CatalogError):
    """Two items would occupy the same main-part slot."""


# RGB triple with 0-255 integer channels.
Color = tuple[int, int, int]
# Explicit color list, or a path to a PNG catalog image.
PaletteSource = Union[Sequence[Color], str]


@dataclass(frozen=True)
class LexiconEntry:
    token: str
    part: OutfitPart
    hybrid: bool = False


# Stand-in vocabulary: the mechanism matters, not the exact word list.
# Replaceable via ``CategoryLexicon.from_file``.
_DEFAULT_ENTRIES = [
    # outer layer
    ("coat", OutfitPart.OUTER, False),
    ("jacket", OutfitPart.OUTER, False),
    ("parka", OutfitPart.OUTER, False),
    ("blazer", OutfitPart.OUTER, False),
    ("trench", OutfitPart.OUTER, False),
    ("windbreaker", OutfitPart.OUTER, False),
    ("bomber", OutfitPart.OUTER, False),
    ("raincoat", OutfitPart.OUTER, False),
    ("overcoat", OutfitPart.OUTER, False),
    ("vest", OutfitPart.OUTER, False),
    # outer-upper hybrids: worn as upper under another outer layer
    ("sweater", OutfitPart.OUTER, True),
    ("knitwear", OutfitPart.OUTER, True),
    ("cardigan", OutfitPart.OUTER, True),
    ("pullover", OutfitPart.OUTER, True),
    ("turtleneck", OutfitPart.OUTER, True),
    ("jumper", OutfitPart.OUTER, True),
    ("hoodie", OutfitPart.OUTER, True),
    ("sweatshirt", OutfitPart.OUTER, True),
    # upper body
    ("blouse", OutfitPart.UPPER, False),
    ("shirt", OutfitPart.UPPER, False),
    ("polo", OutfitPart.UPPER, False),
    ("t-shirt", OutfitPart.UPPER, False),
    ("tee", OutfitPart.UPPER, False),
    ("top", OutfitPart.UPPER, False),
    ("tank", OutfitPart.UPPER, False),
    ("camisole", OutfitPart.UPPER, False),
    ("tunic", OutfitPart.UPPER, False),
    ("henley", OutfitPart.UPPER, False),
    # lower body
    ("pants", OutfitPart.LOWER, False),
    ("jeans", OutfitPart.LOWER, False),
    ("skirt", OutfitPart.LOWER, False),
    ("joggers", OutfitPart.LOWER, False),
    ("shorts", OutfitPart.LOWER, False),
    ("leggings", OutfitPart.LOWER, False),
    ("trousers", OutfitPart.LOWER, False),
    ("chinos", OutfitPart.LOWER, False),
    ("culottes", OutfitPart.LOWER, False),
    # full body
    ("dress", OutfitPart.FULL, False),
    ("gown", OutfitPart.FULL, False),
    ("jumpsuit", OutfitPart.FULL, False),
    ("robe", OutfitPart.FULL, False),
    ("romper", OutfitPart.FULL, False),
    ("overalls", OutfitPart.FULL, False),
    ("sundress", OutfitPart.FULL, False),
    ("kaftan", OutfitPart.FULL, False),
    # feet
    ("shoes", OutfitPart.FEET, False),
    ("boots", OutfitPart.FEET, False),
    ("flats", OutfitPart.FEET, False),
    ("sneakers", OutfitPart.FEET, False),
    ("heels", OutfitPart.FEET, False),
    ("sandals", OutfitPart.FEET, False),
    ("loafers", OutfitPart.FEET, False),
    ("pumps", OutfitPart.FEET, False),
    ("mules", OutfitPart.FEET, False),
    ("oxfords", OutfitPart.FEET, False),
    # accessories
    ("bag", OutfitPart.ACCESSORY, False),
    ("glove", OutfitPart.ACCESSORY, False),
    ("necklace", OutfitPart.ACCESSORY, False),
    ("earring", OutfitPart.ACCESSORY, False),
    ("scarf", OutfitPart.ACCESSORY, False),
    ("hat", OutfitPart.ACCESSORY, False),
    ("belt", OutfitPart.ACCESSORY, False),
    ("bracelet", OutfitPart.ACCESSORY, False),
    ("ring", OutfitPart.ACCESSORY, False),
    ("sunglasses", OutfitPart.ACCESSORY, False),
    ("watch", OutfitPart.ACCESSORY, False),
    ("clutch", OutfitPart.ACCESSORY, False),
    ("beanie", OutfitPart.ACCESSORY, False),
    ("tote", OutfitPart.ACCESSORY, False),
    ("backpack", OutfitPart.ACCESSORY, False),
]


class CategoryLexicon:
    """Ordered category vocabulary mapping tokens to outfit parts.

    The entry order fixes the item-type one-hot dimension, so two runs
    over the same lexicon file always produce identical type features.
    """

    def __init__(self, entries: Iterable[LexiconEntry]):
        self.entries: list[LexiconEntry] = list(entries)
        self._by_token: dict[str, int] = {}
        for i, e in enumerate(self.entries):
            if e.token in self._by_token:
                raise ValueError(f"duplicate lexicon token: {e.token!r}")
            if e.hybrid and e.part not in (OutfitPart.OUTER, OutfitPart.UPPER):
                raise ValueError(f"hybrid flag only valid for outer/upper: {e.token!r}")
            self._by_token[e.token] = i

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, token: str) -> bool:
        return token in self._by_token

    def index(self, token: str) -> int:
        if token not in self._by_token:
            raise UnknownCategory(f"unknown category: {token!r}")
        return self._by_token[token]

    def classify(self, token: str) -> tuple[OutfitPart, bool]:
        e = self.entries[self.index(token)]
        return e.part, e.hybrid

    def tokens_for_part(self, part: OutfitPart) -> list[str]:
        return [e.token for e in self.entries if e.part is part]

    @classmethod
    def default(cls) -> "CategoryLexicon":
        return cls(LexiconEntry(t, p, h) for t, p, h in _DEFAULT_ENTRIES)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "CategoryLexicon":
        """Parse UTF-8 lines of ``token,part,hybrid`` (hybrid in {0,1})."""
        entries = []
        for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split(",")
            if len(fields) != 3:
                raise ValueError(f"{path}:{lineno}: expected 'token,part,hybrid'")
            token, part_name, hybrid = (f.strip() for f in fields)
            try:
                part = OutfitPart(part_name)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: unknown part {part_name!r}") from None
            if hybrid not in ("0", "1"):
                raise ValueError(f"{path}:{lineno}: hybrid must be 0 or 1")
            entries.append(LexiconEntry(token.lower(), part, hybrid == "1"))
        return cls(entries)

    def to_file(self, path: Union[str, Path]) -> None:
        lines = [f"{e.token},{e.part.value},{1 if e.hybrid else 0}" for e in self.entries]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def classify_part(category: str, lexicon: CategoryLexicon) -> tuple[OutfitPart, bool]:
    """Map a lowercase category token to its (part, hybrid) lexicon entry.

    Raises UnknownCategory for absent tokens; the caller decides whether
    to drop the item (the data-cleansing path) or fail.
    """
    if not category or category != category.lower():
        raise UnknownCategory(f"category must be a lowercase token: {category!r}")
    return lexicon.classify(category)


@dataclass(frozen=True)
class Item:
    """One clothing article."""

    id: str
    category: str
    part: OutfitPart
    hybrid: bool = False
    name: str = ""
    palette_source: Optional[PaletteSource] = None
    type_index: int = 0
    embedding_key: Optional[str] = None

    def __post_init__(self):
        if self.hybrid and self.part not in (OutfitPart.OUTER, OutfitPart.UPPER):
            raise ValueError(f"item {self.id}: hybrid only valid for outer/upper")

    @classmethod
    def from_category(
        cls,
        item_id: str,
        category: str,
        lexicon: CategoryLexicon,
        name: str = "",
        palette_source: Optional[PaletteSource] = None,
        embedding_key: Optional[str] = None,
    ) -> "Item":
        part, hybrid = classify_part(category, lexicon)
        return cls(
            id=item_id,
            category=category,
            part=part,
            hybrid=hybrid,
            name=name or category,
            palette_source=palette_source,
            type_index=lexicon.index(category),
            embedding_key=embedding_key,
        )


@dataclass
class Outfit:
    """A slotted item set: at most one item per main part, up to 3 accessories."""

    slots: dict[OutfitPart, Item] = field(default_factory=dict)
    accessories: list[Item] = field(default_factory=list)
    label: Optional[bool] = None
    score: Optional[float] = None
    likes: Optional[int] = None

    def items(self) -> list[Item]:
        return [self.slots[p] for p in MAIN_PARTS if p in self.slots] + list(self.accessories)

    def item_ids(self) -> set[str]:
        return {it.id for it in self.items()}

    def signature(self) -> tuple[frozenset, int]:
        """Part signature: occupied main slots plus accessory count."""
        return frozenset(self.slots), len(self.accessories)

    def canonical_key(self) -> tuple:
        """Hashable identity under set semantics; equal for equal item sets."""
        mains = tuple((p.value, self.slots[p].id) for p in MAIN_PARTS if p in self.slots)
        return mains, tuple(sorted(a.id for a in self.accessories))


@dataclass(frozen=True)
class ValidityReport:
    violations: tuple[str, ...] = ()

    @property
    def valid(self) -> bool:
        return not self.violations


def resolve_hybrids(outfit: Outfit) -> Outfit:
    """Re-slot outer-upper hybrid items.

    A hybrid counts as Upper when the outfit has a non-hybrid Outer,
    otherwise as Outer. Idempotent; non-hybrid items are untouched.
    Raises SlotConflict when the target slot is already taken (e.g. two
    hybrids in one outfit).
    """
    hybrids = [(p, it) for p in MAIN_PARTS if (it := outfit.slots.get(p)) and it.hybrid]
    if not hybrids:
        return outfit
    outer = outfit.slots.get(OutfitPart.OUTER)
    has_other_outer = outer is not None and not outer.hybrid
    target = OutfitPart.UPPER if has_other_outer else OutfitPart.OUTER
    new_slots = {p: it for p, it in outfit.slots.items() if not it.hybrid}
    for _, it in hybrids:
        if target in new_slots:
            raise SlotConflict(
                f"resolving hybrid {it.id!r} to {target.value}: slot occupied by "
                f"{new_slots[target].id!r}"
            )
        new_slots[target] = it
    return Outfit(
        slots=new_slots,
        accessories=list(outfit.accessories),
        label=outfit.label,
        score=outfit.score,
        likes=outfit.likes,
    )


def assemble_outfit(
    items: Sequence[Item],
    label: Optional[bool] = None,
    likes: Optional[int] = None,
) -> Outfit:
    """Slot a flat item list, applying the hybrid rule during placement."""
    slots: dict[OutfitPart, Item] = {}
    accessories: list[Item] = []
    hybrids: list[Item] = []
    for it in items:
        if it.part is OutfitPart.ACCESSORY:
            accessories.append(it)
        elif it.hybrid:
            hybrids.append(it)
        else:
            if it.part in slots:
                raise SlotConflict(f"two items for slot {it.part.value}: "
                                   f"{slots[it.part].id!r}, {it.id!r}")
            slots[it.part] = it
    target = OutfitPart.UPPER if OutfitPart.OUTER in slots else OutfitPart.OUTER
    for it in hybrids:
        if target in slots:
            raise SlotConflict(f"hybrid {it.id!r} resolves to occupied slot {target.value}")
        slots[target] = it
    return canonical_form(Outfit(slots=slots, accessories=accessories, label=label, likes=likes))


def validate_outfit(outfit: Outfit) -> ValidityReport:
    """Check the outfit invariants; hybrids must already be resolved.

    Coverage requires (Upper and Lower) or Full; Full together with
    Upper/Lower is permitted here, generation templates are stricter.
    """
    violations: list[str] = []
    for part, it in outfit.slots.items():
        if part is OutfitPart.ACCESSORY:
            violations.append(f"slot_mismatch: accessory slot key holds {it.id!r}")
        elif it.part is not part and not (it.hybrid and part in (OutfitPart.OUTER, OutfitPart.UPPER)):
            violations.append(
                f"slot_mismatch: item {it.id!r} of part {it.part.value} at slot {part.value}"
            )
    for it in outfit.accessories:
        if it.part is not OutfitPart.ACCESSORY:
            violations.append(f"accessory_part: item {it.id!r} of part {it.part.value}")
    if len(outfit.accessories) > MAX_ACCESSORIES:
        violations.append(
            f"accessory_cap: {len(outfit.accessories)} accessories, max {MAX_ACCESSORIES}"
        )
    covered = (
        OutfitPart.UPPER in outfit.slots and OutfitPart.LOWER in outfit.slots
    ) or OutfitPart.FULL in outfit.slots
    if not covered:
        violations.append("coverage: outfit does not cover both upper and lower body")
    ids = [it.id for it in outfit.items()]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        violations.append(f"duplicate_item: {', '.join(dupes)}")
    return ValidityReport(tuple(violations))


def canonical_form(outfit: Outfit) -> Outfit:
    """Normalize for dedup: id-sorted accessories, fixed slot key order."""
    slots = {p: outfit.slots[p] for p in MAIN_PARTS if p in outfit.slots}
    accessories = sorted(outfit.accessories, key=lambda it: it.id)
    return Outfit(
        slots=slots,
        accessories=accessories,
        label=outfit.label,
        score=outfit.score,
        likes=outfit.likes,
    )


# ---------------------------------------------------------------------------
# NDJSON serialization
# ---------------------------------------------------------------------------


def item_to_dict(item: Item) -> dict:
    d: dict = {
        "id": item.id,
        "category": item.category,
        "part": item.part.value,
        "hybrid": item.hybrid,
        "name": item.name,
        "type_index": item.type_index,
    }
    if isinstance(item.palette_source, str):
        d["image"] = item.palette_source
    elif item.palette_source is not None:
        d["colors"] = [list(c) for c in item.palette_source]
    if item.embedding_key is not None:
        d["embedding_key"] = item.embedding_key
    return d


def item_from_dict(d: dict) -> Item:
    palette_source: Optional[PaletteSource] = None
    if "image" in d:
        palette_source = d["image"]
    elif "colors" in d:
        palette_source = [tuple(int(v) for v in c) for c in d["colors"]]
    return Item(
        id=d["id"],
        category=d["category"],
        part=OutfitPart(d["part"]),
        hybrid=bool(d.get("hybrid", False)),
        name=d.get("name", ""),
        palette_source=palette_source,
        type_index=int(d.get("type_index", 0)),
        embedding_key=d.get("embedding_key"),
    )


def outfit_to_dict(outfit: Outfit) -> dict:
    d: dict = {
        "slots": {p.value: outfit.slots[p].id for p in MAIN_PARTS if p in outfit.slots},
        "accessories": [it.id for it in outfit.accessories],
    }
    if outfit.label is not None:
        d["label"] = outfit.label
    if outfit.score is not None:
        d["score"] = outfit.score
    if outfit.likes is not None:
        d["likes"] = outfit.likes
    return d


def outfit_from_dict(d: dict, items: dict[str, Item]) -> Outfit:
    slots = {OutfitPart(p): items[iid] for p, iid in d.get("slots", {}).items()}
    accessories = [items[iid] for iid in d.get("accessories", [])]
    return Outfit(
        slots=slots,
        accessories=accessories,
        label=d.get("label"),
        score=d.get("score"),
        likes=d.get("likes"),
    )


def dumps_ndjson_line(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def write_ndjson(path: Union[str, Path], objs: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for obj in objs:
            f.write(dumps_ndjson_line(obj))


def read_ndjson(path: Union[str, Path]) -> Iterator[dict]:
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                yield json.loads(line)
