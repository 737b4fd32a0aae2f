"""Outfit generation from an item pool.

Four methods build candidate outfits under the four main-part templates
(all implicitly adding footwear and up to three optional accessories):
ordered beam search over a fixed slot sequence, orderless beam search
where the whole pool is a candidate at every step, partial beam search
(exhaustive main-part bases, then beam-searched accessories), and a
random baseline. Partial states are scored by the grader with missing
slots zero-padded; a null item lets the search decline an accessory
step. Results are deduplicated by canonical form and ranked by score,
ties broken lexicographically on item ids for determinism.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .catalog import (
    MAIN_PARTS,
    MAX_ACCESSORIES,
    Item,
    Outfit,
    OutfitPart,
    canonical_form,
)
from .features import N_SLOTS, FeatureExtractor
from .grader import MLPModel, positive_probabilities

# The four main-part templates; every template also requires footwear.
OUTFIT_CONFIGURATIONS: tuple[tuple[OutfitPart, ...], ...] = (
    (OutfitPart.OUTER, OutfitPart.UPPER, OutfitPart.LOWER),
    (OutfitPart.UPPER, OutfitPart.LOWER),
    (OutfitPart.OUTER, OutfitPart.FULL),
    (OutfitPart.FULL,),
)

DEFAULT_BEAM_WIDTH = 3
DEFAULT_TOP_K = 10
DEFAULT_BASE_KEEP = 10
EXPLOSION_CAP = 10_000_000
EXHAUSTIVE_CAP = 1_000_000
BASELINE_ATTEMPTS = 100

METHOD_NAMES = ("ordered_bs", "orderless_bs", "partial_bs", "baseline")


class RecommenderError(Exception):
    pass


class ExplosionGuard(RecommenderError):
    """Phase-1 enumeration of partial beam search would be too large."""


class PoolTooLarge(RecommenderError):
    """Exhaustive enumeration over this pool is not tractable."""


@dataclass
class RecommendRequest:
    pool: list[str]
    method: str = "partial_bs"
    beam_width: int = DEFAULT_BEAM_WIDTH
    top_k: int = DEFAULT_TOP_K
    seed: int = 0

    def __post_init__(self):
        if self.beam_width < 1 or self.top_k < 1:
            raise ValueError("beam_width and top_k must be >= 1")
        if self.method not in METHOD_NAMES:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHOD_NAMES}")


@dataclass
class RecommendedOutfit:
    rank: int
    score: float
    configuration: int  # 1-based template index
    outfit: Outfit

    def to_dict(self) -> dict:
        return {
            "rank": self.rank,
            "score": self.score,
            "configuration": self.configuration,
            "slots": {p.value: self.outfit.slots[p].id for p in MAIN_PARTS if p in self.outfit.slots},
            "accessories": [it.id for it in self.outfit.accessories],
        }


def _part_pools(pool: Sequence[Item]) -> dict[OutfitPart, list[Item]]:
    pools: dict[OutfitPart, list[Item]] = {p: [] for p in OutfitPart}
    for it in sorted(pool, key=lambda x: x.id):
        pools[it.part].append(it)
    return pools


def applicable_configurations(part: OutfitPart) -> list[int]:
    """Template indices an item of this part can appear in (0-based).
    Footwear and accessories fit every template."""
    if part in (OutfitPart.FEET, OutfitPart.ACCESSORY):
        return list(range(len(OUTFIT_CONFIGURATIONS)))
    return [i for i, tpl in enumerate(OUTFIT_CONFIGURATIONS) if part in tpl]


class OutfitScorer:
    """Grader scoring of (partial) outfits, cached by item set.

    Each distinct item set is scored exactly once through a single-row
    forward pass, so a given outfit receives a bit-identical score no
    matter which method or batch layout encounters it (BLAS results can
    differ across batch shapes at the last ulp, which would otherwise
    flip near-ties between methods).
    """

    def __init__(self, model: MLPModel, extractor: FeatureExtractor):
        self.model = model
        self.extractor = extractor
        self.dim = extractor.dim
        self._cache: dict[tuple, float] = {}

    def feature(self, item: Optional[Item]) -> np.ndarray:
        if item is None:
            return np.zeros(self.dim)
        return self.extractor.extract(item)

    def score_states(self, states: Sequence["BeamState"]) -> None:
        for s in states:
            key = s.item_key()
            p = self._cache.get(key)
            if p is None:
                p = float(positive_probabilities(self.model, s.rep[None, :])[0])
                self._cache[key] = p
            s.score = p


@dataclass
class BeamState:
    """Partial outfit under one configuration, with its zero-padded score."""

    config_index: int
    slots: dict[OutfitPart, Item] = field(default_factory=dict)
    accessories: tuple[Item, ...] = ()
    rep: np.ndarray = None  # type: ignore[assignment]
    score: float = 0.0

    def ids(self) -> set[str]:
        return {it.id for it in self.slots.values()} | {it.id for it in self.accessories}

    def item_key(self) -> tuple:
        mains = tuple((p.value, self.slots[p].id) for p in MAIN_PARTS if p in self.slots)
        return mains, tuple(sorted(it.id for it in self.accessories))

    def key(self) -> tuple:
        return (self.config_index, self.item_key())

    def tie_key(self) -> tuple:
        """Lexicographic canonical item-id tuple for deterministic ordering."""
        return self.item_key()

    def template_complete(self) -> bool:
        tpl = OUTFIT_CONFIGURATIONS[self.config_index]
        return all(p in self.slots for p in tpl) and OutfitPart.FEET in self.slots

    def to_outfit(self) -> Outfit:
        return canonical_form(Outfit(slots=dict(self.slots), accessories=list(self.accessories)))


def _empty_state(config_index: int, scorer: OutfitScorer) -> BeamState:
    return BeamState(config_index=config_index, rep=np.zeros(N_SLOTS * scorer.dim))


def _with_item(state: BeamState, item: Optional[Item], scorer: OutfitScorer) -> BeamState:
    """Extend by one item (None = null extension, a declined accessory)."""
    if item is None:
        return BeamState(
            config_index=state.config_index,
            slots=state.slots,
            accessories=state.accessories,
            rep=state.rep,
        )
    d = scorer.dim
    rep = state.rep.copy()
    if item.part is OutfitPart.ACCESSORY:
        accessories = tuple(sorted(state.accessories + (item,), key=lambda it: it.id))
        for i in range(MAX_ACCESSORIES):
            block = (len(MAIN_PARTS) + i) * d
            vec = scorer.feature(accessories[i] if i < len(accessories) else None)
            rep[block : block + d] = vec
        return BeamState(state.config_index, dict(state.slots), accessories, rep)
    slot_index = MAIN_PARTS.index(item.part)
    rep[slot_index * d : (slot_index + 1) * d] = scorer.feature(item)
    slots = dict(state.slots)
    slots[item.part] = item
    return BeamState(state.config_index, slots, state.accessories, rep)


def _prune(candidates: list[BeamState], width: int, scorer: OutfitScorer) -> list[BeamState]:
    """Dedup identical partials, score, keep the ``width`` best."""
    unique: dict[tuple, BeamState] = {}
    for c in candidates:
        unique.setdefault(c.key(), c)
    states = list(unique.values())
    scorer.score_states(states)
    states.sort(key=lambda s: (-s.score, s.tie_key()))
    return states[:width]


def _collect(
    finals: dict[tuple, BeamState], states: Sequence[BeamState]
) -> None:
    for s in states:
        finals.setdefault(s.item_key(), s)


def _ranked(finals: dict[tuple, BeamState], top_k: int) -> list[RecommendedOutfit]:
    states = sorted(finals.values(), key=lambda s: (-s.score, s.tie_key()))
    return [
        RecommendedOutfit(rank=i + 1, score=s.score, configuration=s.config_index + 1,
                          outfit=s.to_outfit())
        for i, s in enumerate(states[:top_k])
    ]


def ordered_beam_search(
    pool: Sequence[Item],
    model: MLPModel,
    extractor: FeatureExtractor,
    width: int = DEFAULT_BEAM_WIDTH,
    top_k: int = DEFAULT_TOP_K,
) -> list[RecommendedOutfit]:
    """Slot-sequenced beam search started from every pool item.

    Each applicable configuration fixes the step order (remaining main
    parts, footwear, then three accessory steps offering the accessory
    pool plus the null item); at each step only items of the step's part
    extend the beam and the ``width`` best zero-padded partials survive.
    """
    scorer = OutfitScorer(model, extractor)
    pools = _part_pools(pool)
    finals: dict[tuple, BeamState] = {}
    for start in sorted(pool, key=lambda it: it.id):
        for cfg in applicable_configurations(start.part):
            template = OUTFIT_CONFIGURATIONS[cfg]
            steps: list[OutfitPart] = [p for p in MAIN_PARTS if p in template or p is OutfitPart.FEET]
            acc_steps = MAX_ACCESSORIES
            if start.part is OutfitPart.ACCESSORY:
                acc_steps -= 1
            else:
                steps.remove(start.part)
            init = _with_item(_empty_state(cfg, scorer), start, scorer)
            scorer.score_states([init])
            beam = [init]
            for part in steps:
                candidates = [
                    _with_item(s, it, scorer)
                    for s in beam
                    for it in pools[part]
                    if it.id not in s.ids()
                ]
                if not candidates:
                    beam = []  # no items for this part: skip this start/configuration
                    break
                beam = _prune(candidates, width, scorer)
            for _ in range(acc_steps):
                if not beam:
                    break
                candidates = [
                    _with_item(s, it, scorer)
                    for s in beam
                    for it in pools[OutfitPart.ACCESSORY] + [None]
                    if it is None or it.id not in s.ids()
                ]
                beam = _prune(candidates, width, scorer)
            _collect(finals, beam)
    return _ranked(finals, top_k)


def orderless_beam_search(
    pool: Sequence[Item],
    model: MLPModel,
    extractor: FeatureExtractor,
    width: int = DEFAULT_BEAM_WIDTH,
    top_k: int = DEFAULT_TOP_K,
) -> list[RecommendedOutfit]:
    """Beam search where every pool item is a candidate at every step.

    An extension is legal only while its slot is open under the state's
    configuration; a state stops as soon as its template plus footwear
    is filled, so accessories only enter before completion. States that
    never complete within the step budget are dropped.
    """
    scorer = OutfitScorer(model, extractor)
    sorted_pool = sorted(pool, key=lambda it: it.id)
    finals: dict[tuple, BeamState] = {}
    for start in sorted_pool:
        for cfg in applicable_configurations(start.part):
            template = OUTFIT_CONFIGURATIONS[cfg]
            init = _with_item(_empty_state(cfg, scorer), start, scorer)
            scorer.score_states([init])
            beam = [init]
            max_steps = len(template) + 1 + MAX_ACCESSORIES - 1  # start consumed one step
            for _ in range(max_steps):
                done = [s for s in beam if s.template_complete()]
                _collect(finals, done)
                live = [s for s in beam if not s.template_complete()]
                if not live:
                    beam = []
                    break
                candidates = []
                for s in live:
                    candidates.append(_with_item(s, None, scorer))
                    for it in sorted_pool:
                        if it.id in s.ids():
                            continue
                        if it.part is OutfitPart.ACCESSORY:
                            if len(s.accessories) < MAX_ACCESSORIES:
                                candidates.append(_with_item(s, it, scorer))
                        elif it.part is OutfitPart.FEET or it.part in template:
                            if it.part not in s.slots:
                                candidates.append(_with_item(s, it, scorer))
                beam = _prune(candidates, width, scorer)
            _collect(finals, [s for s in beam if s.template_complete()])
    return _ranked(finals, top_k)


def partial_beam_search(
    pool: Sequence[Item],
    model: MLPModel,
    extractor: FeatureExtractor,
    width: int = DEFAULT_BEAM_WIDTH,
    top_k: int = DEFAULT_TOP_K,
    base_keep: int = DEFAULT_BASE_KEEP,
    explosion_cap: int = EXPLOSION_CAP,
) -> list[RecommendedOutfit]:
    """Exhaustive main-part bases, then beam-searched accessories.

    Phase 1 enumerates every main-part+footwear combination per
    configuration and keeps the ``base_keep`` best complete bases per
    (configuration, contained item). Phase 2 runs a ``width``-wide beam
    of three accessory steps from each kept base.
    """
    scorer = OutfitScorer(model, extractor)
    pools = _part_pools(pool)

    total = 0
    per_config: list[tuple[int, list[list[Item]]]] = []
    for cfg, template in enumerate(OUTFIT_CONFIGURATIONS):
        lists = [pools[p] for p in template] + [pools[OutfitPart.FEET]]
        if any(not lst for lst in lists):
            continue  # a required part has no items: configuration skipped
        count = 1
        for lst in lists:
            count *= len(lst)
        total += count
        per_config.append((cfg, lists))
    if total > explosion_cap:
        raise ExplosionGuard(
            f"{total} main-part combinations exceed the cap of {explosion_cap}"
        )

    bases: list[BeamState] = []
    for cfg, lists in per_config:
        states = []
        for combo in itertools.product(*lists):
            state = _empty_state(cfg, scorer)
            for it in combo:
                state = _with_item(state, it, scorer)
            states.append(state)
        scorer.score_states(states)
        states.sort(key=lambda s: (-s.score, s.tie_key()))
        kept_per_item: dict[str, int] = {}
        for s in states:
            keep = False
            for iid in s.ids():
                if kept_per_item.get(iid, 0) < base_keep:
                    kept_per_item[iid] = kept_per_item.get(iid, 0) + 1
                    keep = True
            if keep:
                bases.append(s)

    finals: dict[tuple, BeamState] = {}
    for base in sorted(bases, key=lambda s: (s.config_index, s.tie_key())):
        beam = [base]
        for _ in range(MAX_ACCESSORIES):
            candidates = [
                _with_item(s, it, scorer)
                for s in beam
                for it in pools[OutfitPart.ACCESSORY] + [None]
                if it is None or it.id not in s.ids()
            ]
            beam = _prune(candidates, width, scorer)
        _collect(finals, beam)
    return _ranked(finals, top_k)


def random_baseline(
    pool: Sequence[Item],
    model: MLPModel,
    extractor: FeatureExtractor,
    top_k: int = DEFAULT_TOP_K,
    per_config: int = BASELINE_ATTEMPTS,
    seed: int = 0,
) -> list[RecommendedOutfit]:
    """Uniform random outfit sampling: ``per_config`` attempts for each
    configuration; invalid and duplicate compositions are dropped."""
    scorer = OutfitScorer(model, extractor)
    pools = _part_pools(pool)
    rng = np.random.default_rng(seed)
    finals: dict[tuple, BeamState] = {}
    for cfg, template in enumerate(OUTFIT_CONFIGURATIONS):
        needed = list(template) + [OutfitPart.FEET]
        if any(not pools[p] for p in needed):
            continue  # unsatisfiable template for this pool
        for _ in range(per_config):
            state = _empty_state(cfg, scorer)
            for part in needed:
                pick = pools[part][int(rng.integers(len(pools[part])))]
                state = _with_item(state, pick, scorer)
            n_acc = int(rng.integers(0, MAX_ACCESSORIES + 1))
            if n_acc > len(pools[OutfitPart.ACCESSORY]):
                continue  # cannot honor the drawn accessory count
            if n_acc:
                picks = rng.choice(len(pools[OutfitPart.ACCESSORY]), size=n_acc, replace=False)
                for j in sorted(int(v) for v in picks):
                    state = _with_item(state, pools[OutfitPart.ACCESSORY][j], scorer)
            finals.setdefault(state.item_key(), state)
    states = list(finals.values())
    scorer.score_states(states)
    return _ranked({s.item_key(): s for s in states}, top_k)


def exhaustive_search(
    pool: Sequence[Item],
    model: MLPModel,
    extractor: FeatureExtractor,
    cap: int = EXHAUSTIVE_CAP,
) -> list[RecommendedOutfit]:
    """Test oracle: every valid outfit under the four configurations with
    0..3 accessories, ranked by score."""
    scorer = OutfitScorer(model, extractor)
    pools = _part_pools(pool)
    acc = pools[OutfitPart.ACCESSORY]
    acc_subsets = [
        list(combo)
        for r in range(0, MAX_ACCESSORIES + 1)
        for combo in itertools.combinations(acc, r)
    ]
    total = 0
    runnable = []
    for cfg, template in enumerate(OUTFIT_CONFIGURATIONS):
        lists = [pools[p] for p in template] + [pools[OutfitPart.FEET]]
        if any(not lst for lst in lists):
            continue
        count = len(acc_subsets)
        for lst in lists:
            count *= len(lst)
        total += count
        runnable.append((cfg, lists))
    if total > cap:
        raise PoolTooLarge(f"{total} candidate outfits exceed the cap of {cap}")

    finals: dict[tuple, BeamState] = {}
    for cfg, lists in runnable:
        for combo in itertools.product(*lists):
            base = _empty_state(cfg, scorer)
            for it in combo:
                base = _with_item(base, it, scorer)
            for subset in acc_subsets:
                state = base
                for it in subset:
                    state = _with_item(state, it, scorer)
                finals.setdefault(state.item_key(), state)
    states = list(finals.values())
    scorer.score_states(states)
    return _ranked({s.item_key(): s for s in states}, top_k=len(states) or 1)


def recommend(
    pool: Sequence[Item],
    model: MLPModel,
    extractor: FeatureExtractor,
    method: str = "partial_bs",
    width: int = DEFAULT_BEAM_WIDTH,
    top_k: int = DEFAULT_TOP_K,
    seed: int = 0,
) -> list[RecommendedOutfit]:
    """Dispatch one of the four generation methods by name."""
    if method == "ordered_bs":
        return ordered_beam_search(pool, model, extractor, width=width, top_k=top_k)
    if method == "orderless_bs":
        return orderless_beam_search(pool, model, extractor, width=width, top_k=top_k)
    if method == "partial_bs":
        return partial_beam_search(pool, model, extractor, width=width, top_k=top_k)
    if method == "baseline":
        return random_baseline(pool, model, extractor, top_k=top_k, seed=seed)
    raise RecommenderError(f"unknown method {method!r}; choose from {METHOD_NAMES}")
