"""Generation methods: template legality, dedup, oracle agreement."""

import numpy as np
import pytest

from outfitgrader.catalog import CategoryLexicon, Item, OutfitPart, validate_outfit
from outfitgrader.features import composite_extractor
from outfitgrader.grader import MLPConfig, build_model
from outfitgrader.recommender import (
    OUTFIT_CONFIGURATIONS,
    PoolTooLarge,
    RecommendRequest,
    applicable_configurations,
    exhaustive_search,
    ordered_beam_search,
    orderless_beam_search,
    partial_beam_search,
    random_baseline,
    recommend,
)

LEX = CategoryLexicon.default()
EXT = composite_extractor(LEX)
MODEL = build_model(MLPConfig.named("one_fc128", input_dim=8 * EXT.dim), seed=17)

CATEGORY_OF = {
    OutfitPart.OUTER: "coat",
    OutfitPart.UPPER: "shirt",
    OutfitPart.LOWER: "jeans",
    OutfitPart.FULL: "dress",
    OutfitPart.FEET: "boots",
    OutfitPart.ACCESSORY: "bag",
}


def make_item(item_id, part, color=(128, 128, 128)):
    return Item.from_category(item_id, CATEGORY_OF[part], LEX, palette_source=[color])


def make_pool(counts, seed=0):
    """counts: dict part -> n items, each with a random distinct color."""
    rng = np.random.default_rng(seed)
    pool = []
    for part, n in counts.items():
        for i in range(n):
            color = tuple(int(v) for v in rng.integers(0, 256, size=3))
            pool.append(make_item(f"{part.value}{i}", part, color))
    return pool


def ids_set(rec):
    return frozenset(rec.outfit.item_ids())


SINGLE_OUTFIT_POOL = make_pool({OutfitPart.UPPER: 1, OutfitPart.LOWER: 1, OutfitPart.FEET: 1})


class TestApplicableConfigurations:
    def test_feet_and_accessories_fit_everywhere(self):
        assert applicable_configurations(OutfitPart.FEET) == [0, 1, 2, 3]
        assert applicable_configurations(OutfitPart.ACCESSORY) == [0, 1, 2, 3]

    def test_main_parts_restricted_to_their_templates(self):
        assert applicable_configurations(OutfitPart.OUTER) == [0, 2]
        assert applicable_configurations(OutfitPart.UPPER) == [0, 1]
        assert applicable_configurations(OutfitPart.FULL) == [2, 3]


class TestExhaustiveSearch:
    def test_minimal_pool_single_outfit(self):
        recs = exhaustive_search(SINGLE_OUTFIT_POOL, MODEL, EXT)
        assert len(recs) == 1
        assert recs[0].configuration == 2

    def test_one_accessory_doubles_candidates(self):
        pool = SINGLE_OUTFIT_POOL + [make_item("acc0", OutfitPart.ACCESSORY)]
        recs = exhaustive_search(pool, MODEL, EXT)
        assert len(recs) == 2

    def test_full_feet_outer_counts(self):
        pool = make_pool({OutfitPart.FULL: 1, OutfitPart.FEET: 1, OutfitPart.OUTER: 1})
        recs = exhaustive_search(pool, MODEL, EXT)
        # configuration (3) outer+full and configuration (4) full only
        assert len(recs) == 2
        assert sorted(r.configuration for r in recs) == [3, 4]

    def test_scores_non_increasing(self):
        pool = make_pool({OutfitPart.UPPER: 2, OutfitPart.LOWER: 2, OutfitPart.FEET: 2,
                          OutfitPart.ACCESSORY: 2}, seed=1)
        recs = exhaustive_search(pool, MODEL, EXT)
        scores = [r.score for r in recs]
        assert scores == sorted(scores, reverse=True)

    def test_cap_enforced(self):
        pool = make_pool({OutfitPart.UPPER: 2, OutfitPart.LOWER: 2, OutfitPart.FEET: 2})
        with pytest.raises(PoolTooLarge):
            exhaustive_search(pool, MODEL, EXT, cap=3)


class TestBeamSearchBasics:
    @pytest.mark.parametrize("method", [ordered_beam_search, orderless_beam_search,
                                        partial_beam_search])
    def test_single_outfit_pool_found(self, method):
        recs = method(SINGLE_OUTFIT_POOL, MODEL, EXT, width=3)
        assert len(recs) == 1
        assert recs[0].rank == 1
        assert ids_set(recs[0]) == frozenset({"upper0", "lower0", "feet0"})

    @pytest.mark.parametrize("method", [ordered_beam_search, orderless_beam_search,
                                        partial_beam_search])
    def test_all_results_valid_and_template_shaped(self, method):
        pool = make_pool({OutfitPart.OUTER: 2, OutfitPart.UPPER: 2, OutfitPart.LOWER: 2,
                          OutfitPart.FULL: 1, OutfitPart.FEET: 2, OutfitPart.ACCESSORY: 2},
                         seed=2)
        for rec in method(pool, MODEL, EXT, width=3):
            outfit = rec.outfit
            assert validate_outfit(outfit).valid
            template = OUTFIT_CONFIGURATIONS[rec.configuration - 1]
            assert set(outfit.slots) == set(template) | {OutfitPart.FEET}

    @pytest.mark.parametrize("method", [ordered_beam_search, orderless_beam_search,
                                        partial_beam_search])
    def test_results_deduplicated_and_sorted(self, method):
        pool = make_pool({OutfitPart.UPPER: 3, OutfitPart.LOWER: 2, OutfitPart.FEET: 2,
                          OutfitPart.ACCESSORY: 1}, seed=3)
        recs = method(pool, MODEL, EXT, width=3)
        keys = [ids_set(r) for r in recs]
        assert len(set(keys)) == len(keys)
        scores = [r.score for r in recs]
        assert scores == sorted(scores, reverse=True)
        assert [r.rank for r in recs] == list(range(1, len(recs) + 1))

    def test_no_null_items_in_output(self):
        pool = make_pool({OutfitPart.UPPER: 1, OutfitPart.LOWER: 1, OutfitPart.FEET: 1,
                          OutfitPart.ACCESSORY: 3}, seed=4)
        for method in (ordered_beam_search, orderless_beam_search, partial_beam_search):
            for rec in method(pool, MODEL, EXT, width=2):
                for acc in rec.outfit.accessories:
                    assert acc.id.startswith("accessory")

    def test_orderless_rejects_upper_when_full_occupied(self):
        pool = make_pool({OutfitPart.FULL: 1, OutfitPart.UPPER: 1, OutfitPart.LOWER: 1,
                          OutfitPart.FEET: 1}, seed=5)
        recs = orderless_beam_search(pool, MODEL, EXT, width=5)
        for rec in recs:
            if OutfitPart.FULL in rec.outfit.slots and rec.configuration in (3, 4):
                assert OutfitPart.UPPER not in rec.outfit.slots or rec.configuration <= 2

    def test_partial_bs_without_accessories_equals_bases(self):
        pool = make_pool({OutfitPart.UPPER: 2, OutfitPart.LOWER: 2, OutfitPart.FEET: 1}, seed=6)
        recs = partial_beam_search(pool, MODEL, EXT, width=3)
        exhaustive = exhaustive_search(pool, MODEL, EXT)
        assert [ids_set(r) for r in recs] == [ids_set(r) for r in exhaustive[:10]]

    def test_empty_pool_for_part_skips_configuration(self):
        # no feet: nothing is generatable at all
        pool = make_pool({OutfitPart.UPPER: 1, OutfitPart.LOWER: 1})
        for method in (ordered_beam_search, orderless_beam_search, partial_beam_search):
            assert method(pool, MODEL, EXT) == []


class TestRandomBaseline:
    def test_deterministic_given_seed(self):
        pool = make_pool({OutfitPart.UPPER: 3, OutfitPart.LOWER: 3, OutfitPart.FEET: 2,
                          OutfitPart.ACCESSORY: 4}, seed=7)
        a = random_baseline(pool, MODEL, EXT, seed=99)
        b = random_baseline(pool, MODEL, EXT, seed=99)
        assert [(r.score, ids_set(r)) for r in a] == [(r.score, ids_set(r)) for r in b]

    def test_missing_feet_gives_empty_result(self):
        pool = make_pool({OutfitPart.UPPER: 2, OutfitPart.LOWER: 2})
        assert random_baseline(pool, MODEL, EXT, seed=0) == []

    def test_all_outputs_valid(self):
        pool = make_pool({OutfitPart.OUTER: 2, OutfitPart.UPPER: 2, OutfitPart.LOWER: 2,
                          OutfitPart.FULL: 2, OutfitPart.FEET: 2, OutfitPart.ACCESSORY: 3},
                         seed=8)
        for rec in random_baseline(pool, MODEL, EXT, seed=1, top_k=20):
            assert validate_outfit(rec.outfit).valid

    def test_at_most_400_candidates_scored(self):
        # 100 attempts per configuration, some dropped: never more than 400 distinct
        pool = make_pool({OutfitPart.OUTER: 3, OutfitPart.UPPER: 3, OutfitPart.LOWER: 3,
                          OutfitPart.FULL: 3, OutfitPart.FEET: 3, OutfitPart.ACCESSORY: 5},
                         seed=9)
        recs = random_baseline(pool, MODEL, EXT, seed=2, top_k=1000)
        assert len(recs) <= 400


class TestOracleAgreement:
    def fuzz_pool(self, rng):
        counts = {
            OutfitPart.OUTER: int(rng.integers(0, 3)),
            OutfitPart.UPPER: int(rng.integers(0, 3)),
            OutfitPart.LOWER: int(rng.integers(0, 3)),
            OutfitPart.FULL: int(rng.integers(0, 2)),
            OutfitPart.FEET: int(rng.integers(0, 3)),
            OutfitPart.ACCESSORY: int(rng.integers(0, 3)),
        }
        counts = {p: n for p, n in counts.items() if n}
        total = sum(counts.values())
        if total == 0 or total > 8:
            return None
        return make_pool(counts, seed=int(rng.integers(1 << 31)))

    @pytest.mark.parametrize("method", [ordered_beam_search, orderless_beam_search])
    def test_wide_beam_equals_exhaustive_top10(self, method):
        rng = np.random.default_rng(20)
        checked = 0
        while checked < 25:
            pool = self.fuzz_pool(rng)
            if pool is None:
                continue
            checked += 1
            exhaustive = exhaustive_search(pool, MODEL, EXT)
            beam = method(pool, MODEL, EXT, width=100000, top_k=10)
            assert [ids_set(r) for r in beam] == [ids_set(r) for r in exhaustive[:10]]

    def test_partial_bs_top1_matches_exhaustive_on_small_accessory_pools(self):
        rng = np.random.default_rng(21)
        checked = 0
        while checked < 15:
            pool = self.fuzz_pool(rng)
            if pool is None or sum(it.part is OutfitPart.ACCESSORY for it in pool) > 2:
                continue
            exhaustive = exhaustive_search(pool, MODEL, EXT)
            if not exhaustive:
                continue
            checked += 1
            recs = partial_beam_search(pool, MODEL, EXT, width=3)
            assert ids_set(recs[0]) == ids_set(exhaustive[0])
            assert recs[0].score == exhaustive[0].score

    def test_beam_width_monotonicity(self):
        rng = np.random.default_rng(22)
        checked = 0
        while checked < 10:
            pool = self.fuzz_pool(rng)
            if pool is None:
                continue
            if not exhaustive_search(pool, MODEL, EXT):
                continue
            checked += 1
            for method in (ordered_beam_search, orderless_beam_search, partial_beam_search):
                best = -1.0
                for width in (1, 2, 3, 5):
                    recs = method(pool, MODEL, EXT, width=width)
                    if recs:
                        assert recs[0].score >= best - 1e-12
                        best = max(best, recs[0].score)


class TestRecommendDispatch:
    def test_unknown_method_rejected(self):
        with pytest.raises(ValueError):
            RecommendRequest(pool=["a"], method="quantum_bs")

    def test_request_validation(self):
        with pytest.raises(ValueError):
            RecommendRequest(pool=["a"], beam_width=0)

    def test_dispatch_matches_direct_call(self):
        pool = make_pool({OutfitPart.UPPER: 2, OutfitPart.LOWER: 2, OutfitPart.FEET: 1}, seed=10)
        via_dispatch = recommend(pool, MODEL, EXT, method="ordered_bs", width=2)
        direct = ordered_beam_search(pool, MODEL, EXT, width=2)
        assert [ids_set(r) for r in via_dispatch] == [ids_set(r) for r in direct]

    def test_to_dict_shape(self):
        recs = recommend(SINGLE_OUTFIT_POOL, MODEL, EXT, method="partial_bs")
        doc = recs[0].to_dict()
        assert doc["rank"] == 1
        assert set(doc) == {"rank", "score", "configuration", "slots", "accessories"}
        assert doc["slots"]["upper"] == "upper0"
