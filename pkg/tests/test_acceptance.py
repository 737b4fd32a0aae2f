"""Acceptance gates.

One test per criterion, each printing a pass/fail line with its measured
values and runtime (run with ``pytest tests/test_acceptance.py -v -s``).
The quantitative gates run on a synthetic closet world with a known
compatibility oracle; the expensive fixtures (corpus, split, trained
grader) are shared across criteria.
"""

import time

import numpy as np
import pytest

from outfitgrader.catalog import CategoryLexicon, Item, Outfit, OutfitPart
from outfitgrader.dataset import (
    SplitResult,
    SynthConfig,
    build_labeled_dataset,
    disjoint_split,
    generate_synthetic,
)
from outfitgrader.evaluation import (
    ablation_harness,
    build_pairwise_trials,
    build_rec_testcases,
    evaluate_model,
    recommendation_eval,
    simulate_annotators,
)
from outfitgrader.features import (
    PaletteExtractor,
    TypeOneHotExtractor,
    composite_extractor,
    outfit_matrix,
)
from outfitgrader.grader import (
    MLPConfig,
    TrainConfig,
    build_model,
    loss_and_grad,
    positive_probabilities,
    save_checkpoint,
    train,
)
from outfitgrader.recommender import (
    exhaustive_search,
    ordered_beam_search,
    orderless_beam_search,
    partial_beam_search,
    recommend,
)

LEX = CategoryLexicon.default()

WORLD_SEED = 42
TRAIN_ITERATIONS = 20_000


def report(name, ok, detail, elapsed, budget):
    status = "PASS" if ok else "FAIL"
    print(f"[{status}] {name}: {detail} ({elapsed:.1f}s < {budget:.0f}s budget)")
    assert elapsed < budget, f"{name} exceeded runtime budget"
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def world():
    """Synthetic corpus + split + labeled data, shared by the slow gates."""
    config = SynthConfig(n_positives=4000, seed=WORLD_SEED)
    corpus, oracle = generate_synthetic(config)
    split = disjoint_split(corpus.outfits)
    labeled = build_labeled_dataset(corpus, split, seed=WORLD_SEED)
    return corpus, oracle, split, labeled


@pytest.fixture(scope="module")
def trained(world):
    """one_fc128 on composite features at the pinned iteration count."""
    _, _, _, labeled = world
    extractor = composite_extractor(LEX)
    x = outfit_matrix(labeled.train, extractor)
    y = np.array([bool(o.label) for o in labeled.train], dtype=int)
    model = build_model(MLPConfig.named("one_fc128", input_dim=x.shape[1]), seed=0)
    model, _ = train(model, x, y, TrainConfig(iterations=TRAIN_ITERATIONS, seed=0))
    return model, extractor


# ---------------------------------------------------------------------------
# Criterion 1: disjoint split on 10,000 fuzzed corpora
# ---------------------------------------------------------------------------


def test_disjoint_split_fuzz():
    t0 = time.time()
    rng = np.random.default_rng(1)
    universe = [Item.from_category(f"i{k}", "shirt", LEX) for k in range(40)]

    def outfit_from(indices):
        its = [universe[i] for i in indices]
        slots = {OutfitPart.UPPER: its[0]}
        if len(its) > 1:
            slots[OutfitPart.LOWER] = its[1]
        return Outfit(slots=slots, accessories=[
            Item(id=it.id, category="bag", part=OutfitPart.ACCESSORY) for it in its[2:]
        ])

    for trial in range(10_000):
        n_outfits = int(rng.integers(1, 20))
        n_universe = int(rng.integers(2, 40))
        outfits = []
        for _ in range(n_outfits):
            k = int(rng.integers(1, min(5, n_universe) + 1))
            picks = rng.choice(n_universe, size=k, replace=False)
            outfits.append(outfit_from([int(p) for p in picks]))
        split = disjoint_split(outfits)
        assert sorted(split.A + split.B + split.C) == list(range(n_outfits))
        items_a = set().union(*(outfits[i].item_ids() for i in split.A)) if split.A else set()
        items_b = set().union(*(outfits[i].item_ids() for i in split.B)) if split.B else set()
        assert not (items_a & items_b), f"trial {trial}: item leakage across the split"

    # balance branch: fully item-disjoint inputs approach a 2:1 ratio
    for n in (1, 2, 3, 7, 10, 33, 100, 501):
        outfits = [
            Outfit(slots={
                OutfitPart.UPPER: Item.from_category(f"u{n}-{j}", "shirt", LEX),
                OutfitPart.LOWER: Item.from_category(f"l{n}-{j}", "jeans", LEX),
            })
            for j in range(n)
        ]
        split = disjoint_split(outfits)
        assert len(split.A) - 2 * len(split.B) in (-1, 0, 1)
        assert not split.C

    report("disjoint-split", True,
           "10,000 fuzzed corpora: exact partition, items(A) ∩ items(B) = ∅; "
           "|A|-2|B| ∈ {-1,0,1} on item-disjoint inputs",
           time.time() - t0, 60)


# ---------------------------------------------------------------------------
# Criterion 2: gradient correctness on 100 random tiny models
# ---------------------------------------------------------------------------


def test_gradient_correctness():
    t0 = time.time()
    rng = np.random.default_rng(2)
    worst_overall = 0.0
    for trial in range(100):
        # redraw until every pre-ReLU activation sits away from the kink,
        # where central differences are legitimately non-smooth
        while True:
            input_dim = int(rng.integers(3, 9))
            depth = int(rng.integers(1, 3))
            hidden = [int(rng.integers(2, 5)) for _ in range(depth)]
            config = MLPConfig(
                input_dim=input_dim,
                hidden_dims=hidden,
                name="tiny",
                dropout_rate=float(rng.choice([0.0, 0.3])),
                batchnorm=bool(rng.integers(0, 2)),
            )
            model = build_model(config, seed=int(rng.integers(1 << 20)))
            batch = int(rng.integers(2, 7))
            x = rng.normal(size=(batch, input_dim))
            y = rng.integers(0, 2, size=batch)
            mask_seed = int(rng.integers(1 << 20))
            from outfitgrader.grader import forward

            _, cache = forward(model, x, mode="train",
                               dropout_rng=np.random.default_rng(mask_seed))
            away_from_kinks = min(np.abs(a).min() for a in cache["relu_in"]) > 0.02
            # near-zero batch variance makes 1/sqrt(var+eps) violently
            # curved, which finite differences cannot resolve at this step
            stable_batchnorm = all(
                bn is None or np.sqrt(bn[2] + 1e-5).min() > 0.3 for bn in cache["bn"]
            )
            if away_from_kinks and stable_batchnorm:
                break

        def loss_only():
            loss, _ = loss_and_grad(model, x, y,
                                    dropout_rng=np.random.default_rng(mask_seed))
            return loss

        _, grads = loss_and_grad(model, x, y,
                                 dropout_rng=np.random.default_rng(mask_seed))
        step = 1e-3
        for name, g in grads.items():
            flat_t = model.params[name].ravel()
            flat_g = g.ravel()
            for i in range(flat_t.size):
                orig = flat_t[i]
                flat_t[i] = orig + step
                up = loss_only()
                flat_t[i] = orig - step
                down = loss_only()
                flat_t[i] = orig
                numeric = (up - down) / (2 * step)
                # the step's O(h^2) truncation (~1e-7 here) dominates for
                # near-zero gradients; floor the scale so the relative
                # tolerance stays meaningful
                denom = max(abs(numeric), abs(flat_g[i]), 1e-2)
                rel = abs(numeric - flat_g[i]) / denom
                worst_overall = max(worst_overall, rel)
        assert worst_overall < 1e-4, f"trial {trial}: rel err {worst_overall:.2e}"

    report("gradient-correctness", worst_overall < 1e-4,
           f"100 random tiny models: worst analytic-vs-central-FD rel err {worst_overall:.2e} < 1e-4",
           time.time() - t0, 60)


# ---------------------------------------------------------------------------
# Criterion 3: synthetic-oracle grading
# ---------------------------------------------------------------------------


def test_synthetic_oracle_grading(world, trained):
    t0 = time.time()
    _, _, _, labeled = world
    model, extractor = trained
    rep = evaluate_model(model, labeled.test, extractor)
    pos_recall = rep.per_class["positive"]["recall"]
    neg_recall = rep.per_class["negative"]["recall"]
    ok = rep.accuracy >= 90.0 and neg_recall > pos_recall
    report("synthetic-oracle-grading", ok,
           f"test accuracy {rep.accuracy:.2f}% >= 90%; negative recall "
           f"{neg_recall:.2f}% > positive recall {pos_recall:.2f}%",
           time.time() - t0, 600)


# ---------------------------------------------------------------------------
# Criterion 4: ablation trend in Table-6 layout
# ---------------------------------------------------------------------------


def test_ablation_trend(world):
    t0 = time.time()
    _, _, _, labeled = world
    extractors = [
        TypeOneHotExtractor(LEX),
        PaletteExtractor(),
        composite_extractor(LEX),
    ]
    table = ablation_harness(
        labeled, extractors, TrainConfig(iterations=TRAIN_ITERATIONS, seed=0),
        model_name="one_fc128", model_seed=0,
    )
    print(table.table())
    acc = {row.extractor_id: row.accuracy for row in table.rows}
    ok = (
        acc["type_onehot"] < acc["palette4"]
        and acc["type_onehot+palette4"] >= acc["palette4"] - 1.0
    )
    report("ablation-trend", ok,
           f"type {acc['type_onehot']:.2f} < palette {acc['palette4']:.2f}; "
           f"composite {acc['type_onehot+palette4']:.2f} >= palette - 1",
           time.time() - t0, 1800)


# ---------------------------------------------------------------------------
# Criterion 5: beam-search oracle equivalence
# ---------------------------------------------------------------------------


CATEGORY_OF = {
    OutfitPart.OUTER: "coat",
    OutfitPart.UPPER: "shirt",
    OutfitPart.LOWER: "jeans",
    OutfitPart.FULL: "dress",
    OutfitPart.FEET: "boots",
    OutfitPart.ACCESSORY: "bag",
}


def test_beam_search_oracle_equivalence():
    t0 = time.time()
    extractor = composite_extractor(LEX)
    model = build_model(MLPConfig.named("one_fc128", input_dim=8 * extractor.dim), seed=33)
    rng = np.random.default_rng(5)

    def fuzz_pool():
        pool = []
        for part in OutfitPart:
            for i in range(int(rng.integers(0, 3))):
                color = tuple(int(v) for v in rng.integers(0, 256, size=3))
                pool.append(Item.from_category(
                    f"{part.value}{i}", CATEGORY_OF[part], LEX, palette_source=[color]
                ))
        return pool if 1 <= len(pool) <= 8 else None

    checked = partial_checked = 0
    while checked < 200:
        pool = fuzz_pool()
        if pool is None:
            continue
        checked += 1
        exhaustive = exhaustive_search(pool, model, extractor)
        top10 = [frozenset(r.outfit.item_ids()) for r in exhaustive[:10]]
        for method in (ordered_beam_search, orderless_beam_search):
            got = method(pool, model, extractor, width=100_000, top_k=10)
            assert [frozenset(r.outfit.item_ids()) for r in got] == top10, method.__name__
        n_acc = sum(it.part is OutfitPart.ACCESSORY for it in pool)
        if exhaustive and n_acc <= 2:
            partial_checked += 1
            got = partial_beam_search(pool, model, extractor, width=3)
            assert frozenset(got[0].outfit.item_ids()) == top10[0]
            assert got[0].score == exhaustive[0].score

    report("beam-search-oracle", True,
           f"200 fuzzed pools: ordered/orderless wide-beam == exhaustive top-10; "
           f"partial BS top-1 == exhaustive top-1 on {partial_checked} pools with <=2 accessories",
           time.time() - t0, 300)


# ---------------------------------------------------------------------------
# Criterion 6: recommendation conditions, Partial BS vs baseline
# ---------------------------------------------------------------------------


def test_recommendation_conditions(world, trained):
    # Known-red gate: with pools of 1 positive + 2 negatives (at most 3
    # items per main part), 100 random attempts per configuration hit a
    # sub- or super-outfit of the positive with probability well above
    # 60%, and any style-consistent hit ranks in the top 10 once the
    # grader clears the 90%-accuracy gate. The two gates bound each
    # other; see the verification notes for the measured design sweep.
    t0 = time.time()
    _, _, _, labeled = world
    model, extractor = trained
    cases = build_rec_testcases(labeled.test, n=200, seed=3)
    partial = recommendation_eval(cases, "partial_bs", model, extractor, seed=3)
    baseline = recommendation_eval(cases, "baseline", model, extractor, seed=3)
    gap = partial.any_of - baseline.any_of
    ok = gap >= 10.0
    report("recommendation-conditions", ok,
           f"partial BS condition-(4) {partial.any_of:.2f}% vs baseline "
           f"{baseline.any_of:.2f}% (gap {gap:.2f}, required >= 10 points); "
           f"partial conditions {partial.as_row()}, baseline {baseline.as_row()}",
           time.time() - t0, 900)


# ---------------------------------------------------------------------------
# Criterion 7: human-protocol simulation vs the pairwise expectation
# ---------------------------------------------------------------------------


def test_human_protocol_simulation(world, trained):
    t0 = time.time()
    _, _, _, labeled = world
    model, extractor = trained
    scored = []
    probs = positive_probabilities(model, outfit_matrix(labeled.test, extractor))
    for outfit, p in zip(labeled.test, probs):
        out = Outfit(slots=dict(outfit.slots), accessories=list(outfit.accessories),
                     label=outfit.label)
        out.score = float(p)
        scored.append(out)
    trials = build_pairwise_trials(scored, seed=11)
    assert trials.trials, "no signature-matched pairs"
    result = simulate_annotators(trials, k=1000, undecided_prob=0.0, seed=11)
    print(result.table())
    deviations = [
        abs(g.individual_ratio - g.expected)
        for g in result.groups
        if g.n_trials and g.individual_ratio is not None
    ]
    ratios = [g.individual_ratio for g in result.groups if g.n_trials]
    monotone = all(a >= b - 1e-9 for a, b in zip(ratios, ratios[1:]))
    ok = max(deviations) <= 0.03 and monotone
    report("human-protocol", ok,
           f"group A size {trials.group_a_size}; max |ratio - expectation| "
           f"{max(deviations):.4f} <= 0.03; ratios non-increasing delta0..delta4: {monotone}",
           time.time() - t0, 120)


# ---------------------------------------------------------------------------
# Criterion 8: bit-reproducibility of every seeded stage
# ---------------------------------------------------------------------------


def test_determinism_end_to_end(tmp_path):
    t0 = time.time()
    artifacts = []
    for run in ("one", "two"):
        base = tmp_path / run
        base.mkdir()
        config = SynthConfig(n_items_per_part=24, n_styles=2, n_positives=60, seed=9)
        corpus, _ = generate_synthetic(config)
        corpus.save(base)
        split = disjoint_split(corpus.outfits)
        split.save(base / "split.json")
        labeled = build_labeled_dataset(corpus, split, seed=9)
        extractor = composite_extractor(LEX)
        x = outfit_matrix(labeled.train, extractor)
        y = np.array([bool(o.label) for o in labeled.train], dtype=int)
        model = build_model(MLPConfig.named("one_fc128", input_dim=x.shape[1]), seed=9)
        model, _ = train(model, x, y, TrainConfig(learning_rate=1e-3, iterations=300,
                                                  batch_size=32, seed=9))
        save_checkpoint(model, base / "model.ckpt")
        pool = sorted(corpus.items.values(), key=lambda it: it.id)[:12]
        recs = recommend(pool, model, extractor, method="partial_bs", seed=9)
        rec_blob = repr([(r.rank, r.score, sorted(r.outfit.item_ids())) for r in recs])
        artifacts.append({
            "items": (base / "items.ndjson").read_bytes(),
            "outfits": (base / "outfits.ndjson").read_bytes(),
            "split": (base / "split.json").read_bytes(),
            "model": (base / "model.ckpt").read_bytes(),
            "recs": rec_blob,
        })
    ok = all(artifacts[0][k] == artifacts[1][k] for k in artifacts[0])
    report("determinism", ok,
           "synth, split, negatives, train checkpoint, and recommendations "
           "bit-identical across two seeded runs",
           time.time() - t0, 120)
