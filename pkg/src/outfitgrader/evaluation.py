"""Evaluation harnesses.

Binary classification metrics over grader predictions, a feature
ablation table, recommendation test cases with the four containment
conditions, and a simulated pairwise human study: elite outfits (score
above 0.95) are paired against five score quintiles with identical part
signatures, and synthetic annotators vote with probability
s_alpha / (s_alpha + s_delta), optionally abstaining.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .catalog import Outfit
from .dataset import LabeledDataset
from .features import FeatureExtractor, outfit_matrix
from .grader import (
    MLPConfig,
    MLPModel,
    TrainConfig,
    build_model,
    positive_probabilities,
    train,
)
from .recommender import RecommendedOutfit, recommend

GROUP_A_THRESHOLD = 0.95
N_DELTA_GROUPS = 5
GROUP_A_CAP = 1000


class EvaluationError(Exception):
    pass


class EmptyInput(EvaluationError):
    pass


class InsufficientData(EvaluationError):
    pass


class InsufficientGroupA(EvaluationError):
    """No outfit scored above the elite threshold."""


class BothZero(EvaluationError):
    """Pairwise expectation is undefined when both scores are zero."""


def _format_table(headers: Sequence[str], rows: Sequence[Sequence]) -> str:
    cells = [[str(h) for h in headers]] + [
        [f"{v:.2f}" if isinstance(v, float) else str(v) for v in row] for row in rows
    ]
    widths = [max(len(r[c]) for r in cells) for c in range(len(headers))]
    lines = []
    for i, row in enumerate(cells):
        lines.append("  ".join(v.ljust(w) if c == 0 else v.rjust(w)
                               for c, (v, w) in enumerate(zip(row, widths))))
        if i == 0:
            lines.append("-" * len(lines[0]))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Classification metrics
# ---------------------------------------------------------------------------


@dataclass
class ClassificationReport:
    """Confusion-matrix metrics in percent, per class and macro-averaged."""

    accuracy: float
    per_class: dict[str, dict[str, float]]
    macro: dict[str, float]
    counts: dict[str, int]
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_class": self.per_class,
            "macro": self.macro,
            "counts": self.counts,
            "flags": self.flags,
        }

    def detail_table(self) -> str:
        rows = [
            [metric.capitalize()]
            + [self.per_class["negative"][metric], self.per_class["positive"][metric],
               self.macro[metric]]
            for metric in ("precision", "recall", "f1")
        ]
        return _format_table(["", "Negative", "Positive", "Average"], rows)


def _prf(tp: int, fp: int, fn: int, flags: list[str], cls: str) -> tuple[float, float, float]:
    if tp + fp == 0:
        flags.append(f"undefined_precision_{cls}")
        precision = 0.0
    else:
        precision = 100.0 * tp / (tp + fp)
    if tp + fn == 0:
        flags.append(f"undefined_recall_{cls}")
        recall = 0.0
    else:
        recall = 100.0 * tp / (tp + fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


def classification_metrics(
    predictions: Sequence[bool], labels: Sequence[bool]
) -> ClassificationReport:
    """Accuracy and per-class precision/recall/F1; macro averages are the
    unweighted mean over the two classes. Undefined ratios (a class never
    predicted or absent from the labels) are reported as 0 and flagged."""
    if len(predictions) == 0 or len(labels) == 0:
        raise EmptyInput("predictions and labels must be nonempty")
    if len(predictions) != len(labels):
        raise EvaluationError(
            f"length mismatch: {len(predictions)} predictions, {len(labels)} labels"
        )
    pred = np.asarray(predictions, dtype=bool)
    y = np.asarray(labels, dtype=bool)
    tp = int(np.sum(pred & y))
    fp = int(np.sum(pred & ~y))
    fn = int(np.sum(~pred & y))
    tn = int(np.sum(~pred & ~y))

    flags: list[str] = []
    p_pos, r_pos, f_pos = _prf(tp, fp, fn, flags, "positive")
    p_neg, r_neg, f_neg = _prf(tn, fn, fp, flags, "negative")
    return ClassificationReport(
        accuracy=100.0 * (tp + tn) / len(y),
        per_class={
            "positive": {"precision": p_pos, "recall": r_pos, "f1": f_pos},
            "negative": {"precision": p_neg, "recall": r_neg, "f1": f_neg},
        },
        macro={
            "precision": (p_pos + p_neg) / 2,
            "recall": (r_pos + r_neg) / 2,
            "f1": (f_pos + f_neg) / 2,
        },
        counts={"tp": tp, "fp": fp, "fn": fn, "tn": tn},
        flags=flags,
    )


def evaluate_model(
    model: MLPModel, outfits: Sequence[Outfit], extractor: FeatureExtractor
) -> ClassificationReport:
    """Score labeled outfits and reduce to classification metrics."""
    x = outfit_matrix(outfits, extractor)
    labels = [bool(o.label) for o in outfits]
    preds = positive_probabilities(model, x) >= 0.5
    return classification_metrics(list(preds), labels)


# ---------------------------------------------------------------------------
# Feature ablation
# ---------------------------------------------------------------------------


@dataclass
class AblationRow:
    extractor_id: str
    accuracy: float
    avg_precision: float
    avg_recall: float


@dataclass
class AblationReport:
    rows: list[AblationRow]
    model_name: str
    iterations: int

    def to_dict(self) -> dict:
        return {
            "model": self.model_name,
            "iterations": self.iterations,
            "rows": [
                {
                    "feature": r.extractor_id,
                    "accuracy": r.accuracy,
                    "avg_precision": r.avg_precision,
                    "avg_recall": r.avg_recall,
                }
                for r in self.rows
            ],
        }

    def table(self) -> str:
        rows = [
            [f"({i + 1}) {r.extractor_id}", r.accuracy, r.avg_precision, r.avg_recall]
            for i, r in enumerate(self.rows)
        ]
        return _format_table(["Feature", "Accuracy", "Avg. Precision", "Avg. Recall"], rows)


def ablation_harness(
    labeled: LabeledDataset,
    extractors: Sequence[FeatureExtractor],
    train_config: TrainConfig,
    model_name: str = "one_fc128",
    model_seed: int = 0,
) -> AblationReport:
    """Train one grader per feature extractor with identical seeds and
    configuration, and tabulate test metrics per row."""
    rows = []
    train_labels = np.array([bool(o.label) for o in labeled.train], dtype=int)
    for extractor in extractors:
        x_train = outfit_matrix(labeled.train, extractor)
        config = MLPConfig.named(model_name, input_dim=x_train.shape[1])
        model = build_model(config, seed=model_seed)
        model, _ = train(model, x_train, train_labels, train_config)
        report = evaluate_model(model, labeled.test, extractor)
        rows.append(
            AblationRow(
                extractor_id=extractor.extractor_id,
                accuracy=report.accuracy,
                avg_precision=report.macro["precision"],
                avg_recall=report.macro["recall"],
            )
        )
    return AblationReport(rows=rows, model_name=model_name, iterations=train_config.iterations)


# ---------------------------------------------------------------------------
# Recommendation test cases and conditions
# ---------------------------------------------------------------------------


@dataclass
class RecTestCase:
    """Items of one positive outfit plus two negatives; the recommender
    should rediscover something close to the positive."""

    pool: list
    positive: Outfit

    def __post_init__(self):
        pool_ids = {it.id for it in self.pool}
        missing = self.positive.item_ids() - pool_ids
        if missing:
            raise EvaluationError(f"pool is missing positive items: {sorted(missing)}")


def build_rec_testcases(
    test_outfits: Sequence[Outfit], n: int, seed: int = 0
) -> list[RecTestCase]:
    """Draw n cases from a labeled test partition, each pooling the items
    of one positive and two negative outfits."""
    positives = [o for o in test_outfits if o.label]
    negatives = [o for o in test_outfits if o.label is False]
    if len(positives) < n:
        raise InsufficientData(f"need {n} positives, have {len(positives)}")
    if len(negatives) < 2:
        raise InsufficientData("need at least 2 negatives")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(positives), size=n, replace=False)
    cases = []
    for pi in sorted(int(v) for v in chosen):
        positive = positives[pi]
        ni = rng.choice(len(negatives), size=2, replace=False)
        seen: dict[str, object] = {}
        for o in [positive, negatives[int(ni[0])], negatives[int(ni[1])]]:
            for it in o.items():
                seen.setdefault(it.id, it)
        pool = [seen[k] for k in sorted(seen)]
        cases.append(RecTestCase(pool=pool, positive=positive))
    return cases


@dataclass
class ConditionRates:
    """Percentage of cases where some top-10 outfit R satisfies:
    (1) R = P, (2) P strict subset of R, (3) R strict subset of P,
    (4) any of the three."""

    exact: float
    positive_in_recommended: float
    recommended_in_positive: float
    any_of: float
    n_cases: int

    def to_dict(self) -> dict:
        return {
            "exact": self.exact,
            "positive_in_recommended": self.positive_in_recommended,
            "recommended_in_positive": self.recommended_in_positive,
            "any_of": self.any_of,
            "n_cases": self.n_cases,
        }

    def as_row(self) -> list[float]:
        return [self.exact, self.positive_in_recommended,
                self.recommended_in_positive, self.any_of]


RecommendFn = Callable[[Sequence], list[RecommendedOutfit]]


def recommendation_eval(
    cases: Sequence[RecTestCase],
    method: Union[str, RecommendFn],
    model: Optional[MLPModel] = None,
    extractor: Optional[FeatureExtractor] = None,
    width: int = 3,
    top_k: int = 10,
    seed: int = 0,
) -> ConditionRates:
    """Run a generation method over each case's pool and measure how often
    one of its top-k outfits matches/contains/is contained in the positive."""
    if not cases:
        raise EmptyInput("no test cases")
    if isinstance(method, str):
        if model is None or extractor is None:
            raise EvaluationError("a named method needs a model and extractor")
        name = method

        def run(pool):
            return recommend(pool, model, extractor, method=name,
                             width=width, top_k=top_k, seed=seed)

        method_fn: RecommendFn = run
    else:
        method_fn = method
    hits = np.zeros(4, dtype=int)
    for case in cases:
        p_set = frozenset(case.positive.item_ids())
        recs = method_fn(case.pool)
        got = [False, False, False]
        for rec in recs[:top_k]:
            r_set = frozenset(rec.outfit.item_ids())
            got[0] = got[0] or r_set == p_set
            got[1] = got[1] or (p_set < r_set)
            got[2] = got[2] or (r_set < p_set)
        hits[:3] += got
        hits[3] += any(got)
    rates = 100.0 * hits / len(cases)
    return ConditionRates(
        exact=float(rates[0]),
        positive_in_recommended=float(rates[1]),
        recommended_in_positive=float(rates[2]),
        any_of=float(rates[3]),
        n_cases=len(cases),
    )


def conditions_table(rows: dict[str, ConditionRates]) -> str:
    body = [[name] + r.as_row() for name, r in rows.items()]
    return _format_table(["Approaches", "(1)", "(2)", "(3)", "(4)"], body)


# ---------------------------------------------------------------------------
# Simulated pairwise human protocol
# ---------------------------------------------------------------------------


def expected_choice_probability(s_alpha: float, s_delta: float) -> float:
    """Probability an annotator prefers the elite outfit in a pair."""
    if not (0.0 <= s_alpha <= 1.0 and 0.0 <= s_delta <= 1.0):
        raise EvaluationError("scores must be in [0, 1]")
    if s_alpha == 0.0 and s_delta == 0.0:
        raise BothZero("expected choice probability undefined for two zero scores")
    return s_alpha / (s_alpha + s_delta)


@dataclass
class PairwiseTrial:
    alpha: Outfit
    delta: Outfit
    group: int  # delta quintile index, 0 = lowest scores


@dataclass
class PairwiseTrialSet:
    trials: list[PairwiseTrial]
    group_a_size: int
    group_sizes: list[int]
    skipped_per_group: list[int]


def dump_trials(trial_set: PairwiseTrialSet, path) -> None:
    """Write trials as NDJSON lines the UI can display."""
    from .catalog import outfit_to_dict, write_ndjson

    def side(outfit: Outfit) -> dict:
        d = outfit_to_dict(outfit)
        d["score"] = outfit.score
        return d

    write_ndjson(
        path,
        (
            {"group": t.group, "alpha": side(t.alpha), "delta": side(t.delta)}
            for t in trial_set.trials
        ),
    )


def _signature_key(outfit: Outfit) -> tuple:
    parts, n_acc = outfit.signature()
    return tuple(sorted(p.value for p in parts)), n_acc


def build_pairwise_trials(
    scored_outfits: Sequence[Outfit],
    seed: int = 0,
    group_a_cap: int = GROUP_A_CAP,
    threshold: float = GROUP_A_THRESHOLD,
) -> PairwiseTrialSet:
    """Pair elite outfits (score > threshold) against each score quintile.

    The non-elite outfits are sorted ascending by score and cut into 5
    equal-count groups; each elite outfit is paired with one same-part-
    signature outfit per group. Pairs without a signature match are
    skipped and counted. When fewer than ``group_a_cap`` outfits clear
    the threshold, the whole elite set is used (the actual size is in
    the result) rather than failing.
    """
    for o in scored_outfits:
        if o.score is None:
            raise EvaluationError("all outfits must carry a score")
    rng = np.random.default_rng(seed)
    elite = [o for o in scored_outfits if o.score > threshold]
    rest = [o for o in scored_outfits if o.score <= threshold]
    if not elite:
        raise InsufficientGroupA(f"no outfit scored above {threshold}")
    if len(elite) > group_a_cap:
        picks = rng.choice(len(elite), size=group_a_cap, replace=False)
        elite = [elite[int(i)] for i in sorted(int(v) for v in picks)]
    rest.sort(key=lambda o: (o.score, o.canonical_key()))
    groups = [list(g) for g in np.array_split(np.arange(len(rest)), N_DELTA_GROUPS)]

    by_signature: list[dict[tuple, list[Outfit]]] = []
    for g in groups:
        table: dict[tuple, list[Outfit]] = {}
        for idx in g:
            o = rest[int(idx)]
            table.setdefault(_signature_key(o), []).append(o)
        by_signature.append(table)

    trials: list[PairwiseTrial] = []
    skipped = [0] * N_DELTA_GROUPS
    for alpha in elite:
        sig = _signature_key(alpha)
        for j in range(N_DELTA_GROUPS):
            candidates = by_signature[j].get(sig, [])
            if not candidates:
                skipped[j] += 1
                continue
            delta = candidates[int(rng.integers(len(candidates)))]
            trials.append(PairwiseTrial(alpha=alpha, delta=delta, group=j))
    return PairwiseTrialSet(
        trials=trials,
        group_a_size=len(elite),
        group_sizes=[len(g) for g in groups],
        skipped_per_group=skipped,
    )


@dataclass
class MatchingGroupResult:
    n_trials: int
    undecided: int
    ties: int
    individual_ratio: Optional[float]
    majority_ratio: Optional[float]
    expected: Optional[float]


@dataclass
class MatchingReport:
    """Matching ratios per delta group, with the expectation curve."""

    groups: list[MatchingGroupResult]
    overall_individual: Optional[float]
    overall_majority: Optional[float]
    annotators: int
    undecided_prob: float

    def to_dict(self) -> dict:
        return {
            "groups": [
                {
                    "n_trials": g.n_trials,
                    "undecided": g.undecided,
                    "ties": g.ties,
                    "individual_ratio": g.individual_ratio,
                    "majority_ratio": g.majority_ratio,
                    "expected": g.expected,
                }
                for g in self.groups
            ],
            "overall_individual": self.overall_individual,
            "overall_majority": self.overall_majority,
            "annotators": self.annotators,
            "undecided_prob": self.undecided_prob,
        }

    def table(self) -> str:
        rows = []
        for j, g in enumerate(self.groups):
            rows.append([
                f"delta_{j}",
                g.n_trials,
                "-" if g.individual_ratio is None else f"{g.individual_ratio:.4f}",
                "-" if g.majority_ratio is None else f"{g.majority_ratio:.4f}",
                "-" if g.expected is None else f"{g.expected:.4f}",
                g.undecided,
                g.ties,
            ])
        return _format_table(
            ["Group", "Pairs", "Individual", "Majority", "Expected", "Undecided", "Ties"],
            rows,
        )


def simulate_annotators(
    trial_set: PairwiseTrialSet,
    k: int = 5,
    undecided_prob: float = 0.1,
    seed: int = 0,
) -> MatchingReport:
    """Vote each pair with k simulated annotators.

    Each vote abstains with probability ``undecided_prob``, otherwise
    prefers the elite outfit with the pairwise expectation probability.
    Undecided votes are excluded from the individual ratio; tied pairs
    are excluded from the majority ratio.
    """
    if not 0.0 <= undecided_prob <= 1.0:
        raise EvaluationError("undecided_prob must be in [0, 1]")
    rng = np.random.default_rng(seed)
    trials = trial_set.trials
    n = len(trials)
    if n:
        p = np.array([
            expected_choice_probability(t.alpha.score, t.delta.score) for t in trials
        ])
        undecided = rng.random((n, k)) < undecided_prob
        prefers_alpha = rng.random((n, k)) < p[:, None]
        alpha_votes = (~undecided & prefers_alpha).sum(axis=1)
        delta_votes = (~undecided & ~prefers_alpha).sum(axis=1)
        und_counts = undecided.sum(axis=1)
        group_idx = np.array([t.group for t in trials])

    groups = []
    ind_num = ind_den = maj_num = maj_den = 0
    for j in range(N_DELTA_GROUPS):
        if n == 0:
            groups.append(MatchingGroupResult(0, 0, 0, None, None, None))
            continue
        mask = group_idx == j
        a = int(alpha_votes[mask].sum())
        d = int(delta_votes[mask].sum())
        und = int(und_counts[mask].sum())
        wins = int((alpha_votes[mask] > delta_votes[mask]).sum())
        ties = int((alpha_votes[mask] == delta_votes[mask]).sum())
        n_pairs = int(mask.sum())
        individual = a / (a + d) if a + d > 0 else None
        majority = wins / (n_pairs - ties) if n_pairs - ties > 0 else None
        expected = float(p[mask].mean()) if n_pairs > 0 else None
        groups.append(
            MatchingGroupResult(
                n_trials=n_pairs,
                undecided=und,
                ties=ties,
                individual_ratio=individual,
                majority_ratio=majority,
                expected=expected,
            )
        )
        ind_num += a
        ind_den += a + d
        maj_num += wins
        maj_den += n_pairs - ties
    return MatchingReport(
        groups=groups,
        overall_individual=ind_num / ind_den if ind_den else None,
        overall_majority=maj_num / maj_den if maj_den else None,
        annotators=k,
        undecided_prob=undecided_prob,
    )
