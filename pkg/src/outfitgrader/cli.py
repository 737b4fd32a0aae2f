"""Command-line pipeline: synth, split, build-dataset, train, eval,
ablate, recommend, human-sim, serve.

Every randomized stage takes an explicit seed and is bit-reproducible.
``--json`` switches the human-readable reports to machine output.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import catalog, dataset, evaluation, features, grader, recommender, service
from .catalog import CategoryLexicon
from .dataset import Corpus, SplitResult

KNOWN_ERRORS = (
    catalog.CatalogError,
    dataset.DatasetError,
    features.FeatureError,
    grader.GraderError,
    recommender.RecommenderError,
    evaluation.EvaluationError,
    service.ServiceError,
    FileNotFoundError,
    ValueError,
)


def _load_lexicon(corpus_dir: Path, explicit: str | None) -> CategoryLexicon:
    if explicit:
        return CategoryLexicon.from_file(explicit)
    bundled = corpus_dir / "lexicon.csv"
    if bundled.exists():
        return CategoryLexicon.from_file(bundled)
    return CategoryLexicon.default()


def _load_labeled(corpus: Corpus, data_dir: Path) -> dataset.LabeledDataset:
    train = [
        catalog.outfit_from_dict(d, corpus.items)
        for d in catalog.read_ndjson(data_dir / "train.ndjson")
    ]
    test = [
        catalog.outfit_from_dict(d, corpus.items)
        for d in catalog.read_ndjson(data_dir / "test.ndjson")
    ]
    return dataset.LabeledDataset(train=train, test=test)


def _labels(outfits) -> np.ndarray:
    return np.array([bool(o.label) for o in outfits], dtype=int)


def cmd_synth(args) -> int:
    lexicon = CategoryLexicon.from_file(args.lexicon) if args.lexicon else CategoryLexicon.default()
    config = dataset.SynthConfig(
        n_items_per_part=args.items_per_part,
        n_styles=args.styles,
        n_positives=args.positives,
        palette_noise=args.noise,
        seed=args.seed,
    )
    corpus, oracle = dataset.generate_synthetic(config, lexicon)
    out = Path(args.out)
    corpus.save(out)
    oracle.save(out / "oracle.json")
    lexicon.to_file(out / "lexicon.csv")
    print(f"wrote {len(corpus.items)} items, {len(corpus.outfits)} outfits to {out}")
    return 0


def cmd_split(args) -> int:
    corpus = Corpus.load(args.corpus)
    split = dataset.disjoint_split(corpus.outfits)
    split.save(args.out)
    stats = dataset.split_stats(corpus, split)
    if args.json:
        print(json.dumps(stats, sort_keys=True))
    else:
        print(f"train {len(split.A)}  test {len(split.B)}  discarded {len(split.C)}")
        print(f"items-per-outfit TV distance: {stats['tv_distance_items_per_outfit']:.4f}")
    return 0


def cmd_build_dataset(args) -> int:
    corpus = Corpus.load(args.corpus)
    split = SplitResult.load(args.split)
    labeled = dataset.build_labeled_dataset(corpus, split, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    catalog.write_ndjson(out / "train.ndjson", (catalog.outfit_to_dict(o) for o in labeled.train))
    catalog.write_ndjson(out / "test.ndjson", (catalog.outfit_to_dict(o) for o in labeled.test))
    print(
        f"train {len(labeled.train)}  test {len(labeled.test)}  "
        f"self-replacements {labeled.warnings.self_replacements}"
    )
    return 0


def cmd_train(args) -> int:
    corpus = Corpus.load(args.corpus)
    lexicon = _load_lexicon(Path(args.corpus), args.lexicon)
    labeled = _load_labeled(corpus, Path(args.data))
    extractor = service.build_extractor(args.features, lexicon)
    x = features.outfit_matrix(labeled.train, extractor)
    config = grader.MLPConfig.named(args.model, input_dim=x.shape[1])
    model = grader.build_model(config, seed=args.seed)
    train_config = grader.TrainConfig(
        learning_rate=args.lr,
        momentum=args.momentum,
        iterations=args.iterations,
        batch_size=args.batch_size,
        seed=args.seed,
        weight_decay=args.weight_decay,
    )
    model, log = grader.train(model, x, _labels(labeled.train), train_config)
    grader.save_checkpoint(model, args.out)
    if args.log:
        log.to_csv(args.log)
    print(f"wrote checkpoint {args.out} ({args.iterations} iterations)")
    return 0


def cmd_eval(args) -> int:
    corpus = Corpus.load(args.corpus)
    lexicon = _load_lexicon(Path(args.corpus), args.lexicon)
    labeled = _load_labeled(corpus, Path(args.data))
    extractor = service.build_extractor(args.features, lexicon)
    model = grader.load_checkpoint(args.model)
    report = evaluation.evaluate_model(model, labeled.test, extractor)
    if args.report_out:
        Path(args.report_out).write_text(
            json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
    if args.json:
        print(json.dumps(report.to_dict(), sort_keys=True))
    else:
        print(f"Accuracy: {report.accuracy:.2f}")
        print(report.detail_table())
    return 0


def cmd_ablate(args) -> int:
    corpus = Corpus.load(args.corpus)
    lexicon = _load_lexicon(Path(args.corpus), args.lexicon)
    labeled = _load_labeled(corpus, Path(args.data))
    extractors = [service.build_extractor(s.strip(), lexicon) for s in args.features.split(",")]
    train_config = grader.TrainConfig(
        learning_rate=args.lr,
        iterations=args.iterations,
        batch_size=args.batch_size,
        seed=args.seed,
    )
    report = evaluation.ablation_harness(
        labeled, extractors, train_config, model_name=args.model, model_seed=args.seed
    )
    if args.json:
        print(json.dumps(report.to_dict(), sort_keys=True))
    else:
        print(report.table())
    return 0


def cmd_recommend(args) -> int:
    items = [catalog.item_from_dict(d) for d in catalog.read_ndjson(args.pool)]
    model = grader.load_checkpoint(args.model)
    lexicon = CategoryLexicon.from_file(args.lexicon) if args.lexicon else CategoryLexicon.default()
    extractor = service.build_extractor(args.features, lexicon)
    recs = recommender.recommend(
        items, model, extractor, method=args.method,
        width=args.width, top_k=args.top, seed=args.seed,
    )
    lines = [catalog.dumps_ndjson_line(r.to_dict()) for r in recs]
    if args.out:
        Path(args.out).write_text("".join(lines), encoding="utf-8")
    else:
        sys.stdout.write("".join(lines))
    return 0


def cmd_human_sim(args) -> int:
    corpus = Corpus.load(args.corpus)
    lexicon = _load_lexicon(Path(args.corpus), args.lexicon)
    labeled = _load_labeled(corpus, Path(args.data))
    extractor = service.build_extractor(args.features, lexicon)
    model = grader.load_checkpoint(args.model)
    scored = []
    probs = grader.positive_probabilities(model, features.outfit_matrix(labeled.test, extractor))
    for outfit, p in zip(labeled.test, probs):
        outfit.score = float(p)
        scored.append(outfit)
    trials = evaluation.build_pairwise_trials(scored, seed=args.seed)
    if args.dump_trials:
        evaluation.dump_trials(trials, args.dump_trials)
    report = evaluation.simulate_annotators(
        trials, k=args.annotators, undecided_prob=args.undecided, seed=args.seed
    )
    if args.json:
        doc = report.to_dict()
        doc["group_a_size"] = trials.group_a_size
        doc["skipped_per_group"] = trials.skipped_per_group
        print(json.dumps(doc, sort_keys=True))
    else:
        print(f"group A size: {trials.group_a_size}  trials: {len(trials.trials)}")
        print(report.table())
    return 0


def cmd_serve(args) -> int:
    config = service.ServiceConfig.load(args.config)
    if args.port is not None:
        config.port = args.port
    service.serve(config)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="outfitgrader",
                                     description="Outfit grading and recommendation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus with a compatibility oracle")
    p.add_argument("--out", required=True)
    p.add_argument("--items-per-part", type=int, default=24)
    p.add_argument("--styles", type=int, default=6)
    p.add_argument("--positives", type=int, default=2000)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lexicon")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="disjoint train/test split over the outfit-item graph")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("build-dataset", help="expand positives with 1:2 sampled negatives")
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("train", help="train the outfit grader")
    p.add_argument("--corpus", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--features", default="composite")
    p.add_argument("--model", default="one_fc128")
    p.add_argument("--iterations", type=int, default=20000)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log")
    p.add_argument("--lexicon")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="classification metrics on the test partition")
    p.add_argument("--corpus", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--features", default="composite")
    p.add_argument("--report-out")
    p.add_argument("--json", action="store_true")
    p.add_argument("--lexicon")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train one grader per feature set and tabulate")
    p.add_argument("--corpus", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--features", default="type,palette,composite")
    p.add_argument("--model", default="one_fc128")
    p.add_argument("--iterations", type=int, default=4000)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.add_argument("--lexicon")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("recommend", help="top outfits from an item pool")
    p.add_argument("--pool", required=True, help="items NDJSON file")
    p.add_argument("--model", required=True)
    p.add_argument("--method", default="partial_bs", choices=recommender.METHOD_NAMES)
    p.add_argument("--width", type=int, default=3)
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--features", default="composite")
    p.add_argument("--lexicon")
    p.add_argument("--out")
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("human-sim", help="simulated pairwise annotator study")
    p.add_argument("--corpus", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--features", default="composite")
    p.add_argument("--annotators", type=int, default=5)
    p.add_argument("--undecided", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.add_argument("--dump-trials", help="write the paired outfits as NDJSON")
    p.add_argument("--lexicon")
    p.set_defaults(func=cmd_human_sim)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--config", required=True, help="service config JSON")
    p.add_argument("--port", type=int)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except KNOWN_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
