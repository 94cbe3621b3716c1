"""Command-line interface.

Subcommands: ``rewrite`` (collect rewrites), ``featurize`` (corpus to
feature file), ``train`` (feature file to model), ``detect`` (score
texts), ``eval`` (full protocols), ``cache`` (inspect a response cache).

Exit codes: 0 success (``detect``: every input judged human), 10 at
least one input judged machine, 2 usage or configuration error, 3
runtime failure, 12 feature-schema mismatch.  Endpoint credentials are
read from the environment only and never accepted as flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass

from .corpus import SplitSpec, load_corpus
from .errors import AuthError, RewriteDetectError, SchemaMismatch
from .evaluation import (
    DEFAULT_LENGTH_EDGES,
    render_table,
    run_adaptive,
    run_in_domain,
    run_ood,
)
from .features import (
    extract_features,
    featurize_corpus,
    read_features,
    write_features,
)
from .llm import (
    CachingRewriter,
    ChatCompletionClient,
    EndpointConfig,
    MockRewriter,
    MockRewriterConfig,
    RemoteRewriter,
    ResponseCache,
    cache_key,
    CompletionRequest,
)
from .model import TrainConfig, load_model, predict, save_model, train
from .prompts import builtin_catalog, load_catalog

log = logging.getLogger(__name__)

EXIT_HUMAN = 0
EXIT_MACHINE = 10
EXIT_USAGE = 2
EXIT_RUNTIME = 3
EXIT_SCHEMA = 12


@dataclass(frozen=True)
class RunConfig:
    """Parsed settings shared by the pipeline subcommands."""

    scheme: str
    ngram_n: int
    samples: int
    reference: str
    seed: int
    train_fraction: float
    workers: int


def _rate_pair(value: str) -> tuple[str, float]:
    prompt_id, _, rate = value.partition("=")
    if not prompt_id or not rate:
        raise argparse.ArgumentTypeError(
            f"expected PROMPT_ID=RATE, got {value!r}"
        )
    try:
        return prompt_id, float(rate)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad rate in {value!r}") from exc


def _edges(value: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in value.split(",") if part.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated integers, got {value!r}"
        ) from exc


def _add_catalog_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--catalog",
        default="builtin",
        help="prompt catalog file, or 'builtin' for the shipped catalog",
    )


def _add_rewriter_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--rewriter",
        choices=("mock", "remote"),
        default="mock",
        help="rewriting backend (default: mock, fully offline)",
    )
    parser.add_argument("--cache", help="response cache file (JSONL)")
    parser.add_argument(
        "--base-url", help="override the endpoint base URL environment variable"
    )
    parser.add_argument(
        "--model-name", help="override the endpoint model environment variable"
    )
    parser.add_argument("--mock-human-rate", type=float, default=0.5)
    parser.add_argument("--mock-machine-rate", type=float, default=0.1)
    parser.add_argument("--mock-seed", type=int, default=0)
    parser.add_argument("--mock-marker", default="zzmachinezz")
    parser.add_argument(
        "--mock-evasion-rate",
        type=_rate_pair,
        action="append",
        default=[],
        metavar="PROMPT_ID=RATE",
        help="edit rate the mock applies after an evasion prompt (repeatable)",
    )


def _add_scheme_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--scheme",
        choices=("invariance", "equivariance", "uncertainty"),
        default="invariance",
    )
    parser.add_argument(
        "--k", type=int, default=5, help="sample count for the uncertainty scheme"
    )
    parser.add_argument("--ngram", type=int, default=1, help="n-gram size")
    parser.add_argument(
        "--reference",
        choices=("direct_rewrite", "original"),
        default="direct_rewrite",
        help="equivariance comparison reference",
    )


def _add_train_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--learning-rate", type=float, default=0.1)
    parser.add_argument("--epochs", type=int, default=500)
    parser.add_argument("--l2", type=float, default=1e-4)


def _load_catalog(args):
    if args.catalog == "builtin":
        return builtin_catalog()
    return load_catalog(args.catalog)


def _build_rewriter(args):
    if args.rewriter == "mock":
        config = MockRewriterConfig(
            edit_rate_human=args.mock_human_rate,
            edit_rate_machine=args.mock_machine_rate,
            seed=args.mock_seed,
            machine_marker=args.mock_marker,
            evasion_rates=tuple(args.mock_evasion_rate),
        )
        rewriter = MockRewriter(config)
        if args.cache:
            return CachingRewriter(rewriter, ResponseCache(args.cache))
        return rewriter
    endpoint = EndpointConfig.from_env(
        base_url=args.base_url, model_name=args.model_name
    )
    cache = ResponseCache(args.cache) if args.cache else None
    client = ChatCompletionClient(endpoint, cache=cache)
    return RemoteRewriter(client)


def cmd_rewrite(args) -> int:
    """Collect every intermediate rewrite for a corpus into a JSONL file.

    Failing documents are counted and skipped; their output is simply
    absent, and already-cached responses make reruns resumable.
    """
    corpus = load_corpus(args.corpus)
    catalog = _load_catalog(args)
    rewriter = _build_rewriter(args)
    records: list[dict] = []
    failures = 0
    for document in corpus:
        local = []
        try:
            extract_features(
                document.text,
                args.scheme,
                catalog,
                rewriter,
                ngram_n=args.ngram,
                samples=args.k,
                reference=args.reference,
                document_id=document.id,
                recorder=local.append,
            )
        except AuthError:
            raise
        except RewriteDetectError as exc:
            failures += 1
            log.error("document %s failed: %s", document.id, exc)
            continue
        records.extend(
            {
                "document_id": r.document_id,
                "prompt_id": r.prompt_id,
                "stage": r.stage,
                "sample_index": r.sample_index,
                "text": r.text,
            }
            for r in local
        )
    with open(args.out, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
    summary = (
        f"rewrote {len(corpus) - failures}/{len(corpus)} document(s), "
        f"{len(records)} rewrite(s) -> {args.out}"
    )
    if isinstance(rewriter, CachingRewriter):
        summary += f" (cache: {rewriter.hits} hit(s), {rewriter.misses} miss(es))"
    print(summary)
    if failures:
        print(f"{failures} document(s) failed", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


def cmd_featurize(args) -> int:
    """Extract feature vectors for a whole corpus into a feature file."""
    corpus = load_corpus(args.corpus)
    catalog = _load_catalog(args)
    rewriter = _build_rewriter(args)
    vectors = featurize_corpus(
        corpus,
        args.scheme,
        catalog,
        rewriter,
        ngram_n=args.ngram,
        samples=args.k,
        reference=args.reference,
        workers=args.workers,
    )
    rows = [(d.id, d.label, v) for d, v in zip(corpus, vectors)]
    write_features(args.out, rows)
    print(
        f"featurized {len(rows)} document(s) -> {args.out} "
        f"(schema {vectors[0].schema_fingerprint[:12]}...)"
        if rows
        else f"featurized 0 document(s) -> {args.out}"
    )
    return 0


def cmd_train(args) -> int:
    """Train a detector from one or more feature files."""
    rows = []
    for path in args.features:
        rows.extend(read_features(path))
    fingerprints = {vector.schema_fingerprint for _, _, vector in rows}
    if len(fingerprints) > 1:
        raise SchemaMismatch(
            f"feature files span {len(fingerprints)} different schemas"
        )
    config = TrainConfig(
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        l2=args.l2,
        seed=args.seed,
    )
    model = train([(vector, label) for _, label, vector in rows], config)
    save_model(args.model_file, model)
    print(
        f"trained on {len(rows)} example(s), dim {model.dim}, "
        f"final loss {model.training_meta['final_loss']:.6f} -> {args.model_file}"
    )
    return 0


def cmd_detect(args) -> int:
    """Score one or more texts with a trained model.

    Prints one line per input (label, probability, feature vector) in
    input order.  Exit code 10 if any input is judged machine, 0 if all
    are judged human.
    """
    model = load_model(args.model_file)
    catalog = _load_catalog(args)
    rewriter = _build_rewriter(args)
    texts: list[str] = []
    if args.text is not None:
        texts.append(args.text)
    if args.input:
        with open(args.input, "r", encoding="utf-8") as handle:
            texts.extend(line for line in handle.read().splitlines() if line.strip())
    if not texts:
        raise ValueError("nothing to score: pass TEXT or --input FILE")
    any_machine = False
    for index, text in enumerate(texts):
        vector = extract_features(
            text,
            args.scheme,
            catalog,
            rewriter,
            ngram_n=args.ngram,
            samples=args.k,
            reference=args.reference,
            document_id=f"input{index}",
        )
        prediction = predict(model, vector)
        any_machine = any_machine or prediction.label == "machine"
        values = ",".join("%.17g" % v for v in vector.values)
        print(f"{prediction.label}\t{prediction.probability_machine:.6f}\t[{values}]")
    return EXIT_MACHINE if any_machine else EXIT_HUMAN


def cmd_eval(args) -> int:
    """Run an evaluation protocol and print its report table."""
    catalog = _load_catalog(args)
    rewriter = _build_rewriter(args)
    split_spec = SplitSpec(
        train_fraction=args.split,
        seed=args.seed,
        stratify_by=tuple(args.stratify_by.split(",")),
    )
    train_config = TrainConfig(
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        l2=args.l2,
        seed=args.seed,
    )
    common = dict(
        train_config=train_config,
        ngram_n=args.ngram,
        samples=args.k,
        reference=args.reference,
        workers=args.workers,
        out_dir=args.out,
    )
    if args.protocol in ("in_domain", "length"):
        if len(args.corpus) != 1:
            raise ValueError(f"{args.protocol} evaluation takes exactly one --corpus")
        report = run_in_domain(
            load_corpus(args.corpus[0]),
            args.scheme,
            catalog,
            rewriter,
            split_spec=split_spec,
            length_edges=args.length_edges if args.protocol == "length" else None,
            **common,
        )
    elif args.protocol == "ood":
        if not args.corpus or not args.test_corpus:
            raise ValueError("ood evaluation needs --corpus (sources) and --test-corpus")
        report = run_ood(
            [load_corpus(path) for path in args.corpus],
            load_corpus(args.test_corpus),
            args.scheme,
            catalog,
            rewriter,
            **common,
        )
    else:  # adaptive
        if len(args.corpus) != 1:
            raise ValueError("adaptive evaluation takes exactly one --corpus")
        if not args.train_prompts or not args.test_prompts:
            raise ValueError("adaptive evaluation needs --train-prompts and --test-prompts")
        report = run_adaptive(
            load_corpus(args.corpus[0]),
            catalog,
            rewriter,
            train_prompt_ids=args.train_prompts.split(","),
            test_prompt_ids=args.test_prompts.split(","),
            scheme=args.scheme,
            split_spec=split_spec,
            **common,
        )
    print(render_table(report))
    print(f"config_fingerprint: {report.config_fingerprint}")
    if args.out:
        print(f"artifacts written to {args.out}")
    return 0


def cmd_cache(args) -> int:
    """Inspect a response cache: entry counts per model and key health."""
    entries: dict[str, dict] = {}
    lines = 0
    try:
        with open(args.cache, "r", encoding="utf-8") as handle:
            for line in handle:
                if not line.strip():
                    continue
                lines += 1
                record = json.loads(line)
                entries[record["key"]] = record
    except FileNotFoundError:
        print(f"cache {args.cache}: no such file")
        return EXIT_RUNTIME
    by_model: dict[str, int] = {}
    mismatched = 0
    for record in entries.values():
        by_model[record.get("model_name", "?")] = (
            by_model.get(record.get("model_name", "?"), 0) + 1
        )
        request = CompletionRequest(
            model_name=record["model_name"],
            prompt_text=record["prompt_text"],
            temperature=record["temperature"],
            sample_index=record["sample_index"],
            max_output_tokens=record["max_output_tokens"],
        )
        if cache_key(request) != record["key"]:
            mismatched += 1
    print(f"cache {args.cache}: {len(entries)} entr(y/ies) across {lines} line(s)")
    for model_name in sorted(by_model):
        print(f"  {model_name}: {by_model[model_name]}")
    if mismatched:
        print(f"  WARNING: {mismatched} entr(y/ies) fail key verification")
        return EXIT_RUNTIME
    return 0


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rewritedetect",
        description=(
            "Detect machine-generated text by measuring how much a language "
            "model edits it when asked to rewrite."
        ),
    )
    parser.add_argument("--verbose", action="store_true", help="log progress details")
    subcommands = parser.add_subparsers(dest="command", required=True)

    rewrite = subcommands.add_parser(
        "rewrite", help="collect rewrites for a corpus into a JSONL file"
    )
    rewrite.add_argument("--corpus", required=True)
    rewrite.add_argument("--out", required=True)
    _add_catalog_arg(rewrite)
    _add_rewriter_args(rewrite)
    _add_scheme_args(rewrite)
    rewrite.set_defaults(func=cmd_rewrite)

    featurize = subcommands.add_parser(
        "featurize", help="extract feature vectors for a corpus"
    )
    featurize.add_argument("--corpus", required=True)
    featurize.add_argument("--out", required=True)
    featurize.add_argument("--workers", type=int, default=4)
    _add_catalog_arg(featurize)
    _add_rewriter_args(featurize)
    _add_scheme_args(featurize)
    featurize.set_defaults(func=cmd_featurize)

    train_cmd = subcommands.add_parser(
        "train", help="train a detector from feature files"
    )
    train_cmd.add_argument(
        "--features", action="append", required=True,
        help="feature file (repeatable; all must share one schema)",
    )
    train_cmd.add_argument("--model-file", required=True)
    train_cmd.add_argument("--seed", type=int, default=0)
    _add_train_args(train_cmd)
    train_cmd.set_defaults(func=cmd_train)

    detect = subcommands.add_parser("detect", help="score texts with a model")
    detect.add_argument("text", nargs="?", help="text to score")
    detect.add_argument("--input", help="file with one text per line")
    detect.add_argument("--model-file", required=True)
    _add_catalog_arg(detect)
    _add_rewriter_args(detect)
    _add_scheme_args(detect)
    detect.set_defaults(func=cmd_detect)

    evaluate = subcommands.add_parser("eval", help="run an evaluation protocol")
    evaluate.add_argument(
        "--protocol",
        choices=("in_domain", "ood", "adaptive", "length"),
        default="in_domain",
    )
    evaluate.add_argument(
        "--corpus", action="append", default=[],
        help="corpus file (repeat for ood training sources)",
    )
    evaluate.add_argument("--test-corpus", help="held-out corpus for ood")
    evaluate.add_argument("--train-prompts", help="comma-separated evasion prompt ids")
    evaluate.add_argument("--test-prompts", help="comma-separated evasion prompt ids")
    evaluate.add_argument("--split", type=float, default=0.8)
    evaluate.add_argument("--seed", type=int, default=0)
    evaluate.add_argument("--stratify-by", default="label")
    evaluate.add_argument(
        "--length-edges", type=_edges, default=DEFAULT_LENGTH_EDGES,
        metavar="E1,E2,...",
    )
    evaluate.add_argument("--workers", type=int, default=4)
    evaluate.add_argument("--out", help="directory for run artifacts")
    _add_catalog_arg(evaluate)
    _add_rewriter_args(evaluate)
    _add_scheme_args(evaluate)
    _add_train_args(evaluate)
    evaluate.set_defaults(func=cmd_eval)

    cache = subcommands.add_parser("cache", help="inspect a response cache")
    cache.add_argument("--cache", required=True)
    cache.set_defaults(func=cmd_cache)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except SchemaMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RewriteDetectError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
