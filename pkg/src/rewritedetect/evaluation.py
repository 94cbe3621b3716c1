"""Evaluation harness: experiment protocols, F1 reporting, and a
one-sided Welch t test for comparing feature distributions.

All protocols share one shape: featurize a train and a test set, fit a
detector, score the test set, and return an :class:`EvalReport` whose
``config_fingerprint`` covers every setting that influenced the result.
Reports serialize deterministically, so rerunning an identical
configuration yields byte-identical report files.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import (
    Document,
    SplitSpec,
    bucket_name_for,
    corpus_fingerprint,
    split,
)
from .errors import (
    DuplicateId,
    InsufficientData,
    MissingVariant,
    OverlapDetected,
    ZeroVariance,
)
from .features import FeatureVector, featurize_corpus, write_features
from .model import DetectorModel, TrainConfig, predict, save_model, train
from .prompts import PromptCatalog

LABELS = ("human", "machine")
DEFAULT_LENGTH_EDGES = (10, 25, 50, 100, 200)

# Evasion prompt id meaning "no evasion applied"; usable on either side
# of an adaptive-evasion experiment.
NO_EVASION = "none"


# ---------------------------------------------------------------------------
# F1 reporting
# ---------------------------------------------------------------------------


@dataclass
class EvalReport:
    """Counts and metrics, overall and per slice.

    ``machine`` is the positive class.  Conventions: precision and
    recall are 0 when their denominators are 0, and F1 is 0 when
    precision + recall is 0.
    """

    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float
    slices: dict[str, "EvalReport"] = field(default_factory=dict)
    config_fingerprint: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def _predicted_label(prediction) -> str:
    return prediction.label if hasattr(prediction, "label") else str(prediction)


def _report_from_counts(tp: int, fp: int, fn: int, tn: int) -> EvalReport:
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return EvalReport(tp=tp, fp=fp, fn=fn, tn=tn, precision=precision,
                      recall=recall, f1=f1)


def _count(predicted: Sequence[str], actual: Sequence[str]) -> EvalReport:
    tp = fp = fn = tn = 0
    for p, a in zip(predicted, actual):
        if p == "machine":
            if a == "machine":
                tp += 1
            else:
                fp += 1
        else:
            if a == "machine":
                fn += 1
            else:
                tn += 1
    return _report_from_counts(tp, fp, fn, tn)


def f1_report(
    predictions: Sequence,
    labels: Sequence[str],
    slices: Mapping[str, Sequence[str]] | None = None,
    *,
    exhaustive: Mapping[str, Sequence[str]] | None = None,
    config_fingerprint: str = "",
    meta: dict | None = None,
) -> EvalReport:
    """Score predictions against labels, overall and per slice.

    ``predictions`` may be :class:`~rewritedetect.model.Prediction`
    objects or bare label strings.  ``slices`` maps a dimension name to
    one value per example; each distinct value becomes a sub-report
    keyed ``"name=value"``.  ``exhaustive`` lists values that must
    appear even when no example has them (empty sub-reports).
    """
    predicted = [_predicted_label(p) for p in predictions]
    actual = list(labels)
    if len(predicted) != len(actual):
        raise ValueError(
            f"{len(predicted)} predictions vs {len(actual)} labels"
        )
    for value in predicted + actual:
        if value not in LABELS:
            raise ValueError(f"unknown label {value!r}; expected one of {LABELS}")
    report = _count(predicted, actual)
    report.config_fingerprint = config_fingerprint
    report.meta = dict(meta or {})
    for name, values in (slices or {}).items():
        values = list(values)
        if len(values) != len(actual):
            raise ValueError(
                f"slice {name!r} has {len(values)} values for {len(actual)} examples"
            )
        groups = sorted(set(values) | set((exhaustive or {}).get(name, ())))
        for group in groups:
            indices = [i for i, v in enumerate(values) if v == group]
            sub = _count([predicted[i] for i in indices],
                         [actual[i] for i in indices])
            report.slices[f"{name}={group}"] = sub
    return report


def _report_line(
    slice_name: str, report: EvalReport, config_fingerprint: str, meta: dict | None
) -> str:
    record: dict = {
        "slice": slice_name,
        "n": report.n,
        "tp": report.tp,
        "fp": report.fp,
        "fn": report.fn,
        "tn": report.tn,
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
        "config_fingerprint": config_fingerprint,
    }
    if meta:
        record["meta"] = meta
    return json.dumps(record, sort_keys=True, separators=(",", ":"), default=str)


def serialize_report(report: EvalReport) -> str:
    """Deterministic line-delimited form: one line overall, then one per
    slice in sorted order.  Equal reports serialize to equal bytes."""
    lines = [_report_line("overall", report, report.config_fingerprint, report.meta)]
    for key in sorted(report.slices):
        lines.append(
            _report_line(key, report.slices[key], report.config_fingerprint, None)
        )
    return "\n".join(lines) + "\n"


def render_table(report: EvalReport) -> str:
    """Human-readable table of the overall row and every slice."""
    rows = [("overall", report)] + [
        (key, report.slices[key]) for key in sorted(report.slices)
    ]
    name_width = max(len(name) for name, _ in rows)
    header = (
        f"{'slice':<{name_width}}  {'n':>5} {'tp':>5} {'fp':>5} {'fn':>5} "
        f"{'tn':>5}  {'precision':>9} {'recall':>9} {'f1':>9}"
    )
    lines = [header, "-" * len(header)]
    for name, r in rows:
        lines.append(
            f"{name:<{name_width}}  {r.n:>5} {r.tp:>5} {r.fp:>5} {r.fn:>5} "
            f"{r.tn:>5}  {r.precision:>9.4f} {r.recall:>9.4f} {r.f1:>9.4f}"
        )
    return "\n".join(lines)


def feature_histograms(
    vectors: Sequence[FeatureVector], labels: Sequence[str], bins: int = 20
) -> str:
    """Per-feature, per-label histogram dump as TSV over [0, 1]."""
    if len(vectors) != len(labels):
        raise ValueError(f"{len(vectors)} vectors vs {len(labels)} labels")
    lines = ["feature\tlabel\tbin_lo\tbin_hi\tcount"]
    if not vectors:
        return "\n".join(lines) + "\n"
    dim = len(vectors[0])
    edges = np.linspace(0.0, 1.0, bins + 1)
    for index in range(dim):
        for label in sorted(set(labels)):
            values = [
                v.values[index] for v, l in zip(vectors, labels) if l == label
            ]
            counts, _ = np.histogram(values, bins=edges)
            for b in range(bins):
                lines.append(
                    f"{index}\t{label}\t{edges[b]:.4g}\t{edges[b + 1]:.4g}"
                    f"\t{int(counts[b])}"
                )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Welch t test
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    p_value: float
    n_a: int
    n_b: int
    direction: str
    df: float
    variant: str = "welch-unequal-variance"


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    max_iterations, eps, tiny = 300, 3e-16, 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iterations + 1):
        m2 = 2 * m
        numerator = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + numerator * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + numerator / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        numerator = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + numerator * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + numerator / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) by continued fraction, using the symmetry
    I_x(a,b) = 1 - I_{1-x}(b,a) to stay in the fast-converging region."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf(t: float, df: float) -> float:
    """P(T > t) for Student's t with ``df`` degrees of freedom.

    Uses the identity P(T > t) = I_x(df/2, 1/2) / 2 with
    x = df / (df + t^2) for t >= 0, reflected for t < 0.
    """
    if df <= 0:
        raise ValueError(f"degrees of freedom must be > 0, got {df}")
    x = df / (df + t * t)
    tail = 0.5 * regularized_incomplete_beta(0.5 * df, 0.5, x)
    return tail if t >= 0 else 1.0 - tail


def welch_t_test(
    group_a: Sequence[float],
    group_b: Sequence[float],
    direction: str = "greater",
) -> TTestResult:
    """One-sided Welch t test with unequal variances.

    ``direction`` states the alternative about group A's mean:
    ``greater`` or ``less`` than group B's.  Degrees of freedom follow
    the Welch-Satterthwaite approximation.  Swapping the groups under
    the same direction gives p-values summing to exactly 1.
    """
    if direction not in ("greater", "less"):
        raise ValueError(f"direction must be 'greater' or 'less', got {direction!r}")
    a = [float(v) for v in group_a]
    b = [float(v) for v in group_b]
    if len(a) < 2 or len(b) < 2:
        raise InsufficientData(
            f"need at least 2 observations per group, got {len(a)} and {len(b)}"
        )
    mean_a, mean_b = sum(a) / len(a), sum(b) / len(b)
    var_a = sum((v - mean_a) ** 2 for v in a) / (len(a) - 1)
    var_b = sum((v - mean_b) ** 2 for v in b) / (len(b) - 1)
    if var_a == 0.0 and var_b == 0.0:
        raise ZeroVariance("both groups are constant; t statistic is undefined")
    sq_a, sq_b = var_a / len(a), var_b / len(b)
    se = math.sqrt(sq_a + sq_b)
    t = (mean_a - mean_b) / se
    df = (sq_a + sq_b) ** 2 / (
        (sq_a**2 / (len(a) - 1)) + (sq_b**2 / (len(b) - 1))
    )
    p = student_t_sf(t, df) if direction == "greater" else student_t_sf(-t, df)
    return TTestResult(
        t_statistic=t, p_value=p, n_a=len(a), n_b=len(b),
        direction=direction, df=df,
    )


# ---------------------------------------------------------------------------
# Experiment protocols
# ---------------------------------------------------------------------------


def config_fingerprint(settings: Mapping) -> str:
    """Hash of a settings mapping; every output-affecting knob goes in."""
    blob = json.dumps(settings, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _rewriter_fields(rewriter) -> dict:
    if rewriter is None:
        return {"kind": "none"}
    if hasattr(rewriter, "fingerprint_fields"):
        return rewriter.fingerprint_fields()
    return {"kind": getattr(rewriter, "__name__", type(rewriter).__name__)}


def _persist(
    out_dir: str,
    *,
    settings: dict,
    fingerprint: str,
    train_rows: list[tuple[str, str, FeatureVector]],
    test_rows: list[tuple[str, str, FeatureVector]],
    model: DetectorModel,
    report: EvalReport,
) -> None:
    """Write features, model, report, manifest, and histograms together.

    Refuses a directory already holding artifacts from a different
    configuration, so one directory never mixes fingerprints.
    """
    os.makedirs(out_dir, exist_ok=True)
    manifest_path = os.path.join(out_dir, "run.json")
    if os.path.exists(manifest_path):
        with open(manifest_path, "r", encoding="utf-8") as handle:
            previous = json.load(handle)
        if previous.get("config_fingerprint") != fingerprint:
            raise ValueError(
                f"{out_dir} holds artifacts for config "
                f"{previous.get('config_fingerprint', '?')[:12]}...; refusing to "
                f"mix with {fingerprint[:12]}... (use a fresh directory)"
            )
    with open(manifest_path, "w", encoding="utf-8") as handle:
        json.dump(
            {"config_fingerprint": fingerprint, "settings": settings},
            handle, sort_keys=True, indent=2, default=str,
        )
        handle.write("\n")
    write_features(os.path.join(out_dir, "features_train.jsonl"), train_rows)
    write_features(os.path.join(out_dir, "features_test.jsonl"), test_rows)
    model.training_meta["config_fingerprint"] = fingerprint
    save_model(os.path.join(out_dir, "model.txt"), model)
    with open(os.path.join(out_dir, "report.jsonl"), "w", encoding="utf-8") as handle:
        handle.write(serialize_report(report))
    with open(
        os.path.join(out_dir, "feature_histograms.tsv"), "w", encoding="utf-8"
    ) as handle:
        handle.write(
            feature_histograms(
                [row[2] for row in test_rows], [row[1] for row in test_rows]
            )
        )


def _fit_and_score(
    train_docs: Sequence[Document],
    test_docs: Sequence[Document],
    scheme: str,
    catalog: PromptCatalog,
    rewriter,
    train_config: TrainConfig,
    *,
    ngram_n: int,
    samples: int,
    reference: str,
    workers: int,
):
    train_vectors = featurize_corpus(
        train_docs, scheme, catalog, rewriter,
        ngram_n=ngram_n, samples=samples, reference=reference, workers=workers,
    )
    test_vectors = featurize_corpus(
        test_docs, scheme, catalog, rewriter,
        ngram_n=ngram_n, samples=samples, reference=reference, workers=workers,
    )
    model = train(
        list(zip(train_vectors, [d.label for d in train_docs])), train_config
    )
    predictions = [predict(model, vector) for vector in test_vectors]
    return train_vectors, test_vectors, model, predictions


def run_in_domain(
    corpus: Sequence[Document],
    scheme: str,
    catalog: PromptCatalog,
    rewriter,
    *,
    split_spec: SplitSpec = SplitSpec(),
    train_config: TrainConfig = TrainConfig(),
    ngram_n: int = 1,
    samples: int = 5,
    reference: str = "direct_rewrite",
    length_edges: Sequence[int] | None = None,
    workers: int = 1,
    out_dir: str | None = None,
) -> EvalReport:
    """Split one corpus, train on its train side, report on its test side.

    With ``length_edges`` the report also carries one slice per
    word-count bucket (the length-sensitivity protocol).
    """
    corpus = list(corpus)
    train_docs, test_docs = split(corpus, split_spec)
    settings = {
        "protocol": "length" if length_edges else "in_domain",
        "scheme": scheme,
        "catalog_version": catalog.version,
        "catalog_fingerprint": catalog.fingerprint(),
        "corpus_fingerprint": corpus_fingerprint(corpus),
        "rewriter": _rewriter_fields(rewriter),
        "ngram_n": ngram_n,
        "samples": samples,
        "reference": reference,
        "split": {
            "train_fraction": split_spec.train_fraction,
            "seed": split_spec.seed,
            "stratify_by": list(split_spec.stratify_by),
        },
        "train": {
            "learning_rate": train_config.learning_rate,
            "epochs": train_config.epochs,
            "l2": train_config.l2,
            "seed": train_config.seed,
        },
        "length_edges": list(length_edges) if length_edges else None,
    }
    fingerprint = config_fingerprint(settings)
    train_vectors, test_vectors, model, predictions = _fit_and_score(
        train_docs, test_docs, scheme, catalog, rewriter, train_config,
        ngram_n=ngram_n, samples=samples, reference=reference, workers=workers,
    )
    slices: dict[str, list[str]] = {
        "domain": [d.domain for d in test_docs],
        "generator": [d.generator for d in test_docs],
    }
    exhaustive: dict[str, list[str]] = {}
    if length_edges:
        edges = list(length_edges)
        slices["length"] = [bucket_name_for(d.word_count, edges) for d in test_docs]
        bounds = [0, *edges]
        exhaustive["length"] = [
            f"[{low},{high})" for low, high in zip(bounds, bounds[1:])
        ] + [f"[{bounds[-1]},inf)"]
    report = f1_report(
        predictions,
        [d.label for d in test_docs],
        slices,
        exhaustive=exhaustive,
        config_fingerprint=fingerprint,
        meta={
            "protocol": settings["protocol"],
            "scheme": scheme,
            "train_size": len(train_docs),
            "test_size": len(test_docs),
        },
    )
    if out_dir is not None:
        _persist(
            out_dir,
            settings=settings,
            fingerprint=fingerprint,
            train_rows=[
                (d.id, d.label, v) for d, v in zip(train_docs, train_vectors)
            ],
            test_rows=[(d.id, d.label, v) for d, v in zip(test_docs, test_vectors)],
            model=model,
            report=report,
        )
    return report


def run_ood(
    train_corpora: Sequence[Sequence[Document]],
    test_corpus: Sequence[Document],
    scheme: str,
    catalog: PromptCatalog,
    rewriter,
    *,
    train_config: TrainConfig = TrainConfig(),
    ngram_n: int = 1,
    samples: int = 5,
    reference: str = "direct_rewrite",
    workers: int = 1,
    out_dir: str | None = None,
) -> EvalReport:
    """Train on the union of source corpora, test on a held-out target.

    Any document id shared between train and test raises
    OverlapDetected; ids duplicated across the sources raise
    DuplicateId.
    """
    train_corpora = [list(c) for c in train_corpora]
    test_docs = list(test_corpus)
    if not train_corpora or any(not c for c in train_corpora):
        raise ValueError("every train corpus must be non-empty")
    if not test_docs:
        raise ValueError("test corpus is empty")
    train_docs: list[Document] = []
    seen: set[str] = set()
    for corpus in train_corpora:
        for document in corpus:
            if document.id in seen:
                raise DuplicateId(
                    f"document id {document.id!r} appears in two train corpora"
                )
            seen.add(document.id)
            train_docs.append(document)
    overlap = seen & {d.id for d in test_docs}
    if overlap:
        raise OverlapDetected(
            f"train and test share {len(overlap)} document id(s), "
            f"e.g. {sorted(overlap)[:3]}"
        )
    settings = {
        "protocol": "ood",
        "scheme": scheme,
        "catalog_version": catalog.version,
        "catalog_fingerprint": catalog.fingerprint(),
        "train_fingerprints": [corpus_fingerprint(c) for c in train_corpora],
        "test_fingerprint": corpus_fingerprint(test_docs),
        "rewriter": _rewriter_fields(rewriter),
        "ngram_n": ngram_n,
        "samples": samples,
        "reference": reference,
        "train": {
            "learning_rate": train_config.learning_rate,
            "epochs": train_config.epochs,
            "l2": train_config.l2,
            "seed": train_config.seed,
        },
    }
    fingerprint = config_fingerprint(settings)
    train_vectors, test_vectors, model, predictions = _fit_and_score(
        train_docs, test_docs, scheme, catalog, rewriter, train_config,
        ngram_n=ngram_n, samples=samples, reference=reference, workers=workers,
    )
    report = f1_report(
        predictions,
        [d.label for d in test_docs],
        {
            "domain": [d.domain for d in test_docs],
            "generator": [d.generator for d in test_docs],
        },
        config_fingerprint=fingerprint,
        meta={
            "protocol": "ood",
            "transfer": "ood",
            "source_domains": sorted({d.domain for d in train_docs}),
            "target_domains": sorted({d.domain for d in test_docs}),
            "scheme": scheme,
            "train_size": len(train_docs),
            "test_size": len(test_docs),
        },
    )
    if out_dir is not None:
        _persist(
            out_dir,
            settings=settings,
            fingerprint=fingerprint,
            train_rows=[
                (d.id, d.label, v) for d, v in zip(train_docs, train_vectors)
            ],
            test_rows=[(d.id, d.label, v) for d, v in zip(test_docs, test_vectors)],
            model=model,
            report=report,
        )
    return report


def run_adaptive(
    corpus: Sequence[Document],
    catalog: PromptCatalog,
    rewriter,
    *,
    train_prompt_ids: Sequence[str],
    test_prompt_ids: Sequence[str],
    scheme: str = "invariance",
    split_spec: SplitSpec = SplitSpec(),
    train_config: TrainConfig = TrainConfig(),
    ngram_n: int = 1,
    samples: int = 5,
    reference: str = "direct_rewrite",
    variants: Mapping[tuple[str, str], str] | None = None,
    workers: int = 1,
    out_dir: str | None = None,
) -> EvalReport:
    """Adaptive-evasion protocol.

    Machine documents are first passed through evasion prompts; training
    sees the variants named by ``train_prompt_ids``, the held-out test
    side those named by ``test_prompt_ids`` (disjoint sets).  The id
    ``"none"`` means the unevaded text.  Human documents pass through
    unchanged, repeated once per prompt id to keep the sides balanced.

    Pre-generated variant texts may be supplied as a mapping
    ``(document_id, prompt_id) -> text``; a required variant that is
    absent with no rewriter to generate it raises MissingVariant.
    """
    train_ids = list(train_prompt_ids)
    test_ids = list(test_prompt_ids)
    if not train_ids or not test_ids:
        raise ValueError("both prompt id lists must be non-empty")
    shared = set(train_ids) & set(test_ids)
    if shared:
        raise OverlapDetected(
            f"train and test evasion prompts overlap: {sorted(shared)}"
        )
    for prompt_id in train_ids + test_ids:
        if prompt_id == NO_EVASION:
            continue
        try:
            prompt = catalog.by_id(prompt_id)
        except KeyError as exc:
            raise ValueError(f"unknown evasion prompt id {prompt_id!r}") from exc
        if prompt.kind != "evasion":
            raise ValueError(
                f"prompt {prompt_id!r} has kind {prompt.kind!r}, not evasion"
            )

    def variant_text(document: Document, prompt_id: str) -> str:
        if prompt_id == NO_EVASION or document.label != "machine":
            return document.text
        if variants is not None:
            key = (document.id, prompt_id)
            if key in variants:
                return variants[key]
            if rewriter is None:
                raise MissingVariant(
                    f"no pre-generated variant for document {document.id!r} "
                    f"under prompt {prompt_id!r} and no rewriter configured"
                )
        elif rewriter is None:
            raise MissingVariant(
                f"variant for document {document.id!r} under prompt "
                f"{prompt_id!r} requires a rewriter or a variants mapping"
            )
        return rewriter(
            catalog.by_id(prompt_id), document.text, sample_index=0, stage="direct"
        )

    def expand(documents: Sequence[Document], prompt_ids: Sequence[str]):
        expanded: list[Document] = []
        origin: list[str] = []
        for prompt_id in prompt_ids:
            for document in documents:
                expanded.append(
                    Document(
                        id=f"{document.id}@{prompt_id}",
                        text=variant_text(document, prompt_id),
                        label=document.label,
                        domain=document.domain,
                        generator=document.generator,
                    )
                )
                origin.append(prompt_id)
        return expanded, origin

    corpus = list(corpus)
    base_train, base_test = split(corpus, split_spec)
    train_docs, _ = expand(base_train, train_ids)
    test_docs, test_origin = expand(base_test, test_ids)
    if rewriter is None:
        raise ValueError("a rewriter is required to extract features")
    settings = {
        "protocol": "adaptive",
        "scheme": scheme,
        "catalog_version": catalog.version,
        "catalog_fingerprint": catalog.fingerprint(),
        "corpus_fingerprint": corpus_fingerprint(corpus),
        "rewriter": _rewriter_fields(rewriter),
        "train_prompts": train_ids,
        "test_prompts": test_ids,
        "ngram_n": ngram_n,
        "samples": samples,
        "reference": reference,
        "split": {
            "train_fraction": split_spec.train_fraction,
            "seed": split_spec.seed,
            "stratify_by": list(split_spec.stratify_by),
        },
        "train": {
            "learning_rate": train_config.learning_rate,
            "epochs": train_config.epochs,
            "l2": train_config.l2,
            "seed": train_config.seed,
        },
    }
    fingerprint = config_fingerprint(settings)
    train_vectors, test_vectors, model, predictions = _fit_and_score(
        train_docs, test_docs, scheme, catalog, rewriter, train_config,
        ngram_n=ngram_n, samples=samples, reference=reference, workers=workers,
    )
    report = f1_report(
        predictions,
        [d.label for d in test_docs],
        {"evasion": test_origin},
        config_fingerprint=fingerprint,
        meta={
            "protocol": "adaptive",
            "scheme": scheme,
            "train_prompts": train_ids,
            "test_prompts": test_ids,
            "train_size": len(train_docs),
            "test_size": len(test_docs),
        },
    )
    if out_dir is not None:
        _persist(
            out_dir,
            settings=settings,
            fingerprint=fingerprint,
            train_rows=[
                (d.id, d.label, v) for d, v in zip(train_docs, train_vectors)
            ],
            test_rows=[(d.id, d.label, v) for d, v in zip(test_docs, test_vectors)],
            model=model,
            report=report,
        )
    return report
