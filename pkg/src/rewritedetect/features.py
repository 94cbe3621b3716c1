"""Feature extraction: from a document and a prompt catalog to an
ordered vector of rewrite-similarity features.

Three schemes are supported:

* ``invariance``: rewrite the document once per catalog prompt and
  measure similarity between each rewrite and the original.
* ``equivariance``: for each transformation pair, transform the
  document, rewrite the transformed text, undo the transformation, and
  measure similarity of the round trip against a reference (the direct
  rewrite by default, or the original).
* ``uncertainty``: draw K rewrites of the same prompt and measure
  similarity between every unordered pair of samples; the original text
  never enters the comparisons.

Every vector lays out all bag-of-n-grams scores first, then all edit
similarities, in catalog (or pair-index) order.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .errors import EmptyInput, ParseError, SchemaMismatch
from .metrics import (
    TOKENIZER_ID,
    TokenSequence,
    bag_of_ngrams_overlap,
    levenshtein_similarity,
    tokenize,
)
from .prompts import PromptCatalog, RewritePrompt

log = logging.getLogger(__name__)

SCHEMES = ("invariance", "equivariance", "uncertainty")
EQUIVARIANCE_REFERENCES = ("direct_rewrite", "original")

DEFAULT_NGRAM_N = 1
DEFAULT_SAMPLES = 5


@dataclass(frozen=True)
class FeatureVector:
    """Ordered feature values plus the schema they were extracted under."""

    values: tuple[float, ...]
    schema_fingerprint: str
    scheme: str

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class RewriteRecord:
    """One intermediate rewrite, for audit or replay."""

    document_id: str
    prompt_id: str
    stage: str
    sample_index: int
    text: str


Recorder = Callable[[RewriteRecord], None]


def schema_fingerprint(
    catalog: PromptCatalog,
    scheme: str,
    *,
    ngram_n: int,
    k: int,
    reference: str | None = None,
    prompt_id: str | None = None,
) -> str:
    """Hash of everything that fixes the meaning and order of features.

    Covers the catalog content, the scheme, the n-gram size, the
    tokenizer version, and the vector-shaping parameter K; the
    equivariance reference and the uncertainty prompt are included when
    they apply.
    """
    parts: dict = {
        "catalog": catalog.fingerprint(),
        "scheme": scheme,
        "ngram_n": ngram_n,
        "tokenizer": TOKENIZER_ID,
        "k": k,
    }
    if reference is not None:
        parts["reference"] = reference
    if prompt_id is not None:
        parts["prompt"] = prompt_id
    blob = json.dumps(parts, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _call(rewriter, prompt: RewritePrompt, text: str, sample_index: int, stage: str,
          document_id: str) -> str:
    try:
        return rewriter(prompt, text, sample_index=sample_index, stage=stage)
    except Exception as exc:
        note = (
            f"while rewriting document={document_id!r} "
            f"prompt={prompt.id!r} stage={stage!r}"
        )
        if hasattr(exc, "add_note"):
            exc.add_note(note)
        else:
            log.error("rewrite failed %s: %s", note, exc)
        raise


def _similarity(
    reference_text: str,
    reference_tokens: TokenSequence,
    candidate_text: str,
    ngram_n: int,
    *,
    document_id: str,
    prompt_id: str,
) -> tuple[float, float]:
    """(bag overlap, edit similarity) of a candidate against a reference.

    A blank candidate or reference yields (0, 0): an empty reply says
    nothing about edit behaviour, so it scores as maximally edited.
    """
    if not candidate_text.strip() or not reference_text.strip():
        log.warning(
            "blank rewrite for document=%r prompt=%r; features set to 0",
            document_id,
            prompt_id,
        )
        return 0.0, 0.0
    overlap = bag_of_ngrams_overlap(reference_tokens, tokenize(candidate_text), ngram_n)
    edit = levenshtein_similarity(reference_text, candidate_text)
    return overlap, edit


def _require_text(document: str) -> None:
    if not document.strip():
        raise EmptyInput("document text is blank")


def extract_invariance(
    document: str,
    catalog: PromptCatalog,
    rewriter,
    *,
    ngram_n: int = DEFAULT_NGRAM_N,
    document_id: str = "doc",
    recorder: Recorder | None = None,
) -> FeatureVector:
    """Rewrite once per invariance prompt; compare each rewrite to the
    original.  Vector: [R_1..R_K, D_1..D_K] in catalog order."""
    _require_text(document)
    prompts = catalog.invariance_prompts()
    if not prompts:
        raise ValueError("catalog has no invariance prompts")
    document_tokens = tokenize(document)
    overlaps: list[float] = []
    edits: list[float] = []
    for prompt in prompts:
        rewritten = _call(rewriter, prompt, document, 0, "direct", document_id)
        if recorder is not None:
            recorder(RewriteRecord(document_id, prompt.id, "direct", 0, rewritten))
        overlap, edit = _similarity(
            document,
            document_tokens,
            rewritten,
            ngram_n,
            document_id=document_id,
            prompt_id=prompt.id,
        )
        overlaps.append(overlap)
        edits.append(edit)
    fingerprint = schema_fingerprint(
        catalog, "invariance", ngram_n=ngram_n, k=len(prompts)
    )
    return FeatureVector(tuple(overlaps + edits), fingerprint, "invariance")


def extract_equivariance(
    document: str,
    catalog: PromptCatalog,
    rewriter,
    reference: str = "direct_rewrite",
    *,
    ngram_n: int = DEFAULT_NGRAM_N,
    document_id: str = "doc",
    recorder: Recorder | None = None,
) -> FeatureVector:
    """Transform, rewrite, invert; compare the round trip to a reference.

    ``reference`` selects what the round trip is compared against:
    ``direct_rewrite`` (rewrite of the untransformed document) or
    ``original`` (the document itself).  Vector: [R_1..R_K, D_1..D_K]
    in pair order.
    """
    _require_text(document)
    if reference not in EQUIVARIANCE_REFERENCES:
        raise ValueError(
            f"reference must be one of {EQUIVARIANCE_REFERENCES}, got {reference!r}"
        )
    pairs = catalog.pairs()
    if not pairs:
        raise ValueError("catalog has no equivariance pairs")
    overlaps: list[float] = []
    edits: list[float] = []
    for pair in pairs:
        # Chain stages occupy distinct sample slots so their cache
        # entries cannot alias when a transformation returns its input.
        transformed = _call(rewriter, pair.forward, document, 0, "transformed",
                            document_id)
        if recorder is not None:
            recorder(RewriteRecord(document_id, pair.forward.id, "transformed", 0,
                                   transformed))
        rewritten = _call(rewriter, pair.rewrite, transformed, 1,
                          "transformed_rewritten", document_id)
        if recorder is not None:
            recorder(RewriteRecord(document_id, pair.rewrite.id,
                                   "transformed_rewritten", 1, rewritten))
        roundtrip = _call(rewriter, pair.inverse, rewritten, 2, "roundtrip",
                          document_id)
        if recorder is not None:
            recorder(RewriteRecord(document_id, pair.inverse.id, "roundtrip", 2,
                                   roundtrip))
        if reference == "direct_rewrite":
            reference_text = _call(rewriter, pair.rewrite, document, 0, "direct",
                                   document_id)
            if recorder is not None:
                recorder(RewriteRecord(document_id, pair.rewrite.id, "direct", 0,
                                       reference_text))
        else:
            reference_text = document
        overlap, edit = _similarity(
            reference_text,
            tokenize(reference_text),
            roundtrip,
            ngram_n,
            document_id=document_id,
            prompt_id=pair.pair_id,
        )
        overlaps.append(overlap)
        edits.append(edit)
    fingerprint = schema_fingerprint(
        catalog, "equivariance", ngram_n=ngram_n, k=len(pairs), reference=reference
    )
    return FeatureVector(tuple(overlaps + edits), fingerprint, "equivariance")


def extract_uncertainty(
    document: str,
    prompt: RewritePrompt,
    rewriter,
    samples: int = DEFAULT_SAMPLES,
    *,
    catalog: PromptCatalog,
    ngram_n: int = DEFAULT_NGRAM_N,
    document_id: str = "doc",
    recorder: Recorder | None = None,
) -> FeatureVector:
    """Draw ``samples`` rewrites of one prompt; compare every unordered
    pair of samples.  The original text takes no part in the
    comparisons.  Vector: [R_{1,2}, R_{1,3}, .., R_{K-1,K}, D_{1,2}, ..]
    with pairs in lexicographic order.
    """
    _require_text(document)
    if samples < 2:
        raise ValueError(f"uncertainty needs at least 2 samples, got {samples}")
    drawn: list[str] = []
    for index in range(samples):
        sample = _call(rewriter, prompt, document, index, "sample", document_id)
        if recorder is not None:
            recorder(RewriteRecord(document_id, prompt.id, "sample", index, sample))
        drawn.append(sample)
    tokens = [tokenize(sample) for sample in drawn]
    overlaps: list[float] = []
    edits: list[float] = []
    for i in range(samples):
        for j in range(i + 1, samples):
            overlap, edit = _similarity(
                drawn[i],
                tokens[i],
                drawn[j],
                ngram_n,
                document_id=document_id,
                prompt_id=f"{prompt.id}[{i},{j}]",
            )
            overlaps.append(overlap)
            edits.append(edit)
    fingerprint = schema_fingerprint(
        catalog, "uncertainty", ngram_n=ngram_n, k=samples, prompt_id=prompt.id
    )
    return FeatureVector(tuple(overlaps + edits), fingerprint, "uncertainty")


def extract_features(
    document: str,
    scheme: str,
    catalog: PromptCatalog,
    rewriter,
    *,
    ngram_n: int = DEFAULT_NGRAM_N,
    samples: int = DEFAULT_SAMPLES,
    reference: str = "direct_rewrite",
    document_id: str = "doc",
    recorder: Recorder | None = None,
) -> FeatureVector:
    """Scheme dispatcher.  Uncertainty uses the catalog's first
    invariance prompt."""
    if scheme == "invariance":
        return extract_invariance(
            document, catalog, rewriter, ngram_n=ngram_n,
            document_id=document_id, recorder=recorder,
        )
    if scheme == "equivariance":
        return extract_equivariance(
            document, catalog, rewriter, reference, ngram_n=ngram_n,
            document_id=document_id, recorder=recorder,
        )
    if scheme == "uncertainty":
        invariance = catalog.invariance_prompts()
        if not invariance:
            raise ValueError("catalog has no invariance prompt to sample with")
        return extract_uncertainty(
            document, invariance[0], rewriter, samples, catalog=catalog,
            ngram_n=ngram_n, document_id=document_id, recorder=recorder,
        )
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def featurize_corpus(
    documents: Sequence,
    scheme: str,
    catalog: PromptCatalog,
    rewriter,
    *,
    ngram_n: int = DEFAULT_NGRAM_N,
    samples: int = DEFAULT_SAMPLES,
    reference: str = "direct_rewrite",
    workers: int = 1,
    recorder: Recorder | None = None,
) -> list[FeatureVector]:
    """Extract features for documents (anything with ``id`` and ``text``).

    Output order always matches input order, whatever the worker count;
    records reach the recorder grouped by document, in document order.
    """

    def one(document) -> tuple[FeatureVector, list[RewriteRecord]]:
        local: list[RewriteRecord] = []
        vector = extract_features(
            document.text,
            scheme,
            catalog,
            rewriter,
            ngram_n=ngram_n,
            samples=samples,
            reference=reference,
            document_id=document.id,
            recorder=local.append if recorder is not None else None,
        )
        return vector, local

    if workers <= 1:
        results = [one(document) for document in documents]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, documents))
    if recorder is not None:
        for _, local in results:
            for record in local:
                recorder(record)
    return [vector for vector, _ in results]


def concat_vectors(vectors: Sequence[FeatureVector]) -> FeatureVector:
    """Concatenate vectors from different schemes into one.

    The combined fingerprint hashes the part fingerprints in order, so
    combining in a different order yields a different schema.
    """
    if not vectors:
        raise ValueError("nothing to concatenate")
    values: tuple[float, ...] = ()
    for vector in vectors:
        values = values + vector.values
    blob = json.dumps(
        {"combined": [v.schema_fingerprint for v in vectors]},
        sort_keys=True,
        separators=(",", ":"),
    )
    fingerprint = hashlib.sha256(blob.encode("utf-8")).hexdigest()
    scheme = "+".join(v.scheme for v in vectors)
    return FeatureVector(values, fingerprint, scheme)


# ---------------------------------------------------------------------------
# Feature file round trip
# ---------------------------------------------------------------------------

# Floats are written with 17 significant digits, enough for an exact
# binary round trip.
_FLOAT_FORMAT = "%.17g"


def format_float(value: float) -> str:
    return _FLOAT_FORMAT % value


def _feature_line(document_id: str, label: str, vector: FeatureVector) -> str:
    values = ",".join(format_float(v) for v in vector.values)
    return (
        '{"document_id":%s,"label":%s,"scheme":%s,"schema_fingerprint":%s,'
        '"values":[%s]}'
        % (
            json.dumps(document_id, ensure_ascii=False),
            json.dumps(label),
            json.dumps(vector.scheme),
            json.dumps(vector.schema_fingerprint),
            values,
        )
    )


def write_features(
    path: str, rows: Iterable[tuple[str, str, FeatureVector]]
) -> None:
    """Write (document_id, label, vector) rows, one JSON record per line."""
    with open(path, "w", encoding="utf-8") as handle:
        for document_id, label, vector in rows:
            handle.write(_feature_line(document_id, label, vector) + "\n")


def read_features(path: str) -> list[tuple[str, str, FeatureVector]]:
    """Read rows written by :func:`write_features`.

    All records must agree on scheme, fingerprint, and length; a file
    mixing schemas raises SchemaMismatch.
    """
    rows: list[tuple[str, str, FeatureVector]] = []
    try:
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.read().splitlines()
    except OSError as exc:
        raise ParseError(f"cannot read features {path!r}: {exc}") from exc
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            vector = FeatureVector(
                values=tuple(float(v) for v in record["values"]),
                schema_fingerprint=str(record["schema_fingerprint"]),
                scheme=str(record["scheme"]),
            )
            rows.append((str(record["document_id"]), str(record["label"]), vector))
        except (ValueError, TypeError, KeyError) as exc:
            raise ParseError(f"{path}:{line_no}: bad feature record: {exc}") from exc
    if rows:
        first = rows[0][2]
        for document_id, _, vector in rows[1:]:
            if (
                vector.schema_fingerprint != first.schema_fingerprint
                or vector.scheme != first.scheme
                or len(vector) != len(first)
            ):
                raise SchemaMismatch(
                    f"{path}: record {document_id!r} does not match the "
                    "file's feature schema"
                )
    return rows
