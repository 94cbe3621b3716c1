"""Corpus handling: labeled documents, stratified splits, synthetic
fixtures, and length bucketing."""

from __future__ import annotations

import bisect
import hashlib
import json
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import BlankDocument, DuplicateId, ParseError, StratumTooSmall
from .llm import DEFAULT_MACHINE_MARKER
from .metrics import tokenize

LABELS = ("human", "machine")
STRATIFY_FIELDS = ("label", "domain", "generator")


@dataclass(frozen=True)
class Document:
    """One labeled text with provenance tags.

    ``word_count`` is derived from the text at construction and excluded
    from equality.
    """

    id: str
    text: str
    label: str
    domain: str = "unknown"
    generator: str = "unknown"
    word_count: int = field(init=False, compare=False, default=0)

    def __post_init__(self) -> None:
        if self.label not in LABELS:
            raise ValueError(
                f"document {self.id!r}: label must be one of {LABELS}, "
                f"got {self.label!r}"
            )
        if not self.text.strip():
            raise BlankDocument(f"document {self.id!r} has blank text")
        object.__setattr__(self, "word_count", len(tokenize(self.text)))


def _document_line(document: Document) -> str:
    record = {
        "id": document.id,
        "label": document.label,
        "domain": document.domain,
        "generator": document.generator,
        "text": document.text,
    }
    return json.dumps(record, ensure_ascii=False)


def save_corpus(path: str, documents: Iterable[Document]) -> None:
    """Write one JSON record per document, preserving order."""
    with open(path, "w", encoding="utf-8") as handle:
        for document in documents:
            handle.write(_document_line(document) + "\n")


def load_corpus(path: str) -> list[Document]:
    """Read a corpus written by :func:`save_corpus`.

    Blank texts are collected across the whole file and rejected
    together with their ids; duplicate ids are likewise reported in one
    error.
    """
    try:
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.read().splitlines()
    except OSError as exc:
        raise ParseError(f"cannot read corpus {path!r}: {exc}") from exc
    documents: list[Document] = []
    seen: set[str] = set()
    duplicates: list[str] = []
    blanks: list[str] = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except ValueError as exc:
            raise ParseError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
        if not isinstance(record, dict):
            raise ParseError(f"{path}:{line_no}: document record must be an object")
        missing = [
            key
            for key in ("id", "label", "domain", "generator", "text")
            if key not in record
        ]
        if missing:
            raise ParseError(
                f"{path}:{line_no}: document record missing {', '.join(missing)}"
            )
        doc_id = str(record["id"])
        if doc_id in seen:
            duplicates.append(doc_id)
            continue
        seen.add(doc_id)
        if not str(record["text"]).strip():
            blanks.append(doc_id)
            continue
        try:
            documents.append(
                Document(
                    id=doc_id,
                    text=str(record["text"]),
                    label=str(record["label"]),
                    domain=str(record["domain"]),
                    generator=str(record["generator"]),
                )
            )
        except ValueError as exc:
            raise ParseError(f"{path}:{line_no}: {exc}") from exc
    if duplicates:
        raise DuplicateId(f"{path}: duplicate document ids: {', '.join(duplicates)}")
    if blanks:
        raise BlankDocument(f"{path}: blank text for ids: {', '.join(blanks)}")
    return documents


def corpus_fingerprint(documents: Sequence[Document]) -> str:
    """Hex digest over every document in order."""
    digest = hashlib.sha256()
    for document in documents:
        digest.update(_document_line(document).encode("utf-8"))
        digest.update(b"\n")
    return digest.hexdigest()


@dataclass(frozen=True)
class SplitSpec:
    """How to divide a corpus into train and test."""

    train_fraction: float = 0.8
    seed: int = 0
    stratify_by: tuple[str, ...] = ("label",)

    def __post_init__(self) -> None:
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(
                f"train_fraction must be in (0, 1), got {self.train_fraction}"
            )
        unknown = [f for f in self.stratify_by if f not in STRATIFY_FIELDS]
        if unknown:
            raise ValueError(
                f"cannot stratify by {unknown}; choose from {STRATIFY_FIELDS}"
            )
        if not self.stratify_by:
            raise ValueError("stratify_by needs at least one field")


def split(
    documents: Sequence[Document], spec: SplitSpec = SplitSpec()
) -> tuple[list[Document], list[Document]]:
    """Deterministic stratified split.

    Each stratum is shuffled with the seeded generator and divided so
    its train share is within one document of the requested fraction.
    Output lists keep the original corpus order.  A stratum with fewer
    than two documents cannot appear on both sides and raises
    StratumTooSmall.
    """
    strata: dict[tuple, list[Document]] = {}
    for document in documents:
        key = tuple(getattr(document, name) for name in spec.stratify_by)
        strata.setdefault(key, []).append(document)
    rng = random.Random(spec.seed)
    train_ids: set[str] = set()
    for key in sorted(strata):
        members = strata[key]
        if len(members) < 2:
            raise StratumTooSmall(
                f"stratum {key!r} has {len(members)} document(s); need at least 2"
            )
        shuffled = list(members)
        rng.shuffle(shuffled)
        n_train = round(spec.train_fraction * len(shuffled))
        n_train = min(max(n_train, 1), len(shuffled) - 1)
        train_ids.update(document.id for document in shuffled[:n_train])
    train = [document for document in documents if document.id in train_ids]
    test = [document for document in documents if document.id not in train_ids]
    return train, test


def synth_corpus(
    size: int,
    machine_fraction: float,
    seed: int,
    vocab_size: int = 50,
    *,
    domain: str = "synthetic",
    id_prefix: str = "doc",
    min_tokens: int = 30,
    max_tokens: int = 60,
    marker: str = DEFAULT_MACHINE_MARKER,
) -> list[Document]:
    """Generate a synthetic corpus for offline runs.

    Texts are random words from a small vocabulary; machine documents
    additionally carry the marker token the mock rewriter keys its edit
    rate on.  Same arguments, same corpus.
    """
    if size < 2:
        raise ValueError(f"size must be >= 2, got {size}")
    if not 0.0 < machine_fraction < 1.0:
        raise ValueError(
            f"machine_fraction must be in (0, 1), got {machine_fraction}"
        )
    if vocab_size < 2:
        raise ValueError(f"vocab_size must be >= 2, got {vocab_size}")
    rng = random.Random(seed)
    vocabulary = [f"w{i}" for i in range(vocab_size)]
    n_machine = round(size * machine_fraction)
    n_machine = min(max(n_machine, 1), size - 1)
    documents = []
    for index in range(size):
        machine = index < n_machine
        n_tokens = rng.randint(min_tokens, max_tokens)
        tokens = [rng.choice(vocabulary) for _ in range(n_tokens)]
        if machine:
            tokens.insert(rng.randrange(len(tokens) + 1), marker)
        documents.append(
            Document(
                id=f"{id_prefix}{index:04d}",
                text=" ".join(tokens),
                label="machine" if machine else "human",
                domain=domain,
                generator="mock" if machine else "human",
            )
        )
    return documents


def length_buckets(
    documents: Sequence[Document], edges: Sequence[int]
) -> dict[str, list[str]]:
    """Group document ids into half-open word-count intervals.

    ``edges`` must be strictly ascending positive integers; the buckets
    are [0, e1), [e1, e2), ..., [eN, inf).  Every bucket appears in the
    result, including empty ones.
    """
    edges = list(edges)
    if not edges:
        raise ValueError("need at least one bucket edge")
    if edges[0] < 1 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError(
            f"edges must be strictly ascending positive integers, got {edges}"
        )
    bounds = [0, *edges]
    names = [
        f"[{low},{high})" for low, high in zip(bounds, bounds[1:])
    ] + [f"[{bounds[-1]},inf)"]
    buckets: dict[str, list[str]] = {name: [] for name in names}
    for document in documents:
        buckets[names[bisect.bisect_right(edges, document.word_count)]].append(
            document.id
        )
    return buckets


def bucket_name_for(word_count: int, edges: Sequence[int]) -> str:
    """Bucket label a document of the given length falls into."""
    edges = list(edges)
    bounds = [0, *edges]
    names = [
        f"[{low},{high})" for low, high in zip(bounds, bounds[1:])
    ] + [f"[{bounds[-1]},inf)"]
    return names[bisect.bisect_right(edges, word_count)]
