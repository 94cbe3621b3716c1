"""Prompt catalog: the fixed instructions used to elicit rewrites.

A catalog is an ordered, versioned collection of prompts.  Feature
vectors are ordered by catalog position, so the catalog version and
fingerprint are part of every feature schema.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Iterator

from .errors import DuplicateId, EmptyInput, ParseError

PROMPT_KINDS = (
    "invariance",
    "equivariance_forward",
    "equivariance_inverse",
    "evasion",
    "generation",
)

BUILTIN_CATALOG_VERSION = "builtin-v1"


@dataclass(frozen=True)
class RewritePrompt:
    """One rewrite instruction.

    ``pair_id`` links an equivariance forward prompt to its inverse; an
    invariance prompt may carry the same ``pair_id`` to act as that
    pair's rewrite step instead of the catalog default.
    """

    id: str
    kind: str
    text: str
    pair_id: str | None = None


@dataclass(frozen=True)
class EquivariancePair:
    """A transformation prompt, its inverse, and the rewrite prompt used
    between them."""

    pair_id: str
    forward: RewritePrompt
    inverse: RewritePrompt
    rewrite: RewritePrompt


class PromptCatalog:
    """Ordered prompt collection with a version tag and content fingerprint."""

    def __init__(self, prompts: list[RewritePrompt], version: str):
        self.prompts = list(prompts)
        self.version = version
        self._validate()

    def _validate(self) -> None:
        if not self.version or not str(self.version).strip():
            raise ParseError("catalog version must be a non-empty string")
        seen: set[str] = set()
        for prompt in self.prompts:
            if prompt.kind not in PROMPT_KINDS:
                raise ParseError(
                    f"prompt {prompt.id!r} has unknown kind {prompt.kind!r}"
                )
            if not prompt.text.strip():
                raise ParseError(f"prompt {prompt.id!r} has blank text")
            if prompt.id in seen:
                raise DuplicateId(f"duplicate prompt id {prompt.id!r}")
            seen.add(prompt.id)
            if prompt.pair_id is not None and prompt.kind in ("evasion", "generation"):
                raise ParseError(
                    f"prompt {prompt.id!r}: kind {prompt.kind!r} cannot join a pair"
                )
        # Resolving pairs performs the remaining structural checks.
        self.pairs()

    def __iter__(self) -> Iterator[RewritePrompt]:
        return iter(self.prompts)

    def __len__(self) -> int:
        return len(self.prompts)

    def by_id(self, prompt_id: str) -> RewritePrompt:
        for prompt in self.prompts:
            if prompt.id == prompt_id:
                return prompt
        raise KeyError(f"no prompt with id {prompt_id!r}")

    def of_kind(self, kind: str) -> list[RewritePrompt]:
        return [p for p in self.prompts if p.kind == kind]

    def invariance_prompts(self) -> list[RewritePrompt]:
        return self.of_kind("invariance")

    def evasion_prompts(self) -> list[RewritePrompt]:
        return self.of_kind("evasion")

    def pairs(self) -> list[EquivariancePair]:
        """Equivariance pairs in order of first appearance.

        Each pair needs exactly one forward and one inverse prompt; its
        rewrite step is the invariance prompt sharing the pair id, or
        the catalog's first invariance prompt when none does.
        """
        order: list[str] = []
        forward: dict[str, RewritePrompt] = {}
        inverse: dict[str, RewritePrompt] = {}
        paired_rewrite: dict[str, RewritePrompt] = {}
        for prompt in self.prompts:
            if prompt.kind in ("equivariance_forward", "equivariance_inverse"):
                if prompt.pair_id is None:
                    raise ParseError(f"prompt {prompt.id!r} is missing a pair_id")
                if prompt.pair_id not in order:
                    order.append(prompt.pair_id)
                side = forward if prompt.kind == "equivariance_forward" else inverse
                if prompt.pair_id in side:
                    raise ParseError(
                        f"pair {prompt.pair_id!r} has two {prompt.kind} prompts"
                    )
                side[prompt.pair_id] = prompt
            elif prompt.kind == "invariance" and prompt.pair_id is not None:
                if prompt.pair_id in paired_rewrite:
                    raise ParseError(
                        f"pair {prompt.pair_id!r} has two rewrite prompts"
                    )
                paired_rewrite[prompt.pair_id] = prompt
        invariance = self.invariance_prompts()
        pairs = []
        for pair_id in order:
            if pair_id not in forward or pair_id not in inverse:
                raise ParseError(f"pair {pair_id!r} lacks a forward or inverse prompt")
            rewrite = paired_rewrite.get(pair_id)
            if rewrite is None:
                if not invariance:
                    raise ParseError(
                        f"pair {pair_id!r} has no rewrite prompt and the catalog "
                        "has no invariance prompt to fall back on"
                    )
                rewrite = invariance[0]
            pairs.append(
                EquivariancePair(
                    pair_id=pair_id,
                    forward=forward[pair_id],
                    inverse=inverse[pair_id],
                    rewrite=rewrite,
                )
            )
        return pairs

    def fingerprint(self) -> str:
        """Hex digest over the version and every prompt in order."""
        digest = hashlib.sha256()
        digest.update(_header_line(self.version).encode("utf-8"))
        for prompt in self.prompts:
            digest.update(b"\n")
            digest.update(_prompt_line(prompt).encode("utf-8"))
        return digest.hexdigest()


def compose(prompt: RewritePrompt, text: str) -> str:
    """Join an instruction and its input: instruction, newline, text.

    >>> compose(RewritePrompt("p", "invariance", "Polish:"), "hi there")
    'Polish:\\nhi there'
    """
    if not text.strip():
        raise EmptyInput("cannot compose a prompt around blank text")
    return f"{prompt.text}\n{text}"


def builtin_catalog() -> PromptCatalog:
    """The built-in prompt catalog shipped with the package."""
    prompts = [
        RewritePrompt("inv-polish", "invariance", "Help me polish this:"),
        RewritePrompt("inv-rewrite", "invariance", "Rewrite this for me:"),
        RewritePrompt("inv-refine", "invariance", "Refine this for me please:"),
        RewritePrompt(
            "eq-opposite-fwd",
            "equivariance_forward",
            "Write this in the opposite meaning:",
            pair_id="opposite",
        ),
        RewritePrompt(
            "eq-opposite-inv",
            "equivariance_inverse",
            "Write this in the opposite meaning:",
            pair_id="opposite",
        ),
        RewritePrompt(
            "eq-expand",
            "equivariance_forward",
            "Rewrite to Expand this:",
            pair_id="expand",
        ),
        RewritePrompt(
            "eq-concise",
            "equivariance_inverse",
            "Rewrite to Concise this:",
            pair_id="expand",
        ),
        RewritePrompt(
            "ev-human-style", "evasion", "Help me rephrase it in human style"
        ),
        RewritePrompt(
            "ev-more-edits",
            "evasion",
            "Help me rephrase it, so that another GPT rewriting will cause "
            "a lot of modifications",
        ),
        RewritePrompt(
            "gen-code-describe",
            "generation",
            "Describe what this code does {code specification}{code}",
        ),
        RewritePrompt(
            "gen-code-complete",
            "generation",
            "I want to do this {pseudo code}, help me write code starting "
            "with this {code specification}",
        ),
        RewritePrompt(
            "gen-yelp-review",
            "generation",
            "Write a very short and concise review based on this:",
        ),
        RewritePrompt(
            "gen-arxiv-abstract",
            "generation",
            "The title is {title}, start with {first 15 words}, write a "
            "short concise abstract based on this:",
        ),
    ]
    return PromptCatalog(prompts, version=BUILTIN_CATALOG_VERSION)


def _header_line(version: str) -> str:
    return json.dumps({"catalog_version": version}, ensure_ascii=False)


def _prompt_line(prompt: RewritePrompt) -> str:
    record: dict[str, str] = {
        "id": prompt.id,
        "kind": prompt.kind,
        "text": prompt.text,
    }
    if prompt.pair_id is not None:
        record["pair_id"] = prompt.pair_id
    return json.dumps(record, ensure_ascii=False, separators=(", ", ": "))


def save_catalog(path: str, catalog: PromptCatalog) -> None:
    """Write a catalog as a version header line followed by one JSON
    record per prompt."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(_header_line(catalog.version) + "\n")
        for prompt in catalog.prompts:
            handle.write(_prompt_line(prompt) + "\n")


def load_catalog(path: str) -> PromptCatalog:
    """Read a catalog written by :func:`save_catalog`.

    Raises ParseError for malformed lines, unknown kinds, or unresolvable
    pairs, and DuplicateId for colliding prompt ids.
    """
    try:
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.read().splitlines()
    except OSError as exc:
        raise ParseError(f"cannot read catalog {path!r}: {exc}") from exc
    numbered = [(n, line) for n, line in enumerate(lines, start=1) if line.strip()]
    if not numbered:
        raise ParseError(f"{path}: catalog file is empty")
    header_no, header = numbered[0]
    try:
        header_record = json.loads(header)
        version = header_record["catalog_version"]
    except (ValueError, TypeError, KeyError) as exc:
        raise ParseError(
            f"{path}:{header_no}: expected a catalog_version header line"
        ) from exc
    prompts = []
    for line_no, line in numbered[1:]:
        try:
            record = json.loads(line)
        except ValueError as exc:
            raise ParseError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
        if not isinstance(record, dict):
            raise ParseError(f"{path}:{line_no}: prompt record must be an object")
        missing = [key for key in ("id", "kind", "text") if key not in record]
        if missing:
            raise ParseError(
                f"{path}:{line_no}: prompt record missing {', '.join(missing)}"
            )
        prompts.append(
            RewritePrompt(
                id=str(record["id"]),
                kind=str(record["kind"]),
                text=str(record["text"]),
                pair_id=(
                    str(record["pair_id"]) if record.get("pair_id") is not None else None
                ),
            )
        )
    try:
        return PromptCatalog(prompts, version=str(version))
    except (ParseError, DuplicateId) as exc:
        raise type(exc)(f"{path}: {exc}") from exc
