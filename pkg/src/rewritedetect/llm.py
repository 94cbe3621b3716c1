"""Access to rewriting models: a remote chat-completion client with
retry and write-through caching, plus a deterministic offline mock.

A "rewriter" anywhere in this package is a callable

    rewriter(prompt, text, sample_index=0, stage="direct") -> str

where ``prompt`` is a :class:`~rewritedetect.prompts.RewritePrompt`,
``sample_index`` distinguishes repeated samples of the same request, and
``stage`` names the pipeline step asking for the rewrite (one of
``direct``, ``transformed``, ``transformed_rewritten``, ``roundtrip``,
``sample``).
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping

import requests

from .errors import (
    AuthError,
    EmptyCompletion,
    ParseError,
    RateLimited,
    TransportError,
)
from .prompts import RewritePrompt, compose

log = logging.getLogger(__name__)

ENV_BASE_URL = "REWRITEDETECT_BASE_URL"
ENV_API_KEY = "REWRITEDETECT_API_KEY"
ENV_MODEL = "REWRITEDETECT_MODEL"

# Deterministic rewrites use temperature 0; repeated-sample draws need
# diversity and default to 0.7.
DEFAULT_REWRITE_TEMPERATURE = 0.0
DEFAULT_SAMPLE_TEMPERATURE = 0.7
DEFAULT_MAX_OUTPUT_TOKENS = 1024

DEFAULT_MACHINE_MARKER = "zzmachinezz"

REWRITE_STAGES = (
    "direct",
    "transformed",
    "transformed_rewritten",
    "roundtrip",
    "sample",
)


@dataclass(frozen=True)
class CompletionRequest:
    """Everything that determines a completion, and nothing else.

    The cache key is derived from exactly these fields.
    """

    model_name: str
    prompt_text: str
    temperature: float = DEFAULT_REWRITE_TEMPERATURE
    sample_index: int = 0
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS

    def __post_init__(self) -> None:
        if self.temperature < 0.0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if self.sample_index < 0:
            raise ValueError(f"sample_index must be >= 0, got {self.sample_index}")
        if self.max_output_tokens < 1:
            raise ValueError(
                f"max_output_tokens must be >= 1, got {self.max_output_tokens}"
            )


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    provider: str
    cached: bool = False
    latency_ms: int = 0


def cache_key(request: CompletionRequest) -> str:
    """Content hash of a request; equal requests always collide."""
    blob = json.dumps(
        {
            "model_name": request.model_name,
            "prompt_text": request.prompt_text,
            "temperature": request.temperature,
            "sample_index": request.sample_index,
            "max_output_tokens": request.max_output_tokens,
        },
        sort_keys=True,
        ensure_ascii=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class ResponseCache:
    """Append-only JSONL store of completion texts keyed by request content.

    Each line carries the key, the request fields it was derived from,
    the response text, and a millisecond timestamp, so a cache file is
    auditable on its own.  Writers within one process are serialized by
    a lock; on load, a repeated key resolves to the last line written.
    """

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()
        self._entries: dict[str, str] = {}
        if os.path.exists(path):
            self._load()

    def _load(self) -> None:
        with open(self.path, "r", encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                    key = record["key"]
                    text = record["text"]
                except (ValueError, TypeError, KeyError) as exc:
                    raise ParseError(
                        f"{self.path}:{line_no}: bad cache line: {exc}"
                    ) from exc
                self._entries[key] = text

    def get(self, key: str) -> str | None:
        with self._lock:
            return self._entries.get(key)

    def put(self, key: str, request: CompletionRequest, text: str) -> None:
        record = {
            "key": key,
            "model_name": request.model_name,
            "temperature": request.temperature,
            "sample_index": request.sample_index,
            "max_output_tokens": request.max_output_tokens,
            "prompt_text": request.prompt_text,
            "text": text,
            "timestamp_ms": int(time.time() * 1000),
        }
        line = json.dumps(record, ensure_ascii=False) + "\n"
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as handle:
                handle.write(line)
            self._entries[key] = text

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def __contains__(self, key: str) -> bool:
        with self._lock:
            return key in self._entries


@dataclass(frozen=True)
class EndpointConfig:
    """Connection settings for an OpenAI-style chat-completion endpoint."""

    base_url: str
    api_key: str
    model_name: str
    timeout_s: float = 60.0
    max_attempts: int = 5
    backoff_base_s: float = 0.5

    @classmethod
    def from_env(
        cls,
        *,
        base_url: str | None = None,
        model_name: str | None = None,
        timeout_s: float = 60.0,
        max_attempts: int = 5,
        backoff_base_s: float = 0.5,
    ) -> "EndpointConfig":
        """Build a config from the environment.

        The API key is read only from the environment, never from
        arguments or files.  Explicit arguments override the base URL
        and model name variables.
        """
        resolved_base = base_url or os.environ.get(ENV_BASE_URL) or ""
        resolved_model = model_name or os.environ.get(ENV_MODEL) or ""
        api_key = os.environ.get(ENV_API_KEY) or ""
        missing = [
            name
            for name, value in (
                (ENV_BASE_URL, resolved_base),
                (ENV_API_KEY, api_key),
                (ENV_MODEL, resolved_model),
            )
            if not value
        ]
        if missing:
            raise ValueError(
                "missing endpoint configuration: set " + ", ".join(missing)
            )
        return cls(
            base_url=resolved_base,
            api_key=api_key,
            model_name=resolved_model,
            timeout_s=timeout_s,
            max_attempts=max_attempts,
            backoff_base_s=backoff_base_s,
        )


# A transport takes the JSON payload and endpoint config and returns
# (HTTP status, parsed response body).  Injectable for tests.
Transport = Callable[[dict, EndpointConfig], "tuple[int, dict]"]


def _http_transport(payload: dict, endpoint: EndpointConfig) -> tuple[int, dict]:
    try:
        response = requests.post(
            endpoint.base_url.rstrip("/") + "/chat/completions",
            json=payload,
            headers={"Authorization": f"Bearer {endpoint.api_key}"},
            timeout=endpoint.timeout_s,
        )
    except requests.RequestException as exc:
        raise TransportError(f"request failed: {exc}") from exc
    try:
        body = response.json()
    except ValueError:
        body = {}
    return response.status_code, body


def _first_message_content(body: dict) -> str:
    try:
        content = body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise TransportError(f"malformed completion body: {body!r}") from exc
    if not isinstance(content, str):
        raise TransportError(f"completion content is not text: {content!r}")
    return content


class ChatCompletionClient:
    """Caching chat-completion client with bounded exponential backoff.

    Retry policy: rate limits and server-side failures are retried up to
    ``max_attempts`` total tries with doubling sleeps; credential
    rejections and blank completions are never retried.
    """

    def __init__(
        self,
        endpoint: EndpointConfig,
        cache: ResponseCache | None = None,
        transport: Transport | None = None,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        self.endpoint = endpoint
        self.cache = cache
        self._transport = transport or _http_transport
        self._sleeper = sleeper

    def _payload(self, request: CompletionRequest) -> dict:
        return {
            "model": request.model_name,
            "messages": [{"role": "user", "content": request.prompt_text}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        key = cache_key(request)
        if self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                return CompletionResponse(
                    text=hit, provider=self.endpoint.base_url, cached=True
                )
        payload = self._payload(request)
        last_error: Exception = TransportError("no attempts made")
        for attempt in range(self.endpoint.max_attempts):
            if attempt:
                self._sleeper(self.endpoint.backoff_base_s * (2 ** (attempt - 1)))
            started = time.perf_counter()
            try:
                status, body = self._transport(payload, self.endpoint)
            except TransportError as exc:
                log.warning("transport failure (attempt %d): %s", attempt + 1, exc)
                last_error = exc
                continue
            latency_ms = int((time.perf_counter() - started) * 1000)
            if status in (401, 403):
                raise AuthError(f"endpoint rejected credentials (HTTP {status})")
            if status == 429 or status >= 500:
                log.warning("retryable HTTP %d (attempt %d)", status, attempt + 1)
                last_error = (
                    RateLimited("rate limited (HTTP 429)")
                    if status == 429
                    else TransportError(f"server failure (HTTP {status})")
                )
                continue
            if status != 200:
                raise TransportError(f"unexpected HTTP status {status}")
            text = _first_message_content(body)
            if not text.strip():
                raise EmptyCompletion("endpoint returned a blank completion")
            if self.cache is not None:
                self.cache.put(key, request, text)
            return CompletionResponse(
                text=text,
                provider=self.endpoint.base_url,
                cached=False,
                latency_ms=latency_ms,
            )
        raise last_error


# ---------------------------------------------------------------------------
# Completion post-processing
# ---------------------------------------------------------------------------

# A leading line is treated as assistant boilerplate only when it ends
# with a colon and matches one of these shapes.
DEFAULT_BOILERPLATE_PATTERNS = (
    r"(?i)^(sure|certainly|of course|okay|alright|absolutely)\b[^\n]*:$",
    r"(?i)^here('s| is| are)\b[^\n]*:$",
    r"(?i)^i('ve| have) (rewritten|revised|polished|refined|updated|edited)\b[^\n]*:$",
    r"(?i)^(the |your )?(rewritten|revised|polished|refined|updated|edited|"
    r"paraphrased|improved) (text|version|review|code|abstract|paragraph|"
    r"passage|essay)\b[^\n]*:$",
)

_QUOTE_PAIRS = {'"': '"', "'": "'", "“": "”", "‘": "’"}


def strip_wrapper(raw: str, patterns: tuple[str, ...] = DEFAULT_BOILERPLATE_PATTERNS) -> str:
    """Remove assistant boilerplate around a completion.

    Strips, in a fixpoint loop: surrounding whitespace, a leading
    boilerplate line ("Sure, here is the revised text:"), a code fence
    spanning the whole reply, and one symmetric quotation layer.  The
    function is idempotent: ``strip_wrapper(strip_wrapper(x)) ==
    strip_wrapper(x)``.
    """
    compiled = [re.compile(p) for p in patterns]
    text = raw
    for _ in range(10):
        before = text
        text = text.strip()
        first, newline, rest = text.partition("\n")
        if newline and any(p.match(first.strip()) for p in compiled):
            text = rest.strip()
        lines = text.split("\n")
        if (
            len(lines) >= 2
            and lines[0].startswith("```")
            and lines[-1].strip() == "```"
        ):
            text = "\n".join(lines[1:-1]).strip()
        if (
            len(text) >= 2
            and text[0] in _QUOTE_PAIRS
            and text[-1] == _QUOTE_PAIRS[text[0]]
        ):
            text = text[1:-1]
        if text == before:
            break
    return text


# ---------------------------------------------------------------------------
# Deterministic offline mock
# ---------------------------------------------------------------------------


def evasion_marker(prompt_id: str) -> str:
    """Marker the mock substitutes for the machine marker under an
    evasion prompt, making evaded text distinguishable by rate."""
    return f"zzevade-{prompt_id}zz"


@dataclass(frozen=True)
class MockRewriterConfig:
    """Edit rates for the offline mock.

    ``edit_rate_human`` applies to unmarked text, ``edit_rate_machine``
    to text containing ``machine_marker``; the human rate must be the
    larger one, mirroring the effect the detector relies on.
    ``evasion_rates`` maps an evasion prompt id to the rate applied to
    text that went through that prompt.
    """

    edit_rate_human: float = 0.5
    edit_rate_machine: float = 0.1
    seed: int = 0
    machine_marker: str = DEFAULT_MACHINE_MARKER
    evasion_rates: tuple[tuple[str, float], ...] = ()

    def __post_init__(self) -> None:
        for name in ("edit_rate_human", "edit_rate_machine"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {rate}")
        if self.edit_rate_human <= self.edit_rate_machine:
            raise ValueError(
                "edit_rate_human must exceed edit_rate_machine "
                f"({self.edit_rate_human} <= {self.edit_rate_machine})"
            )
        normalized = tuple(sorted(dict(self.evasion_rates).items()))
        for prompt_id, rate in normalized:
            if not 0.0 <= rate <= 1.0:
                raise ValueError(
                    f"evasion rate for {prompt_id!r} must be in [0, 1], got {rate}"
                )
        object.__setattr__(self, "evasion_rates", normalized)

    def edit_rate_for(self, text: str) -> float:
        for prompt_id, rate in self.evasion_rates:
            if evasion_marker(prompt_id) in text:
                return rate
        if self.machine_marker in text:
            return self.edit_rate_machine
        return self.edit_rate_human


def _derived_seed(seed: int, prompt_text: str, sample_index: int) -> int:
    blob = f"{seed}|{sample_index}|{prompt_text}".encode("utf-8")
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "big")


def mock_rewrite(
    request: CompletionRequest, config: MockRewriterConfig = MockRewriterConfig()
) -> CompletionResponse:
    """Deterministic stand-in for a rewriting model.

    The portion of ``prompt_text`` after the first newline is treated as
    the input, matching :func:`~rewritedetect.prompts.compose`.  A
    seeded fraction of its whitespace tokens is replaced with synthetic
    tokens absent from the input; the fraction depends on which marker
    the input carries.  Output depends only on the request content and
    the config.
    """
    _, newline, input_text = request.prompt_text.partition("\n")
    if not newline:
        input_text = request.prompt_text
    tokens = input_text.split()
    rate = config.edit_rate_for(input_text)
    rng = random.Random(
        _derived_seed(config.seed, request.prompt_text, request.sample_index)
    )
    n_edits = min(int(round(rate * len(tokens))), len(tokens))
    taken = set(tokens)
    edited = list(tokens)
    for position in sorted(rng.sample(range(len(tokens)), n_edits)):
        while True:
            candidate = f"rw{rng.randrange(10**9)}"
            if candidate not in taken:
                break
        edited[position] = candidate
    return CompletionResponse(
        text=" ".join(edited), provider="mock", cached=False, latency_ms=0
    )


class MockRewriter:
    """Offline rewriter used wherever a rewriter callable is expected.

    Dispatch by prompt kind: invariance, generation, and unknown kinds
    edit tokens at the marker-dependent rate; equivariance
    transformation prompts act as the identity (offline fixtures
    exercise the round-trip plumbing, not real transformations); evasion
    prompts swap the machine marker for a prompt-specific marker, which
    changes the rate later rewrites apply.
    """

    def __init__(self, config: MockRewriterConfig = MockRewriterConfig()):
        self.config = config

    def __call__(
        self,
        prompt: RewritePrompt,
        text: str,
        sample_index: int = 0,
        stage: str = "direct",
    ) -> str:
        if prompt.kind in ("equivariance_forward", "equivariance_inverse"):
            return text
        if prompt.kind == "evasion":
            return text.replace(self.config.machine_marker, evasion_marker(prompt.id))
        request = CompletionRequest(
            model_name="mock",
            prompt_text=compose(prompt, text),
            sample_index=sample_index,
        )
        return mock_rewrite(request, self.config).text

    def fingerprint_fields(self) -> dict:
        return {
            "kind": "mock",
            "edit_rate_human": self.config.edit_rate_human,
            "edit_rate_machine": self.config.edit_rate_machine,
            "seed": self.config.seed,
            "machine_marker": self.config.machine_marker,
            "evasion_rates": list(self.config.evasion_rates),
        }


def identity_rewriter(
    prompt: RewritePrompt, text: str, sample_index: int = 0, stage: str = "direct"
) -> str:
    """Rewriter that returns its input unchanged; every similarity
    feature it produces is exactly 1."""
    return text


class RemoteRewriter:
    """Rewriter backed by a chat-completion client.

    Uses the deterministic temperature for pipeline rewrites and the
    sampling temperature for the ``sample`` stage, and strips assistant
    boilerplate from replies unless told not to.
    """

    def __init__(
        self,
        client: ChatCompletionClient,
        *,
        rewrite_temperature: float = DEFAULT_REWRITE_TEMPERATURE,
        sample_temperature: float = DEFAULT_SAMPLE_TEMPERATURE,
        max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS,
        strip: bool = True,
        strip_patterns: tuple[str, ...] = DEFAULT_BOILERPLATE_PATTERNS,
    ):
        self.client = client
        self.rewrite_temperature = rewrite_temperature
        self.sample_temperature = sample_temperature
        self.max_output_tokens = max_output_tokens
        self.strip = strip
        self.strip_patterns = strip_patterns

    def __call__(
        self,
        prompt: RewritePrompt,
        text: str,
        sample_index: int = 0,
        stage: str = "direct",
    ) -> str:
        temperature = (
            self.sample_temperature if stage == "sample" else self.rewrite_temperature
        )
        request = CompletionRequest(
            model_name=self.client.endpoint.model_name,
            prompt_text=compose(prompt, text),
            temperature=temperature,
            sample_index=sample_index,
            max_output_tokens=self.max_output_tokens,
        )
        response = self.client.complete(request)
        if self.strip:
            return strip_wrapper(response.text, self.strip_patterns)
        return response.text

    def fingerprint_fields(self) -> dict:
        return {
            "kind": "remote",
            "model_name": self.client.endpoint.model_name,
            "rewrite_temperature": self.rewrite_temperature,
            "sample_temperature": self.sample_temperature,
            "max_output_tokens": self.max_output_tokens,
            "strip": self.strip,
        }


class CachingRewriter:
    """Wraps any rewriter with a persistent response cache.

    The cache key is derived from the composed prompt and sample index,
    so a warm cache replays a previous run without invoking the inner
    rewriter at all.
    """

    def __init__(self, inner, cache: ResponseCache, model_name: str = "mock"):
        self.inner = inner
        self.cache = cache
        self.model_name = model_name
        self.hits = 0
        self.misses = 0

    def __call__(
        self,
        prompt: RewritePrompt,
        text: str,
        sample_index: int = 0,
        stage: str = "direct",
    ) -> str:
        request = CompletionRequest(
            model_name=self.model_name,
            prompt_text=compose(prompt, text),
            sample_index=sample_index,
        )
        key = cache_key(request)
        hit = self.cache.get(key)
        if hit is not None:
            self.hits += 1
            return hit
        result = self.inner(prompt, text, sample_index=sample_index, stage=stage)
        self.cache.put(key, request, result)
        self.misses += 1
        return result

    def fingerprint_fields(self) -> dict:
        inner_fields = (
            self.inner.fingerprint_fields()
            if hasattr(self.inner, "fingerprint_fields")
            else {"kind": getattr(self.inner, "__name__", "callable")}
        )
        return {"kind": "cached", "inner": inner_fields}
