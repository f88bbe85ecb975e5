"""LLM clients (HTTP chat-completion and canned stub) and fine annotation of hard pairs."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import httpx

from .prompts import InstructionKind, ParseFailure, parse_response, render_prompt
from .records import LabeledPair, PairRecord

logger = logging.getLogger(__name__)

ENV_ENDPOINT = "EVENTRET_LLM_ENDPOINT"
ENV_API_KEY = "EVENTRET_LLM_API_KEY"
ENV_MODEL = "EVENTRET_LLM_MODEL"


class TransportError(RuntimeError):
    pass


class LLMClient(Protocol):
    def complete(self, prompt: str) -> str: ...


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class StubLLMClient:
    """Replies from a fixture mapping ``sha256(prompt)`` to a canned response."""

    def __init__(self, responses: dict[str, str]):
        self.responses = dict(responses)
        self.requests: list[str] = []
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "StubLLMClient":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def complete(self, prompt: str) -> str:
        key = prompt_hash(prompt)
        with self._lock:
            self.requests.append(key)
        try:
            return self.responses[key]
        except KeyError:
            raise TransportError(f"stub has no response for prompt {key[:12]}") from None


class HTTPChatClient:
    """Minimal chat-completion client: POST {model, messages} -> choices[0].message.content."""

    def __init__(self, endpoint: str, api_key: str | None, model: str, timeout: float = 30.0):
        self.endpoint = endpoint
        self.model = model
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(headers=headers, timeout=timeout)

    @classmethod
    def from_env(cls, timeout: float = 30.0) -> "HTTPChatClient":
        endpoint = os.environ.get(ENV_ENDPOINT)
        if not endpoint:
            raise ValueError(f"{ENV_ENDPOINT} is not set")
        return cls(endpoint, os.environ.get(ENV_API_KEY), os.environ.get(ENV_MODEL, "gpt-4"), timeout)

    def complete(self, prompt: str) -> str:
        body = {"model": self.model, "temperature": 0,
                "messages": [{"role": "user", "content": prompt}]}
        try:
            resp = self._client.post(self.endpoint, json=body)
            resp.raise_for_status()
            return resp.json()["choices"][0]["message"]["content"]
        except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
            raise TransportError(str(exc)) from exc


@dataclass
class FineAnnotation:
    labeled: list[LabeledPair]
    unlabeled: list[PairRecord]
    audit: list[dict] = field(default_factory=list)


def _annotate_one(pair: PairRecord, client: LLMClient, kind: InstructionKind, retries: int,
                  backoff: float) -> tuple[int | None, list[dict]]:
    prompt = render_prompt(kind, pair.left, [pair.doc])
    audit = []
    parse_attempts = 0
    transport_attempts = 0
    while True:
        try:
            raw = client.complete(prompt)
        except TransportError as exc:
            audit.append({"pair": list(pair.key), "prompt_hash": prompt_hash(prompt), "prompt": prompt,
                          "response": None, "status": f"transport_error: {exc}"})
            if transport_attempts >= retries:
                return None, audit
            time.sleep(backoff * 2**transport_attempts)
            transport_attempts += 1
            continue
        try:
            grade = parse_response(kind, raw)
        except ParseFailure as exc:
            audit.append({"pair": list(pair.key), "prompt_hash": prompt_hash(prompt), "prompt": prompt,
                          "response": raw, "status": f"parse_failure: {exc}"})
            if parse_attempts >= 1:
                return None, audit
            parse_attempts += 1
            continue
        audit.append({"pair": list(pair.key), "prompt_hash": prompt_hash(prompt), "prompt": prompt,
                      "response": raw, "status": "ok", "grade": grade})
        return grade, audit


def fine_annotate(pairs: Sequence[PairRecord], client: LLMClient,
                  kind: InstructionKind | str = InstructionKind.COT_GRADE, concurrency: int = 4,
                  retries: int = 2, backoff: float = 0.5) -> FineAnnotation:
    """One 0..4 grade per pair from the LLM, with bounded concurrency.

    Transport errors are retried with exponential backoff; an unparseable
    reply is retried once and then the pair is dropped. Results and the
    audit trail are kept in input order regardless of completion order.
    """
    kind = InstructionKind(kind)
    if not kind.grades:
        raise ValueError("fine annotation needs a grading instruction")
    if concurrency < 1:
        raise ValueError("concurrency must be >= 1")
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        results = list(pool.map(lambda p: _annotate_one(p, client, kind, retries, backoff), pairs))
    out = FineAnnotation([], [])
    for pair, (grade, audit) in zip(pairs, results):
        out.audit.extend(audit)
        if grade is None:
            logger.warning("pair %s left unlabeled", pair.key)
            out.unlabeled.append(pair)
        else:
            out.labeled.append(LabeledPair(pair, grade, "llm", graded=True))
    return out
