"""Pluggable completion backends and structured-response parsing.

The mock backend is fully offline and deterministic (canned responses per
task id, an echo mode, or a programmable responder).  The remote backend
speaks the OpenAI-style chat-completion wire format with temperature 0.
Responses are parsed as JSON with two repair passes: stripping code fences
and extracting the first balanced object.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from typing import Callable

from .errors import TransportError

DEFAULT_MAX_TOKENS = 100
_RETRY_ATTEMPTS = 3
_RETRY_BASE_DELAY = 0.5


@dataclass
class CompletionResult:
    completed_code: str
    explanation: str
    confidence_score: float
    referenced_nodes: list[str]
    raw: str
    diagnostics: list[str] = field(default_factory=list)


class MockBackend:
    """Offline backend: canned JSON per task id or a programmable responder."""

    kind = "mock"

    def __init__(
        self,
        responses: dict[str, str] | None = None,
        default: str | None = None,
        responder: Callable[[str, str | None], str] | None = None,
    ):
        self.responses = responses or {}
        self.default = default
        self.responder = responder

    @classmethod
    def echo(cls, groundtruth: dict[str, str]) -> "MockBackend":
        """Backend that answers every task with its reference line."""
        responses = {
            task_id: json.dumps(
                {
                    "completed_code": line,
                    "explanation": "echo backend",
                    "confidence_score": 1.0,
                    "referenced_nodes": [],
                }
            )
            for task_id, line in groundtruth.items()
        }
        return cls(responses=responses)

    def generate(self, prompt: str, task_id: str | None = None) -> str:
        if self.responder is not None:
            return self.responder(prompt, task_id)
        if task_id is not None and task_id in self.responses:
            return self.responses[task_id]
        if self.default is not None:
            return self.default
        return json.dumps(
            {
                "completed_code": "",
                "explanation": "no canned response",
                "confidence_score": 0.0,
                "referenced_nodes": [],
            }
        )


class RemoteHttpBackend:
    """OpenAI-style chat-completion client with bounded retries."""

    kind = "remote"

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: str = "GRAPHCOMPLETE_API_KEY",
        max_tokens: int = DEFAULT_MAX_TOKENS,
        temperature: float = 0.0,
        transport=None,
        sleep=time.sleep,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.max_tokens = max_tokens
        self.temperature = temperature
        self._sleep = sleep
        if transport is None:
            import requests

            transport = requests.post
        self._post = transport

    def generate(self, prompt: str, task_id: str | None = None) -> str:
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
        }
        last_error: Exception | None = None
        for attempt in range(_RETRY_ATTEMPTS):
            try:
                response = self._post(
                    f"{self.endpoint}/chat/completions",
                    json=payload,
                    headers=headers,
                    timeout=60,
                )
                status = getattr(response, "status_code", 200)
                if status != 200:
                    raise TransportError(f"completion backend returned HTTP {status}")
                body = response.json()
                return body["choices"][0]["message"]["content"]
            except Exception as exc:  # transport and decode failures are retried
                last_error = exc
                if attempt + 1 < _RETRY_ATTEMPTS:
                    self._sleep(_RETRY_BASE_DELAY * (2**attempt))
        raise TransportError(f"completion backend failed after {_RETRY_ATTEMPTS} attempts: {last_error}")


CompletionBackend = MockBackend | RemoteHttpBackend


def _strip_fences(text: str) -> str:
    stripped = text.strip()
    if stripped.startswith("```"):
        lines = stripped.splitlines()
        lines = lines[1:]
        if lines and lines[-1].strip().startswith("```"):
            lines = lines[:-1]
        return "\n".join(lines).strip()
    return stripped


def _first_balanced_object(text: str) -> str | None:
    depth = 0
    start = None
    in_string = False
    escape = False
    for pos, char in enumerate(text):
        if in_string:
            if escape:
                escape = False
            elif char == "\\":
                escape = True
            elif char == '"':
                in_string = False
            continue
        if char == '"':
            in_string = True
        elif char == "{":
            if depth == 0:
                start = pos
            depth += 1
        elif char == "}":
            if depth > 0:
                depth -= 1
                if depth == 0 and start is not None:
                    return text[start : pos + 1]
    return None


def parse_completion(raw: str) -> CompletionResult:
    """Parse the structured reply, repairing fences and stray prose."""
    diagnostics: list[str] = []
    payload = None
    for candidate in (raw, _strip_fences(raw), _first_balanced_object(_strip_fences(raw)) or ""):
        if not candidate:
            continue
        try:
            parsed = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        if isinstance(parsed, dict):
            payload = parsed
            break
    if payload is None:
        return CompletionResult(
            completed_code="",
            explanation="",
            confidence_score=0.0,
            referenced_nodes=[],
            raw=raw,
            diagnostics=["response was not parseable JSON; returning empty completion"],
        )

    completed = payload.get("completed_code", "")
    if not isinstance(completed, str):
        completed = str(completed)
        diagnostics.append("completed_code was not a string")
    if "\n" in completed:
        completed = completed.split("\n", 1)[0]
        diagnostics.append("multi-line completed_code truncated at first newline")

    confidence = payload.get("confidence_score", 0.0)
    try:
        confidence = float(confidence)
    except (TypeError, ValueError):
        confidence = 0.0
        diagnostics.append("confidence_score was not numeric")
    if not 0.0 <= confidence <= 1.0:
        confidence = min(1.0, max(0.0, confidence))
        diagnostics.append("confidence_score clamped to [0, 1]")

    nodes = payload.get("referenced_nodes", [])
    if not isinstance(nodes, list):
        nodes = []
        diagnostics.append("referenced_nodes was not a list")
    nodes = [str(n) for n in nodes]

    explanation = payload.get("explanation", "")
    if not isinstance(explanation, str):
        explanation = str(explanation)

    return CompletionResult(
        completed_code=completed,
        explanation=explanation,
        confidence_score=confidence,
        referenced_nodes=nodes,
        raw=raw,
        diagnostics=diagnostics,
    )


def complete(prompt: str, backend: CompletionBackend, task_id: str | None = None) -> CompletionResult:
    """Send one prompt and parse the structured completion."""
    if not prompt:
        raise ValueError("prompt must be non-empty")
    raw = backend.generate(prompt, task_id=task_id)
    return parse_completion(raw)
