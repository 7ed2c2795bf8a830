"""The wire protocol for model-dependent capabilities, plus in-process mocks.

All four capabilities (classify, ner, extract, entail) go through one
request/response shape contract, so a real model service and the mock
backends are interchangeable per endpoint. Mocks never perform I/O and are
fully deterministic.
"""

from __future__ import annotations

import json
import logging
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ConfigError, ProtocolError, TransportError
from .text import is_cjk, surface_tokens

logger = logging.getLogger(__name__)

ENDPOINT_PATHS = {
    "classify": "/v1/classify",
    "ner": "/v1/ner",
    "extract": "/v1/extract",
    "entail": "/v1/entail",
}

_REQUEST_FIELDS = {
    "classify": ("text", "lang"),
    "ner": ("text", "lang"),
    "extract": ("instruction", "input", "lang"),
    "entail": ("premise", "hypothesis", "lang"),
}


def validate_request(endpoint: str, request: dict) -> None:
    if endpoint not in _REQUEST_FIELDS:
        raise ProtocolError(f"unknown endpoint {endpoint!r}", "endpoint")
    for name in _REQUEST_FIELDS[endpoint]:
        if name not in request:
            raise ProtocolError("missing request field", name)
        if not isinstance(request[name], str):
            raise ProtocolError("request field must be a string", name)


def _check_score(value, fieldname: str) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ProtocolError("score must be a number", fieldname)
    if not 0.0 <= value <= 1.0:
        # out-of-range scores are backend bugs; clamping would hide them
        raise ProtocolError(f"score {value} outside [0, 1]", fieldname)
    return float(value)


def validate_response(endpoint: str, response: dict) -> dict:
    if not isinstance(response, dict):
        raise ProtocolError("response body must be an object", ".")
    if endpoint == "classify":
        if "domain" not in response or not isinstance(response["domain"], str):
            raise ProtocolError("missing or non-string field", "domain")
        _check_score(response.get("confidence", 0.0), "confidence")
    elif endpoint == "ner":
        mentions = response.get("mentions")
        if not isinstance(mentions, list):
            raise ProtocolError("missing or non-list field", "mentions")
        for i, m in enumerate(mentions):
            if not isinstance(m, dict):
                raise ProtocolError("mention must be an object", f"mentions[{i}]")
            for k in ("start", "end"):
                if not isinstance(m.get(k), int) or isinstance(m.get(k), bool):
                    raise ProtocolError("offset must be an integer", f"mentions[{i}].{k}")
            if not isinstance(m.get("surface"), str):
                raise ProtocolError("missing or non-string field", f"mentions[{i}].surface")
            if not 0 <= m["start"] < m["end"]:
                raise ProtocolError("span must satisfy 0 <= start < end", f"mentions[{i}].start")
    elif endpoint == "extract":
        if "output" not in response or not isinstance(response["output"], str):
            raise ProtocolError("missing or non-string field", "output")
    elif endpoint == "entail":
        if "entailment" not in response:
            raise ProtocolError("missing field", "entailment")
        _check_score(response["entailment"], "entailment")
    else:
        raise ProtocolError(f"unknown endpoint {endpoint!r}", "endpoint")
    return response


@dataclass(frozen=True)
class BackendEndpointSet:
    base_url: str
    timeout: float = 10.0
    max_in_flight: int = 4
    retry_budget: int = 2

    def __post_init__(self):
        if self.timeout <= 0 or self.max_in_flight <= 0 or self.retry_budget < 0:
            raise ConfigError("backend timeouts and budgets must be positive")


class HttpBackend:
    """Protocol client over HTTP POST with bounded retries and an in-flight cap.

    Safe for concurrent use; each response is consumed by the thread that
    issued its blocking request, never matched by arrival order.
    """

    def __init__(self, endpoints: BackendEndpointSet):
        self.endpoints = endpoints
        self._slots = {
            name: threading.BoundedSemaphore(endpoints.max_in_flight)
            for name in ENDPOINT_PATHS
        }

    def call(self, endpoint: str, request: dict) -> dict:
        validate_request(endpoint, request)
        url = self.endpoints.base_url.rstrip("/") + ENDPOINT_PATHS[endpoint]
        body = json.dumps(request, ensure_ascii=False).encode("utf-8")
        last_error: Exception | None = None
        for attempt in range(self.endpoints.retry_budget + 1):
            if attempt:
                time.sleep(min(0.05 * attempt, 0.5))
            req = urllib.request.Request(
                url, data=body, headers={"Content-Type": "application/json; charset=utf-8"}
            )
            try:
                with self._slots[endpoint]:
                    with urllib.request.urlopen(req, timeout=self.endpoints.timeout) as resp:
                        payload = json.loads(resp.read().decode("utf-8"))
                return validate_response(endpoint, payload)
            except urllib.error.HTTPError as exc:
                if 400 <= exc.code < 500:
                    detail = {}
                    try:
                        detail = json.loads(exc.read().decode("utf-8"))
                    except Exception:
                        pass
                    raise ProtocolError(
                        detail.get("error", f"backend rejected request ({exc.code})"),
                        detail.get("field", "."),
                    )
                last_error = exc
            except (urllib.error.URLError, TimeoutError, json.JSONDecodeError, OSError) as exc:
                last_error = exc
            logger.warning("%s attempt %d failed: %s", endpoint, attempt + 1, last_error)
        raise TransportError(f"{endpoint} failed after retries: {last_error}")

    def classify(self, text: str, lang: str) -> dict:
        return self.call("classify", {"text": text, "lang": lang})

    def ner(self, text: str, lang: str) -> dict:
        return self.call("ner", {"text": text, "lang": lang})

    def extract(self, instruction: str, input: str, lang: str) -> dict:
        return self.call("extract", {"instruction": instruction, "input": input, "lang": lang})

    def entail(self, premise: str, hypothesis: str, lang: str) -> dict:
        return self.call("entail", {"premise": premise, "hypothesis": hypothesis, "lang": lang})


# -- mocks -------------------------------------------------------------------

_DEFAULT_STOPWORDS = {
    "a", "an", "the", "is", "was", "are", "were", "be", "been", "of", "on",
    "in", "at", "by", "to", "for", "and", "or", "as", "its", "his", "her",
    "的", "了", "是", "在", "于", "与", "和", "其",
}


@dataclass
class MockRuleSet:
    """Deterministic rules backing the in-process mock backends."""

    classify_rules: list[tuple[str, str]] = field(default_factory=list)
    classify_fallback: str = "GPE"
    ner_lexicon: list[str] = field(default_factory=list)
    extract_rules: list[dict] = field(default_factory=list)
    entail_rules: list[dict] = field(default_factory=list)
    entail_hi: float = 0.9
    entail_lo: float = 0.1
    stopwords: set[str] = field(default_factory=lambda: set(_DEFAULT_STOPWORDS))

    @classmethod
    def load(cls, path: str | Path | None = None) -> "MockRuleSet":
        if path is None:
            raw = resources.files("kg2instruct.configs").joinpath("mock_rules.json").read_text("utf-8")
            data = json.loads(raw)
        else:
            data = json.loads(Path(path).read_text("utf-8"))
        entail = data.get("entail", {})
        return cls(
            classify_rules=[tuple(r) for r in data.get("classify", {}).get("rules", [])],
            classify_fallback=data.get("classify", {}).get("fallback", "GPE"),
            ner_lexicon=list(data.get("ner", {}).get("lexicon", [])),
            extract_rules=list(data.get("extract", {}).get("rules", [])),
            entail_rules=list(entail.get("rules", [])),
            entail_hi=entail.get("hi", 0.9),
            entail_lo=entail.get("lo", 0.1),
            stopwords=set(_DEFAULT_STOPWORDS) | set(entail.get("stopwords_extra", [])),
        )


def _content_tokens(s: str, stopwords: set[str]) -> set[str]:
    return {t.casefold() for t in surface_tokens(s)} - stopwords


class MockBackend:
    """In-process, I/O-free stand-in for all four endpoints."""

    def __init__(self, rules: MockRuleSet | None = None):
        self.rules = rules or MockRuleSet.load()

    def call(self, endpoint: str, request: dict) -> dict:
        validate_request(endpoint, request)
        handler = getattr(self, f"_{endpoint}")
        return validate_response(endpoint, handler(request))

    def classify(self, text: str, lang: str) -> dict:
        return self.call("classify", {"text": text, "lang": lang})

    def ner(self, text: str, lang: str) -> dict:
        return self.call("ner", {"text": text, "lang": lang})

    def extract(self, instruction: str, input: str, lang: str) -> dict:
        return self.call("extract", {"instruction": instruction, "input": input, "lang": lang})

    def entail(self, premise: str, hypothesis: str, lang: str) -> dict:
        return self.call("entail", {"premise": premise, "hypothesis": hypothesis, "lang": lang})

    def _classify(self, request: dict) -> dict:
        text = request["text"]
        folded = text.casefold()
        for keyword, domain in self.rules.classify_rules:
            haystack = text if any(is_cjk(c) for c in keyword) else folded
            if keyword.casefold() in haystack:
                return {"domain": domain, "confidence": 0.95}
        return {"domain": self.rules.classify_fallback, "confidence": 0.5}

    def _ner(self, request: dict) -> dict:
        text = request["text"]
        spans: list[tuple[int, int, str]] = []
        for surface in self.rules.ner_lexicon:
            start = text.find(surface)
            while start != -1:
                spans.append((start, start + len(surface), surface))
                start = text.find(surface, start + 1)
        chosen: list[tuple[int, int, str]] = []
        for start, end, surface in sorted(spans, key=lambda s: (-(s[1] - s[0]), s[0])):
            if not any(start < e and s < end for s, e, _ in chosen):
                chosen.append((start, end, surface))
        chosen.sort(key=lambda s: s[0])
        return {"mentions": [{"start": s, "end": e, "surface": t} for s, e, t in chosen]}

    def _extract(self, request: dict) -> dict:
        from .instruct_render import render_output
        from .triples import PROVENANCE_LLM, SurfaceTriple

        text = request["input"]
        triples: list[SurfaceTriple] = []
        types: dict[str, str] = {}
        for rule in self.rules.extract_rules:
            if rule["contains"] in text:
                for t in rule["triples"]:
                    triples.append(
                        SurfaceTriple(
                            t["head"], t["relation"], t["tail"], provenance=PROVENANCE_LLM
                        )
                    )
                    types.setdefault(t["head"], t.get("entity_type", "other"))
        return {"output": render_output(triples, types)}

    def _entail(self, request: dict) -> dict:
        premise, hypothesis = request["premise"], request["hypothesis"]
        for rule in self.rules.entail_rules:
            if "hypothesis_contains" in rule and rule["hypothesis_contains"] not in hypothesis:
                continue
            if "premise_contains" in rule and rule["premise_contains"] not in premise:
                continue
            return {"entailment": _check_score(rule["score"], "entailment")}
        hyp_tokens = _content_tokens(hypothesis, self.rules.stopwords)
        prem_tokens = _content_tokens(premise, self.rules.stopwords)
        covered = hyp_tokens <= prem_tokens
        return {"entailment": self.rules.entail_hi if covered else self.rules.entail_lo}
