"""Model adapters behind the four endpoints.

Each adapter wraps a pipeline-style callable and converts its output to the
wire shape. Model references are either HuggingFace ids / local paths
(loaded through ``transformers.pipeline``) or ``dummy:`` references that
resolve to deterministic built-in stand-ins with the same call signature,
so the post-processing here is exercised identically either way.
"""

from __future__ import annotations

import hashlib
import logging
import re

logger = logging.getLogger(__name__)

DOMAINS = [
    "GPE", "Event", "Person", "Science", "Product", "Creature",
    "Building", "Artworks", "Medicine", "Transport", "Astronomy", "Organization",
]

_CJK_RE = re.compile(r"[一-鿿㐀-䶿]+")
_CAPSEQ_RE = re.compile(r"\b(?:[A-Z][\w'.-]*)(?:\s+(?:of\s+)?[A-Z][\w'.-]*)*")

_STOPWORDS = {
    "a", "an", "the", "is", "was", "are", "were", "of", "on", "in", "at",
    "by", "to", "for", "and", "or", "的", "了", "是", "在", "于",
}


class ModelLoadError(Exception):
    """A configured model reference could not be resolved."""


# -- dummy pipelines ----------------------------------------------------------


class DummyTextClassifier:
    """Deterministic domain picker with pipeline-style output."""

    def __call__(self, text, **kwargs):
        digest = hashlib.sha256(text.encode("utf-8")).digest()
        label = DOMAINS[digest[0] % len(DOMAINS)]
        return [{"label": label, "score": 0.5 + digest[1] / 512}]


class DummyNerTagger:
    """Finds capitalized-word sequences and CJK runs with char offsets."""

    def __call__(self, text, **kwargs):
        entities = []
        for m in _CAPSEQ_RE.finditer(text):
            entities.append({
                "entity_group": "MISC", "score": 0.99,
                "word": m.group(), "start": m.start(), "end": m.end(),
            })
        for m in _CJK_RE.finditer(text):
            entities.append({
                "entity_group": "MISC", "score": 0.95,
                "word": m.group(), "start": m.start(), "end": m.end(),
            })
        return entities


class DummyGenerator:
    """Always answers with the canonical empty extraction."""

    def __call__(self, prompt, **kwargs):
        return [{"generated_text": "[]"}]


class DummyNliScorer:
    """Token-coverage entailment with NLI-pipeline-style label scores."""

    def __call__(self, inputs, **kwargs):
        premise, hypothesis = inputs["text"], inputs["text_pair"]

        def tokens(s):
            toks = set(s.replace("。", " ").replace("，", " ").split())
            toks |= set(_CJK_RE.findall(s))
            for run in _CJK_RE.findall(s):
                toks |= set(run)
            return {t.strip(".,;:!?()[]\"'").casefold() for t in toks} - _STOPWORDS - {""}

        hyp = tokens(hypothesis)
        covered = len(hyp & tokens(premise)) / len(hyp) if hyp else 0.0
        entail = round(0.05 + 0.9 * covered, 6)
        rest = 1.0 - entail
        return [
            {"label": "entailment", "score": entail},
            {"label": "neutral", "score": round(rest * 0.7, 6)},
            {"label": "contradiction", "score": round(rest * 0.3, 6)},
        ]


# -- loading -------------------------------------------------------------------

_DUMMIES = {
    "classify": DummyTextClassifier,
    "ner": DummyNerTagger,
    "extract": DummyGenerator,
    "entail": DummyNliScorer,
}

_TASKS = {
    "classify": "text-classification",
    "ner": "token-classification",
    "extract": "text2text-generation",
    "entail": "text-classification",
}


def load_pipeline(capability: str, model_ref: str, device: str = "cpu"):
    if model_ref.startswith("dummy:"):
        return _DUMMIES[capability]()
    try:
        from transformers import pipeline
    except ImportError as exc:
        raise ModelLoadError(f"transformers is required for model {model_ref!r}: {exc}")
    try:
        kwargs = {"model": model_ref, "device": device}
        if capability == "ner":
            kwargs["aggregation_strategy"] = "simple"
        if capability == "entail":
            kwargs["top_k"] = None
        return pipeline(_TASKS[capability], **kwargs)
    except Exception as exc:
        raise ModelLoadError(f"cannot load {capability} model {model_ref!r}: {exc}")


# -- adapters: pipeline output -> wire shape ------------------------------------


class ClassifyAdapter:
    def __init__(self, pipe, label_map=None):
        self.pipe = pipe
        self.label_map = dict(label_map or {})

    def run(self, text: str, lang: str) -> dict:
        results = self.pipe(text, truncation=True)
        if results and isinstance(results[0], list):
            results = results[0]
        top = max(results, key=lambda r: r["score"])
        domain = self.label_map.get(top["label"], top["label"])
        return {"domain": domain, "confidence": float(min(1.0, max(0.0, top["score"])))}


class NerAdapter:
    def __init__(self, pipe):
        self.pipe = pipe

    def run(self, text: str, lang: str) -> dict:
        mentions = []
        for ent in self.pipe(text):
            start, end = ent.get("start"), ent.get("end")
            if start is None or end is None:
                continue  # model without char offsets; nothing safe to emit
            start, end = int(start), int(end)
            # trim whitespace the aggregation may have swallowed
            while start < end and text[start].isspace():
                start += 1
            while end > start and text[end - 1].isspace():
                end -= 1
            if start < end:
                mentions.append({"start": start, "end": end, "surface": text[start:end]})
        return {"mentions": mentions}


class ExtractAdapter:
    def __init__(self, pipe, max_new_tokens: int = 512):
        self.pipe = pipe
        self.max_new_tokens = max_new_tokens

    def run(self, instruction: str, input_text: str, lang: str) -> dict:
        prompt = f"{instruction}\n{input_text}"
        results = self.pipe(prompt, max_new_tokens=self.max_new_tokens)
        text = results[0].get("generated_text", "")
        # decoder-only models echo the prompt; return only the continuation
        if text.startswith(prompt):
            text = text[len(prompt):]
        return {"output": text.strip()}


class EntailAdapter:
    def __init__(self, pipe):
        self.pipe = pipe

    def run(self, premise: str, hypothesis: str, lang: str) -> dict:
        results = self.pipe({"text": premise, "text_pair": hypothesis}, truncation=True)
        if results and isinstance(results[0], list):
            results = results[0]
        entail = 0.0
        for row in results:
            if "entail" in row["label"].casefold():
                entail = float(row["score"])
                break
        return {"entailment": min(1.0, max(0.0, entail))}
