"""Hallucinatory-triple filtering via entailment scoring.

Each triple is turned into 3 hypotheses from its relation's templates; the
paragraph is the premise; the max of the 3 scores is the triple's
entailment, retained iff it reaches the threshold (inclusive).
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import replace
from importlib import resources
from pathlib import Path

from .corpus_ingest import Paragraph
from .errors import ConfigError, ProtocolError, TransportError
from .text import split_sentences
from .triples import SurfaceTriple

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.5
TEMPLATES_PER_RELATION = 3

_PLACEHOLDER_RE = re.compile(r"\[[XY]\]")


class RelationTemplates:
    """relation label -> exactly 3 templates, each with [X] and [Y] once."""

    def __init__(self, templates: dict[str, list[str]]):
        for relation, tpls in templates.items():
            if len(tpls) != TEMPLATES_PER_RELATION:
                raise ConfigError(
                    f"relation {relation!r} has {len(tpls)} templates, need {TEMPLATES_PER_RELATION}"
                )
            for tpl in tpls:
                if tpl.count("[X]") != 1 or tpl.count("[Y]") != 1:
                    raise ConfigError(
                        f"template {tpl!r} for {relation!r} must contain [X] and [Y] exactly once"
                    )
        self._templates = {k: list(v) for k, v in templates.items()}

    def __contains__(self, relation: str) -> bool:
        return relation in self._templates

    def __len__(self) -> int:
        return len(self._templates)

    def get(self, relation: str) -> list[str]:
        return list(self._templates[relation])

    def relations(self) -> list[str]:
        return list(self._templates)

    @classmethod
    def load(cls, lang: str, path: str | Path | None = None) -> "RelationTemplates":
        if path is None:
            raw = resources.files("kg2instruct.configs").joinpath(
                f"nli_templates.{lang}.json"
            ).read_text("utf-8")
            return cls(json.loads(raw))
        return cls(json.loads(Path(path).read_text("utf-8")))


def instantiate(t: SurfaceTriple, templates: RelationTemplates) -> list[str]:
    """The triple's 3 hypothesis strings. Substitution is single-pass, so a
    head containing a literal "[Y]" is inserted verbatim, never re-expanded."""
    subst = {"[X]": t.head, "[Y]": t.tail}
    return [
        _PLACEHOLDER_RE.sub(lambda m: subst[m.group()], tpl)
        for tpl in templates.get(t.relation)
    ]


def _score_hypothesis(premises: list[str], hypothesis: str, backend, lang: str) -> float | None:
    """Max entailment over premises; None when every call failed."""
    best: float | None = None
    for premise in premises:
        try:
            value = backend.entail(premise, hypothesis, lang)["entailment"]
        except (TransportError, ProtocolError) as exc:
            logger.warning("entailment call failed (%s); hypothesis scored 0", exc)
            continue
        best = value if best is None else max(best, value)
    return best


def filter_triples(
    p: Paragraph,
    triples: list[SurfaceTriple],
    templates: RelationTemplates,
    backend,
    threshold: float = DEFAULT_THRESHOLD,
    sentence_premise: bool = False,
) -> list[SurfaceTriple]:
    """Retain triples whose max template score >= threshold, in input order.

    Missing templates and fully failed backends retain the triple unfiltered
    with a flag; filtering is a precision mechanism, so silent drops on
    degradation would corrupt recall unpredictably.
    """
    premises = split_sentences(p.text) if sentence_premise else [p.text]
    if not premises:
        premises = [p.text]
    kept: list[SurfaceTriple] = []
    for t in triples:
        if t.relation not in templates:
            logger.warning("no templates for relation %r; retained unfiltered", t.relation)
            kept.append(replace(t, flags=t.flags + ["no_template"]))
            continue
        scores = [
            _score_hypothesis(premises, h, backend, p.lang) for h in instantiate(t, templates)
        ]
        if all(s is None for s in scores):
            kept.append(replace(t, flags=t.flags + ["nli_degraded"]))
            continue
        entailment = max(s if s is not None else 0.0 for s in scores)
        if entailment >= threshold:
            kept.append(replace(t, entailment=entailment))
    return kept
