"""Recovery of triples the KG is missing, via the extraction backend.

The backend gets the same instruction a trained model would see (domain
schema included); its output is parsed with the evaluator's parser, cleaned
against the mapper and the text, then merged with KG-provenance triples.
"""

from __future__ import annotations

import logging

from .corpus_ingest import Paragraph
from .errors import ProtocolError, TransportError
from .evaluator import parse_output
from .instruct_render import render_instruction
from .schema_matcher import SchemaMapper
from .text import normalize_surface
from .triples import PROVENANCE_LLM, SurfaceTriple

logger = logging.getLogger(__name__)


def supplement(
    p: Paragraph,
    mapper: SchemaMapper,
    backend,
    instruction_templates: dict | None = None,
) -> tuple[list[SurfaceTriple], list[str]]:
    """LLM-provenance triples for one paragraph, plus degradation flags.

    Backend output is cleaned: relations must be in the mapper, and head and
    tail must occur verbatim in the text (the micro-F1 metric and the NLI
    premise are incoherent otherwise).
    """
    assert p.domain is not None and mapper.domain == p.domain
    schema = mapper.labels(p.lang)
    instruction = render_instruction(p.domain, schema, p.lang, instruction_templates)
    try:
        resp = backend.extract(instruction, p.text, p.lang)
    except (TransportError, ProtocolError) as exc:
        logger.warning("supplement degraded for %s: %s", p.id, exc)
        return [], ["supplement_degraded"]
    parsed = parse_output(resp["output"])
    if parsed is None:
        logger.warning("unparseable extraction output for %s", p.id)
        return [], ["unparseable"]
    canonical = {normalize_surface(label, p.lang): label for label in schema}
    cleaned: list[SurfaceTriple] = []
    for t in parsed:
        label = canonical.get(normalize_surface(t.relation, p.lang))
        if label is None:
            continue
        if t.head not in p.text or t.tail not in p.text:
            continue
        cleaned.append(SurfaceTriple(t.head, label, t.tail, provenance=PROVENANCE_LLM))
    return cleaned, []


def merge_dedupe(
    kg_triples: list[SurfaceTriple],
    llm_triples: list[SurfaceTriple],
    lang: str,
) -> list[SurfaceTriple]:
    """Union keyed by the normalized (head, relation, tail); KG wins
    collisions. Order: KG triples first, then surviving LLM triples,
    each in input order."""
    out: list[SurfaceTriple] = []
    seen: set[tuple[str, str, str]] = set()
    for t in kg_triples:
        k = t.key(lang)
        if k not in seen:
            seen.add(k)
            out.append(t)
    for t in llm_triples:
        k = t.key(lang)
        if k not in seen:
            seen.add(k)
            out.append(t)
    return out
