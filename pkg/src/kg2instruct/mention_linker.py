"""Mention identification and disambiguation.

Anchors seed the mention set; later exact occurrences of anchored surfaces
are propagated (links only annotate the first appearance); an NER backend
fills in the rest. Each mention is then resolved to a single KG id by a
counting score over the tail-entity neighbourhood of each candidate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

from .corpus_ingest import Paragraph
from .errors import ProtocolError, TransportError
from .kg_store import KgStore
from .text import normalize_surface

logger = logging.getLogger(__name__)

SOURCE_ANCHOR = "anchor"
SOURCE_PROPAGATED = "propagated"
SOURCE_NER = "ner"


@dataclass
class EntityMention:
    start: int
    end: int
    surface: str
    candidates: list[str] = field(default_factory=list)
    resolved: str | None = None
    etype: str | None = None
    source: str = SOURCE_ANCHOR

    def to_record(self) -> dict:
        return {
            "start": self.start,
            "end": self.end,
            "surface": self.surface,
            "candidates": list(self.candidates),
            "resolved": self.resolved,
            "etype": self.etype,
            "source": self.source,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "EntityMention":
        return cls(
            start=rec["start"],
            end=rec["end"],
            surface=rec["surface"],
            candidates=list(rec.get("candidates", [])),
            resolved=rec.get("resolved"),
            etype=rec.get("etype"),
            source=rec.get("source", SOURCE_ANCHOR),
        )


@dataclass
class MentionSet:
    mentions: list[EntityMention]
    flags: list[str] = field(default_factory=list)


def _overlaps(start: int, end: int, taken: list[tuple[int, int]]) -> bool:
    return any(start < e and s < end for s, e in taken)


def identify_mentions(p: Paragraph, store: KgStore, ner_backend=None) -> MentionSet:
    """Anchor, propagated and NER mentions, non-overlapping, sorted by offset.

    Precedence on overlap: anchor > propagated > ner, longest span first
    within a class. NER failures degrade to anchor+propagated mentions only.
    """
    mentions: list[EntityMention] = []
    taken: list[tuple[int, int]] = []
    flags: list[str] = []

    anchor_candidates: dict[str, list[str]] = {}  # surface -> candidate list
    first_anchor_end: dict[str, int] = {}
    for a in sorted(p.anchors, key=lambda a: (-(a.end - a.start), a.start)):
        if _overlaps(a.start, a.end, taken):
            continue
        surface = p.text[a.start : a.end]
        cands = set(store.candidates(a.target_title, p.lang))
        cands.update(store.candidates(surface, p.lang))
        ordered = store.order_qids(cands)
        mentions.append(
            EntityMention(a.start, a.end, surface, candidates=ordered, source=SOURCE_ANCHOR)
        )
        taken.append((a.start, a.end))
        if surface not in anchor_candidates:
            anchor_candidates[surface] = ordered
            first_anchor_end[surface] = a.end
        else:
            first_anchor_end[surface] = min(first_anchor_end[surface], a.end)

    for surface in sorted(anchor_candidates, key=lambda s: (-len(s), s)):
        pos = p.text.find(surface, first_anchor_end[surface])
        while pos != -1:
            end = pos + len(surface)
            if not _overlaps(pos, end, taken):
                mentions.append(
                    EntityMention(
                        pos,
                        end,
                        surface,
                        candidates=list(anchor_candidates[surface]),
                        source=SOURCE_PROPAGATED,
                    )
                )
                taken.append((pos, end))
            pos = p.text.find(surface, pos + 1)

    if ner_backend is not None:
        try:
            resp = ner_backend.ner(p.text, p.lang)
            spans = []
            for i, m in enumerate(resp["mentions"]):
                if p.text[m["start"] : m["end"]] != m["surface"]:
                    raise ProtocolError(
                        "ner span does not slice its surface", f"mentions[{i}]"
                    )
                spans.append((m["start"], m["end"], m["surface"]))
            for start, end, surface in sorted(spans, key=lambda s: (-(s[1] - s[0]), s[0])):
                if _overlaps(start, end, taken):
                    continue
                mentions.append(
                    EntityMention(
                        start,
                        end,
                        surface,
                        candidates=store.candidates(surface, p.lang),
                        source=SOURCE_NER,
                    )
                )
                taken.append((start, end))
        except (TransportError, ProtocolError) as exc:
            logger.warning("NER degraded for %s: %s", p.id, exc)
            flags.append("ner_degraded")

    mentions.sort(key=lambda m: m.start)
    return MentionSet(mentions=mentions, flags=flags)


def _candidate_score(
    qid: str, others: list[str], store: KgStore, lang: str, count_head_neighbors: bool
) -> int:
    """Occurrences in the rest of the mention set of any surface naming a
    neighbour of ``qid``, counted per triple and with multiplicity."""
    score = 0
    neighbour_triples = [
        t.tail_qid for t in store.triples_from(qid) if t.tail_qid and t.tail_resolvable
    ]
    if count_head_neighbors:
        neighbour_triples += [t.head for t in store.triples_to(qid)]
    for other_qid in neighbour_triples:
        forms = store.surface_forms(other_qid, lang)
        score += sum(1 for s in others if s in forms)
    return score


def disambiguate(
    mentions: list[EntityMention],
    store: KgStore,
    lang: str,
    count_head_neighbors: bool = False,
) -> list[EntityMention]:
    """Resolve each mention to the candidate whose KG neighbourhood is most
    mentioned elsewhere in the paragraph; ties and all-zero scores fall back
    to the candidate ordering (degree, then qid)."""
    normalized = [normalize_surface(m.surface, lang) for m in mentions]
    resolved: list[EntityMention] = []
    for i, m in enumerate(mentions):
        if not m.candidates:
            resolved.append(replace(m, resolved=None, etype=None))
            continue
        others = normalized[:i] + normalized[i + 1 :]
        best, best_score = None, -1
        for q in m.candidates:
            s = _candidate_score(q, others, store, lang, count_head_neighbors)
            if s > best_score:
                best, best_score = q, s
        resolved.append(replace(m, resolved=best, etype=store.entity_type(best)))
    return resolved
