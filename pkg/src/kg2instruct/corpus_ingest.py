"""Corpus ingestion: wikitext documents -> filtered, domain-labelled paragraphs.

Documents arrive as line-delimited JSON records
``{"id", "lang", "title", "wikitext"}`` where the wikitext uses
``[[Target|surface]]`` / ``[[Target]]`` link markup. Templates, tables,
references and headings are stripped, not rendered.
"""

from __future__ import annotations

import enum
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from .errors import CorpusParseError, ProtocolError
from .text import token_count

logger = logging.getLogger(__name__)

DEFAULT_MIN_TOKENS = 50
DEFAULT_MAX_TOKENS = 512


class DomainLabel(enum.Enum):
    """The 12 textual domains. GPE first: it doubles as the mock fallback."""

    GPE = "GPE"
    Event = "Event"
    Person = "Person"
    Science = "Science"
    Product = "Product"
    Creature = "Creature"
    Building = "Building"
    Artworks = "Artworks"
    Medicine = "Medicine"
    Transport = "Transport"
    Astronomy = "Astronomy"
    Organization = "Organization"


assert len(DomainLabel) == 12


@dataclass(frozen=True)
class Anchor:
    """A link span [start, end) into the rendered paragraph text."""

    start: int
    end: int
    target_title: str


@dataclass
class Paragraph:
    id: str
    lang: str
    text: str
    token_count: int
    anchors: list[Anchor] = field(default_factory=list)
    domain: DomainLabel | None = None
    flags: list[str] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "lang": self.lang,
            "text": self.text,
            "token_count": self.token_count,
            "domain": self.domain.value if self.domain else None,
            "anchors": [
                {"start": a.start, "end": a.end, "target_title": a.target_title}
                for a in self.anchors
            ],
            "flags": list(self.flags),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Paragraph":
        return cls(
            id=rec["id"],
            lang=rec["lang"],
            text=rec["text"],
            token_count=rec["token_count"],
            anchors=[
                Anchor(a["start"], a["end"], a["target_title"])
                for a in rec.get("anchors", [])
            ],
            domain=DomainLabel(rec["domain"]) if rec.get("domain") else None,
            flags=list(rec.get("flags", [])),
        )


@dataclass
class ExtractResult:
    paragraphs: list[Paragraph]
    skipped_unbalanced: int = 0


_COMMENT_RE = re.compile(r"<!--.*?-->", re.DOTALL)
_REF_RE = re.compile(r"<ref[^>/]*/>|<ref[^>]*>.*?</ref>", re.DOTALL)
_INNER_TEMPLATE_RE = re.compile(r"\{\{[^{}]*\}\}", re.DOTALL)
_TABLE_RE = re.compile(r"^\{\|.*?^\|\}\s*?$", re.DOTALL | re.MULTILINE)
_HEADING_RE = re.compile(r"^=+[^=\n]*=+\s*$", re.MULTILINE)
_EXTLINK_RE = re.compile(r"\[(?:https?|ftp)://\S*(?:\s+([^\]]*))?\]")
_LIST_MARKER_RE = re.compile(r"^[*#:;]+\s*", re.MULTILINE)
_BLANK_SPLIT_RE = re.compile(r"\n\s*\n")
_DROP_PREFIXES = ("file:", "image:", "category:")


def _strip_block_markup(wikitext: str) -> str:
    s = _COMMENT_RE.sub("", wikitext)
    s = _REF_RE.sub("", s)
    for _ in range(20):  # nesting depth bound for templates
        s, n = _INNER_TEMPLATE_RE.subn("", s)
        if not n:
            break
    s = _TABLE_RE.sub("", s)
    s = _HEADING_RE.sub("", s)
    s = _LIST_MARKER_RE.sub("", s)
    s = s.replace("'''", "").replace("''", "")
    s = _EXTLINK_RE.sub(lambda m: m.group(1) or "", s)
    return s


class _UnbalancedLink(Exception):
    pass


def _render_links(chunk: str) -> tuple[str, list[Anchor]]:
    """Render [[...]] markup, tracking anchor spans into the output text.

    Raises _UnbalancedLink on dangling or stray bracket pairs.
    """
    out: list[str] = []
    out_len = 0
    anchors: list[Anchor] = []
    i = 0
    n = len(chunk)
    while i < n:
        if chunk.startswith("[[", i):
            depth = 1
            j = i + 2
            while j < n and depth:
                if chunk.startswith("[[", j):
                    depth += 1
                    j += 2
                elif chunk.startswith("]]", j):
                    depth -= 1
                    j += 2
                else:
                    j += 1
            if depth:
                raise _UnbalancedLink()
            inner = chunk[i + 2 : j - 2]
            i = j
            target, _, piped = inner.partition("|")
            target = target.strip().lstrip(":")
            if target.lower().startswith(_DROP_PREFIXES):
                continue
            target = target.split("#", 1)[0].strip()
            surface = piped.rsplit("|", 1)[-1].strip() if piped else target
            if not surface:
                surface = target
            if not target:
                raise _UnbalancedLink()
            # nesting is only legal inside dropped links (file captions)
            if any(tok in target or tok in surface for tok in ("[[", "]]")):
                raise _UnbalancedLink()
            anchors.append(Anchor(out_len, out_len + len(surface), target))
            out.append(surface)
            out_len += len(surface)
        elif chunk.startswith("]]", i):
            raise _UnbalancedLink()
        else:
            out.append(chunk[i])
            out_len += 1
            i += 1
    return "".join(out), anchors


def _collapse_spaces(text: str, anchors: list[Anchor]) -> tuple[str, list[Anchor]]:
    """Collapse doubled spaces (left by dropped links) and trim, remapping spans."""
    new_pos: list[int] = []
    out: list[str] = []
    for ch in text:
        if ch == " " and out and out[-1] == " ":
            new_pos.append(len(out) - 1)
            continue
        new_pos.append(len(out))
        out.append(ch)
    new_pos.append(len(out))
    collapsed = "".join(out)
    lstrip = len(collapsed) - len(collapsed.lstrip(" "))
    final = collapsed.strip(" ")
    remapped = []
    for a in anchors:
        start = new_pos[a.start] - lstrip
        end = new_pos[a.end] - lstrip
        # surfaces never contain doubled spaces, so spans survive the collapse
        assert 0 <= start < end <= len(final)
        remapped.append(Anchor(start, end, a.target_title))
    return final, remapped


def extract_paragraphs(document: dict, lang: str) -> ExtractResult:
    """Parse one corpus document into paragraphs (domain unset).

    Paragraphs with unbalanced link markup are skipped and counted.
    """
    doc_id = document["id"]
    stripped = _strip_block_markup(document.get("wikitext", ""))
    paragraphs: list[Paragraph] = []
    skipped = 0
    for idx, raw_chunk in enumerate(_BLANK_SPLIT_RE.split(stripped)):
        chunk = " ".join(raw_chunk.split())
        if not chunk:
            continue
        try:
            text, anchors = _render_links(chunk)
        except _UnbalancedLink:
            skipped += 1
            logger.warning("skipping paragraph %s:p%d: unbalanced link markup", doc_id, idx)
            continue
        text, anchors = _collapse_spaces(text, anchors)
        if not text:
            continue
        paragraphs.append(
            Paragraph(
                id=f"{doc_id}:p{idx}",
                lang=lang,
                text=text,
                token_count=token_count(text, lang),
                anchors=anchors,
            )
        )
    return ExtractResult(paragraphs=paragraphs, skipped_unbalanced=skipped)


def filter_by_length(
    paragraphs: list[Paragraph],
    min_tokens: int = DEFAULT_MIN_TOKENS,
    max_tokens: int = DEFAULT_MAX_TOKENS,
) -> list[Paragraph]:
    """Keep paragraphs with min_tokens <= token_count <= max_tokens (inclusive)."""
    return [p for p in paragraphs if min_tokens <= p.token_count <= max_tokens]


def classify_domain(p: Paragraph, backend) -> DomainLabel:
    """Assign one of the 12 domains via the classification backend."""
    resp = backend.classify(p.text, p.lang)
    raw = resp["domain"]
    try:
        return DomainLabel(raw)
    except ValueError:
        raise ProtocolError(f"backend returned unknown domain {raw!r}", "domain")


def iter_documents(path: str | Path) -> Iterator[dict]:
    """Yield documents from a line-delimited JSON corpus file.

    Malformed lines raise CorpusParseError naming the byte offset of the line.
    """
    offset = 0
    with open(path, "rb") as fh:
        for raw in fh:
            line = raw.decode("utf-8", errors="strict").strip()
            if line:
                try:
                    doc = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CorpusParseError(f"invalid JSON document: {exc.msg}", offset)
                if not isinstance(doc, dict) or "id" not in doc:
                    raise CorpusParseError("document record missing 'id'", offset)
                yield doc
            offset += len(raw)
