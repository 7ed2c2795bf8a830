"""Schema-constrained triple matching.

Every ordered pair of resolved mentions is checked against store triples;
only relations whitelisted by the paragraph's domain mapper, with head and
tail entity types satisfying the relation's constraints, are emitted. Tails
that are time/quantity/string literals are matched against the text through
per-language rendering patterns.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .corpus_ingest import DomainLabel, Paragraph
from .errors import ConfigError
from .kg_store import LITERAL_KIND_TO_TYPE, KgStore, Literal, Taxonomy
from .mention_linker import EntityMention
from .triples import PROVENANCE_KG, SurfaceTriple

RELATION_CATALOG_SIZE = 123

_MONTH_NAMES = [
    "January", "February", "March", "April", "May", "June",
    "July", "August", "September", "October", "November", "December",
]


@dataclass(frozen=True)
class RelationConstraint:
    pid: str
    label: dict  # lang -> relation name
    head_types: frozenset[str]
    tail_types: frozenset[str]

    def __post_init__(self):
        if not self.head_types or not self.tail_types:
            raise ConfigError(f"relation {self.pid}: empty type constraint")


@dataclass
class SchemaMapper:
    domain: DomainLabel
    relations: list[RelationConstraint] = field(default_factory=list)

    def __post_init__(self):
        pids = [r.pid for r in self.relations]
        if len(pids) != len(set(pids)):
            raise ConfigError(f"mapper {self.domain.value}: duplicate pids")
        self._by_pid = {r.pid: r for r in self.relations}

    def constraint(self, pid: str) -> RelationConstraint | None:
        return self._by_pid.get(pid)

    def label(self, pid: str, lang: str) -> str:
        labels = self._by_pid[pid].label
        return labels.get(lang) or next(iter(labels.values()))

    def labels(self, lang: str) -> list[str]:
        """Relation labels in config order; this is the domain's schema list."""
        return [r.label.get(lang) or next(iter(r.label.values())) for r in self.relations]


def _normalize_type(name: str) -> str:
    return "measure" if name == "quantity" else name


def load_mappers(
    path: str | Path | None = None, taxonomy: Taxonomy | None = None
) -> dict[DomainLabel, SchemaMapper]:
    """Load the per-domain mapper config; enforces the shipped cardinalities
    (all 12 domains present, 123 distinct relations overall)."""
    if path is None:
        raw = resources.files("kg2instruct.configs").joinpath("mappers.json").read_text("utf-8")
        data = json.loads(raw)
    else:
        data = json.loads(Path(path).read_text("utf-8"))
    taxonomy = taxonomy or Taxonomy.load()
    valid_types = set(taxonomy.type_names) | {"other"} | set(LITERAL_KIND_TO_TYPE.values())

    mappers: dict[DomainLabel, SchemaMapper] = {}
    for entry in data["mappers"]:
        domain = DomainLabel(entry["domain"])
        if domain in mappers:
            raise ConfigError(f"duplicate mapper for domain {domain.value}")
        relations = []
        for r in entry["relations"]:
            head_types = frozenset(_normalize_type(t) for t in r["head_types"])
            tail_types = frozenset(_normalize_type(t) for t in r["tail_types"])
            for t in head_types | tail_types:
                if t not in valid_types:
                    raise ConfigError(f"relation {r['pid']}: unknown type {t!r}")
            relations.append(
                RelationConstraint(
                    pid=r["pid"],
                    label=dict(r["label"]),
                    head_types=head_types,
                    tail_types=tail_types,
                )
            )
        mappers[domain] = SchemaMapper(domain=domain, relations=relations)

    if set(mappers) != set(DomainLabel):
        missing = {d.value for d in DomainLabel} - {d.value for d in mappers}
        raise ConfigError(f"mapper config must cover all 12 domains; missing {sorted(missing)}")
    pids = {r.pid for m in mappers.values() for r in m.relations}
    for lang in ("en", "zh"):
        labels = {r.label[lang] for m in mappers.values() for r in m.relations}
        if len(labels) != RELATION_CATALOG_SIZE:
            raise ConfigError(
                f"mapper config must define {RELATION_CATALOG_SIZE} distinct {lang} "
                f"relation labels, got {len(labels)}"
            )
    if len(pids) != RELATION_CATALOG_SIZE:
        raise ConfigError(
            f"mapper config must define {RELATION_CATALOG_SIZE} distinct relations, got {len(pids)}"
        )
    return mappers


def allow_all_mapper(store: KgStore, domain: DomainLabel) -> SchemaMapper:
    """Unconstrained mapper over the whole property registry (for the
    over-generation contrast tests: removing constraints only adds triples)."""
    all_types = frozenset(
        store.taxonomy.type_names + ["other"] + list(LITERAL_KIND_TO_TYPE.values())
    )
    relations = [
        RelationConstraint(pid=pid, label=dict(labels), head_types=all_types, tail_types=all_types)
        for pid, labels in sorted(store.properties.items())
    ]
    return SchemaMapper(domain=domain, relations=relations)


def match_entity_pairs(
    p: Paragraph,
    mentions: list[EntityMention],
    mapper: SchemaMapper,
    store: KgStore,
) -> list[SurfaceTriple]:
    """KG-provenance triples from ordered mention pairs, deduplicated."""
    out: list[SurfaceTriple] = []
    seen: set[tuple[str, str, str]] = set()
    linked = [m for m in mentions if m.resolved]
    for m1 in linked:
        for m2 in linked:
            if m1 is m2:
                continue
            for t in store.item_triples(m1.resolved, m2.resolved):
                c = mapper.constraint(t.pid)
                if c is None:
                    continue
                if m1.etype not in c.head_types or m2.etype not in c.tail_types:
                    continue
                triple = SurfaceTriple(
                    head=m1.surface,
                    relation=mapper.label(t.pid, p.lang),
                    tail=m2.surface,
                    provenance=PROVENANCE_KG,
                )
                k = triple.key(p.lang)
                if k not in seen:
                    seen.add(k)
                    out.append(triple)
    return out


# -- literal rendering -----------------------------------------------------


def load_render_patterns(path: str | Path | None = None) -> dict:
    if path is None:
        raw = resources.files("kg2instruct.configs").joinpath("date_patterns.json").read_text("utf-8")
        return json.loads(raw)
    return json.loads(Path(path).read_text("utf-8"))


def _group_thousands(digits: str) -> str:
    out = []
    for i, ch in enumerate(reversed(digits)):
        if i and i % 3 == 0:
            out.append(",")
        out.append(ch)
    return "".join(reversed(out))


def render_literal(lit: Literal, lang: str, patterns: dict) -> list[str]:
    """Candidate surface strings for a literal, in configured pattern order."""
    if lit.kind == "time":
        year, month, day = lit.time_parts
        precision = "day" if day else ("month" if month else "year")
        fields = {
            "year": year,
            "month": month or 0,
            "day": day or 0,
            "month_name": _MONTH_NAMES[month - 1] if month else "",
        }
        return [fmt.format(**fields) for fmt in patterns[lang][precision]]
    if lit.kind == "quantity":
        value = lit.value
        candidates = [value]
        int_part = value.lstrip("+-").split(".", 1)[0]
        if int_part.isdigit() and len(int_part) > 3:
            candidates.append(value.replace(int_part, _group_thousands(int_part), 1))
        return candidates
    return [lit.value]


_NUMERIC_RE = re.compile(r"^[\d.,]+$")


def find_literal_surface(text: str, candidates: list[str]) -> str | None:
    """First candidate occurring verbatim in the text; purely numeric
    candidates must not sit inside a longer number ("828" in "1,828")."""
    for cand in candidates:
        if not cand:
            continue
        if _NUMERIC_RE.match(cand):
            guard = rf"(?<!\d)(?<![\d][.,-]){re.escape(cand)}(?![.,-]?\d)"
            if re.search(guard, text):
                return cand
        elif cand in text:
            return cand
    return None


def match_literal_tails(
    p: Paragraph,
    mentions: list[EntityMention],
    mapper: SchemaMapper,
    store: KgStore,
    patterns: dict | None = None,
) -> list[SurfaceTriple]:
    """KG-provenance triples whose tails are literals rendered into the text."""
    patterns = patterns or load_render_patterns()
    out: list[SurfaceTriple] = []
    seen: set[tuple[str, str, str]] = set()
    for m in mentions:
        if not m.resolved:
            continue
        for t in store.triples_from(m.resolved):
            if t.literal is None:
                continue
            c = mapper.constraint(t.pid)
            if c is None:
                continue
            if m.etype not in c.head_types:
                continue
            if LITERAL_KIND_TO_TYPE[t.literal.kind] not in c.tail_types:
                continue
            surface = find_literal_surface(p.text, render_literal(t.literal, p.lang, patterns))
            if surface is None:
                continue  # left for the supplement stage to recover
            triple = SurfaceTriple(
                head=m.surface,
                relation=mapper.label(t.pid, p.lang),
                tail=surface,
                provenance=PROVENANCE_KG,
            )
            k = triple.key(p.lang)
            if k not in seen:
                seen.add(k)
                out.append(triple)
    return out
