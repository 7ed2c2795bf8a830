"""In-process read-only knowledge-graph store.

Loads a KG subset (line-delimited JSON, one entity per line), builds the
per-language alias index and triple adjacency, and assigns entity types by
walking class-membership edges up to a configured taxonomy of 14 root-class
groups.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ConfigError, KgLoadError
from .text import normalize_surface

logger = logging.getLogger(__name__)

OTHER_TYPE = "other"
TAXONOMY_SIZE = 14

# literal kinds double as constraint types; "quantity" is the "measure" member
LITERAL_KIND_TO_TYPE = {"time": "time", "quantity": "measure", "string": "string"}

_TIME_RE = re.compile(r"^(\d{1,4})(?:-(\d{2}))?(?:-(\d{2}))?$")


@dataclass(frozen=True)
class Literal:
    """A non-item tail value. Times are ISO-8601 with recorded precision."""

    kind: str  # time | quantity | string
    value: str

    def __post_init__(self):
        if self.kind not in LITERAL_KIND_TO_TYPE:
            raise KgLoadError(f"unknown literal kind {self.kind!r}")
        if self.kind == "time" and not _TIME_RE.match(self.value):
            raise KgLoadError(f"time literal {self.value!r} is not ISO-8601 y[-m[-d]]")

    @property
    def time_parts(self) -> tuple[int, int | None, int | None]:
        m = _TIME_RE.match(self.value)
        assert m and self.kind == "time"
        y, mo, d = m.groups()
        return int(y), int(mo) if mo else None, int(d) if d else None


@dataclass(frozen=True)
class KgTriple:
    head: str
    pid: str
    tail_qid: str | None = None
    literal: Literal | None = None
    tail_resolvable: bool = True  # False: tail qid absent from the store


@dataclass
class KgEntity:
    qid: str
    labels: dict[str, str] = field(default_factory=dict)
    aliases: dict[str, list[str]] = field(default_factory=dict)
    instance_of: list[str] = field(default_factory=list)
    subclass_of: list[str] = field(default_factory=list)


class Taxonomy:
    """Ordered 14-member entity-type taxonomy mapping root classes to types."""

    def __init__(self, type_names: list[str], root_map: dict[str, str], max_depth: int = 5):
        if len(type_names) != TAXONOMY_SIZE:
            raise ConfigError(
                f"taxonomy must declare exactly {TAXONOMY_SIZE} types, got {len(type_names)}"
            )
        if OTHER_TYPE in type_names:
            raise ConfigError(f"{OTHER_TYPE!r} is the reserved fallback, not a taxonomy member")
        self.type_names = list(type_names)
        self.priority = {name: i for i, name in enumerate(type_names)}
        self.root_map = dict(root_map)  # root class qid -> type name
        self.max_depth = max_depth

    @classmethod
    def load(cls, path: str | Path | None = None) -> "Taxonomy":
        if path is None:
            raw = resources.files("kg2instruct.configs").joinpath("taxonomy.json").read_text("utf-8")
            data = json.loads(raw)
        else:
            data = json.loads(Path(path).read_text("utf-8"))
        names, root_map = [], {}
        for t in data["types"]:
            names.append(t["name"])
            for qid in t["roots"]:
                root_map[qid] = t["name"]
        return cls(names, root_map, max_depth=data.get("max_depth", 5))

def _qid_sort_key(qid: str) -> tuple[int, str]:
    m = re.match(r"^Q(\d+)$", qid)
    return (int(m.group(1)) if m else 1 << 62, qid)


class KgStore:
    """Immutable after load; safe to share across threads for reads."""

    def __init__(self, taxonomy: Taxonomy):
        self.taxonomy = taxonomy
        self.entities: dict[str, KgEntity] = {}
        self.properties: dict[str, dict[str, str]] = {}  # pid -> {lang: label}
        self._claims: dict[str, list[KgTriple]] = {}
        self._incoming: dict[str, list[KgTriple]] = {}
        self._alias_index: dict[str, dict[str, set[str]]] = {}  # lang -> surface -> qids
        self._degree: dict[str, int] = {}
        self._type_cache: dict[str, str] = {}

    # -- loading -----------------------------------------------------------

    @classmethod
    def load(
        cls,
        store_path: str | Path,
        registry_path: str | Path,
        taxonomy: Taxonomy | None = None,
    ) -> "KgStore":
        store = cls(taxonomy or Taxonomy.load())
        with open(registry_path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                store.properties[rec["pid"]] = dict(rec.get("labels", {}))

        raw_claims: dict[str, list[dict]] = {}
        with open(store_path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                qid = rec["qid"]
                if qid in store.entities:
                    raise KgLoadError(f"duplicate entity {qid}")
                ent = KgEntity(
                    qid=qid,
                    labels=dict(rec.get("labels", {})),
                    aliases={k: list(v) for k, v in rec.get("aliases", {}).items()},
                    instance_of=list(rec.get("instance_of", [])),
                    subclass_of=list(rec.get("subclass_of", [])),
                )
                if not ent.labels:
                    raise KgLoadError(f"entity {qid} has no labels")
                store.entities[qid] = ent
                raw_claims[qid] = list(rec.get("claims", []))

        for qid, claims in raw_claims.items():
            triples = []
            for claim in claims:
                pid = claim["pid"]
                if pid not in store.properties:
                    raise KgLoadError(f"claim on {qid} uses unregistered property {pid}")
                tail = claim["tail"]
                if "qid" in tail:
                    resolvable = tail["qid"] in store.entities
                    if not resolvable:
                        logger.debug("unresolvable tail %s on %s %s", tail["qid"], qid, pid)
                    triples.append(
                        KgTriple(head=qid, pid=pid, tail_qid=tail["qid"], tail_resolvable=resolvable)
                    )
                elif "literal" in tail:
                    lit = Literal(kind=tail["literal"]["kind"], value=tail["literal"]["value"])
                    triples.append(KgTriple(head=qid, pid=pid, literal=lit))
                else:
                    raise KgLoadError(f"claim on {qid} has neither qid nor literal tail")
            store._claims[qid] = triples

        store._build_indexes()
        return store

    def _build_indexes(self) -> None:
        for qid in self.entities:
            self._degree[qid] = len(self._claims.get(qid, []))
        for triples in self._claims.values():
            for t in triples:
                if t.tail_qid and t.tail_resolvable:
                    self._degree[t.tail_qid] += 1
                    self._incoming.setdefault(t.tail_qid, []).append(t)
        for ent in self.entities.values():
            for lang, label in ent.labels.items():
                self._index_surface(lang, label, ent.qid)
            for lang, names in ent.aliases.items():
                for name in names:
                    self._index_surface(lang, name, ent.qid)

    def _index_surface(self, lang: str, surface: str, qid: str) -> None:
        norm = normalize_surface(surface, lang)
        if norm:
            self._alias_index.setdefault(lang, {}).setdefault(norm, set()).add(qid)

    # -- queries -----------------------------------------------------------

    def __contains__(self, qid: str) -> bool:
        return qid in self.entities

    def __len__(self) -> int:
        return len(self.entities)

    def degree(self, qid: str) -> int:
        return self._degree.get(qid, 0)

    def candidates(self, surface: str, lang: str) -> list[str]:
        """All qids whose normalized label/alias equals the normalized surface,
        ordered by descending triple degree, then ascending numeric qid."""
        norm = normalize_surface(surface, lang)
        return self.order_qids(self._alias_index.get(lang, {}).get(norm, set()))

    def triples_from(self, qid: str) -> list[KgTriple]:
        return self._claims.get(qid, [])

    def triples_to(self, qid: str) -> list[KgTriple]:
        return self._incoming.get(qid, [])

    def order_qids(self, qids) -> list[str]:
        """Deterministic candidate order: degree descending, then numeric qid."""
        return sorted(qids, key=lambda q: (-self._degree.get(q, 0), *_qid_sort_key(q)))

    def item_triples(self, head: str, tail: str) -> list[KgTriple]:
        """Store triples (head, pid, tail) with a resolvable item tail."""
        return [
            t
            for t in self._claims.get(head, [])
            if t.tail_qid == tail and t.tail_resolvable
        ]

    def label(self, qid: str, lang: str) -> str | None:
        ent = self.entities.get(qid)
        if ent is None:
            return None
        return ent.labels.get(lang) or next(iter(ent.labels.values()), None)

    def surface_forms(self, qid: str, lang: str) -> set[str]:
        """Normalized label + alias surfaces of an entity in one language."""
        ent = self.entities.get(qid)
        if ent is None:
            return set()
        forms = set()
        if lang in ent.labels:
            forms.add(normalize_surface(ent.labels[lang], lang))
        for name in ent.aliases.get(lang, []):
            forms.add(normalize_surface(name, lang))
        return forms - {""}

    def property_label(self, pid: str, lang: str) -> str | None:
        labels = self.properties.get(pid)
        if not labels:
            return None
        return labels.get(lang) or next(iter(labels.values()), None)

    def entity_type(self, qid: str) -> str:
        """Type by breadth-first class traversal: the first taxonomy hit wins,
        ties at equal depth broken by taxonomy priority; no hit -> "other"."""
        cached = self._type_cache.get(qid)
        if cached is not None:
            return cached
        ent = self.entities.get(qid)
        result = OTHER_TYPE
        if ent is not None:
            visited: set[str] = {qid}
            frontier = [c for c in ent.instance_of if c not in visited]
            depth = 1
            while frontier and depth <= self.taxonomy.max_depth:
                hits = [
                    self.taxonomy.root_map[c] for c in frontier if c in self.taxonomy.root_map
                ]
                if hits:
                    result = min(hits, key=self.taxonomy.priority.__getitem__)
                    break
                visited.update(frontier)
                nxt: list[str] = []
                for c in frontier:
                    parent = self.entities.get(c)
                    if parent is None:
                        continue
                    nxt.extend(s for s in parent.subclass_of if s not in visited and s not in nxt)
                frontier = nxt
                depth += 1
        self._type_cache[qid] = result
        return result
