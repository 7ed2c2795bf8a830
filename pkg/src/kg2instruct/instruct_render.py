"""Rendering of final instruction records.

The instruction is a per-language template filled with a task description
and the schema (relation label list); the output is a canonical JSON
serialization grouped by entity type, then entity, then attributes, so the
evaluator can recover the exact triple set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

from .corpus_ingest import DomainLabel, Paragraph
from .errors import ConfigError
from .kg_store import OTHER_TYPE, KgStore
from .mention_linker import EntityMention
from .triples import SurfaceTriple


def load_instruction_templates(path: str | Path | None = None) -> dict:
    if path is None:
        raw = resources.files("kg2instruct.configs").joinpath(
            "instruction_templates.json"
        ).read_text("utf-8")
        data = json.loads(raw)
    else:
        data = json.loads(Path(path).read_text("utf-8"))
    for lang, tpl in data.items():
        if "task_description" not in tpl or "format" not in tpl:
            raise ConfigError(f"instruction template for {lang!r} needs task_description and format")
    return data


def render_instruction(
    domain: DomainLabel,
    schema: list[str],
    lang: str,
    templates: dict | None = None,
) -> str:
    """Fill the per-language instruction template with the schema list."""
    if not schema:
        raise ValueError("schema must be non-empty")
    templates = templates or load_instruction_templates()
    if lang not in templates:
        raise ConfigError(f"no instruction template for language {lang!r}")
    tpl = templates[lang]
    schema_str = json.dumps(list(schema), ensure_ascii=False)
    return tpl["format"].format(
        task_description=tpl["task_description"],
        schema=schema_str,
        domain=domain.value,
    )


def render_output(triples: list[SurfaceTriple], head_types: Mapping[str, str]) -> str:
    """Canonical output string: groups keyed by (entity_type, head entity) in
    first-appearance order; within a group, attribute keys in fixed (sorted)
    order with tail lists in first-appearance order. Duplicate triples keep
    their multiplicity."""
    groups: dict[tuple[str, str], dict] = {}
    for t in triples:
        etype = head_types.get(t.head, OTHER_TYPE)
        key = (etype, t.head)
        group = groups.get(key)
        if group is None:
            group = {"entity_type": etype, "entity": t.head, "attributes": {}}
            groups[key] = group
        group["attributes"].setdefault(t.relation, []).append(t.tail)
    for group in groups.values():
        group["attributes"] = dict(sorted(group["attributes"].items()))
    return json.dumps(list(groups.values()), ensure_ascii=False)


def head_type_map(
    mentions: list[EntityMention],
    triples: list[SurfaceTriple],
    store: KgStore,
    lang: str,
) -> dict[str, str]:
    """Entity type per head surface: the originating mention's type when
    available, otherwise an alias-index lookup, otherwise "other"."""
    types: dict[str, str] = {}
    for m in mentions:
        if m.etype and m.surface not in types:
            types[m.surface] = m.etype
    for t in triples:
        if t.head in types:
            continue
        cands = store.candidates(t.head, lang)
        types[t.head] = store.entity_type(cands[0]) if cands else OTHER_TYPE
    return types


@dataclass
class InstructionRecord:
    id: str
    lang: str
    domain: DomainLabel
    instruction: str
    input: str
    schema: list[str]
    output: str
    triples: list[SurfaceTriple] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "lang": self.lang,
            "domain": self.domain.value,
            "instruction": self.instruction,
            "input": self.input,
            "schema": list(self.schema),
            "output": self.output,
            "triples": [t.to_record() for t in self.triples],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "InstructionRecord":
        return cls(
            id=rec["id"],
            lang=rec["lang"],
            domain=DomainLabel(rec["domain"]),
            instruction=rec["instruction"],
            input=rec["input"],
            schema=list(rec["schema"]),
            output=rec["output"],
            triples=[SurfaceTriple.from_record(t) for t in rec.get("triples", [])],
        )


def build_record(
    p: Paragraph,
    triples: list[SurfaceTriple],
    schema: list[str],
    head_types: Mapping[str, str],
    templates: dict | None = None,
) -> InstructionRecord:
    """Assemble one training/test instance for a filtered paragraph."""
    assert p.domain is not None
    schema_set = set(schema)
    for t in triples:
        if t.relation not in schema_set:
            raise ValueError(f"triple relation {t.relation!r} not in the record schema")
    return InstructionRecord(
        id=p.id,
        lang=p.lang,
        domain=p.domain,
        instruction=render_instruction(p.domain, schema, p.lang, templates),
        input=p.text,
        schema=list(schema),
        output=render_output(triples, head_types),
        triples=list(triples),
    )


def load_record_schema() -> dict:
    raw = resources.files("kg2instruct.configs").joinpath("record.schema.json").read_text("utf-8")
    return json.loads(raw)


_schema_validator = None


def validate_record(rec: dict) -> None:
    """Check a serialized record against the published JSON schema."""
    global _schema_validator
    if _schema_validator is None:
        import jsonschema

        _schema_validator = jsonschema.Draft7Validator(load_record_schema())
    error = next(_schema_validator.iter_errors(rec), None)
    if error is not None:
        raise ValueError(f"record {rec.get('id')!r} violates the record schema: {error.message}")
