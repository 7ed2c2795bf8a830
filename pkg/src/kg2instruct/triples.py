"""The surface-triple record passed between matching, filtering and rendering."""

from __future__ import annotations

from dataclasses import dataclass, field

from .text import normalize_surface

PROVENANCE_KG = "KG"
PROVENANCE_LLM = "LLM"


@dataclass
class SurfaceTriple:
    head: str
    relation: str
    tail: str
    provenance: str = PROVENANCE_KG
    entailment: float | None = None
    flags: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not (self.head and self.relation and self.tail):
            raise ValueError("head, relation and tail must be non-empty")

    def key(self, lang: str) -> tuple[str, str, str]:
        """Dedup/equality key: trimmed, whitespace-collapsed, en case-folded.

        Original casing is preserved in the record itself.
        """
        return (
            normalize_surface(self.head, lang),
            normalize_surface(self.relation, lang),
            normalize_surface(self.tail, lang),
        )

    def to_record(self) -> dict:
        rec = {
            "head": self.head,
            "relation": self.relation,
            "tail": self.tail,
            "provenance": self.provenance,
            "entailment": self.entailment,
        }
        if self.flags:
            rec["flags"] = list(self.flags)
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "SurfaceTriple":
        return cls(
            head=rec["head"],
            relation=rec["relation"],
            tail=rec["tail"],
            provenance=rec.get("provenance", PROVENANCE_KG),
            entailment=rec.get("entailment"),
            flags=list(rec.get("flags", [])),
        )
