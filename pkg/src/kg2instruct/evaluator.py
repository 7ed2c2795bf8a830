"""Scoring of model predictions: span-based micro-F1 and the four-way
false-positive taxonomy, over tolerantly parsed output strings.

A predicted triple counts only on exact (normalized) string equality of
head, relation and tail; micro aggregation pools tp/pred/gold counts across
instances before computing precision/recall/F1.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .errors import AlignmentError
from .text import normalize_surface, surface_tokens
from .triples import PROVENANCE_LLM, SurfaceTriple

ENTITY_MISMATCH = "EntityMismatch"
SPURIOUS_RELATION = "SpuriousRelation"
BOUNDARY_MISMATCH = "BoundaryMismatch"
INCONGRUENT = "IncongruentPredictions"
ERROR_CATEGORIES = (ENTITY_MISMATCH, SPURIOUS_RELATION, BOUNDARY_MISMATCH, INCONGRUENT)

# column order mirrors the per-domain result tables
DOMAIN_ABBREV = {
    "Product": "PRO", "Person": "PER", "GPE": "GPE", "Organization": "ORG",
    "Event": "EVE", "Building": "BUD", "Artworks": "ART", "Creature": "CRE",
    "Astronomy": "AST", "Medicine": "MED", "Science": "SCI", "Transport": "TRA",
}

_TRAILING_COMMA_RE = re.compile(r",\s*([\]}])")


def parse_output(s: str) -> list[SurfaceTriple] | None:
    """Parse a model output string into triples; None means unparseable.

    Accepts the canonical serialization plus bounded repairs: surrounding
    whitespace, one trailing separator, trailing commas before brackets.
    """
    candidates = [s.strip()]
    repaired = _TRAILING_COMMA_RE.sub(r"\1", s.strip().rstrip(";,. \t\r\n"))
    if repaired != candidates[0]:
        candidates.append(repaired)
    for cand in candidates:
        try:
            data = json.loads(cand)
        except json.JSONDecodeError:
            continue
        triples = _triples_from_groups(data)
        if triples is not None:
            return triples
    return None


def _triples_from_groups(data) -> list[SurfaceTriple] | None:
    if not isinstance(data, list):
        return None
    out: list[SurfaceTriple] = []
    for group in data:
        if not isinstance(group, dict) or set(group) != {"entity_type", "entity", "attributes"}:
            return None
        entity, attrs = group["entity"], group["attributes"]
        if not isinstance(group["entity_type"], str):
            return None
        if not isinstance(entity, str) or not entity:
            return None
        if not isinstance(attrs, dict):
            return None
        for rel, tails in attrs.items():
            if not rel or not isinstance(tails, list):
                return None
            for tail in tails:
                if not isinstance(tail, str) or not tail:
                    return None
                out.append(SurfaceTriple(entity, rel, tail, provenance=PROVENANCE_LLM))
    return out


@dataclass
class DomainScore:
    tp: int = 0
    pred_count: int = 0
    gold_count: int = 0

    @property
    def precision(self) -> float:
        return self.tp / self.pred_count if self.pred_count else 0.0

    @property
    def recall(self) -> float:
        return self.tp / self.gold_count if self.gold_count else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def to_record(self) -> dict:
        return {
            "tp": self.tp,
            "pred_count": self.pred_count,
            "gold_count": self.gold_count,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


@dataclass
class EvalReport:
    per_domain: dict[str, DomainScore] = field(default_factory=dict)
    overall: DomainScore = field(default_factory=DomainScore)
    unparseable_count: int = 0
    error_counts: dict[str, int] = field(
        default_factory=lambda: {c: 0 for c in ERROR_CATEGORIES}
    )

    def to_record(self) -> dict:
        return {
            "per_domain": {d: s.to_record() for d, s in sorted(self.per_domain.items())},
            "overall": self.overall.to_record(),
            "unparseable_count": self.unparseable_count,
            "error_counts": dict(self.error_counts),
        }


def _exact(a: str, b: str) -> bool:
    return a == b


def _partial(a: str, b: str) -> bool:
    """Partial overlap: proper substring either way, or >=1 shared token."""
    if a == b:
        return False
    if a in b or b in a:
        return True
    return bool(surface_tokens(a) & surface_tokens(b))


def classify_error(
    pred: tuple[str, str, str], gold: list[tuple[str, str, str]]
) -> str:
    """Category of one false positive against the instance's gold triples.

    All strings are expected pre-normalized. Precedence: SpuriousRelation
    when the relation never occurs in gold; otherwise judged against the
    best-aligned gold triple sharing the relation.
    """
    ph, pr, pt = pred
    same_rel = [g for g in gold if g[1] == pr]
    if not same_rel:
        return SPURIOUS_RELATION

    def align(g):
        score = 0
        for a, b in ((ph, g[0]), (pt, g[2])):
            if _exact(a, b):
                score += 2
            elif _partial(a, b):
                score += 1
        return score

    best = max(same_rel, key=align)
    gh, _, gt = best
    head_exact, tail_exact = _exact(ph, gh), _exact(pt, gt)
    head_partial, tail_partial = _partial(ph, gh), _partial(pt, gt)
    if (head_partial and tail_exact) or (tail_partial and head_exact):
        return BOUNDARY_MISMATCH
    if (head_exact and not tail_exact and not tail_partial) or (
        tail_exact and not head_exact and not head_partial
    ):
        return ENTITY_MISMATCH
    return INCONGRUENT


def score(gold_records: list[dict], predictions: list[dict]) -> EvalReport:
    """Micro-F1 over instances aligned by id.

    ``gold_records`` are dataset records; ``predictions`` are
    ``{"id", "output"}`` rows. Duplicate triples count once on either side.
    """
    pred_by_id = {}
    for row in predictions:
        pred_by_id[row["id"]] = row["output"]
    gold_ids = {rec["id"] for rec in gold_records}
    missing = sorted(gold_ids - set(pred_by_id))
    extra = sorted(set(pred_by_id) - gold_ids)
    if missing or extra:
        raise AlignmentError(missing, extra)

    report = EvalReport()
    for rec in gold_records:
        lang = rec.get("lang", "en")
        domain = rec.get("domain", "unknown")
        gold_keys: list[tuple[str, str, str]] = []
        for t in rec.get("triples", []):
            key = (
                normalize_surface(t["head"], lang),
                normalize_surface(t["relation"], lang),
                normalize_surface(t["tail"], lang),
            )
            if key not in gold_keys:
                gold_keys.append(key)

        parsed = parse_output(pred_by_id[rec["id"]])
        if parsed is None:
            report.unparseable_count += 1
            pred_keys: list[tuple[str, str, str]] = []
        else:
            pred_keys = []
            for t in parsed:
                key = t.key(lang)
                if key not in pred_keys:
                    pred_keys.append(key)

        gold_set = set(gold_keys)
        tp = sum(1 for k in pred_keys if k in gold_set)
        ds = report.per_domain.setdefault(domain, DomainScore())
        ds.tp += tp
        ds.pred_count += len(pred_keys)
        ds.gold_count += len(gold_keys)
        for k in pred_keys:
            if k not in gold_set:
                report.error_counts[classify_error(k, gold_keys)] += 1

    report.overall = DomainScore(
        tp=sum(s.tp for s in report.per_domain.values()),
        pred_count=sum(s.pred_count for s in report.per_domain.values()),
        gold_count=sum(s.gold_count for s in report.per_domain.values()),
    )
    return report


def format_table(report: EvalReport) -> str:
    """Aligned plain-text table, domains as columns plus Overall."""
    domains = [d for d in DOMAIN_ABBREV if d in report.per_domain]
    headers = [DOMAIN_ABBREV[d] for d in domains] + ["Overall"]
    rows = []
    for name, attr in (("P", "precision"), ("R", "recall"), ("F1", "f1")):
        cells = [getattr(report.per_domain[d], attr) * 100 for d in domains]
        cells.append(getattr(report.overall, attr) * 100)
        rows.append((name, [f"{c:.2f}" for c in cells]))
    width = max(6, *(len(h) + 1 for h in headers))
    lines = ["      " + "".join(h.rjust(width) for h in headers)]
    for name, cells in rows:
        lines.append(name.ljust(6) + "".join(c.rjust(width) for c in cells))
    lines.append("")
    lines.append(f"unparseable: {report.unparseable_count}")
    for cat in ERROR_CATEGORIES:
        lines.append(f"{cat}: {report.error_counts[cat]}")
    return "\n".join(lines) + "\n"


def write_report(report: EvalReport, path) -> None:
    """JSON report at ``path``; the aligned table goes to ``<path>.txt``."""
    from pathlib import Path

    p = Path(path)
    p.write_text(json.dumps(report.to_record(), ensure_ascii=False, indent=2) + "\n", "utf-8")
    Path(str(p) + ".txt").write_text(format_table(report), "utf-8")
