"""End-to-end orchestration: ingest -> link -> match -> supplement -> filter
-> sample -> render, with stage-boundary files, a run manifest, per-stage
toggles for the ablations, and resumable stage boundaries.

All randomness flows from one seed through named per-stage sub-streams, so
toggling one stage does not perturb another's draws.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .backends import BackendEndpointSet, HttpBackend, MockBackend, MockRuleSet
from .corpus_ingest import (
    DomainLabel,
    Paragraph,
    classify_domain,
    extract_paragraphs,
    filter_by_length,
    iter_documents,
)
from .errors import ConfigError, StageError, TransportError
from .instruct_render import (
    build_record,
    head_type_map,
    load_instruction_templates,
    validate_record,
)
from .kg_store import KgStore, Taxonomy
from .mention_linker import EntityMention, disambiguate, identify_mentions
from .nli_filter import RelationTemplates, filter_triples
from .sampler import sample, schema_key
from .schema_matcher import load_mappers, load_render_patterns, match_entity_pairs, match_literal_tails
from .triple_supplement import merge_dedupe, supplement
from .triples import PROVENANCE_KG, SurfaceTriple

logger = logging.getLogger(__name__)

STAGES = ("ingest", "link", "match", "supplement", "filter", "sample", "render")

STAGE_FILES = {
    "ingest": "paragraphs.jsonl",
    "link": "mentions.jsonl",
    "match": "matched.jsonl",
    "supplement": "supplemented.jsonl",
    "filter": "filtered.jsonl",
    "sample": "sampled.jsonl",
    "render": "dataset.jsonl",
}

ENV_BACKEND_URL = "KG2I_BACKEND_URL"


@dataclass
class PipelineConfig:
    corpus: Path
    kg: Path
    properties: Path
    language: str
    output_dir: Path
    seed: int = 0
    min_tokens: int = 50
    max_tokens: int = 512
    nli_threshold: float = 0.5
    sampler_k: float = 1.0
    caps: dict[str, int] | None = None
    supplement_enabled: bool = True
    nli_enabled: bool = True
    mock_backends: bool = False
    backend_url: str | None = None
    backend_timeout: float = 10.0
    backend_max_in_flight: int = 4
    backend_retries: int = 2
    mappers: Path | None = None
    taxonomy: Path | None = None
    nli_templates: Path | None = None
    instruction_templates: Path | None = None
    date_patterns: Path | None = None
    mock_rules: Path | None = None
    count_head_neighbors: bool = False
    sentence_premise: bool = False
    config_hash: str = ""

    def validate(self) -> None:
        if self.language not in ("zh", "en"):
            raise ConfigError(f"unsupported language {self.language!r}")
        if not 0.0 <= self.nli_threshold <= 1.0:
            raise ConfigError(f"nli_threshold must be in [0, 1], got {self.nli_threshold}")
        if self.sampler_k <= 0:
            raise ConfigError(f"sampler K must be positive, got {self.sampler_k}")
        for name in ("corpus", "kg", "properties", "mappers", "taxonomy", "nli_templates",
                     "instruction_templates", "date_patterns", "mock_rules"):
            p = getattr(self, name)
            if p is not None and not Path(p).exists():
                raise ConfigError(f"config path {name}={p} does not exist")
        if not self.mock_backends and not (self.backend_url or os.environ.get(ENV_BACKEND_URL)):
            raise ConfigError("either mock_backends or a backend_url is required")


def load_config(path: str | Path) -> PipelineConfig:
    """Read the JSON pipeline config; relative paths resolve against the
    config file's directory. The config hash covers the raw file content,
    so it is stable across machines."""
    path = Path(path)
    raw = path.read_text("utf-8")
    data = json.loads(raw)
    base = path.parent

    def respath(key):
        return (base / data[key]).resolve() if data.get(key) else None

    caps = data.get("caps")
    if isinstance(caps, str):
        caps = json.loads((base / caps).read_text("utf-8"))
    cfg = PipelineConfig(
        corpus=respath("corpus"),
        kg=respath("kg"),
        properties=respath("properties"),
        language=data["language"],
        output_dir=(base / data["output_dir"]).resolve(),
        seed=data.get("seed", 0),
        min_tokens=data.get("min_tokens", 50),
        max_tokens=data.get("max_tokens", 512),
        nli_threshold=data.get("nli_threshold", 0.5),
        sampler_k=data.get("sampler_k", 1.0),
        caps=caps,
        supplement_enabled=data.get("supplement", True),
        nli_enabled=data.get("nli", True),
        mock_backends=data.get("mock_backends", False),
        backend_url=data.get("backend_url"),
        backend_timeout=data.get("backend_timeout", 10.0),
        backend_max_in_flight=data.get("backend_max_in_flight", 4),
        backend_retries=data.get("backend_retries", 2),
        mappers=respath("mappers"),
        taxonomy=respath("taxonomy"),
        nli_templates=respath("nli_templates"),
        instruction_templates=respath("instruction_templates"),
        date_patterns=respath("date_patterns"),
        mock_rules=respath("mock_rules"),
        count_head_neighbors=data.get("count_head_neighbors", False),
        sentence_premise=data.get("sentence_premise", False),
        config_hash=hashlib.sha256(raw.encode("utf-8")).hexdigest(),
    )
    return cfg


def stage_seed(seed: int, stage: str) -> int:
    digest = hashlib.sha256(f"{seed}:{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def write_jsonl(path: Path, records) -> int:
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
            count += 1
    return count


def read_jsonl(path: Path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(json.loads(line))
    return out


def make_backend(config: PipelineConfig):
    if config.mock_backends:
        return MockBackend(MockRuleSet.load(config.mock_rules))
    url = os.environ.get(ENV_BACKEND_URL) or config.backend_url
    if not url:
        raise ConfigError("no backend configured: set mock_backends or a backend URL")
    return HttpBackend(
        BackendEndpointSet(
            base_url=url,
            timeout=config.backend_timeout,
            max_in_flight=config.backend_max_in_flight,
            retry_budget=config.backend_retries,
        )
    )


class PipelineContext:
    """Lazily-loaded shared resources for the stages."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self._store = None
        self._mappers = None
        self._backend = None
        self._templates = None
        self._instruction_templates = None
        self._patterns = None

    @property
    def store(self) -> KgStore:
        if self._store is None:
            taxonomy = Taxonomy.load(self.config.taxonomy)
            self._store = KgStore.load(self.config.kg, self.config.properties, taxonomy)
        return self._store

    @property
    def mappers(self):
        if self._mappers is None:
            self._mappers = load_mappers(self.config.mappers, self.store.taxonomy)
        return self._mappers

    @property
    def backend(self):
        if self._backend is None:
            self._backend = make_backend(self.config)
        return self._backend

    @property
    def templates(self) -> RelationTemplates:
        if self._templates is None:
            self._templates = RelationTemplates.load(
                self.config.language, self.config.nli_templates
            )
        return self._templates

    @property
    def instruction_templates(self) -> dict:
        if self._instruction_templates is None:
            self._instruction_templates = load_instruction_templates(
                self.config.instruction_templates
            )
        return self._instruction_templates

    @property
    def patterns(self) -> dict:
        if self._patterns is None:
            self._patterns = load_render_patterns(self.config.date_patterns)
        return self._patterns


# -- stages ------------------------------------------------------------------


def run_ingest(ctx: PipelineContext, out_path: Path) -> dict:
    cfg = ctx.config
    paragraphs: list[Paragraph] = []
    stats = {"documents": 0, "parsed": 0, "skipped_unbalanced": 0,
             "length_filtered": 0, "classify_failed": 0, "lang_skipped": 0}
    for doc in iter_documents(cfg.corpus):
        stats["documents"] += 1
        if doc.get("lang", cfg.language) != cfg.language:
            stats["lang_skipped"] += 1
            continue
        result = extract_paragraphs(doc, cfg.language)
        stats["parsed"] += len(result.paragraphs)
        stats["skipped_unbalanced"] += result.skipped_unbalanced
        kept = filter_by_length(result.paragraphs, cfg.min_tokens, cfg.max_tokens)
        stats["length_filtered"] += len(result.paragraphs) - len(kept)
        for p in kept:
            try:
                p.domain = classify_domain(p, ctx.backend)
            except TransportError as exc:
                logger.error("classification failed for %s: %s", p.id, exc)
                stats["classify_failed"] += 1
                continue
            paragraphs.append(p)
    paragraphs.sort(key=lambda p: p.id)
    stats["output_count"] = write_jsonl(out_path, (p.to_record() for p in paragraphs))
    return stats


def run_link(ctx: PipelineContext, paragraphs_path: Path, out_path: Path) -> dict:
    cfg = ctx.config
    records = []
    stats = {"input_count": 0, "ner_degraded": 0, "mentions": 0}
    for rec in read_jsonl(paragraphs_path):
        stats["input_count"] += 1
        p = Paragraph.from_record(rec)
        mention_set = identify_mentions(p, ctx.store, ctx.backend)
        resolved = disambiguate(
            mention_set.mentions, ctx.store, cfg.language, cfg.count_head_neighbors
        )
        if "ner_degraded" in mention_set.flags:
            stats["ner_degraded"] += 1
        stats["mentions"] += len(resolved)
        records.append(
            {
                "paragraph_id": p.id,
                "mentions": [m.to_record() for m in resolved],
                "flags": mention_set.flags,
            }
        )
    stats["output_count"] = write_jsonl(out_path, records)
    return stats


def _load_mentions(path: Path) -> dict[str, dict]:
    return {rec["paragraph_id"]: rec for rec in read_jsonl(path)}


def run_match(
    ctx: PipelineContext, paragraphs_path: Path, mentions_path: Path, out_path: Path
) -> dict:
    records = []
    stats = {"input_count": 0, "kg_triples": 0}
    mentions_by_id = _load_mentions(mentions_path)
    for rec in read_jsonl(paragraphs_path):
        stats["input_count"] += 1
        p = Paragraph.from_record(rec)
        mrec = mentions_by_id.get(p.id, {"mentions": [], "flags": []})
        mentions = [EntityMention.from_record(m) for m in mrec["mentions"]]
        mapper = ctx.mappers[p.domain]
        triples = match_entity_pairs(p, mentions, mapper, ctx.store)
        triples += match_literal_tails(p, mentions, mapper, ctx.store, ctx.patterns)
        triples = merge_dedupe(triples, [], p.lang)
        stats["kg_triples"] += len(triples)
        records.append(
            {
                "paragraph_id": p.id,
                "triples": [t.to_record() for t in triples],
                "flags": list(mrec.get("flags", [])),
            }
        )
    stats["output_count"] = write_jsonl(out_path, records)
    return stats


def run_supplement(
    ctx: PipelineContext, paragraphs_path: Path, triples_path: Path, out_path: Path,
    enabled: bool = True,
) -> dict:
    records = []
    stats = {"input_count": 0, "llm_triples": 0, "degraded": 0, "disabled": not enabled}
    paragraphs = {p["id"]: Paragraph.from_record(p) for p in read_jsonl(paragraphs_path)}
    for rec in read_jsonl(triples_path):
        stats["input_count"] += 1
        if enabled:
            p = paragraphs[rec["paragraph_id"]]
            kg_triples = [SurfaceTriple.from_record(t) for t in rec["triples"]]
            llm_triples, flags = supplement(
                p, ctx.mappers[p.domain], ctx.backend, ctx.instruction_templates
            )
            if flags:
                stats["degraded"] += 1
            merged = merge_dedupe(kg_triples, llm_triples, p.lang)
            stats["llm_triples"] += sum(1 for t in merged if t.provenance != PROVENANCE_KG)
            rec = {
                "paragraph_id": rec["paragraph_id"],
                "triples": [t.to_record() for t in merged],
                "flags": list(rec.get("flags", [])) + flags,
            }
        records.append(rec)
    stats["output_count"] = write_jsonl(out_path, records)
    return stats


def run_filter(
    ctx: PipelineContext, paragraphs_path: Path, triples_path: Path, out_path: Path,
    enabled: bool = True,
) -> dict:
    cfg = ctx.config
    records = []
    stats = {
        "input_count": 0, "triples_in": 0, "triples_retained": 0,
        "triples_excluded": 0, "disabled": not enabled,
    }
    paragraphs = {p["id"]: Paragraph.from_record(p) for p in read_jsonl(paragraphs_path)}
    for rec in read_jsonl(triples_path):
        stats["input_count"] += 1
        triples = [SurfaceTriple.from_record(t) for t in rec["triples"]]
        stats["triples_in"] += len(triples)
        if enabled:
            p = paragraphs[rec["paragraph_id"]]
            kept = filter_triples(
                p, triples, ctx.templates, ctx.backend,
                threshold=cfg.nli_threshold, sentence_premise=cfg.sentence_premise,
            )
        else:
            kept = triples
        stats["triples_retained"] += len(kept)
        records.append(
            {
                "paragraph_id": rec["paragraph_id"],
                "triples": [t.to_record() for t in kept],
                "flags": list(rec.get("flags", [])),
            }
        )
    stats["triples_excluded"] = stats["triples_in"] - stats["triples_retained"]
    stats["exclusion_rate"] = (
        stats["triples_excluded"] / stats["triples_in"] if stats["triples_in"] else 0.0
    )
    stats["output_count"] = write_jsonl(out_path, records)
    return stats


def run_sample(
    ctx: PipelineContext, paragraphs_path: Path, triples_path: Path, out_path: Path
) -> dict:
    cfg = ctx.config
    paragraphs = {p["id"]: p for p in read_jsonl(paragraphs_path)}
    rows = read_jsonl(triples_path)
    stats = {"input_count": len(rows), "empty_dropped": 0}
    candidates = [rec for rec in rows if rec["triples"]]
    stats["empty_dropped"] = len(rows) - len(candidates)
    selected = sample(
        candidates,
        seed=stage_seed(cfg.seed, "sample"),
        k=cfg.sampler_k,
        caps=cfg.caps,
        key_fn=lambda rec: schema_key(t["relation"] for t in rec["triples"]),
        domain_fn=lambda rec: paragraphs[rec["paragraph_id"]]["domain"],
    )
    stats["output_count"] = write_jsonl(out_path, selected)
    return stats


def run_render(
    ctx: PipelineContext, paragraphs_path: Path, mentions_path: Path,
    triples_path: Path, out_path: Path,
) -> dict:
    cfg = ctx.config
    paragraphs = {p["id"]: Paragraph.from_record(p) for p in read_jsonl(paragraphs_path)}
    mentions_by_id = _load_mentions(mentions_path)
    records = []
    stats = {"input_count": 0}
    for rec in read_jsonl(triples_path):
        stats["input_count"] += 1
        p = paragraphs[rec["paragraph_id"]]
        triples = [SurfaceTriple.from_record(t) for t in rec["triples"]]
        mentions = [
            EntityMention.from_record(m)
            for m in mentions_by_id.get(p.id, {"mentions": []})["mentions"]
        ]
        mapper = ctx.mappers[p.domain]
        types = head_type_map(mentions, triples, ctx.store, cfg.language)
        record = build_record(
            p, triples, mapper.labels(cfg.language), types, ctx.instruction_templates
        )
        serialized = record.to_record()
        validate_record(serialized)
        records.append(serialized)
    stats["output_count"] = write_jsonl(out_path, records)
    return stats


# -- driver ------------------------------------------------------------------


@dataclass
class RunResult:
    dataset_path: Path
    manifest_path: Path
    manifest: dict = field(default_factory=dict)


def run(config: PipelineConfig, resume_from: str | None = None) -> RunResult:
    """Execute the stage DAG; stage-boundary files land in output_dir.

    Reruns with the same config and mock backends are byte-identical on
    every stage file and the final dataset.
    """
    config.validate()
    if resume_from is not None and resume_from not in STAGES:
        raise ConfigError(f"unknown stage {resume_from!r}; stages: {', '.join(STAGES)}")
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {name: out_dir / fname for name, fname in STAGE_FILES.items()}
    ctx = PipelineContext(config)
    manifest: dict = {
        "tool_version": __version__,
        "config_hash": config.config_hash,
        "language": config.language,
        "seed": config.seed,
        "stages": {},
        "timings": {},
    }
    start_at = STAGES.index(resume_from) if resume_from else 0
    for stage in STAGES[:start_at]:
        if not paths[stage].exists():
            raise StageError(stage, f"cannot resume: missing stage file {paths[stage]}")
        manifest["stages"][stage] = {"resumed": True}

    for stage in STAGES[start_at:]:
        t0 = time.perf_counter()
        try:
            if stage == "ingest":
                stats = run_ingest(ctx, paths["ingest"])
            elif stage == "link":
                stats = run_link(ctx, paths["ingest"], paths["link"])
            elif stage == "match":
                stats = run_match(ctx, paths["ingest"], paths["link"], paths["match"])
            elif stage == "supplement":
                stats = run_supplement(
                    ctx, paths["ingest"], paths["match"], paths["supplement"],
                    enabled=config.supplement_enabled,
                )
            elif stage == "filter":
                stats = run_filter(
                    ctx, paths["ingest"], paths["supplement"], paths["filter"],
                    enabled=config.nli_enabled,
                )
            elif stage == "sample":
                stats = run_sample(ctx, paths["ingest"], paths["filter"], paths["sample"])
            else:
                stats = run_render(
                    ctx, paths["ingest"], paths["link"], paths["sample"], paths["render"]
                )
        except StageError:
            raise
        except Exception as exc:
            raise StageError(stage, str(exc)) from exc
        manifest["stages"][stage] = stats
        manifest["timings"][stage] = round(time.perf_counter() - t0, 6)
        logger.info("stage %s done: %s", stage, stats)

    filter_stats = manifest["stages"].get("filter", {})
    manifest["nli_exclusion_rate"] = filter_stats.get("exclusion_rate")
    manifest_path = out_dir / "run_manifest.json"
    manifest_path.write_text(
        json.dumps(manifest, ensure_ascii=False, indent=2) + "\n", "utf-8"
    )
    return RunResult(dataset_path=paths["render"], manifest_path=manifest_path, manifest=manifest)
