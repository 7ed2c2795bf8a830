"""Command-line entry point.

`kg2instruct run --config <file>` drives the whole pipeline; each stage is
also runnable standalone on stage files, and `eval` scores prediction files
against a gold dataset.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__, pipeline
from .errors import Kg2InstructError, StageError
from .evaluator import format_table, score, write_report
from .pipeline import ENV_BACKEND_URL, PipelineConfig, load_config

logger = logging.getLogger(__name__)


def _add_backend_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mock-backends", action="store_true",
                   help="use the deterministic in-process mock backends")
    p.add_argument("--backend-url", default=None,
                   help=f"model service base URL (or set {ENV_BACKEND_URL})")
    p.add_argument("--mock-rules", default=None, help="mock rule-set JSON override")


def _add_kg_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kg", required=True, help="KG subset file (line-delimited JSON)")
    p.add_argument("--properties", required=True, help="property registry file")
    p.add_argument("--taxonomy", default=None, help="entity-type taxonomy JSON (default shipped)")


def _stage_config(args, **overrides) -> PipelineConfig:
    """A minimal config object for standalone stage runs."""
    cfg = PipelineConfig(
        corpus=Path(getattr(args, "input", ".")),
        kg=Path(getattr(args, "kg", ".")),
        properties=Path(getattr(args, "properties", ".")),
        language=getattr(args, "lang", "en"),
        output_dir=Path("."),
        mock_backends=getattr(args, "mock_backends", True),
        backend_url=getattr(args, "backend_url", None),
        mock_rules=Path(args.mock_rules) if getattr(args, "mock_rules", None) else None,
    )
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    root = argparse.ArgumentParser(prog="kg2instruct")
    root.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    root.add_argument("-v", "--verbose", action="store_true")
    sub = root.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute the full pipeline from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--mock-backends", action="store_true")
    p.add_argument("--no-supplement", action="store_true", help="ablation: skip LLM supplement")
    p.add_argument("--no-nli", action="store_true", help="ablation: skip NLI filtering")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--nli-threshold", type=float, default=None)
    p.add_argument("--resume-from", default=None, choices=pipeline.STAGES)

    p = sub.add_parser("ingest", help="parse, filter and classify corpus documents")
    p.add_argument("--input", required=True)
    p.add_argument("--lang", required=True, choices=("zh", "en"))
    p.add_argument("--min-tokens", type=int, default=50)
    p.add_argument("--max-tokens", type=int, default=512)
    p.add_argument("--output", required=True)
    _add_backend_flags(p)

    p = sub.add_parser("link", help="identify and disambiguate entity mentions")
    p.add_argument("--paragraphs", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--lang", required=True, choices=("zh", "en"))
    p.add_argument("--count-head-neighbors", action="store_true")
    _add_kg_flags(p)
    _add_backend_flags(p)

    p = sub.add_parser("match", help="schema-constrained KG triple matching")
    p.add_argument("--paragraphs", required=True)
    p.add_argument("--mentions", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--lang", required=True, choices=("zh", "en"))
    p.add_argument("--mappers", default=None)
    p.add_argument("--date-patterns", default=None)
    _add_kg_flags(p)

    p = sub.add_parser("supplement", help="recover missing triples via the extraction backend")
    p.add_argument("--paragraphs", required=True)
    p.add_argument("--triples", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--lang", required=True, choices=("zh", "en"))
    p.add_argument("--mappers", default=None)
    p.add_argument("--instruction-templates", default=None)
    p.add_argument("--no-supplement", action="store_true", help="pass triples through unchanged")
    _add_kg_flags(p)
    _add_backend_flags(p)

    p = sub.add_parser("filter", help="drop triples not entailed by their paragraph")
    p.add_argument("--paragraphs", required=True)
    p.add_argument("--triples", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--lang", required=True, choices=("zh", "en"))
    p.add_argument("--templates", default=None, help="relation templates JSON (default shipped)")
    p.add_argument("--nli-threshold", type=float, default=0.5)
    p.add_argument("--sentence-premise", action="store_true")
    p.add_argument("--no-nli", action="store_true", help="pass triples through unchanged")
    _add_backend_flags(p)

    p = sub.add_parser("sample", help="schema-balanced subset selection")
    p.add_argument("--paragraphs", required=True)
    p.add_argument("--triples", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--k", type=float, default=1.0)
    p.add_argument("--caps", default=None, help="JSON file of per-domain instance caps")

    p = sub.add_parser("render", help="render instruction records")
    p.add_argument("--paragraphs", required=True)
    p.add_argument("--mentions", required=True)
    p.add_argument("--triples", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--lang", required=True, choices=("zh", "en"))
    p.add_argument("--mappers", default=None)
    p.add_argument("--instruction-templates", default=None)
    _add_kg_flags(p)

    p = sub.add_parser("eval", help="score predictions against a gold dataset")
    p.add_argument("--gold", required=True, help="gold dataset file (line-delimited records)")
    p.add_argument("--pred", required=True, help='predictions: line-delimited {"id","output"}')
    p.add_argument("--report", required=True, help="report path (JSON; table at <path>.txt)")

    return root


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.mock_backends:
        config.mock_backends = True
    if args.no_supplement:
        config.supplement_enabled = False
    if args.no_nli:
        config.nli_enabled = False
    if args.seed is not None:
        config.seed = args.seed
    if args.nli_threshold is not None:
        config.nli_threshold = args.nli_threshold
    result = pipeline.run(config, resume_from=args.resume_from)
    print(f"dataset: {result.dataset_path}")
    print(f"manifest: {result.manifest_path}")
    return 0


def _cmd_ingest(args) -> int:
    cfg = _stage_config(args, min_tokens=args.min_tokens, max_tokens=args.max_tokens,
                        language=args.lang, corpus=Path(args.input))
    ctx = pipeline.PipelineContext(cfg)
    stats = pipeline.run_ingest(ctx, Path(args.output))
    print(json.dumps(stats))
    return 0


def _cmd_link(args) -> int:
    cfg = _stage_config(args, language=args.lang, kg=Path(args.kg),
                        properties=Path(args.properties),
                        taxonomy=Path(args.taxonomy) if args.taxonomy else None,
                        count_head_neighbors=args.count_head_neighbors)
    ctx = pipeline.PipelineContext(cfg)
    stats = pipeline.run_link(ctx, Path(args.paragraphs), Path(args.output))
    print(json.dumps(stats))
    return 0


def _cmd_match(args) -> int:
    cfg = _stage_config(args, language=args.lang, kg=Path(args.kg),
                        properties=Path(args.properties),
                        taxonomy=Path(args.taxonomy) if args.taxonomy else None,
                        mappers=Path(args.mappers) if args.mappers else None,
                        date_patterns=Path(args.date_patterns) if args.date_patterns else None)
    ctx = pipeline.PipelineContext(cfg)
    stats = pipeline.run_match(ctx, Path(args.paragraphs), Path(args.mentions), Path(args.output))
    print(json.dumps(stats))
    return 0


def _cmd_supplement(args) -> int:
    cfg = _stage_config(args, language=args.lang, kg=Path(args.kg),
                        properties=Path(args.properties),
                        taxonomy=Path(args.taxonomy) if args.taxonomy else None,
                        mappers=Path(args.mappers) if args.mappers else None,
                        instruction_templates=Path(args.instruction_templates)
                        if args.instruction_templates else None)
    ctx = pipeline.PipelineContext(cfg)
    stats = pipeline.run_supplement(
        ctx, Path(args.paragraphs), Path(args.triples), Path(args.output),
        enabled=not args.no_supplement,
    )
    print(json.dumps(stats))
    return 0


def _cmd_filter(args) -> int:
    cfg = _stage_config(args, language=args.lang,
                        nli_threshold=args.nli_threshold,
                        sentence_premise=args.sentence_premise,
                        nli_templates=Path(args.templates) if args.templates else None)
    ctx = pipeline.PipelineContext(cfg)
    stats = pipeline.run_filter(
        ctx, Path(args.paragraphs), Path(args.triples), Path(args.output),
        enabled=not args.no_nli,
    )
    print(json.dumps(stats))
    return 0


def _cmd_sample(args) -> int:
    caps = json.loads(Path(args.caps).read_text("utf-8")) if args.caps else None
    cfg = _stage_config(args, seed=args.seed, sampler_k=args.k, caps=caps)
    ctx = pipeline.PipelineContext(cfg)
    stats = pipeline.run_sample(ctx, Path(args.paragraphs), Path(args.triples), Path(args.output))
    print(json.dumps(stats))
    return 0


def _cmd_render(args) -> int:
    cfg = _stage_config(args, language=args.lang, kg=Path(args.kg),
                        properties=Path(args.properties),
                        taxonomy=Path(args.taxonomy) if args.taxonomy else None,
                        mappers=Path(args.mappers) if args.mappers else None,
                        instruction_templates=Path(args.instruction_templates)
                        if args.instruction_templates else None)
    ctx = pipeline.PipelineContext(cfg)
    stats = pipeline.run_render(
        ctx, Path(args.paragraphs), Path(args.mentions), Path(args.triples), Path(args.output)
    )
    print(json.dumps(stats))
    return 0


def _cmd_eval(args) -> int:
    gold = pipeline.read_jsonl(Path(args.gold))
    pred = pipeline.read_jsonl(Path(args.pred))
    report = score(gold, pred)
    write_report(report, args.report)
    print(format_table(report))
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "ingest": _cmd_ingest,
    "link": _cmd_link,
    "match": _cmd_match,
    "supplement": _cmd_supplement,
    "filter": _cmd_filter,
    "sample": _cmd_sample,
    "render": _cmd_render,
    "eval": _cmd_eval,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except StageError as exc:
        logger.error("%s", exc)
        print(f"pipeline failed at stage: {exc.stage}", file=sys.stderr)
        return 2
    except Kg2InstructError as exc:
        logger.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
