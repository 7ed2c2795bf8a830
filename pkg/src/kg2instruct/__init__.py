"""kg2instruct: builds instruction-based IE datasets from a corpus plus a
knowledge-graph subset, and scores model predictions with span-based
micro-F1 and a four-way error taxonomy."""

__version__ = "0.1.0"

from .corpus_ingest import Anchor, DomainLabel, Paragraph
from .evaluator import EvalReport, parse_output, score
from .instruct_render import InstructionRecord, render_instruction, render_output
from .kg_store import KgStore, Literal, Taxonomy
from .mention_linker import EntityMention, disambiguate, identify_mentions
from .nli_filter import RelationTemplates, filter_triples, instantiate
from .sampler import sample, schema_key
from .schema_matcher import SchemaMapper, load_mappers, match_entity_pairs, match_literal_tails
from .triple_supplement import merge_dedupe, supplement
from .triples import SurfaceTriple

__all__ = [
    "Anchor",
    "DomainLabel",
    "EntityMention",
    "EvalReport",
    "InstructionRecord",
    "KgStore",
    "Literal",
    "Paragraph",
    "RelationTemplates",
    "SchemaMapper",
    "SurfaceTriple",
    "Taxonomy",
    "disambiguate",
    "filter_triples",
    "identify_mentions",
    "instantiate",
    "load_mappers",
    "match_entity_pairs",
    "match_literal_tails",
    "merge_dedupe",
    "parse_output",
    "render_instruction",
    "render_output",
    "sample",
    "schema_key",
    "score",
    "supplement",
]
