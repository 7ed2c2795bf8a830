"""HTTP service exposing classify/ner/extract/entail over real models."""

__version__ = "0.1.0"
