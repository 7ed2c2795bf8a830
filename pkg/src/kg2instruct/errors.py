"""Exception types shared across pipeline stages."""

from __future__ import annotations


class Kg2InstructError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(Kg2InstructError):
    """Invalid or inconsistent configuration."""


class CorpusParseError(Kg2InstructError):
    """Malformed corpus document; carries the byte offset of the failure."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (byte offset {byte_offset})")
        self.byte_offset = byte_offset


class KgLoadError(Kg2InstructError):
    """Knowledge-graph subset file violates a load invariant."""


class ProtocolError(Kg2InstructError):
    """Backend request or response violates the wire schema.

    ``field`` is the path of the offending field (e.g. "mentions[0].start").
    """

    def __init__(self, message: str, field: str):
        super().__init__(f"{message} (field: {field})")
        self.field = field


class TransportError(Kg2InstructError):
    """Backend unreachable after exhausting the retry budget."""


class AlignmentError(Kg2InstructError):
    """Gold and prediction sets disagree on instance ids."""

    def __init__(self, missing: list[str], extra: list[str]):
        parts = []
        if missing:
            parts.append(f"missing predictions for ids: {', '.join(missing)}")
        if extra:
            parts.append(f"predictions for unknown ids: {', '.join(extra)}")
        super().__init__("; ".join(parts))
        self.missing = missing
        self.extra = extra


class StageError(Kg2InstructError):
    """A pipeline stage failed; carries the stage name for the CLI exit path."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}': {message}")
        self.stage = stage
