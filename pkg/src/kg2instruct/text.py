"""Language-aware text primitives shared across the pipeline.

Tokenization here is deliberately dependency-free and deterministic:
Chinese counts every Han ideograph as one token plus each maximal
non-CJK, non-space run; English counts whitespace-delimited runs.
"""

from __future__ import annotations

import re

SUPPORTED_LANGS = ("zh", "en")

# Han ideograph ranges (basic block, extension A, compatibility, extensions B+).
_CJK_RANGES = (
    (0x4E00, 0x9FFF),
    (0x3400, 0x4DBF),
    (0xF900, 0xFAFF),
    (0x20000, 0x2EBEF),
)

_WS_RE = re.compile(r"\s+")


def is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


def token_count(text: str, lang: str) -> int:
    """Count tokens in ``text`` under the language's tokenization rule."""
    if lang == "en":
        return len(text.split())
    if lang == "zh":
        count = 0
        in_run = False
        for ch in text:
            if ch.isspace():
                in_run = False
            elif is_cjk(ch):
                count += 1
                in_run = False
            else:
                if not in_run:
                    count += 1
                in_run = True
        return count
    raise ValueError(f"unsupported language: {lang!r}")


def normalize_surface(surface: str, lang: str) -> str:
    """Normalize a surface form for alias-index lookup and dedup keys.

    Trims, collapses internal whitespace, and case-folds English only;
    Chinese has no case, and folding there would create false matches.
    """
    s = _WS_RE.sub(" ", surface.strip())
    if lang == "en":
        s = s.casefold()
    return s


def surface_tokens(s: str) -> set[str]:
    """Token set used for overlap checks: whitespace runs, with CJK
    characters split out individually and ASCII punctuation stripped."""
    tokens: set[str] = set()
    for run in s.split():
        buf = []
        for ch in run:
            if is_cjk(ch):
                if buf:
                    tokens.add("".join(buf))
                    buf = []
                tokens.add(ch)
            else:
                buf.append(ch)
        if buf:
            tokens.add("".join(buf))
    return {t.strip(".,;:!?()[]{}\"'，。；：！？（）【】") for t in tokens} - {""}


_SENT_END_RE = re.compile(r"(?<=[.!?。！？])\s*")


def split_sentences(text: str) -> list[str]:
    """Naive sentence splitter used for optional sentence-level NLI premises."""
    parts = [p.strip() for p in _SENT_END_RE.split(text)]
    return [p for p in parts if p]
