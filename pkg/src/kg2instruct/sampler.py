"""Schema-centric balanced sampling.

Candidates are visited in a seeded pseudo-random permutation; acceptance
probability is min(1, K / (count(schema_key) + 1)) over the running counts
of already-chosen samples, under per-domain caps.
"""

from __future__ import annotations

import random
from collections import Counter
from typing import Callable, Iterable, TypeVar

from .errors import ConfigError

T = TypeVar("T")

KEY_SEPARATOR = "\x1f"


def schema_key(relation_labels: Iterable[str]) -> str:
    """Canonical, order-insensitive key for a sample's schema combination."""
    return KEY_SEPARATOR.join(sorted(set(relation_labels)))


def sample(
    candidates: list[T],
    seed: int,
    k: float = 1.0,
    caps: dict[str, int] | None = None,
    *,
    key_fn: Callable[[T], str],
    domain_fn: Callable[[T], str],
) -> list[T]:
    """Balanced subset of ``candidates``; deterministic for fixed inputs.

    One uniform draw is consumed per candidate considered, even when the
    acceptance probability is 1; candidates skipped by a reached domain cap
    consume no draw. Output preserves visitation order.
    """
    if k <= 0:
        raise ConfigError(f"sampler weight K must be positive, got {k}")
    rng = random.Random(seed)
    order = list(range(len(candidates)))
    rng.shuffle(order)
    key_counts: Counter[str] = Counter()
    domain_counts: Counter[str] = Counter()
    chosen: list[T] = []
    for idx in order:
        item = candidates[idx]
        domain = domain_fn(item)
        if caps is not None and domain in caps and domain_counts[domain] >= caps[domain]:
            continue
        key = key_fn(item)
        p = min(1.0, k / (key_counts[key] + 1))
        if rng.random() < p:
            chosen.append(item)
            key_counts[key] += 1
            domain_counts[domain] += 1
    return chosen
