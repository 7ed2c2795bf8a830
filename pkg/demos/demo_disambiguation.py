"""Watch the counting-score disambiguation pick the right "Apple".

The fixture KG knows Apple the company (Q312) and apple the fruit (Q89).
With "Tim Cook" nearby, the tail-frequency score separates them; without
context, the degree fallback still gives a deterministic answer.
"""

from pathlib import Path

from kg2instruct.backends import MockBackend, MockRuleSet
from kg2instruct.corpus_ingest import Anchor, Paragraph
from kg2instruct.kg_store import KgStore
from kg2instruct.mention_linker import disambiguate, identify_mentions
from kg2instruct.text import token_count

FIXTURES = Path(__file__).resolve().parents[1] / "tests" / "fixtures"


def link(store, backend, text, anchors):
    p = Paragraph(id="demo", lang="en", text=text,
                  token_count=token_count(text, "en"),
                  anchors=[Anchor(*a) for a in anchors])
    mentions = identify_mentions(p, store, backend)
    return disambiguate(mentions.mentions, store, "en")


def main():
    store = KgStore.load(FIXTURES / "kg_mini.jsonl", FIXTURES / "properties.jsonl")
    backend = MockBackend(MockRuleSet.load())

    print("candidates for 'Apple':", store.candidates("Apple", "en"))
    print("degrees:", {q: store.degree(q) for q in store.candidates("Apple", "en")})

    with_context = "Apple posted results. Tim Cook presented the figures."
    for m in link(store, backend, with_context, [(0, 5, "Apple")]):
        print(f"with Tim Cook nearby: {m.surface!r} -> {m.resolved} ({m.etype})")

    without = "Apple is on the table."
    for m in link(store, backend, without, [(0, 5, "Apple")]):
        print(f"no context (degree fallback): {m.surface!r} -> {m.resolved} ({m.etype})")


if __name__ == "__main__":
    main()
