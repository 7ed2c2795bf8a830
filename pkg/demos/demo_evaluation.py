"""Score synthetic predictions and read the error taxonomy.

Builds a tiny gold set, perturbs it four ways (one per error category), and
shows how the span-based micro-F1 report and the per-domain table react.
"""

from kg2instruct.evaluator import format_table, score
from kg2instruct.instruct_render import render_output
from kg2instruct.triples import SurfaceTriple


def record(rid, domain, triples):
    return {
        "id": rid, "lang": "en", "domain": domain,
        "triples": [{"head": h, "relation": r, "tail": t, "provenance": "KG"}
                    for h, r, t in triples],
    }


def output(triples):
    return render_output([SurfaceTriple(h, r, t) for h, r, t in triples], {})


def main():
    gold = [
        record("a", "Person", [("Steve Jobs", "employer", "Apple"),
                               ("Steve Jobs", "date of birth", "February 24, 1955")]),
        record("b", "Building", [("Burj Khalifa", "height", "828")]),
    ]
    predictions = [
        # one exact hit, one boundary error (truncated head), one spurious
        # relation and one entity mismatch
        {"id": "a", "output": output([
            ("Steve Jobs", "employer", "Apple"),
            ("Steve", "date of birth", "February 24, 1955"),
            ("Steve Jobs", "spouse", "Laurene"),
        ])},
        {"id": "b", "output": output([("Burj Khalifa", "height", "163")])},
    ]
    report = score(gold, predictions)
    print(format_table(report))
    print("per-false-positive categories:", dict(report.error_counts))

    # an unparseable answer counts as zero predictions for that instance
    report2 = score(gold, [
        {"id": "a", "output": "The text talks about Steve Jobs and Apple."},
        {"id": "b", "output": output([("Burj Khalifa", "height", "828")])},
    ])
    print(f"\nwith one free-prose answer: unparseable={report2.unparseable_count}, "
          f"recall={report2.overall.recall:.3f}")


if __name__ == "__main__":
    main()
