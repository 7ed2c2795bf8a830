import json

import pytest

from kg2instruct.backends import MockBackend, MockRuleSet
from kg2instruct.corpus_ingest import (
    DomainLabel,
    classify_domain,
    extract_paragraphs,
    filter_by_length,
    iter_documents,
)
from kg2instruct.errors import CorpusParseError
from kg2instruct.text import token_count

PAD = "plain filler words " * 20  # 60 tokens of filler


def doc(wikitext, doc_id="d1", lang="en"):
    return {"id": doc_id, "lang": lang, "title": "T", "wikitext": wikitext}


def words(n, w="pad"):
    return " ".join(f"{w}{i}" for i in range(n))


def test_single_paragraph_with_two_links():
    text = f"[[Alpha Corp|Alpha]] hired [[Bob Smith]] yesterday. {words(55)}"
    result = extract_paragraphs(doc(text), "en")
    assert result.skipped_unbalanced == 0
    assert len(result.paragraphs) == 1
    p = result.paragraphs[0]
    assert len(p.anchors) == 2
    assert p.token_count >= 60
    assert p.text.startswith("Alpha hired Bob Smith")


def test_anchor_spans_slice_their_surfaces():
    text = "Intro [[Alpha Corp|Alpha]] middle [[Bob Smith]] end. {{infobox|x}} <ref>cite</ref>"
    p = extract_paragraphs(doc(text), "en").paragraphs[0]
    surfaces = [p.text[a.start : a.end] for a in p.anchors]
    assert surfaces == ["Alpha", "Bob Smith"]
    assert [a.target_title for a in p.anchors] == ["Alpha Corp", "Bob Smith"]


def test_length_filter_keeps_only_mid_sized_paragraph():
    text = "\n\n".join([words(30), words(100), words(600)])
    paragraphs = extract_paragraphs(doc(text), "en").paragraphs
    assert [p.token_count for p in paragraphs] == [30, 100, 600]
    kept = filter_by_length(paragraphs)
    assert [p.token_count for p in kept] == [100]


def test_length_bounds_are_inclusive():
    text = "\n\n".join([words(49), words(50), words(512), words(513)])
    kept = filter_by_length(extract_paragraphs(doc(text), "en").paragraphs)
    assert [p.token_count for p in kept] == [50, 512]


def test_filtering_is_idempotent():
    text = "\n\n".join([words(30), words(100), words(60)])
    paragraphs = extract_paragraphs(doc(text), "en").paragraphs
    once = filter_by_length(paragraphs)
    assert filter_by_length(once) == once


def test_unbalanced_link_skips_paragraph_and_counts():
    text = f"Good [[Alpha Corp|Alpha]] one. {words(55)}\n\nBad [[broken link here.\n\nStray ]] here."
    result = extract_paragraphs(doc(text), "en")
    assert len(result.paragraphs) == 1
    assert result.skipped_unbalanced == 2


def test_markup_is_stripped_not_rendered():
    text = (
        "{{Infobox company|name=Alpha}}\n"
        "== History ==\n"
        "Alpha grew '''fast''' and ''loud''<ref name=a>src</ref>. <!-- hidden -->\n"
        "{| class=wikitable\n|row\n|}\n"
        "See [http://example.com the site] for more."
    )
    rendered = " ".join(p.text for p in extract_paragraphs(doc(text), "en").paragraphs)
    assert "Infobox" not in rendered and "wikitable" not in rendered
    assert "'''" not in rendered and "<ref" not in rendered and "hidden" not in rendered
    assert "the site" in rendered and "http" not in rendered


def test_file_links_are_dropped_entirely():
    text = "[[File:pic.jpg|thumb|A [[caption link]] inside]] Alpha announced [[Bob Smith]]."
    p = extract_paragraphs(doc(text), "en").paragraphs[0]
    assert p.text == "Alpha announced Bob Smith."
    assert [a.target_title for a in p.anchors] == ["Bob Smith"]


def test_token_count_matches_tokenizer_after_stripping():
    text = "The firm {{big template}} hired [[Bob Smith|Bob]] fast."
    p = extract_paragraphs(doc(text), "en").paragraphs[0]
    assert p.token_count == token_count(p.text, "en")
    assert p.token_count == 5  # template text does not count


def test_surviving_set_independent_of_document_order():
    docs = [doc(words(70), f"d{i}") for i in range(5)]
    fwd = [p.id for d in docs for p in extract_paragraphs(d, "en").paragraphs]
    rev = [p.id for d in reversed(docs) for p in extract_paragraphs(d, "en").paragraphs]
    assert sorted(fwd) == sorted(rev)


def test_zh_paragraph_parses_with_anchor(fixtures_dir):
    docs = list(iter_documents(fixtures_dir / "corpus_zh.jsonl"))
    result = extract_paragraphs(docs[0], "zh")
    p = result.paragraphs[0]
    assert p.text[p.anchors[0].start : p.anchors[0].end] == "蒂姆·库克"
    assert 50 <= p.token_count <= 512


def test_classify_domain_with_mock_rules(mock_backend):
    biography = extract_paragraphs(
        doc("He is a business executive born in 1960 who was CEO."), "en"
    ).paragraphs[0]
    assert classify_domain(biography, mock_backend) is DomainLabel.Person
    cluster = extract_paragraphs(doc("A star cluster shines."), "en").paragraphs[0]
    assert classify_domain(cluster, mock_backend) is DomainLabel.Astronomy


def test_classify_domain_falls_back_to_first_member(mock_backend):
    bland = extract_paragraphs(doc("Nothing notable here at all."), "en").paragraphs[0]
    assert classify_domain(bland, mock_backend) is DomainLabel.GPE
    assert list(DomainLabel)[0] is DomainLabel.GPE


def test_classify_is_deterministic(mock_backend):
    p = extract_paragraphs(doc("A star cluster shines."), "en").paragraphs[0]
    assert classify_domain(p, mock_backend) == classify_domain(p, mock_backend)


def test_iter_documents_reports_byte_offset(tmp_path):
    path = tmp_path / "corpus.jsonl"
    good = json.dumps({"id": "a", "lang": "en", "title": "t", "wikitext": "w"}) + "\n"
    path.write_bytes(good.encode() + b"{not json}\n")
    with pytest.raises(CorpusParseError) as err:
        list(iter_documents(path))
    assert err.value.byte_offset == len(good.encode())


def test_domain_enum_has_exactly_twelve_members():
    assert len(DomainLabel) == 12
