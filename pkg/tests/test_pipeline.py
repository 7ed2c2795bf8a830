import json
import shutil
from pathlib import Path

import pytest

from kg2instruct.cli import main as cli_main
from kg2instruct.errors import ConfigError
from kg2instruct.pipeline import (
    PipelineConfig,
    load_config,
    read_jsonl,
    run,
    stage_seed,
)
from kg2instruct.triples import PROVENANCE_LLM


def golden_cfg(fixtures_dir, out_dir, **overrides):
    cfg = load_config(fixtures_dir / "golden_config.json")
    cfg.output_dir = Path(out_dir)
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


def test_config_loading_resolves_relative_paths(fixtures_dir):
    cfg = load_config(fixtures_dir / "golden_config.json")
    assert cfg.corpus.exists() and cfg.kg.exists() and cfg.properties.exists()
    assert cfg.seed == 7 and cfg.language == "en"
    assert cfg.caps["GPE"] == 20176


def test_config_validation_catches_bad_threshold(fixtures_dir, tmp_path):
    cfg = golden_cfg(fixtures_dir, tmp_path, nli_threshold=1.5)
    with pytest.raises(ConfigError):
        cfg.validate()


def test_config_requires_some_backend(fixtures_dir, tmp_path, monkeypatch):
    monkeypatch.delenv("KG2I_BACKEND_URL", raising=False)
    cfg = golden_cfg(fixtures_dir, tmp_path, mock_backends=False)
    with pytest.raises(ConfigError):
        cfg.validate()


def test_stage_seeds_are_independent_per_stage():
    assert stage_seed(7, "sample") != stage_seed(7, "ingest")
    assert stage_seed(7, "sample") == stage_seed(7, "sample")
    assert stage_seed(8, "sample") != stage_seed(7, "sample")


def test_full_run_reproduces_committed_golden(fixtures_dir, golden_dir, tmp_path):
    result = run(golden_cfg(fixtures_dir, tmp_path / "run"))
    got = result.dataset_path.read_bytes()
    want = (golden_dir / "dataset_seed7.jsonl").read_bytes()
    assert got == want


def test_manifest_counts_are_conserved(fixtures_dir, tmp_path):
    result = run(golden_cfg(fixtures_dir, tmp_path / "run"))
    stages = result.manifest["stages"]
    ingest = stages["ingest"]
    assert ingest["parsed"] == (
        ingest["output_count"] + ingest["length_filtered"] + ingest["classify_failed"]
    )
    flt = stages["filter"]
    assert flt["triples_in"] == flt["triples_retained"] + flt["triples_excluded"]
    assert stages["sample"]["input_count"] == stages["filter"]["output_count"]
    assert stages["render"]["input_count"] == stages["sample"]["output_count"]
    assert result.manifest["nli_exclusion_rate"] == flt["exclusion_rate"]
    assert result.manifest["config_hash"]


def test_config_hash_stable_across_reruns(fixtures_dir, tmp_path):
    a = run(golden_cfg(fixtures_dir, tmp_path / "a")).manifest
    b = run(golden_cfg(fixtures_dir, tmp_path / "b")).manifest
    assert a["config_hash"] == b["config_hash"]


def test_no_supplement_leaves_zero_llm_provenance(fixtures_dir, tmp_path):
    result = run(golden_cfg(fixtures_dir, tmp_path / "r", supplement_enabled=False))
    provs = {
        t["provenance"]
        for rec in read_jsonl(result.dataset_path)
        for t in rec["triples"]
    }
    assert PROVENANCE_LLM not in provs


def test_no_nli_retains_at_least_as_many_triples(fixtures_dir, tmp_path):
    full = run(golden_cfg(fixtures_dir, tmp_path / "full"))
    nonli = run(golden_cfg(fixtures_dir, tmp_path / "nonli", nli_enabled=False))
    retained_full = full.manifest["stages"]["filter"]["triples_retained"]
    retained_nonli = nonli.manifest["stages"]["filter"]["triples_retained"]
    assert retained_nonli >= retained_full


def test_resume_from_reuses_earlier_stage_files(fixtures_dir, tmp_path):
    out = tmp_path / "run"
    first = run(golden_cfg(fixtures_dir, out))
    dataset_before = first.dataset_path.read_bytes()
    # corrupt the corpus; a resume from "match" must not re-ingest
    cfg = golden_cfg(fixtures_dir, out)
    cfg.corpus = fixtures_dir / "corpus_ablation_en.jsonl"
    resumed = run(cfg, resume_from="match")
    assert resumed.dataset_path.read_bytes() == dataset_before
    assert resumed.manifest["stages"]["ingest"] == {"resumed": True}


def test_resume_from_missing_stage_file_fails_with_stage_name(fixtures_dir, tmp_path):
    from kg2instruct.errors import StageError

    cfg = golden_cfg(fixtures_dir, tmp_path / "empty")
    with pytest.raises(StageError) as err:
        run(cfg, resume_from="filter")
    assert err.value.stage == "ingest"


def test_classify_failure_skips_paragraph_and_counts(fixtures_dir, tmp_path, monkeypatch):
    from kg2instruct.errors import TransportError
    from kg2instruct.pipeline import PipelineContext, run_ingest

    class FlakyClassify:
        def __init__(self, backend):
            self.backend = backend

        def classify(self, text, lang):
            if "Qiqi" in text:
                raise TransportError("backend down")
            return self.backend.classify(text, lang)

        def ner(self, text, lang):
            return self.backend.ner(text, lang)

    cfg = golden_cfg(fixtures_dir, tmp_path)
    ctx = PipelineContext(cfg)
    ctx._backend = FlakyClassify(__import__("kg2instruct.backends", fromlist=["MockBackend"]).MockBackend())
    stats = run_ingest(ctx, tmp_path / "paragraphs.jsonl")
    assert stats["classify_failed"] == 4  # one per Qiqi paragraph copy
    assert stats["output_count"] == 46
    ids = {rec["id"] for rec in read_jsonl(tmp_path / "paragraphs.jsonl")}
    assert not any("qiqi" in i for i in ids)


def test_env_var_overrides_backend_url(monkeypatch, fixtures_dir, tmp_path):
    from kg2instruct.pipeline import make_backend
    from kg2instruct.backends import HttpBackend

    monkeypatch.setenv("KG2I_BACKEND_URL", "http://from-env:1234")
    cfg = golden_cfg(fixtures_dir, tmp_path, mock_backends=False)
    backend = make_backend(cfg)
    assert isinstance(backend, HttpBackend)
    assert backend.endpoints.base_url == "http://from-env:1234"


def test_chinese_corpus_runs_end_to_end(fixtures_dir, tmp_path):
    cfg = PipelineConfig(
        corpus=fixtures_dir / "corpus_zh.jsonl", kg=fixtures_dir / "kg_mini.jsonl",
        properties=fixtures_dir / "properties.jsonl", language="zh",
        output_dir=tmp_path, seed=5, mock_backends=True, sampler_k=1000.0,
    )
    result = run(cfg)
    by_id = {rec["id"]: rec for rec in read_jsonl(result.dataset_path)}

    cook = by_id["zh-0-00-cook:p0"]
    assert cook["domain"] == "Person"
    triples = {(t["head"], t["relation"], t["tail"]) for t in cook["triples"]}
    assert ("蒂姆·库克", "出生日期", "1960年11月1日") in triples
    assert ("蒂姆·库克", "雇主", "苹果") in triples
    # the 2011年 death-date hallucination is matched from the KG, then dropped
    assert all(h != "史蒂夫·乔布斯" for h, _, _ in triples)

    china = by_id["zh-0-01-china:p0"]
    assert {(t["head"], t["relation"], t["tail"]) for t in china["triples"]} == {
        ("中国", "首都", "北京"),
        ("中国", "外交关系", "日本"),
    }


# -- CLI ---------------------------------------------------------------------


def test_cli_run_and_ablation_flags(fixtures_dir, tmp_path, capsys):
    config = json.loads((fixtures_dir / "golden_config.json").read_text("utf-8"))
    config["output_dir"] = str(tmp_path / "out")
    cfg_path = tmp_path / "config.json"
    # keep fixture-relative paths working
    for key in ("corpus", "kg", "properties", "caps"):
        config[key] = str(fixtures_dir / config[key])
    cfg_path.write_text(json.dumps(config), "utf-8")
    rc = cli_main(["run", "--config", str(cfg_path), "--no-supplement", "--seed", "3"])
    assert rc == 0
    dataset = tmp_path / "out" / "dataset.jsonl"
    assert dataset.exists()
    provs = {t["provenance"] for rec in read_jsonl(dataset) for t in rec["triples"]}
    assert provs <= {"KG"}


def test_cli_stage_commands_chain(fixtures_dir, tmp_path):
    paragraphs = tmp_path / "paragraphs.jsonl"
    mentions = tmp_path / "mentions.jsonl"
    rc = cli_main([
        "ingest", "--input", str(fixtures_dir / "corpus_zh.jsonl"), "--lang", "zh",
        "--min-tokens", "50", "--max-tokens", "512",
        "--output", str(paragraphs), "--mock-backends",
    ])
    assert rc == 0 and read_jsonl(paragraphs)
    rc = cli_main([
        "link", "--paragraphs", str(paragraphs), "--output", str(mentions),
        "--lang", "zh", "--kg", str(fixtures_dir / "kg_mini.jsonl"),
        "--properties", str(fixtures_dir / "properties.jsonl"), "--mock-backends",
    ])
    assert rc == 0
    recs = read_jsonl(mentions)
    assert any(m["resolved"] for rec in recs for m in rec["mentions"])


def test_cli_eval_writes_report(fixtures_dir, golden_dir, tmp_path):
    gold_path = golden_dir / "dataset_seed7.jsonl"
    preds = [{"id": rec["id"], "output": rec["output"]} for rec in read_jsonl(gold_path)]
    pred_path = tmp_path / "preds.jsonl"
    with open(pred_path, "w", encoding="utf-8") as fh:
        for row in preds:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    report_path = tmp_path / "report.json"
    rc = cli_main(["eval", "--gold", str(gold_path), "--pred", str(pred_path),
                   "--report", str(report_path)])
    assert rc == 0
    report = json.loads(report_path.read_text("utf-8"))
    assert report["overall"]["f1"] == 1.0
    assert (tmp_path / "report.json.txt").exists()


def test_cli_reports_stage_failures_with_nonzero_exit(fixtures_dir, tmp_path):
    config = {
        "corpus": "missing.jsonl", "kg": str(fixtures_dir / "kg_mini.jsonl"),
        "properties": str(fixtures_dir / "properties.jsonl"),
        "language": "en", "output_dir": str(tmp_path), "mock_backends": True,
    }
    cfg_path = tmp_path / "bad.json"
    cfg_path.write_text(json.dumps(config), "utf-8")
    rc = cli_main(["run", "--config", str(cfg_path)])
    assert rc != 0
