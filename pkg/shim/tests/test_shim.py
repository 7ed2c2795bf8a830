import json
import os
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from kg2i_shim.app import ShimConfig, create_app

# plain-file interface to the pipeline repo's golden protocol fixtures
GOLDEN_FIXTURES = Path(__file__).resolve().parents[2] / "tests/golden/protocol/golden_backend.json"


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app(ShimConfig()))


# -- wire-schema checks (the protocol contract, restated independently) --------


def check_response_schema(endpoint: str, payload: dict) -> None:
    if endpoint == "classify":
        assert isinstance(payload["domain"], str)
        assert 0.0 <= payload["confidence"] <= 1.0
    elif endpoint == "ner":
        assert isinstance(payload["mentions"], list)
        for m in payload["mentions"]:
            assert isinstance(m["start"], int) and isinstance(m["end"], int)
            assert 0 <= m["start"] < m["end"]
            assert isinstance(m["surface"], str) and m["surface"]
    elif endpoint == "extract":
        assert isinstance(payload["output"], str)
    elif endpoint == "entail":
        assert 0.0 <= payload["entailment"] <= 1.0
    else:
        raise AssertionError(f"unknown endpoint {endpoint}")


def test_golden_request_suite_yields_schema_valid_responses(client):
    fixtures = json.loads(GOLDEN_FIXTURES.read_text("utf-8"))
    assert len(fixtures) >= 8
    seen = set()
    for fx in fixtures:
        endpoint = fx["endpoint"]
        seen.add(endpoint)
        resp = client.post(f"/v1/{endpoint}", json=fx["request"])
        assert resp.status_code == 200, (endpoint, resp.text)
        check_response_schema(endpoint, resp.json())
    assert seen == {"classify", "ner", "extract", "entail"}


def probe_texts():
    en = [
        f"Sample {i}: Alice Johnson met Bob at the Grand Hotel in Springfield "
        f"while Carol Reyes watched from the North Tower lobby number {i}."
        for i in range(25)
    ]
    zh = [
        f"样本{i}：蒂姆·库克在北京会见了来自上海的代表，随后前往东京参加会议，编号{i}。"
        for i in range(25)
    ]
    return en + zh


def test_ner_offsets_on_50_case_bilingual_probe(client):
    cases = probe_texts()
    assert len(cases) == 50
    mention_count = 0
    for i, text in enumerate(cases):
        lang = "en" if i < 25 else "zh"
        resp = client.post("/v1/ner", json={"text": text, "lang": lang})
        assert resp.status_code == 200
        mentions = resp.json()["mentions"]
        assert mentions, text
        for m in mentions:
            assert text[m["start"] : m["end"]] == m["surface"]
            mention_count += 1
    assert mention_count >= 100


def test_health_lists_endpoints(client):
    resp = client.get("/v1/health")
    assert resp.status_code == 200
    body = resp.json()
    assert body["ok"] is True
    assert body["endpoints"] == ["classify", "entail", "extract", "ner"]


def test_ner_on_empty_text(client):
    resp = client.post("/v1/ner", json={"text": "", "lang": "en"})
    assert resp.status_code == 200
    assert resp.json() == {"mentions": []}


def test_missing_field_is_schema_error_with_path(client):
    resp = client.post("/v1/entail", json={"premise": "p", "lang": "en"})
    assert resp.status_code == 400
    assert resp.json() == {"error": "missing request field", "field": "hypothesis"}


def test_non_object_body_is_schema_error(client):
    resp = client.post("/v1/classify", content=b"[1,2,3]",
                       headers={"Content-Type": "application/json"})
    assert resp.status_code == 400
    assert resp.json()["field"] == "."


def test_over_length_request_is_rejected_naming_the_field(client):
    long_text = "x" * 5000
    resp = client.post("/v1/classify", json={"text": long_text, "lang": "en"})
    assert resp.status_code == 413
    assert resp.json()["field"] == "text"
    resp = client.post("/v1/entail",
                       json={"premise": long_text, "hypothesis": "h", "lang": "en"})
    assert resp.status_code == 413
    assert resp.json()["field"] == "premise"


def test_entailment_mirrors_shared_wording(client):
    resp = client.post("/v1/entail", json={
        "premise": "A died in 2011.", "hypothesis": "A died on 2011", "lang": "en",
    })
    assert resp.status_code == 200
    assert resp.json()["entailment"] > 0.5


def test_entailment_low_for_unsupported_hypothesis(client):
    resp = client.post("/v1/entail", json={
        "premise": "Cook was appointed CEO in 2011.",
        "hypothesis": "Steve Jobs died on 2011.", "lang": "en",
    })
    assert resp.json()["entailment"] < 0.5


def test_extract_returns_string_output(client):
    resp = client.post("/v1/extract", json={
        "instruction": "extract things", "input": "Some text.", "lang": "en",
    })
    assert resp.status_code == 200
    assert isinstance(resp.json()["output"], str)


def test_responses_are_deterministic(client):
    req = {"text": "Alice Johnson visited Beijing.", "lang": "en"}
    assert client.post("/v1/ner", json=req).json() == client.post("/v1/ner", json=req).json()
    assert (client.post("/v1/classify", json=req).json()
            == client.post("/v1/classify", json=req).json())


def test_model_load_failure_disables_only_that_endpoint(monkeypatch):
    import kg2i_shim.app as app_module
    from kg2i_shim.adapters import ModelLoadError, load_pipeline

    def failing_loader(capability, model_ref, device="cpu"):
        if capability == "entail":
            raise ModelLoadError("weights unavailable")
        return load_pipeline(capability, model_ref, device)

    monkeypatch.setattr(app_module, "load_pipeline", failing_loader)
    broken = TestClient(create_app(ShimConfig()))
    health = broken.get("/v1/health").json()
    assert health["ok"] is False
    assert "entail" not in health["endpoints"]
    resp = broken.post("/v1/entail", json={"premise": "p", "hypothesis": "h", "lang": "en"})
    assert resp.status_code == 503
    ok = broken.post("/v1/ner", json={"text": "Alice Johnson", "lang": "en"})
    assert ok.status_code == 200


@pytest.mark.skipif(
    not os.environ.get("KG2I_SHIM_REAL_MODELS"),
    reason="set KG2I_SHIM_REAL_MODELS=1 with model weights available",
)
def test_real_nli_model_smoke():
    config = ShimConfig(entail_model=os.environ.get(
        "KG2I_SHIM_ENTAIL_MODEL", "MoritzLaurer/mDeBERTa-v3-base-xnli-multilingual-nli-2mil7"
    ))
    client = TestClient(create_app(config))
    resp = client.post("/v1/entail", json={
        "premise": "A died in 2011.", "hypothesis": "A died on 2011", "lang": "en",
    })
    assert resp.status_code == 200
    assert resp.json()["entailment"] > 0.5
