import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from http.server import BaseHTTPRequestHandler, HTTPServer, ThreadingHTTPServer

import pytest

from kg2instruct.backends import (
    BackendEndpointSet,
    HttpBackend,
    MockBackend,
    MockRuleSet,
    validate_request,
    validate_response,
)
from kg2instruct.errors import ConfigError, ProtocolError, TransportError


# -- schema validation --------------------------------------------------------


def test_request_validation_names_missing_field():
    with pytest.raises(ProtocolError) as err:
        validate_request("entail", {"premise": "p", "lang": "en"})
    assert err.value.field == "hypothesis"


def test_response_missing_entailment_names_field():
    with pytest.raises(ProtocolError) as err:
        validate_response("entail", {"score": 0.5})
    assert err.value.field == "entailment"


def test_out_of_range_score_is_rejected_not_clamped():
    with pytest.raises(ProtocolError):
        validate_response("entail", {"entailment": 1.5})
    with pytest.raises(ProtocolError):
        validate_response("classify", {"domain": "GPE", "confidence": -0.1})


def test_ner_span_fields_are_validated_with_paths():
    with pytest.raises(ProtocolError) as err:
        validate_response("ner", {"mentions": [{"start": 0, "end": 4, "surface": 3}]})
    assert err.value.field == "mentions[0].surface"
    with pytest.raises(ProtocolError) as err:
        validate_response("ner", {"mentions": [{"start": 4, "end": 4, "surface": "x"}]})
    assert err.value.field == "mentions[0].start"


def test_endpoint_set_requires_positive_budgets():
    with pytest.raises(ConfigError):
        BackendEndpointSet(base_url="http://x", timeout=0)
    with pytest.raises(ConfigError):
        BackendEndpointSet(base_url="http://x", max_in_flight=0)


# -- mock backends --------------------------------------------------------------


def test_mock_entail_high_when_hypothesis_covered(mock_backend):
    premise = "Timothy Cook runs Apple from Cupertino."
    hypothesis = "Timothy Cook runs Apple."
    assert mock_backend.entail(premise, hypothesis, "en") == {"entailment": 0.9}


def test_mock_entail_low_when_tokens_missing(mock_backend):
    assert mock_backend.entail("Cook joined in 2011.", "Steve Jobs died on 2011.", "en") == {
        "entailment": 0.1
    }


def test_mock_ner_empty_text_gives_no_mentions(mock_backend):
    assert mock_backend.ner("", "en") == {"mentions": []}


def test_mock_ner_prefers_longest_non_overlapping_span(mock_backend):
    resp = mock_backend.ner("Timothy Cook spoke.", "en")
    assert [m["surface"] for m in resp["mentions"]] == ["Timothy Cook"]
    for m in resp["mentions"]:
        assert "Timothy Cook spoke."[m["start"] : m["end"]] == m["surface"]


def test_mock_determinism_on_identical_requests(mock_backend):
    req = {"text": "Tim Cook leads Apple in Cupertino.", "lang": "en"}
    assert mock_backend.call("ner", req) == mock_backend.call("ner", req)


def test_mock_extract_emits_canonical_parseable_output(mock_backend):
    from kg2instruct.evaluator import parse_output

    resp = mock_backend.extract("any instruction", "The lion preys on zebra here.", "en")
    triples = parse_output(resp["output"])
    assert [(t.head, t.relation, t.tail) for t in triples] == [
        ("lion", "main food source", "zebra")
    ]


def test_explicit_entail_rules_take_precedence():
    backend = MockBackend(MockRuleSet(entail_rules=[
        {"hypothesis_contains": "died", "score": 0.42},
    ]))
    assert backend.entail("x", "somebody died somewhere", "en")["entailment"] == 0.42


# -- golden fixtures --------------------------------------------------------------


def test_golden_fixtures_round_trip_byte_exact(golden_dir):
    raw = (golden_dir / "protocol" / "golden_backend.json").read_bytes()
    fixtures = json.loads(raw)
    canonical = (json.dumps(fixtures, ensure_ascii=False, indent=2, sort_keys=True) + "\n").encode()
    assert canonical == raw


def test_mock_backend_reproduces_golden_responses(golden_dir, mock_backend):
    fixtures = json.loads((golden_dir / "protocol" / "golden_backend.json").read_text("utf-8"))
    assert len(fixtures) >= 8
    for fx in fixtures:
        validate_request(fx["endpoint"], fx["request"])
        response = mock_backend.call(fx["endpoint"], fx["request"])
        assert response == fx["response"], fx["endpoint"]


# -- http client -----------------------------------------------------------------


class _Handler(BaseHTTPRequestHandler):
    behavior = "ok"

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        self.rfile.read(length)
        if self.path != "/v1/entail":
            self.send_error(404)
            return
        if _Handler.behavior == "bad_request":
            body = json.dumps({"error": "premise too long", "field": "premise"}).encode()
            self.send_response(400)
        elif _Handler.behavior == "flaky_then_ok":
            _Handler.behavior = "ok"
            self.send_response(500)
            self.end_headers()
            return
        else:
            body = json.dumps({"entailment": 0.75}).encode()
            self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture()
def http_server():
    server = HTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()


def test_http_backend_round_trip(http_server):
    _Handler.behavior = "ok"
    backend = HttpBackend(BackendEndpointSet(base_url=http_server, timeout=5))
    assert backend.entail("p", "h", "en") == {"entailment": 0.75}


def test_http_backend_retries_transient_failures(http_server):
    _Handler.behavior = "flaky_then_ok"
    backend = HttpBackend(BackendEndpointSet(base_url=http_server, timeout=5, retry_budget=2))
    assert backend.entail("p", "h", "en") == {"entailment": 0.75}


def test_http_backend_surfaces_schema_errors(http_server):
    _Handler.behavior = "bad_request"
    backend = HttpBackend(BackendEndpointSet(base_url=http_server, timeout=5))
    with pytest.raises(ProtocolError) as err:
        backend.entail("p", "h", "en")
    assert err.value.field == "premise"


def test_http_backend_exhausts_retries_to_transport_error():
    backend = HttpBackend(
        BackendEndpointSet(base_url="http://127.0.0.1:1", timeout=0.2, retry_budget=1)
    )
    with pytest.raises(TransportError):
        backend.entail("p", "h", "en")


class _SlowHandler(BaseHTTPRequestHandler):
    lock = threading.Lock()
    in_flight = 0
    peak = 0

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        self.rfile.read(length)
        with _SlowHandler.lock:
            _SlowHandler.in_flight += 1
            _SlowHandler.peak = max(_SlowHandler.peak, _SlowHandler.in_flight)
        time.sleep(0.05)
        with _SlowHandler.lock:
            _SlowHandler.in_flight -= 1
        body = json.dumps({"entailment": 0.5}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


def test_in_flight_bound_is_enforced_under_concurrency():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _SlowHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        _SlowHandler.peak = 0
        backend = HttpBackend(BackendEndpointSet(
            base_url=f"http://127.0.0.1:{server.server_address[1]}",
            timeout=5, max_in_flight=2,
        ))
        with ThreadPoolExecutor(max_workers=8) as pool:
            futures = [pool.submit(backend.entail, "p", f"h{i}", "en") for i in range(12)]
            for f in futures:
                assert f.result() == {"entailment": 0.5}
        assert _SlowHandler.peak <= 2
    finally:
        server.shutdown()
