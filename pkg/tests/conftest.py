import json
from pathlib import Path

import pytest

from kg2instruct.backends import MockBackend, MockRuleSet
from kg2instruct.kg_store import KgStore, Taxonomy
from kg2instruct.schema_matcher import load_mappers

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def golden_dir() -> Path:
    return GOLDEN


@pytest.fixture(scope="session")
def store() -> KgStore:
    return KgStore.load(FIXTURES / "kg_mini.jsonl", FIXTURES / "properties.jsonl")


@pytest.fixture(scope="session")
def mappers(store):
    return load_mappers(taxonomy=store.taxonomy)


@pytest.fixture(scope="session")
def mock_backend() -> MockBackend:
    return MockBackend(MockRuleSet.load())


def write_jsonl(path: Path, rows) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    return path
