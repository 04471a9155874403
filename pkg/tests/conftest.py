from pathlib import Path

import pytest

from timewarp.corpus import load_corpus
from timewarp.llmclient import GeneratorClient, MockBackend

DATA_DIR = Path(__file__).parent / "data"
FIXTURE_CORPUS = DATA_DIR / "fixture_corpus_20.jsonl"


@pytest.fixture(scope="session")
def fixture_corpus_path():
    return FIXTURE_CORPUS


@pytest.fixture(scope="session")
def corpus():
    return load_corpus(FIXTURE_CORPUS)


@pytest.fixture()
def mock_client():
    return GeneratorClient(MockBackend())
