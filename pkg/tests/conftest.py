import json
import sys
from pathlib import Path

import numpy as np
import pytest

from crs_learn.data import load_corpus
from crs_learn.seclang import load_conf

HERE = Path(__file__).parent
FIXTURES = HERE / "fixtures"
RULES_CONF = FIXTURES / "rules" / "REQUEST-942-FIXTURE.conf"
CORPUS = FIXTURES / "data" / "corpus.jsonl"
GOLDEN = HERE / "golden"

sys.path.insert(0, str(GOLDEN))


@pytest.fixture(scope="session")
def ruleset():
    return load_conf(RULES_CONF)


@pytest.fixture(scope="session")
def corpus():
    return load_corpus(CORPUS)


@pytest.fixture(scope="session")
def golden_rows():
    with open(GOLDEN / "golden.jsonl", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
