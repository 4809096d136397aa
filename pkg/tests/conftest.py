import sys
from pathlib import Path

import numpy as np
import pytest

from riskval.model_core import model_from_dict
from riskval.simulate import demo_model

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def demo():
    return demo_model()


@pytest.fixture
def simple_model():
    return model_from_dict({
        "intercept": -1.0,
        "coefficients": {"male": 0.5, "x1": 1.5, "x2": -2.0},
        "predictors": [
            {"name": "male", "kind": "cross_sectional", "summarizer": "identity", "range": "binary"},
            {"name": "x1", "kind": "cross_sectional", "summarizer": "identity", "range": "unit_interval"},
            {"name": "x2", "kind": "cross_sectional", "summarizer": "identity", "range": "unit_interval"},
        ],
        "provenance": "test",
    })


@pytest.fixture
def fixtures_dir():
    return FIXTURES


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
