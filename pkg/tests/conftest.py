import numpy as np
import pytest

from pyxrai.corpus import generate_corpus
from pyxrai.model import tinynet_train


@pytest.fixture(scope="session")
def corpus():
    return generate_corpus(n=120, size=32, seed=11)


@pytest.fixture(scope="session")
def trained_net(corpus):
    return tinynet_train(corpus.images[:96], corpus.labels[:96], epochs=40, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_line():
    """Record one pass/fail line for an acceptance criterion."""
    def record(number, title, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] {number:>2}. {title}: {detail}"
        _ACCEPTANCE_LINES.append((number, line))
        print(line)
        return line
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
