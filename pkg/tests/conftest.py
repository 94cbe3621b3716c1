from __future__ import annotations

import pytest

from rewritedetect.corpus import synth_corpus
from rewritedetect.llm import MockRewriter, MockRewriterConfig
from rewritedetect.prompts import builtin_catalog

import helpers


@pytest.fixture(scope="session")
def catalog():
    return builtin_catalog()


@pytest.fixture
def mock_rewriter():
    return MockRewriter(MockRewriterConfig(seed=7))


@pytest.fixture
def small_corpus():
    return synth_corpus(40, 0.5, seed=3)


def pytest_terminal_summary(terminalreporter):
    if helpers.ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in helpers.ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
