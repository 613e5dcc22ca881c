import pytest

from symdistill.corpus import generate_corpus, load_templates, stratified_split
from symdistill.teacher import supervise_dataset


@pytest.fixture(scope="session")
def templates():
    return load_templates()


@pytest.fixture(scope="session")
def small_corpus(templates):
    """6 examples per class, no supervision, no split."""
    return generate_corpus(templates, 6, 42)


@pytest.fixture(scope="session")
def small_dataset(small_corpus):
    """Oracle-supervised small corpus with an 80/20 stratified split."""
    supervised, _ = supervise_dataset(small_corpus)
    return stratified_split(supervised, 0.8, 1)


@pytest.fixture(scope="session")
def full_corpus(templates):
    return generate_corpus(templates, 32, 42)


@pytest.fixture(scope="session")
def full_dataset(full_corpus):
    supervised, _ = supervise_dataset(full_corpus)
    return stratified_split(supervised, 0.8, 1)


def pytest_terminal_summary(terminalreporter):
    from oracles import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
