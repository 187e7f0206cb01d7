import pytest

from genderleak.lexicon import default_lexicon


@pytest.fixture(scope="session")
def lexicon():
    return default_lexicon()
