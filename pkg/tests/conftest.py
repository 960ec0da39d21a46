from pathlib import Path

import pytest

from keq import data_path, default_ontology, default_rules
from keq.synth import load_templates

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def spec():
    return default_ontology()


@pytest.fixture(scope="session")
def tables(spec):
    return default_rules(spec)


@pytest.fixture(scope="session")
def tables_by_target(tables):
    return {t.target: t for t in tables}


@pytest.fixture(scope="session")
def templates(spec):
    return load_templates(data_path("templates"), spec)


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def spelling_map():
    from keq.transpile import load_spelling_map

    return load_spelling_map(FIXTURES / "spelling_map.txt")
