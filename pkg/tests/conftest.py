import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from zkgrid.field import Field


@pytest.fixture(scope="session")
def small_field():
    # smallest permitted prime field; fast for arithmetic-heavy property runs
    return Field(65537)


@pytest.fixture(scope="session")
def default_field():
    return Field()
