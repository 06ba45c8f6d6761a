import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fieldasr.orthography import builtin_schemes, load_orthography

TEST_CONFIG = """\
# test inventory, including a digraph (ay) and two suprasegmentals
a\tvowel\ta
b\tconsonant\tb
y\tconsonant\ty
ay\tvowel\tai
s\tconsonant\ts
š\tconsonant\tsh
=\tboundary-marker\t
ˈ\tsuprasegmental\t
ˌ\tsuprasegmental\t
"""


@pytest.fixture(scope="session")
def orth():
    return load_orthography(TEST_CONFIG, name="testlang")


@pytest.fixture(scope="session")
def schemes(orth):
    return builtin_schemes(orth)
