import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from avref.instructions import Vocabulary


@pytest.fixture(scope="session")
def vocab():
    return Vocabulary.build_default()


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)


def gru_params_as_lists(p):
    """GruParams -> plain nested lists for the scalar-loop oracles."""
    return {
        name: getattr(p, name).tolist()
        for name in ("wz", "uz", "bz", "wr", "ur", "br", "wh", "uh", "bh")
    }
