import json
from importlib import resources

import numpy as np
import pytest
from hypothesis import settings

from glsteiner.geometry import TerminalSet

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

SQ3 = np.sqrt(3.0)


def four_points() -> TerminalSet:
    with resources.files("glsteiner").joinpath("data", "four_points.json").open() as fh:
        return TerminalSet.from_json(json.load(fh))


def random_rotation(rng, n=3):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def fourpts():
    return four_points()
