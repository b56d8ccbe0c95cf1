import json

import pytest

from sarp.corpus import generate_synthetic_corpus
from sarp.simworld import EnvironmentMap, builtin_path, load_environment


@pytest.fixture(scope="session")
def hallway():
    return load_environment("hallway")


@pytest.fixture(scope="session")
def hallway_corpus():
    with open(builtin_path("hallway_corpus.json")) as fh:
        return generate_synthetic_corpus(json.load(fh), 0)


def line_env(n, start=0, objects=(), target="banana"):
    """``n`` locations 3 m apart in a line."""
    return EnvironmentMap.from_dict({
        "name": f"line{n}",
        "locations": [[3.0 * i, 0.0] for i in range(n)],
        "adjacency": [[j for j in (i - 1, i + 1) if 0 <= j < n] for i in range(n)],
        "start": start,
        "objects": [{"label": l, "location": loc} for l, loc in objects],
        "target_placement": {"label": target, "distribution": "uniform"},
    })
