import dataclasses

import pytest


@pytest.fixture(scope="session")
def train_cache():
    """Trained parameter sets shared across acceptance tests, keyed by
    the exact run configuration."""
    return {}


def cache_key(rc) -> tuple:
    return tuple(sorted(dataclasses.asdict(rc).items()))
