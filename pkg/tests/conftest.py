import functools

import pytest

from gpebo.config import load_config
from gpebo.scenario import simulate


@functools.lru_cache(maxsize=None)
def _cached(name, overrides, variant):
    cfg = load_config(name, list(overrides), variant)
    return cfg, simulate(cfg)


@pytest.fixture(scope="session")
def run():
    """``run(name, *overrides, variant=None) -> (cfg, trajectory)``, cached for the session."""
    def _run(name, *overrides, variant=None):
        return _cached(name, tuple(overrides), variant)
    return _run
