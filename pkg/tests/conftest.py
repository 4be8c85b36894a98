import logging
import math

import numpy as np
import pytest

from config import Config
from grid import build_grid
from model import MarketParams, PayoffSpec
from schemes import Method, Solution

LOG_SPOT = math.log(100.0)


@pytest.fixture
def market():
    return MarketParams(r=0.1, sigma=1.0, sigma_band=(0.15, 0.25), T=0.25)


@pytest.fixture
def butterfly():
    return PayoffSpec.butterfly(90.0, 110.0)


@pytest.fixture
def digital():
    return PayoffSpec.digital(100.0)


@pytest.fixture
def study_grid():
    """Coarse grid on the butterfly study domain that satisfies both mesh inequalities."""
    def build(N=64, M=320, T=0.25):
        return build_grid(LOG_SPOT - 5.0, LOG_SPOT + 5.0, M, N, T)
    return build


@pytest.fixture(autouse=True)
def isolated_config(tmp_path, monkeypatch):
    monkeypatch.setattr(Config, 'CACHE_DIR', '')
    monkeypatch.setattr(Config, 'LOG_FILE', str(tmp_path / 'gpricing.log'))
    root = logging.getLogger()
    handlers = list(root.handlers)
    yield
    for handler in list(root.handlers):
        if handler not in handlers:
            root.removeHandler(handler)
            handler.close()


def make_solution(grid, final, method=Method.IMPLICIT_X):
    """Solution holding only a payoff placeholder and the given final level."""
    final = np.asarray(final, dtype=float)
    return Solution(
        grid=grid,
        method=method,
        levels=np.vstack([np.zeros_like(final), final]),
        level_index=np.array([0, grid.N]),
        picard_counts=np.zeros(0, dtype=int),
        sup_norms=np.array([0.0, np.max(np.abs(final))]),
        boundary_values=np.array([0.0, final[-1]]),
    )
