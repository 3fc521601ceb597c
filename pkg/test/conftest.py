"""Shared fixtures of the dbalign test-suite."""
from __future__ import annotations

import os

import numpy as np
import pytest

from dbalign.model import ModelParams, ScoreTable, sample_h1, score_table

INTEGRATION_DIR: str = os.path.join(os.path.dirname(__file__), 'integration_test')


def binomial_sigma(p: float, trials: int) -> float:
    """Standard deviation of a rate estimated from trials draws with success probability p."""
    return float(np.sqrt(p * (1.0 - p) / trials))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def small_params() -> ModelParams:
    return ModelParams(n=20, d=50, rho=0.7)


@pytest.fixture
def strong_table() -> ScoreTable:
    """Score table of a pair with rho = 0.99 and a shuffled permutation; every true pair dominates."""
    sigma = (3, 0, 4, 1, 2, 7, 5, 6)
    return score_table(sample_h1(ModelParams(n=8, d=400, rho=0.99, sigma=sigma), seed=7))


@pytest.fixture
def sample_config() -> str:
    return os.path.join(INTEGRATION_DIR, 'dbalign.json')


@pytest.fixture
def clean_threads_env(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.delenv('DBALIGN_THREADS', raising=False)
