import os

os.environ.setdefault("DNT_DATABASE_URL", "sqlite://")

import numpy as np
import pytest

from app.core.config import load_experiment
from app.core.rng import RngStreams

SMALL = dict(
    NUM_USERS=4,
    NUM_RBS=4,
    AGENT_HIDDEN=6,
    PREDICTOR_HIDDEN=6,
    PREDICTOR_EPOCHS=2,
    NUM_TRAJECTORIES=12,
    TRAJECTORY_LEN=10,
    HORIZON=8,
    EPOCHS=4,
    BATCH_SIZE=8,
    UPDATES_PER_EPOCH=2,
    TARGET_SYNC_PERIOD=2,
    EVAL_EPISODES=2,
)

@pytest.fixture
def make_config():
    def _make(**overrides):
        values = dict(SMALL)
        values.update(overrides)
        return load_experiment(**values)
    return _make

@pytest.fixture
def small_config(make_config):
    return make_config()

@pytest.fixture
def exact_config(make_config):
    # sem desvanecimento, com alpha folgado e usuários na cobertura toda sincronização pedida vinga
    return make_config(FADING_MODEL="none", DELAY_CAP=1e9, CONFINE_TO_COVERAGE=True)

@pytest.fixture
def rngs():
    return RngStreams(7)

@pytest.fixture
def rng():
    return np.random.default_rng(1234)
