import numpy as np
import pytest

from neglect_mapper.domain import FovPoint, Mode, SceneId, SessionConfig, StopRule
from neglect_mapper.gp_core import Hyperparams, condition


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def basic_config():
    return SessionConfig(
        mode=Mode.ASSESSMENT,
        scene=SceneId.TABLE,
        n_stimuli=12,
        stop=StopRule.fixed_budget(12),
        seed=7,
    )


def make_model(x, y, theta=None):
    """Condition a model on raw points without fitting, for fast test setup."""
    if theta is None:
        theta = Hyperparams(sigma_f2=0.25, length_scale=8.0, sigma_eps2=1e-4)
    pts = [FovPoint(float(a), float(e)) for a, e in x]
    return condition(pts, np.asarray(y, dtype=float), theta)
