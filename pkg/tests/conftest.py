import pytest

from grail.core import GoalId, Step, Trajectory
from grail.envs import BanditState, GridSpec, ReachSpec


@pytest.fixture
def grid_spec():
    return GridSpec()


@pytest.fixture
def reach_spec():
    return ReachSpec()


@pytest.fixture
def grid2_goals():
    return (GoalId.grid(0, 7, 1), GoalId.grid(1, 7, 7))


def bandit_trajectory(actions, goal=None, reached=None):
    """One-state trajectory taking ``actions`` in order."""
    steps = tuple(Step(BanditState(0), int(a)) for a in actions)
    return Trajectory(steps, BanditState(0), "bandit", goal, 0, len(steps), reached)


@pytest.fixture(autouse=True)
def user_config_dir(tmp_path, monkeypatch):
    """Point the per-user config directory at an empty temporary folder."""
    base = tmp_path / "user-config"
    monkeypatch.setenv("XDG_CONFIG_HOME", str(base))
    monkeypatch.setenv("APPDATA", str(base))
    return base / "GRAIL"
