from pathlib import Path

import pytest

from grail.config import GOAL_PRESETS, get_config_dir, list_presets, load_config, read_preset
from grail.core import GoalId
from grail.errors import ConfigError
from grail.scoring import ScoreMetric


def test_defaults():
    config = load_config(text="")
    assert config.env == "grid"
    assert config.goals == (GoalId.grid(0, 7, 1), GoalId.grid(1, 7, 7))
    assert config.learners == ("bc",)
    assert config.metrics == (ScoreMetric("neg_mse"),)
    assert config.fractions == (0.1, 0.3, 0.5)
    assert (config.demos_per_goal, config.train_per_goal, config.test_per_goal) == (10, 7, 3)
    assert config.seeds == 10
    assert config.horizon == 50
    assert config.grid.obstacle == (7, 4)


def test_every_bundled_preset_loads():
    names = list_presets()
    assert "defaults" not in names
    assert {"grid2_biased", "grid6_suboptimal", "reach4_gaussian"} <= set(names)
    for name in names:
        config = load_config(preset=name)
        assert config.goals
        assert config.train_per_goal + config.test_per_goal == config.demos_per_goal


def test_presets_cover_every_evaluation_setting():
    names = set(list_presets())
    for goals in ("grid2", "grid4", "grid6"):
        assert {f"{goals}_optimal", f"{goals}_suboptimal"} <= names
    assert {"reach4_gaussian_low", "reach4_uniform_low", "reach4_metrics"} <= names
    suboptimal = load_config(preset="grid4_suboptimal")
    assert suboptimal.routes == "distinct"
    assert set(suboptimal.learners) == {"bc", "gail", "airl", "qlearning"}
    low = load_config(preset="reach4_uniform_low")
    assert low.noise().level == 0.1
    assert {"gail", "airl"} <= set(low.learners)
    assert [m.kind for m in load_config(preset="reach4_metrics").metrics] == ["neg_mse", "neg_w1"]
    assert all(m.tie_tolerance == 0.05 for m in load_config(preset="grid2_biased").metrics)
    assert load_config().routes == "lexicographic"


def test_bad_routes_and_tolerance_are_reported():
    with pytest.raises(ConfigError) as info:
        load_config(text="[grid]\nroutes = shortest\n\n[scoring]\ntie_tolerance = -1\n")
    assert "routes" in str(info.value)
    assert "tie_tolerance" in str(info.value)


def test_preset_named_in_text_is_overridden_by_the_text():
    config = load_config(text="[experiment]\npreset = grid2_biased\nlearners = bc\nseeds = 2\n")
    assert config.regime == "biased"
    assert config.learners == ("bc",)
    assert config.seeds == 2
    assert [m.kind for m in config.metrics] == ["neg_mse", "neg_kl"]
    assert "regime = biased" in config.text


def test_grid6_goal_order():
    config = load_config(text="[experiment]\ngoals = grid6\n")
    assert [g.cell for g in config.goals] == list(GOAL_PRESETS["grid6"])
    assert [g.index for g in config.goals] == list(range(6))


def test_reach_preset():
    config = load_config(preset="reach4_gaussian")
    assert config.env == "reach"
    assert [g.label for g in config.goals] == ["r_0", "r_1", "r_2", "r_3"]
    assert config.noise().kind == "gaussian"
    assert config.noise().level > 0
    assert load_config(preset="reach4_optimal").noise() is None


def test_every_problem_is_reported_at_once():
    text = (
        "[experiment]\n"
        "demos_per_goal = 10\ntrain_per_goal = 8\ntest_per_goal = 3\n"
        "fractions = 0.0, 0.5\n"
        "learners = bc, dagger\n"
        "metrics = mse, hamming\n"
        "seeds = 0\n"
    )
    with pytest.raises(ConfigError) as info:
        load_config(text=text)
    message = str(info.value)
    for fragment in ("train_per_goal (8)", "fractions", "dagger", "hamming", "seeds"):
        assert fragment in message


@pytest.mark.parametrize("text", [
    "[experiment]\nfractions = 1.5\n",
    "[experiment]\nenv = reach\ngoals = grid2\n",
    "[experiment]\ngoals = g_7_4\n",
    "[experiment]\nregime = gaussian\n",
    "[experiment]\nseeds = many\n",
    "[bias]\ng_7_1 = diagonal\n",
    "[scoring]\nepsilon = 0\n",
])
def test_invalid_values(text):
    with pytest.raises(ConfigError):
        load_config(text=text)


def test_unparsable_text_and_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(text="experiment without a header")
    with pytest.raises(ConfigError):
        load_config(path=tmp_path / "missing.ini")


def test_unknown_preset():
    with pytest.raises(ConfigError) as info:
        read_preset("grid9_nowhere")
    assert "grid2_biased" in str(info.value)


def test_user_config_sets_output_dir_and_workers(user_config_dir):
    assert Path(get_config_dir()) == user_config_dir
    user_config_dir.mkdir(parents=True)
    (user_config_dir / "config.ini").write_text("[grail]\noutput_dir = /data/out\nworkers = 3\n", encoding="utf-8")
    config = load_config(text="")
    assert config.output_dir == Path("/data/out")
    assert config.workers == 3
    assert load_config(text="[experiment]\nworkers = 1\n").workers == 1


def test_with_output_dir_and_summary(tmp_path):
    config = load_config(preset="grid2_biased").with_output_dir(tmp_path)
    assert config.output_dir == tmp_path
    summary = config.summary()
    assert summary["goals"] == ["g_7_1", "g_7_7"]
    assert summary["metrics"][1] == {"metric": "neg_kl", "epsilon": 0.01, "kl_direction": "policy_first"}
