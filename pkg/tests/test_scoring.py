import math

import numpy as np
import pytest

from grail.core import ContinuousAction, Step
from grail.envs import BanditState, ReachState
from grail.errors import ContractViolation, UnsupportedMetric
from grail.learners import GaussianMlpPolicy, QPolicy, QTable, StateIndex, TabularPolicy
from grail.scoring import ScoreMetric, score, score_kl, score_maxutil, score_mse, score_w1, supports
from grail.tinynn import Mlp

STATES = [BanditState(i) for i in range(3)]


def _tabular(rows):
    return TabularPolicy(StateIndex(STATES[:len(rows)]), np.asarray(rows, dtype=float))


def _prefix(actions):
    return [Step(STATES[i], a) for i, a in enumerate(actions)]


def _gaussian(mean, log_scale=-5.0):
    net = Mlp((3, 3))
    net.biases[0][...] = mean
    return GaussianMlpPolicy(net, np.full(3, log_scale))


def test_exact_match_scores_zero():
    policy = _tabular([[0, 0, 1, 0], [1, 0, 0, 0]])
    prefix = _prefix([2, 0])
    assert score_mse(prefix, policy) == 0.0
    assert score_w1(prefix, policy) == 0.0
    assert score_kl(prefix, policy, epsilon=1e-12) == pytest.approx(0.0, abs=1e-9)


def test_uniform_policy_mse():
    policy = _tabular([[0.25] * 4])
    assert score_mse(_prefix([1]), policy) == pytest.approx(-0.75)


def test_continuous_mse_against_zero_mean():
    policy = _gaussian([0.0, 0.0, 0.0])
    prefix = [Step(ReachState(0.0, 0.0, 0.0), ContinuousAction(0.3, 0.0, 0.4))]
    assert score_mse(prefix, policy) == pytest.approx(-0.25)


def test_kl_against_uniform_policy():
    policy = _tabular([[0.25] * 4])
    expected = 0.25 * math.log(0.25 / 0.97) + 0.75 * math.log(0.25 / 0.01)
    assert score_kl(_prefix([0]), policy, epsilon=0.01) == pytest.approx(-expected)
    assert expected == pytest.approx(2.075, abs=1e-3)


def test_kl_pseudo_first_direction_differs():
    policy = _tabular([[0.25] * 4])
    reverse = 0.97 * math.log(0.97 / 0.25) + 3 * 0.01 * math.log(0.01 / 0.25)
    assert score_kl(_prefix([0]), policy, 0.01, "pseudo_first") == pytest.approx(-reverse)


def test_kl_is_summed_over_steps_and_checks_epsilon():
    policy = _tabular([[0.25] * 4, [0.25] * 4])
    assert score_kl(_prefix([0, 1]), policy) == pytest.approx(2 * score_kl(_prefix([0]), policy))
    with pytest.raises(ContractViolation):
        score_kl(_prefix([0]), policy, epsilon=0.25)


def test_kl_rejects_continuous_policies():
    with pytest.raises(UnsupportedMetric):
        score_kl([Step(ReachState(0.0, 0.0, 0.0), ContinuousAction(0.0, 0.0, 0.0))], _gaussian([0.0] * 3))


def test_w1_discrete_point_mass_elsewhere():
    policy = _tabular([[1, 0, 0, 0]])
    assert score_w1(_prefix([3]), policy) == pytest.approx(-2.0)


def test_w1_continuous_degenerate_scale():
    observed = ContinuousAction(0.2, -0.4, 0.1)
    policy = _gaussian(list(observed), log_scale=-5.0)
    prefix = [Step(ReachState(0.0, 0.0, 0.0), observed)]
    value = score_w1(prefix, policy, samples=32, rng=np.random.default_rng(0))
    assert -0.05 < value <= 0.0
    with pytest.raises(ContractViolation):
        score_w1(prefix, policy, samples=4)


def test_scores_are_never_positive():
    gen = np.random.default_rng(3)
    for _ in range(50):
        rows = gen.dirichlet(np.ones(4), size=3)
        policy = _tabular(rows)
        prefix = _prefix(gen.integers(0, 4, 3).tolist())
        assert score_mse(prefix, policy) <= 0.0
        assert score_kl(prefix, policy) <= 1e-12
        assert score_w1(prefix, policy) <= 0.0


def test_agreeing_policies_score_equally():
    rows = [[0.1, 0.2, 0.3, 0.4], [0.4, 0.3, 0.2, 0.1]]
    first, second = _tabular(rows), _tabular(rows)
    prefix = _prefix([1, 3])
    assert score_kl(prefix, first) == score_kl(prefix, second)


def test_maxutil_needs_q_values():
    table = QTable(StateIndex(STATES[:1]), np.array([[0.0, 0.5, 1.0, 0.2]]), np.zeros((1, 4), dtype=np.int64))
    policy = QPolicy(table)
    assert score_maxutil(_prefix([2]), policy) == 0.0
    assert score_maxutil(_prefix([1]), policy) == pytest.approx(-0.5)
    assert policy.calls == 2
    with pytest.raises(UnsupportedMetric):
        score_maxutil(_prefix([0]), _tabular([[0.25] * 4]))


def test_scoring_counts_one_evaluation_per_step():
    policy = _tabular([[0.25] * 4] * 3)
    score_mse(_prefix([0, 1, 2]), policy)
    assert policy.calls == 3


def test_empty_prefix_and_bad_actions_are_rejected():
    policy = _tabular([[0.25] * 4])
    with pytest.raises(ContractViolation):
        score_mse([], policy)
    with pytest.raises(ContractViolation):
        score_mse(_prefix([5]), policy)


def test_metric_names_and_support():
    metric = ScoreMetric.from_name("kl", epsilon=0.02)
    assert metric.kind == "neg_kl"
    assert metric.short_name == "kl"
    assert metric.describe() == {"metric": "neg_kl", "epsilon": 0.02, "kl_direction": "policy_first"}
    assert ScoreMetric.from_name("neg_mse").kind == "neg_mse"
    assert not supports(ScoreMetric("neg_kl"), "mlp")
    assert supports(ScoreMetric("neg_maxutil"), "qtable")
    assert not supports(ScoreMetric("neg_maxutil"), "tabular")
    with pytest.raises(ContractViolation):
        ScoreMetric("neg_l2")
    with pytest.raises(UnsupportedMetric):
        score(_prefix([0]), _tabular([[0.25] * 4]), ScoreMetric("neg_maxutil"))
    assert score(_prefix([0]), _tabular([[0.25] * 4]), ScoreMetric("neg_mse")) == pytest.approx(-0.75)
