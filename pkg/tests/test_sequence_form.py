import numpy as np
import pytest

from test_strategies import _pure_strategies
from zsposg.benchmarks import adversarial_tiger
from zsposg.lp import bayesian_game_lp
from zsposg.model import PosgModel, random_model
from zsposg.sequence_form import build_sequence_form, solve_exact
from zsposg.strategies import best_response, evaluate_profile


def test_pennies(pennies):
    ex = solve_exact(pennies)
    assert ex.value == pytest.approx(0.0, abs=1e-9)
    np.testing.assert_allclose(ex.strategy1.rules[0].row(0), [0.5, 0.5], atol=1e-9)


def test_zero_reward():
    P = np.full((2, 2, 2, 2, 1, 1), 0.5)
    m = PosgModel(("x", "y"), (("a", "b"), ("c", "d")), (("o",), ("o",)), P,
                  np.zeros((2, 2, 2)), 3, 1.0, np.array([0.5, 0.5]))
    assert solve_exact(m).value == 0.0


@pytest.mark.parametrize("H", [1, 2, 3])
def test_blind_sequence_counts(H):
    P = np.full((1, 3, 2, 1, 1, 1), 1.0)
    m = PosgModel(("s",), (("a", "b", "c"), ("d", "e")), (("o",), ("o",)), P,
                  np.zeros((1, 3, 2)), H, 1.0, np.ones(1))
    sf = build_sequence_form(m)
    # every nonempty sequence ends in an action: sum over stages of |A|^(tau+1), plus the root
    assert sf.idx1.size == 1 + sum(3 ** (t + 1) for t in range(H))
    assert sf.idx2.size == 1 + sum(2 ** (t + 1) for t in range(H))
    assert sf.E.shape[0] == 1 + sum(3 ** t for t in range(H))


def test_single_stage_is_matrix_game():
    rng = np.random.default_rng(4)
    for _ in range(5):
        m = random_model(rng, 3, (3, 2), (2, 2), horizon=1)
        G = np.einsum("s,sab->ab", m.initial_belief, m.reward)
        _, v = bayesian_game_lp(G, 1, 3, 1, 2)
        assert solve_exact(m).value == pytest.approx(v, abs=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_against_normal_form(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng, 2, (2, 2), (2, 2), horizon=2, discount=0.9)
    s1 = list(_pure_strategies(m, 1))
    s2 = list(_pure_strategies(m, 2))
    G = np.array([[evaluate_profile(m, a, b) for b in s2] for a in s1])
    _, v = bayesian_game_lp(G, 1, len(s1), 1, len(s2))
    assert solve_exact(m).value == pytest.approx(v, abs=1e-7)


@pytest.mark.parametrize("seed", range(4))
def test_self_consistency_and_saddle(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng, 3, (2, 3), (2, 2), horizon=3, sparsity=0.3)
    ex = solve_exact(m)
    assert evaluate_profile(m, ex.strategy1, ex.strategy2) == pytest.approx(ex.value, abs=1e-6)
    assert best_response(m, ex.strategy2)[1] <= ex.value + 1e-6
    assert best_response(m, ex.strategy1)[1] >= ex.value - 1e-6


def test_plans_satisfy_flow(rng):
    m = random_model(rng, 2, (2, 2), (2, 2), horizon=3)
    sf = build_sequence_form(m)
    ex = solve_exact(m)
    e = np.zeros(sf.E.shape[0])
    e[0] = 1.0
    np.testing.assert_allclose(sf.E @ ex.x, e, atol=1e-9)
    np.testing.assert_allclose(sf.F @ ex.y, np.eye(1, sf.F.shape[0], 0).ravel(), atol=1e-9)


def test_adversarial_tiger_value():
    ex = solve_exact(adversarial_tiger(2))
    assert ex.value == pytest.approx(-0.156667, abs=1e-6)
    assert evaluate_profile(adversarial_tiger(2), ex.strategy1, ex.strategy2) == pytest.approx(ex.value, abs=1e-6)
