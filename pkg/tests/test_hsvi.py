import math

import numpy as np
import pytest
from sklearn.base import clone

from zsposg.benchmarks import mabc
from zsposg.bounds import LipschitzSchedule
from zsposg.hsvi import TRACE_COLUMNS, OMGHSVI, rho_max, t_max, thr, thr_closed_form
from zsposg.model import PosgModel, random_model
from zsposg.sequence_form import solve_exact


def _doubled(H, gamma, lo, hi):
    return LipschitzSchedule(H, gamma, lo, hi, values=[(H - t) * (hi - lo) for t in range(H + 1)])


def test_thr_at_root():
    s = LipschitzSchedule(4, 0.8, -1, 2)
    assert thr(0.37, 0.01, s, 0) == 0.37


@pytest.mark.parametrize("H", range(1, 7))
def test_thr_closed_form_gamma_one(H):
    s = _doubled(H, 1.0, -1.5, 2.0)
    rho = rho_max(0.1, s, exact=False) / 2
    for tau in range(H):
        assert thr(0.1, rho, s, tau) == pytest.approx(thr_closed_form(0.1, rho, s, tau), abs=1e-12)


def test_thr_theorem_schedule_is_half_the_closed_form_penalty():
    H, eps, rho = 4, 0.1, 1e-3
    s = LipschitzSchedule(H, 1.0, 0.0, 1.0)
    for tau in range(H):
        penalty = eps - thr(eps, rho, s, tau)
        assert penalty == pytest.approx((eps - thr_closed_form(eps, rho, s, tau)) / 2, abs=1e-15)


def test_thr_discounted_constant_lambda():
    s = LipschitzSchedule(5, 0.9, 0, 1, values=[0.7] * 5 + [0.0])
    for tau in range(5):
        direct = 0.9 ** -tau * 0.05 - sum(2 * 1e-3 * 0.7 * 0.9 ** -i for i in range(1, tau + 1))
        assert thr(0.05, 1e-3, s, tau) == pytest.approx(direct, abs=1e-15)
        assert thr_closed_form(0.05, 1e-3, s, tau) == pytest.approx(direct, abs=1e-12)


def test_rho_max_examples():
    s = LipschitzSchedule(3, 1.0, -1, 1)
    assert rho_max(0.01, s, exact=False) == pytest.approx(0.01 / 24)
    s = LipschitzSchedule(3, 0.5, 0, 1, values=[1.0, 1.0, 1.0, 0.0])
    assert rho_max(1.0, s, exact=False) == pytest.approx(0.25)
    assert rho_max(1e-12, LipschitzSchedule(3, 1.0, -1, 1)) < 1e-12


@pytest.mark.parametrize("gamma", [1.0, 0.95, 0.5])
@pytest.mark.parametrize("mode", ["theorem", "experimental"])
def test_half_rho_keeps_thresholds_positive(gamma, mode):
    for H in range(1, 7):
        s = LipschitzSchedule(H, gamma, -1, 1, mode)
        rho = rho_max(0.01, s) / 2
        assert all(thr(0.01, rho, s, t) > 0 for t in range(H))


def test_t_max_examples():
    assert t_max(0.1, 0.0, 1.0, 1.0, 0.9) == 22
    assert t_max(0.1, 0.0, 1.0, 0.1, 0.9) == 0
    assert t_max(0.2, 0.0, 1.0, 0.8, 0.5) == math.ceil(math.log(0.25) / math.log(0.5))
    assert t_max(0.1, 0.0, 1.0, 1.0, 1.0, horizon=4) == 4
    with pytest.raises(ValueError):
        t_max(0.1, 0.0, 1.0, 1.0, 1.0)


def test_estimator_params():
    s = OMGHSVI(epsilon=0.02, heuristic="init")
    assert s.get_params()["epsilon"] == 0.02
    s.set_params(epsilon=0.5)
    assert clone(s).epsilon == 0.5
    with pytest.raises(ValueError):
        OMGHSVI(epsilon=-1).fit(mabc(1))
    with pytest.raises(ValueError):
        OMGHSVI(heuristic="nope").fit(mabc(1))
    with pytest.raises(ValueError):
        OMGHSVI(rho=1.0).fit(mabc(2))
    with pytest.raises(TypeError):
        OMGHSVI().fit("mabc")


def test_zero_reward_converges_immediately():
    P = np.full((2, 2, 2, 2, 1, 1), 0.5)
    m = PosgModel(("x", "y"), (("a", "b"), ("c", "d")), (("o",), ("o",)), P,
                  np.zeros((2, 2, 2)), 3, 1.0, np.array([0.5, 0.5]))
    s = OMGHSVI().fit(m)
    assert s.converged_ and s.n_iter_ == 0
    assert s.value_ub_ == s.value_lb_ == 0.0
    assert len(s.trace_) == 1


def test_no_choice_game():
    m = random_model(np.random.default_rng(2), 3, (1, 1), (2, 2), horizon=2)
    s = OMGHSVI(epsilon=1e-9).fit(m)
    assert s.converged_ and s.n_iter_ <= 1
    assert s.gap_ <= 1e-9


def test_pennies(pennies):
    s = OMGHSVI(epsilon=0.01).fit(pennies)
    v = solve_exact(pennies).value
    assert s.converged_ and s.gap_ <= 0.01
    assert s.value_lb_ - 1e-6 <= v <= s.value_ub_ + 1e-6


@pytest.mark.parametrize("seed", range(3))
def test_trace_monotone(seed):
    m = random_model(np.random.default_rng(seed), 2, (2, 2), (2, 2), horizon=3)
    s = OMGHSVI(epsilon=0.01, max_iter=200).fit(m)
    ub = np.array([r.ub0 for r in s.trace_])
    lb = np.array([r.lb0 for r in s.trace_])
    assert np.all(np.diff(ub) <= 1e-9) and np.all(np.diff(lb) >= -1e-9)
    assert np.all(np.diff(ub - lb) <= 1e-9)
    assert [r.iter for r in s.trace_] == list(range(len(s.trace_)))
    assert list(vars(s.trace_[0])) == TRACE_COLUMNS
    v = solve_exact(m).value
    assert s.value_lb_ - 1e-6 <= v <= s.value_ub_ + 1e-6


def test_guard_soundness(monkeypatch):
    m = random_model(np.random.default_rng(4), 2, (2, 2), (2, 2), horizon=3)
    s = OMGHSVI(epsilon=0.01, max_iter=30)
    seen = []
    original = OMGHSVI._explore

    def spy(self, sigma, prev_up, prev_lo, elapsed):
        ub, lb = self.bounds_at(sigma)
        seen.append((sigma.tau, ub - lb, self.thresholds_[sigma.tau]))
        return original(self, sigma, prev_up, prev_lo, elapsed)

    monkeypatch.setattr(OMGHSVI, "_explore", spy)
    s.fit(m)
    # a call that passes the guard must be followed by its successor or a terminal solve
    deep = [(t, g, th) for t, g, th in seen if g > th]
    assert deep and all(t < m.horizon for t, _, _ in deep)
    starts = [g for t, g, th in seen if t == 0]
    assert all(g > s.thresholds_[0] for g in starts)


def test_budget_status():
    s = OMGHSVI(epsilon=1e-4, max_iter=2).fit(mabc(3))
    assert s.status_ == "max_iter" and not s.converged_ and s.n_iter_ == 2
    s = OMGHSVI(epsilon=1e-4, max_time=0.0).fit(mabc(3))
    assert s.status_ == "max_time"


def test_result_and_strategies():
    s = OMGHSVI(epsilon=0.01).fit(mabc(2))
    res = s.result()
    assert set(res) >= {"value_ub", "value_lb", "gap", "iterations", "strategy_ids"}
    assert set(res["strategy_ids"]) == {"player1", "player2"}
    assert s.strategy(1).player == 1 and len(s.strategy(2).rules) == 2


def test_horizon_override():
    s = OMGHSVI(epsilon=0.01).fit(mabc(3), horizon=1)
    assert s.model_.horizon == 1
    assert s.value_ub_ == pytest.approx(0.5, abs=0.01)
