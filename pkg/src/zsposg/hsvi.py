"""Heuristic search value iteration over the occupancy Markov game."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .bounds import HEURISTICS, LIPSCHITZ_MODES, LipschitzSchedule, SurfaceBound
from .lp import solve_terminal_game
from .model import PosgModel
from .occupancy import OccupancyState, initial_occupancy, transition
from .strategies import BehavioralStrategy, extract_behavioral


# ---------------------------------------------------------------- thresholds

def thr(epsilon: float, rho: float, schedule: LipschitzSchedule, tau: int) -> float:
    """Depth-dependent gap threshold, summed form."""
    g = schedule.discount
    total = epsilon * g ** (-tau) if g > 0 else (epsilon if tau == 0 else math.inf)
    for i in range(1, tau + 1):
        total -= 2.0 * rho * schedule(tau - i) * g ** (-i)
    return total


def thr_closed_form(epsilon: float, rho: float, schedule: LipschitzSchedule, tau: int) -> float:
    """Closed forms of the threshold.

    For gamma = 1 this is eps - rho*(rmax - rmin)*(2H + 1 - tau)*tau, exact when
    lambda_t = (H - t)*(rmax - rmin). For gamma < 1 it assumes a constant
    lambda equal to ``schedule.lam_inf``.
    """
    g = schedule.discount
    if g == 1.0:
        span = schedule.r_max - schedule.r_min
        return epsilon - rho * span * (2 * schedule.horizon + 1 - tau) * tau
    lam = schedule.lam_inf
    return g ** (-tau) * epsilon - 2.0 * rho * lam * (g ** (-tau) - 1.0) / (1.0 - g)


def rho_max(epsilon: float, schedule: LipschitzSchedule, exact: bool = True) -> float:
    """Supremum of admissible rho.

    The closed forms are (1-gamma)*eps/(2*lambda_inf) and, for gamma = 1,
    eps/((rmax-rmin)*(H+1)*H). With ``exact`` the result is also capped so that
    thr(tau) > 0 holds for the actual schedule at every stage below H.
    """
    g = schedule.discount
    span = schedule.r_max - schedule.r_min
    if g == 1.0:
        r = epsilon / (span * (schedule.horizon + 1) * schedule.horizon) if span > 0 else math.inf
    else:
        r = (1.0 - g) * epsilon / (2.0 * schedule.lam_inf) if schedule.lam_inf > 0 else math.inf
    if exact:
        for tau in range(1, schedule.horizon):
            slope = sum(2.0 * schedule(tau - i) * g ** (-i) for i in range(1, tau + 1))
            if slope > 0:
                r = min(r, epsilon * g ** (-tau) / slope)
    return r


def t_max(epsilon: float, rho: float, lam_inf: float, width: float, discount: float,
          horizon: int | None = None) -> int:
    """Upper bound on trajectory lengths for discounted problems."""
    if discount >= 1.0:
        if horizon is None:
            raise ValueError("t_max is undefined for gamma = 1 without a horizon")
        return horizon
    c = 2.0 * rho * lam_inf / (1.0 - discount)
    ratio = (epsilon - c) / (width - c)
    if ratio >= 1.0:
        return 0
    return int(math.ceil(math.log(ratio) / math.log(discount) - 1e-12))


# ---------------------------------------------------------------- solver

@dataclass
class TraceRow:
    iter: int
    elapsed_ms: float
    ub0: float
    lb0: float
    gap: float
    traj_len: int
    bagV_sizes: str
    bagW_sizes: str


TRACE_COLUMNS = list(TraceRow.__dataclass_fields__)


def _sizes(ub: SurfaceBound, lb: SurfaceBound) -> tuple[str, str]:
    v1, w1 = ub.sizes()
    v2, w2 = lb.sizes()
    return ("|".join([";".join(map(str, v1)), ";".join(map(str, v2))]),
            "|".join([";".join(map(str, w1)), ";".join(map(str, w2))]))


class _SolverBase(BaseEstimator):
    """Shared driver logic: parameter validation, budgets, trace bookkeeping."""

    def _validate(self, model: PosgModel, horizon: int | None) -> PosgModel:
        if not isinstance(model, PosgModel):
            raise TypeError("fit expects a PosgModel")
        if horizon is not None:
            model = model.with_horizon(int(horizon))
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.heuristic not in HEURISTICS:
            raise ValueError(f"heuristic must be one of {HEURISTICS}")
        if self.lipschitz not in LIPSCHITZ_MODES:
            raise ValueError(f"lipschitz must be one of {LIPSCHITZ_MODES}")
        schedule = LipschitzSchedule.for_model(model, self.lipschitz)
        rmax = rho_max(self.epsilon, schedule)
        if self.rho == "auto":
            rho = rmax / 2.0 if math.isfinite(rmax) else 0.0
        else:
            rho = float(self.rho)
            if not 0.0 <= rho < rmax:
                raise ValueError(f"rho must lie in [0, {rmax:.6g})")
        self.schedule_ = schedule
        self.rho_ = rho
        self.rho_max_ = rmax
        self.thresholds_ = np.array([thr(self.epsilon, rho, schedule, t) for t in range(model.horizon)])
        if np.any(self.thresholds_ <= 0):
            raise ValueError("thresholds must be positive; decrease rho")
        return model

    def _record(self, it: int, t0: float, traj_len: int) -> None:
        ub, lb = self._bounds0()
        vs, ws = self._bag_sizes()
        self.trace_.append(TraceRow(it, 1000.0 * (time.perf_counter() - t0), ub, lb, ub - lb,
                                    traj_len, vs, ws))
        if self.callback is not None:
            self.callback(self, self.trace_[-1])

    def _run(self, model: PosgModel) -> None:
        self.model_ = model
        self.sigma0_ = initial_occupancy(model)
        self.trace_ = []
        t0 = time.perf_counter()
        self._record(0, t0, 0)
        it = 0
        self.status_ = "converged"
        while self.trace_[-1].gap > self.thresholds_[0]:
            if it >= self.max_iter:
                self.status_ = "max_iter"
                break
            if time.perf_counter() - t0 > self.max_time:
                self.status_ = "max_time"
                break
            it += 1
            length = self._explore(self.sigma0_, None, None, time.perf_counter() - t0)
            self._record(it, t0, length)
        self.n_iter_ = it
        self.elapsed_ = time.perf_counter() - t0
        self.value_ub_, self.value_lb_ = self._bounds0()
        self.gap_ = self.value_ub_ - self.value_lb_
        self.converged_ = self.status_ == "converged"


class OMGHSVI(_SolverBase):
    """Occupancy-game HSVI with concave/convex Lipschitz surfaces.

    Parameters
    ----------
    epsilon : target gap at the initial occupancy state.
    rho : Lipschitz ball radius, or ``"auto"`` for half its admissible maximum.
    heuristic : ``"bmdp"`` (admissible) or ``"init"`` for missing components.
    lipschitz : ``"theorem"`` or ``"experimental"`` constants.
    prune_every : prune V bags after this many updates per stage (0 disables).
    max_iter, max_time : iteration and wall-clock (seconds) budgets.
    lp_method : ``"highs"`` or ``"simplex"``.
    callback : called as ``callback(solver, trace_row)`` after each iteration.

    Attributes after ``fit``: ``value_ub_``, ``value_lb_``, ``gap_``, ``n_iter_``,
    ``converged_``, ``status_``, ``trace_``, ``upper_``, ``lower_``.
    """

    def __init__(self, epsilon: float = 0.01, rho="auto", heuristic: str = "bmdp",
                 lipschitz: str = "theorem", prune_every: int = 50, max_iter: int = 1_000_000,
                 max_time: float = 86400.0, lp_method: str = "highs", callback=None):
        self.epsilon = epsilon
        self.rho = rho
        self.heuristic = heuristic
        self.lipschitz = lipschitz
        self.prune_every = prune_every
        self.max_iter = max_iter
        self.max_time = max_time
        self.lp_method = lp_method
        self.callback = callback

    def fit(self, model: PosgModel, horizon: int | None = None) -> "OMGHSVI":
        model = self._validate(model, horizon)
        self._t_start = time.perf_counter()
        self.upper_ = SurfaceBound(model, self.schedule_, self.heuristic, self.prune_every,
                                   self.lp_method)
        self.lower_ = SurfaceBound(model.mirror, self.schedule_, self.heuristic, self.prune_every,
                                   self.lp_method)
        self._run(model)
        return self

    # ------------------------------------------------------------ internals

    def _bounds0(self) -> tuple[float, float]:
        return self.bounds_at(self.sigma0_)

    def _bag_sizes(self) -> tuple[str, str]:
        return _sizes(self.upper_, self.lower_)

    def bounds_at(self, sigma: OccupancyState) -> tuple[float, float]:
        """(upper, lower) bound values at an occupancy state."""
        ub = self.upper_.eval(sigma)[0]
        lb = -self.lower_.eval(sigma.mirror())[0]
        return ub, lb

    def _explore(self, sigma: OccupancyState, prev_up, prev_lo, _elapsed) -> int:
        tau = sigma.tau
        ub, lb = self.bounds_at(sigma)
        if ub - lb <= self.thresholds_[tau]:
            return tau
        model = self.model_
        w_up = w_lo = None
        if tau < model.horizon - 1:
            beta1 = self.upper_.select(sigma)
            beta2 = self.lower_.select(sigma.mirror())
            nxt = transition(model, sigma, beta1, beta2)
            length = self._explore(nxt, (sigma, beta2), (sigma.mirror(), beta1), _elapsed)
        else:
            beta1, beta2, _ = solve_terminal_game(model, sigma, self.lp_method)
            w_up = self.upper_.add_terminal(sigma, beta2)
            w_lo = self.lower_.add_terminal(sigma.mirror(), beta1)
            length = tau + 1
        self.upper_.update(sigma, prev_up, terminal=w_up)
        self.lower_.update(sigma.mirror(), prev_lo, terminal=w_lo)
        return length

    # ------------------------------------------------------------ strategies

    @property
    def strategy_ids_(self) -> dict[str, int]:
        check_is_fitted(self, "upper_")
        return {"player1": self.lower_.eval(self.sigma0_.mirror())[1].id,
                "player2": self.upper_.eval(self.sigma0_)[1].id}

    def recursive_root(self, player: int) -> list:
        """Root mixture of the recursive solution strategy of ``player``.

        Player 2 uses the minimizing tuple of the upper bound at the initial
        state, player 1 the maximizing tuple of the lower bound.
        """
        check_is_fitted(self, "upper_")
        if player == 2:
            return list(self.upper_.eval(self.sigma0_)[1].delta)
        return list(self.lower_.eval(self.sigma0_.mirror())[1].delta)

    def strategy(self, player: int) -> BehavioralStrategy:
        """Behavioral strategy equivalent to the recursive solution strategy."""
        root = self.recursive_root(player)
        view = self.model_ if player == 2 else self.model_.mirror
        # the recursive strategy acts as player 2 of its model view
        s = extract_behavioral(root, view, 2)
        return BehavioralStrategy(player, s.rules)

    def result(self) -> dict:
        check_is_fitted(self, "upper_")
        return {"value_ub": self.value_ub_, "value_lb": self.value_lb_, "gap": self.gap_,
                "iterations": self.n_iter_, "status": self.status_,
                "strategy_ids": self.strategy_ids_}
