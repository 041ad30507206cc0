"""HSVI variant relying on Lipschitz continuity only: L1 cone bounds and BiDOO."""
from __future__ import annotations

import time
from dataclasses import dataclass
from itertools import count

import numpy as np
from sklearn.utils.validation import check_is_fitted

from .bounds import LipschitzSchedule, horizon_factor, optimistic_mdp_values
from .doo import BiDooResult, bidoo
from .hsvi import _SolverBase, _sizes
from .lp import solve_terminal_game
from .model import PROB_ZERO, PosgModel
from .occupancy import (DecisionRule, OccupancyState, _expanded, entry_rewards,
                        successor_codes, transition)
from .strategies import BehavioralStrategy

DOO_BATCH = 32


def _aligned(keys: np.ndarray, vals: np.ndarray, query: np.ndarray) -> np.ndarray:
    if len(keys) == 0:
        return np.zeros(len(query))
    pos = np.minimum(np.searchsorted(keys, query), len(keys) - 1)
    return np.where(keys[pos] == query, vals[pos], 0.0)


@dataclass(eq=False)
class Cone:
    """Upper-bounding cone v + lambda_tau * ||anchor - sigma||_1."""

    id: int
    tau: int
    keys: np.ndarray
    vals: np.ndarray
    v: float
    beta: DecisionRule
    next: "Cone | None"
    anchor: OccupancyState

    def distance(self, keys: np.ndarray, p: np.ndarray) -> float:
        a = _aligned(self.keys, self.vals, keys)
        return float(np.abs(p - a).sum() + (self.vals.sum() - a.sum()))


class _LocalGame:
    """Vectorized Q(sigma, x, y) = r(sigma, x, y) + gamma * V_{tau+1}(T(sigma, x, y))."""

    def __init__(self, bound: "ConeBound", sigma: OccupancyState):
        m = bound.model
        t1 = sigma.tau + 1
        self.gamma = m.discount
        self.hist1, self.marg1, self.inv1 = sigma.rows()
        self.hist2, self.inv2 = np.unique(sigma.h2, return_inverse=True)
        self.marg2 = np.bincount(self.inv2, weights=sigma.p, minlength=len(self.hist2))
        R = sigma.p[:, None, None] * entry_rewards(m, sigma)
        kr, b1, b2 = np.indices(R.shape)
        self.rw = R.ravel()
        self.rr1, self.rb1 = self.inv1[kr].ravel(), b1.ravel()
        self.rr2, self.rb2 = self.inv2[kr].ravel(), b2.ravel()
        norm, un = _expanded(m, sigma)
        base = sigma.p[:, None, None, None, None] * norm
        c1, c2 = successor_codes(m, sigma)
        k, a1, a2, _, _ = np.indices(norm.shape)
        keep = base > PROB_ZERO
        keys = c1[keep] * np.int64(bound.n_codes2(t1)) + c2[keep]
        order = np.argsort(keys, kind="stable")
        self.keys = keys[order]
        self.base = base[keep][order]
        kk = k[keep][order]
        self.r1 = self.inv1[kk]
        self.r2 = self.inv2[kk]
        self.a1 = a1[keep][order]
        self.a2 = a2[keep][order]
        self.lam = bound.schedule(t1)
        # the initial bound is linear: sum_e p_e * b_e . V_mdp
        self.hcoef = (un[keep][order] @ bound.v_mdp[t1]) / norm[keep][order]
        self.cones = list(bound.cones[t1])
        if self.cones:
            self.A = np.array([_aligned(c.keys, c.vals, self.keys) for c in self.cones])
            self.out = np.array([c.vals.sum() for c in self.cones]) - self.A.sum(axis=1)
            self.cv = np.array([c.v for c in self.cones])

    def successor(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """Successor weights; a stack of Y gives one row per y."""
        return self.base * X[self.r1, self.a1] * Y[..., self.r2, self.a2]

    def future(self, p: np.ndarray) -> tuple[float, Cone | None]:
        best, arg = float(p @ self.hcoef), None
        if self.cones:
            vals = self.cv + self.lam * (np.abs(p[None, :] - self.A).sum(axis=1) + self.out)
            i = int(np.argmin(vals))
            if vals[i] < best - 1e-13:
                best, arg = float(vals[i]), self.cones[i]
        return best, arg

    def future_many(self, P: np.ndarray) -> np.ndarray:
        vals = P @ self.hcoef
        if self.cones:
            dist = np.abs(P[:, None, :] - self.A[None]).sum(axis=2) + self.out
            vals = np.minimum(vals, (self.cv + self.lam * dist).min(axis=1))
        return vals

    def reward(self, X: np.ndarray, Y: np.ndarray):
        return (X[self.rr1, self.rb1] * Y[..., self.rr2, self.rb2]) @ self.rw

    def __call__(self, X: np.ndarray, Y: np.ndarray):
        if Y.ndim == 3:
            return self.reward(X, Y) + self.gamma * self.future_many(self.successor(X, Y))
        return float(self.reward(X, Y)) + self.gamma * self.future(self.successor(X, Y))[0]


class ConeBound:
    """Upper bound min(initial bound, cones) for the maximizer of ``model``.

    The initial bound is the optimistic MDP relaxation sum_k p_k b_k . V_mdp,
    which is linear in the occupancy state and holds against any opponent.
    """

    def __init__(self, model: PosgModel, schedule: LipschitzSchedule, max_evals: int = 200_000):
        self.model = model
        self.H = model.horizon
        self.schedule = schedule
        self.v_mdp = optimistic_mdp_values(model, self.H)
        self.v_max = np.array([horizon_factor(self.H, t, model.discount) * model.r_max
                               for t in range(self.H + 1)])
        self.max_evals = max_evals
        self.cones: list[list[Cone]] = [[] for _ in range(self.H)]
        self.archive: list[list[Cone]] = [[] for _ in range(self.H)]
        self._ids = count()
        self.doo_evals = 0

    def n_codes2(self, tau: int) -> int:
        nA2, nZ2 = self.model.n_actions[1], self.model.n_observations[1]
        return (nA2 * nZ2) ** tau

    def _keys(self, sigma: OccupancyState) -> np.ndarray:
        return sigma.h1 * np.int64(self.n_codes2(sigma.tau)) + sigma.h2

    def initial(self, sigma: OccupancyState) -> float:
        return float(sigma.p @ (sigma.beliefs @ self.v_mdp[sigma.tau]))

    def eval(self, sigma: OccupancyState) -> tuple[float, Cone | None]:
        """Bound value at ``sigma`` and the minimizing cone (None for the initial bound)."""
        if sigma.tau >= self.H:
            return 0.0, None
        best, arg = self.initial(sigma), None
        keys = self._keys(sigma)
        lam = self.schedule(sigma.tau)
        for c in self.cones[sigma.tau]:
            val = c.v + lam * c.distance(keys, sigma.p)
            if val < best - 1e-13:
                best, arg = val, c
        return best, arg

    def lipschitz_q(self, tau: int) -> float:
        span = self.model.r_max - self.model.r_min
        return 0.5 * span + self.model.discount * self.schedule(tau + 1)

    def solve_local(self, sigma: OccupancyState, eps1: float, eps2: float
                    ) -> tuple[BiDooResult, _LocalGame]:
        game = _LocalGame(self, sigma)
        nA1, nA2 = self.model.n_actions
        res = bidoo(game, (len(game.hist1), nA1), game.marg1, (len(game.hist2), nA2), game.marg2,
                    self.lipschitz_q(sigma.tau), eps1, eps2, self.max_evals, batch=DOO_BATCH)
        self.doo_evals += res.n_evals
        return res, game

    def select(self, sigma: OccupancyState, eps1: float, eps2: float) -> DecisionRule:
        res, game = self.solve_local(sigma, eps1, eps2)
        return DecisionRule.from_rows(game.hist1, res.x, fallback="uniform")

    def update(self, sigma: OccupancyState, eps1: float, eps2: float) -> Cone | None:
        res, game = self.solve_local(sigma, eps1, eps2)
        _, nxt = game.future(game.successor(res.x, res.y))
        beta = DecisionRule.from_rows(game.hist2, res.y, fallback="uniform")
        return self.add(sigma, min(res.bound, self.v_max[sigma.tau]), beta, nxt)

    def add(self, sigma: OccupancyState, v: float, beta: DecisionRule, nxt: Cone | None
            ) -> Cone | None:
        """Insert a cone unless the bound already matches it at its anchor; drop
        cones the new one dominates."""
        tau = sigma.tau
        if self.eval(sigma)[0] <= v:
            return None
        keys = self._keys(sigma)
        cone = Cone(next(self._ids), tau, keys, sigma.p.copy(), float(v), beta, nxt, sigma)
        lam = self.schedule(tau)
        live = []
        for c in self.cones[tau]:
            if cone.v + lam * cone.distance(c.keys, c.vals) <= c.v:
                self.archive[tau].append(c)
            else:
                live.append(c)
        live.append(cone)
        self.cones[tau] = live
        return cone

    def sizes(self) -> tuple[list[int], list[int]]:
        return [len(c) for c in self.cones], [0] * self.H


class LipschitzHSVI(_SolverBase):
    """HSVI with cone bounds and BiDOO local-game solving.

    Parameters mirror :class:`OMGHSVI`; ``doo_ratio`` sets each DOO tolerance
    to that fraction of the stage threshold, ``max_evals`` caps each DOO run.
    """

    def __init__(self, epsilon: float = 0.05, rho="auto", heuristic: str = "bmdp",
                 lipschitz: str = "theorem", doo_ratio: float = 0.5, max_evals: int = 200_000,
                 max_iter: int = 1_000_000, max_time: float = 86400.0, lp_method: str = "highs",
                 callback=None):
        self.epsilon = epsilon
        self.rho = rho
        self.heuristic = heuristic
        self.lipschitz = lipschitz
        self.doo_ratio = doo_ratio
        self.max_evals = max_evals
        self.max_iter = max_iter
        self.max_time = max_time
        self.lp_method = lp_method
        self.callback = callback

    def fit(self, model: PosgModel, horizon: int | None = None) -> "LipschitzHSVI":
        model = self._validate(model, horizon)
        if max(model.n_actions) > 4:
            raise ValueError("the Lipschitz variant supports at most 4 actions per player")
        if not 0 < self.doo_ratio < 1:
            raise ValueError("doo_ratio must lie in (0, 1)")
        self.upper_ = ConeBound(model, self.schedule_, self.max_evals)
        self.lower_ = ConeBound(model.mirror, self.schedule_, self.max_evals)
        self._run(model)
        return self

    def _bounds0(self) -> tuple[float, float]:
        return self.bounds_at(self.sigma0_)

    def _bag_sizes(self) -> tuple[str, str]:
        return _sizes(self.upper_, self.lower_)

    def bounds_at(self, sigma: OccupancyState) -> tuple[float, float]:
        return self.upper_.eval(sigma)[0], -self.lower_.eval(sigma.mirror())[0]

    def _explore(self, sigma: OccupancyState, _prev_up, _prev_lo, _elapsed) -> int:
        tau = sigma.tau
        ub, lb = self.bounds_at(sigma)
        if ub - lb <= self.thresholds_[tau]:
            return tau
        model = self.model_
        if tau == model.horizon - 1:
            beta1, beta2, v = solve_terminal_game(model, sigma, self.lp_method)
            self.upper_.add(sigma, v, beta2, None)
            self.lower_.add(sigma.mirror(), -v, beta1, None)
            return tau + 1
        # each DOO level may use a share of the headroom thr(tau) - gamma thr(tau+1)
        nxt = self.thresholds_[tau + 1] if tau + 1 < model.horizon else 0.0
        e = self.doo_ratio * (self.thresholds_[tau] - model.discount * nxt) / 2.0
        beta1 = self.upper_.select(sigma, e, e)
        beta2 = self.lower_.select(sigma.mirror(), e, e)
        length = self._explore(transition(model, sigma, beta1, beta2), None, None, _elapsed)
        self.upper_.update(sigma, e, e)
        self.lower_.update(sigma.mirror(), e, e)
        return length

    def strategy(self, player: int) -> BehavioralStrategy:
        """Behavioral strategy following the chain of successor cones from the
        minimizing cone at the initial state; uniform once the chain reaches
        the initial surface.

        The chain commits to one successor cone per stage, so its worst-case
        value is not bounded by ``value_ub_`` in general.
        """
        check_is_fitted(self, "upper_")
        bound, sigma = (self.upper_, self.sigma0_) if player == 2 else \
            (self.lower_, self.sigma0_.mirror())
        n = self.model_.n_actions[player - 1]
        cone = bound.eval(sigma)[1]
        rules = []
        for _ in range(self.model_.horizon):
            if cone is None:
                rules.append(DecisionRule.uniform(n))
            else:
                rules.append(cone.beta)
                cone = cone.next
        return BehavioralStrategy(player, rules)

    def result(self) -> dict:
        check_is_fitted(self, "upper_")
        return {"value_ub": self.value_ub_, "value_lb": self.value_lb_, "gap": self.gap_,
                "iterations": self.n_iter_, "status": self.status_,
                "strategy_ids": {"player1": _cone_id(self.lower_.eval(self.sigma0_.mirror())[1]),
                                 "player2": _cone_id(self.upper_.eval(self.sigma0_)[1])}}


def _cone_id(c: Cone | None) -> int:
    return -1 if c is None else c.id


__all__ = ["Cone", "ConeBound", "LipschitzHSVI"]
