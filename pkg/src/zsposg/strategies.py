"""Behavioral and recursive strategies: evaluation, best responses, conversion."""
from __future__ import annotations

from dataclasses import dataclass
from types import SimpleNamespace
from typing import Iterable, Sequence

import numpy as np

from .model import PosgModel, decode_history, history_code
from .occupancy import (DecisionRule, OccupancyState, entry_rewards, expected_reward,
                        initial_occupancy, transition)

RW_TOL = 1e-9


@dataclass
class BehavioralStrategy:
    """One decision rule per stage for ``player`` (1 or 2)."""

    player: int
    rules: list[DecisionRule]

    @classmethod
    def uniform(cls, model: PosgModel, player: int, horizon: int | None = None) -> "BehavioralStrategy":
        H = model.horizon if horizon is None else horizon
        return cls(player, [DecisionRule.uniform(model.n_actions[player - 1]) for _ in range(H)])

    @classmethod
    def random(cls, model: PosgModel, player: int, rng: np.random.Generator,
               horizon: int | None = None, pure: bool = False) -> "BehavioralStrategy":
        H = model.horizon if horizon is None else horizon
        A = model.n_actions[player - 1]
        Z = model.n_observations[player - 1]
        rules = []
        for tau in range(H):
            n = (A * Z) ** tau
            if pure:
                probs = np.eye(A)[rng.integers(A, size=n)]
            else:
                probs = rng.dirichlet(np.ones(A), size=n)
            rules.append(DecisionRule.from_rows(np.arange(n), probs))
        return cls(player, rules)

    def to_json(self, model: PosgModel) -> list[list[dict]]:
        A = model.n_actions[self.player - 1]
        Z = model.n_observations[self.player - 1]
        out = []
        for tau, rule in enumerate(self.rules):
            out.append([{"history": [list(x) for x in decode_history(h, tau, Z, A)],
                         "probs": [float(q) for q in p]}
                        for h, p in zip(rule.histories, rule.probs)])
        return out

    @classmethod
    def from_json(cls, model: PosgModel, player: int, data: Sequence[Sequence[dict]]
                  ) -> "BehavioralStrategy":
        A = model.n_actions[player - 1]
        Z = model.n_observations[player - 1]
        rules = []
        for stage in data:
            hist = [history_code([tuple(x) for x in e["history"]], Z, A) for e in stage]
            probs = np.array([e["probs"] for e in stage], dtype=float).reshape(len(hist), A)
            rules.append(DecisionRule.from_rows(hist, probs, fallback="uniform"))
        return cls(player, rules)


def _rules_for(s1: BehavioralStrategy, s2: BehavioralStrategy, tau: int):
    return s1.rules[tau], s2.rules[tau]


def evaluate_profile(model: PosgModel, s1: BehavioralStrategy, s2: BehavioralStrategy,
                     horizon: int | None = None, sigma0: OccupancyState | None = None) -> float:
    """Exact expected discounted return of a behavioral profile by occupancy rollout."""
    H = model.horizon if horizon is None else horizon
    sigma = initial_occupancy(model) if sigma0 is None else sigma0
    total, disc = 0.0, 1.0
    for tau in range(sigma.tau, H):
        b1, b2 = _rules_for(s1, s2, tau)
        total += disc * expected_reward(model, sigma, b1, b2)
        if tau + 1 < H:
            sigma = transition(model, sigma, b1, b2)
        disc *= model.discount
    return total


# ---------------------------------------------------------------- best responses

@dataclass
class BestResponseTables:
    """Backward-induction output for player 1 against fixed opponent rules.

    ``sigmas[t]`` is the occupancy state under a uniform player 1; ``hist[t]``,
    ``mass[t]`` its player-1 rows and marginal; ``unnorm[t]`` the mass-weighted
    optimal values, ``actions[t]`` the greedy actions.
    """

    sigmas: list[OccupancyState]
    hist: list[np.ndarray]
    mass: list[np.ndarray]
    unnorm: list[np.ndarray]
    actions: list[np.ndarray]

    def nu(self, tau: int) -> np.ndarray:
        return self.unnorm[tau] / self.mass[tau]

    @property
    def value(self) -> float:
        return float(self.unnorm[0][0] / self.mass[0][0])


def _argmax_low(q: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    best = q.max(axis=1, keepdims=True)
    return np.argmax(q >= best - tol * np.maximum(1.0, np.abs(best)), axis=1)


def best_response_tables(model: PosgModel, opponent: Sequence[DecisionRule],
                         horizon: int | None = None, sigma0: OccupancyState | None = None
                         ) -> BestResponseTables:
    """Solve player 1's POMDP against fixed player-2 rules by backward induction."""
    H = model.horizon if horizon is None else horizon
    nA1, _ = model.n_actions
    nZ1, _ = model.n_observations
    uni = DecisionRule.uniform(nA1)
    sigma = initial_occupancy(model) if sigma0 is None else sigma0
    start = sigma.tau
    sigmas = [sigma]
    for tau in range(start, H - 1):
        sigmas.append(transition(model, sigmas[-1], uni, opponent[tau]))
    n = len(sigmas)
    hist, mass, unnorm, actions = [None] * n, [None] * n, [None] * n, [None] * n
    for i in range(n - 1, -1, -1):
        tau = start + i
        s = sigmas[i]
        h, m, inv = s.rows()
        b2 = opponent[tau].lookup(s.h2)
        rk = np.einsum("k,kb,kab->ka", s.p, b2, entry_rewards(model, s))
        q = np.zeros((len(h), nA1))
        np.add.at(q, inv, rk)
        if i < n - 1:
            child = (h[:, None, None] * (nA1 * nZ1) + np.arange(nA1)[None, :, None] * nZ1
                     + np.arange(nZ1)[None, None, :])
            nxt_h, nxt_u = hist[i + 1], unnorm[i + 1]
            pos = np.minimum(np.searchsorted(nxt_h, child), len(nxt_h) - 1)
            val = np.where(nxt_h[pos] == child, nxt_u[pos], 0.0)
            q += model.discount * nA1 * val.sum(axis=2)
        hist[i], mass[i] = h, m
        actions[i] = _argmax_low(q)
        unnorm[i] = q[np.arange(len(h)), actions[i]]
    return BestResponseTables(sigmas, hist, mass, unnorm, actions)


def best_response(model: PosgModel, opponent: BehavioralStrategy, player: int | None = None,
                  horizon: int | None = None) -> tuple[BehavioralStrategy, float]:
    """Exact best response to ``opponent``. Returns the strategy and its value
    (the maximum for player 1, the minimum for player 2)."""
    player = 3 - opponent.player if player is None else player
    if player == opponent.player:
        raise ValueError("opponent must be the other player")
    H = model.horizon if horizon is None else horizon
    view = model if player == 1 else model.mirror
    tables = best_response_tables(view, opponent.rules, H)
    A = view.n_actions[0]
    rules = [DecisionRule.deterministic(tables.hist[t], tables.actions[t], A, fallback="uniform")
             for t in range(H)]
    value = tables.value
    return BehavioralStrategy(player, rules), (value if player == 1 else -value)


def exploitability(model: PosgModel, strategy: BehavioralStrategy, reference: float,
                   horizon: int | None = None) -> float:
    """How much a best-responding opponent gains relative to ``reference``.

    For a player-2 strategy this is BR value - reference; for player 1 it is
    reference - BR value. Nonpositive means the reference is guaranteed.
    """
    _, v = best_response(model, strategy, horizon=horizon)
    return v - reference if strategy.player == 2 else reference - v


# ---------------------------------------------------------------- recursive strategies

@dataclass
class RealizationWeights:
    """Realization weights per stage: ``stages[t][h, a]`` = rw(h, a) for private history h."""

    stages: list[np.ndarray]
    full: np.ndarray


def _full_rule(rule: DecisionRule, n_rows: int) -> np.ndarray:
    return rule.lookup(np.arange(n_rows, dtype=np.int64))


def realization_weights(root: Iterable[tuple[object, float]], n_actions: int, n_obs: int,
                        horizon: int) -> RealizationWeights:
    """Realization weights of a recursive strategy given its root mixture.

    Nodes expose ``tau``, ``beta`` (DecisionRule) and ``next`` (an object with
    ``delta``: list of (node, prob)) or ``None`` at the last stage.
    """
    A, Z, H = n_actions, n_obs, horizon
    memo_node: dict[int, np.ndarray] = {}
    memo_mix: dict[int, np.ndarray] = {}

    def cat(node) -> np.ndarray:
        key = id(node)
        if key not in memo_node:
            tau = node.tau
            rows = (A * Z) ** tau
            beta = _full_rule(node.beta, rows)
            if node.next is None or tau == H - 1:
                tail = np.ones(rows * A)
            else:
                tail = mixture(node.next)
            memo_node[key] = (beta[:, :, None] * tail.reshape(rows, A, -1)).ravel()
        return memo_node[key]

    def mixture(parent) -> np.ndarray:
        key = id(parent)
        if key not in memo_mix:
            memo_mix[key] = sum(p * cat(w) for w, p in parent.delta)
        return memo_mix[key]

    full = mixture(SimpleNamespace(delta=list(root)))
    stages: list[np.ndarray] = [None] * H
    cur = full.reshape(-1, A)
    stages[H - 1] = cur
    for tau in range(H - 2, -1, -1):
        rows = (A * Z) ** tau
        nxt = stages[tau + 1].reshape(rows, A, Z, A).sum(axis=3)
        if not np.allclose(nxt, nxt[:, :, :1], atol=RW_TOL, rtol=0.0):
            raise AssertionError("realization weights depend on the observation")
        stages[tau] = nxt[:, :, 0]
    return RealizationWeights(stages, full)


def behavioral_from_weights(rw: RealizationWeights, player: int) -> BehavioralStrategy:
    rules = []
    for stage in rw.stages:
        parent = stage.sum(axis=1)
        ok = parent > 1e-15
        hist = np.nonzero(ok)[0]
        rules.append(DecisionRule.from_rows(hist, stage[ok] / parent[ok, None], fallback="uniform"))
    return BehavioralStrategy(player, rules)


def extract_behavioral(root: Iterable[tuple[object, float]], model: PosgModel, player: int,
                       horizon: int | None = None) -> BehavioralStrategy:
    """Behavioral strategy equivalent to a recursive strategy of ``player``."""
    H = model.horizon if horizon is None else horizon
    rw = realization_weights(root, model.n_actions[player - 1], model.n_observations[player - 1], H)
    return behavioral_from_weights(rw, player)


def recursive_value(model: PosgModel, root: Iterable[tuple[object, float]],
                    opponent: BehavioralStrategy, horizon: int | None = None) -> float:
    """Value of a recursive player-2 strategy against player-1 rules, by direct
    expectation over the node DAG (exponential; for testing)."""
    H = model.horizon if horizon is None else horizon

    def value(sigma: OccupancyState, mix) -> float:
        tau = sigma.tau
        b1 = opponent.rules[tau]
        total = 0.0
        for node, p in mix:
            v = expected_reward(model, sigma, b1, node.beta)
            if tau + 1 < H and node.next is not None:
                v += model.discount * value(transition(model, sigma, b1, node.beta), node.next.delta)
            total += p * v
        return total

    return value(initial_occupancy(model), list(root))
