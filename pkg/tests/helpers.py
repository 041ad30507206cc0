"""Shared builders for randomized test instances."""
import itertools

import numpy as np

from zsposg.model import random_model
from zsposg.occupancy import DecisionRule, initial_occupancy, transition
from zsposg.strategies import BehavioralStrategy


def random_rule(rng, n_rows, n_actions, pure=False):
    hist = np.arange(n_rows)
    if pure:
        return DecisionRule.deterministic(hist, rng.integers(n_actions, size=n_rows), n_actions)
    return DecisionRule.from_rows(hist, rng.dirichlet(np.ones(n_actions), size=n_rows))


def rule_for(rng, model, player, tau, pure=False):
    A = model.n_actions[player - 1]
    Z = model.n_observations[player - 1]
    return random_rule(rng, (A * Z) ** tau, A, pure)


def random_strategy(rng, model, player, horizon=None):
    H = model.horizon if horizon is None else horizon
    return BehavioralStrategy(player, [rule_for(rng, model, player, t) for t in range(H)])


def random_instance(rng, max_states=3, horizon=3):
    n = int(rng.integers(1, max_states + 1))
    A = tuple(int(a) for a in rng.integers(1, 3, size=2))
    Z = tuple(int(z) for z in rng.integers(1, 3, size=2))
    return random_model(rng, n, A, Z, horizon=horizon, sparsity=float(rng.uniform(0, 0.6)))


def reach_occupancy(rng, model, tau):
    """Occupancy state at stage ``tau`` reached under random stochastic rules."""
    sigma = initial_occupancy(model)
    for t in range(tau):
        sigma = transition(model, sigma, rule_for(rng, model, 1, t), rule_for(rng, model, 2, t))
    return sigma


def as_table(sigma):
    return {(int(a), int(b)): float(p) for a, b, p in zip(sigma.h1, sigma.h2, sigma.p)}


def tables_close(x, y, tol):
    keys = set(x) | set(y)
    return all(abs(x.get(k, 0.0) - y.get(k, 0.0)) <= tol for k in keys)


def enumerate_occupancy(model, rules1, rules2, tau):
    """Pr(joint history) after ``tau`` stages by summing over state paths."""
    nA1, nA2 = model.n_actions
    nZ1, nZ2 = model.n_observations
    out = {}
    frontier = [(0, 0, model.initial_belief.copy())]
    for t in range(tau):
        nxt = []
        for h1, h2, mass in frontier:
            p1 = rules1[t].row(h1)
            p2 = rules2[t].row(h2)
            for a1, a2, z1, z2 in itertools.product(range(nA1), range(nA2), range(nZ1), range(nZ2)):
                w = p1[a1] * p2[a2]
                if w == 0.0:
                    continue
                m = w * (mass @ model.dynamics[:, a1, a2, :, z1, z2])
                if m.sum() > 1e-15:
                    nxt.append((h1 * nA1 * nZ1 + a1 * nZ1 + z1, h2 * nA2 * nZ2 + a2 * nZ2 + z2, m))
        frontier = nxt
    for h1, h2, m in frontier:
        out[(h1, h2)] = out.get((h1, h2), 0.0) + float(m.sum())
    return out
