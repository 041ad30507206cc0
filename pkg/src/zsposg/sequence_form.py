"""Exact solution of small games through the sequence-form linear program."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .lp import LpError
from .model import PROB_ZERO, PosgModel
from .occupancy import DecisionRule
from .strategies import BehavioralStrategy


@dataclass
class SequenceIndex:
    """Sequence numbering for one player: 0 is the empty sequence, then
    (history, action) pairs stage by stage."""

    n_actions: int
    n_obs: int
    horizon: int

    def __post_init__(self):
        k = self.n_actions * self.n_obs
        self.n_hist = [k ** t for t in range(self.horizon)]
        self.offset = np.concatenate([[1], 1 + np.cumsum([n * self.n_actions for n in self.n_hist])])

    @property
    def size(self) -> int:
        return int(self.offset[-1])

    def seq(self, tau: int, hist, action) -> np.ndarray:
        return self.offset[tau] + np.asarray(hist) * self.n_actions + np.asarray(action)

    def parent(self, tau: int, hist: np.ndarray) -> np.ndarray:
        if tau == 0:
            return np.zeros_like(hist)
        k = self.n_actions * self.n_obs
        prev, rest = np.divmod(hist, k)
        return self.seq(tau - 1, prev, rest // self.n_obs)

    def constraints(self) -> sparse.csr_matrix:
        """Flow matrix E with E x = e, e = (1, 0, ..., 0)."""
        rows, cols, vals = [0], [0], [1.0]
        r = 1
        for tau, n in enumerate(self.n_hist):
            hist = np.arange(n)
            for a in range(self.n_actions):
                rows.extend(r + hist)
                cols.extend(self.seq(tau, hist, a))
                vals.extend([1.0] * n)
            rows.extend(r + hist)
            cols.extend(self.parent(tau, hist))
            vals.extend([-1.0] * n)
            r += n
        return sparse.csr_matrix((vals, (rows, cols)), shape=(r, self.size))


@dataclass
class SequenceForm:
    idx1: SequenceIndex
    idx2: SequenceIndex
    payoff: sparse.csr_matrix
    E: sparse.csr_matrix
    F: sparse.csr_matrix


def build_sequence_form(model: PosgModel, horizon: int | None = None) -> SequenceForm:
    """Payoff matrix over sequence pairs, weighted by chance reach and discount."""
    H = model.horizon if horizon is None else horizon
    nA1, nA2 = model.n_actions
    nZ1, nZ2 = model.n_observations
    i1 = SequenceIndex(nA1, nZ1, H)
    i2 = SequenceIndex(nA2, nZ2, H)
    P = model.dynamics
    h1 = np.zeros(1, dtype=np.int64)
    h2 = np.zeros(1, dtype=np.int64)
    c = model.initial_belief[None, :].copy()
    rows, cols, vals = [], [], []
    disc = 1.0
    for tau in range(H):
        r = disc * np.einsum("ks,sab->kab", c, model.reward)
        a1 = np.arange(nA1)[None, :, None]
        a2 = np.arange(nA2)[None, None, :]
        rows.append(np.broadcast_to(i1.seq(tau, h1[:, None, None], a1), r.shape).ravel())
        cols.append(np.broadcast_to(i2.seq(tau, h2[:, None, None], a2), r.shape).ravel())
        vals.append(r.ravel())
        if tau + 1 < H:
            nc = np.einsum("ks,sabtyz->kabyzt", c, P)
            shape = nc.shape[:5]
            n1 = (h1[:, None, None, None, None] * (nA1 * nZ1)
                  + np.arange(nA1)[None, :, None, None, None] * nZ1
                  + np.arange(nZ1)[None, None, None, :, None])
            n2 = (h2[:, None, None, None, None] * (nA2 * nZ2)
                  + np.arange(nA2)[None, None, :, None, None] * nZ2
                  + np.arange(nZ2)[None, None, None, None, :])
            n1 = np.broadcast_to(n1, shape).ravel()
            n2 = np.broadcast_to(n2, shape).ravel()
            nc = nc.reshape(-1, model.n_states)
            keep = nc.sum(axis=1) > PROB_ZERO
            h1, h2, c = n1[keep], n2[keep], nc[keep]
        disc *= model.discount
    A = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(i1.size, i2.size)).tocsr()
    A.sum_duplicates()
    return SequenceForm(i1, i2, A, i1.constraints(), i2.constraints())


@dataclass
class ExactSolution:
    value: float
    x: np.ndarray
    y: np.ndarray
    strategy1: BehavioralStrategy
    strategy2: BehavioralStrategy


def _plan_lp(A: sparse.csr_matrix, E: sparse.csr_matrix, F: sparse.csr_matrix
             ) -> tuple[np.ndarray, np.ndarray, float]:
    """max_x min_y x'Ay. Returns x, y (from the duals) and the value."""
    nx, nq = E.shape[1], F.shape[0]
    c = np.concatenate([np.zeros(nx), -np.eye(1, nq, 0).ravel()])
    # F' q - A' x <= 0
    A_ub = sparse.hstack([-A.T, F.T]).tocsr()
    A_eq = sparse.hstack([E, sparse.csr_matrix((E.shape[0], nq))]).tocsr()
    b_eq = np.zeros(E.shape[0])
    b_eq[0] = 1.0
    bounds = [(0, None)] * nx + [(None, None)] * nq
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(A_ub.shape[0]), A_eq=A_eq, b_eq=b_eq,
                  bounds=bounds, method="highs")
    if res.status != 0:
        raise LpError(res.message)
    x = np.clip(res.x[:nx], 0.0, None)
    y = np.clip(-res.ineqlin.marginals, 0.0, None)
    return x, y, -float(res.fun)


def plan_to_behavioral(plan: np.ndarray, idx: SequenceIndex, player: int) -> BehavioralStrategy:
    """Divide realization weights by their parent weight; uniform where the parent is 0."""
    rules = []
    for tau, n in enumerate(idx.n_hist):
        hist = np.arange(n)
        seqs = idx.seq(tau, hist[:, None], np.arange(idx.n_actions)[None, :])
        w = plan[seqs]
        par = plan[idx.parent(tau, hist)]
        ok = par > 1e-12
        probs = np.full((n, idx.n_actions), 1.0 / idx.n_actions)
        probs[ok] = w[ok] / par[ok, None]
        probs = np.clip(probs, 0.0, None)
        probs /= probs.sum(axis=1, keepdims=True)
        rules.append(DecisionRule.from_rows(hist, probs, fallback="uniform"))
    return BehavioralStrategy(player, rules)


def solve_exact(model: PosgModel, horizon: int | None = None) -> ExactSolution:
    """Value and equilibrium strategies of the game by the sequence-form LP."""
    sf = build_sequence_form(model, horizon)
    x, y, v = _plan_lp(sf.payoff, sf.E, sf.F)
    return ExactSolution(v, x, y, plan_to_behavioral(x, sf.idx1, 1),
                         plan_to_behavioral(y, sf.idx2, 2))
