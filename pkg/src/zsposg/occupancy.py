"""Occupancy states: distributions over joint private histories with cached beliefs."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import PROB_ZERO, PosgModel, decode_history


@dataclass(frozen=True, eq=False)
class OccupancyState:
    """Sparse occupancy state at stage ``tau``.

    Entries are sorted by (h1, h2) history codes; ``beliefs[k]`` is b(.|h1[k], h2[k]).
    """

    tau: int
    h1: np.ndarray
    h2: np.ndarray
    p: np.ndarray
    beliefs: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.p)

    @property
    def total(self) -> float:
        return float(self.p.sum())

    def mirror(self) -> "OccupancyState":
        """Swap player roles (matches ``PosgModel.mirror``)."""
        if "mirror" not in self._cache:
            order = np.lexsort((self.h1, self.h2))
            m = OccupancyState(self.tau, self.h2[order], self.h1[order], self.p[order],
                               self.beliefs[order])
            m._cache["mirror"] = self
            self._cache["mirror"] = m
        return self._cache["mirror"]

    def rows(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Player-1 row structure: (distinct h1 codes, marginal, row index per entry)."""
        if "rows" not in self._cache:
            hist, start, inv = np.unique(self.h1, return_index=True, return_inverse=True)
            marg = np.bincount(inv, weights=self.p, minlength=len(hist))
            self._cache["rows"] = (hist, marg, inv)
        return self._cache["rows"]

    def to_dict(self, model: PosgModel) -> dict:
        nA1, nA2 = model.n_actions
        nZ1, nZ2 = model.n_observations
        return {
            "tau": self.tau,
            "entries": [
                {"h1": [list(x) for x in decode_history(a, self.tau, nZ1, nA1)],
                 "h2": [list(x) for x in decode_history(b, self.tau, nZ2, nA2)],
                 "p": float(q)}
                for a, b, q in zip(self.h1, self.h2, self.p)
            ],
        }


def initial_occupancy(model: PosgModel) -> OccupancyState:
    return OccupancyState(0, np.zeros(1, np.int64), np.zeros(1, np.int64), np.ones(1),
                          np.array(model.initial_belief, dtype=float)[None, :])


def make_occupancy(model: PosgModel, tau: int, h1, h2, p, beliefs=None) -> OccupancyState:
    """Build a sorted occupancy state; beliefs are filtered when not supplied."""
    from .model import belief_for_history

    h1 = np.asarray(h1, dtype=np.int64)
    h2 = np.asarray(h2, dtype=np.int64)
    p = np.asarray(p, dtype=float)
    keep = p > PROB_ZERO
    h1, h2, p = h1[keep], h2[keep], p[keep]
    order = np.lexsort((h2, h1))
    h1, h2, p = h1[order], h2[order], p[order]
    if beliefs is None:
        nA1, nA2 = model.n_actions
        nZ1, nZ2 = model.n_observations
        beliefs = np.array([
            belief_for_history(model, (decode_history(a, tau, nZ1, nA1),
                                       decode_history(b, tau, nZ2, nA2)))[0]
            for a, b in zip(h1, h2)]).reshape(len(p), model.n_states)
    else:
        beliefs = np.asarray(beliefs, dtype=float)[keep][order]
    return OccupancyState(tau, h1, h2, p, beliefs)


# ---------------------------------------------------------------- decision rules

@dataclass(frozen=True, eq=False)
class DecisionRule:
    """Map from private history codes to action distributions.

    ``fallback='uniform'`` makes absent rows uniform; otherwise absent rows
    raise ``KeyError``.
    """

    histories: np.ndarray
    probs: np.ndarray
    n_actions: int
    fallback: str = "error"

    @classmethod
    def from_rows(cls, histories, probs, fallback: str = "error") -> "DecisionRule":
        histories = np.asarray(histories, dtype=np.int64)
        probs = np.asarray(probs, dtype=float).reshape(len(histories), -1)
        order = np.argsort(histories, kind="stable")
        return cls(histories[order], probs[order], probs.shape[1], fallback)

    @classmethod
    def uniform(cls, n_actions: int) -> "DecisionRule":
        return cls(np.zeros(0, np.int64), np.zeros((0, n_actions)), n_actions, "uniform")

    @classmethod
    def deterministic(cls, histories, actions, n_actions: int, fallback: str = "error"
                      ) -> "DecisionRule":
        histories = np.asarray(histories, dtype=np.int64)
        probs = np.zeros((len(histories), n_actions))
        probs[np.arange(len(histories)), np.asarray(actions, dtype=int)] = 1.0
        return cls.from_rows(histories, probs, fallback)

    def lookup(self, codes: np.ndarray) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.int64)
        if len(self.histories) == 0:
            pos = np.zeros(len(codes), dtype=np.int64)
            found = np.zeros(len(codes), dtype=bool)
        else:
            pos = np.searchsorted(self.histories, codes)
            pos = np.minimum(pos, len(self.histories) - 1)
            found = self.histories[pos] == codes
        if found.all():
            return self.probs[pos]
        if self.fallback != "uniform":
            missing = codes[~found][0]
            raise KeyError(f"decision rule has no row for history {int(missing)}")
        out = np.full((len(codes), self.n_actions), 1.0 / self.n_actions)
        out[found] = self.probs[pos[found]]
        return out

    def row(self, code: int) -> np.ndarray:
        return self.lookup(np.array([code]))[0]


# ---------------------------------------------------------------- transition and reward

def _expanded(model: PosgModel, sigma: OccupancyState) -> tuple[np.ndarray, np.ndarray]:
    """Per-entry joint successor data, cached on the occupancy state.

    Returns (norm[k,a1,a2,z1,z2], unnormalized next beliefs [k,a1,a2,z1,z2,s']).
    """
    key = ("expanded", id(model))
    if key not in sigma._cache:
        un = np.einsum("ks,sabyzt->kabyzt", sigma.beliefs, model.step_kernel)
        norm = un.sum(axis=-1)
        sigma._cache[key] = (norm, un)
    return sigma._cache[key]


def successor_codes(model: PosgModel, sigma: OccupancyState) -> tuple[np.ndarray, np.ndarray]:
    """Codes of (h1 a1 z1) and (h2 a2 z2) broadcast to shape [k,a1,a2,z1,z2]."""
    nA1, nA2 = model.n_actions
    nZ1, nZ2 = model.n_observations
    a1 = np.arange(nA1)[None, :, None, None, None]
    a2 = np.arange(nA2)[None, None, :, None, None]
    z1 = np.arange(nZ1)[None, None, None, :, None]
    z2 = np.arange(nZ2)[None, None, None, None, :]
    c1 = sigma.h1[:, None, None, None, None] * (nA1 * nZ1) + a1 * nZ1 + z1
    c2 = sigma.h2[:, None, None, None, None] * (nA2 * nZ2) + a2 * nZ2 + z2
    shape = (len(sigma), nA1, nA2, nZ1, nZ2)
    return np.broadcast_to(c1, shape), np.broadcast_to(c2, shape)


def transition(model: PosgModel, sigma: OccupancyState, beta1: DecisionRule,
               beta2: DecisionRule) -> OccupancyState:
    """Deterministic occupancy transition T(sigma, beta1, beta2)."""
    if sigma.tau >= model.horizon:
        raise ValueError("cannot transition past the horizon")
    norm, un = _expanded(model, sigma)
    b1 = beta1.lookup(sigma.h1)
    b2 = beta2.lookup(sigma.h2)
    w = (sigma.p[:, None, None, None, None] * b1[:, :, None, None, None]
         * b2[:, None, :, None, None] * norm)
    c1, c2 = successor_codes(model, sigma)
    keep = w > PROB_ZERO
    nh1, nh2, p = c1[keep], c2[keep], w[keep]
    beliefs = un[keep] / norm[keep][:, None]
    order = np.lexsort((nh2, nh1))
    return OccupancyState(sigma.tau + 1, nh1[order], nh2[order], p[order], beliefs[order])


def entry_rewards(model: PosgModel, sigma: OccupancyState) -> np.ndarray:
    """sum_s b(s|h) r(s,a1,a2) per entry, shape [k, a1, a2]."""
    key = ("rewards", id(model))
    if key not in sigma._cache:
        sigma._cache[key] = np.einsum("ks,sab->kab", sigma.beliefs, model.reward)
    return sigma._cache[key]


def expected_reward(model: PosgModel, sigma: OccupancyState, beta1: DecisionRule,
                    beta2: DecisionRule) -> float:
    b1 = beta1.lookup(sigma.h1)
    b2 = beta2.lookup(sigma.h2)
    return float(np.einsum("k,ka,kb,kab->", sigma.p, b1, b2, entry_rewards(model, sigma)))


# ---------------------------------------------------------------- marginal / conditional

@dataclass(frozen=True, eq=False)
class MarginalConditional:
    """sigma = marginal(h_i) * conditional(h_-i | h_i) from player ``player``'s view.

    ``cond_hist``/``cond_other``/``cond`` list the conditional entries sorted by
    (own, other) code; ``beliefs`` are the joint beliefs of those entries
    (stored with player-1 history first when player is 1).
    """

    player: int
    tau: int
    histories: np.ndarray
    marginal: np.ndarray
    cond_hist: np.ndarray
    cond_other: np.ndarray
    cond: np.ndarray
    beliefs: np.ndarray

    def reconstruct(self) -> np.ndarray:
        row = np.searchsorted(self.histories, self.cond_hist)
        return self.marginal[row] * self.cond


def decompose(sigma: OccupancyState, player: int = 1) -> MarginalConditional:
    s = sigma if player == 1 else sigma.mirror()
    hist, marg, inv = s.rows()
    return MarginalConditional(player, s.tau, hist, marg, s.h1, s.h2, s.p / marg[inv], s.beliefs)


def transition_marginal(model: PosgModel, sigma: OccupancyState, beta1: DecisionRule,
                        beta2: DecisionRule) -> tuple[np.ndarray, np.ndarray]:
    """Player-1 marginal of T(sigma, beta): (codes of h1 a1 z1, probabilities)."""
    nxt = transition(model, sigma, beta1, beta2)
    hist, marg, _ = nxt.rows()
    return hist, marg


def transition_conditional(model: PosgModel, cond: MarginalConditional, beta2: DecisionRule
                           ) -> MarginalConditional:
    """Player-1 conditional of the next occupancy state.

    Depends on the current conditional and player 2's rule only. Rows are
    produced for every (h1, a1, z1) reachable with positive probability.
    """
    if cond.player != 1:
        raise ValueError("expects a player-1 conditional")
    nA1, nA2 = model.n_actions
    nZ1, nZ2 = model.n_observations
    un = np.einsum("ks,sabyzt->kabyzt", cond.beliefs, model.step_kernel)
    norm = un.sum(axis=-1)
    b2 = beta2.lookup(cond.cond_other)
    w = cond.cond[:, None, None, None, None] * b2[:, None, :, None, None] * norm
    a1 = np.arange(nA1)[None, :, None, None, None]
    a2 = np.arange(nA2)[None, None, :, None, None]
    z1 = np.arange(nZ1)[None, None, None, :, None]
    z2 = np.arange(nZ2)[None, None, None, None, :]
    shape = w.shape
    c1 = np.broadcast_to(cond.cond_hist[:, None, None, None, None] * (nA1 * nZ1) + a1 * nZ1 + z1, shape)
    c2 = np.broadcast_to(cond.cond_other[:, None, None, None, None] * (nA2 * nZ2) + a2 * nZ2 + z2, shape)
    keep = w > PROB_ZERO
    h1, h2, p = c1[keep], c2[keep], w[keep]
    beliefs = un[keep] / norm[keep][:, None]
    order = np.lexsort((h2, h1))
    h1, h2, p, beliefs = h1[order], h2[order], p[order], beliefs[order]
    hist, inv = np.unique(h1, return_inverse=True)
    mass = np.bincount(inv, weights=p, minlength=len(hist))
    return MarginalConditional(1, cond.tau + 1, hist, np.full(len(hist), np.nan), h1, h2,
                               p / mass[inv], beliefs)


# ---------------------------------------------------------------- distances

def joint_keys(sigma: OccupancyState, n_codes2: int) -> np.ndarray:
    return sigma.h1 * np.int64(n_codes2) + sigma.h2


def distance_l1(a: OccupancyState, b: OccupancyState) -> float:
    """L1 distance over the union of supports."""
    if a.tau != b.tau:
        raise ValueError("occupancy states are at different stages")
    ka = list(zip(a.h1.tolist(), a.h2.tolist()))
    kb = dict(zip(zip(b.h1.tolist(), b.h2.tolist()), b.p.tolist()))
    total = 0.0
    for key, pa in zip(ka, a.p.tolist()):
        total += abs(pa - kb.pop(key, 0.0))
    return total + sum(abs(v) for v in kb.values())


def mix(a: OccupancyState, b: OccupancyState, alpha: float) -> OccupancyState:
    """Convex combination alpha*a + (1-alpha)*b of two occupancy states."""
    if a.tau != b.tau:
        raise ValueError("occupancy states are at different stages")
    table: dict[tuple[int, int], list] = {}
    for s, wgt in ((a, alpha), (b, 1.0 - alpha)):
        for h1, h2, p, bel in zip(s.h1.tolist(), s.h2.tolist(), s.p, s.beliefs):
            entry = table.setdefault((h1, h2), [0.0, bel])
            entry[0] += wgt * p
    keys = sorted(k for k, v in table.items() if v[0] > PROB_ZERO)
    return OccupancyState(a.tau, np.array([k[0] for k in keys], np.int64),
                          np.array([k[1] for k in keys], np.int64),
                          np.array([table[k][0] for k in keys]),
                          np.array([table[k][1] for k in keys]).reshape(len(keys), -1))
