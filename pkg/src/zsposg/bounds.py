"""Min-surfaces upper bound on the optimal value and its stage-game matrix.

One ``SurfaceBound`` bounds the value from player 1's side of a given model
view. The lower bound of a game is the negated upper bound of its mirror.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import count

import numpy as np

from .lp import bayesian_game_lp, solve_dual
from .model import PROB_ZERO, PosgModel
from .occupancy import (DecisionRule, OccupancyState, _expanded, entry_rewards,
                        successor_codes)
from .strategies import best_response_tables

HEURISTICS = ("bmdp", "init")
LIPSCHITZ_MODES = ("theorem", "experimental")


def horizon_factor(horizon: int, tau: int, discount: float) -> float:
    """Sum of discount weights over the remaining stages, h(H, tau, gamma)."""
    if discount == 1.0:
        return float(horizon - tau)
    return (1.0 - discount ** (horizon - tau)) / (1.0 - discount)


def optimistic_mdp_values(model: PosgModel, horizon: int) -> np.ndarray:
    """State values when both players jointly maximize with the state observed.

    Row ``t`` holds the values at stage ``t``; row ``horizon`` is zero.
    """
    p_state = model.dynamics.sum(axis=(4, 5))
    vm = np.zeros((horizon + 1, model.n_states))
    for t in range(horizon - 1, -1, -1):
        q = model.reward + model.discount * np.einsum("sabt,t->sab", p_state, vm[t + 1])
        vm[t] = q.reshape(model.n_states, -1).max(axis=1)
    return vm


class LipschitzSchedule:
    """Per-stage Lipschitz constants of the optimal value in occupancy space."""

    def __init__(self, horizon: int, discount: float, r_min: float, r_max: float,
                 mode: str = "theorem", values=None):
        if mode not in LIPSCHITZ_MODES + ("custom",):
            raise ValueError(f"unknown Lipschitz mode {mode!r}")
        self.horizon, self.discount = horizon, discount
        self.r_min, self.r_max = r_min, r_max
        self.mode = mode
        span = r_max - r_min
        if values is not None:
            self.mode = "custom"
            lam = np.asarray(values, dtype=float)
        elif mode == "theorem":
            lam = np.array([0.5 * horizon_factor(horizon, t, discount) * span
                            for t in range(horizon + 1)])
        else:
            lam = np.full(horizon + 1, horizon * span)
        lam[horizon] = 0.0
        self.values = lam

    @classmethod
    def for_model(cls, model: PosgModel, mode: str = "theorem") -> "LipschitzSchedule":
        return cls(model.horizon, model.discount, model.r_min, model.r_max, mode)

    def __call__(self, tau: int) -> float:
        return float(self.values[tau])

    @property
    def lam_inf(self) -> float:
        return float(self.values.max())


# ---------------------------------------------------------------- stored tuples

@dataclass(eq=False)
class StoredConditional:
    """Player-1 conditional of an occupancy state, keyed by joint history codes."""

    tau: int
    rows: np.ndarray
    keys: np.ndarray
    vals: np.ndarray
    row_of: np.ndarray

    @classmethod
    def from_occupancy(cls, sigma: OccupancyState, n_codes2: int) -> "StoredConditional":
        hist, marg, inv = sigma.rows()
        return cls(sigma.tau, hist, sigma.h1 * np.int64(n_codes2) + sigma.h2, sigma.p / marg[inv],
                   inv)

    def lookup(self, keys: np.ndarray) -> np.ndarray:
        if len(self.keys) == 0:
            return np.zeros(len(keys))
        pos = np.minimum(np.searchsorted(self.keys, keys), len(self.keys) - 1)
        return np.where(self.keys[pos] == keys, self.vals[pos], 0.0)


@dataclass(eq=False)
class VTuple:
    id: int
    tau: int
    cond: StoredConditional
    nu: np.ndarray
    delta: list
    initial: bool = False

    def nu_lookup(self, hist: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        rows = self.cond.rows
        pos = np.minimum(np.searchsorted(rows, hist), len(rows) - 1)
        found = rows[pos] == hist
        return found, np.where(found, self.nu[pos], 0.0)


@dataclass(eq=False)
class WTuple:
    id: int
    tau: int
    cond: StoredConditional | None
    beta: DecisionRule
    next: VTuple | None
    initial: bool = False


@dataclass
class _Successors:
    row_codes: np.ndarray
    row_of: np.ndarray
    keys: np.ndarray
    pn: np.ndarray
    heur: np.ndarray
    pr: np.ndarray
    inv: np.ndarray


class SurfaceBound:
    """Upper bound V̄ and its companion W̄ bags for the maximizer of ``model``."""

    def __init__(self, model: PosgModel, schedule: LipschitzSchedule, heuristic: str = "bmdp",
                 prune_every: int = 50, lp_method: str = "highs"):
        if heuristic not in HEURISTICS:
            raise ValueError(f"unknown heuristic {heuristic!r}")
        self.model = model
        self.H = model.horizon
        self.schedule = schedule
        self.heuristic = heuristic
        self.prune_every = prune_every
        self.lp_method = lp_method
        self.bagV: list[list[VTuple]] = [[] for _ in range(self.H)]
        self.bagW: list[list[WTuple]] = [[] for _ in range(self.H)]
        self.archive: list[list[VTuple]] = [[] for _ in range(self.H)]
        self._updates = np.zeros(self.H, dtype=int)
        self._ids = count()
        nA1, nA2 = model.n_actions
        nZ1, nZ2 = model.n_observations
        self._k1, self._k2 = nA1 * nZ1, nA2 * nZ2
        if (self._k1 * self._k2) ** self.H >= 2 ** 62:
            raise ValueError("history codes would overflow 64-bit keys at this horizon")
        self.v_max = np.array([horizon_factor(self.H, t, model.discount) * model.r_max
                               for t in range(self.H + 1)])
        self.v_min = np.array([horizon_factor(self.H, t, model.discount) * model.r_min
                               for t in range(self.H + 1)])
        self._initialize()

    # ------------------------------------------------------------ setup

    def n_codes2(self, tau: int) -> int:
        return self._k2 ** tau

    def _initialize(self) -> None:
        m = self.model
        self.v_mdp = optimistic_mdp_values(m, self.H)

        uniform2 = [DecisionRule.uniform(m.n_actions[1]) for _ in range(self.H)]
        tables = best_response_tables(m, uniform2, self.H)
        self.init_tables = tables
        self.nu_init = [(tables.hist[t], tables.nu(t)) for t in range(self.H)]
        nxt = None
        for t in range(self.H - 1, -1, -1):
            cond = StoredConditional.from_occupancy(tables.sigmas[t], self.n_codes2(t))
            w = WTuple(next(self._ids), t, cond, uniform2[t], nxt, initial=True)
            v = VTuple(next(self._ids), t, cond, np.minimum(tables.nu(t), self.v_max[t]),
                       [(w, 1.0)], initial=True)
            self.bagW[t].append(w)
            self.bagV[t].append(v)
            nxt = v
        for t in range(self.H):
            self.bagW[t].sort(key=lambda x: x.id)
            self.bagV[t].sort(key=lambda x: x.id)

    # ------------------------------------------------------------ heuristics

    def _init_lookup(self, tau: int, codes: np.ndarray) -> np.ndarray:
        if tau >= self.H:
            return np.zeros(len(codes))
        hist, nu = self.nu_init[tau]
        pos = np.minimum(np.searchsorted(hist, codes), len(hist) - 1)
        return np.where(hist[pos] == codes, nu[pos], self.v_max[tau])

    def heuristic_rows(self, sigma: OccupancyState) -> np.ndarray:
        """Mass-weighted heuristic value of each player-1 row of ``sigma``."""
        key = (id(self), "heur")
        if key not in sigma._cache:
            hist, marg, inv = sigma.rows()
            if self.heuristic == "bmdp":
                vals = sigma.p * (sigma.beliefs @ self.v_mdp[sigma.tau])
                sigma._cache[key] = np.bincount(inv, weights=vals, minlength=len(hist))
            else:
                sigma._cache[key] = marg * self._init_lookup(sigma.tau, hist)
        return sigma._cache[key]

    # ------------------------------------------------------------ evaluation

    def tuple_value(self, v: VTuple, sigma: OccupancyState) -> float:
        hist, marg, inv = sigma.rows()
        found, nu = v.nu_lookup(hist)
        keys = self._joint_keys(sigma)
        st = v.cond.lookup(keys)
        known = found[inv]
        st = np.where(known, st, 0.0)
        t1 = np.bincount(inv, weights=np.abs(sigma.p - marg[inv] * st) * known, minlength=len(hist))
        matched = np.bincount(inv, weights=st, minlength=len(hist))
        dist = t1 + marg * (1.0 - matched)
        lam = self.schedule(sigma.tau)
        heur = self.heuristic_rows(sigma)
        return float(np.sum(np.where(found, marg * nu + lam * dist, heur)))

    def _joint_keys(self, sigma: OccupancyState) -> np.ndarray:
        key = (id(self), "keys")
        if key not in sigma._cache:
            sigma._cache[key] = sigma.h1 * np.int64(self.n_codes2(sigma.tau)) + sigma.h2
        return sigma._cache[key]

    def eval(self, sigma: OccupancyState) -> tuple[float, VTuple]:
        """min over the live bag; ties go to the lowest tuple id."""
        if sigma.tau >= self.H:
            return 0.0, None
        best, arg = np.inf, None
        for v in self.bagV[sigma.tau]:
            val = self.tuple_value(v, sigma)
            if val < best - 1e-13:
                best, arg = val, v
        return best, arg

    # ------------------------------------------------------------ stage matrix

    def _successors(self, sigma: OccupancyState) -> _Successors:
        key = (id(self), "succ")
        if key in sigma._cache:
            return sigma._cache[key]
        m = self.model
        nA1, _ = m.n_actions
        nZ1, _ = m.n_observations
        hist, marg, inv = sigma.rows()
        norm, un = _expanded(m, sigma)
        pr = sigma.p[:, None, None] * entry_rewards(m, sigma)
        tau = sigma.tau
        if tau + 1 < self.H:
            c1, c2 = successor_codes(m, sigma)
            a1 = np.arange(nA1)[None, :, None, None, None]
            z1 = np.arange(nZ1)[None, None, None, :, None]
            row_of = np.broadcast_to(inv[:, None, None, None, None] * (nA1 * nZ1) + a1 * nZ1 + z1,
                                     norm.shape).ravel()
            row_codes = (hist[:, None, None] * (nA1 * nZ1) + np.arange(nA1)[None, :, None] * nZ1
                         + np.arange(nZ1)[None, None, :]).ravel()
            keys = (c1 * np.int64(self.n_codes2(tau + 1)) + c2).ravel()
            pn = sigma.p[:, None, None, None, None] * norm
            if self.heuristic == "bmdp":
                heur = sigma.p[:, None, None, None, None] * (un @ self.v_mdp[tau + 1])
            else:
                heur = None
            succ = _Successors(row_codes, row_of, keys, pn, heur, pr, inv)
        else:
            succ = _Successors(None, None, None, None, None, pr, inv)
        sigma._cache[key] = succ
        return succ

    def column(self, w: WTuple, sigma: OccupancyState) -> np.ndarray:
        """Stage-matrix column of ``w`` at ``sigma`` over rows (h1, a1)."""
        key = (id(self), "col", w.id)
        if key in sigma._cache:
            return sigma._cache[key]
        m = self.model
        nA1, nA2 = m.n_actions
        nZ1, _ = m.n_observations
        hist, marg, inv = sigma.rows()
        s = self._successors(sigma)
        b2 = w.beta.lookup(sigma.h2)
        rew = np.zeros((len(hist), nA1))
        np.add.at(rew, inv, np.einsum("kab,kb->ka", s.pr, b2))
        tau = sigma.tau
        if tau + 1 < self.H and w.next is not None:
            n_rows = len(s.row_codes)
            mass = (s.pn * b2[:, None, :, None, None]).ravel()
            m_row = np.bincount(s.row_of, weights=mass, minlength=n_rows)
            nxt = w.next
            found, nu = nxt.nu_lookup(s.row_codes)
            known = found[s.row_of]
            st = np.where(known, nxt.cond.lookup(s.keys), 0.0)
            t1 = np.bincount(s.row_of, weights=np.abs(mass - m_row[s.row_of] * st) * known,
                             minlength=n_rows)
            matched = np.bincount(s.row_of, weights=st, minlength=n_rows)
            dist = t1 + m_row * (1.0 - matched)
            val_known = m_row * nu + self.schedule(tau + 1) * dist
            if self.heuristic == "bmdp":
                heur = np.bincount(s.row_of, weights=(s.heur * b2[:, None, :, None, None]).ravel(),
                                   minlength=n_rows)
            else:
                heur = m_row * self._init_lookup(tau + 1, s.row_codes)
            val = np.where(found, val_known, heur)
            rew = rew + m.discount * val.reshape(len(hist), nA1, nZ1).sum(axis=2)
        col = rew.ravel()
        sigma._cache[key] = col
        return col

    def matrix(self, sigma: OccupancyState, ws: list[WTuple] | None = None
               ) -> tuple[np.ndarray, int]:
        ws = self.bagW[sigma.tau] if ws is None else ws
        M = np.column_stack([self.column(w, sigma) for w in ws])
        return M, len(sigma.rows()[0])

    def select(self, sigma: OccupancyState) -> DecisionRule:
        """Greedy maximizer rule from the primal stage LP on the W bag."""
        M, n = self.matrix(sigma)
        beta, _ = bayesian_game_lp(M, n, M.shape[0] // n, 1, M.shape[1], self.lp_method)
        return DecisionRule.from_rows(sigma.rows()[0], beta, fallback="uniform")

    # ------------------------------------------------------------ updates

    def add_terminal(self, sigma: OccupancyState, beta: DecisionRule) -> WTuple:
        """Insert a last-stage W tuple carrying an equilibrium rule of the opponent."""
        cond = StoredConditional.from_occupancy(sigma, self.n_codes2(sigma.tau))
        w = WTuple(next(self._ids), sigma.tau, cond, _with_uniform(beta), None)
        self.bagW[sigma.tau].append(w)
        return w

    def compute_nu(self, sigma: OccupancyState, Mdelta: np.ndarray) -> np.ndarray:
        hist, marg, _ = sigma.rows()
        nA1 = self.model.n_actions[0]
        nu = Mdelta.reshape(len(hist), nA1).max(axis=1) / marg
        return np.minimum(nu, self.v_max[sigma.tau])

    def update(self, sigma: OccupancyState, prev: tuple[OccupancyState, DecisionRule] | None = None,
               terminal: WTuple | None = None) -> tuple[VTuple, WTuple | None]:
        """Add a V tuple at ``sigma`` and, if ``prev`` is given, the matching W tuple
        one stage earlier."""
        tau = sigma.tau
        if terminal is not None:
            delta = [(terminal, 1.0)]
            Md = self.column(terminal, sigma)
        else:
            ws = self.bagW[tau]
            M, n = self.matrix(sigma, ws)
            d, _ = solve_dual(M, n, self.lp_method)
            d = np.where(d > PROB_ZERO, d, 0.0)
            d /= d.sum()
            sel = np.nonzero(d)[0]
            delta = [(ws[i], float(d[i])) for i in sel]
            Md = M[:, sel] @ d[sel]
        nu = self.compute_nu(sigma, Md)
        cond = StoredConditional.from_occupancy(sigma, self.n_codes2(tau))
        v = VTuple(next(self._ids), tau, cond, nu, delta)
        self.bagV[tau].append(v)
        w = None
        if prev is not None:
            psig, pbeta = prev
            pcond = StoredConditional.from_occupancy(psig, self.n_codes2(psig.tau))
            w = WTuple(next(self._ids), psig.tau, pcond, _with_uniform(pbeta), v)
            self.bagW[psig.tau].append(w)
        self._updates[tau] += 1
        if self.prune_every and self._updates[tau] % self.prune_every == 0:
            self.prune(tau)
        return v, w

    # ------------------------------------------------------------ pruning

    def _row_values_at(self, other: VTuple, own: VTuple) -> np.ndarray:
        """Per-row coefficients of ``other``'s surface at ``own``'s conditional."""
        rows = own.cond.rows
        found, nu = other.nu_lookup(rows)
        row_of = own.cond.row_of
        st = other.cond.lookup(own.cond.keys)
        t1 = np.bincount(row_of, weights=np.abs(own.cond.vals - st), minlength=len(rows))
        matched = np.bincount(row_of, weights=st, minlength=len(rows))
        return nu + self.schedule(own.tau) * (t1 + 1.0 - matched), found

    def dominated(self, j: VTuple, others: list[VTuple]) -> bool:
        cands = [k for k in others if k is not j and len(k.cond.rows) == len(j.cond.rows)
                 and np.array_equal(k.cond.rows, j.cond.rows)]
        if not cands:
            return False
        diffs = []
        for k in cands:
            g, found = self._row_values_at(k, j)
            if not found.all():
                continue
            d = g - j.nu
            if np.all(d <= 1e-12):
                return True
            diffs.append(d)
        if not diffs:
            return False
        D = np.array(diffs).T
        _, v = bayesian_game_lp(D, 1, D.shape[0], 1, D.shape[1], self.lp_method)
        return v <= 1e-12

    def prune(self, tau: int) -> int:
        """Move dominated V tuples of stage ``tau`` to the archive."""
        live = list(self.bagV[tau])
        removed = 0
        for j in sorted(live, key=lambda x: -x.id):
            rest = [k for k in live if k is not j]
            if rest and self.dominated(j, rest):
                live.remove(j)
                self.archive[tau].append(j)
                removed += 1
        self.bagV[tau] = sorted(live, key=lambda x: x.id)
        return removed

    # ------------------------------------------------------------ inspection

    def sizes(self) -> tuple[list[int], list[int]]:
        return [len(b) for b in self.bagV], [len(b) for b in self.bagW]

    def dump(self) -> list[dict]:
        out = []
        for t in range(self.H):
            out.append({
                "tau": t,
                "V": [{"id": v.id, "rows": v.cond.rows.tolist(), "nu": v.nu.tolist(),
                       "delta": {str(w.id): p for w, p in v.delta}} for v in self.bagV[t]],
                "W": [{"id": w.id, "next": None if w.next is None else w.next.id}
                      for w in self.bagW[t]],
            })
        return out


def _with_uniform(rule: DecisionRule) -> DecisionRule:
    if rule.fallback == "uniform":
        return rule
    return DecisionRule(rule.histories, rule.probs, rule.n_actions, "uniform")
