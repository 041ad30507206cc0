"""Small dense LPs: a generic solver front end and the stage / terminal games."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .model import PosgModel
from .occupancy import DecisionRule, OccupancyState, entry_rewards

FEAS_TOL = 1e-9


class LpError(RuntimeError):
    pass


@dataclass
class LpSolution:
    """Solution of ``min c.x`` s.t. ``A_ub x <= b_ub``, ``A_eq x = b_eq``.

    Duals follow the sensitivity convention d(objective)/d(rhs).
    """

    x: np.ndarray
    value: float
    dual_ub: np.ndarray
    dual_eq: np.ndarray
    status: str = "optimal"


def _as2d(a, n: int) -> np.ndarray:
    if a is None:
        return np.zeros((0, n))
    return np.atleast_2d(np.asarray(a, dtype=float)).reshape(-1, n)


def lp_solve(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, free=None,
             method: str = "highs") -> LpSolution:
    """Minimize ``c.x`` with ``x >= 0`` except the variables flagged in ``free``.

    ``method`` is ``"highs"`` (scipy) or ``"simplex"`` (dense two-phase
    simplex with Bland's rule, deterministic on fixed input).
    """
    c = np.asarray(c, dtype=float)
    n = len(c)
    A_ub, A_eq = _as2d(A_ub, n), _as2d(A_eq, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    free = np.zeros(n, bool) if free is None else np.asarray(free, dtype=bool)
    if method == "highs":
        bounds = [(None, None) if f else (0, None) for f in free]
        res = linprog(c, A_ub=A_ub if len(b_ub) else None, b_ub=b_ub if len(b_ub) else None,
                      A_eq=A_eq if len(b_eq) else None, b_eq=b_eq if len(b_eq) else None,
                      bounds=bounds, method="highs")
        if res.status == 2:
            raise LpError("infeasible")
        if res.status == 3:
            raise LpError("unbounded")
        if res.status != 0:
            raise LpError(res.message)
        dual_ub = res.ineqlin.marginals if len(b_ub) else np.zeros(0)
        dual_eq = res.eqlin.marginals if len(b_eq) else np.zeros(0)
        return LpSolution(res.x, float(res.fun), np.asarray(dual_ub), np.asarray(dual_eq))
    if method == "simplex":
        return _simplex(c, A_ub, b_ub, A_eq, b_eq, free)
    raise ValueError(f"unknown LP method {method!r}")


def _pivot(T: np.ndarray, basis: list[int], r: int, col: int) -> None:
    T[r] /= T[r, col]
    for i in range(T.shape[0]):
        if i != r and T[i, col] != 0.0:
            T[i] -= T[i, col] * T[r]
    basis[r] = col


def _bland_loop(T: np.ndarray, basis: list[int], allowed: np.ndarray, max_iter: int = 50000) -> None:
    m = T.shape[0] - 1
    for _ in range(max_iter):
        cost = T[-1, :-1]
        cands = np.nonzero((cost < -FEAS_TOL) & allowed)[0]
        if len(cands) == 0:
            return
        col = int(cands[0])
        column = T[:m, col]
        pos = column > FEAS_TOL
        if not pos.any():
            raise LpError("unbounded")
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / column[pos]
        best = ratios.min()
        ties = np.nonzero(ratios <= best + 1e-12)[0]
        r = int(min(ties, key=lambda i: basis[i]))
        _pivot(T, basis, r, col)
    raise LpError("simplex iteration limit")


def _simplex(c, A_ub, b_ub, A_eq, b_eq, free) -> LpSolution:
    n = len(c)
    # split free variables into positive and negative parts
    cols = [np.eye(n)[:, j] for j in range(n)] + [-np.eye(n)[:, j] for j in np.nonzero(free)[0]]
    S = np.array(cols).T  # x = S @ x_std
    m_ub, m_eq = len(b_ub), len(b_eq)
    A = np.vstack([np.hstack([A_ub @ S, np.eye(m_ub)]),
                   np.hstack([A_eq @ S, np.zeros((m_eq, m_ub))])])
    b = np.concatenate([b_ub, b_eq])
    cs = np.concatenate([c @ S, np.zeros(m_ub)])
    sign = np.where(b < 0, -1.0, 1.0)
    A = A * sign[:, None]
    b = b * sign
    m, nv = A.shape
    # phase 1 with one artificial per row
    T = np.zeros((m + 1, nv + m + 1))
    T[:m, :nv] = A
    T[:m, nv:nv + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :nv] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(nv, nv + m))
    allowed = np.ones(nv + m, bool)
    _bland_loop(T, basis, allowed)
    if -T[-1, -1] > 1e-7:
        raise LpError("infeasible")
    # drive remaining artificials out of the basis; drop redundant rows
    keep = np.ones(m, bool)
    for r in range(m):
        if basis[r] >= nv:
            nz = np.nonzero(np.abs(T[r, :nv]) > 1e-9)[0]
            if len(nz):
                _pivot(T, basis, r, int(nz[0]))
            else:
                keep[r] = False
    rows = np.nonzero(keep)[0]
    T2 = np.zeros((len(rows) + 1, nv + 1))
    T2[:-1, :nv] = T[rows, :nv]
    T2[:-1, -1] = T[rows, -1]
    basis2 = [basis[r] for r in rows]
    T2[-1, :nv] = cs
    for i, j in enumerate(basis2):
        T2[-1] -= cs[j] * T2[i]
    _bland_loop(T2, basis2, np.ones(nv, bool))
    xs = np.zeros(nv)
    for i, j in enumerate(basis2):
        xs[j] = T2[i, -1]
    x = S @ xs[:S.shape[1]]
    # duals from the final basis of the kept rows: y B = c_B
    B = A[rows][:, basis2]
    y_kept = np.linalg.solve(B.T, cs[basis2])
    y = np.zeros(m)
    y[rows] = y_kept
    y = y * sign
    return LpSolution(x, float(c @ x), y[:m_ub], y[m_ub:])


# ---------------------------------------------------------------- bilinear Bayesian games

def bayesian_game_lp(G: np.ndarray, n1: int, A1: int, n2: int, A2: int,
                     method: str = "highs") -> tuple[np.ndarray, float]:
    """max_x sum_j min_b sum_r x_r G[r, (j, b)] over per-type simplexes.

    Rows of ``G`` are indexed by (i, a) = i*A1 + a, columns by (j, b) = j*A2 + b.
    Returns player 1's rule as an (n1, A1) array and the game value.
    """
    nx = n1 * A1
    c = np.concatenate([np.zeros(nx), -np.ones(n2)])
    A_ub = np.zeros((n2 * A2, nx + n2))
    A_ub[:, :nx] = -G.T
    A_ub[np.arange(n2 * A2), nx + np.repeat(np.arange(n2), A2)] = 1.0
    A_eq = np.zeros((n1, nx + n2))
    A_eq[np.repeat(np.arange(n1), A1), np.arange(nx)] = 1.0
    free = np.concatenate([np.zeros(nx, bool), np.ones(n2, bool)])
    sol = lp_solve(c, A_ub, np.zeros(n2 * A2), A_eq, np.ones(n1), free, method=method)
    x = np.clip(sol.x[:nx].reshape(n1, A1), 0.0, None)
    x /= x.sum(axis=1, keepdims=True)
    return x, -sol.value


def solve_primal(M: np.ndarray, n_hist: int, method: str = "highs") -> tuple[np.ndarray, float]:
    """Maximizer's stage LP: rows (history, action), columns stored opponent tuples."""
    if M.shape[1] == 0:
        raise LpError("stage matrix has no columns")
    A = M.shape[0] // n_hist
    return bayesian_game_lp(M, n_hist, A, 1, M.shape[1], method)


def solve_dual(M: np.ndarray, n_hist: int, method: str = "highs") -> tuple[np.ndarray, float]:
    """Minimizer's LP: a distribution over columns minimizing sum_h max_a (M delta)."""
    A = M.shape[0] // n_hist
    W = M.shape[1]
    delta, v = bayesian_game_lp(-M.T, 1, W, n_hist, A, method)
    return delta[0], -v


def terminal_payoff(model: PosgModel, sigma: OccupancyState) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bilinear last-stage payoff G[(h1,a1),(h2,a2)] plus the row/column history codes."""
    hist1, inv1 = np.unique(sigma.h1, return_inverse=True)
    hist2, inv2 = np.unique(sigma.h2, return_inverse=True)
    nA1, nA2 = model.n_actions
    R = sigma.p[:, None, None] * entry_rewards(model, sigma)
    G = np.zeros((len(hist1), nA1, len(hist2), nA2))
    np.add.at(G, (inv1, slice(None), inv2, slice(None)), R)
    return G.reshape(len(hist1) * nA1, len(hist2) * nA2), hist1, hist2


def solve_terminal_game(model: PosgModel, sigma: OccupancyState, method: str = "highs"
                        ) -> tuple[DecisionRule, DecisionRule, float]:
    """Equilibrium of max_{b1} min_{b2} r(sigma, b1, b2) over per-history simplexes."""
    G, hist1, hist2 = terminal_payoff(model, sigma)
    nA1, nA2 = model.n_actions
    x, v1 = bayesian_game_lp(G, len(hist1), nA1, len(hist2), nA2, method)
    y, v2 = bayesian_game_lp(-G.T, len(hist2), nA2, len(hist1), nA1, method)
    if abs(v1 + v2) > 1e-6 * max(1.0, abs(v1)):
        raise LpError(f"terminal game values disagree: {v1} vs {-v2}")
    return DecisionRule.from_rows(hist1, x), DecisionRule.from_rows(hist2, y), v1
