"""Deterministic optimistic optimization over products of probability simplexes.

The domain is a product of ``n_blocks`` copies of the unit simplex in R^n,
measured with the weighted norm sum_b w_b * ||x_b - x'_b||_1. Cells are
products of per-block hypercubes; each is represented by a point of the
simplex inside it.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from itertools import count, product
from typing import Callable

import numpy as np

SUM_TOL = 1e-12
DIM_CAP = 4
WARM_CAP = 4


def simplex_cube_intersection(x_inf, x_sup) -> np.ndarray | None:
    """A point of the unit simplex inside the box [x_inf, x_sup], or None.

    The box meets the simplex iff sum(x_inf) <= 1 <= sum(x_sup); the point is
    taken on the segment between the two corners.
    """
    x_inf = np.asarray(x_inf, dtype=float)
    x_sup = np.asarray(x_sup, dtype=float)
    lo, hi = x_inf.sum(), x_sup.sum()
    if lo > 1.0 + SUM_TOL or hi < 1.0 - SUM_TOL:
        return None
    span = hi - lo
    t = 0.0 if span <= 0 else min(max((1.0 - lo) / span, 0.0), 1.0)
    x = x_inf + t * (x_sup - x_inf)
    return x


@dataclass
class DooResult:
    x: np.ndarray
    value: float
    bound: float
    n_evals: int
    converged: bool


def _radius_coef(n: int) -> int:
    # max L1 distance between two simplex points of a cube of side 1
    return 2 * (n // 2)


def _split(lo, side, rad, x, weights, coef, bits):
    """Children of stacked cells, each cut along its widest block; only
    sub-cubes meeting the simplex are kept."""
    c, _, n = lo.shape
    rows = np.arange(c)
    b = np.argmax(weights * rad, axis=1)
    half = side[rows, b] / 2.0
    clo_all = lo[rows, b][:, None, :] + half[:, None, None] * bits[None]
    s_lo = clo_all.sum(axis=2)
    keep = (s_lo <= 1.0 + SUM_TOL) & (s_lo + n * half[:, None] >= 1.0 - SUM_TOL)
    ci, ji = np.nonzero(keep)
    k = np.arange(len(ci))
    bk, h = b[ci], half[ci]
    clo_b = clo_all[ci, ji]
    t = np.clip((1.0 - s_lo[ci, ji]) / (n * h), 0.0, 1.0)
    pts = clo_b + t[:, None] * h[:, None]
    clos, sides, xs, rads = lo[ci], side[ci], x[ci], rad[ci]
    clos[k, bk] = clo_b
    sides[k, bk] = h
    xs[k, bk] = pts
    # L1 reach of the reference point inside the sub-cube
    reach = np.maximum(pts - clo_b, clo_b + h[:, None] - pts).sum(axis=1)
    rads[k, bk] = np.minimum(coef * h, reach)
    return clos, sides, xs, rads, rads @ weights


def doo_maximize(f: Callable, n_blocks: int, n: int, weights, lam: float, eps: float,
                 max_evals: int = 200_000, stop_at: float = np.inf, with_cutoff: bool = False,
                 batch: int = 0, exhausted: Callable[[], bool] | None = None) -> DooResult:
    """Maximize a ``lam``-Lipschitz ``f`` over a product of simplexes.

    ``f`` receives an (n_blocks, n) array with rows on the simplex. Returns the
    best point found, its value and a certified upper bound on the supremum.
    The search also ends once a value >= ``stop_at`` is found. With
    ``with_cutoff`` f is called as f(x, cutoff): any returned value v >= f(x)
    is acceptable as long as v <= cutoff implies f(x) <= cutoff, which lets
    callers abandon cells that cannot be expanded.

    With ``batch`` > 0, ``f`` is vectorized instead: it maps a (k, n_blocks, n)
    stack to k values, and up to ``batch`` open cells are split per round.
    ``exhausted`` is an extra budget test polled once per round.
    """
    if n > DIM_CAP:
        raise ValueError(f"simplex dimension {n} exceeds the DOO cap of {DIM_CAP}")
    if batch and with_cutoff:
        raise ValueError("batched evaluation does not take a cutoff")
    weights = np.asarray(weights, dtype=float).reshape(n_blocks)
    coef = _radius_coef(n)
    bits = np.array(list(product((0.0, 1.0), repeat=n)))
    tie = count()
    lo = np.zeros((n_blocks, n))
    side = np.ones(n_blocks)
    x = np.full((n_blocks, n), 1.0 / n)
    rad = np.full(n_blocks, min(coef, np.maximum(x[0], 1.0 - x[0]).sum()), dtype=float)
    if batch:
        v = float(f(x[None])[0])
    else:
        v = float(f(x, -np.inf) if with_cutoff else f(x))
    evals = 1
    best_x, best_v = x, v
    heap = [(-(v + lam * float(weights @ rad)), next(tie), lo, side, rad, x)]
    converged = True
    while True:
        if -heap[0][0] - best_v <= eps or best_v >= stop_at:
            break
        if evals >= max_evals or (exhausted is not None and exhausted()):
            converged = False
            break
        cells = [heapq.heappop(heap)]
        while len(cells) < batch and heap and -heap[0][0] - best_v > eps:
            cells.append(heapq.heappop(heap))
        clos, sides, xs, rads, rs = _split(*(np.stack([c[j] for c in cells]) for j in range(2, 6)),
                                           weights, coef, bits)
        if batch:
            vals = np.asarray(f(xs), dtype=float)
            evals += len(vals)
            i = int(np.argmax(vals))
            if vals[i] > best_v:
                best_x, best_v = xs[i], float(vals[i])
        else:
            vals = np.empty(len(xs))
            for i in range(len(xs)):
                r = float(rs[i])
                cut = min(best_v, best_v - lam * r + eps)
                vals[i] = f(xs[i], cut) if with_cutoff else f(xs[i])
                evals += 1
                if vals[i] > best_v:
                    best_x, best_v = xs[i], float(vals[i])
        for i in range(len(xs)):
            heapq.heappush(heap, (-(vals[i] + lam * rs[i]), next(tie), clos[i], sides[i],
                                  rads[i], xs[i]))
    bound = max(-heap[0][0], best_v)
    return DooResult(best_x, best_v, bound, evals, converged)


def doo_minimize(f: Callable, n_blocks: int, n: int, weights, lam: float, eps: float,
                 max_evals: int = 200_000, stop_at: float = -np.inf, batch: int = 0) -> DooResult:
    """Minimization counterpart; ``bound`` is a certified lower bound."""
    res = doo_maximize(lambda y: -np.asarray(f(y)), n_blocks, n, weights, lam, eps, max_evals,
                       -stop_at, batch=batch)
    return DooResult(res.x, -res.value, -res.bound, res.n_evals, res.converged)


@dataclass
class BiDooResult:
    x: np.ndarray
    y: np.ndarray
    value: float
    bound: float
    n_evals: int
    converged: bool


def bidoo(f: Callable[[np.ndarray, np.ndarray], float], x_shape: tuple[int, int], x_weights,
          y_shape: tuple[int, int], y_weights, lam: float, eps1: float, eps2: float,
          max_evals: int = 200_000, batch: int = 0) -> BiDooResult:
    """Approximate max_x min_y f(x, y) with two nested DOO runs.

    ``value`` is within eps1 + eps2 of the max-min; ``bound`` is a certified
    upper bound on it. ``y`` is the inner minimizer found at ``x``.
    ``max_evals`` caps the evaluations of f over both levels. With
    ``batch`` > 0, f(x, Y) takes a stack of y points and returns their values.
    """
    inner: dict[bytes, np.ndarray] = {}
    warm: list[np.ndarray] = []
    total = [0]
    ok = [True]

    def g(x: np.ndarray, cutoff: float) -> float:
        # any y gives an upper estimate of min_y f(x, y); known minimizers
        # usually clear the cutoff without a full inner run
        if warm:
            vals = f(x, np.stack(warm)) if batch else [f(x, y) for y in warm]
            total[0] += len(warm)
            for y, v in zip(warm, vals):
                if v <= cutoff:
                    inner[x.tobytes()] = y
                    return float(v)
            if total[0] >= max_evals:
                # budget spent: keep a valid overestimate and stop refining
                ok[0] = False
                i = int(np.argmin(vals))
                inner[x.tobytes()] = warm[i]
                return float(vals[i])
        res = doo_minimize(lambda y: f(x, y), *y_shape, y_weights, lam, eps2,
                           max(max_evals - total[0], 1), cutoff, batch=batch)
        inner[x.tobytes()] = res.x
        total[0] += res.n_evals
        ok[0] &= res.converged
        if not any(np.array_equal(res.x, y) for y in warm):
            warm.insert(0, res.x)
            del warm[WARM_CAP:]
        return res.value

    outer = doo_maximize(g, *x_shape, x_weights, lam, eps1, max_evals, with_cutoff=True,
                         exhausted=lambda: total[0] >= max_evals)
    y = inner[outer.x.tobytes()]
    return BiDooResult(outer.x, y, outer.value, outer.bound, total[0],
                       outer.converged and ok[0])
