"""Two-player zero-sum POSG model, text parser and belief filtering."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

PROB_ZERO = 1e-12
SUM_TOL = 1e-9


class ModelParseError(ValueError):
    """Raised on malformed model text; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


@dataclass(frozen=True, eq=False)
class PosgModel:
    """Finite zs-POSG. Player 1 maximizes ``reward``, player 2 minimizes it.

    ``dynamics[s, a1, a2, s2, z1, z2]`` is the joint probability of next state
    and observations, ``reward[s, a1, a2]`` the immediate payoff to player 1.
    """

    states: tuple[str, ...]
    actions: tuple[tuple[str, ...], tuple[str, ...]]
    observations: tuple[tuple[str, ...], tuple[str, ...]]
    dynamics: np.ndarray
    reward: np.ndarray
    horizon: int
    discount: float
    initial_belief: np.ndarray
    name: str = ""
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        validate_model(self)
        self.dynamics.setflags(write=False)
        self.reward.setflags(write=False)
        self.initial_belief.setflags(write=False)

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> tuple[int, int]:
        return len(self.actions[0]), len(self.actions[1])

    @property
    def n_observations(self) -> tuple[int, int]:
        return len(self.observations[0]), len(self.observations[1])

    @property
    def r_min(self) -> float:
        return float(self.reward.min())

    @property
    def r_max(self) -> float:
        return float(self.reward.max())

    def with_horizon(self, horizon: int) -> "PosgModel":
        if horizon == self.horizon:
            return self
        return PosgModel(self.states, self.actions, self.observations, self.dynamics,
                         self.reward, int(horizon), self.discount, self.initial_belief,
                         self.name)

    @cached_property
    def mirror(self) -> "PosgModel":
        """The same game seen from player 2: roles swapped and payoff negated."""
        m = PosgModel(
            self.states,
            (self.actions[1], self.actions[0]),
            (self.observations[1], self.observations[0]),
            np.ascontiguousarray(self.dynamics.transpose(0, 2, 1, 3, 5, 4)),
            np.ascontiguousarray(-self.reward.transpose(0, 2, 1)),
            self.horizon,
            self.discount,
            self.initial_belief,
            self.name + "~mirror" if self.name else "mirror",
        )
        object.__setattr__(m, "mirror", self)
        return m

    @cached_property
    def step_kernel(self) -> np.ndarray:
        """dynamics reshaped to [s, a1, a2, z1, z2, s2] for filtering."""
        return np.ascontiguousarray(self.dynamics.transpose(0, 1, 2, 4, 5, 3))


def validate_model(m: PosgModel) -> None:
    nS = len(m.states)
    nA1, nA2 = len(m.actions[0]), len(m.actions[1])
    nZ1, nZ2 = len(m.observations[0]), len(m.observations[1])
    if min(nS, nA1, nA2, nZ1, nZ2) < 1:
        raise ModelParseError("every index set must be nonempty")
    if m.dynamics.shape != (nS, nA1, nA2, nS, nZ1, nZ2):
        raise ModelParseError(f"dynamics shape {m.dynamics.shape} does not match index sets")
    if m.reward.shape != (nS, nA1, nA2):
        raise ModelParseError(f"reward shape {m.reward.shape} does not match index sets")
    if m.initial_belief.shape != (nS,):
        raise ModelParseError("initial belief has wrong length")
    if m.horizon < 1:
        raise ModelParseError("horizon must be >= 1")
    if not 0.0 <= m.discount <= 1.0:
        raise ModelParseError("discount must lie in [0, 1]")
    if np.any(m.dynamics < 0) or np.any(m.dynamics > 1 + SUM_TOL):
        raise ModelParseError("transition probabilities must lie in [0, 1]")
    sums = m.dynamics.sum(axis=(3, 4, 5))
    bad = np.argwhere(np.abs(sums - 1.0) > SUM_TOL)
    if len(bad):
        s, a1, a2 = bad[0]
        raise ModelParseError(
            f"transition probabilities for (a1={m.actions[0][a1]}, a2={m.actions[1][a2]}, "
            f"s={m.states[s]}) sum to {sums[s, a1, a2]:.12g}, expected 1")
    if np.any(m.initial_belief < 0) or abs(m.initial_belief.sum() - 1.0) > SUM_TOL:
        raise ModelParseError("start distribution must be a probability vector")
    if not np.all(np.isfinite(m.reward)):
        raise ModelParseError("rewards must be finite")


# ---------------------------------------------------------------- parsing

_HEADER_KEYS = ("agents", "discount", "horizon", "states", "actions", "observations", "start")


def _indices(token: str, names: Sequence[str], what: str, line: int) -> list[int]:
    if token == "*":
        return list(range(len(names)))
    if token in names:
        return [names.index(token)]
    if token.isdigit() and int(token) < len(names):
        return [int(token)]
    raise ModelParseError(f"unknown {what} '{token}'", line)


def _split_fields(body: str, expected: int, line: int) -> list[list[str]]:
    parts = [p.split() for p in body.split(":")]
    if len(parts) != expected or any(not p for p in parts):
        raise ModelParseError(f"expected {expected} ':'-separated fields", line)
    return parts


def parse_model(text: str, name: str = "") -> PosgModel:
    """Parse the line-oriented ``.zsposg`` format into a validated model."""
    header: dict[str, object] = {}
    pending: str | None = None
    pending_rows: list[list[str]] = []
    body: list[tuple[int, str, str]] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if pending is not None:
            pending_rows.append(line.split())
            if len(pending_rows) == 2:
                header[pending] = (tuple(pending_rows[0]), tuple(pending_rows[1]))
                pending, pending_rows = None, []
            continue
        key, sep, rest = line.partition(":")
        key = key.strip()
        if not sep:
            raise ModelParseError(f"cannot parse '{line}'", lineno)
        rest = rest.strip()
        if key in ("T", "R"):
            body.append((lineno, key, rest))
            continue
        if key not in _HEADER_KEYS:
            raise ModelParseError(f"unknown directive '{key}'", lineno)
        if key in header:
            raise ModelParseError(f"duplicate directive '{key}'", lineno)
        try:
            if key == "agents":
                if int(rest) != 2:
                    raise ModelParseError("only 2-agent games are supported", lineno)
                header[key] = 2
            elif key == "discount":
                header[key] = float(rest)
            elif key == "horizon":
                header[key] = int(rest)
            elif key == "states":
                header[key] = tuple(rest.split())
            elif key == "start":
                header[key] = np.array([float(x) for x in rest.split()])
            else:
                if rest:
                    raise ModelParseError(f"'{key}:' expects two lines of names below it", lineno)
                pending = key
        except ValueError as exc:
            if isinstance(exc, ModelParseError):
                raise
            raise ModelParseError(f"bad value for '{key}': {rest}", lineno) from None
    if pending is not None:
        raise ModelParseError(f"'{pending}:' needs two lines of names")
    for key in _HEADER_KEYS:
        if key not in header:
            raise ModelParseError(f"missing directive '{key}'")

    states = header["states"]
    actions = header["actions"]
    observations = header["observations"]
    nS = len(states)
    nA1, nA2 = len(actions[0]), len(actions[1])
    nZ1, nZ2 = len(observations[0]), len(observations[1])
    P = np.zeros((nS, nA1, nA2, nS, nZ1, nZ2))
    R = np.zeros((nS, nA1, nA2))

    for lineno, key, rest in body:
        if key == "T":
            (acts, s, s2, obs, prob) = _split_fields(rest, 5, lineno)
            if len(acts) != 2 or len(obs) != 2 or len(s) != 1 or len(s2) != 1 or len(prob) != 1:
                raise ModelParseError("expected 'T: a1 a2 : s : s' : z1 z2 : prob'", lineno)
            try:
                p = float(prob[0])
            except ValueError:
                raise ModelParseError(f"bad probability '{prob[0]}'", lineno) from None
            if not 0.0 <= p <= 1.0:
                raise ModelParseError(f"probability {p} outside [0, 1]", lineno)
            ix = np.ix_(_indices(s[0], states, "state", lineno),
                        _indices(acts[0], actions[0], "action", lineno),
                        _indices(acts[1], actions[1], "action", lineno),
                        _indices(s2[0], states, "state", lineno),
                        _indices(obs[0], observations[0], "observation", lineno),
                        _indices(obs[1], observations[1], "observation", lineno))
            P[ix] = p
        else:
            (acts, s, val) = _split_fields(rest, 3, lineno)
            if len(acts) != 2 or len(s) != 1 or len(val) != 1:
                raise ModelParseError("expected 'R: a1 a2 : s : value'", lineno)
            try:
                v = float(val[0])
            except ValueError:
                raise ModelParseError(f"bad reward '{val[0]}'", lineno) from None
            ix = np.ix_(_indices(s[0], states, "state", lineno),
                        _indices(acts[0], actions[0], "action", lineno),
                        _indices(acts[1], actions[1], "action", lineno))
            R[ix] = v

    return PosgModel(states, actions, observations, P, R, header["horizon"],
                     header["discount"], header["start"], name)


def load_model(path: str | Path) -> PosgModel:
    path = Path(path)
    return parse_model(path.read_text(encoding="utf-8"), name=path.stem)


def format_model(m: PosgModel) -> str:
    """Serialize a model back to ``.zsposg`` text (nonzero entries only)."""
    out = ["agents: 2", f"discount: {float(m.discount)!r}", f"horizon: {m.horizon}",
           "states: " + " ".join(m.states), "actions:",
           " ".join(m.actions[0]), " ".join(m.actions[1]), "observations:",
           " ".join(m.observations[0]), " ".join(m.observations[1]),
           "start: " + " ".join(repr(float(x)) for x in m.initial_belief)]
    for s, a1, a2, s2, z1, z2 in zip(*np.nonzero(m.dynamics)):
        out.append(f"T: {m.actions[0][a1]} {m.actions[1][a2]} : {m.states[s]} : {m.states[s2]} : "
                   f"{m.observations[0][z1]} {m.observations[1][z2]} : {float(m.dynamics[s, a1, a2, s2, z1, z2])!r}")
    for s, a1, a2 in zip(*np.nonzero(m.reward)):
        out.append(f"R: {m.actions[0][a1]} {m.actions[1][a2]} : {m.states[s]} : {float(m.reward[s, a1, a2])!r}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- histories and beliefs

def history_code(steps: Sequence[tuple[int, int]], n_obs: int, n_act: int) -> int:
    """Integer code of a private history; lexicographic on (action, observation)."""
    code = 0
    for a, z in steps:
        code = code * (n_act * n_obs) + a * n_obs + z
    return code


def decode_history(code: int, length: int, n_obs: int, n_act: int) -> list[tuple[int, int]]:
    base = n_act * n_obs
    steps = []
    for _ in range(length):
        code, d = divmod(int(code), base)
        steps.append((d // n_obs, d % n_obs))
    return steps[::-1]


def belief_update(model: PosgModel, b: np.ndarray, a1: int, a2: int, z1: int, z2: int
                  ) -> tuple[np.ndarray, float]:
    """One Bayes step. Returns (next belief, Pr(z1, z2 | b, a1, a2))."""
    un = b @ model.step_kernel[:, a1, a2, z1, z2, :]
    norm = float(un.sum())
    if norm < PROB_ZERO:
        return un, 0.0
    return un / norm, norm


def belief_for_history(model: PosgModel, h: tuple[Sequence[tuple[int, int]], Sequence[tuple[int, int]]]
                       ) -> tuple[np.ndarray, float]:
    """Belief b(.|h) of a joint history and the product of filter normalizers.

    ``h`` is a pair of per-player lists of (action, observation). For an
    impossible history the reach is 0 and the returned vector is unnormalized.
    """
    h1, h2 = h
    if len(h1) != len(h2):
        raise ValueError("per-player histories must have equal length")
    if len(h1) > model.horizon:
        raise ValueError("history longer than the horizon")
    nA1, nA2 = model.n_actions
    nZ1, nZ2 = model.n_observations
    cache = model._cache.setdefault("beliefs", {})
    key = (len(h1), history_code(h1, nZ1, nA1), history_code(h2, nZ2, nA2))
    if key in cache:
        return cache[key]
    if not h1:
        res = (np.array(model.initial_belief), 1.0)
    else:
        b, reach = belief_for_history(model, (h1[:-1], h2[:-1]))
        (a1, z1), (a2, z2) = h1[-1], h2[-1]
        for a, n, z, nz in ((a1, nA1, z1, nZ1), (a2, nA2, z2, nZ2)):
            if not (0 <= a < n and 0 <= z < nz):
                raise IndexError("history index out of range")
        if reach == 0.0:
            res = (b, 0.0)
        else:
            b2, norm = belief_update(model, b, a1, a2, z1, z2)
            res = (b2, reach * norm) if norm > 0 else (b2, 0.0)
    cache[key] = res
    return res


def expected_state_reward(model: PosgModel, b: np.ndarray, a1: int, a2: int) -> float:
    return float(np.dot(b, model.reward[:, a1, a2]))


def random_model(rng: np.random.Generator, n_states: int = 2, n_actions=(2, 2),
                 n_observations=(2, 2), horizon: int = 2, discount: float = 1.0,
                 sparsity: float = 0.0, name: str = "random") -> PosgModel:
    """Random game with Dirichlet dynamics and rewards in [-1, 1].

    ``sparsity`` zeroes that fraction of each transition row (at least one entry kept).
    """
    nA1, nA2 = n_actions
    nZ1, nZ2 = n_observations
    width = n_states * nZ1 * nZ2
    P = rng.dirichlet(np.ones(width), size=(n_states, nA1, nA2))
    if sparsity > 0:
        mask = rng.random(P.shape) >= sparsity
        mask[..., 0] |= ~mask.any(axis=-1)
        P = P * mask
        P /= P.sum(axis=-1, keepdims=True)
    P = P.reshape(n_states, nA1, nA2, n_states, nZ1, nZ2)
    R = np.round(rng.uniform(-1, 1, size=(n_states, nA1, nA2)), 3)
    b0 = rng.dirichlet(np.ones(n_states))
    return PosgModel(tuple(f"s{i}" for i in range(n_states)),
                     (tuple(f"a{i}" for i in range(nA1)), tuple(f"b{i}" for i in range(nA2))),
                     (tuple(f"y{i}" for i in range(nZ1)), tuple(f"z{i}" for i in range(nZ2))),
                     P, R, horizon, discount, b0, name)
