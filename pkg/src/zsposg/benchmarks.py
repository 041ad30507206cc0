"""Builders for the bundled benchmark games.

The tiger variants are reconstructions with the published state, action and
observation counts; their numeric parameters are our own choices. Mabc and
Recycling Robot follow the usual cooperative descriptions, turned zero-sum by
letting player 2 minimize the shared objective.
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from .model import PosgModel, format_model, load_model

ACCURACY = 0.85


def _indep_obs(o1: np.ndarray, o2: np.ndarray) -> np.ndarray:
    """Joint observation table [z1, z2] from independent marginals."""
    return np.outer(o1, o2)


def adversarial_tiger(horizon: int = 2) -> PosgModel:
    """Tiger for player 1 with an opponent who can spoil the listening.

    Player 1 listens or opens a door; player 2 idles or plays a decoy sound
    that drops player 1's hearing accuracy to 0.6 at a cost of 0.05 to
    player 2. Both players hear the tiger with accuracy 0.85 otherwise.
    """
    S = ("tiger-left", "tiger-right")
    A1 = ("listen", "open-left", "open-right")
    A2 = ("idle", "decoy")
    Z = ("hear-left", "hear-right")
    P = np.zeros((2, 3, 2, 2, 2, 2))
    R = np.zeros((2, 3, 2))
    for s in range(2):
        for a2 in range(2):
            acc1 = 0.6 if a2 == 1 else ACCURACY
            o1 = np.array([acc1, 1 - acc1]) if s == 0 else np.array([1 - acc1, acc1])
            o2 = np.array([ACCURACY, 1 - ACCURACY]) if s == 0 else np.array([1 - ACCURACY, ACCURACY])
            P[s, 0, a2, s] = _indep_obs(o1, o2)
            for a1 in (1, 2):
                # opening resets the tiger uniformly; observations carry no information
                for s2 in range(2):
                    P[s, a1, a2, s2] = 0.5 * _indep_obs(np.full(2, 0.5), np.full(2, 0.5))
            bonus = 0.05 if a2 == 1 else 0.0
            R[s, 0, a2] = -0.1 + bonus
            R[s, 1, a2] = (-2.0 if s == 0 else 1.0) + bonus
            R[s, 2, a2] = (1.0 if s == 0 else -2.0) + bonus
    return PosgModel(S, (A1, A2), (Z, Z), P, R, horizon, 1.0, np.full(2, 0.5), "adversarial_tiger")


def competitive_tiger(horizon: int = 2) -> PosgModel:
    """Both players race to open the treasure door; jamming silences the rival.

    Each player's payoff is u(own action) and the game pays player 1
    u(a1) - u(a2), with u(listen) = -0.1, u(jam) = -0.05, u(treasure) = 1
    and u(tiger) = -2. A listening player hears the tiger with accuracy 0.85
    unless jammed; otherwise the observation is silence.
    """
    S = ("tiger-left", "tiger-right")
    A = ("listen", "open-left", "open-right", "jam")
    Z = ("hear-left", "hear-right", "silence")
    P = np.zeros((2, 4, 4, 2, 3, 3))
    R = np.zeros((2, 4, 4))

    def utility(s: int, a: int) -> float:
        if a == 0:
            return -0.1
        if a == 3:
            return -0.05
        opened_tiger = (a == 1) == (s == 0)
        return -2.0 if opened_tiger else 1.0

    def hearing(s: int, a: int, jammed: bool) -> np.ndarray:
        if a != 0 or jammed:
            return np.array([0.0, 0.0, 1.0])
        return np.array([ACCURACY, 1 - ACCURACY, 0.0]) if s == 0 else \
            np.array([1 - ACCURACY, ACCURACY, 0.0])

    silence = np.array([0.0, 0.0, 1.0])
    for s in range(2):
        for a1 in range(4):
            for a2 in range(4):
                R[s, a1, a2] = utility(s, a1) - utility(s, a2)
                if a1 in (1, 2) or a2 in (1, 2):
                    for s2 in range(2):
                        P[s, a1, a2, s2] = 0.5 * _indep_obs(silence, silence)
                else:
                    P[s, a1, a2, s] = _indep_obs(hearing(s, a1, a2 == 3), hearing(s, a2, a1 == 3))
    return PosgModel(S, (A, A), (Z, Z), P, R, horizon, 1.0, np.full(2, 0.5), "competitive_tiger")


def mabc(horizon: int = 2) -> PosgModel:
    """Multi-access broadcast channel with a jamming second node.

    State = (buffer 1, buffer 2). A transmission succeeds, paying 1, when
    exactly one node sends and its buffer is full; the buffer then empties.
    Empty buffers refill with probability 0.9 (node 1) and 0.1 (node 2).
    Each node observes its own buffer. Player 2 minimizes the throughput.
    """
    S = ("e-e", "e-f", "f-e", "f-f")
    A = ("wait", "send")
    Z = ("empty", "full")
    arrival = (0.9, 0.1)
    P = np.zeros((4, 2, 2, 4, 2, 2))
    R = np.zeros((4, 2, 2))
    for s in range(4):
        b = (s >> 1, s & 1)
        for a1 in range(2):
            for a2 in range(2):
                after = list(b)
                if a1 + a2 == 1:
                    sender = 0 if a1 == 1 else 1
                    if b[sender]:
                        R[s, a1, a2] = 1.0
                        after[sender] = 0
                # refill per node
                dist = [np.array([0.0, 1.0]) if after[i] else
                        np.array([1 - arrival[i], arrival[i]]) for i in range(2)]
                for n1 in range(2):
                    for n2 in range(2):
                        q = dist[0][n1] * dist[1][n2]
                        if q > 0:
                            P[s, a1, a2, 2 * n1 + n2, n1, n2] = q
    b0 = np.array([0.0, 0.0, 0.0, 1.0])
    return PosgModel(S, (A, A), (Z, Z), P, R, horizon, 1.0, b0, "mabc")


def recycling_robot(horizon: int = 3) -> PosgModel:
    """Two recycling robots; player 2's robot works against the team score.

    Each robot has a high or low battery and searches for a small can (+2),
    joins a big-can search (+5 when both do it) or recharges. Searching on a
    low battery depletes it with probability 0.3, costing 3 and leaving the
    robot recharged. Robots observe their own battery.
    """
    S = ("h-h", "h-l", "l-h", "l-l")
    A = ("small", "big", "recharge")
    Z = ("high", "low")
    P = np.zeros((4, 3, 3, 4, 2, 2))
    R = np.zeros((4, 3, 3))

    def step(level: int, a: int) -> tuple[np.ndarray, float]:
        """Next battery distribution [high, low] and expected depletion cost."""
        if a == 2:
            return np.array([1.0, 0.0]), 0.0
        if level == 0:
            drop = 0.5 if a == 1 else 0.2
            return np.array([1 - drop, drop]), 0.0
        return np.array([0.3, 0.7]), -3.0 * 0.3

    for s in range(4):
        lv = (s >> 1, s & 1)
        for a1 in range(3):
            for a2 in range(3):
                d1, c1 = step(lv[0], a1)
                d2, c2 = step(lv[1], a2)
                gain = 5.0 if a1 == a2 == 1 else 0.0
                gain += 2.0 * (a1 == 0) + 2.0 * (a2 == 0)
                R[s, a1, a2] = gain + c1 + c2
                for n1 in range(2):
                    for n2 in range(2):
                        P[s, a1, a2, 2 * n1 + n2, n1, n2] = d1[n1] * d2[n2]
    b0 = np.array([1.0, 0.0, 0.0, 0.0])
    return PosgModel(S, (A, A), (Z, Z), P, R, horizon, 1.0, b0, "recycling_robot")


BUILDERS = {
    "adversarial_tiger": adversarial_tiger,
    "competitive_tiger": competitive_tiger,
    "mabc": mabc,
    "recycling_robot": recycling_robot,
}

ALIASES = {"adv_tiger": "adversarial_tiger", "comp_tiger": "competitive_tiger",
           "recycling": "recycling_robot", "pennies": "matching_pennies"}


def bundled_path(name: str) -> Path:
    """Path of a bundled model file given its stem or an alias."""
    stem = Path(name).name
    if stem.endswith(".zsposg"):
        stem = stem[: -len(".zsposg")]
    stem = ALIASES.get(stem, stem)
    return Path(str(resources.files("zsposg") / "models" / f"{stem}.zsposg"))


def resolve_model(spec: str) -> PosgModel:
    """Load a model from a path, falling back to the bundled files."""
    path = Path(spec)
    if path.is_file():
        return load_model(path)
    bundled = bundled_path(spec)
    if bundled.is_file():
        return load_model(bundled)
    raise FileNotFoundError(f"no model file '{spec}'")


def write_bundled(directory: Path) -> list[Path]:
    """Regenerate the bundled .zsposg files from the builders."""
    out = []
    for name, build in BUILDERS.items():
        m = build()
        doc = (build.__doc__ or "").strip().splitlines()
        header = "\n".join("# " + line.strip() for line in doc if line.strip())
        path = directory / f"{name}.zsposg"
        path.write_text(header + "\n" + format_model(m), encoding="utf-8")
        out.append(path)
    return out
