"""Sequential design process for a single target structure.

At each time step the agent sees a window of ``2 * radius + 1`` structure
symbols centred on the current decision site and picks one of four actions.
Unpaired sites receive one nucleotide; an opening bracket receives a
Watson-Crick pair written to the site and its partner at once. Closing
brackets are never visited. The only non-zero reward arrives at the end.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .folding import FoldingOracle
from .structure import NUCLEOTIDES, DotBracket, LengthMismatch, hamming, parse_dot_bracket

# window symbols
DOT, OPEN, CLOSE, PAD = 0, 1, 2, 3
SYMBOL_CODES = {".": DOT, "(": OPEN, ")": CLOSE, "pad": PAD}

UNPAIRED_ACTIONS = ("A", "G", "C", "U")
PAIRED_ACTIONS = ("GC", "CG", "AU", "UA")


class EpisodeFinished(RuntimeError):
    pass


@dataclass(frozen=True)
class RewardConfig:
    alpha: float = 6.0
    xi: int = 5
    lis_enabled: bool = True

    def __post_init__(self):
        if not self.alpha > 1:
            raise ValueError(f"alpha must be > 1, got {self.alpha}")
        if self.xi < 0:
            raise ValueError(f"xi must be >= 0, got {self.xi}")


class LisResult(NamedTuple):
    distance: int
    sequence: str
    evaluated: int


class Outcome(NamedTuple):
    reward: float
    distance: int  # after the local improvement step
    raw_distance: int  # of the designed sequence itself
    sequence: str  # designed sequence, or its repair when that is strictly better


class StepResult(NamedTuple):
    state: Optional[np.ndarray]
    reward: float
    done: bool
    outcome: Optional[Outcome]


def _target_text(omega) -> str:
    return omega.text if isinstance(omega, DotBracket) else str(omega)


def mismatched_sites(folded: str, target: str) -> list[int]:
    return [p for p, (a, b) in enumerate(zip(folded, target)) if a != b]


def local_improvement(phi: str, omega, delta: int, oracle: FoldingOracle) -> LisResult:
    """Try every nucleotide assignment of the mismatched sites.

    Returns as soon as a candidate folds into the target, otherwise the
    minimum distance over all ``4 ** delta`` candidates.
    """
    target = _target_text(omega)
    phi = str(phi)
    sites = mismatched_sites(oracle.fold_text(phi), target)
    if len(sites) != delta:
        raise ValueError(f"delta={delta} but {len(sites)} sites are mismatched")
    best = (delta, phi)
    seen = set()
    evaluated = 0
    chars = list(phi)
    for combo in itertools.product(NUCLEOTIDES, repeat=delta):
        for p, c in zip(sites, combo):
            chars[p] = c
        cand = "".join(chars)
        d = hamming(oracle.fold_text(cand), target)
        evaluated += 1
        if d == 0:
            return LisResult(0, cand, evaluated)
        seen.add(d)
        if d < best[0]:
            best = (d, cand)
    # min over all candidates, including ones no better than phi itself
    return LisResult(min(seen), best[1], evaluated)


def evaluate_design(phi: str, omega, cfg: RewardConfig, oracle: FoldingOracle) -> Outcome:
    target = _target_text(omega)
    phi = str(phi)
    if len(phi) != len(target):
        raise LengthMismatch(f"sequence length {len(phi)} != structure length {len(target)}")
    raw = hamming(oracle.fold_text(phi), target)
    if raw == 0:
        return Outcome(1.0, 0, 0, phi)
    delta, seq = raw, phi
    if cfg.lis_enabled and raw < cfg.xi:
        lis = local_improvement(phi, target, raw, oracle)
        delta = lis.distance
        if lis.distance < raw:
            seq = lis.sequence
    return Outcome((1.0 - delta / len(target)) ** cfg.alpha, delta, raw, seq)


def terminal_reward(phi, omega, cfg: RewardConfig, oracle: FoldingOracle) -> float:
    return evaluate_design(str(phi), omega, cfg, oracle).reward


def encode_windows(target: str, sites, radius: int) -> np.ndarray:
    """Window of symbol codes around each site; rows are sites."""
    codes = np.array([SYMBOL_CODES[c] for c in target], dtype=np.int64)
    padded = np.concatenate([np.full(radius, PAD), codes, np.full(radius, PAD)])
    offsets = np.arange(2 * radius + 1)
    return padded[np.asarray(sites)[:, None] + offsets[None, :]]


class DesignEnv:
    """One target's decision process. Single caller per instance."""

    def __init__(self, target, oracle: FoldingOracle, reward_cfg: RewardConfig = RewardConfig(), state_radius: int = 5):
        self.target = target if isinstance(target, DotBracket) else parse_dot_bracket(target)
        self.oracle = oracle
        self.reward_cfg = reward_cfg
        self.state_radius = state_radius
        text = self.target.text
        self.decision_sites = [i for i, c in enumerate(text) if c != ")"]
        self.partners = np.array(self.target.pair_table(), dtype=np.int64)
        self.paired_step = np.array([text[i] == "(" for i in self.decision_sites])
        self.states = encode_windows(text, self.decision_sites, state_radius)
        self.cursor = 0
        self._partial: list[Optional[str]] = [None] * len(text)
        self.last_outcome: Optional[Outcome] = None

    @property
    def horizon(self) -> int:
        return len(self.decision_sites)

    @property
    def partial(self) -> list[Optional[str]]:
        return list(self._partial)

    def reset(self) -> np.ndarray:
        self.cursor = 0
        self._partial = [None] * len(self.target)
        self.last_outcome = None
        return self.states[0]

    def _place(self, t: int, action: int, chars) -> None:
        site = self.decision_sites[t]
        if self.paired_step[t]:
            a, b = PAIRED_ACTIONS[action]
            chars[site] = a
            chars[self.partners[site]] = b
        else:
            chars[site] = UNPAIRED_ACTIONS[action]

    def step(self, action: int) -> StepResult:
        if self.cursor >= self.horizon:
            raise EpisodeFinished("episode already terminated; call reset()")
        if not 0 <= int(action) < 4:
            raise ValueError(f"action must be in 0..3, got {action}")
        self._place(self.cursor, int(action), self._partial)
        self.cursor += 1
        if self.cursor < self.horizon:
            return StepResult(self.states[self.cursor], 0.0, False, None)
        outcome = self.evaluate("".join(self._partial))
        self.last_outcome = outcome
        return StepResult(None, outcome.reward, True, outcome)

    def sequence_from_actions(self, actions) -> str:
        chars = [""] * len(self.target)
        for t, a in enumerate(actions):
            self._place(t, int(a), chars)
        return "".join(chars)

    def rollout(self, actions) -> Outcome:
        """Play a whole episode from a precomputed action vector."""
        if len(actions) != self.horizon:
            raise ValueError(f"expected {self.horizon} actions, got {len(actions)}")
        return self.evaluate(self.sequence_from_actions(actions))

    def evaluate(self, phi: str) -> Outcome:
        return evaluate_design(phi, self.target, self.reward_cfg, self.oracle)
