"""Target sets built by folding random sequences.

Structures are deduplicated, optionally filtered to those a short hill-climb
run cannot solve, then split into disjoint train / validation / test sets.
"""
from __future__ import annotations

import logging
import time

import numpy as np

from ..folding import FoldingOracle
from ..structure import NUCLEOTIDES, DotBracket, parse_dot_bracket
from ..trainer import derive_seed
from .baselines import baseline_hillclimb

log = logging.getLogger(__name__)

FULL_SCALE = dict(count_train=65000, count_val=100, count_test=100, length_range=(50, 450), filter_budget=30.0)
DESK_SCALE = dict(count_train=500, count_val=50, count_test=50, length_range=(20, 100), filter_budget=2.0)


class InsufficientYield(RuntimeError):
    pass


def make_dataset(count_train: int, count_val: int, count_test: int, length_range: tuple[int, int],
                 filter_budget: float, oracle: FoldingOracle, seed: int = 0, source: str = "random_fold",
                 max_attempts: int | None = None, require_pair: bool = True):
    """Returns (train, validation, test) lists of structures."""
    if source != "random_fold":
        raise ValueError(f"unsupported source {source!r}")
    if min(count_train, count_val, count_test) < 0:
        raise ValueError("counts must be non-negative")
    lo, hi = length_range
    if lo < 1 or hi < lo:
        raise ValueError(f"empty length range {length_range}")
    need = count_train + count_val + count_test
    max_attempts = max_attempts if max_attempts is not None else 50 * need + 1000
    rng = np.random.default_rng(derive_seed(seed, 11))
    seen: set[str] = set()
    kept: list[DotBracket] = []
    attempts = 0
    t0 = time.perf_counter()
    while len(kept) < need:
        if attempts >= max_attempts:
            raise InsufficientYield(f"only {len(kept)} of {need} structures after {attempts} attempts")
        attempts += 1
        n = int(rng.integers(lo, hi + 1))
        seq = "".join(NUCLEOTIDES[i] for i in rng.integers(0, 4, n))
        text = oracle.fold_text(seq)
        if text in seen or (require_pair and "(" not in text):
            continue
        seen.add(text)
        target = parse_dot_bracket(text)
        if filter_budget > 0:
            res = baseline_hillclimb(target, oracle, filter_budget, seed=derive_seed(seed, 12, attempts))
            if res.solved:
                continue
        kept.append(target)
    log.info("kept %d structures from %d attempts in %.1fs", len(kept), attempts, time.perf_counter() - t0)
    order = rng.permutation(len(kept))
    kept = [kept[i] for i in order]
    return kept[:count_train], kept[count_train : count_train + count_val], kept[count_train + count_val :]
