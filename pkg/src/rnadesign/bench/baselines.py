"""Non-learning design baselines: uniform sampling and local hill climbing."""
from __future__ import annotations

import time

import numpy as np

from ..env import PAIRED_ACTIONS, UNPAIRED_ACTIONS
from ..folding import FoldingOracle
from ..structure import hamming
from ..trainer import DesignResult, _as_target, derive_seed


class _Design:
    """Sequence buffer that keeps paired sites Watson-Crick complementary."""

    def __init__(self, target, rng):
        self.target = target
        self.rng = rng
        self.sites = [i for i, c in enumerate(target.text) if c != ")"]
        self.chars = [""] * len(target)
        for i in self.sites:
            self.assign(i, int(rng.integers(4)))

    def assign(self, site: int, choice: int):
        j = self.target.partner(site)
        if j >= 0:
            self.chars[site], self.chars[j] = PAIRED_ACTIONS[choice]
        else:
            self.chars[site] = UNPAIRED_ACTIONS[choice]

    def text(self) -> str:
        return "".join(self.chars)


def baseline_random(target, oracle: FoldingOracle, timeout: float, seed: int = 0, max_samples=None) -> DesignResult:
    """Independent uniform samples; best-so-far distance is tracked."""
    target = _as_target(target)
    rng = np.random.default_rng(derive_seed(seed, 7))
    start = time.perf_counter()
    best, best_seq, solve_time, n, total = len(target) + 1, None, None, 0, 0
    trace = []
    while time.perf_counter() - start < timeout and (max_samples is None or n < max_samples):
        seq = _Design(target, rng).text()
        n += 1
        d = hamming(oracle.fold_text(seq), target.text)
        total += d
        if d < best:
            best, best_seq = d, seq
            trace.append({"t": time.perf_counter() - start, "episodes": n, "best_distance": d})
        if d == 0:
            solve_time = time.perf_counter() - start
            break
    return DesignResult(target.text, best_seq, best if best_seq else len(target), solve_time is not None,
                        solve_time, time.perf_counter() - start, episodes=n,
                        mean_distance=total / n if n else float(len(target)), history=trace)


def baseline_hillclimb(target, oracle: FoldingOracle, timeout: float, seed: int = 0, max_steps=None) -> DesignResult:
    """Single-site / single-pair mutations accepted when distance does not grow.

    Restarts from a fresh random design after ``50 * len(target)`` steps
    without strict improvement.
    """
    target = _as_target(target)
    rng = np.random.default_rng(derive_seed(seed, 8))
    start = time.perf_counter()
    patience = 50 * len(target)
    best, best_seq, solve_time, steps, restarts, total, seen = len(target) + 1, None, None, 0, 0, 0, 0
    trace = []
    while solve_time is None and time.perf_counter() - start < timeout:
        design = _Design(target, rng)
        cur = hamming(oracle.fold_text(design.text()), target.text)
        total, seen = total + cur, seen + 1
        stale = 0
        while True:
            if cur < best:
                best, best_seq = cur, design.text()
                trace.append({"t": time.perf_counter() - start, "episodes": steps, "best_distance": cur, "accepted": cur})
            if cur == 0:
                solve_time = time.perf_counter() - start
                break
            if stale >= patience or time.perf_counter() - start >= timeout:
                break
            if max_steps is not None and steps >= max_steps:
                break
            site = design.sites[int(rng.integers(len(design.sites)))]
            j = target.partner(site)
            old = (design.chars[site], design.chars[j] if j >= 0 else None)
            design.assign(site, int(rng.integers(4)))
            steps += 1
            d = hamming(oracle.fold_text(design.text()), target.text)
            total, seen = total + d, seen + 1
            if d <= cur:
                stale = 0 if d < cur else stale + 1
                cur = d
            else:
                design.chars[site] = old[0]
                if j >= 0:
                    design.chars[j] = old[1]
                stale += 1
        if max_steps is not None and steps >= max_steps:
            break
        if solve_time is None:
            restarts += 1
    return DesignResult(target.text, best_seq, best if best_seq else len(target), solve_time is not None,
                        solve_time, time.perf_counter() - start, episodes=steps, restarts=restarts,
                        mean_distance=total / seen if seen else float(len(target)), history=trace)
