"""Fixture generators shared by tests."""
from __future__ import annotations

import random

from rnadesign.structure import parse_dot_bracket


def random_rna(rng: random.Random, n: int) -> str:
    return "".join(rng.choice("ACGU") for _ in range(n))


def fold_generated(oracle, rng: random.Random, lo: int, hi: int, need_pair: bool = False):
    """Target obtained by folding a random sequence, plus that sequence."""
    while True:
        seq = random_rna(rng, rng.randint(lo, hi))
        s = oracle.fold_text(seq)
        if need_pair and "(" not in s:
            continue
        return parse_dot_bracket(s), seq


def near_miss_cases(oracle, rng: random.Random, deltas=(2, 3), max_len=20, count=200):
    """(phi, target, delta) with phi folding at distance delta from target."""
    out = []
    while len(out) < count:
        target, seq = fold_generated(oracle, rng, 8, max_len)
        phi = list(seq)
        for _ in range(rng.randint(1, 3)):
            phi[rng.randrange(len(phi))] = rng.choice("ACGU")
        phi = "".join(phi)
        d = sum(a != b for a, b in zip(oracle.fold_text(phi), target.text))
        if d in deltas:
            out.append((phi, target, d))
    return out
