"""Folding oracles: sequence -> dot-bracket structure.

Two built-in folders are provided. Both are interval dynamic programs with
a deterministic traceback (prefer leaving ``i`` unpaired, then the smallest
partner ``k``), so repeated calls give identical structures.

* ``nussinov`` maximises the number of admissible base pairs.
* ``stacked`` minimises a small integer energy: -3 per GC/CG, -2 per AU/UA,
  -1 per GU/UG and a further -1 for every pair stacked directly on an
  enclosing pair.

Admissible pairs are Watson-Crick plus GU wobble, with at least three
enclosed sites per hairpin.
"""
from __future__ import annotations

from functools import lru_cache

import numba
import numpy as np

from .structure import MIN_HAIRPIN, NUC_INDEX, DotBracket, Sequence, parse_dot_bracket

# index order A, G, C, U
PAIR_ENERGY = np.array(
    [
        [0, 0, 0, -2],
        [0, 0, -3, -1],
        [0, -3, 0, 0],
        [-2, -1, 0, 0],
    ],
    dtype=np.int64,
)
STACK_BONUS = -1
_ENC = np.full(128, -1, dtype=np.int64)
for _c, _i in NUC_INDEX.items():
    _ENC[ord(_c)] = _i
    _ENC[ord(_c.lower())] = _i


def encode(seq) -> np.ndarray:
    text = seq.text if isinstance(seq, Sequence) else str(seq)
    arr = _ENC[np.frombuffer(text.encode("ascii"), dtype=np.uint8)]
    if (arr < 0).any():
        raise ValueError(f"not an RNA sequence: {text!r}")
    return arr


def can_pair(a: str, b: str) -> bool:
    return PAIR_ENERGY[NUC_INDEX[a], NUC_INDEX[b]] < 0


@numba.njit(cache=True)
def _nussinov(s, energy, hp):
    n = s.shape[0]
    # N[i, j] holds the best count on s[i..j]; extra row/col keep i+1 and k+1 in range
    N = np.zeros((n + 1, n + 1), dtype=np.int64)
    for span in range(hp + 1, n):
        for i in range(0, n - span):
            j = i + span
            best = N[i + 1, j]
            for k in range(i + hp + 1, j + 1):
                if energy[s[i], s[k]] < 0:
                    right = N[k + 1, j] if k < j else 0
                    v = 1 + N[i + 1, k - 1] + right
                    if v > best:
                        best = v
            N[i, j] = best
    table = np.full(n, -1, dtype=np.int64)
    stack = np.empty((2 * n + 2, 2), dtype=np.int64)
    top = 0
    if n > 0:
        stack[0, 0] = 0
        stack[0, 1] = n - 1
        top = 1
    while top > 0:
        top -= 1
        i = stack[top, 0]
        j = stack[top, 1]
        if j - i <= hp:
            continue
        if N[i, j] == N[i + 1, j]:
            stack[top, 0] = i + 1
            stack[top, 1] = j
            top += 1
            continue
        for k in range(i + hp + 1, j + 1):
            if energy[s[i], s[k]] < 0:
                right = N[k + 1, j] if k < j else 0
                if 1 + N[i + 1, k - 1] + right == N[i, j]:
                    table[i] = k
                    table[k] = i
                    stack[top, 0] = i + 1
                    stack[top, 1] = k - 1
                    top += 1
                    if k < j:
                        stack[top, 0] = k + 1
                        stack[top, 1] = j
                        top += 1
                    break
    return table, (N[0, n - 1] if n > 0 else 0)


@numba.njit(cache=True)
def _stacked(s, energy, hp, bonus):
    n = s.shape[0]
    INF = 1 << 40
    W = np.zeros((n + 1, n + 1), dtype=np.int64)
    V = np.full((n + 1, n + 1), INF, dtype=np.int64)
    for span in range(hp + 1, n):
        for i in range(0, n - span):
            j = i + span
            e = energy[s[i], s[j]]
            if e < 0:
                inner = W[i + 1, j - 1]
                if V[i + 1, j - 1] < INF and V[i + 1, j - 1] + bonus < inner:
                    inner = V[i + 1, j - 1] + bonus
                V[i, j] = e + inner
            best = W[i + 1, j]
            for k in range(i + hp + 1, j + 1):
                if V[i, k] < INF:
                    right = W[k + 1, j] if k < j else 0
                    v = V[i, k] + right
                    if v < best:
                        best = v
            W[i, j] = best
    table = np.full(n, -1, dtype=np.int64)
    # stack entries: (i, j, kind) with kind 0 = W interval, 1 = V (i pairs j)
    stack = np.empty((2 * n + 2, 3), dtype=np.int64)
    top = 0
    if n > 0:
        stack[0, 0] = 0
        stack[0, 1] = n - 1
        stack[0, 2] = 0
        top = 1
    while top > 0:
        top -= 1
        i = stack[top, 0]
        j = stack[top, 1]
        kind = stack[top, 2]
        if kind == 1:
            table[i] = j
            table[j] = i
            if V[i + 1, j - 1] < INF and V[i + 1, j - 1] + bonus < W[i + 1, j - 1]:
                stack[top, 0] = i + 1
                stack[top, 1] = j - 1
                stack[top, 2] = 1
            else:
                stack[top, 0] = i + 1
                stack[top, 1] = j - 1
                stack[top, 2] = 0
            top += 1
            continue
        if j - i <= hp:
            continue
        if W[i, j] == W[i + 1, j]:
            stack[top, 0] = i + 1
            stack[top, 1] = j
            stack[top, 2] = 0
            top += 1
            continue
        for k in range(i + hp + 1, j + 1):
            if V[i, k] < INF:
                right = W[k + 1, j] if k < j else 0
                if V[i, k] + right == W[i, j]:
                    stack[top, 0] = i
                    stack[top, 1] = k
                    stack[top, 2] = 1
                    top += 1
                    if k < j:
                        stack[top, 0] = k + 1
                        stack[top, 1] = j
                        stack[top, 2] = 0
                        top += 1
                    break
    return table, (W[0, n - 1] if n > 0 else 0)


def _table_to_text(table) -> str:
    return "".join("." if p < 0 else ("(" if p > i else ")") for i, p in enumerate(table))


def structure_energy(seq, structure) -> int:
    """Energy of ``structure`` on ``seq`` under the stacked model."""
    text = seq.text if isinstance(seq, Sequence) else str(seq)
    db = structure if isinstance(structure, DotBracket) else parse_dot_bracket(structure)
    total = 0
    for i, j in db.pair_list():
        e = PAIR_ENERGY[NUC_INDEX[text[i]], NUC_INDEX[text[j]]]
        if e >= 0:
            raise ValueError(f"pair ({i}, {j}) = {text[i]}{text[j]} is not admissible")
        total += int(e)
        if db.partner(i + 1) == j - 1 and i + 1 < j - 1:
            total += STACK_BONUS
    return total


class FoldingOracle:
    """Deterministic folder. Subclasses implement ``_fold_table``."""

    name = "abstract"

    def fold(self, seq) -> DotBracket:
        return parse_dot_bracket(self.fold_text(seq.text if isinstance(seq, Sequence) else str(seq)))

    def fold_text(self, text: str) -> str:
        return self._cached(text.upper())

    def _cached(self, text: str) -> str:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}()"


class NussinovFolder(FoldingOracle):
    name = "nussinov"

    def __init__(self, cache_size: int = 1 << 16):
        self._cached = lru_cache(maxsize=cache_size)(self._fold_uncached)

    def _fold_uncached(self, text: str) -> str:
        table, _ = _nussinov(encode(text), PAIR_ENERGY, MIN_HAIRPIN)
        return _table_to_text(table)

    def max_pairs(self, seq) -> int:
        return int(_nussinov(encode(seq), PAIR_ENERGY, MIN_HAIRPIN)[1])


class StackedFolder(FoldingOracle):
    name = "stacked"

    def __init__(self, cache_size: int = 1 << 16):
        self._cached = lru_cache(maxsize=cache_size)(self._fold_uncached)

    def _fold_uncached(self, text: str) -> str:
        table, _ = _stacked(encode(text), PAIR_ENERGY, MIN_HAIRPIN, STACK_BONUS)
        return _table_to_text(table)

    def min_energy(self, seq) -> int:
        return int(_stacked(encode(seq), PAIR_ENERGY, MIN_HAIRPIN, STACK_BONUS)[1])


FOLDERS = {"nussinov": NussinovFolder, "stacked": StackedFolder}


def get_oracle(name: str) -> FoldingOracle:
    try:
        return FOLDERS[name]()
    except KeyError:
        raise ValueError(f"unknown folder {name!r}; choose from {sorted(FOLDERS)}") from None


def fold_nussinov(seq) -> DotBracket:
    return _DEFAULTS["nussinov"].fold(seq)


def fold_stacked(seq) -> DotBracket:
    return _DEFAULTS["stacked"].fold(seq)


_DEFAULTS = {name: cls() for name, cls in FOLDERS.items()}
