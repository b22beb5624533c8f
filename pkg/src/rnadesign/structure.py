"""Sequence and dot-bracket value types plus the Hamming structure loss.

Structures use a single bracket type, so pseudoknots cannot be expressed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, Tuple

NUCLEOTIDES = ("A", "G", "C", "U")
NUC_INDEX = {n: i for i, n in enumerate(NUCLEOTIDES)}
BRACKETS = (".", "(", ")")
MIN_HAIRPIN = 3


class StructureError(ValueError):
    """Base class for malformed structures or sequences."""


class UnbalancedBrackets(StructureError):
    pass


class IllegalCharacter(StructureError):
    pass


class HairpinTooShort(StructureError):
    pass


class LengthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Sequence:
    text: str

    def __post_init__(self):
        text = self.text.strip().upper()
        if not text:
            raise StructureError("empty sequence")
        bad = set(text) - set(NUCLEOTIDES)
        if bad:
            raise IllegalCharacter(f"illegal nucleotide(s) {sorted(bad)!r}")
        object.__setattr__(self, "text", text)

    def __len__(self) -> int:
        return len(self.text)

    def __str__(self) -> str:
        return self.text

    def indices(self) -> Tuple[int, ...]:
        return tuple(NUC_INDEX[c] for c in self.text)

    @classmethod
    def from_indices(cls, idx: Iterable[int]) -> "Sequence":
        return cls("".join(NUCLEOTIDES[i] for i in idx))


@dataclass(frozen=True)
class DotBracket:
    """A validated secondary structure with its pair table."""

    text: str
    pairs: Dict[int, int] = field(compare=False, repr=False, default_factory=dict)

    def __len__(self) -> int:
        return len(self.text)

    def __str__(self) -> str:
        return self.text

    def __getitem__(self, i: int) -> str:
        return self.text[i]

    def partner(self, i: int) -> int:
        return self.pairs.get(i, -1)

    def pair_list(self) -> list[tuple[int, int]]:
        return sorted((i, j) for i, j in self.pairs.items() if i < j)

    @property
    def n_pairs(self) -> int:
        return len(self.pairs) // 2

    def pair_table(self) -> list[int]:
        """Partner index per site, -1 where unpaired."""
        return [self.pairs.get(i, -1) for i in range(len(self.text))]


def parse_dot_bracket(text: str) -> DotBracket:
    text = text.strip()
    if not text:
        raise StructureError("empty structure")
    stack: list[int] = []
    pairs: Dict[int, int] = {}
    for pos, ch in enumerate(text):
        if ch == "(":
            stack.append(pos)
        elif ch == ")":
            if not stack:
                raise UnbalancedBrackets(f"unmatched ')' at position {pos}")
            opening = stack.pop()
            if pos - opening - 1 < MIN_HAIRPIN:
                raise HairpinTooShort(
                    f"pair ({opening}, {pos}) encloses {pos - opening - 1} < {MIN_HAIRPIN} sites"
                )
            pairs[opening] = pos
            pairs[pos] = opening
        elif ch != ".":
            raise IllegalCharacter(f"illegal character {ch!r} at position {pos}")
    if stack:
        raise UnbalancedBrackets(f"unclosed '(' at position {stack[-1]}")
    return DotBracket(text, pairs)


def from_pairs(length: int, pairs: Iterable[Tuple[int, int]]) -> DotBracket:
    chars = ["."] * length
    for i, j in pairs:
        i, j = min(i, j), max(i, j)
        chars[i], chars[j] = "(", ")"
    return parse_dot_bracket("".join(chars))


def _text(s) -> str:
    return s.text if isinstance(s, (DotBracket, Sequence)) else str(s)


def hamming(a, b) -> int:
    """Number of positions where two equal-length structures differ."""
    a, b = _text(a), _text(b)
    if len(a) != len(b):
        raise LengthMismatch(f"lengths differ: {len(a)} != {len(b)}")
    return sum(x != y for x, y in zip(a, b))


def normalized_loss(folded, target) -> float:
    return hamming(folded, target) / len(_text(target))


def read_lines(path) -> list[str]:
    with open(path) as fh:
        return [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]


def read_structures(path) -> list[DotBracket]:
    return [parse_dot_bracket(ln) for ln in read_lines(path)]


def write_structures(path, structures: Iterable) -> None:
    with open(path, "w") as fh:
        for s in structures:
            fh.write(_text(s) + "\n")
