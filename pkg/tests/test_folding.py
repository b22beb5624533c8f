import random

import pytest
from hypothesis import given, settings, strategies as st

from oracles import all_structures, brute_max_pairs, brute_min_energy, energy, to_text
from rnadesign.folding import (
    StackedFolder,
    fold_nussinov,
    fold_stacked,
    get_oracle,
    structure_energy,
)
from rnadesign.structure import parse_dot_bracket

rna = st.text(alphabet="ACGU", min_size=1, max_size=12)


def test_nussinov_examples():
    assert str(fold_nussinov("AAAA")) == "...."
    assert str(fold_nussinov("GAAAC")) == "(...)"
    assert fold_nussinov("GCGAUAGC").pair_list() == [(0, 7), (1, 6)]


def test_brute_force_agrees_on_examples():
    assert brute_max_pairs("GAAAC") == 1
    assert brute_max_pairs("GCGAUAGC") == 2
    best = [s for s in all_structures("GGGAAACCC") if energy("GGGAAACCC", s) == brute_min_energy("GGGAAACCC")]
    assert [to_text(9, s) for s in best] == ["(((...)))"]


def test_stacked_examples():
    assert str(fold_stacked("UUUU")) == "...."
    assert fold_stacked("GGGAAACCC").pair_list() == [(0, 8), (1, 7), (2, 6)]
    assert structure_energy("GGGAAACCC", "(((...)))") == -3 * 3 - 2
    assert structure_energy("GGGAAACCC", ".........") == 0


@given(rna)
@settings(max_examples=400, deadline=None)
def test_nussinov_matches_enumeration(seq):
    s = fold_nussinov(seq)
    assert len(s) == len(seq)
    assert s.n_pairs == brute_max_pairs(seq)


@given(rna)
@settings(max_examples=400, deadline=None)
def test_stacked_matches_enumeration(seq):
    s = fold_stacked(seq)
    assert structure_energy(seq, s) == brute_min_energy(seq)
    assert StackedFolder().min_energy(seq) == brute_min_energy(seq)


@pytest.mark.parametrize("name", ["nussinov", "stacked"])
def test_deterministic_and_parseable(name):
    rng = random.Random(3)
    a, b = get_oracle(name), get_oracle(name)
    for _ in range(200):
        seq = "".join(rng.choice("ACGU") for _ in range(rng.randint(1, 60)))
        s1, s2 = a.fold(seq), b.fold(seq)
        assert s1 == s2
        assert parse_dot_bracket(str(s1)) == s1


def test_unknown_folder():
    with pytest.raises(ValueError):
        get_oracle("vienna")
