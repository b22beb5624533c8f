import json
import statistics

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rnadesign.folding import NussinovFolder
from rnadesign.policy import PolicyConfig, param_count
from rnadesign.tuner import (
    InvalidLadder,
    KDESampler,
    Param,
    RandomSampler,
    SearchSpace,
    ValidationRecord,
    aggregate,
    check_ladder,
    default_space,
    evaluate_config,
    geometric_ladder,
    promotion_counts,
    run_hyperband,
    select_final,
    successive_halving,
    to_policy_config,
)

OPT = np.array([1.3, -2.2, 0.7])
QUAD_SPACE = SearchSpace([Param(f"x{i}", "float", -5, 5) for i in range(3)])


def quadratic(cfg, budget):
    x = np.array([cfg["x0"], cfg["x1"], cfg["x2"]])
    return 10.0 + float(((x - OPT) ** 2).sum()), {}


def test_default_space_is_14_dimensional_and_valid():
    space = default_space()
    assert len(space) == 14
    rng = np.random.default_rng(0)
    for _ in range(200):
        c = space.sample(rng)
        assert space.validate(c)
        cfg = to_policy_config(c)
        assert param_count(cfg) > 0


def test_conditionality():
    space = default_space()
    rng = np.random.default_rng(1)
    seen_off = seen_on = False
    for _ in range(2000):
        c = space.sample(rng)
        if c["conv1_filters"] == 0:
            seen_off = True
            assert c["conv1_kernel"] is None and c["conv2_filters"] is None and c["conv2_kernel"] is None
        else:
            seen_on = True
            assert c["conv1_kernel"] in (3, 5, 7, 9, 11)
        if c["lstm_layers"] == 0:
            assert c["lstm_units"] is None
    assert seen_off and seen_on


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_model_sampler_stays_in_space(seed):
    space = default_space()
    s = KDESampler(space, seed, random_fraction=0.0)
    rng = np.random.default_rng(seed)
    for _ in range(len(space) + 4):
        c = space.sample(rng)
        s.observe(c, 1.0, rng.random())
    for _ in range(20):
        c = s.propose()
        assert space.validate(c), c
        to_policy_config(c)


def test_ladder_checks():
    check_ladder([20, 60, 180], 3)
    assert geometric_ladder(180, 3) == [20, 60, 180]
    for bad in ([60], [20, 40, 80], [20, 60, 60]):
        with pytest.raises(InvalidLadder):
            check_ladder(bad, 3)


def test_successive_halving_counts():
    assert promotion_counts(9, 3) == [9, 3, 1]
    assert promotion_counts(27, 4) == [27, 9, 3, 1]
    rng = np.random.default_rng(0)
    configs = [QUAD_SPACE.sample(rng) for _ in range(9)]
    trials = successive_halving(configs, [1, 3, 9], 3, quadratic, lambda t: None)
    per_rung = [[t for t in trials if t.rung == k] for k in range(3)]
    assert [len(r) for r in per_rung] == [9, 3, 1]
    for k in (1, 2):
        prev = sorted(per_rung[k - 1], key=lambda t: t.loss)[: len(per_rung[k])]
        assert {t.config_id for t in per_rung[k]} == {t.config_id for t in prev}


def test_hyperband_promotions_follow_floor_rule():
    r = run_hyperband(QUAD_SPACE, [1, 3, 9, 27], quadratic, max_evaluations=10_000, sampler=RandomSampler(QUAD_SPACE, 0))
    # first bracket starts 27 configs at the smallest rung
    first = [t for t in r.trials if t.config_id < 27]
    for k in range(4):
        assert sum(t.rung == k for t in first) == 27 // 3**k


def test_random_schedule_reproducible():
    a = run_hyperband(QUAD_SPACE, [1, 3, 9], quadratic, sampler=RandomSampler(QUAD_SPACE, 5), max_evaluations=40)
    b = run_hyperband(QUAD_SPACE, [1, 3, 9], quadratic, sampler=RandomSampler(QUAD_SPACE, 5), max_evaluations=40)
    assert [(t.config_id, t.rung, t.config) for t in a.trials] == [(t.config_id, t.rung, t.config) for t in b.trials]
    assert len(a.trials) == 40


def test_quadratic_within_five_percent():
    best = []
    for seed in range(5):
        r = run_hyperband(QUAD_SPACE, [1, 3, 9], quadratic, sampler=KDESampler(QUAD_SPACE, seed), max_evaluations=50)
        assert len(r.trials) == 50
        best.append(min(t.loss for t in r.trials))
    assert statistics.median(best) <= 10.0 * 1.05


def test_ranked_by_top_rung():
    r = run_hyperband(QUAD_SPACE, [1, 3, 9], quadratic, sampler=RandomSampler(QUAD_SPACE, 1), max_evaluations=13)
    top = [e for e in r.ranked if e[3] == 2]
    assert r.ranked[0] == top[0]
    assert [e[2] for e in top] == sorted(e[2] for e in top)


def test_select_final_rules():
    one = [(7, {"a": 1}, 0.5, 2)]
    assert select_final(one, {}) == one[0]
    ranked = [(1, "B", 0.1, 2), (2, "x", 0.2, 2), (3, "A", 0.3, 2)]
    val = {1: {"unsolved_count": 4, "sum_min_distance": 0.1}, 2: {"unsolved_count": 5, "sum_min_distance": 0.0},
           3: {"unsolved_count": 2, "sum_min_distance": 0.9}}
    assert select_final(ranked, val)[1] == "A"
    val[1]["unsolved_count"] = 2
    val[1]["sum_min_distance"] = 0.95
    assert select_final(ranked, val)[1] == "A"
    val[1]["sum_min_distance"] = 0.9
    assert select_final(ranked, val)[1] == "B"  # full tie -> earlier rank
    ranked6 = [(i, i, 0.0, 2) for i in range(6)]
    val6 = {i: {"unsolved_count": 10 - i, "sum_min_distance": 0} for i in range(6)}
    assert select_final(ranked6, val6)[0] == 4  # only the top five are considered


def test_objective_aggregation():
    recs = [ValidationRecord("x", True, 0.0, 0.2), ValidationRecord("y", False, 0.1, 0.3)]
    assert aggregate(recs, "unsolved_count") == 1
    assert aggregate(recs, "sum_min_distance") == pytest.approx(0.1)
    assert aggregate(recs, "sum_mean_distance") == pytest.approx(0.5)
    assert aggregate(recs, "sum_min_distance") <= aggregate(recs, "sum_mean_distance")


def test_evaluate_config_solving_and_failing():
    folder = NussinovFolder()
    easy = ["....", "......"]
    loss, info = evaluate_config(PolicyConfig(), easy, 2.0, "unsolved_count", folder)
    assert loss == 0 and info["sum_min_distance"] == 0
    assert info["sum_min_distance"] <= info["sum_mean_distance"]

    class Never:
        def fold_text(self, s):
            return "." * len(s)

    hard = ["((((....))))", "((((....))))...."]
    for objective in ("unsolved_count", "sum_mean_distance", "sum_min_distance"):
        loss, info = evaluate_config(PolicyConfig(), hard, 0.3, objective, Never())
        assert loss > 0
        assert info["sum_min_distance"] <= info["sum_mean_distance"]


def test_space_json_roundtrip(tmp_path):
    space = default_space()
    path = tmp_path / "space.json"
    path.write_text(json.dumps({"params": space.to_records()}))
    again = SearchSpace.from_json(path)
    assert [p.name for p in again.params] == [p.name for p in space.params]
    rng1, rng2 = np.random.default_rng(3), np.random.default_rng(3)
    assert space.sample(rng1) == again.sample(rng2)


def test_unit_encoding_roundtrip():
    for p in default_space().params:
        rng = np.random.default_rng(0)
        for _ in range(50):
            v = p.from_unit(rng.random())
            assert p.valid(v)
            assert p.from_unit(p.to_unit(v)) == pytest.approx(v)
