"""End-to-end acceptance checks at their stated tolerances and budgets.

Each test prints a single PASS or FAIL line (also repeated in the terminal
summary). The learning checks are slow: the full module takes roughly
forty minutes on one core.
"""
import random
import statistics
import time

import numpy as np

from gradcheck import ppo_gradcheck, random_small_config
from helpers import fold_generated, near_miss_cases, random_rna
from oracles import brute_lis, brute_max_pairs, brute_min_energy
from rnadesign.bench.baselines import baseline_random
from rnadesign.bench.harness import BenchmarkSpec, SolverSpec, run_benchmark
from rnadesign.bench.report import default_time_points, solved_curve
from rnadesign.cli import _solver, build_parser
from rnadesign.env import DesignEnv, RewardConfig, local_improvement
from rnadesign.folding import NussinovFolder, StackedFolder
from rnadesign.policy import PolicyConfig, build
from rnadesign.trainer import TrainLoopConfig, run_learna, run_meta_apply, run_meta_train
from rnadesign.tuner import (
    Param,
    KDESampler,
    SearchSpace,
    promotion_counts,
    run_hyperband,
    select_final,
    successive_halving,
)
from verdicts import verdict

NUS = NussinovFolder()
STK = StackedFolder()


def _majority(outcomes):
    return sum(outcomes) * 2 > len(outcomes)


def test_folding_oracles_match_brute_force():
    rng = random.Random(1000)
    t0 = time.perf_counter()
    bad = 0
    for _ in range(1000):
        seq = random_rna(rng, rng.randint(1, 12))
        bad += NUS.max_pairs(seq) != brute_max_pairs(seq)
        bad += STK.min_energy(seq) != brute_min_energy(seq)
    dt = time.perf_counter() - t0
    ok = bad == 0 and dt < 60
    assert verdict(1, "folding oracles vs enumeration", ok, f"{bad} mismatches over 1000 sequences, {dt:.1f}s")


def test_local_improvement_matches_exhaustive_search():
    rng = random.Random(2000)
    t0 = time.perf_counter()
    cases = near_miss_cases(NUS, rng, deltas=(2, 3), max_len=20, count=200)
    bad = 0
    for phi, target, d in cases:
        res = local_improvement(phi, target, d, NUS)
        ref, count = brute_lis(NUS.fold_text, phi, target.text)
        bad += res.distance != ref
        if res.distance > 0:
            bad += res.evaluated != 4**d or count != 4**d

    # four mismatched sites that no assignment can repair
    four = local_improvement("GGGGAAAACCCC", "((((....))))", 4, _FourSites())
    dt = time.perf_counter() - t0
    ok = bad == 0 and four.evaluated == 256 and four.distance == 4 and dt < 120
    assert verdict(2, "local improvement vs exhaustive search", ok,
                   f"{bad} mismatches over {len(cases)} cases with distance 2 or 3, "
                   f"{four.evaluated} candidates at distance 4, {dt:.1f}s")


class _FourSites:
    """Folds the first four sites as unpaired, the rest as in the target."""

    def fold_text(self, s):
        return "...." + "....))))"


def test_environment_contract():
    rng = random.Random(3000)
    alpha = 6.0
    cfg = RewardConfig(alpha=alpha, lis_enabled=False)
    failures = 0
    worst = 0.0
    for k in range(500):
        folder = NUS if k % 2 == 0 else STK
        target, _ = fold_generated(folder, rng, 5, 60)
        env = DesignEnv(target, folder, cfg, state_radius=rng.randint(0, 8))
        env.reset()
        steps = 0
        while True:
            steps += 1
            res = env.step(rng.randrange(4))
            if res.done:
                break
        phi = res.outcome.sequence
        failures += steps != target.text.count(".") + target.text.count("(")
        failures += any(phi[i] + phi[j] not in ("GC", "CG", "AU", "UA") for i, j in target.pair_list())
        folded = folder.fold_text(phi)
        failures += (res.reward == 1.0) != (folded == target.text)
        dist = sum(a != b for a, b in zip(folded, target.text))
        err = abs(res.reward - (1 - dist / len(target)) ** alpha)
        worst = max(worst, err)
        failures += err > 1e-12
    ok = failures == 0
    assert verdict(3, "environment contract", ok, f"{failures} violations over 500 targets, max reward error {worst:.1e}")


def test_ppo_gradients():
    rng = np.random.default_rng(4000)
    scores = [ppo_gradcheck(random_small_config(rng, 200), k) for k in range(10)]
    ok = min(scores) >= 0.95
    assert verdict(4, "PPO gradient check", ok, "agreement per config: " + " ".join(f"{s:.3f}" for s in scores))


def test_learna_solves_short_targets():
    rng = random.Random(5000)
    targets = [fold_generated(NUS, rng, 40, 40, need_pair=True)[0] for _ in range(50)]
    loop, cfg = TrainLoopConfig(), PolicyConfig()
    outcomes, notes = [], []
    for rep in range(3):
        learna = sum(run_learna(t, loop, cfg, NUS, 60.0, seed=1000 * rep + i).solved for i, t in enumerate(targets))
        rand = sum(baseline_random(t, NUS, 60.0, seed=1000 * rep + i).solved for i, t in enumerate(targets))
        outcomes.append(learna >= 45 and learna > rand)
        notes.append(f"{learna}/50 vs random {rand}/50")
    ok = _majority(outcomes)
    assert verdict(5, "LEARNA on length-40 targets, 60s each", ok, "; ".join(notes))


def test_meta_policy_beats_uniform_with_few_samples():
    cfg = PolicyConfig()
    loop = TrainLoopConfig(strategy="meta_learna")
    outcomes, notes = [], []
    for rep in range(3):
        rng = random.Random(6000 + rep)
        train = [fold_generated(NUS, rng, 40, 60, need_pair=True)[0] for _ in range(200)]
        seen = {t.text for t in train}
        held = []
        while len(held) < 50:
            t = fold_generated(NUS, rng, 40, 60, need_pair=True)[0]
            if t.text not in seen:
                held.append(t)
                seen.add(t.text)
        meta = run_meta_train(train, loop, cfg, NUS, 600.0, seed=rep)
        uniform = meta.with_theta(np.zeros_like(meta.theta))
        rates = {}
        for name, params in (("meta", meta), ("uniform", uniform)):
            solved = sum(run_meta_apply(params, t, loop, NUS, 600.0, seed=rep * 100 + i, max_episodes=100).solved
                         for i, t in enumerate(held))
            rates[name] = solved / len(held)
        outcomes.append(rates["meta"] - rates["uniform"] >= 0.10)
        notes.append(f"meta {rates['meta']:.0%} vs uniform {rates['uniform']:.0%}")
    ok = _majority(outcomes)
    assert verdict(6, "meta-trained policy vs uniform, first 100 samples", ok, "; ".join(notes))


def _quadratic(cfg, budget):
    x = np.array([cfg["x0"], cfg["x1"], cfg["x2"]])
    return 10.0 + float(((x - np.array([1.3, -2.2, 0.7])) ** 2).sum()), {}


def test_tuner_sanity():
    space = SearchSpace([Param(f"x{i}", "float", -5, 5) for i in range(3)])
    best = []
    for seed in range(5):
        res = run_hyperband(space, [1, 3, 9], _quadratic, sampler=KDESampler(space, seed), max_evaluations=50)
        best.append(min(t.loss for t in res.trials))
    median = statistics.median(best)
    quad_ok = median <= 10.0 * 1.05

    counts_ok = promotion_counts(9, 3) == [9, 3, 1] and promotion_counts(81, 5) == [81, 27, 9, 3, 1]
    rng = np.random.default_rng(7)
    trials = successive_halving([space.sample(rng) for _ in range(27)], [1, 3, 9, 27], 3, _quadratic, lambda t: None)
    counts_ok &= [sum(t.rung == k for t in trials) for k in range(4)] == [27 // 3**k for k in range(4)]

    ranked = [(10, "B", 0.1, 2), (11, "C", 0.2, 2), (12, "A", 0.3, 2), (13, "D", 0.4, 2), (14, "E", 0.5, 2),
              (15, "F", 0.6, 2)]
    val = {10: {"unsolved_count": 4, "sum_min_distance": 0.0}, 11: {"unsolved_count": 3, "sum_min_distance": 0.0},
           12: {"unsolved_count": 2, "sum_min_distance": 0.5}, 13: {"unsolved_count": 2, "sum_min_distance": 0.4},
           14: {"unsolved_count": 5, "sum_min_distance": 0.0}, 15: {"unsolved_count": 0, "sum_min_distance": 0.0}}
    fixture_ok = select_final(ranked, val)[1] == "D"  # F is outside the top five
    val[13]["sum_min_distance"] = 0.5
    fixture_ok &= select_final(ranked, val)[1] == "A"  # full tie keeps the better-ranked one

    ok = quad_ok and counts_ok and fixture_ok
    assert verdict(7, "tuner sanity", ok, f"quadratic median best {median:.3f} (optimum 10), "
                   f"promotions {'exact' if counts_ok else 'wrong'}, selection {'exact' if fixture_ok else 'wrong'}")


def test_harness_fidelity():
    rng = random.Random(8000)
    targets = [fold_generated(NUS, rng, 20, 40, need_pair=True)[0] for _ in range(5)]
    spec = BenchmarkSpec("fixture", 3.0, 3, targets)
    solver = SolverSpec("learna")
    a = run_benchmark(spec, solver, seed=4)
    b = run_benchmark(spec, solver, seed=4)
    det = [r.deterministic_part() for r in a.records] == [r.deterministic_part() for r in b.records]
    times = default_time_points(a.timeout)
    mono = [a.solved_by_time(t) for t in times] == sorted(a.solved_by_time(t) for t in times)
    mono &= all(a.solved_in_at_least(k) >= a.solved_in_at_least(k + 1) for k in range(1, a.runs))
    mono &= bool(np.all(np.diff(solved_curve(a)[1]) >= 0))

    class NeverFolds:
        def fold_text(self, s):
            return "." * len(s)

    hard = run_learna("((((((....))))))", TrainLoopConfig(restart_period=0.5), PolicyConfig(), NeverFolds(), 2.0)
    restarts_ok = hard.restarts >= 1 and len(hard.restart_seeds) == hard.restarts

    parser = build_parser()

    def spec_for(*flags):
        return _solver(parser.parse_args(["benchmark", "--target", "....", *flags]))

    toggles = [
        spec_for().lis_enabled, not spec_for("--no-lis").lis_enabled,
        spec_for("--restart-period", "5").restart_period == 5.0,
        spec_for("--restart-period", "5", "--no-restart").restart_period is None,
    ]
    params = build(PolicyConfig(), 0)
    for strategy, adapt in (("meta", "meta_learna"), ("meta-adapt", "meta_learna_adapt")):
        s = SolverSpec(strategy, params=params, policy=params.config)
        toggles.append(s.loop().strategy == adapt)
        rep = run_benchmark(BenchmarkSpec("t", 1.0, 1, ["...."]), s)
        toggles.append(rep.records[0].solved)
    ok = det and mono and restarts_ok and all(toggles)
    assert verdict(8, "benchmark harness fidelity", ok,
                   f"deterministic={det} monotone={mono} restarts={hard.restarts} toggles={sum(toggles)}/{len(toggles)}")
