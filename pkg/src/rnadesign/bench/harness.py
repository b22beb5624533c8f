"""Benchmark evaluation: every target, several seeded runs, fixed timeout."""
from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

from ..folding import get_oracle
from ..policy import PolicyConfig, PolicyParams
from ..structure import DotBracket, parse_dot_bracket
from ..trainer import DesignResult, TrainLoopConfig, derive_seed, run_learna, run_meta_apply
from .baselines import baseline_hillclimb, baseline_random

log = logging.getLogger(__name__)


class UnknownSolver(KeyError):
    pass


@dataclass
class BenchmarkSpec:
    name: str
    timeout: float
    evaluation_runs: int
    targets: list

    def __post_init__(self):
        self.targets = [t if isinstance(t, DotBracket) else parse_dot_bracket(str(t)) for t in self.targets]
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")
        if self.evaluation_runs < 1:
            raise ValueError("evaluation_runs must be >= 1")
        if not self.targets:
            raise ValueError("benchmark has no targets")


# name -> (timeout seconds, evaluation runs, expected target count)
PRESETS = {
    "eterna100": (24 * 3600.0, 5, 100),
    "rfam-taneda": (600.0, 50, 29),
    "rfam-learn-test": (3600.0, 5, 100),
    "desk": (60.0, 3, None),
    "desk-quick": (10.0, 2, None),
}


def preset(name: str, targets) -> BenchmarkSpec:
    timeout, runs, expected = PRESETS[name]
    targets = list(targets)
    if expected is not None and len(targets) != expected:
        log.warning("%s expects %d targets, got %d", name, expected, len(targets))
    return BenchmarkSpec(name, timeout, runs, targets)


@dataclass
class SolverSpec:
    """A named strategy plus everything needed to run it."""

    strategy: str  # learna | meta | meta-adapt | random | hillclimb
    folder: str = "nussinov"
    policy: Optional[PolicyConfig] = None
    params: Optional[PolicyParams] = None
    lis_enabled: bool = True
    restart_period: Optional[float] = None

    def loop(self) -> TrainLoopConfig:
        strategy = {"learna": "learna", "meta": "meta_learna", "meta-adapt": "meta_learna_adapt"}.get(self.strategy, "learna")
        return TrainLoopConfig(strategy=strategy, restart_period=self.restart_period, lis_enabled=self.lis_enabled)


def _learna(s: SolverSpec, target, oracle, timeout, seed):
    return run_learna(target, s.loop(), s.policy or PolicyConfig(), oracle, timeout, seed=seed)


def _meta(adapt: bool):
    def solve(s: SolverSpec, target, oracle, timeout, seed):
        if s.params is None:
            raise ValueError("meta strategies need trained parameters (--checkpoint)")
        return run_meta_apply(s.params, target, s.loop(), oracle, timeout, adapt=adapt, seed=seed, policy_cfg=s.policy)

    return solve


SOLVERS: dict[str, Callable] = {
    "learna": _learna,
    "meta": _meta(False),
    "meta-adapt": _meta(True),
    "random": lambda s, t, o, timeout, seed: baseline_random(t, o, timeout, seed),
    "hillclimb": lambda s, t, o, timeout, seed: baseline_hillclimb(t, o, timeout, seed),
}


def register_solver(name: str, fn: Callable) -> None:
    SOLVERS[name] = fn


@dataclass
class EvalRecord:
    benchmark: str
    target_index: int
    target: str
    run: int
    seed: int
    solved: bool
    solve_time: Optional[float]
    distance: int
    sequence: Optional[str]
    episodes: int
    restarts: int
    elapsed: float

    def deterministic_part(self) -> tuple:
        """Everything except wall-clock timings."""
        return (self.target_index, self.target, self.run, self.seed, self.solved, self.distance, self.sequence,
                self.episodes, self.restarts)


@dataclass
class EvalReport:
    benchmark: str
    timeout: float
    runs: int
    n_targets: int
    records: list = field(default_factory=list)
    solver: str = ""

    def add(self, rec: EvalRecord) -> None:
        self.records.append(rec)

    def sorted_records(self):
        return sorted(self.records, key=lambda r: (r.target_index, r.run))

    def solve_counts(self, t: Optional[float] = None) -> list[int]:
        """Runs that solved each target (by time ``t`` if given)."""
        counts = [0] * self.n_targets
        for r in self.records:
            if r.solved and (t is None or r.solve_time <= t):
                counts[r.target_index] += 1
        return counts

    def solved_in_at_least(self, k: int, t: Optional[float] = None) -> int:
        return sum(c >= k for c in self.solve_counts(t))

    def solved_by_time(self, t: float, k: int = 1) -> int:
        return self.solved_in_at_least(k, t)

    def total_solved_runs(self, t: Optional[float] = None) -> int:
        return sum(self.solve_counts(t))

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            meta = {"kind": "benchmark", "benchmark": self.benchmark, "timeout": self.timeout, "runs": self.runs,
                    "n_targets": self.n_targets, "solver": self.solver}
            fh.write(json.dumps(meta) + "\n")
            for r in self.sorted_records():
                fh.write(json.dumps({"kind": "run", **asdict(r)}) + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "EvalReport":
        with open(path) as fh:
            rows = [json.loads(ln) for ln in fh if ln.strip()]
        meta = rows[0]
        rep = cls(meta["benchmark"], meta["timeout"], meta["runs"], meta["n_targets"], solver=meta.get("solver", ""))
        for row in rows[1:]:
            row.pop("kind", None)
            rep.add(EvalRecord(**row))
        return rep


def _run_cell(args):
    spec_name, index, target, run, seed, solver, timeout = args
    oracle = get_oracle(solver.folder)
    res: DesignResult = SOLVERS[solver.strategy](solver, target, oracle, timeout, seed)
    return EvalRecord(spec_name, index, str(target), run, seed, res.solved,
                      res.solve_time if res.solved else None, res.distance, res.sequence, res.episodes,
                      res.restarts, res.elapsed)


def run_benchmark(spec: BenchmarkSpec, solver: SolverSpec, seed: int = 0, workers: int = 1,
                  on_record: Optional[Callable[[EvalRecord], None]] = None) -> EvalReport:
    """Run every (target, run) cell; cells are independent and may run in parallel."""
    if solver.strategy not in SOLVERS:
        raise UnknownSolver(solver.strategy)
    cells = [(spec.name, i, t.text, r, derive_seed(seed, i, r), solver, spec.timeout)
             for i, t in enumerate(spec.targets) for r in range(spec.evaluation_runs)]
    report = EvalReport(spec.name, spec.timeout, spec.evaluation_runs, len(spec.targets), solver=solver.strategy)
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = pool.map(_run_cell, cells)
            for rec in results:
                report.add(rec)
                if on_record:
                    on_record(rec)
    else:
        for cell in cells:
            rec = _run_cell(cell)
            report.add(rec)
            if on_record:
                on_record(rec)
    report.records = report.sorted_records()
    return report
