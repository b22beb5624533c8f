"""Joint architecture / hyperparameter search.

Hyperband-style successive halving over a geometric budget ladder. New
configurations come either from uniform sampling or, once enough results
exist at some budget, from a kernel density fitted to the best third of
those results (with a uniform-exploration mixture).
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .policy import PolicyConfig

log = logging.getLogger(__name__)

OBJECTIVES = ("unsolved_count", "sum_mean_distance", "sum_min_distance")


class InvalidLadder(ValueError):
    pass


@dataclass(frozen=True)
class Param:
    name: str
    kind: str  # "int" | "float" | "cat"
    low: float = 0.0
    high: float = 1.0
    log: bool = False
    choices: tuple = ()
    condition: Optional[dict] = None  # {"param": parent, "gt": v} or {"param": parent, "in": [...]}

    def active(self, config: dict) -> bool:
        if self.condition is None:
            return True
        parent = config.get(self.condition["param"])
        if parent is None:
            return False
        if "gt" in self.condition:
            return parent > self.condition["gt"]
        return parent in self.condition["in"]

    def _bounds(self) -> tuple[float, float]:
        lo, hi = float(self.low), float(self.high)
        if self.kind == "int":
            lo, hi = (lo - 0.5 if not self.log or lo > 0.5 else lo), hi + 0.5
        if self.log:
            lo, hi = math.log(lo), math.log(hi)
        return lo, hi

    def to_unit(self, value) -> float:
        if self.kind == "cat":
            return (self.choices.index(value) + 0.5) / len(self.choices)
        lo, hi = self._bounds()
        v = math.log(float(value)) if self.log else float(value)
        return (v - lo) / (hi - lo)

    def from_unit(self, u: float):
        u = min(max(u, 0.0), 1.0 - 1e-12)
        if self.kind == "cat":
            return self.choices[int(u * len(self.choices))]
        lo, hi = self._bounds()
        v = lo + u * (hi - lo)
        if self.log:
            v = math.exp(v)
        if self.kind == "int":
            return int(min(max(round(v), self.low), self.high))
        return float(v)

    def valid(self, value) -> bool:
        if self.kind == "cat":
            return value in self.choices
        if self.kind == "int" and int(value) != value:
            return False
        return self.low <= value <= self.high


class SearchSpace:
    def __init__(self, params: Iterable[Param]):
        self.params = list(params)
        self.by_name = {p.name: p for p in self.params}
        for p in self.params:
            if p.condition is not None and p.condition["param"] not in self.by_name:
                raise ValueError(f"{p.name}: unknown parent {p.condition['param']!r}")

    def __len__(self) -> int:
        return len(self.params)

    def _fill(self, draw: Callable[[Param], object]) -> dict:
        # parents precede children in declaration order
        cfg = {}
        for p in self.params:
            cfg[p.name] = draw(p) if p.active(cfg) else None
        return cfg

    def sample(self, rng: np.random.Generator) -> dict:
        return self._fill(lambda p: p.from_unit(rng.random()))

    def to_vector(self, config: dict) -> np.ndarray:
        """Unit-cube encoding; inactive parameters map to NaN."""
        return np.array([np.nan if config.get(p.name) is None else p.to_unit(config[p.name]) for p in self.params])

    def from_vector(self, vec: np.ndarray, rng: np.random.Generator) -> dict:
        it = iter(range(len(self.params)))
        idx = {p.name: i for i, p in enumerate(self.params)}
        del it
        return self._fill(lambda p: p.from_unit(vec[idx[p.name]] if np.isfinite(vec[idx[p.name]]) else rng.random()))

    def validate(self, config: dict) -> bool:
        for p in self.params:
            v = config.get(p.name)
            if p.active(config):
                if v is None or not p.valid(v):
                    return False
            elif v is not None:
                return False
        return True

    @classmethod
    def from_json(cls, path) -> "SearchSpace":
        with open(path) as fh:
            raw = json.load(fh)
        return cls.from_records(raw["params"] if isinstance(raw, dict) else raw)

    @classmethod
    def from_records(cls, records) -> "SearchSpace":
        out = []
        for r in records:
            r = dict(r)
            kind = r.pop("type")
            rng = r.pop("range", None)
            prior = r.pop("prior", "uniform")
            choices = tuple(r.pop("choices", ()))
            lo, hi = (rng if rng else (0, 1))
            out.append(Param(r.pop("name"), kind, lo, hi, prior == "log", choices, r.pop("condition", None)))
        return cls(out)

    def to_records(self) -> list:
        recs = []
        for p in self.params:
            r = {"name": p.name, "type": p.kind}
            if p.kind == "cat":
                r["choices"] = list(p.choices)
            else:
                r["range"] = [p.low, p.high]
                r["prior"] = "log" if p.log else "uniform"
            if p.condition:
                r["condition"] = p.condition
            recs.append(r)
        return recs


def default_space(meta: bool = False) -> SearchSpace:
    """14-dimensional architecture + hyperparameter space."""
    lr = (1e-6, 1e-3) if meta else (1e-5, 1e-2)
    ent = (1e-5, 1e-1)
    return SearchSpace(
        [
            Param("state_radius", "int", 0, 16),
            Param("embedding_dim", "int", 0, 8),  # 0 selects the binary encoding
            Param("conv1_filters", "int", 0, 32),  # 0 disables the conv block
            Param("conv1_kernel", "cat", choices=(3, 5, 7, 9, 11), condition={"param": "conv1_filters", "gt": 0}),
            Param("conv2_filters", "int", 0, 32, condition={"param": "conv1_filters", "gt": 0}),
            Param("conv2_kernel", "cat", choices=(3, 5, 7, 9, 11), condition={"param": "conv2_filters", "gt": 0}),
            Param("lstm_layers", "int", 0, 2),
            Param("lstm_units", "int", 1, 64, condition={"param": "lstm_layers", "gt": 0}),
            Param("dense_layers", "int", 1, 2),
            Param("dense_units", "int", 8, 64),
            Param("learning_rate", "float", *lr, log=True),
            Param("batch_size", "int", 32, 256, log=True),
            Param("entropy_coeff", "float", *ent, log=True),
            Param("reward_exponent", "float", 1.01, 12.0),
        ]
    )


def to_policy_config(c: dict) -> PolicyConfig:
    """Map a sampled point to a policy config; keys absent from ``c`` keep their defaults."""
    base = PolicyConfig()
    conv = []
    if c.get("conv1_filters"):
        conv.append((c["conv1_filters"], c["conv1_kernel"]))
        if c.get("conv2_filters"):
            conv.append((c["conv2_filters"], c["conv2_kernel"]))
    emb = c.get("embedding_dim", base.embedding_dim if base.input_mode == "embedding" else 0) or 0
    dense_units = int(c.get("dense_units", base.dense_layers[0] if base.dense_layers else 32))
    return PolicyConfig(
        state_radius=int(c.get("state_radius", base.state_radius)),
        input_mode="embedding" if emb > 0 else "binary",
        embedding_dim=max(int(emb), 1),
        conv_layers=tuple(conv) if "conv1_filters" in c else base.conv_layers,
        recurrent_layers=(int(c["lstm_units"]),) * int(c["lstm_layers"]) if c.get("lstm_layers") else (),
        dense_layers=(dense_units,) * int(c.get("dense_layers", len(base.dense_layers))),
        learning_rate=float(c.get("learning_rate", base.learning_rate)),
        batch_size=int(c.get("batch_size", base.batch_size)),
        entropy_coeff=float(c.get("entropy_coeff", base.entropy_coeff)),
        reward_exponent=float(c.get("reward_exponent", base.reward_exponent)),
    )


# ------------------------------------------------------------- sampler


class KDESampler:
    """Random sampling until a budget has ``len(space) + 2`` results, then
    sampling around the best third of that budget's results."""

    def __init__(self, space: SearchSpace, seed: int = 0, random_fraction: float = 0.1,
                 top_fraction: float = 1 / 3, model_based: bool = True, bandwidth_factor: float = 1.0):
        self.space = space
        self.rng = np.random.default_rng(seed)
        self.random_fraction = random_fraction
        self.top_fraction = top_fraction
        self.model_based = model_based
        self.bandwidth_factor = bandwidth_factor
        self.observations: dict = {}  # budget -> list[(vector, loss)]

    def observe(self, config: dict, budget: float, loss: float) -> None:
        self.observations.setdefault(budget, []).append((self.space.to_vector(config), float(loss)))

    def _model_budget(self):
        need = len(self.space) + 2
        ready = [b for b, obs in self.observations.items() if len(obs) >= need]
        return max(ready) if ready else None

    def propose(self) -> dict:
        budget = self._model_budget() if self.model_based else None
        if budget is None or self.rng.random() < self.random_fraction:
            return self.space.sample(self.rng)
        obs = sorted(self.observations[budget], key=lambda o: o[1])
        n_good = max(2, int(math.ceil(len(obs) * self.top_fraction)))
        good = np.array([v for v, _ in obs[:n_good]])
        d = good.shape[1]
        # Scott's rule per dimension, ignoring inactive entries
        sd = np.nanstd(good, axis=0)
        sd = np.where(np.isfinite(sd), sd, 0.5)
        bw = self.bandwidth_factor * np.maximum(sd * n_good ** (-1.0 / (d + 4)), 1e-3)
        centre = good[self.rng.integers(n_good)].copy()
        vec = np.empty(d)
        for i, p in enumerate(self.space.params):
            c = centre[i]
            if not np.isfinite(c):
                vec[i] = np.nan
            elif p.kind == "cat":
                vec[i] = c if self.rng.random() > bw[i] else self.rng.random()
            else:
                vec[i] = self._truncnorm(c, bw[i])
        return self.space.from_vector(vec, self.rng)

    def _truncnorm(self, mu, sigma):
        for _ in range(100):
            x = self.rng.normal(mu, sigma)
            if 0.0 <= x < 1.0:
                return x
        return min(max(mu, 0.0), 1.0 - 1e-12)


class RandomSampler(KDESampler):
    def __init__(self, space: SearchSpace, seed: int = 0):
        super().__init__(space, seed, model_based=False)


# ------------------------------------------------------------ hyperband


@dataclass
class Trial:
    config_id: int
    config: dict
    rung: int
    budget: float
    loss: float
    info: dict = field(default_factory=dict)

    def record(self) -> dict:
        return {"config_id": self.config_id, "rung": self.rung, "budget": self.budget, "loss": self.loss,
                "solved": self.info.get("solved"), "config": self.config}


@dataclass
class HyperbandResult:
    ranked: list  # [(config_id, config, loss, rung)] best first
    trials: list

    def records(self):
        return {tid: [t for t in self.trials if t.config_id == tid] for tid, *_ in self.ranked}


def check_ladder(rungs: Sequence[float], eta: float) -> None:
    if len(rungs) < 2:
        raise InvalidLadder("need at least two rungs")
    for a, b in zip(rungs, rungs[1:]):
        if not b > a or not math.isclose(b / a, eta, rel_tol=1e-9):
            raise InvalidLadder(f"rungs must grow by a factor of {eta}: {list(rungs)}")


def geometric_ladder(top: float, n_rungs: int, eta: float = 3) -> list[float]:
    return [top / eta ** (n_rungs - 1 - k) for k in range(n_rungs)]


def promotion_counts(n: int, n_rungs: int, eta: int = 3) -> list[int]:
    return [n // eta**k for k in range(n_rungs)]


def successive_halving(configs, rungs, eta, evaluate, on_trial, start_id=0, budget_left=None):
    """One bracket. ``configs`` start at ``rungs[0]``; returns trials."""
    trials = []
    alive = list(enumerate(configs, start=start_id))
    n0 = len(alive)
    for k, budget in enumerate(rungs):
        keep = n0 // eta**k
        if k > 0:
            scored = sorted(((t.loss, t.config_id) for t in trials if t.rung == k - 1))
            ids = {cid for _, cid in scored[:keep]}
            alive = [(cid, c) for cid, c in alive if cid in ids]
        if not alive:
            break
        for cid, cfg in alive:
            if budget_left is not None and budget_left() <= 0:
                return trials
            loss, info = evaluate(cfg, budget)
            t = Trial(cid, cfg, k, budget, float(loss), info or {})
            trials.append(t)
            on_trial(t)
    return trials


def run_hyperband(space: SearchSpace, rungs: Sequence[float], evaluate: Callable, eta: int = 3,
                  sampler: Optional[KDESampler] = None, max_evaluations: int = 50,
                  seed: int = 0, on_trial: Optional[Callable] = None) -> HyperbandResult:
    """Hyperband over ``rungs``; ``evaluate(config, budget) -> (loss, info)``."""
    check_ladder(rungs, eta)
    sampler = sampler or KDESampler(space, seed)
    s_max = len(rungs) - 1
    trials: list[Trial] = []
    next_id = 0

    def left():
        return max_evaluations - len(trials)

    def note(t: Trial):
        sampler.observe(t.config, t.budget, t.loss)
        if on_trial:
            on_trial(t)
        trials_ref.append(t)

    trials_ref = trials
    i = 0
    while left() > 0:
        s = s_max - (i % (s_max + 1))
        n = int(math.ceil((s_max + 1) / (s + 1) * eta**s))
        configs = [sampler.propose() for _ in range(n)]
        successive_halving(configs, list(rungs[s_max - s :]), eta, evaluate, note, start_id=next_id, budget_left=left)
        next_id += n
        i += 1
    return HyperbandResult(rank_trials(trials), trials)


def rank_trials(trials: Sequence[Trial]) -> list:
    """Best first: highest budget reached, then loss at that budget."""
    best = {}
    for t in trials:
        cur = best.get(t.config_id)
        if cur is None or t.budget > cur.budget:
            best[t.config_id] = t
    order = sorted(best.values(), key=lambda t: (-t.budget, t.loss, t.config_id))
    return [(t.config_id, t.config, t.loss, t.rung) for t in order]


# ----------------------------------------------------------- objectives


@dataclass
class ValidationRecord:
    target: str
    solved: bool
    min_distance: float  # normalised by target length
    mean_distance: float


def aggregate(records: Sequence[ValidationRecord], objective: str) -> float:
    if objective == "unsolved_count":
        return float(sum(not r.solved for r in records))
    if objective == "sum_mean_distance":
        return float(sum(r.mean_distance for r in records))
    if objective == "sum_min_distance":
        return float(sum(r.min_distance for r in records))
    raise ValueError(f"objective must be one of {OBJECTIVES}")


def summarize(records: Sequence[ValidationRecord]) -> dict:
    return {o: aggregate(records, o) for o in OBJECTIVES} | {"solved": sum(r.solved for r in records)}


def evaluate_config(config, validation_targets, budget: float, objective: str, oracle, *,
                    strategy: str = "learna", train_targets=None, eval_timeout: float = 60.0,
                    seed: int = 0, loop=None) -> tuple[float, dict]:
    """Run one configuration on the validation set under ``budget``.

    ``learna``: ``budget`` is the per-target timeout, with restarts every
    ``budget`` seconds. ``meta_learna``: ``budget`` is the meta-training time,
    followed by frozen sampling for ``eval_timeout`` per target.
    Returns (loss, info); info carries per-target records and every objective.
    """
    from .trainer import TrainLoopConfig, run_learna, run_meta_apply, run_meta_train

    if not validation_targets:
        raise ValueError("validation set is empty")
    pcfg = config if isinstance(config, PolicyConfig) else to_policy_config(config)
    records = []
    if strategy == "learna":
        lp = loop or TrainLoopConfig(restart_period=budget)
        for k, t in enumerate(validation_targets):
            r = run_learna(t, lp, pcfg, oracle, budget, seed=seed + k)
            records.append(_record(r))
    elif strategy in ("meta_learna", "meta_learna_adapt"):
        lp = loop or TrainLoopConfig(strategy=strategy)
        params = run_meta_train(train_targets or validation_targets, lp, pcfg, oracle, budget, seed=seed)
        for k, t in enumerate(validation_targets):
            r = run_meta_apply(params, t, lp, oracle, eval_timeout, adapt=strategy.endswith("adapt"), seed=seed + k)
            records.append(_record(r))
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    info = summarize(records)
    info["records"] = records
    return aggregate(records, objective), info


def _record(r) -> ValidationRecord:
    n = len(r.target)
    return ValidationRecord(r.target, r.solved, r.distance / n, r.mean_distance / n)


def select_final(ranked: Sequence, validation: dict, top: int = 5):
    """Pick among the first ``top`` ranked configs by fewest unsolved targets.

    ``validation`` maps config id to a dict with ``unsolved_count`` and
    ``sum_min_distance``. Ties fall back to ``sum_min_distance``, then rank.
    """
    if not ranked:
        raise ValueError("nothing to select from")
    head = list(ranked[:top])
    scored = []
    for pos, entry in enumerate(head):
        cid = entry[0]
        v = validation.get(cid, {})
        scored.append((v.get("unsolved_count", math.inf), v.get("sum_min_distance", math.inf), pos, entry))
    scored.sort(key=lambda s: s[:3])
    return scored[0][3]
