"""Profile data: isolated and packed throughputs, estimators, strategy search.

Packed throughput is always stored normalized, i.e. divided by the job's
isolated throughput for the same model and GPU count. The sum of the two
normalized values of a pair is the packing edge weight.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .cluster import (
    DATA_PARALLEL_MODELS,
    LLM_MODELS,
    MODEL_CATALOG,
    ParallelismStrategy,
    is_llm,
)
from .errors import (
    BudgetComplete,
    MissingEntry,
    MissingIsolatedProfile,
    NotDataParallel,
    OutOfMemory,
)

PROFILE_SCHEMA = "tesserae-profile/1"

MODEL_LAYERS = {"GPT3-Medium": 24, "GPT3-XL": 24, "GPT3-3B": 32}

# Iterations per second on one GPU; only ratios matter to the simulator.
_BASE_ISOLATED = {
    "ResNet-50": 12.0,
    "VGG-19": 9.0,
    "DCGAN": 30.0,
    "PointNet": 50.0,
    "GPT3-Medium": 6.0,
    "GPT3-XL": 3.0,
    "GPT3-3B": 2.0,
}


def _skey(strategy) -> str | None:
    if strategy is None:
        return None
    return strategy if isinstance(strategy, str) else strategy.key


@dataclass
class ProfileStore:
    """Throughput tables keyed by model, GPU count and optional strategy.

    ``pairs[(a, b, gpus, strategy_a)] = (norm_a, norm_b)``; the strategy
    applies to model ``a``. Entries without a strategy are looked up in
    either argument order.
    """

    isolated: dict = field(default_factory=dict)
    pairs: dict = field(default_factory=dict)
    oom: set = field(default_factory=set)
    strategy_candidates: dict = field(default_factory=dict)

    def set_isolated(self, model: str, gpus: int, throughput: float, strategy=None):
        if not throughput > 0:
            raise ValueError(f"isolated throughput must be > 0, got {throughput}")
        self.isolated[(model, gpus, _skey(strategy))] = float(throughput)

    def set_pair(self, model_a: str, model_b: str, gpus: int, norm_a: float, norm_b: float,
                 strategy_a=None, check: bool = True):
        if check and not (0 < norm_a <= 1 and 0 < norm_b <= 1):
            raise ValueError(f"normalized throughputs must lie in (0, 1], got {norm_a}, {norm_b}")
        self.pairs[(model_a, model_b, gpus, _skey(strategy_a))] = (float(norm_a), float(norm_b))

    def set_pair_raw(self, model_a: str, model_b: str, gpus: int, packed_a: float, packed_b: float,
                     strategy_a=None):
        """Record a pair from raw packed throughputs, normalizing by isolated runs."""
        iso_a = self.isolated_throughput(model_a, gpus, strategy_a)
        iso_b = self.isolated_throughput(model_b, gpus)
        self.set_pair(model_a, model_b, gpus, packed_a / iso_a, packed_b / iso_b, strategy_a)

    def mark_oom(self, model_a: str, model_b: str, gpus: int, strategy_a=None):
        self.oom.add((model_a, model_b, gpus, _skey(strategy_a)))

    def set_candidates(self, model: str, gpus: int, strategies: Iterable[ParallelismStrategy]):
        self.strategy_candidates[(model, gpus)] = list(strategies)

    def candidates(self, model: str, gpus: int) -> list[ParallelismStrategy]:
        return self.strategy_candidates.get((model, gpus), [])

    def isolated_throughput(self, model: str, gpus: int, strategy=None) -> float:
        try:
            return self.isolated[(model, gpus, _skey(strategy))]
        except KeyError:
            if strategy is None:
                raise MissingIsolatedProfile((model, gpus)) from None
            return self.isolated_throughput(model, gpus)

    def has_isolated(self, model: str, gpus: int) -> bool:
        return (model, gpus, None) in self.isolated

    def is_oom(self, model_a: str, model_b: str, gpus: int, strategy_a=None) -> bool:
        s = _skey(strategy_a)
        if (model_a, model_b, gpus, s) in self.oom:
            return True
        return s is None and (model_b, model_a, gpus, None) in self.oom

    def pair(self, model_a: str, model_b: str, gpus: int, strategy_a=None) -> tuple[float, float]:
        """Normalized ``(a, b)`` throughputs when packed; raises if unprofiled or OOM."""
        s = _skey(strategy_a)
        if self.is_oom(model_a, model_b, gpus, s):
            raise OutOfMemory((model_a, model_b, gpus, s))
        hit = self.pairs.get((model_a, model_b, gpus, s))
        if hit is not None:
            return hit
        if s is None:
            hit = self.pairs.get((model_b, model_a, gpus, None))
            if hit is not None:
                return hit[1], hit[0]
        raise MissingEntry((model_a, model_b, gpus, s))

    def pair_or_none(self, model_a, model_b, gpus, strategy_a=None):
        try:
            return self.pair(model_a, model_b, gpus, strategy_a)
        except (MissingEntry, OutOfMemory):
            return None

    def copy(self) -> "ProfileStore":
        return ProfileStore(dict(self.isolated), dict(self.pairs), set(self.oom),
                            {k: list(v) for k, v in self.strategy_candidates.items()})

    def with_noise(self, noise: float, seed: int) -> "ProfileStore":
        """Copy with every pair value scaled by an independent U[1-noise, 1+noise] factor.

        The result is a perceived view used for decisions; values may exceed 1.
        """
        if not 0 <= noise <= 1:
            raise ValueError("noise must lie in [0, 1]")
        out = self.copy()
        if noise == 0:
            return out
        rng = np.random.default_rng(seed)
        for key in sorted(out.pairs, key=repr):
            a, b = out.pairs[key]
            fa, fb = rng.uniform(1 - noise, 1 + noise, size=2)
            out.pairs[key] = (max(a * fa, 1e-6), max(b * fb, 1e-6))
        return out

    def with_linear_estimates(self, gpu_counts: Sequence[int]) -> "ProfileStore":
        """Fill missing data-parallel entries from the 1-GPU profiles.

        Isolated throughput scales with the GPU count; packed throughput
        scales the same way, so normalized pair values carry over unchanged.
        """
        out = self.copy()
        dp_models = {m for (m, g, s) in self.isolated if g == 1 and s is None and not is_llm(m)}
        for n in gpu_counts:
            for m in sorted(dp_models):
                if not out.has_isolated(m, n):
                    out.set_isolated(m, n, linear_scale(self, m, n))
            for (a, b, g, s), vals in list(self.pairs.items()):
                if g == 1 and s is None and a in dp_models and b in dp_models:
                    if out.pair_or_none(a, b, n) is None and not out.is_oom(a, b, n):
                        out.set_pair(a, b, n, *vals)
        return out

    # -- serialization -------------------------------------------------

    def to_json(self) -> dict:
        def strat(key):
            return None if key is None else ParallelismStrategy.from_key(key).to_dict()

        return {
            "schema": PROFILE_SCHEMA,
            "isolated": [
                {"model": m, "gpus": g, "strategy": strat(s), "throughput": t}
                for (m, g, s), t in sorted(self.isolated.items(), key=lambda kv: repr(kv[0]))
            ],
            "pairs": [
                {"models": [a, b], "gpus": g, "strategy": strat(s), "normalized": list(v)}
                for (a, b, g, s), v in sorted(self.pairs.items(), key=lambda kv: repr(kv[0]))
            ],
            "oom": [
                {"models": [a, b], "gpus": g, "strategy": strat(s)}
                for (a, b, g, s) in sorted(self.oom, key=repr)
            ],
            "strategy_candidates": [
                {"model": m, "gpus": g, "strategies": [s.to_dict() for s in c]}
                for (m, g), c in sorted(self.strategy_candidates.items())
            ],
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "ProfileStore":
        if doc.get("schema") != PROFILE_SCHEMA:
            raise ValueError(f"expected schema {PROFILE_SCHEMA!r}, got {doc.get('schema')!r}")

        def strat(d):
            return None if d is None else ParallelismStrategy.from_dict(d)

        store = cls()
        for e in doc.get("isolated", []):
            store.set_isolated(e["model"], int(e["gpus"]), e["throughput"], strat(e.get("strategy")))
        for e in doc.get("pairs", []):
            a, b = e["models"]
            s = strat(e.get("strategy"))
            if "normalized" in e:
                store.set_pair(a, b, int(e["gpus"]), *e["normalized"], strategy_a=s)
            else:
                store.set_pair_raw(a, b, int(e["gpus"]), *e["packed"], strategy_a=s)
        for e in doc.get("oom", []):
            a, b = e["models"]
            store.mark_oom(a, b, int(e["gpus"]), strat(e.get("strategy")))
        for e in doc.get("strategy_candidates", []):
            store.set_candidates(e["model"], int(e["gpus"]),
                                 [ParallelismStrategy.from_dict(s) for s in e["strategies"]])
        return store

    def dump(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json(), f, indent=1, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path) -> "ProfileStore":
        with open(path) as f:
            return cls.from_json(json.load(f))


def normalized_pair_throughput(store: ProfileStore, a, b, strategy_a=None) -> tuple[float, float]:
    """Normalized throughputs of jobs ``a`` and ``b`` packed on the same GPUs."""
    if a.id == b.id:
        raise ValueError("a job cannot be packed with itself")
    if a.num_gpus != b.num_gpus:
        raise ValueError("packed jobs must use the same number of GPUs")
    return store.pair(a.model_kind, b.model_kind, a.num_gpus, strategy_a)


def linear_scale(store: ProfileStore, model: str, n: int) -> float:
    """Data-parallel estimate: ``n`` GPUs give ``n`` times the 1-GPU throughput."""
    if model not in DATA_PARALLEL_MODELS:
        raise NotDataParallel(model)
    try:
        base = store.isolated[(model, 1, None)]
    except KeyError:
        raise MissingEntry((model, 1)) from None
    return n * base


# -- strategy candidates -------------------------------------------------


def pp_candidates(num_layers: int, stages: int, limit: int | None = None) -> list[ParallelismStrategy]:
    """Non-decreasing layer splits of ``num_layers`` over ``stages`` GPUs.

    Stage sizes stay within two layers of the even split so the set stays
    small; the most balanced split comes first.
    """
    base = num_layers // stages
    lo, hi = max(1, base - 2), base + 2
    out = []

    def rec(prefix, remaining, smallest):
        left = stages - len(prefix)
        if left == 0:
            if remaining == 0:
                out.append(tuple(prefix))
            return
        for x in range(smallest, hi + 1):
            if x * left > remaining:
                break
            if remaining - x > hi * (left - 1):
                continue
            rec(prefix + [x], remaining - x, x)

    rec([], num_layers, lo)
    out.sort(key=lambda s: (max(s) - min(s), s))
    if limit is not None:
        out = out[:limit]
    return [ParallelismStrategy("PP", s) for s in out]


def strategy_features(strategies: Sequence[ParallelismStrategy]) -> np.ndarray:
    """Feature rows: one-hot (DP, TP, PP) then layers per stage / total layers."""
    width = max((len(s.layers) for s in strategies), default=0)
    rows = []
    for s in strategies:
        row = [s.variant == "DP", s.variant == "TP", s.variant == "PP"]
        total = sum(s.layers) or 1
        fracs = [x / total for x in s.layers] + [0.0] * (width - len(s.layers))
        rows.append(row + fracs)
    return np.array(rows, dtype=np.float64)


# -- budgeted strategy search --------------------------------------------

_RANDOM_WARMUP = 3
_EI_XI = 0.01


def _normal_cdf(z):
    return 0.5 * (1.0 + np.vectorize(math.erf)(z / math.sqrt(2.0)))


def _normal_pdf(z):
    return np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def _posterior(x_obs, y_obs, x_all):
    """Gaussian-process posterior with a squared-exponential kernel."""
    diffs = np.linalg.norm(x_all[:, None, :] - x_all[None, :, :], axis=-1)
    nonzero = diffs[diffs > 0]
    length = float(np.median(nonzero)) if nonzero.size else 1.0

    def k(a, b):
        d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)
        return np.exp(-0.5 * (d / length) ** 2)

    mean, std = y_obs.mean(), y_obs.std() or 1.0
    y = (y_obs - mean) / std
    kxx = k(x_obs, x_obs) + 1e-6 * np.eye(len(x_obs))
    kxs = k(x_obs, x_all)
    chol = np.linalg.cholesky(kxx)
    alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, y))
    mu = kxs.T @ alpha
    w = np.linalg.solve(chol, kxs)
    var = np.clip(1.0 - (w * w).sum(axis=0), 1e-12, None)
    return mu, np.sqrt(var), y.max()


def suggest_profiling_plan(
    candidates: Sequence[ParallelismStrategy],
    observed: Sequence[tuple[ParallelismStrategy, float]],
    budget: int,
    rng_seed: int,
) -> ParallelismStrategy:
    """Next strategy to profile, or raise :class:`BudgetComplete`.

    With fewer than three observations the choice is a seeded random
    unobserved candidate. Afterwards it maximizes expected improvement
    under a Gaussian-process surrogate over :func:`strategy_features`.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if not candidates:
        raise ValueError("no candidate strategies")
    seen = {s.key for s, _ in observed}
    if not seen <= {c.key for c in candidates}:
        raise ValueError("observed strategies must be candidates")
    free = [i for i, c in enumerate(candidates) if c.key not in seen]
    if not free or len(observed) >= budget:
        raise BudgetComplete()
    if len(observed) < _RANDOM_WARMUP:
        rng = np.random.default_rng([rng_seed, len(observed)])
        return candidates[free[int(rng.integers(len(free)))]]
    feats = strategy_features(candidates)
    index = {c.key: i for i, c in enumerate(candidates)}
    x_obs = feats[[index[s.key] for s, _ in observed]]
    y_obs = np.array([v for _, v in observed], dtype=np.float64)
    mu, sigma, best = _posterior(x_obs, y_obs, feats)
    gain = mu - best - _EI_XI
    z = gain / sigma
    ei = gain * _normal_cdf(z) + sigma * _normal_pdf(z)
    pick = max(free, key=lambda i: (ei[i], -i))
    return candidates[pick]


def profile_with_budget(
    candidates: Sequence[ParallelismStrategy],
    measure: Callable[[ParallelismStrategy], float],
    budget: int,
    rng_seed: int,
):
    """Run the suggest/measure loop; returns ``(observed, best_strategy, best_value)``."""
    observed: list = []
    while True:
        try:
            s = suggest_profiling_plan(candidates, observed, budget, rng_seed)
        except BudgetComplete:
            break
        observed.append((s, float(measure(s))))
    best_s, best_v = max(observed, key=lambda sv: sv[1])
    return observed, best_s, best_v


def random_search(candidates, measure, budget: int, rng_seed: int):
    """Baseline: profile ``budget`` uniformly random candidates."""
    rng = np.random.default_rng(rng_seed)
    order = rng.permutation(len(candidates))[: min(budget, len(candidates))]
    observed = [(candidates[i], float(measure(candidates[i]))) for i in order]
    best_s, best_v = max(observed, key=lambda sv: sv[1])
    return observed, best_s, best_v


# -- synthetic profiles --------------------------------------------------


def _strategy_gain(strategy: ParallelismStrategy) -> float:
    """Concave bonus favoring pipelines that put fewer layers on early stages."""
    if strategy.variant != "PP":
        return {"DP": 0.85, "TP": 0.95}[strategy.variant]
    layers = np.array(strategy.layers, dtype=float)
    stages = len(layers)
    ramp = np.linspace(-1.0, 1.0, stages)
    target = layers.mean() * (1.0 + 0.25 * ramp)
    err = float(((layers - target) ** 2).sum()) / (layers.sum() ** 2) * stages
    return 1.0 + 0.25 - 8.0 * err


def synthetic_profile(
    seed: int = 0,
    gpu_counts: Sequence[int] = (1, 2, 4, 8),
    pair_range: tuple[float, float] = (0.35, 0.8),
    models: Sequence[str] = MODEL_CATALOG,
    strategies: bool = True,
    oom_fraction: float = 0.1,
) -> ProfileStore:
    """A complete, deterministic profile for the model catalog.

    Each job's normalized value in a pair is drawn from ``pair_range``; the
    values of data-parallel pairs do not depend on the GPU count. LLM jobs on
    two or more GPUs get DP/TP/PP candidates whose packed throughput follows
    :func:`_strategy_gain`, with a seeded fraction of (pair, strategy)
    combinations marked OOM.
    """
    rng = np.random.default_rng(seed)
    store = ProfileStore()
    lo, hi = pair_range
    for m in models:
        for g in gpu_counts:
            store.set_isolated(m, g, _BASE_ISOLATED.get(m, 10.0) * g)
    ordered = list(models)
    for i, a in enumerate(ordered):
        for b in ordered[i:]:
            shared = rng.uniform(lo, hi, size=2)
            for g in gpu_counts:
                vals = shared if not (is_llm(a) or is_llm(b)) else rng.uniform(lo, hi, size=2)
                if a == b:
                    vals = (vals[0], vals[0])  # identical jobs slow each other equally
                store.set_pair(a, b, g, *vals)
    if strategies:
        for m in models:
            if not is_llm(m):
                continue
            for g in gpu_counts:
                if g < 2:
                    continue
                cands = [ParallelismStrategy("DP"), ParallelismStrategy("TP")]
                cands += pp_candidates(MODEL_LAYERS[m], g, limit=12)
                store.set_candidates(m, g, cands)
                for other in models:
                    base = store.pair(m, other, g)
                    for s in cands:
                        if rng.random() < oom_fraction:
                            store.mark_oom(m, other, g, s)
                            continue
                        gain = _strategy_gain(s)
                        na = min(1.0, max(0.05, base[0] * gain))
                        store.set_pair(m, other, g, na, base[1], strategy_a=s)
    return store


__all__ = [
    "PROFILE_SCHEMA",
    "ProfileStore",
    "normalized_pair_throughput",
    "linear_scale",
    "pp_candidates",
    "strategy_features",
    "suggest_profiling_plan",
    "profile_with_budget",
    "random_search",
    "synthetic_profile",
    "LLM_MODELS",
]
