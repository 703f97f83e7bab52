import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matchsched.cluster import Job, ParallelismStrategy
from matchsched.errors import (
    BudgetComplete,
    Infeasible,
    MissingEntry,
    MissingIsolatedProfile,
    NotDataParallel,
    OutOfMemory,
)
from matchsched.fixtures import two_model_pair_store
from matchsched.profiling import (
    PROFILE_SCHEMA,
    ProfileStore,
    linear_scale,
    normalized_pair_throughput,
    pp_candidates,
    profile_with_budget,
    random_search,
    strategy_features,
    suggest_profiling_plan,
    synthetic_profile,
)


def test_normalized_pair_from_raw_throughputs():
    store = two_model_pair_store()
    a = Job(1, 0, 8, "PointNet", 10)
    b = Job(2, 0, 8, "GPT3-3B", 10)
    na, nb = normalized_pair_throughput(store, a, b)
    assert (na, nb) == (0.3, 0.5)
    assert na + nb == 0.8
    assert normalized_pair_throughput(store, b, a) == (0.5, 0.3)


def test_job_cannot_pack_with_itself():
    store = two_model_pair_store()
    a = Job(1, 0, 8, "PointNet", 10)
    with pytest.raises(ValueError):
        normalized_pair_throughput(store, a, a)


def test_missing_and_oom_lookups():
    store = two_model_pair_store()
    with pytest.raises(MissingEntry):
        store.pair("PointNet", "ResNet-50", 8)
    s = ParallelismStrategy("TP")
    store.mark_oom("GPT3-3B", "PointNet", 8, s)
    with pytest.raises(OutOfMemory):
        store.pair("GPT3-3B", "PointNet", 8, s)
    assert issubclass(OutOfMemory, Infeasible)
    with pytest.raises(MissingIsolatedProfile):
        store.isolated_throughput("VGG-19", 1)


def test_store_values_validated():
    store = ProfileStore()
    with pytest.raises(ValueError):
        store.set_isolated("ResNet-50", 1, 0.0)
    with pytest.raises(ValueError):
        store.set_pair("ResNet-50", "VGG-19", 1, 1.2, 0.5)


def test_synthetic_store_values_in_unit_interval_and_symmetric():
    store = synthetic_profile(3)
    for (a, b, g, s), (x, y) in store.pairs.items():
        assert 0 < x <= 1 and 0 < y <= 1
        if s is None:
            assert store.pair(b, a, g) == (y, x)


def test_linear_scale():
    store = ProfileStore()
    store.set_isolated("PointNet", 1, 50.0)
    store.set_isolated("ResNet-50", 1, 12.5)
    store.set_isolated("GPT3-XL", 1, 3.0)
    assert linear_scale(store, "PointNet", 2) == 100.0
    assert linear_scale(store, "PointNet", 1) == 50.0
    assert linear_scale(store, "ResNet-50", 4) == 50.0
    with pytest.raises(NotDataParallel):
        linear_scale(store, "GPT3-XL", 2)
    with pytest.raises(MissingEntry):
        linear_scale(store, "VGG-19", 2)


@given(st.sampled_from(["ResNet-50", "VGG-19", "DCGAN", "PointNet"]),
       st.integers(1, 64), st.integers(1, 16), st.floats(0.5, 500))
def test_property_linear_scale_is_linear(model, n, a, base):
    store = ProfileStore()
    store.set_isolated(model, 1, base)
    assert linear_scale(store, model, a * n) == pytest.approx(a * linear_scale(store, model, n), rel=1e-15)


def test_linear_estimates_fill_gpu_counts():
    store = ProfileStore()
    store.set_isolated("PointNet", 1, 50.0)
    store.set_isolated("VGG-19", 1, 9.0)
    store.set_pair("PointNet", "VGG-19", 1, 0.4, 0.7)
    full = store.with_linear_estimates([2, 4])
    assert full.isolated_throughput("PointNet", 4) == 200.0
    assert full.pair("VGG-19", "PointNet", 2) == (0.7, 0.4)
    assert "PointNet" not in {m for (m, g, s) in store.isolated if g == 4}


def test_profile_json_roundtrip(tmp_path):
    store = synthetic_profile(1)
    path = tmp_path / "p.json"
    store.dump(path)
    doc = json.loads(path.read_text())
    assert doc["schema"] == PROFILE_SCHEMA
    assert set(doc) >= {"isolated", "pairs", "oom", "strategy_candidates"}
    again = ProfileStore.load(path)
    assert again.to_json() == store.to_json()


def test_profile_json_accepts_raw_packed_entries():
    doc = {
        "schema": PROFILE_SCHEMA,
        "isolated": [{"model": "PointNet", "gpus": 8, "strategy": None, "throughput": 50},
                     {"model": "GPT3-3B", "gpus": 8, "strategy": None, "throughput": 2}],
        "pairs": [{"models": ["PointNet", "GPT3-3B"], "gpus": 8, "strategy": None, "packed": [15, 1]}],
        "oom": [{"models": ["GPT3-3B", "VGG-19"], "gpus": 8,
                 "strategy": {"variant": "PP", "layers": [4, 4, 4, 4, 4, 4, 4, 4]}}],
        "strategy_candidates": [],
    }
    store = ProfileStore.from_json(doc)
    assert store.pair("PointNet", "GPT3-3B", 8) == (0.3, 0.5)
    assert store.is_oom("GPT3-3B", "VGG-19", 8, ParallelismStrategy("PP", (4,) * 8))


def test_wrong_schema_rejected():
    with pytest.raises(ValueError):
        ProfileStore.from_json({"schema": "other/1"})


def test_noise_is_seeded_and_bounded():
    store = synthetic_profile(0)
    a = store.with_noise(0.2, 5)
    b = store.with_noise(0.2, 5)
    assert a.pairs == b.pairs
    for key, (x, y) in store.pairs.items():
        nx, ny = a.pairs[key]
        assert 0.8 * x - 1e-12 <= nx <= 1.2 * x + 1e-12
        assert 0.8 * y - 1e-12 <= ny <= 1.2 * y + 1e-12
    assert store.with_noise(0.0, 5).pairs == store.pairs


def test_pp_candidates_sum_to_layer_count():
    cands = pp_candidates(32, 8)
    assert cands[0].layers == (4,) * 8
    assert ParallelismStrategy("PP", (3, 3, 3, 4, 4, 5, 5, 5)) in cands
    assert all(sum(c.layers) == 32 and len(c.layers) == 8 for c in cands)
    assert len({c.key for c in cands}) == len(cands)


def test_strategy_features_shape():
    feats = strategy_features([ParallelismStrategy("DP"), ParallelismStrategy("PP", (1, 3))])
    assert feats.tolist() == [[1, 0, 0, 0, 0], [0, 0, 1, 0.25, 0.75]]


def _synthetic_objective():
    cands = pp_candidates(32, 8, limit=20)
    target = np.array([3, 3, 3, 4, 4, 5, 5, 5.0])

    def measure(s):
        return 1.6 - 0.05 * float(((np.array(s.layers) - target) ** 2).sum())

    return cands, measure


def test_exhaustive_budget_finds_exact_best():
    cands, measure = _synthetic_objective()
    observed, best, value = profile_with_budget(cands, measure, len(cands) + 5, rng_seed=0)
    assert {s.key for s, _ in observed} == {c.key for c in cands}
    assert value == max(measure(c) for c in cands)


def test_warmup_choice_is_seeded():
    cands, measure = _synthetic_objective()
    observed = [(cands[0], measure(cands[0])), (cands[1], measure(cands[1]))]
    first = suggest_profiling_plan(cands, observed, 8, rng_seed=4)
    assert first == suggest_profiling_plan(cands, observed, 8, rng_seed=4)
    assert first not in (cands[0], cands[1])
    picks = {suggest_profiling_plan(cands, observed, 8, rng_seed=s).key for s in range(20)}
    assert len(picks) > 1


def test_budget_complete_sentinel():
    cands, measure = _synthetic_objective()
    observed = [(c, measure(c)) for c in cands[:3]]
    with pytest.raises(BudgetComplete):
        suggest_profiling_plan(cands, observed, 3, rng_seed=0)
    with pytest.raises(BudgetComplete):
        suggest_profiling_plan(cands[:3], observed, 10, rng_seed=0)


def test_suggestion_preconditions():
    cands, measure = _synthetic_objective()
    with pytest.raises(ValueError):
        suggest_profiling_plan(cands, [], 0, 0)
    with pytest.raises(ValueError):
        suggest_profiling_plan([], [], 3, 0)
    stranger = ParallelismStrategy("PP", (31, 1))
    with pytest.raises(ValueError):
        suggest_profiling_plan(cands, [(stranger, 1.0)], 3, 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 1000), st.integers(1, 19))
def test_property_never_repeats_and_deterministic(seed, n_obs):
    cands, measure = _synthetic_objective()
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(cands), size=n_obs, replace=False)
    observed = [(cands[i], measure(cands[i])) for i in idx]
    pick = suggest_profiling_plan(cands, observed, 20, seed)
    assert pick.key not in {s.key for s, _ in observed}
    assert pick == suggest_profiling_plan(cands, observed, 20, seed)


def test_guided_search_beats_random_on_average():
    cands, measure = _synthetic_objective()
    guided = np.mean([profile_with_budget(cands, measure, 8, s)[2] for s in range(50)])
    rand = np.mean([random_search(cands, measure, 8, s)[2] for s in range(50)])
    assert guided >= rand
