import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matchsched.cluster import ClusterSpec, Job, PlacementPlan
from matchsched.errors import SimulationError
from matchsched.migration import MigrationPlan
from matchsched.packing import PackedPair
from matchsched.profiling import ProfileStore, synthetic_profile
from matchsched.scheduling import RoundDecision, RoundInput, run_round
from matchsched.simulator import (
    RESULTS_SCHEMA,
    TRACE_SCHEMA,
    SimConfig,
    SimState,
    TraceSpec,
    dumps,
    generate_trace,
    load_trace,
    noise_sweep,
    run_simulation,
    save_results,
    save_trace,
    step_round,
    trace_from_json,
    trace_to_json,
)


def _decision(spec, placed, packed=(), migrated=()):
    migration = MigrationPlan((), None, 0.0, frozenset(migrated), PlacementPlan.empty(spec))
    return RoundDecision({j: frozenset() for j in placed}, list(packed), [], migration, 0.0)


def _one_gpu_state(jobs, store=None):
    spec = ClusterSpec(1, 2)
    return SimState(spec, {j.id: j for j in jobs}, store, store), spec


def test_unpacked_job_finishes_at_round_end():
    state, spec = _one_gpu_state([Job(1, 0.0, 1, "ResNet-50", 360.0)])
    step_round(state, _decision(spec, [1]), SimConfig())
    assert state.jobs[1].completion_time == 360.0
    assert state.jobs[1].progress_us == state.jobs[1].total_work_us


def test_half_speed_packed_job_takes_two_rounds():
    store = ProfileStore()
    store.set_isolated("ResNet-50", 1, 10.0)
    store.set_isolated("VGG-19", 1, 10.0)
    store.set_pair("ResNet-50", "VGG-19", 1, 0.5, 0.5)
    jobs = [Job(1, 0.0, 1, "ResNet-50", 360.0), Job(2, 0.0, 1, "VGG-19", 3600.0)]
    state, spec = _one_gpu_state(jobs, store)
    decision = _decision(spec, [1, 2], [PackedPair(1, 2, None, None, 1.0)])
    step_round(state, decision, SimConfig())
    assert state.jobs[1].progress_us == 180_000_000 and state.jobs[1].completion_time is None
    step_round(state, decision, SimConfig())
    assert state.jobs[1].completion_time == 720.0


def test_migrated_job_loses_penalty():
    state, spec = _one_gpu_state([Job(1, 0.0, 1, "ResNet-50", 3600.0)])
    step_round(state, _decision(spec, [1], migrated=[1]), SimConfig(migration_penalty_seconds=30))
    assert state.jobs[1].progress_us == 330_000_000
    assert state.jobs[1].migrations == 1 and state.migration_total == 1


def test_penalty_longer_than_round_floors_at_zero():
    state, spec = _one_gpu_state([Job(1, 0.0, 1, "ResNet-50", 3600.0)])
    step_round(state, _decision(spec, [1], migrated=[1]),
               SimConfig(round_seconds=10, migration_penalty_seconds=30))
    assert state.jobs[1].progress_us == 0


def test_unscheduled_job_does_not_progress():
    jobs = [Job(1, 0.0, 1, "ResNet-50", 3600.0), Job(2, 0.0, 1, "ResNet-50", 3600.0)]
    state, spec = _one_gpu_state(jobs)
    step_round(state, _decision(spec, [1]), SimConfig())
    assert state.jobs[2].progress_us == 0 and state.jobs[2].attained_service == 0
    assert state.jobs[1].attained_service == 360.0


def test_single_uncontended_job():
    config = SimConfig(num_gpus=4, gpus_per_node=4, packing_enabled=False)
    report = run_simulation([Job(0, 0.0, 1, "ResNet-50", 100.0)], None, config)
    assert report.avg_jct == 100.0 and report.makespan == 100.0
    assert report.ftf_ratios == [1.0]


def test_two_no_pack_jobs_run_serially():
    jobs = [Job(0, 0.0, 1, "ResNet-50", 360.0, no_pack=True),
            Job(1, 0.0, 1, "ResNet-50", 360.0, no_pack=True)]
    config = SimConfig(num_gpus=1, gpus_per_node=1, policy="fifo")
    report = run_simulation(jobs, synthetic_profile(0), config)
    assert sorted(r.jct for r in report.jobs) == [360.0, 720.0]


def test_idle_gap_skips_to_next_round_boundary():
    jobs = [Job(0, 1000.0, 1, "ResNet-50", 100.0)]
    report = run_simulation(jobs, None, SimConfig(num_gpus=4, packing_enabled=False))
    assert report.jobs[0].completion_s == 1180.0


def test_unplaceable_job_raises():
    with pytest.raises(SimulationError):
        run_simulation([Job(0, 0.0, 8, "ResNet-50", 10.0)], None,
                       SimConfig(num_gpus=4, packing_enabled=False))
    with pytest.raises(SimulationError):
        run_simulation([Job(0, 0.0, 1, "ResNet-50", 10.0)], None, SimConfig(num_gpus=4))


def test_round_limit_reports_index():
    with pytest.raises(SimulationError) as info:
        run_simulation([Job(0, 0.0, 1, "ResNet-50", 1e6)], None,
                       SimConfig(num_gpus=4, packing_enabled=False, max_rounds=3))
    assert info.value.round_index == 3


@pytest.mark.parametrize("kwargs", [
    {"round_seconds": 0}, {"migration_penalty_seconds": -1}, {"profile_noise": 1.5},
    {"migration_kind": "teleport"}, {"policy": "srtf"}, {"num_gpus": 30, "gpus_per_node": 4},
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SimConfig(**kwargs)


def _small_run(seed, **overrides):
    rng = np.random.default_rng(seed)
    trace = generate_trace(TraceSpec("shockwave", int(rng.integers(1, 25)), 400.0, seed,
                                     no_pack_fraction=0.2))
    for j in trace:
        j.total_work = round(j.total_work / 20, 3)
    fields = dict(num_gpus=8, gpus_per_node=4, rng_seed=seed,
                  policy=str(rng.choice(["fifo", "tiresias", "ftf"])))
    fields.update(overrides)
    return trace, synthetic_profile(seed, pair_range=(0.3, 0.9)), SimConfig(**fields)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_property_conservation_and_metrics(seed):
    trace, profiles, config = _small_run(seed)
    report = run_simulation(trace, profiles, config)
    for record, job in zip(report.jobs, sorted(trace, key=lambda j: j.id)):
        assert record.granted_us == round(job.total_work * 1e6)
        assert record.completion_s >= record.arrival_s
        assert record.ftf >= 0
    assert report.makespan == max((r.completion_s for r in report.jobs), default=0.0)


def test_progress_and_service_never_decrease():
    trace, profiles, config = _small_run(11)
    spec = config.cluster
    jobs = {j.id: j for j in trace}
    state = SimState(spec, jobs, profiles, profiles)
    while any(j.state != "finished" for j in jobs.values()):
        if not state.active:
            state.now += config.round_seconds
            continue
        before = {j.id: (j.progress_us, j.attained_service) for j in jobs.values()}
        decision = run_round(state, config.policy, True, "tesserae")
        step_round(state, decision, config)
        for j in jobs.values():
            p, a = before[j.id]
            assert j.progress_us >= p and j.attained_service >= a
            if j.id not in decision.placed:
                assert (j.progress_us, j.attained_service) == (p, a)


def test_results_are_byte_identical(tmp_path):
    trace, profiles, config = _small_run(3, profile_noise=0.3)
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for path in paths:
        save_results(path, run_simulation(trace, profiles, config))
    assert paths[0].read_bytes() == paths[1].read_bytes()
    doc = json.loads(paths[0].read_text())
    assert doc["schema"] == RESULTS_SCHEMA and paths[0].read_text().endswith("\n")
    assert {"avg_jct_s", "makespan_s", "migration_total"} <= set(doc["metrics"])


def test_naive_migration_total_matches_per_round_count():
    trace, profiles, config = _small_run(5, packing_enabled=False, migration_kind="naive")
    report = run_simulation(trace, profiles, config)
    assert report.migration_total == report.naive_migration_total


def test_tesserae_never_exceeds_naive_on_same_decisions():
    for seed in range(6):
        trace, profiles, base = _small_run(seed, migration_penalty_seconds=0.0)
        naive = run_simulation(trace, profiles, SimConfig(**{**base.__dict__, "migration_kind": "naive"}))
        ours = run_simulation(trace, profiles, base)
        assert [r["placed"] for r in ours.rounds] == [r["placed"] for r in naive.rounds]
        assert ours.naive_migration_total == naive.migration_total
        assert ours.migration_total <= naive.migration_total


def test_trace_determinism_and_roundtrip(tmp_path):
    spec = TraceSpec("gavel", 50, rng_seed=9, llm_fraction=0.3)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_trace(a, generate_trace(spec), spec)
    save_trace(b, generate_trace(spec), spec)
    assert a.read_bytes() == b.read_bytes()
    jobs = load_trace(a)
    assert [(j.id, j.num_gpus, j.total_work) for j in jobs] == [
        (j.id, j.num_gpus, j.total_work) for j in generate_trace(spec)]
    assert json.loads(a.read_text())["schema"] == TRACE_SCHEMA


def test_empty_trace():
    assert generate_trace(TraceSpec(num_jobs=0)) == []
    doc = trace_to_json([])
    assert trace_from_json(doc) == []
    report = run_simulation([], None, SimConfig(packing_enabled=False))
    assert report.avg_jct == 0.0 and report.makespan == 0.0


def test_trace_rejects_bad_input():
    with pytest.raises(ValueError):
        trace_from_json({"schema": "other/1", "jobs": []})
    dup = {"schema": TRACE_SCHEMA, "jobs": [
        {"id": 1, "arrival_s": 0, "num_gpus": 1, "model_kind": "ResNet-50", "total_work_s": 1}] * 2}
    with pytest.raises(ValueError):
        trace_from_json(dup)
    with pytest.raises(ValueError):
        TraceSpec(style="philly")


def test_duration_ranges_per_style():
    shock = generate_trace(TraceSpec("shockwave", 2000, rng_seed=1))
    assert all(0.2 * 3600 - 1 <= j.total_work <= 20 * 3600 + 1 for j in shock)
    gavel = generate_trace(TraceSpec("gavel", 2000, rng_seed=1))
    minutes = np.array([j.total_work / 60 for j in gavel])
    assert minutes.min() >= 10 ** 1.5 - 1e-3 and minutes.max() <= 1e4 + 1e-3
    assert abs((minutes <= 1e3).mean() - 0.8) < 0.04


def test_llm_fraction_controls_model_mix():
    jobs = generate_trace(TraceSpec("gavel", 4000, rng_seed=2, llm_fraction=0.25))
    frac = np.mean([j.model_kind.startswith("GPT3") for j in jobs])
    assert abs(frac - 0.25) < 0.03


def test_noise_sweep_table():
    trace, profiles, config = _small_run(8)
    rows = noise_sweep(trace, profiles, config, (0.0, 0.5))
    assert [r["noise"] for r in rows] == [0.0, 0.5]
    assert rows[0]["jct_ratio"] == 1.0
    assert rows == noise_sweep(trace, profiles, config, (0.0, 0.5))


def test_dumps_is_canonical():
    assert dumps({"b": 1, "a": [1, 2]}) == '{\n "a": [\n  1,\n  2\n ],\n "b": 1\n}\n'
