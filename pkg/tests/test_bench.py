import csv
import io
import json
from dataclasses import replace

import pytest

from vnfqubo.bench import (
    TABLE3_COLUMNS,
    TABLE4_COLUMNS,
    CaseConfig,
    CaseResult,
    GeneratorParams,
    RunRecord,
    emit_histograms,
    emit_table,
    generate_case,
    histogram,
    load_cases,
    run_case,
    write_outputs,
)
from vnfqubo.instance import InstanceError, save_instance
from vnfqubo.solvers import AnnealParams, exhaustive_schedule_oracle

from conftest import single_step


def fake_result(name="c", objectives=(20.0,) * 50, repeats=50):
    runs = [RunRecord(k, v is not None, v, v, v) for k, v in enumerate(objectives)]
    return CaseResult(name, "I = 1, J = 1, M = 1", 19.0, 20, 1816, repeats, runs)


def test_generate_deterministic():
    p = GeneratorParams(2, 2, 2)
    assert generate_case(p, 7) == generate_case(p, 7)
    assert generate_case(p, 7) != generate_case(p, 8)


def test_generate_density_one():
    inst = generate_case(GeneratorParams(2, 3, 3, kinds=4, density=1.0), 0)
    assert all(vm.capabilities == frozenset({1, 2, 3, 4}) for vm in inst.vms)


def test_generate_valid_and_in_range():
    p = GeneratorParams(3, 3, 2, workload_range=(0.5, 3.0), rates=(1.0, 2.0))
    for seed in range(20):
        inst = generate_case(p, seed)
        assert (inst.n_chains, inst.max_steps, inst.n_vms) == (3, 3, 2)
        assert all(vm.rate in (1.0, 2.0) for vm in inst.vms)
        assert all(0.5 <= s.workload <= 3.0 for c in inst.chains for s in c.steps)
        assert all(inst.capable_set(i, j) for i, j in inst.steps())


def test_generate_impossible():
    with pytest.raises(InstanceError):
        generate_case(GeneratorParams(1, 1, 1, density=0.0, max_tries=5), 0)


def test_run_case_trivial():
    inst = single_step(1)
    res = run_case(CaseConfig("t", inst, repeats=1, anneal=AnnealParams(reads=20)))
    assert res.success_rate in (0.0, 1.0)
    if res.successful:
        assert res.best_objective_seconds == exhaustive_schedule_oracle(inst, res.horizon)[1]


def test_run_case_short_horizon_override():
    inst = replace(single_step(3), horizon_override=2)
    res = run_case(CaseConfig("short", inst, repeats=2, anneal=AnnealParams(reads=3, sweeps=50), retry_cap=0))
    assert not res.successful and res.success_rate == 0.0
    assert res.best_objective_seconds is None
    assert any("unsuccessful" in d for d in res.diagnostics)


def test_run_case_retry_bumps_horizon():
    inst = replace(single_step(2), horizon_override=2)
    res = run_case(CaseConfig("bump", inst, repeats=2, anneal=AnnealParams(reads=20, sweeps=300), retry_cap=2))
    assert res.successful and res.horizon >= 3


def test_run_case_deterministic_and_invariants():
    inst = generate_case(GeneratorParams(1, 2, 2), 3)
    cfg = CaseConfig("d", inst, repeats=4, anneal=AnnealParams(reads=10, sweeps=300, seed=2))
    a, b = run_case(cfg), run_case(cfg)
    strip = lambda r: [(x.seed, x.feasible, x.objective_s, x.longest_delay_s) for x in r.runs]
    assert strip(a) == strip(b)
    assert a.success_rate == len(a.feasible_runs) / a.repeats
    if a.successful:
        assert all(a.best_objective_seconds <= r.objective_s for r in a.feasible_runs)
        assert a.best_objective_seconds >= exhaustive_schedule_oracle(inst, a.horizon)[1]


def test_case_config_validation():
    with pytest.raises(ValueError):
        CaseConfig("x", single_step(1), repeats=0)


def parse(text):
    return list(csv.reader(io.StringIO(text)))


def test_emit_table_empty():
    assert parse(emit_table([], "table3")) == [list(TABLE3_COLUMNS)]
    assert parse(emit_table([], "table4")) == [list(TABLE4_COLUMNS)]


def test_emit_table_one_row():
    rows = parse(emit_table([fake_result()]))
    assert len(rows) == 2 and len(rows[1]) == 7
    assert rows[1][6] == "(1816, 1816)"
    text = emit_table([fake_result()], "table4", "text").splitlines()
    assert text[0].split() == list(TABLE4_COLUMNS)


def test_emit_table_twelve():
    rows = parse(emit_table([fake_result(f"case{k}") for k in range(1, 13)]))
    assert len(rows) == 13 and all(len(r) == 7 for r in rows)


def test_emit_table_bad_args():
    with pytest.raises(ValueError):
        emit_table([], "table5")
    with pytest.raises(ValueError):
        emit_table([], "table3", "html")


def test_histogram_single_bin():
    assert histogram(fake_result(), "total") == [(20.0, 50, 1.0)]


def test_histogram_mixed_sums_to_success():
    res = fake_result(objectives=[20.0, None, 22.0, 20.0, None, 25.0, 20.0], repeats=7)
    for metric in ("longest", "total"):
        assert sum(p for _, _, p in histogram(res, metric)) == pytest.approx(res.success_rate, abs=1e-12)


def test_emit_histograms_round_trip():
    res = fake_result(objectives=[20.0, None, 22.0, 20.0], repeats=4)
    files = emit_histograms([res])
    assert set(files) == {"hist_longest_c.csv", "hist_total_c.csv"}
    rows = parse(files["hist_total_c.csv"])
    assert rows[0] == ["delay_s", "count", "probability"]
    assert [(float(v), int(n), float(p)) for v, n, p in rows[1:]] == [(20.0, 2, 0.5), (22.0, 1, 0.25)]


def test_write_outputs(tmp_path):
    names = write_outputs([fake_result("a"), fake_result("b")], tmp_path)
    assert sorted(p.name for p in tmp_path.iterdir()) == sorted(names)
    assert "table3.csv" in names and "hist_longest_b.csv" in names
    assert json.loads((tmp_path / "timings.json").read_text())["a"]["runs"] == 50


def test_load_cases(tmp_path, fig1):
    (tmp_path / "fig1.json").write_text(save_instance(fig1))
    spec = {
        "defaults": {"repeats": 3, "reads": 4, "sweeps": 100, "seed": 9},
        "cases": [
            {"name": "fig1", "instance": "fig1.json", "penalty": 500},
            {"name": "g", "generate": {"chains": 2, "steps": 2, "vms": 2, "seed": 7}, "repeats": 5, "slot_length_s": 0.5},
        ],
    }
    a, b = load_cases(json.dumps(spec), tmp_path)
    assert a.instance == fig1 and a.repeats == 3 and a.penalty.base == 500 and a.anneal.sweeps == 100
    assert b.repeats == 5 and b.instance.slot_length == 0.5 and b.anneal.seed == 9


def test_load_cases_errors(tmp_path):
    with pytest.raises(ValueError):
        load_cases("{not json", tmp_path)
    with pytest.raises(ValueError):
        load_cases(json.dumps({"cases": [{"name": "x"}]}), tmp_path)
    dup = {"cases": [{"name": "x", "generate": {"chains": 1, "steps": 1, "vms": 1}}] * 2}
    with pytest.raises(ValueError):
        load_cases(json.dumps(dup), tmp_path)
