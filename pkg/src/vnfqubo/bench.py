"""End-to-end runs with repeats, result tables and delay histograms."""
from __future__ import annotations

import csv
import io
import json
import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .greedy import greedy_schedule, horizon as greedy_horizon
from .instance import FunctionStep, Instance, InstanceError, ServiceChain, VmSpec, load_instance
from .qubo import PenaltyConfig, build_qubo
from .schedule import avg_vm_busy_time, longest_delay
from .solvers import AnnealParams, best_feasible, simulated_annealing

log = logging.getLogger(__name__)

TABLE3_COLUMNS = (
    "case",
    "parameters",
    "greedy_s",
    "objective_s",
    "longest_delay_s",
    "avg_vm_busy_s",
    "q_size",
)
TABLE4_COLUMNS = ("case", "q_size", "horizon", "repeats", "feasible_runs", "success_rate")


@dataclass(frozen=True)
class GeneratorParams:
    chains: int
    steps: int
    vms: int
    kinds: int = 4
    workload_range: tuple = (0.5, 3.0)
    rates: tuple = (1.0, 1.5, 2.0)
    density: float = 0.6
    slot_length: float = 1.0
    max_tries: int = 1000


def generate_case(params: GeneratorParams, seed: int) -> Instance:
    """Random instance drawn from ``params``; identical for identical seeds.

    Each (VM, kind) pair is served with probability ``density``. Draws that
    leave a used kind unserved or a VM idle are redrawn.
    """
    rng = np.random.default_rng(seed)
    lo, hi = params.workload_range
    for _ in range(params.max_tries):
        serve = rng.random((params.vms, params.kinds)) < params.density
        kinds = rng.integers(1, params.kinds + 1, size=(params.chains, params.steps))
        loads = np.round(rng.uniform(lo, hi, size=(params.chains, params.steps)), 1)
        loads = np.maximum(loads, 0.1)
        rates = rng.choice(np.asarray(params.rates, dtype=float), size=params.vms)
        if not serve.any(axis=1).all():
            continue
        if not all(serve[:, k - 1].any() for k in np.unique(kinds)):
            continue
        vms = tuple(
            VmSpec(m + 1, frozenset(int(k) + 1 for k in np.nonzero(serve[m])[0]), float(rates[m]))
            for m in range(params.vms)
        )
        chains = tuple(
            ServiceChain(
                i + 1,
                tuple(FunctionStep(int(kinds[i, j]), float(loads[i, j])) for j in range(params.steps)),
            )
            for i in range(params.chains)
        )
        return Instance(vms, chains, params.slot_length)
    raise InstanceError(f"no servable instance after {params.max_tries} draws (density {params.density})")


@dataclass(frozen=True)
class CaseConfig:
    name: str
    instance: Instance
    repeats: int = 50
    anneal: AnnealParams = AnnealParams()
    penalty: PenaltyConfig = PenaltyConfig()
    retry_cap: int = 3

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.retry_cap < 0:
            raise ValueError("retry cap must be >= 0")


@dataclass
class RunRecord:
    seed: int
    feasible: bool
    objective_s: Optional[float] = None
    longest_delay_s: Optional[float] = None
    avg_vm_busy_s: Optional[float] = None
    sampler_s: float = 0.0


@dataclass
class CaseResult:
    name: str
    parameters: str
    greedy_seconds: float
    horizon: int
    q_size: int
    repeats: int
    runs: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    schedule: object = None

    @property
    def feasible_runs(self) -> list:
        return [r for r in self.runs if r.feasible]

    @property
    def success_rate(self) -> float:
        return len(self.feasible_runs) / self.repeats

    @property
    def successful(self) -> bool:
        return bool(self.feasible_runs)

    def _best(self) -> Optional[RunRecord]:
        ok = self.feasible_runs
        return min(ok, key=lambda r: r.objective_s) if ok else None

    @property
    def best_objective_seconds(self) -> Optional[float]:
        best = self._best()
        return None if best is None else best.objective_s

    @property
    def longest_delay_seconds(self) -> Optional[float]:
        best = self._best()
        return None if best is None else best.longest_delay_s

    @property
    def avg_vm_busy_seconds(self) -> Optional[float]:
        best = self._best()
        return None if best is None else best.avg_vm_busy_s

    @property
    def avg_sampler_seconds(self) -> float:
        return float(np.mean([r.sampler_s for r in self.runs])) if self.runs else 0.0


def run_seed(base: int, run: int) -> int:
    return int(np.random.SeedSequence([base, run]).generate_state(1, np.uint32)[0])


def parameters_label(instance: Instance) -> str:
    return f"I = {instance.n_chains}, J = {instance.max_steps}, M = {instance.n_vms}"


def run_case(config: CaseConfig) -> CaseResult:
    """Greedy horizon, QUBO build, repeated annealing and first-feasible decoding.

    When no run is feasible the horizon grows by one slot, up to
    ``retry_cap`` times, and all repeats are redone.
    """
    inst = config.instance
    greedy = greedy_schedule(inst)
    base = greedy_horizon(inst)
    result = None
    for bump in range(config.retry_cap + 1):
        H = base + bump
        result = CaseResult(
            config.name,
            parameters_label(inst),
            greedy.makespan_slots * inst.slot_length,
            H,
            0,
            config.repeats,
        )
        if H < 2:
            result.diagnostics.append(f"horizon {H} too short to build a model")
            result.runs = [RunRecord(run_seed(config.anneal.seed, r), False) for r in range(config.repeats)]
            continue
        model = build_qubo(inst, H, config.penalty)
        result.q_size = model.n_vars
        best_schedule = None
        for r in range(config.repeats):
            seed = run_seed(config.anneal.seed, r)
            ss = simulated_annealing(model, replace(config.anneal, seed=seed))
            found = best_feasible(model, ss)
            if found is None:
                result.runs.append(RunRecord(seed, False, sampler_s=ss.timing))
                continue
            schedule, objective = found
            rec = RunRecord(
                seed,
                True,
                objective,
                longest_delay(inst, schedule),
                avg_vm_busy_time(inst, schedule),
                ss.timing,
            )
            result.runs.append(rec)
            if best_schedule is None or objective < best_schedule[1]:
                best_schedule = (schedule, objective)
        result.schedule = None if best_schedule is None else best_schedule[0]
        log.info("%s: horizon %d, N=%d, success %.2f", config.name, H, model.n_vars, result.success_rate)
        if result.successful:
            return result
        result.diagnostics.append(f"no feasible run at horizon {H}")
    result.diagnostics.append(f"unsuccessful after {config.retry_cap} horizon retries")
    return result


def _num(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.10g}"


def table3_rows(results: Sequence[CaseResult]) -> list:
    return [
        [
            r.name,
            r.parameters,
            _num(r.greedy_seconds),
            _num(r.best_objective_seconds),
            _num(r.longest_delay_seconds),
            _num(r.avg_vm_busy_seconds),
            f"({r.q_size}, {r.q_size})",
        ]
        for r in results
    ]


def table4_rows(results: Sequence[CaseResult]) -> list:
    return [
        [r.name, str(r.q_size), str(r.horizon), str(r.repeats), str(len(r.feasible_runs)), _num(r.success_rate)]
        for r in results
    ]


def emit_table(results: Sequence[CaseResult], table: str = "table3", fmt: str = "csv") -> str:
    """Render the per-case summary (``table3``) or success table (``table4``) as CSV or aligned text."""
    if table == "table3":
        header, rows = TABLE3_COLUMNS, table3_rows(results)
    elif table == "table4":
        header, rows = TABLE4_COLUMNS, table4_rows(results)
    else:
        raise ValueError(f"unknown table {table!r}")
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return buf.getvalue()
    if fmt == "text":
        widths = [max([len(h)] + [len(row[k]) for row in rows]) for k, h in enumerate(header)]
        lines = ["  ".join(h.ljust(n) for h, n in zip(header, widths))]
        lines += ["  ".join(c.ljust(n) for c, n in zip(row, widths)) for row in rows]
        return "\n".join(line.rstrip() for line in lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def histogram(result: CaseResult, metric: str) -> list:
    """``[(value_s, count, probability)]`` over feasible runs; probability is count / repeats."""
    attr = {"longest": "longest_delay_s", "total": "objective_s"}[metric]
    counts = Counter(getattr(r, attr) for r in result.feasible_runs)
    return [(v, n, n / result.repeats) for v, n in sorted(counts.items())]


def emit_histograms(results: Sequence[CaseResult]) -> dict:
    """File name to CSV text, two histograms per case. Infeasible runs are left out."""
    files = {}
    for r in results:
        for metric in ("longest", "total"):
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(("delay_s", "count", "probability"))
            for v, n, prob in histogram(r, metric):
                w.writerow((_num(v), n, _num(prob)))
            files[f"hist_{metric}_{r.name}.csv"] = buf.getvalue()
    return files


def timings(results: Sequence[CaseResult]) -> dict:
    """Wall-clock sampler timings; the only output that varies between identical runs."""
    return {r.name: {"avg_sampler_seconds": r.avg_sampler_seconds, "runs": len(r.runs)} for r in results}


def write_outputs(results: Sequence[CaseResult], out_dir) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {"table3.csv": emit_table(results, "table3"), "table4.csv": emit_table(results, "table4")}
    files.update(emit_histograms(results))
    for name, text in files.items():
        (out / name).write_text(text)
    (out / "timings.json").write_text(json.dumps(timings(results), indent=2) + "\n")
    return sorted(files) + ["timings.json"]


def _anneal_from(spec: dict, default: AnnealParams) -> AnnealParams:
    keys = {"reads", "sweeps", "beta_start", "beta_end", "seed"}
    return replace(default, **{k: spec[k] for k in keys if k in spec})


def _penalty_from(spec: dict, default: PenaltyConfig) -> PenaltyConfig:
    kw = {}
    if "penalty" in spec:
        kw["base"] = None if spec["penalty"] is None else float(spec["penalty"])
    if "penalty_multiplier" in spec:
        kw["multiplier"] = float(spec["penalty_multiplier"])
    if "penalty_overrides" in spec:
        kw["overrides"] = dict(spec["penalty_overrides"])
    if "printed_busy_duration" in spec:
        kw["printed_busy_duration"] = bool(spec["printed_busy_duration"])
    return replace(default, **kw)


def load_cases(text: str, base_dir=".") -> list:
    """Parse a cases file into ``CaseConfig`` objects.

    The file holds ``{"defaults": {...}, "cases": [...]}``. Each case has a
    ``name`` and either ``instance`` (path, relative to the cases file) or
    ``generate`` (``GeneratorParams`` fields plus ``seed``). Defaults and
    cases may set ``repeats``, ``reads``, ``sweeps``, ``beta_start``,
    ``beta_end``, ``seed``, ``penalty``, ``penalty_multiplier``,
    ``penalty_overrides``, ``printed_busy_duration``, ``retry_cap``,
    ``slot_length_s`` and ``horizon``.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"cases file is not valid JSON: {exc}") from exc
    defaults = data.get("defaults", {})
    configs = []
    names = set()
    for raw in data.get("cases", []):
        spec = {**defaults, **raw}
        name = str(spec["name"])
        if name in names or not name.replace("-", "").replace("_", "").isalnum():
            raise ValueError(f"case names must be unique and alphanumeric, got {name!r}")
        names.add(name)
        if "instance" in spec:
            inst = load_instance((Path(base_dir) / spec["instance"]).read_text())
        elif "generate" in spec:
            gen = dict(spec["generate"])
            seed = int(gen.pop("seed", 0))
            for k in ("workload_range", "rates"):
                if k in gen:
                    gen[k] = tuple(gen[k])
            inst = generate_case(GeneratorParams(**gen), seed)
        else:
            raise ValueError(f"case {name!r} needs 'instance' or 'generate'")
        if "slot_length_s" in spec:
            inst = replace(inst, slot_length=float(spec["slot_length_s"]))
        if spec.get("horizon") is not None:
            inst = replace(inst, horizon_override=int(spec["horizon"]))
        configs.append(
            CaseConfig(
                name,
                inst,
                repeats=int(spec.get("repeats", 50)),
                anneal=_anneal_from(spec, AnnealParams()),
                penalty=_penalty_from(spec, PenaltyConfig()),
                retry_cap=int(spec.get("retry_cap", 3)),
            )
        )
    return configs
