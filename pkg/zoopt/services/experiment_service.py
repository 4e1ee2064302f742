import itertools
import logging
import math
import re
import sys
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from typing import Any, Callable

import numpy as np
import psutil

from .. import __version__
from ..config import HarnessSettings, harness_settings
from ..core.diagnostics import convergence_bound, irreducible_error, track_momentum_error
from ..core.models import RunTrace
from ..core.optimizers import param_count, run
from ..errors import RunFailure, ZooptError
from ..storage.models import (
    ExperimentConfig,
    GroupSummary,
    OptimizerBlock,
    OracleSettings,
    RunRecord,
    SummaryRow,
    SweepPoint,
)
from ..storage.trace_store import LocalTraceStore, TraceStore

logger = logging.getLogger(__name__)

REPORT_METRICS = ("final_grad_norm", "expected_grad_norm", "final_f", "final_momentum_err_sq")


def _slug(overrides: dict[str, Any]) -> str:
    if not overrides:
        return "base"
    text = "__".join(f"{key}={value}" for key, value in overrides.items())
    return re.sub(r"[^A-Za-z0-9._=-]+", "-", text)


def _peak_rss(memory: Any) -> int:
    """High-water resident set size of this process and its finished workers, in bytes."""
    peak = getattr(memory, "peak_wset", None)
    if peak is not None:
        return int(peak)

    import resource

    kilobytes = max(
        resource.getrusage(resource.RUSAGE_SELF).ru_maxrss,
        resource.getrusage(resource.RUSAGE_CHILDREN).ru_maxrss,
    )
    # ru_maxrss is in bytes on macOS, kilobytes elsewhere
    return int(kilobytes) if sys.platform == "darwin" else int(kilobytes) * 1024


def execute_run(point: SweepPoint, seed: int, master_seed: int, tail_fraction: float) -> tuple[RunRecord, RunTrace]:
    """Worker entry point: one (sweep point, seed) run, no file I/O."""
    problem = point.problem.build()
    cfg = point.optimizer.config.model_copy(update={"seed": seed})
    trace = run(
        point.optimizer.kind,
        problem,
        cfg,
        delta=point.oracle.delta,
        noise_kind=point.oracle.noise_kind,
        master_seed=master_seed,
    )
    resolved = trace.config
    row = SummaryRow(
        point=point.label,
        seed=seed,
        optimizer=trace.optimizer,
        problem=problem.name,
        T=trace.T,
        gamma=resolved.gamma,
        beta=resolved.beta,
        tau=trace.oracle.tau,
        delta=trace.oracle.delta,
        final_f=trace.tail_mean("f_value", tail_fraction),
        final_grad_norm=trace.tail_mean("grad_norm", tail_fraction),
        expected_grad_norm=trace.expected_grad_norm(),
        selected_grad_norm=trace.selected_grad_norm(),
        selected_index=trace.selected_iterate_index,
        final_momentum_err_sq=trace.tail_mean("momentum_err_sq", tail_fraction),
        schedule=resolved.schedule,
        theory_bound=math.nan if resolved.linear_decay else convergence_bound(trace, problem),
        noise_floor=irreducible_error(trace.shape, problem.L, trace.oracle.delta, matrix=trace.grad_norm_kind == "s1"),
        oracle_calls=int(trace.oracle_calls[-1]),
        diagnostic_evaluations=trace.diagnostic_evaluations,
        persisted_scalars=trace.persisted_scalars,
        left_certified_box=trace.left_certified_box,
        trace_file=f"{point.label}__seed{seed}.csv",
    )
    effective = {
        "point": point.label,
        "seed": seed,
        "master_seed": master_seed,
        "problem": problem.describe(),
        "optimizer": {"kind": trace.optimizer.value, "schedule": resolved.schedule, "config": resolved.model_dump(mode="json")},
        "oracle": trace.oracle.model_dump(mode="json"),
    }
    return RunRecord(row=row, effective=effective), trace


class ExperimentService:
    def __init__(
        self,
        settings: HarnessSettings = harness_settings,
        store_factory: Callable[[str], TraceStore] = LocalTraceStore,
    ) -> None:
        self.settings = settings
        self.store_factory = store_factory

    def expand(self, config: ExperimentConfig) -> list[SweepPoint]:
        """Cross-product of the sweep block, in the order the keys were given."""
        keys = list(config.sweep)
        points = []
        for values in itertools.product(*(config.sweep[k] for k in keys)):
            overrides = dict(zip(keys, values, strict=True))
            sections: dict[str, dict[str, Any]] = {
                "problem": config.problem.model_dump(),
                "optimizer": config.optimizer.config.model_dump(),
                "oracle": config.oracle.model_dump(),
            }
            kind = config.optimizer.kind
            for key, value in overrides.items():
                section, field = config.resolve_sweep_key(key)
                if section == "optimizer" and field == "kind":
                    kind = value
                else:
                    sections[section][field] = value

            points.append(
                SweepPoint(
                    label=_slug(overrides),
                    overrides=overrides,
                    problem=type(config.problem).model_validate(sections["problem"]),
                    optimizer=OptimizerBlock.model_validate({"kind": kind, "config": sections["optimizer"]}),
                    oracle=OracleSettings.model_validate(sections["oracle"]),
                )
            )
        return points

    def _execute(
        self, tasks: list[tuple[SweepPoint, int]], master_seed: int, tail_fraction: float, workers: int
    ) -> list[tuple[RunRecord, RunTrace]]:
        if workers <= 1 or len(tasks) <= 1:
            return [execute_run(point, seed, master_seed, tail_fraction) for point, seed in tasks]

        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(execute_run, point, seed, master_seed, tail_fraction) for point, seed in tasks]
            return [future.result() for future in futures]

    def run_experiment(
        self,
        config: ExperimentConfig,
        output_dir: str | None = None,
        workers: int | None = None,
        seed_override: int | None = None,
    ) -> dict[str, Any]:
        """
        Execute every (sweep point, seed) run and write traces, summary and sidecars.

        Returns a result dict, or ``{"error": ..., "code": ...}`` on failure.
        """
        started = datetime.now(timezone.utc)
        seeds = [seed_override] if seed_override is not None else config.seeds
        master_seed = self.settings.master_seed if config.master_seed is None else config.master_seed
        out = output_dir or config.output or self.settings.output_dir
        cap = config.max_runs or self.settings.max_runs

        try:
            points = self.expand(config)
        except (ValueError, ZooptError) as e:
            return {"error": f"Invalid sweep: {e}", "code": 422}

        total = len(points) * len(seeds)
        if total > cap:
            return {
                "error": f"Experiment {config.name} needs {total} runs, the cap is {cap}. Raise max_runs to proceed.",
                "code": 400,
            }

        tasks = [(point, seed) for point in points for seed in seeds]
        logger.info("experiment %s: %d points x %d seeds", config.name, len(points), len(seeds))
        try:
            results = self._execute(tasks, master_seed, config.tail_fraction, workers or self.settings.workers)
        except RunFailure as e:
            return {
                "error": f"Run failed at {e}",
                "code": 500,
                "details": [{"iteration": e.iteration, "cause": f"{type(e.cause).__name__}: {e.cause}"}],
            }
        except ZooptError as e:
            return {"error": str(e), "code": 400}

        store = self.store_factory(out)
        for record, trace in results:
            store.save_trace(record.row.trace_file, trace)
        rows = [record.row for record, _ in results]
        store.save_summary(rows)
        store.save_json("effective_configs.json", [record.effective for record, _ in results])

        ledger = self._ledger(rows)
        store.save_json("ledger.json", ledger)

        if config.checks:
            store.save_json("checks.json", self._checks(config, points, results))

        report = self.report(out)
        store.save_json("metadata.json", self._metadata(config, started, rows))

        return {
            "message": f"Experiment {config.name} finished: {total} runs written to {out}",
            "output_dir": out,
            "runs": total,
            "oracle_calls": ledger["optimizer_oracle_calls"],
            "groups": report.get("groups", []),
        }

    def _ledger(self, rows: list[SummaryRow]) -> dict[str, Any]:
        return {
            "runs": len(rows),
            "optimizer_oracle_calls": sum(row.oracle_calls for row in rows),
            "expected_oracle_calls": sum(2 * row.T for row in rows),
            "diagnostic_evaluations": sum(row.diagnostic_evaluations for row in rows),
        }

    def _checks(
        self,
        config: ExperimentConfig,
        points: list[SweepPoint],
        results: list[tuple[RunRecord, RunTrace]],
    ) -> dict[str, Any]:
        by_point: dict[str, list[tuple[RunRecord, RunTrace]]] = defaultdict(list)
        for record, trace in results:
            by_point[record.row.point].append((record, trace))

        report: dict[str, Any] = {}
        for point in points:
            group = by_point[point.label]
            traces = [trace for _, trace in group]
            entry: dict[str, Any] = {}
            if "param-count" in config.checks:
                expected = param_count(point.optimizer.kind, traces[0].shape)
                entry["param-count"] = {
                    "expected": expected,
                    "audited": sorted({trace.persisted_scalars for trace in traces}),
                    "passed": all(trace.persisted_scalars == expected for trace in traces),
                }
            if "lemma1" in config.checks:
                try:
                    bound = track_momentum_error(traces, point.problem.build())
                    entry["lemma1"] = {
                        "violation_fraction": bound.violation_fraction,
                        "smallest_passing_constant": bound.smallest_passing_constant,
                        "constant": bound.constant,
                    }
                except ZooptError as e:
                    entry["lemma1"] = {"error": str(e)}
            if "convergence-bound" in config.checks:
                observed = float(np.mean([record.row.expected_grad_norm for record, _ in group]))
                bound_value = float(np.mean([record.row.theory_bound for record, _ in group]))
                floor = float(np.mean([record.row.noise_floor for record, _ in group]))
                entry["convergence-bound"] = {"observed": observed, "theory_bound": bound_value, "noise_floor": floor}
            report[point.label] = entry
        return report

    def _metadata(self, config: ExperimentConfig, started: datetime, rows: list[SummaryRow]) -> dict[str, Any]:
        process = psutil.Process()
        memory = process.memory_info()
        return {
            "experiment": config.name,
            "version": __version__,
            "started_at": started.isoformat(),
            "finished_at": datetime.now(timezone.utc).isoformat(),
            "cpu_count": psutil.cpu_count(),
            "rss_bytes": memory.rss,
            "peak_rss_bytes": _peak_rss(memory),
            "memory_audit": [
                {"point": row.point, "seed": row.seed, "optimizer": row.optimizer.value, "persisted_scalars": row.persisted_scalars}
                for row in rows
            ],
        }

    def report(self, output_dir: str) -> dict[str, Any]:
        """
        Aggregate summary rows into per-point means and standard deviations.

        Writes ``report.csv`` (long format) and ``report.txt``. The standard
        deviation uses ddof=1 and is 0 for a single run.
        """
        store = self.store_factory(output_dir)
        rows = store.load_summary()
        if not rows:
            return {"error": f"No runs found in {output_dir}", "code": 404}

        values: dict[tuple[str, str], list[float]] = defaultdict(list)
        for row in rows:
            for metric in REPORT_METRICS:
                values[(row["point"], metric)].append(float(row[metric]))

        groups = []
        for (point, metric), series in values.items():
            data = np.asarray(series)
            finite = data[np.isfinite(data)]
            mean = float(np.mean(finite)) if finite.size else math.nan
            std = float(np.std(finite, ddof=1)) if finite.size > 1 else 0.0
            groups.append(GroupSummary(point=point, metric=metric, count=int(data.size), mean=mean, std=std))

        header = list(GroupSummary.model_fields)
        store.save_table("report.csv", header, [[getattr(g, k) for k in header] for g in groups])
        table = self._table(groups)
        store.save_text("report.txt", table)

        return {
            "message": f"Report written to {output_dir}",
            "groups": [g.model_dump() for g in groups],
            "table": table,
        }

    def _table(self, groups: list[GroupSummary]) -> str:
        width = max(len("point"), *(len(g.point) for g in groups))
        lines = [f"{'point':<{width}}  {'metric':<22}  {'n':>4}  {'mean':>14}  {'std':>14}"]
        for g in groups:
            lines.append(f"{g.point:<{width}}  {g.metric:<22}  {g.count:>4}  {g.mean:>14.6g}  {g.std:>14.6g}")
        return "\n".join(lines) + "\n"
