import logging
from pathlib import Path
from typing import Any, Optional

import orjson
import psutil
import typer
from pydantic import ValidationError

from .config import harness_settings
from .services.check_suites import SUITES, run_suites
from .services.experiment_service import ExperimentService
from .services.presets import PRESETS, get_preset
from .storage.models import ExperimentConfig
from .utils import pydantic_model_fields_to_str

app = typer.Typer(no_args_is_help=True, help="Zero-order optimizers and their theory checks.")
experiment_service = ExperimentService()

EXIT_FAILURE = 1
EXIT_INVALID = 2


def emit(payload: Any) -> None:
    typer.echo(orjson.dumps(payload, option=orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY).decode())


def fail(result: dict[str, Any]) -> None:
    """Print the machine-readable error report and exit nonzero."""
    emit({"error": result["error"], "code": result["code"], "details": result.get("details", [])})
    raise typer.Exit(code=EXIT_INVALID if result["code"] == 422 else EXIT_FAILURE)


def load_config(path: Path) -> ExperimentConfig:
    if not path.exists():
        fail({"error": f"Config file {path} not found", "code": 404})
    try:
        return ExperimentConfig.model_validate_json(path.read_text())
    except ValidationError as e:
        details = [{"loc": ".".join(str(part) for part in err["loc"]), "msg": err["msg"]} for err in e.errors()]
        fail({"error": "Invalid experiment config", "code": 422, "details": details})
        raise


@app.callback()
def main(
    log_level: str = typer.Option(harness_settings.log_level, "--log-level", help="Root logging level"),
) -> None:
    logging.basicConfig(
        level=log_level.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


@app.command()
def run(
    config: Optional[Path] = typer.Option(
        None,
        "--config",
        help=f"Experiment JSON file. Top-level fields: {pydantic_model_fields_to_str(ExperimentConfig.model_fields)}",
    ),
    preset: Optional[str] = typer.Option(None, "--preset", help="Run a built-in preset instead of a file"),
    out: Optional[str] = typer.Option(None, "--out", help="Output directory"),
    workers: Optional[int] = typer.Option(None, "--workers", min=0, help="Worker processes, 0 for one per physical core"),
    seed_override: Optional[int] = typer.Option(None, "--seed-override", min=0, help="Run only this seed"),
) -> None:
    """
    Execute every sweep point and seed of an experiment.

    Writes one trace CSV per run, summary.csv, report.csv/report.txt,
    effective_configs.json, ledger.json and the metadata.json sidecar.
    """
    if config is not None:
        experiment = load_config(config)
    elif preset is not None:
        found = get_preset(preset)
        if found is None:
            fail({"error": f"Unknown preset {preset}. Available: {', '.join(PRESETS)}", "code": 404})
        experiment = found
    else:
        fail({"error": "Either --config or --preset is required", "code": 400})

    if workers == 0:
        workers = psutil.cpu_count(logical=False) or 1

    result = experiment_service.run_experiment(experiment, out, workers, seed_override)
    if "error" in result:
        fail(result)

    emit({k: result[k] for k in ("message", "output_dir", "runs", "oracle_calls")})


@app.command()
def check(
    suite: str = typer.Argument(..., help=f"One of: all, {', '.join(SUITES)}"),
    quick: bool = typer.Option(False, "--quick", help="Shrink sizes for a smoke run"),
    out: Optional[Path] = typer.Option(None, "--out", help="Also write the JSON report to this file"),
) -> None:
    """Run a property suite and print pass/fail per check. Exit 0 iff all pass."""
    results = run_suites(suite, quick)
    if isinstance(results, dict):
        fail(results)

    for result in results:
        for outcome in result.checks:
            status = "PASS" if outcome.passed else "FAIL"
            typer.echo(f"{status} {result.suite}: {outcome.name}")
        typer.echo(f"{'PASS' if result.passed else 'FAIL'} {result.suite}")

    if out is not None:
        out.write_bytes(
            orjson.dumps([r.model_dump() for r in results], option=orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY)
        )

    if not all(r.passed for r in results):
        raise typer.Exit(code=EXIT_FAILURE)


@app.command()
def report(output_dir: str = typer.Argument(..., help="Directory written by `zoopt run`")) -> None:
    """Aggregate the runs of an output directory into report.csv and report.txt."""
    result = experiment_service.report(output_dir)
    if "error" in result:
        fail(result)

    typer.echo(result["table"], nl=False)


@app.command("sweep-presets")
def sweep_presets(
    show: Optional[str] = typer.Option(None, "--show", help="Print the full config of one preset"),
) -> None:
    """List the built-in experiment presets."""
    if show is None:
        for name, (description, _) in PRESETS.items():
            typer.echo(f"{name}: {description}")
        return

    found = get_preset(show)
    if found is None:
        fail({"error": f"Unknown preset {show}. Available: {', '.join(PRESETS)}", "code": 404})
    typer.echo(found.model_dump_json(indent=2))


@app.command()
def schema() -> None:
    """Print the JSON schema of experiment files."""
    emit(ExperimentConfig.model_json_schema())


if __name__ == "__main__":
    app()
