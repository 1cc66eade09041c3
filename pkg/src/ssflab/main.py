import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Any

import typer
from rich.markup import escape
from rich.table import Table

from ssflab import __version__
from ssflab.config import ConfigurationError, RunConfig, resolve_config
from ssflab.console import console, setup_logging
from ssflab.dependencies import get_executor
from ssflab.deriv import main_estimate_experiment
from ssflab.moi import BudgetExceededError, symbol_norm_experiment
from ssflab.numlin import ConvergenceError, pair_from_json, random_contraction_pair
from ssflab.poly import Polynomial
from ssflab.report import csv_path_for, load_report, worst_residual, write_csv, write_json
from ssflab.ssf import ConventionFault, InsufficientTruncationError, run_ssf_experiment, verify_trace_formula
from ssflab.suites import DEFAULT_TOLERANCES, evaluate_moi, run_suite

logger = logging.getLogger(__name__)

EXIT_FAILURE = 1
EXIT_USAGE = 2


@dataclass
class State:
    config_path: Path | None = None
    verbose: bool = False
    workers: int | None = None


state = State()


def _usage_error(message: str) -> typer.Exit:
    console.print(f"[red]Error: {escape(message)}[/red]")
    return typer.Exit(code=EXIT_USAGE)


def _resolve(**overrides: Any) -> RunConfig:
    """Merge the global config file, global options and command flags."""
    overrides.setdefault("workers", state.workers)
    try:
        return resolve_config(state.config_path, overrides)
    except ConfigurationError as e:
        raise _usage_error(str(e))


def _fmt(value: float) -> str:
    return f"{value:.3e}"


def _cell(value: Any) -> str:
    if isinstance(value, float):
        return _fmt(value)
    return escape(str(value))


app = typer.Typer(
    help="ssflab - numerical lab for multiple operator integrals and spectral shift functions.",
    no_args_is_help=True,
    add_completion=False,
)


@app.callback()
def main(
    config: Annotated[
        Path | None, typer.Option("--config", "-c", help="key=value config file", envvar="SSFLAB_CONFIG")
    ] = None,
    verbose: Annotated[bool, typer.Option("--verbose", "-v", help="Enable debug logging")] = False,
    workers: Annotated[int | None, typer.Option("--workers", "-w", help="Parallel worker threads")] = None,
):
    """
    ssflab - numerical lab for multiple operator integrals and spectral shift functions.
    """
    state.config_path = config
    state.verbose = verbose
    state.workers = workers
    setup_logging(verbose)


@app.command()
def version():
    """Show the CLI version."""
    print(f"ssflab v{__version__}")


@app.command("verify")
def verify(
    suite: Annotated[str | None, typer.Option("--suite", help="identities | symbols | ssf")] = None,
    dim: Annotated[int | None, typer.Option("--dim", help="Matrix dimension")] = None,
    dims: Annotated[str | None, typer.Option("--dims", help="Comma-separated dimensions (ssf suite)")] = None,
    n: Annotated[int | None, typer.Option("--n", help="Highest order to check")] = None,
    K: Annotated[int | None, typer.Option("--K", help="Series truncation (ssf suite)")] = None,
    trials: Annotated[int | None, typer.Option("--trials", help="Seeded instances")] = None,
    samples: Annotated[int | None, typer.Option("--samples", help="Random polynomials per ssf cell")] = None,
    seed: Annotated[int | None, typer.Option("--seed", help="Root seed")] = None,
    tolerance: Annotated[float | None, typer.Option("--tolerance", help="Override every check tolerance")] = None,
    out: Annotated[Path | None, typer.Option("--out", "-o", help="JSON report path")] = None,
) -> None:
    """Run a seeded verification suite; exit 1 if any residual exceeds its tolerance."""
    config = _resolve(
        suite=suite, dim=dim, dims=dims, n=n, K=K, trials=trials, samples=samples, seed=seed,
        tolerance=tolerance, out=str(out) if out else None,
    )
    try:
        with get_executor(config.workers) as executor:
            report = run_suite(config, executor)
    except (ValueError, BudgetExceededError) as e:
        raise _usage_error(str(e))
    except (ConvergenceError, ConventionFault) as e:
        console.print(f"[red]Error running suite: {escape(str(e))}[/red]")
        raise typer.Exit(code=EXIT_FAILURE)

    table = Table(title=f"Suite: {report.suite} ({report.instances} instances)")
    table.add_column("Check", style="cyan")
    table.add_column("Residual", justify="right")
    table.add_column("Tolerance", justify="right")
    table.add_column("Status")
    for check in report.checks:
        status = "[green]ok[/green]" if check.passed else "[red]FAIL[/red]"
        table.add_row(escape(check.name), _fmt(check.residual), _fmt(check.tolerance), status)
    console.print(table)
    console.print(f"Max residual: {_fmt(report.max_residual)}")

    if config.out:
        path = write_json(config.out, {"command": "verify", "config": config.provenance(), "result": report.to_dict()})
        write_csv(csv_path_for(path), [c.as_row() for c in report.checks], ["suite", "name", "residual", "tolerance", "passed"])
        console.print(f"Report written to {escape(str(path))}")

    if not report.passed:
        names = ", ".join(c.name for c in report.offenders)
        console.print(f"[red]Residuals above tolerance: {escape(names)}[/red]")
        raise typer.Exit(code=EXIT_FAILURE)


@app.command("estimate")
def estimate(
    probe: Annotated[str | None, typer.Option("--probe", help="main | indbase | indstep | kpss")] = None,
    dims: Annotated[str | None, typer.Option("--dims", help="Comma-separated dimensions")] = None,
    n: Annotated[int | None, typer.Option("--n", help="Derivative or symbol order")] = None,
    alpha: Annotated[float | None, typer.Option("--alpha", help="Schatten exponent")] = None,
    trials: Annotated[int | None, typer.Option("--trials", help="Trials per dimension")] = None,
    seed: Annotated[int | None, typer.Option("--seed", help="Root seed")] = None,
    m: Annotated[int | None, typer.Option("--m", help="Weight or phase power for symbol probes")] = None,
    s: Annotated[float | None, typer.Option("--s", help="Modulus power for the Γ_s probe")] = None,
    trace_only: Annotated[
        bool, typer.Option("--trace-only", help="Main probe: measure only the trace ratio (allows α = n)")
    ] = False,
    out: Annotated[Path | None, typer.Option("--out", "-o", help="JSON report path; CSV goes next to it")] = None,
) -> None:
    """Report observed norm ratios across dimensions."""
    config = _resolve(
        probe=probe, dims=dims, n=n, alpha=alpha, trials=trials, seed=seed, m=m, s=s,
        out=str(out) if out else None,
    )
    try:
        with get_executor(config.workers) as executor:
            if config.probe == "main":
                report = main_estimate_experiment(
                    config.dims, config.n, config.alpha, config.trials, config.seed,
                    trace_only=trace_only, executor=executor,
                )
                result = report.to_dict()
                per_dim = result["summary"]["per_dim_max"]
                columns = ["r1", "r2"] if all("r1" in v for v in per_dim.values()) else ["r2"]
                rows = [{"dim": int(dim), **{f"{c}_max": v[c] for c in columns}} for dim, v in per_dim.items()]
                fieldnames = ["dim", *(f"{c}_max" for c in columns)]
            else:
                cells = symbol_norm_experiment(
                    config.probe, config.dims, config.alpha, config.trials, config.seed,
                    n=config.n, m=config.m, s=config.s, executor=executor,
                )
                rows = [c.as_row() for c in cells]
                result = {"cells": rows}
                fieldnames = ["probe", "variant", "dim", "alpha", "estimate", "scale", "ratio"]
    except (ValueError, BudgetExceededError) as e:
        raise _usage_error(str(e))
    except ConvergenceError as e:
        console.print(f"[red]Error running estimate: {escape(str(e))}[/red]")
        raise typer.Exit(code=EXIT_FAILURE)

    table = Table(title=f"Estimate: {config.probe}")
    for name in fieldnames:
        table.add_column(name, justify="right" if name not in ("probe", "variant") else "left")
    for row in rows:
        table.add_row(*[_cell(row[k]) for k in fieldnames])
    console.print(table)

    if config.out:
        path = write_json(config.out, {"command": "estimate", "config": config.provenance(), "result": result})
        write_csv(csv_path_for(path), rows, fieldnames)
        console.print(f"Report written to {escape(str(path))}")


def _read_json_arg(value: str) -> Any:
    """Inline JSON, or the JSON content of a file."""
    text = value
    candidate = Path(value)
    if candidate.is_file():
        text = candidate.read_text(encoding="utf-8")
    return json.loads(text)


@app.command("ssf")
def ssf_command(
    dim: Annotated[int | None, typer.Option("--dim", help="Matrix dimension")] = None,
    n: Annotated[int | None, typer.Option("--n", help="Remainder order")] = None,
    K: Annotated[int | None, typer.Option("--K", help="Series truncation")] = None,
    seed: Annotated[int | None, typer.Option("--seed", help="Root seed")] = None,
    samples: Annotated[int | None, typer.Option("--samples", help="Random test polynomials")] = None,
    check_degree: Annotated[
        int | None, typer.Option("--check-degree", help="Degree of the test polynomials")
    ] = None,
    input_path: Annotated[Path | None, typer.Option("--input", "-i", help="Pair JSON {u0, v}")] = None,
    poly: Annotated[str | None, typer.Option("--poly", help="Extra test polynomial, inline JSON or file")] = None,
    tolerance: Annotated[float | None, typer.Option("--tolerance", help="Override residual tolerances")] = None,
    out: Annotated[Path | None, typer.Option("--out", "-o", help="JSON report path; coefficient CSV goes next to it")] = None,
) -> None:
    """Reconstruct the spectral shift series and verify the trace formula."""
    config = _resolve(
        dim=dim, n=n, K=K, seed=seed, samples=samples, check_degree=check_degree,
        input=str(input_path) if input_path else None, tolerance=tolerance, out=str(out) if out else None,
    )
    try:
        if config.input:
            pair = pair_from_json(_read_json_arg(config.input))
        else:
            pair = random_contraction_pair(config.dim, config.seed)
        extra = Polynomial.from_json(_read_json_arg(poly)) if poly else None
        report = run_ssf_experiment(
            pair, config.n, config.K, samples=config.samples, seed=config.seed, check_degree=config.check_degree
        )
        if extra is not None:
            report.trace_residuals.append(verify_trace_formula(pair, config.n, extra, config.K, report.series))
    except InsufficientTruncationError as e:
        raise _usage_error(f"{e} (required K >= {e.required})")
    except (ValueError, OSError) as e:
        raise _usage_error(str(e))
    except (ConvergenceError, ConventionFault) as e:
        console.print(f"[red]Error in ssf run: {escape(str(e))}[/red]")
        raise typer.Exit(code=EXIT_FAILURE)

    defaults = DEFAULT_TOLERANCES["ssf"]
    round_trip_tol = config.tolerance if config.tolerance is not None else defaults["round_trip"]
    trace_tol = config.tolerance if config.tolerance is not None else defaults["trace_formula"]
    worst_trace = worst_residual(report.trace_residuals)

    table = Table(title=f"SSF n={config.n} K={config.K} dim={pair.dim}")
    table.add_column("j", justify="right")
    table.add_column("Re c_j", justify="right")
    table.add_column("Im c_j", justify="right")
    for row in report.series.rows():
        table.add_row(str(row["j"]), _fmt(row["re"]), _fmt(row["im"]))
    console.print(table)
    console.print(f"Round trip: {_fmt(report.round_trip)}  Trace formula: {_fmt(worst_trace)}")
    console.print(f"L1 estimate: {report.l1:.6g}  ‖V‖_n^n: {report.vnorm_n:.6g}")

    if config.out:
        path = write_json(config.out, {"command": "ssf", "config": config.provenance(), "result": report.to_dict()})
        write_csv(csv_path_for(path), report.series.rows(), ["j", "re", "im"])
        console.print(f"Report written to {escape(str(path))}")

    if not report.round_trip <= round_trip_tol or not worst_trace <= trace_tol:
        console.print("[red]Verification residual above tolerance.[/red]")
        raise typer.Exit(code=EXIT_FAILURE)


@app.command("moi")
def moi_command(
    symbol: Annotated[
        str | None, typer.Option("--symbol", help="divdiff | phi:n,m,k | psi:m | gamma:s | const:c")
    ] = None,
    region: Annotated[
        str | None, typer.Option("--region", help="full | diagonal | offdiagonal | order:<chain> | arcs:k0,..[/count]")
    ] = None,
    n: Annotated[int | None, typer.Option("--n", help="Number of operator arguments")] = None,
    dim: Annotated[int | None, typer.Option("--dim", help="Matrix dimension")] = None,
    seed: Annotated[int | None, typer.Option("--seed", help="Root seed")] = None,
    poly: Annotated[str | None, typer.Option("--poly", help="Polynomial for divdiff and phi, inline JSON or file")] = None,
    tolerance: Annotated[float | None, typer.Option("--tolerance", help="Override every check tolerance")] = None,
    out: Annotated[Path | None, typer.Option("--out", "-o", help="JSON report path; CSV goes next to it")] = None,
) -> None:
    """Evaluate one multiple operator integral on seeded arguments and check it."""
    config = _resolve(
        symbol=symbol, region=region, n=n, dim=dim, seed=seed, tolerance=tolerance, out=str(out) if out else None,
    )
    try:
        h = Polynomial.from_json(_read_json_arg(poly)) if poly else None
        evaluation = evaluate_moi(config, h)
    except (ValueError, OSError, BudgetExceededError) as e:
        raise _usage_error(str(e))
    except ConvergenceError as e:
        console.print(f"[red]Error evaluating operator integral: {escape(str(e))}[/red]")
        raise typer.Exit(code=EXIT_FAILURE)

    report = evaluation.report
    console.print(
        f"Symbol {escape(evaluation.symbol)} on region {escape(evaluation.region)}, "
        f"n={evaluation.n}, dim={evaluation.dim}"
    )
    console.print(f"‖T‖_∞: {evaluation.op_norm:.6g}  ‖T‖_2: {evaluation.hs_norm:.6g}")
    table = Table(title="Checks")
    table.add_column("Check", style="cyan")
    table.add_column("Residual", justify="right")
    table.add_column("Tolerance", justify="right")
    table.add_column("Status")
    for check in report.checks:
        status = "[green]ok[/green]" if check.passed else "[red]FAIL[/red]"
        table.add_row(escape(check.name), _fmt(check.residual), _fmt(check.tolerance), status)
    console.print(table)

    if config.out:
        path = write_json(config.out, {"command": "moi", "config": config.provenance(), "result": evaluation.to_dict()})
        write_csv(csv_path_for(path), [c.as_row() for c in report.checks], ["suite", "name", "residual", "tolerance", "passed"])
        console.print(f"Report written to {escape(str(path))}")

    if not report.passed:
        names = ", ".join(c.name for c in report.offenders)
        console.print(f"[red]Residuals above tolerance: {escape(names)}[/red]")
        raise typer.Exit(code=EXIT_FAILURE)


@app.command("report")
def report_command(
    path: Annotated[Path, typer.Argument(help="JSON report written by verify, estimate or ssf")],
    csv: Annotated[Path | None, typer.Option("--csv", help="Re-export the report rows as CSV")] = None,
) -> None:
    """Render a saved report."""
    try:
        data = load_report(path)
    except ValueError as e:
        raise _usage_error(str(e))
    result = data.get("result", {})
    command = data.get("command", "?")

    if "checks" in result:
        rows = result["checks"]
    elif "cells" in result:
        rows = result["cells"]
    elif "coefficients" in result:
        rows = [{"j": j, "re": re, "im": im} for j, (re, im) in enumerate(result["coefficients"], start=1)]
    else:
        raise _usage_error(f"{path} does not look like an ssflab report")

    if not rows:
        console.print("Report has no rows.")
        return
    fieldnames = list(rows[0].keys())
    table = Table(title=f"Report: {escape(command)}")
    for name in fieldnames:
        table.add_column(escape(name))
    for row in rows:
        table.add_row(*[escape(str(row.get(k, ""))) for k in fieldnames])
    console.print(table)

    config = data.get("config")
    if isinstance(config, dict):
        console.print(f"[dim]seed={config.get('seed')}[/dim]")
    if csv is not None:
        write_csv(csv, rows, fieldnames)
        console.print(f"CSV written to {escape(str(csv))}")


if __name__ == "__main__":
    app()
