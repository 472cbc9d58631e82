"""Command-line access to the engine: synth | train | importance |
sensitivity | sweep | goal | serve.

Commands print the same JSON the HTTP API serves (``--table`` renders an
aligned text view instead). Exit codes: 0 success, 2 validation error,
3 runtime failure.
"""

from __future__ import annotations

import csv as csv_module
import functools
import json
import sys
from pathlib import Path

import click

from .dataset import make_frame, parse_csv, serialize_csv
from .errors import ValidationError, WhatIfError
from .goalseek import Constraint, GoalSpec, optimize_goal
from .importance import DEFAULT_SHAPLEY_PERMUTATIONS, driver_importance
from .model import Hyperparameters, model_from_json, model_to_json, train
from .sensitivity import (
    PerturbationItem,
    PerturbationSpec,
    comparison_sweep,
    run_sensitivity,
)
from .server import ServerConfig, serve as run_server
from .synthetic import USE_CASES, generate_synthetic
from .wire import (
    curves_wire,
    dataset_wire,
    ensure_finite,
    goal_wire,
    importance_wire,
    sensitivity_wire,
)

_MODE_NAMES = {"pct": "percentage", "abs": "absolute"}


def _fail(message: str, code: int) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def engine_errors(fn):
    """Map engine exceptions to the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ValidationError as exc:
            _fail(str(exc), 2)
        except WhatIfError as exc:
            _fail(str(exc), 3)

    return wrapper


def _read_input(path: str) -> bytes:
    if path == "-":
        return sys.stdin.buffer.read()
    return Path(path).read_bytes()


def _load_model(model_path: str, data_path: str):
    payload = json.loads(_read_input(model_path))
    dataset = parse_csv(_read_input(data_path))
    model = model_from_json(payload, dataset)
    return model, model.frame


def _parse_mode(token: str) -> str:
    if token not in _MODE_NAMES:
        raise ValidationError(f"mode must be pct or abs, got {token!r}")
    return _MODE_NAMES[token]


def _parse_perturbation(text: str) -> PerturbationItem:
    """driver:mode:amount, e.g. "Open Marketing Email:pct:+40"."""
    parts = text.rsplit(":", 2)
    if len(parts) != 3:
        raise ValidationError(f"expected driver:mode:amount, got {text!r}")
    driver, mode, amount = parts
    try:
        value = float(amount)
    except ValueError:
        raise ValidationError(f"bad amount {amount!r} in {text!r}")
    return PerturbationItem(driver=driver, mode=_parse_mode(mode), amount=value)


def _parse_constraint(text: str) -> tuple[str, Constraint]:
    """driver:mode:lo:hi, e.g. "Open Marketing Email:pct:40:80"."""
    parts = text.rsplit(":", 3)
    if len(parts) != 4:
        raise ValidationError(f"expected driver:mode:lo:hi, got {text!r}")
    driver, mode, lo, hi = parts
    try:
        bounds = (float(lo), float(hi))
    except ValueError:
        raise ValidationError(f"bad bounds in {text!r}")
    return driver, Constraint(mode=_parse_mode(mode), lo=bounds[0], hi=bounds[1])


def _emit(payload: dict) -> None:
    click.echo(json.dumps(ensure_finite(payload), indent=2))


def _table(rows: list[list[str]], headers: list[str]) -> None:
    widths = [
        max(len(str(headers[i])), *(len(str(r[i])) for r in rows)) if rows else len(headers[i])
        for i in range(len(headers))
    ]
    line = "  ".join(h.ljust(w) for h, w in zip(headers, widths))
    click.echo(line)
    click.echo("  ".join("-" * w for w in widths))
    for row in rows:
        click.echo("  ".join(str(c).ljust(w) for c, w in zip(row, widths)))


@click.group()
def main() -> None:
    """What-if analysis over tabular KPIs."""


@main.command()
@click.option("--use-case", type=click.Choice(USE_CASES), required=True)
@click.option("--rows", type=int, default=500, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="CSV output path; ground truth goes to <out>.truth.json")
@engine_errors
def synth(use_case: str, rows: int, seed: int, out: str) -> None:
    """Generate a synthetic use-case dataset plus its ground-truth sidecar."""
    dataset, truth = generate_synthetic(use_case, rows, seed)
    Path(out).write_text(serialize_csv(dataset))
    Path(f"{out}.truth.json").write_text(json.dumps(truth, indent=2))
    _emit(dataset_wire(dataset))


@main.command()
@click.option("--data", required=True, help="CSV path or - for stdin")
@click.option("--kpi", required=True)
@click.option("--drivers", default=None, help="comma-separated driver names")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--trees", type=int, default=None, help="forest size override")
@click.option("--cv-folds", type=int, default=None)
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="write model JSON here instead of stdout")
@engine_errors
def train_cmd(data, kpi, drivers, seed, trees, cv_folds, out) -> None:
    """Train the KPI predictor and emit it as JSON."""
    dataset = parse_csv(_read_input(data))
    names = [d.strip() for d in drivers.split(",")] if drivers else None
    overrides = {}
    if trees is not None:
        overrides["n_trees"] = trees
    if cv_folds is not None:
        overrides["cv_folds"] = cv_folds
    frame = make_frame(dataset, kpi, names)
    model = train(frame, Hyperparameters(**overrides), seed)
    payload = model_to_json(model)
    if out:
        Path(out).write_text(json.dumps(payload))
        _emit(
            {
                "kind": model.kind,
                "kpi": frame.kpi,
                "kpi_kind": frame.kpi_kind,
                "drivers": list(frame.drivers),
                "confidence": model.confidence,
                "model_path": out,
            }
        )
    else:
        _emit(payload)


main.add_command(train_cmd, name="train")


@main.command()
@click.option("--model", "model_path", required=True)
@click.option("--data", required=True)
@click.option("--shapley-perms", type=int, default=DEFAULT_SHAPLEY_PERMUTATIONS,
              show_default=True)
@click.option("--seed", type=int, default=None, help="Shapley seed (default: model seed)")
@click.option("--table", is_flag=True)
@engine_errors
def importance(model_path, data, shapley_perms, seed, table) -> None:
    """Signed driver importances with Pearson/Spearman/Shapley verification."""
    model, frame = _load_model(model_path, data)
    report = driver_importance(
        model, frame, shapley_permutations=shapley_perms, seed=seed
    )
    if not table:
        _emit(importance_wire(report))
        return
    rows = []
    for entry in report.entries:
        bar = "#" * round(abs(entry.importance) * 30)
        measures = report.verification[entry.driver]
        rows.append(
            [
                entry.driver,
                f"{entry.importance:+.3f}",
                bar,
                f"{measures.pearson:+.3f}",
                f"{measures.spearman:+.3f}",
                f"{measures.shapley:+.4f}",
            ]
        )
    _table(rows, ["driver", "importance", "", "pearson", "spearman", "shapley"])
    agreement = report.agreement
    click.echo(
        f"rank agreement vs Shapley: {agreement.spearman_rank_agreement:+.3f}"
        + ("  [FLAGGED]" if agreement.flagged else "")
    )


@main.command()
@click.option("--model", "model_path", required=True)
@click.option("--data", required=True)
@click.option("--perturb", multiple=True, required=True,
              help='repeatable; "driver:pct:+40" or "driver:abs:2"')
@click.option("--table", is_flag=True)
@engine_errors
def sensitivity(model_path, data, perturb, table) -> None:
    """KPI before/after perturbing drivers across every row."""
    model, frame = _load_model(model_path, data)
    spec = PerturbationSpec(items=tuple(_parse_perturbation(p) for p in perturb))
    result = run_sensitivity(model, frame.driver_matrix(), frame, spec)
    if table:
        wire = sensitivity_wire(result)
        _table(
            [[wire["baseline_display"], wire["perturbed_display"], wire["uplift_display"]]],
            ["baseline", "perturbed", "uplift"],
        )
    else:
        _emit(sensitivity_wire(result))


@main.command()
@click.option("--model", "model_path", required=True)
@click.option("--data", required=True)
@click.option("--drivers", default=None, help="comma-separated; default all")
@click.option("--mode", type=click.Choice(["pct", "abs"]), required=True)
@click.option("--lo", type=float, required=True)
@click.option("--hi", type=float, required=True)
@click.option("--steps", type=int, default=11, show_default=True)
@click.option("--table", is_flag=True)
@engine_errors
def sweep(model_path, data, drivers, mode, lo, hi, steps, table) -> None:
    """Per-driver KPI curves across a range of perturbation amounts."""
    model, frame = _load_model(model_path, data)
    names = [d.strip() for d in drivers.split(",")] if drivers else list(frame.drivers)
    curves = comparison_sweep(
        model, frame.driver_matrix(), frame, names, _MODE_NAMES[mode], lo, hi, steps
    )
    if table:
        for curve in curves:
            click.echo(curve.driver)
            _table(
                [[f"{p.amount:g}", f"{p.kpi:.4f}"] for p in curve.points],
                ["amount", "kpi"],
            )
    else:
        _emit(curves_wire(curves))


@main.command()
@click.option("--model", "model_path", required=True)
@click.option("--data", required=True)
@click.option("--objective", type=click.Choice(["max", "min", "target"]), required=True)
@click.option("--target", type=float, default=None)
@click.option("--constraint", multiple=True,
              help='repeatable; "driver:pct:40:80" or "driver:abs:0:10"')
@click.option("--budget", type=int, default=GoalSpec.budget, show_default=True)
@click.option("--n-init", type=int, default=GoalSpec.n_init, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--trace-out", type=click.Path(dir_okay=False), default=None,
              help="also write the evaluation trace as CSV")
@click.option("--table", is_flag=True)
@engine_errors
def goal(model_path, data, objective, target, constraint, budget, n_init, seed,
         trace_out, table) -> None:
    """Search driver perturbations that achieve a KPI goal within bounds."""
    model, frame = _load_model(model_path, data)
    spec = GoalSpec(
        objective={"max": "maximize", "min": "minimize", "target": "target"}[objective],
        target_value=target,
        constraints=dict(_parse_constraint(c) for c in constraint),
        budget=budget,
        n_init=n_init,
        seed=seed,
    )
    result = optimize_goal(model, frame.driver_matrix(), frame, spec)
    if trace_out:
        with open(trace_out, "w", newline="") as fh:
            writer = csv_module.writer(fh)
            writer.writerow(list(frame.drivers) + ["kpi"])
            for point in result.trace:
                writer.writerow(
                    [point.perturbation[d] for d in frame.drivers] + [point.kpi]
                )
    if table:
        wire = goal_wire(result)
        _table(
            [
                [d, f"{result.best_perturbation[d]:+.4f}"]
                for d in frame.drivers
            ],
            ["driver", "best perturbation"],
        )
        click.echo(
            f"best KPI {wire['best_kpi_display']}  uplift {wire['uplift_display']}"
            f"  confidence {result.confidence:.3f}"
        )
    else:
        _emit(goal_wire(result))


@main.command()
@click.option("--addr", default="127.0.0.1:8080", show_default=True)
@click.option("--snapshot-dir", default=None)
@click.option("--budget-cap", type=int, default=200, show_default=True)
@click.option("--timeout", type=float, default=120.0, show_default=True,
              help="goal-seek wall clock limit in seconds")
@engine_errors
def serve(addr, snapshot_dir, budget_cap, timeout) -> None:
    """Run the JSON HTTP API."""
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise ValidationError(f"bad --addr {addr!r}; expected host:port")
    run_server(
        ServerConfig(
            host=host,
            port=int(port),
            snapshot_dir=snapshot_dir,
            budget_cap=budget_cap,
            goal_timeout=timeout,
        )
    )


if __name__ == "__main__":
    main()
