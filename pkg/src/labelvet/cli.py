"""Command-line entry points.

The CLI is a thin layer over :mod:`labelvet.pipeline`: each stage command
opens (or resumes) the run described by a YAML config and pushes it forward
one stage.  ``review serve`` starts the HTTP API so reviews can come from
the browser console; ``review import`` feeds reviews from a file instead.
Heavy imports happen inside commands to keep ``labelvet --help`` fast.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

_CONFIG_OPT = click.option(
    "--config", "-c", "config_path", required=True,
    type=click.Path(exists=True, dir_okay=False),
    help="Pipeline YAML config.")


def _open_run(config_path: str):
    from .pipeline import PipelineConfig, Run

    return Run.open(PipelineConfig.from_yaml(config_path))


@click.group()
def main() -> None:
    """Machine annotation with critic-guided human review."""


@main.command()
@_CONFIG_OPT
def run(config_path: str) -> None:
    """Run the pipeline as far as the review mode allows."""
    from .pipeline import PipelineConfig, run_pipeline

    result = run_pipeline(PipelineConfig.from_yaml(config_path))
    click.echo(f"run {result.state.run_id}: stage={result.stage} "
               f"reviews_used={result.reviews_used()}")
    if result.stage == "reviewing":
        click.echo("waiting on human reviews; start `labelvet review serve` "
                   "or import a review file")


@main.command()
@_CONFIG_OPT
def annotate(config_path: str) -> None:
    """Produce machine labels for every item."""
    run = _open_run(config_path)
    run.ensure_annotated()
    click.echo(f"run {run.state.run_id}: stage={run.stage}")


@main.command()
@_CONFIG_OPT
def criticize(config_path: str) -> None:
    """Estimate the error probability of every machine label."""
    run = _open_run(config_path)
    run.ensure_criticized()
    click.echo(f"run {run.state.run_id}: stage={run.stage}")


@main.command()
@_CONFIG_OPT
def sample(config_path: str) -> None:
    """Choose which items go to human review under the budget."""
    run = _open_run(config_path)
    run.ensure_reviewing()
    summary = run.summary()
    click.echo(f"run {run.state.run_id}: stage={run.stage} "
               f"budget={summary['budget']} pending={summary['pending']}")


@main.group()
def review() -> None:
    """Human review: serve the console or import a review file."""


@review.command()
@click.option("--runs-dir", type=click.Path(file_okay=False),
              help="Directory holding run directories.")
@click.option("--config", "-c", "config_path",
              type=click.Path(exists=True, dir_okay=False),
              help="Pipeline config; its run is advanced to reviewing and "
                   "its output_dir is served.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--console-dir", type=click.Path(file_okay=False),
              help="Static files of the review console "
                   "[default: ./frontend/dist if present].")
def serve(runs_dir: str | None, config_path: str | None, host: str,
          port: int, console_dir: str | None) -> None:
    """Start the review API (and console, when built)."""
    import uvicorn

    from .service import create_app

    if config_path is None and runs_dir is None:
        raise click.UsageError("pass --config or --runs-dir")
    if config_path is not None:
        from .pipeline import PipelineConfig, Run

        config = PipelineConfig.from_yaml(config_path)
        run = Run.open(config)
        run.ensure_reviewing()
        runs_dir = config.output_dir
    if console_dir is None:
        default_console = Path("frontend") / "dist"
        if default_console.is_dir():
            console_dir = str(default_console)
    app = create_app(runs_dir, console_dir=console_dir)
    click.echo(f"serving runs from {runs_dir} at http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


@review.command("import")
@_CONFIG_OPT
@click.option("--file", "-f", "review_file", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="JSONL file of review records.")
def import_(config_path: str, review_file: str) -> None:
    """Feed reviews from a file into the pending queue."""
    run = _open_run(config_path)
    run.ensure_reviewing()
    count = run.import_reviews(review_file)
    click.echo(f"run {run.state.run_id}: imported {count} reviews, "
               f"stage={run.stage}")
    if run.stage == "reviewing":
        click.echo(f"{len(run.pending_items())} items still pending")


@main.command()
@_CONFIG_OPT
def export(config_path: str) -> None:
    """Write the deterministic export bundle (corrected labels + metrics)."""
    run = _open_run(config_path)
    export_dir = run.export()
    click.echo(f"run {run.state.run_id}: export written to {export_dir}")


@main.command()
@_CONFIG_OPT
@click.option("--curve", "curve_path", type=click.Path(dir_okay=False),
              help="Also sweep the full budget curve and write it as CSV.")
def metrics(config_path: str, curve_path: str | None) -> None:
    """Print quality metrics for a corrected run."""
    from .data import canonical_json
    from .pipeline import curve_csv_lines

    run = _open_run(config_path)
    click.echo(canonical_json(run.compute_metrics()))
    if curve_path:
        curve = run.budget_curve()
        Path(curve_path).write_text(
            "\n".join(curve_csv_lines(curve)) + "\n", encoding="utf-8")
        click.echo(f"curve written to {curve_path} "
                   f"(area={curve.area:.6f})", err=True)


@main.command()
@_CONFIG_OPT
@click.option("--epochs", default=500, show_default=True, type=int)
@click.option("--learning-rate", default=0.5, show_default=True, type=float)
@click.option("--l2", default=0.1, show_default=True, type=float)
@click.option("--embeddings", "embeddings_path",
              type=click.Path(exists=True, dir_okay=False),
              help="JSONL feature vectors for items without numeric content.")
def train(config_path: str, epochs: int, learning_rate: float, l2: float,
          embeddings_path: str | None) -> None:
    """Fit the bundled linear classifier on the corrected labels."""
    run = _open_run(config_path)
    embeddings = None
    if embeddings_path:
        from .trainer import load_embeddings

        embeddings = load_embeddings(embeddings_path)
    model_path = run.train_model(epochs=epochs, learning_rate=learning_rate,
                                 l2=l2, embeddings=embeddings)
    click.echo(f"run {run.state.run_id}: model written to {model_path}")


@main.command("gap-experiment")
@click.option("--sizes", default="250,500,1000,2000,4000", show_default=True,
              help="Comma-separated dataset sizes.")
@click.option("--seeds", default=20, show_default=True, type=int,
              help="Number of seeds per size.")
@click.option("--rule", default="threshold", show_default=True,
              type=click.Choice(["threshold", "exponential", "normalization"]))
@click.option("--budget-proportion", default=0.2, show_default=True, type=float)
@click.option("--sharpness", default=10.0, show_default=True, type=float)
@click.option("--l2", default=0.1, show_default=True, type=float)
@click.option("--epochs", default=1500, show_default=True, type=int)
@click.option("--accuracy", default=0.8, show_default=True, type=float,
              help="Simulated annotator accuracy.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False),
              help="Write per-trial results as CSV.")
def gap_experiment_cmd(sizes: str, seeds: int, rule: str,
                       budget_proportion: float, sharpness: float, l2: float,
                       epochs: int, accuracy: float,
                       out_path: str | None) -> None:
    """Measure how far review-weighted training lands from full-data training."""
    from .trainer import (
        GapExperimentConfig,
        gap_experiment,
        loglog_slope,
        mean_gaps_by_size,
        write_gap_csv,
    )

    size_list = [int(s) for s in sizes.split(",") if s.strip()]
    config = GapExperimentConfig(
        rule=rule, budget_proportion=budget_proportion, sharpness=sharpness,
        l2=l2, epochs=epochs, annotator_accuracy=accuracy)
    trials = gap_experiment(size_list, range(seeds), config)
    means = mean_gaps_by_size(trials)
    for n, gap in means.items():
        click.echo(f"n={n:>6d}  mean parameter gap={gap:.6f}")
    if len(means) >= 2:
        click.echo(f"log-log slope: {loglog_slope(means):+.4f}")
    evaluable = [t for t in trials if t.bound is not None and t.bound_valid]
    if evaluable:
        violations = sum(t.violates_bound() for t in evaluable)
        click.echo(f"bound violations: {violations}/{len(evaluable)} "
                   "(among valid bounds)")
    else:
        click.echo("bound not evaluable for this rule "
                   "(some review probabilities are zero)")
    if out_path:
        write_gap_csv(trials, out_path)
        click.echo(f"per-trial results written to {out_path}", err=True)


@main.command("make-dataset")
@click.option("--out", "out_path", required=True,
              type=click.Path(dir_okay=False))
@click.option("--n", default=1000, show_default=True, type=int)
@click.option("--classes", default=10, show_default=True, type=int)
@click.option("--features", default=20, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
def make_dataset(out_path: str, n: int, classes: int, features: int,
                 seed: int) -> None:
    """Write a synthetic feature-vector dataset with hidden truth labels."""
    from .data import save_dataset
    from .simulator import make_synthetic_dataset

    dataset = make_synthetic_dataset(n, classes, features, seed)
    save_dataset(dataset, out_path)
    click.echo(f"wrote {dataset.n} items to {out_path}")


if __name__ == "__main__":
    sys.exit(main())
