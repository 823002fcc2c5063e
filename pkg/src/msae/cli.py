"""Command-line interface.

Subcommands: synth, preprocess, reconstruct, train, eval, benchmark,
gradcheck. Every output embeds the exact run configuration (CSV/PGM comment
headers, checkpoint manifests). Exit codes: 0 success, 1 runtime failure,
2 usage error. Diagnostics go to stderr, data to files or stdout.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from . import data_io, gradcheck, pipeline, report
from .multispace import multispace_reconstruct
from .network import NetworkConfig, init_network
from .optimizer import AdamConfig


def _config_comment(command: str, params: dict) -> str:
    cfg = {k: v for k, v in sorted(params.items()) if v is not None}
    return f"config {command} " + json.dumps(cfg, sort_keys=True, default=str)


def _fail(message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def runtime_guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (OSError, ValueError, data_io.DataIOError,
                pipeline.TrainingDiverged) as exc:
            _fail(str(exc))
    return wrapper


def _load_or_synth(in_dir, classes, per_class, patch, seed) -> pipeline.Dataset:
    if in_dir is not None:
        return data_io.load_dataset(in_dir)
    return pipeline.synth_dataset(classes=classes, per_class=per_class,
                                  patch=patch, seed=seed)


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise click.UsageError(f"{flag} expects a comma-separated integer list, got {text!r}")


def config_file_option(fn):
    """--config JSON file whose keys pre-populate flag defaults.

    Keys are flag names with underscores (e.g. "lambda_s", "per_class");
    explicitly passed flags always win.
    """

    def load(ctx, param, value):
        if value:
            try:
                defaults = json.loads(Path(value).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise click.UsageError(f"--config: cannot read {value}: {exc}")
            if not isinstance(defaults, dict):
                raise click.UsageError("--config: expected a JSON object of flag defaults")
            ctx.default_map = {**(ctx.default_map or {}), **defaults}
        return value

    return click.option("--config", type=click.Path(exists=True), is_eager=True,
                        expose_value=False, callback=load,
                        help="JSON file of flag defaults; explicit flags win.")(fn)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
def main():
    """Autoencoder image classification pipeline with multispace reconstruction."""


# ---------------------------------------------------------------------------


@main.command()
@click.option("--classes", default=3, show_default=True, help="Number of classes.")
@click.option("--per-class", default=150, show_default=True,
              help="Samples per class (split 2:1 into train:test).")
@click.option("--patch", default=32, show_default=True, help="Patch side in pixels.")
@click.option("--seed", default=0, show_default=True, help="Generator seed.")
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="Output dataset directory.")
@runtime_guarded
def synth(classes, per_class, patch, seed, out_dir):
    """Generate a synthetic texture dataset as PGM files plus index.csv."""
    comment = _config_comment("synth", dict(classes=classes, per_class=per_class,
                                            patch=patch, seed=seed))
    dataset = pipeline.synth_dataset(classes=classes, per_class=per_class,
                                     patch=patch, seed=seed)
    data_io.save_dataset(dataset, out_dir, comment)
    click.echo(f"wrote {len(dataset.train)} train / {len(dataset.test)} test "
               f"patches to {out_dir}", err=True)


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True),
              help="Input PGM image.")
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Output PGM image.")
@runtime_guarded
def preprocess(in_path, out_path):
    """Mean-smooth and 2x downsample a grayscale image."""
    comment = _config_comment("preprocess", {"in": in_path})
    image = data_io.read_pgm(in_path)
    data_io.write_pgm(pipeline.preprocess(image), out_path, comment=comment)


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True),
              help="Input PGM image.")
@click.option("--out", "out_prefix", required=True, type=click.Path(),
              help="Output prefix; writes <prefix>_{gradient,glcm,lbp}.pgm.")
@click.option("--glcm-window", default=5, show_default=True, help="GLCM window side (odd).")
@click.option("--glcm-levels", default=8, show_default=True, help="GLCM quantization levels.")
@click.option("--glcm-offset", default="0,1", show_default=True,
              help="GLCM co-occurrence offset dy,dx.")
@runtime_guarded
def reconstruct(in_path, out_prefix, glcm_window, glcm_levels, glcm_offset):
    """Emit the three multispace channels of an image as PGM files."""
    offset = _parse_int_list(glcm_offset, "--glcm-offset")
    if len(offset) != 2:
        raise click.UsageError("--glcm-offset expects exactly dy,dx")
    comment = _config_comment("reconstruct", {
        "in": in_path, "glcm_window": glcm_window, "glcm_levels": glcm_levels,
        "glcm_offset": offset})
    image = data_io.read_pgm(in_path)
    ms = multispace_reconstruct(image, glcm_window, glcm_levels, tuple(offset))
    for name, channel in (("gradient", ms.gradient), ("glcm", ms.glcm), ("lbp", ms.lbp)):
        data_io.write_pgm(channel, f"{out_prefix}_{name}.pgm", comment=comment)


# ---------------------------------------------------------------------------


def model_options(fn):
    for deco in reversed([
        click.option("--pool", default="mir", show_default=True,
                     type=click.Choice(["max", "risa", "mir"]), help="Pooling mode."),
        click.option("--loss", default="enhanced", show_default=True,
                     type=click.Choice(["classic", "enhanced"]), help="Objective mode."),
        click.option("--window", default=3, show_default=True,
                     type=click.IntRange(3, 5), help="Convolution window size (3, 4 or 5)."),
        click.option("--patch", default=32, show_default=True, help="Patch side in pixels."),
        click.option("--filters", default=8, show_default=True, help="Encoder filter count."),
        click.option("--classes", default=3, show_default=True, help="Class count."),
        click.option("--hidden", default=256, show_default=True, help="Classifier hidden width."),
        click.option("--group-size", default=2, show_default=True,
                     help="Channel group size (risa pooling)."),
        click.option("--lambda-s", default=0.1, show_default=True,
                     help="Sparsity penalty weight."),
        click.option("--alpha", default=0.001, show_default=True, help="Adam step size."),
        click.option("--phi1", default=0.9, show_default=True, help="Adam first-moment decay."),
        click.option("--phi2", default=0.999, show_default=True, help="Adam second-moment decay."),
        click.option("--eps", default=1e-8, show_default=True, help="Adam epsilon."),
        click.option("--epochs", default=50, show_default=True, help="Training epochs."),
        click.option("--batch", default=16, show_default=True, help="Batch size."),
        click.option("--seed", default=0, show_default=True, help="Run seed."),
    ]):
        fn = deco(fn)
    return fn


@main.command()
@config_file_option
@model_options
@click.option("--in", "in_dir", type=click.Path(exists=True), default=None,
              help="Dataset directory (default: synthesize with --per-class).")
@click.option("--per-class", default=150, show_default=True,
              help="Samples per class when synthesizing.")
@click.option("--out", "out_prefix", required=True, type=click.Path(),
              help="Output prefix for checkpoint, log CSV and loss figure.")
@runtime_guarded
def train(pool, loss, window, patch, filters, classes, hidden, group_size,
          lambda_s, alpha, phi1, phi2, eps, epochs, batch, seed, in_dir,
          per_class, out_prefix):
    """Train the autoencoder + classifier and write checkpoint, log and figure."""
    run_cfg = dict(pool=pool, loss=loss, window=window, patch=patch,
                   filters=filters, classes=classes, hidden=hidden,
                   group_size=group_size, lambda_s=lambda_s, alpha=alpha,
                   phi1=phi1, phi2=phi2, eps=eps, epochs=epochs, batch=batch,
                   seed=seed, per_class=per_class, **{"in": in_dir})
    comment = _config_comment("train", run_cfg)
    dataset = _load_or_synth(in_dir, classes, per_class, patch, seed)
    if dataset.patch_size != patch:
        patch = dataset.patch_size
    cfg = NetworkConfig(input_size=patch, window=window, filters=filters,
                        pool_mode=pool, classifier_hidden=hidden,
                        classes=dataset.classes, seed=seed, group_size=group_size)
    net = init_network(cfg)
    trained, log = pipeline.train(
        net, dataset, objective_mode=loss,
        adam_cfg=AdamConfig(alpha=alpha, phi1=phi1, phi2=phi2, epsilon=eps),
        epochs=epochs, batch=batch, lambda_s=lambda_s, seed=seed)
    data_io.save_checkpoint(trained, f"{out_prefix}.ckpt", run_config=run_cfg)
    data_io.write_csv(f"{out_prefix}_log.csv", pipeline.TRAIN_LOG_HEADER,
                      [e.csv_row() for e in log], comment=comment)
    if log:
        report.save_loss_curves(log, f"{out_prefix}_loss.png")
        click.echo(f"final train accuracy {log[-1].accuracy_pct:.2f}% "
                   f"objective {log[-1].report.objective_value:.6f}", err=True)


@main.command("eval")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True),
              help="Checkpoint manifest path.")
@click.option("--in", "in_dir", type=click.Path(exists=True), default=None,
              help="Dataset directory (default: synthesize to match the run seed).")
@click.option("--classes", default=3, show_default=True, help="Class count when synthesizing.")
@click.option("--per-class", default=150, show_default=True,
              help="Samples per class when synthesizing.")
@click.option("--seed", default=0, show_default=True, help="Synthesis seed.")
@click.option("--z", default=1.96, show_default=True, help="CI critical value.")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Metrics CSV path (default: stdout).")
@runtime_guarded
def eval_cmd(model_path, in_dir, classes, per_class, seed, z, out_path):
    """Evaluate a checkpoint: accuracy, throughput and confidence interval."""
    net = data_io.load_checkpoint(model_path)
    dataset = _load_or_synth(in_dir, classes, per_class, net.config.input_size, seed)
    if dataset.patch_size != net.config.input_size:
        _fail(f"dataset patches are {dataset.patch_size}px but the model "
              f"expects {net.config.input_size}px")
    m = pipeline.evaluate(net, dataset, z=z)
    header = ["accuracy_pct", "throughput_fps", "reconstruction_time_s",
              "classification_time_s", "ci_center", "ci_halfwidth", "n_tests"]
    row = [m.accuracy_pct, m.frames_per_second, m.reconstruction_time_s,
           m.classification_time_s, m.ci_center, m.ci_halfwidth, m.n_tests]
    if out_path:
        comment = _config_comment("eval", {"model": model_path, "in": in_dir,
                                           "seed": seed, "z": z})
        data_io.write_csv(out_path, header, [row], comment=comment)
    else:
        click.echo(",".join(header))
        click.echo(",".join(data_io.format_cell(v) for v in row))


@main.command()
@config_file_option
@click.option("--sizes", default="32,64", show_default=True,
              help="Comma-separated input sizes.")
@click.option("--windows", default="3,4,5", show_default=True,
              help="Comma-separated window sizes.")
@click.option("--modes", default="risa,mir", show_default=True,
              help="Comma-separated pool modes.")
@click.option("--repeats", default=3, show_default=True, help="Repeats per cell.")
@click.option("--classes", default=3, show_default=True, help="Class count.")
@click.option("--per-class", default=30, show_default=True, help="Samples per class.")
@click.option("--filters", default=8, show_default=True, help="Encoder filter count.")
@click.option("--hidden", default=256, show_default=True, help="Classifier hidden width.")
@click.option("--loss", default="enhanced", show_default=True,
              type=click.Choice(["classic", "enhanced"]), help="Objective mode.")
@click.option("--lambda-s", default=0.1, show_default=True, help="Sparsity weight.")
@click.option("--alpha", default=0.001, show_default=True, help="Adam step size.")
@click.option("--phi1", default=0.9, show_default=True, help="Adam first-moment decay.")
@click.option("--phi2", default=0.999, show_default=True, help="Adam second-moment decay.")
@click.option("--eps", default=1e-8, show_default=True, help="Adam epsilon.")
@click.option("--epochs", default=5, show_default=True, help="Epochs per cell.")
@click.option("--batch", default=16, show_default=True, help="Batch size.")
@click.option("--seed", default=0, show_default=True, help="Master seed.")
@click.option("--z", default=1.96, show_default=True, help="CI critical value.")
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="Output directory for CSV and figures.")
@runtime_guarded
def benchmark(sizes, windows, modes, repeats, classes, per_class, filters,
              hidden, loss, lambda_s, alpha, phi1, phi2, eps, epochs, batch,
              seed, z, out_dir):
    """Sweep (size, window, mode) cells; emit CSV plus accuracy/throughput figures."""
    size_list = _parse_int_list(sizes, "--sizes")
    window_list = _parse_int_list(windows, "--windows")
    mode_list = [m.strip() for m in modes.split(",") if m.strip()]
    run_cfg = dict(sizes=size_list, windows=window_list, modes=mode_list,
                   repeats=repeats, classes=classes, per_class=per_class,
                   filters=filters, hidden=hidden, loss=loss, lambda_s=lambda_s,
                   alpha=alpha, phi1=phi1, phi2=phi2, eps=eps, epochs=epochs,
                   batch=batch, seed=seed, z=z)
    comment = _config_comment("benchmark", run_cfg)
    records = pipeline.benchmark_sweep(
        size_list, window_list, mode_list, repeats, classes=classes,
        per_class=per_class, epochs=epochs, batch=batch, filters=filters,
        objective_mode=loss, lambda_s=lambda_s,
        adam_cfg=AdamConfig(alpha=alpha, phi1=phi1, phi2=phi2, epsilon=eps),
        hidden=hidden, seed=seed, z=z)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data_io.write_csv(out / "benchmark.csv", pipeline.BENCHMARK_HEADER,
                      [r.csv_row() for r in records], comment=comment)
    report.save_benchmark_figures(records, out)
    click.echo(f"wrote {len(records)} benchmark rows to {out / 'benchmark.csv'}", err=True)


@main.command("gradcheck")
@click.option("--seed", default=0, show_default=True, help="Generator seed.")
@click.option("--shapes", default=5, show_default=True,
              help="Random shape draws per primitive.")
@runtime_guarded
def gradcheck_cmd(seed, shapes):
    """Finite-difference check of every backward pass; nonzero exit on failure."""
    results = gradcheck.run_all(seed=seed, shapes=shapes)
    worst = 0.0
    all_ok = True
    for res in results:
        click.echo(res.line())
        worst = max(worst, res.max_rel)
        all_ok = all_ok and res.ok
    click.echo(f"max relative error: {worst:.6e}")
    if not all_ok:
        _fail("gradient check failed")


if __name__ == "__main__":
    main()
