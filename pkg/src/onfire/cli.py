"""Operator command line: ingest, synth, train, evaluate, detect, localize,
bench, audit, arch.

A key=value config file (``--config``) supplies defaults for any option of
any subcommand; explicit flags win over environment variables, which win
over the config file.  Environment overrides exist for path options only
(``ONFIRE_DATA_ROOT``, ``ONFIRE_MANIFEST``, ``ONFIRE_CHECKPOINT``,
``ONFIRE_OUT``).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import backend, bench as bench_mod, data, detect as detect_mod, manifest as manifest_mod
from .checkpoint import Checkpoint
from .errors import OnFireError
from .graph import GraphExecutor
from .metrics import a_to_c_ratio
from .slic import SlicParams, export_label_map, localize as localize_frame
from .train import ArrayDataset, TrainConfig, train as run_train, transfer_init
from .zoo import CATALOG, REFERENCE_COMPLEXITY, arch_names, build_arch, count_parameters


def load_config_file(path) -> dict:
    """Parse the documented key = value format (# starts a comment)."""
    cfg = {}
    for line_no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise click.BadParameter(f"{path}:{line_no}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        cfg[key.strip().replace("-", "_")] = value.strip()
    return cfg


class _Group(click.Group):
    def invoke(self, ctx):
        cfg_path = ctx.params.get("config")
        if cfg_path:
            cfg = load_config_file(cfg_path)
            ctx.default_map = {name: dict(cfg) for name in self.commands}
        return super().invoke(ctx)


@click.group(cls=_Group)
@click.option("--config", type=click.Path(exists=True, dir_okay=False),
              help="Key=value config file supplying option defaults.")
@click.option("--backend", "backend_name",
              type=click.Choice(["auto", "compiled", "numpy"]), default="auto",
              show_default=True, help="Kernel backend selection.")
def main(config, backend_name):
    backend.use(backend_name)


def _echo_counts(man: data.DatasetManifest) -> None:
    for split, by_label in sorted(man.counts().items()):
        total = sum(by_label.values())
        detail = ", ".join(f"{k}={v}" for k, v in sorted(by_label.items()))
        click.echo(f"  {split}: {total} ({detail})")
    if man.skipped:
        click.echo(f"  skipped {len(man.skipped)} unreadable file(s)")


@main.command()
@click.argument("root", envvar="ONFIRE_DATA_ROOT",
                type=click.Path(exists=True, file_okay=False))
@click.option("--ratios", default="0.8,0.2", show_default=True,
              help="train,val[,test] fractions summing to 1.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", envvar="ONFIRE_OUT", default="manifest.json",
              show_default=True, type=click.Path(dir_okay=False))
def ingest(root, ratios, seed, out):
    """Index fire/ and nofire/ images into a seeded stratified split."""
    ratio_tuple = tuple(float(r) for r in ratios.split(","))
    man = data.ingest(root, ratio_tuple, seed)
    man.save(out)
    click.echo(f"manifest written to {out}")
    _echo_counts(man)


@main.command()
@click.option("--out", envvar="ONFIRE_OUT", required=True,
              type=click.Path(file_okay=False))
@click.option("-n", "--n-per-class", default=500, show_default=True, type=int)
@click.option("--size", default=64, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--masks", is_flag=True, help="Also write fire masks.")
def synth(out, n_per_class, size, seed, masks):
    """Generate the synthetic fire / no-fire image set."""
    files = data.synth_dataset(out, n_per_class, size, seed, write_masks=masks)
    click.echo(f"wrote {len(files)} images under {out}")


@main.command()
@click.option("--manifest", "manifest_path", envvar="ONFIRE_MANIFEST", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--arch", default="OnFire-Slim", show_default=True)
@click.option("--optimizer", type=click.Choice(["sgd_momentum", "rmsprop"]),
              default="sgd_momentum", show_default=True)
@click.option("--lr", default=0.001, show_default=True, type=float)
@click.option("--epochs", default=30, show_default=True, type=int)
@click.option("--batch-size", default=64, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--norm", type=click.Choice(["batch_norm", "lrn", "none"]), default=None,
              help="Override the architecture's default normalization.")
@click.option("--input-size", default=None, type=int,
              help="Square input size override (default: the arch's native size).")
@click.option("--smoothing", default=0.0, show_default=True, type=float)
@click.option("--flip", is_flag=True, help="Random horizontal flip augmentation.")
@click.option("--init-from", envvar="ONFIRE_CHECKPOINT", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="Transfer-learn: copy compatible weights from this checkpoint.")
@click.option("--out", envvar="ONFIRE_OUT", default="model.onfire",
              show_default=True, type=click.Path(dir_okay=False))
@click.option("--log", "log_path", default=None, type=click.Path(dir_okay=False),
              help="Append per-epoch CSV log here.")
def train(manifest_path, arch, optimizer, lr, epochs, batch_size, seed, norm,
          input_size, smoothing, flip, init_from, out, log_path):
    """Train an architecture on a manifest's train/val splits."""
    man = data.DatasetManifest.load(manifest_path)
    size = (input_size, input_size) if input_size else None
    graph = build_arch(arch, input_size=size, norm=norm)
    h, w, _ = graph.infer_shapes()["input"]
    x_train, y_train = data.load_split(man, "train", (h, w))
    try:
        x_val, y_val = data.load_split(man, "val", (h, w))
    except OnFireError:
        x_val = np.zeros((0, h, w, 3), dtype=np.float32)
        y_val = np.zeros((0, 2), dtype=np.float32)
    config = TrainConfig(optimizer=optimizer, learning_rate=lr, epochs=epochs,
                         batch_size=batch_size, seed=seed,
                         label_smoothing=smoothing, horizontal_flip=flip)
    if init_from:
        executor, report = transfer_init(graph, Checkpoint.load(init_from), seed=seed)
        click.echo(f"transfer: copied {len(report.copied)} layer(s), "
                   f"reinitialized {len(report.reinitialized)}")
    else:
        executor = GraphExecutor(graph, seed=seed)
    result = run_train(executor, ArrayDataset(x_train, y_train, x_val, y_val),
                       config, log_path=log_path)
    result.checkpoint.save(out)
    for epoch, split, loss, acc in result.log:
        click.echo(f"epoch {epoch:3d} {split:5s} loss {loss:.4f} acc {acc:.4f}")
    if result.aborted:
        click.echo("training aborted on non-finite loss; saved last good checkpoint")
    click.echo(f"checkpoint written to {out}")


@main.command()
@click.option("--checkpoint", envvar="ONFIRE_CHECKPOINT", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--manifest", "manifest_path", envvar="ONFIRE_MANIFEST", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--split", default="val", show_default=True,
              type=click.Choice(["train", "val", "test"]))
@click.option("--batch-size", default=64, show_default=True, type=int)
@click.option("--csv", "csv_path", default=None, type=click.Path(dir_okay=False))
def evaluate(checkpoint, manifest_path, split, batch_size, csv_path):
    """Confusion-matrix metrics of a checkpoint on one split."""
    man = data.DatasetManifest.load(manifest_path)
    report = detect_mod.evaluate_checkpoint(checkpoint, man, split, batch_size)
    click.echo(report.table_row())
    click.echo(f"counts: TP={report.tp} FP={report.fp} TN={report.tn} FN={report.fn}")
    click.echo(f"accuracy {report.accuracy:.4f}  C {report.params_millions:.2f}M  "
               f"A:C {report.a_to_c:.2f}")
    if csv_path:
        import csv as csv_lib
        with open(csv_path, "w", newline="") as fh:
            writer = csv_lib.writer(fh)
            rows = sorted(report.as_dict().items())
            writer.writerow([k for k, _ in rows])
            writer.writerow([v for _, v in rows])
        click.echo(f"metrics written to {csv_path}")


@main.command()
@click.argument("source", type=click.Path(exists=True))
@click.option("--checkpoint", envvar="ONFIRE_CHECKPOINT", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", envvar="ONFIRE_OUT", default=None,
              type=click.Path(dir_okay=False), help="JSON-lines verdict file.")
@click.option("--frame-skip", default=1, show_default=True, type=int)
def detect(source, checkpoint, out, frame_skip):
    """Binary fire / no-fire verdict per frame (image, directory, video)."""
    model = detect_mod.load_model(checkpoint)
    sink = open(out, "w", encoding="utf-8") if out else None
    try:
        for verdict in detect_mod.detect(model, source, frame_skip):
            line = verdict.as_json()
            click.echo(line)
            if sink:
                sink.write(line + "\n")
    finally:
        if sink:
            sink.close()


@main.command()
@click.argument("image", type=click.Path(exists=True, dir_okay=False))
@click.option("--checkpoint", envvar="ONFIRE_CHECKPOINT", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", envvar="ONFIRE_OUT", default="overlay.png",
              show_default=True, type=click.Path(dir_okay=False))
@click.option("--k", default=100, show_default=True, type=int)
@click.option("--compactness", default=10.0, show_default=True, type=float)
@click.option("--iters", default=10, show_default=True, type=int)
@click.option("--export-labels", default=None, type=click.Path(dir_okay=False),
              help="Also write the label map PNG (plus .txt index).")
def localize(image, checkpoint, out, k, compactness, iters, export_labels):
    """Superpixel fire localization with a green/red boundary overlay."""
    from PIL import Image
    model = detect_mod.load_model(checkpoint)
    h, _, _ = model.shapes[model.graph.input_node.name]
    frame = data.load_image(image)
    params = SlicParams(k=k, compactness=compactness, max_iters=iters)
    result = localize_frame(frame, model.predict, params, input_size=h,
                            frame_id=str(image))
    Image.fromarray(result.overlay).save(out)
    n_fire = len(result.fire_labels())
    click.echo(f"{result.spmap.n_regions} superpixels, {n_fire} flagged fire")
    click.echo(f"overlay written to {out}")
    if export_labels:
        export_label_map(result.spmap, export_labels,
                         str(Path(export_labels).with_suffix(".txt")))
        click.echo(f"label map written to {export_labels}")


@main.command()
@click.option("--checkpoint", envvar="ONFIRE_CHECKPOINT", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--frames", default=100, show_default=True, type=int)
@click.option("--frame-size", default=256, show_default=True, type=int)
@click.option("--warmup", default=10, show_default=True, type=int)
@click.option("--reps", default=5, show_default=True, type=int)
@click.option("--json", "as_json", is_flag=True, help="Emit the report as JSON.")
def bench(checkpoint, frames, frame_size, warmup, reps, as_json):
    """Frames-per-second throughput on synthetic preloaded frames."""
    model = detect_mod.load_model(checkpoint)
    report = bench_mod.bench_fps(model, bench_mod.synthetic_frames(frames, frame_size),
                                 warmup=warmup, repetitions=reps)
    if as_json:
        click.echo(json.dumps(report.as_dict(), indent=1))
    else:
        click.echo(f"model {report.model_name}  input {report.input_size[0]}x"
                   f"{report.input_size[1]}  threads {report.threads}  "
                   f"backend {report.backend}")
        click.echo(f"fps {report.fps:.2f}  p50 {report.p50_latency_s * 1e3:.2f} ms  "
                   f"p95 {report.p95_latency_s * 1e3:.2f} ms")


@main.command()
@click.argument("arch")
@click.option("--accuracy", default=None, type=float,
              help="Accuracy in [0,1] used for the A:C column.")
@click.option("--csv", "csv_path", default=None, type=click.Path(dir_okay=False))
@click.option("--per-layer", is_flag=True, help="Print the per-layer breakdown.")
def audit(arch, accuracy, csv_path, per_layer):
    """Parameter census of an architecture (C, per-layer, optional A:C)."""
    graph = build_arch(arch)
    total, rows = count_parameters(graph)
    click.echo(f"{arch}: {total:,} trainable parameters ({total / 1e6:.2f}M)")
    non_trainable = sum(r.non_trainable for r in rows)
    if non_trainable:
        click.echo(f"plus {non_trainable:,} non-trainable (running statistics)")
    if accuracy is not None:
        click.echo(f"A:C = {a_to_c_ratio(accuracy, total / 1e6):.2f}")
    if per_layer:
        for r in rows:
            if r.trainable or r.non_trainable:
                click.echo(f"  {r.name:40s} {r.kind:12s} {r.trainable:>10,d}")
    if csv_path:
        import csv as csv_lib
        with open(csv_path, "w", newline="") as fh:
            writer = csv_lib.writer(fh)
            writer.writerow(["layer", "kind", "trainable", "non_trainable", "out_shape"])
            for r in rows:
                writer.writerow([r.name, r.kind, r.trainable, r.non_trainable,
                                 "x".join(map(str, r.out_shape))])
        click.echo(f"per-layer table written to {csv_path}")


@main.group()
def arch():
    """Catalog inspection."""


@arch.command("list")
@click.option("--params", "with_params", is_flag=True,
              help="Include parameter counts (builds every graph).")
def arch_list(with_params):
    """List every architecture in the catalog."""
    for name in arch_names(include_extras=True):
        if with_params:
            total, _ = count_parameters(build_arch(name))
            click.echo(f"{name:24s} {total / 1e6:8.2f}M")
        else:
            click.echo(name)
    click.echo("\nreference figures (documented, not buildable):")
    for name, ref in REFERENCE_COMPLEXITY.items():
        click.echo(f"  {name:24s} C={ref['params_millions']}M  "
                   f"A={ref['accuracy_pct']}%  fps={ref['fps']}")


@arch.command("show")
@click.argument("name")
@click.option("--out", default=None, type=click.Path(dir_okay=False),
              help="Write the manifest here instead of stdout.")
def arch_show(name, out):
    """Print (or save) an architecture's manifest."""
    graph = build_arch(name)
    text = manifest_mod.serialize_arch(graph)
    if out:
        Path(out).write_text(text, encoding="utf-8")
        click.echo(f"manifest written to {out}")
    else:
        click.echo(text, nl=False)


def entrypoint():  # console-script shim that maps package errors to exit codes
    try:
        main(standalone_mode=True)
    except OnFireError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)


if __name__ == "__main__":
    entrypoint()
