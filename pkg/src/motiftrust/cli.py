"""Command-line pipeline: ingest -> motifs -> train / eval / ablate / export-emb.

Exit codes: 0 success, 2 missing/unreadable inputs or bad usage, 3 validation
failure (malformed data, inconsistent configuration, failed verification).
Every run drops a ``run_manifest.json`` beside its outputs recording the
resolved configuration, seed, and content hashes of the inputs, so any
artifact can be regenerated from its manifest alone.
"""

import functools
import os
import sys

import click
import numpy as np

from . import ingest as ing
from . import motifs as mot
from . import report as rpt
from . import train as trn
from ._util import ValidationError, sha256_file, sha256_tree, write_json
from .ingest import ParseError

EXIT_MISSING_INPUT = 2
EXIT_VALIDATION = 3


def _mapped_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (FileNotFoundError, IsADirectoryError, NotADirectoryError) as exc:
            click.echo(f"error: missing input: {exc}", err=True)
            sys.exit(EXIT_MISSING_INPUT)
        except (ValidationError, ParseError, OverflowError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_VALIDATION)
    return wrapper


def _write_run_manifest(outdir, subcommand, config, inputs):
    write_json(os.path.join(outdir, "run_manifest.json"), {
        "subcommand": subcommand,
        "config": config,
        "inputs": inputs,
    })


def _load_config_file(path, section):
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib

    with open(path, "rb") as f:
        data = tomllib.load(f)
    values = dict(data.get(section, {}))
    # flat files without section headers are accepted too
    for k, v in data.items():
        if not isinstance(v, dict):
            values.setdefault(k, v)
    return values


_RUN_KEYS = tuple(trn.RunConfig().to_dict())


def _resolve_run_config(ctx, config_path, flag_values) -> trn.RunConfig:
    """defaults < config file < explicitly passed flags"""
    values = trn.RunConfig().to_dict()
    if config_path:
        file_vals = _load_config_file(config_path, "train")
        unknown = set(file_vals) - set(_RUN_KEYS)
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        values.update(file_vals)
    from click.core import ParameterSource

    for key, val in flag_values.items():
        if ctx.get_parameter_source(key) == ParameterSource.COMMANDLINE:
            values[key] = val
    return trn.RunConfig(**values).validate()


def _run_config_options(fn):
    opts = [
        click.option("--lr", type=float, default=trn.RunConfig.lr, help="Adam learning rate."),
        click.option("--weight-decay", "weight_decay", type=float,
                     default=trn.RunConfig.weight_decay, help="Decoupled weight decay."),
        click.option("--emb-dim", "emb_dim", type=int, default=trn.RunConfig.emb_dim,
                     help="Node embedding width."),
        click.option("--group-dim", "group_dim", type=int, default=trn.RunConfig.group_dim,
                     help="Global embedding width (0 = emb-dim)."),
        click.option("--feat-dim", "feat_dim", type=int, default=trn.RunConfig.feat_dim,
                     help="Structural feature width."),
        click.option("--mlp-hidden", "mlp_hidden", type=int, default=trn.RunConfig.mlp_hidden,
                     help="Hidden width of the attention MLP."),
        click.option("--num-groups", "num_groups", type=int, default=trn.RunConfig.num_groups,
                     help="Number of latent groups."),
        click.option("--gcn-layers", "gcn_layers", type=int, default=trn.RunConfig.gcn_layers,
                     help="Aggregation layers (must be 2)."),
        click.option("--dropout", type=float, default=trn.RunConfig.dropout),
        click.option("--warmup", "warmup_epochs", type=int, default=trn.RunConfig.warmup_epochs,
                     help="Epochs excluded from the top-5 window."),
        click.option("--epochs", "total_epochs", type=int, default=trn.RunConfig.total_epochs,
                     help="Total training epochs."),
        click.option("--repeats", type=int, default=trn.RunConfig.repeats,
                     help="Seeded repeats to average."),
        click.option("--beta", type=float, default=trn.RunConfig.beta,
                     help="Motif embedding strength."),
        click.option("--seed", type=int, default=trn.RunConfig.seed),
        click.option("--no-motif", "no_motif", is_flag=True, default=False),
        click.option("--no-sign", "no_sign", is_flag=True, default=False),
        click.option("--no-global", "no_global", is_flag=True, default=False),
        click.option("--no-invariant-checks", "check_invariants", flag_value=False,
                     default=True, help="Skip per-epoch invariant tracking."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _collect_run_kwargs(kw):
    return {k: kw.pop(k) for k in _RUN_KEYS if k in kw}


@click.group()
def main():
    """Signed temporal trust-network edge classification pipeline."""


@main.command()
@click.option("--in", "in_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Rating CSV (source,target,rating,time; .gz ok).")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--snapshots", type=int, default=12, show_default=True)
@click.option("--binning", type=click.Choice(["equal-edges", "equal-time"]),
              default="equal-edges", show_default=True)
@click.option("--split", default="8,1,3", show_default=True,
              help="Train,valid,test snapshot counts.")
@_mapped_errors
def ingest(in_path, out_dir, snapshots, binning, split):
    """Parse ratings and write a snapshot bundle."""
    try:
        parts = tuple(int(x) for x in split.split(","))
    except ValueError:
        raise ValidationError(f"bad --split {split!r}; expected e.g. 8,1,3")
    parsed = ing.parse_ratings(in_path)
    series = ing.build_snapshots(parsed.events, snapshots, binning, parts,
                                 self_loops_dropped=parsed.self_loops_dropped)
    ing.save_bundle(series, out_dir)
    _write_run_manifest(out_dir, "ingest",
                        {"snapshots": snapshots, "binning": binning, "split": split},
                        {in_path: sha256_file(in_path)})
    click.echo(f"{series.num_nodes} nodes, "
               f"{sum(s.num_edges for s in series.snapshots)} collapsed edges over "
               f"{snapshots} snapshots ({parsed.self_loops_dropped} self-loops dropped)")


@main.command()
@click.option("--in", "in_dir", required=True, type=click.Path(exists=True, file_okay=False),
              help="Snapshot bundle directory.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--verify", type=int, default=0, show_default=True,
              help="Run the brute-force oracle on snapshots with at most this many active nodes.")
@_mapped_errors
def motifs(in_dir, out_dir, verify):
    """Count per-edge motifs for every snapshot and write a motif bundle."""
    series = ing.load_bundle(in_dir)
    slices = [mot.count_motifs(s) for s in series.snapshots]
    mot.save_motif_bundle(slices, out_dir, source_manifest_sha=sha256_tree(in_dir))
    _write_run_manifest(out_dir, "motifs", {"verify": verify},
                        {in_dir: sha256_tree(in_dir)})
    click.echo(f"counted motifs for {len(slices)} snapshots")
    if verify:
        bad = 0
        for t, snap in enumerate(series.snapshots):
            checked, mismatches = mot.verify_snapshot(snap, verify)
            status = f"{mismatches} mismatching edges" if checked else "skipped (too large)"
            click.echo(f"  snapshot {t}: {status}")
            bad += mismatches
        if bad:
            raise ValidationError(f"oracle verification failed on {bad} edges")
        click.echo("oracle verification passed")


def _load_motif_source(motif_dir, config, series):
    if config.no_motif:
        return None
    if motif_dir is None:
        raise ValidationError("--motifs is required unless --no-motif is set")
    bundle = mot.MotifBundle(motif_dir)
    if bundle.num_snapshots != series.num_snapshots:
        raise ValidationError("motif bundle does not match the snapshot bundle")
    return bundle


@main.command()
@click.option("--snaps", "snap_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--motifs", "motif_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="TOML config; [train] keys mirror these flags.")
@click.option("--baseline", is_flag=True, default=False,
              help="Train the static 2-layer GCN baseline instead.")
@click.option("--figures/--no-figures", default=True, show_default=True)
@_run_config_options
@click.pass_context
@_mapped_errors
def train(ctx, snap_dir, motif_dir, out_dir, config_path, baseline, figures, **kw):
    """Train and write metrics (JSON + CSV), figures, and checkpoints."""
    config = _resolve_run_config(ctx, config_path, _collect_run_kwargs(kw))
    series = ing.load_bundle(snap_dir)
    os.makedirs(out_dir, exist_ok=True)
    inputs = {snap_dir: sha256_tree(snap_dir)}
    if baseline:
        report, checkpoints = trn.baseline_gcn(config, series)
    else:
        source = _load_motif_source(motif_dir, config, series)
        if motif_dir:
            inputs[motif_dir] = sha256_tree(motif_dir)
        report, checkpoints = trn.train(config, series, source)
    write_json(os.path.join(out_dir, "metrics.json"), report)
    rpt.write_metrics_csv(report, os.path.join(out_dir, "metrics.csv"))
    if figures:
        rpt.training_curves(report, os.path.join(out_dir, "training_curves.png"))
    for r, ck in enumerate(checkpoints):
        trn.save_checkpoint(os.path.join(out_dir, f"checkpoint_rep{r}"),
                            ck["params"],
                            {"seed": ck["seed"], "epoch": ck["epoch"],
                             "config_hash": report["config_hash"],
                             "config": report["config"],
                             "model": report["model"]})
    _write_run_manifest(out_dir, "train",
                        {**report["config"], "baseline": baseline}, inputs)
    agg = report["aggregate"]
    ap = "-" if agg["ap"] is None else f"{agg['ap']:.3f}"
    click.echo(f"{report['model']}: F1 {agg['f1']:.3f}  Acc {agg['acc']:.3f}  "
               f"Ap {ap}  Recall {agg['recall']:.3f}")


@main.command("eval")
@click.option("--snaps", "snap_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--motifs", "motif_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--checkpoint", "ckpt_prefix", required=True,
              help="Checkpoint path prefix (without .bin/.json).")
@click.option("--out", "out_path", type=click.Path(dir_okay=False))
@_mapped_errors
def eval_cmd(snap_dir, motif_dir, ckpt_prefix, out_path):
    """Score a stored checkpoint on the validation and test snapshots."""
    if not os.path.exists(ckpt_prefix + ".json"):
        raise FileNotFoundError(ckpt_prefix + ".json")
    params, meta = trn.load_checkpoint(ckpt_prefix)
    config = trn.RunConfig(**meta["config"])
    series = ing.load_bundle(snap_dir)
    source = _load_motif_source(motif_dir, config, series)
    result = trn.evaluate_checkpoint(config, series, source, params)
    payload = {"checkpoint": ckpt_prefix, "model": meta.get("model"), **result}
    if out_path:
        write_json(out_path, payload)
        click.echo(f"wrote {out_path}")
    else:
        import json

        click.echo(json.dumps(payload, indent=2, sort_keys=True))


@main.command()
@click.option("--snaps", "snap_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--motifs", "motif_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--figures/--no-figures", default=True, show_default=True)
@_run_config_options
@click.pass_context
@_mapped_errors
def ablate(ctx, snap_dir, motif_dir, out_dir, config_path, figures, **kw):
    """Train the full model and each single-component removal; compare."""
    config = _resolve_run_config(ctx, config_path, _collect_run_kwargs(kw))
    series = ing.load_bundle(snap_dir)
    source = _load_motif_source(motif_dir, config, series)
    os.makedirs(out_dir, exist_ok=True)
    results = trn.ablate(config, series, source)
    write_json(os.path.join(out_dir, "ablation.json"),
               {name: {"aggregate": rep["aggregate"], "seeds": rep["seeds"]}
                for name, rep in results.items()})
    import csv as _csv

    with open(os.path.join(out_dir, "ablation.csv"), "w", newline="") as f:
        w = _csv.writer(f)
        w.writerow(["variant", "f1", "acc", "ap", "recall"])
        for name, rep in results.items():
            agg = rep["aggregate"]
            w.writerow([name] + [agg[m] for m in ("f1", "acc", "ap", "recall")])
    table = rpt.results_table({n: r["aggregate"] for n, r in results.items()})
    with open(os.path.join(out_dir, "results_table.txt"), "w") as f:
        f.write(table)
    if figures:
        rpt.ablation_chart(results, os.path.join(out_dir, "ablation_f1.png"))
    inputs = {snap_dir: sha256_tree(snap_dir), motif_dir: sha256_tree(motif_dir)}
    _write_run_manifest(out_dir, "ablate", config.to_dict(), inputs)
    click.echo(table, nl=False)
    f1 = {n: results[n]["aggregate"]["f1"] for n in results}
    ordered = f1["-motif"] < f1["-sign"] < f1["-global"] < f1["full"]
    click.echo(f"ablation ordering -motif < -sign < -global < full: "
               f"{'holds' if ordered else 'violated'}")


@main.command("export-emb")
@click.option("--snaps", "snap_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--motifs", "motif_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--checkpoint", "ckpt_prefix", required=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--snapshots", "snapshot_list", default=None,
              help="Comma-separated snapshot ids (default: all).")
@_mapped_errors
def export_emb(snap_dir, motif_dir, ckpt_prefix, out_dir, snapshot_list):
    """Write per-snapshot node embeddings as TSV (node, label, coordinates)."""
    if not os.path.exists(ckpt_prefix + ".json"):
        raise FileNotFoundError(ckpt_prefix + ".json")
    params, meta = trn.load_checkpoint(ckpt_prefix)
    config = trn.RunConfig(**meta["config"])
    series = ing.load_bundle(snap_dir)
    source = _load_motif_source(motif_dir, config, series)
    ids = None
    if snapshot_list:
        try:
            ids = [int(x) for x in snapshot_list.split(",")]
        except ValueError:
            raise ValidationError(f"bad --snapshots {snapshot_list!r}")
        bad = [t for t in ids if not 0 <= t < series.num_snapshots]
        if bad:
            raise ValidationError(f"snapshot ids out of range: {bad}")
    written = trn.export_embeddings(config, series, source, params, out_dir, ids)
    _write_run_manifest(out_dir, "export-emb",
                        {"checkpoint": ckpt_prefix, "snapshots": snapshot_list},
                        {snap_dir: sha256_tree(snap_dir)})
    click.echo(f"wrote {len(written)} embedding files to {out_dir}")


if __name__ == "__main__":
    main()
