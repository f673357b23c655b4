"""Command-line pipeline: taxonomy checks, curation, data, training, evaluation.

Every subcommand writes its artifacts atomically into an output directory
together with an ``effective-config.ini`` echo of the configuration it
ran under.  Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric
divergence; failures print one machine-parseable line
(``E_CONFIG|E_DATA|E_DIVERGENCE: message``) to stderr.
"""

from __future__ import annotations

import functools
import sys
from pathlib import Path

import click

from . import dedup as dedup_mod
from . import probe as probe_mod
from . import synth as synth_mod
from . import taxonomy as tax_mod
from . import trainer as trainer_mod
from ._util import atomic_write_text, fmt_float
from .config import ConfigError, RunConfig, load_config, write_effective_config


def _fail(code_name, exit_code, message):
    click.echo(f"{code_name}: {message}", err=True)
    sys.exit(exit_code)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            _fail("E_CONFIG", 2, exc)
        except trainer_mod.DivergenceError as exc:
            _fail("E_DIVERGENCE", 4, exc)
        except (tax_mod.TaxonomyError, ValueError, OSError, KeyError) as exc:
            _fail("E_DATA", 3, exc)

    return wrapper


def common_options(fn):
    fn = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                      default=None, help="Run configuration file (INI; all keys optional).")(fn)
    fn = click.option("--seed", type=int, default=None,
                      help="Override the configured seed.")(fn)
    return fn


def _prepare(config_path, seed, out_dir=None):
    config = load_config(config_path, seed_override=seed)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_effective_config(config, out_dir / "effective-config.ini")
    return config


def _load_tax(edges, nodes):
    return tax_mod.load_taxonomy(edges, nodes)


@click.group()
def main():
    """Relational contrastive learning and realm-benchmark curation toolkit."""


@main.group()
def taxonomy():
    """Validate a taxonomy or export class similarities."""


@taxonomy.command("validate")
@click.option("--edges", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--nodes", required=True, type=click.Path(exists=True, dir_okay=False))
@handle_errors
def taxonomy_validate(edges, nodes):
    """Load and validate; print a one-line summary."""
    dag = _load_tax(edges, nodes)
    max_depth = max(dag.depth.values())
    click.echo(f"ok: {len(dag)} concepts, {len(dag.edges)} edges, root {dag.root_id!r}, "
               f"max depth {max_depth}")


@taxonomy.command("similarity")
@click.option("--edges", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--nodes", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--classes", "classes_file", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Class ids, one per line (default: all is_class concepts).")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@common_options
@handle_errors
def taxonomy_similarity(edges, nodes, classes_file, out_dir, config_path, seed):
    """Export raw.csv and normalized.csv similarity matrices."""
    config = _prepare(config_path, seed, out_dir)
    dag = _load_tax(edges, nodes)
    if classes_file:
        class_ids = [line.strip() for line in Path(classes_file).read_text(encoding="utf-8").splitlines()
                     if line.strip() and not line.startswith("#")]
    else:
        class_ids = [cid for cid, node in dag.nodes.items() if node.is_class]
    table = tax_mod.build_similarity_table(dag, class_ids, normalization=config.normalization)
    out = Path(out_dir)
    table.write_csv(out / "raw.csv", out / "normalized.csv")
    click.echo(f"ok: wrote similarity matrices for {len(class_ids)} classes to {out}")


@main.group()
def curate():
    """Benchmark curation stages: concept filter, realm selection, dedup."""


@curate.command("filter")
@click.option("--edges", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--nodes", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@common_options
@handle_errors
def curate_filter(edges, nodes, out_dir, config_path, seed):
    """Apply the four concept-filtering rules; write valid ids and a report."""
    config = _prepare(config_path, seed, out_dir)
    dag = _load_tax(edges, nodes)
    valid, report = tax_mod.filter_concepts(dag, min_images=config.min_images)
    out = Path(out_dir)
    atomic_write_text(out / "valid.txt", "\n".join(valid) + ("\n" if valid else ""))
    lines = ["id,reason"]
    lines += [f"{cid},{reason}" for cid, reason in report.items()]
    atomic_write_text(out / "filter-report.csv", "\n".join(lines) + "\n")
    click.echo(f"ok: {len(valid)} valid concepts, {len(report)} rejected")


@curate.command("realms")
@click.option("--edges", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--nodes", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--candidates", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Candidate sub-tree roots, one id per line.")
@click.option("--excluded", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Excluded sub-tree roots, one id per line.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@common_options
@handle_errors
def curate_realms(edges, nodes, candidates, excluded, out_dir, config_path, seed):
    """Select realm sub-trees from candidates; write per-candidate status."""
    config = _prepare(config_path, seed, out_dir)
    dag = _load_tax(edges, nodes)
    valid, _ = tax_mod.filter_concepts(dag, min_images=config.min_images)

    def read_ids(path):
        return [line.strip() for line in Path(path).read_text(encoding="utf-8").splitlines()
                if line.strip() and not line.startswith("#")]

    realms = tax_mod.select_realms(
        dag, valid, read_ids(candidates),
        excluded=read_ids(excluded) if excluded else (),
        min_classes=config.min_classes,
    )
    lines = ["root,status,valid_count,valid_classes"]
    for realm in realms:
        lines.append(f"{realm.root_concept},{realm.status},{len(realm.valid_classes)},"
                     + ";".join(realm.valid_classes))
    atomic_write_text(Path(out_dir) / "realms.csv", "\n".join(lines) + "\n")
    n_selected = sum(r.status == tax_mod.STATUS_SELECTED for r in realms)
    click.echo(f"ok: {n_selected} realms selected of {len(realms)} candidates")


@curate.command("dedup")
@click.option("--candidates", "candidates_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Candidate manifest CSV (id,path).")
@click.option("--references", "references_paths", multiple=True, required=True,
              type=click.Path(exists=True, dir_okay=False), help="Reference manifest CSV (repeatable).")
@click.option("--hash-dump", is_flag=True, help="Also dump candidate hashes to hashes.csv.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@common_options
@handle_errors
def curate_dedup(candidates_path, references_paths, hash_dump, out_dir, config_path, seed):
    """Remove candidates whose DHash matches any reference image."""
    config = _prepare(config_path, seed, out_dir)
    candidates = dedup_mod.read_manifest(candidates_path)
    references = [dedup_mod.read_manifest(p) for p in references_paths]
    result = dedup_mod.dedup(candidates, references, max_hamming=config.max_hamming)
    out = Path(out_dir)
    paths = dict(candidates)
    kept_lines = ["id,path"] + [f"{cid},{paths[cid]}" for cid in result.kept]
    atomic_write_text(out / "kept.csv", "\n".join(kept_lines) + "\n")
    removed_lines = ["id,reason"] + [f"{cid},{result.reasons[cid]}" for cid in result.removed]
    atomic_write_text(out / "removed.csv", "\n".join(removed_lines) + "\n")
    if hash_dump:
        dedup_mod.write_hash_dump(candidates, out / "hashes.csv")
    click.echo(f"ok: kept {len(result.kept)}, removed {len(result.removed)}")


@main.command("synth")
@click.argument("action", type=click.Choice(["generate"]))
@click.option("--edges", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--nodes", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@common_options
@handle_errors
def synth_cmd(action, edges, nodes, out_dir, config_path, seed):
    """Generate a synthetic hierarchical dataset (dataset.csv)."""
    config = _prepare(config_path, seed, out_dir)
    dag = _load_tax(edges, nodes)
    spec = synth_mod.SynthSpec(
        taxonomy=dag,
        feature_dim=config.feature_dim,
        samples_per_class=config.samples_per_class,
        drift_scale=config.drift_scale,
        noise_scale=config.noise_scale,
        seed=config.seed,
        test_fraction=config.test_fraction,
    )
    dataset = synth_mod.generate(spec)
    dataset.write_csv(Path(out_dir) / "dataset.csv")
    click.echo(f"ok: {len(dataset.labels)} samples over {len(dataset.class_ids)} classes")


def _train_config(config: RunConfig) -> trainer_mod.TrainConfig:
    return trainer_mod.TrainConfig(
        objective=config.objective,
        alpha=config.alpha,
        lr_max=config.lr_max,
        momentum=config.momentum,
        epochs=config.epochs,
        batch_size=config.batch_size,
        temperature=config.temperature,
        seed=config.seed,
        hidden_dim=config.hidden_dim,
        embed_dim=config.embed_dim,
        weight_decay=config.weight_decay,
        view_jitter=config.view_jitter,
        resample_every_step=config.resample_every_step,
    )


@main.command("train")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--edges", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Taxonomy edges (required for reco objectives).")
@click.option("--nodes", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@common_options
@handle_errors
def train_cmd(dataset_path, edges, nodes, out_dir, config_path, seed):
    """Train an encoder; write checkpoint.bin and history.csv."""
    config = _prepare(config_path, seed, out_dir)
    dataset = synth_mod.SynthDataset.read_csv(dataset_path)
    dag = _load_tax(edges, nodes) if edges and nodes else None
    encoder, history = trainer_mod.train(dataset, dag, _train_config(config))
    out = Path(out_dir)
    encoder.save(out / "checkpoint.bin")
    trainer_mod.write_history_csv(history, out / "history.csv")
    click.echo(f"ok: trained {config.objective} for {config.epochs} epochs, "
               f"final mean loss {history[-1]:.6f}")


@main.command("probe")
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@common_options
@handle_errors
def probe_cmd(checkpoint, dataset_path, out_dir, config_path, seed):
    """Fit per-realm linear probes on frozen embeddings; write results.csv."""
    config = _prepare(config_path, seed, out_dir)
    dataset = synth_mod.SynthDataset.read_csv(dataset_path)
    encoder = trainer_mod.Encoder.load(checkpoint)
    embeddings = encoder.embed(dataset.features)
    results = []
    for realm in sorted(set(dataset.realms.tolist())):
        train_rows = dataset.rows(split="train", realm=realm)
        test_rows = dataset.rows(split="test", realm=realm)
        probe = probe_mod.fit_linear_probe(
            embeddings[train_rows], dataset.labels[train_rows],
            l2=config.l2, max_iter=config.max_iter,
        )
        results.append(probe_mod.evaluate(probe, embeddings[test_rows],
                                          dataset.labels[test_rows], realm=realm))
    probe_mod.write_results_csv(results, Path(out_dir) / "results.csv")
    for r in results:
        click.echo(f"{r.realm}: top1 {fmt_float(r.top1)} (n={r.n_test})")


@main.command("report")
@click.option("--candidate", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--baseline", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@common_options
@handle_errors
def report_cmd(candidate, baseline, out_dir, config_path, seed):
    """Per-realm accuracy deltas vs a baseline; write deltas.csv and deltas.svg."""
    _prepare(config_path, seed, out_dir)
    report = probe_mod.relative_report(
        probe_mod.read_results_csv(candidate),
        probe_mod.read_results_csv(baseline),
    )
    out = Path(out_dir)
    probe_mod.write_report_csv(report, out / "deltas.csv")
    probe_mod.write_report_svg(report, out / "deltas.svg")
    click.echo(f"ok: average delta {report.average:+.2f} pp over {len(report.realms)} realms")


if __name__ == "__main__":
    main()
