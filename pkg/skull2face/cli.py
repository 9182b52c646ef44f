'''Command-line pipeline: synth -> triplets -> features -> train -> embed -> query / evaluate'''

from __future__ import annotations

import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import click
import numpy as np
from pydantic import ValidationError

from skull2face.config import RunConfig, derive_seed, load_run_config
from skull2face.data import (Domain, View, enumerate_triplets, load_manifest, read_triplets_csv,
                             split_triplets, write_manifest, write_triplets_csv)
from skull2face.errors import DimMismatch, MissingFile, Skull2FaceError, UnknownQuery
from skull2face.features import (AugmentedFeatureSampler, FeatureTable, compute_feature_table,
                                 load_feature_table, validate_feature_table, write_feature_table)
from skull2face.log import configure, get_logger
from skull2face.metrics import RelevanceJudgments, evaluate, load_judgments
from skull2face.model import HeadConfig, ProjectionHead, init_head, read_checkpoint
from skull2face.retrieval import (GalleryIndex, build_index, merge_galleries, query,
                                  read_gallery_csv, write_gallery_csv)
from skull2face.synth import generate, generate_distractors
from skull2face.training import TrainConfig, train
from skull2face.utils import dumps_json, write_csv, write_json

logger = get_logger(__name__)

IN_FILE = click.Path(dir_okay=False, path_type=Path)
OUT_DIR = click.Path(file_okay=False, path_type=Path)
OUT_FILE = click.Path(dir_okay=False, path_type=Path)


@dataclass
class State:
    run: RunConfig
    seed: int
    progress: bool

    def check(self, **overrides) -> RunConfig:
        r'''Revalidates the run configuration with flag values before any work starts'''
        return RunConfig(**{**self.run.model_dump(), **overrides})


def _emit_record(record: dict) -> None:
    click.echo(json.dumps(record, sort_keys=True, default=str), err=True)


def _emit_error(record: dict) -> None:
    _emit_record(record)
    click.echo(f'Error: {record["message"]}', err=True)


def _record(code: str, exit_code: int, message: str) -> dict:
    return {'event': 'error', 'code': code, 'exit_code': exit_code, 'message': message}


class PipelineGroup(click.Group):
    r'''Maps every failure to an exit code and a JSON record plus a human line on stderr.

        Exit codes: 0 success, 2 invalid input, 1 internal error. Usage errors get the
        JSON record only; click prints the usage text and the human line itself.'''
    def make_context(self, info_name, args, parent=None, **extra):
        try:
            return super().make_context(info_name, args, parent=parent, **extra)
        except click.UsageError as e:
            _emit_record(_record('UsageError', e.exit_code, e.format_message()))
            raise

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except click.UsageError as e:
            _emit_record(_record('UsageError', e.exit_code, e.format_message()))
            raise
        except (click.exceptions.Exit, click.exceptions.Abort, click.ClickException):
            raise
        except Skull2FaceError as e:
            _emit_error(e.record())
            ctx.exit(e.exit_code)
        except ValidationError as e:
            _emit_error(_record('ConfigError', 2, str(e).replace('\n', '; ')))
            ctx.exit(2)
        except Exception as e:
            logger.debug('internal error', exc_info=True)
            _emit_error(_record('InternalError', 1, f'{type(e).__name__}: {e}'))
            ctx.exit(1)


def _state(ctx: click.Context, seed: Optional[int]) -> State:
    state: State = ctx.find_object(State)
    if seed is not None:
        state.seed = seed
    return state


seed_option = click.option('--seed', type=click.IntRange(min=0), default=None,
                           help='Global seed; overrides the group-level --seed.')


@click.group(cls=PipelineGroup)
@click.option('--seed', type=click.IntRange(min=0), default=None, help='Global seed, fanned out to every stage [default: 1].')
@click.option('--config', 'config_path', type=click.Path(dir_okay=False, path_type=Path), default=None,
              help='YAML run configuration; explicit flags override it.')
@click.option('--log-format', type=click.Choice(['text', 'json']), default='text', show_default=True)
@click.option('--quiet', '-q', is_flag=True, help='Only log warnings and errors, no progress bars.')
@click.option('--verbose', '-v', is_flag=True, help='Log per-epoch details.')
@click.pass_context
def main(ctx: click.Context, seed: Optional[int], config_path: Optional[Path], log_format: str,
         quiet: bool, verbose: bool) -> None:
    '''Skull-to-face metric learning and retrieval.'''
    configure(logging.WARNING if quiet else logging.DEBUG if verbose else logging.INFO, log_format)
    run = load_run_config(config_path) if config_path is not None else RunConfig()
    ctx.default_map = run.default_map()
    progress = not quiet and sys.stderr.isatty()
    ctx.obj = State(run, run.seed if seed is None else seed, progress)


'''==============================SYNTH=============================='''

@main.command()
@click.option('--out', type=OUT_DIR, required=True, help='Directory for manifest.json and features.csv.')
@click.option('--num-subjects', type=int, default=40, show_default=True)
@click.option('--latent-dim', type=int, default=16, show_default=True)
@click.option('--feature-dim', type=int, default=64, show_default=True)
@click.option('--noise-sigma', type=float, default=0.05, show_default=True)
@click.option('--distractors', type=click.IntRange(min=0), default=0, show_default=True,
              help='Also write this many distractor faces to distractors.csv.')
@seed_option
@click.pass_context
def synth(ctx, out: Path, num_subjects: int, latent_dim: int, feature_dim: int, noise_sigma: float,
          distractors: int, seed: Optional[int]) -> None:
    '''Generate a synthetic paired catalog with feature rows.'''
    state = _state(ctx, seed)
    cfg = state.run.synth_config(state.seed, num_subjects=num_subjects, latent_dim=latent_dim,
                                 feature_dim=feature_dim, noise_sigma=noise_sigma)
    data = generate(cfg)
    write_manifest(data.manifest, out / 'manifest.json')
    write_feature_table(data.features, out / 'features.csv')
    message = f'{data.manifest.n} subjects, {len(data.features)} feature rows -> {out}'
    if distractors:
        write_gallery_csv(generate_distractors(cfg, distractors), out / 'distractors.csv')
        message += f' (+{distractors} distractors)'
    click.echo(message)


'''==============================TRIPLETS=============================='''

@main.command()
@click.option('--manifest', type=IN_FILE, required=True)
@click.option('--out', type=OUT_DIR, required=True, help='Directory for triplets.csv, train.csv, val.csv.')
@click.option('--split-fraction', type=float, default=0.7, show_default=True)
@click.option('--subject-disjoint', is_flag=True, help='Split subjects instead of triplets.')
@seed_option
@click.pass_context
def triplets(ctx, manifest: Path, out: Path, split_fraction: float, subject_disjoint: bool,
             seed: Optional[int]) -> None:
    '''Enumerate all triplets and split them into train / validation.'''
    state = _state(ctx, seed)
    state.check(split_fraction=split_fraction, subject_disjoint=subject_disjoint)
    catalog = load_manifest(manifest)
    full = enumerate_triplets(catalog)
    train_set, val_set = split_triplets(full, split_fraction, derive_seed(state.seed, 'split'),
                                        subject_disjoint=subject_disjoint)
    write_triplets_csv(full, out / 'triplets.csv')
    write_triplets_csv(train_set, out / 'train.csv')
    write_triplets_csv(val_set, out / 'val.csv')
    message = f'{len(full)} triplets ({len(train_set)} train / {len(val_set)} val)'
    if subject_disjoint:
        message += f', {train_set.dropped} dropped'
    click.echo(message)


'''==============================FEATURES=============================='''

@main.command()
@click.option('--manifest', type=IN_FILE, required=True)
@click.option('--out', type=OUT_FILE, required=True, help='Feature table CSV to write.')
@click.option('--extractor', type=click.Choice(['baseline', 'precomputed']), default='baseline',
              show_default=True)
@click.option('--precomputed', type=IN_FILE, default=None,
              help='Feature table to validate and pass through (with --extractor precomputed).')
@click.option('--image-size', type=int, default=64, show_default=True)
@click.option('--png/--no-png', default=True, show_default=True, help='Accept PNG input images.')
@click.pass_context
def features(ctx, manifest: Path, out: Path, extractor: str, precomputed: Optional[Path],
             image_size: int, png: bool) -> None:
    '''Baseline feature extraction, or validation of a precomputed table.'''
    state = _state(ctx, None)
    state.check(image_size=image_size)
    if extractor == 'precomputed':
        if precomputed is None:
            raise click.UsageError('--extractor precomputed needs --precomputed <table.csv>')
        catalog = load_manifest(manifest, check_files=False)
        table = load_feature_table(precomputed)
        validate_feature_table(table, catalog)
    else:
        catalog = load_manifest(manifest)
        table = compute_feature_table(catalog, image_size, allow_png=png, progress=state.progress)
    write_feature_table(table, out)
    click.echo(f'{len(table)} feature rows (dim {table.dim}) -> {out}')


'''==============================TRAIN=============================='''

def train_options(command):
    options = [
        click.option('--alpha', type=float, default=0.2, show_default=True, help='Triplet margin.'),
        click.option('--learning-rate', '--lr', 'learning_rate', type=float, default=0.05, show_default=True),
        click.option('--epochs', type=int, default=200, show_default=True),
        click.option('--batch-size', type=int, default=32, show_default=True),
        click.option('--shuffle/--no-shuffle', default=True, show_default=True),
        click.option('--distance', type=click.Choice(['squared', 'euclidean']), default='squared',
                     show_default=True),
        click.option('--accuracy-margin', is_flag=True, help='Count a triplet correct only past the margin.'),
        click.option('--hidden-dim', type=int, default=None, help='Add a ReLU hidden layer of this width.'),
        click.option('--normalize-output', is_flag=True),
        click.option('--identity-init', is_flag=True),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def _configs(state: State, **flags) -> Tuple[TrainConfig, HeadConfig]:
    head_fields = set(HeadConfig.model_fields)
    head = HeadConfig(**{k: v for k, v in flags.items() if k in head_fields})
    cfg = state.run.train_config(state.seed, **{k: v for k, v in flags.items() if k not in head_fields})
    return cfg, head


def _fit(state: State, cfg: TrainConfig, head_cfg: HeadConfig, train_set, features: FeatureTable,
         val_set=None, sampler=None):
    head = init_head(features.dim, features.dim, derive_seed(state.seed, 'init'),
                     identity_init=head_cfg.identity_init, hidden_dim=head_cfg.hidden_dim,
                     normalize_output=head_cfg.normalize_output)
    return train(cfg, train_set, features, head, validation=val_set, sampler=sampler,
                 progress=state.progress)


@main.command('train')
@click.option('--triplets', 'triplets_path', type=IN_FILE, required=True, help='Training triplet CSV.')
@click.option('--val', 'val_path', type=IN_FILE, default=None, help='Validation triplet CSV.')
@click.option('--features', 'features_path', type=IN_FILE, required=True)
@click.option('--out', type=OUT_FILE, required=True, help='Checkpoint JSON to write.')
@click.option('--report', type=OUT_FILE, default=None, help='Per-epoch CSV report.')
@click.option('--plot', type=OUT_FILE, default=None, help='Loss / accuracy curve image.')
@click.option('--augment', default='', help='Comma separated domains to augment each epoch (skull,face).')
@click.option('--manifest', type=IN_FILE, default=None, help='Image manifest, needed by --augment.')
@click.option('--image-size', type=int, default=64, show_default=True)
@train_options
@seed_option
@click.pass_context
def train_cmd(ctx, triplets_path: Path, val_path: Optional[Path], features_path: Path, out: Path,
              report: Optional[Path], plot: Optional[Path], augment: str, manifest: Optional[Path],
              image_size: int, seed: Optional[int], **flags) -> None:
    '''Train the skull head with the triplet loss.'''
    state = _state(ctx, seed)
    state.check(image_size=image_size)
    cfg, head_cfg = _configs(state, **flags)
    domains = [d.strip() for d in augment.split(',') if d.strip()]
    if domains and manifest is None:
        raise click.UsageError('--augment needs --manifest to find the images')
    try:
        domains = [Domain(d) for d in domains]
    except ValueError as e:
        raise click.BadParameter(str(e), param_hint='--augment') from e
    table = load_feature_table(features_path)
    train_set = read_triplets_csv(triplets_path)
    val_set = read_triplets_csv(val_path) if val_path is not None else None

    sampler = None
    if domains:
        sampler = AugmentedFeatureSampler(load_manifest(manifest), table, state.run.augment,
                                          derive_seed(state.seed, 'augment'), domains, image_size)

    checkpoint, result = _fit(state, cfg, head_cfg, train_set, table, val_set, sampler)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(checkpoint.to_bytes())
    if report is not None:
        result.write_csv(report)
    if plot is not None:
        result.plot(plot)
    message = (f'trained {cfg.epochs} epochs: loss {result.losses[-1]:.6f}, '
               f'train accuracy {result.final_train_accuracy:.4f}')
    if result.final_val_accuracy is not None:
        message += f', val accuracy {result.final_val_accuracy:.4f}'
    click.echo(message)


'''==============================EMBED=============================='''

def embed_table(head: ProjectionHead, table: FeatureTable, domain: Optional[Domain] = None,
                view: Optional[View] = None) -> GalleryIndex:
    r'''Skull rows through the trained head, face rows unchanged (frozen branch)'''
    if head.d_in != table.dim:
        raise DimMismatch(f'checkpoint expects {head.d_in}-dim features, table has dim {table.dim}')
    selected = table.select(domain, view)
    skull_rows = [i for i, key in enumerate(selected.keys) if key[1] == Domain.SKULL]
    if len(skull_rows) < len(selected) and head.d_out != table.dim:
        raise DimMismatch(f'face rows keep dim {table.dim} but the head embeds into {head.d_out}')
    matrix = np.array(selected.matrix, copy=True) if head.d_out == table.dim \
        else np.zeros((len(selected), head.d_out))
    if skull_rows:
        matrix[skull_rows] = head.embed(selected.matrix[skull_rows])
    return GalleryIndex(tuple(selected.names), tuple(k[0] for k in selected.keys),
                        tuple(k[2] for k in selected.keys), matrix)


def _domain(value: str) -> Optional[Domain]:
    return None if value == 'all' else Domain(value)


def _view(value: str) -> Optional[View]:
    return None if value == 'all' else View(value)


@main.command()
@click.option('--checkpoint', type=IN_FILE, required=True)
@click.option('--features', 'features_path', type=IN_FILE, required=True)
@click.option('--domain', type=click.Choice(['skull', 'face', 'all']), default='all', show_default=True)
@click.option('--view', type=click.Choice(['front', 'side', 'all']), default='all', show_default=True)
@click.option('--out', type=OUT_FILE, required=True, help='Embedding CSV (gallery format).')
def embed(checkpoint: Path, features_path: Path, domain: str, view: str, out: Path) -> None:
    '''Export embeddings: trained head for skulls, identity for faces.'''
    head = read_checkpoint(_read_bytes(checkpoint)).head
    index = embed_table(head, load_feature_table(features_path), _domain(domain), _view(view))
    write_gallery_csv(index, out)
    click.echo(f'{len(index)} embeddings (dim {index.dim}) -> {out}')


def _read_bytes(path: Path) -> bytes:
    if not path.is_file():
        raise MissingFile(f'file not found: {path}', path=str(path))
    return path.read_bytes()


'''==============================QUERY / EVALUATE=============================='''

@main.command('query')
@click.option('--gallery', type=IN_FILE, required=True, help='Gallery embedding CSV.')
@click.option('--probe', default=None, help='Id of the probe row in --queries (or in the gallery).')
@click.option('--vector', default=None, help='Probe embedding as comma separated numbers.')
@click.option('--queries', type=IN_FILE, default=None, help='Embedding CSV holding the probe.')
@click.option('-k', '--k', 'k', type=click.IntRange(min=1), default=10, show_default=True)
@click.option('--out', type=OUT_FILE, default=None, help='Write the ranked list JSON here instead of stdout.')
@click.option('--table', 'as_table', is_flag=True, help='Print a human-readable table.')
def query_cmd(gallery: Path, probe: Optional[str], vector: Optional[str], queries: Optional[Path],
              k: int, out: Optional[Path], as_table: bool) -> None:
    '''Rank the gallery for one probe.'''
    if (probe is None) == (vector is None):
        raise click.UsageError('give exactly one of --probe or --vector')
    index = read_gallery_csv(gallery)
    if vector is not None:
        try:
            embedding = np.array([float(v) for v in vector.split(',')])
        except ValueError as e:
            raise click.BadParameter(str(e), param_hint='--vector') from e
        query_id = 'vector'
    else:
        source = read_gallery_csv(queries) if queries is not None else index
        if probe not in source:
            raise UnknownQuery(f'unknown probe id {probe}', query_id=probe)
        embedding = source.entry(probe).embedding
        query_id = probe
    ranked = query(index, embedding, k, query_id)
    if as_table:
        click.echo(ranked.table())
    if out is not None:
        write_json(out, ranked.to_json())
    elif not as_table:
        click.echo(dumps_json(ranked.to_json()), nl=False)


def _probes(queries: GalleryIndex) -> List[Tuple[str, np.ndarray]]:
    return [(entry.gallery_id, entry.embedding) for entry in queries]


@main.command('evaluate')
@click.option('--gallery', type=IN_FILE, required=True, help='Gallery embedding CSV.')
@click.option('--queries', type=IN_FILE, required=True, help='Query embedding CSV.')
@click.option('--judgments', type=IN_FILE, default=None,
              help='JSON {query_id: [gallery_id, ...]}; default: same subject_id is relevant.')
@click.option('--distractors', type=IN_FILE, default=None, help='Extra gallery merged in.')
@click.option('--k-max', type=click.IntRange(min=1), default=30, show_default=True)
@click.option('--out', type=OUT_DIR, required=True, help='Directory for metrics.json and curves.csv.')
@click.option('--plot', is_flag=True, help='Also draw curves.png.')
def evaluate_cmd(gallery: Path, queries: Path, judgments: Optional[Path], distractors: Optional[Path],
                 k_max: int, out: Path, plot: bool) -> None:
    '''Recall@k, mAP@k and MRR@k of every query against the gallery.'''
    index = read_gallery_csv(gallery)
    if distractors is not None:
        index = merge_galleries(index, read_gallery_csv(distractors))
    probes = read_gallery_csv(queries)
    if judgments is not None:
        relevance = load_judgments(judgments)
    else:
        relevance = RelevanceJudgments.from_subjects(zip(probes.ids, probes.subject_ids), index)
    report = evaluate(index, _probes(probes), relevance, k_max)
    write_json(out / 'metrics.json', {**report.to_json(k_max), 'gallery_size': len(index)})
    report.write_curves_csv(out / 'curves.csv')
    if plot:
        report.plot_curves(out / 'curves.png', title=f'{len(probes)} queries, {len(index)} gallery faces')
    summary = report.summary(k_max)
    click.echo(f'{len(probes)} queries, gallery of {len(index)}: '
               + ', '.join(f'{name} {value:.4f}' for name, value in summary.items()))


'''==============================COMPARE=============================='''

def _named_paths(values: Tuple[str, ...]) -> Dict[str, Path]:
    named = {}
    for value in values:
        name, sep, path = value.partition('=')
        if not sep or not name or not path:
            raise click.BadParameter(f'expected name=path, got {value!r}', param_hint='--features')
        if name in named:
            raise click.BadParameter(f'feature source {name!r} given twice', param_hint='--features')
        named[name] = Path(path)
    return named


@main.command()
@click.option('--triplets', 'triplets_path', type=IN_FILE, required=True, help='Training triplet CSV.')
@click.option('--val', 'val_path', type=IN_FILE, required=True, help='Validation triplet CSV.')
@click.option('--features', 'sources', multiple=True, required=True,
              help='name=path of a feature table; repeat for every backbone compared.')
@click.option('--gallery-view', type=click.Choice(['front', 'side', 'all']), default='front',
              show_default=True, help='Face views placed in the evaluation gallery.')
@click.option('--k-max', type=click.IntRange(min=1), default=30, show_default=True)
@click.option('--out', type=OUT_DIR, required=True, help='Directory for comparison.csv / .json.')
@train_options
@seed_option
@click.pass_context
def compare(ctx, triplets_path: Path, val_path: Path, sources: Tuple[str, ...], gallery_view: str,
            k_max: int, out: Path, seed: Optional[int],
            **flags) -> None:
    '''Train and score one head per feature source, side by side.'''
    state = _state(ctx, seed)
    cfg, head_cfg = _configs(state, **flags)
    train_set = read_triplets_csv(triplets_path)
    val_set = read_triplets_csv(val_path)
    header = ['model', 'train_accuracy', 'val_accuracy',
              f'recall@{k_max}', f'map@{k_max}', f'mrr@{k_max}']
    rows = []
    for name, path in _named_paths(sources).items():
        table = load_feature_table(path)
        checkpoint, result = _fit(state, cfg, head_cfg, train_set, table, val_set)
        gallery = embed_table(checkpoint.head, table, Domain.FACE, _view(gallery_view))
        probes = embed_table(checkpoint.head, table, Domain.SKULL)
        relevance = RelevanceJudgments.from_subjects(zip(probes.ids, probes.subject_ids), gallery)
        summary = evaluate(gallery, _probes(probes), relevance, k_max).summary(k_max)
        rows.append([name, result.final_train_accuracy, result.final_val_accuracy,
                     *summary.values()])
        logger.info('%s: %s', name, ', '.join(f'{k} {v:.4f}' for k, v in summary.items()))
    write_csv(out / 'comparison.csv', header, rows)
    write_json(out / 'comparison.json', [dict(zip(header, row)) for row in rows])
    width = max(len(h) for h in header)
    click.echo('  '.join(f'{h:>{width}}' for h in header))
    for row in rows:
        click.echo('  '.join(f'{v:>{width}}' if isinstance(v, str) else f'{v:>{width}.4f}' for v in row))


if __name__ == '__main__':
    main()
