# Copyright (c) 2026  The lmctree authors
# Licensed under the MIT license, see LICENSE.txt.

import collections
import functools
import logging
import os
import sys

import click
import pandas as pd

from . import __version__, config as _config, experiment, oracle
from .data import class_ratio_split, save_csv, synth_gaussian_blobs
from .errors import ConfigError, DataError, LmcError, VerificationError
from .evaluation import SuiteEntry, barrier, barrier_frame, barrier_suite, curve_frame, summarize
from .invariance import count_ops, invariances_of
from .matching import Alignment, apply_alignment, match, sample_rows
from .model import ArchitectureSpec, Kind, check_same_spec, load_checkpoint, parameter_count
from .utils import write_json

EXIT_INPUT_ERROR = 1
EXIT_VERIFICATION_FAILED = 2

ARCH_CHOICES = [kind.value for kind in Kind]


def _comma_list(convert):
  def callback(ctx, param, value):
    if value is None:
      return None
    try:
      return [convert(x) for x in value.split(',') if x.strip()]
    except ValueError:
      raise click.BadParameter('expected a comma separated list, got {!r}'.format(value))
  return callback


def handle_errors(func):
  """
  Prints library errors as `error: <message>` and exits with the status
  that belongs to the error.
  """

  @functools.wraps(func)
  def wrapper(*args, **kwargs):
    ctx = click.get_current_context()
    try:
      return func(*args, **kwargs)
    except VerificationError as exc:
      click.echo('error: {}'.format(exc), err=True)
      ctx.exit(EXIT_VERIFICATION_FAILED)
    except (LmcError, ValueError, OSError) as exc:
      click.echo('error: {}'.format(exc), err=True)
      ctx.exit(EXIT_INPUT_ERROR)
  return wrapper


_EXPERIMENT_OPTIONS = collections.OrderedDict([
  ('config_file', click.option('-c', '--config', 'config_file', metavar='FILE',
    help='JSON configuration file. Its keys mirror the long option names.')),
  ('preset', click.option('--preset', default='desk', type=click.Choice(list(_config.PRESETS)),
    help='Defaults for keys missing from the configuration. Defaults to desk.')),
  ('data', click.option('--data', metavar='CSV', help='Dataset CSV with a final "label" column. '
    'Synthetic Gaussian blobs are used if omitted.')),
  ('arch', click.option('--arch', type=click.Choice(ARCH_CHOICES))),
  ('depth', click.option('--depth', type=int)),
  ('trees', click.option('--trees', type=int)),
  ('matching', click.option('--matching', type=click.Choice(['wm', 'am']))),
  ('invariances', click.option('--invariances', type=click.Choice(['naive', 'perm', 'full']))),
  ('lambda_steps', click.option('--lambda-steps', type=int, help='Intervals of the interpolation grid.')),
  ('seeds_a', click.option('--seeds-a', callback=_comma_list(int), help='Comma separated seeds of model A.')),
  ('seeds_b', click.option('--seeds-b', callback=_comma_list(int), help='Comma separated seeds of model B.')),
  ('lr_candidates', click.option('--lr-candidates', callback=_comma_list(float),
    help='Comma separated candidate learning rates.')),
  ('epochs', click.option('--epochs', type=int)),
  ('batch_size', click.option('--batch-size', type=int)),
  ('jobs', click.option('--jobs', type=int, help='Worker processes for seed pairs.')),
  ('out', click.option('-o', '--out', metavar='DIRECTORY', help='Output directory.')),
])


def experiment_options(func=None, exclude=()):
  """
  Adds the shared experiment options to a command, except those named in
  *exclude*. Usable with and without arguments.
  """

  def decorator(func):
    for name, option in reversed(list(_EXPERIMENT_OPTIONS.items())):
      if name not in exclude:
        func = option(func)
    return func

  return decorator(func) if func is not None else decorator


def _load_config(config_file, preset, **overrides):
  return _config.load_config(config_file, preset, overrides)


def _write_summary(filename, config, payload):
  data = collections.OrderedDict([('format_version', _config.FORMAT_VERSION),
                                  ('config_hash', config.hash())])
  data.update(payload)
  write_json(filename, data)


def _echo_barriers(barriers):
  for (method, split), group in barriers.groupby(['method', 'split'], sort=False):
    values = group['barrier']
    click.echo('  {:<6} {:<6} barrier {:8.3f} +- {:.3f}  (loss barrier {:.4f})'.format(
      method, split, values.mean(), values.std(ddof=0), group['loss_barrier'].mean()))


@click.group()
@click.version_option(__version__)
@click.option('-v', '--verbose', count=True, help='Log INFO (-v) or DEBUG (-vv) records.')
def cli(verbose):
  """
  Train soft tree ensembles, align two of them through tree permutation,
  subtree flips and splitting order, and measure the barrier along their
  linear interpolation.
  """

  level = {0: logging.WARNING, 1: logging.INFO}.get(verbose, logging.DEBUG)
  logging.basicConfig(level=level, format='%(levelname)s [%(name)s]: %(message)s')
  logging.getLogger('lmctree').setLevel(level)


@cli.command()
@experiment_options
@click.option('--split-data/--no-split-data', default=None,
  help='Train seeds A on the first and seeds B on the second class-ratio split.')
@handle_errors
def train(config_file, preset, split_data, **overrides):
  """
  Train one checkpoint per seed. For every seed each candidate learning
  rate is tried and the run with the best final training accuracy is kept.
  Writes `ckpt-<split>-seed<seed>.json` and `history.csv` to the output
  directory.
  """

  config = _load_config(config_file, preset, split_data=split_data, **overrides)
  train_set, _ = experiment.prepare_data(config)
  if config.split_data:
    split1, split2 = class_ratio_split(train_set, config.split_seed)
    jobs = [(seed, 'split1', split1) for seed in config.seeds_a]
    jobs += [(seed, 'split2', split2) for seed in config.seeds_b]
  else:
    seeds = list(collections.OrderedDict.fromkeys(list(config.seeds_a) + list(config.seeds_b)))
    jobs = [(seed, 'full', train_set) for seed in seeds]

  histories = []
  for seed, split, dataset in jobs:
    model, history = experiment.train_model(config, dataset, seed, split)
    histories.append(history)
    click.echo('seed {} ({}): lr={:g}, train accuracy {:.3f} -> {}'.format(
      seed, split, model.lr, model.history[-1].train_accuracy, model.path))
  experiment.write_frame(pd.concat(histories, ignore_index=True), os.path.join(config.out, 'history.csv'),
                         config)


@cli.command('match')
@click.argument('ckpt_a', metavar='CKPT_A')
@click.argument('ckpt_b', metavar='CKPT_B')
@experiment_options
@click.option('--samples', type=int, help='Rows compared by activation matching (default 512).')
@click.option('--alignment', 'alignment_file', metavar='FILE',
  help='Where to write the alignment. Defaults to <out>/alignment.json.')
@handle_errors
def match_(ckpt_a, ckpt_b, config_file, preset, samples, alignment_file, **overrides):
  """
  Align the trees of CKPT_A to those of CKPT_B.
  """

  config = _load_config(config_file, preset, samples=samples, **overrides)
  A, _ = load_checkpoint(ckpt_a)
  B, _ = load_checkpoint(ckpt_b)
  check_same_spec(A, B)
  rows = None
  if config.matching == 'am' and config.invariances != 'naive':
    train_set, _ = experiment.prepare_data(config, cache=False)
    rows = sample_rows(train_set, config.samples, config.data_seed)
  alignment = match(A, B, config.matching, config.invariances, rows, config.budget)
  alignment_file = alignment_file or os.path.join(config.out, 'alignment.json')
  alignment.save(alignment_file, config.hash())
  click.echo('{} ({}): p = {}'.format(alignment.method, alignment.invariances, alignment.p.tolist()))
  click.echo('  non-identity operations: {} of {} trees -> {}'.format(
    int((alignment.q != 0).sum()), len(alignment.q), alignment_file))


@cli.command('barrier')
@click.argument('ckpt_a', metavar='CKPT_A', required=False)
@click.argument('ckpt_b', metavar='CKPT_B', required=False)
@experiment_options
@click.option('--alignment', 'alignment_file', metavar='FILE',
  help='Evaluate this alignment instead of computing naive, perm and full.')
@click.option('--matrix', is_flag=True,
  help='Train and evaluate every seed pair end to end instead of two checkpoints.')
@handle_errors
def barrier_(ckpt_a, ckpt_b, config_file, preset, alignment_file, matrix, **overrides):
  """
  Evaluate the barrier between CKPT_A and CKPT_B on the train and test rows.
  Writes `report.csv` (one row per grid point), `barriers.csv` and
  `summary.json`. With --matrix every configured seed pair is trained and
  evaluated and the summary holds the mean and standard deviation over
  pairs.
  """

  config = _load_config(config_file, preset, **overrides)
  train_set, test_set = experiment.prepare_data(config, cache=matrix)
  if matrix:
    curves, barriers, summary = experiment.run_matrix(config, train_set, test_set)
  else:
    if not (ckpt_a and ckpt_b):
      raise ConfigError('CKPT_A and CKPT_B are required unless --matrix is given')
    A, _ = load_checkpoint(ckpt_a)
    B, _ = load_checkpoint(ckpt_b)
    check_same_spec(A, B)
    datasets = collections.OrderedDict([('train', train_set), ('test', test_set)])
    if alignment_file:
      alignment = Alignment.load(alignment_file)
      aligned = apply_alignment(A, alignment, config.budget)
      curves_by_split = collections.OrderedDict(
        (split, barrier(aligned, B, ds, config.lambda_grid())) for split, ds in datasets.items())
      entries = [SuiteEntry(alignment.invariances, alignment.method, alignment, curves_by_split)]
    else:
      rows = sample_rows(train_set, config.samples, config.data_seed) if config.matching == 'am' else None
      entries = barrier_suite(A, B, datasets, config.matching, grid=config.lambda_grid(),
                              samples=rows, budget=config.budget)
    curves, barriers = curve_frame(entries), barrier_frame(entries)
    summary = summarize(barriers)

  experiment.write_frame(curves, os.path.join(config.out, 'report.csv'), config)
  experiment.write_frame(barriers, os.path.join(config.out, 'barriers.csv'), config)
  _write_summary(os.path.join(config.out, 'summary.json'), config, [
    ('matching', config.matching), ('pairs', config.seed_pairs if matrix else None),
    ('barriers', summary)])
  click.echo('barriers ({} matching):'.format(config.matching))
  _echo_barriers(barriers)


@cli.command('merge-split')
@experiment_options
@handle_errors
def merge_split(config_file, preset, **overrides):
  """
  Train model A on a split with 80% of the negatives and 20% of the
  positives and model B on the complement, align them and evaluate the
  interpolation on the test rows, next to a reference model trained on all
  training rows.
  """

  config = _load_config(config_file, preset, **overrides)
  train_set, test_set = experiment.prepare_data(config)
  if train_set.classes != 2:
    raise DataError('merge-split requires a binary dataset, got {} classes'.format(train_set.classes))
  curves, pairs, summary = experiment.run_merge_split(config, train_set, test_set)
  experiment.write_frame(curves, os.path.join(config.out, 'merge-split.csv'), config)
  experiment.write_frame(pairs, os.path.join(config.out, 'merge-split-pairs.csv'), config)
  _write_summary(os.path.join(config.out, 'merge-split-summary.json'), config, [
    ('matching', config.matching), ('pairs', config.seed_pairs), ('methods', summary)])
  for method, values in summary.items():
    click.echo('  {:<6} interior improvement in {} of {} pairs, best interior test accuracy '
      '{:.3f} (reference {:.3f})'.format(method, values['improved_pairs'], values['pairs'],
      values['best_interior_test_accuracy_mean'], values['reference_test_accuracy_mean']))


@cli.command('sweep')
@experiment_options(exclude=('depth', 'trees'))
@click.option('--depths', callback=_comma_list(int),
  help='Comma separated tree depths. Defaults to the configured depth.')
@click.option('--trees', 'tree_counts', callback=_comma_list(int),
  help='Comma separated tree counts. Defaults to the configured count.')
@handle_errors
def sweep(config_file, preset, depths, tree_counts, **overrides):
  """
  Run the seed-pair barrier matrix for every combination of --depths and
  --trees. Writes `sweep.csv` (grid points), `sweep-barriers.csv`,
  `sweep-summary.csv` (one row per depth, tree count, method and split) and
  `sweep-summary.json`; the checkpoints of each combination go to
  `sweep/D<depth>-M<trees>/`.
  """

  config = _load_config(config_file, preset, **overrides)
  depths = depths or [config.depth]
  tree_counts = tree_counts or [config.trees]
  if any(x < 1 for x in list(depths) + list(tree_counts)):
    raise ConfigError('depths and tree counts must be positive')
  train_set, test_set = experiment.prepare_data(config)
  curves, barriers, cells = experiment.run_sweep(config, train_set, test_set, depths, tree_counts)
  experiment.write_frame(curves, os.path.join(config.out, 'sweep.csv'), config)
  experiment.write_frame(barriers, os.path.join(config.out, 'sweep-barriers.csv'), config)
  experiment.write_frame(cells, os.path.join(config.out, 'sweep-summary.csv'), config)
  _write_summary(os.path.join(config.out, 'sweep-summary.json'), config, [
    ('matching', config.matching), ('pairs', config.seed_pairs), ('depths', depths),
    ('trees', tree_counts), ('cells', cells.to_dict(orient='records'))])
  click.echo('barriers ({} matching):'.format(config.matching))
  for row in cells.itertuples(index=False):
    click.echo('  D={:<2} M={:<4} {:<6} {:<6} barrier {:8.3f} +- {:.3f}'.format(
      row.depth, row.trees, row.method, row.split, row.barrier_mean, row.barrier_std))


@cli.command()
@click.option('-o', '--output', metavar='CSV', required=True)
@click.option('-n', '--rows', default=4000, show_default=True)
@click.option('--features', default=8, show_default=True)
@click.option('--classes', default=2, show_default=True)
@click.option('--separation', default=2.0, show_default=True,
  help='Distance between any two class centers, in noise standard deviations. With more '
  'classes than features the centers are random points at the same distance from the '
  'origin.')
@click.option('--seed', default=0, show_default=True)
@handle_errors
def synth(output, rows, features, classes, separation, seed):
  """
  Write a synthetic Gaussian-blob dataset as CSV.
  """

  dataset = synth_gaussian_blobs(rows, features, classes, separation, seed)
  save_csv(dataset, output)
  click.echo('wrote {} rows to {}'.format(len(dataset), output))


@cli.command()
@click.option('--arch', 'kinds', multiple=True, type=click.Choice(ARCH_CHOICES),
  help='Architectures to check (repeatable). Defaults to all.')
@click.option('--max-depth', default=oracle.MAX_DEPTH, show_default=True)
@click.option('--trials', default=10, show_default=True)
@click.option('--seed', default=0, show_default=True)
@click.option('--json', 'json_file', metavar='FILE', help='Also write the reports as JSON.')
@handle_errors
def verify(kinds, max_depth, trials, seed, json_file):
  """
  Check the invariance operations, the forward pass, the gradients and the
  assignment solver against brute-force references. Exits with status 2 if
  a check fails.
  """

  specs = oracle.default_specs(max_depth)
  if kinds:
    specs = [spec for spec in specs if spec.kind.value in kinds]
  reports = oracle.verify(specs, trials, seed)
  for report in reports:
    click.echo(str(report))
  if json_file:
    write_json(json_file, [report.to_dict() for report in reports])
  failed = [report for report in reports if not report.passed]
  if failed:
    raise VerificationError(failed[0])


@cli.command()
@click.option('--depth', default=2, show_default=True)
@handle_errors
def invariances(depth):
  """
  Print which invariances each architecture has and the number U of
  operations per tree.
  """

  click.echo('{:<14} {:<6} {:<9} {:<6} {}'.format('arch', 'perm', 'flip', 'order', 'U'))
  for kind in Kind:
    spec = ArchitectureSpec(kind, depth, 1, 1, 1)
    inv = invariances_of(kind)
    click.echo('{:<14} {:<6} {:<9} {:<6} {}'.format(kind.value, 'yes' if inv.permutation else 'no',
      inv.flip, 'yes' if inv.order else 'no', count_ops(spec)))


@cli.command()
@click.argument('checkpoint')
@handle_errors
def info(checkpoint):
  """
  Print the architecture, parameter count and metadata of a checkpoint.
  """

  params, meta = load_checkpoint(checkpoint)
  spec = params.spec
  per_tree, total = parameter_count(spec)
  click.echo('{}: {} D={} M={} F={} C={}'.format(checkpoint, spec.kind.value, spec.depth,
    spec.trees, spec.features, spec.classes))
  click.echo('  parameters: {} per tree, {} total'.format(per_tree, total))
  for key, value in meta.items():
    click.echo('  {}: {}'.format(key, value))


@cli.command('config')
@click.argument('filename', default=_config.DEFAULT_CONFIG_FILE)
@click.option('--init', is_flag=True, help='Write a template configuration file.')
@click.option('--preset', default='desk', type=click.Choice(list(_config.PRESETS)))
@handle_errors
def config_(filename, init, preset):
  """
  Show the effective configuration read from FILENAME, or create it with
  --init.
  """

  if init:
    if not _config.write_template(filename, preset):
      raise ConfigError('file "{}" already exists'.format(filename))
    click.echo('wrote {}'.format(filename))
    return
  config = _config.load_config(filename if os.path.isfile(filename) else None, preset)
  for key, value in config.to_dict().items():
    click.echo('{} = {!r}'.format(key, value))
  click.echo('config_hash = {}'.format(config.hash()))


def main(argv=None):
  """
  Entry point of the `lmctree` command. Usage errors exit with status 1.
  """

  try:
    return cli.main(args=argv, prog_name='lmctree', standalone_mode=False) or 0
  except click.ClickException as exc:
    exc.show()
    return EXIT_INPUT_ERROR
  except click.Abort:
    click.echo('Aborted!', err=True)
    return EXIT_INPUT_ERROR


if __name__ == '__main__':
  sys.exit(main())
