# Copyright (c) 2026  The lmctree authors
# Licensed under the MIT license, see LICENSE.txt.
"""
End-to-end experiment pipelines shared by the command-line commands: data
preparation, training with learning-rate selection and checkpointing, the
seed-pair barrier matrix, the depth and tree-count sweep and the split-data
merging protocol.
"""

import collections
import logging
import multiprocessing
import os

import numpy as np
import pandas as pd

from . import data as _data, utils
from .config import ExperimentConfig, FORMAT_VERSION
from .evaluation import METHODS, barrier_frame, barrier_suite, curve_frame, evaluate, summarize
from .matching import sample_rows
from .model import save_checkpoint
from .training import best_run, train_candidates

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ['seed', 'split', 'lr', 'epoch', 'train_accuracy', 'loss']

TrainedModel = collections.namedtuple('TrainedModel', 'params lr history seed split path')


def load_full_dataset(config):
  if config.data:
    return _data.load_csv(config.data, config.classes)
  synth = config.synth
  return _data.synth_gaussian_blobs(synth['n'], synth['features'], synth['classes'],
                                    synth['separation'], synth['seed'])


def prepare_data(config, cache=True):
  """
  Loads the configured dataset and applies the subsampling protocol and the
  quantile preprocessing. With *cache* the preprocessed rows are written to
  `<out>/data/`.

  # Returns
  (Dataset, Dataset): The train and test rows.
  """

  full = load_full_dataset(config)
  train, test, qt = _data.prepare(full, config.data_seed)
  logger.info('data %s: %d train rows, %d test rows', full.provenance, len(train), len(test))
  if cache:
    meta = collections.OrderedDict([
      ('format_version', FORMAT_VERSION), ('provenance', full.provenance),
      ('data_seed', config.data_seed), ('config_hash', config.hash())])
    _data.save_prepared(os.path.join(config.out, 'data'), train, test, qt, meta)
  return train, test


def checkpoint_path(config, split, seed):
  return os.path.join(config.out, 'ckpt-{}-seed{}.json'.format(split, seed))


def history_frame(runs, seed, split):
  rows = []
  for run in runs:
    for record in run.history:
      rows.append([seed, split, run.lr, record.epoch, record.train_accuracy, record.loss])
  return pd.DataFrame(rows, columns=HISTORY_COLUMNS)


def train_model(config, dataset, seed, split='full', write=True):
  """
  Trains one model per candidate learning rate, keeps the best and writes it
  to `<out>/ckpt-<split>-seed<seed>.json`.

  # Returns
  (TrainedModel, pandas.DataFrame): The kept model and the training history
  of all candidates.
  """

  spec = config.spec(dataset.num_features, dataset.classes)
  runs = train_candidates(spec, dataset, config.train_config(seed))
  run = best_run(runs)
  path = checkpoint_path(config, split, seed) if write else None
  if write:
    meta = collections.OrderedDict([
      ('seed', seed), ('split', split), ('lr', run.lr),
      ('train_accuracy', run.history[-1].train_accuracy),
      ('data', dataset.provenance), ('config_hash', config.hash())])
    save_checkpoint(run.params, path, meta)
  logger.info('seed %d (%s): lr=%g, train accuracy %.3f', seed, split, run.lr,
              run.history[-1].train_accuracy)
  return TrainedModel(run.params, run.lr, run.history, seed, split, path), history_frame(runs, seed, split)


def _samples(config, train):
  if config.matching != 'am':
    return None
  return sample_rows(train, config.samples, config.data_seed)


def run_pair(config_values, seed_a, seed_b, train, test):
  """
  Trains the models of one seed pair and evaluates every alignment method.
  Module-level so that it can run in a worker process.

  # Returns
  (pandas.DataFrame, pandas.DataFrame): Curve rows and barrier rows.
  """

  config = ExperimentConfig(config_values)
  model_a, _ = train_model(config, train, seed_a)
  model_b, _ = train_model(config, train, seed_b)
  entries = barrier_suite(model_a.params, model_b.params, collections.OrderedDict(
    [('train', train), ('test', test)]), config.matching, METHODS, config.lambda_grid(),
    _samples(config, train), config.budget)
  return (curve_frame(entries, seed_a=seed_a, seed_b=seed_b),
          barrier_frame(entries, seed_a=seed_a, seed_b=seed_b))


def _map_pairs(function, config, pairs, *args):
  arguments = [(config.to_dict(), seed_a, seed_b) + args for seed_a, seed_b in pairs]
  if config.jobs > 1 and len(arguments) > 1:
    with multiprocessing.Pool(min(config.jobs, len(arguments))) as pool:
      return pool.starmap(function, arguments)
  return [function(*a) for a in arguments]


def run_matrix(config, train, test):
  """
  Runs #run_pair() for every configured seed pair; pairs are assembled in
  configuration order regardless of the number of jobs.

  # Returns
  (pandas.DataFrame, pandas.DataFrame, dict): All curve rows, all barrier
  rows and the mean/std summary.
  """

  results = _map_pairs(run_pair, config, config.seed_pairs, train, test)
  curves = pd.concat([r[0] for r in results], ignore_index=True)
  barriers = pd.concat([r[1] for r in results], ignore_index=True)
  return curves, barriers, summarize(barriers)


def merge_split_pair(config_values, seed_a, seed_b, train, test):
  """
  Trains A on the first and B on the second class-ratio split, aligns them
  and evaluates the interpolation; also trains a reference model with
  *seed_a* on the full training rows.
  """

  config = ExperimentConfig(config_values)
  split1, split2 = _data.class_ratio_split(train, config.split_seed)
  model_a, _ = train_model(config, split1, seed_a, 'split1')
  model_b, _ = train_model(config, split2, seed_b, 'split2')
  reference, _ = train_model(config, train, seed_a, 'full')
  reference_accuracy = evaluate(reference.params, test)[0]
  entries = barrier_suite(model_a.params, model_b.params, collections.OrderedDict(
    [('train', train), ('test', test)]), config.matching, METHODS, config.lambda_grid(),
    _samples(config, train), config.budget)

  rows = []
  for entry in entries:
    curve = entry.curves['test']
    interior = (curve.lambdas > 0.0) & (curve.lambdas < 1.0)
    best = int(np.flatnonzero(interior)[np.argmax(curve.accuracy[interior])]) if interior.any() else 0
    rows.append(collections.OrderedDict([
      ('seed_a', seed_a), ('seed_b', seed_b), ('method', entry.method),
      ('matching', entry.matching), ('test_accuracy_a', curve.accuracy_a),
      ('test_accuracy_b', curve.accuracy_b),
      ('best_lambda', float(curve.lambdas[best])),
      ('best_interior_test_accuracy', float(curve.accuracy[best])),
      ('improved', bool(curve.accuracy[best] > max(curve.accuracy_a, curve.accuracy_b))),
      ('reference_test_accuracy', reference_accuracy)]))
  return curve_frame(entries, seed_a=seed_a, seed_b=seed_b), pd.DataFrame(rows)


def run_merge_split(config, train, test):
  """
  Runs #merge_split_pair() for every seed pair.

  # Returns
  (pandas.DataFrame, pandas.DataFrame, dict): Curve rows, one row per pair
  and method, and a per-method summary.
  """

  results = _map_pairs(merge_split_pair, config, config.seed_pairs, train, test)
  curves = pd.concat([r[0] for r in results], ignore_index=True)
  pairs = pd.concat([r[1] for r in results], ignore_index=True)
  summary = collections.OrderedDict()
  for method, group in pairs.groupby('method', sort=False):
    summary[method] = collections.OrderedDict([
      ('pairs', int(len(group))),
      ('improved_pairs', int(group['improved'].sum())),
      ('best_interior_test_accuracy_mean', float(group['best_interior_test_accuracy'].mean())),
      ('reference_test_accuracy_mean', float(group['reference_test_accuracy'].mean()))])
  return curves, pairs, summary


SWEEP_SUMMARY_COLUMNS = ['depth', 'trees', 'method', 'split', 'barrier_mean', 'barrier_std',
                         'loss_barrier_mean', 'loss_barrier_std', 'pairs']


def sweep_directory(config, depth, trees):
  return os.path.join(config.out, 'sweep', 'D{}-M{}'.format(depth, trees))


def run_sweep(config, train, test, depths, trees):
  """
  Runs #run_matrix() once per `(depth, trees)` cell of the product of
  *depths* and *trees*, in that order. The checkpoints of a cell go to
  #sweep_directory().

  # Returns
  (pandas.DataFrame, pandas.DataFrame, pandas.DataFrame): Curve rows and
  barrier rows with leading `depth` and `trees` columns, and one summary row
  per cell, method and split.
  """

  depths, trees = list(depths), list(trees)
  if not depths or not trees:
    raise ValueError('a sweep needs at least one depth and one tree count')
  all_curves, all_barriers, rows = [], [], []
  for depth in depths:
    for count in trees:
      cell = config.replace(depth=depth, trees=count, out=sweep_directory(config, depth, count))
      logger.info('sweep cell D=%d, M=%d', depth, count)
      curves, barriers, summary = run_matrix(cell, train, test)
      for frame, target in ((curves, all_curves), (barriers, all_barriers)):
        frame.insert(0, 'trees', count)
        frame.insert(0, 'depth', depth)
        target.append(frame)
      for method, splits in summary.items():
        for split, values in splits.items():
          rows.append([depth, count, method, split] + [values[k] for k in SWEEP_SUMMARY_COLUMNS[4:]])
  return (pd.concat(all_curves, ignore_index=True), pd.concat(all_barriers, ignore_index=True),
          pd.DataFrame(rows, columns=SWEEP_SUMMARY_COLUMNS))


def meta_path(filename):
  return os.path.splitext(filename)[0] + '.meta.json'


def write_frame(frame, filename, config):
  """
  Writes *frame* as CSV (floats with 17 significant digits) and next to it
  the #meta_path() sidecar with the format version, the configuration hash,
  the columns and the row count.
  """

  dirname = os.path.dirname(filename)
  if dirname and not os.path.isdir(dirname):
    os.makedirs(dirname)
  frame.to_csv(filename, index=False, float_format='%.17g', lineterminator='\n')
  utils.write_json(meta_path(filename), collections.OrderedDict([
    ('format_version', FORMAT_VERSION), ('config_hash', config.hash()),
    ('file', os.path.basename(filename)), ('columns', [str(c) for c in frame.columns]),
    ('rows', int(len(frame)))]))
