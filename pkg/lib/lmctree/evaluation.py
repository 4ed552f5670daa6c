# Copyright (c) 2026  The lmctree authors
# Licensed under the MIT license, see LICENSE.txt.
"""
Linear interpolation between two ensembles and the barrier along the path.

The interpolated model at `lam` is `lam * A + (1 - lam) * B`, so `lam = 1`
is model A. The accuracy barrier is the largest drop of the accuracy below
the straight line between the endpoint accuracies; the loss barrier is the
largest rise of the loss above the straight line between endpoint losses.
"""

import collections
import logging

import numpy as np
import pandas as pd

from .errors import DataError
from .matching import DEFAULT_SAMPLES, apply_alignment, match, sample_rows
from .model import check_same_spec, ensemble_forward
from .training import mean_cross_entropy

logger = logging.getLogger(__name__)

#: Number of intervals of the default interpolation grid.
DEFAULT_LAMBDA_STEPS = 24

METHODS = ('naive', 'perm', 'full')


def lambda_grid(steps=DEFAULT_LAMBDA_STEPS):
  if int(steps) != steps or steps < 1:
    raise ValueError('lambda steps must be >= 1, got {!r}'.format(steps))
  return np.arange(steps + 1) / float(steps)


def interpolate(A, B, lam):
  """
  Returns the ensemble with parameters `lam * A + (1 - lam) * B`.
  """

  check_same_spec(A, B)
  if not 0.0 <= lam <= 1.0:
    raise ValueError('lambda must be in [0, 1], got {!r}'.format(lam))
  return A.replace(
    lam * A.w + (1.0 - lam) * B.w,
    lam * A.b + (1.0 - lam) * B.b,
    lam * A.pi + (1.0 - lam) * B.pi)


def evaluate(params, dataset):
  """
  Returns `(accuracy, mean cross-entropy)` of *params* on *dataset*.
  """

  if len(dataset) == 0:
    raise DataError('can not evaluate on an empty dataset')
  logits = ensemble_forward(dataset.features, params)
  correct = np.argmax(logits, axis=1) == dataset.labels
  return 100.0 * np.count_nonzero(correct) / len(dataset), mean_cross_entropy(logits, dataset.labels)


class BarrierCurve(object):
  """
  Accuracy and loss along the interpolation path.

  # Attributes
  lambdas (np.ndarray): The ascending grid, containing 0 and 1.
  accuracy (np.ndarray): Accuracy in percent at every grid point.
  loss (np.ndarray): Mean cross-entropy at every grid point.
  accuracy_a, accuracy_b (float): Endpoint accuracies (`lam = 1` and 0).
  loss_a, loss_b (float): Endpoint losses.
  """

  __slots__ = ('lambdas', 'accuracy', 'loss', 'accuracy_a', 'accuracy_b', 'loss_a', 'loss_b')

  def __init__(self, lambdas, accuracy, loss, accuracy_a, accuracy_b, loss_a, loss_b):
    self.lambdas = np.asarray(lambdas, dtype=np.float64)
    self.accuracy = np.asarray(accuracy, dtype=np.float64)
    self.loss = np.asarray(loss, dtype=np.float64)
    self.accuracy_a = accuracy_a
    self.accuracy_b = accuracy_b
    self.loss_a = loss_a
    self.loss_b = loss_b

  def __repr__(self):
    return 'BarrierCurve(points={}, barrier={:.3f})'.format(len(self.lambdas), self.barrier)

  @property
  def barrier(self):
    return accuracy_barrier(self.lambdas, self.accuracy, self.accuracy_a, self.accuracy_b)

  @property
  def loss_barrier(self):
    return loss_barrier(self.lambdas, self.loss, self.loss_a, self.loss_b)

  @property
  def best_interior_accuracy(self):
    interior = (self.lambdas > 0.0) & (self.lambdas < 1.0)
    return float(self.accuracy[interior].max()) if interior.any() else float('nan')


def accuracy_barrier(lambdas, accuracy, accuracy_a, accuracy_b):
  lambdas = np.asarray(lambdas)
  expected = lambdas * accuracy_a + (1.0 - lambdas) * accuracy_b
  return float(np.max(expected - np.asarray(accuracy)))


def loss_barrier(lambdas, loss, loss_a, loss_b):
  lambdas = np.asarray(lambdas)
  expected = lambdas * loss_a + (1.0 - lambdas) * loss_b
  return float(np.max(np.asarray(loss) - expected))


def _check_grid(grid):
  grid = np.asarray(grid, dtype=np.float64)
  if grid.ndim != 1 or len(grid) == 0:
    raise ValueError('the lambda grid must be a non-empty vector')
  if grid.min() < 0.0 or grid.max() > 1.0:
    raise ValueError('lambda grid values must be in [0, 1]')
  if 0.0 not in grid or 1.0 not in grid:
    raise ValueError('the lambda grid must contain 0 and 1')
  if np.any(np.diff(grid) <= 0):
    raise ValueError('the lambda grid must be strictly ascending')
  return grid


def barrier(A_aligned, B, dataset, grid=None):
  """
  Evaluates the interpolation path between *A_aligned* and *B* on *dataset*.

  # Parameters
  grid (np.ndarray): Ascending values in `[0, 1]` including both ends.
    Defaults to #lambda_grid().

  # Returns
  BarrierCurve
  """

  check_same_spec(A_aligned, B)
  if len(dataset) == 0:
    raise DataError('can not compute a barrier on an empty dataset')
  grid = _check_grid(lambda_grid() if grid is None else grid)
  accuracy_a, loss_a = evaluate(A_aligned, dataset)
  accuracy_b, loss_b = evaluate(B, dataset)
  accuracy, loss = [], []
  for lam in grid:
    acc, ce = evaluate(interpolate(A_aligned, B, lam), dataset)
    accuracy.append(acc)
    loss.append(ce)
  curve = BarrierCurve(grid, accuracy, loss, accuracy_a, accuracy_b, loss_a, loss_b)
  logger.debug('barrier %.3f (loss barrier %.5f) on %d rows', curve.barrier, curve.loss_barrier, len(dataset))
  return curve


SuiteEntry = collections.namedtuple('SuiteEntry', 'method matching alignment curves')


def barrier_suite(A, B, datasets, matching='wm', methods=METHODS, grid=None,
                  samples=None, budget=None):
  """
  Aligns A to B once per method and evaluates the barrier on every dataset.

  # Parameters
  datasets (dict): Maps a split name (`'train'`, `'test'`) to a #Dataset.
  matching (str): `'wm'` or `'am'`.
  methods (tuple of str): Any of `'naive'` (no alignment), `'perm'` (tree
    permutation only) and `'full'` (permutation and all invariances).
  samples (np.ndarray): Rows for activation matching. Defaults to 512 rows
    of the `'train'` dataset.

  # Returns
  list of SuiteEntry: In the order of *methods*; `curves` maps split names
  to #BarrierCurve.
  """

  if matching == 'am' and samples is None:
    samples = sample_rows(datasets['train'], DEFAULT_SAMPLES)
  kwargs = {} if budget is None else {'budget': budget}
  entries = []
  for method in methods:
    alignment = match(A, B, matching, method, samples, **kwargs)
    aligned = apply_alignment(A, alignment, **kwargs)
    curves = collections.OrderedDict(
      (split, barrier(aligned, B, dataset, grid)) for split, dataset in datasets.items())
    logger.info('%s/%s: %s', matching, method, ', '.join(
      '{} barrier {:.3f}'.format(split, curve.barrier) for split, curve in curves.items()))
    entries.append(SuiteEntry(method, matching, alignment, curves))
  return entries


def curve_frame(entries, **extra):
  """
  Returns a #pandas.DataFrame with one row per grid point of every curve,
  columns `method, matching, split, lambda, accuracy, loss` preceded by the
  *extra* columns.
  """

  rows = []
  for entry in entries:
    for split, curve in entry.curves.items():
      for lam, acc, ce in zip(curve.lambdas, curve.accuracy, curve.loss):
        row = collections.OrderedDict(extra)
        row.update([('method', entry.method), ('matching', entry.matching), ('split', split),
                    ('lambda', lam), ('accuracy', acc), ('loss', ce)])
        rows.append(row)
  return pd.DataFrame(rows)


def barrier_frame(entries, **extra):
  """
  Returns one row per `(method, split)` with the endpoint values and both
  barriers.
  """

  rows = []
  for entry in entries:
    for split, curve in entry.curves.items():
      row = collections.OrderedDict(extra)
      row.update([('method', entry.method), ('matching', entry.matching), ('split', split),
                  ('accuracy_a', curve.accuracy_a), ('accuracy_b', curve.accuracy_b),
                  ('barrier', curve.barrier), ('loss_barrier', curve.loss_barrier)])
      rows.append(row)
  return pd.DataFrame(rows)


def summarize(barriers):
  """
  Aggregates a #barrier_frame() (possibly concatenated over seed pairs) into
  the mean and population standard deviation per `(method, split)`.

  # Returns
  dict: `{method: {split: {'barrier_mean', 'barrier_std', 'loss_barrier_mean',
  'loss_barrier_std', 'pairs'}}}`
  """

  summary = collections.OrderedDict()
  for (method, split), group in barriers.groupby(['method', 'split'], sort=False):
    summary.setdefault(method, collections.OrderedDict())[split] = collections.OrderedDict([
      ('barrier_mean', float(np.mean(group['barrier']))),
      ('barrier_std', float(np.std(group['barrier'], ddof=0))),
      ('loss_barrier_mean', float(np.mean(group['loss_barrier']))),
      ('loss_barrier_std', float(np.std(group['loss_barrier'], ddof=0))),
      ('pairs', int(len(group)))])
  return summary
