# Copyright (c) 2026  The lmctree authors
# Licensed under the MIT license, see LICENSE.txt.
"""
Tabular datasets: CSV ingestion, the train/test subsampling protocol, the
quantile-to-normal preprocessing, the class-ratio split used for model
merging, and synthetic Gaussian blobs.

A dataset CSV has a header row and the final column must be named `label`
with non-negative integer class indices.
"""

import collections
import logging
import os
import re

import numpy as np
import pandas as pd
from scipy.special import ndtri

from . import utils
from .errors import DataError

logger = logging.getLogger(__name__)

#: Above this many rows the protocol draws a fixed number of train and test
#: rows, below it the rows are divided into halves.
SUBSAMPLE_THRESHOLD = 20000
SUBSAMPLE_SIZE = 10000

#: Seed of the class-ratio split. It is fixed so that the split does not
#: change with the training seeds.
DEFAULT_SPLIT_SEED = 0

_INTEGER_LABEL = re.compile(r'^\s*\+?\d+\s*$')


class Dataset(object):
  """
  # Attributes
  features (np.ndarray): `(N, F)` float64 matrix.
  labels (np.ndarray): `(N,)` integer class indices.
  classes (int): The number of classes C, at least `labels.max() + 1`.
  feature_names (tuple of str):
  provenance (str): Where the rows came from (a file hash or a generator
    seed).
  """

  __slots__ = ('features', 'labels', 'classes', 'feature_names', 'provenance')

  def __init__(self, features, labels, classes=None, feature_names=None, provenance=''):
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2 or labels.shape != (features.shape[0],):
      raise DataError('features {} and labels {} do not match'.format(features.shape, labels.shape))
    if len(labels) and labels.min() < 0:
      raise DataError('labels must be non-negative')
    inferred = int(labels.max()) + 1 if len(labels) else 0
    if classes is None:
      classes = inferred
    elif classes < inferred:
      raise DataError('{} classes given but the largest label is {}'.format(classes, inferred - 1))
    if feature_names is None:
      feature_names = tuple('x{}'.format(i) for i in range(features.shape[1]))
    self.features = features
    self.labels = labels
    self.classes = int(classes)
    self.feature_names = tuple(feature_names)
    self.provenance = provenance

  def __len__(self):
    return len(self.labels)

  def __repr__(self):
    return 'Dataset(rows={}, features={}, classes={}, provenance={!r})'.format(
      len(self), self.features.shape[1], self.classes, self.provenance)

  @property
  def num_features(self):
    return self.features.shape[1]

  def subset(self, index, tag=None):
    provenance = self.provenance if tag is None else '{}:{}'.format(self.provenance, tag)
    return Dataset(self.features[index], self.labels[index], self.classes,
                   self.feature_names, provenance)

  def replace_features(self, features):
    return Dataset(features, self.labels, self.classes, self.feature_names, self.provenance)


def load_csv(path, classes=None):
  """
  Reads a dataset from a CSV file.

  # Parameters
  path (str): The CSV file.
  classes (int): Overrides the class count, which is otherwise inferred as
    the largest label plus one.

  # Raises
  DataError: On a missing header or `label` column, ragged rows, non-numeric
    features or non-integer labels.
  """

  try:
    frame = pd.read_csv(path, header=None, dtype=str, keep_default_na=False)
  except pd.errors.EmptyDataError:
    raise DataError('{}: file is empty'.format(path))
  except pd.errors.ParserError as exc:
    raise DataError('{}: ragged rows ({})'.format(path, str(exc).strip()))

  header = [str(x).strip() for x in frame.iloc[0]]
  if header[-1] != 'label':
    raise DataError('{}: the last header column must be "label", got {!r}'.format(path, header[-1]))
  rows = frame.iloc[1:]
  if len(rows) == 0:
    raise DataError('{}: no data rows'.format(path))
  if rows.isnull().values.any():
    raise DataError('{}: ragged rows (some rows have fewer than {} fields)'.format(path, len(header)))

  try:
    features = rows.iloc[:, :-1].astype(np.float64).values
  except ValueError as exc:
    raise DataError('{}: non-numeric feature value ({})'.format(path, exc))
  if not np.all(np.isfinite(features)):
    raise DataError('{}: non-finite feature value'.format(path))

  raw_labels = rows.iloc[:, -1]
  bad = ~raw_labels.str.match(_INTEGER_LABEL.pattern)
  if bad.any():
    raise DataError('{}: non-integer label {!r}'.format(path, raw_labels[bad].iloc[0]))
  labels = np.array([int(x) for x in raw_labels], dtype=np.int64)

  dataset = Dataset(features, labels, classes, header[:-1], 'file:' + utils.hash_file(path))
  logger.debug('loaded %s: %r', path, dataset)
  return dataset


def save_csv(dataset, path):
  """
  Writes *dataset* in the format read by #load_csv(), floats with 17
  significant digits.
  """

  frame = pd.DataFrame(dataset.features, columns=list(dataset.feature_names))
  frame['label'] = dataset.labels
  dirname = os.path.dirname(path)
  if dirname and not os.path.isdir(dirname):
    os.makedirs(dirname)
  frame.to_csv(path, index=False, float_format='%.17g', lineterminator='\n')


class QuantileTransform(object):
  """
  Maps every feature through its empirical CDF on the training rows and the
  inverse standard normal CDF, then standardizes with the training mean and
  standard deviation.

  A reference value of rank `r` (1-based, ties get their average rank) sits
  at CDF position `r / (n + 1)`; values in between are interpolated
  linearly and values outside the training range are clamped to the first
  and last position.
  """

  def __init__(self, references, positions, mean, scale):
    self.references = [np.asarray(x, dtype=np.float64) for x in references]
    self.positions = [np.asarray(x, dtype=np.float64) for x in positions]
    self.mean = np.asarray(mean, dtype=np.float64)
    self.scale = np.asarray(scale, dtype=np.float64)

  @classmethod
  def fit(cls, train):
    if len(train) == 0:
      raise DataError('can not fit a transform on an empty dataset')
    n = len(train)
    references, positions = [], []
    for column in train.features.T:
      values, counts = np.unique(column, return_counts=True)
      last_rank = np.cumsum(counts)
      average_rank = last_rank - (counts - 1) / 2.0
      references.append(values)
      positions.append(average_rank / (n + 1.0))
    qt = cls(references, positions, np.zeros(len(references)), np.ones(len(references)))
    normal = qt._to_normal(train.features)
    qt.mean = normal.mean(axis=0)
    qt.scale = normal.std(axis=0)
    for index in np.flatnonzero(qt.scale == 0):
      logger.warning('feature %s has zero variance, it is mapped to zeros', train.feature_names[index])
    return qt

  def _to_normal(self, features):
    result = np.empty_like(features, dtype=np.float64)
    for i, (values, positions) in enumerate(zip(self.references, self.positions)):
      result[:, i] = ndtri(np.interp(features[:, i], values, positions))
    return result

  def apply(self, dataset):
    if dataset.num_features != len(self.references):
      raise DataError('transform was fit on {} features, got {}'.format(
        len(self.references), dataset.num_features))
    normal = self._to_normal(dataset.features)
    constant = self.scale == 0
    scale = np.where(constant, 1.0, self.scale)
    standardized = (normal - self.mean) / scale
    standardized[:, constant] = 0.0
    return dataset.replace_features(standardized)

  def to_dict(self):
    return collections.OrderedDict([
      ('references', [x for x in self.references]),
      ('positions', [x for x in self.positions]),
      ('mean', self.mean),
      ('scale', self.scale)])

  @classmethod
  def from_dict(cls, data):
    return cls(data['references'], data['positions'], data['mean'], data['scale'])


def fit_quantile_transform(train):
  return QuantileTransform.fit(train)


def apply_transform(qt, dataset):
  return qt.apply(dataset)


def subsample_protocol(full, seed):
  """
  Draws disjoint train and test rows: 10,000 each if the dataset has at
  least 20,000 rows, otherwise the rows are divided into halves.
  """

  n = len(full)
  if n < 2:
    raise DataError('need at least 2 rows to split, got {}'.format(n))
  order = utils.random_stream(seed, utils.STREAM_SUBSAMPLE).permutation(n)
  if n >= SUBSAMPLE_THRESHOLD:
    train_index, test_index = order[:SUBSAMPLE_SIZE], order[SUBSAMPLE_SIZE:2 * SUBSAMPLE_SIZE]
  else:
    train_index, test_index = order[:n // 2], order[n // 2:]
  return full.subset(np.sort(train_index), 'train'), full.subset(np.sort(test_index), 'test')


def prepare(full, seed):
  """
  Applies #subsample_protocol() and a #QuantileTransform fit on the train
  rows to both parts.

  # Returns
  (Dataset, Dataset, QuantileTransform)
  """

  train, test = subsample_protocol(full, seed)
  qt = fit_quantile_transform(train)
  return apply_transform(qt, train), apply_transform(qt, test), qt


def save_prepared(directory, train, test, qt, meta):
  """
  Writes the preprocessed rows as `train.csv` and `test.csv` plus a
  `prepared.json` sidecar with the transform references and *meta*.
  """

  save_csv(train, os.path.join(directory, 'train.csv'))
  save_csv(test, os.path.join(directory, 'test.csv'))
  sidecar = collections.OrderedDict(meta)
  sidecar['transform'] = qt.to_dict()
  utils.write_json(os.path.join(directory, 'prepared.json'), sidecar)


def class_ratio_split(train, seed=DEFAULT_SPLIT_SEED, ratio=0.8):
  """
  Splits a binary dataset into two disjoint parts: the first holds *ratio*
  of the negatives and `1 - ratio` of the positives, the second the rest.

  # Raises
  DataError: If a label is not 0 or 1.
  """

  if train.classes > 2 or (len(train) and train.labels.max() > 1):
    raise DataError('class-ratio split requires binary labels')
  rng = utils.random_stream(seed, utils.STREAM_SPLIT)
  negatives = rng.permutation(np.flatnonzero(train.labels == 0))
  positives = rng.permutation(np.flatnonzero(train.labels == 1))
  k_neg = int(np.floor(ratio * len(negatives) + 0.5))
  k_pos = int(np.floor((1.0 - ratio) * len(positives) + 0.5))
  first = np.sort(np.concatenate([negatives[:k_neg], positives[:k_pos]]))
  second = np.sort(np.concatenate([negatives[k_neg:], positives[k_pos:]]))
  return train.subset(first, 'split1'), train.subset(second, 'split2')


def synth_gaussian_blobs(n, features, classes, separation, seed):
  """
  Generates *n* rows in *classes* balanced Gaussian clusters with unit
  variance. With at most as many classes as features the cluster centers
  lie on orthonormal directions, so every two centers are *separation*
  apart. With more classes the centers are random directions at the same
  distance `separation / sqrt(2)` from the origin; their pairwise distances
  then vary.
  """

  if n < classes:
    raise DataError('need at least one row per class ({} rows, {} classes)'.format(n, classes))
  if classes < 1 or features < 1:
    raise DataError('need at least one class and one feature, got {} and {}'.format(classes, features))
  if separation < 0:
    raise ValueError('separation must be non-negative, got {!r}'.format(separation))
  rng = utils.random_stream(seed, utils.STREAM_SYNTH)
  if classes <= features:
    directions, _ = np.linalg.qr(rng.standard_normal((features, classes)))
    directions = directions.T
  else:
    directions = rng.standard_normal((classes, features))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
  centers = directions * (separation / np.sqrt(2.0))
  labels = np.arange(n) % classes
  labels = labels[rng.permutation(n)]
  X = centers[labels] + rng.standard_normal((n, features))
  provenance = 'synth:n={},f={},c={},sep={},seed={}'.format(n, features, classes, separation, seed)
  return Dataset(X, labels, classes, provenance=provenance)
