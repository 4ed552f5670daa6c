# Copyright (c) 2026  The lmctree authors
# Licensed under the MIT license, see LICENSE.txt.
"""
Cross-entropy loss, the analytic backward pass through the soft trees, Adam
and the mini-batch training loop with learning-rate selection.
"""

import collections
import logging

import numpy as np
from scipy.special import expit, logsumexp

from . import utils
from .errors import DataError, LmcError
from .model import EnsembleParams, accuracy, flows_from_gates, gate_arguments, init_params, sum_trees

logger = logging.getLogger(__name__)

#: Candidate learning rates tried by #select_learning_rate() by default.
DEFAULT_LEARNING_RATES = (0.01, 0.001, 0.0001)

EpochRecord = collections.namedtuple('EpochRecord', 'epoch loss train_accuracy')
TrainRun = collections.namedtuple('TrainRun', 'lr params history')


class TrainConfig(object):
  """
  Hyperparameters of a training run.

  # Attributes
  learning_rates (tuple of float): Candidates for #select_learning_rate().
  batch_size (int): Rows per mini-batch; the last batch of an epoch may be
    smaller.
  epochs (int): Number of passes over the training set.
  seed (int): Seeds the initialization and the per-epoch shuffling.
  adam_beta1, adam_beta2, adam_eps (float): Adam hyperparameters.
  """

  __slots__ = ('learning_rates', 'batch_size', 'epochs', 'seed',
               'adam_beta1', 'adam_beta2', 'adam_eps')

  def __init__(self, learning_rates=DEFAULT_LEARNING_RATES, batch_size=512,
               epochs=50, seed=0, adam_beta1=0.9, adam_beta2=0.999, adam_eps=1e-8):
    if int(batch_size) != batch_size or batch_size < 1:
      raise ValueError('batch_size must be >= 1, got {!r}'.format(batch_size))
    if int(epochs) != epochs or epochs < 1:
      raise ValueError('epochs must be >= 1, got {!r}'.format(epochs))
    for name, beta in (('adam_beta1', adam_beta1), ('adam_beta2', adam_beta2)):
      if not 0.0 < beta < 1.0:
        raise ValueError('{} must be in (0, 1), got {!r}'.format(name, beta))
    learning_rates = tuple(float(x) for x in learning_rates)
    if any(not lr > 0 for lr in learning_rates):
      raise ValueError('learning rates must be positive, got {!r}'.format(learning_rates))
    self.learning_rates = learning_rates
    self.batch_size = int(batch_size)
    self.epochs = int(epochs)
    self.seed = int(seed)
    self.adam_beta1 = float(adam_beta1)
    self.adam_beta2 = float(adam_beta2)
    self.adam_eps = float(adam_eps)

  def __repr__(self):
    return 'TrainConfig({})'.format(', '.join(
      '{}={!r}'.format(k, getattr(self, k)) for k in self.__slots__))

  def replace(self, **kwargs):
    values = dict((k, getattr(self, k)) for k in self.__slots__)
    values.update(kwargs)
    return TrainConfig(**values)


def log_softmax(logits):
  logits = np.asarray(logits, dtype=np.float64)
  return logits - logsumexp(logits, axis=-1, keepdims=True)


def cross_entropy(logits, label):
  """
  Returns `-log softmax(logits)[label]` for a single logit vector.
  """

  logits = np.asarray(logits, dtype=np.float64)
  if not 0 <= label < logits.shape[-1]:
    raise DataError('label {} out of range for {} classes'.format(label, logits.shape[-1]))
  return float(-log_softmax(logits)[label])


def mean_cross_entropy(logits, labels):
  """
  Mean cross-entropy of the rows of *logits* `(rows, C)`.
  """

  labels = np.asarray(labels)
  if len(labels) == 0:
    raise DataError('cross-entropy of an empty batch is undefined')
  if labels.min() < 0 or labels.max() >= logits.shape[1]:
    raise DataError('labels out of range for {} classes'.format(logits.shape[1]))
  logp = log_softmax(logits)
  return float(-np.mean(logp[np.arange(len(labels)), labels]))


def gradients(params, X, y):
  """
  Computes the mean cross-entropy over the batch `(X, y)` and its gradient
  with respect to every parameter.

  The flow to leaf `l` is a product of gates `sigmoid(z)` (left) and
  `sigmoid(-z)` (right), so `d mu_l / d z_n` is `mu_l * sigmoid(-z_n)` for
  a left turn at `n` and `-mu_l * sigmoid(z_n)` for a right turn. The empty
  leaf of a modified decision list has no stored value and thus no gradient.

  # Returns
  (float, EnsembleParams): The loss and the gradient, shaped like *params*.
  """

  spec, layout = params.spec, params.spec.layout
  X = np.asarray(X, dtype=np.float64)
  y = np.asarray(y)
  n = X.shape[0]
  if n == 0:
    raise DataError('gradient of an empty batch is undefined')

  Z = gate_arguments(X, params.w, params.b)
  mu = flows_from_gates(Z, layout)
  L = spec.stored_leaf_count
  logits = sum_trees(np.einsum('rml,mcl->rmc', mu[..., :L], params.pi, optimize=False))
  loss = mean_cross_entropy(logits, y)

  delta = np.exp(log_softmax(logits))
  delta[np.arange(n), y] -= 1.0
  delta /= n

  grad_pi = np.einsum('rml,rc->mcl', mu[..., :L], delta, optimize=False)

  # Sensitivity of the loss to each leaf flow; zero for the unstored leaf.
  sens = np.zeros_like(mu)
  sens[..., :L] = np.einsum('rc,mcl->rml', delta, params.pi, optimize=False)

  left = expit(Z)[..., layout.path_node]
  right = expit(-Z)[..., layout.path_node]
  coef = np.where(layout.path_right, -left, right)
  coef = np.where(layout.path_active, coef, 0.0)
  contrib = (sens * mu)[..., np.newaxis] * coef
  grad_z = np.einsum('rmld,ldn->rmn', contrib, layout.incidence, optimize=False)

  grad_w = np.einsum('rf,rmn->mfn', X, grad_z, optimize=False)
  grad_b = grad_z.sum(axis=0)
  return loss, EnsembleParams(spec, grad_w, grad_b, grad_pi)


class AdamState(object):
  """
  First and second moment accumulators (one array per parameter group, in
  the order `w, b, pi`) and the number of steps taken.
  """

  __slots__ = ('m', 'v', 'step')

  def __init__(self, m, v, step=0):
    self.m = tuple(m)
    self.v = tuple(v)
    self.step = step

  @classmethod
  def zeros_like(cls, params):
    arrays = params.arrays()
    return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], 0)


def adam_step(state, params, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
  """
  Performs one Adam update with bias correction.

  # Returns
  (AdamState, EnsembleParams): The new state and the updated parameters.
  Neither *state* nor *params* is modified.
  """

  step = state.step + 1
  correction1 = 1.0 - beta1 ** step
  correction2 = 1.0 - beta2 ** step
  new_m, new_v, new_params = [], [], []
  for theta, g, m, v in zip(params.arrays(), grads.arrays(), state.m, state.v):
    m = beta1 * m + (1.0 - beta1) * g
    v = beta2 * v + (1.0 - beta2) * (g * g)
    update = lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
    new_m.append(m)
    new_v.append(v)
    new_params.append(theta - update)
  return AdamState(new_m, new_v, step), params.replace(*new_params)


def iter_batches(n, batch_size, seed, epoch):
  """
  Yields the row indices of every mini-batch of one epoch. The order is a
  permutation drawn from the `(seed, epoch)` shuffle stream; the last batch
  holds the remainder.
  """

  order = utils.random_stream(seed, utils.STREAM_SHUFFLE, epoch).permutation(n)
  for start in range(0, n, batch_size):
    yield order[start:start + batch_size]


def train(spec, train_set, config, lr, initial=None):
  """
  Trains an ensemble with mini-batch Adam on the cross-entropy loss.

  # Parameters
  spec (ArchitectureSpec):
  train_set (Dataset): Must not be empty.
  config (TrainConfig): Epochs, batch size, seed and Adam constants.
  lr (float): The learning rate.
  initial (EnsembleParams): Starting point. Defaults to
    `init_params(spec, config.seed)`.

  # Returns
  (EnsembleParams, list of EpochRecord)
  """

  if len(train_set) == 0:
    raise DataError('can not train on an empty dataset')
  if train_set.features.shape[1] != spec.features:
    raise DataError('dataset has {} features, the model expects {}'
      .format(train_set.features.shape[1], spec.features))
  if train_set.labels.max() >= spec.classes:
    raise DataError('dataset labels exceed the {} model classes'.format(spec.classes))

  params = init_params(spec, config.seed) if initial is None else initial
  state = AdamState.zeros_like(params)
  X, y = train_set.features, train_set.labels
  history = []
  for epoch in range(config.epochs):
    losses = []
    for index in iter_batches(len(train_set), config.batch_size, config.seed, epoch):
      loss, grads = gradients(params, X[index], y[index])
      losses.append(loss)
      state, params = adam_step(state, params, grads, lr,
        config.adam_beta1, config.adam_beta2, config.adam_eps)
    mean_loss = float(np.mean(losses))
    if not np.isfinite(mean_loss):
      raise LmcError('training diverged in epoch {} (lr={})'.format(epoch, lr))
    record = EpochRecord(epoch, mean_loss, accuracy(params, train_set))
    history.append(record)
    logger.debug('lr=%g epoch %d: loss %.6f, train accuracy %.3f', lr, epoch,
                 record.loss, record.train_accuracy)
  return params, history


def train_candidates(spec, train_set, config):
  """
  Trains once per learning rate in *config* and returns a list of #TrainRun.
  """

  if not config.learning_rates:
    raise ValueError('no candidate learning rates')
  runs = []
  for lr in config.learning_rates:
    params, history = train(spec, train_set, config, lr)
    logger.debug('lr=%g: final train accuracy %.3f', lr, history[-1].train_accuracy)
    runs.append(TrainRun(lr, params, history))
  return runs


def best_run(runs):
  """
  Returns the run with the highest final-epoch training accuracy; among
  equal accuracies the larger learning rate wins.
  """

  return max(runs, key=lambda run: (run.history[-1].train_accuracy, run.lr))


def select_learning_rate(spec, train_set, config):
  """
  Trains with every candidate learning rate and keeps the run with the best
  final training accuracy.

  # Returns
  (float, EnsembleParams): The selected learning rate and its parameters.
  """

  run = best_run(train_candidates(spec, train_set, config))
  logger.info('selected lr=%g (train accuracy %.3f)', run.lr, run.history[-1].train_accuracy)
  return run.lr, run.params
