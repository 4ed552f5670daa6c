# Copyright (c) 2026  The lmctree authors
# Licensed under the MIT license, see LICENSE.txt.
"""
Aligning the trees of ensemble A to those of ensemble B. Trees are paired by
solving a linear assignment problem on a tree similarity matrix; every
paired tree of A is then transformed by the invariance operation that makes
it most similar to its partner in B. A is always transformed towards B.
"""

import collections
import logging

import numpy as np
from scipy.optimize import linear_sum_assignment as _scipy_lsa

from . import utils
from .errors import AssignmentError
from .invariance import (DEFAULT_BUDGET, adjust_ensemble, enumerate_ops,
  identity_op, op_table, weighting)
from .model import EnsembleParams, check_same_spec, tree_outputs

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
METHODS = ('wm', 'am')
LEVELS = ('naive', 'perm', 'full')

#: Number of rows compared by #activation_matching() by default.
DEFAULT_SAMPLES = 512


def _tolerance(value):
  return 1e-9 * max(1.0, abs(value))


def _check_square(S):
  S = np.asarray(S, dtype=np.float64)
  if S.ndim != 2 or S.shape[0] != S.shape[1]:
    raise AssignmentError('assignment requires a square matrix, got shape {}'.format(S.shape))
  if not np.all(np.isfinite(S)):
    raise AssignmentError('assignment matrix has non-finite entries')
  return S


def _solve(S, maximize):
  """
  Returns `p` with `p[j]` the row assigned to column `j`, and its objective.
  """

  rows, cols = _scipy_lsa(S, maximize=maximize)
  p = np.empty(len(rows), dtype=np.intp)
  p[cols] = rows
  return p, float(S[p, np.arange(len(p))].sum())


def _optional_edges(C, p, tol):
  """
  Returns a boolean matrix marking the edges `(r, j)` that take part in some
  minimum-cost assignment of the cost matrix *C*, given one optimum *p*.
  An unused edge is optional iff it closes a zero-cost alternating cycle.
  """

  M = len(p)
  inf = np.inf
  # Residual graph: rows 0..M-1, columns M..2M-1.
  G = np.full((2 * M, 2 * M), inf)
  G[:M, M:] = C
  G[p, M + np.arange(M)] = inf
  G[M + np.arange(M), p] = -C[p, np.arange(M)]
  np.fill_diagonal(G, 0.0)
  for k in range(2 * M):
    np.minimum(G, G[:, k:k + 1] + G[k:k + 1, :], out=G)
  # dist(column j -> row r) closes the cycle r -> j -> ... -> r.
  cycle = C + G[M:, :M].T
  optional = cycle <= tol
  optional[p, np.arange(M)] = True
  return optional


def linear_sum_assignment(S, maximize=True):
  """
  Solves the linear assignment problem exactly. Among all optimal
  assignments the lexicographically smallest `p` is returned.

  # Parameters
  S (np.ndarray): A finite square matrix.
  maximize (bool): Maximize instead of minimize `sum_j S[p[j], j]`.

  # Returns
  np.ndarray: `p` where `p[j]` is the row assigned to column `j`.

  # Raises
  AssignmentError: If *S* is not square or not finite.
  """

  S = _check_square(S)
  M = S.shape[0]
  if M == 0:
    return np.zeros(0, dtype=np.intp)
  p, opt = _solve(S, maximize)
  tol = _tolerance(opt)
  C = -S if maximize else S
  optional = _optional_edges(C, p, tol)
  if optional.sum() == M:
    return p

  logger.debug('assignment of size %d has ties, refining to the smallest optimum', M)
  p = p.copy()
  fixed_value = 0.0
  used = np.zeros(M, dtype=bool)
  for j in range(M):
    # p[j] is feasible given the columns fixed so far, so only smaller rows
    # on some optimum need a check. Rows of the first solution count too.
    for r in np.flatnonzero(optional[:, j] & ~used):
      if r >= p[j]:
        break
      rest_rows = np.flatnonzero(~used & (np.arange(M) != r))
      rest_cols = np.arange(j + 1, M)
      if len(rest_cols):
        sub_p, sub_value = _solve(S[np.ix_(rest_rows, rest_cols)], maximize)
      else:
        sub_p, sub_value = np.zeros(0, dtype=np.intp), 0.0
      if abs(fixed_value + S[r, j] + sub_value - opt) <= tol:
        p[j] = r
        p[j + 1:] = rest_rows[sub_p]
        break
    used[p[j]] = True
    fixed_value += S[p[j], j]
  return p


class Alignment(object):
  """
  The result of matching ensemble A to ensemble B: tree `j` of the aligned
  model is tree `p[j]` of A transformed by operation `q[j]` (an index into
  #enumerate_ops(); index 0 is the identity).
  """

  __slots__ = ('p', 'q', 'method', 'invariances', 'spec_hash')

  def __init__(self, p, q, method, invariances, spec_hash=None):
    self.p = np.asarray(p, dtype=np.intp)
    self.q = np.asarray(q, dtype=np.intp)
    self.method = method
    self.invariances = invariances
    self.spec_hash = spec_hash
    M = len(self.p)
    if self.p.ndim != 1 or not np.array_equal(np.sort(self.p), np.arange(M)):
      raise AssignmentError('p is not a permutation: {}'.format(self.p.tolist()))
    if self.q.shape != self.p.shape or (M and self.q.min() < 0):
      raise AssignmentError('q must hold one non-negative operation index per tree')

  def __repr__(self):
    return 'Alignment(method={!r}, invariances={!r}, p={}, q={})'.format(
      self.method, self.invariances, self.p.tolist(), self.q.tolist())

  def __eq__(self, other):
    if not isinstance(other, Alignment):
      return NotImplemented
    return (np.array_equal(self.p, other.p) and np.array_equal(self.q, other.q) and
            self.method == other.method and self.invariances == other.invariances)

  def __ne__(self, other):
    return not (self == other)

  @classmethod
  def identity(cls, spec, method='wm'):
    M = spec.trees
    return cls(np.arange(M), np.zeros(M), method, 'naive', spec.hash())

  def to_dict(self, config_hash=None):
    data = collections.OrderedDict()
    data['format_version'] = FORMAT_VERSION
    data['method'] = self.method
    data['invariances'] = self.invariances
    data['p'] = self.p.tolist()
    data['q'] = self.q.tolist()
    data['spec_hash'] = self.spec_hash
    if config_hash:
      data['config_hash'] = config_hash
    return data

  @classmethod
  def from_dict(cls, data):
    if data.get('format_version') != FORMAT_VERSION:
      raise AssignmentError('unsupported alignment format version {!r}'.format(data.get('format_version')))
    return cls(data['p'], data['q'], data['method'], data['invariances'], data.get('spec_hash'))

  def save(self, filename, config_hash=None):
    utils.write_json(filename, self.to_dict(config_hash))

  @classmethod
  def load(cls, filename):
    return cls.from_dict(utils.read_json(filename))


def _operations(spec, invariances, budget):
  if invariances == 'full':
    return enumerate_ops(spec, budget)
  return (identity_op(spec),)


def weight_matching(A, B, invariances='full', budget=DEFAULT_BUDGET):
  """
  Aligns A to B by comparing weighted parameter vectors. For every
  operation `u` the similarity of tree `a` of A and tree `b` of B is the
  inner product of the weighted, `u`-transformed `a` with the weighted `b`.
  Trees are paired on the best similarity over all operations and each
  pair keeps the operation that achieved it (ties go to the lowest index).

  # Parameters
  invariances (str): `'full'` searches all operations, `'perm'` only the
    identity.
  """

  check_same_spec(A, B)
  spec = A.spec
  ops = _operations(spec, invariances, budget)
  Aw = weighting(A).flatten()
  Bw = weighting(B).flatten()
  src, sign = op_table(spec.with_trees(1), ops)
  logger.debug('weight matching: %d operations, %d trees', len(ops), spec.trees)

  best = np.full((spec.trees, spec.trees), -np.inf)
  best_op = np.zeros((spec.trees, spec.trees), dtype=np.intp)
  for u in range(len(ops)):
    S = (Aw[:, src[u]] * sign[u]) @ Bw.T
    better = S > best
    best[better] = S[better]
    best_op[better] = u

  p = linear_sum_assignment(best, maximize=True)
  q = best_op[p, np.arange(spec.trees)]
  logger.info('weight matching objective %.6g', best[p, np.arange(spec.trees)].sum())
  return Alignment(p, q, 'wm', invariances, spec.hash())


def sample_rows(dataset, count=DEFAULT_SAMPLES, seed=0):
  """
  Returns up to *count* distinct rows of *dataset*, drawn with a seeded
  stream, for #activation_matching().
  """

  rng = utils.random_stream(seed, utils.STREAM_SAMPLES)
  index = rng.permutation(len(dataset))[:count]
  return dataset.features[np.sort(index)]


def activation_matching(A, B, samples, invariances='full', budget=DEFAULT_BUDGET):
  """
  Aligns A to B by comparing the per-tree outputs on *samples* (a `(rows, F)`
  matrix). Trees are paired on the inner product of their flattened output
  tensors; the operation of each pair `(A[p[j]], B[j])` is then chosen on
  the weighted parameters as in #weight_matching().
  """

  check_same_spec(A, B)
  spec = A.spec
  samples = np.asarray(samples, dtype=np.float64)
  if samples.ndim != 2 or samples.shape[0] < 1 or samples.shape[1] != spec.features:
    raise AssignmentError('activation matching needs a (rows, {}) sample matrix, got shape {}'
      .format(spec.features, samples.shape))

  M = spec.trees
  OA = tree_outputs(A, samples).transpose(1, 0, 2).reshape(M, -1)
  OB = tree_outputs(B, samples).transpose(1, 0, 2).reshape(M, -1)
  p = linear_sum_assignment(OA @ OB.T, maximize=True)

  ops = _operations(spec, invariances, budget)
  Aw = weighting(A).flatten()[p]
  Bw = weighting(B).flatten()
  src, sign = op_table(spec.with_trees(1), ops)
  scores = np.empty((len(ops), M))
  for u in range(len(ops)):
    scores[u] = np.sum(Aw[:, src[u]] * sign[u] * Bw, axis=1)
  q = np.argmax(scores, axis=0)
  logger.info('activation matching on %d samples, %d operations', samples.shape[0], len(ops))
  return Alignment(p, q, 'am', invariances, spec.hash())


def match(A, B, method='wm', invariances='full', samples=None, budget=DEFAULT_BUDGET):
  """
  Dispatches to #weight_matching() or #activation_matching(); the `'naive'`
  level returns the identity alignment.
  """

  if method not in METHODS:
    raise ValueError('unknown matching method {!r}'.format(method))
  if invariances not in LEVELS:
    raise ValueError('unknown invariance level {!r}'.format(invariances))
  check_same_spec(A, B)
  if invariances == 'naive':
    return Alignment.identity(A.spec, method)
  if method == 'wm':
    return weight_matching(A, B, invariances, budget)
  if samples is None:
    raise ValueError('activation matching requires samples')
  return activation_matching(A, B, samples, invariances, budget)


def apply_alignment(A, alignment, budget=DEFAULT_BUDGET):
  """
  Returns the ensemble whose tree `j` is `adjust_tree(A[p[j]], q[j])`. The
  result computes the same function as *A*.
  """

  spec = A.spec
  if len(alignment.p) != spec.trees:
    raise AssignmentError('alignment has {} trees, the model {}'.format(len(alignment.p), spec.trees))
  if alignment.spec_hash and alignment.spec_hash != spec.hash():
    raise AssignmentError('alignment was computed for a different architecture')
  p = alignment.p
  permuted = EnsembleParams(spec, A.w[p], A.b[p], A.pi[p])
  if not alignment.q.any():
    return permuted
  ops = enumerate_ops(spec, budget)
  if alignment.q.max() >= len(ops):
    raise AssignmentError('operation index {} out of range (U = {})'.format(alignment.q.max(), len(ops)))
  return adjust_ensemble(permuted, [ops[u] for u in alignment.q])


def alignment_similarity(A, B, alignment, budget=DEFAULT_BUDGET):
  """
  Returns the weighted inner product between the aligned A and B, the
  objective the matchers maximize.
  """

  aligned = apply_alignment(A, alignment, budget)
  return float(np.sum(weighting(aligned).flatten() * weighting(B).flatten()))
