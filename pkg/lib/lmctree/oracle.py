# Copyright (c) 2026  The lmctree authors
# Licensed under the MIT license, see LICENSE.txt.
"""
Brute-force reference implementations used to check the fast code paths:
an exhaustive assignment search, a recursive per-sample tree evaluation that
does not use the vectorized layout tables, and sweeps that compare the two.
They favour simplicity over speed and are limited to small problems.
"""

import collections
import itertools
import logging
import cmath
import math

import numpy as np

from . import utils
from .errors import AssignmentError, SpecError
from .invariance import DEFAULT_BUDGET, adjust_tree, enumerate_ops
from .matching import linear_sum_assignment
from .model import ArchitectureSpec, EnsembleParams, Kind, TreeParams, tree_forward
from .training import gradients

logger = logging.getLogger(__name__)

#: Largest assignment size accepted by #brute_force_lap().
MAX_BRUTE_FORCE = 8
#: Largest depth the sweeps accept.
MAX_DEPTH = 3

EQUIVALENCE_TOLERANCE = 1e-12
GRADIENT_TOLERANCE = 1e-6
#: Gradient entries below this magnitude are compared absolutely.
GRADIENT_FLOOR = 1e-9


class OracleReport(object):
  """
  # Attributes
  name (str): What was checked.
  cases (int): Number of compared cases.
  max_deviation (float): Largest deviation seen, also recorded on success.
  tolerance (float): Deviations above this fail the check.
  first_failure (str): Description of the first failing case or None.
  """

  __slots__ = ('name', 'cases', 'max_deviation', 'tolerance', 'first_failure')

  def __init__(self, name, tolerance):
    self.name = name
    self.cases = 0
    self.max_deviation = 0.0
    self.tolerance = tolerance
    self.first_failure = None

  def record(self, deviation, describe):
    self.cases += 1
    if not deviation <= self.max_deviation:
      self.max_deviation = float(deviation)
    if self.first_failure is None and not deviation <= self.tolerance:
      self.first_failure = describe()

  @property
  def passed(self):
    return self.first_failure is None

  def __str__(self):
    status = 'ok' if self.passed else 'FAILED'
    text = '{}: {} ({} cases, max deviation {:.3g}, tolerance {:.0e})'.format(
      self.name, status, self.cases, self.max_deviation, self.tolerance)
    if self.first_failure:
      text += '\n  first failure: ' + self.first_failure
    return text

  def to_dict(self):
    return collections.OrderedDict([
      ('name', self.name), ('passed', self.passed), ('cases', self.cases),
      ('max_deviation', self.max_deviation), ('tolerance', self.tolerance),
      ('first_failure', self.first_failure)])


def brute_force_lap(S, maximize=True):
  """
  Searches all permutations for the optimal assignment. The first pass finds
  the optimum, the second returns the lexicographically smallest
  permutation that reaches it.
  """

  S = np.asarray(S, dtype=np.float64)
  if S.ndim != 2 or S.shape[0] != S.shape[1]:
    raise AssignmentError('assignment requires a square matrix, got shape {}'.format(S.shape))
  M = S.shape[0]
  if M > MAX_BRUTE_FORCE:
    raise AssignmentError('brute force is limited to {} trees, got {}'.format(MAX_BRUTE_FORCE, M))
  columns = np.arange(M)
  sign = 1.0 if maximize else -1.0
  best = max(sign * S[list(perm), columns].sum() for perm in itertools.permutations(range(M)))
  tol = 1e-9 * max(1.0, abs(best))
  for perm in itertools.permutations(range(M)):
    if sign * S[list(perm), columns].sum() >= best - tol:
      return np.array(perm, dtype=np.intp)


_RawTree = collections.namedtuple('_RawTree', 'w b pi')


def _sigmoid(z):
  exp = cmath.exp if isinstance(z, complex) else math.exp
  if z.real >= 0:
    return 1.0 / (1.0 + exp(-z))
  e = exp(z)
  return e / (1.0 + e)


def _gate(w, b, x):
  return _sigmoid(sum(w[f] * x[f] for f in range(len(x))) + b)


def _expand_rules(w, b, depth):
  node_depth = [int(math.floor(math.log2(n + 1))) for n in range(2 ** depth - 1)]
  return np.stack([w[:, d] for d in node_depth], axis=1), np.array([b[d] for d in node_depth])


def expand_oblivious(tree, spec):
  """
  Materializes an oblivious tree as a non-oblivious tree by copying the rule
  of depth `d` into every node of that depth.

  # Returns
  (TreeParams, ArchitectureSpec)
  """

  if spec.kind != Kind.Oblivious:
    raise SpecError('expand_oblivious() requires an oblivious tree, got {}'.format(spec.kind.value))
  full_spec = ArchitectureSpec(Kind.NonOblivious, spec.depth, spec.trees, spec.features, spec.classes)
  w, b = _expand_rules(tree.w, tree.b, spec.depth)
  return TreeParams(w, b, tree.pi.copy()), full_spec


def reference_leaf_flow(x, tree, spec):
  """
  Evaluates the leaf flows of one sample by walking the tree. Returns a list
  with one entry per leaf, the empty leaf of a modified decision list
  included. Complex parameters are evaluated in complex arithmetic.
  """

  D = spec.depth
  w, b = tree.w, tree.b
  if spec.kind == Kind.Oblivious:
    w, b = _expand_rules(w, b, D)
  if spec.kind in (Kind.NonOblivious, Kind.Oblivious):
    flows = [0.0] * (2 ** D)

    def walk(node, depth, path, flow):
      if depth == D:
        flows[path] = flow
        return
      g = _gate(w[:, node], b[node], x)
      walk(2 * node + 1, depth + 1, path, flow * g)
      walk(2 * node + 2, depth + 1, path | (1 << depth), flow * (1.0 - g))

    walk(0, 0, 0, 1.0)
    return flows

  flows = []
  remaining = 1.0
  for node in range(D):
    g = _gate(w[:, node], b[node], x)
    flows.append(remaining * g)
    remaining *= 1.0 - g
  flows.append(remaining)
  return flows


def reference_tree_forward(x, tree, spec):
  flows = reference_leaf_flow(x, tree, spec)
  out = np.zeros(spec.classes, dtype=np.result_type(tree.w, tree.b, tree.pi))
  for leaf in range(spec.stored_leaf_count):
    out += flows[leaf] * tree.pi[:, leaf]
  return out


def _reference_logits(x, trees, spec):
  out = 0.0
  for tree in trees:
    out = out + reference_tree_forward(x, tree, spec)
  return out


def reference_ensemble_forward(x, params):
  return _reference_logits(x, params.trees, params.spec)


def random_tree(spec, rng, scale=1.0):
  return TreeParams(rng.normal(0, scale, (spec.features, spec.node_count)),
                    rng.normal(0, scale, spec.node_count),
                    rng.normal(0, scale, (spec.classes, spec.stored_leaf_count)))


def random_ensemble(spec, rng, scale=1.0):
  return EnsembleParams.from_trees(spec, [random_tree(spec, rng, scale) for _ in range(spec.trees)])


def _check_depth(spec):
  if spec.depth > MAX_DEPTH:
    raise SpecError('oracle sweeps are limited to depth {}, got {}'.format(MAX_DEPTH, spec.depth))


def equivalence_sweep(spec, trials, seed=0, inputs=20, adjust=None, budget=DEFAULT_BUDGET):
  """
  Checks that every invariance operation of *spec* leaves the function of
  *trials* random trees unchanged, comparing reference evaluations on
  *inputs* random samples per tree.

  # Parameters
  adjust (callable): Replaces #adjust_tree() with the same signature, to show
    that a faulty transformation is detected.
  """

  _check_depth(spec)
  adjust = adjust or adjust_tree
  ops = enumerate_ops(spec, budget)
  rng = utils.random_stream(seed, utils.STREAM_ORACLE, 0)
  report = OracleReport('equivalence {} D={}'.format(spec.kind.value, spec.depth), EQUIVALENCE_TOLERANCE)
  for trial in range(trials):
    tree = random_tree(spec, rng)
    X = rng.normal(size=(inputs, spec.features))
    expected = [reference_tree_forward(x, tree, spec) for x in X]
    for index, op in enumerate(ops):
      adjusted = adjust(tree, op, spec)
      deviation = max(float(np.max(np.abs(reference_tree_forward(x, adjusted, spec) - e)))
                      for x, e in zip(X, expected))
      report.record(deviation, lambda: 'trial {}, op {} ({}): deviation {:.3g}'.format(
        trial, index, op.describe(), deviation))
  return report


def forward_check(spec, cases, seed=0):
  """
  Compares the vectorized tree forward against the reference walk.
  """

  _check_depth(spec)
  rng = utils.random_stream(seed, utils.STREAM_ORACLE, 1)
  report = OracleReport('forward {} D={}'.format(spec.kind.value, spec.depth), EQUIVALENCE_TOLERANCE)
  for case in range(cases):
    tree = random_tree(spec, rng)
    x = rng.normal(size=spec.features)
    deviation = float(np.max(np.abs(tree_forward(x, tree, spec) - reference_tree_forward(x, tree, spec))))
    report.record(deviation, lambda: 'case {}: deviation {:.3g}'.format(case, deviation))
  return report


def oblivious_expansion_check(depth, cases, seed=0, features=4, classes=3):
  """
  Compares the oblivious forward against the reference walk of the expanded
  non-oblivious tree.
  """

  spec = ArchitectureSpec(Kind.Oblivious, depth, 1, features, classes)
  rng = utils.random_stream(seed, utils.STREAM_ORACLE, 2)
  report = OracleReport('oblivious expansion D={}'.format(depth), EQUIVALENCE_TOLERANCE)
  for case in range(cases):
    tree = random_tree(spec, rng)
    full_tree, full_spec = expand_oblivious(tree, spec)
    x = rng.normal(size=features)
    deviation = float(np.max(np.abs(tree_forward(x, tree, spec) -
                                    reference_tree_forward(x, full_tree, full_spec))))
    report.record(deviation, lambda: 'case {}: deviation {:.3g}'.format(case, deviation))
  return report


def _reference_loss(trees, spec, X, y):
  total = 0.0
  for x, label in zip(X, y):
    logits = _reference_logits(x, trees, spec)
    top = max(v.real for v in logits)
    exp, log = (cmath.exp, cmath.log) if np.iscomplexobj(logits) else (math.exp, math.log)
    total = total + top + log(sum(exp(v - top) for v in logits)) - logits[label]
  return total / len(y)


def _raw_trees(spec, flat):
  F, N, C, L = spec.features, spec.node_count, spec.classes, spec.stored_leaf_count
  return [_RawTree(row[:F * N].reshape(F, N), row[F * N:F * N + N], row[F * N + N:].reshape(C, L))
          for row in flat]


def gradient_check(spec, seed=0, rows=8, h=1e-20):
  """
  Compares #gradients() with the derivative of the reference loss along the
  imaginary axis, `Im(loss(theta + ih e_k)) / h`. There is no subtractive
  cancellation, so the numeric derivative is accurate to rounding and the
  error of an entry is the plain relative error
  `|a - n| / max(|a|, |n|, GRADIENT_FLOOR)`.
  """

  _check_depth(spec)
  rng = utils.random_stream(seed, utils.STREAM_ORACLE, 3)
  params = random_ensemble(spec, rng, scale=0.5)
  X = rng.normal(size=(rows, spec.features))
  y = rng.integers(0, spec.classes, size=rows)
  _, grads = gradients(params, X, y)
  analytic = grads.flatten()
  flat = params.flatten().astype(np.complex128)
  report = OracleReport('gradient {} D={}'.format(spec.kind.value, spec.depth), GRADIENT_TOLERANCE)
  for index in np.ndindex(*flat.shape):
    shifted = flat.copy()
    shifted[index] += 1j * h
    numeric = _reference_loss(_raw_trees(spec, shifted), spec, X, y).imag / h
    a = float(analytic[index])
    error = abs(a - numeric) / max(abs(a), abs(numeric), GRADIENT_FLOOR)
    report.record(error, lambda: 'parameter {}: analytic {:.10g}, numeric {:.10g}'.format(index, a, numeric))
  return report


def lap_crosscheck(trials, seed=0, sizes=(2, 3, 4, 5, 6)):
  """
  Compares #linear_sum_assignment() against #brute_force_lap() on random
  matrices, in both directions. Odd trials draw 0/1 matrices and every sixth
  trial small integers, so that most of those have several optima.
  The deviation is the difference of the objectives, or machine epsilon if
  only the chosen optima differ.
  """

  rng = utils.random_stream(seed, utils.STREAM_ORACLE, 4)
  report = OracleReport('assignment', 0.0)
  for trial in range(trials):
    M = sizes[trial % len(sizes)]
    columns = np.arange(M)
    if trial % 2 == 1:
      S = rng.integers(0, 2, size=(M, M)).astype(np.float64)
    elif trial % 3 == 0:
      S = rng.integers(-2, 3, size=(M, M)).astype(np.float64)
    else:
      S = rng.normal(size=(M, M))
    for maximize in (True, False):
      fast = linear_sum_assignment(S, maximize)
      slow = brute_force_lap(S, maximize)
      deviation = abs(S[fast, columns].sum() - S[slow, columns].sum())
      if not np.array_equal(fast, slow):
        deviation = max(deviation, np.finfo(float).eps)
      report.record(deviation, lambda: 'trial {} (M={}, maximize={}): fast {} vs brute force {}'.format(
        trial, M, maximize, fast.tolist(), slow.tolist()))
  return report


def default_specs(max_depth=MAX_DEPTH, features=3, classes=2):
  """
  Returns one single-tree spec per architecture and depth up to *max_depth*.
  """

  return [ArchitectureSpec(kind, depth, 1, features, classes)
          for kind in Kind for depth in range(1, max_depth + 1)]


def verify(specs=None, trials=10, seed=0):
  """
  Runs every check and returns the list of #OracleReport.
  """

  specs = default_specs() if specs is None else specs
  reports = []
  for spec in specs:
    reports.append(equivalence_sweep(spec, trials, seed))
    reports.append(forward_check(spec, trials, seed))
    reports.append(gradient_check(spec.with_trees(2), seed))
    if spec.kind == Kind.Oblivious:
      reports.append(oblivious_expansion_check(spec.depth, 100, seed))
  reports.append(lap_crosscheck(100, seed))
  for report in reports:
    logger.info('%s', report)
  return reports
