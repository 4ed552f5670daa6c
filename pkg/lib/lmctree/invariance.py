# Copyright (c) 2026  The lmctree authors
# Licensed under the MIT license, see LICENSE.txt.
"""
Parameter transformations that leave the function of a soft tree unchanged,
and the node weighting used when comparing trees.

Every operation is a signed permutation of the flattened tree parameter
vector (see #TreeParams.flatten()). A subtree flip negates the `(w, b)` of a
node and swaps the two subtrees below it, which works because
`sigmoid(-z) = 1 - sigmoid(z)`. For oblivious trees the depths can in
addition be reordered, relocating every leaf by permuting the bits of its
path.
"""

import collections
import functools
import itertools
import logging
import math

import numpy as np

from .errors import BudgetExceeded, LmcError, SpecError
from .model import EnsembleParams, Kind, TreeParams

logger = logging.getLogger(__name__)

#: Enumerations with more operations than this raise #BudgetExceeded.
DEFAULT_BUDGET = 10 ** 6

#: Which invariances apply to a tree family. *flip* is one of `'all'`,
#: `'terminal'` (only the last node of a decision list) or `'none'`.
Invariances = collections.namedtuple('Invariances', 'permutation flip order')

_INVARIANCES = {
  Kind.NonOblivious: Invariances(True, 'all', False),
  Kind.Oblivious: Invariances(True, 'all', True),
  Kind.DecisionList: Invariances(True, 'terminal', False),
  Kind.ModifiedDecisionList: Invariances(True, 'none', False),
}


def invariances_of(kind):
  return _INVARIANCES[Kind(kind)]


class InvarianceOp(collections.namedtuple('InvarianceOp', 'kind flips order')):
  """
  One function-preserving transformation of a single tree.

  # Attributes
  kind (Kind): The tree family the operation belongs to.
  flips (tuple of int): One bit per node slot. For non-oblivious trees the
    bits refer to the nodes of the *original* tree; for oblivious trees bit
    `d` flips the rule that ends up at depth `d`.
  order (tuple of int): For oblivious trees, new depth `d` takes the rule of
    old depth `order[d]`. The identity for every other kind.
  """

  __slots__ = ()

  @property
  def is_identity(self):
    return not any(self.flips) and self.order == tuple(range(len(self.order)))

  def describe(self):
    if self.is_identity:
      return 'identity'
    parts = []
    if any(self.flips):
      parts.append('flip=' + ''.join(str(x) for x in self.flips))
    if self.order != tuple(range(len(self.order))):
      parts.append('order=' + ','.join(str(x) for x in self.order))
    return ' '.join(parts)


def identity_op(spec):
  depth_slots = spec.depth if spec.kind != Kind.NonOblivious else 1
  return InvarianceOp(spec.kind, (0,) * spec.node_count, tuple(range(depth_slots)))


def count_ops(spec):
  """
  Returns the number U of operations of *spec* by formula, without
  enumerating them.
  """

  D = spec.depth
  if spec.kind == Kind.NonOblivious:
    return 2 ** (2 ** D - 1)
  if spec.kind == Kind.Oblivious:
    return 2 ** D * math.factorial(D)
  if spec.kind == Kind.DecisionList:
    return 2
  return 1


def check_budget(spec, budget=DEFAULT_BUDGET):
  count = count_ops(spec)
  if budget is not None and count > budget:
    raise BudgetExceeded(count, budget)
  return count


@functools.lru_cache(maxsize=None)
def _enumerate(kind, depth, node_count):
  if kind == Kind.NonOblivious:
    # Bit n of the mask flips original node n.
    return tuple(InvarianceOp(kind, tuple((mask >> n) & 1 for n in range(node_count)), (0,))
                 for mask in range(2 ** node_count))
  if kind == Kind.Oblivious:
    ops = []
    for order in itertools.permutations(range(depth)):
      for mask in range(2 ** depth):
        ops.append(InvarianceOp(kind, tuple((mask >> d) & 1 for d in range(depth)), order))
    return tuple(ops)
  order = tuple(range(depth))
  identity = InvarianceOp(kind, (0,) * depth, order)
  if kind == Kind.DecisionList:
    return (identity, InvarianceOp(kind, (0,) * (depth - 1) + (1,), order))
  return (identity,)


def enumerate_ops(spec, budget=DEFAULT_BUDGET):
  """
  Returns the tuple of all U operations of *spec*, identity first.

  # Raises
  BudgetExceeded: If U exceeds *budget* (checked before enumerating).
  """

  check_budget(spec, budget)
  return _enumerate(spec.kind, spec.depth, spec.node_count)


def check_op(op, spec):
  if not isinstance(op, InvarianceOp) or op.kind != spec.kind:
    raise SpecError('operation {!r} does not belong to a {} tree'.format(op, spec.kind.value))
  if len(op.flips) != spec.node_count or any(x not in (0, 1) for x in op.flips):
    raise SpecError('operation {!r} has an invalid flip mask for depth {}'.format(op, spec.depth))
  depth_slots = spec.depth if spec.kind != Kind.NonOblivious else 1
  if sorted(op.order) != list(range(depth_slots)):
    raise SpecError('operation {!r} has an invalid depth order'.format(op))
  if spec.kind == Kind.DecisionList and any(op.flips[:-1]):
    raise SpecError('a decision list only admits a flip of its last node')
  if spec.kind == Kind.ModifiedDecisionList and not op.is_identity:
    raise SpecError('a modified decision list only admits the identity')


def _perfect_tree_maps(depth, flips):
  """
  Applies a flip mask to a perfect binary tree root first. Returns
  `(node_src, node_sign, leaf_src)` such that new node `n` takes the
  parameters of original node `node_src[n]` multiplied by `node_sign[n]`
  and new leaf `l` takes the value of original leaf `leaf_src[l]`.
  """

  node_src = np.zeros(2 ** depth - 1, dtype=np.intp)
  node_sign = np.ones(2 ** depth - 1)
  leaf_src = np.zeros(2 ** depth, dtype=np.intp)

  def visit(orig, orig_bits, new, new_bits, d):
    if d == depth:
      leaf_src[new_bits] = orig_bits
      return
    node_src[new] = orig
    flipped = flips[orig]
    if flipped:
      node_sign[new] = -1.0
    for branch in (0, 1):
      target = branch ^ flipped
      visit(2 * orig + 1 + branch, orig_bits | (branch << d),
            2 * new + 1 + target, new_bits | (target << d), d + 1)

  visit(0, 0, 0, 0, 0)
  return node_src, node_sign, leaf_src


def _oblivious_maps(depth, flips, order):
  node_src = np.array(order, dtype=np.intp)
  node_sign = np.where(np.array(flips) == 1, -1.0, 1.0)
  leaf_src = np.zeros(2 ** depth, dtype=np.intp)
  for new_leaf in range(2 ** depth):
    old_leaf = 0
    for d in range(depth):
      bit = ((new_leaf >> d) & 1) ^ flips[d]
      old_leaf |= bit << order[d]
    leaf_src[new_leaf] = old_leaf
  return node_src, node_sign, leaf_src


def _decision_list_maps(depth, flips, stored_leaves):
  node_src = np.arange(depth, dtype=np.intp)
  node_sign = np.where(np.array(flips) == 1, -1.0, 1.0)
  leaf_src = np.arange(stored_leaves, dtype=np.intp)
  if flips[-1]:
    leaf_src[[depth - 1, depth]] = leaf_src[[depth, depth - 1]]
  return node_src, node_sign, leaf_src


@functools.lru_cache(maxsize=4096)
def signed_permutation(spec, op):
  """
  Returns `(src, sign)` over the flattened tree vector such that the
  adjusted vector is `sign * flat[src]`.
  """

  check_op(op, spec)
  if spec.kind == Kind.NonOblivious:
    node_src, node_sign, leaf_src = _perfect_tree_maps(spec.depth, op.flips)
  elif spec.kind == Kind.Oblivious:
    node_src, node_sign, leaf_src = _oblivious_maps(spec.depth, op.flips, op.order)
  else:
    node_src, node_sign, leaf_src = _decision_list_maps(spec.depth, op.flips, spec.stored_leaf_count)

  F, N, C, L = spec.features, spec.node_count, spec.classes, spec.stored_leaf_count
  w_src = (np.arange(F)[:, np.newaxis] * N + node_src[np.newaxis, :]).ravel()
  w_sign = np.tile(node_sign, F)
  b_src = F * N + node_src
  pi_src = (F * N + N + np.arange(C)[:, np.newaxis] * L + leaf_src[np.newaxis, :]).ravel()
  src = np.concatenate([w_src, b_src, pi_src])
  sign = np.concatenate([w_sign, node_sign, np.ones(C * L)])
  src.setflags(write=False)
  sign.setflags(write=False)
  return src, sign


def op_table(spec, ops):
  """
  Stacks the signed permutations of *ops* into two `(U, P)` arrays.
  """

  pairs = [signed_permutation(spec, op) for op in ops]
  return np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs])


def adjust_tree(tree, op, spec):
  """
  Returns a new #TreeParams that computes the same function as *tree*,
  transformed by *op*.
  """

  src, sign = signed_permutation(spec.with_trees(1), op)
  flat = tree.flatten()
  return TreeParams.unflatten(sign * flat[src], spec)


def adjust_ensemble(params, ops):
  """
  Applies `ops[m]` to tree `m` of *params*.
  """

  spec = params.spec
  if len(ops) != spec.trees:
    raise SpecError('expected {} operations, got {}'.format(spec.trees, len(ops)))
  tree_spec = spec.with_trees(1)
  flat = params.flatten()
  result = np.empty_like(flat)
  for m, op in enumerate(ops):
    src, sign = signed_permutation(tree_spec, op)
    result[m] = sign * flat[m, src]
  return EnsembleParams.unflatten(spec, result)


def inverse_op(spec, op, budget=DEFAULT_BUDGET):
  """
  Finds the operation that undoes *op* by searching #enumerate_ops().
  """

  tree_spec = spec.with_trees(1)
  src, sign = signed_permutation(tree_spec, op)
  identity = np.arange(len(src))
  found = []
  for candidate in enumerate_ops(spec, budget):
    src2, sign2 = signed_permutation(tree_spec, candidate)
    if np.array_equal(src[src2], identity) and np.all(sign2 * sign[src2] == 1.0):
      found.append(candidate)
  if len(found) != 1:
    raise LmcError('operation {!r} has {} inverses'.format(op, len(found)))
  return found[0]


NodeWeights = collections.namedtuple('NodeWeights', 'nodes leaves')


def node_leaf_counts(spec):
  """
  Returns the number of leaves each node slot affects (the empty leaf of a
  modified decision list counts) and a weight of 1 per stored leaf.
  """

  return NodeWeights(spec.layout.node_weights.copy(), np.ones(spec.stored_leaf_count, dtype=int))


def weighting(params):
  """
  Returns a copy of *params* in which the `(w, b)` of every node is scaled
  by the square root of its leaf count. The copy is only meant for
  similarity computations.
  """

  scale = np.sqrt(node_leaf_counts(params.spec).nodes.astype(np.float64))
  return EnsembleParams(params.spec, params.w * scale, params.b * scale, params.pi.copy())
