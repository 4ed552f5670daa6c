import numpy as np
from nose.tools import assert_equal, assert_raises, assert_true

from lmctree.errors import BudgetExceeded, SpecError
from lmctree.invariance import (InvarianceOp, adjust_ensemble, adjust_tree, count_ops,
  enumerate_ops, identity_op, inverse_op, invariances_of, node_leaf_counts, weighting)
from lmctree.model import ArchitectureSpec, Kind, TreeParams, ensemble_forward, tree_forward
from lmctree.oracle import random_ensemble, random_tree


def _spec(kind, depth, trees=1, features=3, classes=2):
  return ArchitectureSpec(kind, depth, trees, features, classes)


def test_operation_counts():
  expected = {
    Kind.NonOblivious: (2, 8, 128),
    Kind.Oblivious: (2, 8, 48),
    Kind.DecisionList: (2, 2, 2),
    Kind.ModifiedDecisionList: (1, 1, 1),
  }
  for kind, counts in expected.items():
    for depth, count in zip((1, 2, 3), counts):
      spec = _spec(kind, depth)
      ops = enumerate_ops(spec)
      assert_equal(count_ops(spec), count)
      assert_equal(len(ops), count)
      assert_equal(len(set(ops)), count)
      assert_true(ops[0].is_identity)
      assert_equal(ops[0], identity_op(spec))


def test_invariance_table():
  assert_equal(invariances_of(Kind.NonOblivious).flip, 'all')
  assert_true(invariances_of('oblivious').order)
  assert_equal(invariances_of(Kind.DecisionList).flip, 'terminal')
  assert_equal(invariances_of(Kind.ModifiedDecisionList).flip, 'none')


def test_budget():
  spec = _spec(Kind.NonOblivious, 5)
  with assert_raises(BudgetExceeded) as ctx:
    enumerate_ops(spec)
  assert_true(str(2 ** 31) in str(ctx.exception))
  with assert_raises(BudgetExceeded):
    enumerate_ops(_spec(Kind.NonOblivious, 2), budget=4)
  assert_equal(len(enumerate_ops(_spec(Kind.NonOblivious, 2), budget=None)), 8)


def test_identity_is_bit_exact():
  rng = np.random.default_rng(0)
  for kind in Kind:
    spec = _spec(kind, 3)
    tree = random_tree(spec, rng)
    assert_equal(adjust_tree(tree, identity_op(spec), spec), tree)


def test_depth_one_flip():
  spec = _spec(Kind.NonOblivious, 1, features=2)
  tree = TreeParams([[1.0], [2.0]], [3.0], [[4.0, 5.0], [6.0, 7.0]])
  flipped = adjust_tree(tree, enumerate_ops(spec)[1], spec)
  assert_true(np.array_equal(flipped.w, [[-1.0], [-2.0]]))
  assert_true(np.array_equal(flipped.b, [-3.0]))
  assert_true(np.array_equal(flipped.pi, [[5.0, 4.0], [7.0, 6.0]]))


def test_root_flip_swaps_subtrees():
  spec = _spec(Kind.NonOblivious, 2, features=1, classes=1)
  tree = TreeParams([[1.0, 2.0, 3.0]], [0.1, 0.2, 0.3], [[10.0, 11.0, 12.0, 13.0]])
  op = InvarianceOp(Kind.NonOblivious, (1, 0, 0), (0,))
  flipped = adjust_tree(tree, op, spec)
  assert_true(np.array_equal(flipped.w, [[-1.0, 3.0, 2.0]]))
  assert_true(np.array_equal(flipped.b, [-0.1, 0.3, 0.2]))
  # Leaf bit 0 is the root decision: left subtree leaves are 0 and 2.
  assert_true(np.array_equal(flipped.pi, [[11.0, 10.0, 13.0, 12.0]]))


def test_oblivious_depth_swap():
  spec = _spec(Kind.Oblivious, 2, features=1, classes=1)
  tree = TreeParams([[1.0, 2.0]], [0.1, 0.2], [[10.0, 11.0, 12.0, 13.0]])
  op = InvarianceOp(Kind.Oblivious, (0, 0), (1, 0))
  swapped = adjust_tree(tree, op, spec)
  assert_true(np.array_equal(swapped.w, [[2.0, 1.0]]))
  assert_true(np.array_equal(swapped.pi, [[10.0, 12.0, 11.0, 13.0]]))
  X = np.random.default_rng(1).normal(size=(100, 1))
  assert_true(np.max(np.abs(tree_forward(X, swapped, spec) - tree_forward(X, tree, spec))) < 1e-12)


def test_decision_list_terminal_flip():
  spec = _spec(Kind.DecisionList, 2, features=1, classes=1)
  tree = TreeParams([[1.0, 2.0]], [0.1, 0.2], [[10.0, 11.0, 12.0]])
  flipped = adjust_tree(tree, enumerate_ops(spec)[1], spec)
  assert_true(np.array_equal(flipped.w, [[1.0, -2.0]]))
  assert_true(np.array_equal(flipped.b, [0.1, -0.2]))
  assert_true(np.array_equal(flipped.pi, [[10.0, 12.0, 11.0]]))


def test_every_operation_preserves_the_function():
  rng = np.random.default_rng(2)
  for kind in Kind:
    for depth in (1, 2, 3):
      spec = _spec(kind, depth)
      X = rng.normal(size=(30, 3))
      for _ in range(3):
        tree = random_tree(spec, rng)
        expected = tree_forward(X, tree, spec)
        for op in enumerate_ops(spec):
          actual = tree_forward(X, adjust_tree(tree, op, spec), spec)
          assert_true(np.max(np.abs(actual - expected)) < 1e-12, op.describe())


def test_operations_produce_distinct_trees():
  rng = np.random.default_rng(3)
  for kind in Kind:
    spec = _spec(kind, 3)
    tree = random_tree(spec, rng)
    ops = enumerate_ops(spec)
    vectors = np.stack([adjust_tree(tree, op, spec).flatten() for op in ops])
    assert_equal(len(np.unique(vectors, axis=0)), len(ops))


def test_inverse_operations():
  rng = np.random.default_rng(4)
  for spec in (_spec(Kind.NonOblivious, 2), _spec(Kind.Oblivious, 3), _spec(Kind.DecisionList, 3)):
    tree = random_tree(spec, rng)
    for op in enumerate_ops(spec):
      back = adjust_tree(adjust_tree(tree, op, spec), inverse_op(spec, op), spec)
      assert_equal(back, tree)


def test_adjust_ensemble():
  rng = np.random.default_rng(5)
  spec = _spec(Kind.Oblivious, 2, trees=4)
  params = random_ensemble(spec, rng)
  ops = [enumerate_ops(spec)[i] for i in (0, 3, 5, 7)]
  adjusted = adjust_ensemble(params, ops)
  for m in range(4):
    assert_equal(adjusted[m], adjust_tree(params[m], ops[m], spec))
  X = rng.normal(size=(40, 3))
  assert_true(np.max(np.abs(ensemble_forward(X, adjusted) - ensemble_forward(X, params))) < 1e-12)
  with assert_raises(SpecError):
    adjust_ensemble(params, ops[:2])


def test_foreign_operations_are_rejected():
  spec = _spec(Kind.NonOblivious, 2)
  tree = random_tree(spec, np.random.default_rng(6))
  with assert_raises(SpecError):
    adjust_tree(tree, identity_op(_spec(Kind.Oblivious, 2)), spec)
  with assert_raises(SpecError):
    adjust_tree(tree, InvarianceOp(Kind.NonOblivious, (1, 0), (0,)), spec)
  dl = _spec(Kind.DecisionList, 3)
  with assert_raises(SpecError):
    adjust_tree(random_tree(dl, np.random.default_rng(7)), InvarianceOp(Kind.DecisionList, (1, 0, 0), (0, 1, 2)), dl)


def test_node_leaf_counts():
  expected = {
    (Kind.NonOblivious, 2): [4, 2, 2],
    (Kind.NonOblivious, 3): [8, 4, 4, 2, 2, 2, 2],
    (Kind.Oblivious, 3): [8, 4, 2],
    (Kind.DecisionList, 3): [4, 3, 2],
    (Kind.ModifiedDecisionList, 3): [4, 3, 2],
    (Kind.Oblivious, 1): [2],
  }
  for (kind, depth), nodes in expected.items():
    counts = node_leaf_counts(_spec(kind, depth))
    assert_equal(counts.nodes.tolist(), nodes)
    assert_equal(len(counts.leaves), _spec(kind, depth).stored_leaf_count)


def test_weighting():
  rng = np.random.default_rng(8)
  spec = _spec(Kind.NonOblivious, 2, trees=2)
  params = random_ensemble(spec, rng)
  weighted = weighting(params)
  assert_true(np.allclose(weighted.w, params.w * np.sqrt([4.0, 2.0, 2.0])))
  assert_true(np.allclose(weighted.b, params.b * np.sqrt([4.0, 2.0, 2.0])))
  assert_true(np.array_equal(weighted.pi, params.pi))
  doubled = params.replace(w=2 * params.w, b=2 * params.b, pi=2 * params.pi)
  assert_true(np.allclose(weighting(doubled).flatten(), 2 * weighted.flatten()))


def test_weighted_similarity_is_invariant_under_a_shared_operation():
  rng = np.random.default_rng(9)
  for kind in Kind:
    spec = _spec(kind, 2, trees=2)
    params = weighting(random_ensemble(spec, rng))
    a, b = params.flatten()
    for op in enumerate_ops(spec):
      adjusted = adjust_ensemble(params, [op, op]).flatten()
      assert_true(abs(np.dot(adjusted[0], adjusted[1]) - np.dot(a, b)) < 1e-12)
