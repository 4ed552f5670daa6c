import types

from nose.tools import *

import numpy as np

from lmctree.errors import AssignmentError, SpecError
from lmctree.invariance import adjust_tree
from lmctree.matching import linear_sum_assignment
from lmctree.model import ArchitectureSpec, Kind, TreeParams, tree_forward
from lmctree.oracle import (OracleReport, brute_force_lap, default_specs, equivalence_sweep,
  expand_oblivious, forward_check, gradient_check, lap_crosscheck, oblivious_expansion_check,
  random_tree, reference_leaf_flow, reference_tree_forward, verify)


def test_brute_force_lap():
  assert_equal(brute_force_lap(np.eye(2)).tolist(), [0, 1])
  assert_equal(brute_force_lap(np.eye(2), maximize=False).tolist(), [1, 0])
  assert_equal(brute_force_lap(np.ones((3, 3))).tolist(), [0, 1, 2])
  S = np.random.default_rng(0).normal(size=(5, 5))
  assert_equal(brute_force_lap(S).tolist(), linear_sum_assignment(S).tolist())
  with assert_raises(AssignmentError):
    brute_force_lap(np.zeros((9, 9)))
  with assert_raises(AssignmentError):
    brute_force_lap(np.zeros((2, 3)))


def test_expand_oblivious():
  rng = np.random.default_rng(1)
  spec = ArchitectureSpec(Kind.Oblivious, 1, 1, 3, 2)
  tree = random_tree(spec, rng)
  full, full_spec = expand_oblivious(tree, spec)
  assert_equal(full_spec.kind, Kind.NonOblivious)
  assert_equal(full, tree)

  spec = ArchitectureSpec(Kind.Oblivious, 2, 1, 3, 2)
  tree = random_tree(spec, rng)
  full, full_spec = expand_oblivious(tree, spec)
  assert_equal(full.w.shape, (3, 3))
  assert_true(np.array_equal(full.w[:, 1], full.w[:, 2]))
  assert_true(np.array_equal(full.w[:, 1], tree.w[:, 1]))
  assert_true(np.array_equal(full.pi, tree.pi))


def test_reference_leaf_flow():
  spec = ArchitectureSpec(Kind.ModifiedDecisionList, 2, 1, 1, 1)
  tree = TreeParams([[0.0, 0.0]], [0.0, 0.0], [[1.0, 2.0]])
  flows = reference_leaf_flow(np.zeros(1), tree, spec)
  assert_true(np.allclose(flows, [0.5, 0.25, 0.25]))


def test_oblivious_expansion_check():
  report = oblivious_expansion_check(3, 100)
  assert_true(report.passed, str(report))
  assert_equal(report.cases, 100)


def test_forward_check():
  for spec in default_specs(max_depth=2):
    report = forward_check(spec, 20)
    assert_true(report.passed, str(report))


def test_equivalence_sweeps_pass():
  for kind in Kind:
    report = equivalence_sweep(ArchitectureSpec(kind, 2, 1, 3, 2), trials=5)
    assert_true(report.passed, str(report))
    assert_true(report.max_deviation < 1e-12)


def test_modified_decision_list_sweep_is_exact():
  report = equivalence_sweep(ArchitectureSpec(Kind.ModifiedDecisionList, 3, 1, 3, 2), trials=4)
  assert_equal(report.max_deviation, 0.0)
  assert_equal(report.cases, 4)


def test_equivalence_sweep_detects_a_missing_negation():
  def broken(tree, op, spec):
    adjusted = adjust_tree(tree, op, spec)
    if op.is_identity:
      return adjusted
    return TreeParams(np.abs(adjusted.w), np.abs(adjusted.b), adjusted.pi)

  report = equivalence_sweep(ArchitectureSpec(Kind.NonOblivious, 2, 1, 3, 2), trials=5, adjust=broken)
  assert_false(report.passed)
  assert_true(report.max_deviation > 0.1)
  assert_true('trial' in report.first_failure)
  assert_true('FAILED' in str(report))


def test_sweeps_are_limited_in_depth():
  with assert_raises(SpecError):
    equivalence_sweep(ArchitectureSpec(Kind.Oblivious, 4, 1, 3, 2), trials=1)


def test_gradient_check_passes():
  report = gradient_check(ArchitectureSpec(Kind.Oblivious, 3, 2, 3, 2))
  assert_true(report.passed, str(report))
  assert_equal(report.tolerance, 1e-6)
  assert_equal(report.cases, 2 * (3 * 3 + 3 + 2 * 8))


def test_reference_forward_is_complex_analytic():
  # A real tree evaluated with one weight shifted along the imaginary axis
  # keeps its real value and carries the derivative in the imaginary part.
  rng = np.random.default_rng(3)
  for kind in Kind:
    spec = ArchitectureSpec(kind, 2, 1, 3, 2)
    tree = random_tree(spec, rng)
    x = rng.normal(size=3)
    h, step = 1e-20, 1e-6
    w = tree.w.astype(complex)
    w[1, 0] += 1j * h
    shifted = types.SimpleNamespace(w=w, b=tree.b, pi=tree.pi)
    complex_out = reference_tree_forward(x, shifted, spec)
    plus, minus = tree.copy(), tree.copy()
    plus.w[1, 0] += step
    minus.w[1, 0] -= step
    central = (reference_tree_forward(x, plus, spec) - reference_tree_forward(x, minus, spec)) / (2 * step)
    assert_true(np.allclose(complex_out.real, reference_tree_forward(x, tree, spec), rtol=0, atol=1e-13))
    assert_true(np.allclose(complex_out.imag / h, central, rtol=0, atol=1e-8))


def test_lap_crosscheck():
  report = lap_crosscheck(100)
  assert_true(report.passed, str(report))
  assert_equal(report.max_deviation, 0.0)
  assert_equal(report.cases, 200)


def test_report():
  report = OracleReport('demo', 1e-3)
  report.record(1e-4, lambda: 'first')
  assert_true(report.passed)
  report.record(0.5, lambda: 'second')
  report.record(0.7, lambda: 'third')
  assert_false(report.passed)
  assert_equal(report.first_failure, 'second')
  assert_equal(report.max_deviation, 0.7)
  data = report.to_dict()
  assert_equal(data['cases'], 3)
  assert_false(data['passed'])


def test_verify():
  specs = [ArchitectureSpec(kind, 1, 1, 3, 2) for kind in Kind]
  reports = verify(specs, trials=3)
  assert_true(all(r.passed for r in reports), '\n'.join(str(r) for r in reports))
  assert_equal(reports[-1].name, 'assignment')
