import collections

import numpy as np
import pandas as pd
from nose.tools import assert_almost_equal, assert_equal, assert_raises, assert_true

from lmctree.data import Dataset
from lmctree.errors import DataError, SpecError
from lmctree.evaluation import (BarrierCurve, accuracy_barrier, barrier, barrier_frame,
  barrier_suite, curve_frame, evaluate, interpolate, lambda_grid, loss_barrier, summarize)
from lmctree.invariance import adjust_ensemble, enumerate_ops
from lmctree.model import ArchitectureSpec, EnsembleParams, Kind, accuracy
from lmctree.oracle import random_ensemble


def _setup(kind=Kind.NonOblivious, seed=0):
  rng = np.random.default_rng(seed)
  spec = ArchitectureSpec(kind, 2, 4, 3, 2)
  A, B = random_ensemble(spec, rng), random_ensemble(spec, rng)
  dataset = Dataset(rng.normal(size=(60, 3)), rng.integers(0, 2, size=60), classes=2)
  return A, B, dataset


def test_lambda_grid():
  grid = lambda_grid(24)
  assert_equal(len(grid), 25)
  assert_equal(grid[0], 0.0)
  assert_equal(grid[-1], 1.0)
  assert_equal(grid[12], 0.5)
  assert_true(np.array_equal(lambda_grid(4), [0.0, 0.25, 0.5, 0.75, 1.0]))
  with assert_raises(ValueError):
    lambda_grid(0)


def test_interpolate():
  A, B, _ = _setup()
  assert_equal(interpolate(A, B, 1.0), A)
  assert_equal(interpolate(A, B, 0.0), B)
  negated = A.replace(-A.w, -A.b, -A.pi)
  middle = interpolate(A, negated, 0.5)
  assert_true(np.array_equal(middle.flatten(), np.zeros_like(A.flatten())))
  quarter = interpolate(A, B, 0.25)
  assert_true(np.allclose(quarter.w, 0.25 * A.w + 0.75 * B.w, rtol=0, atol=1e-15))
  with assert_raises(ValueError):
    interpolate(A, B, 1.5)
  with assert_raises(SpecError):
    interpolate(A, random_ensemble(A.spec.with_trees(2), np.random.default_rng(1)), 0.5)


def test_evaluate():
  A, _, dataset = _setup()
  acc, loss = evaluate(A, dataset)
  assert_equal(acc, accuracy(A, dataset))
  assert_true(loss > 0)
  with assert_raises(DataError):
    evaluate(A, Dataset(np.zeros((0, 3)), []))


def test_barrier_formulas():
  lambdas = [0.0, 0.5, 1.0]
  assert_almost_equal(accuracy_barrier(lambdas, [80.0, 79.0, 80.0], 80.0, 80.0), 1.0)
  assert_equal(accuracy_barrier(lambdas, [70.0, 70.0, 70.0], 70.0, 70.0), 0.0)
  assert_almost_equal(accuracy_barrier(lambdas, [60.0, 50.0, 80.0], 80.0, 60.0), 20.0)
  assert_almost_equal(loss_barrier(lambdas, [1.0, 2.0, 1.0], 1.0, 1.0), 1.0)
  # Above the chord the barrier is negative.
  assert_true(accuracy_barrier([0.0, 0.5, 1.0], [80.0, 90.0, 80.0], 80.0, 80.0) == 0.0)
  curve = BarrierCurve(lambdas, [60.0, 85.0, 80.0], [0.5, 0.3, 0.4], 80.0, 60.0, 0.4, 0.5)
  assert_equal(curve.best_interior_accuracy, 85.0)
  assert_almost_equal(curve.barrier, 0.0)


def test_barrier_endpoints():
  A, B, dataset = _setup(Kind.Oblivious)
  curve = barrier(A, B, dataset, lambda_grid(4))
  assert_equal(curve.accuracy[0], curve.accuracy_b)
  assert_equal(curve.accuracy[-1], curve.accuracy_a)
  assert_equal(curve.loss[0], curve.loss_b)
  assert_equal(curve.accuracy_a, accuracy(A, dataset))
  assert_true(curve.barrier >= 0.0)
  assert_equal(len(curve.lambdas), 5)


def test_barrier_of_a_model_with_itself_is_zero():
  A, _, dataset = _setup(Kind.DecisionList)
  curve = barrier(A, A, dataset)
  assert_almost_equal(curve.barrier, 0.0, places=9)
  assert_almost_equal(curve.loss_barrier, 0.0, places=9)


def test_barrier_rejects_bad_grids():
  A, B, dataset = _setup()
  for grid in ([0.0, 0.5], [0.5, 1.0], [0.0, 0.6, 0.4, 1.0], [-0.5, 0.0, 1.0], []):
    with assert_raises(ValueError):
      barrier(A, B, dataset, grid)
  with assert_raises(DataError):
    barrier(A, B, Dataset(np.zeros((0, 3)), []))


def test_full_alignment_removes_the_barrier_of_a_scrambled_copy():
  A, _, dataset = _setup(Kind.NonOblivious, seed=3)
  rng = np.random.default_rng(4)
  ops = enumerate_ops(A.spec)
  order = rng.permutation(4)
  shuffled = EnsembleParams(A.spec, A.w[order], A.b[order], A.pi[order])
  B = adjust_ensemble(shuffled, [ops[i] for i in rng.integers(1, len(ops), size=4)])
  entries = barrier_suite(A, B, collections.OrderedDict([('train', dataset)]), 'wm',
                          grid=lambda_grid(6))
  assert_equal([e.method for e in entries], ['naive', 'perm', 'full'])
  full = entries[2].curves['train']
  assert_almost_equal(full.barrier, 0.0, places=9)
  for entry in entries:
    curve = entry.curves['train']
    assert_equal(curve.accuracy_b, entries[0].curves['train'].accuracy_b)


def test_aligned_endpoints_keep_the_function_of_both_models():
  for seed, kind in enumerate(Kind):
    A, B, dataset = _setup(kind, seed=10 + seed)
    accuracy_a, loss_a = evaluate(A, dataset)
    accuracy_b, loss_b = evaluate(B, dataset)
    samples = dataset.features[:16]
    for matching in ('wm', 'am'):
      entries = barrier_suite(A, B, collections.OrderedDict([('train', dataset)]), matching,
                              grid=lambda_grid(4), samples=samples)
      assert_equal([e.method for e in entries], ['naive', 'perm', 'full'])
      for entry in entries:
        curve = entry.curves['train']
        assert_equal((curve.lambdas[0], curve.lambdas[-1]), (0.0, 1.0))
        assert_true(np.allclose([curve.accuracy_a, curve.accuracy[-1]], accuracy_a, rtol=0, atol=1e-9),
                    (kind, matching, entry.method))
        assert_true(np.allclose([curve.loss_a, curve.loss[-1]], loss_a, rtol=0, atol=1e-9),
                    (kind, matching, entry.method))
        assert_true(np.allclose([curve.accuracy_b, curve.accuracy[0]], accuracy_b, rtol=0, atol=1e-9))
        assert_true(np.allclose([curve.loss_b, curve.loss[0]], loss_b, rtol=0, atol=1e-9))


def test_suite_with_activation_matching():
  A, B, dataset = _setup(Kind.Oblivious, seed=5)
  entries = barrier_suite(A, B, collections.OrderedDict([('train', dataset), ('test', dataset)]),
                          'am', methods=('naive', 'full'), grid=lambda_grid(2))
  assert_equal(len(entries), 2)
  assert_equal(list(entries[1].curves), ['train', 'test'])
  assert_equal(entries[1].alignment.method, 'am')


def test_frames_and_summary():
  A, B, dataset = _setup(seed=6)
  entries = barrier_suite(A, B, collections.OrderedDict([('train', dataset)]), 'wm',
                          grid=lambda_grid(2))
  curves = curve_frame(entries, seed_a=1, seed_b=2)
  assert_equal(list(curves.columns), ['seed_a', 'seed_b', 'method', 'matching', 'split',
                                      'lambda', 'accuracy', 'loss'])
  assert_equal(len(curves), 3 * 3)
  barriers = barrier_frame(entries, seed_a=1, seed_b=2)
  assert_equal(len(barriers), 3)
  assert_true(np.allclose(barriers['barrier'], [e.curves['train'].barrier for e in entries]))


def test_summarize_uses_population_std():
  frame = pd.DataFrame([
    ('full', 'test', 1.0, 0.1),
    ('full', 'test', 3.0, 0.3),
    ('naive', 'test', 10.0, 1.0),
  ], columns=['method', 'split', 'barrier', 'loss_barrier'])
  summary = summarize(frame)
  assert_equal(list(summary), ['full', 'naive'])
  assert_equal(summary['full']['test']['barrier_mean'], 2.0)
  assert_equal(summary['full']['test']['barrier_std'], 1.0)
  assert_equal(summary['full']['test']['pairs'], 2)
  assert_equal(summary['naive']['test']['barrier_std'], 0.0)
  assert_almost_equal(summary['full']['test']['loss_barrier_std'], 0.1)
