"""
End-to-end checks of the experiment pipelines. The desk-scale runs take
minutes and only run with `LMCTREE_SLOW=1`.
"""

import os
import tempfile
import unittest

import numpy as np
import pandas as pd
from nose.tools import assert_equal, assert_true

from lmctree import experiment
from lmctree.config import load_config
from lmctree.model import ArchitectureSpec, Kind
from lmctree.oracle import equivalence_sweep, lap_crosscheck

SLOW = os.environ.get('LMCTREE_SLOW') == '1'


def _require_slow():
  if not SLOW:
    raise unittest.SkipTest('set LMCTREE_SLOW=1 to run desk-scale experiments')


def _config(out, **overrides):
  values = {
    'synth': {'n': 400, 'features': 4}, 'depth': 1, 'trees': 4, 'epochs': 3,
    'batch_size': 64, 'lr_candidates': [0.01], 'seeds_a': [1], 'seeds_b': [2],
    'lambda_steps': 4, 'out': out,
  }
  values.update(overrides)
  synth = values.pop('synth')
  config = load_config(overrides=values)
  return config.replace(synth=dict(config.synth, **synth))


def test_invariance_sweep_all_architectures():
  for kind in Kind:
    for depth in (1, 2, 3):
      report = equivalence_sweep(ArchitectureSpec(kind, depth, 1, 3, 2), trials=2, inputs=5)
      assert_true(report.passed, str(report))


def test_assignment_crosscheck():
  assert_true(lap_crosscheck(50, seed=7).passed)


def test_depth_one_architectures_coincide():
  frames = {}
  with tempfile.TemporaryDirectory() as tmp:
    for kind in (Kind.NonOblivious, Kind.Oblivious, Kind.DecisionList):
      config = _config(os.path.join(tmp, kind.value), arch=kind.value)
      train, test = experiment.prepare_data(config, cache=False)
      _, barriers = experiment.run_pair(config.to_dict(), 1, 2, train, test)
      frames[kind] = barriers
  reference = frames[Kind.NonOblivious]
  for kind in (Kind.Oblivious, Kind.DecisionList):
    for column in ('accuracy_a', 'accuracy_b', 'barrier', 'loss_barrier'):
      assert_true(np.array_equal(frames[kind][column].values, reference[column].values), column)


def test_matrix_is_reproducible_across_jobs():
  with tempfile.TemporaryDirectory() as tmp:
    config = _config(tmp, seeds_a=[1, 3], seeds_b=[2, 4])
    train, test = experiment.prepare_data(config)
    _, serial, _ = experiment.run_matrix(config, train, test)
    _, parallel, _ = experiment.run_matrix(config.replace(jobs=2), train, test)
  assert_true(serial.equals(parallel))


def _desk_config(out, separation):
  return _config(out, synth={'n': 4000, 'features': 8, 'separation': separation},
                 depth=2, trees=64, epochs=20, batch_size=512,
                 lr_candidates=[0.01, 0.001, 0.0001],
                 seeds_a=[1, 3, 5, 7, 9], seeds_b=[2, 4, 6, 8, 10], lambda_steps=24)


def test_desk_barriers_decrease_with_alignment():
  _require_slow()
  frames = []
  for separation in (1.5, 2.0):
    with tempfile.TemporaryDirectory() as tmp:
      config = _desk_config(tmp, separation)
      train, test = experiment.prepare_data(config)
      _, barriers, _ = experiment.run_matrix(config, train, test)
    assert_equal(len(barriers), 5 * 3 * 2)
    frames.append(barriers)
  means = pd.concat(frames).groupby(['split', 'method'])['barrier'].mean()
  naive, perm, full = (means['train', m] for m in ('naive', 'perm', 'full'))
  assert_true(naive > perm >= full - 0.2, (naive, perm, full))
  assert_true(means['test', 'full'] < means['test', 'naive'] / 3.0, means)


def test_desk_merge_split():
  _require_slow()
  with tempfile.TemporaryDirectory() as tmp:
    config = _config(tmp, synth={'n': 4000, 'features': 8, 'separation': 3.0}, depth=2, trees=64,
                     epochs=20, batch_size=512, seeds_a=[1, 3, 5, 7, 9], seeds_b=[2, 4, 6, 8, 10])
    train, test = experiment.prepare_data(config)
    _, pairs, summary = experiment.run_merge_split(config, train, test)
  assert_equal(len(pairs), 5 * 3)
  for method in ('naive', 'perm', 'full'):
    assert_equal(summary[method]['pairs'], 5)
  assert_true(summary['full']['improved_pairs'] >= 4, summary['full'])
  assert_true(summary['full']['reference_test_accuracy_mean'] > 60.0)
