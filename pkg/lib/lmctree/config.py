# Copyright (c) 2026  The lmctree authors
# Licensed under the MIT license, see LICENSE.txt.
"""
Experiment configuration. A configuration is a JSON object whose keys mirror
the command-line flags (with underscores); keys that are absent receive the
defaults of the selected preset, and every key can be overridden on the
command line.

# Example Configuration

    {
      "data": "datasets/electricity.csv",
      "arch": "oblivious",
      "depth": 2,
      "trees": 256,
      "seeds_a": [1, 3, 5, 7, 9],
      "seeds_b": [2, 4, 6, 8, 10]
    }
"""

import collections
import copy
import io
import json
import os

from . import utils
from .errors import ConfigError
from .evaluation import lambda_grid
from .invariance import DEFAULT_BUDGET
from .matching import DEFAULT_SAMPLES, LEVELS, METHODS
from .model import ArchitectureSpec, Kind
from .training import DEFAULT_LEARNING_RATES, TrainConfig

FORMAT_VERSION = 1

DEFAULT_CONFIG_FILE = 'lmctree.json'

#: Keys that only say where and how fast a run happens.
EXECUTION_KEYS = ('out', 'jobs')

_DESK = collections.OrderedDict([
  ('data', None),
  ('classes', None),
  ('synth', collections.OrderedDict([
    ('n', 4000), ('features', 8), ('classes', 2), ('separation', 2.0), ('seed', 0)])),
  ('data_seed', 0),
  ('split_seed', 0),
  ('arch', Kind.NonOblivious.value),
  ('depth', 2),
  ('trees', 64),
  ('matching', 'wm'),
  ('invariances', 'full'),
  ('samples', DEFAULT_SAMPLES),
  ('budget', DEFAULT_BUDGET),
  ('lambda_steps', 24),
  ('seeds_a', [1, 3, 5, 7, 9]),
  ('seeds_b', [2, 4, 6, 8, 10]),
  ('lr_candidates', list(DEFAULT_LEARNING_RATES)),
  ('epochs', 20),
  ('batch_size', 512),
  ('split_data', False),
  ('jobs', 1),
  ('out', 'out'),
])

_LARGE = copy.deepcopy(_DESK)
_LARGE.update([('trees', 256), ('epochs', 50), ('batch_size', 512)])

PRESETS = collections.OrderedDict([('desk', _DESK), ('large', _LARGE)])


class ExperimentConfig(object):
  """
  The effective configuration of an experiment. Values are accessible as
  attributes (`config.depth`) and the whole configuration as #to_dict().
  """

  def __init__(self, values):
    object.__setattr__(self, '_values', collections.OrderedDict(values))
    self.validate()

  def __getattr__(self, name):
    values = self.__dict__.get('_values')
    if values is None or name not in values:
      raise AttributeError(name)
    return values[name]

  def __setattr__(self, name, value):
    raise AttributeError('ExperimentConfig is read-only')

  def __repr__(self):
    return 'ExperimentConfig({})'.format(dict(self._values))

  def validate(self):
    v = self._values
    unknown = set(v) - set(_DESK)
    if unknown:
      raise ConfigError('unknown configuration keys: {}'.format(', '.join(sorted(unknown))))
    try:
      Kind(v['arch'])
    except ValueError:
      raise ConfigError('unknown architecture {!r}'.format(v['arch']))
    if v['matching'] not in METHODS:
      raise ConfigError('unknown matching method {!r}'.format(v['matching']))
    if v['invariances'] not in LEVELS:
      raise ConfigError('unknown invariance level {!r}'.format(v['invariances']))
    if len(v['seeds_a']) != len(v['seeds_b']):
      raise ConfigError('seeds_a and seeds_b must have the same length ({} vs {})'.format(
        len(v['seeds_a']), len(v['seeds_b'])))
    if any(int(s) != s or s < 0 for s in list(v['seeds_a']) + list(v['seeds_b'])):
      raise ConfigError('seeds must be non-negative integers')
    if int(v['samples']) != v['samples'] or v['samples'] < 1:
      raise ConfigError('samples must be >= 1, got {!r}'.format(v['samples']))
    if int(v['jobs']) != v['jobs'] or v['jobs'] < 1:
      raise ConfigError('jobs must be >= 1, got {!r}'.format(v['jobs']))
    try:
      lambda_grid(v['lambda_steps'])
      self.train_config(0)
      if v['data'] is None:
        ArchitectureSpec(v['arch'], v['depth'], v['trees'], v['synth']['features'], v['synth']['classes'])
    except (ValueError, KeyError) as exc:
      raise ConfigError(str(exc))

  def to_dict(self):
    return copy.deepcopy(self._values)

  def hash(self):
    return config_hash(self)

  def replace(self, **overrides):
    values = self.to_dict()
    values.update(overrides)
    return ExperimentConfig(values)

  def train_config(self, seed):
    return TrainConfig(learning_rates=self.lr_candidates, batch_size=self.batch_size,
                       epochs=self.epochs, seed=seed)

  def spec(self, features, classes):
    return ArchitectureSpec(self.arch, self.depth, self.trees, features, classes)

  def lambda_grid(self):
    return lambda_grid(self.lambda_steps)

  @property
  def seed_pairs(self):
    return list(zip(self.seeds_a, self.seeds_b))


def config_hash(config):
  """
  Returns the SHA-256 of the canonical JSON dump (sorted keys) of the
  effective configuration. The keys in #EXECUTION_KEYS do not change any
  result and are left out, so that runs into different directories or with
  a different number of jobs carry the same hash.
  """

  values = config.to_dict() if isinstance(config, ExperimentConfig) else config
  values = {k: v for k, v in values.items() if k not in EXECUTION_KEYS}
  return utils.hash_object(values, length=64)


def load_config(filename=None, preset='desk', overrides=None):
  """
  Builds the effective configuration: the preset defaults, updated with the
  keys of the JSON file *filename* and then with the non-None *overrides*.
  """

  if preset not in PRESETS:
    raise ConfigError('unknown preset {!r}, choose one of {}'.format(preset, ', '.join(PRESETS)))
  values = copy.deepcopy(PRESETS[preset])
  if filename:
    try:
      with io.open(filename, encoding='utf8') as fp:
        data = json.load(fp, object_pairs_hook=collections.OrderedDict)
    except ValueError as exc:
      raise ConfigError('{}: invalid JSON ({})'.format(filename, exc))
    except (IOError, OSError) as exc:
      raise ConfigError('{}: {}'.format(filename, exc))
    if not isinstance(data, dict):
      raise ConfigError('{}: expected a JSON object'.format(filename))
    synth = data.pop('synth', None)
    for key, value in data.items():
      values[key] = value
    if synth is not None:
      values['synth'].update(synth)
  for key, value in (overrides or {}).items():
    if value is not None:
      values[key] = value
  return ExperimentConfig(values)


def write_template(filename=DEFAULT_CONFIG_FILE, preset='desk'):
  """
  Writes the defaults of *preset* to *filename*. Returns False without
  writing if the file already exists.
  """

  if os.path.exists(filename):
    return False
  utils.write_json(filename, PRESETS[preset])
  return True
