# Copyright (c) 2026  The lmctree authors
# Licensed under the MIT license, see LICENSE.txt.

import hashlib
import io
import json
import math
import numbers
import os

import numpy as np

#: Stream tags passed to #random_stream() so that independent consumers of
#: one seed never share random numbers.
STREAM_INIT = 0
STREAM_SHUFFLE = 1
STREAM_SUBSAMPLE = 2
STREAM_SPLIT = 3
STREAM_SYNTH = 4
STREAM_SAMPLES = 5
STREAM_ORACLE = 6


def random_stream(seed, *tags):
  """
  Returns a #numpy.random.Generator that is a deterministic function of
  *seed* and the integer *tags*. The generator does not depend on the
  platform or on any global random state.

  # Parameters
  seed (int): A non-negative seed.
  tags (int): Further non-negative integers that select a sub-stream, for
    example `(STREAM_SHUFFLE, epoch)`.
  """

  seed = int(seed)
  if seed < 0:
    raise ValueError('seed must be non-negative, got {}'.format(seed))
  entropy = [seed] + [int(x) for x in tags]
  return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def format_float(value):
  """
  Formats *value* with 17 significant digits, which round-trips every 64-bit
  float exactly. Non-finite values are rejected.
  """

  value = float(value)
  if not math.isfinite(value):
    raise ValueError('non-finite value {!r} can not be serialized'.format(value))
  return '%.17g' % value


def dumps_json(obj, indent=None, _level=0):
  """
  Like #json.dumps() but floats (including numpy scalars and arrays) are
  written with #format_float(). Dictionary keys keep their insertion order.
  """

  if isinstance(obj, np.ndarray):
    obj = obj.tolist()
  if obj is None or isinstance(obj, (bool, np.bool_)):
    return json.dumps(bool(obj) if obj is not None else None)
  if isinstance(obj, numbers.Integral):
    return str(int(obj))
  if isinstance(obj, numbers.Real):
    return format_float(obj)
  if isinstance(obj, str):
    return json.dumps(obj)

  if indent is None:
    sep, open_pad, close_pad = ', ', '', ''
  else:
    pad = '\n' + ' ' * (indent * (_level + 1))
    sep, open_pad, close_pad = ',' + pad, pad, '\n' + ' ' * (indent * _level)

  if isinstance(obj, dict):
    if not obj:
      return '{}'
    items = (json.dumps(str(k)) + ': ' + dumps_json(v, indent, _level + 1)
      for k, v in obj.items())
    return '{' + open_pad + sep.join(items) + close_pad + '}'
  if isinstance(obj, (list, tuple)):
    if not obj:
      return '[]'
    # Numeric rows stay on one line, they would be unreadable otherwise.
    if all(isinstance(x, numbers.Number) for x in obj):
      return '[' + ', '.join(dumps_json(x) for x in obj) + ']'
    items = (dumps_json(v, indent, _level + 1) for v in obj)
    return '[' + open_pad + sep.join(items) + close_pad + ']'
  raise TypeError('can not serialize {}'.format(type(obj).__name__))


def write_json(filename, obj):
  dirname = os.path.dirname(filename)
  if dirname and not os.path.isdir(dirname):
    os.makedirs(dirname)
  with io.open(filename, 'w', encoding='utf8') as fp:
    fp.write(dumps_json(obj, indent=2))
    fp.write('\n')


def read_json(filename):
  with io.open(filename, encoding='utf8') as fp:
    return json.load(fp)


def hash_object(obj, length=16):
  """
  Returns a hex SHA-256 digest (truncated to *length* characters) of the
  canonical JSON dump of *obj* (sorted keys, exact floats).
  """

  text = dumps_json(_sort_keys(obj))
  return hashlib.sha256(text.encode('utf8')).hexdigest()[:length]


def hash_file(filename, length=16):
  digest = hashlib.sha256()
  with io.open(filename, 'rb') as fp:
    for chunk in iter(lambda: fp.read(1 << 16), b''):
      digest.update(chunk)
  return digest.hexdigest()[:length]


def _sort_keys(obj):
  if isinstance(obj, dict):
    return dict((k, _sort_keys(obj[k])) for k in sorted(obj))
  if isinstance(obj, (list, tuple)):
    return [_sort_keys(x) for x in obj]
  return obj
