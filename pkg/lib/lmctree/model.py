# Copyright (c) 2026  The lmctree authors
# Licensed under the MIT license, see LICENSE.txt.
"""
Soft tree ensembles: the four tree architectures, their parameter layout and
the forward computation.

Splitting nodes of perfect binary trees are indexed breadth-first (root 0,
children `2n+1` left and `2n+2` right). A leaf index encodes the path that
leads to it, bit `d` is set if the path went right at depth `d`. Oblivious
trees store one splitting rule per depth instead of one per node. Decision
lists are a chain of nodes where the left branch of node `d` ends in leaf
`d` and the right branch of the last node ends in leaf `D`; the modified
decision list fixes that last leaf at zero and does not store it.
"""

import collections
import enum
import functools
import logging

import numpy as np
from scipy.special import expit

from . import utils
from .errors import DataError, LmcError, SpecError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

# Rows are evaluated in chunks of this size to bound the memory of the
# (rows, trees, leaves, depth) intermediate.
_CHUNK_ROWS = 1024


class Kind(enum.Enum):
  NonOblivious = 'nonoblivious'
  Oblivious = 'oblivious'
  DecisionList = 'dlist'
  ModifiedDecisionList = 'dlist-mod'


class ArchitectureSpec(collections.namedtuple('ArchitectureSpec',
    'kind depth trees features classes')):
  """
  Immutable description of a tree ensemble. *kind* may be given as a #Kind
  or its string value.

  # Attributes
  kind (Kind): The tree family.
  depth (int): The tree depth D.
  trees (int): The number of trees M.
  features (int): The input dimension F.
  classes (int): The number of classes C.
  """

  __slots__ = ()

  def __new__(cls, kind, depth, trees, features, classes):
    try:
      kind = Kind(kind)
    except ValueError:
      raise SpecError('unknown tree kind {!r}'.format(kind))
    values = {'depth': depth, 'trees': trees, 'features': features, 'classes': classes}
    for name, value in values.items():
      if isinstance(value, bool) or int(value) != value or value < 1:
        raise SpecError('{} must be a positive integer, got {!r}'.format(name, value))
    return super(ArchitectureSpec, cls).__new__(
      cls, kind, int(depth), int(trees), int(features), int(classes))

  @property
  def layout(self):
    return get_layout(self.kind, self.depth)

  @property
  def node_count(self):
    return self.layout.node_count

  @property
  def leaf_count(self):
    """ The number of leaves including the fixed empty leaf. """
    return self.layout.leaf_count

  @property
  def stored_leaf_count(self):
    """ The number of trainable leaves. """
    return self.layout.stored_leaf_count

  def with_trees(self, trees):
    return self._replace(trees=trees)

  def to_dict(self):
    return collections.OrderedDict([
      ('kind', self.kind.value), ('depth', self.depth), ('trees', self.trees),
      ('features', self.features), ('classes', self.classes)])

  @classmethod
  def from_dict(cls, data):
    try:
      return cls(data['kind'], data['depth'], data['trees'], data['features'], data['classes'])
    except KeyError as exc:
      raise SpecError('spec is missing the key {}'.format(exc))

  def hash(self):
    return utils.hash_object(self.to_dict())


class Layout(object):
  """
  Index tables that describe the path from the root to every leaf of one
  tree shape. All tables have one row per leaf and one column per depth
  slot; slots beyond the end of a (shorter) decision-list path are inactive.

  # Attributes
  node_count (int): Number of distinct splitting-parameter slots.
  leaf_count (int): Number of leaves, the empty leaf included.
  stored_leaf_count (int): Number of leaves with trainable values.
  path_node (np.ndarray): `(L, D)` node slot visited at each depth.
  path_right (np.ndarray): `(L, D)` True where the path goes right.
  path_active (np.ndarray): `(L, D)` False for padding slots.
  node_depth (np.ndarray): `(N,)` depth of every node slot.
  node_weights (np.ndarray): `(N,)` number of leaves a node slot affects.
  """

  def __init__(self, kind, depth):
    self.kind = kind
    self.depth = depth
    if kind == Kind.NonOblivious:
      self._init_perfect(depth, shared=False)
    elif kind == Kind.Oblivious:
      self._init_perfect(depth, shared=True)
    else:
      self._init_decision_list(depth, kind == Kind.ModifiedDecisionList)
    for array in (self.path_node, self.path_right, self.path_active,
                  self.node_depth, self.node_weights):
      array.setflags(write=False)

  def _init_perfect(self, depth, shared):
    leaves = 2 ** depth
    self.node_count = depth if shared else leaves - 1
    self.leaf_count = leaves
    self.stored_leaf_count = leaves
    self.path_node = np.zeros((leaves, depth), dtype=np.intp)
    self.path_right = np.zeros((leaves, depth), dtype=bool)
    self.path_active = np.ones((leaves, depth), dtype=bool)
    for leaf in range(leaves):
      node = 0
      for d in range(depth):
        right = (leaf >> d) & 1
        self.path_node[leaf, d] = d if shared else node
        self.path_right[leaf, d] = bool(right)
        node = 2 * node + 1 + right
    if shared:
      self.node_depth = np.arange(depth, dtype=np.intp)
    else:
      self.node_depth = np.array([int(np.log2(n + 1)) for n in range(self.node_count)], dtype=np.intp)
    self.node_weights = 2 ** (depth - self.node_depth)

  def _init_decision_list(self, depth, modified):
    leaves = depth + 1
    self.node_count = depth
    self.leaf_count = leaves
    self.stored_leaf_count = depth if modified else leaves
    self.path_node = np.tile(np.arange(depth, dtype=np.intp), (leaves, 1))
    self.path_right = np.zeros((leaves, depth), dtype=bool)
    self.path_active = np.zeros((leaves, depth), dtype=bool)
    for leaf in range(leaves):
      # Leaf d is reached by going right at nodes 0..d-1 and left at node d,
      # the terminal leaf by going right at every node.
      self.path_active[leaf, :min(leaf + 1, depth)] = True
      self.path_right[leaf, :min(leaf, depth)] = True
    self.node_depth = np.arange(depth, dtype=np.intp)
    self.node_weights = leaves - self.node_depth

  @property
  def incidence(self):
    """
    `(L, D, N)` indicator that the path of leaf `l` uses node slot `n` at
    depth slot `d` (only active slots).
    """

    result = np.zeros(self.path_node.shape + (self.node_count,))
    leaves, depths = np.nonzero(self.path_active)
    result[leaves, depths, self.path_node[leaves, depths]] = 1.0
    return result


@functools.lru_cache(maxsize=None)
def get_layout(kind, depth):
  return Layout(Kind(kind), depth)


def parameter_count(spec):
  """
  Returns `(P, M * P)`, the number of parameters per tree and in the whole
  ensemble.
  """

  per_tree = (spec.features * spec.node_count + spec.node_count +
              spec.classes * spec.stored_leaf_count)
  return per_tree, spec.trees * per_tree


class TreeParams(object):
  """
  The parameters of one tree.

  # Attributes
  w (np.ndarray): `(F, N)` feature selection weights.
  b (np.ndarray): `(N,)` splitting thresholds.
  pi (np.ndarray): `(C, L)` leaf values (trainable leaves only).
  """

  __slots__ = ('w', 'b', 'pi')

  def __init__(self, w, b, pi):
    self.w = np.asarray(w, dtype=np.float64)
    self.b = np.asarray(b, dtype=np.float64)
    self.pi = np.asarray(pi, dtype=np.float64)

  def __repr__(self):
    return 'TreeParams(w={}, b={}, pi={})'.format(self.w.shape, self.b.shape, self.pi.shape)

  def __eq__(self, other):
    if not isinstance(other, TreeParams):
      return NotImplemented
    return (np.array_equal(self.w, other.w) and np.array_equal(self.b, other.b)
            and np.array_equal(self.pi, other.pi))

  def __ne__(self, other):
    return not (self == other)

  def copy(self):
    return TreeParams(self.w.copy(), self.b.copy(), self.pi.copy())

  def flatten(self):
    return np.concatenate([self.w.ravel(), self.b, self.pi.ravel()])

  @classmethod
  def unflatten(cls, flat, spec):
    F, N, C, L = spec.features, spec.node_count, spec.classes, spec.stored_leaf_count
    flat = np.asarray(flat, dtype=np.float64)
    return cls(flat[:F * N].reshape(F, N), flat[F * N:F * N + N], flat[F * N + N:].reshape(C, L))

  def check(self, spec):
    """
    Raises #SpecError if the shapes do not match *spec* or an entry is not
    finite.
    """

    expected = ((spec.features, spec.node_count), (spec.node_count,),
                (spec.classes, spec.stored_leaf_count))
    for name, array, shape in zip('w b pi'.split(), (self.w, self.b, self.pi), expected):
      if array.shape != shape:
        raise SpecError('tree parameter {} has shape {}, expected {}'.format(name, array.shape, shape))
      if not np.all(np.isfinite(array)):
        raise SpecError('tree parameter {} has non-finite entries'.format(name))


class EnsembleParams(object):
  """
  The parameters of all trees of an ensemble, stored as stacked arrays with
  the tree index as the leading axis.

  # Attributes
  spec (ArchitectureSpec):
  w (np.ndarray): `(M, F, N)`
  b (np.ndarray): `(M, N)`
  pi (np.ndarray): `(M, C, L)`
  """

  __slots__ = ('spec', 'w', 'b', 'pi')

  def __init__(self, spec, w, b, pi):
    self.spec = spec
    self.w = np.asarray(w, dtype=np.float64)
    self.b = np.asarray(b, dtype=np.float64)
    self.pi = np.asarray(pi, dtype=np.float64)
    M = spec.trees
    expected = ((M, spec.features, spec.node_count), (M, spec.node_count),
                (M, spec.classes, spec.stored_leaf_count))
    for name, array, shape in zip('w b pi'.split(), (self.w, self.b, self.pi), expected):
      if array.shape != shape:
        raise SpecError('ensemble parameter {} has shape {}, expected {}'.format(name, array.shape, shape))

  def __repr__(self):
    return 'EnsembleParams({!r})'.format(self.spec)

  def __eq__(self, other):
    if not isinstance(other, EnsembleParams):
      return NotImplemented
    return (self.spec == other.spec and np.array_equal(self.w, other.w) and
            np.array_equal(self.b, other.b) and np.array_equal(self.pi, other.pi))

  def __ne__(self, other):
    return not (self == other)

  def __len__(self):
    return self.spec.trees

  def __getitem__(self, index):
    return TreeParams(self.w[index], self.b[index], self.pi[index])

  @property
  def trees(self):
    return [self[m] for m in range(self.spec.trees)]

  @classmethod
  def from_trees(cls, spec, trees):
    trees = list(trees)
    if len(trees) != spec.trees:
      raise SpecError('expected {} trees, got {}'.format(spec.trees, len(trees)))
    for tree in trees:
      tree.check(spec)
    return cls(spec, np.stack([t.w for t in trees]), np.stack([t.b for t in trees]),
               np.stack([t.pi for t in trees]))

  def copy(self):
    return EnsembleParams(self.spec, self.w.copy(), self.b.copy(), self.pi.copy())

  def arrays(self):
    return (self.w, self.b, self.pi)

  def replace(self, w=None, b=None, pi=None):
    return EnsembleParams(
      self.spec,
      self.w if w is None else w,
      self.b if b is None else b,
      self.pi if pi is None else pi)

  def flatten(self):
    """
    Returns the `(M, P)` matrix of per-tree parameter vectors in the order
    `w` (row-major), `b`, `pi` (row-major).
    """

    M = self.spec.trees
    return np.concatenate([self.w.reshape(M, -1), self.b, self.pi.reshape(M, -1)], axis=1)

  @classmethod
  def unflatten(cls, spec, flat):
    F, N, C, L, M = spec.features, spec.node_count, spec.classes, spec.stored_leaf_count, spec.trees
    flat = np.asarray(flat, dtype=np.float64).reshape(M, -1)
    return cls(spec, flat[:, :F * N].reshape(M, F, N), flat[:, F * N:F * N + N],
               flat[:, F * N + N:].reshape(M, C, L))

  def check(self):
    for name, array in zip('w b pi'.split(), self.arrays()):
      if not np.all(np.isfinite(array)):
        raise SpecError('ensemble parameter {} has non-finite entries'.format(name))


def init_params(spec, seed):
  """
  Draws initial parameters like a fully connected layer would: `w` and `b`
  uniformly from `[-1/sqrt(F), 1/sqrt(F)]`, the leaf values uniformly from
  `[-1/sqrt(L), 1/sqrt(L)]` where `L` counts the trainable leaves. The
  result is a deterministic function of *spec* and *seed*.
  """

  rng = utils.random_stream(seed, utils.STREAM_INIT)
  M, F, N, C, L = spec.trees, spec.features, spec.node_count, spec.classes, spec.stored_leaf_count
  bound = 1.0 / np.sqrt(F)
  w = rng.uniform(-bound, bound, size=(M, F, N))
  b = rng.uniform(-bound, bound, size=(M, N))
  leaf_bound = 1.0 / np.sqrt(L)
  pi = rng.uniform(-leaf_bound, leaf_bound, size=(M, C, L))
  return EnsembleParams(spec, w, b, pi)


def sigmoid(z):
  """
  Overflow-safe logistic function, evaluated as `1/(1+exp(-z))` for
  non-negative and `exp(z)/(1+exp(z))` for negative arguments.
  """

  return expit(z)


def gate_arguments(X, w, b):
  """
  Returns `z = w_n . x + b_n` for every row, tree and node slot as an
  `(rows, M, N)` array. The sum over features runs in a fixed order so a
  row's result does not depend on the other rows.
  """

  return np.einsum('rf,mfn->rmn', X, w, optimize=False) + b[np.newaxis]


def flows_from_gates(Z, layout):
  """
  Computes the leaf flows `(rows, M, L)` from gate arguments `(rows, M, N)`.
  Left flows use `sigmoid(z)` and right flows `sigmoid(-z)`, which makes a
  subtree flip reproduce the flows exactly.
  """

  left = sigmoid(Z)[..., layout.path_node]
  right = sigmoid(-Z)[..., layout.path_node]
  factors = np.where(layout.path_right, right, left)
  factors = np.where(layout.path_active, factors, 1.0)
  return np.prod(factors, axis=-1)


def _as_rows(x, features):
  x = np.asarray(x, dtype=np.float64)
  single = x.ndim == 1
  X = np.atleast_2d(x)
  if X.ndim != 2 or X.shape[1] != features:
    raise SpecError('expected inputs with {} features, got shape {}'.format(features, x.shape))
  return X, single


def leaf_flow(x, tree, spec):
  """
  Returns the proportion of *x* that reaches every leaf of *tree*, the empty
  leaf of a modified decision list included. *x* may be a single feature
  vector or a `(rows, F)` matrix.
  """

  X, single = _as_rows(x, spec.features)
  Z = gate_arguments(X, tree.w[np.newaxis], tree.b[np.newaxis])
  mu = flows_from_gates(Z, spec.layout)[:, 0]
  return mu[0] if single else mu


def tree_forward(x, tree, spec):
  """
  Returns the logits `sum_l mu_l * pi_l` of a single tree.
  """

  X, single = _as_rows(x, spec.features)
  mu = leaf_flow(X, tree, spec)[:, :spec.stored_leaf_count]
  out = np.einsum('rl,cl->rc', mu, tree.pi, optimize=False)
  return out[0] if single else out


def tree_outputs(params, X):
  """
  Returns the per-tree logits `(rows, M, C)` for the rows of *X*.
  """

  spec = params.spec
  X, _ = _as_rows(X, spec.features)
  result = np.empty((X.shape[0], spec.trees, spec.classes))
  L = spec.stored_leaf_count
  for start in range(0, X.shape[0], _CHUNK_ROWS):
    chunk = X[start:start + _CHUNK_ROWS]
    mu = flows_from_gates(gate_arguments(chunk, params.w, params.b), spec.layout)
    result[start:start + len(chunk)] = np.einsum('rml,mcl->rmc', mu[..., :L], params.pi, optimize=False)
  return result


def sum_trees(outputs):
  """
  Sums per-tree outputs `(rows, M, C)` over the tree axis in ascending tree
  order.
  """

  total = outputs[:, 0].copy()
  for m in range(1, outputs.shape[1]):
    total += outputs[:, m]
  return total


def ensemble_forward(x, params):
  """
  Returns the ensemble logits for a feature vector or a `(rows, F)` matrix.
  """

  X, single = _as_rows(x, params.spec.features)
  out = sum_trees(tree_outputs(params, X))
  return out[0] if single else out


def predict(params, X):
  """
  Returns the predicted class of every row; ties between logits go to the
  lowest class index.
  """

  return np.argmax(ensemble_forward(np.atleast_2d(X), params), axis=1)


def accuracy(params, dataset):
  """
  Returns the percentage of rows of *dataset* whose predicted class equals
  the label.
  """

  if len(dataset) == 0:
    raise DataError('accuracy of an empty dataset is undefined')
  correct = predict(params, dataset.features) == dataset.labels
  return 100.0 * np.count_nonzero(correct) / len(dataset)


def check_same_spec(a, b):
  if a.spec != b.spec:
    raise SpecError('models do not share one architecture: {} vs {}'.format(a.spec, b.spec))


def checkpoint_dict(params, meta=None):
  data = collections.OrderedDict()
  data['format_version'] = FORMAT_VERSION
  data['spec'] = params.spec.to_dict()
  data['trees'] = [collections.OrderedDict([('w', t.w), ('b', t.b), ('pi', t.pi)])
                   for t in params.trees]
  if meta:
    data['meta'] = meta
  return data


def save_checkpoint(params, filename, meta=None):
  """
  Writes *params* as a JSON checkpoint. Floats are written with 17
  significant digits so that loading restores them exactly. *meta* is an
  optional dictionary stored next to the parameters.
  """

  params.check()
  utils.write_json(filename, checkpoint_dict(params, meta))
  logger.debug('wrote checkpoint %s', filename)


def load_checkpoint(filename):
  """
  Reads a checkpoint written by #save_checkpoint().

  # Returns
  (EnsembleParams, dict): The parameters and the metadata (possibly empty).
  # Raises
  LmcError: If the format version is unknown.
  SpecError: If the spec is invalid or the arrays do not match it.
  """

  data = utils.read_json(filename)
  if not isinstance(data, dict):
    raise LmcError('{}: not a checkpoint'.format(filename))
  if data.get('format_version') != FORMAT_VERSION:
    raise LmcError('{}: unsupported checkpoint format version {!r}'
      .format(filename, data.get('format_version')))
  spec = ArchitectureSpec.from_dict(data['spec'])
  trees = []
  for item in data['trees']:
    w = np.array(item['w'], dtype=np.float64).reshape(spec.features, spec.node_count)
    b = np.array(item['b'], dtype=np.float64).reshape(spec.node_count)
    pi = np.array(item['pi'], dtype=np.float64).reshape(spec.classes, spec.stored_leaf_count)
    trees.append(TreeParams(w, b, pi))
  return EnsembleParams.from_trees(spec, trees), data.get('meta', {})
