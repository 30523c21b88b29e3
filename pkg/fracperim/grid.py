'''Partitions of R^n discretized on a uniform grid over the box [-L/2, L/2]^n.

Inside the box every cell carries one chamber label.  Outside the box the
labels come from an analytic exterior rule, so unbounded complements are
represented exactly and sampled only when an energy is evaluated.
'''

import dataclasses
import math
import logging
from typing import Tuple

import numpy as np

from . import tensions
from . import util

log = logging.getLogger(__name__)

NO_LABEL = -1


class PartitionError(ValueError):
    pass


class ResolutionError(PartitionError):
    def __init__(self, message, min_cells_per_side):
        super().__init__(message)
        self.min_cells_per_side = min_cells_per_side


class PartitionFormatError(PartitionError):
    pass


@dataclasses.dataclass(frozen=True)
class GridSpec:
    n: int
    cells_per_side: int
    side: float = 1.0

    def __post_init__(self):
        if self.n not in (2, 3):
            raise PartitionError('dimension must be 2 or 3, got %r' % (self.n,))
        if int(self.cells_per_side) != self.cells_per_side or self.cells_per_side < 2:
            raise PartitionError('cells_per_side must be an integer >= 2, got %r'
                    % (self.cells_per_side,))
        if not (math.isfinite(self.side) and self.side > 0):
            raise PartitionError('box side must be positive and finite, got %r' % (self.side,))

    @property
    def h(self):
        return self.side / self.cells_per_side

    @property
    def shape(self):
        return (self.cells_per_side,) * self.n

    @property
    def n_cells(self):
        return self.cells_per_side ** self.n

    @property
    def cell_volume(self):
        return self.h ** self.n

    def centers_1d(self):
        return -0.5 * self.side + (np.arange(self.cells_per_side) + 0.5) * self.h

    def centers(self):
        'Array of shape (N,)*n + (n,) with every cell center'
        c = self.centers_1d()
        return np.stack(np.meshgrid(*([c] * self.n), indexing='ij'), axis=-1)

    def boundary_distance(self):
        'Per cell: number of cell layers between the cell and the box boundary'
        k = np.arange(self.cells_per_side)
        d1 = np.minimum(k, self.cells_per_side - 1 - k)
        grids = np.meshgrid(*([d1] * self.n), indexing='ij')
        return np.minimum.reduce(grids)

    def interior_mask(self, frozen_layers):
        return self.boundary_distance() >= frozen_layers


#
# Exterior rules
#

@dataclasses.dataclass(frozen=True)
class HalfspacePair:
    '''Points with coordinate >= offset along axis belong to upper, the
       rest to lower.'''
    upper: int
    lower: int
    axis: int
    offset: float = 0.0

    def chambers(self):
        return frozenset((self.upper, self.lower))

    def labels_at(self, points):
        points = np.asarray(points)
        return np.where(points[..., self.axis] >= self.offset, self.upper, self.lower)

    def split_planes(self):
        return ((self.axis, self.offset),)

    def token(self):
        tok = 'halfpair:%d,%d,axis%d' % (self.upper + 1, self.lower + 1, self.axis + 1)
        if self.offset:
            tok += ',offset=%s' % util.fmt_float(self.offset)
        return tok


@dataclasses.dataclass(frozen=True)
class Constant:
    label: int

    def chambers(self):
        return frozenset((self.label,))

    def labels_at(self, points):
        return np.full(np.asarray(points).shape[:-1], self.label)

    def split_planes(self):
        return ()

    def token(self):
        return 'constant:%d' % (self.label + 1)


@dataclasses.dataclass(frozen=True)
class NoExterior:
    def chambers(self):
        return frozenset()

    def labels_at(self, points):
        return np.full(np.asarray(points).shape[:-1], NO_LABEL)

    def split_planes(self):
        return ()

    def token(self):
        return 'none'


NO_EXTERIOR = NoExterior()


def parse_exterior(token):
    try:
        if token == 'none':
            return NO_EXTERIOR
        kind, _, rest = token.partition(':')
        if kind == 'constant':
            return Constant(int(rest) - 1)
        if kind == 'halfpair':
            parts = rest.split(',')
            upper, lower = int(parts[0]) - 1, int(parts[1]) - 1
            if not parts[2].startswith('axis'):
                raise ValueError(parts[2])
            axis = int(parts[2][len('axis'):]) - 1
            offset = 0.0
            for extra in parts[3:]:
                key, _, value = extra.partition('=')
                if key != 'offset':
                    raise ValueError(extra)
                offset = float(value)
            return HalfspacePair(upper, lower, axis, offset)
    except (ValueError, IndexError):
        pass
    raise PartitionFormatError('unrecognized exterior rule %r' % token)


class GridPartition:
    '''Chamber labels (0-based) on every cell plus the exterior rule.
       Instances are immutable; with_labels() makes modified copies.'''

    def __init__(self, spec, labels, m, exterior=NO_EXTERIOR):
        labels = np.array(labels, dtype=np.int64)
        if labels.shape != spec.shape:
            raise PartitionError('labels have shape %s, grid needs %s'
                    % (labels.shape, spec.shape))
        if m < 1:
            raise PartitionError('chamber count must be positive, got %d' % m)
        if labels.size and (labels.min() < 0 or labels.max() >= m):
            raise PartitionError('labels must lie in 1..%d' % m)
        for c in exterior.chambers():
            if not 0 <= c < m:
                raise PartitionError('exterior chamber %d outside 1..%d' % (c + 1, m))
        if isinstance(exterior, HalfspacePair):
            if exterior.upper == exterior.lower:
                raise PartitionError('half-space pair needs two distinct chambers')
            if not 0 <= exterior.axis < spec.n:
                raise PartitionError('axis %d outside 1..%d' % (exterior.axis + 1, spec.n))
        labels.setflags(write=False)
        self.spec = spec
        self.labels = labels
        self.m = m
        self.exterior = exterior

    def with_labels(self, labels):
        return GridPartition(self.spec, labels, self.m, self.exterior)

    def mask(self, chambers):
        return np.isin(self.labels, list(chambers))

    def chambers_present(self):
        return frozenset(np.unique(self.labels).tolist()) | self.exterior.chambers()

    def __eq__(self, other):
        if not isinstance(other, GridPartition):
            return NotImplemented
        return (self.spec == other.spec and self.m == other.m
                and self.exterior == other.exterior
                and np.array_equal(self.labels, other.labels))

    __hash__ = None

    def __repr__(self):
        return 'GridPartition(%s, m=%d, exterior=%s)' % (self.spec, self.m, self.exterior.token())


@dataclasses.dataclass(frozen=True)
class LaminatePath:
    chambers: Tuple[int, ...]
    stage: int = 0

    def __post_init__(self):
        if len(self.chambers) < 2:
            raise PartitionError('a laminate path needs at least two chambers')
        if len(set(self.chambers)) != len(self.chambers):
            raise PartitionError('laminate path chambers must be distinct: %s'
                    % [c + 1 for c in self.chambers])
        if self.stage < 0:
            raise PartitionError('laminate stage must be >= 0, got %d' % self.stage)

    @property
    def length(self):
        return len(self.chambers) - 1


def _check_axis(spec, axis):
    if not 0 <= axis < spec.n:
        raise PartitionError('axis %d outside 1..%d' % (axis + 1, spec.n))

def _column(spec, axis, column):
    shape = [1] * spec.n
    shape[axis] = spec.cells_per_side
    return np.broadcast_to(np.asarray(column).reshape(shape), spec.shape)

def make_halfspace_pair(spec, i, j, axis, m=None):
    if i == j:
        raise PartitionError('half-space pair needs two distinct chambers, got %d twice' % (i + 1))
    _check_axis(spec, axis)
    if m is None:
        m = max(i, j) + 1
    # cells whose centre has coordinate >= 0
    upper = np.arange(spec.cells_per_side) >= spec.cells_per_side // 2
    labels = _column(spec, axis, np.where(upper, i, j))
    return GridPartition(spec, labels, m, HalfspacePair(i, j, axis))

def make_constant(spec, label, m):
    return GridPartition(spec, np.full(spec.shape, label), m, Constant(label))

def _slab_layers(cells, path):
    '''Cell index range [lo, hi) of the laminate slab along the axis, or
       None when the slab would leave no layer for path[0] or path[-1].'''
    strips = path.length - 1
    width = max(strips, int(math.floor(cells * 2.0 ** -(path.stage + 1) + 0.5)))
    lo = cells // 2 - width // 2
    hi = lo + width
    if lo < 1 or hi > cells - 1:
        return None
    return lo, hi

def laminate_min_cells(path):
    '''Smallest N giving every strip at least one cell layer and leaving
       room for both outer chambers.'''
    cells = 2 ** (path.stage + 1) * (path.length - 1)
    while _slab_layers(cells, path) is None:
        cells += 1
    return cells

def make_laminate(spec, path, axis, m=None):
    '''Flat lamination of the interface between path[0] (upper side) and
       path[-1] (lower side): a slab of width L 2^-(q+1) centred on the
       interface is filled, top to bottom, with strips of the intermediate
       chambers.'''
    first, last = path.chambers[0], path.chambers[-1]
    if m is None:
        m = max(path.chambers) + 1
    if path.length == 1:
        return make_halfspace_pair(spec, first, last, axis, m)
    _check_axis(spec, axis)
    layers = _slab_layers(spec.cells_per_side, path)
    if spec.cells_per_side < 2 ** (path.stage + 1) * (path.length - 1) or layers is None:
        min_n = laminate_min_cells(path)
        raise ResolutionError(
            'stage %d laminate with %d strips needs at least N = %d cells per side, got %d'
            % (path.stage, path.length - 1, min_n, spec.cells_per_side), min_n)
    lo, hi = layers
    column = np.full(spec.cells_per_side, last, dtype=np.int64)
    column[hi:] = first
    # strips are whole cell layers, the top one gets path[1]
    blocks = np.array_split(np.arange(hi - 1, lo - 1, -1), path.length - 1)
    for chamber, block in zip(path.chambers[1:-1], blocks):
        column[block] = chamber
    return GridPartition(spec, _column(spec, axis, column), m, HalfspacePair(first, last, axis))

def recovery_sequence(spec, sigma, i, j, axis, stages):
    '''Laminates along the optimal relaxed path from i to j, one per stage.
       Their classical energy approaches the relaxed coefficient.'''
    chambers = tuple(tensions.optimal_path(sigma, i, j))
    log.info('recovery path %s for chambers %d,%d',
            [c + 1 for c in chambers], i + 1, j + 1)
    return [make_laminate(spec, LaminatePath(chambers, q), axis, m=sigma.m) for q in stages]

def make_random(template, rng, frozen_layers=1, chambers=None):
    '''Random labels on the cells at least frozen_layers away from the box
       boundary; the remaining cells keep the template labels.'''
    if chambers is None:
        chambers = range(template.m)
    chambers = np.asarray(list(chambers))
    free = template.spec.interior_mask(frozen_layers)
    labels = template.labels.copy()
    labels[free] = chambers[rng.integers(0, len(chambers), size=int(free.sum()))]
    return template.with_labels(labels)

def volumes(partition):
    counts = np.bincount(partition.labels.ravel(), minlength=partition.m)
    return counts * partition.spec.cell_volume

def l1_distance(a, b):
    if a.spec != b.spec:
        raise PartitionError('cannot compare partitions on different grids: %s vs %s'
                % (a.spec, b.spec))
    m = max(a.m, b.m)
    differ = a.labels != b.labels
    counts = (np.bincount(a.labels[differ], minlength=m)
              + np.bincount(b.labels[differ], minlength=m))
    return counts * a.spec.cell_volume


#
# Partition files
#

HEADER_KEYS = ('n', 'N', 'L', 'm', 'exterior')

def serialize(partition) -> bytes:
    spec = partition.spec
    lines = ['n=%d N=%d L=%s m=%d exterior=%s' % (spec.n, spec.cells_per_side,
            util.fmt_float(spec.side), partition.m, partition.exterior.token())]
    for row in partition.labels.reshape(-1, spec.cells_per_side) + 1:
        lines.append(' '.join(str(x) for x in row))
    return ('\n'.join(lines) + '\n').encode('ascii')

def deserialize(data) -> GridPartition:
    if isinstance(data, bytes):
        try:
            data = data.decode('ascii')
        except UnicodeDecodeError:
            raise PartitionFormatError('partition data is not ASCII')
    header, _, body = data.partition('\n')
    fields = {}
    for tok in header.split():
        key, sep, value = tok.partition('=')
        if not sep or key not in HEADER_KEYS:
            raise PartitionFormatError('malformed header token %r' % tok)
        fields[key] = value
    missing = [k for k in HEADER_KEYS if k not in fields]
    if missing:
        raise PartitionFormatError('header is missing %s' % ', '.join(missing))
    try:
        spec = GridSpec(int(fields['n']), int(fields['N']), float(fields['L']))
        m = int(fields['m'])
    except PartitionError as err:
        raise PartitionFormatError('bad grid in header: %s' % err)
    except ValueError as err:
        raise PartitionFormatError('malformed header: %s' % err)
    exterior = parse_exterior(fields['exterior'])

    tokens = body.split()
    if len(tokens) < spec.n_cells:
        raise PartitionFormatError('truncated payload: %d of %d labels'
                % (len(tokens), spec.n_cells))
    if len(tokens) > spec.n_cells:
        raise PartitionFormatError('%d labels found, grid has %d cells'
                % (len(tokens), spec.n_cells))
    try:
        labels = np.array([int(t) for t in tokens], dtype=np.int64)
    except ValueError as err:
        raise PartitionFormatError('bad label: %s' % err)
    bad = np.flatnonzero((labels < 1) | (labels > m))
    if bad.size:
        raise PartitionFormatError('label %d at position %d outside 1..%d'
                % (labels[bad[0]], bad[0] + 1, m))
    try:
        return GridPartition(spec, (labels - 1).reshape(spec.shape), m, exterior)
    except PartitionError as err:
        raise PartitionFormatError(str(err))

def save(partition, path):
    with open(path, 'wb') as f:
        f.write(serialize(partition))

def load(path):
    with open(path, 'rb') as f:
        return deserialize(f.read())
