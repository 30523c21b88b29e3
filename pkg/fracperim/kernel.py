'''Fractional interaction energies on grid partitions.

Every interaction between grid cells reduces to a table over integer cell
offsets.  For two cubes of side h at offset k,

    I = h^(n-2s) J(k),    J(k) = integral over unit cubes of |x-y|^-(n+2s)

Far offsets (centre distance >= 2 sqrt(n) cells) use the midpoint rule
J(k) = |k|^-(n+2s).  Near offsets are refined: halving every cube gives

    J(k) = 2^-(n-2s) sum_d mult(d) J(2k+d),   d in {-1,0,1}^n

where children that land far are closed by a refined midpoint rule, two
refinements combined by Richardson extrapolation.  The recursion either
stops after max_depth levels with midpoint leaves, or is solved for its
fixed point ('selfsimilar', the infinite-depth limit).

Chamber fields are offset-table convolutions done with FFTs.  Cells outside
the box are labelled by the partition's exterior rule: a layer of ghost
cells next to the box, then geometrically growing boxes out to the
truncation radius.
'''

import dataclasses
import functools
import itertools
import logging
import math
import threading
from typing import Optional

import numpy as np
from scipy import signal
from scipy.spatial import distance

from . import grid

log = logging.getLogger(__name__)

LEAF_RULES = ('selfsimilar', 'midpoint')

# Boxes in the far exterior have diameter at most 1/FAR_RATIO of their
# distance to the grid box.
FAR_RATIO = 2.0

# Distance-matrix chunk, in entries.
CHUNK = 1 << 22

# Refinement of far children inside the near-field recursion; the value is
# extrapolated from this refinement and twice it.
FAR_CHILD_REFINEMENT = 4


class KernelError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class KernelConfig:
    s: float
    max_depth: int = 6
    trunc_radius: Optional[float] = None
    leaf_rule: str = 'selfsimilar'

    def __post_init__(self):
        if not 0 < self.s < 0.5:
            raise KernelError('s must lie in (0, 1/2), got %r' % (self.s,))
        if int(self.max_depth) != self.max_depth or self.max_depth < 0:
            raise KernelError('max_depth must be an integer >= 0, got %r' % (self.max_depth,))
        if self.trunc_radius is not None and not self.trunc_radius > 0:
            raise KernelError('trunc_radius must be positive, got %r' % (self.trunc_radius,))
        if self.leaf_rule not in LEAF_RULES:
            raise KernelError('leaf_rule must be one of %s, got %r'
                    % (', '.join(LEAF_RULES), self.leaf_rule))

    def radius(self, spec):
        r = 4.0 * spec.side if self.trunc_radius is None else self.trunc_radius
        if r < spec.side:
            raise KernelError('truncation radius %g is smaller than the box side %g'
                    % (r, spec.side))
        return r

    def with_s(self, s):
        return dataclasses.replace(self, s=s)


@dataclasses.dataclass(frozen=True)
class EnergyReport:
    s: float
    internal: float
    boundary: float
    total: float
    tail_bound: float = 0.0

    @property
    def scale(self):
        return 1.0 - 2.0 * self.s

    @property
    def scaled_total(self):
        return self.scale * self.total


@dataclasses.dataclass(frozen=True)
class PairInteractions:
    '''m x m symmetric matrices with zero diagonal: interactions inside the
       box, box-to-exterior cross terms (both directions), and their sum.'''
    internal: np.ndarray
    boundary: np.ndarray
    network: np.ndarray


def omega(k):
    'Volume of the unit ball in R^k'
    return math.pi ** (k / 2) / math.gamma(k / 2 + 1)

def near_radius(n):
    return 2.0 * math.sqrt(n)

def ghost_width(n):
    return int(math.ceil(near_radius(n))) + 1


#
# Unit offset table
#

def _near_offsets(n):
    r = int(math.ceil(near_radius(n)))
    return [k for k in itertools.product(range(-r, r + 1), repeat=n)
            if 0 < sum(x * x for x in k) < 4 * n]

@functools.lru_cache(maxsize=64)
def near_table(n, s, max_depth, leaf_rule):
    '''Dict offset -> J(offset) for all near offsets of unit cubes.'''
    p = n + 2.0 * s
    near = _near_offsets(n)
    index = {k: row for row, k in enumerate(near)}
    weight = 2.0 ** -(n - 2.0 * s)
    far = {}
    T = np.zeros((len(near), len(near)))
    b = np.zeros(len(near))
    for row, k in enumerate(near):
        for d in itertools.product((-1, 0, 1), repeat=n):
            w = weight * np.prod([2 - abs(x) for x in d])
            c = tuple(2 * ki + di for ki, di in zip(k, d))
            if c in index:
                T[row, index[c]] += w
            else:
                if c not in far:
                    far[c] = _far_child(c, n, s)
                b[row] += w * far[c]

    if leaf_rule == 'selfsimilar':
        J = np.linalg.solve(np.eye(len(near)) - T, b)
    else:
        J = np.array([math.sqrt(sum(x * x for x in k)) ** -p for k in near])
        for _ in range(max_depth):
            J = T @ J + b
    log.debug('near table n=%d s=%g depth=%d %s: J(e1)=%g',
            n, s, max_depth, leaf_rule, J[index[(1,) + (0,) * (n - 1)]])

    mirror = [index[tuple(-x for x in k)] for k in near]
    J = 0.5 * (J + J[mirror])
    return {k: float(J[row]) for row, k in enumerate(near)}

def offset_table(n, s, max_depth, leaf_rule, reach):
    '''Array over offsets -reach..reach on every axis, centred; entry 0 is 0.'''
    axis = np.arange(-reach, reach + 1)
    sq = sum(g * g for g in np.meshgrid(*([axis] * n), indexing='ij'))
    G = np.zeros(sq.shape)
    nz = sq > 0
    G[nz] = sq[nz].astype(float) ** -((n + 2.0 * s) / 2.0)
    for k, value in near_table(n, s, max_depth, leaf_rule).items():
        if max(abs(x) for x in k) <= reach:
            G[tuple(x + reach for x in k)] = value
    return G

def _far_child(offset, n, s):
    coarse = uniform_midpoint(offset, n, s, FAR_CHILD_REFINEMENT)
    fine = uniform_midpoint(offset, n, s, 2 * FAR_CHILD_REFINEMENT)
    return (4.0 * fine - coarse) / 3.0

def uniform_midpoint(offset, n, s, refinement):
    '''Reference value of J(offset): both unit cubes cut into refinement^n
       pieces and every piece pair evaluated at its midpoints.'''
    r = int(refinement)
    p = n + 2.0 * s
    d = np.arange(-(r - 1), r)
    mult = (r - np.abs(d)).astype(float)
    coords = [r * ki + d for ki in offset]
    sq = sum(c.astype(float) ** 2 for c in np.meshgrid(*coords, indexing='ij'))
    w = functools.reduce(np.multiply.outer, [mult] * n)
    return r ** (2.0 * s - n) * float(np.sum(w * sq ** (-p / 2.0)))


#
# Per-grid kernel table
#

class KernelTable:
    '''Offset table scaled to a grid, with the exterior fields of every
       exterior rule it has been asked about.  Shared read-only between
       callers once built.'''

    def __init__(self, spec, cfg):
        self.spec = spec
        self.cfg = cfg
        self.radius = cfg.radius(spec)
        self.scale = spec.h ** (spec.n - 2.0 * cfg.s)
        self.ghost = min(ghost_width(spec.n), int(self.radius // spec.h))
        reach = spec.cells_per_side + 2 * self.ghost - 1
        self.offsets = offset_table(spec.n, cfg.s, cfg.max_depth, cfg.leaf_rule, reach)
        self.offsets.setflags(write=False)
        self._reach = reach
        self._exterior = {}
        self._lock = threading.Lock()

    def value(self, offsets):
        'Cell-pair interaction for integer offsets, shape (..., n)'
        idx = tuple(np.moveaxis(np.asarray(offsets) + self._reach, -1, 0))
        return self.scale * self.offsets[idx]

    def inner_offsets(self):
        N = self.spec.cells_per_side
        cut = slice(self._reach - (N - 1), self._reach + N)
        return self.offsets[(cut,) * self.spec.n]

    def field(self, mask):
        '''Interaction of every cell with the cells in mask'''
        if not np.any(mask):
            return np.zeros(self.spec.shape)
        conv = signal.fftconvolve(np.asarray(mask, dtype=float), self.inner_offsets(), mode='same')
        return self.scale * conv

    def row(self, cell):
        'Interaction of one cell (index tuple) with every cell of the grid'
        N = self.spec.cells_per_side
        window = tuple(slice(self._reach - c, self._reach - c + N) for c in cell)
        return self.scale * self.offsets[window]

    def exterior_fields(self, exterior):
        '''Dict chamber -> array over grid cells: interaction of each cell
           with the exterior part of that chamber, up to the truncation
           radius.'''
        key = exterior
        with self._lock:
            cached = self._exterior.get(key)
        if cached is not None:
            return cached
        fields = self._build_exterior(exterior)
        with self._lock:
            return self._exterior.setdefault(key, fields)

    def _build_exterior(self, exterior):
        chambers = sorted(exterior.chambers())
        if not chambers:
            return {}
        spec = self.spec
        N, W, h = spec.cells_per_side, self.ghost, spec.h

        # Ghost cells: same size as grid cells, offset table convolution.
        M = N + 2 * W
        c = -0.5 * spec.side + (np.arange(M) - W + 0.5) * h
        ghost_centers = np.stack(np.meshgrid(*([c] * spec.n), indexing='ij'), axis=-1)
        ghost_labels = exterior.labels_at(ghost_centers)
        ghost_labels[(slice(W, W + N),) * spec.n] = grid.NO_LABEL
        inner = (slice(W, W + N),) * spec.n
        fields = {}
        for b in chambers:
            mask = (ghost_labels == b).astype(float)
            if mask.any():
                conv = signal.fftconvolve(mask, self.offsets, mode='same')
                fields[b] = self.scale * conv[inner]
            else:
                fields[b] = np.zeros(spec.shape)

        centers, vols, labels = coarse_boxes(spec, 0.5 * spec.side + W * h,
                0.5 * spec.side + self.radius, exterior)
        if len(vols):
            p = spec.n + 2.0 * self.cfg.s
            weights = np.column_stack([vols * (labels == b) for b in chambers])
            cells = spec.centers().reshape(-1, spec.n)
            far = np.zeros((len(cells), len(chambers)))
            step = max(1, CHUNK // len(vols))
            for start in range(0, len(cells), step):
                d = distance.cdist(cells[start:start + step], centers)
                far[start:start + step] = (d ** -p) @ weights
            far *= spec.cell_volume
            for col, b in enumerate(chambers):
                fields[b] = fields[b] + far[:, col].reshape(spec.shape)
        log.info('exterior fields for %s on %s: %d far boxes',
                exterior.token(), spec, len(vols))
        for f in fields.values():
            f.setflags(write=False)
        return fields

    def tail_bound(self, sigma_max):
        n = self.spec.n
        return (n * omega(n) * self.spec.side ** n * sigma_max
                / (2.0 * self.cfg.s * self.radius ** (2.0 * self.cfg.s)))


def coarse_boxes(spec, start, stop, exterior):
    '''Tile the cube shell start <= |x|_inf < stop with boxes whose diameter
       is at most 1/FAR_RATIO of their distance to the grid box.  Returns
       (centres, volumes, exterior labels).'''
    n = spec.n
    half = 0.5 * spec.side
    planes = exterior.split_planes()
    centers, vols = [], []
    a = start
    while a < stop:
        width = min((a - half) / (FAR_RATIO * math.sqrt(n)), stop - a)
        segments = []
        for axis in range(n):
            pieces = int(math.ceil(2 * a / width))
            edges = [-(a + width)] + list(np.linspace(-a, a, pieces + 1)) + [a + width]
            for (plane_axis, offset) in planes:
                if plane_axis == axis and -(a + width) < offset < a + width:
                    edges.append(offset)
            edges = np.unique(np.array(edges))
            lo, hi = edges[:-1], edges[1:]
            outer = (hi <= -a) | (lo >= a)
            segments.append((lo, hi, outer))
        lo = np.meshgrid(*[seg[0] for seg in segments], indexing='ij')
        hi = np.meshgrid(*[seg[1] for seg in segments], indexing='ij')
        outer = np.logical_or.reduce(np.meshgrid(*[seg[2] for seg in segments], indexing='ij'))
        box_lo = np.stack([x[outer] for x in lo], axis=-1)
        box_hi = np.stack([x[outer] for x in hi], axis=-1)
        centers.append(0.5 * (box_lo + box_hi))
        vols.append(np.prod(box_hi - box_lo, axis=-1))
        a += width
    if not centers:
        return np.zeros((0, n)), np.zeros(0), np.zeros(0, dtype=np.int64)
    centers = np.concatenate(centers)
    return centers, np.concatenate(vols), exterior.labels_at(centers)

@functools.lru_cache(maxsize=16)
def kernel_table(spec, cfg):
    log.debug('building kernel table for %s, %s', spec, cfg)
    return KernelTable(spec, cfg)


#
# Energies
#

def interaction(mask_a, mask_b, spec, cfg):
    '''Interaction energy between two cell sets (boolean arrays over the
       grid), summed pair by pair from the offset table.'''
    mask_a = np.asarray(mask_a, dtype=bool)
    mask_b = np.asarray(mask_b, dtype=bool)
    if mask_a.shape != spec.shape or mask_b.shape != spec.shape:
        raise KernelError('cell sets must have the grid shape %s' % (spec.shape,))
    if np.any(mask_a & mask_b):
        raise KernelError('interaction needs disjoint cell sets')
    # Fixed pair order so that interaction(A, B) == interaction(B, A).
    if mask_a.tobytes() > mask_b.tobytes():
        mask_a, mask_b = mask_b, mask_a
    table = kernel_table(spec, cfg)
    cells_a = np.argwhere(mask_a)
    cells_b = np.argwhere(mask_b)
    if not len(cells_a) or not len(cells_b):
        return 0.0
    total = 0.0
    step = max(1, CHUNK // len(cells_b))
    for start in range(0, len(cells_a), step):
        diff = cells_a[start:start + step, None, :] - cells_b[None, :, :]
        total += float(np.sum(table.value(diff)))
    return total

def pair_interactions(partition, cfg):
    spec, m = partition.spec, partition.m
    table = kernel_table(spec, cfg)
    flat = partition.labels.ravel()
    A = np.zeros((m, m))
    for j in np.unique(flat):
        U = table.field(partition.labels == j)
        A[:, j] = np.bincount(flat, weights=U.ravel(), minlength=m)
    internal = 0.5 * (A + A.T)
    B = np.zeros((m, m))
    for b, phi in table.exterior_fields(partition.exterior).items():
        B[:, b] = np.bincount(flat, weights=phi.ravel(), minlength=m)
    boundary = B + B.T
    np.fill_diagonal(internal, 0.0)
    np.fill_diagonal(boundary, 0.0)
    return PairInteractions(internal=internal, boundary=boundary, network=internal + boundary)

def _union_perimeter(network, chambers):
    inside = np.zeros(network.shape[0], dtype=bool)
    inside[list(chambers)] = True
    return 0.5 * float(np.sum(network * (inside[:, None] != inside[None, :])))

def perimeter_fractional(partition, chambers, cfg):
    '''P_2s of the union of the given chambers (inside and outside the
       box) relative to the box.'''
    return _union_perimeter(pair_interactions(partition, cfg).network, chambers)

def multiphase_energy(partition, sigma, cfg):
    if sigma.m != partition.m:
        raise KernelError('surface tension matrix has m = %d, partition has m = %d'
                % (sigma.m, partition.m))
    pairs = pair_interactions(partition, cfg)
    total = 0.5 * float(np.sum(sigma.entries * pairs.network))
    internal = 0.5 * float(np.sum(sigma.entries * pairs.internal))
    tail = 0.0
    if partition.exterior.chambers():
        tail = kernel_table(partition.spec, cfg).tail_bound(sigma.sigma_max)
    return EnergyReport(s=cfg.s, internal=internal, boundary=total - internal,
            total=total, tail_bound=tail)

def perimeter_classical(partition, sigma):
    '''Weighted length (area) of the interfaces between differently
       labelled cells inside the box.'''
    if sigma.m != partition.m:
        raise KernelError('surface tension matrix has m = %d, partition has m = %d'
                % (sigma.m, partition.m))
    labels = partition.labels
    total = 0.0
    for axis in range(partition.spec.n):
        a = np.take(labels, range(0, labels.shape[axis] - 1), axis=axis)
        b = np.take(labels, range(1, labels.shape[axis]), axis=axis)
        total += float(np.sum(sigma.entries[a, b]))
    return total * partition.spec.h ** (partition.spec.n - 1)


#
# Energies written through the decompositions of the tension matrix
#

def additive_energy(partition, weights, cfg):
    'sum_k a_k P_2s(E_k)'
    network = pair_interactions(partition, cfg).network
    return sum(w * _union_perimeter(network, [k]) for k, w in enumerate(weights))

def four_phase_energy(partition, decomposition, cfg):
    '''sum_k (a~_k - a*) P_2s(E_k) + sum_l (a* - a~_l) P_2s(E_1 u E_l);
       equals the energy for the decomposed matrix.'''
    if partition.m != 4:
        raise KernelError('four-phase identity needs m = 4, got m = %d' % partition.m)
    network = pair_interactions(partition, cfg).network
    total = 0.0
    for k, w in enumerate(decomposition.chamber_weights()):
        total += w * _union_perimeter(network, [k])
    for l, w in zip((1, 2, 3), decomposition.union_weights()):
        total += w * _union_perimeter(network, [0, l])
    return total

def cut_energy(partition, decomposition, cfg):
    'sum_J lambda_J P_2s(union of E_k, k in J)'
    network = pair_interactions(partition, cfg).network
    return sum(w * _union_perimeter(network, chambers) for chambers, w in decomposition.terms)


#
# Gamma-limit scans
#

@dataclasses.dataclass(frozen=True)
class ScanRow:
    s: float
    N: int
    internal: float
    boundary: float
    scaled_total: float
    classical_target: float
    tail_bound: float

    HEADER = ('s', 'N', 'internal', 'boundary', 'scaled_total', 'classical_target', 'tail_bound')

    def as_row(self):
        return [self.s, self.N, self.internal, self.boundary, self.scaled_total,
                self.classical_target, self.tail_bound]


def _require_increasing(values, what):
    if not values:
        raise KernelError('%s must not be empty' % what)
    if any(b <= a for a, b in zip(values, values[1:])):
        raise KernelError('%s must be increasing, got %s' % (what, list(values)))

def gamma_scan(make_partition, sigma, n, side, s_list, cells_list, cfg):
    '''For every (s, N): the (1-2s)-scaled energy of make_partition(spec)
       next to omega_(n-1) times its classical sigma-perimeter.
       tail_bound is reported (1-2s)-scaled as well.'''
    _require_increasing(list(s_list), 's values')
    _require_increasing(list(cells_list), 'grid sizes')
    rows = []
    for s in s_list:
        scfg = cfg.with_s(s)
        for N in cells_list:
            spec = grid.GridSpec(n, N, side)
            partition = make_partition(spec)
            report = multiphase_energy(partition, sigma, scfg)
            target = omega(n - 1) * perimeter_classical(partition, sigma)
            log.info('scan s=%g N=%d: scaled %.6g target %.6g', s, N, report.scaled_total, target)
            rows.append(ScanRow(s=s, N=N, internal=report.internal, boundary=report.boundary,
                    scaled_total=report.scaled_total, classical_target=target,
                    tail_bound=report.scale * report.tail_bound))
    return rows

def extrapolate_limit(rows, order=1):
    '''Richardson extrapolation of a scan to s = 1/2 on its finest grid: the
       polynomial of degree `order` in t = 1-2s through the `order`+1 rows
       with the largest s, evaluated at t = 0.'''
    if order < 1:
        raise KernelError('extrapolation order must be >= 1, got %r' % (order,))
    if not rows:
        raise KernelError('cannot extrapolate an empty scan')
    N = max(r.N for r in rows)
    finest = sorted((r for r in rows if r.N == N), key=lambda r: r.s)
    if len(finest) < order + 1:
        raise KernelError('order %d extrapolation needs %d values of s at N = %d, got %d'
                % (order, order + 1, N, len(finest)))
    used = finest[-(order + 1):]
    t = np.array([1.0 - 2.0 * r.s for r in used])
    values = np.array([r.scaled_total for r in used])
    coef = np.polynomial.polynomial.polyfit(t, values, order)
    return float(coef[0])
