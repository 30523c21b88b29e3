'''Cell-flip minimization of the multiphase fractional energy under fixed
exterior data.

Cells within frozen_layers of the box boundary never change, so every
competitor differs from the start only on a compact subset of the box.
'''

import concurrent.futures
import dataclasses
import logging
import math
from typing import Tuple

import numpy as np

from . import grid
from . import kernel
from . import tensions

log = logging.getLogger(__name__)

STRATEGIES = ('greedy', 'annealed')

# Flips must lower the energy by more than this fraction of its size.
ACCEPT_TOLERANCE = 1e-12

EXHAUSTIVE_LIMIT = 1 << 22
EXHAUSTIVE_BATCH = 1 << 12


class MinimizeError(ValueError):
    pass


class WettingError(MinimizeError):
    pass


@dataclasses.dataclass(frozen=True)
class MinimizeConfig:
    strategy: str = 'greedy'
    max_sweeps: int = 400
    # Temperatures are in units of the face-neighbour bond energy
    # h^(n-2s) J(e1) sigma_min.
    initial_temperature: float = 1.0
    decay: float = 0.985
    rng_seed: int = 0
    frozen_layers: int = 1

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise MinimizeError('strategy must be one of %s, got %r'
                    % (', '.join(STRATEGIES), self.strategy))
        if int(self.max_sweeps) != self.max_sweeps or self.max_sweeps < 1:
            raise MinimizeError('max_sweeps must be an integer >= 1, got %r' % (self.max_sweeps,))
        if not 0 < self.decay < 1:
            raise MinimizeError('decay must lie in (0, 1), got %r' % (self.decay,))
        if not self.initial_temperature > 0:
            raise MinimizeError('initial_temperature must be positive, got %r'
                    % (self.initial_temperature,))
        if self.frozen_layers < 0:
            raise MinimizeError('frozen_layers must be >= 0, got %r' % (self.frozen_layers,))


@dataclasses.dataclass(frozen=True)
class SweepRecord:
    sweep: int
    accepted: int
    energy: float
    third_phase_volume: float

    HEADER = ('sweep', 'accepted', 'energy', 'third_phase_volume')

    def as_row(self):
        return [self.sweep, self.accepted, self.energy, self.third_phase_volume]


@dataclasses.dataclass(frozen=True)
class SearchResult:
    partition: grid.GridPartition
    report: kernel.EnergyReport
    sweeps: Tuple[SweepRecord, ...]


def foreign_volume(partition):
    'Volume of the chambers that the exterior rule does not carry'
    vols = grid.volumes(partition)
    carried = partition.exterior.chambers()
    return float(sum(v for c, v in enumerate(vols) if c not in carried))


class EnergyState:
    '''Mutable labels with, for every chamber j and cell c, the interaction
       of c with chamber j (inside the box and in the exterior).  A flip
       costs one kernel row update.'''

    def __init__(self, partition, sigma, cfg):
        if sigma.m != partition.m:
            raise MinimizeError('surface tension matrix has m = %d, partition has m = %d'
                    % (sigma.m, partition.m))
        self.template = partition
        self.matrix = sigma
        self.sigma = sigma.entries
        self.cfg = cfg
        self.table = kernel.kernel_table(partition.spec, cfg)
        self.labels = partition.labels.copy()
        m = partition.m
        fields = np.stack([self.table.field(partition.labels == j) for j in range(m)])
        for b, phi in self.table.exterior_fields(partition.exterior).items():
            fields[b] += phi
        self.fields = fields.reshape(m, -1)
        self.energy = kernel.multiphase_energy(partition, sigma, cfg).total

    @property
    def flat_labels(self):
        return self.labels.reshape(-1)

    def deltas(self, flat_cell):
        'Energy change for relabelling one cell with every chamber'
        a = self.flat_labels[flat_cell]
        return (self.sigma - self.sigma[a]) @ self.fields[:, flat_cell]

    def delta(self, flat_cell, new_label):
        a = self.flat_labels[flat_cell]
        return float(np.dot(self.sigma[new_label] - self.sigma[a], self.fields[:, flat_cell]))

    def all_deltas(self):
        '(m, cells) array of single-flip energy changes'
        weighted = self.sigma @ self.fields
        cells = np.arange(weighted.shape[1])
        return weighted - weighted[self.flat_labels, cells]

    def flip(self, flat_cell, new_label):
        a = self.flat_labels[flat_cell]
        if a == new_label:
            return 0.0
        d = self.delta(flat_cell, new_label)
        cell = np.unravel_index(flat_cell, self.labels.shape)
        row = self.table.row(cell).reshape(-1)
        self.fields[a] -= row
        self.fields[new_label] += row
        self.labels[cell] = new_label
        self.energy += d
        return d

    def partition(self):
        return self.template.with_labels(self.labels)


def flip_delta(partition, cell, new_label, sigma, cfg):
    '''Energy change from relabelling one cell, from that cell's kernel row
       and exterior fields only.'''
    table = kernel.kernel_table(partition.spec, cfg)
    m = partition.m
    cell = tuple(cell)
    v = np.bincount(partition.labels.ravel(), weights=table.row(cell).ravel(), minlength=m)
    for b, phi in table.exterior_fields(partition.exterior).items():
        v[b] += phi[cell]
    a = partition.labels[cell]
    return float(np.dot(sigma.entries[new_label] - sigma.entries[a], v))

def _greedy_sweeps(state, free, min_cfg, start_sweep, records):
    for sweep in range(start_sweep, start_sweep + min_cfg.max_sweeps):
        accepted = 0
        for c in free:
            d = state.deltas(c)
            b = int(np.argmin(d))
            if d[b] < -ACCEPT_TOLERANCE * max(abs(state.energy), 1e-300):
                state.flip(c, b)
                accepted += 1
        records.append(SweepRecord(sweep, accepted, state.energy,
                foreign_volume_of(state)))
        log.debug('greedy sweep %d: %d flips, energy %.12g', sweep, accepted, state.energy)
        if not accepted:
            break
    return records

def foreign_volume_of(state):
    counts = np.bincount(state.flat_labels, minlength=state.template.m)
    carried = state.template.exterior.chambers()
    foreign = sum(n for c, n in enumerate(counts) if c not in carried)
    return float(foreign * state.template.spec.cell_volume)

def _annealed_sweeps(state, free, min_cfg, records):
    rng = np.random.default_rng(min_cfg.rng_seed)
    m = state.template.m
    e1 = np.eye(state.template.spec.n, dtype=np.int64)[0]
    bond = float(state.table.value(e1)) * state.matrix.sigma_min
    temperature = min_cfg.initial_temperature * bond
    for sweep in range(min_cfg.max_sweeps):
        accepted = 0
        cells = free[rng.integers(0, len(free), size=len(free))]
        shifts = rng.integers(1, m, size=len(free))
        draws = rng.random(len(free))
        for c, shift, u in zip(cells, shifts, draws):
            b = (state.flat_labels[c] + shift) % m
            d = state.delta(c, b)
            if d < 0 or u < math.exp(-d / temperature):
                state.flip(c, b)
                accepted += 1
        records.append(SweepRecord(sweep, accepted, state.energy, foreign_volume_of(state)))
        log.debug('annealed sweep %d at T=%g: %d flips, energy %.12g',
                sweep, temperature, accepted, state.energy)
        temperature *= min_cfg.decay
    return len(records)

def local_search(partition, sigma, cfg, min_cfg):
    '''Returns a SearchResult.  Greedy: visit the free cells in index
       order, apply the best strictly improving flip, repeat until a sweep
       accepts nothing.  Annealed: Metropolis sweeps with a geometric
       temperature schedule, then a greedy finish.'''
    state = EnergyState(partition, sigma, cfg)
    free = np.flatnonzero(partition.spec.interior_mask(min_cfg.frozen_layers).ravel())
    records = []
    if len(free) and partition.m > 1:
        next_sweep = 0
        if min_cfg.strategy == 'annealed':
            next_sweep = _annealed_sweeps(state, free, min_cfg, records)
        _greedy_sweeps(state, free, min_cfg, next_sweep, records)
    final = state.partition()
    report = kernel.multiphase_energy(final, sigma, cfg)
    return SearchResult(partition=final, report=report, sweeps=tuple(records))


#
# Exhaustive search
#

@dataclasses.dataclass(frozen=True)
class ExhaustiveResult:
    partition: grid.GridPartition
    energy: float
    runner_up: float
    count: int

    @property
    def unique(self):
        return self.runner_up > self.energy + 1e-12 * max(abs(self.energy), 1.0)


def exhaustive_minimum(template, sigma, cfg, frozen_layers=0, chambers=None, limit=EXHAUSTIVE_LIMIT):
    '''Minimum of the energy over all labellings of the free cells, keeping
       the template labels on frozen cells and the template exterior.'''
    if sigma.m != template.m:
        raise MinimizeError('surface tension matrix has m = %d, partition has m = %d'
                % (sigma.m, template.m))
    chambers = np.arange(template.m) if chambers is None else np.asarray(list(chambers))
    free = np.flatnonzero(template.spec.interior_mask(frozen_layers).ravel())
    k = len(chambers)
    count = k ** len(free)
    if count > limit:
        raise MinimizeError('%d labellings exceed the exhaustive search limit %d' % (count, limit))

    n_cells = template.spec.n_cells
    if n_cells > 4096:
        raise MinimizeError('exhaustive search builds a dense cell-pair matrix; '
                '%d cells is too many' % n_cells)
    table = kernel.kernel_table(template.spec, cfg)
    K = np.stack([table.row(np.unravel_index(c, template.spec.shape)).ravel()
                  for c in range(n_cells)])
    m = template.m
    phi = np.zeros((m, n_cells))
    for b, field in table.exterior_fields(template.exterior).items():
        phi[b] = field.ravel()
    sigma_phi = sigma.entries @ phi
    base = template.labels.ravel()
    powers = k ** np.arange(len(free))

    best, best_index, runner_up = math.inf, -1, math.inf
    for start in range(0, count, EXHAUSTIVE_BATCH):
        index = np.arange(start, min(count, start + EXHAUSTIVE_BATCH))
        labels = np.tile(base, (len(index), 1))
        labels[:, free] = chambers[(index[:, None] // powers[None, :]) % k]
        onehot = (labels[:, None, :] == np.arange(m)[None, :, None]).astype(float)
        coupled = onehot @ K
        pairs = np.einsum('bic,bjc->bij', onehot, coupled)
        energy = (0.5 * np.einsum('ij,bij->b', sigma.entries, pairs)
                  + np.einsum('bic,ic->b', onehot, sigma_phi))
        order = np.argsort(energy, kind='stable')[:2]
        for pos in order:
            e = float(energy[pos])
            if e < best:
                best, runner_up, best_index = e, best, int(index[pos])
            elif e < runner_up:
                runner_up = e
    labels = base.copy()
    labels[free] = chambers[(best_index // powers) % k]
    partition = template.with_labels(labels.reshape(template.spec.shape))
    log.info('exhaustive search over %d labellings: min %.12g, runner-up %.12g',
            count, best, runner_up)
    return ExhaustiveResult(partition=partition, energy=best, runner_up=runner_up, count=count)


#
# Constrained cube problem
#

@dataclasses.dataclass(frozen=True)
class GammaBarEstimate:
    best: float
    halfspace: float
    restart_values: Tuple[float, ...]
    partition: grid.GridPartition

    @property
    def gap(self):
        'best - halfspace; never positive since the half-space competes too'
        return self.best - self.halfspace


def _restart(args):
    template, sigma, cfg, min_cfg, seed = args
    rng = np.random.default_rng(seed)
    start = grid.make_random(template, rng, frozen_layers=min_cfg.frozen_layers)
    return local_search(start, sigma, cfg, dataclasses.replace(min_cfg, rng_seed=seed))

def gamma_bar_estimate(i, j, sigma_bar, spec, cfg, min_cfg, restarts=8, threads=1, axis=None):
    '''Best (1-2s)-scaled energy found for the cube problem with half-space
       exterior data (i above, j below), over `restarts` random starts and
       the half-space itself.  Restart r uses seed rng_seed + r.  With i > j
       on an even grid the search runs on the mirrored problem (j above i)
       with the same seeds and is reflected back, so swapping i and j
       returns the same values.'''
    if not tensions.check_triangle(sigma_bar):
        raise MinimizeError('gamma-bar estimates need a tension matrix satisfying '
                'the triangle inequality; relax it first')
    if restarts < 1:
        raise MinimizeError('restarts must be >= 1, got %d' % restarts)
    if axis is None:
        axis = spec.n - 1
    if i > j and spec.cells_per_side % 2 == 0:
        est = gamma_bar_estimate(j, i, sigma_bar, spec, cfg, min_cfg, restarts, threads, axis)
        template = grid.make_halfspace_pair(spec, i, j, axis, m=sigma_bar.m)
        return dataclasses.replace(est,
                partition=template.with_labels(np.flip(est.partition.labels, axis)))
    template = grid.make_halfspace_pair(spec, i, j, axis, m=sigma_bar.m)
    scale = 1.0 - 2.0 * cfg.s
    halfspace = scale * kernel.multiphase_energy(template, sigma_bar, cfg).total

    jobs = [(template, sigma_bar, cfg, min_cfg, min_cfg.rng_seed + r) for r in range(restarts)]
    with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(_restart, jobs))
    values = tuple(scale * r.report.total for r in results)

    best, partition = halfspace, template
    for value, result in zip(values, results):
        if value < best:
            best, partition = value, result.partition
    log.info('gamma-bar %d,%d: best %.10g, half-space %.10g', i + 1, j + 1, best, halfspace)
    return GammaBarEstimate(best=best, halfspace=halfspace, restart_values=values,
            partition=partition)


#
# Wetting
#

@dataclasses.dataclass(frozen=True)
class WettingRow:
    s: float
    N: int
    third_phase_volume: float
    energy: float
    pure_interface: float
    relaxed_target: float
    success: bool

    HEADER = ('s', 'N', 'third_phase_volume', 'energy', 'pure_interface',
              'relaxed_target', 'success')

    def as_row(self):
        return [self.s, self.N, self.third_phase_volume, self.energy,
                self.pure_interface, self.relaxed_target, self.success]


def wetting_experiment(sigma, i, j, s_list, cells_list, n, cfg, min_cfg, side=1.0, axis=None):
    '''Minimize from the i/j half-space pair under sigma (not relaxed) for
       every (s, N).  Energies are (1-2s)-scaled.  Returns the rows and the
       final partitions.'''
    bar = tensions.relax(sigma)
    if not bar[i, j] < sigma[i, j]:
        raise WettingError('sigma_%d%d already satisfies the triangle inequality; '
                'there is nothing to wet' % (i + 1, j + 1))
    if axis is None:
        axis = n - 1
    rows, finals = [], []
    for s in s_list:
        scfg = cfg.with_s(s)
        for N in cells_list:
            spec = grid.GridSpec(n, N, side)
            start = grid.make_halfspace_pair(spec, i, j, axis, m=sigma.m)
            pure = (1.0 - 2.0 * s) * kernel.multiphase_energy(start, sigma, scfg).total
            result = local_search(start, sigma, scfg, min_cfg)
            energy = result.report.scaled_total
            third = foreign_volume(result.partition)
            row = WettingRow(s=s, N=N, third_phase_volume=third, energy=energy,
                    pure_interface=pure, relaxed_target=pure * bar[i, j] / sigma[i, j],
                    success=bool(energy < pure and third > 0))
            log.info('wetting s=%g N=%d: energy %.6g pure %.6g target %.6g third %.4g',
                    s, N, energy, pure, row.relaxed_target, third)
            rows.append(row)
            finals.append(result.partition)
    return rows, finals
