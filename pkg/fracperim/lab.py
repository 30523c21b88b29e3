'''Experiment configuration, orchestration and verification.

An experiment is described by a YAML (or JSON) document.  It is resolved
and validated completely before anything is written; a run then fills its
output directory with CSV tables, partition files and a manifest.yaml that
echoes the resolved configuration, so verify() can re-run it and compare.
'''

import dataclasses
import json
import logging
import math
import os
import platform
import shutil
import time
from io import TextIOWrapper
from pathlib import Path
from typing import Optional, Tuple, Union

import appdirs
import numpy as np
import psutil
import scipy
import scipy.fft
import yaml

from . import __version__
from . import flowcut
from . import grid
from . import kernel
from . import minimize
from . import reporting
from . import tensions
from . import util

log = logging.getLogger(__name__)

KINDS = ('relax', 'energy', 'gamma-scan', 'mincut-replace', 'minimize', 'wetting', 'gamma-bar')

SECTIONS = {
    'relax': (),
    'energy': ('grid', 'kernel', 'partition'),
    'gamma-scan': ('grid', 'kernel', 'partition', 'scan'),
    'mincut-replace': ('grid', 'kernel', 'partition', 'pair'),
    'minimize': ('grid', 'kernel', 'partition', 'minimize'),
    'wetting': ('grid', 'kernel', 'pair', 'scan', 'minimize'),
    'gamma-bar': ('grid', 'kernel', 'pair', 'minimize'),
}

PARTITION_KINDS = ('halfspace', 'laminate', 'constant', 'random', 'file')

MANIFEST = 'manifest.yaml'
VERIFY_DIR = 'verify'


class ConfigError(ValueError):
    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__('; '.join(self.problems))


def default_config_path():
    return os.environ.get('FRACPERIM_CFG_PATH') or os.path.join(
            appdirs.user_config_dir('fracperim'), 'config.yaml')

def default_threads():
    env = os.environ.get('FRACPERIM_THREADS')
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning('ignoring FRACPERIM_THREADS=%r', env)
    return psutil.cpu_count(logical=False) or 1


class Configuration:
    def __init__(self, data, base_dir='.'):
        if not isinstance(data, dict):
            raise ConfigError('configuration must be a mapping of sections')
        self.data = data
        self.base_dir = Path(base_dir)

    @property
    def experiment(self):
        return self.data.get('experiment')

    @property
    def output(self):
        return self.data.get('output')

    @classmethod
    def from_file(cls, fp: Union[str, Path, TextIOWrapper]):
        """Read configuration from data file"""
        if isinstance(fp, (str, Path)):
            with open(fp, 'r') as f:
                return cls.from_file(f)

        base_dir = Path(fp.name).parent
        if fp.name.endswith(('.yaml', '.yml')):
            try:
                cfg = yaml.load(fp, Loader=yaml.FullLoader)
            except yaml.YAMLError as err:
                mark = getattr(err, 'problem_mark', None)
                where = ' at line %d' % (mark.line + 1) if mark else ''
                raise ConfigError('%s: YAML error%s: %s'
                        % (fp.name, where, getattr(err, 'problem', err)))
        elif fp.name.endswith('.json'):
            try:
                cfg = json.load(fp)
            except ValueError as err:
                raise ConfigError('%s: JSON error: %s' % (fp.name, err))
        else:
            raise ConfigError('cannot load configuration from %r' % fp.name)

        return cls(cfg or {}, base_dir)


#
# Resolution
#

_MISSING = object()

class _Reader:
    '''Collects every problem instead of stopping at the first.'''

    def __init__(self, data):
        self.data = data
        self.problems = []

    def error(self, path, message):
        self.problems.append('%s: %s' % (path, message))

    def section(self, name, required):
        value = self.data.get(name)
        if value is None:
            if required:
                self.error(name, 'missing section')
            return None
        return value

    def mapping(self, name, required):
        value = self.section(name, required)
        if value is not None and not isinstance(value, dict):
            self.error(name, 'must be a mapping')
            return None
        return value

    def value(self, sec, path, key, kind, default=_MISSING):
        where = '%s.%s' % (path, key)
        if key not in sec or sec[key] is None:
            if default is _MISSING:
                self.error(where, 'missing')
            return None if default is _MISSING else default
        raw = sec[key]
        try:
            if kind is int:
                if isinstance(raw, bool) or int(raw) != raw:
                    raise ValueError(raw)
                return int(raw)
            if kind is float:
                if isinstance(raw, bool):
                    raise ValueError(raw)
                return float(raw)
            if kind is str:
                if not isinstance(raw, str):
                    raise ValueError(raw)
                return raw
        except (TypeError, ValueError):
            pass
        self.error(where, 'expected %s, got %r' % (kind.__name__, raw))
        return None

    def number_list(self, sec, path, key, kind):
        where = '%s.%s' % (path, key)
        raw = sec.get(key)
        if not isinstance(raw, list) or not raw:
            self.error(where, 'expected a nonempty list')
            return None
        out = []
        for k, x in enumerate(raw):
            try:
                if isinstance(x, bool):
                    raise ValueError(x)
                got = kind(x)
                if kind is int and got != x:
                    raise ValueError(x)
            except (TypeError, ValueError):
                self.error('%s[%d]' % (where, k), 'expected %s, got %r' % (kind.__name__, x))
                return None
            out.append(got)
        return tuple(out)


@dataclasses.dataclass(frozen=True)
class PartitionRecipe:
    '''How to build the starting partition on a given grid.  Chambers and
       axes are 0-based here.'''
    kind: str
    chambers: Tuple[int, ...] = ()
    axis: int = 0
    stage: int = 0
    exterior: str = 'none'
    frozen_layers: int = 1
    file: Optional[str] = None

    def build(self, spec, m, seed=0):
        if self.kind == 'halfspace':
            i, j = self.chambers
            return grid.make_halfspace_pair(spec, i, j, self.axis, m=m)
        if self.kind == 'laminate':
            return grid.make_laminate(spec, grid.LaminatePath(self.chambers, self.stage),
                    self.axis, m=m)
        if self.kind == 'constant':
            return grid.make_constant(spec, self.chambers[0], m)
        if self.kind == 'random':
            exterior = grid.parse_exterior(self.exterior)
            labels = exterior.labels_at(spec.centers())
            labels[labels == grid.NO_LABEL] = 0
            template = grid.GridPartition(spec, labels, m, exterior)
            return grid.make_random(template, np.random.default_rng(seed), self.frozen_layers)
        partition = grid.load(self.file)
        if partition.spec != spec:
            raise grid.PartitionError('%s holds a %s grid, experiment uses %s'
                    % (self.file, partition.spec, spec))
        return partition

    def to_dict(self):
        d = {'kind': self.kind}
        if self.kind in ('halfspace', 'laminate'):
            d['chambers'] = [c + 1 for c in self.chambers]
            d['axis'] = self.axis + 1
        if self.kind == 'laminate':
            d['stage'] = self.stage
        if self.kind == 'constant':
            d['label'] = self.chambers[0] + 1
        if self.kind == 'random':
            d['exterior'] = self.exterior
            d['frozen_layers'] = self.frozen_layers
        if self.kind == 'file':
            d['file'] = self.file
        return d


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    output: Path
    seed: int
    threads: int
    sigma: tensions.SurfaceTensionMatrix
    spec: Optional[grid.GridSpec] = None
    kernel_config: Optional[kernel.KernelConfig] = None
    partition: Optional[PartitionRecipe] = None
    pair: Optional[Tuple[int, int]] = None
    s_list: Tuple[float, ...] = ()
    cells_list: Tuple[int, ...] = ()
    minimize_config: Optional[minimize.MinimizeConfig] = None
    restarts: int = 8

    @classmethod
    def from_configuration(cls, cfg, kind=None, output=None, seed=None, threads=None):
        '''Resolve and validate everything, including the files the
           configuration refers to.  Raises ConfigError listing every
           problem found.'''
        r = _Reader(cfg.data)
        kind = kind or cfg.experiment
        if cfg.experiment and kind != cfg.experiment:
            r.error('experiment', 'configuration is for %r, not %r' % (cfg.experiment, kind))
        if kind not in KINDS:
            raise ConfigError('experiment: must be one of %s, got %r' % (', '.join(KINDS), kind))
        needed = SECTIONS[kind]

        out = output or cfg.output
        if not out:
            r.error('output', 'missing (set it in the configuration or pass --out)')
        if seed is None:
            seed = r.value(cfg.data, 'config', 'seed', int, 0)
        if threads is None:
            threads = r.value(cfg.data, 'config', 'threads', int, default_threads())
        if threads is not None and threads < 1:
            r.error('threads', 'must be >= 1')

        sigma = _resolve_tensions(r, cfg)
        scan = r.mapping('scan', 'scan' in needed)
        s_list, cells_list = (), ()
        if scan is not None:
            s_list = r.number_list(scan, 'scan', 's', float) or ()
            cells_list = r.number_list(scan, 'scan', 'cells_per_side', int) or ()
        spec = _resolve_grid(r, 'grid' in needed, cells_list, kind)
        kcfg = _resolve_kernel(r, 'kernel' in needed, spec)
        pair = _resolve_pair(r, 'pair' in needed, sigma)
        min_cfg, restarts = _resolve_minimize(r, 'minimize' in needed, seed)
        recipe = None
        if 'partition' in needed:
            recipe, spec = _resolve_partition(r, cfg, sigma, spec, kind)
        if not r.problems:
            _check_experiment(r, kind, sigma, spec, recipe, pair, seed)

        if r.problems:
            raise ConfigError(r.problems)
        return cls(kind=kind, output=Path(out), seed=seed, threads=threads, sigma=sigma,
                spec=spec, kernel_config=kcfg, partition=recipe, pair=pair,
                s_list=s_list, cells_list=cells_list, minimize_config=min_cfg,
                restarts=restarts)

    def to_dict(self):
        '''The resolved configuration, in the configuration file layout'''
        d = {'experiment': self.kind, 'output': str(self.output), 'seed': self.seed,
             'tensions': {'matrix': self.sigma.entries.tolist()}}
        if self.spec is not None:
            d['grid'] = {'n': self.spec.n, 'cells_per_side': self.spec.cells_per_side,
                         'side': float(self.spec.side)}
        if self.kernel_config is not None:
            k = self.kernel_config
            d['kernel'] = {'s': k.s, 'max_depth': k.max_depth, 'leaf_rule': k.leaf_rule,
                           'trunc_radius': float(k.radius(self.spec))}
        if self.partition is not None:
            d['partition'] = self.partition.to_dict()
        if self.pair is not None:
            d['pair'] = [self.pair[0] + 1, self.pair[1] + 1]
        if self.s_list:
            d['scan'] = {'s': list(self.s_list), 'cells_per_side': list(self.cells_list)}
        if self.minimize_config is not None:
            mc = self.minimize_config
            d['minimize'] = {'strategy': mc.strategy, 'max_sweeps': mc.max_sweeps,
                             'initial_temperature': mc.initial_temperature,
                             'decay': mc.decay, 'frozen_layers': mc.frozen_layers,
                             'restarts': self.restarts}
        return d


def _resolve_tensions(r, cfg):
    sec = r.mapping('tensions', True)
    if sec is None:
        return None
    try:
        if 'file' in sec and 'matrix' in sec:
            r.error('tensions', 'give either matrix or file, not both')
            return None
        if 'file' in sec:
            path = cfg.base_dir / str(sec['file'])
            try:
                sigma = tensions.SurfaceTensionMatrix.load(path)
            except OSError as err:
                r.error('tensions.file', 'cannot read %s: %s' % (path, err.strerror))
                return None
        elif 'matrix' in sec:
            sigma = tensions.SurfaceTensionMatrix(sec['matrix'])
        else:
            r.error('tensions', 'needs matrix or file')
            return None
    except (ValueError, TypeError) as err:
        r.error('tensions', str(err))
        return None
    problem = tensions.validate(sigma)
    if problem:
        r.error('tensions', problem)
        return None
    return sigma

def _resolve_grid(r, required, cells_list, kind):
    sec = r.mapping('grid', required)
    if sec is None:
        return None
    scanned = kind in ('gamma-scan', 'wetting')
    n = r.value(sec, 'grid', 'n', int, 2)
    if scanned and cells_list:
        N = cells_list[0]
    else:
        N = r.value(sec, 'grid', 'cells_per_side', int)
    side = r.value(sec, 'grid', 'side', float, 1.0)
    if None in (n, N, side):
        return None
    try:
        return grid.GridSpec(n, N, side)
    except grid.PartitionError as err:
        r.error('grid', str(err))
        return None

def _resolve_kernel(r, required, spec):
    sec = r.mapping('kernel', required)
    if sec is None:
        return None
    s = r.value(sec, 'kernel', 's', float, 0.45)
    depth = r.value(sec, 'kernel', 'max_depth', int, 6)
    radius = r.value(sec, 'kernel', 'trunc_radius', float, None)
    rule = r.value(sec, 'kernel', 'leaf_rule', str, 'selfsimilar')
    if None in (s, depth, rule):
        return None
    try:
        kcfg = kernel.KernelConfig(s=s, max_depth=depth, trunc_radius=radius, leaf_rule=rule)
        if spec is not None:
            kcfg.radius(spec)
        return kcfg
    except kernel.KernelError as err:
        r.error('kernel', str(err))
        return None

def _chamber(r, where, value, m):
    if isinstance(value, bool) or not isinstance(value, int) or m is not None and not 1 <= value <= m:
        r.error(where, 'chamber must be an integer in 1..%s, got %r' % (m or 'm', value))
        return None
    return value - 1

def _resolve_pair(r, required, sigma):
    raw = r.section('pair', required)
    if raw is None:
        return None
    if not isinstance(raw, list) or len(raw) != 2:
        r.error('pair', 'expected two chambers, got %r' % (raw,))
        return None
    m = sigma.m if sigma is not None else None
    i, j = (_chamber(r, 'pair[%d]' % k, v, m) for k, v in enumerate(raw))
    if i is None or j is None:
        return None
    if i == j:
        r.error('pair', 'chambers must differ')
        return None
    return (i, j)

def _resolve_minimize(r, required, seed):
    sec = r.mapping('minimize', required)
    if sec is None:
        return None, 8
    values = dict(
        strategy=r.value(sec, 'minimize', 'strategy', str, 'greedy'),
        max_sweeps=r.value(sec, 'minimize', 'max_sweeps', int, 400),
        initial_temperature=r.value(sec, 'minimize', 'initial_temperature', float, 1.0),
        decay=r.value(sec, 'minimize', 'decay', float, 0.985),
        frozen_layers=r.value(sec, 'minimize', 'frozen_layers', int, 1),
    )
    restarts = r.value(sec, 'minimize', 'restarts', int, 8)
    if None in values.values() or restarts is None or seed is None:
        return None, 8
    if restarts < 1:
        r.error('minimize.restarts', 'must be >= 1')
    try:
        return minimize.MinimizeConfig(rng_seed=seed, **values), restarts
    except minimize.MinimizeError as err:
        r.error('minimize', str(err))
        return None, 8

def _resolve_partition(r, cfg, sigma, spec, kind):
    sec = r.mapping('partition', True)
    if sec is None:
        return None, spec
    pkind = r.value(sec, 'partition', 'kind', str)
    if pkind not in PARTITION_KINDS:
        if pkind is not None:
            r.error('partition.kind', 'must be one of %s' % ', '.join(PARTITION_KINDS))
        return None, spec
    m = sigma.m if sigma is not None else None
    n = spec.n if spec is not None else 3

    def axis():
        a = r.value(sec, 'partition', 'axis', int, n)
        if a is not None and not 1 <= a <= n:
            r.error('partition.axis', 'must lie in 1..%d' % n)
            return None
        return None if a is None else a - 1

    def chambers(count=None):
        raw = sec.get('chambers')
        if not isinstance(raw, list) or (count and len(raw) != count) or len(raw) < 2:
            r.error('partition.chambers', 'expected %s chambers, got %r'
                    % (count or 'at least 2', raw))
            return None
        got = [_chamber(r, 'partition.chambers[%d]' % k, v, m) for k, v in enumerate(raw)]
        return None if None in got else tuple(got)

    if pkind == 'halfspace':
        recipe = PartitionRecipe('halfspace', chambers(2), axis())
    elif pkind == 'laminate':
        stage = r.value(sec, 'partition', 'stage', int, 0)
        recipe = PartitionRecipe('laminate', chambers(), axis(), stage if stage is not None else 0)
    elif pkind == 'constant':
        label = _chamber(r, 'partition.label', sec.get('label'), m)
        recipe = PartitionRecipe('constant', (label,))
    elif pkind == 'random':
        token = r.value(sec, 'partition', 'exterior', str, 'none')
        layers = r.value(sec, 'partition', 'frozen_layers', int, 1)
        try:
            ext = grid.parse_exterior(token or 'none')
            if m is not None and any(c >= m for c in ext.chambers()):
                r.error('partition.exterior', 'chamber outside 1..%d' % m)
        except grid.PartitionFormatError as err:
            r.error('partition.exterior', str(err))
        recipe = PartitionRecipe('random', exterior=token or 'none', frozen_layers=layers or 0)
    else:
        if kind == 'gamma-scan':
            r.error('partition.kind', 'a file partition cannot be rebuilt on other grids')
            return None, spec
        name = r.value(sec, 'partition', 'file', str)
        if name is None:
            return None, spec
        path = (cfg.base_dir / name).resolve()
        try:
            loaded = grid.load(path)
        except OSError as err:
            r.error('partition.file', 'cannot read %s: %s' % (path, err.strerror))
            return None, spec
        except grid.PartitionFormatError as err:
            r.error('partition.file', '%s: %s' % (path, err))
            return None, spec
        if m is not None and loaded.m != m:
            r.error('partition.file', '%s has m = %d, tensions have m = %d' % (path, loaded.m, m))
        return PartitionRecipe('file', file=str(path)), loaded.spec

    if r.problems or spec is None or m is None:
        return recipe, spec
    try:
        recipe.build(spec, m)
    except grid.PartitionError as err:
        r.error('partition', str(err))
    return recipe, spec


def _check_experiment(r, kind, sigma, spec, recipe, pair, seed):
    if kind == 'mincut-replace':
        try:
            flowcut.check_replaceable(recipe.build(spec, sigma.m, seed), *pair)
        except (flowcut.FlowError, grid.PartitionError) as err:
            r.error('partition', str(err))
    elif kind == 'wetting':
        i, j = pair
        if not tensions.relax(sigma)[i, j] < sigma[i, j]:
            r.error('pair', 'sigma_%d%d already satisfies the triangle inequality' % (i + 1, j + 1))


#
# Running
#

@dataclasses.dataclass(frozen=True)
class RunResult:
    output: Path
    outputs: Tuple[str, ...]
    manifest: Path
    summary: str


def run(config):
    '''Run one experiment into config.output.  Returns a RunResult.'''
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    proc = psutil.Process()
    cpu_before = proc.cpu_times()
    t0 = time.time()
    log.info('running %s into %s with %d threads', config.kind, out, config.threads)
    with scipy.fft.set_workers(config.threads):
        outputs, summary = RUNNERS[config.kind](config, out)
    cpu_after = proc.cpu_times()
    wall = time.time() - t0
    log.info('%s finished in %s', config.kind, util.time_format(wall))

    manifest = {
        'version': __version__,
        'experiment': config.kind,
        'config': config.to_dict(),
        'seed': config.seed,
        'threads': config.threads,
        'outputs': list(outputs),
        'host': host_info(),
        'timing': {
            'wall_s': wall,
            'cpu_user_s': cpu_after.user - cpu_before.user,
            'cpu_system_s': cpu_after.system - cpu_before.system,
        },
    }
    path = out / MANIFEST
    with open(path, 'w') as f:
        yaml.safe_dump(manifest, f, sort_keys=False)
    return RunResult(output=out, outputs=tuple(outputs), manifest=path, summary=summary)

def host_info():
    return {
        'cpu_count_physical': psutil.cpu_count(logical=False),
        'cpu_count_logical': psutil.cpu_count(logical=True),
        'python': platform.python_version(),
        'numpy': np.__version__,
        'scipy': scipy.__version__,
        'platform': platform.platform(),
    }

def _write_text(out, name, text, outputs):
    with open(out / name, 'w') as f:
        f.write(text)
    outputs.append(name)

def _write_csv(out, name, header, rows, outputs):
    util.write_csv(out / name, header, rows)
    outputs.append(name)

def _write_partition(out, name, partition, outputs):
    grid.save(partition, out / name)
    outputs.append(name)

def _run_relax(config, out):
    outputs = []
    sigma = config.sigma
    bar = tensions.relax(sigma)
    _write_text(out, 'sigma_bar.txt', bar.to_text(), outputs)
    rows = []
    for i in range(sigma.m):
        for j in range(i + 1, sigma.m):
            path = ' '.join(str(c + 1) for c in tensions.optimal_path(sigma, i, j))
            rows.append((i + 1, j + 1, sigma[i, j], bar[i, j], path))
    _write_csv(out, 'relax_summary.csv', ('i', 'j', 'sigma', 'sigma_bar', 'path'), rows, outputs)
    weights = tensions.additive_weights(bar)
    if weights is not None:
        _write_csv(out, 'additive.csv', ('chamber', 'alpha'),
                [(k + 1, a) for k, a in enumerate(weights)], outputs)
    if bar.m == 4:
        dec = tensions.decomposition_4(bar)
        header = tuple('alpha%d' % k for k in range(1, 8)) + ('alpha_star',)
        _write_csv(out, 'decomposition4.csv', header, [list(dec.alphas) + [dec.alpha_star]], outputs)
    if bar.m <= tensions.MAX_CUT_CHAMBERS:
        cut = tensions.cut_cone_decomposition(bar)
        _write_text(out, 'cut_decomposition.txt',
                cut.to_text() if cut is not None else 'not-embeddable\n', outputs)
    return outputs, reporting.relax_report(sigma, bar, rows)

def _energy_rows(label, partition, sigma, kcfg):
    report = kernel.multiphase_energy(partition, sigma, kcfg)
    classical = kernel.perimeter_classical(partition, sigma)
    target = kernel.omega(partition.spec.n - 1) * classical
    row = [label, report.s, partition.spec.cells_per_side, report.internal, report.boundary,
           report.total, report.scaled_total, report.tail_bound, classical, target]
    return report, target, row

ENERGY_HEADER = ('partition', 's', 'N', 'internal', 'boundary', 'total', 'scaled_total',
                 'tail_bound', 'classical', 'classical_target')

def _run_energy(config, out):
    outputs = []
    partition = config.partition.build(config.spec, config.sigma.m, config.seed)
    report, target, row = _energy_rows('input', partition, config.sigma, config.kernel_config)
    _write_csv(out, 'energy.csv', ENERGY_HEADER, [row], outputs)
    _write_csv(out, 'volumes.csv', ('chamber', 'volume'),
            [(k + 1, v) for k, v in enumerate(grid.volumes(partition))], outputs)
    _write_partition(out, 'partition.txt', partition, outputs)
    return outputs, (reporting.energy_report(report, target) + '\n\nvolumes:\n'
            + reporting.volumes_report(grid.volumes(partition)))

def _run_gamma_scan(config, out):
    outputs = []
    recipe, m, seed = config.partition, config.sigma.m, config.seed
    rows = kernel.gamma_scan(lambda spec: recipe.build(spec, m, seed), config.sigma,
            config.spec.n, config.spec.side, config.s_list, config.cells_list,
            config.kernel_config)
    _write_csv(out, 'gamma_scan.csv', kernel.ScanRow.HEADER, [r.as_row() for r in rows], outputs)
    finest = max(config.cells_list)
    limit = None
    if sum(1 for r in rows if r.N == finest) >= 2:
        limit = kernel.extrapolate_limit(rows)
        target = next(r.classical_target for r in rows if r.N == finest)
        _write_csv(out, 'gamma_limit.csv', ('N', 'order', 'extrapolated', 'classical_target'),
                [(finest, 1, limit, target)], outputs)
    return outputs, reporting.scan_report(rows, limit=limit)

def _run_mincut_replace(config, out):
    outputs = []
    i, j = config.pair
    kcfg = config.kernel_config
    partition = config.partition.build(config.spec, config.sigma.m, config.seed)
    flowcut.check_replaceable(partition, i, j)
    net = flowcut.build_network(partition, kcfg)
    flow = flowcut.max_flow(net, i, j)
    paths = flowcut.decompose_flow(flow)
    cut = flowcut.min_cut(net, i, j)
    replaced = flowcut.apply_cut(partition, cut, i, j)
    _write_text(out, 'network.txt', net.to_text(), outputs)
    _write_csv(out, 'flow.csv', ('tail', 'head', 'flow'), flowcut.flow_rows(flow), outputs)
    _write_csv(out, 'paths.csv', ('path', 'weight'), flowcut.path_rows(paths), outputs)
    _write_text(out, 'cut.txt', flowcut.cut_text(cut), outputs)
    _write_partition(out, 'input.txt', partition, outputs)
    _write_partition(out, 'replaced.txt', replaced, outputs)
    bar = tensions.relax(config.sigma)
    rows = []
    for label, p in (('input', partition), ('replaced', replaced)):
        rows.append([label] + [kernel.multiphase_energy(p, s, kcfg).total for s in (config.sigma, bar)])
    _write_csv(out, 'energy.csv', ('partition', 'sigma_total', 'sigma_bar_total'), rows, outputs)
    return outputs, reporting.cut_report(cut, flow.value, paths)

def _run_minimize(config, out):
    outputs = []
    partition = config.partition.build(config.spec, config.sigma.m, config.seed)
    result = minimize.local_search(partition, config.sigma, config.kernel_config,
            config.minimize_config)
    _write_csv(out, 'sweep_log.csv', minimize.SweepRecord.HEADER,
            [r.as_row() for r in result.sweeps], outputs)
    _write_partition(out, 'final.txt', result.partition, outputs)
    rows = [_energy_rows(label, p, config.sigma, config.kernel_config)[2]
            for label, p in (('initial', partition), ('final', result.partition))]
    _write_csv(out, 'energy.csv', ENERGY_HEADER, rows, outputs)
    return outputs, (reporting.sweep_report(result.sweeps, height=12) + '\n\n'
            + reporting.energy_report(result.report))

def _run_wetting(config, out):
    outputs = []
    i, j = config.pair
    rows, finals = minimize.wetting_experiment(config.sigma, i, j, config.s_list,
            config.cells_list, config.spec.n, config.kernel_config, config.minimize_config,
            side=config.spec.side)
    _write_csv(out, 'wetting.csv', minimize.WettingRow.HEADER, [r.as_row() for r in rows], outputs)
    for k, (row, partition) in enumerate(zip(rows, finals)):
        _write_partition(out, 'final_%02d.txt' % k, partition, outputs)
    return outputs, reporting.wetting_report(rows)

def _run_gamma_bar(config, out):
    outputs = []
    i, j = config.pair
    bar = tensions.relax(config.sigma)
    estimate = minimize.gamma_bar_estimate(i, j, bar, config.spec, config.kernel_config,
            config.minimize_config, restarts=config.restarts, threads=config.threads)
    seed = config.minimize_config.rng_seed
    _write_csv(out, 'gamma_bar.csv', ('restart', 'seed', 'scaled_energy'),
            [(r, seed + r, v) for r, v in enumerate(estimate.restart_values)], outputs)
    _write_csv(out, 'gamma_bar_summary.csv', ('best', 'halfspace', 'gap'),
            [(estimate.best, estimate.halfspace, estimate.gap)], outputs)
    _write_partition(out, 'best.txt', estimate.partition, outputs)
    return outputs, reporting.gamma_bar_report(estimate)

RUNNERS = {
    'relax': _run_relax,
    'energy': _run_energy,
    'gamma-scan': _run_gamma_scan,
    'mincut-replace': _run_mincut_replace,
    'minimize': _run_minimize,
    'wetting': _run_wetting,
    'gamma-bar': _run_gamma_bar,
}


#
# Verification
#

@dataclasses.dataclass(frozen=True)
class Deviation:
    output: str
    column: Optional[str]
    max_abs: float
    max_rel: float


@dataclasses.dataclass(frozen=True)
class VerifyReport:
    deviations: Tuple[Deviation, ...]
    mismatches: Tuple[str, ...]
    missing: Tuple[str, ...]

    @property
    def ok(self):
        return not self.missing and all(d.max_abs == 0 for d in self.deviations)


def load_manifest(path):
    try:
        with open(path, 'r') as f:
            manifest = yaml.safe_load(f)
    except yaml.YAMLError as err:
        raise ConfigError('%s: not a valid manifest: %s' % (path, err))
    if not isinstance(manifest, dict) or 'config' not in manifest:
        raise ConfigError('%s: not a run manifest' % path)
    return manifest

def _flatten(d, prefix=''):
    flat = {}
    for key, value in d.items():
        name = '%s.%s' % (prefix, key) if prefix else str(key)
        if isinstance(value, dict):
            flat.update(_flatten(value, name))
        else:
            flat[name] = value
    return flat

def config_mismatches(recorded, current):
    a, b = _flatten(recorded), _flatten(current)
    notes = []
    for key in sorted(set(a) | set(b)):
        if key == 'output':
            continue
        if a.get(key) != b.get(key):
            notes.append('%s: %r in manifest, %r now' % (key, a.get(key), b.get(key)))
    return notes

def compare_csv(a_path, b_path, name):
    ha, ra = util.read_csv(a_path)
    hb, rb = util.read_csv(b_path)
    if ha != hb or len(ra) != len(rb):
        return [Deviation(name, None, math.inf, math.inf)]
    deviations = []
    for col, title in enumerate(ha):
        max_abs = max_rel = 0.0
        for row_a, row_b in zip(ra, rb):
            x, y = row_a[col], row_b[col]
            if x == y:
                continue
            try:
                fx, fy = float(x), float(y)
            except ValueError:
                max_abs = max_rel = math.inf
                continue
            diff = abs(fx - fy)
            max_abs = max(max_abs, diff)
            max_rel = max(max_rel, diff / max(abs(fx), abs(fy)) if diff else 0.0)
        deviations.append(Deviation(name, title, max_abs, max_rel))
    return deviations

def compare_bytes(a_path, b_path, name):
    with open(a_path, 'rb') as f:
        a = f.read()
    with open(b_path, 'rb') as f:
        b = f.read()
    dev = 0.0 if a == b else math.inf
    return [Deviation(name, None, dev, dev)]

def verify(manifest_path, against=None, threads=None):
    '''Re-run the experiment recorded in a manifest into <run>/verify/ and
       compare every output.  `against` is an optional configuration file
       to run instead of the recorded one; differences between the two
       configurations, or in software version, are reported as
       mismatches.'''
    manifest_path = Path(manifest_path)
    run_dir = manifest_path.parent
    manifest = load_manifest(manifest_path)
    recorded = manifest['config']
    mismatches = []
    if manifest.get('version') != __version__:
        mismatches.append('version: %s in manifest, %s now' % (manifest.get('version'), __version__))

    out = run_dir / VERIFY_DIR
    kind = manifest.get('experiment') or recorded.get('experiment')
    if against is not None:
        cfg = Configuration.from_file(against)
    else:
        cfg = Configuration(recorded, run_dir)
    if threads is None:
        threads = manifest.get('threads')
    config = ExperimentConfig.from_configuration(cfg, kind=kind, output=str(out),
            seed=manifest.get('seed') if against is None else None, threads=threads)
    mismatches += config_mismatches(recorded, config.to_dict())

    if out.exists():
        shutil.rmtree(out)
    result = run(config)

    deviations, missing = [], []
    for name in manifest.get('outputs', []):
        original, again = run_dir / name, out / name
        if not original.exists() or not again.exists():
            missing.append(name)
        elif name.endswith('.csv'):
            deviations += compare_csv(original, again, name)
        else:
            deviations += compare_bytes(original, again, name)
    for name in result.outputs:
        if name not in manifest.get('outputs', []):
            missing.append(name)
    return VerifyReport(deviations=tuple(deviations), mismatches=tuple(mismatches),
            missing=tuple(missing))
