'''Max-flow / min-cut on the chamber interaction network.

Vertices are chambers, the capacity of the arc k -> l (and of l -> k) is the
total interaction p_kl between chambers k and l.  A minimum cut separating
two chambers tells which chambers to merge into each of them so that the
two-chamber competitor does not cost more, as long as the tension matrix
satisfies the triangle inequality.
'''

import collections
import dataclasses
import heapq
import logging
from typing import FrozenSet, Optional, Tuple

import numpy as np

from . import kernel
from . import tensions
from . import util

log = logging.getLogger(__name__)

# Relative capacity below which residual arcs count as saturated.
RESIDUAL_TOLERANCE = 1e-13

MAX_SURGERY_ROUNDS = 10000


class FlowError(ValueError):
    pass


class FlowNetwork:
    def __init__(self, capacities):
        p = np.array(capacities, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise FlowError('capacities must be a square matrix, got shape %s' % (p.shape,))
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise FlowError('capacities must be finite and nonnegative')
        if np.any(np.diag(p) != 0):
            raise FlowError('capacities must have a zero diagonal')
        if not np.array_equal(p, p.T):
            raise FlowError('capacities must be symmetric')
        p.setflags(write=False)
        self.capacities = p

    @property
    def m(self):
        return self.capacities.shape[0]

    def to_text(self):
        return util.format_square_matrix(self.capacities)

    @classmethod
    def from_text(cls, text):
        try:
            return cls(util.parse_square_matrix(text))
        except util.TextFormatError as err:
            raise FlowError(str(err)) from err


@dataclasses.dataclass(frozen=True, eq=False)
class Flow:
    values: np.ndarray
    source: int
    sink: int
    capacities: Optional[np.ndarray] = None

    @property
    def value(self):
        f = self.values
        return float(np.sum(f[self.source]) - np.sum(f[:, self.source]))

    def validate(self, tol=0.0) -> Optional[str]:
        f = self.values
        if np.any(f < 0):
            return 'negative arc flow'
        if self.capacities is not None:
            over = np.argwhere(f > self.capacities + tol)
            if len(over):
                k, l = over[0]
                return 'arc %d->%d carries %s over capacity %s' % (
                        k + 1, l + 1, f[k, l], self.capacities[k, l])
        balance = f.sum(axis=0) - f.sum(axis=1)
        for v in range(len(f)):
            if v not in (self.source, self.sink) and abs(balance[v]) > tol:
                return 'flow is not conserved at vertex %d' % (v + 1)
        if balance[self.source] > tol or abs(balance[self.source] + balance[self.sink]) > tol:
            return 'source and sink balances do not match'
        return None

    def edges(self):
        'Arcs with positive flow as (tail, head, flow)'
        return [(int(k), int(l), float(self.values[k, l])) for k, l in np.argwhere(self.values > 0)]


@dataclasses.dataclass(frozen=True)
class Cut:
    source_side: FrozenSet[int]
    sink_side: FrozenSet[int]

    def size(self, net):
        return cut_size(net, self.source_side)


@dataclasses.dataclass(frozen=True)
class PathDecomposition:
    paths: Tuple[Tuple[Tuple[int, ...], float], ...]

    @property
    def value(self):
        return sum(w for _, w in self.paths)

    def arc_loads(self, m):
        loads = np.zeros((m, m))
        for path, w in self.paths:
            for k, l in zip(path, path[1:]):
                loads[k, l] += w
        return loads

    def has_opposite_arcs(self):
        arcs = {(k, l) for path, _ in self.paths for k, l in zip(path, path[1:])}
        return any((l, k) in arcs for k, l in arcs)


def build_network(partition, cfg):
    if not partition.exterior.chambers():
        raise FlowError('the interaction network needs a partition with exterior data')
    return FlowNetwork(kernel.pair_interactions(partition, cfg).network)

def network_energy(net, sigma):
    return 0.5 * float(np.sum(sigma.entries * net.capacities))

def cut_size(net, source_side):
    inside = np.zeros(net.m, dtype=bool)
    inside[list(source_side)] = True
    return float(np.sum(net.capacities[np.ix_(inside, ~inside)]))

def _check_terminals(net, source, sink):
    if source == sink:
        raise FlowError('source and sink must differ, got %d twice' % (source + 1))
    for v in (source, sink):
        if not 0 <= v < net.m:
            raise FlowError('vertex %d outside 1..%d' % (v + 1, net.m))

def _residual_reach(residual, source, eps):
    seen = [False] * len(residual)
    seen[source] = True
    parent = [-1] * len(residual)
    queue = collections.deque([source])
    while queue:
        u = queue.popleft()
        for v in range(len(residual)):
            if not seen[v] and residual[u, v] > eps:
                seen[v] = True
                parent[v] = u
                queue.append(v)
    return seen, parent

def _solve(net, source, sink):
    'Edmonds-Karp on the net flow matrix; returns (net flow, eps)'
    _check_terminals(net, source, sink)
    cap = net.capacities
    eps = RESIDUAL_TOLERANCE * float(cap.max()) if cap.size else 0.0
    F = np.zeros_like(cap)
    while True:
        seen, parent = _residual_reach(cap - F, source, eps)
        if not seen[sink]:
            break
        path = [sink]
        while path[-1] != source:
            path.append(parent[path[-1]])
        path.reverse()
        bottleneck = min(cap[u, v] - F[u, v] for u, v in zip(path, path[1:]))
        for u, v in zip(path, path[1:]):
            F[u, v] += bottleneck
            F[v, u] -= bottleneck
    return F, eps

def max_flow(net, source, sink):
    F, _ = _solve(net, source, sink)
    flow = Flow(values=np.maximum(F, 0.0), source=source, sink=sink, capacities=net.capacities)
    log.debug('max flow %d->%d: %g', source + 1, sink + 1, flow.value)
    return flow

def min_cut(net, source, sink):
    '''Minimum cut whose source side is everything reachable from the
       source in the residual network of a maximum flow.'''
    F, eps = _solve(net, source, sink)
    seen, _ = _residual_reach(net.capacities - F, source, eps)
    source_side = frozenset(v for v in range(net.m) if seen[v])
    return Cut(source_side=source_side, sink_side=frozenset(range(net.m)) - source_side)


#
# Flow decomposition
#

def _widest_path(g, source, sink):
    'Path maximizing the smallest arc flow; ties go to the lowest vertex'
    m = len(g)
    width = [0.0] * m
    width[source] = float('inf')
    parent = [-1] * m
    done = [False] * m
    heap = [(-width[source], source)]
    while heap:
        w, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        if u == sink:
            break
        for v in range(m):
            if done[v] or g[u, v] <= 0:
                continue
            cand = min(-w, g[u, v])
            if cand > width[v]:
                width[v] = cand
                parent[v] = u
                heapq.heappush(heap, (-cand, v))
    if not done[sink]:
        return None, 0.0
    path = [sink]
    while path[-1] != source:
        path.append(parent[path[-1]])
    return tuple(reversed(path)), width[sink]

def _drop_cycles(path):
    out = []
    for v in path:
        if v in out:
            del out[out.index(v) + 1:]
        else:
            out.append(v)
    return tuple(out)

def _merge(paths):
    weights = collections.OrderedDict()
    for path, w in paths:
        if w > 0:
            weights[path] = weights.get(path, 0.0) + w
    return list(weights.items())

def _find_opposite(paths):
    arcs = {}
    for n, (path, _) in enumerate(paths):
        for p, arc in enumerate(zip(path, path[1:])):
            arcs.setdefault(arc, (n, p))
    for (k, l), (n, p) in arcs.items():
        if (l, k) in arcs:
            m_, q = arcs[(l, k)]
            return n, p, m_, q
    return None

def eliminate_opposite_arcs(paths):
    '''Path surgery: while some path uses k->l and another uses l->k, cross
       the two paths over at that arc pair, moving min(weight) onto the
       crossed paths and cutting out any cycles.'''
    paths = _merge(paths)
    for _ in range(MAX_SURGERY_ROUNDS):
        found = _find_opposite(paths)
        if found is None:
            return paths
        i, p, j, q = found
        (vi, ai), (vj, aj) = paths[i], paths[j]
        w = min(ai, aj)
        crossed_i = _drop_cycles(vi[:p + 1] + vj[q + 2:])
        crossed_j = _drop_cycles(vj[:q + 1] + vi[p + 2:])
        rest = [(path, a - w if n in (i, j) else a) for n, (path, a) in enumerate(paths)]
        paths = _merge(rest + [(crossed_i, w), (crossed_j, w)])
    raise FlowError('opposite-arc elimination did not settle after %d rounds' % MAX_SURGERY_ROUNDS)

def decompose_flow(flow):
    problem = flow.validate(tol=1e-9 * max(1.0, float(np.max(flow.values, initial=0.0))))
    if problem:
        raise FlowError('invalid flow: ' + problem)
    # Opposite arc flows cancel, so the peeled paths never pair an arc with
    # its reverse and the surgery below only acts on path lists built elsewhere.
    g = np.maximum(flow.values - flow.values.T, 0.0)
    total = flow.value
    tol = 1e-12 * max(1.0, abs(total))
    paths = []
    while np.sum(g[flow.source]) > tol:
        path, w = _widest_path(g, flow.source, flow.sink)
        if path is None:
            break
        paths.append((path, w))
        for k, l in zip(path, path[1:]):
            g[k, l] -= w
    paths = eliminate_opposite_arcs(paths)
    return PathDecomposition(paths=tuple((tuple(int(v) for v in p), float(w)) for p, w in paths))


#
# Replacement
#

def apply_cut(partition, cut, i, j):
    'Chambers on the source side merge into i, the rest into j'
    inside = np.zeros(partition.m, dtype=bool)
    inside[list(cut.source_side)] = True
    labels = np.where(inside[partition.labels], i, j)
    return partition.with_labels(labels)

def check_replaceable(partition, i, j):
    if i == j:
        raise FlowError('replacement needs two distinct chambers')
    if partition.exterior.chambers() != frozenset((i, j)):
        raise FlowError('exterior must carry exactly chambers %d and %d, it carries %s'
                % (i + 1, j + 1, sorted(c + 1 for c in partition.exterior.chambers())))

def replace(partition, i, j, cfg):
    check_replaceable(partition, i, j)
    net = build_network(partition, cfg)
    cut = min_cut(net, i, j)
    log.info('replacement cut: %s | %s', sorted(c + 1 for c in cut.source_side),
            sorted(c + 1 for c in cut.sink_side))
    return apply_cut(partition, cut, i, j)


#
# Dumps
#

def flow_rows(flow):
    return [(k + 1, l + 1, f) for k, l, f in flow.edges()]

def path_rows(decomposition):
    return [(' '.join(str(v + 1) for v in path), w) for path, w in decomposition.paths]

def cut_text(cut):
    return 'K1 %d\nK2 %d\n' % (tensions.subset_mask(cut.source_side),
            tensions.subset_mask(cut.sink_side))
