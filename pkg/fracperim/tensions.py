'''Surface tension matrices.

A surface tension matrix assigns an energy per unit interface to every pair
of chambers: zero diagonal, symmetric, positive off the diagonal.  This
module validates them, computes the relaxed matrix (the largest matrix
below sigma that satisfies the triangle inequality, which is the all-pairs
shortest-path closure), and provides the decompositions used to show that
half-spaces minimize the constrained cube problem: additive weights, the
four-chamber decomposition and cut-cone (l1) decompositions.

Chambers are 0-based here.  Text surfaces use 1-based chamber numbers.
'''

import dataclasses
import itertools
import logging
from typing import List, Optional, Tuple

import numpy as np
from scipy import optimize

from . import util

log = logging.getLogger(__name__)

CUT_TOLERANCE = 1e-9
MAX_CUT_CHAMBERS = 6


class InvalidMatrixError(ValueError):
    pass


class MatrixFormatError(ValueError):
    pass


class SurfaceTensionMatrix:
    '''Read-only m x m matrix.  Construction only checks the shape; use
       validate() for the sign and symmetry conditions.'''

    def __init__(self, entries):
        a = np.array(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise MatrixFormatError(
                'surface tension matrix must be square, got shape %s' % (a.shape,))
        if a.shape[0] < 2:
            raise MatrixFormatError('need at least 2 chambers, got %d' % a.shape[0])
        a.setflags(write=False)
        self.entries = a

    @property
    def m(self):
        return self.entries.shape[0]

    def __getitem__(self, key):
        return self.entries[key]

    def __eq__(self, other):
        if not isinstance(other, SurfaceTensionMatrix):
            return NotImplemented
        return np.array_equal(self.entries, other.entries)

    __hash__ = None

    def __repr__(self):
        return 'SurfaceTensionMatrix(%s)' % self.entries.tolist()

    def off_diagonal(self):
        return self.entries[~np.eye(self.m, dtype=bool)]

    @property
    def sigma_min(self):
        return float(self.off_diagonal().min())

    @property
    def sigma_max(self):
        return float(self.off_diagonal().max())

    def scaled(self, c):
        return SurfaceTensionMatrix(c * self.entries)

    def permuted(self, perm):
        'Relabel chambers: chamber k of the result is chamber perm[k] of self'
        perm = np.asarray(perm)
        return SurfaceTensionMatrix(self.entries[np.ix_(perm, perm)])

    def to_text(self):
        return util.format_square_matrix(self.entries)

    @classmethod
    def from_text(cls, text):
        try:
            return cls(util.parse_square_matrix(text))
        except util.TextFormatError as err:
            raise MatrixFormatError(str(err)) from err

    def save(self, path):
        with open(path, 'w') as f:
            f.write(self.to_text())

    @classmethod
    def load(cls, path):
        with open(path, 'r') as f:
            return cls.from_text(f.read())


def validate(matrix) -> Optional[str]:
    '''Returns None if the matrix is a valid surface tension matrix, or a
       description of the first violation found (1-based indices).'''
    a = matrix.entries
    if not np.all(np.isfinite(a)):
        i, j = np.argwhere(~np.isfinite(a))[0]
        return 'entry (%d,%d) is not finite' % (i + 1, j + 1)
    for i in range(matrix.m):
        if a[i, i] != 0:
            return 'diagonal entry (%d,%d) is %s, expected 0' % (i + 1, i + 1, a[i, i])
    for i, j in itertools.combinations(range(matrix.m), 2):
        if a[i, j] != a[j, i]:
            return 'asymmetry at (%d,%d): %s != %s' % (i + 1, j + 1, a[i, j], a[j, i])
        if not a[i, j] > 0:
            return 'sigma_%d%d = %s is not positive' % (i + 1, j + 1, a[i, j])
    return None

def require_valid(matrix):
    problem = validate(matrix)
    if problem:
        raise InvalidMatrixError('invalid surface tension matrix: ' + problem)

def relax(matrix):
    '''All-pairs shortest-path closure (Floyd-Warshall).  Passes repeat
       until nothing changes, so the result satisfies the triangle
       inequality exactly in floating point and relax() is idempotent.'''
    require_valid(matrix)
    d = matrix.entries.copy()
    while True:
        before = d.copy()
        for k in range(matrix.m):
            d = np.minimum(d, d[:, k, None] + d[None, k, :])
        if np.array_equal(d, before):
            break
    return SurfaceTensionMatrix(d)

def _triangle_slack(a):
    # slack[i, k, j] = a[i,k] + a[k,j] - a[i,j]
    return a[:, :, None] + a[None, :, :] - a[:, None, :]

def check_triangle(matrix, tol=0.0):
    a = matrix.entries
    return bool(np.all(a[:, None, :] <= a[:, :, None] + a[None, :, :] + tol))

def triangle_violations(matrix) -> List[Tuple[int, int, int]]:
    '''Triples (i, j, k), i < j, with sigma_ij > sigma_ik + sigma_kj'''
    slack = _triangle_slack(matrix.entries)
    found = []
    for i, k, j in np.argwhere(slack < 0):
        if i < j:
            found.append((int(i), int(j), int(k)))
    return sorted(found)

def optimal_path(matrix, i, j) -> List[int]:
    '''Chamber path from i to j whose summed tension equals the relaxed
       coefficient.  Among optimal simple paths, the lexicographically
       smallest vertex sequence is returned.'''
    if i == j:
        raise InvalidMatrixError('optimal_path needs two distinct chambers')
    bar = relax(matrix).entries
    a = matrix.entries
    target = bar[i, j]
    tol = 1e-12 * max(1.0, float(a.max()))

    # Depth-first search in neighbour order visits paths lexicographically.
    def search(path, cost):
        last = path[-1]
        if last == j:
            return path if cost <= target + tol else None
        for k in range(matrix.m):
            if k in path:
                continue
            step = cost + a[last, k]
            if step + bar[k, j] > target + tol:
                continue
            found = search(path + [k], step)
            if found:
                return found
        return None

    return search([i], 0.0)

def additive_decomposition_3(matrix) -> Tuple[float, float, float]:
    '''Nonnegative (a1, a2, a3) with sigma_ij = a_i + a_j.'''
    if matrix.m != 3:
        raise InvalidMatrixError('additive_decomposition_3 needs m = 3, got m = %d' % matrix.m)
    require_valid(matrix)
    if not check_triangle(matrix):
        raise InvalidMatrixError(
            'triangle inequality fails at %s; the weights would be negative'
            % _triple_str(triangle_violations(matrix)[0]))
    s = matrix.entries
    return (0.5 * (s[0, 1] + s[0, 2] - s[1, 2]),
            0.5 * (s[0, 1] + s[1, 2] - s[0, 2]),
            0.5 * (s[0, 2] + s[1, 2] - s[0, 1]))

def additive_weights(matrix, tol=1e-12) -> Optional[np.ndarray]:
    '''Weights a >= 0 with sigma_ij = a_i + a_j for all i != j, or None if
       the matrix is not additive.'''
    require_valid(matrix)
    s = matrix.entries
    m = matrix.m
    if m == 2:
        return np.array([0.5 * s[0, 1], 0.5 * s[0, 1]])
    alpha = np.empty(m)
    for i in range(m):
        j, k = [x for x in range(m) if x != i][:2]
        alpha[i] = 0.5 * (s[i, j] + s[i, k] - s[j, k])
    scale = tol * max(1.0, matrix.sigma_max)
    if np.any(alpha < -scale):
        return None
    rebuilt = alpha[:, None] + alpha[None, :]
    off = ~np.eye(m, dtype=bool)
    if np.max(np.abs(rebuilt[off] - s[off])) > scale:
        return None
    return np.maximum(alpha, 0.0)

def is_additive(matrix, tol=1e-12):
    return additive_weights(matrix, tol) is not None


@dataclasses.dataclass(frozen=True)
class FourPhaseDecomposition:
    # alphas[0..3] belong to single chambers, alphas[4..6] to the chamber
    # pairs {1,2}, {1,3}, {1,4} (each together with its complement pair).
    alphas: Tuple[float, ...]
    alpha_star: float

    def chamber_weights(self):
        'a~_k - a* for k = 1..4, nonnegative under the triangle inequality'
        return tuple(a - self.alpha_star for a in self.alphas[:4])

    def union_weights(self):
        'a* - a~_k for the unions E1uE2, E1uE3, E1uE4'
        return tuple(self.alpha_star - a for a in self.alphas[4:])

    def reconstruct(self):
        a = self.alphas
        s = np.zeros((4, 4))
        s[0, 1] = (a[0] + a[1]) - (a[5] + a[6])
        s[0, 2] = (a[0] + a[2]) - (a[4] + a[6])
        s[0, 3] = (a[0] + a[3]) - (a[4] + a[5])
        s[1, 2] = (a[1] + a[2]) - (a[4] + a[5])
        s[1, 3] = (a[1] + a[3]) - (a[4] + a[6])
        s[2, 3] = (a[2] + a[3]) - (a[5] + a[6])
        return SurfaceTensionMatrix(s + s.T)


def decomposition_4(matrix) -> FourPhaseDecomposition:
    if matrix.m != 4:
        raise InvalidMatrixError('decomposition_4 needs m = 4, got m = %d' % matrix.m)
    require_valid(matrix)
    if not check_triangle(matrix):
        raise InvalidMatrixError(
            'triangle inequality fails at %s' % _triple_str(triangle_violations(matrix)[0]))
    s = matrix.entries
    alphas = (
        0.5 * (s[0, 1] + s[0, 2] + s[0, 3]),
        0.5 * (s[0, 1] + s[1, 2] + s[1, 3]),
        0.5 * (s[0, 2] + s[1, 2] + s[2, 3]),
        0.5 * (s[0, 3] + s[1, 3] + s[2, 3]),
        0.5 * (s[0, 1] + s[2, 3]),
        0.5 * (s[0, 2] + s[1, 3]),
        0.5 * (s[0, 3] + s[1, 2]),
    )
    return FourPhaseDecomposition(alphas=alphas, alpha_star=max(alphas[4:]))


@dataclasses.dataclass(frozen=True)
class CutDecomposition:
    '''Nonnegative combination of cut matrices.  Each term is
       (chambers in J, lambda_J) with J a nonempty proper subset.'''
    m: int
    terms: Tuple[Tuple[frozenset, float], ...]

    def reconstruct(self):
        s = np.zeros((self.m, self.m))
        for chambers, weight in self.terms:
            s += weight * cut_matrix(self.m, chambers)
        return SurfaceTensionMatrix(s)

    def to_text(self):
        lines = []
        for chambers, weight in self.terms:
            lines.append('%d %s' % (subset_mask(chambers), util.fmt_float(weight)))
        return '\n'.join(lines) + '\n'

    @classmethod
    def from_text(cls, m, text):
        terms = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                mask, weight = line.split()
                chambers = mask_subset(int(mask))
                weight = float(weight)
            except ValueError:
                raise MatrixFormatError('line %d: expected "bitmask lambda", got %r' % (lineno, line))
            if not chambers or len(chambers) >= m or max(chambers) >= m:
                raise MatrixFormatError('line %d: %s is not a proper subset of %d chambers'
                        % (lineno, mask, m))
            if weight < 0:
                raise MatrixFormatError('line %d: negative weight %s' % (lineno, weight))
            terms.append((chambers, weight))
        return cls(m=m, terms=tuple(terms))


def subset_mask(chambers):
    return sum(1 << k for k in chambers)

def mask_subset(mask):
    return frozenset(k for k in range(mask.bit_length()) if mask >> k & 1)

def cut_matrix(m, chambers):
    'delta^J: 1 where exactly one of the two chambers lies in J'
    inside = np.zeros(m, dtype=bool)
    inside[list(chambers)] = True
    return (inside[:, None] != inside[None, :]).astype(float)

def cut_cone_decomposition(matrix, tol=CUT_TOLERANCE) -> Optional[CutDecomposition]:
    '''Writes sigma as a nonnegative combination of cut matrices, or
       returns None when no combination reproduces it within tol.  J and
       its complement give the same cut, so only subsets leaving out the
       last chamber are enumerated.'''
    require_valid(matrix)
    m = matrix.m
    if m > MAX_CUT_CHAMBERS:
        raise InvalidMatrixError(
            'cut cone enumeration is limited to m <= %d, got m = %d' % (MAX_CUT_CHAMBERS, m))
    iu = np.triu_indices(m, 1)
    masks = list(range(1, 2 ** (m - 1)))
    basis = np.column_stack([cut_matrix(m, mask_subset(mask))[iu] for mask in masks])
    target = matrix.entries[iu]
    weights, _ = optimize.nnls(basis, target)
    error = float(np.max(np.abs(basis @ weights - target)))
    log.debug('cut cone fit for m=%d: max error %g', m, error)
    if error >= tol:
        return None
    terms = tuple((mask_subset(mask), float(w)) for mask, w in zip(masks, weights) if w > 0)
    return CutDecomposition(m=m, terms=terms)

def _triple_str(triple):
    i, j, k = triple
    return 'sigma_%d%d > sigma_%d%d + sigma_%d%d' % (i + 1, j + 1, i + 1, k + 1, k + 1, j + 1)
