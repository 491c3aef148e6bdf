"""Exact affine-transformable set representations and grid algebra.

Sets are finite unions of convex polytopes in H-representation
{x : A x <= b}.  Axis-aligned hyper-rectangles are the common case and
get fast interval arithmetic; everything else goes through a small
self-contained Fourier-Motzkin feasibility check (no LP solver).

Tolerances are centralized here: GEOM_TOL for coordinate comparisons,
DET_TOL for invertibility, OCC_TOL for cell-occupancy boundary slack.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

GEOM_TOL = 1e-7
DET_TOL = 1e-9
OCC_TOL = 1e-9


class GeometryError(Exception):
    pass


class SingularMap(GeometryError):
    """Affine map used as a symmetry must be invertible."""


class UnboundedRegion(GeometryError):
    """Gridding requires the region to be bounded in every gridded dimension."""


# ---------------------------------------------------------------------------
# hyper-rectangles
# ---------------------------------------------------------------------------

def box(center, widths) -> "HyperRect":
    """Rectangle centered at ``center`` whose side i has full length widths[i]."""
    c = np.asarray(center, dtype=float)
    w = np.asarray(widths, dtype=float)
    return HyperRect(c - w / 2.0, c + w / 2.0)


@dataclass(frozen=True)
class HyperRect:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape:
            raise GeometryError("lo/hi length mismatch")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def is_empty(self) -> bool:
        return bool(np.any(self.lo > self.hi))

    @property
    def is_bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi)))

    @property
    def center(self) -> np.ndarray:
        return (self.lo + self.hi) / 2.0

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    def volume(self) -> float:
        if self.is_empty:
            return 0.0
        if not self.is_bounded:
            raise UnboundedRegion("volume of unbounded rectangle")
        return float(np.prod(self.widths))

    def contains_point(self, x, tol: float = GEOM_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def intersect(self, other: "HyperRect") -> "HyperRect":
        return HyperRect(np.maximum(self.lo, other.lo), np.minimum(self.hi, other.hi))

    def to_polytope(self) -> "ConvexPolytope":
        """H-representation; halfspaces for infinite bounds are omitted."""
        n = self.dim
        rows, rhs = [], []
        eye = np.eye(n)
        for i in range(n):
            if np.isfinite(self.hi[i]):
                rows.append(eye[i])
                rhs.append(self.hi[i])
            if np.isfinite(self.lo[i]):
                rows.append(-eye[i])
                rhs.append(-self.lo[i])
        if not rows:
            return ConvexPolytope(np.zeros((0, n)), np.zeros(0))
        return ConvexPolytope(np.array(rows), np.array(rhs))


# ---------------------------------------------------------------------------
# convex polytopes, Ax <= b
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvexPolytope:
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if A.shape[0] != b.shape[0]:
            raise GeometryError("A rows and b length mismatch")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def contains_point(self, x, tol: float = GEOM_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        if self.A.shape[0] == 0:
            return True
        return bool(np.all(self.A @ x <= self.b + tol))

    def is_empty(self, tol: float = GEOM_TOL) -> bool:
        return not fm_feasible(self.A, self.b, tol=tol)

    def intersect(self, other: "ConvexPolytope") -> "ConvexPolytope":
        return ConvexPolytope(np.vstack([self.A, other.A]),
                              np.concatenate([self.b, other.b]))

    def as_box(self, tol: float = GEOM_TOL) -> Optional[HyperRect]:
        """Return the equivalent HyperRect if every row is axis-aligned."""
        n = self.dim
        lo = np.full(n, -np.inf)
        hi = np.full(n, np.inf)
        for row, rhs in zip(self.A, self.b):
            nz = np.flatnonzero(np.abs(row) > tol)
            if len(nz) == 0:
                if rhs < -tol:
                    return HyperRect(np.ones(n), np.zeros(n))  # empty
                continue
            if len(nz) > 1:
                return None
            j = nz[0]
            if row[j] > 0:
                hi[j] = min(hi[j], rhs / row[j])
            else:
                lo[j] = max(lo[j], rhs / row[j])
        return HyperRect(lo, hi)

    def bounding_box(self) -> HyperRect:
        """Axis-aligned bounding box via per-axis Fourier-Motzkin projection."""
        b = self.as_box()
        if b is not None:
            return b
        n = self.dim
        lo = np.empty(n)
        hi = np.empty(n)
        for j in range(n):
            lo[j], hi[j] = fm_axis_bounds(self.A, self.b, j)
        return HyperRect(lo, hi)

    def transform(self, m: "AffineMap") -> "ConvexPolytope":
        """Exact image {m(x) : A x <= b} under an invertible affine map."""
        # y = M x + c  =>  x = Minv.A y + Minv.b, substitute into A x <= b
        Minv = m.inverse()
        return ConvexPolytope(self.A @ Minv.A, self.b - self.A @ Minv.b)


# ---------------------------------------------------------------------------
# Fourier-Motzkin feasibility (n <= 4 in this artifact)
# ---------------------------------------------------------------------------

def _interval_prefilter(A, b, tol):
    """Cheap box propagation on single-variable rows; returns False if
    an axis interval is already empty, True if inconclusive."""
    n = A.shape[1]
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    for row, rhs in zip(A, b):
        nz = np.flatnonzero(np.abs(row) > tol)
        if len(nz) == 1:
            j = nz[0]
            if row[j] > 0:
                hi[j] = min(hi[j], rhs / row[j])
            else:
                lo[j] = max(lo[j], rhs / row[j])
        elif len(nz) == 0 and rhs < -tol:
            return False
    return bool(np.all(lo <= hi + tol))


def fm_feasible(A: np.ndarray, b: np.ndarray, tol: float = GEOM_TOL) -> bool:
    """Decide whether {x : A x <= b} is nonempty by variable elimination."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if A.shape[0] == 0:
        return True
    if not _interval_prefilter(A, b, tol):
        return False
    # normalize row scales for numerical stability
    scale = np.maximum(np.max(np.abs(A), axis=1), np.abs(b))
    scale[scale < tol] = 1.0
    A = A / scale[:, None]
    b = b / scale
    n = A.shape[1]
    for _ in range(n):
        # eliminate the column with the fewest pos*neg products
        counts = []
        for j in range(A.shape[1]):
            pos = np.sum(A[:, j] > tol)
            neg = np.sum(A[:, j] < -tol)
            counts.append(pos * neg + (pos + neg))
        j = int(np.argmin(counts))
        pos = A[:, j] > tol
        neg = A[:, j] < -tol
        zero = ~pos & ~neg
        new_A = [np.delete(A[zero], j, axis=1)]
        new_b = [b[zero]]
        if pos.any() and neg.any():
            Ap, bp = A[pos], b[pos]
            An, bn = A[neg], b[neg]
            cp = Ap[:, j][:, None]
            cn = -An[:, j][:, None]
            # (1/cp) row_p + (1/cn) row_n  for every pair
            comb_A = (Ap / cp)[:, None, :] + (An / cn)[None, :, :]
            comb_b = (bp / cp[:, 0])[:, None] + (bn / cn[:, 0])[None, :]
            comb_A = np.delete(comb_A.reshape(-1, A.shape[1]), j, axis=1)
            new_A.append(comb_A)
            new_b.append(comb_b.reshape(-1))
        A = np.vstack(new_A)
        b = np.concatenate(new_b)
        if A.shape[0] == 0:
            return True
        if A.shape[1] == 0:
            break
        # drop all-zero rows, checking their rhs
        zero_rows = np.all(np.abs(A) <= tol, axis=1)
        if np.any(b[zero_rows] < -tol):
            return False
        A = A[~zero_rows]
        b = b[~zero_rows]
        if A.shape[0] == 0:
            return True
    return bool(np.all(b >= -tol))


def fm_axis_bounds(A: np.ndarray, b: np.ndarray, axis: int, tol: float = GEOM_TOL):
    """[min, max] of coordinate ``axis`` over {A x <= b} by eliminating the rest."""
    A = np.atleast_2d(np.asarray(A, dtype=float)).copy()
    b = np.atleast_1d(np.asarray(b, dtype=float)).copy()
    n = A.shape[1]
    order = [j for j in range(n) if j != axis]
    col = axis
    for j in sorted(order, reverse=True):
        pos = A[:, j] > tol
        neg = A[:, j] < -tol
        zero = ~pos & ~neg
        parts_A = [A[zero]]
        parts_b = [b[zero]]
        if pos.any() and neg.any():
            Ap, bp = A[pos], b[pos]
            An, bn = A[neg], b[neg]
            cp = Ap[:, j][:, None]
            cn = -An[:, j][:, None]
            comb_A = (Ap / cp)[:, None, :] + (An / cn)[None, :, :]
            comb_b = (bp / cp[:, 0])[:, None] + (bn / cn[:, 0])[None, :]
            parts_A.append(comb_A.reshape(-1, A.shape[1]))
            parts_b.append(comb_b.reshape(-1))
        A = np.vstack(parts_A)
        b = np.concatenate(parts_b)
        A = np.delete(A, j, axis=1)
        if j < col:
            col -= 1
    lo, hi = -np.inf, np.inf
    for row, rhs in zip(A, b):
        c = row[col] if A.shape[1] else 0.0
        if c > tol:
            hi = min(hi, rhs / c)
        elif c < -tol:
            lo = max(lo, rhs / c)
    return lo, hi


# ---------------------------------------------------------------------------
# regions: finite unions of polytopes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Region:
    polys: tuple
    dim: int

    @staticmethod
    def from_polytopes(polys: Iterable[ConvexPolytope], dim: int) -> "Region":
        kept = tuple(p for p in polys if not p.is_empty())
        return Region(kept, dim)

    @staticmethod
    def from_boxes(boxes: Iterable[HyperRect]) -> "Region":
        boxes = [bx for bx in boxes if not bx.is_empty]
        if not boxes:
            raise GeometryError("cannot infer dimension of an empty box list")
        return Region(tuple(bx.to_polytope() for bx in boxes), boxes[0].dim)

    @staticmethod
    def empty(dim: int) -> "Region":
        return Region((), dim)

    @property
    def is_empty(self) -> bool:
        return len(self.polys) == 0

    def contains_point(self, x, tol: float = GEOM_TOL) -> bool:
        return any(p.contains_point(x, tol) for p in self.polys)

    def boxes(self) -> Optional[list]:
        """All members as HyperRects, or None if any member is not a box."""
        out = []
        for p in self.polys:
            bx = p.as_box()
            if bx is None:
                return None
            out.append(bx)
        return out

    def bounding_box(self) -> HyperRect:
        if self.is_empty:
            raise GeometryError("bounding box of empty region")
        bbs = [p.bounding_box() for p in self.polys]
        return HyperRect(np.min([b.lo for b in bbs], axis=0),
                         np.max([b.hi for b in bbs], axis=0))


def transform_region(r: Region, m: "AffineMap") -> Region:
    if abs(np.linalg.det(m.A)) < DET_TOL:
        raise SingularMap("affine map is singular within tolerance")
    if m.A.shape[0] != r.dim:
        raise GeometryError("map/region dimension mismatch")
    return Region(tuple(p.transform(m) for p in r.polys), r.dim)


def intersect(r1: Region, r2: Region) -> Region:
    if r1.dim != r2.dim:
        raise GeometryError("region dimension mismatch")
    polys = []
    for p in r1.polys:
        for q in r2.polys:
            pq = p.intersect(q)
            if not pq.is_empty():
                polys.append(pq)
    return Region(tuple(polys), r1.dim)


def region_volume(r: Region, grid: Optional["Grid"] = None) -> float:
    """Volume of the union.

    Exact when the members are pairwise-disjoint rectangles (the cases the
    engine produces); unions with overlap or non-box members are measured by
    cell inclusion on ``grid``, a documented approximation.
    """
    if r.is_empty:
        return 0.0
    bxs = r.boxes()
    if bxs is not None:
        disjoint = True
        for i in range(len(bxs)):
            for j in range(i + 1, len(bxs)):
                inter = bxs[i].intersect(bxs[j])
                if not inter.is_empty and np.all(inter.widths > GEOM_TOL):
                    disjoint = False
                    break
            if not disjoint:
                break
        if disjoint:
            return float(sum(bx.volume() for bx in bxs))
    if grid is None:
        raise GeometryError("overlapping or non-box region needs a grid to measure")
    return occupied_cells(r, grid).volume(grid)


# ---------------------------------------------------------------------------
# affine maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AffineMap:
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
            raise GeometryError("affine map shape mismatch")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @staticmethod
    def identity(n: int) -> "AffineMap":
        return AffineMap(np.eye(n), np.zeros(n))

    @staticmethod
    def translation(offset) -> "AffineMap":
        off = np.asarray(offset, dtype=float)
        return AffineMap(np.eye(len(off)), off)

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x @ self.A.T + self.b

    def inverse(self) -> "AffineMap":
        det = np.linalg.det(self.A)
        if abs(det) < DET_TOL:
            raise SingularMap("cannot invert map with |det| < 1e-9")
        Ainv = np.linalg.inv(self.A)
        return AffineMap(Ainv, -Ainv @ self.b)

    def compose(self, inner: "AffineMap") -> "AffineMap":
        """self o inner, i.e. x -> self(inner(x))."""
        return AffineMap(self.A @ inner.A, self.A @ inner.b + self.b)

    def is_identity(self, tol: float = DET_TOL) -> bool:
        return bool(np.allclose(self.A, np.eye(self.dim), atol=tol)
                    and np.allclose(self.b, 0.0, atol=tol))

    def equals(self, other: "AffineMap", tol: float = DET_TOL) -> bool:
        return bool(np.allclose(self.A, other.A, atol=tol)
                    and np.allclose(self.b, other.b, atol=tol))

    def axis_action(self, tol: float = DET_TOL) -> Optional[tuple]:
        """If the linear part is a signed permutation (one +-1 per row/col),
        return (perm, signs) so boxes map to boxes exactly; else None."""
        n = self.dim
        perm = np.full(n, -1, dtype=int)
        signs = np.zeros(n)
        for i in range(n):
            nz = np.flatnonzero(np.abs(self.A[i]) > tol)
            if len(nz) != 1:
                return None
            j = nz[0]
            v = self.A[i, j]
            if abs(abs(v) - 1.0) > 1e-6:
                return None
            perm[i] = j
            signs[i] = v
        if len(set(perm.tolist())) != n:
            return None
        return perm, signs

    def apply_boxes(self, lo: np.ndarray, hi: np.ndarray):
        """Images of axis-aligned boxes, for signed-permutation linear parts.

        lo/hi have shape (N, n); returns the transformed (lo, hi).
        """
        act = self.axis_action()
        if act is None:
            raise GeometryError("map does not preserve axis-aligned boxes")
        perm, signs = act
        a = lo[:, perm] * signs
        c = hi[:, perm] * signs
        new_lo = np.minimum(a, c) + self.b
        new_hi = np.maximum(a, c) + self.b
        return new_lo, new_hi


# ---------------------------------------------------------------------------
# grids and cell sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    """Uniform cell grid; ``wrap[i]`` > 0 marks dimension i as periodic with
    that period (an exact multiple of the cell width, e.g. a heading angle
    with period 2*pi), and cells of wrapped dimensions are canonicalized."""

    origin: np.ndarray
    cell_width: np.ndarray
    wrap: Optional[np.ndarray] = None

    def __post_init__(self):
        o = np.atleast_1d(np.asarray(self.origin, dtype=float))
        w = np.atleast_1d(np.asarray(self.cell_width, dtype=float))
        if np.any(w <= 0):
            raise GeometryError("cell widths must be positive")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "cell_width", w)
        if self.wrap is not None:
            wr = np.atleast_1d(np.asarray(self.wrap, dtype=float))
            if wr.shape != o.shape:
                raise GeometryError("wrap period vector length mismatch")
            counts = wr / w
            for i in range(len(wr)):
                if wr[i] > 0 and abs(counts[i] - round(counts[i])) > 1e-9:
                    raise GeometryError("wrap period must be a multiple of "
                                        "the cell width")
            object.__setattr__(self, "wrap", wr)

    @property
    def dim(self) -> int:
        return self.origin.shape[0]

    def _wrap_counts(self) -> Optional[np.ndarray]:
        if self.wrap is None:
            return None
        counts = np.zeros(self.dim, dtype=np.int64)
        for i in range(self.dim):
            if self.wrap[i] > 0:
                counts[i] = int(round(self.wrap[i] / self.cell_width[i]))
        return counts

    def canonicalize(self, cells: np.ndarray) -> np.ndarray:
        """Map cell indices of wrapped dimensions into the canonical window
        centered on the origin cell (e.g. [-16, 16) for a 32-cell period)."""
        counts = self._wrap_counts()
        if counts is None or cells.size == 0:
            return cells
        out = cells.copy()
        for i in range(self.dim):
            m = counts[i]
            if m > 0:
                half = m // 2
                out[:, i] = ((out[:, i] + half) % m) - half
        return out

    def cell_volume(self) -> float:
        return float(np.prod(self.cell_width))

    def cell_of(self, x) -> tuple:
        x = np.asarray(x, dtype=float)
        return tuple(np.floor((x - self.origin) / self.cell_width).astype(np.int64))

    def cell_center(self, cell) -> np.ndarray:
        c = np.asarray(cell, dtype=float)
        return self.origin + (c + 0.5) * self.cell_width

    def cell_centers(self, cells: np.ndarray) -> np.ndarray:
        return self.origin + (cells.astype(float) + 0.5) * self.cell_width

    def cell_bounds(self, cells: np.ndarray):
        lo = self.origin + cells.astype(float) * self.cell_width
        return lo, lo + self.cell_width

    def boxes_to_cells(self, lo: np.ndarray, hi: np.ndarray,
                       raw: bool = False) -> np.ndarray:
        """Grid cells with positive-measure overlap with any of the boxes.

        Cells are half-open [origin + c*w, origin + (c+1)*w); boxes are
        shrunk by OCC_TOL per side so that boundary-aligned boxes occupy
        exactly their own cells.  Degenerate dimensions fall back to the
        half-open cell containing the midpoint.  Returns unique int cells,
        shape (M, n), lexicographically sorted; wrapped dimensions are
        canonicalized unless ``raw`` is set (raw indices keep the geometric
        position, for candidate sweeps that still need to intersect).
        """
        lo = np.atleast_2d(np.asarray(lo, dtype=float))
        hi = np.atleast_2d(np.asarray(hi, dtype=float))
        if lo.size == 0:
            return np.zeros((0, self.dim), dtype=np.int64)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise UnboundedRegion("cannot grid an unbounded box")
        w = self.cell_width
        o = self.origin
        degen = (hi - lo) <= 2 * OCC_TOL
        lo_eff = np.where(degen, (lo + hi) / 2.0, lo + OCC_TOL)
        hi_eff = np.where(degen, (lo + hi) / 2.0, hi - OCC_TOL)
        ilo = np.floor((lo_eff - o) / w).astype(np.int64)
        ihi = np.floor((hi_eff - o) / w).astype(np.int64)
        if ilo.shape[0] > 4096:
            # converged tubes repeat the same integer box thousands of times
            pl0, ph0 = _pack(ilo), _pack(ihi)
            order = np.lexsort((ph0, pl0))
            pl, ph = pl0[order], ph0[order]
            keep = np.ones(len(order), dtype=bool)
            keep[1:] = (pl[1:] != pl[:-1]) | (ph[1:] != ph[:-1])
            ilo = ilo[order][keep]
            ihi = ihi[order][keep]
        span = ihi - ilo
        max_span = int(span.max()) if span.size else 0
        n = self.dim
        if max_span <= 1:
            # vectorized: each box touches at most 2 cells per dimension
            offs = np.array(list(itertools.product([0, 1], repeat=n)), dtype=np.int64)
            cand = ilo[:, None, :] + offs[None, :, :]
            valid = np.all(cand <= ihi[:, None, :], axis=2)
            cells = cand[valid]
        else:
            chunks = []
            for k in range(lo.shape[0]):
                axes = [np.arange(ilo[k, d], ihi[k, d] + 1) for d in range(n)]
                mesh = np.meshgrid(*axes, indexing="ij")
                chunks.append(np.stack([m.ravel() for m in mesh], axis=1))
            cells = np.vstack(chunks)
        if not raw:
            cells = self.canonicalize(cells)
        return _unpack(np.unique(_pack(cells)), n)


# integer cells are bit-packed into one int64 (21 bits per dimension) so
# uniqueness and the set algebra run on fast 1-d sorted arrays
_PACK_OFF = np.int64(1) << 20
_PACK_M = np.int64(1) << 21


def _pack(cells: np.ndarray) -> np.ndarray:
    cells = np.asarray(cells, dtype=np.int64)
    if cells.size and np.any(np.abs(cells) >= _PACK_OFF):
        raise GeometryError("cell index exceeds the packable range")
    out = cells[:, 0] + _PACK_OFF
    for d in range(1, cells.shape[1]):
        out = out * _PACK_M + (cells[:, d] + _PACK_OFF)
    return out


def _unpack(keys: np.ndarray, dim: int) -> np.ndarray:
    out = np.empty((keys.shape[0], dim), dtype=np.int64)
    rest = keys.copy()
    for d in range(dim - 1, 0, -1):
        out[:, d] = rest % _PACK_M - _PACK_OFF
        rest //= _PACK_M
    out[:, 0] = rest - _PACK_OFF
    return out


class CellSet:
    """Exact set of integer grid cells; supports union/containment/volume.

    Internally a sorted array of packed int64 keys (lexicographic cell
    order); construction deduplicates.
    """

    __slots__ = ("keys", "_dim", "_cells")

    def __init__(self, cells: Optional[np.ndarray] = None,
                 dim: Optional[int] = None, _keys: Optional[np.ndarray] = None):
        if _keys is not None:
            self.keys = _keys
            self._dim = dim
            self._cells = None
            return
        if cells is None or len(cells) == 0:
            if dim is None:
                raise GeometryError("empty CellSet needs an explicit dimension")
            self.keys = np.zeros(0, dtype=np.int64)
            self._dim = dim
        else:
            cells = np.asarray(cells, dtype=np.int64)
            self.keys = np.unique(_pack(cells))
            self._dim = cells.shape[1]
        self._cells = None

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def cells(self) -> np.ndarray:
        if self._cells is None:
            self._cells = _unpack(self.keys, self._dim)
        return self._cells

    def __len__(self) -> int:
        return self.keys.shape[0]

    def union(self, other: "CellSet") -> "CellSet":
        if len(self) == 0:
            return other
        if len(other) == 0:
            return self
        return CellSet(dim=self._dim,
                       _keys=np.union1d(self.keys, other.keys))

    def difference(self, other: "CellSet") -> "CellSet":
        if len(self) == 0 or len(other) == 0:
            return self
        keep = ~np.isin(self.keys, other.keys, assume_unique=True)
        return CellSet(dim=self._dim, _keys=self.keys[keep])

    def issubset(self, other: "CellSet") -> bool:
        if len(self) == 0:
            return True
        if len(other) < len(self):
            return False
        return bool(np.isin(self.keys, other.keys, assume_unique=True).all())

    def intersection(self, other: "CellSet") -> "CellSet":
        if len(self) == 0 or len(other) == 0:
            return CellSet(dim=self._dim)
        return CellSet(dim=self._dim,
                       _keys=np.intersect1d(self.keys, other.keys,
                                            assume_unique=True))

    def volume(self, grid: Grid) -> float:
        return len(self) * grid.cell_volume()

    def boxes(self, grid: Grid):
        return grid.cell_bounds(self.cells)

    def bounding_box(self, grid: Grid) -> HyperRect:
        if len(self) == 0:
            raise GeometryError("bounding box of empty cell set")
        lo, hi = self.boxes(grid)
        return HyperRect(lo.min(axis=0), hi.max(axis=0))

    def to_region(self, grid: Grid) -> Region:
        lo, hi = self.boxes(grid)
        return Region(tuple(HyperRect(l, h).to_polytope() for l, h in zip(lo, hi)),
                      self.dim)


def contains(outer: CellSet, inner: CellSet) -> bool:
    """True iff inner is a subset of outer (same grid assumed)."""
    return inner.issubset(outer)


def occupied_cells(r: Region, g: Grid) -> CellSet:
    """Cells of ``g`` with positive-measure overlap with region ``r``.

    Box members use interval arithmetic; other polytopes are swept over
    their bounding box with an exact per-cell Fourier-Motzkin test.
    """
    if r.dim != g.dim:
        raise GeometryError("region/grid dimension mismatch")
    if r.is_empty:
        return CellSet(dim=g.dim)
    parts = []
    for p in r.polys:
        bx = p.as_box()
        if bx is not None:
            if bx.is_empty:
                continue
            if not bx.is_bounded:
                raise UnboundedRegion("region unbounded in a gridded dimension")
            parts.append(g.boxes_to_cells(bx.lo[None, :], bx.hi[None, :]))
            continue
        bb = p.bounding_box()
        if not bb.is_bounded:
            raise UnboundedRegion("region unbounded in a gridded dimension")
        cand = g.boxes_to_cells(bb.lo[None, :], bb.hi[None, :], raw=True)
        if len(cand) == 0:
            continue
        lo, hi = g.cell_bounds(cand)
        keep = []
        for k in range(cand.shape[0]):
            cell_poly = HyperRect(lo[k] + OCC_TOL, hi[k] - OCC_TOL).to_polytope()
            if fm_feasible(np.vstack([p.A, cell_poly.A]),
                           np.concatenate([p.b, cell_poly.b])):
                keep.append(cand[k])
        if keep:
            parts.append(g.canonicalize(np.array(keep, dtype=np.int64)))
    if not parts:
        return CellSet(dim=g.dim)
    return CellSet(np.vstack(parts))
