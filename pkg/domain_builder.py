from __future__ import annotations
from typing import List, Dict, Tuple, Optional, Union
import inspect
import logging
import math
import time

import numpy as np
from matplotlib.path import Path
from scipy import ndimage

from definitions import *
from profile_functions import ProfileFunction, closed_form, zero_profile, step, accumulating_jumps, one_sided_limits

logger = logging.getLogger(__name__)

##
## Defaults
##
MIN_ABS_DET = 1e-12
KNOT_BUDGET = 20000
INITIAL_KNOTS_PER_PIECE = 8
OSCILLATION_SAMPLES = 17
CONTAINMENT_SAMPLES = 100000
RASTER_CHUNK = 1 << 18
K_MAX_DEFAULT = 40
MAPPED_BBOX_SAMPLES = 20000
MAPPED_BBOX_PAD = 0.02

class AffineMap:
    matrix: np.ndarray
    translation: np.ndarray

    def __init__(self, matrix, translation = None):
        matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
        n = matrix.shape[0]
        if matrix.shape != (n, n):
            raise ParameterError("affine matrix must be square, got shape " + str(matrix.shape))

        det = float(np.linalg.det(matrix))
        if abs(det) <= MIN_ABS_DET:
            raise ParameterError("affine matrix is not invertible (det = " + str(det) + ")")

        self.matrix = matrix
        self.translation = np.zeros(n) if translation is None else np.asarray(translation, dtype=np.float64).reshape(n)
        self._inverse = np.linalg.inv(matrix)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.matrix))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return points @ self.matrix.T + self.translation

    def apply_inverse(self, points: np.ndarray) -> np.ndarray:
        return (points - self.translation) @ self._inverse.T

    def then(self, outer: AffineMap) -> AffineMap:
        """outer after self."""
        return AffineMap(outer.matrix @ self.matrix, outer.matrix @ self.translation + outer.translation)

    def __repr__(self):
        return "AffineMap(" + str(self.matrix.tolist()) + " + " + str(self.translation.tolist()) + ")"

def identity_affine(n: int) -> AffineMap:
    return AffineMap(np.eye(n))

def diagonal_affine(scales: List[float], translation: List[float] = None) -> AffineMap:
    return AffineMap(np.diag(np.asarray(scales, dtype=np.float64)), translation)

##
## Domains
##
## Every domain answers contains_many(points (m, n)) -> bool array and bbox() -> (lo, hi).
##

class Domain:
    dim: int
    name: str

    def contains_many(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError()

    def bbox(self) -> Tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError()

    def _check_points(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        if points.ndim == 1:
            points = points.reshape(1, -1)
        if points.shape[1] != self.dim:
            raise DomainError("point dimension " + str(points.shape[1]) + " does not match domain dimension " + str(self.dim))
        return points

    def __repr__(self):
        return type(self).__name__ + "(" + self.name + ")"

class ElementaryDomain(Domain):
    profile: ProfileFunction
    shrink_h: float
    shrink_mode: ShrinkMode
    affine: AffineMap

    def __init__(self, profile: ProfileFunction, affine: AffineMap = None, shrink_h: float = 0.0,
            shrink_mode: ShrinkMode = ShrinkMode.VERTICAL_ONLY, name: str = "elementary"):
        self.dim = profile.base_dim + 1
        self.profile = profile
        self.affine = identity_affine(self.dim) if affine is None else affine
        self.shrink_h = float(shrink_h)
        self.shrink_mode = shrink_mode
        self.name = name

        if self.affine.dim != self.dim:
            raise ParameterError("affine map dimension " + str(self.affine.dim) + " does not match domain dimension " + str(self.dim))
        _check_h(self.shrink_h, allow_zero=True)

    def contains_many(self, points) -> np.ndarray:
        points = self._check_points(points)
        q = self.affine.apply_inverse(points)
        return self._reference_contains(q)

    def _reference_contains(self, q: np.ndarray) -> np.ndarray:
        h = self.shrink_h
        base = q[:, :-1]
        y = q[:, -1]

        if self.shrink_mode == ShrinkMode.ALL_DIRECTIONS:
            inside = np.all((base > h) & (base < 1.0 - h), axis=1)
        else:
            inside = np.all((base > 0.0) & (base < 1.0), axis=1)

        out = np.zeros(q.shape[0], dtype=bool)
        if np.any(inside):
            f = self.profile._raw(base[inside])
            yi = y[inside]
            out[inside] = (yi > f + h) & (yi < f + 1.0 - h)
        return out

    def reference_box(self) -> Tuple[np.ndarray, np.ndarray]:
        m = self.profile.bound
        lo = np.zeros(self.dim)
        hi = np.ones(self.dim)
        lo[-1] = -m
        hi[-1] = 1.0 + m
        return lo, hi

    def bbox(self) -> Tuple[np.ndarray, np.ndarray]:
        lo, hi = self.reference_box()
        return _image_box(self.affine, lo, hi)

    def exact_area(self) -> float:
        """Base area times fiber length times |det|: the profile shift does not change fiber length."""
        h = self.shrink_h
        fiber = 1.0 - 2.0 * h
        if self.shrink_mode == ShrinkMode.ALL_DIRECTIONS:
            base = (1.0 - 2.0 * h) ** (self.dim - 1)
        else:
            base = 1.0
        return base * fiber * abs(self.affine.det)

class BoxDomain(Domain):
    """Axis-aligned box, open unless closed_lo/closed_hi mark a face as included."""

    lo: np.ndarray
    hi: np.ndarray
    closed_lo: np.ndarray
    closed_hi: np.ndarray

    def __init__(self, lo, hi, name: str = "box", closed_lo = None, closed_hi = None):
        self.lo = np.asarray(lo, dtype=np.float64).reshape(-1)
        self.hi = np.asarray(hi, dtype=np.float64).reshape(-1)
        self.dim = self.lo.size
        self.name = name

        if self.hi.size != self.dim or np.any(self.hi <= self.lo):
            raise ParameterError("box corners " + str(self.lo.tolist()) + ", " + str(self.hi.tolist()) + " do not span a box")

        self.closed_lo = np.zeros(self.dim, dtype=bool) if closed_lo is None else np.asarray(closed_lo, dtype=bool).reshape(-1)
        self.closed_hi = np.zeros(self.dim, dtype=bool) if closed_hi is None else np.asarray(closed_hi, dtype=bool).reshape(-1)
        if self.closed_lo.size != self.dim or self.closed_hi.size != self.dim:
            raise ParameterError("box face flags need one entry per axis")

    def contains_many(self, points) -> np.ndarray:
        points = self._check_points(points)
        above = np.where(self.closed_lo, points >= self.lo, points > self.lo)
        below = np.where(self.closed_hi, points <= self.hi, points < self.hi)
        return np.all(above & below, axis=1)

    def bbox(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.lo.copy(), self.hi.copy()

    def exact_area(self) -> float:
        return float(np.prod(self.hi - self.lo))

class PolygonDomain(Domain):
    vertices: np.ndarray
    exact_edges: bool

    def __init__(self, vertices, name: str = "polygon", exact_edges: bool = True):
        vertices = np.asarray(vertices, dtype=np.float64)
        if vertices.ndim != 2 or vertices.shape[1] != 2 or vertices.shape[0] < 3:
            raise ParameterError("polygon needs at least 3 planar vertices")

        self.vertices = vertices
        self.exact_edges = exact_edges
        self.dim = 2
        self.name = name
        self._path = Path(np.vstack((vertices, vertices[:1])), closed=True)

    def contains_many(self, points) -> np.ndarray:
        points = self._check_points(points)
        inside = self._path.contains_points(points)
        # matplotlib is not consistent about points on the edges; keep the interior only
        if self.exact_edges and np.any(inside):
            idx = np.nonzero(inside)[0]
            inside[idx[self.boundary_distance(points[idx]) <= 0.0]] = False
        return inside

    def boundary_distance(self, points: np.ndarray) -> np.ndarray:
        a = self.vertices
        b = np.roll(self.vertices, -1, axis=0)
        best = np.full(points.shape[0], np.inf)
        for start, end in zip(a, b):
            edge = end - start
            t = np.clip(((points - start) @ edge) / float(edge @ edge), 0.0, 1.0)
            nearest = start + t[:, None] * edge
            best = np.minimum(best, np.linalg.norm(points - nearest, axis=1))
        return best

    def bbox(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def exact_area(self) -> float:
        x = self.vertices[:, 0]
        y = self.vertices[:, 1]
        return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))

class UnionDomain(Domain):
    parts: List[Domain]

    def __init__(self, parts: List[Domain], name: str = "union"):
        if len(parts) == 0:
            raise ParameterError("a union domain needs at least one part")
        dims = set(p.dim for p in parts)
        if len(dims) != 1:
            raise ParameterError("union parts have mixed dimensions " + str(sorted(dims)))

        self.parts = list(parts)
        self.dim = parts[0].dim
        self.name = name

    def contains_many(self, points) -> np.ndarray:
        points = self._check_points(points)
        out = np.zeros(points.shape[0], dtype=bool)
        for part in self.parts:
            todo = ~out
            if not np.any(todo):
                break
            out[todo] = part.contains_many(points[todo])
        return out

    def bbox(self) -> Tuple[np.ndarray, np.ndarray]:
        boxes = [p.bbox() for p in self.parts]
        return np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0)

class MappedDomain(Domain):
    """
    Image of a base domain under a homeomorphism. The map must provide
    forward_many and inverse_many (see mappings.SmoothMap); points where the
    inverse is undefined come back as NaN and are reported outside.
    """

    base: Domain

    def __init__(self, base: Domain, smooth_map, name: str = "mapped"):
        if smooth_map.inverse is None:
            raise UnsupportedRepresentationError("mapped domains need a map with an inverse rule")
        if smooth_map.dim != base.dim:
            raise ParameterError("map dimension does not match base domain dimension")

        self.base = base
        self.smooth_map = smooth_map
        self.dim = base.dim
        self.name = name
        self._bbox = None

    def contains_many(self, points) -> np.ndarray:
        points = self._check_points(points)
        pre = self.smooth_map.inverse_many(points)
        valid = np.all(np.isfinite(pre), axis=1)

        out = np.zeros(points.shape[0], dtype=bool)
        if np.any(valid):
            out[valid] = self.base.contains_many(pre[valid])
        return out

    def bbox(self) -> Tuple[np.ndarray, np.ndarray]:
        if self._bbox is None:
            rng = np.random.default_rng(0)
            samples = sample_domain(self.base, MAPPED_BBOX_SAMPLES, rng)
            image = self.smooth_map.forward_many(samples)
            lo = image.min(axis=0)
            hi = image.max(axis=0)
            pad = MAPPED_BBOX_PAD * (hi - lo)
            self._bbox = (lo - pad, hi + pad)
        return self._bbox[0].copy(), self._bbox[1].copy()

class LipschitzApproximant(UnionDomain):
    """Polygonal V_h with the sampled containment audit U_h ⊆ V_h ⊆ U."""

    h: float
    knot_count: int
    samples: int
    inner_violations: int
    outer_violations: int

    def __init__(self, parts: List[PolygonDomain], h: float, knot_count: int, name: str = "lipschitz_approximant"):
        super().__init__(parts, name)
        self.h = h
        self.knot_count = knot_count
        self.samples = 0
        self.inner_violations = 0
        self.outer_violations = 0

    @property
    def containment_holds(self) -> bool:
        return self.samples > 0 and self.inner_violations == 0 and self.outer_violations == 0

def _image_box(affine: AffineMap, lo: np.ndarray, hi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    n = lo.size
    corners = np.array([[hi[k] if (c >> k) & 1 else lo[k] for k in range(n)] for c in range(1 << n)])
    image = affine.apply(corners)
    return image.min(axis=0), image.max(axis=0)

def _check_h(h: float, allow_zero: bool):
    lower_ok = h >= 0.0 if allow_zero else h > 0.0
    if not (lower_ok and h < 1.0 / 3.0):
        raise ParameterError("h = " + str(h) + " is outside " + ("[0, 1/3)" if allow_zero else "(0, 1/3)"))

##
## Operations
##

def contains(domain: Domain, point) -> bool:
    point = np.asarray(point, dtype=np.float64).reshape(-1)
    if point.size != domain.dim:
        raise DomainError("point " + str(point.tolist()) + " has dimension " + str(point.size) + ", domain has " + str(domain.dim))
    return bool(domain.contains_many(point.reshape(1, -1))[0])

def shrink(domain: Domain, h: float, mode: ShrinkMode = ShrinkMode.VERTICAL_ONLY) -> Domain:
    _check_h(h, allow_zero=True)

    if isinstance(domain, ElementaryDomain):
        return ElementaryDomain(domain.profile, domain.affine, h, mode, domain.name + "_h")

    if isinstance(domain, BoxDomain):
        width = domain.hi - domain.lo
        cut = np.zeros(domain.dim)
        if mode == ShrinkMode.ALL_DIRECTIONS:
            cut[:] = h * width
        else:
            cut[-1] = h * width[-1]
        return BoxDomain(domain.lo + cut, domain.hi - cut, domain.name + "_h", domain.closed_lo, domain.closed_hi)

    if isinstance(domain, UnionDomain):
        return shrink_union(domain, h, mode)

    raise UnsupportedRepresentationError("cannot shrink " + repr(domain))

def shrink_union(domain: UnionDomain, h: float, mode: ShrinkMode = ShrinkMode.VERTICAL_ONLY) -> UnionDomain:
    """Union of the shrunk parts."""
    parts = [shrink(part, h, mode) for part in domain.parts]
    return UnionDomain(parts, domain.name + "_h")

def sample_domain(domain: Domain, count: int, rng: np.random.Generator, max_rounds: int = 200) -> np.ndarray:
    """Uniform points inside the domain by rejection from its bounding box."""
    lo, hi = domain.bbox()
    found = []
    total = 0
    for _ in range(max_rounds):
        batch = rng.uniform(lo, hi, size=(max(1024, 2 * (count - total)), domain.dim))
        keep = batch[domain.contains_many(batch)]
        found.append(keep)
        total += keep.shape[0]
        if total >= count:
            return np.concatenate(found)[:count]

    raise DegenerateDomainError("could not draw " + str(count) + " points inside " + repr(domain) + " (got " + str(total) + ")")

def monte_carlo_area(domain: Domain, samples: int, rng: np.random.Generator) -> Tuple[float, float]:
    """Area estimate and its standard error."""
    lo, hi = domain.bbox()
    volume = float(np.prod(hi - lo))
    points = rng.uniform(lo, hi, size=(samples, domain.dim))
    p = float(np.mean(domain.contains_many(points)))
    return volume * p, volume * math.sqrt(p * (1.0 - p) / samples)

##
## Lipschitz approximant
##

def _walls(profile: ProfileFunction, h: float) -> List[float]:
    if profile.kind == ProfileKind.PIECEWISE_JUMP:
        return [j.location for j in profile.jumps()]

    if profile.kind == ProfileKind.ACCUMULATING_JUMPS:
        threshold = h / 8.0
        while profile.tail_variation(threshold) >= h / 8.0:
            threshold /= 2.0
        return [j.location for j in profile.jumps(threshold)]

    return []

def _piece_values(profile: ProfileFunction, x: np.ndarray, right_wall: Optional[float]) -> np.ndarray:
    """Profile values on one continuous piece, with the left limit at its right wall."""
    values = profile._raw(x.reshape(-1, 1))
    if right_wall is not None:
        at_wall = x == right_wall
        if np.any(at_wall):
            values[at_wall] = one_sided_limits(profile, right_wall)[0]
    return values

def _refine_piece(profile: ProfileFunction, a: float, b: float, right_wall: Optional[float], h: float, budget: int) -> Tuple[np.ndarray, np.ndarray]:
    target = h / 4.0
    knots = list(np.linspace(a, b, INITIAL_KNOTS_PER_PIECE + 1))

    while True:
        x = np.asarray(knots)
        left = x[:-1]
        width = np.diff(x)
        frac = np.linspace(0.0, 1.0, OSCILLATION_SAMPLES)
        probe = left[:, None] + width[:, None] * frac[None, :]
        probe[:, -1] = x[1:]
        values = _piece_values(profile, probe.ravel(), right_wall).reshape(probe.shape)
        oscillation = values.max(axis=1) - values.min(axis=1)

        bad = np.nonzero(oscillation >= target)[0]
        if bad.size == 0:
            return x, _piece_values(profile, x, right_wall)

        if len(knots) + bad.size > budget:
            worst = int(np.argmax(oscillation))
            raise ApproximationError("oscillation below h/4 not reached within " + str(budget) + " knots", {
                "h": h,
                "knots": float(len(knots)),
                "worst_oscillation": float(oscillation[worst]),
                "worst_cell_left": float(left[worst]),
                "worst_cell_width": float(width[worst]),
            })

        mids = left[bad] + 0.5 * width[bad]
        knots = sorted(knots + list(mids))

def lipschitz_approximant(domain: ElementaryDomain, h: float, seed: int = 0, samples: int = CONTAINMENT_SAMPLES) -> LipschitzApproximant:
    """
    Polygonal Lipschitz domain V_h with U_h ⊆ V_h ⊆ U.

    The profile is interpolated piecewise linearly on knots refined until the
    sampled oscillation per cell is below h/4, the polygon runs at h/2 above
    the interpolant and h/2 below its unit shift. Jumps become vertical
    segments; a jump too large for the fibers on both sides to overlap
    splits the approximant into separate polygons.

    A constant profile is already Lipschitz: V_h is then U itself.
    """
    if not isinstance(domain, ElementaryDomain) or domain.profile.base_dim != 1:
        raise UnsupportedRepresentationError("lipschitz_approximant needs a planar elementary domain")
    _check_h(h, allow_zero=False)

    print_step = "Lipschitz approximant " + domain.name
    logger.info("%s - START", print_step)
    start = time.time()

    profile = domain.profile
    if profile.kind == ProfileKind.CLOSED_FORM and profile.name == "constant":
        c = float(profile.params.get("c", 0.0))
        square = domain.affine.apply(np.array([[0.0, c], [1.0, c], [1.0, c + 1.0], [0.0, c + 1.0]]))
        approximant = LipschitzApproximant([PolygonDomain(square, domain.name + "_V0")], h, 2, domain.name + "_V_h")
        _audit_containment(domain, approximant, seed, samples)
        logger.info("%s - COMPLETE - Elapsed = %.3f (constant profile)", print_step, time.time() - start)
        return approximant

    walls = _walls(profile, h)
    edges = [0.0] + walls + [1.0]

    chains: List[List[Tuple[np.ndarray, np.ndarray]]] = [[]]
    knot_count = 0
    budget = KNOT_BUDGET
    for i in range(len(edges) - 1):
        right_wall = edges[i + 1] if i + 1 < len(edges) - 1 else None
        x, p = _refine_piece(profile, edges[i], edges[i + 1], right_wall, h, budget - knot_count)
        knot_count += x.size

        if len(chains[-1]) > 0:
            previous_end = chains[-1][-1][1][-1]
            if abs(p[0] - previous_end) >= 1.0 - h:
                chains.append([])
        chains[-1].append((x, p))

    polygons = []
    for chain in chains:
        xs = np.concatenate([piece[0] for piece in chain])
        ps = np.concatenate([piece[1] for piece in chain])
        lower = np.stack((xs, ps + h / 2.0), axis=1)
        upper = np.stack((xs, ps + 1.0 - h / 2.0), axis=1)[::-1]
        vertices = domain.affine.apply(np.vstack((lower, upper)))
        polygons.append(PolygonDomain(vertices, domain.name + "_V" + str(len(polygons)), exact_edges=False))

    approximant = LipschitzApproximant(polygons, h, knot_count, domain.name + "_V_h")
    _audit_containment(domain, approximant, seed, samples)

    logger.info("%s - COMPLETE - Elapsed = %.3f (knots = %d)", print_step, time.time() - start, knot_count)
    return approximant

def _audit_containment(domain: ElementaryDomain, approximant: LipschitzApproximant, seed: int, samples: int):
    rng = np.random.default_rng(seed)
    lo, hi = domain.reference_box()
    q = rng.uniform(lo, hi, size=(samples, domain.dim))
    points = domain.affine.apply(q)

    inner = shrink(domain, approximant.h, ShrinkMode.VERTICAL_ONLY).contains_many(points)
    in_v = approximant.contains_many(points)
    in_u = domain.contains_many(points)

    approximant.samples = samples
    approximant.inner_violations = int(np.sum(inner & ~in_v))
    approximant.outer_violations = int(np.sum(in_v & ~in_u))

    if not approximant.containment_holds:
        logger.warning("containment audit for %s: %d points of U_h outside V_h, %d points of V_h outside U",
            domain.name, approximant.inner_violations, approximant.outer_violations)

##
## Grids
##

class Grid:
    origin: np.ndarray
    spacing: float
    dims: Tuple[int, ...]

    def __init__(self, origin, spacing: float, dims):
        if spacing <= 0.0:
            raise ParameterError("grid spacing must be positive")
        self.origin = np.asarray(origin, dtype=np.float64).reshape(-1)
        self.spacing = float(spacing)
        self.dims = tuple(int(d) for d in dims)

        if len(self.dims) != self.origin.size or min(self.dims) < 1:
            raise ParameterError("grid dims " + str(self.dims) + " do not match origin " + str(self.origin.tolist()))

    @property
    def dim(self) -> int:
        return len(self.dims)

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    def axis_centers(self, k: int) -> np.ndarray:
        return self.origin[k] + (np.arange(self.dims[k]) + 0.5) * self.spacing

    def centers(self, index: np.ndarray = None) -> np.ndarray:
        """Cell centers for flat C-order indices (all cells when index is None)."""
        if index is None:
            index = np.arange(int(np.prod(self.dims)))
        multi = np.unravel_index(index, self.dims)
        return np.stack([self.origin[k] + (multi[k] + 0.5) * self.spacing for k in range(self.dim)], axis=1)

    def same_as(self, other: Grid) -> bool:
        return self.dims == other.dims and self.spacing == other.spacing and np.array_equal(self.origin, other.origin)

    def __repr__(self):
        return "Grid(origin=" + str(self.origin.tolist()) + ", spacing=" + str(self.spacing) + ", dims=" + str(self.dims) + ")"

class GridMask:
    """Cell indicator on a Grid; array axis k runs along coordinate k."""

    grid: Grid
    cells: np.ndarray

    def __init__(self, grid: Grid, cells: np.ndarray):
        cells = np.asarray(cells, dtype=bool)
        if cells.shape != grid.dims:
            raise ParameterError("mask shape " + str(cells.shape) + " does not match grid dims " + str(grid.dims))
        self.grid = grid
        self.cells = cells

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.cells))

    @property
    def area(self) -> float:
        return self.count * self.grid.cell_volume

    def subset_of(self, other: GridMask) -> bool:
        if not self.grid.same_as(other.grid):
            raise ParameterError("masks live on different grids")
        return not np.any(self.cells & ~other.cells)

    def restrict(self, keep: np.ndarray) -> GridMask:
        return GridMask(self.grid, self.cells & keep)

    def face_components(self) -> Tuple[np.ndarray, List[int]]:
        """Face-connected components: label array and sizes, largest first in the size list."""
        structure = ndimage.generate_binary_structure(self.grid.dim, 1)
        labels, count = ndimage.label(self.cells, structure=structure)
        sizes = np.bincount(labels.ravel(), minlength=count + 1)[1:]
        return labels, sorted((int(s) for s in sizes), reverse=True)

    def largest_component(self) -> GridMask:
        labels, _ = self.face_components()
        sizes = np.bincount(labels.ravel())
        sizes[0] = 0
        return GridMask(self.grid, labels == int(np.argmax(sizes)))

    def __repr__(self):
        return "GridMask(" + str(self.count) + " cells on " + repr(self.grid) + ")"

def rasterize(domain: Domain, cells_per_unit: int, grid: Grid = None) -> GridMask:
    if cells_per_unit < 2:
        raise ParameterError("cells_per_unit must be >= 2, got " + str(cells_per_unit))

    if grid is None:
        lo, hi = domain.bbox()
        dims = np.maximum(1, np.ceil((hi - lo) * cells_per_unit - 1e-9)).astype(int)
        grid = Grid(lo, 1.0 / cells_per_unit, dims)

    print_step = "Rasterize " + domain.name + " at " + str(cells_per_unit)
    logger.info("%s - START", print_step)
    start = time.time()

    total = int(np.prod(grid.dims))
    flat = np.zeros(total, dtype=bool)
    for first in range(0, total, RASTER_CHUNK):
        index = np.arange(first, min(total, first + RASTER_CHUNK))
        flat[index] = domain.contains_many(grid.centers(index))

    mask = GridMask(grid, flat.reshape(grid.dims))
    if mask.count == 0:
        raise DegenerateDomainError(repr(domain) + " has no cell centers inside at " + str(cells_per_unit) + " cells per unit")

    logger.info("%s - COMPLETE - Elapsed = %.3f (%d of %d cells)", print_step, time.time() - start, mask.count, total)
    return mask

def boundary_components(mask: GridMask) -> int:
    """Components of the excluded cells touching included cells, all-neighbor connectivity."""
    if mask.count == 0:
        raise PreconditionError("boundary_components needs a nonempty mask")

    padded = np.pad(mask.cells, 1, mode="constant", constant_values=False)
    full = ndimage.generate_binary_structure(padded.ndim, padded.ndim)
    layer = ndimage.binary_dilation(padded, structure=full) & ~padded
    _, count = ndimage.label(layer, structure=full)
    return int(count)

##
## Catalog
##

CATALOG_ALIASES = {
    "sin_component": "sin_component_domain",
    "spiral": "spiral_domain",
    "rectangles": "rectangle_chain",
}

def unit_cube(n: int = 2) -> Domain:
    if n < 1:
        raise ParameterError("unit cube dimension must be >= 1")
    if n == 1:
        return BoxDomain([0.0], [1.0], "unit_cube_1")
    return ElementaryDomain(zero_profile(n - 1), name="unit_cube_" + str(n))

def sin_component_domain() -> UnionDomain:
    u = ElementaryDomain(closed_form("xsin", 1, x0=0.0, x1=1.0 / math.pi, scale=0.25),
        diagonal_affine([1.0 / math.pi, 4.0]), name="sin_component_U")
    v = ElementaryDomain(zero_profile(1), diagonal_affine([1.0 / math.pi, 2.0], [0.0, -2.0]), name="sin_component_V")
    return UnionDomain([u, v], "sin_component_domain")

def xsin_domain(x0: float = 0.05, x1: float = 1.0 / math.pi) -> ElementaryDomain:
    """x·sin(1/x) over (x0, x1) rescaled onto the unit base."""
    return ElementaryDomain(closed_form("xsin", 1, x0=x0, x1=x1), name="xsin_domain")

def spiral_triangle() -> PolygonDomain:
    return PolygonDomain([[0.0, 0.0], [1.0, 1.0], [1.0, 2.0]], "spiral_triangle")

def spiral_band(n: int = 1) -> PolygonDomain:
    if n < 1:
        raise ParameterError("spiral band index must be >= 1")
    a = math.exp(-(n + 1))
    b = min(1.0, math.exp(-(n - 1)))
    return PolygonDomain([[a, a], [b, b], [b, 2.0 * b], [a, 2.0 * a]], "spiral_band_" + str(n))

def spiral_domain() -> MappedDomain:
    from mappings import spiral_map
    return MappedDomain(spiral_triangle(), spiral_map(), "spiral_domain")

class RectangleChain(UnionDomain):
    """Q = (0,1)×(−1,0) with the rectangles T_k standing on its top edge."""

    alpha: float
    k_max: int
    skipped: List[int]

    def __init__(self, parts: List[Domain], alpha: float, k_max: int, skipped: List[int]):
        super().__init__(parts, "rectangle_chain")
        self.alpha = alpha
        self.k_max = k_max
        self.skipped = list(skipped)

def rectangle_chain(alpha: float = 1.0, k_max: int = K_MAX_DEFAULT) -> RectangleChain:
    if alpha <= 0.0:
        raise ParameterError("rectangle_chain needs alpha > 0, got " + str(alpha))
    if k_max < 1:
        raise ParameterError("rectangle_chain needs k_max >= 1")

    # T_k = {|x1 - c_k| <= w_k, 0 <= x2 < w_k}; the bottom edge lies on top of Q
    parts: List[Domain] = [BoxDomain([0.0, -1.0], [1.0, 0.0], "chain_Q")]
    skipped = []
    for k in range(1, k_max + 1):
        center = 2.0 ** (-alpha * k)
        half = 2.0 ** (-alpha * (k + 2))
        if center + half >= 1.0:
            skipped.append(k)
            continue
        parts.append(BoxDomain([center - half, 0.0], [center + half, half], "chain_T" + str(k),
            closed_lo=[True, True], closed_hi=[True, False]))

    if len(skipped) > 0:
        logger.warning("rectangle_chain(alpha=%g): T_k for k in %s reach past x1 = 1 and were left out", alpha, skipped)
    return RectangleChain(parts, alpha, k_max, skipped)

def step_domain(breaks: List[float] = None, values: List[float] = None) -> ElementaryDomain:
    breaks = [0.5] if breaks is None else breaks
    values = [0.0, 0.5] if values is None else values
    return ElementaryDomain(step(breaks, values), name="step_domain")

def accumulating_jump_domain(limit: float = 0.5, offset: float = 0.125, jump: float = 0.5, ratio: float = 0.5) -> ElementaryDomain:
    return ElementaryDomain(accumulating_jumps(limit, offset, jump, ratio), name="accumulating_jump_domain")

CATALOG = {
    "unit_cube": unit_cube,
    "sin_component_domain": sin_component_domain,
    "xsin_domain": xsin_domain,
    "spiral_triangle": spiral_triangle,
    "spiral_band": spiral_band,
    "spiral_domain": spiral_domain,
    "rectangle_chain": rectangle_chain,
    "step_domain": step_domain,
    "accumulating_jump_domain": accumulating_jump_domain,
}

def catalog(name: str, **params) -> Domain:
    key = CATALOG_ALIASES.get(name, name)
    if key not in CATALOG:
        raise ParameterError("unknown catalog domain '" + name + "'; known: " + ", ".join(sorted(CATALOG)))
    try:
        inspect.signature(CATALOG[key]).bind(**params)
    except TypeError as e:
        raise ParameterError("bad parameters for '" + key + "': " + str(e))
    return CATALOG[key](**params)
