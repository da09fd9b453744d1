from __future__ import annotations
from typing import List, Dict, Tuple, Optional, Callable
import inspect
import logging
import math

import numpy as np
from scipy import ndimage

from definitions import *
from domain_builder import Domain, GridMask, AffineMap, sample_domain, spiral_band, spiral_triangle
from inequalities import GridFunction

logger = logging.getLogger(__name__)

##
## Defaults
##
FD_STEP = 1e-6
JACOBIAN_AGREEMENT_TOL = 1e-5
MIN_ABS_DET = 1e-12
DILATATION_SAMPLES = 10000
BOUNDARY_SHARE = 0.25
QI_CENTER_POOL = 2000
RING_PROBES = 64
MAX_INVALID_SHARE = 0.01
FOCUS_RADII = [2.0 ** (-j) for j in range(1, 11)]
FOCUS_POINTS_PER_RING = 64
DET_GROWTH_SLOPE = -0.5
TWO_PI = 2.0 * math.pi

Rule = Callable[[np.ndarray], np.ndarray]

class SmoothMap:
    """
    A homeomorphism given by vectorized rules over (m, n) point arrays.
    jacobian_rule returns (m, n, n); inverse may return NaN rows for points
    outside the image.
    """

    dim: int
    name: str
    forward: Rule
    inverse: Optional[Rule]
    jacobian_rule: Optional[Rule]
    domain_hint: Optional[Domain]

    def __init__(self, dim: int, name: str, forward: Rule, inverse: Rule = None, jacobian_rule: Rule = None,
            domain_hint: Domain = None):
        self.dim = dim
        self.name = name
        self.forward = forward
        self.inverse = inverse
        self.jacobian_rule = jacobian_rule
        self.domain_hint = domain_hint

    def _points(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        if points.ndim == 1:
            points = points.reshape(1, -1)
        if points.shape[1] != self.dim:
            raise DomainError("map " + self.name + " is " + str(self.dim) + "-D, got points of dimension " + str(points.shape[1]))
        return points

    def forward_many(self, points) -> np.ndarray:
        return self.forward(self._points(points))

    def inverse_many(self, points) -> np.ndarray:
        if self.inverse is None:
            raise UnsupportedRepresentationError("map " + self.name + " has no inverse rule")
        return self.inverse(self._points(points))

    def __call__(self, point) -> np.ndarray:
        return self.forward_many(point)[0]

    def __repr__(self):
        return "SmoothMap(" + self.name + ", dim=" + str(self.dim) + ")"

##
## Catalog maps
##

def identity(n: int = 2) -> SmoothMap:
    return SmoothMap(n, "identity", lambda p: p.copy(), lambda q: q.copy(),
        lambda p: np.broadcast_to(np.eye(n), (p.shape[0], n, n)).copy())

def similarity(k: float, n: int = 2) -> SmoothMap:
    """S_k(x) = kx"""
    if k <= 0.0:
        raise ParameterError("similarity factor must be positive, got " + str(k))
    return SmoothMap(n, "similarity_" + repr(k), lambda p: k * p, lambda q: q / k,
        lambda p: np.broadcast_to(k * np.eye(n), (p.shape[0], n, n)).copy())

def affine(a: AffineMap) -> SmoothMap:
    n = a.dim
    return SmoothMap(n, "affine", a.apply, a.apply_inverse,
        lambda p: np.broadcast_to(a.matrix, (p.shape[0], n, n)).copy())

def _spiral_angle(s: np.ndarray, t: np.ndarray) -> np.ndarray:
    return TWO_PI * np.log(t / (s * s))

def _spiral_forward(p: np.ndarray) -> np.ndarray:
    s = p[:, 0]
    t = p[:, 1]
    if np.any(s <= 0.0) or np.any(t <= 0.0):
        raise SingularityError("spiral map is defined for s, t > 0 only")
    theta = _spiral_angle(s, t)
    return np.stack((s * np.cos(theta), s * np.sin(theta)), axis=1)

def _spiral_inverse(q: np.ndarray) -> np.ndarray:
    rho = np.hypot(q[:, 0], q[:, 1])
    out = np.full(q.shape, np.nan)
    ok = rho > 0.0
    if np.any(ok):
        r = rho[ok]
        # branch anchored on the t = s edge, where theta = 2π ln(1/s)
        reference = TWO_PI * np.log(1.0 / r)
        theta = reference + np.mod(np.arctan2(q[ok, 1], q[ok, 0]) - reference, TWO_PI)
        out[ok, 0] = r
        out[ok, 1] = r * r * np.exp(theta / TWO_PI)
    return out

def _spiral_jacobian(p: np.ndarray) -> np.ndarray:
    s = p[:, 0]
    t = p[:, 1]
    if np.any(s <= 0.0) or np.any(t <= 0.0):
        raise SingularityError("spiral map is defined for s, t > 0 only")
    theta = _spiral_angle(s, t)
    c = np.cos(theta)
    sn = np.sin(theta)

    # dθ/ds = -4π/s, dθ/dt = 2π/t
    j = np.empty((p.shape[0], 2, 2))
    j[:, 0, 0] = c + 2.0 * TWO_PI * sn
    j[:, 0, 1] = -TWO_PI * s * sn / t
    j[:, 1, 0] = sn - 2.0 * TWO_PI * c
    j[:, 1, 1] = TWO_PI * s * c / t
    return j

def spiral_map() -> SmoothMap:
    """F(s,t) = (s cos θ, s sin θ), θ = 2π ln(t/s²), on the triangle 0 < s < 1, s < t < 2s."""
    return SmoothMap(2, "spiral", _spiral_forward, _spiral_inverse, _spiral_jacobian, spiral_triangle())

def power_map(alpha: float = 2.0, n: int = 2) -> SmoothMap:
    """φ(x) = x|x|^(β-1), β = 1/α."""
    if alpha <= 0.0:
        raise ParameterError("power map needs alpha > 0, got " + str(alpha))
    beta = 1.0 / alpha

    def radius(p: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(p, axis=1)
        if np.any(r == 0.0):
            raise SingularityError("power map is singular at the origin")
        return r

    def forward(p: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(p, axis=1)
        scale = np.where(r > 0.0, r ** (beta - 1.0), 0.0)
        return p * scale[:, None]

    def inverse(q: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(q, axis=1)
        scale = np.where(r > 0.0, r ** (alpha - 1.0), 0.0)
        return q * scale[:, None]

    def jacobian_rule(p: np.ndarray) -> np.ndarray:
        r = radius(p)
        unit = p / r[:, None]
        outer = unit[:, :, None] * unit[:, None, :]
        return (r ** (beta - 1.0))[:, None, None] * (np.eye(n)[None, :, :] + (beta - 1.0) * outer)

    return SmoothMap(n, "power_" + repr(alpha), forward, inverse, jacobian_rule)

def compose(outer: SmoothMap, inner: SmoothMap) -> SmoothMap:
    """outer ∘ inner"""
    if outer.dim != inner.dim:
        raise ParameterError("cannot compose " + repr(outer) + " with " + repr(inner) + ": dimensions differ")

    inverse = None
    if outer.inverse is not None and inner.inverse is not None:
        inverse = lambda q: inner.inverse(outer.inverse(q))

    jacobian_rule = None
    if outer.jacobian_rule is not None and inner.jacobian_rule is not None:
        jacobian_rule = lambda p: outer.jacobian_rule(inner.forward(p)) @ inner.jacobian_rule(p)

    return SmoothMap(outer.dim, outer.name + "∘" + inner.name, lambda p: outer.forward(inner.forward(p)),
        inverse, jacobian_rule, inner.domain_hint)

MAP_CATALOG = {
    "identity": identity,
    "similarity": similarity,
    "spiral": spiral_map,
    "power": power_map,
}

def map_from_name(name: str, **params) -> SmoothMap:
    if name not in MAP_CATALOG:
        raise ParameterError("unknown map '" + name + "'; known: " + ", ".join(sorted(MAP_CATALOG)))
    try:
        inspect.signature(MAP_CATALOG[name]).bind(**params)
    except TypeError as e:
        raise ParameterError("bad parameters for map '" + name + "': " + str(e))
    return MAP_CATALOG[name](**params)

##
## Jacobians and singular values
##

def finite_difference_jacobian(smooth_map: SmoothMap, points) -> np.ndarray:
    points = smooth_map._points(points)
    m, n = points.shape
    step = FD_STEP * (1.0 + np.linalg.norm(points, axis=1))
    j = np.empty((m, n, n))
    for k in range(n):
        offset = np.zeros((m, n))
        offset[:, k] = step
        j[:, :, k] = (smooth_map.forward(points + offset) - smooth_map.forward(points - offset)) / (2.0 * step[:, None])
    return j

def jacobian_many(smooth_map: SmoothMap, points) -> np.ndarray:
    points = smooth_map._points(points)
    if smooth_map.jacobian_rule is not None:
        return smooth_map.jacobian_rule(points)
    return finite_difference_jacobian(smooth_map, points)

def jacobian(smooth_map: SmoothMap, point) -> np.ndarray:
    return jacobian_many(smooth_map, point)[0]

def jacobian_agreement(smooth_map: SmoothMap, points) -> float:
    """Largest relative Frobenius gap between the analytic and difference Jacobians."""
    if smooth_map.jacobian_rule is None:
        raise UnsupportedRepresentationError("map " + smooth_map.name + " has no analytic Jacobian")
    analytic = smooth_map.jacobian_rule(smooth_map._points(points))
    numeric = finite_difference_jacobian(smooth_map, points)
    gap = np.linalg.norm(analytic - numeric, axis=(1, 2)) / np.maximum(np.linalg.norm(analytic, axis=(1, 2)), 1e-300)
    worst = float(np.max(gap))
    if worst > JACOBIAN_AGREEMENT_TOL:
        logger.warning("Jacobian of %s disagrees with differences by %s", smooth_map.name, worst)
    return worst

def singular_values_many(matrices: np.ndarray) -> np.ndarray:
    """Ascending singular values per matrix; 2x2 in closed form so the product is |det| exactly."""
    matrices = np.asarray(matrices, dtype=np.float64)
    if not np.all(np.isfinite(matrices)):
        raise InvalidDataError("matrix holds non-finite entries")

    if matrices.shape[-2:] != (2, 2):
        return np.sort(np.linalg.svd(matrices, compute_uv=False), axis=-1)

    frob = np.sum(matrices ** 2, axis=(-2, -1))
    det = np.abs(matrices[..., 0, 0] * matrices[..., 1, 1] - matrices[..., 0, 1] * matrices[..., 1, 0])
    disc = np.sqrt(np.maximum(frob * frob - 4.0 * det * det, 0.0))
    largest = np.sqrt(0.5 * (frob + disc))
    smallest = np.divide(det, largest, out=np.zeros_like(det), where=largest > 0.0)
    return np.stack((smallest, largest), axis=-1)

def singular_values(m) -> List[float]:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ParameterError("singular_values takes a square matrix, got shape " + str(m.shape))
    return [float(v) for v in singular_values_many(m[None, ...])[0]]

##
## Dilatation
##

class DilatationReport:
    K_frob: float
    K_geom: float
    min_abs_det: float
    max_abs_det: float
    sample_count: int
    det_growth_slope: Optional[float]
    det_growth_flag: bool

    points: np.ndarray
    dets: np.ndarray
    sigmas: np.ndarray
    frob_ratios: np.ndarray
    geom_ratios: np.ndarray

    def __init__(self, points, dets, sigmas, frob_ratios, geom_ratios):
        self.points = points
        self.dets = dets
        self.sigmas = sigmas
        self.frob_ratios = frob_ratios
        self.geom_ratios = geom_ratios

        self.K_frob = float(np.max(frob_ratios))
        self.K_geom = float(np.max(geom_ratios))
        self.min_abs_det = float(np.min(np.abs(dets)))
        self.max_abs_det = float(np.max(np.abs(dets)))
        self.sample_count = int(points.shape[0])
        self.det_growth_slope = None
        self.det_growth_flag = False

    def as_dict(self) -> Dict[str, object]:
        return {
            "K_frob": self.K_frob,
            "K_geom": self.K_geom,
            "min_abs_det": self.min_abs_det,
            "max_abs_det": self.max_abs_det,
            "sample_count": self.sample_count,
            "det_growth_slope": "none" if self.det_growth_slope is None else self.det_growth_slope,
            "det_growth_flag": self.det_growth_flag,
        }

def dilatation(smooth_map: SmoothMap, samples, focus = None) -> DilatationReport:
    """
    Sample maxima of ‖φ'‖²_F/|det φ'| and λ_n/(λ_1···λ_{n-1}). With a focus
    point, also fit the log-slope of max |det φ'| over shrinking rings around
    it; a clearly negative slope flags an unbounded-looking determinant.
    """
    points = smooth_map._points(samples)
    j = jacobian_many(smooth_map, points)
    dets = np.linalg.det(j)

    small = np.abs(dets) < MIN_ABS_DET
    if np.any(small):
        bad = points[np.argmax(small)]
        raise DegenerateJacobianError("|det| below " + str(MIN_ABS_DET) + " at " + str(bad.tolist()), bad)

    sigmas = singular_values_many(j)
    abs_det = np.abs(dets)
    frob = np.sum(j ** 2, axis=(1, 2)) / abs_det
    geom = sigmas[:, -1] / np.prod(sigmas[:, :-1], axis=1)

    report = DilatationReport(points, dets, sigmas, frob, geom)
    if focus is not None:
        _probe_focus(smooth_map, report, np.asarray(focus, dtype=np.float64).reshape(-1))
    return report

def _probe_focus(smooth_map: SmoothMap, report: DilatationReport, focus: np.ndarray):
    angles = np.linspace(0.0, TWO_PI, FOCUS_POINTS_PER_RING, endpoint=False)
    radii = []
    peaks = []
    for r in FOCUS_RADII:
        ring = np.zeros((FOCUS_POINTS_PER_RING, smooth_map.dim))
        ring[:, 0] = np.cos(angles)
        ring[:, 1] = np.sin(angles)
        ring = focus + r * ring
        if smooth_map.domain_hint is not None:
            ring = ring[smooth_map.domain_hint.contains_many(ring)]
        if ring.shape[0] == 0:
            continue
        try:
            d = np.abs(np.linalg.det(jacobian_many(smooth_map, ring)))
        except SingularityError:
            continue
        radii.append(r)
        peaks.append(float(np.max(d)))

    if len(radii) < 3:
        logger.warning("focus probe around %s found fewer than 3 usable rings", focus.tolist())
        return

    slope = float(np.polyfit(np.log(radii), np.log(np.maximum(peaks, 1e-300)), 1)[0])
    report.det_growth_slope = slope
    report.det_growth_flag = slope < DET_GROWTH_SLOPE
    if report.det_growth_flag:
        logger.warning("max |det| of %s grows like r^%.3f toward %s", smooth_map.name, slope, focus.tolist())

def dilatation_samples(domain: Domain, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples plus a boundary-biased share when the domain knows its boundary distance."""
    if not hasattr(domain, "boundary_distance"):
        return sample_domain(domain, count, rng)

    lo, hi = domain.bbox()
    band = 0.05 * float(np.max(hi - lo))
    near_count = int(BOUNDARY_SHARE * count)
    uniform = sample_domain(domain, count - near_count, rng)

    near = []
    total = 0
    for _ in range(200):
        pool = sample_domain(domain, 4 * max(near_count, 1), rng)
        keep = pool[domain.boundary_distance(pool) < band]
        near.append(keep)
        total += keep.shape[0]
        if total >= near_count:
            break
    near = np.concatenate(near)[:near_count]
    return np.vstack((uniform, near))

##
## Quasiisometry
##

class QIReport:
    Q_est: float
    ball_radius: float
    pair_count: int
    center_count: int

    def __init__(self, Q_est: float, ball_radius: float, pair_count: int, center_count: int):
        self.Q_est = Q_est
        self.ball_radius = ball_radius
        self.pair_count = pair_count
        self.center_count = center_count

    def as_dict(self) -> Dict[str, object]:
        return {"Q_est": self.Q_est, "ball_radius": self.ball_radius, "pair_count": self.pair_count,
            "center_count": self.center_count}

def _clear_of_boundary(domain: Domain, centers: np.ndarray, r: float) -> np.ndarray:
    if hasattr(domain, "boundary_distance"):
        return domain.boundary_distance(centers) > r

    ok = np.ones(centers.shape[0], dtype=bool)
    angles = np.linspace(0.0, TWO_PI, RING_PROBES, endpoint=False)
    for radius in (r, 0.5 * r):
        for a in angles:
            offset = np.zeros(centers.shape[1])
            offset[0] = radius * math.cos(a)
            offset[1] = radius * math.sin(a)
            ok &= domain.contains_many(centers + offset)
    return ok

def _ball_points(seed: int, count: int, dim: int, r: float) -> np.ndarray:
    # separate streams for directions and radii keep every prefix of the draws fixed
    direction = np.random.default_rng(seed).standard_normal((count, dim))
    direction /= np.linalg.norm(direction, axis=1)[:, None]
    radius = r * np.random.default_rng(seed + 1).uniform(0.0, 1.0, (count, 1)) ** (1.0 / dim)
    return direction * radius

def quasiisometry_constant(smooth_map: SmoothMap, domain: Domain, r: float, trials: int, seed: int = 0,
        pool: int = QI_CENTER_POOL) -> QIReport:
    """
    Lower bound for Q over pairs in balls B(x, r) ⊆ domain. Pair i uses
    center i mod pool and its own draws, so extending the trials only adds pairs.
    """
    if r <= 0.0:
        raise ParameterError("ball radius must be positive")
    if trials < 1:
        raise ParameterError("need at least one trial")

    centers = sample_domain(domain, pool, np.random.default_rng(seed))
    centers = centers[_clear_of_boundary(domain, centers, r)]
    if centers.shape[0] == 0:
        raise ParameterError("no sampled center of " + domain.name + " is farther than r = " + str(r) + " from the boundary; try a smaller r")

    dim = domain.dim
    x = centers[np.arange(trials) % centers.shape[0]]
    y = x + _ball_points(seed + 1, trials, dim, r)
    z = x + _ball_points(seed + 3, trials, dim, r)

    gap = np.linalg.norm(y - z, axis=1)
    keep = gap > 1e-12 * r
    image_gap = np.linalg.norm(smooth_map.forward_many(y[keep]) - smooth_map.forward_many(z[keep]), axis=1)
    ratio = image_gap / gap[keep]

    q = float(max(np.max(ratio), np.max(1.0 / ratio)))
    logger.debug("quasiisometry %s on %s: Q_est=%s from %d pairs", smooth_map.name, domain.name, q, int(np.sum(keep)))
    return QIReport(q, r, int(np.sum(keep)), int(centers.shape[0]))

def spiral_composition_check(n: int, samples: int = 10000, seed: int = 0) -> float:
    """max |φ(p) - (S_{1/k}∘φ∘S_k)(p)| over T_n, k = e^(n-1)."""
    if n < 1:
        raise ParameterError("band index must be >= 1")
    k = math.exp(n - 1)
    phi = spiral_map()
    scaled = compose(similarity(1.0 / k), compose(phi, similarity(k)))

    points = sample_domain(spiral_band(n), samples, np.random.default_rng(seed))
    return float(np.max(np.linalg.norm(phi.forward_many(points) - scaled.forward_many(points), axis=1)))

##
## Pullback
##

class Pullback:
    function: GridFunction
    invalid_cells: int

    def __init__(self, function: GridFunction, invalid_cells: int):
        self.function = function
        self.invalid_cells = invalid_cells

def pullback(u: GridFunction, smooth_map: SmoothMap, target_mask: GridMask) -> Pullback:
    """
    (φ*u)(p) = u(φ(p)) at the cell centers of target_mask, by bilinear
    interpolation on u's grid renormalized by the interpolated mask weight.
    Cells whose image has no weight are dropped from the returned mask.
    """
    source = u.mask
    index = np.flatnonzero(target_mask.cells)
    image = smooth_map.forward_many(target_mask.grid.centers(index))

    coords = ((image - source.grid.origin) / source.grid.spacing - 0.5).T
    weight = ndimage.map_coordinates(source.cells.astype(np.float64), coords, order=1, mode="constant", cval=0.0)
    mass = ndimage.map_coordinates(u.values, coords, order=1, mode="constant", cval=0.0)

    valid = weight > 1e-9
    invalid = int(np.sum(~valid))
    if invalid > MAX_INVALID_SHARE * index.size:
        raise CoverageError(str(invalid) + " of " + str(index.size) + " target cells map outside " + repr(source))

    cells = np.zeros(target_mask.cells.size, dtype=bool)
    cells[index[valid]] = True
    values = np.zeros(target_mask.cells.size)
    values[index[valid]] = mass[valid] / weight[valid]

    mask = GridMask(target_mask.grid, cells.reshape(target_mask.cells.shape))
    return Pullback(GridFunction(mask, values.reshape(mask.cells.shape)), invalid)

def h1_ratio(u: GridFunction, smooth_map: SmoothMap, target_mask: GridMask) -> float:
    """‖u∘φ‖_{H¹} / ‖u‖_{H¹}, both from difference gradients."""
    pulled = pullback(u, smooth_map, target_mask).function
    source = GridFunction(u.mask, u.values)
    return pulled.h1_norm() / source.h1_norm()
