from __future__ import annotations
from typing import List, Dict, Tuple, Optional, Callable
import itertools
import logging
import math
import time

import numpy as np
from scipy.integrate import trapezoid

from definitions import *
from domain_builder import Domain, GridMask, rasterize, shrink, step_domain

logger = logging.getLogger(__name__)

##
## Defaults
##
MIN_SAMPLES_1D = 16
QUADRATURE_RELATIVE_TOL = 1e-6
SWEEP_SAMPLES_1D = 1024
SWEEP_REFINE_FACTOR = 4
SWEEP_CELLS_PER_UNIT = 64
SWEEP_HS = [0.05, 0.1, 0.2]
MAX_TRIG_ORDER = 8

## constants of the interior inequalities
SHIFT_CONSTANT = math.sqrt(2.0)
HALF_INTERVAL_FACTOR = 2.0
GRADIENT_FACTOR = 4.0
INTERIOR_FACTOR = 3.0

SUITES = ["shift", "half", "interior", "fibered", "interpolation"]
DOMAIN_SUITES = ["fibered", "interpolation"]

class SampledFunction1D:
    a: float
    b: float
    values: np.ndarray

    def __init__(self, a: float, b: float, values):
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        if not a < b:
            raise ParameterError("interval (" + str(a) + ", " + str(b) + ") is empty")
        if values.size < MIN_SAMPLES_1D:
            raise ParameterError("need at least " + str(MIN_SAMPLES_1D) + " samples, got " + str(values.size))
        if not np.all(np.isfinite(values)):
            raise InvalidDataError("sampled function holds non-finite values")

        self.a = float(a)
        self.b = float(b)
        self.values = values

    @property
    def t(self) -> np.ndarray:
        return np.linspace(self.a, self.b, self.values.size)

    @property
    def dt(self) -> float:
        return (self.b - self.a) / (self.values.size - 1)

    def derivative(self) -> np.ndarray:
        return np.gradient(self.values, self.dt, edge_order=2)

    def from_function(fn: Callable[[np.ndarray], np.ndarray], a: float, b: float, n: int) -> SampledFunction1D:
        return SampledFunction1D(a, b, fn(np.linspace(a, b, n)))

    def __repr__(self):
        return "SampledFunction1D((" + str(self.a) + ", " + str(self.b) + "), N=" + str(self.values.size) + ")"

class InequalityReport:
    name: str
    lhs: float
    rhs: float
    constants: Dict[str, float]

    def __init__(self, name: str, lhs: float, rhs: float, constants: Dict[str, float] = None):
        self.name = name
        self.lhs = float(lhs)
        self.rhs = float(rhs)
        self.constants = dict(constants) if constants is not None else dict()

    @property
    def tolerance(self) -> float:
        return QUADRATURE_RELATIVE_TOL * max(self.lhs, self.rhs, 1.0)

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + self.tolerance

    def __repr__(self):
        return self.name + ": " + str(self.lhs) + " <= " + str(self.rhs) + (" holds" if self.holds else " FAILS")

##
## 1-D quadrature
##

def _integral(t: np.ndarray, y: np.ndarray, lo: float, hi: float) -> float:
    """Trapezoid integral of the piecewise-linear interpolant of y over [lo, hi]."""
    inside = (t > lo) & (t < hi)
    tt = np.concatenate(([lo], t[inside], [hi]))
    yy = np.concatenate(([np.interp(lo, t, y)], y[inside], [np.interp(hi, t, y)]))
    return float(trapezoid(yy, tt))

def _check_sub(u: SampledFunction1D, sub: Tuple[float, float]):
    slop = 1e-12 * (u.b - u.a)
    if not (u.a - slop <= sub[0] < sub[1] <= u.b + slop):
        raise ParameterError("sub-interval " + str(sub) + " is not inside (" + str(u.a) + ", " + str(u.b) + ")")

def square_integral(u: SampledFunction1D, sub: Tuple[float, float] = None) -> float:
    sub = (u.a, u.b) if sub is None else sub
    _check_sub(u, sub)
    return _integral(u.t, u.values ** 2, sub[0], sub[1])

def energy_integral(u: SampledFunction1D, sub: Tuple[float, float] = None) -> float:
    sub = (u.a, u.b) if sub is None else sub
    _check_sub(u, sub)
    return _integral(u.t, u.derivative() ** 2, sub[0], sub[1])

def norms_1d(u: SampledFunction1D, sub: Tuple[float, float] = None) -> Tuple[float, float]:
    """(‖u‖_{L²(sub)}, ‖u'‖_{L²(sub)})"""
    return math.sqrt(square_integral(u, sub)), math.sqrt(energy_integral(u, sub))

def _half_width(u: SampledFunction1D) -> float:
    if abs(u.a + u.b) > 1e-12 * (u.b - u.a):
        raise ParameterError("interval (" + str(u.a) + ", " + str(u.b) + ") is not symmetric about 0")
    return u.b

def shift_difference_bound(u: SampledFunction1D) -> InequalityReport:
    h = _half_width(u)
    right, _ = norms_1d(u, (0.0, h))
    left, _ = norms_1d(u, (-h, 0.0))
    _, grad = norms_1d(u)

    return InequalityReport("shift_difference", abs(right - left), SHIFT_CONSTANT * h * grad,
        {"sqrt2": SHIFT_CONSTANT, "h": h})

def half_interval_bound(u: SampledFunction1D, direction: Direction = Direction.RIGHT) -> InequalityReport:
    h = _half_width(u)
    target = (0.0, h) if direction == Direction.RIGHT else (-h, 0.0)
    other = (-h, 0.0) if direction == Direction.RIGHT else (0.0, h)

    lhs = square_integral(u, target)
    rhs = HALF_INTERVAL_FACTOR * square_integral(u, other) + GRADIENT_FACTOR * h * h * energy_integral(u)
    return InequalityReport("half_interval_" + direction.name.lower(), lhs, rhs,
        {"half_factor": HALF_INTERVAL_FACTOR, "gradient_factor": GRADIENT_FACTOR, "h": h})

def interior_bound_1d(u: SampledFunction1D, h: float) -> InequalityReport:
    if not (0.0 < h < (u.b - u.a) / 4.0):
        raise PreconditionError("h = " + str(h) + " must lie in (0, (b-a)/4) = (0, " + str((u.b - u.a) / 4.0) + ")")

    lhs = square_integral(u)
    rhs = INTERIOR_FACTOR * square_integral(u, (u.a + h, u.b - h)) + GRADIENT_FACTOR * h * h * energy_integral(u)
    return InequalityReport("interior_1d", lhs, rhs,
        {"interior_factor": INTERIOR_FACTOR, "gradient_factor": GRADIENT_FACTOR, "h": h})

##
## Grid functions
##

class GridFunction:
    """
    Real values on the included cells of a mask. Values outside the mask are
    held at 0 and never enter a norm. An exact gradient may be attached;
    otherwise gradients come from mask-aware differences.
    """

    mask: GridMask
    values: np.ndarray
    exact_gradient: Optional[np.ndarray]

    def __init__(self, mask: GridMask, values, exact_gradient = None):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != mask.cells.shape:
            raise ParameterError("values shape " + str(values.shape) + " does not match mask " + str(mask.cells.shape))
        if not np.all(np.isfinite(values[mask.cells])):
            raise InvalidDataError("grid function holds non-finite values on the mask")

        self.mask = mask
        self.values = np.where(mask.cells, values, 0.0)
        self.exact_gradient = None
        if exact_gradient is not None:
            exact_gradient = np.asarray(exact_gradient, dtype=np.float64)
            self.exact_gradient = np.where(mask.cells[None, ...], exact_gradient, 0.0)

    def from_callable(mask: GridMask, fn: Callable[[np.ndarray], np.ndarray], gradient: Callable[[np.ndarray], np.ndarray] = None) -> GridFunction:
        index = np.flatnonzero(mask.cells)
        centers = mask.grid.centers(index)

        values = np.zeros(mask.cells.size)
        values[index] = fn(centers)

        exact = None
        if gradient is not None:
            exact = np.zeros((mask.grid.dim, mask.cells.size))
            exact[:, index] = gradient(centers).T
            exact = exact.reshape((mask.grid.dim,) + mask.cells.shape)

        return GridFunction(mask, values.reshape(mask.cells.shape), exact)

    def difference_gradient(self) -> np.ndarray:
        inside = self.mask.cells
        h = self.mask.grid.spacing
        out = np.zeros((inside.ndim,) + inside.shape)

        for axis in range(inside.ndim):
            fwd_in = np.zeros_like(inside)
            bwd_in = np.zeros_like(inside)
            fwd_val = np.zeros_like(self.values)
            bwd_val = np.zeros_like(self.values)

            lead = [slice(None)] * inside.ndim
            tail = [slice(None)] * inside.ndim
            lead[axis] = slice(0, -1)
            tail[axis] = slice(1, None)
            lead = tuple(lead)
            tail = tuple(tail)

            fwd_in[lead] = inside[tail]
            fwd_val[lead] = self.values[tail]
            bwd_in[tail] = inside[lead]
            bwd_val[tail] = self.values[lead]

            both = inside & fwd_in & bwd_in
            only_fwd = inside & fwd_in & ~bwd_in
            only_bwd = inside & bwd_in & ~fwd_in

            g = out[axis]
            g[both] = (fwd_val[both] - bwd_val[both]) / (2.0 * h)
            g[only_fwd] = (fwd_val[only_fwd] - self.values[only_fwd]) / h
            g[only_bwd] = (self.values[only_bwd] - bwd_val[only_bwd]) / h

        return out

    def gradient(self) -> np.ndarray:
        if self.exact_gradient is not None:
            return self.exact_gradient
        return self.difference_gradient()

    def square_integral(self, region: GridMask = None) -> float:
        cells = self.mask.cells if region is None else (self.mask.cells & region.cells)
        return float(np.sum(self.values[cells] ** 2)) * self.mask.grid.cell_volume

    def energy(self) -> float:
        g = self.gradient()
        return float(np.sum(g[:, self.mask.cells] ** 2)) * self.mask.grid.cell_volume

    def l2_norm(self, region: GridMask = None) -> float:
        return math.sqrt(self.square_integral(region))

    def h1_norm(self) -> float:
        return math.sqrt(self.square_integral() + self.energy())

    def restrict(self, mask: GridMask) -> GridFunction:
        if not mask.grid.same_as(self.mask.grid):
            raise ParameterError("restriction mask lives on another grid")
        gradient = self.exact_gradient
        return GridFunction(mask, self.values, gradient)

    def __repr__(self):
        return "GridFunction(" + repr(self.mask) + ")"

class TrigPolynomial:
    """u(x) = Σ c_k cos(π k·x + φ_k) over integer wave vectors with |k|₁ ≤ order."""

    waves: np.ndarray
    coefficients: np.ndarray
    phases: np.ndarray

    def __init__(self, waves, coefficients, phases):
        self.waves = np.atleast_2d(np.asarray(waves, dtype=np.float64))
        self.coefficients = np.asarray(coefficients, dtype=np.float64)
        self.phases = np.asarray(phases, dtype=np.float64)

    @property
    def dim(self) -> int:
        return self.waves.shape[1]

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, self.dim)
        arg = math.pi * points @ self.waves.T + self.phases
        return np.cos(arg) @ self.coefficients

    def gradient(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, self.dim)
        arg = math.pi * points @ self.waves.T + self.phases
        return -(np.sin(arg) * self.coefficients) @ (math.pi * self.waves)

def wave_vectors(dim: int, order: int) -> np.ndarray:
    """Integer vectors with |k|₁ ≤ order, one of each ±k pair."""
    waves = []
    for k in itertools.product(range(-order, order + 1), repeat=dim):
        if sum(abs(c) for c in k) > order:
            continue
        nonzero = [c for c in k if c != 0]
        if len(nonzero) > 0 and nonzero[0] < 0:
            continue
        waves.append(k)
    return np.asarray(waves, dtype=np.float64)

def random_trig_polynomial(rng: np.random.Generator, dim: int, max_order: int = MAX_TRIG_ORDER) -> TrigPolynomial:
    if not (1 <= max_order <= MAX_TRIG_ORDER):
        raise ParameterError("trig order must be in [1, " + str(MAX_TRIG_ORDER) + "], got " + str(max_order))

    order = int(rng.integers(1, max_order + 1))
    waves = wave_vectors(dim, order)
    coefficients = rng.standard_normal(waves.shape[0])
    phases = rng.uniform(0.0, 2.0 * math.pi, waves.shape[0])
    return TrigPolynomial(waves, coefficients, phases)

def grid_trig(mask: GridMask, poly: TrigPolynomial, rule: GradientRule = GradientRule.DIFFERENCE) -> GridFunction:
    """Samples at cell centers; EXACT attaches the analytic gradient, DIFFERENCE leaves gradients to the mask-aware differences."""
    return GridFunction.from_callable(mask, poly, poly.gradient if rule == GradientRule.EXACT else None)

##
## Fibered inequality and interpolation constants
##

def shrunk_mask(domain: Domain, mask: GridMask, h: float, mode: ShrinkMode) -> GridMask:
    inner = rasterize(shrink(domain, h, mode), 2, grid=mask.grid)
    return inner.restrict(mask.cells)

def fibered_interior_bound(u: GridFunction, domain: Domain, h: float, mode: ShrinkMode = ShrinkMode.VERTICAL_ONLY,
        inner: GridMask = None) -> InequalityReport:
    if not (0.0 < h < 1.0 / 3.0):
        raise PreconditionError("h = " + str(h) + " is outside (0, 1/3)")

    inner = shrunk_mask(domain, u.mask, h, mode) if inner is None else inner
    lhs = u.square_integral()
    rhs = INTERIOR_FACTOR * u.square_integral(inner) + GRADIENT_FACTOR * h * h * u.energy()

    report = InequalityReport("fibered_" + mode.name.lower(), lhs, rhs,
        {"interior_factor": INTERIOR_FACTOR, "gradient_factor": GRADIENT_FACTOR, "h": h})

    if mode == ShrinkMode.ALL_DIRECTIONS and not report.holds:
        logger.warning("all-directions fibered inequality fails on %s at h=%s: lhs=%s rhs=%s", domain.name, h, lhs, rhs)
    return report

def interpolation_constants(h: float) -> Tuple[float, float]:
    """(a, b) with ‖u‖_{L²(U)} ≤ a‖u‖_{H¹(U)} + b‖u‖_{L²(U_h)}."""
    if not (0.0 < h < 1.0 / 3.0):
        raise PreconditionError("h = " + str(h) + " is outside (0, 1/3)")
    return math.sqrt(GRADIENT_FACTOR) * h, math.sqrt(INTERIOR_FACTOR)

def verify_interpolation(u: GridFunction, domain: Domain, h: float, inner: GridMask = None) -> InequalityReport:
    a, b = interpolation_constants(h)
    inner = shrunk_mask(domain, u.mask, h, ShrinkMode.VERTICAL_ONLY) if inner is None else inner

    lhs = u.l2_norm()
    rhs = a * u.h1_norm() + b * u.l2_norm(inner)
    return InequalityReport("interpolation", lhs, rhs, {"a": a, "b": b, "h": h})

##
## Sweeps
##

class SweepRow:
    suite: str
    trial: int
    h: float
    report: InequalityReport
    refined: bool

    def __init__(self, suite: str, trial: int, h: float, report: InequalityReport, refined: bool = False):
        self.suite = suite
        self.trial = trial
        self.h = h
        self.report = report
        self.refined = refined

    def as_list(self) -> List[object]:
        r = self.report
        return [self.suite, self.trial, repr(self.h), repr(r.lhs), repr(r.rhs), repr(r.slack), "true" if r.holds else "false"]

SWEEP_COLUMNS = ["suite", "trial", "h", "lhs", "rhs", "slack", "holds"]

def _symmetric_sample(poly: TrigPolynomial, h: float, n: int) -> SampledFunction1D:
    return SampledFunction1D.from_function(lambda t: poly(((t + h) / (2.0 * h)).reshape(-1, 1)), -h, h, n)

def _unit_sample(poly: TrigPolynomial, n: int) -> SampledFunction1D:
    return SampledFunction1D.from_function(lambda t: poly(t.reshape(-1, 1)), 0.0, 1.0, n)

def _one_dim_report(suite: str, poly: TrigPolynomial, h: float, n: int, direction: Direction) -> InequalityReport:
    if suite == "shift":
        return shift_difference_bound(_symmetric_sample(poly, h, n))
    if suite == "half":
        return half_interval_bound(_symmetric_sample(poly, h, n), direction)
    return interior_bound_1d(_unit_sample(poly, n), h)

def inequality_sweep(suite: str = "all", trials: int = 200, hs: List[float] = None, seed: int = 0,
        domain: Domain = None, cells_per_unit: int = SWEEP_CELLS_PER_UNIT,
        mode: ShrinkMode = ShrinkMode.VERTICAL_ONLY, gradients: GradientRule = GradientRule.DIFFERENCE) -> List[SweepRow]:
    """
    Seeded random trig polynomials through the chosen suites. A 1-D failure
    is recomputed at a finer sampling and the refined result is kept.
    """
    hs = list(SWEEP_HS) if hs is None else list(hs)
    suites = SUITES if suite == "all" else [suite]
    for name in suites:
        if name not in SUITES:
            raise ParameterError("unknown suite '" + name + "'; known: all, " + ", ".join(SUITES))

    domain = step_domain() if domain is None else domain

    print_step = "Inequality sweep " + ",".join(suites)
    logger.info("%s - START", print_step)
    start = time.time()

    rows: List[SweepRow] = []
    for offset, name in enumerate(suites):
        rng = np.random.default_rng(seed + offset)

        if name in DOMAIN_SUITES:
            mask = rasterize(domain, cells_per_unit)
            inner = {h: shrunk_mask(domain, mask, h, mode if name == "fibered" else ShrinkMode.VERTICAL_ONLY) for h in hs}
            for trial in range(trials):
                u = grid_trig(mask, random_trig_polynomial(rng, domain.dim), gradients)
                for h in hs:
                    if name == "fibered":
                        report = fibered_interior_bound(u, domain, h, mode, inner[h])
                    else:
                        report = verify_interpolation(u, domain, h, inner[h])
                    rows.append(SweepRow(name, trial, h, report))
            continue

        for trial in range(trials):
            poly = random_trig_polynomial(rng, 1)
            direction = Direction.RIGHT if trial % 2 == 0 else Direction.LEFT
            slacks = []
            for h in hs:
                report = _one_dim_report(name, poly, h, SWEEP_SAMPLES_1D, direction)
                refined = False
                if not report.holds:
                    logger.debug("%s trial %d h=%s failed at N=%d, refining", name, trial, h, SWEEP_SAMPLES_1D)
                    report = _one_dim_report(name, poly, h, SWEEP_SAMPLES_1D * SWEEP_REFINE_FACTOR, direction)
                    refined = True
                rows.append(SweepRow(name, trial, h, report, refined))
                slacks.append(report.slack)

            if name == "interior" and any(later > earlier for earlier, later in zip(slacks, slacks[1:])):
                logger.debug("interior slack not monotone in h for trial %d: %s", trial, slacks)

    logger.info("%s - COMPLETE - Elapsed = %.3f (%d rows)", print_step, time.time() - start, len(rows))
    return rows
