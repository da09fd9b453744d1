from __future__ import annotations
from typing import List, Dict, Tuple, Optional
import logging
import math
import time

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, lobpcg, splu

from definitions import *
from domain_builder import Domain, ElementaryDomain, UnionDomain, GridMask, rasterize, lipschitz_approximant
from inequalities import InequalityReport, GridFunction, grid_trig, random_trig_polynomial, shrunk_mask, interpolation_constants

logger = logging.getLogger(__name__)

##
## Defaults
##
DEFAULT_TOL = 1e-6
DENSE_LIMIT = 1500
EXTRA_BLOCK = 4
ITERATION_FACTOR = 50
MAX_NORM_DIM = 200
C_EPS_STARTS = 1000
C_EPS_REFINE = 16
ORDERING_SAMPLES = 1000
MONOTONICITY_SLACK = 0.05
PART_MIN_CELLS_FACTOR = 4
DOSSIER_H = 0.1
DOSSIER_TRIALS = 50

class ComponentPolicy(Enum):
    ERROR = 1
    LARGEST = 2
    MERGE = 3

    def pretty(self):
        return pretty_print_enum(self)

class DiscreteForms:
    """Natural-boundary Dirichlet form and lumped L² form over the included cells."""

    mask: GridMask
    stiffness: sp.csr_matrix
    mass: sp.dia_matrix
    index: np.ndarray
    face_count: int

    def __init__(self, mask: GridMask, stiffness, mass, index: np.ndarray, face_count: int):
        self.mask = mask
        self.stiffness = stiffness
        self.mass = mass
        self.index = index
        self.face_count = face_count

    @property
    def size(self) -> int:
        return self.stiffness.shape[0]

    def vector(self, u: GridFunction) -> np.ndarray:
        return u.values[self.mask.cells]

    def __repr__(self):
        return "DiscreteForms(" + str(self.size) + " cells, " + str(self.face_count) + " faces)"

def assemble(mask: GridMask, per_component: bool = False) -> DiscreteForms:
    if mask.count == 0:
        raise PreconditionError("cannot assemble forms on an empty mask")

    _, sizes = mask.face_components()
    if len(sizes) > 1 and not per_component:
        raise TopologyError("mask has " + str(len(sizes)) + " face-connected components", sizes)

    cells = mask.cells
    n = cells.ndim
    index = np.full(cells.shape, -1, dtype=np.int64)
    index[cells] = np.arange(mask.count)

    weight = mask.grid.spacing ** (n - 2)
    rows = []
    cols = []
    faces = 0
    for axis in range(n):
        lead = [slice(None)] * n
        tail = [slice(None)] * n
        lead[axis] = slice(0, -1)
        tail[axis] = slice(1, None)
        both = cells[tuple(lead)] & cells[tuple(tail)]
        i = index[tuple(lead)][both]
        j = index[tuple(tail)][both]
        rows.append(i)
        cols.append(j)
        faces += i.size

    i = np.concatenate(rows)
    j = np.concatenate(cols)
    data = np.full(i.size, weight)
    # each face adds w(e_i - e_j)(e_i - e_j)^T
    stiffness = sp.coo_matrix(
        (np.concatenate((data, data, -data, -data)), (np.concatenate((i, j, i, j)), np.concatenate((i, j, j, i)))),
        shape=(mask.count, mask.count)).tocsr()
    mass = sp.diags(np.full(mask.count, mask.grid.cell_volume))

    return DiscreteForms(mask, stiffness, mass, index, faces)

class SpectrumReport:
    eigenvalues: np.ndarray
    singular_values: np.ndarray
    residuals: np.ndarray
    resolution: Optional[int]
    solver_tolerance: float
    iterations: int
    method: str
    cell_count: int
    component_sizes: List[int]
    discarded_cells: int
    merged: bool

    def __init__(self, eigenvalues, residuals, solver_tolerance: float, iterations: int, method: str, cell_count: int):
        order = np.argsort(eigenvalues)
        self.eigenvalues = np.asarray(eigenvalues, dtype=np.float64)[order]
        self.residuals = np.asarray(residuals, dtype=np.float64)[order]
        self.singular_values = 1.0 / np.sqrt(1.0 + np.maximum(self.eigenvalues, 0.0))
        self.solver_tolerance = solver_tolerance
        self.iterations = iterations
        self.method = method
        self.cell_count = cell_count
        self.resolution = None
        self.component_sizes = []
        self.discarded_cells = 0
        self.merged = False

    @property
    def k(self) -> int:
        return self.eigenvalues.size

    def rows(self) -> List[List[object]]:
        return [[self.resolution, j + 1, repr(float(self.eigenvalues[j])), repr(float(self.singular_values[j])),
            repr(float(self.residuals[j]))] for j in range(self.k)]

    def __repr__(self):
        return "SpectrumReport(" + str(np.round(self.eigenvalues, 6).tolist()) + ", " + self.method + ")"

SPECTRUM_COLUMNS = ["resolution", "j", "lambda", "sigma", "residual"]

def pair_residuals(forms: DiscreteForms, eigenvalues: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """‖(K - λM)v‖ / (cell volume · ‖v‖) for every column v."""
    r = forms.stiffness @ vectors - (forms.mass @ vectors) * eigenvalues[None, :]
    return np.linalg.norm(r, axis=0) / (forms.mask.grid.cell_volume * np.linalg.norm(vectors, axis=0))

def _dense_pairs(forms: DiscreteForms, k: int) -> Tuple[np.ndarray, np.ndarray]:
    values, vectors = scipy.linalg.eigh(forms.stiffness.toarray(), forms.mass.toarray(), subset_by_index=[0, k - 1])
    return values, vectors

def lowest_eigenvalues(forms: DiscreteForms, k: int, tol: float = DEFAULT_TOL, seed: int = 0) -> SpectrumReport:
    """
    Lowest k generalized eigenpairs of (stiffness, mass). Small problems are
    solved densely; larger ones by LOBPCG with a seeded random block and a
    sparse LU of stiffness + mass as preconditioner.
    """
    if k < 2:
        raise PreconditionError("need k >= 2, got " + str(k))
    if k > forms.size:
        raise PreconditionError("k = " + str(k) + " exceeds the cell count " + str(forms.size))

    print_step = "Eigenvalues k=" + str(k) + " on " + str(forms.size) + " cells"
    logger.info("%s - START", print_step)
    start = time.time()

    if forms.size <= DENSE_LIMIT:
        values, vectors = _dense_pairs(forms, k)
        iterations = 0
        history = None
        method = "dense"
    else:
        block = min(forms.size // 5, k + EXTRA_BLOCK)
        x0 = np.random.default_rng(seed).standard_normal((forms.size, block))
        lu = splu(sp.csc_matrix(forms.stiffness + forms.mass))
        preconditioner = LinearOperator(forms.stiffness.shape, matvec=lu.solve, matmat=lu.solve, dtype=np.float64)

        # lobpcg measures residuals on mass-normalized vectors
        values, vectors, history = lobpcg(forms.stiffness, x0, B=forms.mass, M=preconditioner,
            tol=tol * math.sqrt(forms.mask.grid.cell_volume), maxiter=ITERATION_FACTOR * k, largest=False,
            retResidualNormsHistory=True)
        order = np.argsort(values)[:k]
        values = values[order]
        vectors = vectors[:, order]
        iterations = len(history)
        method = "lobpcg"

    residuals = pair_residuals(forms, values, vectors)
    limit = tol * (1.0 + np.abs(values))
    if np.any(residuals > limit):
        worst = int(np.argmax(residuals / limit))
        history_list = None if history is None else [np.asarray(h).tolist() for h in history]
        raise SolverError("eigenpair " + str(worst + 1) + " residual " + str(residuals[worst]) + " exceeds " + str(limit[worst])
            + " after " + str(iterations) + " iterations", history_list)

    report = SpectrumReport(values, residuals, tol, iterations, method, forms.size)
    logger.info("%s - COMPLETE - Elapsed = %.3f (%s, %d iterations)", print_step, time.time() - start, method, iterations)
    return report

def mask_spectrum(mask: GridMask, k: int, tol: float = DEFAULT_TOL, seed: int = 0,
        policy: ComponentPolicy = ComponentPolicy.ERROR) -> SpectrumReport:
    """Spectrum of a possibly disconnected mask under the chosen component policy."""
    labels, sizes = mask.face_components()

    if len(sizes) == 1 or policy == ComponentPolicy.ERROR:
        report = lowest_eigenvalues(assemble(mask), k, tol, seed)
        report.component_sizes = sizes
        return report

    if policy == ComponentPolicy.LARGEST:
        largest = mask.largest_component()
        report = lowest_eigenvalues(assemble(largest), k, tol, seed)
        report.component_sizes = sizes
        report.discarded_cells = mask.count - largest.count
        if report.discarded_cells > 0:
            logger.info("spectrum kept the largest of %d components, discarding %d cells", len(sizes), report.discarded_cells)
        return report

    values = []
    residuals = []
    iterations = 0
    for label in range(1, labels.max() + 1):
        part = GridMask(mask.grid, labels == label)
        kk = min(k, part.count)
        if kk < 2:
            values.append(0.0)
            residuals.append(0.0)
            continue
        sub = lowest_eigenvalues(assemble(part), kk, tol, seed)
        values.extend(sub.eigenvalues.tolist())
        residuals.extend(sub.residuals.tolist())
        iterations += sub.iterations

    order = np.argsort(values)[:k]
    report = SpectrumReport(np.asarray(values)[order], np.asarray(residuals)[order], tol, iterations, "merged", mask.count)
    report.component_sizes = sizes
    report.merged = True
    logger.warning("spectrum merged over %d components; the zero eigenvalue repeats per component", len(sizes))
    return report

##
## Condition 2
##

class MarginReport:
    a: float
    b: float
    h: float
    slacks: np.ndarray
    failures: int

    def __init__(self, a: float, b: float, h: float, reports: List[InequalityReport]):
        self.a = a
        self.b = b
        self.h = h
        self.slacks = np.asarray([r.slack for r in reports])
        self.failures = sum(1 for r in reports if not r.holds)
        self.reports = reports

    @property
    def trials(self) -> int:
        return self.slacks.size

    @property
    def min_slack(self) -> float:
        return float(np.min(self.slacks))

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def as_dict(self) -> Dict[str, object]:
        return {"a": self.a, "b": self.b, "h": self.h, "trials": self.trials, "failures": self.failures, "min_slack": self.min_slack}

def condition2_check(domain: Domain, mask: GridMask, h: float, a: float, b: float, trials: int, seed: int = 0,
        mode: ShrinkMode = ShrinkMode.VERTICAL_ONLY, include_constant: bool = True,
        gradients: GradientRule = GradientRule.DIFFERENCE) -> MarginReport:
    """
    ‖u‖_{L²(D)} ≤ a‖u‖_{H¹(D)} + b‖u‖_{L²(D_h)} for the constant function and
    seeded random trig polynomials restricted to the mask.
    """
    inner = shrunk_mask(domain, mask, h, mode)
    if inner.count == 0:
        raise DegenerateDomainError("shrunk mask of " + domain.name + " at h = " + str(h) + " is empty")

    rng = np.random.default_rng(seed)
    functions = []
    if include_constant:
        functions.append(GridFunction(mask, np.ones(mask.cells.shape), np.zeros((mask.grid.dim,) + mask.cells.shape)))
    while len(functions) < trials:
        functions.append(grid_trig(mask, random_trig_polynomial(rng, mask.grid.dim), gradients))

    reports = []
    for u in functions:
        reports.append(InequalityReport("condition2", u.l2_norm(), a * u.h1_norm() + b * u.l2_norm(inner), {"a": a, "b": b, "h": h}))

    margin = MarginReport(a, b, h, reports)
    if not margin.passed:
        logger.warning("condition 2 with a=%s b=%s h=%s failed %d of %d trials", a, b, h, margin.failures, margin.trials)
    return margin

##
## Finite-dimensional criterion
##

class NormTriple:
    """Quadratic forms N1 ≥ N2 ≥ N3 on R^d."""

    n1: np.ndarray
    n2: np.ndarray
    n3: np.ndarray

    def __init__(self, n1, n2, n3, seed: int = 0):
        forms = [np.atleast_2d(np.asarray(m, dtype=np.float64)) for m in (n1, n2, n3)]
        d = forms[0].shape[0]
        if d > MAX_NORM_DIM:
            raise ParameterError("dimension " + str(d) + " exceeds " + str(MAX_NORM_DIM))

        for i, m in enumerate(forms):
            if m.shape != (d, d):
                raise ParameterError("form N" + str(i + 1) + " has shape " + str(m.shape) + ", expected " + str((d, d)))
            if not np.allclose(m, m.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.max(np.abs(m))))):
                raise ParameterError("form N" + str(i + 1) + " is not symmetric")
            try:
                np.linalg.cholesky(m)
            except np.linalg.LinAlgError:
                raise ParameterError("form N" + str(i + 1) + " is not positive definite")

        self.n1, self.n2, self.n3 = forms

        u = np.random.default_rng(seed).standard_normal((ORDERING_SAMPLES, d))
        q1, q2, q3 = self.norms(u)
        if np.any(q1 < q2 * (1.0 - 1e-12)) or np.any(q2 < q3 * (1.0 - 1e-12)):
            raise ParameterError("forms are not ordered N1 >= N2 >= N3 on sampled vectors")

    @property
    def dim(self) -> int:
        return self.n1.shape[0]

    def norms(self, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        u = np.atleast_2d(u)
        return tuple(np.sqrt(np.einsum("ij,jk,ik->i", u, m, u)) for m in (self.n1, self.n2, self.n3))

def _ratio(triple: NormTriple, u: np.ndarray, eps: float) -> np.ndarray:
    q1, q2, q3 = triple.norms(u)
    return q2 / q3 - eps * (q1 / q3)

def _refine(triple: NormTriple, u0: np.ndarray, eps: float) -> np.ndarray:
    def objective(u):
        q1, q2, q3 = [float(v[0]) for v in triple.norms(u)]
        g1 = triple.n1 @ u / q1
        g2 = triple.n2 @ u / q2
        g3 = triple.n3 @ u / q3
        value = (q2 - eps * q1) / q3
        grad = ((g2 - eps * g1) * q3 - (q2 - eps * q1) * g3) / (q3 * q3)
        return -value, -grad

    result = scipy.optimize.minimize(objective, u0, jac=True, method="BFGS", options={"gtol": 1e-12, "maxiter": 2000})
    u = result.x
    return u / np.linalg.norm(u)

def find_c_epsilon(triple: NormTriple, eps_list: List[float], starts: int = C_EPS_STARTS, seed: int = 0) -> List[Tuple[float, float]]:
    """
    c(ε) = max over u of (‖u‖₂ - ε‖u‖₁)/‖u‖₃, clamped at 0. Random starts are
    refined per ε and every maximizer found is re-scored at every ε, which
    keeps the table nonincreasing in ε.
    """
    eps_list = [float(e) for e in eps_list]
    if any(e <= 0.0 for e in eps_list):
        raise ParameterError("every epsilon must be positive: " + str(eps_list))

    try:
        scipy.linalg.cholesky(triple.n3)
    except scipy.linalg.LinAlgError:
        raise ParameterError("N3 is singular")

    rng = np.random.default_rng(seed)
    candidates = rng.standard_normal((starts, triple.dim))
    candidates /= np.linalg.norm(candidates, axis=1)[:, None]

    pool = [candidates]
    for eps in eps_list:
        scores = _ratio(triple, candidates, eps)
        best = np.argsort(scores)[::-1][:C_EPS_REFINE]
        pool.append(np.array([_refine(triple, candidates[i], eps) for i in best]))
    pool = np.vstack(pool)

    table = []
    for eps in eps_list:
        c = max(0.0, float(np.max(_ratio(triple, pool, eps))))
        table.append((eps, c))

    ordered = sorted(table)
    if any(later[1] > earlier[1] for earlier, later in zip(ordered, ordered[1:])):
        logger.error("c(eps) table is not monotone: %s", ordered)
    return table

##
## Dossier
##

class CompactnessDossier:
    domain_name: str
    resolutions: List[int]
    spectra: Dict[int, SpectrumReport]
    drift: np.ndarray
    condition2: Optional[MarginReport]
    part_spectra: Dict[str, SpectrumReport]
    part_notes: List[str]
    approximant_containment: Optional[bool]
    monotonicity_ok: Optional[bool]
    policy: ComponentPolicy
    verdict: str

    def __init__(self, domain_name: str, resolutions: List[int], policy: ComponentPolicy = ComponentPolicy.MERGE):
        self.domain_name = domain_name
        self.resolutions = resolutions
        self.policy = policy
        self.spectra = dict()
        self.drift = np.empty((0,))
        self.condition2 = None
        self.part_spectra = dict()
        self.part_notes = []
        self.approximant_containment = None
        self.monotonicity_ok = None
        self.verdict = ""

    @property
    def max_drift(self) -> float:
        return float(np.max(self.drift)) if self.drift.size > 0 else 0.0

    def finest(self) -> SpectrumReport:
        return self.spectra[self.resolutions[-1]]

    def as_dict(self) -> Dict[str, object]:
        out = {
            "domain": self.domain_name,
            "resolutions": " ".join(str(r) for r in self.resolutions),
            "max_relative_drift": self.max_drift,
            "drift": " ".join(repr(float(d)) for d in self.drift),
            "sigma": " ".join(repr(float(s)) for s in self.finest().singular_values),
            "component_policy": self.policy.pretty(),
            "components": " ".join(str(len(self.spectra[r].component_sizes)) for r in self.resolutions),
            "merged": any(self.spectra[r].merged for r in self.resolutions),
            "discarded_cells": " ".join(str(self.spectra[r].discarded_cells) for r in self.resolutions),
            "condition2": "skipped" if self.condition2 is None else ("pass" if self.condition2.passed else "fail"),
            "condition2_min_slack": "none" if self.condition2 is None else self.condition2.min_slack,
            "approximant_containment": "skipped" if self.approximant_containment is None else self.approximant_containment,
            "neumann_monotonicity": "skipped" if self.monotonicity_ok is None else self.monotonicity_ok,
            "parts": " ".join(name + ":" + repr(float(s.eigenvalues[1])) for name, s in self.part_spectra.items()),
            "verdict": self.verdict,
        }
        return out

def relative_drift(coarse: SpectrumReport, fine: SpectrumReport) -> np.ndarray:
    """Per-eigenvalue relative change from j = 2 on; zero modes of merged spectra count against the solver tolerance."""
    k = min(coarse.k, fine.k)
    a = coarse.eigenvalues[1:k]
    b = fine.eigenvalues[1:k]
    floor = max(coarse.solver_tolerance, fine.solver_tolerance)
    return np.abs(a - b) / np.maximum(np.abs(b), floor)

def compactness_dossier(domain: Domain, resolutions: List[int], k: int = 6, tol: float = DEFAULT_TOL, seed: int = 0,
        h: float = DOSSIER_H, trials: int = DOSSIER_TRIALS, policy: ComponentPolicy = ComponentPolicy.MERGE) -> CompactnessDossier:
    """
    Two-resolution spectral evidence for one domain. Disconnected masks follow
    the component policy; MERGE analyzes every component and sorts the merged
    spectrum, LARGEST keeps the largest component and counts the rest as discarded.
    """
    if len(resolutions) < 2:
        raise ParameterError("the dossier needs at least two resolutions")
    resolutions = sorted(int(r) for r in resolutions)

    print_step = "Compactness dossier " + domain.name
    logger.info("%s - START", print_step)
    start = time.time()

    dossier = CompactnessDossier(domain.name, resolutions, policy)
    masks = dict()
    for res in resolutions:
        masks[res] = rasterize(domain, res)
        report = mask_spectrum(masks[res], k, tol, seed, policy)
        report.resolution = res
        dossier.spectra[res] = report

    dossier.drift = relative_drift(dossier.spectra[resolutions[-2]], dossier.spectra[resolutions[-1]])

    coarse = resolutions[0]
    a, b = interpolation_constants(h)
    try:
        dossier.condition2 = condition2_check(domain, masks[coarse], h, a, b, trials, seed)
    except (UnsupportedRepresentationError, DegenerateDomainError) as e:
        logger.info("condition 2 skipped for %s: %s", domain.name, e)

    if isinstance(domain, ElementaryDomain) and domain.profile.base_dim == 1:
        try:
            dossier.approximant_containment = lipschitz_approximant(domain, h, seed).containment_holds
        except ApproximationError as e:
            logger.info("Lipschitz approximant skipped for %s: %s", domain.name, e)

    if dossier.condition2 is not None:
        _monotonicity_probe(dossier, domain, masks[coarse], h, k, tol, seed)

    if isinstance(domain, UnionDomain):
        _part_spectra(dossier, domain, coarse, k, tol, seed)

    finest = dossier.finest()
    dossier.verdict = ("measured: lambda_2..lambda_" + str(finest.k) + " relative drift <= " + format(dossier.max_drift, ".4g")
        + " between " + str(resolutions[-2]) + " and " + str(resolutions[-1]) + " cells per unit"
        + "; sigma_" + str(finest.k) + "/sigma_2 = " + format(finest.singular_values[-1] / finest.singular_values[1], ".4g")
        + "; condition-2 " + ("not run" if dossier.condition2 is None else
            "min slack " + format(dossier.condition2.min_slack, ".4g") + " over " + str(dossier.condition2.trials) + " trials")
        + ("; spectrum merged over " + str(len(finest.component_sizes)) + " components" if finest.merged else "")
        + "; a finite grid cannot decide compactness, these are proxies only")

    logger.info("%s - COMPLETE - Elapsed = %.3f", print_step, time.time() - start)
    return dossier

def _monotonicity_probe(dossier: CompactnessDossier, domain: Domain, mask: GridMask, h: float, k: int, tol: float, seed: int):
    inner = shrunk_mask(domain, mask, h, ShrinkMode.VERTICAL_ONLY)
    if inner.count < PART_MIN_CELLS_FACTOR * k:
        return
    outer_l2 = dossier.spectra[dossier.resolutions[0]].eigenvalues[1]
    inner_l2 = mask_spectrum(inner, 2, tol, seed, dossier.policy).eigenvalues[1]
    dossier.monotonicity_ok = bool(inner_l2 >= outer_l2 * (1.0 - MONOTONICITY_SLACK))
    if not dossier.monotonicity_ok:
        logger.warning("lambda_2 of the shrunk %s (%s) is below lambda_2 of the domain (%s)", domain.name, inner_l2, outer_l2)

def _part_spectra(dossier: CompactnessDossier, domain: UnionDomain, res: int, k: int, tol: float, seed: int):
    for part in domain.parts:
        try:
            mask = rasterize(part, res)
        except DegenerateDomainError:
            dossier.part_notes.append(part.name + ": below grid resolution")
            continue
        if mask.count < PART_MIN_CELLS_FACTOR * k:
            dossier.part_notes.append(part.name + ": " + str(mask.count) + " cells, too few")
            continue
        report = mask_spectrum(mask, k, tol, seed, dossier.policy)
        report.resolution = res
        dossier.part_spectra[part.name] = report
