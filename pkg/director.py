from __future__ import annotations
from enum import Enum
from typing import List, Dict, Tuple, Optional, Callable
import logging
import math
import time

import numpy as np

from definitions import *
from stat_tracker import SuiteTracker
import domain_builder
import embedding_spectrum
import inequalities
import mappings

logger = logging.getLogger(__name__)

class RunStatus(Enum):
	STARTING = 0
	INITIALIZED = 1
	RUNNING = 2
	ENDED = 3

class RunEvent(Enum):
	CHECK = 1
	SUITE_DONE = 2

class CheckOutcome:
	suite: str
	name: str
	holds: bool
	slack: float
	detail: str

	def __init__(self, suite: str, name: str, holds: bool, slack: float = math.inf, detail: str = ""):
		self.suite = suite
		self.name = name
		self.holds = bool(holds)
		self.slack = float(slack)
		self.detail = detail

	def as_list(self) -> List[object]:
		return [self.suite, self.name, "true" if self.holds else "false", repr(self.slack), self.detail]

	def __repr__(self):
		return self.suite + "/" + self.name + (" ok" if self.holds else " FAILED") + " " + self.detail

OUTCOME_COLUMNS = ["suite", "check", "holds", "slack", "detail"]

Check = Callable[[], List[CheckOutcome]]

class Director:
	"""Runs named checks in order, feeding outcomes to the tracker and the registered handlers."""

	status: RunStatus
	tracker: SuiteTracker
	outcomes: List[CheckOutcome]
	_checks: List[Tuple[str, Check]]
	_event_handlers: Dict[RunEvent, List[Callable]]

	def __init__(self, tracker: SuiteTracker = None):
		self.status = RunStatus.STARTING
		self.tracker = SuiteTracker() if tracker is None else tracker
		self.outcomes = []
		self._checks = []

		self._event_handlers = dict()
		for event in RunEvent:
			self._event_handlers[event] = []

	def register(self, event: RunEvent, func: Callable):
		self._event_handlers[event].append(func)

	def _emit(self, event: RunEvent, payload):
		for func in self._event_handlers[event]:
			func(payload)

	def setup(self, checks: List[Tuple[str, Check]]):
		if self.status != RunStatus.STARTING and self.status != RunStatus.ENDED:
			raise PreconditionError("setup called at the wrong time: Status = " + str(self.status))

		self._checks = list(checks)
		self.outcomes = []
		self.status = RunStatus.INITIALIZED

	def run(self) -> bool:
		if self.status != RunStatus.INITIALIZED:
			raise PreconditionError("run not setup")

		self.status = RunStatus.RUNNING

		for suite, check in self._checks:
			logger.info("Suite %s - START", suite)
			start = time.time()

			try:
				outcomes = check()
			except RoughDomainError as e:
				logger.error("suite %s raised %s: %s", suite, type(e).__name__, e)
				outcomes = [CheckOutcome(suite, "error", False, detail=type(e).__name__ + ": " + str(e))]

			for outcome in outcomes:
				self.tracker.log_check(outcome.suite, outcome.holds, outcome.slack)
				self.outcomes.append(outcome)
				self._emit(RunEvent.CHECK, outcome)

			self._emit(RunEvent.SUITE_DONE, suite)
			logger.info("Suite %s - COMPLETE - Elapsed = %.3f", suite, time.time() - start)

		self.status = RunStatus.ENDED
		return self.tracker.all_passed

	def failures(self) -> List[CheckOutcome]:
		return [o for o in self.outcomes if not o.holds]

##
## Acceptance suite
##

class AcceptanceScale:
	sweep_trials: int
	qi_pairs: int
	square_cells: int
	rough_resolutions: List[int]
	condition2_trials: int
	oracle_directions: int
	topology_resolutions: List[int]

	def __init__(self, quick: bool):
		self.sweep_trials = 50 if quick else 200
		self.qi_pairs = 20000 if quick else 100000
		self.square_cells = 64 if quick else 128
		self.rough_resolutions = [128, 256] if quick else [256, 512]
		self.condition2_trials = 100 if quick else 500
		self.oracle_directions = 100000 if quick else 1000000
		self.topology_resolutions = [256, 512] if quick else [512, 1024]

def _within(suite: str, name: str, value: float, expected: float, tol: float, relative: bool = False) -> CheckOutcome:
	gap = abs(value - expected)
	limit = tol * abs(expected) if relative else tol
	return CheckOutcome(suite, name, gap <= limit, limit - gap, repr(value) + " vs " + repr(expected))

def check_inequality_suites(scale: AcceptanceScale, seed: int) -> List[CheckOutcome]:
	rows = inequalities.inequality_sweep("all", scale.sweep_trials, None, seed)
	outcomes = []
	for row in rows:
		report = row.report
		ok = report.slack >= -inequalities.QUADRATURE_RELATIVE_TOL * max(report.lhs, 1.0)
		outcomes.append(CheckOutcome("inequalities", row.suite + "_" + str(row.trial) + "_" + repr(row.h), ok, report.slack))
	return outcomes

def check_exact_constants() -> List[CheckOutcome]:
	n = 10000
	e = math.e
	exp_u = inequalities.SampledFunction1D.from_function(np.exp, -1.0, 1.0, n)
	shift = inequalities.shift_difference_bound(exp_u)
	half = inequalities.half_interval_bound(exp_u, Direction.RIGHT)
	linear = inequalities.SampledFunction1D.from_function(lambda t: t, 0.0, 1.0, n)
	interior = inequalities.interior_bound_1d(linear, 0.2)

	return [
		_within("constants", "shift_lhs_exp", shift.lhs, math.sqrt((e * e - 1.0) / 2.0) - math.sqrt((1.0 - e ** -2) / 2.0), 1e-4),
		_within("constants", "shift_rhs_exp", shift.rhs, math.sqrt(2.0) * math.sqrt((e * e - e ** -2) / 2.0), 1e-4),
		_within("constants", "half_rhs_exp", half.rhs, (1.0 - e ** -2) + 2.0 * (e * e - e ** -2), 1e-4),
		_within("constants", "interior_rhs_linear", interior.rhs, 0.664, 1e-4),
	]

def check_spiral(scale: AcceptanceScale, seed: int) -> List[CheckOutcome]:
	phi = mappings.spiral_map()
	rng = np.random.default_rng(seed)
	t1 = domain_builder.spiral_band(1)
	points = domain_builder.sample_domain(t1, 10000, rng)

	round_trip = float(np.max(np.linalg.norm(phi.inverse_many(phi.forward_many(points)) - points, axis=1)))
	outcomes = [CheckOutcome("spiral", "round_trip", round_trip < 1e-10, 1e-10 - round_trip, repr(round_trip))]

	for n in (2, 3, 5):
		err = mappings.spiral_composition_check(n, 10000, seed)
		outcomes.append(CheckOutcome("spiral", "composition_" + str(n), err < 1e-10, 1e-10 - err, repr(err)))

	numeric = np.linalg.det(mappings.finite_difference_jacobian(phi, points))
	exact = 2.0 * math.pi * points[:, 0] / points[:, 1]
	det_gap = float(np.max(np.abs(numeric - exact)))
	outcomes.append(CheckOutcome("spiral", "det_finite_difference", det_gap < 1e-6, 1e-6 - det_gap, repr(det_gap)))

	q1 = mappings.quasiisometry_constant(phi, t1, 0.01 * math.exp(-2.0), scale.qi_pairs, seed).Q_est
	q3 = mappings.quasiisometry_constant(phi, domain_builder.spiral_band(3), 0.01 * math.exp(-4.0), scale.qi_pairs, seed).Q_est
	outcomes.append(_within("spiral", "qi_scale_invariance", q3, q1, 0.05, relative=True))
	return outcomes

def check_dilatation(seed: int) -> List[CheckOutcome]:
	rng = np.random.default_rng(seed)
	samples = rng.uniform(0.05, 1.0, (10000, 2))

	power = mappings.dilatation(mappings.power_map(2.0), samples)
	ident = mappings.dilatation(mappings.identity(2), samples)

	outcomes = [
		_within("dilatation", "power_K_frob", power.K_frob, 2.5, 1e-6),
		_within("dilatation", "power_K_geom", power.K_geom, 2.0, 1e-6),
		_within("dilatation", "identity_K_frob", ident.K_frob, 2.0, 0.0),
		_within("dilatation", "identity_K_geom", ident.K_geom, 1.0, 0.0),
	]
	for name, report in (("power", power), ("identity", ident)):
		ordered = (report.geom_ratios <= report.frob_ratios * (1.0 + 1e-12)) & (report.frob_ratios <= 2.0 * report.geom_ratios * (1.0 + 1e-12))
		outcomes.append(CheckOutcome("dilatation", name + "_ordering", bool(np.all(ordered)), detail=str(int(np.sum(~ordered))) + " samples out of order"))
	return outcomes

def check_spectrum_reproduction(scale: AcceptanceScale, seed: int) -> List[CheckOutcome]:
	pi2 = math.pi ** 2
	interval = embedding_spectrum.lowest_eigenvalues(embedding_spectrum.assemble(domain_builder.rasterize(domain_builder.unit_cube(1), 200)), 3, seed=seed)
	square = embedding_spectrum.lowest_eigenvalues(embedding_spectrum.assemble(domain_builder.rasterize(domain_builder.unit_cube(2), scale.square_cells)), 4, seed=seed)

	return [
		_within("spectrum", "interval_lambda2", interval.eigenvalues[1], pi2, 0.01, relative=True),
		_within("spectrum", "square_lambda2", square.eigenvalues[1], pi2, 0.01, relative=True),
		_within("spectrum", "square_lambda3", square.eigenvalues[2], pi2, 0.01, relative=True),
		_within("spectrum", "square_lambda4", square.eigenvalues[3], 2.0 * pi2, 0.015, relative=True),
	]

def check_mesh_independence(scale: AcceptanceScale, seed: int) -> List[CheckOutcome]:
	outcomes = []
	for name, domain in (("sin_component_domain", domain_builder.sin_component_domain()),
			("spiral_domain", domain_builder.spiral_domain()),
			("rectangle_chain", domain_builder.rectangle_chain(1.0))):
		# grid fragments below the resolution would each add a zero eigenvalue
		dossier = embedding_spectrum.compactness_dossier(domain, scale.rough_resolutions, 6, seed=seed,
			policy=embedding_spectrum.ComponentPolicy.LARGEST)
		drift = dossier.max_drift
		outcomes.append(CheckOutcome("mesh_independence", name + "_drift", drift < 0.05, 0.05 - drift,
			repr(drift) + "; discarded cells " + dossier.as_dict()["discarded_cells"]))

		finest = dossier.finest()
		lam1 = abs(float(finest.eigenvalues[0]))
		outcomes.append(CheckOutcome("mesh_independence", name + "_lambda1", lam1 <= finest.solver_tolerance,
			finest.solver_tolerance - lam1, repr(lam1)))
	return outcomes

def check_condition2(scale: AcceptanceScale, seed: int) -> List[CheckOutcome]:
	h = 0.1
	domain = domain_builder.step_domain()
	mask = domain_builder.rasterize(domain, 64)
	a, b = inequalities.interpolation_constants(h)
	margin = embedding_spectrum.condition2_check(domain, mask, h, a, b, scale.condition2_trials, seed)
	return [CheckOutcome("condition2", "step_domain", margin.min_slack > -1e-6, margin.min_slack + 1e-6, repr(margin.min_slack))]

def dense_angle_oracle(triple: embedding_spectrum.NormTriple, eps: float, directions: int) -> float:
	angles = np.linspace(0.0, 2.0 * math.pi, directions, endpoint=False)
	u = np.stack((np.cos(angles), np.sin(angles)), axis=1)
	q1, q2, q3 = triple.norms(u)
	return max(0.0, float(np.max((q2 - eps * q1) / q3)))

def check_c_epsilon(scale: AcceptanceScale, seed: int) -> List[CheckOutcome]:
	eps_list = [0.1, 0.5, 1.0]
	outcomes = []

	euclid = embedding_spectrum.NormTriple(np.eye(4), np.eye(4), np.eye(4), seed)
	for eps, c in embedding_spectrum.find_c_epsilon(euclid, eps_list, seed=seed):
		outcomes.append(_within("c_epsilon", "euclidean_" + repr(eps), c, max(1.0 - eps, 0.0), 0.0))

	diagonal = embedding_spectrum.NormTriple(np.diag([4.0, 1.0]), np.eye(2), np.diag([1.0, 0.25]), seed)
	for eps, c in embedding_spectrum.find_c_epsilon(diagonal, eps_list, seed=seed):
		outcomes.append(_within("c_epsilon", "diagonal_" + repr(eps), c, dense_angle_oracle(diagonal, eps, scale.oracle_directions), 1e-4))
	return outcomes

def check_topology(scale: AcceptanceScale) -> List[CheckOutcome]:
	domain = domain_builder.sin_component_domain()
	coarse, fine = [domain_builder.boundary_components(domain_builder.rasterize(domain, r)) for r in scale.topology_resolutions]
	return [
		CheckOutcome("topology", "at_least_three", coarse >= 3, coarse - 3, str(coarse)),
		CheckOutcome("topology", "nondecreasing", fine >= coarse, fine - coarse, str(coarse) + " -> " + str(fine)),
	]

def acceptance_checks(quick: bool = False, seed: int = 0) -> List[Tuple[str, Check]]:
	scale = AcceptanceScale(quick)
	return [
		("inequalities", lambda: check_inequality_suites(scale, seed)),
		("constants", check_exact_constants),
		("spiral", lambda: check_spiral(scale, seed)),
		("dilatation", lambda: check_dilatation(seed)),
		("spectrum", lambda: check_spectrum_reproduction(scale, seed)),
		("mesh_independence", lambda: check_mesh_independence(scale, seed)),
		("condition2", lambda: check_condition2(scale, seed)),
		("c_epsilon", lambda: check_c_epsilon(scale, seed)),
		("topology", lambda: check_topology(scale)),
	]
