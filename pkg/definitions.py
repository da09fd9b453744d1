from __future__ import annotations
from enum import Enum
from typing import List, Dict, Optional

VERSION = "0.3.1"

def pretty_print_enum(enum: Enum):
	return " ".join(list(map(lambda s: s.lower().capitalize(), enum.name.split("_"))))

class ShrinkMode(Enum):
	ALL_DIRECTIONS = 1
	VERTICAL_ONLY = 2

	def pretty(self):
		return pretty_print_enum(self)

	def parse(text: str) -> ShrinkMode:
		key = text.strip().upper().replace("-", "_")
		try:
			return ShrinkMode[key]
		except KeyError:
			raise ParameterError("unknown shrink mode '" + text + "'")

class ProfileKind(Enum):
	CLOSED_FORM = 1
	PIECEWISE_JUMP = 2
	SAMPLED = 3
	ACCUMULATING_JUMPS = 4

	def pretty(self):
		return pretty_print_enum(self)

class GradientRule(Enum):
	EXACT = 1
	DIFFERENCE = 2

	def pretty(self):
		return pretty_print_enum(self)

class Direction(Enum):
	LEFT = 1
	RIGHT = 2

	def pretty(self):
		return pretty_print_enum(self)

COUNTABLE = "countable"

##
## Errors
##

class RoughDomainError(Exception):
	pass

class DomainError(RoughDomainError):
	pass

class ParameterError(RoughDomainError):
	pass

class PreconditionError(RoughDomainError):
	pass

class UnsupportedRepresentationError(RoughDomainError):
	pass

class InvalidDataError(RoughDomainError):
	pass

class ConfigError(RoughDomainError):
	pass

class DegenerateDomainError(RoughDomainError):
	pass

class SingularityError(RoughDomainError):
	pass

class CoverageError(RoughDomainError):
	pass

class ApproximationError(RoughDomainError):
	diagnostics: Dict[str, float]

	def __init__(self, message: str, diagnostics: Dict[str, float]):
		super().__init__(message)
		self.diagnostics = diagnostics

class DegenerateJacobianError(RoughDomainError):
	sample: List[float]

	def __init__(self, message: str, sample):
		super().__init__(message)
		self.sample = [float(v) for v in sample]

class TopologyError(RoughDomainError):
	component_sizes: List[int]

	def __init__(self, message: str, component_sizes: List[int]):
		super().__init__(message + "; component sizes = " + str(component_sizes))
		self.component_sizes = component_sizes

class SolverError(RoughDomainError):
	residual_history: Optional[List[List[float]]]

	def __init__(self, message: str, residual_history = None):
		super().__init__(message)
		self.residual_history = residual_history
