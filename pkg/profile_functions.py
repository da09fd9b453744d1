from __future__ import annotations
from typing import List, Dict, Tuple, Optional, Callable, Union
import csv
import logging
import math

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from definitions import *

logger = logging.getLogger(__name__)

##
## Defaults
##
LIMIT_WINDOWS = [10.0 ** (-e) for e in range(3, 9)]
LIMIT_AGREEMENT = 1e-7
ADMISSIBILITY_SAMPLES = 20001
BOUND_SLACK = 1e-12

## closed forms: name -> (evaluator, bound, allowed base dims (None = any))

def _constant(x: np.ndarray, c: float = 0.0) -> np.ndarray:
    return np.full(x.shape[0], float(c))

def _linear(x: np.ndarray, intercept: float = 0.0, slope: float = 1.0) -> np.ndarray:
    return intercept + slope * np.sum(x, axis=1)

def _xsin(x: np.ndarray, x0: float = 0.0, x1: float = 1.0, scale: float = 1.0) -> np.ndarray:
    t = x0 + x[:, 0] * (x1 - x0)
    out = np.zeros_like(t)
    nz = t != 0.0
    out[nz] = t[nz] * np.sin(1.0 / t[nz])
    return scale * out

def _sin_recip(x: np.ndarray, x0: float = 0.0, x1: float = 1.0, amplitude: float = 1.0) -> np.ndarray:
    t = x0 + x[:, 0] * (x1 - x0)
    out = np.zeros_like(t)
    nz = t != 0.0
    out[nz] = np.sin(1.0 / t[nz])
    return amplitude * out

def _wave(x: np.ndarray, amplitude: float = 0.25, frequency: float = 1.0) -> np.ndarray:
    return amplitude * np.prod(np.sin(2.0 * math.pi * frequency * x), axis=1)

CLOSED_FORMS: Dict[str, Tuple[Callable, Callable, Optional[int]]] = {
    "constant": (_constant, lambda d, c=0.0: abs(c), None),
    "linear": (_linear, lambda d, intercept=0.0, slope=1.0: abs(intercept) + abs(slope) * d, None),
    "xsin": (_xsin, lambda d, x0=0.0, x1=1.0, scale=1.0: abs(scale) * max(abs(x0), abs(x1)), 1),
    "sin_recip": (_sin_recip, lambda d, x0=0.0, x1=1.0, amplitude=1.0: abs(amplitude), 1),
    "wave": (_wave, lambda d, amplitude=0.25, frequency=1.0: abs(amplitude), None),
}

class JumpSpec:
    location: float
    left_limit: float
    right_limit: float

    def __init__(self, location: float, left_limit: float, right_limit: float):
        if not (0.0 < location < 1.0):
            raise ParameterError("jump location " + str(location) + " is not in (0,1)")
        if not (math.isfinite(left_limit) and math.isfinite(right_limit)):
            raise InvalidDataError("jump limits at " + str(location) + " are not finite")

        self.location = float(location)
        self.left_limit = float(left_limit)
        self.right_limit = float(right_limit)

    @property
    def size(self) -> float:
        return abs(self.right_limit - self.left_limit)

    def __repr__(self):
        return "Jump(" + str(self.location) + ": " + str(self.left_limit) + " -> " + str(self.right_limit) + ")"

class AdmissibilityReport:
    bounded: bool
    jump_count: Union[int, str]
    max_jump: float
    bound: float
    sampled_sup: float

    def __init__(self, bounded: bool, jump_count, max_jump: float, bound: float, sampled_sup: float):
        self.bounded = bounded
        self.jump_count = jump_count
        self.max_jump = max_jump
        self.bound = bound
        self.sampled_sup = sampled_sup

    def as_dict(self) -> Dict[str, object]:
        return {
            "bounded": self.bounded,
            "jump_count": self.jump_count,
            "max_jump": self.max_jump,
            "bound": self.bound,
            "sampled_sup": self.sampled_sup,
        }

class ProfileFunction:
    """
    A bounded boundary profile f over the closed base cube [0,1]^base_dim.

    Instances are immutable; build them with the module level factories
    (closed_form, step, piecewise_jump, sampled, accumulating_jumps).
    """

    base_dim: int
    kind: ProfileKind
    name: str
    params: Dict[str, float]
    bound: float

    _breaks: np.ndarray
    _pieces: List[ProfileFunction]
    _values: np.ndarray
    _interpolator: Optional[RegularGridInterpolator]

    def __init__(self, kind: ProfileKind, base_dim: int, name: str, bound: float, params: Dict[str, float] = None,
            breaks = None, pieces: List[ProfileFunction] = None, values = None):
        if base_dim < 1:
            raise ParameterError("profile base dimension must be >= 1, got " + str(base_dim))

        self.kind = kind
        self.base_dim = int(base_dim)
        self.name = name
        self.bound = float(bound)
        self.params = dict(params) if params is not None else dict()

        self._breaks = np.asarray(breaks if breaks is not None else [], dtype=np.float64)
        self._pieces = list(pieces) if pieces is not None else []
        self._values = np.asarray(values, dtype=np.float64) if values is not None else np.empty((0,))
        self._interpolator = None

        if kind == ProfileKind.SAMPLED and self.base_dim > 1:
            axes = tuple(np.linspace(0.0, 1.0, n) for n in self._values.shape)
            self._interpolator = RegularGridInterpolator(axes, self._values, method="linear")

    @property
    def breaks(self) -> np.ndarray:
        return self._breaks.copy()

    @property
    def pieces(self) -> List[ProfileFunction]:
        return list(self._pieces)

    @property
    def values(self) -> np.ndarray:
        return self._values.copy()

    @property
    def knots(self) -> np.ndarray:
        if self.kind != ProfileKind.SAMPLED or self.base_dim != 1:
            raise UnsupportedRepresentationError("knots exist only for 1-D sampled profiles")
        return np.linspace(0.0, 1.0, self._values.size)

    def evaluate(self, x) -> float:
        points = self._as_points(x)
        if points.shape[0] != 1:
            raise DomainError("evaluate takes a single point; use evaluate_many")
        return float(self.evaluate_many(points)[0])

    def evaluate_many(self, x) -> np.ndarray:
        points = self._as_points(x)

        outside = np.any((points < 0.0) | (points > 1.0), axis=1)
        if np.any(outside):
            bad = points[np.argmax(outside)]
            raise DomainError("point " + str(bad.tolist()) + " is outside the base cube [0,1]^" + str(self.base_dim))

        return self._raw(points)

    def _as_points(self, x) -> np.ndarray:
        arr = np.asarray(x, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(-1, 1) if self.base_dim == 1 else arr.reshape(1, -1)

        if arr.ndim != 2 or arr.shape[1] != self.base_dim:
            raise DomainError("expected points of dimension " + str(self.base_dim) + ", got shape " + str(arr.shape))
        return arr

    ## evaluation without the base cube check, points already (m, base_dim)
    def _raw(self, points: np.ndarray) -> np.ndarray:
        if self.kind == ProfileKind.CLOSED_FORM:
            evaluator = CLOSED_FORMS[self.name][0]
            return evaluator(points, **self.params)

        if self.kind == ProfileKind.PIECEWISE_JUMP:
            x = points[:, 0]
            # side=right: a breakpoint belongs to the piece on its right
            index = np.searchsorted(self._breaks, x, side="right")
            out = np.empty_like(x)
            for i, piece in enumerate(self._pieces):
                sel = index == i
                if np.any(sel):
                    out[sel] = piece._raw(points[sel])
            return out

        if self.kind == ProfileKind.SAMPLED:
            if self.base_dim == 1:
                return np.interp(points[:, 0], self.knots, self._values)
            return self._interpolator(points)

        return self._accumulating(points[:, 0])

    ##
    ## accumulating jumps: x_k = limit + offset * ratio^(k-1), jump_k = jump * ratio^(k-1), k >= 1
    ##
    def _breakpoint(self, k):
        return self.params["limit"] + self.params["offset"] * self.params["ratio"] ** (np.asarray(k) - 1)

    def _first_index(self, x: np.ndarray) -> np.ndarray:
        limit = self.params["limit"]
        offset = self.params["offset"]
        ratio = self.params["ratio"]

        k = np.ones(x.shape, dtype=np.int64)
        right = x > limit
        if np.any(right):
            estimate = np.ceil(np.log((x[right] - limit) / offset) / math.log(ratio)) + 1
            k[right] = np.maximum(1, estimate).astype(np.int64)
            # log rounding can land one index off at the breakpoints themselves
            kr = k[right]
            xr = x[right]
            down = (kr > 1) & (self._breakpoint(kr - 1) <= xr)
            kr[down] -= 1
            up = self._breakpoint(kr) > xr
            kr[up] += 1
            k[right] = kr
        return k

    def _accumulating(self, x: np.ndarray) -> np.ndarray:
        jump = self.params["jump"]
        ratio = self.params["ratio"]

        out = np.zeros_like(x)
        right = x > self.params["limit"]
        if np.any(right):
            k = self._first_index(x[right])
            out[right] = jump * ratio ** (k - 1) / (1.0 - ratio)
        return out

    def jumps(self, threshold: float = 0.0, max_count: int = 10000) -> List[JumpSpec]:
        """Jumps of size >= threshold, ordered by location."""
        if self.kind == ProfileKind.PIECEWISE_JUMP:
            found = []
            for i, location in enumerate(self._breaks):
                left = self._pieces[i]._raw(np.array([[location]]))[0]
                right = self._pieces[i + 1]._raw(np.array([[location]]))[0]
                spec = JumpSpec(location, left, right)
                if spec.size >= threshold and spec.size > 0.0:
                    found.append(spec)
            return found

        if self.kind == ProfileKind.ACCUMULATING_JUMPS:
            if threshold <= 0.0:
                raise ParameterError("accumulating profiles have countably many jumps; pass a positive threshold")
            found = []
            k = 1
            while k <= max_count:
                size = self.params["jump"] * self.params["ratio"] ** (k - 1)
                if size < threshold:
                    break
                location = float(self._breakpoint(k))
                right = float(self._accumulating(np.array([location]))[0])
                found.append(JumpSpec(location, right - size, right))
                k += 1
            found.sort(key=lambda j: j.location)
            return found

        return []

    def tail_variation(self, threshold: float) -> float:
        """Total jump size left over after jumps(threshold)."""
        if self.kind != ProfileKind.ACCUMULATING_JUMPS:
            return 0.0
        count = len(self.jumps(threshold))
        return self.params["jump"] * self.params["ratio"] ** count / (1.0 - self.params["ratio"])

    def __repr__(self):
        return "ProfileFunction(" + self.kind.pretty() + ": " + self.name + ", M=" + str(self.bound) + ")"

##
## factories
##

def closed_form(name: str, base_dim: int = 1, bound: float = None, **params) -> ProfileFunction:
    if name not in CLOSED_FORMS:
        raise ParameterError("unknown closed form '" + name + "'; known: " + ", ".join(sorted(CLOSED_FORMS)))

    evaluator, bound_rule, dims = CLOSED_FORMS[name]
    if dims is not None and dims != base_dim:
        raise UnsupportedRepresentationError("closed form '" + name + "' is defined for base_dim " + str(dims) + " only")

    params = {k: float(v) for k, v in params.items()}
    if bound is None:
        bound = bound_rule(base_dim, **params)

    return ProfileFunction(ProfileKind.CLOSED_FORM, base_dim, name, bound, params)

def zero_profile(base_dim: int = 1) -> ProfileFunction:
    return closed_form("constant", base_dim, c=0.0)

def piecewise_jump(breaks: List[float], pieces: List[ProfileFunction], bound: float = None) -> ProfileFunction:
    breaks = np.asarray(breaks, dtype=np.float64)

    if breaks.ndim != 1 or breaks.size == 0:
        raise ParameterError("piecewise_jump needs at least one breakpoint")
    if np.any(breaks <= 0.0) or np.any(breaks >= 1.0):
        raise ParameterError("breakpoints must lie in the open unit interval: " + str(breaks.tolist()))
    if np.any(np.diff(breaks) <= 0.0):
        raise ParameterError("breakpoints must be strictly increasing: " + str(breaks.tolist()))
    if len(pieces) != breaks.size + 1:
        raise ParameterError("need " + str(breaks.size + 1) + " pieces for " + str(breaks.size) + " breakpoints")
    for piece in pieces:
        if piece.base_dim != 1 or piece.kind != ProfileKind.CLOSED_FORM:
            raise UnsupportedRepresentationError("piecewise_jump pieces must be 1-D closed forms")

    if bound is None:
        bound = max(piece.bound for piece in pieces)

    return ProfileFunction(ProfileKind.PIECEWISE_JUMP, 1, "piecewise", bound, breaks=breaks, pieces=pieces)

def step(breaks: List[float], values: List[float]) -> ProfileFunction:
    pieces = [closed_form("constant", 1, c=v) for v in values]
    return piecewise_jump(breaks, pieces)

def sampled(values, base_dim: int = 1, bound: float = None) -> ProfileFunction:
    values = np.asarray(values, dtype=np.float64)

    if values.ndim != base_dim:
        raise ParameterError("sampled values must be a " + str(base_dim) + "-D array, got shape " + str(values.shape))
    if min(values.shape) < 2:
        raise ParameterError("sampled profiles need at least 2 knots per axis")

    if bound is None:
        finite = values[np.isfinite(values)]
        bound = float(np.max(np.abs(finite))) if finite.size > 0 else 0.0

    return ProfileFunction(ProfileKind.SAMPLED, base_dim, "sampled", bound, values=values)

def accumulating_jumps(limit: float = 0.5, offset: float = 0.125, jump: float = 0.5, ratio: float = 0.5) -> ProfileFunction:
    if not (0.0 < ratio < 1.0):
        raise ParameterError("ratio must be in (0,1), got " + str(ratio))
    if offset <= 0.0 or jump <= 0.0:
        raise ParameterError("offset and jump must be positive")
    if not (0.0 < limit and limit + offset < 1.0):
        raise ParameterError("jump locations must stay inside (0,1)")

    params = {"limit": float(limit), "offset": float(offset), "jump": float(jump), "ratio": float(ratio)}
    return ProfileFunction(ProfileKind.ACCUMULATING_JUMPS, 1, "accumulating", jump / (1.0 - ratio), params)

def load_sampled_csv(path: str) -> ProfileFunction:
    xs = []
    fs = []
    with open(path, newline="") as handle:
        for row in csv.reader(handle):
            if len(row) == 0 or row[0].lstrip().startswith("#"):
                continue
            try:
                x, f = float(row[0]), float(row[1])
            except (ValueError, IndexError):
                # header row
                if len(xs) == 0:
                    continue
                raise InvalidDataError("malformed row in " + path + ": " + str(row))
            xs.append(x)
            fs.append(f)

    xs = np.asarray(xs)
    if xs.size < 2:
        raise InvalidDataError(path + " holds fewer than 2 samples")
    if abs(xs[0]) > 1e-12 or abs(xs[-1] - 1.0) > 1e-12 or np.max(np.abs(np.diff(xs) - 1.0 / (xs.size - 1))) > 1e-9:
        raise InvalidDataError(path + " must sample a uniform grid spanning [0,1]")

    return sampled(fs)

def profile_from_config(config: Dict[str, object]) -> ProfileFunction:
    """Build a profile from the key-value config used by the CLI."""
    name = str(config.get("profile", "constant"))

    if name == "step":
        if "breaks" not in config or "values" not in config:
            raise ConfigError("profile 'step' needs 'breaks' and 'values'")
        return step(list(config["breaks"]), list(config["values"]))

    if name == "sampled":
        if "csv" not in config:
            raise ConfigError("profile 'sampled' needs 'csv'")
        return load_sampled_csv(str(config["csv"]))

    if name == "accumulating":
        keys = ("limit", "offset", "jump", "ratio")
        return accumulating_jumps(**{k: float(config[k]) for k in keys if k in config})

    params = dict(config.get("params", dict()))
    base_dim = int(config.get("base_dim", 1))
    return closed_form(name, base_dim, **params)

##
## operations
##

def evaluate(f: ProfileFunction, x) -> float:
    return f.evaluate(x)

def one_sided_limits(f: ProfileFunction, x0: float) -> Tuple[float, float]:
    if f.base_dim != 1:
        raise UnsupportedRepresentationError("one-sided limits are defined for base_dim 1 profiles only")
    if not (0.0 < x0 < 1.0):
        raise DomainError("x0 = " + str(x0) + " is not in (0,1)")

    value = f.evaluate(x0)

    if f.kind == ProfileKind.SAMPLED:
        return (value, value)

    if f.kind == ProfileKind.PIECEWISE_JUMP:
        hits = np.nonzero(f._breaks == x0)[0]
        if hits.size > 0:
            i = int(hits[0])
            left = float(f._pieces[i]._raw(np.array([[x0]]))[0])
            return (left, value)
        return (value, value)

    if f.kind == ProfileKind.ACCUMULATING_JUMPS:
        if x0 > f.params["limit"]:
            k = int(f._first_index(np.array([x0]))[0])
            if f._breakpoint(k) == x0:
                size = f.params["jump"] * f.params["ratio"] ** (k - 1)
                return (value - size, value)
        return (value, value)

    left = _window_limit(f, x0, -1.0)
    right = _window_limit(f, x0, 1.0)

    scale = 1.0 + abs(value)
    if abs(left - value) <= LIMIT_AGREEMENT * scale:
        left = value
    if abs(right - value) <= LIMIT_AGREEMENT * scale:
        right = value
    return (left, right)

def _window_limit(f: ProfileFunction, x0: float, side: float) -> float:
    windows = [w for w in LIMIT_WINDOWS if 0.0 <= x0 + side * w <= 1.0]
    if len(windows) < 2:
        return f.evaluate(x0)

    samples = f._raw(np.array([[x0 + side * w] for w in windows]))[:]
    # Richardson step for windows shrinking by 10: cancels the first order term
    extrapolated = (10.0 * samples[1:] - samples[:-1]) / 9.0

    for i in range(1, extrapolated.size):
        if abs(extrapolated[i] - extrapolated[i - 1]) < LIMIT_AGREEMENT:
            return float(extrapolated[i])

    logger.warning("one-sided limit at %s (side %+d) did not settle; returning the smallest window estimate", x0, side)
    return float(extrapolated[-1])

def admissibility_report(f: ProfileFunction) -> AdmissibilityReport:
    if f.kind == ProfileKind.SAMPLED and not np.all(np.isfinite(f._values)):
        raise InvalidDataError("sampled profile holds non-finite values")

    points = _dense_points(f)
    if f.kind == ProfileKind.PIECEWISE_JUMP:
        # both sides of every breakpoint
        extra = [one_sided_limits(f, b) for b in f._breaks]
        extra_values = np.array([v for pair in extra for v in pair])
    else:
        extra_values = np.empty((0,))

    values = np.concatenate((f._raw(points), extra_values))
    if not np.all(np.isfinite(values)):
        raise InvalidDataError("profile evaluates to non-finite values")

    sup = float(np.max(np.abs(values)))
    bounded = sup <= f.bound * (1.0 + BOUND_SLACK) + BOUND_SLACK

    if f.kind == ProfileKind.ACCUMULATING_JUMPS:
        jump_count = COUNTABLE
        max_jump = f.params["jump"]
    else:
        jumps = f.jumps()
        jump_count = len(jumps)
        max_jump = max([j.size for j in jumps], default=0.0)

    if not bounded:
        logger.warning("profile %s exceeds its declared bound %s (sampled sup %s)", f, f.bound, sup)

    return AdmissibilityReport(bounded, jump_count, max_jump, f.bound, sup)

def _dense_points(f: ProfileFunction) -> np.ndarray:
    per_axis = max(3, int(round(ADMISSIBILITY_SAMPLES ** (1.0 / f.base_dim))))
    axis = np.linspace(0.0, 1.0, per_axis)
    mesh = np.meshgrid(*([axis] * f.base_dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)
