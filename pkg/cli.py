from __future__ import annotations
from dataclasses import dataclass
from typing import List, Dict, Tuple, Optional
import argparse
import logging
import os
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from definitions import *
from stat_tracker import SuiteTracker, SUMMARY_COLUMNS
from director import Director, RunEvent, OUTCOME_COLUMNS, acceptance_checks
import domain_builder
import embedding_spectrum
import inequalities
import mappings
import profile_functions
import report_io

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2

SUBCOMMANDS = ["domain", "inequality", "map", "spectrum", "verify"]

CONFIG_KEYS = {
    "domain", "params", "profile", "base_dim", "breaks", "values", "csv", "limit", "offset", "jump", "ratio",
    "cells", "h", "mode", "k", "tol", "trials", "seed", "resolutions", "suite", "map", "samples", "components",
}

DEFAULT_DOMAIN = "unit_cube"

FILE_TYPES = {"cells": int, "h": float, "mode": str, "k": int, "tol": float, "trials": int, "suite": str, "samples": int, "components": str}

USAGE_ERRORS = (ConfigError, ParameterError, PreconditionError, UnsupportedRepresentationError, DomainError, InvalidDataError)

@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    domain: Optional[str] = None
    domain_params: Tuple[Tuple[str, object], ...] = ()
    profile: Tuple[Tuple[str, object], ...] = ()
    map_name: str = "spiral"
    map_params: Tuple[Tuple[str, object], ...] = ()
    cells: int = 64
    h: float = 0.1
    mode: str = "vertical_only"
    resolutions: Tuple[int, ...] = (64, 128)
    k: int = 6
    tol: float = embedding_spectrum.DEFAULT_TOL
    trials: int = 200
    hs: Tuple[float, ...] = tuple(inequalities.SWEEP_HS)
    suite: str = "all"
    samples: int = mappings.DILATATION_SAMPLES
    focus: Optional[Tuple[float, ...]] = None
    qi_radius: Optional[float] = None
    per_sample_csv: bool = False
    plot: bool = False
    quick: bool = False
    components: str = "merge"
    seed: int = 0
    out: str = "out"

def parse_value(text: str):
    text = text.strip()
    if "," in text:
        return [parse_value(t) for t in text.split(",") if t.strip() != ""]
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text

def parse_params(items: List[str]) -> Tuple[Tuple[str, object], ...]:
    params = []
    for item in items or []:
        if "=" not in item:
            raise ConfigError("parameter '" + item + "' is not key=value")
        key, value = item.split("=", 1)
        params.append((key.strip(), parse_value(value)))
    return tuple(params)

def load_config_file(path: str) -> Dict[str, object]:
    try:
        with open(path, "rb") as handle:
            data = tomllib.load(handle)
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise ConfigError("cannot read config " + path + ": " + str(e))

    unknown = sorted(set(data) - CONFIG_KEYS)
    if len(unknown) > 0:
        raise ConfigError("unknown config keys in " + path + ": " + ", ".join(unknown))
    return data

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rough-domains", description="Rough-domain construction, inequality checks, map analysis and embedding spectra.")
    p.add_argument("--verbose", action="store_true", help="log at DEBUG")
    sub = p.add_subparsers(dest="subcommand", required=True)

    def common(q: argparse.ArgumentParser):
        q.add_argument("--seed", type=int, default=0)
        q.add_argument("--out", default="out")
        q.add_argument("--config", help="key-value TOML file")

    def domain_args(q: argparse.ArgumentParser):
        q.add_argument("--name", default=None, help="catalog domain")
        q.add_argument("--param", action="append", default=[], help="catalog parameter key=value")

    q = sub.add_parser("domain", help="build and rasterize a domain")
    common(q)
    domain_args(q)
    q.add_argument("--cells", type=int, default=None)
    q.add_argument("--h", type=float, default=None)
    q.add_argument("--mode", default=None)
    q.add_argument("--plot", action="store_true")

    q = sub.add_parser("inequality", help="run the seeded inequality suites")
    common(q)
    domain_args(q)
    q.add_argument("--suite", default=None)
    q.add_argument("--trials", type=int, default=None)
    q.add_argument("--hs", default=None, help="comma separated h values")
    q.add_argument("--cells", type=int, default=None)
    q.add_argument("--mode", default=None)

    q = sub.add_parser("map", help="analyze a map")
    common(q)
    domain_args(q)
    q.add_argument("--map", dest="map_name", default=None)
    q.add_argument("--map-param", action="append", default=[])
    q.add_argument("--samples", type=int, default=None)
    q.add_argument("--focus", default=None, help="x,y")
    q.add_argument("--qi-radius", type=float, default=None)
    q.add_argument("--trials", type=int, default=None)
    q.add_argument("--csv", dest="per_sample_csv", action="store_true")

    q = sub.add_parser("spectrum", help="lowest Neumann eigenvalues")
    common(q)
    domain_args(q)
    q.add_argument("--resolutions", default=None, help="comma separated cells per unit")
    q.add_argument("--k", type=int, default=None)
    q.add_argument("--tol", type=float, default=None)
    q.add_argument("--h", type=float, default=None)
    q.add_argument("--trials", type=int, default=None)
    q.add_argument("--components", choices=["merge", "largest", "error"], default=None, help="policy for disconnected masks")

    q = sub.add_parser("verify", help="run the acceptance suite")
    common(q)
    q.add_argument("--quick", action="store_true")

    return p

def _as_tuple(value) -> tuple:
    return tuple(value) if isinstance(value, (list, tuple)) else (value,)

def _coerce(key: str, value, cast):
    if cast is not str and isinstance(value, (str, bool, list, dict)):
        raise ConfigError("setting '" + key + "' needs a number, got " + repr(value))
    if cast is int and isinstance(value, float) and not value.is_integer():
        raise ConfigError("setting '" + key + "' needs an integer, got " + repr(value))
    try:
        return cast(value)
    except (TypeError, ValueError):
        raise ConfigError("setting '" + key + "' has a bad value " + repr(value))

def config_from_args(args: argparse.Namespace) -> RunConfig:
    file_values = load_config_file(args.config) if getattr(args, "config", None) else dict()
    values: Dict[str, object] = {"subcommand": args.subcommand, "seed": args.seed, "out": args.out}

    profile_keys = ("profile", "base_dim", "breaks", "values", "csv", "limit", "offset", "jump", "ratio")
    profile = tuple((k, file_values[k]) for k in profile_keys if k in file_values)
    if len(profile) > 0:
        if "params" in file_values:
            profile += (("params", tuple(dict(file_values["params"]).items())),)
        values["profile"] = profile
    if "domain" in file_values:
        values["domain"] = str(file_values["domain"])
    if "params" in file_values and len(profile) == 0:
        values["domain_params"] = tuple(dict(file_values["params"]).items())
    for key, cast in FILE_TYPES.items():
        if key in file_values:
            values[key] = _coerce(key, file_values[key], cast)
    if "seed" in file_values and args.seed == 0:
        values["seed"] = _coerce("seed", file_values["seed"], int)
    if "resolutions" in file_values:
        values["resolutions"] = tuple(_coerce("resolutions", r, int) for r in _as_tuple(file_values["resolutions"]))
    if "map" in file_values:
        values["map_name"] = str(file_values["map"])

    # flags override the file
    if getattr(args, "name", None) is not None:
        values["domain"] = args.name
        values["profile"] = ()
    if len(getattr(args, "param", [])) > 0:
        values["domain_params"] = parse_params(args.param)
    for key in ("cells", "h", "mode", "k", "tol", "trials", "suite", "samples", "qi_radius", "map_name", "components"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    if len(getattr(args, "map_param", [])) > 0:
        values["map_params"] = parse_params(args.map_param)
    if getattr(args, "hs", None) is not None:
        values["hs"] = tuple(_coerce("hs", v, float) for v in _as_tuple(parse_value(args.hs)))
    if getattr(args, "resolutions", None) is not None:
        values["resolutions"] = tuple(_coerce("resolutions", v, int) for v in _as_tuple(parse_value(args.resolutions)))
    if getattr(args, "focus", None) is not None:
        values["focus"] = tuple(_coerce("focus", v, float) for v in _as_tuple(parse_value(args.focus)))
    for key in ("plot", "quick", "per_sample_csv"):
        if getattr(args, key, False):
            values[key] = True

    return RunConfig(**values)

def build_domain(config: RunConfig) -> domain_builder.Domain:
    if len(config.profile) > 0:
        settings = dict(config.profile)
        if "params" in settings:
            settings["params"] = dict(settings["params"])
        profile = profile_functions.profile_from_config(settings)
        return domain_builder.ElementaryDomain(profile, name="config_" + profile.name)
    name = DEFAULT_DOMAIN if config.domain is None else config.domain
    return domain_builder.catalog(name, **dict(config.domain_params))

##
## subcommands
##

DOMAIN_FAILURE_COLUMNS = ["check", "samples", "inner_violations", "outer_violations", "detail"]

def run_domain(config: RunConfig) -> int:
    domain = build_domain(config)
    mask = domain_builder.rasterize(domain, config.cells)
    lo, hi = domain.bbox()

    stats: Dict[str, object] = {
        "domain": domain.name,
        "cells_per_unit": config.cells,
        "cell_count": mask.count,
        "mask_area": mask.area,
        "bbox_lo": " ".join(repr(float(v)) for v in lo),
        "bbox_hi": " ".join(repr(float(v)) for v in hi),
        "face_components": len(mask.face_components()[1]),
    }
    if mask.grid.dim == 2:
        stats["boundary_components"] = domain_builder.boundary_components(mask)
    if isinstance(domain, domain_builder.RectangleChain):
        stats["skipped_rectangles"] = " ".join(str(k) for k in domain.skipped) if len(domain.skipped) > 0 else "none"

    failures = []
    if isinstance(domain, domain_builder.ElementaryDomain):
        stats["exact_area"] = domain.exact_area()
        if domain.profile.base_dim == 1:
            try:
                approximant = domain_builder.lipschitz_approximant(domain, config.h, config.seed)
                stats["approximant_knots"] = approximant.knot_count
                stats["approximant_containment"] = approximant.containment_holds
                if not approximant.containment_holds:
                    failures.append(["approximant_containment", approximant.samples, approximant.inner_violations,
                        approximant.outer_violations, "h=" + repr(config.h)])
            except ApproximationError as e:
                stats["approximant"] = "failed: " + str(e)

    report_io.write_pgm(os.path.join(config.out, "mask.pgm"), mask)
    if config.plot and mask.grid.dim <= 2:
        report_io.write_svg(os.path.join(config.out, "mask.svg"), mask, domain.name)

    report_io.write_csv(os.path.join(config.out, "failures.csv"), DOMAIN_FAILURE_COLUMNS, failures, config.seed, domain=domain.name)
    text = report_io.text_report(stats, config.seed)
    report_io.write_text_report(os.path.join(config.out, "domain_stats.txt"), stats, config.seed)
    print(text, end="")
    return EXIT_CHECK_FAILED if len(failures) > 0 else EXIT_OK

def run_inequality(config: RunConfig) -> int:
    domain = None
    if config.domain is not None or len(config.profile) > 0 or len(config.domain_params) > 0:
        suites = inequalities.SUITES if config.suite == "all" else [config.suite]
        if not any(s in inequalities.DOMAIN_SUITES for s in suites):
            raise ConfigError("suite '" + config.suite + "' runs on intervals and takes no domain")
        domain = build_domain(config)
        # fibered suites need a shrink rule
        domain_builder.shrink(domain, 0.0)
    rows = inequalities.inequality_sweep(config.suite, config.trials, list(config.hs), config.seed, domain,
        config.cells, ShrinkMode.parse(config.mode))

    tracker = SuiteTracker()
    for row in rows:
        tracker.log_report(row.suite, row.report)

    report_io.write_csv(os.path.join(config.out, "inequality.csv"), inequalities.SWEEP_COLUMNS,
        [row.as_list() for row in rows], config.seed, suite=config.suite, trials=config.trials,
        domain=domain.name if domain is not None else "intervals")
    report_io.write_csv(os.path.join(config.out, "failures.csv"), inequalities.SWEEP_COLUMNS,
        [row.as_list() for row in rows if not row.report.holds], config.seed)
    report_io.write_csv(os.path.join(config.out, "summary.csv"), SUMMARY_COLUMNS, tracker.summary_rows(), config.seed)

    for suite_row in tracker.summary_rows():
        print(" ".join(str(v) for v in suite_row))
    return EXIT_OK if tracker.all_passed else EXIT_CHECK_FAILED

def run_map(config: RunConfig) -> int:
    smooth_map = mappings.map_from_name(config.map_name, **dict(config.map_params))

    if len(config.domain_params) > 0 or config.domain is not None or len(config.profile) > 0:
        domain = build_domain(config)
    elif smooth_map.domain_hint is not None:
        domain = smooth_map.domain_hint
    else:
        domain = domain_builder.BoxDomain([0.05] * smooth_map.dim, [1.0] * smooth_map.dim, "sample_box")

    rng = np.random.default_rng(config.seed)
    samples = mappings.dilatation_samples(domain, config.samples, rng)
    report = mappings.dilatation(smooth_map, samples, config.focus)

    values: Dict[str, object] = {"map": smooth_map.name, "domain": domain.name}
    values.update(report.as_dict())

    n = smooth_map.dim
    ordered = (report.geom_ratios <= report.frob_ratios * (1.0 + 1e-12)) & (report.frob_ratios <= n * report.geom_ratios * (1.0 + 1e-12))
    values["dilatation_ordering"] = bool(np.all(ordered))

    if smooth_map.jacobian_rule is not None:
        values["jacobian_agreement"] = mappings.jacobian_agreement(smooth_map, samples[:1000])

    if config.qi_radius is not None:
        qi = mappings.quasiisometry_constant(smooth_map, domain, config.qi_radius, config.trials, config.seed)
        values.update(qi.as_dict())

    if config.per_sample_csv:
        rows = []
        for i in range(report.sample_count):
            rows.append([repr(float(v)) for v in report.points[i]] + [repr(float(report.dets[i]))]
                + [repr(float(v)) for v in report.sigmas[i]] + [repr(float(report.frob_ratios[i]))])
        columns = ["x" + str(j + 1) for j in range(n)] + ["det"] + ["lambda" + str(j + 1) for j in range(n)] + ["frobenius_ratio"]
        report_io.write_csv(os.path.join(config.out, "map_samples.csv"), columns, rows, config.seed, map=smooth_map.name)

    report_io.write_text_report(os.path.join(config.out, "map_report.txt"), values, config.seed)
    print(report_io.text_report(values, config.seed), end="")
    return EXIT_OK if values["dilatation_ordering"] else EXIT_CHECK_FAILED

def run_spectrum(config: RunConfig) -> int:
    try:
        policy = embedding_spectrum.ComponentPolicy[config.components.strip().upper()]
    except KeyError:
        raise ConfigError("unknown component policy '" + config.components + "'; known: merge, largest, error")

    domain = build_domain(config)
    resolutions = sorted(config.resolutions)

    if len(resolutions) >= 2:
        dossier = embedding_spectrum.compactness_dossier(domain, resolutions, config.k, config.tol, config.seed, config.h,
            config.trials, policy)
        spectra = [dossier.spectra[r] for r in resolutions]
        values = dossier.as_dict()
    else:
        mask = domain_builder.rasterize(domain, resolutions[0])
        spectrum = embedding_spectrum.mask_spectrum(mask, config.k, config.tol, config.seed, policy)
        spectrum.resolution = resolutions[0]
        spectra = [spectrum]
        values = {"domain": domain.name, "resolutions": str(resolutions[0]), "component_policy": policy.pretty(),
            "components": len(spectrum.component_sizes), "merged": spectrum.merged,
            "sigma": " ".join(repr(float(s)) for s in spectrum.singular_values)}

    rows = []
    for spectrum in spectra:
        rows.extend(spectrum.rows())
    report_io.write_csv(os.path.join(config.out, "spectrum.csv"), embedding_spectrum.SPECTRUM_COLUMNS, rows, config.seed,
        domain=domain.name, tol=config.tol)
    report_io.write_text_report(os.path.join(config.out, "spectrum_verdict.txt"), values, config.seed)
    print(report_io.text_report(values, config.seed), end="")

    lambda1_ok = all(abs(float(s.eigenvalues[0])) <= s.solver_tolerance for s in spectra)
    return EXIT_OK if lambda1_ok else EXIT_CHECK_FAILED

def run_verify(config: RunConfig) -> int:
    director = Director()
    director.register(RunEvent.CHECK, lambda outcome: None if outcome.holds else logger.warning("check failed: %s", outcome))
    director.setup(acceptance_checks(config.quick, config.seed))
    passed = director.run()

    report_io.write_csv(os.path.join(config.out, "acceptance.csv"), OUTCOME_COLUMNS,
        [o.as_list() for o in director.outcomes], config.seed, quick=config.quick)
    report_io.write_csv(os.path.join(config.out, "failures.csv"), OUTCOME_COLUMNS,
        [o.as_list() for o in director.failures()], config.seed, quick=config.quick)
    report_io.write_csv(os.path.join(config.out, "summary.csv"), SUMMARY_COLUMNS, director.tracker.summary_rows(), config.seed)

    for row in director.tracker.summary_rows():
        print(" ".join(str(v) for v in row))
    return EXIT_OK if passed else EXIT_CHECK_FAILED

RUNNERS = {
    "domain": run_domain,
    "inequality": run_inequality,
    "map": run_map,
    "spectrum": run_spectrum,
    "verify": run_verify,
}

def run(config: RunConfig) -> int:
    if config.subcommand not in RUNNERS:
        raise ConfigError("unknown subcommand '" + config.subcommand + "'; known: " + ", ".join(SUBCOMMANDS))
    report_io.prepare_output_dir(config.out)
    return RUNNERS[config.subcommand](config)

def main(argv: List[str] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        config = config_from_args(args)
        return run(config)
    except USAGE_ERRORS as e:
        print("error: " + str(e), file=sys.stderr)
        return EXIT_USAGE
    except RoughDomainError as e:
        print("failed: " + type(e).__name__ + ": " + str(e), file=sys.stderr)
        return EXIT_CHECK_FAILED

if __name__ == "__main__":
    sys.exit(main())
