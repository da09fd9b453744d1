from __future__ import annotations
from typing import List, Tuple, Dict
import numpy as np

from definitions import *

class SuiteStat:
    trials: int
    failures: int
    min_slack: np.float64

    def __init__(self):
        self.trials = 0
        self.failures = 0
        self.min_slack = np.inf

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def __repr__(self):
        return "SuiteStat(trials=" + str(self.trials) + ", failures=" + str(self.failures) + ", min_slack=" + str(self.min_slack) + ")"

class SuiteTracker:
    """Per-suite trial counts, failures and the smallest slack seen."""

    _stats: Dict[str, SuiteStat]

    def __init__(self, suites: List[str] = None):
        self._stats = dict()
        for suite in suites if suites is not None else []:
            self._stats[suite] = SuiteStat()

    def log_check(self, suite: str, holds: bool, slack: float = np.inf):
        stats = self._stats.get(suite)
        if stats is None:
            stats = SuiteStat()
            self._stats[suite] = stats

        stats.trials += 1
        if not holds:
            stats.failures += 1
        stats.min_slack = min(stats.min_slack, float(slack))

    def log_report(self, suite: str, report):
        self.log_check(suite, report.holds, report.slack)

    def get_stat(self, suite: str) -> SuiteStat:
        return self._stats[suite]

    def suites(self) -> List[str]:
        return list(self._stats.keys())

    def failing_suites(self) -> List[str]:
        return [suite for suite, stat in self._stats.items() if not stat.passed]

    @property
    def all_passed(self) -> bool:
        return len(self.failing_suites()) == 0

    def summary_rows(self) -> List[List[object]]:
        return [[suite, stat.trials, stat.failures, repr(float(stat.min_slack))] for suite, stat in self._stats.items()]

SUMMARY_COLUMNS = ["suite", "trials", "failures", "min_slack"]
