import math

import numpy as np
import pytest

from definitions import *
from director import *
from stat_tracker import SuiteTracker


class TestSuiteTracker:

    def test_counts_and_slack(self):
        tracker = SuiteTracker(["shift"])
        tracker.log_check("shift", True, 0.5)
        tracker.log_check("shift", False, -0.1)
        stat = tracker.get_stat("shift")
        assert stat.trials == 2
        assert stat.failures == 1
        assert stat.min_slack == pytest.approx(-0.1)
        assert tracker.failing_suites() == ["shift"]
        assert not tracker.all_passed

    def test_new_suites_are_added_on_first_check(self):
        tracker = SuiteTracker()
        tracker.log_check("half", True, 1.0)
        assert tracker.suites() == ["half"]
        assert tracker.all_passed

    def test_summary_rows(self):
        tracker = SuiteTracker()
        tracker.log_check("interior", True, 0.25)
        assert tracker.summary_rows() == [["interior", 1, 0, "0.25"]]


class TestDirector:

    def test_runs_checks_in_order(self):
        seen = []
        director = Director()
        director.register(RunEvent.CHECK, lambda outcome: seen.append(outcome.name))
        director.register(RunEvent.SUITE_DONE, lambda suite: seen.append("done " + suite))
        director.setup([
            ("first", lambda: [CheckOutcome("first", "a", True, 1.0)]),
            ("second", lambda: [CheckOutcome("second", "b", True), CheckOutcome("second", "c", False, -1.0)]),
        ])
        assert director.status == RunStatus.INITIALIZED

        assert not director.run()
        assert director.status == RunStatus.ENDED
        assert seen == ["a", "done first", "b", "c", "done second"]
        assert [o.name for o in director.failures()] == ["c"]
        assert director.tracker.failing_suites() == ["second"]

    def test_errors_become_failed_outcomes(self):
        def broken():
            raise SolverError("did not converge")

        director = Director()
        director.setup([("spectrum", broken)])
        assert not director.run()
        assert "SolverError" in director.failures()[0].detail

    def test_run_needs_setup(self):
        with pytest.raises(PreconditionError):
            Director().run()

    def test_outcome_row(self):
        outcome = CheckOutcome("topology", "at_least_three", True, 2.0, "5")
        assert outcome.as_list() == ["topology", "at_least_three", "true", "2.0", "5"]
        assert len(OUTCOME_COLUMNS) == len(outcome.as_list())


class TestAcceptanceScale:

    def test_quick_is_smaller(self):
        quick = AcceptanceScale(True)
        full = AcceptanceScale(False)
        assert quick.sweep_trials < full.sweep_trials
        assert full.rough_resolutions == [256, 512]
        assert full.topology_resolutions == [512, 1024]

    def test_check_names(self):
        names = [suite for suite, _ in acceptance_checks(quick=True)]
        assert names == ["inequalities", "constants", "spiral", "dilatation", "spectrum",
            "mesh_independence", "condition2", "c_epsilon", "topology"]

    def test_exact_constants_pass(self):
        assert all(o.holds for o in check_exact_constants())

    def test_dilatation_passes(self):
        assert all(o.holds for o in check_dilatation(0))

    def test_oracle_for_the_euclidean_triple(self):
        triple = embedding_spectrum.NormTriple(np.eye(2), np.eye(2), np.eye(2))
        assert dense_angle_oracle(triple, 0.25, 1000) == pytest.approx(0.75)
