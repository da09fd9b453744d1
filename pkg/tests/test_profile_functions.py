import math

import numpy as np
import pytest

from definitions import *
import profile_functions as pf


class TestClosedForms:

    def test_linear_value_and_bound(self):
        f = pf.closed_form("linear", intercept=0.1, slope=2.0)
        assert pf.evaluate(f, 0.25) == pytest.approx(0.6)
        assert f.bound == pytest.approx(2.1)

    def test_xsin_is_zero_at_origin(self):
        f = pf.closed_form("xsin", x0=0.0, x1=1.0 / math.pi, scale=0.25)
        assert pf.evaluate(f, 0.0) == 0.0
        t = 0.5 / math.pi
        assert pf.evaluate(f, 0.5) == pytest.approx(0.25 * t * math.sin(1.0 / t))

    def test_wave_in_two_dimensions(self):
        f = pf.closed_form("wave", 2, amplitude=0.25, frequency=1.0)
        assert f.evaluate([0.25, 0.25]) == pytest.approx(0.25)

    def test_one_dimensional_forms_reject_other_dims(self):
        with pytest.raises(UnsupportedRepresentationError):
            pf.closed_form("xsin", 2)

    def test_unknown_name(self):
        with pytest.raises(ParameterError):
            pf.closed_form("not_a_profile")

    def test_points_outside_the_base_cube(self):
        f = pf.zero_profile()
        with pytest.raises(DomainError):
            pf.evaluate(f, 1.5)


class TestStepProfiles:

    @pytest.fixture
    def step(self):
        return pf.step([0.5], [0.0, 0.5])

    def test_breakpoint_takes_the_right_limit(self, step):
        assert pf.evaluate(step, 0.5) == 0.5
        assert pf.evaluate(step, 0.49) == 0.0

    def test_one_sided_limits_at_the_jump(self, step):
        assert pf.one_sided_limits(step, 0.5) == (0.0, 0.5)
        assert pf.one_sided_limits(step, 0.25) == (0.0, 0.0)

    def test_admissibility(self, step):
        report = pf.admissibility_report(step)
        assert report.bounded
        assert report.jump_count == 1
        assert report.max_jump == pytest.approx(0.5)

    def test_invalid_breaks(self):
        with pytest.raises(ParameterError):
            pf.step([0.6, 0.4], [0.0, 1.0, 0.0])
        with pytest.raises(ParameterError):
            pf.step([1.0], [0.0, 1.0])
        with pytest.raises(ParameterError):
            pf.step([0.5], [0.0])


class TestLimits:

    def test_continuous_closed_form_limits_agree(self):
        f = pf.closed_form("linear", slope=1.0)
        left, right = pf.one_sided_limits(f, 0.3)
        assert left == pytest.approx(0.3, abs=1e-7)
        assert right == pytest.approx(0.3, abs=1e-7)

    def test_limits_need_a_one_dimensional_base(self):
        f = pf.closed_form("wave", 2)
        with pytest.raises(UnsupportedRepresentationError):
            pf.one_sided_limits(f, 0.5)

    @pytest.mark.parametrize("profile", [
        pf.step([0.25, 0.6], [0.0, 0.5, 0.25]),
        pf.closed_form("xsin", x0=0.05, x1=1.0 / math.pi),
        pf.closed_form("linear", intercept=0.2, slope=-0.1),
    ])
    def test_evaluate_matches_the_limits_away_from_breaks(self, profile):
        breaks = [0.25, 0.6] if profile.kind == ProfileKind.PIECEWISE_JUMP else []
        for x in np.linspace(0.01, 0.99, 99):
            if any(abs(x - b) < 1e-3 for b in breaks):
                continue
            left, right = pf.one_sided_limits(profile, float(x))
            value = pf.evaluate(profile, float(x))
            assert left == pytest.approx(value, abs=1e-6)
            assert right == pytest.approx(value, abs=1e-6)

    def test_evaluate_is_the_right_limit_at_breaks(self):
        profile = pf.step([0.25, 0.6], [0.0, 0.5, 0.25])
        for b, before in [(0.25, 0.0), (0.6, 0.5)]:
            left, right = pf.one_sided_limits(profile, b)
            assert left == before
            assert pf.evaluate(profile, b) == right

    def test_limits_at_the_cube_edge(self):
        with pytest.raises(DomainError):
            pf.one_sided_limits(pf.zero_profile(), 0.0)


class TestSampledProfiles:

    def test_linear_interpolation(self):
        f = pf.sampled([0.0, 1.0, 0.0])
        assert pf.evaluate(f, 0.25) == pytest.approx(0.5)
        assert f.bound == pytest.approx(1.0)

    def test_non_finite_values_are_rejected(self):
        f = pf.sampled([0.0, np.nan, 0.0], bound=1.0)
        with pytest.raises(InvalidDataError):
            pf.admissibility_report(f)

    def test_csv_loader(self, tmp_path):
        path = tmp_path / "profile.csv"
        path.write_text("# made by hand\nx,f\n0.0,0.0\n0.5,0.2\n1.0,0.0\n")
        f = pf.load_sampled_csv(str(path))
        assert pf.evaluate(f, 0.5) == pytest.approx(0.2)

    def test_csv_loader_needs_a_uniform_grid(self, tmp_path):
        path = tmp_path / "profile.csv"
        path.write_text("x,f\n0.0,0.0\n0.2,0.2\n1.0,0.0\n")
        with pytest.raises(InvalidDataError):
            pf.load_sampled_csv(str(path))


class TestAccumulatingJumps:

    @pytest.fixture
    def profile(self):
        return pf.accumulating_jumps(limit=0.5, offset=0.125, jump=0.5, ratio=0.5)

    def test_bound_is_the_geometric_sum(self, profile):
        assert profile.bound == pytest.approx(1.0)

    def test_jumps_above_a_threshold(self, profile):
        jumps = profile.jumps(0.1)
        assert sorted(j.size for j in jumps) == pytest.approx([0.125, 0.25, 0.5])
        assert all(j.location > 0.5 for j in jumps)

    def test_tail_variation(self, profile):
        assert profile.tail_variation(0.1) == pytest.approx(0.125)

    def test_threshold_is_required(self, profile):
        with pytest.raises(ParameterError):
            profile.jumps(0.0)

    def test_admissibility_reports_countably_many_jumps(self, profile):
        report = pf.admissibility_report(profile)
        assert report.jump_count == COUNTABLE
        assert report.max_jump == pytest.approx(0.5)
        assert report.bounded


class TestConfig:

    def test_step_from_config(self):
        f = pf.profile_from_config({"profile": "step", "breaks": [0.5], "values": [0.0, 0.5]})
        assert pf.evaluate(f, 0.75) == 0.5

    def test_step_needs_values(self):
        with pytest.raises(ConfigError):
            pf.profile_from_config({"profile": "step", "breaks": [0.5]})

    def test_closed_form_params(self):
        f = pf.profile_from_config({"profile": "constant", "params": {"c": 0.3}})
        assert pf.evaluate(f, 0.1) == pytest.approx(0.3)
