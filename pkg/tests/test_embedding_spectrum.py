import math

import numpy as np
import pytest

from definitions import *
import domain_builder as db
import embedding_spectrum as es
import inequalities as ineq
from director import dense_angle_oracle

PI2 = math.pi ** 2


def discrete_square_eigenvalues(n: int, k: int) -> np.ndarray:
    """Cell-centered Neumann differences on an n x n grid of the unit square."""
    h = 1.0 / n
    s = np.sin(math.pi * np.arange(n) / (2.0 * n)) ** 2
    return np.sort((4.0 / (h * h) * (s[:, None] + s[None, :])).ravel())[:k]


@pytest.fixture
def two_boxes():
    union = db.UnionDomain([db.BoxDomain([0.0, 0.0], [0.25, 1.0]), db.BoxDomain([0.5, 0.0], [1.0, 1.0])])
    return db.rasterize(union, 16)


class TestAssembly:

    def test_constants_are_in_the_kernel(self, square_mask):
        forms = es.assemble(square_mask)
        assert np.allclose(forms.stiffness @ np.ones(forms.size), 0.0)
        assert forms.face_count == 2 * 16 * 15

    def test_mass_is_the_cell_volume(self, square_mask):
        forms = es.assemble(square_mask)
        assert np.allclose(forms.mass.diagonal(), 1.0 / 256.0)

    def test_disconnected_mask(self, two_boxes):
        with pytest.raises(TopologyError) as info:
            es.assemble(two_boxes)
        assert info.value.component_sizes == [128, 64]


class TestLowestEigenvalues:

    def test_unit_interval(self):
        mask = db.rasterize(db.unit_cube(1), 200)
        report = es.lowest_eigenvalues(es.assemble(mask), 3)
        assert report.method == "dense"
        assert abs(report.eigenvalues[0]) < 1e-6
        assert report.eigenvalues[1] == pytest.approx(PI2, rel=0.01)
        assert report.eigenvalues[2] == pytest.approx(4.0 * PI2, rel=0.01)

    def test_dense_square_matches_the_discrete_formula(self, square_mask):
        report = es.lowest_eigenvalues(es.assemble(square_mask), 6)
        assert np.allclose(report.eigenvalues, discrete_square_eigenvalues(16, 6), atol=1e-8)
        assert report.singular_values[0] == pytest.approx(1.0)

    def test_iterative_square(self):
        mask = db.rasterize(db.unit_cube(2), 48)
        report = es.lowest_eigenvalues(es.assemble(mask), 4, seed=0)
        assert report.method == "lobpcg"
        expected = discrete_square_eigenvalues(48, 4)
        assert abs(report.eigenvalues[0]) < 1e-5
        assert np.allclose(report.eigenvalues[1:], expected[1:], rtol=1e-5)
        assert report.eigenvalues[1] == pytest.approx(PI2, rel=0.01)
        assert report.eigenvalues[3] == pytest.approx(2.0 * PI2, rel=0.015)
        assert np.all(report.residuals <= 1e-6 * (1.0 + np.abs(report.eigenvalues)))

    def test_k_range(self, square_mask):
        forms = es.assemble(square_mask)
        with pytest.raises(PreconditionError):
            es.lowest_eigenvalues(forms, 1)
        with pytest.raises(PreconditionError):
            es.lowest_eigenvalues(forms, 1000)


class TestComponentPolicies:

    def test_error(self, two_boxes):
        with pytest.raises(TopologyError):
            es.mask_spectrum(two_boxes, 3)

    def test_largest(self, two_boxes):
        report = es.mask_spectrum(two_boxes, 3, policy=es.ComponentPolicy.LARGEST)
        assert report.discarded_cells == 64
        assert report.component_sizes == [128, 64]

    def test_merge_repeats_zero(self, two_boxes):
        report = es.mask_spectrum(two_boxes, 3, policy=es.ComponentPolicy.MERGE)
        assert report.merged
        assert np.allclose(report.eigenvalues[:2], 0.0, atol=1e-8)
        assert report.eigenvalues[2] > 1.0


class TestCondition2:

    def test_step_domain(self, step_domain, step_mask):
        a, b = ineq.interpolation_constants(0.1)
        margin = es.condition2_check(step_domain, step_mask, 0.1, a, b, 20, seed=0)
        assert margin.trials == 20
        assert margin.passed
        assert margin.reports[0].lhs == pytest.approx(1.0)

    def test_both_gradient_rules_pass(self, step_domain, step_mask):
        a, b = ineq.interpolation_constants(0.1)
        for rule in (GradientRule.DIFFERENCE, GradientRule.EXACT):
            margin = es.condition2_check(step_domain, step_mask, 0.1, a, b, 20, seed=1, gradients=rule)
            assert margin.passed

    def test_empty_inner_mask(self, step_domain):
        coarse = db.rasterize(step_domain, 2)
        with pytest.raises(DegenerateDomainError):
            es.condition2_check(step_domain, coarse, 0.3, 0.6, 1.8, 5)


class TestCEpsilon:

    def test_euclidean_triple(self):
        triple = es.NormTriple(np.eye(3), np.eye(3), np.eye(3))
        table = es.find_c_epsilon(triple, [0.1, 0.5, 1.0, 2.0], starts=200)
        assert [c for _, c in table] == pytest.approx([0.9, 0.5, 0.0, 0.0], abs=1e-12)

    def test_diagonal_triple_matches_the_oracle(self):
        triple = es.NormTriple(np.diag([4.0, 1.0]), np.eye(2), np.diag([1.0, 0.25]))
        for eps, c in es.find_c_epsilon(triple, [0.1, 0.5, 1.0], starts=200):
            assert c == pytest.approx(dense_angle_oracle(triple, eps, 100000), abs=1e-4)

    def test_table_is_nonincreasing(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((4, 4))
        n3 = a @ a.T + np.eye(4)
        n2 = n3 + np.eye(4)
        n1 = n2 + np.diag([5.0, 0.0, 1.0, 0.0])
        table = es.find_c_epsilon(es.NormTriple(n1, n2, n3), [0.05, 0.2, 0.8], starts=200)
        values = [c for _, c in table]
        assert values[0] >= values[1] >= values[2]

    def test_nonpositive_epsilon(self):
        triple = es.NormTriple(np.eye(2), np.eye(2), np.eye(2))
        with pytest.raises(ParameterError):
            es.find_c_epsilon(triple, [0.0])

    def test_triple_validation(self):
        with pytest.raises(ParameterError):
            es.NormTriple([[1.0, 1.0], [0.0, 1.0]], np.eye(2), np.eye(2))
        with pytest.raises(ParameterError):
            es.NormTriple(np.eye(2), 2.0 * np.eye(2), np.eye(2))
        with pytest.raises(ParameterError):
            es.NormTriple(np.eye(2), np.eye(2), np.diag([1.0, 0.0]))


class TestDossier:

    def test_unit_square(self):
        dossier = es.compactness_dossier(db.unit_cube(2), [16, 32], k=4, trials=10)
        assert dossier.max_drift < 0.05
        assert dossier.condition2 is not None and dossier.condition2.passed
        assert dossier.approximant_containment
        assert "proxies only" in dossier.verdict
        assert dossier.as_dict()["resolutions"] == "16 32"

    def test_needs_two_resolutions(self):
        with pytest.raises(ParameterError):
            es.compactness_dossier(db.unit_cube(2), [32])

    def test_disconnected_domain_merges_components(self):
        boxes = db.UnionDomain([db.BoxDomain([0.0, 0.0], [0.25, 1.0]), db.BoxDomain([0.5, 0.0], [1.0, 1.0])], "two_boxes")
        dossier = es.compactness_dossier(boxes, [8, 16], k=4, trials=5)
        assert dossier.policy == es.ComponentPolicy.MERGE
        summary = dossier.as_dict()
        assert summary["component_policy"] == "Merge"
        assert summary["components"] == "2 2"
        assert summary["merged"] is True
        assert np.allclose(dossier.finest().eigenvalues[:2], 0.0, atol=1e-8)
        assert "merged over 2 components" in dossier.verdict
        assert np.all(np.isfinite(dossier.drift))

    def test_largest_policy_reports_discarded_cells(self):
        boxes = db.UnionDomain([db.BoxDomain([0.0, 0.0], [0.25, 1.0]), db.BoxDomain([0.5, 0.0], [1.0, 1.0])], "two_boxes")
        dossier = es.compactness_dossier(boxes, [8, 16], k=4, trials=5, policy=es.ComponentPolicy.LARGEST)
        summary = dossier.as_dict()
        assert summary["component_policy"] == "Largest"
        assert summary["discarded_cells"] == "16 64"
        assert summary["merged"] is False
