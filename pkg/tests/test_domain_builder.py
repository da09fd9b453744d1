import math

import numpy as np
import pytest

from definitions import *
import domain_builder as db
import mappings
import profile_functions as pf


class TestMembership:

    def test_step_domain(self, step_domain):
        assert db.contains(step_domain, [0.25, 0.5])
        assert not db.contains(step_domain, [0.75, 0.25])
        assert db.contains(step_domain, [0.75, 1.2])
        assert not db.contains(step_domain, [0.25, 1.2])

    def test_graph_is_excluded(self, step_domain):
        assert not db.contains(step_domain, [0.25, 0.0])
        assert not db.contains(step_domain, [0.25, 1.0])

    def test_dimension_mismatch(self, step_domain):
        with pytest.raises(DomainError):
            db.contains(step_domain, [0.5, 0.5, 0.5])

    def test_affine_image(self):
        domain = db.ElementaryDomain(pf.zero_profile(), db.diagonal_affine([2.0, 3.0], [1.0, 0.0]))
        assert db.contains(domain, [2.0, 1.5])
        assert not db.contains(domain, [0.5, 1.5])
        assert domain.exact_area() == pytest.approx(6.0)

    def test_singular_affine(self):
        with pytest.raises(ParameterError):
            db.AffineMap([[1.0, 2.0], [2.0, 4.0]])

    def test_polygon_edges_are_outside(self):
        triangle = db.spiral_triangle()
        assert db.contains(triangle, [0.9, 1.2])
        assert not db.contains(triangle, [0.5, 0.5])
        assert triangle.exact_area() == pytest.approx(0.5)

    def test_spiral_domain_holds_images_of_the_triangle(self):
        domain = db.spiral_domain()
        image = mappings.spiral_map()([0.5, 0.75])
        assert db.contains(domain, image)

    def test_union(self):
        union = db.UnionDomain([db.BoxDomain([0.0, 0.0], [1.0, 1.0]), db.BoxDomain([2.0, 0.0], [3.0, 1.0])])
        assert db.contains(union, [2.5, 0.5])
        assert not db.contains(union, [1.5, 0.5])

    def test_sin_component_domain(self):
        domain = db.sin_component_domain()
        assert db.contains(domain, [1.0 / (2.0 * math.pi), 1.0])
        assert db.contains(domain, [0.1, -1.0])
        # 0.1·sin(10) + 4 ≈ 3.9456
        assert not db.contains(domain, [0.1, 5.0])

    def test_closed_box_faces(self):
        box = db.BoxDomain([0.0, 0.0], [1.0, 1.0], closed_lo=[True, True], closed_hi=[True, False])
        assert db.contains(box, [0.0, 0.0])
        assert db.contains(box, [1.0, 0.5])
        assert not db.contains(box, [0.5, 1.0])

    def test_affine_invariance(self, step_domain, rng):
        affine = db.AffineMap([[2.0, 1.0], [0.0, 3.0]], [1.0, -1.0])
        image = db.ElementaryDomain(step_domain.profile, affine, name="step_image")
        lo, hi = step_domain.reference_box()
        q = rng.uniform(lo, hi, size=(20000, 2))
        assert np.array_equal(image.contains_many(affine.apply(q)), step_domain.contains_many(q))

    def test_affine_area(self, step_domain, rng):
        affine = db.AffineMap([[2.0, 1.0], [0.0, 3.0]], [1.0, -1.0])
        image = db.ElementaryDomain(step_domain.profile, affine, name="step_image")
        assert image.exact_area() == pytest.approx(6.0)
        area, error = db.monte_carlo_area(image, 200000, rng)
        assert abs(area - 6.0) < 5.0 * error + 1e-3


class TestShrink:

    def test_vertical_only(self, step_domain):
        inner = db.shrink(step_domain, 0.1)
        assert db.contains(step_domain, [0.25, 0.05])
        assert not db.contains(inner, [0.25, 0.05])
        assert db.contains(inner, [0.05, 0.5])
        assert inner.exact_area() == pytest.approx(0.8)

    def test_all_directions(self, step_domain):
        inner = db.shrink(step_domain, 0.1, ShrinkMode.ALL_DIRECTIONS)
        assert not db.contains(inner, [0.05, 0.5])
        assert inner.exact_area() == pytest.approx(0.64)

    def test_box(self):
        box = db.shrink(db.BoxDomain([0.0, 0.0], [1.0, 2.0]), 0.25)
        assert box.lo.tolist() == [0.0, 0.5]
        assert box.hi.tolist() == [1.0, 1.5]

    def test_union_shrinks_part_by_part(self):
        chain = db.rectangle_chain(1.0)
        inner = db.shrink(chain, 0.1)
        assert len(inner.parts) == len(chain.parts)

    def test_zero_h_is_identity(self, step_domain, rng):
        lo, hi = step_domain.reference_box()
        points = rng.uniform(lo, hi, size=(100000, 2))
        same = db.shrink(step_domain, 0.0)
        assert np.array_equal(same.contains_many(points), step_domain.contains_many(points))

    def test_monotone_in_h(self, step_domain, rng):
        lo, hi = step_domain.reference_box()
        points = rng.uniform(lo, hi, size=(50000, 2))
        previous = step_domain.contains_many(points)
        for h in [0.05, 0.1, 0.2, 0.3]:
            inside = db.shrink(step_domain, h).contains_many(points)
            assert not np.any(inside & ~previous)
            previous = inside

    def test_shrunk_mask_is_a_subset(self, step_domain, step_mask):
        inner = db.rasterize(db.shrink(step_domain, 0.1), 32, step_mask.grid)
        assert inner.subset_of(step_mask)
        assert inner.count < step_mask.count

    def test_vertical_only_area(self, step_domain, rng):
        inner = db.shrink(step_domain, 0.25)
        area, error = db.monte_carlo_area(inner, 200000, rng)
        assert inner.exact_area() == pytest.approx(0.5)
        assert abs(area - 0.5) < 5.0 * error + 1e-3

    def test_h_range(self, step_domain):
        with pytest.raises(ParameterError):
            db.shrink(step_domain, 0.4)

    def test_polygons_do_not_shrink(self):
        with pytest.raises(UnsupportedRepresentationError):
            db.shrink(db.spiral_triangle(), 0.1)


class TestLipschitzApproximant:

    def test_step_domain_containment(self, step_domain):
        approximant = db.lipschitz_approximant(step_domain, 0.1, seed=0, samples=20000)
        assert approximant.containment_holds
        assert approximant.knot_count > 0
        assert len(approximant.parts) == 1

    def test_large_jump_splits_the_chain(self):
        domain = db.step_domain([0.5], [0.0, 0.95])
        approximant = db.lipschitz_approximant(domain, 0.1, samples=20000)
        assert len(approximant.parts) == 2
        assert approximant.containment_holds

    def test_accumulating_jumps(self):
        approximant = db.lipschitz_approximant(db.accumulating_jump_domain(), 0.1, samples=20000)
        assert approximant.containment_holds

    def test_unbounded_oscillation_fails(self):
        domain = db.ElementaryDomain(pf.closed_form("sin_recip"), name="sin_recip")
        with pytest.raises(ApproximationError) as info:
            db.lipschitz_approximant(domain, 0.1, samples=1000)
        assert "worst_oscillation" in info.value.diagnostics

    def test_constant_profile_gives_the_square(self, unit_square):
        approximant = db.lipschitz_approximant(unit_square, 0.1, samples=20000)
        assert len(approximant.parts) == 1
        assert approximant.parts[0].exact_area() == pytest.approx(1.0)
        assert db.contains(approximant, [0.5, 0.01])
        assert not db.contains(approximant, [0.5, 0.0])
        assert approximant.containment_holds

    def test_xsin_knots_grow_as_h_shrinks(self):
        domain = db.xsin_domain()
        counts = []
        for h in [0.2, 0.1, 0.05]:
            approximant = db.lipschitz_approximant(domain, h, samples=20000)
            assert approximant.containment_holds
            counts.append(approximant.knot_count)
        assert counts[0] < counts[1] < counts[2]

    def test_needs_positive_h(self, step_domain):
        with pytest.raises(ParameterError):
            db.lipschitz_approximant(step_domain, 0.0)


class TestRasterize:

    def test_unit_square(self, square_mask):
        assert square_mask.count == 256
        assert square_mask.area == pytest.approx(1.0)

    def test_step_domain(self, step_mask):
        assert step_mask.cells.shape == (32, 64)
        assert step_mask.count == 1024
        assert len(step_mask.face_components()[1]) == 1

    def test_components_largest_first(self):
        union = db.UnionDomain([db.BoxDomain([0.0, 0.0], [0.25, 1.0]), db.BoxDomain([0.5, 0.0], [1.0, 1.0])])
        mask = db.rasterize(union, 16)
        assert mask.face_components()[1] == [128, 64]
        assert mask.largest_component().count == 128

    def test_cells_per_unit_floor(self, unit_square):
        with pytest.raises(ParameterError):
            db.rasterize(unit_square, 1)

    def test_empty_mask(self):
        thin = db.BoxDomain([0.0, 0.0], [1.0, 0.001])
        with pytest.raises(DegenerateDomainError):
            db.rasterize(thin, 16)


class TestBoundaryComponents:

    def test_square_has_one(self, square_mask):
        assert db.boundary_components(square_mask) == 1

    def test_hole_adds_one(self):
        grid = db.Grid([0.0, 0.0], 0.1, (10, 10))
        cells = np.ones((10, 10), dtype=bool)
        cells[3:7, 3:7] = False
        assert db.boundary_components(db.GridMask(grid, cells)) == 2


class TestSampling:

    def test_samples_are_inside(self, step_domain, rng):
        points = db.sample_domain(step_domain, 500, rng)
        assert points.shape == (500, 2)
        assert np.all(step_domain.contains_many(points))

    def test_monte_carlo_area(self, step_domain, rng):
        area, error = db.monte_carlo_area(step_domain, 200000, rng)
        assert abs(area - step_domain.exact_area()) < 5.0 * error + 1e-3


class TestCatalog:

    def test_aliases(self):
        assert db.catalog("rectangles").name == "rectangle_chain"
        assert db.catalog("spiral_band", n=2).name == "spiral_band_2"

    def test_unknown_name(self):
        with pytest.raises(ParameterError):
            db.catalog("no_such_domain")

    def test_bad_parameters(self):
        with pytest.raises(ParameterError):
            db.catalog("rectangle_chain", alpha=-1.0)
        with pytest.raises(ParameterError):
            db.catalog("step_domain", width=2.0)

    def test_rectangle_chain_stays_inside_the_unit_strip(self):
        chain = db.rectangle_chain(1.0)
        assert chain.parts[0].exact_area() == 1.0
        assert all(part.hi[0] < 1.0 for part in chain.parts[1:])

    def test_rectangle_chain_first_rectangle(self):
        chain = db.rectangle_chain(1.0)
        first = chain.parts[1]
        assert first.lo.tolist() == [0.375, 0.0]
        assert first.hi.tolist() == [0.625, 0.125]
        assert db.contains(chain, [0.375, 0.0625])
        assert db.contains(chain, [0.625, 0.0625])
        assert not db.contains(chain, [0.5, 0.125])

    def test_rectangle_chain_bottom_edges_are_inside(self):
        chain = db.rectangle_chain(1.0)
        assert db.contains(chain, [0.5, 0.0])
        for part in chain.parts[1:]:
            center = 0.5 * (part.lo[0] + part.hi[0])
            assert db.contains(chain, [center, 0.0])
        assert not db.contains(chain, [0.7, 0.0])

    def test_rectangle_chain_cell_counts(self):
        # Q gives 64·64 cells, T_1..T_4 give 128, 32, 8, 2; T_5 and beyond miss every center
        mask = db.rasterize(db.rectangle_chain(1.0), 64)
        assert mask.count == 4096 + 128 + 32 + 8 + 2
        above = mask.cells[:, mask.grid.axis_centers(1) > 0.0]
        assert int(above.sum()) == 170

    def test_rectangle_chain_records_skipped_rectangles(self):
        chain = db.rectangle_chain(0.1, k_max=5)
        assert 1 in chain.skipped
        assert len(chain.parts) == 1 + 5 - len(chain.skipped)
        assert db.rectangle_chain(1.0).skipped == []

    def test_sin_component_domain_boundary(self):
        mask = db.rasterize(db.sin_component_domain(), 128)
        assert db.boundary_components(mask) >= 1
