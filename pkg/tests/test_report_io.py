import os

import numpy as np
import pytest

from definitions import *
import domain_builder as db
import report_io


class TestCsv:

    def test_provenance_row_then_header(self, tmp_path):
        path = str(tmp_path / "rows.csv")
        report_io.write_csv(path, ["a", "b"], [[1, "x"], [2, "y, z"]], seed=7, suite="shift")
        comment, header, rows = report_io.read_csv(path)
        assert comment == "# seed=7 version=" + VERSION + " suite=shift"
        assert header == ["a", "b"]
        assert rows == [["1", "x"], ["2", "y, z"]]

    def test_same_input_same_bytes(self, tmp_path):
        first = str(tmp_path / "first.csv")
        second = str(tmp_path / "second.csv")
        for path in (first, second):
            report_io.write_csv(path, ["v"], [[repr(0.1)]], seed=0)
        with open(first, "rb") as a, open(second, "rb") as b:
            assert a.read() == b.read()


class TestTextReport:

    def test_key_value_lines(self):
        text = report_io.text_report({"K_frob": 2.5, "holds": True, "count": 3}, seed=1)
        lines = text.splitlines()
        assert lines[0].startswith("# seed=1 ")
        assert lines[1:] == ["K_frob = 2.5", "holds = true", "count = 3"]


class TestMaskFiles:

    def test_pgm(self, tmp_path, step_mask):
        path = str(tmp_path / "mask.pgm")
        report_io.write_pgm(path, step_mask)
        image = report_io.read_pgm(path)
        assert image.shape == (64, 32)
        assert int(image.sum()) == step_mask.count
        # top row is the largest y
        assert image[0].tolist() == step_mask.cells[:, -1].tolist()

    def test_bad_pgm(self, tmp_path):
        path = tmp_path / "bad.pgm"
        path.write_text("P2\n1 1\n0\n")
        with pytest.raises(InvalidDataError):
            report_io.read_pgm(str(path))

    def test_svg_is_reproducible(self, tmp_path, square_mask):
        first = str(tmp_path / "a.svg")
        second = str(tmp_path / "b.svg")
        report_io.write_svg(first, square_mask, "unit square")
        report_io.write_svg(second, square_mask, "unit square")
        with open(first, "rb") as a, open(second, "rb") as b:
            content = a.read()
            assert content == b.read()
        assert b"<svg" in content

    def test_three_dimensional_masks_have_no_image(self):
        grid = db.Grid([0.0, 0.0, 0.0], 0.5, (2, 2, 2))
        with pytest.raises(UnsupportedRepresentationError):
            report_io.mask_rows(db.GridMask(grid, np.ones((2, 2, 2), dtype=bool)))


class TestOutputDir:

    def test_creates_missing_directories(self, tmp_path):
        path = str(tmp_path / "nested" / "out")
        assert report_io.prepare_output_dir(path) == path
        assert os.path.isdir(path)

    def test_file_in_the_way(self, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("")
        with pytest.raises(ConfigError):
            report_io.prepare_output_dir(str(blocker / "out"))
