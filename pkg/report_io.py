from __future__ import annotations
from typing import List, Dict, Tuple
import csv
import logging
import os

import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from definitions import *
from domain_builder import GridMask

logger = logging.getLogger(__name__)

SVG_HASH_SALT = "rough-domain-mask"

def prepare_output_dir(path: str) -> str:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise ConfigError("cannot create output directory " + path + ": " + str(e))
    if not os.access(path, os.W_OK):
        raise ConfigError("output directory " + path + " is not writable")
    return path

def provenance(seed: int, **extra) -> str:
    parts = ["seed=" + str(seed), "version=" + VERSION]
    for key in sorted(extra):
        parts.append(key + "=" + str(extra[key]))
    return " ".join(parts)

def write_csv(path: str, columns: List[str], rows: List[List[object]], seed: int, **extra):
    """Comment row with seed and version, then the header, then the rows."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        handle.write("# " + provenance(seed, **extra) + "\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow(row)
    logger.debug("wrote %d rows to %s", len(rows), path)

def read_csv(path: str) -> Tuple[str, List[str], List[List[str]]]:
    """(comment, header, rows) of a file written by write_csv."""
    with open(path, newline="", encoding="utf-8") as handle:
        comment = handle.readline().rstrip("\n")
        reader = csv.reader(handle)
        header = next(reader)
        return comment, header, [row for row in reader]

def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)

def text_report(values: Dict[str, object], seed: int) -> str:
    lines = ["# " + provenance(seed)]
    for key, value in values.items():
        lines.append(key + " = " + format_value(value))
    return "\n".join(lines) + "\n"

def write_text_report(path: str, values: Dict[str, object], seed: int):
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(text_report(values, seed))

def mask_rows(mask: GridMask) -> np.ndarray:
    """Mask as an image: rows top to bottom along the last axis, columns along the first."""
    cells = mask.cells
    if cells.ndim == 1:
        return cells.reshape(1, -1)
    if cells.ndim != 2:
        raise UnsupportedRepresentationError("only 1-D and 2-D masks have an image form")
    return cells.T[::-1, :]

def write_pgm(path: str, mask: GridMask):
    image = mask_rows(mask)
    with open(path, "w", encoding="ascii") as handle:
        handle.write("P1\n")
        handle.write("# origin=" + " ".join(repr(float(o)) for o in mask.grid.origin) + " spacing=" + repr(mask.grid.spacing) + "\n")
        handle.write(str(image.shape[1]) + " " + str(image.shape[0]) + "\n")
        for row in image:
            handle.write(" ".join("1" if c else "0" for c in row) + "\n")

def read_pgm(path: str) -> np.ndarray:
    with open(path, encoding="ascii") as handle:
        lines = [line for line in handle.read().splitlines() if not line.startswith("#")]
    if lines[0] != "P1":
        raise InvalidDataError(path + " is not a P1 bitmap")
    width, height = (int(v) for v in lines[1].split())
    image = np.array([[c == "1" for c in line.split()] for line in lines[2:2 + height]], dtype=bool)
    if image.shape != (height, width):
        raise InvalidDataError(path + " body does not match its " + str(width) + "x" + str(height) + " header")
    return image

def write_svg(path: str, mask: GridMask, title: str = ""):
    image = mask_rows(mask)
    lo = mask.grid.origin
    extent = None
    if mask.cells.ndim == 2:
        hi = lo + np.asarray(mask.grid.dims) * mask.grid.spacing
        extent = (lo[0], hi[0], lo[1], hi[1])

    with plt.rc_context({"svg.hashsalt": SVG_HASH_SALT, "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 6))
        ax.imshow(image, cmap="Greys", interpolation="nearest", extent=extent, vmin=0, vmax=1)
        ax.set_aspect("equal")
        if title:
            ax.set_title(title)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
