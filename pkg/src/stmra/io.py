"""Text formats: point CSV, raster stacks and key = value run configs.

Point CSV
    UTF-8, header ``x,y,t,value``, one row per location, ``.`` as decimal
    separator. An empty value field marks a missing value. Values are
    written with 17 significant digits so finite values round-trip exactly.

Raster
    Whitespace-separated text: ``nx ny nt``, then the six extent numbers
    ``xmin ymin tmin xmax ymax tmax``, then ``nx * ny * nt`` cell values
    with x varying fastest (flat index ``i + nx * (j + ny * k)``). ``NA``
    marks a missing cell. Cell ``(i, j, k)`` is located at the center of
    its grid cell. The writer puts the header, the extent and each x-row on
    separate lines; the reader accepts any whitespace layout.

Run config
    One ``key = value`` per line; ``#`` starts a comment. Keys are the long
    option names of the command-line interface with ``-`` or ``_``
    (``n-obs`` and ``n_obs`` are the same key); see ``CONFIG_KEYS``.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .covariance import CovarianceModel, FAMILIES, resolve_family
from .data import PointDataset, RasterStack, SpaceTimeExtent
from .errors import ConfigurationError, FormatError

POINT_HEADER = ["x", "y", "t", "value"]


def _fmt(v: float) -> str:
    return "%.17g" % v


def read_points(path) -> PointDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != POINT_HEADER:
            raise FormatError(f"{path}:1: expected header {','.join(POINT_HEADER)}, got {header}")
        locs, vals = [], []
        for row in reader:
            line = reader.line_num
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 4:
                raise FormatError(f"{path}:{line}: expected 4 fields, got {len(row)}")
            try:
                locs.append([float(row[0]), float(row[1]), float(row[2])])
                vals.append(float(row[3]) if row[3].strip() else np.nan)
            except ValueError as exc:
                raise FormatError(f"{path}:{line}: {exc}") from exc
    if not locs:
        return PointDataset(np.zeros((0, 3)), np.zeros(0))
    return PointDataset(np.array(locs), np.array(vals))


def write_points(data: PointDataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(POINT_HEADER)
        for (x, y, t), v, miss in zip(data.locations, data.values, data.missing):
            w.writerow([_fmt(x), _fmt(y), _fmt(t), "" if miss else _fmt(v)])


def write_table(path, columns: dict) -> None:
    """CSV with the given named columns, values at 17 significant digits."""
    names = list(columns)
    arrays = [np.asarray(columns[k]) for k in names]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*arrays):
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def read_raster(path) -> RasterStack:
    with open(path, encoding="utf-8") as fh:
        tokens = fh.read().split()
    if len(tokens) < 9:
        raise FormatError(f"{path}: raster header needs nx ny nt and six extent numbers")
    try:
        nx, ny, nt = (int(v) for v in tokens[:3])
        ext = [float(v) for v in tokens[3:9]]
        cells = np.array([np.nan if v == "NA" else float(v) for v in tokens[9:]])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if min(nx, ny, nt) < 1:
        raise FormatError(f"{path}: grid dimensions must be positive")
    if len(cells) != nx * ny * nt:
        raise FormatError(f"{path}: header says {nx * ny * nt} cells, found {len(cells)}")
    return RasterStack(nx, ny, nt, SpaceTimeExtent.from_arrays(ext[:3], ext[3:]), cells)


def write_raster(raster: RasterStack, path) -> None:
    ext = list(raster.extent.lo) + list(raster.extent.hi)
    rows = raster.cells.reshape(-1, raster.nx)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{raster.nx} {raster.ny} {raster.nt}\n")
        fh.write(" ".join(_fmt(v) for v in ext) + "\n")
        for row in rows:
            fh.write(" ".join("NA" if np.isnan(v) else _fmt(v) for v in row) + "\n")


def read_dataset(path) -> PointDataset:
    """Points from CSV, or raster cells (missing cells kept as targets)."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    if first.strip().replace(" ", "") == ",".join(POINT_HEADER):
        return read_points(path)
    return read_raster(path).to_points(drop_missing=False)


# --------------------------------------------------------------------------
# run configuration
# --------------------------------------------------------------------------

CONFIG_KEYS = {
    "data": "observation file (point CSV or raster)",
    "family": "covariance family name or alias (metric, m1, m2, m3)",
    "metric": "spatial distance: euclidean, great_circle or chordal",
    "theta": "parameter values, whitespace or comma separated, or a fit JSON path",
    "lower": "lower parameter bounds for fitting",
    "upper": "upper parameter bounds for fitting",
    "M": "number of partition levels",
    "r": "knots per non-leaf region",
    "LB": "minimum region size per axis (x y t)",
    "seed": "random seed",
    "locations": "prediction locations file (point CSV or raster mask)",
    "out": "output path or directory",
}


def parse_config(path) -> dict:
    """Read a ``key = value`` file into a dict of raw strings."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if not key:
                raise FormatError(f"{path}:{lineno}: empty key")
            out[key.replace("-", "_")] = value
    return out


def parse_floats(text) -> np.ndarray:
    if isinstance(text, (list, tuple, np.ndarray)):
        return np.asarray(text, dtype=float)
    try:
        return np.array([float(v) for v in str(text).replace(",", " ").split()])
    except ValueError as exc:
        raise ConfigurationError(f"cannot parse numbers from {text!r}") from exc


@dataclass(frozen=True)
class RunConfig:
    """Validated settings shared by the command-line subcommands."""

    data: str = None
    family: str = "metric"
    metric: str = None
    theta: tuple = ()
    M: int = 1
    r: int = 8
    LB: tuple = (0.0, 0.0, 0.0)
    seed: int = 0
    locations: str = None
    out: str = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("data", "locations"):
            path = getattr(self, name)
            if path is not None and not os.path.exists(path):
                raise ConfigurationError(f"{name} file {path!r} does not exist")
        family = resolve_family(self.family)
        object.__setattr__(self, "family", family)
        fam = FAMILIES[family]
        if self.metric is not None and self.metric not in fam.metrics:
            raise ConfigurationError(f"{family} requires metric in {fam.metrics}, got {self.metric!r}")
        if len(self.theta) and len(self.theta) != fam.n_params:
            raise ConfigurationError(f"{family} takes {fam.n_params} parameters, got {len(self.theta)}")

    def covariance(self, theta=None) -> CovarianceModel:
        theta = self.theta if theta is None else theta
        if not len(theta):
            raise ConfigurationError("no parameter values given")
        return CovarianceModel(self.family, theta, self.metric)
