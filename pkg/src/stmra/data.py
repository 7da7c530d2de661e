"""Geometric and observational containers plus value transforms.

Locations are handled as ``(n, 3)`` float arrays with columns ``x, y, t``
throughout the package; :class:`Location` is a convenience for single
points. Missing observation values are tracked with an explicit boolean
mask, the value slot of a missing entry holds ``nan``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DataError, DegenerateDesignError, DomainError, EmptyDataError


class Location(NamedTuple):
    x: float
    y: float
    t: float


def as_locations(points) -> np.ndarray:
    """Coerce a Location, sequence of Locations or array to an ``(n, 3)`` array."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise DataError(f"locations must have shape (n, 3), got {arr.shape}")
    return arr


def check_spherical(locations: np.ndarray) -> None:
    """Raise if longitude/latitude columns leave [-180, 180] x [-90, 90]."""
    loc = as_locations(locations)
    if loc.size and (np.abs(loc[:, 0]).max() > 180 or np.abs(loc[:, 1]).max() > 90):
        raise DomainError("spherical locations need x in [-180, 180] and y in [-90, 90]")


@dataclass(frozen=True)
class SpaceTimeExtent:
    """Axis-aligned box ``[lo, hi]`` in (x, y, t)."""

    lo: Location
    hi: Location

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != (3,) or hi.shape != (3,):
            raise DataError("extent corners need three coordinates")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise DataError("extent corners must be finite")
        if np.any(lo > hi):
            raise DataError(f"extent lower corner {tuple(lo)} exceeds upper corner {tuple(hi)}")
        object.__setattr__(self, "lo", Location(*lo.tolist()))
        object.__setattr__(self, "hi", Location(*hi.tolist()))

    @classmethod
    def from_arrays(cls, lo, hi) -> "SpaceTimeExtent":
        return cls(Location(*np.asarray(lo, float)), Location(*np.asarray(hi, float)))

    @classmethod
    def bounding(cls, locations) -> "SpaceTimeExtent":
        loc = as_locations(locations)
        if len(loc) == 0:
            raise EmptyDataError("cannot bound an empty location set")
        return cls.from_arrays(loc.min(axis=0), loc.max(axis=0))

    @property
    def lo_array(self) -> np.ndarray:
        return np.asarray(self.lo, dtype=float)

    @property
    def hi_array(self) -> np.ndarray:
        return np.asarray(self.hi, dtype=float)

    @property
    def size(self) -> np.ndarray:
        return self.hi_array - self.lo_array

    def contains(self, locations, closed_upper=True) -> np.ndarray:
        loc = as_locations(locations)
        lo, hi = self.lo_array, self.hi_array
        inside = np.all(loc >= lo, axis=1)
        if closed_upper:
            return inside & np.all(loc <= hi, axis=1)
        return inside & np.all(loc < hi, axis=1)


@dataclass(frozen=True)
class PointDataset:
    """Observations (or prediction targets) at scattered space-time points."""

    locations: np.ndarray
    values: np.ndarray
    missing: np.ndarray = field(default=None)

    def __post_init__(self):
        loc = as_locations(self.locations) if len(self.locations) else np.zeros((0, 3))
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        if len(vals) != len(loc):
            raise DataError(f"{len(loc)} locations but {len(vals)} values")
        missing = np.isnan(vals) if self.missing is None else np.asarray(self.missing, bool).reshape(-1)
        if len(missing) != len(vals):
            raise DataError("missing mask length differs from values")
        if not np.all(np.isfinite(loc)):
            raise DataError("location coordinates must be finite")
        vals = np.where(missing, np.nan, vals)
        if not np.all(np.isfinite(vals[~missing])):
            raise DataError("non-missing values must be finite")
        if len(loc) > 1 and len(np.unique(loc, axis=0)) != len(loc):
            raise DataError("locations must be pairwise distinct")
        for name, arr in (("locations", loc), ("values", vals), ("missing", missing)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def targets(cls, locations) -> "PointDataset":
        """Prediction locations: a dataset whose values are all missing."""
        loc = as_locations(locations) if len(locations) else np.zeros((0, 3))
        return cls(loc, np.full(len(loc), np.nan))

    def __len__(self):
        return len(self.values)

    @property
    def n_observed(self) -> int:
        return int((~self.missing).sum())

    def observed(self) -> "PointDataset":
        """Subset with missing entries dropped."""
        keep = ~self.missing
        return PointDataset(self.locations[keep], self.values[keep])

    def subset(self, index) -> "PointDataset":
        return PointDataset(self.locations[index], self.values[index], self.missing[index])

    def with_values(self, values) -> "PointDataset":
        values = np.asarray(values, dtype=float)
        return PointDataset(self.locations, values, self.missing | np.isnan(values))


@dataclass(frozen=True)
class RasterStack:
    """Dense ``nx * ny * nt`` grid; cells are stored x-fastest, missing as nan.

    Cell ``(i, j, k)`` sits at flat index ``i + nx * (j + ny * k)`` and is
    located at the cell center of the regular subdivision of ``extent``.
    """

    nx: int
    ny: int
    nt: int
    extent: SpaceTimeExtent
    cells: np.ndarray

    def __post_init__(self):
        for name in ("nx", "ny", "nt"):
            if int(getattr(self, name)) < 1:
                raise DataError(f"{name} must be a positive integer")
        cells = np.asarray(self.cells, dtype=float).reshape(-1)
        if len(cells) != self.nx * self.ny * self.nt:
            raise DataError(f"expected {self.nx * self.ny * self.nt} cells, got {len(cells)}")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    def axis_centers(self):
        lo, size = self.extent.lo_array, self.extent.size
        return tuple(lo[a] + (np.arange(n) + 0.5) * size[a] / n for a, n in enumerate((self.nx, self.ny, self.nt)))

    def cell_locations(self) -> np.ndarray:
        xc, yc, tc = self.axis_centers()
        t, y, x = np.meshgrid(tc, yc, xc, indexing="ij")
        return np.column_stack([x.ravel(), y.ravel(), t.ravel()])

    def to_points(self, drop_missing=True) -> PointDataset:
        loc = self.cell_locations()
        if drop_missing:
            keep = ~np.isnan(self.cells)
            return PointDataset(loc[keep], self.cells[keep])
        return PointDataset(loc, self.cells)

    @classmethod
    def from_points(cls, data: PointDataset, nx, ny, nt, extent: SpaceTimeExtent) -> "RasterStack":
        """Rasterize points that sit on the cell centers of the given grid."""
        lo, size = extent.lo_array, extent.size
        shape = np.array([nx, ny, nt])
        step = np.where(size > 0, size / shape, 1.0)
        frac = (data.locations - lo) / step - 0.5
        idx = np.rint(frac).astype(int)
        if len(idx) and (np.any(np.abs(frac - idx) > 1e-6) or np.any(idx < 0) or np.any(idx >= shape)):
            raise DataError("points do not coincide with raster cell centers")
        cells = np.full(nx * ny * nt, np.nan)
        flat = idx[:, 0] + nx * (idx[:, 1] + ny * idx[:, 2])
        cells[flat] = np.where(data.missing, np.nan, data.values)
        return cls(nx, ny, nt, extent, cells)


@dataclass(frozen=True)
class TrendModel:
    """Quadratic trend over latitude: ``c0 + c1 * y + c2 * y**2``."""

    coefficients: tuple

    def __post_init__(self):
        coef = tuple(float(c) for c in self.coefficients)
        if len(coef) != 3 or not np.all(np.isfinite(coef)):
            raise DataError("trend needs three finite coefficients")
        object.__setattr__(self, "coefficients", coef)

    def evaluate(self, latitude) -> np.ndarray:
        lat = np.asarray(latitude, dtype=float)
        c0, c1, c2 = self.coefficients
        return c0 + c1 * lat + c2 * lat**2


def _latitude_design(lat):
    return np.column_stack([np.ones_like(lat), lat, lat**2])


def detrend_quadratic_latitude(data: PointDataset):
    """Least-squares fit of ``value ~ 1 + y + y**2``; returns (trend, residuals)."""
    obs = ~data.missing
    lat = data.locations[obs, 1]
    if len(np.unique(lat)) < 3:
        raise DegenerateDesignError("quadratic latitude trend needs observations at three or more latitudes")
    X = _latitude_design(lat)
    coef, *_ = np.linalg.lstsq(X, data.values[obs], rcond=None)
    trend = TrendModel(tuple(coef))
    return trend, data.with_values(data.values - trend.evaluate(data.locations[:, 1]))


def retrend(trend: TrendModel, data: PointDataset) -> PointDataset:
    return data.with_values(data.values + trend.evaluate(data.locations[:, 1]))


def box_cox(values, lambda1: float, lambda2: float) -> np.ndarray:
    """Shifted Box-Cox transform ``((v + lambda2)**lambda1 - 1) / lambda1``.

    ``nan`` entries pass through unchanged.
    """
    if lambda1 == 0:
        raise DomainError("lambda1 must be non-zero")
    v = np.asarray(values, dtype=float)
    base = v + lambda2
    if np.any(base[~np.isnan(base)] <= 0):
        raise DomainError(f"Box-Cox needs values > {-lambda2}")
    return (base**lambda1 - 1.0) / lambda1


def inverse_box_cox(values, lambda1: float, lambda2: float) -> np.ndarray:
    if lambda1 == 0:
        raise DomainError("lambda1 must be non-zero")
    u = np.asarray(values, dtype=float)
    inner = lambda1 * u + 1.0
    if np.any(inner[~np.isnan(inner)] <= 0):
        raise DomainError("value outside the range of the Box-Cox transform")
    return inner ** (1.0 / lambda1) - lambda2


def center(values):
    """Subtract the mean of the non-missing entries; returns (mean, centered)."""
    v = np.asarray(values, dtype=float)
    ok = ~np.isnan(v)
    if not ok.any():
        raise EmptyDataError("no non-missing values to center")
    mean = float(v[ok].mean())
    return mean, v - mean
