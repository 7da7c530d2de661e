"""Space-time covariance families and distance metrics.

Every family is implemented as an elementwise kernel ``k(theta, X1, X2)``
over coordinate arrays whose last axis is ``(x, y, t)``; arrays broadcast
like numpy ufuncs, so the same function fills dense matrices, batched
per-region blocks or diagonals.

Parameter order per family (fixed, also used in config files):

``metric_exponential``
    range, partial sill, nugget, space-time anisotropy
``separable_exp``
    sill, spatial range, temporal range, spatial nugget weight,
    temporal nugget weight
``nonseparable_sphere``
    sill, spatial scale (km), temporal scale, nugget
``nonstationary_kernelconv``
    sill, temporal nugget weight, temporal range, spatial nugget weight,
    9 weights of the standard-deviation process, 9 weights of the
    east-west (x) anisotropy process, 9 weights of the south-north (y)
    anisotropy process
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ParameterError

EARTH_RADIUS_KM = 6371.0

RB_CENTERS = np.array([-110.0, -82.5, -55.0, -27.5, 0.0, 27.5, 55.0, 82.5, 110.0])
RB_SCALE = 20.0

METRICS = ("euclidean", "great_circle", "chordal")


# --------------------------------------------------------------------------
# distances
# --------------------------------------------------------------------------


def _haversine_term(x1, y1, x2, y2):
    lat1, lat2 = np.radians(y1), np.radians(y2)
    sdlat = np.sin((lat2 - lat1) * 0.5)
    sdlon = np.sin(np.radians(x2 - x1) * 0.5)
    return np.clip(sdlat**2 + np.cos(lat1) * np.cos(lat2) * sdlon**2, 0.0, 1.0)


def great_circle(p1, p2):
    """Haversine distance in km between (lon, lat) points given in degrees."""
    p1, p2 = np.asarray(p1, float), np.asarray(p2, float)
    a = _haversine_term(p1[..., 0], p1[..., 1], p2[..., 0], p2[..., 1])
    return 2.0 * EARTH_RADIUS_KM * np.arctan2(np.sqrt(a), np.sqrt(1.0 - a))


def chordal(p1, p2):
    """Straight-line distance in km through the sphere."""
    p1, p2 = np.asarray(p1, float), np.asarray(p2, float)
    a = _haversine_term(p1[..., 0], p1[..., 1], p2[..., 0], p2[..., 1])
    return 2.0 * EARTH_RADIUS_KM * np.sqrt(a)


def spatial_distance(X1, X2, metric="euclidean"):
    if metric == "euclidean":
        return np.hypot(X1[..., 0] - X2[..., 0], X1[..., 1] - X2[..., 1])
    if metric == "great_circle":
        return great_circle(X1, X2)
    if metric == "chordal":
        return chordal(X1, X2)
    raise ConfigurationError(f"unknown spatial metric {metric!r}")


def _same_space(X1, X2):
    return (X1[..., 0] == X2[..., 0]) & (X1[..., 1] == X2[..., 1])


def _same_time(X1, X2):
    return X1[..., 2] == X2[..., 2]


# --------------------------------------------------------------------------
# radial basis processes
# --------------------------------------------------------------------------


def rb_process(latitude, weights):
    """Weighted sum of Gaussian bumps over the nine fixed pseudo-latitudes."""
    lat = np.asarray(latitude, dtype=float)
    w = np.asarray(weights, dtype=float)
    # fixed summation order keeps kernels exactly symmetric under broadcasting
    total = np.zeros(np.shape(lat))
    for center, weight in zip(RB_CENTERS, w):
        total = total + weight * np.exp(-(((lat - center) / RB_SCALE) ** 2))
    return total


# --------------------------------------------------------------------------
# kernels
# --------------------------------------------------------------------------


def _k_metric(theta, X1, X2, metric):
    rho, sill, nugget, aniso = theta
    ds = spatial_distance(X1, X2, metric)
    d = np.sqrt(ds**2 + (aniso * (X1[..., 2] - X2[..., 2])) ** 2)
    same = _same_space(X1, X2) & _same_time(X1, X2)
    return sill * np.exp(-d / rho) + nugget * same


def _k_separable(theta, X1, X2, metric):
    sill, srange, trange, snug, tnug = theta
    ds = spatial_distance(X1, X2, metric)
    dt = np.abs(X1[..., 2] - X2[..., 2])
    cs = (1.0 - snug + snug * _same_space(X1, X2)) * np.exp(-ds / srange)
    ct = (1.0 - tnug + tnug * _same_time(X1, X2)) * np.exp(-dt / trange)
    return sill * cs * ct


def _k_nonseparable(theta, X1, X2, metric):
    sill, sscale, tscale, nugget = theta
    ds = spatial_distance(X1, X2, metric)
    dt = np.abs(X1[..., 2] - X2[..., 2])
    same = _same_space(X1, X2) & _same_time(X1, X2)
    g = 1.0 + ds / sscale
    return (sill + nugget * same) / g * np.exp(-dt / (tscale * g**0.25))


def m3_processes(theta, latitude):
    """Standard deviation and the two anisotropy processes at ``latitude``."""
    theta = np.asarray(theta, dtype=float)
    return (
        rb_process(latitude, theta[4:13]),
        rb_process(latitude, theta[13:22]),
        rb_process(latitude, theta[22:31]),
    )


def kernel_convolution(sd1, sd2, ax1, ax2, ay1, ay2, dx, dy):
    """Nonstationary exponential kernel with diagonal local anisotropy.

    ``sd*`` are the standard-deviation process values, ``ax*``/``ay*`` the
    diagonal entries of the local anisotropy matrices at both points.
    """
    ax = 0.5 * (ax1 + ax2)
    ay = 0.5 * (ay1 + ay2)
    q = dx**2 / ax + dy**2 / ay
    return sd1 * sd2 / np.sqrt(ax * ay) * np.exp(-np.sqrt(q))


def _k_kernelconv(theta, X1, X2, metric):
    sill, tnug, trange, snug = theta[:4]
    sd1, ax1, ay1 = m3_processes(theta, X1[..., 1])
    sd2, ax2, ay2 = m3_processes(theta, X2[..., 1])
    c = kernel_convolution(sd1, sd2, ax1, ax2, ay1, ay2, X1[..., 0] - X2[..., 0], X1[..., 1] - X2[..., 1])
    cs = (1.0 - snug + snug * _same_space(X1, X2)) * c
    dt = np.abs(X1[..., 2] - X2[..., 2])
    ct = (1.0 - tnug + tnug * _same_time(X1, X2)) * np.exp(-dt / trange)
    return sill * cs * ct


@dataclass(frozen=True)
class _Family:
    name: str
    n_params: int
    kernel: object
    default_metric: str
    metrics: tuple
    lower: tuple = field(default=())
    upper: tuple = field(default=())


FAMILIES = {
    "metric_exponential": _Family(
        "metric_exponential", 4, _k_metric, "euclidean", METRICS,
        (0.001, 0.001, 0.001, 0.001), (1.0, 3.5, 3.5, 50.0),
    ),
    "separable_exp": _Family(
        "separable_exp", 5, _k_separable, "euclidean", METRICS,
        (1e-4, 1e-4, 1e-4, 1e-4, 1e-4), (1e5, 1e5, 1e5, 0.9999, 0.9999),
    ),
    "nonseparable_sphere": _Family(
        "nonseparable_sphere", 4, _k_nonseparable, "great_circle", ("great_circle",),
        (1e-4, 1e-4, 1e-4, 1e-4), (1e5, 1e5, 1e5, 1e5),
    ),
    "nonstationary_kernelconv": _Family(
        "nonstationary_kernelconv", 31, _k_kernelconv, "euclidean", ("euclidean",),
        (1e-4, 1e-4, 1e-4, 1e-4) + (1e-4,) * 27, (1e5, 0.9999, 1e5, 0.9999) + (1e5,) * 27,
    ),
}

ALIASES = {
    "metric": "metric_exponential",
    "m1": "separable_exp",
    "separable": "separable_exp",
    "m2": "nonseparable_sphere",
    "nonseparable": "nonseparable_sphere",
    "m3": "nonstationary_kernelconv",
    "kernelconv": "nonstationary_kernelconv",
}


def resolve_family(name: str) -> str:
    key = name.strip().lower()
    key = ALIASES.get(key, key)
    if key not in FAMILIES:
        raise ConfigurationError(f"unknown covariance family {name!r}; choose from {sorted(FAMILIES)}")
    return key


def default_bounds(family: str):
    fam = FAMILIES[resolve_family(family)]
    return np.array(fam.lower), np.array(fam.upper)


def validate_theta(family: str, theta) -> np.ndarray:
    fam = FAMILIES[resolve_family(family)]
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if len(theta) != fam.n_params:
        raise ParameterError(f"{fam.name} takes {fam.n_params} parameters, got {len(theta)}")
    if not np.all(np.isfinite(theta)) or np.any(theta <= 0):
        raise ParameterError(f"{fam.name} parameters must be finite and positive: {theta}")
    if fam.name == "separable_exp" and np.any(theta[3:5] >= 1):
        raise ParameterError("nugget weights must lie in (0, 1)")
    if fam.name == "nonstationary_kernelconv":
        if theta[1] >= 1 or theta[3] >= 1:
            raise ParameterError("nugget weights must lie in (0, 1)")
        grid = np.arange(-90.0, 91.0)
        for label, proc in zip(("standard deviation", "x anisotropy", "y anisotropy"), m3_processes(theta, grid)):
            if np.any(proc <= 0):
                raise ParameterError(f"{label} process is not positive over [-90, 90]")
    return theta


@dataclass(frozen=True)
class ThetaVector:
    """Parameter values with per-entry box bounds."""

    values: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        vals, lo, up = (np.asarray(a, dtype=float).reshape(-1) for a in (self.values, self.lower, self.upper))
        if not (len(vals) == len(lo) == len(up)):
            raise ParameterError("values and bounds differ in length")
        if np.any(lo <= 0) or np.any(lo > vals) or np.any(vals > up):
            raise ParameterError("need 0 < lower <= value <= upper elementwise")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)


@dataclass(frozen=True)
class CovarianceModel:
    family: str
    theta: np.ndarray
    metric: str = None

    def __post_init__(self):
        family = resolve_family(self.family)
        fam = FAMILIES[family]
        metric = fam.default_metric if self.metric is None else self.metric
        if metric not in METRICS:
            raise ConfigurationError(f"unknown spatial metric {metric!r}")
        if metric not in fam.metrics:
            raise ConfigurationError(f"{family} requires metric in {fam.metrics}, got {metric!r}")
        theta = validate_theta(family, self.theta)
        theta.setflags(write=False)
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "metric", metric)
        object.__setattr__(self, "theta", theta)

    @property
    def n_params(self) -> int:
        return FAMILIES[self.family].n_params

    def with_theta(self, theta) -> "CovarianceModel":
        return CovarianceModel(self.family, theta, self.metric)

    def pairwise(self, X1, X2) -> np.ndarray:
        """Elementwise covariance between broadcast-compatible coordinate arrays."""
        return FAMILIES[self.family].kernel(self.theta, np.asarray(X1, float), np.asarray(X2, float), self.metric)

    def matrix(self, A, B=None) -> np.ndarray:
        """Cross-covariance matrix (batched over leading axes)."""
        A = np.asarray(A, dtype=float)
        B = A if B is None else np.asarray(B, dtype=float)
        return self.pairwise(A[..., :, None, :], B[..., None, :, :])

    def diag(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return self.pairwise(X, X)


def cov_matrix(model: CovarianceModel, A, B=None) -> np.ndarray:
    return model.matrix(A, B)


def _scalar(family, theta, p1, p2, metric=None):
    return float(CovarianceModel(family, theta, metric).pairwise(np.asarray(p1, float), np.asarray(p2, float)))


def cov_metric(theta, p1, p2, metric="euclidean"):
    return _scalar("metric_exponential", theta, p1, p2, metric)


def cov_m1(theta, p1, p2, metric="euclidean"):
    return _scalar("separable_exp", theta, p1, p2, metric)


def cov_m2(theta, spatial_lag, temporal_lag):
    """Nonseparable spherical model evaluated directly at (km, time) lags.

    Unlike the model classes this accepts a zero nugget.
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if len(theta) != 4 or not np.all(np.isfinite(theta)) or np.any(theta[:3] <= 0) or theta[3] < 0:
        raise ParameterError(f"need three positive values and a nugget >= 0, got {theta}")
    sill, sscale, tscale, nugget = theta
    g = 1.0 + spatial_lag / sscale
    zero = (spatial_lag == 0) & (temporal_lag == 0)
    return (sill + nugget * zero) / g * np.exp(-temporal_lag / (tscale * g**0.25))


def cov_m3(theta, p1, p2):
    return _scalar("nonstationary_kernelconv", theta, p1, p2)
