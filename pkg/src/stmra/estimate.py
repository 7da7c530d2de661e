"""Maximum-likelihood fitting of covariance parameters under box bounds."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .data import SpaceTimeExtent
from .errors import ConfigurationError, InitializationError, OptimizationError
from .partition import PartitionConfig

OPTIMIZERS = ("neldermead", "lbfgsb")
_PENALTY = 1e30


@dataclass(frozen=True)
class FitSpec:
    """Start values, bounds and stopping rules.

    ``optimizer`` is ``"neldermead"`` (bounded simplex search, the default)
    or ``"lbfgsb"`` (bounded quasi-Newton with central-difference
    gradients). Both work on log-transformed parameters.
    """

    theta0: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    max_evals: int = 500
    ftol_abs: float = 1.0
    xtol: float = 1e-3
    optimizer: str = "neldermead"
    restarts: int = 0
    seed: int = 0

    def __post_init__(self):
        t0, lo, up = (np.asarray(a, dtype=float).reshape(-1) for a in (self.theta0, self.lower, self.upper))
        if not (len(t0) == len(lo) == len(up)):
            raise ConfigurationError("theta0 and bounds differ in length")
        if np.any(lo <= 0) or np.any(lo > t0) or np.any(t0 > up):
            raise ConfigurationError("need 0 < lower <= theta0 <= upper elementwise")
        if self.ftol_abs <= 0 or self.xtol <= 0 or self.max_evals < 1:
            raise ConfigurationError("tolerances and budget must be positive")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigurationError(f"optimizer must be one of {OPTIMIZERS}")
        object.__setattr__(self, "theta0", t0)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)


@dataclass
class FitResult:
    theta: np.ndarray
    loglik: float
    n_evals: int
    converged: bool
    active_bounds: np.ndarray
    trace: list = field(default_factory=list)
    message: str = ""

    def write_trace(self, path) -> None:
        """One CSV row per evaluation: index, seconds, loglik, theta_1..theta_p."""
        p = len(self.theta)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["eval", "seconds", "loglik"] + [f"theta_{i + 1}" for i in range(p)])
            for i, (theta, ll, secs) in enumerate(self.trace):
                w.writerow([i, repr(secs), repr(ll)] + [repr(float(v)) for v in theta])


class _BudgetExhausted(Exception):
    pass


class _Objective:
    """Negative log-likelihood on log-parameters, with an evaluation trace."""

    def __init__(self, loglik, spec: FitSpec):
        self.loglik = loglik
        self.spec = spec
        self.log_lo = np.log(spec.lower)
        self.log_up = np.log(spec.upper)
        self.trace = []
        self.start = time.perf_counter()

    def theta(self, phi):
        return np.clip(np.exp(np.clip(phi, self.log_lo, self.log_up)), self.spec.lower, self.spec.upper)

    def evaluate(self, phi) -> float:
        if len(self.trace) >= self.spec.max_evals:
            raise _BudgetExhausted
        theta = self.theta(phi)
        try:
            ll = float(self.loglik(theta))
        except (ArithmeticError, ValueError, np.linalg.LinAlgError):
            ll = -math.inf
        if not math.isfinite(ll):
            ll = -math.inf
        self.trace.append((theta.copy(), ll, time.perf_counter() - self.start))
        return -ll if math.isfinite(ll) else _PENALTY

    __call__ = evaluate

    def gradient(self, phi, h=1e-4):
        g = np.zeros_like(phi)
        for i in range(len(phi)):
            up, dn = phi.copy(), phi.copy()
            up[i] = min(phi[i] + h, self.log_up[i])
            dn[i] = max(phi[i] - h, self.log_lo[i])
            if up[i] == dn[i]:
                continue
            g[i] = (self.evaluate(up) - self.evaluate(dn)) / (up[i] - dn[i])
        return g

    def best(self):
        finite = [t for t in self.trace if math.isfinite(t[1])]
        if not finite:
            return None
        return max(finite, key=lambda t: t[1])


def _simplex(phi0, lo, up, step=0.5):
    pts = [phi0]
    for i in range(len(phi0)):
        p = phi0.copy()
        p[i] = phi0[i] + step if phi0[i] + step <= up[i] else phi0[i] - step
        p[i] = np.clip(p[i], lo[i], up[i])
        pts.append(p)
    return np.array(pts)


def _run(obj: _Objective, phi0, spec: FitSpec):
    bounds = list(zip(obj.log_lo, obj.log_up))
    if spec.optimizer == "neldermead":
        res = optimize.minimize(
            obj,
            phi0,
            method="Nelder-Mead",
            bounds=bounds,
            options={
                "initial_simplex": _simplex(phi0, obj.log_lo, obj.log_up),
                "fatol": spec.ftol_abs,
                "xatol": spec.xtol,
                "maxfev": spec.max_evals,
            },
        )
        return res.success, res.message
    last = {"f": None}

    def stop_on_ftol(intermediate_result):
        f = intermediate_result.fun
        if last["f"] is not None and abs(last["f"] - f) < spec.ftol_abs:
            raise StopIteration
        last["f"] = f

    res = optimize.minimize(
        obj, phi0, method="L-BFGS-B", jac=obj.gradient, bounds=bounds, callback=stop_on_ftol,
        options={"maxfun": spec.max_evals},
    )
    return bool(res.success or res.status == 99), res.message


def fit(loglik, spec: FitSpec) -> FitResult:
    """Maximize ``loglik`` (an MraModel or a callable of theta) within bounds."""
    func = loglik.loglik if hasattr(loglik, "loglik") else loglik
    obj = _Objective(func, spec)
    phi0 = np.log(spec.theta0)
    if obj.evaluate(phi0) >= _PENALTY:
        raise InitializationError(f"log-likelihood is not finite at theta0 = {spec.theta0}")
    rng = np.random.default_rng(spec.seed)
    converged, message = False, ""
    starts = [phi0]
    for attempt in range(spec.restarts + 1):
        try:
            converged, message = _run(obj, starts[-1], spec)
        except _BudgetExhausted:
            converged, message = False, "evaluation budget exhausted"
            break
        best = obj.best()
        jitter = rng.normal(0.0, 0.1, size=len(phi0))
        starts.append(np.clip(np.log(best[0]) + jitter, obj.log_lo, obj.log_up))
    best = obj.best()
    if best is None:
        raise OptimizationError("all likelihood evaluations were non-finite", obj.trace)
    theta, ll, _ = best
    rel = 1e-6
    active = (theta <= spec.lower * (1 + rel)) | (theta >= spec.upper * (1 - rel))
    return FitResult(theta, ll, len(obj.trace), bool(converged), active, obj.trace, str(message))


def suggest_config(n: int, domain: SpaceTimeExtent, r: int = 8, target: int = 100, seed: int = 0):
    """Smallest M whose leaves hold at most ``target`` observations on average.

    Returns ``(config, rationale)``. Uniform density is assumed; only axes of
    positive width are split.
    """
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    k = int(np.sum(domain.size > 0))
    M = 0
    if k:
        while n / (2 ** (k * M)) > target:
            M += 1
    leaves = 2 ** (k * M)
    rationale = (
        f"M = {M}: {leaves} leaf regions hold about {n / leaves:.1f} observations each "
        f"(target <= {target}); start with r = {r} for estimation and raise r for prediction "
        "as time allows"
    )
    return PartitionConfig(M, r, (0.0, 0.0, 0.0), seed), rationale
