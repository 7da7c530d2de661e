"""Hold-out experiments: random and block validation over (M, r) sweeps.

The domain of simulated experiments is the simulation extent (``[0, 1]^3``
in the bundled studies); for a user dataset it is the bounding box of the
data. Each cell of the sweep, ``(M, r, repetition)``, uses its own
partition seed; the train/test split depends on ``ExperimentSpec.seed``
only, so all cells see the same split.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from ._parallel import worker_count
from .covariance import CovarianceModel
from .data import PointDataset, SpaceTimeExtent
from .engine import MraModel, averaged_predict
from .errors import ConfigurationError
from .estimate import FitSpec, fit
from .oracle import SimulationSpec, exact_krige, score, simulate_gp
from .partition import PartitionConfig, partition


@dataclass(frozen=True)
class ExperimentSpec:
    cov: CovarianceModel
    configs: tuple = ((1, 8),)
    simulation: SimulationSpec = None
    dataset: PointDataset = None
    fit_spec: FitSpec = None
    holdout: float = 0.9
    blocks: tuple = ()
    halves: bool = False
    repetitions: int = 3
    seed: int = 0
    LB: tuple = (0.0, 0.0, 0.0)
    averaged: bool = False
    exact: bool = False

    def __post_init__(self):
        if (self.simulation is None) == (self.dataset is None):
            raise ConfigurationError("give exactly one of simulation or dataset")
        if not 0.0 < self.holdout < 1.0:
            raise ConfigurationError("holdout fraction must lie in (0, 1)")
        if self.repetitions < 1:
            raise ConfigurationError("repetitions must be >= 1")


@dataclass(frozen=True)
class ScoreRow:
    mode: str
    method: str
    M: int
    r: int
    repetition: int
    seed: int
    n_train: int
    n_test: int
    rmse: float
    mae: float
    cov2sd: float
    r2: float
    seconds: float
    r2_per_second: float
    theta: tuple = field(default=())


def _data_and_domain(spec: ExperimentSpec):
    if spec.simulation is not None:
        return simulate_gp(spec.simulation).to_points(), spec.simulation.extent
    data = spec.dataset.observed()
    return data, SpaceTimeExtent.bounding(data.locations)


def random_split(n: int, holdout: float, seed: int):
    """Seeded uniform split; returns sorted (train, test) index arrays."""
    n_test = int(round(holdout * n))
    if n_test <= 0 or n_test >= n:
        raise ConfigurationError(f"holdout {holdout} of {n} points leaves an empty train or test set")
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def block_split(locations, blocks=(), halves=False):
    """Hold out points inside any block box, or alternating x-halves per time slice."""
    locations = np.asarray(locations, float)
    test = np.zeros(len(locations), bool)
    if halves:
        times = np.unique(locations[:, 2])
        mid = 0.5 * (locations[:, 0].min() + locations[:, 0].max())
        slot = np.searchsorted(times, locations[:, 2])
        left = locations[:, 0] < mid
        test = np.where(slot % 2 == 0, left, ~left)
    for box in blocks:
        inside = box.contains(locations)
        if not inside.any():
            raise ConfigurationError(f"block {box} contains no observations")
        test |= inside
    if not test.any():
        raise ConfigurationError("no blocks given")
    if test.all():
        raise ConfigurationError("blocks cover all observations")
    return np.flatnonzero(~test), np.flatnonzero(test)


def _cell(spec, mode, data, domain, train, test, M, r, rep):
    tr, te = data.subset(train), data.subset(test)
    pseed = spec.seed * 1000 + rep
    config = PartitionConfig(M, r, spec.LB, pseed)
    start = time.perf_counter()
    cov = spec.cov
    if spec.fit_spec is not None:
        res = fit(MraModel(partition(config, domain, tr), cov), spec.fit_spec)
        cov = cov.with_theta(res.theta)
    if spec.averaged:
        pf = averaged_predict(config, domain, tr, te.locations, cov, workers=1)
        method = "mra_averaged"
    else:
        pf = MraModel(partition(config, domain, tr, te.locations), cov).predict()
        method = "mra"
    rep_ = score(pf, te.values, time.perf_counter() - start)
    return ScoreRow(mode, method, M, r, rep, spec.seed, len(train), len(test), rep_.rmse, rep_.mae,
                    rep_.cov2sd, rep_.r2, rep_.seconds, rep_.r2_per_second, tuple(cov.theta.tolist()))


def _exact_row(spec, mode, data, train, test):
    tr, te = data.subset(train), data.subset(test)
    cov = spec.cov
    start = time.perf_counter()
    if spec.fit_spec is not None:
        from .oracle import exact_loglik

        res = fit(lambda th: exact_loglik(tr, cov, th), spec.fit_spec)
        cov = cov.with_theta(res.theta)
    pf = exact_krige(tr, te.locations, cov)
    s = score(pf, te.values, time.perf_counter() - start)
    return ScoreRow(mode, "exact", 0, 0, 0, spec.seed, len(train), len(test), s.rmse, s.mae, s.cov2sd,
                    s.r2, s.seconds, s.r2_per_second, tuple(cov.theta.tolist()))


def _sweep(spec, mode, data, domain, train, test, workers):
    cells = [(M, r, rep) for M, r in spec.configs for rep in range(spec.repetitions)]
    n_workers = worker_count() if workers is None else workers

    def run(cell):
        return _cell(spec, mode, data, domain, train, test, *cell)

    if n_workers > 1:
        with ThreadPoolExecutor(n_workers) as ex:
            rows = list(ex.map(run, cells))
    else:
        rows = [run(c) for c in cells]
    if spec.exact:
        rows.append(_exact_row(spec, mode, data, train, test))
    return rows


def run_random_validation(spec: ExperimentSpec, workers=None) -> list:
    data, domain = _data_and_domain(spec)
    train, test = random_split(len(data), spec.holdout, spec.seed)
    return _sweep(spec, "random", data, domain, train, test, workers)


def run_block_validation(spec: ExperimentSpec, workers=None) -> list:
    data, domain = _data_and_domain(spec)
    if not spec.blocks and not spec.halves:
        raise ConfigurationError("block validation needs blocks or halves=True")
    train, test = block_split(data.locations, spec.blocks, spec.halves)
    return _sweep(spec, "block", data, domain, train, test, workers)


SCORE_FIELDS = [f for f in ScoreRow.__dataclass_fields__ if f != "theta"]


def write_scores_csv(rows, path) -> None:
    """Long-format score table, one row per (method, M, r, repetition)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SCORE_FIELDS + ["theta"])
        for row in rows:
            d = asdict(row)
            w.writerow([d[k] for k in SCORE_FIELDS] + [" ".join(repr(v) for v in row.theta)])


def summarize(rows) -> dict:
    """Mean scores per (mode, method, M, r)."""
    groups = {}
    for row in rows:
        groups.setdefault((row.mode, row.method, row.M, row.r), []).append(row)
    out = []
    for (mode, method, M, r), rs in sorted(groups.items()):
        entry = {"mode": mode, "method": method, "M": M, "r": r, "repetitions": len(rs)}
        for key in ("rmse", "mae", "cov2sd", "r2", "seconds", "r2_per_second"):
            entry[key] = float(np.mean([getattr(x, key) for x in rs]))
        out.append(entry)
    return {"cells": out}


def write_summary_json(rows, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summarize(rows), fh, indent=2)
