import csv
import json
from dataclasses import asdict

import numpy as np
import pytest

from conftest import STUDY_THETA, UNIT
from stmra.covariance import CovarianceModel
from stmra.data import SpaceTimeExtent
from stmra.errors import ConfigurationError
from stmra.harness import (
    ExperimentSpec,
    block_split,
    random_split,
    run_block_validation,
    run_random_validation,
    write_scores_csv,
    write_summary_json,
)
from stmra.oracle import SimulationSpec, simulate_gp

STUDY = CovarianceModel("metric", STUDY_THETA)
SMOOTH = CovarianceModel("metric", (0.2, 0.05, 0.005, 0.5))
BOXES = (
    SpaceTimeExtent((0.1, 0.1, 0.0), (0.35, 0.35, 1.0)),
    SpaceTimeExtent((0.6, 0.55, 0.0), (0.85, 0.8, 1.0)),
)


def _sim(nx, ny, nt, cov=STUDY, seed=0):
    return SimulationSpec(nx, ny, nt, UNIT, cov, seed)


def test_split_arithmetic():
    train, test = random_split(1000, 0.9, 0)
    assert len(train) == 100 and len(test) == 900
    assert not set(train) & set(test)
    assert sorted(np.r_[train, test].tolist()) == list(range(1000))
    a, b = random_split(1000, 0.9, 0)
    np.testing.assert_array_equal(a, train)
    np.testing.assert_array_equal(b, test)


def test_empty_split_rejected():
    with pytest.raises(ConfigurationError):
        random_split(10, 0.01, 0)
    with pytest.raises(ConfigurationError):
        ExperimentSpec(STUDY, simulation=_sim(4, 4, 2), holdout=0.0)


def test_spec_needs_one_data_source():
    with pytest.raises(ConfigurationError):
        ExperimentSpec(STUDY)


def test_block_outside_data():
    locs = simulate_gp(_sim(6, 6, 3)).cell_locations()
    with pytest.raises(ConfigurationError):
        block_split(locs, (SpaceTimeExtent((2, 2, 2), (3, 3, 3)),))


def test_block_covering_everything():
    locs = simulate_gp(_sim(6, 6, 3)).cell_locations()
    with pytest.raises(ConfigurationError):
        block_split(locs, (UNIT,))


def test_three_disjoint_blocks_partition_data():
    locs = simulate_gp(_sim(10, 10, 4)).cell_locations()
    boxes = BOXES + (SpaceTimeExtent((0.5, 0.0, 0.0), (0.9, 0.3, 0.5)),)
    train, test = block_split(locs, boxes)
    assert len(train) + len(test) == len(locs)
    assert not set(train) & set(test)
    inside = np.zeros(len(locs), bool)
    for b in boxes:
        inside |= b.contains(locs)
    assert sorted(test.tolist()) == np.flatnonzero(inside).tolist()


def test_alternating_halves():
    locs = simulate_gp(_sim(6, 4, 4)).cell_locations()
    train, test = block_split(locs, halves=True)
    assert len(test) == len(locs) // 2
    times = np.unique(locs[:, 2])
    for k, t in enumerate(times):
        held = locs[test][locs[test][:, 2] == t]
        assert np.all(held[:, 0] < 0.5) if k % 2 == 0 else np.all(held[:, 0] >= 0.5)


def test_rows_and_repetitions():
    spec = ExperimentSpec(STUDY, configs=((1, 8), (2, 4)), simulation=_sim(8, 8, 4), holdout=0.5)
    rows = run_random_validation(spec, workers=1)
    assert len(rows) == 6
    assert {(r.M, r.r) for r in rows} == {(1, 8), (2, 4)}
    assert sorted(r.repetition for r in rows if r.M == 1) == [0, 1, 2]
    assert all(r.n_train + r.n_test == 256 for r in rows)


def test_scores_reproducible_and_thread_independent():
    spec = ExperimentSpec(STUDY, configs=((1, 8), (2, 8)), simulation=_sim(8, 8, 4), holdout=0.5, exact=True)

    def strip(rows):
        return [{k: v for k, v in asdict(r).items() if k not in ("seconds", "r2_per_second")} for r in rows]

    a = strip(run_random_validation(spec, workers=1))
    b = strip(run_random_validation(spec, workers=1))
    c = strip(run_random_validation(spec, workers=2))
    assert a == b == c
    assert a[-1]["method"] == "exact"


def test_fit_inside_harness():
    from stmra.estimate import FitSpec

    fs = FitSpec(STUDY_THETA, [1e-3] * 4, [1.0, 3.5, 3.5, 50.0], max_evals=40)
    spec = ExperimentSpec(STUDY, configs=((1, 8),), simulation=_sim(8, 8, 4), holdout=0.5, repetitions=1,
                          fit_spec=fs)
    (row,) = run_random_validation(spec, workers=1)
    assert row.theta != tuple(STUDY_THETA)


def test_writers(tmp_path):
    spec = ExperimentSpec(STUDY, configs=((1, 8),), simulation=_sim(8, 8, 4), holdout=0.5, averaged=True)
    rows = run_random_validation(spec, workers=1)
    write_scores_csv(rows, tmp_path / "scores.csv")
    write_summary_json(rows, tmp_path / "summary.json")
    with open(tmp_path / "scores.csv") as fh:
        table = list(csv.DictReader(fh))
    assert len(table) == 3
    assert table[0]["method"] == "mra_averaged"
    summary = json.loads((tmp_path / "summary.json").read_text())
    (cell,) = summary["cells"]
    assert cell["repetitions"] == 3
    assert cell["rmse"] == pytest.approx(np.mean([r.rmse for r in rows]))


def test_rmse_weakly_decreases_in_r():
    # scaled replica of the simulation study with true parameters fixed
    hits = {1: 0, 2: 0, 3: 0}
    for seed in range(10):
        spec = ExperimentSpec(
            STUDY,
            configs=tuple((M, r) for M in (1, 2, 3) for r in (8, 16, 32)),
            simulation=_sim(20, 20, 10, seed=seed),
            seed=seed,
        )
        rows = run_random_validation(spec, workers=1)
        for M in hits:
            rmse = [np.mean([x.rmse for x in rows if x.M == M and x.r == r]) for r in (8, 16, 32)]
            hits[M] += rmse[0] >= rmse[1] >= rmse[2]
    assert all(v >= 8 for v in hits.values()), hits


def test_block_harder_than_random():
    wins = 0
    for seed in range(10):
        sim = _sim(16, 16, 8, cov=SMOOTH, seed=seed)
        block = run_block_validation(
            ExperimentSpec(SMOOTH, configs=((2, 8),), simulation=sim, blocks=BOXES, repetitions=1, seed=seed),
            workers=1,
        )[0]
        frac = block.n_test / (block.n_test + block.n_train)
        rand = run_random_validation(
            ExperimentSpec(SMOOTH, configs=((2, 8),), simulation=sim, holdout=frac, repetitions=1, seed=seed),
            workers=1,
        )[0]
        wins += block.rmse > rand.rmse
    assert wins > 5
