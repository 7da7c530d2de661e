"""Command-line interface: ``stmra <subcommand> [options]``.

Exit codes: 0 success, 1 usage or configuration error, 2 data or file
format error, 3 numerical failure. Options can also come from a
``key = value`` file passed with ``--config``; explicit flags win.
Multi-valued options take one string, comma or space separated
(``--theta 0.2,0.05,0.05,0.02``; write ``--extent=-180,-90,0,180,90,1``
when the first value is negative).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .covariance import default_bounds, resolve_family
from .data import PointDataset, SpaceTimeExtent, as_locations
from .engine import MraModel, PredictionField, averaged_predict
from .errors import ConfigurationError, DataError, NumericalError, ParameterError
from .estimate import FitSpec, fit, suggest_config
from .harness import ExperimentSpec, run_block_validation, run_random_validation, write_scores_csv, write_summary_json
from .io import RunConfig, parse_config, parse_floats, read_dataset, read_points, read_raster, write_points, write_raster, write_table
from .oracle import SimulationSpec, score, simulate_gp
from .partition import PartitionConfig, partition


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------
# shared helpers
# --------------------------------------------------------------------------


def _extent(text):
    v = parse_floats(text)
    if len(v) != 6:
        raise ConfigurationError("extent needs six numbers: xmin ymin tmin xmax ymax tmax")
    return SpaceTimeExtent.from_arrays(v[:3], v[3:])


def _domain(args, *locsets):
    if getattr(args, "extent", None):
        return _extent(args.extent)
    locs = [as_locations(l) for l in locsets if l is not None and len(l)]
    return SpaceTimeExtent.bounding(np.vstack(locs))


def _theta(args):
    """Parameter values from a list or a fit JSON; may update family and metric."""
    if args.theta is None:
        return None
    if os.path.isfile(args.theta):
        with open(args.theta, encoding="utf-8") as fh:
            doc = json.load(fh)
        args.family = doc.get("family", args.family)
        args.metric = doc.get("metric", args.metric)
        return np.asarray(doc["theta"], float)
    return parse_floats(args.theta)


def _run_config(args, theta=()):
    return RunConfig(
        data=getattr(args, "data", None),
        family=args.family,
        metric=args.metric,
        theta=tuple(() if theta is None else theta),
        M=getattr(args, "M", 1),
        r=getattr(args, "r", 8),
        LB=tuple(parse_floats(getattr(args, "LB", "0 0 0"))),
        seed=args.seed,
        locations=getattr(args, "locations", None),
        out=getattr(args, "out", None),
    )


def _partition_config(args):
    return PartitionConfig(args.M, args.r, tuple(parse_floats(args.LB)), args.seed)


def _targets(args, data: PointDataset):
    """Prediction locations: a point file, a raster mask, or the data's gaps."""
    if args.locations is None:
        locs = data.locations[data.missing]
        if not len(locs):
            raise ConfigurationError("no prediction locations: give --locations or data with missing values")
        return locs
    try:
        return read_points(args.locations).locations
    except DataError:
        mask = read_raster(args.locations)
        return mask.cell_locations()[~np.isnan(mask.cells)]


def _emit_json(doc, out):
    text = json.dumps(doc, indent=2)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _write_prediction(pf: PredictionField, out):
    cols = {"x": pf.locations[:, 0], "y": pf.locations[:, 1], "t": pf.locations[:, 2],
            "mean": pf.mean, "variance": pf.variance}
    if out:
        write_table(out, cols)
    else:
        _print_table(cols)


def _print_table(cols):
    import io as _io

    buf = _io.StringIO()
    names = list(cols)
    buf.write(",".join(names) + "\n")
    for row in zip(*(cols[k] for k in names)):
        buf.write(",".join("%.17g" % v for v in row) + "\n")
    sys.stdout.write(buf.getvalue())


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_simulate(args):
    theta = _theta(args)
    cfg = _run_config(args, theta)
    spec = SimulationSpec(args.nx, args.ny, args.nt, _extent(args.extent), cfg.covariance(), args.seed)
    field = simulate_gp(spec)
    if args.out:
        write_raster(field, args.out)
    if args.train or args.test:
        if not (args.train and args.test):
            raise ConfigurationError("--train and --test go together")
        from .harness import random_split

        pts = field.to_points()
        train, test = random_split(len(pts), args.holdout, args.seed)
        write_points(pts.subset(train), args.train)
        write_points(pts.subset(test), args.test)
    return 0


def cmd_partition(args):
    data = read_dataset(args.data)
    obs = data.observed()
    pred = _targets(args, data) if (args.locations or data.n_observed < len(data)) else None
    tree = partition(_partition_config(args), _domain(args, data.locations, pred), obs, pred)
    _emit_json(tree.summary(), args.out)
    return 0


def _fit_defaults(family, obs: PointDataset, domain: SpaceTimeExtent):
    """Start values and bounds for the metric family, scaled to the data."""
    var = float(np.var(obs.values)) or 1.0
    span = float(max(domain.size[:2].max(), 1e-12))
    theta0 = np.array([0.5 * span, var, 0.1 * var, 1.0])
    lower = np.full(4, 1e-3) * np.array([span, var, var, 1.0])
    upper = np.array([span, 4 * var, 4 * var, 50.0])
    return theta0, lower, upper


def cmd_fit(args):
    theta0 = _theta(args)
    data = read_dataset(args.data)
    obs = data.observed()
    domain = _domain(args, obs.locations)
    family = resolve_family(args.family)
    if theta0 is None:
        if family != "metric_exponential":
            raise ConfigurationError(f"{family} needs --theta start values")
        theta0, lower, upper = _fit_defaults(family, obs, domain)
    else:
        lower, upper = default_bounds(family)
    lower = parse_floats(args.lower) if args.lower else lower
    upper = parse_floats(args.upper) if args.upper else upper
    cfg = _run_config(args, theta0)
    spec = FitSpec(theta0, lower, upper, max_evals=args.max_evals, optimizer=args.optimizer, seed=args.seed)
    model = MraModel(partition(_partition_config(args), domain, obs), cfg.covariance())
    res = fit(model, spec)
    out = args.out or "fit.json"
    trace_path = os.path.splitext(out)[0] + ".trace.csv"
    res.write_trace(trace_path)
    _emit_json(
        {
            "family": cfg.family,
            "metric": model.cov.metric,
            "theta": res.theta.tolist(),
            "loglik": res.loglik,
            "n_evals": res.n_evals,
            "converged": res.converged,
            "active_bounds": res.active_bounds.tolist(),
            "message": res.message,
            "M": args.M,
            "r": args.r,
            "seed": args.seed,
            "trace": trace_path,
        },
        out,
    )
    return 0


def cmd_predict(args):
    theta = _theta(args)
    cfg = _run_config(args, theta)
    data = read_dataset(args.data)
    obs = data.observed()
    pred = _targets(args, data)
    domain = _domain(args, data.locations, pred)
    cov = cfg.covariance()
    if args.averaged:
        pf = averaged_predict(_partition_config(args), domain, obs, pred, cov)
    else:
        pf = MraModel(partition(_partition_config(args), domain, obs, pred), cov).predict()
    _write_prediction(pf, args.out)
    return 0


def _configs(text):
    out = []
    for item in str(text).replace(";", ",").split(","):
        item = item.strip()
        if not item:
            continue
        try:
            M, r = item.split(":")
            out.append((int(M), int(r)))
        except ValueError as exc:
            raise ConfigurationError(f"config {item!r} is not of the form M:r") from exc
    if not out:
        raise ConfigurationError("no M:r configurations given")
    return tuple(out)


def _blocks(text):
    if not text:
        return ()
    return tuple(_extent(b) for b in str(text).split(";") if b.strip())


def cmd_validate(args):
    theta = _theta(args)
    cfg = _run_config(args, theta)
    common = dict(
        cov=cfg.covariance(),
        configs=_configs(args.configs),
        holdout=args.holdout,
        blocks=_blocks(args.blocks),
        halves=args.halves,
        repetitions=args.repetitions,
        seed=args.seed,
        LB=tuple(parse_floats(args.LB)),
        averaged=args.averaged,
        exact=args.exact,
    )
    if args.data:
        spec = ExperimentSpec(dataset=read_dataset(args.data), **common)
    else:
        sim = SimulationSpec(args.nx, args.ny, args.nt, _extent(args.extent), common["cov"], args.seed)
        spec = ExperimentSpec(simulation=sim, **common)
    rows = run_random_validation(spec) if args.mode == "random" else run_block_validation(spec)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    write_scores_csv(rows, os.path.join(out, "scores.csv"))
    write_summary_json(rows, os.path.join(out, "summary.json"))
    return 0


def cmd_suggest(args):
    domain = _extent(args.extent)
    config, rationale = suggest_config(args.n, domain, r=args.r, target=args.target, seed=args.seed)
    print(rationale)
    return 0


def _match(pred_locs, truth: PointDataset):
    lookup = {tuple(p): i for i, p in enumerate(truth.locations.tolist())}
    idx = []
    for p in pred_locs.tolist():
        if tuple(p) not in lookup:
            raise DataError(f"prediction location {tuple(p)} has no true value")
        idx.append(lookup[tuple(p)])
    return np.asarray(idx, dtype=int)


def _read_prediction(path) -> PredictionField:
    import csv

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["x", "y", "t", "mean", "variance"]:
            raise DataError(f"{path}:1: expected header x,y,t,mean,variance")
        rows = []
        for row in reader:
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise DataError(f"{path}:{reader.line_num}: {exc}") from exc
    arr = np.asarray(rows, float).reshape(-1, 5)
    return PredictionField(arr[:, :3], arr[:, 3], arr[:, 4], float("nan"))


def cmd_score(args):
    pf = _read_prediction(args.pred)
    truth = read_points(args.truth).observed()
    idx = _match(pf.locations, truth)
    rep = score(pf, truth.values[idx])
    cols = {k: [v] for k, v in rep.as_dict().items() if k not in ("seconds", "r2_per_second")}
    if args.out:
        write_table(args.out, {k: np.asarray(v) for k, v in cols.items()})
    else:
        _print_table(cols)
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def _add_model(p, theta_help="parameter values (list) or a fit JSON"):
    p.add_argument("--family", default="metric")
    p.add_argument("--metric", default=None)
    p.add_argument("--theta", default=None, help=theta_help)


def _add_partition(p):
    p.add_argument("--M", type=int, default=1)
    p.add_argument("--r", type=int, default=8)
    p.add_argument("--LB", default="0 0 0")
    p.add_argument("--extent", default=None, help="domain xmin ymin tmin xmax ymax tmax")


def _add_grid(p):
    p.add_argument("--nx", type=int, default=10)
    p.add_argument("--ny", type=int, default=10)
    p.add_argument("--nt", type=int, default=5)


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", default=None, help="key = value file of option defaults")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None)

    parser = _Parser(prog="stmra", description="Multi-resolution Gaussian-process tools for space-time data")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("simulate", parents=[common], help="draw an exact Gaussian-process field on a grid")
    _add_model(p)
    _add_grid(p)
    p.add_argument("--extent", default="0 0 0 1 1 1")
    p.add_argument("--holdout", type=float, default=0.9)
    p.add_argument("--train", default=None, help="write the training points here")
    p.add_argument("--test", default=None, help="write the held-out points here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("partition", parents=[common], help="print the partition tree as JSON")
    p.add_argument("--data", required=True)
    p.add_argument("--locations", default=None)
    _add_partition(p)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("fit", parents=[common], help="maximum-likelihood parameter estimation")
    p.add_argument("--data", required=True)
    _add_model(p, theta_help="start values")
    _add_partition(p)
    p.add_argument("--lower", default=None)
    p.add_argument("--upper", default=None)
    p.add_argument("--optimizer", default="neldermead", choices=["neldermead", "lbfgsb"])
    p.add_argument("--max-evals", dest="max_evals", type=int, default=500)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", parents=[common], help="predict means and variances")
    p.add_argument("--data", required=True)
    p.add_argument("--locations", default=None, help="point CSV or raster mask (NA cells skipped)")
    _add_model(p)
    _add_partition(p)
    p.add_argument("--averaged", action="store_true", help="average over nine shifted partitions")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("validate", parents=[common], help="random or block hold-out validation")
    p.add_argument("--mode", choices=["random", "block"], default="random")
    p.add_argument("--data", default=None, help="dataset; simulated from --theta when omitted")
    _add_model(p)
    _add_grid(p)
    p.add_argument("--extent", default="0 0 0 1 1 1")
    p.add_argument("--configs", default="1:8", help="comma-separated M:r pairs")
    p.add_argument("--LB", default="0 0 0")
    p.add_argument("--holdout", type=float, default=0.9)
    p.add_argument("--blocks", default=None, help="semicolon-separated boxes of six numbers")
    p.add_argument("--halves", action="store_true", help="hold out alternating x-halves per time slice")
    p.add_argument("--repetitions", type=int, default=3)
    p.add_argument("--averaged", action="store_true")
    p.add_argument("--exact", action="store_true", help="add an exact kriging row")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("suggest", parents=[common], help="suggest M for a data size")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--r", type=int, default=8)
    p.add_argument("--target", type=int, default=100, help="observations per leaf")
    p.add_argument("--extent", default="0 0 0 1 1 1")
    p.set_defaults(func=cmd_suggest)

    p = sub.add_parser("score", parents=[common], help="score a prediction CSV against true values")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.set_defaults(func=cmd_score)
    return parser


def _apply_config(parser, argv):
    """Re-parse with defaults taken from the ``--config`` file, if any."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    choices = parser._subparsers._group_actions[0].choices
    command = next((a for a in argv if a in choices), None)
    if not known.config or command is None:
        return parser.parse_args(argv)
    values = parse_config(known.config)
    sub = choices[command]
    dests = {a.dest: a for a in sub._actions}
    unknown = sorted(set(values) - set(dests))
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
    defaults = {}
    for key, raw in values.items():
        action = dests[key]
        if action.const is True and action.nargs == 0:
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        else:
            defaults[key] = raw
            action.required = False
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        return int(args.func(args) or 0)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConfigurationError, ParameterError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
