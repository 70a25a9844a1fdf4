"""Command-line entry point: generate | run | verify | convergence | equivalence.

Exit codes: 0 success, 1 usage/config error, 2 verification failure, 3 data/runtime error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import os
import sys
from typing import Optional

import numpy as np

from .config import FIELDS, ConfigError, RunConfig, load_config
from .data import (DataFormatError, LabeledDataset, default_modes, gen_drift_stream, gen_swiss_roll,
                   SwissRollParams, load_csv, split_by_mode)
from .evaluation import DegenerateConfigurationError, procrustes_error, theoretical_threshold
from .geometry import DisconnectedGraphError, PointCloud
from .manifold import ClusteringError, UnderdeterminedTransformError, batch_phase
from .plotting import line_plot, scatter_plot
from .spectral import DimensionError
from .streaming import (StreamAborted, calibrate_threshold, primary_verdicts, process_stream,
                        variance_trace)
from .verify import THRESHOLD_INPUTS, convergence_harness, equivalence_harness, run_suite

log = logging.getLogger("gpisomap")

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_DATA = 0, 1, 2, 3

DATA_ERRORS = (DataFormatError, ClusteringError, DisconnectedGraphError, DimensionError,
               UnderdeterminedTransformError, DegenerateConfigurationError, StreamAborted, OSError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- number formatting --------------------------------------------------------

def fmt(x) -> str:
    return "%.9g" % x


def _json_ready(obj):
    if isinstance(obj, dict):
        return {str(k): _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_ready(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(fmt(x)) if math.isfinite(x) else None
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_json_ready(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_jsonl(path, rows):
    with open(path, "w") as fh:
        for r in rows:
            fh.write(json.dumps(_json_ready(r), sort_keys=True) + "\n")


# -- dataset files ------------------------------------------------------------

def write_dataset(out_dir, ds: LabeledDataset, schedule, known_modes, seed):
    os.makedirs(out_dir, exist_ok=True)
    D = ds.cloud.dim
    with open(os.path.join(out_dir, "dataset.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "mode", "split"] + [f"y{j + 1}" for j in range(D)])
        for pid, m, s, p in zip(ds.cloud.ids, ds.mode, ds.split, ds.cloud.points):
            w.writerow([int(pid), int(m), s] + [fmt(v) for v in p])
    with open(os.path.join(out_dir, "truth.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id"] + [f"t{j + 1}" for j in range(ds.truth.shape[1])])
        for pid, t in zip(ds.cloud.ids, ds.truth):
            w.writerow([int(pid)] + [fmt(v) for v in t])
    write_json(os.path.join(out_dir, "schedule.json"),
               {"schedule": schedule, "known_modes": list(known_modes), "seed": seed})


def read_dataset(data_dir) -> tuple:
    """Load files written by ``generate``; returns ``(dataset, schedule_info)``."""
    path = os.path.join(data_dir, "dataset.csv")
    if not os.path.exists(path):
        raise DataFormatError(f"{path} not found; run 'generate' first or set input_csv")
    ids, modes, splits, pts = [], [], [], []
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        head = next(rows, None)
        if head is None or head[:3] != ["id", "mode", "split"]:
            raise DataFormatError(f"{path}: expected header id,mode,split,y1,...")
        for lineno, row in enumerate(rows, start=2):
            if len(row) != len(head):
                raise DataFormatError(f"{path}:{lineno}: expected {len(head)} fields, got {len(row)}")
            try:
                ids.append(int(row[0]))
                modes.append(int(row[1]))
                pts.append([float(v) for v in row[3:]])
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}")
            splits.append(row[2])
    truth = None
    tpath = os.path.join(data_dir, "truth.csv")
    if os.path.exists(tpath):
        by_id = {}
        with open(tpath, newline="") as fh:
            rows = csv.reader(fh)
            next(rows, None)
            for lineno, row in enumerate(rows, start=2):
                try:
                    by_id[int(row[0])] = [float(v) for v in row[1:]]
                except (ValueError, IndexError) as exc:
                    raise DataFormatError(f"{tpath}:{lineno}: {exc}")
        missing = [i for i in ids if i not in by_id]
        if missing:
            raise DataFormatError(f"{tpath}: no truth for id {missing[0]}")
        truth = np.array([by_id[i] for i in ids])
    info = {}
    spath = os.path.join(data_dir, "schedule.json")
    if os.path.exists(spath):
        with open(spath) as fh:
            info = json.load(fh)
    mode = np.array(modes)
    cloud = PointCloud(np.array(pts), np.array(ids), mode)
    return LabeledDataset(cloud, truth, mode, np.array(splits)), info


def synth_dataset(cfg: RunConfig) -> LabeledDataset:
    return gen_swiss_roll(SwissRollParams(default_modes(cfg.n_modes, cfg.mode_sigma), cfg.n_per_mode, cfg.seed))


def csv_dataset(cfg: RunConfig):
    label = cfg.label_column
    if isinstance(label, str) and not cfg.header and label.isdigit():
        label = int(label)
    ds = load_csv(cfg.input_csv, cfg.feature_columns, label, cfg.normalize, cfg.header)
    if ds.mode is None:
        raise DataFormatError(f"{cfg.input_csv}: a label column is needed to form batch and stream")
    ds = split_by_mode(ds, cfg.test_fraction, cfg.seed)
    classes = sorted(set(ds.cloud.labels.tolist()))

    def to_mode(m):
        if isinstance(m, str):
            if m not in classes:
                raise ConfigError(f"label {m!r} not present in {cfg.input_csv}")
            return classes.index(m)
        return int(m)

    known = [to_mode(m) for m in cfg.known_modes]
    schedule = []
    for entry in cfg.schedule:
        ms = entry[0] if isinstance(entry[0], list) else [entry[0]]
        schedule.append([[to_mode(m) for m in ms]] + list(entry[1:]))
    return ds, known, schedule


# -- commands -----------------------------------------------------------------

def cmd_generate(cfg: RunConfig) -> int:
    out = cfg.data_dir or cfg.resolved_output()
    ds = synth_dataset(cfg)
    _check_schedule(cfg.schedule, cfg.n_modes)
    write_dataset(out, ds, cfg.schedule, cfg.known_modes, cfg.seed)
    counts = {s: int(np.sum(ds.split == s)) for s in ("train", "test")}
    print(f"wrote {ds.n} points ({cfg.n_modes} modes x {cfg.n_per_mode}; train {counts['train']}, "
          f"test {counts['test']}) to {out}")
    return EXIT_OK


def _check_schedule(schedule, n_modes):
    for entry in schedule:
        ms = entry[0] if isinstance(entry[0], list) else [entry[0]]
        bad = [m for m in ms if not 0 <= int(m) < n_modes]
        if bad:
            raise ConfigError(f"schedule mode(s) {bad} outside 0..{n_modes - 1}")


def _segment_bounds(schedule):
    bounds, pos = [], 0
    for entry in schedule:
        pos += int(entry[1])
        bounds.append(pos)
    return bounds


def cmd_run(cfg: RunConfig) -> int:
    out = cfg.resolved_output()
    if cfg.input_csv:
        ds, known, schedule = csv_dataset(cfg)
    else:
        if not cfg.data_dir:
            raise ConfigError("run needs --data-dir (from 'generate') or --input-csv")
        ds, _ = read_dataset(cfg.data_dir)
        known = cfg.known_modes
        schedule = cfg.schedule
    params = cfg.batch_params()
    rng = np.random.default_rng(cfg.seed)

    train = ds.select(known, "train")
    if train.n == 0:
        raise DataFormatError("no training points for the known modes")
    validation = None
    if cfg.sigma_t is None:
        n_val = min(cfg.validation_size, train.n // 5)
        if n_val < 1:
            raise DataFormatError("too few training points to hold out a validation split")
        val_mask = np.zeros(train.n, dtype=bool)
        val_mask[rng.permutation(train.n)[:n_val]] = True
        validation = train.subset(np.flatnonzero(val_mask))
        train = train.subset(np.flatnonzero(~val_mask))
    stream = gen_drift_stream(ds, schedule, seed=cfg.seed)

    atlas = batch_phase(train.cloud, params)
    if cfg.sigma_t is None:
        sigma_t = calibrate_threshold(atlas, validation.cloud, cfg.calibration_percentile)
        sigma_source = f"calibrated (p{fmt(cfg.calibration_percentile)} of {validation.n} validation points)"
    else:
        sigma_t = float(cfg.sigma_t)
        sigma_source = "config"
    log.info("batch: %d points, %d clusters; sigma_t=%s", train.n, atlas.p, fmt(sigma_t))

    aborted = None
    try:
        verdicts, final_atlas, events = process_stream(atlas, stream.cloud, sigma_t, cfg.n_s, params)
    except StreamAborted as exc:
        aborted = exc
        verdicts, final_atlas, events = exc.verdicts, None, exc.events

    os.makedirs(out, exist_ok=True)
    _write_embeddings(os.path.join(out, "embeddings.csv"), verdicts, stream)
    write_jsonl(os.path.join(out, "events.jsonl"), events)
    metrics = _metrics(cfg, ds, train, stream, atlas, final_atlas, verdicts, events, sigma_t, sigma_source, schedule)
    if aborted is not None:
        metrics["aborted"] = str(aborted)
    write_json(os.path.join(out, "metrics.json"), metrics)
    if cfg.plots:
        _plots(out, verdicts, sigma_t, cfg.window, schedule)
    print(f"stream of {stream.n} points: {metrics['unassigned']} unassigned, {len(events)} event(s), "
          f"sigma_t={fmt(sigma_t)}; outputs in {out}")
    if aborted is not None:
        print(f"error: {aborted}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def _write_embeddings(path, verdicts, stream):
    width = max((len(v.coords) for v in verdicts if v.coords is not None), default=0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "id", "mode", "cluster"] + [f"g{j + 1}" for j in range(width)]
                   + ["variance", "assigned", "reemitted"])
        for v in verdicts:
            mode = "" if stream.mode is None else int(stream.mode[v.index])
            coords = [fmt(x) for x in v.coords] if v.coords is not None else []
            coords += [""] * (width - len(coords))
            w.writerow([v.index, v.point_id, mode, v.cluster] + coords
                       + [fmt(v.variance), int(v.assigned), int(v.reemitted)])


def _metrics(cfg, ds, train, stream, atlas, final_atlas, verdicts, events, sigma_t, sigma_source, schedule):
    prim = primary_verdicts(verdicts)
    var = np.array([v.variance for v in prim])
    m = {
        "n_batch": train.n, "n_stream": stream.n, "sigma_t": sigma_t, "sigma_t_source": sigma_source,
        "n_s": cfg.n_s, "clusters_initial": atlas.p,
        "clusters_final": final_atlas.p if final_atlas is not None else None,
        "relearn_events": sum(1 for e in events if e.get("event") == "relearn"),
        "unassigned": int(sum(not v.assigned for v in prim)),
        "variance_mean": float(var.mean()) if var.size else None,
        "cluster_hyperparameters": [{"ell": cm.gp.ell, "sigma_n_sq": cm.gp.sigma_n_sq, "n": cm.cloud.n,
                                     "log_likelihood": cm.gp.log_likelihood} for cm in atlas.clusters],
        "clamped_variance": int(sum(cm.gp.diagnostics["clamped_variance"] for cm in atlas.clusters)),
    }
    seg, lo = [], 0
    for entry, hi in zip(schedule, _segment_bounds(schedule)):
        part = var[lo:hi]
        seg.append({"modes": entry[0], "start": lo, "stop": hi,
                    "variance_mean": float(part.mean()) if part.size else None,
                    "assigned_fraction": float(np.mean([v.assigned for v in prim[lo:hi]])) if part.size else None})
        lo = hi
    m["segments"] = seg
    if ds.truth is not None and train.truth is not None:
        per_cluster = []
        for i, cm in enumerate(atlas.clusters):
            rows = atlas.assignment.members(i)
            try:
                per_cluster.append(procrustes_error(train.truth[rows].T, cm.embedding.coords))
            except (ValueError, DegenerateConfigurationError):
                per_cluster.append(None)
        m["batch_procrustes_per_cluster"] = per_cluster
        assigned = [v for v in prim if v.assigned]
        if len(assigned) >= 3:
            A = stream.truth[[v.index for v in assigned]].T
            B = np.column_stack([v.coords for v in assigned])
            if A.shape[0] == B.shape[0]:
                m["stream_procrustes_assigned"] = procrustes_error(A, B)
    return m


def _plots(out, verdicts, sigma_t, window, schedule):
    prim = primary_verdicts(verdicts)
    var = np.array([v.variance for v in prim])
    if var.size:
        trace = variance_trace(prim, window)
        line_plot(os.path.join(out, "variance_trace.svg"), [trace], [f"running mean ({window})"],
                  title="Predictive variance", xlabel="stream index", ylabel="variance",
                  hline=sigma_t if math.isfinite(sigma_t) else None,
                  vlines=_segment_bounds(schedule)[:-1], scatter=var)
    pts = [(v.coords[0], v.coords[1] if len(v.coords) > 1 else 0.0, v.cluster) for v in prim if v.assigned]
    if pts:
        arr = np.array(pts)
        scatter_plot(os.path.join(out, "embedding.svg"), arr[:, :2], arr[:, 2].astype(int),
                     title="Stream embedding (global space)")


def cmd_verify(args) -> int:
    out = args.output_dir or RunConfig().resolved_output()
    report = run_suite(fault=args.fault, quick=args.quick, seed=args.seed)
    os.makedirs(out, exist_ok=True)
    write_json(os.path.join(out, "verify_report.json"), report)
    for c in report["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['suite']}.{c['name']} value={fmt(c['value'])} tol={fmt(c['tol'])}")
    print(f"{'all checks passed' if report['passed'] else str(len(report['failed'])) + ' check(s) failed'}; "
          f"report in {os.path.join(out, 'verify_report.json')}")
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def cmd_convergence(args) -> int:
    out = args.output_dir or RunConfig().resolved_output()
    sizes = [int(s) for s in args.sizes.split(",")]
    checks = convergence_harness(sizes=sizes, seeds=range(args.seeds), k_graph=args.k_graph)
    os.makedirs(out, exist_ok=True)
    write_json(os.path.join(out, "convergence.json"), {"checks": checks})
    plateau = next((c for c in checks if c["name"] == "plateau_ratio_550_2000"), None)
    if plateau is not None:
        line_plot(os.path.join(out, "convergence.svg"), [plateau["mean_error"]], ["mean Procrustes error"],
                  title="Isomap error vs batch size", xlabel="size index (" + args.sizes + ")", ylabel="error")
    n0 = theoretical_threshold(THRESHOLD_INPUTS)
    for c in checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']} value={fmt(c['value'])}")
    print(f"theoretical n0={fmt(n0)}; empirical plateau near 550")
    return EXIT_OK if all(c["passed"] for c in checks) else EXIT_VERIFY


def cmd_equivalence(args) -> int:
    out = args.output_dir or RunConfig().resolved_output()
    checks = equivalence_harness(n_batch=args.n_batch, n_stream=args.n_stream, seed=args.seed)
    os.makedirs(out, exist_ok=True)
    write_json(os.path.join(out, "equivalence.json"), {"checks": checks})
    for c in checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']} value={fmt(c['value'])}")
    return EXIT_OK if all(c["passed"] for c in checks) else EXIT_VERIFY


# -- argument parsing ---------------------------------------------------------

def _json_arg(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        raise argparse.ArgumentTypeError(f"not valid JSON: {text!r}")


def _float_arg(text):
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")


_OVERRIDE_TYPES = {"sigma_t": _float_arg, "input_csv": str, "label_column": str, "data_dir": str,
                   "output_dir": str, "feature_columns": _json_arg}


def _add_overrides(p):
    p.add_argument("--config", help="JSON config file; flags override its values")
    for name, f in FIELDS.items():
        flag = "--" + name.replace("_", "-")
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        if isinstance(default, bool):
            p.add_argument(flag, dest=name, action=argparse.BooleanOptionalAction, default=None)
        elif name in _OVERRIDE_TYPES:
            p.add_argument(flag, dest=name, type=_OVERRIDE_TYPES[name], default=None)
        elif isinstance(default, list):
            p.add_argument(flag, dest=name, type=_json_arg, default=None, metavar="JSON")
        elif isinstance(default, float):
            p.add_argument(flag, dest=name, type=_float_arg, default=None)
        else:
            p.add_argument(flag, dest=name, type=type(default), default=None)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gpisomap", description="Streaming manifold learning with GP predictive variance.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, helptext in [("generate", "write a synthetic multi-mode swiss-roll dataset"),
                           ("run", "batch phase + streaming phase; write embeddings, events, metrics, plots")]:
        _add_overrides(sub.add_parser(name, help=helptext))
    v = sub.add_parser("verify", help="dense-oracle and harness verification suite")
    v.add_argument("--fault", action="store_true", help="corrupt kernel coefficients (negative control)")
    v.add_argument("--quick", action="store_true", help="oracle and equivalence checks only")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--output-dir")
    c = sub.add_parser("convergence", help="Isomap error vs batch size and the theoretical threshold")
    c.add_argument("--sizes", default="100,250,550,1000,2000")
    c.add_argument("--seeds", type=int, default=5)
    c.add_argument("--k-graph", type=int, default=10)
    c.add_argument("--output-dir")
    e = sub.add_parser("equivalence", help="GP means vs S-Isomap projections over length scales")
    e.add_argument("--n-batch", type=int, default=500)
    e.add_argument("--n-stream", type=int, default=200)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--output-dir")
    return p


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in ("generate", "run"):
            overrides = {k: getattr(args, k) for k in FIELDS}
            cfg = load_config(args.config, overrides)
            return cmd_generate(cfg) if args.command == "generate" else cmd_run(cfg)
        return {"verify": cmd_verify, "convergence": cmd_convergence, "equivalence": cmd_equivalence}[args.command](args)
    except (ConfigError, UsageError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        if isinstance(exc, DATA_ERRORS):
            print(f"data error: {exc}", file=sys.stderr)
            return EXIT_DATA
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
