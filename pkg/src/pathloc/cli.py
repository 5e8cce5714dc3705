"""Command-line front end.

Every command writes its output under ``--out-dir`` in a file named after
the digest of the resolved configuration, and prints a short JSON summary
on stdout. Exit codes: 0 success, 2 invalid input, 3 numeric failure,
4 budget exceeded.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .bounds import ThetaTable, bound_all, rgg_closed_form
from .errors import PathLocError, ValidationError
from .experiments import (
    BENCHMARK_COLUMNS,
    MULTIPATH_COLUMNS,
    SWEEP_COLUMNS,
    THRESHOLD_COLUMNS,
    TRIAL_COLUMNS,
    ExperimentConfig,
    benchmark,
    distance_mode,
    load_graph,
    make_partition,
    multipath_curves,
    prepare,
    run_trial,
    sweep,
    sweep_threshold,
    trial_seeds,
)
from .graph import generate_rgg, load_edge_list, random_walk_path
from .signal import NoiseModel

log = logging.getLogger("pathloc")

COLUMN_HELP = f"""\
CSV schemas (header row is fixed):
  simulate   {", ".join(TRIAL_COLUMNS)}
  sweep      {", ".join(SWEEP_COLUMNS)}
  threshold  {", ".join(THRESHOLD_COLUMNS)}
  benchmark  {", ".join(BENCHMARK_COLUMNS)}
  multipath  {", ".join(MULTIPATH_COLUMNS)}
Hamming columns are normalized by T (by k*T for multipath); bound columns
are the trial-averaged bounds on the same scale. Chain files have columns t,id,truth.
"""


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k)) for k in columns})


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _emit(summary):
    print(json.dumps(summary, sort_keys=True))


# ---------------------------------------------------------------------------
# config resolution


def _add_graph_flags(p):
    g = p.add_argument_group("graph")
    g.add_argument("--graph", help="graph JSON or edge-list file (overrides the RGG flags)")
    g.add_argument("--n", type=int, help="RGG node count")
    g.add_argument("--r", type=float, help="RGG connection radius")
    g.add_argument("--intensity", type=float, help="RGG Poisson intensity, used when --n is absent")
    g.add_argument("--graph-seed", type=int, help="RGG seed (defaults to the config's)")


def _add_partition_flags(p):
    g = p.add_argument_group("partition")
    g.add_argument("--partition", choices=("square", "hub", "file", "singleton"))
    g.add_argument("--B", type=int, nargs="+", help="squares per side; several values sweep m")
    g.add_argument("--hub-k", type=int, help="hubs removed per round")
    g.add_argument("--hub-c", type=int, help="largest component kept as a cluster")
    g.add_argument("--partition-file", help="'node cluster' lines")


def _add_run_flags(p, snr_list=True):
    g = p.add_argument_group("run")
    g.add_argument("--T", type=int, help="path length")
    g.add_argument("--trials", type=int)
    if snr_list:
        g.add_argument("--snrs", type=float, nargs="+", help="mu/sigma grid (sigma = 1)")
    g.add_argument("--snr", type=float, help="single mu/sigma value")


def resolve_config(args):
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    upd = {}
    if args.seed is not None:
        upd["seed"] = args.seed
    if args.out_dir is not None:
        upd["out_dir"] = args.out_dir
    if args.threads is not None:
        upd["threads"] = args.threads
    graph = dict(cfg.graph)
    if getattr(args, "graph", None):
        graph = {"kind": "file", "path": str(args.graph)}
    else:
        for flag, key in (("n", "n"), ("r", "radius"), ("intensity", "intensity"), ("graph_seed", "seed")):
            val = getattr(args, flag, None)
            if val is not None:
                graph = {**graph, "kind": "rgg", key: val}
        if getattr(args, "intensity", None) is not None and getattr(args, "n", None) is None:
            graph.pop("n", None)
    upd["graph"] = graph
    method = getattr(args, "method", None) or getattr(args, "partition", None)
    if method is None:
        if getattr(args, "partition_file", None):
            method = "file"
        elif getattr(args, "hub_k", None) or getattr(args, "hub_c", None):
            method = "hub"
        elif getattr(args, "B", None):
            method = "square"
    if method == "square":
        Bs = args.B or [p["B"] for p in cfg.partitions if p.get("method") == "square"] or [10]
        upd["partitions"] = [{"method": "square", "B": b} for b in Bs]
    elif method == "hub":
        upd["partitions"] = [{"method": "hub", "k": args.hub_k, "c": args.hub_c}]
    elif method == "file":
        if not args.partition_file:
            raise ValidationError("--partition file needs --partition-file")
        upd["partitions"] = [{"method": "file", "path": str(args.partition_file)}]
    elif method == "singleton":
        upd["partitions"] = [{"method": "singleton"}]
    for flag in ("T", "trials", "decoder"):
        val = getattr(args, flag, None)
        if val is not None:
            upd[flag] = val
    snrs = getattr(args, "snrs", None)
    if getattr(args, "snr", None) is not None:
        snrs = [args.snr]
    if snrs:
        upd["snrs"] = list(snrs)
    return replace(cfg, **upd)


def graph_of(cfg):
    return load_graph(cfg.graph)


def _out(cfg, stem, digest, suffix):
    d = Path(cfg.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d / f"{stem}-{digest}.{suffix}"


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args):
    out = Path(args.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "rgg":
        n = args.n if args.n is not None else (None if args.intensity is not None else 20000)
        g = generate_rgg(intensity=args.intensity, radius=args.r, seed=args.seed or 0, n=n)
    else:
        if not args.input:
            raise ValidationError("edgelist needs --input")
        g = load_edge_list(Path(args.input).read_text())
    text = g.to_json()
    digest = hashlib.sha256(text.encode()).hexdigest()[:16]
    path = out / f"graph-{digest}.json"
    path.write_text(text)
    _emit({"graph": str(path), "n": g.n, "edges": g.num_edges, "isolated": int((g.degree == 0).sum())})


def cmd_partition(args):
    cfg = resolve_config(args)
    g = graph_of(cfg)
    rows = []
    for spec in cfg.partitions:
        part, sg = make_partition(g, spec)
        text = part.to_text(g.labels)
        digest = hashlib.sha256((cfg.digest + text).encode()).hexdigest()[:16]
        path = _out(cfg, "partition", digest, "txt")
        path.write_text(text)
        rows.append(
            {
                "partition": str(path),
                "m": part.m,
                "largestCluster": int(part.sizes.max()),
                "superEdges": sg.num_edges,
                "selfLoops": int(sg.self_loop.sum()),
            }
        )
    _emit(rows[0] if len(rows) == 1 else rows)


def _write_chain(cfg, digest, trial, fine, truth, rec):
    path = _out(cfg, f"chain-t{trial}", digest, "csv")
    with open(path, "w") as fh:
        fh.write("t,id,truth\n")
        for t, (a, b) in enumerate(zip(fine.ids, truth)):
            fh.write(f"{t},{int(a)},{int(b)}\n")
    summary = {
        "sumSignal": fine.sum_signal,
        "connected": fine.connected,
        "hamming": rec["hammingFine"],
        "destination": rec["dest"],
        "wallTimeMs": rec["decodeStepMs"] * cfg.T,
        "snr": rec["snr"],
        "configDigest": digest,
    }
    path.with_suffix(".json").write_text(json.dumps(summary, sort_keys=True) + "\n")
    return path


def cmd_simulate(args):
    cfg = resolve_config(args)
    g = graph_of(cfg)
    setup = prepare(g, cfg.partitions[0])
    digest = cfg.digest
    chains = {}

    def keep(rec, truth, fine):
        if rec["trial"] < args.chains:
            chains[rec["trial"]] = (fine, truth.nodes, rec)

    rows = []
    for snr in cfg.snrs:
        rows.extend(run_trial(setup, cfg, snr, t, on_trial=keep) for t in range(cfg.trials))
    path = _out(cfg, "trials", digest, "csv")
    write_csv(path, TRIAL_COLUMNS, rows)
    files = [str(_write_chain(cfg, digest, t, *chains[t])) for t in sorted(chains)]
    _emit(
        {
            "trials": str(path),
            "chains": files,
            "rows": len(rows),
            "m": setup.m,
            "meanHammingFine": sum(r["hammingFine"] for r in rows) / (len(rows) * cfg.T),
            "configDigest": digest,
        }
    )


def cmd_bound(args):
    cfg = resolve_config(args)
    g = graph_of(cfg)
    setup = prepare(g, cfg.partitions[0])
    mode = distance_mode(cfg, g)
    reports = []
    for snr in cfg.snrs:
        tab = ThetaTable(NoiseModel(snr))
        for trial in range(cfg.trials):
            path_seed, _ = trial_seeds(cfg.seed, trial)
            truth = random_walk_path(g, cfg.T, seed=path_seed).project(setup.partition)
            res = bound_all(setup.supergraph, truth, tab, g, setup.partition, metric=mode)
            if setup.spec.get("method") == "square":
                res["rggClosedForm"] = rgg_closed_form(tab.noise, int(setup.partition.sizes.max()), cfg.T)
            for rep in res.values():
                reports.append({"trial": trial, "snr": snr, **json.loads(rep.to_json())})
    path = _out(cfg, "bounds", cfg.digest, "json")
    path.write_text(json.dumps(reports, indent=1))
    _emit({"bounds": str(path), "reports": len(reports), "configDigest": cfg.digest})


def cmd_sweep(args):
    cfg = resolve_config(args)
    if args.threshold:
        target = args.target
        if target is None:
            target = 0.05 if args.threshold == "hamming" else 0.01
        upd = {"target_metric": args.threshold, "target": target}
        if args.bracket:
            upd["bracket"] = list(args.bracket)
        if args.resolution:
            upd["resolution"] = args.resolution
        cfg = replace(cfg, **upd)
    if args.no_bounds:
        cfg = replace(cfg, bounds=False)
    g = graph_of(cfg)
    if args.threshold:
        rows = sweep_threshold(g, cfg)
        path = _out(cfg, "threshold", cfg.digest, "csv")
        write_csv(path, THRESHOLD_COLUMNS, rows)
    else:
        rows = sweep(g, cfg)
        path = _out(cfg, "sweep", cfg.digest, "csv")
        write_csv(path, SWEEP_COLUMNS, rows)
    _emit({"csv": str(path), "rows": len(rows), "configDigest": cfg.digest})


def cmd_benchmark(args):
    cfg = resolve_config(args)
    if args.repeats:
        cfg = replace(cfg, repeats=args.repeats)
    g = graph_of(cfg)
    rows = [benchmark(g, cfg, spec) for spec in cfg.partitions]
    path = _out(cfg, "benchmark", cfg.digest, "csv")
    write_csv(path, BENCHMARK_COLUMNS, rows)
    _emit({"csv": str(path), "speedup": [r["speedup"] for r in rows], "configDigest": cfg.digest})


def cmd_multipath(args):
    cfg = resolve_config(args)
    if args.k:
        cfg = replace(cfg, ks=list(args.k))
    g = graph_of(cfg)
    rows = multipath_curves(g, cfg)
    path = _out(cfg, "multipath", cfg.digest, "csv")
    write_csv(path, MULTIPATH_COLUMNS, rows)
    _emit({"csv": str(path), "rows": len(rows), "configDigest": cfg.digest})


def _add_global_flags(p, default):
    p.add_argument("--seed", type=int, default=default, help="base seed for walks and noise")
    p.add_argument("--out-dir", default=default, help="directory for output files (default .)")
    p.add_argument("--config", default=default, help="JSON experiment config; flags override it")
    p.add_argument("--threads", type=int, default=default, help="trials run concurrently")
    p.add_argument("-v", "--verbose", action="store_true", default=default or False)


def build_parser():
    p = argparse.ArgumentParser(
        prog="pathloc",
        description="Localize a path signal on a graph from noisy node observations.",
        epilog=COLUMN_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _add_global_flags(p, None)
    # the global flags are also accepted after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    _add_global_flags(common, argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    s = add("generate", help="write a graph JSON file")
    s.add_argument("kind", choices=("rgg", "edgelist"))
    s.add_argument("--n", type=int)
    s.add_argument("--r", type=float, default=0.02)
    s.add_argument("--intensity", type=float)
    s.add_argument("--input", help="edge-list file for 'edgelist'")
    s.set_defaults(func=cmd_generate)

    s = add("partition", help="partition a graph and write 'node cluster' lines")
    s.add_argument("method", nargs="?", choices=("square", "hub", "file", "singleton"), help="same as --partition")
    _add_graph_flags(s)
    _add_partition_flags(s)
    s.set_defaults(func=cmd_partition)

    s = add("simulate", help="per-trial error rows", epilog=COLUMN_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_graph_flags(s)
    _add_partition_flags(s)
    _add_run_flags(s)
    s.add_argument("--decoder", choices=("multiscale", "exact", "naive"))
    s.add_argument("--chains", type=int, default=1, help="write chain files for the first N trials")
    s.set_defaults(func=cmd_simulate)

    s = add("bound", help="bound reports for simulated true paths")
    _add_graph_flags(s)
    _add_partition_flags(s)
    _add_run_flags(s)
    s.set_defaults(func=cmd_bound)

    s = add("sweep", help="error and bound curves over SNR, or threshold SNRs", epilog=COLUMN_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_graph_flags(s)
    _add_partition_flags(s)
    _add_run_flags(s)
    s.add_argument("--threshold", choices=("hamming", "destination"), help="bisect for the threshold SNR")
    s.add_argument("--target", type=float, help="default 0.05 for hamming, 0.01 for destination")
    s.add_argument("--bracket", type=float, nargs=2, metavar=("LO", "HI"))
    s.add_argument("--resolution", type=float)
    s.add_argument("--no-bounds", action="store_true", help="skip bound evaluation")
    s.set_defaults(func=cmd_sweep)

    s = add("benchmark", help="per-step exact vs multiscale decode time")
    _add_graph_flags(s)
    _add_partition_flags(s)
    _add_run_flags(s)
    s.add_argument("--repeats", type=int)
    s.set_defaults(func=cmd_benchmark)

    s = add("multipath", help="set-based Hamming curves for several paths")
    _add_graph_flags(s)
    _add_partition_flags(s)
    _add_run_flags(s)
    s.add_argument("--k", type=int, nargs="+", help="path counts")
    s.set_defaults(func=cmd_multipath)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except PathLocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MemoryError:
        print("error: out of memory", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
