"""Command line front end.

Subcommands ``simulate``, ``embed``, ``evaluate``, ``clt`` and ``cluster`` read
a TOML config (``--config``) whose tables are named after the subcommands,
plus a shared ``[model]`` table.  Outputs go to ``--out`` together with a
``manifest.json`` holding the config hash, seeds, counts and file digests.

Exit codes: 0 ok, 2 config or argument error, 3 invalid model, 4 bad data,
5 numerical failure.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io as fio
from .align import MODES
from .binning import bin_events
from .clt import SCALINGS, normality_report, studentize
from .cluster import agglomerative_cluster, compare_partitions, normalize_and_smooth, trajectory_distances
from .embed import duase, select_dimension
from .errors import ConfigError, MippError
from .experiments import ERROR_KEYS, TruthCache, fit_rates, run_sweep
from .model import build_block_model, build_group_wave_model, spec_from_dict
from .simulate import (read_events_csv, read_events_jsonl, sample_events, sample_histogram,
                       write_events_csv, write_events_jsonl)

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("mippdpg")

THREADS_ENV = "MIPPDPG_THREADS"
CONFIG_DIR = Path(__file__).parent / "configs"


# ---------------------------------------------------------------------------
# config handling

def load_config(path):
    """Parse a TOML config; ``None`` gives an empty config.

    A bare name such as ``smooth`` resolves to a bundled config file.
    """
    if path is None:
        return {}
    p = Path(path)
    if not p.exists() and (CONFIG_DIR / f"{path}.toml").exists():
        p = CONFIG_DIR / f"{path}.toml"
    if not p.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        with open(p, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from exc


def config_hash(cfg) -> str:
    return hashlib.sha256(fio.canonical_json(cfg).encode()).hexdigest()


def _section(cfg, name):
    sec = cfg.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    return sec


def _int_list(value, name):
    vals = value if isinstance(value, list) else [value]
    if not vals:
        raise ConfigError(f"{name} must be a nonempty list")
    try:
        out = [int(v) for v in vals]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must contain integers") from exc
    return out


def _seeds(sec, args, name):
    if args.seed is not None:
        return [args.seed]
    seeds = _int_list(sec.get("seeds", [0]), f"[{name}].seeds")
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"[{name}].seeds must be distinct")
    return seeds


def model_factory(cfg):
    """Return ``n_nodes -> LatentModel`` for the ``[model]`` table."""
    mcfg = _section(cfg, "model")
    preset = mcfg.get("preset", "smooth")
    n_layers = mcfg.get("n_layers")
    if preset == "waves":
        kw = dict(n_layers=int(n_layers or 10), n_groups=int(mcfg.get("n_groups", 6)),
                  dim=int(mcfg.get("dim", 10)), seed=int(mcfg.get("structure_seed", 0)))
        return lambda n: build_group_wave_model(n, **kw)
    spec = spec_from_dict({**mcfg, "preset": preset} if "dynamic" not in mcfg else mcfg)
    return lambda n: build_block_model(spec, n, n_layers)


def _model_nodes(cfg, sec):
    return int(sec.get("n_nodes", _section(cfg, "model").get("n_nodes", 100)))


# ---------------------------------------------------------------------------
# output helpers

class Outputs:
    """Tracks written files so the manifest can list their digests."""

    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files = []

    def path(self, name):
        self.files.append(name)
        return self.dir / name

    def manifest(self, command, cfg, **extra):
        body = {
            "command": command,
            "config": cfg,
            "config_sha256": config_hash(cfg),
            "files": {name: fio.sha256_file(self.dir / name) for name in sorted(self.files)},
        }
        body.update(extra)
        fio.write_json(self.dir / "manifest.json", body)


# ---------------------------------------------------------------------------
# commands

def cmd_simulate(args, cfg):
    sec = _section(cfg, "simulate")
    seeds = _seeds(sec, args, "simulate")
    n = int(args.n_nodes or _model_nodes(cfg, sec))
    fmt = args.format or sec.get("format", "csv")
    if fmt not in ("csv", "jsonl"):
        raise ConfigError(f"unknown event format {fmt!r}")
    named = bool(sec.get("named", False))
    time_scale = float(sec.get("time_scale", 1.0))
    model = model_factory(cfg)(n)
    out = Outputs(args.out)
    counts = {}
    for seed in seeds:
        events = sample_events(model, seed, threads=args.threads)
        counts[str(seed)] = len(events)
        if named:
            _write_named(out, events, seed, time_scale)
        elif fmt == "csv":
            write_events_csv(events, out.path(f"events_seed{seed}.csv"))
        else:
            write_events_jsonl(events, out.path(f"events_seed{seed}.jsonl"))
    out.manifest("simulate", cfg, seeds=seeds, n_nodes=n, n_layers=model.n_layers, event_counts=counts)
    print(f"wrote {len(seeds)} event stream(s) to {out.dir}")
    return 0


def _write_named(out, events, seed, time_scale):
    # string names and raw timestamps, as an external data source would provide
    width = len(str(events.n_nodes - 1))
    nodes = [f"node{k:0{width}d}" for k in range(events.n_nodes)]
    layers = [f"layer{k:02d}" for k in range(events.n_layers)]
    with open(out.path(f"events_seed{seed}.csv"), "w", newline="") as fh:
        fh.write("src,dst,layer,time\n")
        for s, d, l, t in events:
            fh.write(f"{nodes[s]},{nodes[d]},{layers[l]},{format(t * time_scale, '.17g')}\n")
    fio.write_side_table(out.path("nodes.csv"), nodes)
    fio.write_side_table(out.path("layers.csv"), layers)


def _load_events(path, sec, args):
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"input file {path} does not exist")
    if args.names or sec.get("named", False):
        node_table = args.node_table or sec.get("node_table")
        layer_table = args.layer_table or sec.get("layer_table")
        res = fio.read_event_table(
            p, fio.read_side_table(node_table) if node_table else None,
            fio.read_side_table(layer_table) if layer_table else None)
        return res.events, res.manifest()
    n_nodes, n_layers = sec.get("n_nodes"), sec.get("n_layers")
    reader = read_events_jsonl if p.suffix == ".jsonl" else read_events_csv
    events = reader(p, n_nodes, n_layers)
    return events, {"n_nodes": events.n_nodes, "n_layers": events.n_layers, "n_events": len(events)}


def cmd_embed(args, cfg):
    sec = _section(cfg, "embed")
    source = args.input or sec.get("input")
    if source is None:
        raise ConfigError("embed needs an input file (--input or [embed].input)")
    d = args.dim if args.dim is not None else sec.get("d", "auto")
    k_max = int(sec.get("k_max", 30))
    out = Outputs(args.out)
    info = {}
    if str(source).endswith(".bin"):
        if not Path(source).exists():
            raise ConfigError(f"input file {source} does not exist")
        A = fio.load_unfolded(source)
    else:
        M = int(args.bins or sec.get("n_bins", 10))
        events, info = _load_events(source, sec, args)
        A = bin_events(events, M)
        fio.save_unfolded(out.path("unfolded.bin"), A)
    spectrum = None
    if str(d) == "auto":
        spectrum = select_dimension(A, min(k_max, min(A.shape)))
        d = spectrum.chosen_d
    else:
        d = int(d)
    emb = duase(A, d, method=sec.get("svd", "auto"))
    if spectrum is None:
        spectrum = select_dimension(A, min(max(k_max, d + 1), min(A.shape))) if min(A.shape) > 1 else None
    cols = [f"dim{k}" for k in range(d)]
    fio.write_matrix_csv(out.path("left.csv"), emb.left, cols)
    fio.write_matrix_csv(out.path("right.csv"), emb.right, cols)
    fio.save_embedding(out.path("embedding.bin"), emb)
    report = {"d": d, "singular_values": emb.singular_values,
              "spectrum": spectrum.to_dict() if spectrum else None}
    fio.write_json(out.path("spectrum.json"), report)
    out.manifest("embed", cfg, input=str(source), dims={"N": A.n_nodes, "M": A.n_bins,
                 "L": A.n_layers, "d": d}, data=info)
    print(f"embedded {A.shape} with d={d}; outputs in {out.dir}")
    return 0


def cmd_evaluate(args, cfg):
    sec = _section(cfg, "evaluate")
    Ns = _int_list(sec.get("n_nodes", [100]), "[evaluate].n_nodes")
    Ms = _int_list(sec.get("n_bins", [10]), "[evaluate].n_bins")
    seeds = _seeds(sec, args, "evaluate")
    mode = args.mode or sec.get("mode", "procrustes-global")
    if mode not in MODES:
        raise ConfigError(f"unknown alignment mode {mode!r}")
    grid = sec.get("grid")  # explicit list of [N, M] cells overrides the product
    pairs = [(int(n), int(m)) for n, m in grid] if grid else [(n, m) for n in Ns for m in Ms]
    cells = [(n, m, s) for n, m in pairs for s in seeds]
    cache = TruthCache(model_factory(cfg))
    results = run_sweep(cache, cells, threads=args.threads, d=int(sec.get("d", 2)), mode=mode,
                        sampler=sec.get("sampler", "histogram"),
                        svd_method=sec.get("svd", "lanczos"),
                        grid_points=int(sec.get("grid_points", 10)))
    out = Outputs(args.out)
    with open(out.path("errors.csv"), "w") as fh:
        fh.write(",".join(["n_nodes", "n_bins", "seed", *ERROR_KEYS, "status"]) + "\n")
        for r in results:
            row = r.row()
            vals = [str(row["n_nodes"]), str(row["n_bins"]), str(row["seed"])]
            vals += ["" if row[k] is None else format(row[k], ".17g") for k in ERROR_KEYS]
            fh.write(",".join(vals + [row["status"]]) + "\n")
    rates = fit_rates(results)
    with open(out.path("rates.csv"), "w") as fh:
        fh.write("error,n_bins,n_sizes,slope,intercept,r2\n")
        for r in rates:
            fh.write(f"{r['error']},{r['n_bins']},{r['n_sizes']},{r['slope']!r},"
                     f"{r['intercept']!r},{r['r2']!r}\n")
    failed = [r for r in results if r.status != "ok"]
    fio.write_json(out.path("report.json"), {
        "mode": mode, "cells": len(results), "failed": [
            {"n_nodes": r.n_nodes, "n_bins": r.n_bins, "seed": r.seed, "message": r.message}
            for r in failed],
        "rates": rates})
    out.manifest("evaluate", cfg, seeds=seeds, cells=len(cells), failed=len(failed))
    print(f"evaluated {len(cells)} cell(s), {len(failed)} failed; outputs in {out.dir}")
    return failed[0].exit_code if failed else 0


def cmd_clt(args, cfg):
    sec = _section(cfg, "clt")
    seeds = _seeds(sec, args, "clt")
    n = int(args.n_nodes or _model_nodes(cfg, sec))
    M = int(args.bins or sec.get("n_bins", 10))
    side = args.side or sec.get("side", "X")
    scaling = args.scaling or sec.get("scaling", "corrected")
    if scaling not in SCALINGS or side not in ("X", "Y"):
        raise ConfigError(f"bad side/scaling {side!r}/{scaling!r}")
    noiseless = args.noiseless or bool(sec.get("noiseless", False))
    cache = TruthCache(model_factory(cfg))
    mean, truth = cache.get(n, M)
    d = int(sec.get("d", truth.X_tilde.dim))
    out = Outputs(args.out)
    pooled = []
    with open(out.path("residuals.csv"), "w") as fh:
        fh.write(",".join(["seed", "node", "bin" if side == "X" else "layer"]
                          + [f"z{k}" for k in range(d)]) + "\n")
        for seed in seeds:
            A = mean if noiseless else sample_histogram(truth.model, M, seed, mean=mean)
            emb = duase(A, d, method=sec.get("svd", "lanczos"))
            res = studentize(emb, truth, side=side, scaling=scaling)
            pooled.append(res.z)
            for node, block, z in zip(res.node, res.block, res.z):
                fh.write(f"{seed},{node},{block}," + ",".join(format(v, ".17g") for v in z) + "\n")
    Z = np.concatenate(pooled)
    rep = normality_report(Z).to_dict()
    rep["max_abs_z"] = float(np.max(np.abs(Z)))
    rep["degenerate_residuals"] = bool(rep["degenerate"] or rep["max_abs_z"] < 1e-6)
    rep.update(side=side, scaling=scaling, noiseless=noiseless, n_nodes=n, n_bins=M)
    fio.write_json(out.path("normality.json"), rep)
    out.manifest("clt", cfg, seeds=seeds, n_nodes=n, n_bins=M, rows=int(Z.shape[0]))
    flag = " (degenerate residuals)" if rep["degenerate_residuals"] else ""
    print(f"pooled coverage {rep['pooled_coverage']:.4f} over {Z.shape[0]} rows{flag}")
    return 0


def cmd_cluster(args, cfg):
    sec = _section(cfg, "cluster")
    source = args.input or sec.get("input")
    if source is None or not Path(source).exists():
        raise ConfigError(f"cluster needs an existing embedding container, got {source!r}")
    emb = fio.load_embedding(source)
    k = args.k if args.k is not None else sec.get("k", "auto")
    window = int(args.window or sec.get("window", 5))
    k = None if str(k) == "auto" else int(k)
    T = normalize_and_smooth(emb, window)
    D = trajectory_distances(T)
    res = agglomerative_cluster(D, k, k_max=int(sec.get("k_max", 10)))
    out = Outputs(args.out)
    with open(out.path("labels.csv"), "w") as fh:
        fh.write("node,label\n")
        fh.writelines(f"{i},{lab}\n" for i, lab in enumerate(res.labels))
    with open(out.path("linkage.csv"), "w") as fh:
        fh.write("cluster_a,cluster_b,height,size\n")
        fh.writelines(f"{int(a)},{int(b)},{format(h, '.17g')},{int(s)}\n" for a, b, h, s in res.linkage)
    fio.write_container(out.path("distances.bin"), "distance", (emb.n_nodes, emb.n_bins, emb.n_layers),
                        {"distances": D})
    summary = {"k": res.k, "window": window, "sizes": np.bincount(res.labels).tolist()}
    truth = args.truth or sec.get("truth")
    if truth:
        lab = fio.read_matrix_csv(truth)[:, -1].astype(int)
        summary["ari"] = compare_partitions(lab, res.labels)
    fio.write_json(out.path("summary.json"), summary)
    out.manifest("cluster", cfg, input=str(source), k=res.k, window=window)
    print(f"clustered {emb.n_nodes} nodes into {res.k} groups; outputs in {out.dir}")
    return 0


COMMANDS = {"simulate": cmd_simulate, "embed": cmd_embed, "evaluate": cmd_evaluate,
            "clt": cmd_clt, "cluster": cmd_cluster}


# ---------------------------------------------------------------------------
# argument parsing

def _dim(value):
    return value if value == "auto" else int(value)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="TOML config file or bundled name")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the seed list")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help=f"worker threads (default ${THREADS_ENV} or 1)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="mippdpg", parents=[common],
                                     description="Multiplex Poisson dot-product graph toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate event streams")
    p.add_argument("--n-nodes", type=int)
    p.add_argument("--format", choices=("csv", "jsonl"))

    p = sub.add_parser("embed", parents=[common], help="bin events and compute the embedding")
    p.add_argument("--input", help="event CSV/JSONL or unfolded .bin container")
    p.add_argument("--bins", type=int, help="number of time bins M")
    p.add_argument("--dim", type=_dim, help="embedding dimension or 'auto'")
    p.add_argument("--names", action="store_true", help="input uses string names and raw times")
    p.add_argument("--node-table", help="name,index table for nodes")
    p.add_argument("--layer-table", help="name,index table for layers")

    p = sub.add_parser("evaluate", parents=[common], help="recovery-error sweep with rate fits")
    p.add_argument("--mode", choices=MODES)

    p = sub.add_parser("clt", parents=[common], help="studentised residuals and normality report")
    p.add_argument("--n-nodes", type=int)
    p.add_argument("--bins", type=int)
    p.add_argument("--side", choices=("X", "Y"))
    p.add_argument("--scaling", choices=SCALINGS)
    p.add_argument("--noiseless", action="store_true", help="embed the exact mean instead of a draw")

    p = sub.add_parser("cluster", parents=[common], help="trajectory clustering of an embedding")
    p.add_argument("--input", help="embedding .bin container")
    p.add_argument("--k", type=_dim, help="number of clusters or 'auto'")
    p.add_argument("--window", type=int)
    p.add_argument("--truth", help="CSV whose last column holds reference labels")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, default in (("config", None), ("seed", None), ("out", "out"), ("verbose", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    if not hasattr(args, "threads"):
        try:
            args.threads = int(os.environ.get(THREADS_ENV, "1"))
        except ValueError:
            print(f"error: {THREADS_ENV} must be an integer", file=sys.stderr)
            return 2
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](args, copy.deepcopy(cfg))
    except MippError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
