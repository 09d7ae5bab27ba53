"""``svpcnet`` command-line entry point.

Exit codes: 0 success, 1 usage/config/input error, 2 partial numerical
failure (some envelope query infeasible). Progress goes to stderr; data only
to files under ``--out``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as C
from .datagen import GenerationError, LpSource, generate, load, persist
from .evalkit import (
    AnalyticEvaluator,
    EnsembleEvaluator,
    FieldEvaluator,
    NetworkEvaluator,
    cross_section,
    parameter_sweep,
    plot_cross_sections,
    uniform_grid,
    write_cross_section,
    write_reports,
)
from .lp.envelope import polyconvexify, read_field, write_field
from .lp.lattice import build_lattice
from .nn.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .nn.networks import ensemble_predict
from .nn.train import train

log = logging.getLogger("svpcnet")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- envelope cache ----------------------------------------------------------------


class CachedLpSource(LpSource):
    """LP envelope source that reuses fields stored under their spec hash."""

    def __init__(self, model, lat, lattice_spec, cache_dir=None, threads=1):
        super().__init__(model, lat, threads)
        self.lattice_spec = lattice_spec
        self.cache_dir = Path(cache_dir) if cache_dir else None

    def key(self, nu, zeta):
        on_lattice = nu.shape == self.lat.points.shape and np.array_equal(nu, self.lat.points)
        queries = "lattice" if on_lattice else C.content_hash(np.asarray(nu, float).tobytes().hex())
        return C.content_hash({"model": self.model.to_dict(), "lattice": self.lattice_spec.to_dict(),
                               "zeta": [float(z) for z in zeta], "queries": queries})

    def field(self, nu, zeta):
        key = self.key(nu, zeta)
        path = self.cache_dir / f"envelope-{key}.csv" if self.cache_dir else None
        if path is not None and path.exists():
            fld = read_field(path)
            if np.array_equal(fld.queries, nu):
                log.info("reusing cached envelope %s", path.name)
                return fld, key
        grid_shape = self.lat.shape if nu is self.lat.points or np.array_equal(nu, self.lat.points) else None
        fld = polyconvexify(self.model, zeta, self.lat, nu, threads=self.threads, grid_shape=grid_shape)
        if path is not None and not fld.n_infeasible:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
            write_field(fld, path, {"cache_key": key})
        return fld, key

    def __call__(self, nu, zeta):
        fld, _ = self.field(nu, zeta)
        if fld.n_infeasible:
            raise GenerationError(f"{fld.n_infeasible} envelope queries were infeasible at zeta={list(zeta)}")
        return fld.values


def _queries(cfg, lat):
    q = cfg["envelope"]["queries"]
    if q is None:
        return lat.points
    if isinstance(q, dict):
        if set(q) != {"lattice"}:
            raise C.ConfigError("envelope.queries object must have exactly the key 'lattice'")
        return build_lattice(C.lattice_spec(cfg, q["lattice"])).points
    arr = np.asarray(q, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != lat.d:
        raise C.ConfigError(f"envelope.queries must be a list of {lat.d}-vectors")
    return arr


# --- commands ----------------------------------------------------------------------


def cmd_polyconvexify(args, cfg) -> int:
    model, spec = C.model(cfg), C.lattice_spec(cfg)
    lat = build_lattice(spec)
    queries = _queries(cfg, lat)
    src = CachedLpSource(model, lat, spec, cfg["envelope"]["cache_dir"], args.threads)
    out = _out_dir(args)
    index, failed = [], 0
    for i, zeta in enumerate(cfg["envelope"]["parameters"]):
        log.info("polyconvexifying at zeta=%s (%d queries)", zeta, len(queries))
        fld, key = src.field(queries, zeta)
        name = f"field_{i:03d}.csv"
        write_field(fld, out / name, {"cache_key": key})
        failed += fld.n_infeasible
        index.append({"zeta": [float(z) for z in zeta], "path": name, "n_infeasible": fld.n_infeasible})
    (out / "fields.json").write_text(json.dumps(index, indent=2) + "\n")
    C.write_resolved(cfg, out, command="polyconvexify")
    if failed:
        log.error("%d envelope queries were infeasible", failed)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_gen_data(args, cfg) -> int:
    spec = C.dataset_spec(cfg)
    src = None
    if spec.source == "svpc_lp":
        src = CachedLpSource(spec.model, build_lattice(spec.lattice), spec.lattice, cfg["envelope"]["cache_dir"],
                             args.threads)
    data = generate(spec, src, threads=args.threads)
    out = _out_dir(args)
    persist(data, out)
    C.write_resolved(cfg, out, command="gen-data", seeds={"validation": spec.validation.seed})
    log.info("wrote %d training and %d validation tuples", len(data.train), len(data.validation))
    return EXIT_OK


def cmd_train(args, cfg) -> int:
    if not args.data:
        raise UsageError("train needs --data <dataset dir>")
    data = _load_dataset(args.data)
    arch, tc = C.architecture(cfg), C.train_config(cfg)
    out = _out_dir(args)
    seeds, summary = [], []
    for r in range(tc.ensemble_size):
        seed = tc.seed + r
        log.info("training realisation %d/%d (seed %d)", r + 1, tc.ensemble_size, seed)
        params, hist = train(data, arch, tc, seed=seed)
        save_checkpoint(out / f"checkpoint_{r:02d}.json", params, config=tc, seed=seed, history=hist,
                        meta={"model": cfg["model"]})
        hist.write_csv(out / f"history_{r:02d}.csv")
        seeds.append(seed)
        summary.append({"seed": seed, "epochs": hist.epochs, "best_epoch": hist.best_epoch, **hist.final})
    keys = [k for k in summary[0] if k.startswith(("train_", "val_"))]
    table = np.array([[s[k] for k in keys] for s in summary])
    agg = {
        "n_realizations": len(summary),
        "realizations": summary,
        "mean": dict(zip(keys, table.mean(axis=0).tolist())),
        "std": dict(zip(keys, (table.std(axis=0, ddof=1) if len(summary) > 1 else 0 * table[0]).tolist())),
    }
    (out / "train_report.json").write_text(json.dumps(agg, indent=2, sort_keys=True) + "\n")
    C.write_resolved(cfg, out, command="train", seeds={"train": seeds})
    return EXIT_OK


def _read_queries(path, d, p):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise UsageError(f"{path}: empty query file")
    header = rows[0]
    nu_cols = [f"nu_{i + 1}" for i in range(d)]
    if header[:d] != nu_cols:
        raise UsageError(f"{path}:1: expected leading columns {nu_cols}, got {header[:d]}")
    zeta_cols = [h for h in header[d:] if h.startswith("zeta_")]
    try:
        arr = np.array([[float(x) for x in r[: d + len(zeta_cols)]] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None
    arr = arr.reshape(-1, d + len(zeta_cols))
    zeta = arr[:, d:] if zeta_cols else None
    if zeta is not None and zeta.shape[1] != p:
        raise UsageError(f"{path}: model expects {p} parameter columns, found {zeta.shape[1]}")
    return arr[:, :d], zeta


def cmd_predict(args, cfg) -> int:
    models = _load_models(args.model)
    model = C.model(cfg)
    if not args.queries:
        raise UsageError("predict needs --queries <csv>")
    nu, zeta = _read_queries(args.queries, model.d, model.arity)
    pc = cfg["predict"]
    shift = None
    if model.is_damage:
        if pc["alpha_k"] is None or pc["nu_k"] is None:
            raise C.ConfigError("damage prediction needs predict.nu_k and predict.alpha_k")
        alpha_k = float(pc["alpha_k"])
        zeta = np.full((len(nu), 1), min(alpha_k, model.params.alpha_inf))
        shift = float(model.shift(np.asarray(pc["nu_k"], dtype=float), alpha_k))
    elif zeta is None and model.arity:
        if pc["zeta"] is None:
            raise C.ConfigError("parameter columns missing from queries and predict.zeta not set")
        zeta = np.tile(np.asarray(pc["zeta"], dtype=float), (len(nu), 1))
    mean, std = ensemble_predict(models, nu, zeta, symmetrize=cfg["eval"]["symmetrize"])
    value = mean + shift if shift is not None else mean
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    cols = [nu] + ([zeta] if zeta is not None else []) + [value[:, None]]
    header = [f"nu_{i + 1}" for i in range(model.d)] + [f"zeta_{i + 1}" for i in range(0 if zeta is None else zeta.shape[1])] + ["value"]
    if len(models) > 1:
        cols.append(std[:, None])
        header.append("std")
    if shift is not None:
        cols.append(np.full((len(nu), 1), shift))
        header.append("shift")
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in np.concatenate(cols, axis=1).tolist():
            w.writerow([f"{x:.17g}" for x in row])
    return EXIT_OK


def _reference(cfg, model):
    ref = cfg["eval"]["reference"]
    if ref == "analytic":
        if not model.has_envelope:
            raise C.ConfigError(f"{model.kind} has no analytic envelope; give eval.reference.fields")
        return AnalyticEvaluator(model)
    if isinstance(ref, dict) and set(ref) == {"fields"}:
        out = {}
        for item in ref["fields"]:
            path = Path(item["path"])
            if not path.exists():
                raise UsageError(f"reference field {path} does not exist")
            out[tuple(float(z) for z in item["zeta"])] = FieldEvaluator(read_field(path))
        return out
    raise C.ConfigError("eval.reference must be 'analytic' or {'fields': [{'zeta': [...], 'path': ...}]}")


def _evaluator(cfg, models, model):
    clamp = model.params.alpha_inf if (model.is_damage and cfg["eval"]["clamp_alpha"]) else None
    sym = cfg["eval"]["symmetrize"]
    if len(models) == 1:
        return NetworkEvaluator(models[0], sym, clamp)
    return EnsembleEvaluator(models, sym, clamp)


def cmd_eval(args, cfg) -> int:
    models = _load_models(args.model)
    model = C.model(cfg)
    ev = cfg["eval"]
    g = ev["grid"]
    grid_nu = uniform_grid(g["lo"], g["hi"], g["n"], model.d)
    reports = parameter_sweep(_evaluator(cfg, models, model), _reference(cfg, model), ev["parameters"], grid_nu,
                              grid=dict(g))
    out = _out_dir(args)
    write_reports(reports, out / "errors.csv")
    _write_sections(cfg, models, model, out)
    C.write_resolved(cfg, out, command="eval")
    for r in reports:
        log.info("zeta=%s  mean %.4e  quad %.4e  max %.4e", list(r.zeta), r.mean_error, r.rel_quadratic_error,
                 r.rel_max_error)
    return EXIT_OK


def _write_sections(cfg, models, model, out):
    cs = cfg["eval"]["cross_sections"]
    evaluators = []
    if models:
        evaluators.append(_evaluator(cfg, models, model))
    if model.has_envelope:
        evaluators.append(AnalyticEvaluator(model))
    for i, zeta in enumerate(cfg["eval"]["parameters"]):
        for axis in cs["axes"]:
            tag = "t0" if axis in ("(t,0)", "t0") else "tt"
            sections = [cross_section(e, axis, tuple(cs["t_range"]), cs["samples"], zeta, model.d) for e in evaluators]
            for s in sections:
                write_cross_section(s, out / f"cross_{s.name}_{tag}_{i:03d}.csv")
            if cs["svg"]:
                plot_cross_sections(sections, out / f"cross_{tag}_{i:03d}.svg", title=f"{axis} zeta={zeta}")


def cmd_cross_section(args, cfg) -> int:
    models = _load_models(args.model) if args.model else []
    model = C.model(cfg)
    if not models and not model.has_envelope:
        raise UsageError("cross-section needs --model for models without an analytic envelope")
    out = _out_dir(args)
    _write_sections(cfg, models, model, out)
    C.write_resolved(cfg, out, command="cross-section")
    return EXIT_OK


# --- plumbing ----------------------------------------------------------------------


def _out_dir(args) -> Path:
    if not args.out:
        raise UsageError("--out is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_dataset(path):
    p = Path(path)
    if not (p / "dataset.json").exists():
        raise UsageError(f"{p} is not a dataset directory (missing dataset.json)")
    return load(p)


def _load_models(paths):
    if not paths:
        raise UsageError("--model <checkpoint> is required")
    models = []
    for path in paths:
        if not Path(path).exists():
            raise UsageError(f"checkpoint {path} does not exist")
        models.append(load_checkpoint(path)["params"])
    return models


COMMANDS = {
    "polyconvexify": cmd_polyconvexify,
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "cross-section": cmd_cross_section,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="svpcnet", description="Polyconvex envelopes by LP and input-convex networks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--out", help="output directory (output file for predict)")
        p.add_argument("--seed", type=int, help="overrides the training and validation-split seeds")
        p.add_argument("--threads", type=int, default=1, help="worker processes for LP solves")
        p.add_argument("-q", "--quiet", action="store_true", help="suppress progress output")
        if name == "train":
            p.add_argument("--data", help="dataset directory from gen-data")
        if name in ("predict", "eval", "cross-section"):
            p.add_argument("--model", nargs="+", help="checkpoint file(s); several form an ensemble")
        if name == "predict":
            p.add_argument("--queries", help="CSV with nu_1..nu_d[, zeta_...] columns")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, stream=sys.stderr,
                        format="%(message)s", force=True)
    try:
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        cfg = C.load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise UsageError("--seed must be nonnegative")
            cfg["train"]["seed"] = args.seed
            cfg["dataset"]["validation"]["seed"] = args.seed
        return COMMANDS[args.command](args, cfg)
    except (UsageError, C.ConfigError, CheckpointError) as exc:
        print(f"svpcnet {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GenerationError as exc:
        print(f"svpcnet {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
