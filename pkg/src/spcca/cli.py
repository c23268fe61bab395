"""Command-line front end.

Everything that affects results comes from a JSON run config; flags only pick
paths, parallelism and verbosity.  Exit codes: 0 ok, 2 user or config error,
3 computational failure.

Run config keys::

    data           {"name": "matrix.csv", ...}   biological sets, in order
    design         {"spec": f.json} | {"factors": f.csv} | {"matrix": f.csv}
    mode           "supervised" (default) or "pcca" (two sets, no design)
    lambdas        {"name": value, ..., "design": value} | "grid" | {"from": selected.json}
    grid           {"name": [values], ..., "design": [values]}
    n_holdouts, holdout_fraction
    n_components, seed
    engine         {"restarts", "max_iterations", "tolerance", "thresholding", "pinv_modes"}
    significance   {"alpha": a, "n_permutations": N, "scheme": "sequential" | "global"}
                   | {"threshold": t}
    blocks         optional per-sample labels restricting permutations
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .design import encode, load_spec, read_factor_csv, spec_to_json, standardize_design
from .engine import EngineConfig, fit, pcca_fit
from .errors import ConfigError, SpccaError
from .io import (
    line_plot_svg,
    provenance,
    read_matrix_csv,
    write_json,
    write_matrix_csv,
    write_rows,
    write_text,
)
from .matrix import DataMatrix, standardize
from .selection import GridSpec, grid_search
from .significance import classify_components, permutation_threshold, sequential_thresholds
from .synthetic import generate, noise_scenario, planted_scenario, write_truth

log = logging.getLogger("spcca")

SUPERVISED = "supervised"
PCCA = "pcca"
DESIGN = "design"


# -- config ---------------------------------------------------------------

class Run:
    """A parsed run config with its inputs loaded."""

    def __init__(self, path):
        self.path = Path(path)
        try:
            self.raw = json.loads(self.path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(self.raw, dict):
            raise ConfigError("config must be a JSON object")
        self.base = self.path.parent
        c = self.raw
        self.mode = c.get("mode", SUPERVISED)
        if self.mode not in (SUPERVISED, PCCA):
            raise ConfigError(f"unknown mode {self.mode!r}")
        self.seed = int(c.get("seed", 0))
        self.n_components = c.get("n_components", 1)
        if not isinstance(self.n_components, int) or self.n_components < 1:
            raise ConfigError("n_components must be a positive integer")
        if not isinstance(c.get("data"), dict) or not c["data"]:
            raise ConfigError("config needs a non-empty 'data' object")
        self.names = tuple(c["data"])
        if DESIGN in self.names:
            raise ConfigError(f"'{DESIGN}' is reserved for the design set")
        if self.mode == PCCA and len(self.names) != 2:
            raise ConfigError("pcca mode needs exactly two data sets")
        self._load()

    def _resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base / p

    def _load(self):
        raw = [read_matrix_csv(self._resolve(p)) for p in self.raw["data"].values()]
        ids = raw[0].sample_ids
        for name, m in zip(self.names, raw):
            if m.sample_ids != ids:
                raise ConfigError(f"data set {name!r}: sample ids differ from {self.names[0]!r}")
        self.n = raw[0].rows
        policy = self.raw.get("constant_columns", "error")
        self.data = [standardize(m, policy) for m in raw]
        self.design = None
        self.provenance = None
        if self.mode == SUPERVISED:
            self.design = self._load_design(ids)
        self.all_names = self.names + ((DESIGN,) if self.mode == SUPERVISED else ())

    def _load_design(self, ids) -> DataMatrix:
        d = self.raw.get("design")
        if not isinstance(d, dict) or len(d) != 1:
            raise ConfigError("supervised mode needs 'design' with one of spec, factors, matrix")
        (kind, p), = d.items()
        if kind == "spec":
            factors, n = load_spec(self._resolve(p))
        elif kind == "factors":
            factors, n, fids = read_factor_csv(self._resolve(p))
            if fids != ids:
                raise ConfigError("factor table sample ids differ from the data")
        elif kind == "matrix":
            m = read_matrix_csv(self._resolve(p))
            if m.sample_ids != ids:
                raise ConfigError("design matrix sample ids differ from the data")
            self.provenance = [(lab, "") for lab in m.col_labels]
            return standardize(m, "error")
        else:
            raise ConfigError(f"unknown design source {kind!r}")
        if n != self.n:
            raise ConfigError(f"design has {n} samples, data has {self.n}")
        dm = encode(factors, n)
        self.provenance = list(dm.provenance)
        z = standardize_design(dm)
        return DataMatrix(z.values, z.col_labels, True, ids)

    def engine(self, lambdas) -> EngineConfig:
        opts = dict(self.raw.get("engine", {}))
        opts["lambdas"] = tuple(lambdas)
        opts["seed"] = self.seed
        return EngineConfig.from_dict(opts)

    def fixed_lambdas(self):
        lam = self.raw.get("lambdas")
        if lam == "grid":
            return None
        if isinstance(lam, dict) and set(lam) == {"from"}:
            sel = json.loads(self._resolve(lam["from"]).read_text(encoding="utf-8"))
            lam = sel["lambdas"]
        if not isinstance(lam, dict):
            raise ConfigError("'lambdas' must be an object, \"grid\", or {\"from\": path}")
        missing = [k for k in self.all_names if k not in lam]
        if missing:
            raise ConfigError(f"lambdas missing for {missing}")
        return tuple(float(lam[k]) for k in self.all_names)

    def grid_spec(self) -> GridSpec:
        g = self.raw.get("grid")
        if not isinstance(g, dict):
            raise ConfigError("grid search needs a 'grid' object")
        missing = [k for k in self.all_names if k not in g]
        if missing:
            raise ConfigError(f"grid missing for {missing}")
        return GridSpec(tuple(tuple(g[k]) for k in self.all_names),
                        int(self.raw.get("n_holdouts", 10)),
                        float(self.raw.get("holdout_fraction", 1 / 8)), self.seed)

    def bio_and_partner(self):
        if self.mode == SUPERVISED:
            return self.data, self.design
        return self.data[:1], self.data[1]

    def blocks(self):
        b = self.raw.get("blocks")
        if b is not None and len(b) != self.n:
            raise ConfigError("'blocks' needs one label per sample")
        return b

    def manifest(self) -> dict:
        return provenance(self.raw, self.seed)


class RunDir:
    """Single writer for a run directory; keeps MANIFEST.json current."""

    def __init__(self, path, run: Run):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self.artifacts: list[str] = []
        self.prov = run.manifest()
        self._manifest("incomplete")

    def _manifest(self, status, error=None):
        doc = {"status": status, "artifacts": sorted(self.artifacts), "provenance": self.prov}
        if error:
            doc["error"] = error
        write_json(self.path / "MANIFEST.json", doc)

    def add(self, name):
        self.artifacts.append(name)
        self._manifest("incomplete")
        return self.path / name

    def done(self):
        self._manifest("complete")

    def failed(self, exc):
        self._manifest("failed", f"{type(exc).__name__}: {exc}")


# -- commands -------------------------------------------------------------

def _grid(run: Run, rd: RunDir, jobs: int, resume: bool):
    bio, partner = run.bio_and_partner()
    cells_dir = rd.path / "cells"
    if cells_dir.exists() and not resume:
        shutil.rmtree(cells_dir)
    res = grid_search(bio, partner, run.grid_spec(), run.engine([0.0] * len(run.all_names)),
                      n_jobs=jobs, checkpoint_dir=cells_dir, set_names=run.all_names)
    write_rows(rd.add("grid.csv"), res.header(), res.rows())
    cell = res.selected_cell
    sel = {
        "lambdas": dict(zip(run.all_names, cell.lambdas)),
        "cell": cell.index,
        "mean_test_corr": cell.mean,
        "std_test_corr": cell.std,
        "n_failed": cell.n_failed,
        "split_objectives": res.split_objectives,
        "median_split": None if res.median is None else res.split_objectives.index(res.median.objective),
        "median_objective": None if res.median is None else res.median.objective,
        "splits": res.audit(),
        "provenance": rd.prov,
    }
    write_json(rd.add("selected.json"), sel)
    return res


def cmd_gridsearch(args) -> int:
    run = Run(args.config)
    rd = RunDir(args.out, run)
    try:
        res = _grid(run, rd, args.jobs, args.resume)
    except Exception as exc:
        rd.failed(exc)
        raise
    rd.done()
    print("selected:", ", ".join(f"{k}={v:g}" for k, v in zip(run.all_names, res.selected_lambdas)),
          f"(mean test corr {res.selected_cell.mean:.4f})")
    return 0


SEQUENTIAL = "sequential"
GLOBAL = "global"


def _perm_options(run: Run):
    sig = run.raw.get("significance") or {}
    scheme = sig.get("scheme", SEQUENTIAL)
    if scheme not in (SEQUENTIAL, GLOBAL):
        raise ConfigError(f"unknown significance scheme {scheme!r}")
    return float(sig.get("alpha", 0.05)), int(sig.get("n_permutations", 1000)), scheme


def _permtest(run: Run, cfg: EngineConfig, jobs: int):
    alpha, nperm, _ = _perm_options(run)
    bio, partner = run.bio_and_partner()
    return permutation_threshold(bio, partner, cfg, nperm, alpha, run.seed, blocks=run.blocks(),
                                 n_jobs=jobs)


def _perm_doc(res) -> dict:
    return {
        "threshold": res.threshold,
        "alpha": res.alpha,
        "n_permutations": res.n_permutations,
        "n_failed": res.n_failed,
        "thresholds": {str(a): res.threshold_at(a) for a in (0.1, 0.05, 0.01)},
    }


def _write_perm(rd: RunDir, res):
    write_rows(rd.add("null.csv"), ["objective"], ([v] for v in res.null_samples))
    doc = _perm_doc(res)
    doc["provenance"] = rd.prov
    write_json(rd.add("threshold.json"), doc)


def _write_sequential(rd: RunDir, results):
    """``null.csv`` holds component 1's null, which is also the global null."""
    for c, res in enumerate(results):
        name = "null.csv" if c == 0 else f"null_{c + 1:02d}.csv"
        write_rows(rd.add(name), ["objective"], ([v] for v in res.null_samples))
    doc = _perm_doc(results[0])
    doc["scheme"] = SEQUENTIAL
    doc["components"] = [dict(_perm_doc(r), component=c + 1) for c, r in enumerate(results)]
    doc["provenance"] = rd.prov
    write_json(rd.add("threshold.json"), doc)


def cmd_permtest(args) -> int:
    run = Run(args.config)
    lam = run.fixed_lambdas()
    if lam is None:
        raise ConfigError("permtest needs fixed lambdas (run gridsearch and use {\"from\": selected.json})")
    rd = RunDir(args.out, run)
    try:
        res = _permtest(run, run.engine(lam), args.jobs)
        _write_perm(rd, res)
    except Exception as exc:
        rd.failed(exc)
        raise
    rd.done()
    print(f"threshold {res.threshold:.4f} at alpha={res.alpha} "
          f"({res.n_permutations - res.n_failed} permutations)")
    return 0


def _write_fit(rd: RunDir, run: Run, result, lambdas, threshold, grid_res):
    names = result.set_names
    comps = result.variables
    ids = run.data[0].sample_ids or tuple(f"s{i + 1:03d}" for i in range(run.n))
    flags = dict(classify_components(result, threshold)) if threshold is not None else {}

    for k, name in enumerate(names):
        rows = [[c + 1, lab, float(w)] for c, v in enumerate(comps)
                for lab, w in zip(v.labels[k], v.weights[k]) if w != 0.0]
        write_rows(rd.add(f"weights_{name}.csv"), ["component", "feature", "weight"], rows)

    header = ["sample"] + [f"{name}_c{c + 1}" for c in range(len(comps)) for name in names]
    rows = []
    for i, sid in enumerate(ids):
        rows.append([sid] + [float(v.variates[k][i]) for v in comps for k in range(len(names))])
    write_rows(rd.add("variates.csv"), header, rows)

    header = ["component"] + [f"corr_{n}" for n in names[:-1]] + ["objective", "significant"]
    rows = []
    for c, v in enumerate(comps):
        sig = "NA" if threshold is None else str(flags[c + 1]).lower()
        rows.append([c + 1, *v.per_set_correlations, v.objective, sig])
    write_rows(rd.add("correlations.csv"), header, rows)

    for c, v in enumerate(comps):
        series = {f"{n} ({'X%dw%d' % (k + 1, k + 1) if n != DESIGN else 'Xm wm'})": v.variates[k]
                  for k, n in enumerate(names)}
        svg = line_plot_svg(series, f"canonical variable {c + 1}: objective {v.objective:.3f}")
        write_text(rd.add(f"component_{c + 1:02d}.svg"), svg)

    summary = {
        "provenance": rd.prov,
        "mode": run.mode,
        "set_names": list(names),
        "lambdas": dict(zip(names, lambdas)),
        "n_components_requested": run.n_components,
        "n_components": len(comps),
        "stop_reason": result.stop_reason,
        "deflation_trace": result.trace,
        "thresholds": threshold,
        "components": [
            {
                "component": c + 1,
                "objective": v.objective,
                "correlations": dict(zip(names[:-1], v.per_set_correlations)),
                "converged": v.converged,
                "iterations": v.iterations_used,
                "support_size": {n: int(np.count_nonzero(v.weights[k])) for k, n in enumerate(names)},
                "threshold": None if threshold is None else threshold[c],
                "significant": flags.get(c + 1),
            }
            for c, v in enumerate(comps)
        ],
    }
    if run.provenance is not None:
        summary["design_columns"] = [list(p) for p in run.provenance]
    if grid_res is not None:
        summary["grid_selection"] = {"cell": grid_res.selected, "mean_test_corr": grid_res.selected_cell.mean}
    write_json(rd.add("summary.json"), summary)


def cmd_fit(args) -> int:
    run = Run(args.config)
    rd = RunDir(args.out, run)
    try:
        grid_res = None
        lam = run.fixed_lambdas()
        if lam is None:
            grid_res = _grid(run, rd, args.jobs, resume=False)
            lam = grid_res.selected_lambdas
        cfg = run.engine(lam)
        bio, partner = run.bio_and_partner()
        if run.mode == SUPERVISED:
            result = fit(bio, partner, cfg, run.n_components, run.all_names)
        else:
            result = pcca_fit(bio[0], partner, cfg, run.n_components, run.all_names)
        threshold = None
        sig = run.raw.get("significance")
        if sig and "threshold" in sig:
            threshold = [float(sig["threshold"])] * len(result.variables)
        elif sig:
            alpha, nperm, scheme = _perm_options(run)
            if scheme == GLOBAL:
                perm = _permtest(run, cfg, args.jobs)
                _write_perm(rd, perm)
                threshold = [perm.threshold] * len(result.variables)
            else:
                perms = sequential_thresholds(result, cfg, nperm, alpha, run.seed,
                                              blocks=run.blocks(), n_jobs=args.jobs)
                _write_sequential(rd, perms)
                threshold = [p.threshold for p in perms]
        _write_fit(rd, run, result, lam, threshold, grid_res)
    except Exception as exc:
        rd.failed(exc)
        raise
    rd.done()
    for c, v in enumerate(result.variables):
        flag = "" if threshold is None else ("  *" if v.objective > threshold[c] else "")
        print(f"component {c + 1}: objective {v.objective:.4f}{flag}")
    return 0


def cmd_encode(args) -> int:
    src = Path(args.spec)
    if src.suffix.lower() == ".json":
        factors, n = load_spec(src)
        ids = tuple(f"s{i + 1:03d}" for i in range(n))
    else:
        factors, n, ids = read_factor_csv(src)
    dm = encode(factors, n)
    m = DataMatrix(dm.matrix.values, dm.labels, False, ids)
    write_matrix_csv(m, args.out)
    print(f"{'column':<32} {'factor':<16} {'level':<16} ones")
    for j, (f, lv) in enumerate(dm.provenance):
        print(f"{dm.labels[j]:<32} {f:<16} {lv:<16} {int(m.values[:, j].sum())}")
    print(f"{m.cols} design columns for {n} samples")
    return 0


DEFAULT_GRID = {"genes": [0.0, 0.1, 0.2, 0.3], "metabolites": [0.0, 0.1, 0.2, 0.3],
                "design": [0.0, 0.1, 0.2, 0.4]}


def cmd_synth(args) -> int:
    spec = planted_scenario(args.seed) if args.scenario == "planted" else noise_scenario(args.seed)
    data, design, truth = generate(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, m in zip(spec.names(), data):
        write_matrix_csv(m, out / f"{name}.csv")
    write_json(out / "design_spec.json", spec_to_json(spec.factors, spec.n))
    write_matrix_csv(design.matrix, out / "design.csv")
    write_truth(truth, out / "truth.json")
    config = {
        "data": {name: f"{name}.csv" for name in spec.names()},
        "design": {"spec": "design_spec.json"},
        "lambdas": "grid",
        "grid": DEFAULT_GRID,
        "n_holdouts": 10,
        "holdout_fraction": 0.125,
        "n_components": 3,
        "seed": args.seed,
        "engine": {"restarts": 10, "max_iterations": 1000, "tolerance": 1e-6},
        "significance": {"alpha": 0.05, "n_permutations": 100},
    }
    write_json(out / "config.json", config)
    print(f"wrote {args.scenario} scenario to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spcca", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"spcca {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("encode", help="dummy-code a design spec (JSON) or factor table (CSV)")
    s.add_argument("spec")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_encode)

    for name, func, helptext in (
        ("fit", cmd_fit, "fit canonical variables and write a run directory"),
        ("gridsearch", cmd_gridsearch, "select lambdas by repeated hold-out grid search"),
        ("permtest", cmd_permtest, "permutation significance threshold"),
    ):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("config")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--jobs", type=int, default=1, help="worker threads")
        if name == "gridsearch":
            s.add_argument("--resume", action="store_true",
                           help="reuse finished cells from a previous run in --out")
        s.set_defaults(func=func)

    s = sub.add_parser("synth", help="write a synthetic planted-factor or noise data set")
    s.add_argument("--scenario", choices=("planted", "noise"), default="planted")
    s.add_argument("--seed", type=int, default=2013)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        return args.func(args)
    except SpccaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, KeyError, TypeError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
