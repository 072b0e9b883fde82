"""Command-line entry point: ``pdsynth {estimate,validate,optimize}``.

Every command writes plot-ready CSV files and a ``manifest.json`` into
``--out``.  Exit codes: 0 ok, 2 configuration error, 3 numerical failure,
4 model-assumption violation.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .errors import ConfigError, PdsError
from .optimize import design_piecewise, grid_search, make_attachment
from .pipeline import compare, default_mc_limits, run_mc, run_pds
from .spectra import moment_integrals
from .systems import Attachment, SpringLaw

__all__ = ["main", "build_parser", "write_csv", "PDF_COLUMNS"]

log = logging.getLogger("pdsynth")

PDF_COLUMNS = ("value", "density", "log10_density", "background_component", "rare_component")
CSV_SCHEMA_VERSION = 1


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer, bool, np.bool_)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    """UTF-8 CSV with floats in shortest round-trip form; rows must match the header."""
    n = len(header)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            if len(row) != n:
                raise ValueError(f"{path.name}: row width {len(row)} != {n}")
            w.writerow([_fmt(v) for v in row])


def _pdf_name(frame: str, tag: str) -> str:
    return f"pdf_{tag}.csv" if frame == "relative" else f"pdf_{tag}_{frame}.csv"


def _write_pdf(out: Path, pdf, name: str) -> str:
    with np.errstate(divide="ignore"):
        log10 = np.log10(pdf.density)
    w_b, w_r = pdf.weights
    rows = zip(pdf.grid, pdf.density, log10, w_b * pdf.background_component,
               w_r * pdf.rare_component)
    write_csv(out / name, PDF_COLUMNS, rows)
    return name


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def _manifest(out: Path, cfg: RunConfig, command: str, args, timings: dict, derived: dict,
              files: list, seeds=None) -> None:
    echo = copy.deepcopy(cfg.raw)
    echo["seed"] = cfg.seed
    man = {
        "tool": "pdsynth", "version": __version__, "command": command,
        "csv_schema_version": CSV_SCHEMA_VERSION, "threads": args.threads,
        "config": echo, "timings": timings, "derived": derived, "files": sorted(files),
        "seeds": seeds or {"root": cfg.seed},
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(_jsonable(man), fh, indent=2, sort_keys=True)


def _forcing_stats(cfg: RunConfig) -> dict:
    v_h, v_hd = moment_integrals(cfg.forcing.spectrum, cfg.frequency)
    return {"sigma_h": float(np.sqrt(v_h)), "sigma_hdot": float(np.sqrt(v_hd)),
            "mu_alpha": cfg.forcing.mu_alpha, "sigma_alpha": cfg.forcing.sigma_alpha}


def _with_threads(cfg: RunConfig, threads: int) -> None:
    from dataclasses import replace
    cfg.rare = replace(cfg.rare, threads=threads)
    cfg.montecarlo = replace(cfg.montecarlo, threads=threads)


def _pds(cfg: RunConfig):
    method = "effective" if cfg.method == "pds-effective" else "simulated"
    return run_pds(cfg.model, cfg.forcing, cfg.quantities, cfg.frames, method, cfg.rare,
                   cfg.frequency, cfg.n_effective)


def _pds_derived(cfg: RunConfig, pds) -> dict:
    return {**_forcing_stats(cfg), "sigma_eta": pds.eta.std, "mu_eta": pds.eta.mean,
            "P_r": pds.P_r(), "tau_mean": {t: p.tau_mean for t, p in pds.rare.items()},
            "sigma_background": {f"{fr}:{t}": p.sigma_b for (fr, t), p in pds.pdfs.items()},
            "fixed_point_residual": pds.lin.residual}


def cmd_estimate(cfg: RunConfig, out: Path, args) -> None:
    if cfg.method == "mc":
        raise ConfigError("estimate needs method pds or pds-effective; use validate for mc")
    pds = _pds(cfg)
    files = [_write_pdf(out, pdf, _pdf_name(fr, tag)) for (fr, tag), pdf in pds.pdfs.items()]
    _manifest(out, cfg, "estimate", args, pds.timings, _pds_derived(cfg, pds), files)


def cmd_validate(cfg: RunConfig, out: Path, args) -> None:
    if cfg.method != "all":
        raise ConfigError("validate requires method = \"all\"")
    pds = _pds(cfg)
    t0 = time.perf_counter()
    limits = default_mc_limits(pds)
    mc = run_mc(pds, cfg.seed, cfg.montecarlo, limits)
    timings = {**pds.timings, "montecarlo": time.perf_counter() - t0}
    files, report = [], {}
    for (fr, tag), pdf in pds.pdfs.items():
        files.append(_write_pdf(out, pdf, _pdf_name(fr, tag)))
        c = compare(pdf, mc, fr, tag, cfg.min_count)
        name = f"overlay_{tag}_{fr}.csv"
        write_csv(out / name, ("value", "mc_density", "pds_density", "count", "compared"),
                  zip(c.centers, c.mc_density, c.pds_density, c.counts, c.mask))
        files.append(name)
        report[f"{fr}:{tag}"] = {"max_abs_log10": c.max_abs_log10,
                                 "mean_abs_log10": c.mean_abs_log10,
                                 "compared_bins": int(c.mask.sum()),
                                 "mc_variance": mc.variance(fr, tag),
                                 "pds_variance": pdf.moment(2),
                                 "outside": mc.outside[(fr, tag)]}
    summary = {"max_abs_log10": max((r["max_abs_log10"] for r in report.values()
                                     if np.isfinite(r["max_abs_log10"])), default=None),
               "min_count": cfg.min_count}
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(_jsonable({"quantities": report, "summary": summary}), fh, indent=2,
                  sort_keys=True)
    files.append("report.json")
    derived = {**_pds_derived(cfg, pds), "comparison": summary}
    _manifest(out, cfg, "validate", args, timings, derived, files,
              {"root": cfg.seed, "realizations": list(mc.seeds)})


def _surface_csv(out: Path, res, tag: str, name: str) -> None:
    a, b = res.axes
    s = res.surfaces[tag]
    g = res.gamma_surface(tag)
    rows = ((a.values[i], b.values[j], s[i, j], g[i, j])
            for i in range(a.count) for j in range(b.count))
    write_csv(out / name, (a.name, b.name, "objective", "gamma"), rows)


def cmd_optimize(cfg: RunConfig, out: Path, args) -> None:
    grid = cfg.design_grid()
    opt = cfg.optimize
    family = opt["family"]
    m_a = opt.get("m_a", 0.05)
    refine = opt.get("refine", False)
    t0 = time.perf_counter()
    if family == "piecewise":
        if "k_o" not in opt or "lambda_a" not in opt:
            raise ConfigError("piecewise design needs k_o and lambda_a from the TMD optimum")
        res = design_piecewise(cfg.model, cfg.forcing, opt["k_o"], opt["lambda_a"], grid, m_a,
                               opt.get("sigma_zeta"), opt.get("n_sigma", 4.0), cfg.rare,
                               cfg.frequency, args.threads, refine)
    else:
        res = grid_search(cfg.model, cfg.forcing, grid, family, m_a, cfg.rare, cfg.frequency,
                          args.threads, refine)
    timings = {"grid": time.perf_counter() - t0}
    files, optimum = [], {}
    for tag in grid.quantities:
        name = f"surface_{tag}.csv"
        _surface_csv(out, res, tag, name)
        files.append(name)
        best = res.best(tag)
        optimum[tag] = {**best, "cell": list(res.argmin[tag])}
        # overlays: baseline, optimum (and the TMD core for piecewise)
        a, b = res.axes
        att = make_attachment(family, best[a.name], best[b.name], m_a, **res.design)
        cands = {"optimum": cfg.model.with_attachment(att)}
        if family == "piecewise":
            cands["tmd"] = cfg.model.with_attachment(
                Attachment(m_a, opt["lambda_a"], SpringLaw.linear(opt["k_o"])))
        cands["none"] = cfg.model.with_attachment(None)
        for label, model in cands.items():
            pds = run_pds(model, cfg.forcing, [tag], ("absolute",), "simulated", cfg.rare,
                          cfg.frequency)
            name = f"overlay_{tag}_{label}.csv"
            _write_pdf(out, pds.pdfs[("absolute", tag)], name)
            files.append(name)
    timings["total"] = time.perf_counter() - t0
    derived = {**_forcing_stats(cfg), "family": family, "baseline": res.baseline,
               "optimum": optimum, "design": res.design, "failed_cells": len(res.errors),
               "measure": "gamma_prime" if family == "piecewise" else "gamma"}
    _manifest(out, cfg, "optimize", args, timings, derived, files)


COMMANDS = {"estimate": cmd_estimate, "validate": cmd_validate, "optimize": cmd_optimize}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pdsynth", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"pdsynth {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        s = sub.add_parser(name, help=fn.__name__.replace("cmd_", "") + " command")
        s.add_argument("--config", required=True, help="TOML or JSON run configuration")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--seed", type=int, default=None, help="root seed (overrides config)")
        s.add_argument("--threads", type=int, default=1, help="worker threads")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError("--seed must fit in an unsigned 64-bit integer")
            cfg.seed = args.seed
        _with_threads(cfg, args.threads)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, out, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return exc.exit_code
    except PdsError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
