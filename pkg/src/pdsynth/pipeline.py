"""End-to-end decomposition-synthesis runs and PDS-vs-MC comparison."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .montecarlo import EnsembleResult, ForcingModel, MCOptions, ensemble_pdf, quantity_tags
from .rare import (EtaDistribution, RareOptions, effective_measure_table, eta_from,
                   rare_pdf_effective, rare_pdf_simulated)
from .spectra import FrequencyGrid
from .statlin import LinearizationSolution, solve_fixed_point
from .synthesis import ResponsePdf, synthesize
from .systems import Quantity, SystemModel

__all__ = ["PdsResult", "run_pds", "run_mc", "default_mc_limits", "compare", "Comparison"]


@dataclass
class PdsResult:
    model: SystemModel
    forcing: ForcingModel
    lin: LinearizationSolution
    eta: EtaDistribution
    rare: dict
    pdfs: dict
    timings: dict = field(default_factory=dict)

    def P_r(self) -> dict:
        return {tag: prof.P_r for tag, prof in self.rare.items()}


def run_pds(model: SystemModel, forcing: ForcingModel, quantities=None,
            frames=("relative", "absolute"), method: str = "simulated",
            rare_opts: RareOptions = RareOptions(), grid: FrequencyGrid | None = None,
            n_effective: int = 21) -> PdsResult:
    """Linearize, quantify the rare part and synthesize every requested PDF.

    ``pdfs`` is keyed by ``(frame, tag)``.  With ``method="effective"``
    only quantities of the impacted DOF are available; the effective
    measures are computed on ``n_effective`` impulses spanning the eta grid.
    """
    timings = {}
    qs = [Quantity.parse(q) if isinstance(q, str) else q
          for q in (quantities or model.quantities())]
    t0 = time.perf_counter()
    lin = solve_fixed_point(model, forcing.spectrum, grid)
    timings["linearization"] = time.perf_counter() - t0
    eta = eta_from(forcing, lin)
    t0 = time.perf_counter()
    if method == "simulated":
        rare = rare_pdf_simulated(model, eta, forcing.T_alpha, qs, forcing.pattern, rare_opts)
    elif method == "effective":
        lo = eta.mean - rare_opts.eta_width * eta.std
        hi = eta.mean + rare_opts.eta_width * eta.std
        measures = effective_measure_table(model, np.linspace(lo, hi, n_effective), rare_opts)
        rare = rare_pdf_effective(model, eta, forcing.T_alpha, measures, qs, rare_opts)
    else:
        raise ValueError(f"unknown rare-event method {method!r}")
    timings["rare"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    pdfs = {(fr, q.tag): synthesize(lin, rare[q.tag], q, fr) for q in qs for fr in frames}
    timings["synthesis"] = time.perf_counter() - t0
    return PdsResult(model, forcing, lin, eta, rare, pdfs, timings)


def default_mc_limits(pds: PdsResult, margin: float = 1.2) -> dict:
    """Histogram half-widths covering each synthesized PDF grid with some margin."""
    out = {}
    for key in quantity_tags(pds.model):
        pdf = pds.pdfs.get(key)
        if pdf is None:
            frame, tag = key
            q = Quantity.parse(tag)
            s = pds.lin.sigma[tag] if frame == "relative" else pds.lin.absolute_sigma(q)
            out[key] = 10.0 * s
        else:
            out[key] = margin * float(pdf.grid[-1])
    return out


@dataclass
class Comparison:
    """Masked log10-density discrepancy between a synthesized PDF and MC bins."""

    frame: str
    tag: str
    centers: np.ndarray
    mc_density: np.ndarray
    pds_density: np.ndarray
    counts: np.ndarray
    mask: np.ndarray
    max_abs_log10: float
    mean_abs_log10: float


def compare(pdf: ResponsePdf, mc: EnsembleResult, frame: str, tag: str,
            min_count: int = 50) -> Comparison:
    """Compare on MC bins holding at least ``min_count`` samples.

    The synthesized density is averaged over each MC bin through its CDF
    so both sides describe the same bin probabilities.
    """
    edges = mc.edges[(frame, tag)]
    counts = mc.counts[(frame, tag)]
    dmc = mc.density(frame, tag)
    dpds = pdf.cell_average(edges)
    mask = (counts >= min_count) & (dpds > 0)
    # unmasked bins may hold zeros or CDF round-off below zero
    with np.errstate(divide="ignore", invalid="ignore"):
        diff = np.abs(np.log10(dmc) - np.log10(dpds))
    d = diff[mask]
    mx = float(d.max()) if d.size else math.nan
    mean = float(d.mean()) if d.size else math.nan
    return Comparison(frame, tag, 0.5 * (edges[1:] + edges[:-1]), dmc, dpds, counts, mask,
                      mx, mean)


def run_mc(pds: PdsResult, seed: int, opts: MCOptions = MCOptions(),
           limits: dict | None = None) -> EnsembleResult:
    return ensemble_pdf(pds.model, pds.forcing, limits or default_mc_limits(pds), seed, opts)
