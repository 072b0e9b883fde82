"""Attachment design by grid search on fourth-moment objectives.

Every cell is evaluated with the decomposition-synthesis pipeline on
the absolute-frame PDF of the seat.  ``gamma`` normalizes by the same
moment without attachment; ``gamma_prime`` (piecewise design) normalizes
by the optimal TMD.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import AllCellsFailed, ConfigError, PdsError
from .montecarlo import ForcingModel
from .rare import RareOptions, eta_from, rare_pdf_simulated
from .spectra import FrequencyGrid
from .statlin import solve_fixed_point
from .synthesis import moment, synthesize
from .systems import Attachment, Quantity, SpringLaw, SystemModel

__all__ = [
    "Axis",
    "DesignGrid",
    "OptimizationResult",
    "objective",
    "objectives",
    "grid_search",
    "design_piecewise",
    "sigma_zeta",
    "default_grid",
    "piecewise_grid",
    "make_attachment",
]

FAMILY_AXES = {"tmd": ("lambda_a", "k_a"), "cubic_nes": ("lambda_a", "c_a"),
               "piecewise": ("alpha_pos", "alpha_neg")}


@dataclass(frozen=True)
class Axis:
    name: str
    lo: float
    hi: float
    count: int
    spacing: str = "log"

    def __post_init__(self):
        if self.count < 2:
            raise ConfigError(f"axis {self.name} needs at least 2 points")
        if self.spacing not in ("log", "linear"):
            raise ConfigError(f"unknown spacing {self.spacing!r}")
        if self.spacing == "log" and not 0 < self.lo < self.hi:
            raise ConfigError(f"log axis {self.name} needs 0 < lo < hi")
        if self.spacing == "linear" and not (self.lo < self.hi and self.lo >= 0):
            raise ConfigError(f"linear axis {self.name} needs 0 <= lo < hi")

    @property
    def values(self) -> np.ndarray:
        if self.spacing == "log":
            return np.geomspace(self.lo, self.hi, self.count)
        return np.linspace(self.lo, self.hi, self.count)

    def zoom(self, i: int) -> "Axis":
        """Axis over the neighbours of index ``i`` at twice the local resolution."""
        v = self.values
        lo, hi = v[max(i - 1, 0)], v[min(i + 1, self.count - 1)]
        n = 2 * (min(i + 1, self.count - 1) - max(i - 1, 0)) + 1
        return Axis(self.name, lo, hi, n, self.spacing)


@dataclass(frozen=True)
class DesignGrid:
    """Two design axes plus the objective quantities (seat, absolute frame)."""

    axes: tuple
    quantities: tuple = ("x", "xdot")
    order: int = 4

    def __post_init__(self):
        if len(self.axes) != 2:
            raise ConfigError("design grids have exactly two axes")


def default_grid(family: str, count: int = 41) -> DesignGrid:
    a, b = FAMILY_AXES[family]
    return DesignGrid((Axis(a, 1e-3, 1.0, count), Axis(b, 1e-3, 10.0, count)))


def piecewise_grid(count: int = 51, hi: float = 5.0) -> DesignGrid:
    return DesignGrid((Axis("alpha_pos", 0.0, hi, count, "linear"),
                       Axis("alpha_neg", 0.0, hi, count, "linear")), quantities=("x",))


def objectives(model: SystemModel, forcing: ForcingModel, quantities=("x",), order: int = 4,
               rare_opts: RareOptions = RareOptions(), grid: FrequencyGrid | None = None
               ) -> dict:
    """Moment of each absolute-frame PDF, keyed by quantity tag."""
    qs = [Quantity.parse(q) if isinstance(q, str) else q for q in quantities]
    lin = solve_fixed_point(model, forcing.spectrum, grid)
    eta = eta_from(forcing, lin)
    rare = rare_pdf_simulated(model, eta, forcing.T_alpha, qs, forcing.pattern, rare_opts)
    return {q.tag: moment(synthesize(lin, rare[q.tag], q, "absolute"), order) for q in qs}


def objective(model: SystemModel, forcing: ForcingModel, quantity="x", order: int = 4,
              rare_opts: RareOptions = RareOptions(), grid: FrequencyGrid | None = None
              ) -> float:
    """Fourth (or ``order``) moment of the absolute-frame PDF of ``quantity``."""
    return objectives(model, forcing, (quantity,), order, rare_opts, grid)[str(quantity)]


@dataclass
class OptimizationResult:
    """Surfaces of objective values (NaN where a cell failed) and their argmins.

    ``argmin[tag]`` is an index pair into ``axes``; ties break toward the
    smaller first-axis value, then the smaller second-axis value.
    ``design`` records fixed spring parameters of a piecewise search.
    """

    family: str
    axes: tuple
    surfaces: dict
    baseline: dict
    argmin: dict
    errors: dict = field(default_factory=dict, repr=False)
    refined: dict = field(default_factory=dict)
    design: dict = field(default_factory=dict)

    def gamma_surface(self, tag: str) -> np.ndarray:
        return self.surfaces[tag] / self.baseline[tag]

    def best(self, tag: str) -> dict:
        """Optimal parameters, objective and normalized measure for ``tag``."""
        if tag in self.refined:
            return self.refined[tag]
        i, j = self.argmin[tag]
        a, b = self.axes
        val = float(self.surfaces[tag][i, j])
        return {a.name: float(a.values[i]), b.name: float(b.values[j]),
                "objective": val, "gamma": val / self.baseline[tag]}


def _argmin(surface: np.ndarray):
    finite = np.isfinite(surface)
    if not finite.any():
        return None
    best = np.nanmin(surface)
    # row-major scan visits smaller first-axis values first
    idx = np.flatnonzero(surface.ravel() == best)[0]
    return tuple(int(v) for v in np.unravel_index(idx, surface.shape))


def make_attachment(family: str, p1: float, p2: float, m_a: float, **extra) -> Attachment:
    if family == "tmd":
        return Attachment(m_a, p1, SpringLaw.linear(p2))
    if family == "cubic_nes":
        return Attachment(m_a, p1, SpringLaw.cubic(p2))
    if family == "piecewise":
        return Attachment(m_a, extra["lambda_a"],
                          SpringLaw.piecewise(extra["k_o"], p1, p2, extra["delta"]))
    raise ConfigError(f"unknown attachment family {family!r}")


def _evaluate(base, forcing, family, grid, m_a, rare_opts, freq_grid, threads, extra):
    a, b = grid.axes
    cells = [(i, j) for i in range(a.count) for j in range(b.count)]
    av, bv = a.values, b.values

    def cell(ij):
        i, j = ij
        try:
            att = make_attachment(family, av[i], bv[j], m_a, **extra)
            return objectives(base.with_attachment(att), forcing, grid.quantities, grid.order,
                              rare_opts, freq_grid), None
        except PdsError as exc:
            return None, f"{type(exc).__name__}: {exc}"

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(cell, cells))
    else:
        results = [cell(c) for c in cells]
    surfaces = {q: np.full((a.count, b.count), np.nan) for q in grid.quantities}
    errors = {}
    for (i, j), (vals, err) in zip(cells, results):
        if vals is None:
            errors[(i, j)] = err
            continue
        for q, v in vals.items():
            surfaces[q][i, j] = v
    return surfaces, errors


def _finish(family, grid, surfaces, baseline, errors, refine, evaluate_zoom):
    argmin = {}
    for q, s in surfaces.items():
        am = _argmin(s)
        if am is None:
            raise AllCellsFailed(f"every {family} cell failed for {q}: "
                                 f"{next(iter(errors.values()), '')}")
        argmin[q] = am
    res = OptimizationResult(family, grid.axes, surfaces, baseline, argmin, errors)
    if refine:
        for q in surfaces:
            i, j = argmin[q]
            zgrid = DesignGrid((grid.axes[0].zoom(i), grid.axes[1].zoom(j)), (q,), grid.order)
            zs, _ = evaluate_zoom(zgrid)
            zi = _argmin(zs[q])
            if zi is not None and zs[q][zi] < surfaces[q][i, j]:
                a, b = zgrid.axes
                val = float(zs[q][zi])
                res.refined[q] = {a.name: float(a.values[zi[0]]), b.name: float(b.values[zi[1]]),
                                  "objective": val, "gamma": val / baseline[q]}
    return res


def grid_search(base: SystemModel, forcing: ForcingModel, grid: DesignGrid, family: str,
                m_a: float = 0.05, rare_opts: RareOptions = RareOptions(),
                freq_grid: FrequencyGrid | None = None, threads: int = 1,
                refine: bool = False) -> OptimizationResult:
    """TMD or cubic-NES search over ``(lambda_a, k_a | c_a)``; baseline is no attachment."""
    if family not in ("tmd", "cubic_nes"):
        raise ConfigError(f"grid_search handles tmd and cubic_nes, not {family!r}")
    if tuple(ax.name for ax in grid.axes) != FAMILY_AXES[family]:
        raise ConfigError(f"{family} grid axes must be {FAMILY_AXES[family]}")
    bare = base.with_attachment(None)
    baseline = objectives(bare, forcing, grid.quantities, grid.order, rare_opts, freq_grid)
    surfaces, errors = _evaluate(bare, forcing, family, grid, m_a, rare_opts, freq_grid,
                                 threads, {})
    return _finish(family, grid, surfaces, baseline, errors, refine,
                   lambda g: _evaluate(bare, forcing, family, g, m_a, rare_opts, freq_grid,
                                       threads, {}))


def sigma_zeta(model: SystemModel, forcing: ForcingModel,
               freq_grid: FrequencyGrid | None = None) -> float:
    """Background standard deviation of the host-attachment gap."""
    lin = solve_fixed_point(model, forcing.spectrum, freq_grid)
    return math.sqrt(lin.moments.gap_variance())


def design_piecewise(base: SystemModel, forcing: ForcingModel, k_o: float, lambda_a: float,
                     grid: DesignGrid | None = None, m_a: float = 0.05,
                     sigma_z: float | None = None, n_sigma: float = 4.0,
                     rare_opts: RareOptions = RareOptions(),
                     freq_grid: FrequencyGrid | None = None, threads: int = 1,
                     refine: bool = False) -> OptimizationResult:
    """Search the outer slopes of a piecewise spring around a TMD core.

    The core stiffness ``k_o`` and damping ``lambda_a`` come from the TMD
    optimum; knees sit at ``n_sigma`` gap standard deviations of that TMD.
    The baseline (``gamma_prime = 1``) is the TMD itself.
    """
    grid = grid or piecewise_grid()
    if tuple(ax.name for ax in grid.axes) != FAMILY_AXES["piecewise"]:
        raise ConfigError(f"piecewise grid axes must be {FAMILY_AXES['piecewise']}")
    tmd = base.with_attachment(Attachment(m_a, lambda_a, SpringLaw.linear(k_o)))
    if sigma_z is None:
        sigma_z = sigma_zeta(tmd, forcing, freq_grid)
    extra = {"k_o": k_o, "lambda_a": lambda_a, "delta": n_sigma * sigma_z}
    baseline = objectives(tmd, forcing, grid.quantities, grid.order, rare_opts, freq_grid)
    bare = base.with_attachment(None)
    surfaces, errors = _evaluate(bare, forcing, "piecewise", grid, m_a, rare_opts, freq_grid,
                                 threads, extra)
    res = _finish("piecewise", grid, surfaces, baseline, errors, refine,
                  lambda g: _evaluate(bare, forcing, "piecewise", g, m_a, rare_opts,
                                      freq_grid, threads, extra))
    res.design = {**extra, "sigma_zeta": sigma_z}
    return res
