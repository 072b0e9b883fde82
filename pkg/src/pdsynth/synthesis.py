"""Total-probability synthesis of background and rare-event densities.

    p(r) = (1 - P_r) N(r; 0, sigma_b**2) + P_r p_rare(r)

In the absolute frame only the Gaussian part changes (its variance picks
up the base motion and its covariance with the response); the rare part
is the same because the background is negligible during an extreme event.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import factorial2
from scipy.stats import norm

from .errors import GridMismatch, NegativeVariance
from .rare import RareEventProfile
from .statlin import LinearizationSolution
from .systems import Quantity

__all__ = ["ResponsePdf", "synthesize", "absolute_background", "moment", "gaussian_moment"]


def gaussian_moment(sigma: float, order: int) -> float:
    """Raw moment of a centered Gaussian."""
    if order % 2:
        return 0.0
    if order == 0:
        return 1.0
    return float(factorial2(order - 1)) * sigma ** order


@dataclass
class ResponsePdf:
    """Synthesized density on a symmetric uniform grid.

    ``rare_component`` is the rare density averaged over each grid cell
    (not yet multiplied by ``P_r``), so that trapezoid sums of ``density``
    conserve the rare mass.
    """

    quantity: Quantity
    frame: str
    grid: np.ndarray
    density: np.ndarray
    background_component: np.ndarray
    rare_component: np.ndarray
    P_r: float
    sigma_b: float
    rare: RareEventProfile | None

    @property
    def log10_density(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log10(self.density)

    @property
    def weights(self) -> tuple[float, float]:
        return 1.0 - self.P_r, self.P_r

    def mass(self) -> float:
        return float(np.trapezoid(self.density, self.grid)) if hasattr(np, "trapezoid") \
            else float(np.trapz(self.density, self.grid))

    def cdf(self, r):
        """Exact mixture CDF (Gaussian part analytic, rare part piecewise linear)."""
        g = norm.cdf(r, scale=self.sigma_b)
        if self.rare is None or self.P_r == 0:
            return g
        return (1 - self.P_r) * g + self.P_r * self.rare.cdf(r)

    def cell_average(self, edges) -> np.ndarray:
        """Mean density over each cell of ``edges``."""
        c = self.cdf(np.asarray(edges, dtype=float))
        return np.diff(c) / np.diff(edges)

    def exceedance_level(self, prob: float) -> float:
        """Smallest ``r > 0`` with ``P(|Z| > r) <= prob``."""
        def tail(r):
            return 1.0 - (self.cdf(r) - self.cdf(-r))
        lo, hi = 0.0, float(self.grid[-1])
        if tail(hi) > prob:
            raise GridMismatch("exceedance level lies beyond the grid")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if tail(mid) > prob:
                lo = mid
            else:
                hi = mid
        return hi

    def moment(self, order: int) -> float:
        return moment(self, order)

    def numeric_moment(self, order: int) -> float:
        f = self.grid ** order * self.density
        return float(np.trapezoid(f, self.grid)) if hasattr(np, "trapezoid") \
            else float(np.trapz(f, self.grid))


def absolute_background(lin: LinearizationSolution, quantity) -> tuple[float, float]:
    """Mean and standard deviation of the absolute background motion ``z + h``."""
    q = quantity if isinstance(quantity, Quantity) else Quantity.parse(str(quantity))
    return 0.0, lin.absolute_sigma(q)


def synthesize(lin: LinearizationSolution, rare: RareEventProfile | None, quantity,
               frame: str = "relative", n_points: int = 2001, n_sigma: float = 8.0,
               rare_margin: float = 1.1) -> ResponsePdf:
    """Mixture density of ``quantity`` in the ``relative`` or ``absolute`` frame."""
    q = quantity if isinstance(quantity, Quantity) else Quantity.parse(str(quantity))
    if frame == "relative":
        sigma = lin.sigma[q.tag]
    elif frame == "absolute":
        sigma = absolute_background(lin, q)[1]
    else:
        raise ValueError(f"unknown frame {frame!r}")
    if not sigma > 0:
        raise NegativeVariance(f"background variance of {q.tag} is not positive")
    P_r = 0.0 if rare is None else rare.P_r
    extent = n_sigma * sigma
    if rare is not None:
        if not np.all(np.isfinite(rare.edges)):
            raise GridMismatch("rare support is not finite")
        extent = max(extent, rare_margin * rare.support)
    r = np.linspace(-extent, extent, n_points)
    bg = norm.pdf(r, scale=sigma)
    if rare is not None and P_r > 0:
        h = r[1] - r[0]
        rc = (rare.cdf(r + 0.5 * h) - rare.cdf(r - 0.5 * h)) / h
    else:
        rc = np.zeros_like(r)
    dens = (1.0 - P_r) * bg + P_r * rc
    out = ResponsePdf(q, frame, r, dens, bg, rc, P_r, float(sigma), rare)
    _check(out)
    return out


def moment(pdf: ResponsePdf, order: int) -> float:
    """Raw moment: analytic Gaussian part plus the exact moment of the rare histogram."""
    if order < 0 or int(order) != order:
        raise ValueError("order must be a nonnegative integer")
    g = gaussian_moment(pdf.sigma_b, order)
    if pdf.rare is None or pdf.P_r == 0:
        return g
    return (1.0 - pdf.P_r) * g + pdf.P_r * pdf.rare.moment(order)


def _check(pdf: ResponsePdf, tol: float = 1e-3) -> None:
    m = pdf.mass()
    if not math.isclose(m, 1.0, abs_tol=tol):
        raise GridMismatch(f"synthesized density integrates to {m:.6f}")
