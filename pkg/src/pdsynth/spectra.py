"""Background excitation spectrum and spectral quadrature.

The background base motion ``h(t)`` has a (possibly frequency-shifted)
Pierson-Moskowitz density.  All response covariances are one-sided
frequency integrals of products of transfer functions with that density,
so the quadrature here is shared by :mod:`pdsynth.statlin`,
:mod:`pdsynth.synthesis` and :mod:`pdsynth.montecarlo`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import ConfigError, NonConverged, SupportNotBracketed

__all__ = [
    "BackgroundSpectrum",
    "FrequencyGrid",
    "QuadResult",
    "density",
    "adaptive_quad",
    "integrate_cross_spectrum",
    "moment_integrals",
]


@dataclass(frozen=True)
class BackgroundSpectrum:
    """Pierson-Moskowitz density ``q * w'**-5 * exp(-w'**-4)`` with ``w' = w - shift``."""

    q: float
    shift: float = 1.0
    kind: str = "pierson_moskowitz"

    def __post_init__(self):
        if not self.q > 0:
            raise ConfigError(f"spectrum magnitude q must be > 0, got {self.q}")
        if not self.shift >= 0:
            raise ConfigError(f"spectrum shift must be >= 0, got {self.shift}")
        if self.kind != "pierson_moskowitz":
            raise ConfigError(f"unsupported spectrum kind {self.kind!r}")

    def __call__(self, omega):
        return density(self, omega)

    @property
    def peak_frequency(self) -> float:
        return self.shift + 0.8 ** 0.25

    @property
    def peak_density(self) -> float:
        return float(density(self, self.peak_frequency))

    def scaled(self, factor: float) -> "BackgroundSpectrum":
        return BackgroundSpectrum(self.q * factor, self.shift, self.kind)


def density(spec: BackgroundSpectrum, omega):
    """Spectral density at ``omega`` (scalar or array); zero for ``omega <= shift``."""
    w = np.asarray(omega, dtype=float)
    wp = w - spec.shift
    out = np.zeros_like(w)
    pos = wp > 0
    # exp(-w'^-4) underflows long before w'^-5 overflows
    wpp = wp[pos]
    with np.errstate(over="ignore", under="ignore"):
        out[pos] = spec.q * np.exp(-(wpp ** -4.0)) * wpp ** -5.0
    out[~np.isfinite(out)] = 0.0
    if np.ndim(omega) == 0:
        return float(out)
    return out


# 15-point Kronrod rule with the embedded 7-point Gauss rule (QUADPACK qk15).
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KW = np.concatenate([_WGK[:-1], _WGK[::-1]])
_GW = np.zeros(15)
_GW[1:7:2] = _WG[:3]
_GW[7] = _WG[3]
_GW[9:14:2] = _WG[2::-1]


@dataclass(frozen=True)
class FrequencyGrid:
    """Integration window and adaptive-quadrature controls.

    ``breakpoints`` seed the initial panel partition; ``initial_panels``
    uniform panels are laid between consecutive breakpoints.
    """

    omega_min: float
    omega_max: float
    rtol: float = 1e-8
    atol: float = 1e-30
    rule: str = "gauss-kronrod-15"
    breakpoints: tuple = ()
    initial_panels: int = 8
    max_panels: int = 200_000

    def __post_init__(self):
        if not 0 < self.omega_min < self.omega_max:
            raise ConfigError(
                f"frequency window must satisfy 0 < min < max, got "
                f"[{self.omega_min}, {self.omega_max}]"
            )
        if not (self.rtol > 0 and self.atol > 0):
            raise ConfigError("quadrature tolerances must be positive")

    @classmethod
    def for_spectrum(cls, spec: BackgroundSpectrum, width: float = 20.0,
                     lower_gap: float = 1e-3, **kw) -> "FrequencyGrid":
        lo = spec.shift + lower_gap
        hi = spec.shift + width
        bps = tuple(b for b in (spec.shift + 0.4, spec.shift + 0.7, spec.peak_frequency,
                                spec.shift + 1.5, spec.shift + 3.0, spec.shift + 6.0)
                    if lo < b < hi)
        return cls(lo, hi, breakpoints=bps, **kw)

    def initial_edges(self) -> np.ndarray:
        knots = np.unique(np.r_[self.omega_min, self.breakpoints, self.omega_max])
        pieces = [np.linspace(a, b, self.initial_panels + 1)[:-1]
                  for a, b in zip(knots[:-1], knots[1:])]
        return np.r_[np.concatenate(pieces), self.omega_max]


class QuadResult(NamedTuple):
    value: np.ndarray
    error: np.ndarray
    edges: np.ndarray


def kronrod_nodes(edges: np.ndarray):
    """Nodes and K15 weights for a fixed panel partition (for re-use across iterations)."""
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    nodes = (mid[:, None] + half[:, None] * _NODES[None, :]).ravel()
    weights = (half[:, None] * _KW[None, :]).ravel()
    return nodes, weights


def adaptive_quad(f: Callable[[np.ndarray], np.ndarray], grid: FrequencyGrid,
                  edges: np.ndarray | None = None) -> QuadResult:
    """Globally adaptive Gauss-Kronrod integration of a (vector-valued) real integrand.

    ``f`` maps an array of frequencies of shape ``(n,)`` to an array of
    shape ``(..., n)``.  Panels whose Kronrod/Gauss discrepancy exceeds
    their share of the tolerance are bisected until the summed error
    estimate meets ``max(atol, rtol*|I|)`` for every component.  The
    returned ``edges`` are the final partition, reusable through
    :func:`kronrod_nodes`.
    """
    if edges is None:
        edges = grid.initial_edges()
    a = np.asarray(edges[:-1], dtype=float)
    b = np.asarray(edges[1:], dtype=float)
    width = grid.omega_max - grid.omega_min
    done_val = done_err = 0.0
    finished = [np.empty(0)]
    while True:
        half = 0.5 * (b - a)
        mid = 0.5 * (b + a)
        x = mid[:, None] + half[:, None] * _NODES[None, :]
        fx = np.asarray(f(x.ravel()), dtype=float)
        fx = fx.reshape(fx.shape[:-1] + x.shape)
        k = np.einsum("...pn,n->...p", fx, _KW) * half
        g = np.einsum("...pn,n->...p", fx, _GW) * half
        err = np.abs(k - g)
        total = done_val + k.sum(axis=-1)
        tot_err = done_err + err.sum(axis=-1)
        tol = np.maximum(grid.atol, grid.rtol * np.abs(total))
        if np.all(tot_err <= tol):
            return QuadResult(total, tot_err, np.unique(np.concatenate(finished + [a, b])))
        kp = k.reshape(-1, k.shape[-1])
        errp = err.reshape(-1, err.shape[-1])
        share = np.reshape(tol, (-1, 1)) * (b - a) / width
        excess = (errp / share).max(axis=0)
        split = excess > 1.0
        if not split.any():
            # every panel is within its share yet the sum is not
            split = excess >= np.median(excess)
        keep = ~split
        done_val = done_val + kp[:, keep].sum(axis=1).reshape(np.shape(total))
        done_err = done_err + errp[:, keep].sum(axis=1).reshape(np.shape(total))
        finished += [a[keep], b[keep]]
        a, b = a[split], b[split]
        m = 0.5 * (a + b)
        a, b = np.r_[a, m], np.r_[m, b]
        n_done = sum(len(e) for e in finished) // 2
        if a.size + n_done > grid.max_panels:
            raise NonConverged(
                f"adaptive quadrature exceeded {grid.max_panels} panels "
                f"(error {np.max(tot_err):.3e} > tol {np.min(tol):.3e})"
            )


def integrate_cross_spectrum(f: Callable[[np.ndarray], np.ndarray], grid: FrequencyGrid) -> float:
    """Covariance from a (cross-)spectral density: integral of its real part over the window."""
    res = adaptive_quad(lambda w: np.real(f(w)), grid)
    return float(res.value) if np.ndim(res.value) == 0 else res.value


def tail_fraction(spec: BackgroundSpectrum, grid: FrequencyGrid, order: int = 0) -> float:
    """Power-law estimate of the integrand mass beyond ``omega_max`` relative to the window.

    Uses the ``w'**-5`` asymptote of the density; meaningful for orders 0..3.
    """
    wp = grid.omega_max - spec.shift
    tail = spec.q * grid.omega_max ** (2 * order) * wp ** -4 / (4 - 2 * order) \
        if order < 2 else np.inf
    inside = adaptive_quad(lambda w: w ** (2 * order) * density(spec, w), grid).value
    return float(tail / inside)


def moment_integrals(spec: BackgroundSpectrum, grid: FrequencyGrid | None = None,
                     bracket_tol: float = 1e-4) -> tuple[float, float]:
    """Displacement and velocity variances ``(sigma_h**2, sigma_hdot**2)`` of the background.

    Raises :class:`SupportNotBracketed` when the window clips a noticeable
    part of the displacement spectrum.
    """
    if grid is None:
        grid = FrequencyGrid.for_spectrum(spec)
    peak = spec.peak_density
    if density(spec, grid.omega_min) > grid.rtol * peak:
        raise SupportNotBracketed(
            f"lower window edge {grid.omega_min} cuts the spectrum "
            f"(density {density(spec, grid.omega_min):.3e} vs peak {peak:.3e})"
        )
    if tail_fraction(spec, grid, 0) > bracket_tol:
        raise SupportNotBracketed(
            f"upper window edge {grid.omega_max} leaves more than {bracket_tol} "
            "of the displacement variance outside"
        )
    res = adaptive_quad(lambda w: np.stack([density(spec, w), w * w * density(spec, w)]), grid)
    return float(res.value[0]), float(res.value[1])


def sample_frequencies(grid: FrequencyGrid, n_bins: int) -> tuple[np.ndarray, float]:
    """Midpoints of ``n_bins`` uniform bins covering the window, plus the bin width."""
    dw = (grid.omega_max - grid.omega_min) / n_bins
    return grid.omega_min + dw * (np.arange(n_bins) + 0.5), dw
