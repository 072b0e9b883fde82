"""Conditionally extreme (rare-event) response.

An impulse arriving at a random phase of the background motion leaves
the impacted mass with velocity ``eta = xdot_b + alpha``, Gaussian with
mean ``mu_alpha`` and variance ``sigma_xdot_b**2 + sigma_alpha**2``.  The
free response to that initial velocity is simulated for a grid of
``eta`` values; each run contributes a histogram over its rare duration
``tau_e`` (last time ``|z| >= rho_c * max|z|``), and the mixture over
``eta`` is the conditional rare density.  The rare probability is
``P_r = tau_e_mean / T_alpha``.

The effective-measure route replaces the simulations by an equivalent
linear oscillator whose stiffness and damping depend on the impulse.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import _kernels as K
from .errors import IntegratorFailure, NoDecay, NotOscillatory, PrOutOfRange
from .systems import ImpulsePattern, Quantity, SystemModel

__all__ = [
    "EtaDistribution",
    "RareOptions",
    "RareEventProfile",
    "EffectiveMeasure",
    "eta_from",
    "rare_duration",
    "impulse_responses",
    "rare_pdf_simulated",
    "effective_measures",
    "effective_measure_table",
    "rare_pdf_effective",
    "linear_impulse_response",
]


@dataclass(frozen=True)
class EtaDistribution:
    """Gaussian law of the post-impact velocity."""

    mean: float
    std: float

    @property
    def var(self) -> float:
        return self.std ** 2

    def nodes(self, n_nodes: int = 101, width: float = 4.0):
        """Equally spaced nodes over ``mean +- width*std`` with normalized trapezoid weights."""
        if self.std == 0.0 or n_nodes == 1:
            return np.array([self.mean]), np.array([1.0])
        n = np.linspace(self.mean - width * self.std, self.mean + width * self.std, n_nodes)
        w = np.exp(-0.5 * ((n - self.mean) / self.std) ** 2)
        w[[0, -1]] *= 0.5
        return n, w / w.sum()


def eta_from(forcing, lin) -> EtaDistribution:
    """Post-impact velocity law from the impulse statistics and the background velocity of the impacted DOF."""
    model = lin.model
    sxb = lin.sigma[Quantity(model.primary, 1).tag]
    return EtaDistribution(forcing.mu_alpha, math.hypot(sxb, forcing.sigma_alpha))


@dataclass(frozen=True)
class RareOptions:
    """Numerical controls of the rare-event computation.

    ``cap`` defaults to ``200*pi/omega_primary`` (ten times twenty
    periods).  ``check_every`` is the spacing of the energy-bound stop test.
    """

    n_eta: int = 101
    eta_width: float = 4.0
    rho_c: float = 0.1
    dt_out: float = 0.05
    rtol: float = 1e-8
    atol: float = 1e-12
    cap: float | None = None
    check_every: float = 5.0
    local_bins: int = 201
    bins: int = 401
    threads: int = 1

    def cap_for(self, model: SystemModel) -> float:
        if self.cap is not None:
            return self.cap
        return 20.0 * (2.0 * math.pi / model.primary_frequency) * 10.0


def rare_duration(series, rho_c: float = 0.1, dt: float = 1.0, truncated: bool = False,
                  guard: float = 0.0) -> float:
    """Last time ``|series| >= rho_c * max|series|`` for samples spaced ``dt``.

    When the record was cut at a time cap (``truncated``) and the last
    exceedance falls within ``guard`` of its end, the decay is not
    resolved and :class:`NoDecay` is raised.
    """
    if not 0 < rho_c < 1:
        raise ValueError("rho_c must lie in (0, 1)")
    a = np.abs(np.asarray(series, dtype=float))
    peak = a.max()
    if peak == 0:
        return 0.0
    last = int(np.flatnonzero(a >= rho_c * peak)[-1])
    t_last = last * dt
    if truncated and t_last >= (len(a) - 1) * dt - guard:
        raise NoDecay(f"response still above {rho_c} of its peak at the time cap "
                      f"{(len(a) - 1) * dt:g}")
    return t_last


@dataclass
class ImpulseRun:
    """Sampled free response to one impulse: ``samples[k, 3*dof + order]`` at ``t = k*dt``."""

    n: float
    samples: np.ndarray
    dt: float
    truncated: bool


def _initial_state(model, n, pattern):
    y = np.zeros(2 * model.n_dof)
    if ImpulsePattern(pattern) is ImpulsePattern.PRIMARY_ONLY:
        y[2 * model.index(model.primary) + 1] = n
    else:
        y[1::2] = n
    return y


def _run_one(model, n, pattern, opts, monitor):
    y0 = _initial_state(model, n, pattern)
    atol = np.full(y0.size, opts.atol)
    out, rows, status = K.impulse_response(
        y0, opts.cap_for(model), opts.dt_out, opts.rtol, atol, monitor, opts.rho_c,
        opts.check_every, *model.kernel_args())
    if status == K.STATUS_STEP_UNDERFLOW:
        raise IntegratorFailure(f"step size underflow in impulse response (n={n:g})")
    return ImpulseRun(n, out[:rows].copy(), opts.dt_out, status == K.STATUS_OK)


def _is_linear(model):
    return model.attachment is None or model.attachment.spring.is_linear


def impulse_responses(model: SystemModel, n_values, pattern=ImpulsePattern.PRIMARY_ONLY,
                      opts: RareOptions = RareOptions(), monitor=None) -> list:
    """Free responses for each impulse magnitude, in input order.

    Linear models are simulated once at unit magnitude and rescaled.
    """
    n_values = np.asarray(n_values, dtype=float)
    nq = 3 * model.n_dof
    monitor = np.ones(nq, dtype=np.bool_) if monitor is None else np.asarray(monitor, np.bool_)
    if _is_linear(model):
        unit = _run_one(model, 1.0, pattern, opts, monitor)
        return [ImpulseRun(n, unit.samples * n, unit.dt, unit.truncated) for n in n_values]
    if opts.threads > 1:
        with ThreadPoolExecutor(opts.threads) as ex:
            return list(ex.map(lambda n: _run_one(model, n, pattern, opts, monitor), n_values))
    return [_run_one(model, n, pattern, opts, monitor) for n in n_values]


@dataclass
class RareEventProfile:
    """Conditional rare-event density of one quantity.

    ``density`` is piecewise constant on ``edges``.  ``tau`` holds the
    per-node durations; ``P_r = tau_mean / T_alpha``.
    """

    quantity: Quantity
    edges: np.ndarray
    density: np.ndarray
    tau_mean: float
    P_r: float
    tau: np.ndarray = field(repr=False)
    n_nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def support(self) -> float:
        return float(max(abs(self.edges[0]), abs(self.edges[-1])))

    def mass(self) -> float:
        return float(np.sum(self.density * np.diff(self.edges)))

    def moment(self, order: int) -> float:
        """Exact moment of the piecewise-constant density."""
        e = self.edges
        k = order + 1
        return float(np.sum(self.density * (e[1:] ** k - e[:-1] ** k) / k))

    def cdf(self, r):
        c = np.r_[0.0, np.cumsum(self.density * np.diff(self.edges))]
        return np.interp(r, self.edges, c, left=0.0, right=c[-1])

    def pdf(self, r):
        r = np.asarray(r, dtype=float)
        idx = np.searchsorted(self.edges, r, side="right") - 1
        inside = (idx >= 0) & (idx < self.density.size)
        out = np.zeros_like(r)
        out[inside] = self.density[idx[inside]]
        return out


def _rebin(edges_src, dens_src, edges_dst):
    # mass-conserving transfer through the piecewise-linear CDF
    c = np.r_[0.0, np.cumsum(dens_src * np.diff(edges_src))]
    cd = np.interp(edges_dst, edges_src, c, left=0.0, right=c[-1])
    return np.diff(cd) / np.diff(edges_dst)


def _segment(run: ImpulseRun, col: int, order: int, rho_c: float, guard: float):
    z = run.samples[:, col]
    if order == 2:
        # the impact instant itself carries the impulse, not the response
        z = z[1:]
    tau = rare_duration(z, rho_c, run.dt, run.truncated, guard)
    if order == 2:
        tau += run.dt
        seg = z[: int(round(tau / run.dt))]
    else:
        seg = z[: int(round(tau / run.dt)) + 1]
    return tau, seg


def _mixture(quantity, segments, taus, n_nodes, weights, T_alpha, opts):
    support = max((np.abs(s).max() for s in segments if s.size), default=0.0)
    if support == 0.0:
        support = 1.0
    edges = np.linspace(-support, support, opts.bins + 1)
    dens = np.zeros(opts.bins)
    used = 0.0
    for seg, w in zip(segments, weights):
        if seg.size == 0 or np.abs(seg).max() == 0:
            continue
        r = np.abs(seg).max()
        le = np.linspace(-r, r, opts.local_bins + 1)
        h, _ = np.histogram(seg, bins=le, density=True)
        dens += w * _rebin(le, h, edges)
        used += w
    dens /= used
    tau_mean = float(np.dot(weights, taus))
    P_r = tau_mean / T_alpha
    if not 0 < P_r < 1:
        raise PrOutOfRange(f"rare probability {P_r:.4g} for {quantity.tag} is outside (0, 1)")
    return RareEventProfile(quantity, edges, dens, tau_mean, P_r, np.asarray(taus),
                            np.asarray(n_nodes), np.asarray(weights))


def rare_pdf_simulated(model: SystemModel, eta: EtaDistribution, T_alpha: float,
                       quantities=None, pattern=ImpulsePattern.PRIMARY_ONLY,
                       opts: RareOptions = RareOptions()) -> dict:
    """Rare-event profiles by direct impulse simulation, keyed by quantity tag."""
    qs = [Quantity.parse(q) if isinstance(q, str) else q
          for q in (quantities or model.quantities())]
    n_nodes, weights = eta.nodes(opts.n_eta, opts.eta_width)
    monitor = np.zeros(3 * model.n_dof, dtype=np.bool_)
    for q in qs:
        monitor[3 * model.index(q.dof) + q.order] = True
    runs = impulse_responses(model, n_nodes, pattern, opts, monitor)
    guard = 2.0 * (2.0 * math.pi / model.primary_frequency)
    out = {}
    for q in qs:
        col = 3 * model.index(q.dof) + q.order
        taus, segs = [], []
        for run in runs:
            tau, seg = _segment(run, col, q.order, opts.rho_c, guard)
            taus.append(tau)
            segs.append(seg)
        out[q.tag] = _mixture(q, segs, taus, n_nodes, weights, T_alpha, opts)
    return out


# ------------------------------------------------------------ effective
@dataclass(frozen=True)
class EffectiveMeasure:
    """Impulse-dependent effective coefficients of the impacted DOF (per unit mass)."""

    n: float
    k_bar: float
    lambda_bar: float
    horizon: float
    t: np.ndarray = field(repr=False)
    k_eff: np.ndarray = field(repr=False)
    lambda_eff: np.ndarray = field(repr=False)

    @property
    def omega_n(self) -> float:
        return math.sqrt(self.k_bar)

    @property
    def zeta(self) -> float:
        return self.lambda_bar / (2.0 * math.sqrt(self.k_bar))

    @property
    def omega_o(self) -> complex:
        return self.omega_n * np.emath.sqrt(self.zeta ** 2 - 1.0)


def _peak_envelope(t, s, include_start=False):
    inner = np.flatnonzero((s[1:-1] > s[:-2]) & (s[1:-1] >= s[2:])) + 1
    if include_start:
        inner = np.r_[0, inner[inner > 0]]
    return inner


def effective_measures(model: SystemModel, n: float, horizon: float | None = None,
                       opts: RareOptions = RareOptions(), run: ImpulseRun | None = None,
                       min_peaks: int = 4) -> EffectiveMeasure:
    """Effective stiffness and damping of the impacted DOF for impulse ``n``.

    Envelopes ``<x^2>`` and ``<xdot^2>`` are monotone cubic interpolants
    through the local maxima (the start is a maximum of ``xdot^2``).
    Averages run over ``[0, horizon]`` (default: displacement rare duration).
    """
    if n == 0:
        raise NotOscillatory("zero impulse has no response")
    if run is None:
        run = _run_one(model, n, ImpulsePattern.PRIMARY_ONLY, opts,
                       np.ones(3 * model.n_dof, dtype=np.bool_))
    i = model.index(model.primary)
    x = run.samples[:, 3 * i]
    xd = run.samples[:, 3 * i + 1]
    t = np.arange(x.size) * run.dt
    if horizon is None:
        horizon = rare_duration(x, opts.rho_c, run.dt)
    px = _peak_envelope(t, x * x)
    pv = _peak_envelope(t, xd * xd, include_start=True)
    px = px[t[px] <= horizon + 2 * math.pi / model.primary_frequency]
    pv = pv[t[pv] <= horizon + 2 * math.pi / model.primary_frequency]
    if px.size < min_peaks or pv.size < min_peaks:
        raise NotOscillatory(f"fewer than {min_peaks} envelope peaks for n={n:g}")
    ex = PchipInterpolator(t[px], (x * x)[px], extrapolate=True)
    ev = PchipInterpolator(t[pv], (xd * xd)[pv], extrapolate=True)
    tt = t[t <= horizon]
    X2 = np.maximum(ex(tt), 1e-300)
    V2 = np.maximum(ev(tt), 1e-300)
    dV2 = ev.derivative()(tt)
    k_eff = V2 / X2
    lam_eff = -dV2 / V2
    iv = np.trapezoid(V2, tt) if hasattr(np, "trapezoid") else np.trapz(V2, tt)
    ix = np.trapezoid(X2, tt) if hasattr(np, "trapezoid") else np.trapz(X2, tt)
    k_bar = iv / ix
    lam_bar = (V2[0] - V2[-1]) / iv
    return EffectiveMeasure(float(n), float(k_bar), float(lam_bar), float(horizon),
                            tt, k_eff, lam_eff)


def effective_measure_table(model: SystemModel, n_values, opts: RareOptions = RareOptions()) -> list:
    """Effective measures over a set of impulses (each with its own rare duration horizon)."""
    runs = impulse_responses(model, n_values, ImpulsePattern.PRIMARY_ONLY, opts)
    return [effective_measures(model, r.n, opts=opts, run=r) for r in runs]


def linear_impulse_response(t, n, k, lam):
    """Displacement, velocity and acceleration of ``x'' + lam x' + k x = 0`` after ``x'(0) = n``."""
    t = np.asarray(t, dtype=float)
    wn = math.sqrt(k)
    zeta = lam / (2.0 * wn)
    a = zeta * wn
    if zeta < 1.0:
        wd = wn * math.sqrt(1.0 - zeta * zeta)
        e = np.exp(-a * t)
        x = n * e * np.sin(wd * t) / wd
        xd = n * e * (np.cos(wd * t) - a * np.sin(wd * t) / wd)
    elif zeta > 1.0:
        wo = wn * math.sqrt(zeta * zeta - 1.0)
        e1, e2 = np.exp((-a + wo) * t), np.exp((-a - wo) * t)
        x = n * (e1 - e2) / (2.0 * wo)
        xd = n * ((-a + wo) * e1 - (-a - wo) * e2) / (2.0 * wo)
    else:
        e = np.exp(-a * t)
        x = n * t * e
        xd = n * e * (1.0 - a * t)
    xdd = -lam * xd - k * x
    return x, xd, xdd


def rare_pdf_effective(model: SystemModel, eta: EtaDistribution, T_alpha: float,
                       measures: list, quantities=None,
                       opts: RareOptions = RareOptions()) -> dict:
    """Rare-event profiles of the impacted DOF from effective linear oscillators.

    ``k_bar`` and ``lambda_bar`` are interpolated (linearly, clamped) from
    ``measures`` onto the eta grid.
    """
    p = model.primary
    qs = [Quantity.parse(q) if isinstance(q, str) else q
          for q in (quantities or [Quantity(p, o) for o in range(3)])]
    if any(q.dof != p for q in qs):
        raise ValueError("effective measures describe the impacted DOF only")
    mn = np.array([m.n for m in measures])
    order = np.argsort(mn)
    mn = mn[order]
    kb = np.array([measures[i].k_bar for i in order])
    lb = np.array([measures[i].lambda_bar for i in order])
    n_nodes, weights = eta.nodes(opts.n_eta, opts.eta_width)
    series = []
    for n in n_nodes:
        k = float(np.interp(n, mn, kb))
        lam = float(np.interp(n, mn, lb))
        zeta = lam / (2 * math.sqrt(k))
        rate = zeta * math.sqrt(k) if zeta < 1 else \
            math.sqrt(k) * (zeta - math.sqrt(zeta * zeta - 1.0))
        t_end = math.log(1.0 / opts.rho_c) / rate + 4 * 2 * math.pi / math.sqrt(k)
        t_end = min(t_end * 1.5, 50 * opts.cap_for(model))
        t = np.arange(0.0, t_end + opts.dt_out, opts.dt_out)
        series.append(np.stack(linear_impulse_response(t, n, k, lam), axis=1))
    out = {}
    for q in qs:
        taus, segs = [], []
        for s in series:
            run = ImpulseRun(0.0, s, opts.dt_out, False)
            tau, seg = _segment(run, q.order, q.order, opts.rho_c, 0.0)
            taus.append(tau)
            segs.append(seg)
        out[q.tag] = _mixture(q, segs, taus, n_nodes, weights, T_alpha, opts)
    return out
