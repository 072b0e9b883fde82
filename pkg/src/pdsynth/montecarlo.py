"""Direct Monte-Carlo oracle.

The background base motion is a sum of ``n_bins`` cosines with amplitudes
``sqrt(2 S(w_k) dw)`` and independent uniform phases.  Bin centres sit on
integer multiples of ``dw``, so the signal is exactly periodic with period
``2 pi / dw`` and one FFT per derivative order tabulates it on a grid of
step ``dtf`` with ``dw * dtf * N = 2 pi``.  Impulses arrive as a Poisson
train conditioned on its count and act as velocity jumps.  Each
realization is integrated event to event and its samples are binned on
the fly.

Randomness: realization ``i`` of a run with root seed ``s`` draws from a
Philox generator keyed by ``SeedSequence([s, i])``; background phases
are drawn first, then the impulse train.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import ConfigError, IntegratorFailure
from .spectra import BackgroundSpectrum, FrequencyGrid, density, moment_integrals
from .systems import ImpulsePattern, Quantity, SystemModel

__all__ = [
    "ForcingModel",
    "BackgroundTables",
    "ExcitationRealization",
    "MCOptions",
    "EnsembleResult",
    "realization_rng",
    "background_tables",
    "generate_background",
    "generate_impulse_train",
    "make_realization",
    "simulate_realization",
    "ensemble_pdf",
    "quantity_tags",
]


@dataclass(frozen=True)
class ForcingModel:
    """Background spectrum plus a Poisson train of Gaussian impulses.

    ``mu_alpha`` and ``sigma_alpha`` are the impulse-magnitude mean and
    standard deviation; impulses arrive at rate ``1/T_alpha``.
    """

    spectrum: BackgroundSpectrum
    T_alpha: float
    mu_alpha: float
    sigma_alpha: float
    pattern: ImpulsePattern = ImpulsePattern.PRIMARY_ONLY
    beta: float | None = None

    def __post_init__(self):
        if not self.T_alpha > 0:
            raise ConfigError(f"T_alpha must be > 0, got {self.T_alpha}")
        if not self.sigma_alpha >= 0:
            raise ConfigError(f"sigma_alpha must be >= 0, got {self.sigma_alpha}")
        if not math.isfinite(self.mu_alpha):
            raise ConfigError("mu_alpha must be finite")
        object.__setattr__(self, "pattern", ImpulsePattern(self.pattern))

    @property
    def nu_alpha(self) -> float:
        return 1.0 / self.T_alpha

    @classmethod
    def from_beta(cls, spectrum: BackgroundSpectrum, T_alpha: float, beta: float,
                  sigma_alpha: float | None = None, pattern=ImpulsePattern.PRIMARY_ONLY,
                  grid: FrequencyGrid | None = None) -> "ForcingModel":
        """Impulse mean ``beta * sigma_hdot``; ``sigma_alpha`` defaults to ``sigma_hdot``."""
        if not beta > 1:
            raise ConfigError(f"severity ratio beta must exceed 1, got {beta}")
        s_hd = math.sqrt(moment_integrals(spectrum, grid)[1])
        return cls(spectrum, T_alpha, beta * s_hd, s_hd if sigma_alpha is None else sigma_alpha,
                   pattern, beta)


def realization_rng(root_seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(root_seed), int(index)])))


@dataclass(frozen=True)
class BackgroundTables:
    """One period of ``h`` and its first three derivatives on a uniform grid."""

    tables: np.ndarray
    dtf: float
    omega: np.ndarray
    amplitude: np.ndarray
    phase: np.ndarray

    @property
    def period(self) -> float:
        return self.tables.shape[1] * self.dtf

    def evaluate(self, t, order: int = 0) -> np.ndarray:
        """Exact cosine sum at times ``t`` (reference, O(len(t) * n_bins))."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        arg = np.outer(t, self.omega) + self.phase
        w = self.omega ** order
        return (np.cos(arg + 0.5 * math.pi * order) * (self.amplitude * w)).sum(axis=1)


def _frequency_bins(spectrum: BackgroundSpectrum, grid: FrequencyGrid | None, n_bins: int):
    if grid is None:
        grid = FrequencyGrid.for_spectrum(spectrum)
    dw = (grid.omega_max - grid.omega_min) / n_bins
    k0 = int(math.ceil(grid.omega_min / dw - 0.5))
    idx = k0 + np.arange(n_bins)
    return idx, dw


def background_tables(spectrum: BackgroundSpectrum, phases: np.ndarray,
                      grid: FrequencyGrid | None = None, dt_max: float | None = None
                      ) -> BackgroundTables:
    """Tabulate the cosine sum for given phases (one per frequency bin)."""
    n_bins = phases.size
    idx, dw = _frequency_bins(spectrum, grid, n_bins)
    omega = idx * dw
    amp = np.sqrt(2.0 * density(spectrum, omega) * dw)
    if dt_max is None:
        dt_max = 2.0 * math.pi / (20.0 * omega[-1])
    N = int(math.ceil(2.0 * math.pi / (dw * dt_max)))
    N = max(N, 2 * (idx[-1] + 1))
    dtf = 2.0 * math.pi / (N * dw)
    c = np.zeros(N, dtype=complex)
    tables = np.empty((4, N))
    for m in range(4):
        c[:] = 0.0
        c[idx] = amp * np.exp(1j * phases) * (1j * omega) ** m
        tables[m] = np.real(np.fft.ifft(c) * N)
    return BackgroundTables(tables, dtf, omega, amp, phases)


def generate_background(spectrum: BackgroundSpectrum, T: float, dt: float, seed: int,
                        index: int = 0, n_bins: int = 2000,
                        grid: FrequencyGrid | None = None):
    """Sampled background ``(t, h, hdot, hddot)`` on ``[0, T]`` with step ``dt``."""
    if dt <= 0 or T <= 0:
        raise ConfigError("T and dt must be positive")
    rng = realization_rng(seed, index)
    phases = rng.uniform(0.0, 2.0 * math.pi, n_bins)
    tab = background_tables(spectrum, phases, grid)
    t = np.arange(0.0, T + 0.5 * dt, dt)
    out = [np.array([K.background(m, ti, tab.tables, tab.dtf) for ti in t]) for m in range(3)]
    return t, out[0], out[1], out[2]


def generate_impulse_train(forcing: ForcingModel, T: float, rng: np.random.Generator,
                           n_required: int | None = None, t0: float = 0.0,
                           max_tries: int = 100000):
    """Poisson arrival times in ``(t0, t0 + T]`` and Gaussian magnitudes.

    With ``n_required`` the train is redrawn until it holds exactly that
    many events.
    """
    if not T > 0:
        raise ConfigError("impulse train duration must be positive")
    for _ in range(max_tries):
        gaps = rng.exponential(forcing.T_alpha, size=int(3 * T / forcing.T_alpha) + 50)
        times = np.cumsum(gaps)
        while times[-1] <= T:
            times = np.r_[times, times[-1] + np.cumsum(rng.exponential(forcing.T_alpha, 50))]
        times = times[times <= T]
        if n_required is None or times.size == n_required:
            break
    else:
        raise ConfigError(f"could not draw {n_required} impulses in {max_tries} attempts")
    mags = forcing.mu_alpha + forcing.sigma_alpha * rng.standard_normal(times.size)
    return t0 + times, mags


@dataclass
class ExcitationRealization:
    background: BackgroundTables
    event_times: np.ndarray
    event_magnitudes: np.ndarray
    duration: float
    seed: tuple


@dataclass(frozen=True)
class MCOptions:
    """Monte-Carlo controls.

    ``trim`` defaults to ``5 / (zeta omega)`` of the impacted DOF.  The
    recorded span of each realization is ``duration`` if given, else
    ``n_impulses * T_alpha``.
    """

    n_realizations: int = 10
    n_impulses: int = 100
    n_bins_freq: int = 2000
    dt_out: float = 0.1
    rtol: float = 1e-8
    atol: float = 1e-12
    trim: float | None = None
    duration: float | None = None
    hist_bins: int = 201
    threads: int = 1

    def trim_for(self, model: SystemModel) -> float:
        if self.trim is not None:
            return self.trim
        return 5.0 / (model.primary_damping_ratio * model.primary_frequency)


def make_realization(model: SystemModel, forcing: ForcingModel, seed: int, index: int,
                     opts: MCOptions = MCOptions(), grid: FrequencyGrid | None = None
                     ) -> ExcitationRealization:
    rng = realization_rng(seed, index)
    phases = rng.uniform(0.0, 2.0 * math.pi, opts.n_bins_freq)
    tab = background_tables(forcing.spectrum, phases, grid)
    trim = opts.trim_for(model)
    T = opts.duration if opts.duration is not None else opts.n_impulses * forcing.T_alpha
    if not T > 0:
        raise ConfigError("realization duration must be positive")
    if opts.n_impulses > 0:
        times, mags = generate_impulse_train(forcing, T, rng, opts.n_impulses, t0=trim)
    else:
        times, mags = np.empty(0), np.empty(0)
    return ExcitationRealization(tab, times, mags, trim + T, (int(seed), int(index)))


def _jump_mask(model: SystemModel, pattern) -> np.ndarray:
    mask = np.zeros(model.n_dof)
    if ImpulsePattern(pattern) is ImpulsePattern.PRIMARY_ONLY:
        mask[model.index(model.primary)] = 1.0
    else:
        mask[:] = 1.0
    return mask


def simulate_realization(model: SystemModel, real: ExcitationRealization,
                         pattern=ImpulsePattern.PRIMARY_ONLY, dt_out: float = 0.1,
                         rtol: float = 1e-8, atol: float = 1e-12, t_end: float | None = None):
    """Relative response samples ``(t, samples)``; ``samples[k, 3*dof + order]``."""
    t_end = real.duration if t_end is None else t_end
    y0 = np.zeros(2 * model.n_dof)
    keep = real.event_times <= t_end
    out, rows, status = K.forced_trajectory(
        y0, t_end, real.event_times[keep], real.event_magnitudes[keep],
        _jump_mask(model, pattern), dt_out, rtol, np.full(y0.size, atol),
        *model.kernel_args(), real.background.tables, real.background.dtf)
    if status != K.STATUS_OK:
        raise IntegratorFailure(f"step size underflow in realization {real.seed}")
    return np.arange(rows) * dt_out, out[:rows]


def quantity_tags(model: SystemModel) -> list[tuple[str, str]]:
    """``(frame, tag)`` pairs in kernel histogram order."""
    rel = [("relative", q.tag) for q in model.quantities()]
    return rel + [("absolute", q.tag) for q in model.quantities()]


@dataclass
class EnsembleResult:
    """Pooled histograms per ``(frame, tag)``.

    ``counts`` excludes under/overflow, which are kept separately; the
    density normalizes by the total number of samples including them.
    """

    edges: dict
    counts: dict
    outside: dict
    n_samples: int
    sums: dict
    seeds: list
    per_realization: list = field(default_factory=list, repr=False)

    def density(self, frame: str, tag: str) -> np.ndarray:
        e = self.edges[(frame, tag)]
        return self.counts[(frame, tag)] / (self.n_samples * np.diff(e))

    def variance(self, frame: str, tag: str) -> float:
        s = self.sums[(frame, tag)]
        m = s[0] / self.n_samples
        return s[1] / self.n_samples - m * m

    def moment(self, frame: str, tag: str, order: int) -> float:
        idx = {1: 0, 2: 1, 4: 2}[order]
        return self.sums[(frame, tag)][idx] / self.n_samples

    def kurtosis(self, frame: str, tag: str) -> float:
        return self.moment(frame, tag, 4) / self.moment(frame, tag, 2) ** 2


def ensemble_pdf(model: SystemModel, forcing: ForcingModel, limits: dict, seed: int,
                 opts: MCOptions = MCOptions(), grid: FrequencyGrid | None = None
                 ) -> EnsembleResult:
    """Pooled histograms over ``opts.n_realizations`` realizations.

    ``limits`` maps ``(frame, tag)`` to the half-width of the symmetric
    histogram range.  Realizations may run in parallel; the merge is done
    in realization order so results do not depend on the thread count.
    """
    keys = quantity_tags(model)
    lo = np.array([-limits[k] for k in keys], dtype=float)
    hi = np.array([limits[k] for k in keys], dtype=float)
    trim = opts.trim_for(model)
    mask = _jump_mask(model, forcing.pattern)
    args = model.kernel_args()

    def one(i):
        real = make_realization(model, forcing, seed, i, opts, grid)
        y0 = np.zeros(2 * model.n_dof)
        counts, sums, n, status, t = K.forced_response(
            y0, real.duration, real.event_times, real.event_magnitudes, mask, opts.dt_out,
            trim, opts.rtol, np.full(y0.size, opts.atol), *args, real.background.tables,
            real.background.dtf, lo, hi, opts.hist_bins)
        if status != K.STATUS_OK:
            raise IntegratorFailure(f"step size underflow in realization {i} at t={t:g}")
        return counts, sums, n

    idx = list(range(opts.n_realizations))
    if opts.threads > 1:
        with ThreadPoolExecutor(opts.threads) as ex:
            results = list(ex.map(one, idx))
    else:
        results = [one(i) for i in idx]
    counts = sum(r[0] for r in results)
    sums = sum(r[1] for r in results)
    n_total = int(sum(r[2] for r in results))
    edges, cnt, outside, sm = {}, {}, {}, {}
    for q, k in enumerate(keys):
        edges[k] = np.linspace(lo[q], hi[q], opts.hist_bins + 1)
        cnt[k] = counts[q, :opts.hist_bins].astype(np.int64)
        outside[k] = (int(counts[q, opts.hist_bins]), int(counts[q, opts.hist_bins + 1]))
        sm[k] = sums[q].copy()
    return EnsembleResult(edges, cnt, outside, n_total, sm,
                          [(int(seed), i) for i in idx], [r[2] for r in results])
