"""Statistical linearization of the background response.

Under Gaussian closure the cubic attachment term ``c_a z**3`` (with
``z`` the gap between host and attachment) is replaced by an equivalent
stiffness increment ``kappa = 3 c_a Var(z) = c_a (3 s_hh - 6 s_ha + 3 s_aa)``.
For a given ``kappa`` the system is linear, so the relative displacement
spectrum of every DOF is ``|T(w)|**2 S(w)`` where ``T`` solves

    (-w**2 M + j w C + K + kappa G) T = w**2 M 1

(the base acceleration ``-w**2 H`` loads every mass).  The unknown
closure moments are the fixed point of "moments -> kappa -> spectra ->
integrated moments", solved by damped Picard iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NegativeVariance, NonConverged, SingularTransfer
from .spectra import (BackgroundSpectrum, FrequencyGrid, adaptive_quad, density,
                      kronrod_nodes)
from .systems import Quantity, SystemModel

__all__ = [
    "ClosureMoments",
    "LinearizationSolution",
    "transfer_operators_2dof",
    "transfer_operators_3dof",
    "transfer_functions",
    "response_spectra_2dof",
    "response_spectra_3dof",
    "solve_fixed_point",
]

_SINGULAR = 1e-14


@dataclass(frozen=True)
class ClosureMoments:
    """Second moments entering the closure: host variance, host-attachment covariance, attachment variance.

    For the seat model the host is ``x``; for the deck-seat model it is ``y``.
    """

    var_host: float
    cov: float
    var_att: float

    def gap_variance(self) -> float:
        return self.var_host - 2.0 * self.cov + self.var_att

    def as_array(self) -> np.ndarray:
        return np.array([self.var_host, self.cov, self.var_att])

    @classmethod
    def from_array(cls, a) -> "ClosureMoments":
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def is_feasible(self, slack: float = 1e-12) -> bool:
        if self.var_host < 0 or self.var_att < 0:
            return False
        return self.cov ** 2 <= self.var_host * self.var_att * (1 + slack) + slack


def _kappa(model: SystemModel, m: ClosureMoments) -> float:
    att = model.attachment
    if att is None or att.spring.kind != "cubic":
        return 0.0
    return 3.0 * att.spring.c * m.gap_variance()


def _linear_stiffness(model: SystemModel) -> float:
    # piecewise springs act as linear(k_o) inside the background band
    return 0.0 if model.attachment is None else model.attachment.spring.k


def transfer_operators_2dof(model: SystemModel, omega, moments: ClosureMoments):
    """Complex operators ``(A, B, C)`` of the seat model at ``omega``.

    ``A`` is the seat dynamic stiffness including the attachment link,
    ``B`` the link itself and ``C`` the attachment dynamic stiffness.
    """
    att = model.attachment
    w = np.asarray(omega, dtype=float)
    jw = 1j * w
    la = att.damping if att else 0.0
    ma = att.mass if att else 0.0
    link = _linear_stiffness(model) + _kappa(model, moments)
    A = -model.m_s * w ** 2 + (model.lambda_s + la) * jw + model.k_s + link
    B = la * jw + link
    C = -ma * w ** 2 + la * jw + link
    return A, B, C


def transfer_operators_3dof(model: SystemModel, omega, moments: ClosureMoments):
    """Complex operators ``(A, B, C, D, E)`` of the deck-seat model at ``omega``.

    ``A`` deck, ``B`` deck-attachment link, ``C`` attachment, ``D`` deck-seat
    suspension link and ``E`` seat dynamic stiffness.
    """
    att = model.attachment
    w = np.asarray(omega, dtype=float)
    jw = 1j * w
    la = att.damping if att else 0.0
    ma = att.mass if att else 0.0
    link = _linear_stiffness(model) + _kappa(model, moments)
    A = -model.m_h * w ** 2 + (model.lambda_h + model.lambda_s + la) * jw \
        + model.k_h + model.k_s + link
    B = la * jw + link
    C = -ma * w ** 2 + la * jw + link
    D = model.lambda_s * jw + model.k_s
    E = -model.m_s * w ** 2 + model.lambda_s * jw + model.k_s
    return A, B, C, D, E


def transfer_functions(model: SystemModel, omega, kappa: float = 0.0) -> np.ndarray:
    """Relative-displacement transfer functions per DOF, shape ``(n_dof, len(omega))``.

    Response ``X_i = T_i(w) H(w)`` to a base displacement ``H``.
    """
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    M, C, K = model.linear_matrices(_linear_stiffness(model) if model.attachment else None)
    K = K + kappa * model.coupling_pattern()
    Z = (-(w ** 2)[:, None, None] * M + 1j * w[:, None, None] * C + K).astype(complex)
    rhs = (w ** 2)[:, None] * model.masses[None, :]
    det = np.linalg.det(Z)
    scale = np.abs(np.diagonal(Z, axis1=1, axis2=2)).prod(axis=1)
    if np.any(np.abs(det) < _SINGULAR * np.maximum(scale, 1.0)):
        raise SingularTransfer("linearized dynamic stiffness is singular on the grid")
    return np.linalg.solve(Z, rhs[..., None].astype(complex))[..., 0].T


def _spectra(model, spectrum, omega, moments):
    w = np.asarray(omega, dtype=float)
    T = transfer_functions(model, w, _kappa(model, moments))
    S = density(spectrum, w)
    out = {}
    dofs = model.dofs
    for i, a in enumerate(dofs):
        for j, b in enumerate(dofs):
            if j >= i:
                out[f"S_{a}{b}"] = T[i] * np.conj(T[j]) * S
        out[f"S_{a}h"] = T[i] * S
    return out


def response_spectra_2dof(model: SystemModel, spectrum: BackgroundSpectrum, omega,
                          moments: ClosureMoments) -> dict:
    """Auto- and cross-spectra ``S_xx, S_vv, S_xv, S_xh, S_vh`` of the seat model."""
    sp = _spectra(model, spectrum, omega, moments)
    keys = ["S_xx", "S_xh"] + (["S_vv", "S_xv", "S_vh"] if model.attachment else [])
    return {k: sp[k] for k in keys}


def response_spectra_3dof(model: SystemModel, spectrum: BackgroundSpectrum, omega,
                          moments: ClosureMoments) -> dict:
    """Spectra ``S_yy, S_xx, S_vv, S_yv, S_yh, S_xh, S_vh`` of the deck-seat model."""
    sp = _spectra(model, spectrum, omega, moments)
    keys = ["S_yy", "S_xx", "S_yx", "S_yh", "S_xh"]
    if model.attachment:
        keys += ["S_vv", "S_yv", "S_xv", "S_vh"]
    return {k: sp[k] for k in keys}


@dataclass(frozen=True)
class LinearizationSolution:
    """Converged background statistics.

    ``sigma`` maps quantity tags (``"x"``, ``"xdot"``, ``"vddot"``, ...) to
    relative-motion standard deviations; ``cov_base`` maps the same tags to
    the covariance with the base derivative of equal order (``x`` with
    ``h``, ``xdot`` with ``hdot``, ...).  ``sigma_base`` holds the base
    standard deviations for orders 0, 1, 2 over the same frequency window.
    """

    model: SystemModel
    spectrum: BackgroundSpectrum
    moments: ClosureMoments
    kappa: float
    sigma: dict
    cov_base: dict
    sigma_base: tuple
    residual: float
    iterations: int
    edges: np.ndarray = field(repr=False, compare=False)

    def sigma_of(self, quantity) -> float:
        return self.sigma[str(quantity)]

    def absolute_variance(self, quantity) -> float:
        q = quantity if isinstance(quantity, Quantity) else Quantity.parse(str(quantity))
        sb = self.sigma_base[q.order]
        var = self.sigma[q.tag] ** 2 + sb ** 2 + 2.0 * self.cov_base[q.tag]
        if var <= 0:
            raise NegativeVariance(f"absolute variance of {q.tag} is {var:.3e}")
        return var

    def absolute_sigma(self, quantity) -> float:
        return float(np.sqrt(self.absolute_variance(quantity)))


def _closure_integrand(model, spectrum, kappa):
    ih = model.index(model.host)
    ia = model.index("v")

    def f(w):
        T = transfer_functions(model, w, kappa)
        S = density(spectrum, w)
        th, ta = T[ih], T[ia]
        return np.stack([np.abs(th) ** 2 * S, np.real(th * np.conj(ta)) * S,
                         np.abs(ta) ** 2 * S])
    return f


def _full_integrand(model, spectrum, kappa):
    n = model.n_dof

    def f(w):
        T = transfer_functions(model, w, kappa)
        S = density(spectrum, w)
        a2 = np.abs(T) ** 2 * S
        c = np.real(T) * S
        w2 = w * w
        rows = []
        for p in (1.0, w2, w2 * w2):
            rows.append(a2 * p)
            rows.append(c * p)
        rows.append(np.stack([S, S * w2, S * w2 * w2]))
        return np.concatenate(rows, axis=0).reshape(6 * n + 3, -1)
    return f


def solve_fixed_point(model: SystemModel, spectrum: BackgroundSpectrum,
                      grid: FrequencyGrid | None = None, damping: float = 0.5,
                      max_iter: int = 200, tol: float = 1e-8,
                      min_damping: float = 1.0 / 64) -> LinearizationSolution:
    """Gaussian-closure moments of the background response.

    Starts from the linear solution (``kappa = 0``) and iterates
    ``m <- (1 - damping) m + damping F(m)``.  Frequency panels are adapted
    once at the start and again at convergence; if the refined partition
    changes the result, iteration resumes on it.  When an iterate leaves
    the feasible moment cone the step is halved down to ``min_damping``.
    """
    if grid is None:
        grid = FrequencyGrid.for_spectrum(spectrum)
    nonlinear = (model.attachment is not None and model.attachment.spring.kind == "cubic"
                 and model.attachment.spring.c > 0)
    n_it = 0
    if model.attachment is None:
        m = ClosureMoments(0.0, 0.0, 0.0)
        edges = adaptive_quad(_full_integrand(model, spectrum, 0.0), grid).edges
        residual = 0.0
    else:
        res = adaptive_quad(_closure_integrand(model, spectrum, 0.0), grid)
        edges = res.edges
        m = ClosureMoments.from_array(res.value)
        residual = 0.0
        if nonlinear:
            for _ in range(4):
                m, residual, it = _picard(model, spectrum, m, edges, damping, max_iter - n_it,
                                          tol, min_damping)
                n_it += it
                chk = adaptive_quad(_closure_integrand(model, spectrum, _kappa(model, m)),
                                    grid, edges=edges)
                residual = _rel(m.as_array(), chk.value)
                if residual < tol:
                    edges = chk.edges
                    break
                edges = chk.edges
            else:
                raise NonConverged(f"closure residual {residual:.3e} after panel refinement")
    kappa = _kappa(model, m)
    full = adaptive_quad(_full_integrand(model, spectrum, kappa), grid, edges=edges).value
    n = model.n_dof
    sigma, cov = {}, {}
    for order in range(3):
        var = full[2 * order * n:(2 * order + 1) * n]
        cv = full[(2 * order + 1) * n:(2 * order + 2) * n]
        for i, d in enumerate(model.dofs):
            tag = Quantity(d, order).tag
            if var[i] < 0:
                raise NegativeVariance(f"variance of {tag} is negative")
            sigma[tag] = float(np.sqrt(var[i]))
            cov[tag] = float(cv[i])
    base = tuple(float(np.sqrt(v)) for v in full[6 * n:])
    return LinearizationSolution(model, spectrum, m, kappa, sigma, cov, base,
                                 residual, n_it, np.asarray(edges))


def _rel(m, new) -> float:
    return float(np.linalg.norm(np.asarray(m) - np.asarray(new))
                 / max(np.linalg.norm(new), 1e-300))


def _picard(model, spectrum, m0, edges, damping, max_iter, tol, min_damping):
    nodes, weights = kronrod_nodes(np.asarray(edges))
    ih, ia = model.index(model.host), model.index("v")
    S = density(spectrum, nodes)

    def apply(m):
        T = transfer_functions(model, nodes, _kappa(model, m))
        th, ta = T[ih], T[ia]
        return np.array([np.sum(weights * np.abs(th) ** 2 * S),
                         np.sum(weights * np.real(th * np.conj(ta)) * S),
                         np.sum(weights * np.abs(ta) ** 2 * S)])

    m = m0.as_array()
    step = damping
    for it in range(1, max_iter + 1):
        new = apply(ClosureMoments.from_array(m))
        r = _rel(m, new)
        if r < tol * 1e-2:
            return ClosureMoments.from_array(new), r, it
        while True:
            cand = (1 - step) * m + step * new
            if ClosureMoments.from_array(cand).is_feasible():
                break
            step *= 0.5
            if step < min_damping:
                raise NegativeVariance("closure iterate left the feasible moment cone")
        m = cand
    raise NonConverged(f"closure fixed point not reached in {max_iter} iterations (residual {r:.3e})")
