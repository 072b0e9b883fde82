"""Base-excited seat (2DOF) and deck-seat (3DOF) models.

Coordinates are displacements relative to the base.  Each model is a
chain of masses tied to ground and to each other by linear spring/damper
elements, plus an optional small attachment connected to its host mass
through a :class:`SpringLaw` and a linear damper.

State vectors interleave displacement and velocity per degree of freedom,
in the order of :attr:`SystemModel.dofs`: ``(x, xd, v, vd)`` for the seat
and ``(y, yd, x, xd, v, vd)`` for the deck-seat.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import ConfigError

__all__ = [
    "SpringLaw",
    "Attachment",
    "SystemModel",
    "ImpulsePattern",
    "Quantity",
    "seat_model",
    "deck_seat_model",
    "restoring_force",
    "rhs",
    "apply_impulse",
    "mechanical_energy",
]

_KIND_CODES = {"linear": 0, "cubic": 1, "piecewise": 2}


@dataclass(frozen=True)
class SpringLaw:
    """Restoring-force law of the attachment spring.

    ``linear``: ``k*z``.  ``cubic``: ``k*z + c*z**3``.  ``piecewise``:
    slope ``k`` on ``|z| <= delta``, slope ``alpha_pos`` beyond ``+delta``
    and ``alpha_neg`` beyond ``-delta``; the offsets making the force
    continuous at the knees are derived, never stored.
    """

    kind: str
    k: float = 0.0
    c: float = 0.0
    alpha_pos: float = 0.0
    alpha_neg: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ConfigError(f"unknown spring kind {self.kind!r}")
        vals = (self.k, self.c, self.alpha_pos, self.alpha_neg, self.delta)
        if not all(math.isfinite(v) and v >= 0 for v in vals):
            raise ConfigError(f"spring parameters must be finite and >= 0: {self}")
        if self.kind == "piecewise" and not self.delta > 0:
            raise ConfigError("piecewise spring needs a positive knee half-width")

    @classmethod
    def linear(cls, k: float) -> "SpringLaw":
        return cls("linear", k=k)

    @classmethod
    def cubic(cls, c: float, k: float = 0.0) -> "SpringLaw":
        return cls("cubic", k=k, c=c)

    @classmethod
    def piecewise(cls, k_o: float, alpha_pos: float, alpha_neg: float,
                  delta: float) -> "SpringLaw":
        return cls("piecewise", k=k_o, alpha_pos=alpha_pos, alpha_neg=alpha_neg, delta=delta)

    @classmethod
    def piecewise_from_sigma(cls, k_o: float, alpha_pos: float, alpha_neg: float,
                             sigma_zeta: float, n_sigma: float = 4.0) -> "SpringLaw":
        """Knees at ``n_sigma`` standard deviations of the relative attachment displacement."""
        return cls.piecewise(k_o, alpha_pos, alpha_neg, n_sigma * sigma_zeta)

    @property
    def beta_pos(self) -> float:
        return (self.k - self.alpha_pos) * self.delta

    @property
    def beta_neg(self) -> float:
        return -(self.k - self.alpha_neg) * self.delta

    @property
    def is_linear(self) -> bool:
        if self.kind == "linear":
            return True
        if self.kind == "cubic":
            return self.c == 0.0
        return self.alpha_pos == self.k and self.alpha_neg == self.k

    @property
    def is_symmetric(self) -> bool:
        return self.kind != "piecewise" or self.alpha_pos == self.alpha_neg

    def force(self, z):
        return restoring_force(self, z)

    def potential(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "linear":
            return 0.5 * self.k * z * z
        if self.kind == "cubic":
            return 0.5 * self.k * z * z + 0.25 * self.c * z ** 4
        d = self.delta
        base = 0.5 * self.k * d * d
        return np.where(
            z > d, base + 0.5 * self.alpha_pos * (z * z - d * d) + self.beta_pos * (z - d),
            np.where(z < -d,
                     base + 0.5 * self.alpha_neg * (z * z - d * d) + self.beta_neg * (z + d),
                     0.5 * self.k * z * z))

    def as_array(self) -> np.ndarray:
        return np.array([_KIND_CODES[self.kind], self.k, self.c,
                         self.alpha_pos, self.alpha_neg, self.delta], dtype=float)


def restoring_force(s: SpringLaw, z):
    """Spring force for relative displacement ``z`` (scalar or array)."""
    z_arr = np.asarray(z, dtype=float)
    if s.kind == "linear":
        out = s.k * z_arr
    elif s.kind == "cubic":
        out = s.k * z_arr + s.c * z_arr ** 3
    else:
        d = s.delta
        out = np.where(z_arr >= d, s.alpha_pos * z_arr + s.beta_pos,
                       np.where(z_arr <= -d, s.alpha_neg * z_arr + s.beta_neg, s.k * z_arr))
    return float(out) if np.ndim(z) == 0 else out


@dataclass(frozen=True)
class Attachment:
    mass: float
    damping: float
    spring: SpringLaw

    def __post_init__(self):
        if not self.mass > 0:
            raise ConfigError(f"attachment mass must be > 0, got {self.mass}")
        if not self.damping >= 0:
            raise ConfigError(f"attachment damping must be >= 0, got {self.damping}")


class ImpulsePattern(str, Enum):
    """Which relative velocities jump when an impulse arrives."""

    PRIMARY_ONLY = "primary_only"
    ALL_DOFS = "all_dofs"


@dataclass(frozen=True)
class Quantity:
    """A response quantity: a degree of freedom and a time-derivative order (0, 1, 2)."""

    dof: str
    order: int = 0

    _SUFFIX = ("", "dot", "ddot")

    @property
    def tag(self) -> str:
        return self.dof + self._SUFFIX[self.order]

    @classmethod
    def parse(cls, tag: str) -> "Quantity":
        for order in (2, 1):
            suffix = cls._SUFFIX[order]
            if tag.endswith(suffix) and len(tag) > len(suffix):
                return cls(tag[: -len(suffix)], order)
        return cls(tag, 0)

    def __str__(self):
        return self.tag


@dataclass(frozen=True)
class SystemModel:
    """Seat or deck-seat model.

    Parameter names follow the physical roles: ``m_s``/``lambda_s``/``k_s``
    belong to the seat suspension, ``m_h``/``lambda_h``/``k_h`` to the deck
    (3DOF only).  The attachment hangs on the seat in the 2DOF model and on
    the deck in the 3DOF model.
    """

    topology: str
    m_s: float
    lambda_s: float
    k_s: float
    m_h: float | None = None
    lambda_h: float | None = None
    k_h: float | None = None
    attachment: Attachment | None = None
    _arrays: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if self.topology not in ("seat2dof", "deckseat3dof"):
            raise ConfigError(f"unknown topology {self.topology!r}")
        if not (self.m_s > 0 and self.lambda_s >= 0 and self.k_s > 0):
            raise ConfigError("seat parameters need m_s > 0, lambda_s >= 0, k_s > 0")
        if self.topology == "deckseat3dof":
            if self.m_h is None or self.lambda_h is None or self.k_h is None:
                raise ConfigError("deck-seat model needs m_h, lambda_h, k_h")
            if not (self.m_h > 0 and self.lambda_h >= 0 and self.k_h > 0):
                raise ConfigError("deck parameters need m_h > 0, lambda_h >= 0, k_h > 0")
        object.__setattr__(self, "_arrays", self._build_arrays())

    # -- structure -------------------------------------------------------
    @property
    def dofs(self) -> tuple[str, ...]:
        base = ("x",) if self.topology == "seat2dof" else ("y", "x")
        return base + (("v",) if self.attachment is not None else ())

    @property
    def n_dof(self) -> int:
        return len(self.dofs)

    @property
    def primary(self) -> str:
        """Degree of freedom receiving the impact under the primary-only pattern."""
        return "x" if self.topology == "seat2dof" else "y"

    @property
    def host(self) -> str:
        return self.primary

    @property
    def seat(self) -> str:
        return "x"

    @property
    def masses(self) -> np.ndarray:
        return self._arrays["masses"]

    @property
    def primary_frequency(self) -> float:
        if self.topology == "seat2dof":
            return math.sqrt(self.k_s / self.m_s)
        return math.sqrt(self.k_h / self.m_h)

    @property
    def primary_damping_ratio(self) -> float:
        if self.topology == "seat2dof":
            return self.lambda_s / (2.0 * math.sqrt(self.k_s * self.m_s))
        return self.lambda_h / (2.0 * math.sqrt(self.k_h * self.m_h))

    def index(self, dof: str) -> int:
        return self.dofs.index(dof)

    def quantities(self) -> list[Quantity]:
        return [Quantity(d, o) for d in self.dofs for o in (0, 1, 2)]

    def with_attachment(self, attachment: Attachment | None) -> "SystemModel":
        return replace(self, attachment=attachment)

    def _build_arrays(self) -> dict:
        dofs = self.dofs
        idx = {d: i for i, d in enumerate(dofs)}
        if self.topology == "seat2dof":
            masses = [self.m_s]
            elems = [(idx["x"], -1, self.k_s, self.lambda_s)]
        else:
            masses = [self.m_h, self.m_s]
            elems = [(idx["y"], -1, self.k_h, self.lambda_h),
                     (idx["x"], idx["y"], self.k_s, self.lambda_s)]
        att = self.attachment
        if att is not None:
            masses.append(att.mass)
            nl = np.array([idx[self.host], idx["v"]], dtype=np.int64)
            spring = att.spring.as_array()
            nl_damp = att.damping
        else:
            nl = np.array([-1, -1], dtype=np.int64)
            spring = np.zeros(6)
            nl_damp = 0.0
        e = np.array(elems, dtype=float)
        return {
            "masses": np.array(masses, dtype=float),
            "el_i": e[:, 0].astype(np.int64),
            "el_j": e[:, 1].astype(np.int64),
            "el_k": e[:, 2].copy(),
            "el_c": e[:, 3].copy(),
            "nl": nl,
            "spring": spring,
            "nl_damp": float(nl_damp),
        }

    def kernel_args(self) -> tuple:
        a = self._arrays
        return (a["masses"], a["el_i"], a["el_j"], a["el_k"], a["el_c"],
                a["nl"], a["spring"], a["nl_damp"])

    def linear_matrices(self, spring_stiffness: float | None = None):
        """Mass, damping and stiffness matrices of the linear part.

        The attachment spring enters with ``spring_stiffness`` (defaults to
        its small-amplitude stiffness); callers add equivalent-linearization
        increments on top.
        """
        n = self.n_dof
        a = self._arrays
        M = np.diag(a["masses"])
        C = np.zeros((n, n))
        K = np.zeros((n, n))
        for i, j, k, c in zip(a["el_i"], a["el_j"], a["el_k"], a["el_c"]):
            _stamp(K, i, j, k)
            _stamp(C, i, j, c)
        if self.attachment is not None:
            i, j = a["nl"]
            k_att = self.attachment.spring.k if spring_stiffness is None else spring_stiffness
            _stamp(K, i, j, k_att)
            _stamp(C, i, j, self.attachment.damping)
        return M, C, K

    def coupling_pattern(self) -> np.ndarray:
        """Stiffness pattern of a unit spring across the attachment gap."""
        G = np.zeros((self.n_dof, self.n_dof))
        if self.attachment is not None:
            i, j = self._arrays["nl"]
            _stamp(G, i, j, 1.0)
        return G


def _stamp(mat, i, j, val):
    mat[i, i] += val
    if j >= 0:
        mat[j, j] += val
        mat[i, j] -= val
        mat[j, i] -= val


def seat_model(m_s=1.0, lambda_s=0.01, k_s=1.0, attachment: Attachment | None = None) -> SystemModel:
    return SystemModel("seat2dof", m_s, lambda_s, k_s, attachment=attachment)


def deck_seat_model(m_h=1.0, lambda_h=0.01, k_h=1.0, m_s=0.05, lambda_s=0.1, k_s=1.0,
                    attachment: Attachment | None = None) -> SystemModel:
    return SystemModel("deckseat3dof", m_s, lambda_s, k_s, m_h=m_h, lambda_h=lambda_h,
                       k_h=k_h, attachment=attachment)


def internal_forces(model: SystemModel, state) -> np.ndarray:
    """Sum of spring and damper forces acting on each mass (sign: force on the mass)."""
    a = model._arrays
    s = np.asarray(state, dtype=float)
    u, ud = s[0::2], s[1::2]
    f = np.zeros(model.n_dof)
    for i, j, k, c in zip(a["el_i"], a["el_j"], a["el_k"], a["el_c"]):
        ext = u[i] - (u[j] if j >= 0 else 0.0)
        rate = ud[i] - (ud[j] if j >= 0 else 0.0)
        F = k * ext + c * rate
        f[i] -= F
        if j >= 0:
            f[j] += F
    if model.attachment is not None:
        i, j = a["nl"]
        F = restoring_force(model.attachment.spring, u[i] - u[j]) \
            + model.attachment.damping * (ud[i] - ud[j])
        f[i] -= F
        f[j] += F
    return f


def rhs(model: SystemModel, state, base_accel: float = 0.0) -> np.ndarray:
    """Time derivative of the state; every mass also feels ``-m * base_accel``."""
    s = np.asarray(state, dtype=float)
    acc = internal_forces(model, s) / model.masses - base_accel
    out = np.empty_like(s)
    out[0::2] = s[1::2]
    out[1::2] = acc
    return out


def apply_impulse(model: SystemModel, state, n: float,
                  pattern: ImpulsePattern = ImpulsePattern.PRIMARY_ONLY) -> np.ndarray:
    """State right after an impulse of magnitude ``n`` (velocity jump)."""
    s = np.array(state, dtype=float, copy=True)
    if ImpulsePattern(pattern) is ImpulsePattern.PRIMARY_ONLY:
        s[2 * model.index(model.primary) + 1] += n
    else:
        s[1::2] += n
    return s


def mechanical_energy(model: SystemModel, state) -> float:
    """Kinetic energy plus the potential stored in every spring."""
    a = model._arrays
    s = np.asarray(state, dtype=float)
    u, ud = s[0::2], s[1::2]
    e = 0.5 * float(np.sum(a["masses"] * ud * ud))
    for i, j, k in zip(a["el_i"], a["el_j"], a["el_k"]):
        ext = u[i] - (u[j] if j >= 0 else 0.0)
        e += 0.5 * k * ext * ext
    if model.attachment is not None:
        i, j = a["nl"]
        e += float(model.attachment.spring.potential(u[i] - u[j]))
    return e
