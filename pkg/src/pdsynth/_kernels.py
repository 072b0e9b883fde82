"""Compiled ODE kernels: Dormand-Prince 5(4) with dense output.

Models are passed as flat arrays (see ``SystemModel.kernel_args``):
masses, the linear spring/damper elements ``(i, j, k, c)`` with ``j = -1``
meaning ground, the attachment gap ``(host, att)``, the spring law
``[kind, k, c, alpha_pos, alpha_neg, delta]`` and the attachment damping.

Background base motion for Monte-Carlo runs is a periodic sum of cosines
tabulated once per period on a uniform grid of step ``dtf``: ``tables[m]``
holds derivative order ``m`` (0..3).  Between grid points values are
interpolated by cubic Hermite polynomials from orders ``m`` and ``m + 1``,
which keeps the right-hand side C1 for the adaptive stepper.
"""

import math

import numpy as np
from numba import njit

# Dormand-Prince tableau
_C2, _C3, _C4, _C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0,
                                49.0 / 176.0, -5103.0 / 18656.0)
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
_E1, _E3, _E4, _E5, _E6, _E7 = (-71.0 / 57600.0, 71.0 / 16695.0, -71.0 / 1920.0,
                                17253.0 / 339200.0, -22.0 / 525.0, 1.0 / 40.0)
_P = np.array([
    [1.0, -8048581381.0 / 2820520608.0, 8663915743.0 / 2820520608.0,
     -12715105075.0 / 11282082432.0],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200.0 / 32700410799.0, -68118460800.0 / 10900136933.0,
     87487479700.0 / 32700410799.0],
    [0.0, -1754552775.0 / 470086768.0, 14199869525.0 / 1410260304.0,
     -10690763975.0 / 1880347072.0],
    [0.0, 127303824393.0 / 49829197408.0, -318862633887.0 / 49829197408.0,
     701980252875.0 / 199316789632.0],
    [0.0, -282668133.0 / 205662961.0, 2019193451.0 / 616988883.0,
     -1453857185.0 / 822651844.0],
    [0.0, 40617522.0 / 29380423.0, -110615467.0 / 29380423.0, 69997945.0 / 29380423.0],
])

STATUS_OK = 0
STATUS_STOPPED = 1
STATUS_STEP_UNDERFLOW = 2
STATUS_MAX_STEPS = 3


# ---------------------------------------------------------------- springs
@njit(cache=True, nogil=True)
def spring_force(p, z):
    kind = int(p[0])
    if kind == 0:
        return p[1] * z
    if kind == 1:
        return p[1] * z + p[2] * z * z * z
    d = p[5]
    if z >= d:
        return p[3] * z + (p[1] - p[3]) * d
    if z <= -d:
        return p[4] * z - (p[1] - p[4]) * d
    return p[1] * z


@njit(cache=True, nogil=True)
def spring_potential(p, z):
    kind = int(p[0])
    if kind == 0:
        return 0.5 * p[1] * z * z
    if kind == 1:
        return 0.5 * p[1] * z * z + 0.25 * p[2] * z ** 4
    d = p[5]
    az = abs(z)
    if az <= d:
        return 0.5 * p[1] * z * z
    a = p[3] if z > 0 else p[4]
    w = az - d
    return 0.5 * p[1] * d * d + 0.5 * a * w * w + p[1] * d * w


@njit(cache=True, nogil=True)
def _quad_gap(k, d, a, e):
    # largest w >= 0 with 0.5*a*w^2 + k*d*w <= e
    if e <= 0.0:
        return 0.0
    if a > 0.0:
        return (-k * d + math.sqrt(k * k * d * d + 2.0 * a * e)) / a
    if k * d > 0.0:
        return e / (k * d)
    return np.inf


@njit(cache=True, nogil=True)
def spring_gap_bound(p, energy):
    """Largest |z| (over both signs) with potential(z) <= energy."""
    kind = int(p[0])
    if kind == 0:
        return math.sqrt(2.0 * energy / p[1]) if p[1] > 0 else np.inf
    if kind == 1:
        b = np.inf
        if p[1] > 0:
            b = math.sqrt(2.0 * energy / p[1])
        if p[2] > 0:
            b = min(b, (4.0 * energy / p[2]) ** 0.25)
        return b
    k, d = p[1], p[5]
    if k > 0 and 0.5 * k * d * d >= energy:
        return math.sqrt(2.0 * energy / k)
    rest = energy - 0.5 * k * d * d
    return d + max(_quad_gap(k, d, p[3], rest), _quad_gap(k, d, p[4], rest))


# ----------------------------------------------------------- model terms
@njit(cache=True, nogil=True)
def internal_accel(y, masses, el_i, el_j, el_k, el_c, nl, spring, nl_damp, acc):
    n = masses.shape[0]
    for d in range(n):
        acc[d] = 0.0
    for e in range(el_i.shape[0]):
        i = el_i[e]
        j = el_j[e]
        ext = y[2 * i]
        rate = y[2 * i + 1]
        if j >= 0:
            ext -= y[2 * j]
            rate -= y[2 * j + 1]
        f = el_k[e] * ext + el_c[e] * rate
        acc[i] -= f
        if j >= 0:
            acc[j] += f
    if nl[0] >= 0:
        i = nl[0]
        j = nl[1]
        z = y[2 * i] - y[2 * j]
        zd = y[2 * i + 1] - y[2 * j + 1]
        f = spring_force(spring, z) + nl_damp * zd
        acc[i] -= f
        acc[j] += f
    for d in range(n):
        acc[d] /= masses[d]


@njit(cache=True, nogil=True)
def _deriv(y, base_acc, masses, el_i, el_j, el_k, el_c, nl, spring, nl_damp, acc, dy):
    internal_accel(y, masses, el_i, el_j, el_k, el_c, nl, spring, nl_damp, acc)
    for d in range(masses.shape[0]):
        dy[2 * d] = y[2 * d + 1]
        dy[2 * d + 1] = acc[d] - base_acc


@njit(cache=True, nogil=True)
def energy(y, masses, el_i, el_j, el_k, el_c, nl, spring):
    e = 0.0
    for d in range(masses.shape[0]):
        e += 0.5 * masses[d] * y[2 * d + 1] ** 2
    for k in range(el_i.shape[0]):
        i = el_i[k]
        j = el_j[k]
        ext = y[2 * i]
        if j >= 0:
            ext -= y[2 * j]
        e += 0.5 * el_k[k] * ext * ext
    if nl[0] >= 0:
        e += spring_potential(spring, y[2 * nl[0]] - y[2 * nl[1]])
    return e


@njit(cache=True, nogil=True)
def amplitude_bounds(en, masses, el_i, el_j, el_k, el_c, nl, spring, nl_damp, out):
    """Upper bounds on |u|, |u'|, |u''| of every DOF given total energy ``en``.

    Valid while no external forcing acts: the energy can only decay, so
    the bounds hold for all later times.  ``out`` has layout (dof, order).
    """
    n = masses.shape[0]
    disp = np.full(n, np.inf)
    vel = np.empty(n)
    for d in range(n):
        vel[d] = math.sqrt(2.0 * en / masses[d])
    ne = el_i.shape[0]
    extb = np.empty(ne)
    for e in range(ne):
        extb[e] = math.sqrt(2.0 * en / el_k[e]) if el_k[e] > 0 else np.inf
        if el_j[e] < 0:
            disp[el_i[e]] = min(disp[el_i[e]], extb[e])
    gap = np.inf
    if nl[0] >= 0:
        gap = spring_gap_bound(spring, en)
    for _ in range(n):
        for e in range(ne):
            i = el_i[e]
            j = el_j[e]
            if j >= 0:
                disp[i] = min(disp[i], disp[j] + extb[e])
                disp[j] = min(disp[j], disp[i] + extb[e])
        if nl[0] >= 0:
            i = nl[0]
            j = nl[1]
            disp[i] = min(disp[i], disp[j] + gap)
            disp[j] = min(disp[j], disp[i] + gap)
    force = np.zeros(n)
    for e in range(ne):
        i = el_i[e]
        j = el_j[e]
        fb = el_k[e] * extb[e] if el_k[e] > 0 else 0.0
        vr = vel[i] + (vel[j] if j >= 0 else 0.0)
        fb += el_c[e] * vr
        force[i] += fb
        if j >= 0:
            force[j] += fb
    if nl[0] >= 0:
        i = nl[0]
        j = nl[1]
        if np.isfinite(gap):
            fb = max(abs(spring_force(spring, gap)), abs(spring_force(spring, -gap)))
        else:
            fb = np.inf
        fb += nl_damp * (vel[i] + vel[j])
        force[i] += fb
        force[j] += fb
    for d in range(n):
        out[3 * d] = disp[d]
        out[3 * d + 1] = vel[d]
        out[3 * d + 2] = force[d] / masses[d]


# ----------------------------------------------------- background forcing
@njit(cache=True, nogil=True)
def background(order, t, tables, dtf):
    """Value of the background derivative ``order`` (0..2) at time ``t``."""
    N = tables.shape[1]
    if N == 0:
        return 0.0
    u = t / dtf
    j = int(math.floor(u))
    s = u - j
    j0 = j % N
    j1 = (j + 1) % N
    g0 = tables[order, j0]
    g1 = tables[order, j1]
    d0 = tables[order + 1, j0] * dtf
    d1 = tables[order + 1, j1] * dtf
    s2 = s * s
    s3 = s2 * s
    return ((2 * s3 - 3 * s2 + 1) * g0 + (s3 - 2 * s2 + s) * d0
            + (-2 * s3 + 3 * s2) * g1 + (s3 - s2) * d1)


# ------------------------------------------------------------ DOPRI step
@njit(cache=True, nogil=True)
def _step(t, y, f0, h, K, ynew, tmp, acc, masses, el_i, el_j, el_k, el_c, nl, spring,
          nl_damp, tables, dtf):
    n = y.shape[0]
    for i in range(n):
        K[0, i] = f0[i]
    for i in range(n):
        tmp[i] = y[i] + h * _A21 * K[0, i]
    _deriv(tmp, background(2, t + _C2 * h, tables, dtf), masses, el_i, el_j, el_k,
           el_c, nl, spring, nl_damp, acc, K[1])
    for i in range(n):
        tmp[i] = y[i] + h * (_A31 * K[0, i] + _A32 * K[1, i])
    _deriv(tmp, background(2, t + _C3 * h, tables, dtf), masses, el_i, el_j, el_k,
           el_c, nl, spring, nl_damp, acc, K[2])
    for i in range(n):
        tmp[i] = y[i] + h * (_A41 * K[0, i] + _A42 * K[1, i] + _A43 * K[2, i])
    _deriv(tmp, background(2, t + _C4 * h, tables, dtf), masses, el_i, el_j, el_k,
           el_c, nl, spring, nl_damp, acc, K[3])
    for i in range(n):
        tmp[i] = y[i] + h * (_A51 * K[0, i] + _A52 * K[1, i] + _A53 * K[2, i] + _A54 * K[3, i])
    _deriv(tmp, background(2, t + _C5 * h, tables, dtf), masses, el_i, el_j, el_k,
           el_c, nl, spring, nl_damp, acc, K[4])
    for i in range(n):
        tmp[i] = y[i] + h * (_A61 * K[0, i] + _A62 * K[1, i] + _A63 * K[2, i]
                             + _A64 * K[3, i] + _A65 * K[4, i])
    _deriv(tmp, background(2, t + h, tables, dtf), masses, el_i, el_j, el_k,
           el_c, nl, spring, nl_damp, acc, K[5])
    for i in range(n):
        ynew[i] = y[i] + h * (_B1 * K[0, i] + _B3 * K[2, i] + _B4 * K[3, i]
                              + _B5 * K[4, i] + _B6 * K[5, i])
    _deriv(ynew, background(2, t + h, tables, dtf), masses, el_i, el_j, el_k,
           el_c, nl, spring, nl_damp, acc, K[6])


@njit(cache=True, nogil=True)
def _err_norm(y, ynew, K, h, rtol, atol):
    n = y.shape[0]
    s = 0.0
    for i in range(n):
        e = h * (_E1 * K[0, i] + _E3 * K[2, i] + _E4 * K[3, i] + _E5 * K[4, i]
                 + _E6 * K[5, i] + _E7 * K[6, i])
        sc = atol[i] + rtol * max(abs(y[i]), abs(ynew[i]))
        s += (e / sc) ** 2
    return math.sqrt(s / n)


@njit(cache=True, nogil=True)
def _dense(theta, y, h, K, P, out):
    n = y.shape[0]
    t1 = theta
    t2 = t1 * theta
    t3 = t2 * theta
    t4 = t3 * theta
    for i in range(n):
        q0 = 0.0
        q1 = 0.0
        q2 = 0.0
        q3 = 0.0
        for s in range(7):
            k = K[s, i]
            q0 += k * P[s, 0]
            q1 += k * P[s, 1]
            q2 += k * P[s, 2]
            q3 += k * P[s, 3]
        out[i] = y[i] + h * (q0 * t1 + q1 * t2 + q2 * t3 + q3 * t4)


@njit(cache=True, nogil=True)
def _new_h(h, err):
    if err == 0.0:
        return h * 10.0
    return h * min(10.0, max(0.2, 0.9 * err ** -0.2))


# ------------------------------------------------------ impulse response
@njit(cache=True, nogil=True)
def impulse_response(y0, t_cap, dt_out, rtol, atol, monitor, rho, check_every,
                     masses, el_i, el_j, el_k, el_c, nl, spring, nl_damp):
    """Free response from ``y0`` sampled every ``dt_out``.

    Returns ``(samples, n_rows, status)`` where ``samples[k]`` holds
    ``(u, u', u'')`` per DOF at ``t = k*dt_out``.  Integration stops early
    once the energy bound guarantees that no monitored quantity can climb
    back above ``rho`` times its running maximum.
    """
    n = y0.shape[0]
    nd = n // 2
    nq = 3 * nd
    n_max = int(math.floor(t_cap / dt_out)) + 1
    out = np.zeros((n_max, nq))
    tables = np.zeros((4, 0))
    P = _P
    y = y0.copy()
    ynew = np.empty(n)
    tmp = np.empty(n)
    acc = np.empty(nd)
    f0 = np.empty(n)
    K = np.empty((7, n))
    ys = np.empty(n)
    bounds = np.empty(nq)
    runmax = np.zeros(nq)
    _deriv(y, 0.0, masses, el_i, el_j, el_k, el_c, nl, spring, nl_damp, acc, f0)
    # t = 0 sample
    internal_accel(y, masses, el_i, el_j, el_k, el_c, nl, spring, nl_damp, acc)
    for d in range(nd):
        out[0, 3 * d] = y[2 * d]
        out[0, 3 * d + 1] = y[2 * d + 1]
        out[0, 3 * d + 2] = acc[d]
        runmax[3 * d] = abs(y[2 * d])
        runmax[3 * d + 1] = abs(y[2 * d + 1])
    k_out = 1
    t = 0.0
    h = min(0.01, dt_out)
    next_check = check_every
    steps = 0
    while k_out < n_max:
        if h < 1e-12 * max(1.0, t):
            return out, k_out, STATUS_STEP_UNDERFLOW
        _step(t, y, f0, h, K, ynew, tmp, acc, masses, el_i, el_j, el_k, el_c, nl, spring,
              nl_damp, tables, 1.0)
        err = _err_norm(y, ynew, K, h, rtol, atol)
        if err > 1.0:
            h = _new_h(h, err)
            continue
        steps += 1
        t_new = t + h
        while k_out < n_max and k_out * dt_out <= t_new:
            theta = (k_out * dt_out - t) / h
            _dense(theta, y, h, K, P, ys)
            internal_accel(ys, masses, el_i, el_j, el_k, el_c, nl, spring, nl_damp, acc)
            for d in range(nd):
                a = ys[2 * d]
                b = ys[2 * d + 1]
                c = acc[d]
                out[k_out, 3 * d] = a
                out[k_out, 3 * d + 1] = b
                out[k_out, 3 * d + 2] = c
                runmax[3 * d] = max(runmax[3 * d], abs(a))
                runmax[3 * d + 1] = max(runmax[3 * d + 1], abs(b))
                runmax[3 * d + 2] = max(runmax[3 * d + 2], abs(c))
            k_out += 1
        for i in range(n):
            y[i] = ynew[i]
            f0[i] = K[6, i]
        t = t_new
        h = _new_h(h, err)
        if t >= next_check:
            next_check = t + check_every
            en = energy(y, masses, el_i, el_j, el_k, el_c, nl, spring)
            amplitude_bounds(en, masses, el_i, el_j, el_k, el_c, nl, spring, nl_damp, bounds)
            done = True
            for q in range(nq):
                if monitor[q] and not (bounds[q] < rho * runmax[q]):
                    done = False
                    break
            if done:
                return out, k_out, STATUS_STOPPED
    return out, k_out, STATUS_OK


# ------------------------------------------------------------ Monte-Carlo
@njit(cache=True, nogil=True)
def _record(t, ys, acc, tables, dtf, lo, width, nbins, counts, sums, nd):
    # quantity layout: relative (dof, order) then absolute (dof, order)
    bg0 = background(0, t, tables, dtf)
    bg1 = background(1, t, tables, dtf)
    bg2 = background(2, t, tables, dtf)
    nq = 3 * nd
    for d in range(nd):
        rel0 = ys[2 * d]
        rel1 = ys[2 * d + 1]
        rel2 = acc[d] - bg2
        vals = (rel0, rel1, rel2, rel0 + bg0, rel1 + bg1, acc[d])
        for m in range(6):
            q = (m // 3) * nq + 3 * d + (m % 3)
            v = vals[m]
            sums[q, 0] += v
            sums[q, 1] += v * v
            sums[q, 2] += v * v * v * v
            b = int(math.floor((v - lo[q]) / width[q]))
            if b < 0:
                counts[q, nbins] += 1
            elif b >= nbins:
                counts[q, nbins + 1] += 1
            else:
                counts[q, b] += 1


@njit(cache=True, nogil=True)
def forced_response(y0, t_end, ev_t, ev_mag, jump_mask, dt_out, t_trim, rtol, atol,
                    masses, el_i, el_j, el_k, el_c, nl, spring, nl_damp,
                    tables, dtf, lo, hi, nbins):
    """Response to background forcing plus velocity jumps at ``ev_t``.

    Samples at ``t = k*dt_out >= t_trim`` are binned on the fly into
    ``nbins`` uniform bins per quantity (two extra columns count under-
    and overflow).  ``sums[q]`` accumulates the first, second and fourth
    powers.  Returns ``(counts, sums, n_samples, status, t_reached)``.
    """
    n = y0.shape[0]
    nd = n // 2
    nq = 6 * nd
    counts = np.zeros((nq, nbins + 2), dtype=np.int64)
    sums = np.zeros((nq, 3))
    width = np.empty(nq)
    for q in range(nq):
        width[q] = (hi[q] - lo[q]) / nbins
    P = _P
    y = y0.copy()
    ynew = np.empty(n)
    tmp = np.empty(n)
    acc = np.empty(nd)
    f0 = np.empty(n)
    K = np.empty((7, n))
    ys = np.empty(n)
    t = 0.0
    h = 0.01
    k_out = int(math.ceil(t_trim / dt_out))
    n_samples = 0
    ev = 0
    n_ev = ev_t.shape[0]
    _deriv(y, background(2, t, tables, dtf), masses, el_i, el_j, el_k, el_c, nl,
           spring, nl_damp, acc, f0)
    while t < t_end:
        seg_end = ev_t[ev] if ev < n_ev else t_end
        while t < seg_end:
            if h < 1e-12 * max(1.0, t):
                return counts, sums, n_samples, STATUS_STEP_UNDERFLOW, t
            hh = min(h, seg_end - t)
            _step(t, y, f0, hh, K, ynew, tmp, acc, masses, el_i, el_j, el_k, el_c, nl,
                  spring, nl_damp, tables, dtf)
            err = _err_norm(y, ynew, K, hh, rtol, atol)
            if err > 1.0:
                h = _new_h(hh, err)
                continue
            t_new = t + hh if hh < seg_end - t else seg_end
            while k_out * dt_out <= t_new and k_out * dt_out <= t_end:
                tk = k_out * dt_out
                theta = (tk - t) / hh
                _dense(theta, y, hh, K, P, ys)
                internal_accel(ys, masses, el_i, el_j, el_k, el_c, nl, spring, nl_damp, acc)
                _record(tk, ys, acc, tables, dtf, lo, width, nbins, counts, sums, nd)
                n_samples += 1
                k_out += 1
            for i in range(n):
                y[i] = ynew[i]
                f0[i] = K[6, i]
            t = t_new
            h = _new_h(hh, err) if hh == h else max(h, _new_h(hh, err))
        if ev < n_ev:
            for d in range(nd):
                y[2 * d + 1] += ev_mag[ev] * jump_mask[d]
            _deriv(y, background(2, t, tables, dtf), masses, el_i, el_j, el_k, el_c,
                   nl, spring, nl_damp, acc, f0)
            ev += 1
    return counts, sums, n_samples, STATUS_OK, t


@njit(cache=True, nogil=True)
def forced_trajectory(y0, t_end, ev_t, ev_mag, jump_mask, dt_out, rtol, atol,
                      masses, el_i, el_j, el_k, el_c, nl, spring, nl_damp,
                      tables, dtf):
    """Like :func:`forced_response` but returns the sampled relative states and accelerations."""
    n = y0.shape[0]
    nd = n // 2
    n_max = int(math.floor(t_end / dt_out)) + 1
    out = np.zeros((n_max, 3 * nd))
    P = _P
    y = y0.copy()
    ynew = np.empty(n)
    tmp = np.empty(n)
    acc = np.empty(nd)
    f0 = np.empty(n)
    K = np.empty((7, n))
    ys = np.empty(n)
    t = 0.0
    h = 0.01
    k_out = 0
    ev = 0
    n_ev = ev_t.shape[0]
    _deriv(y, background(2, t, tables, dtf), masses, el_i, el_j, el_k, el_c, nl,
           spring, nl_damp, acc, f0)
    while t < t_end:
        seg_end = ev_t[ev] if ev < n_ev else t_end
        while t < seg_end:
            if h < 1e-12 * max(1.0, t):
                return out, k_out, STATUS_STEP_UNDERFLOW
            hh = min(h, seg_end - t)
            _step(t, y, f0, hh, K, ynew, tmp, acc, masses, el_i, el_j, el_k, el_c, nl,
                  spring, nl_damp, tables, dtf)
            err = _err_norm(y, ynew, K, hh, rtol, atol)
            if err > 1.0:
                h = _new_h(hh, err)
                continue
            t_new = t + hh if hh < seg_end - t else seg_end
            while k_out < n_max and k_out * dt_out <= t_new:
                tk = k_out * dt_out
                _dense((tk - t) / hh, y, hh, K, P, ys)
                internal_accel(ys, masses, el_i, el_j, el_k, el_c, nl, spring, nl_damp, acc)
                bg2 = background(2, tk, tables, dtf)
                for d in range(nd):
                    out[k_out, 3 * d] = ys[2 * d]
                    out[k_out, 3 * d + 1] = ys[2 * d + 1]
                    out[k_out, 3 * d + 2] = acc[d] - bg2
                k_out += 1
            for i in range(n):
                y[i] = ynew[i]
                f0[i] = K[6, i]
            t = t_new
            h = _new_h(hh, err) if hh == h else max(h, _new_h(hh, err))
        if ev < n_ev:
            for d in range(nd):
                y[2 * d + 1] += ev_mag[ev] * jump_mask[d]
            _deriv(y, background(2, t, tables, dtf), masses, el_i, el_j, el_k, el_c,
                   nl, spring, nl_damp, acc, f0)
            ev += 1
    return out, k_out, STATUS_OK
