"""Numba kernels for the complexified flow.

One embedded Dormand-Prince 5(4) stepper integrates the complex state
(q, p, M11, M12, M21, M22, S) with per-trajectory adaptive steps. The
kernel additionally accumulates the continuous argument of the two
prefactor denominators

    D_wf = M22 + i b M21
    D_ov = conj(b_bra) (M22 + i b M21) - i (M12 + i b M11)

step by step, rejecting steps that rotate either argument by more than a
cap so the winding stays resolvable. Trajectories are declared singular
when |q| or |p| crosses the blow-up threshold or the step size collapses.

Batch variants parallelize over independent initial conditions with
deterministic per-element output.
"""

import numpy as np
from numba import njit, prange

__all__ = [
    "STATUS_OK",
    "STATUS_BLOWUP",
    "STATUS_STEP_COLLAPSE",
    "STATUS_MAX_STEPS",
    "propagate_core",
    "propagate_core_batch",
    "final_position_map",
]

STATUS_OK = 0
STATUS_BLOWUP = 1
STATUS_STEP_COLLAPSE = 2
STATUS_MAX_STEPS = 3

# Dormand-Prince 5(4) tableau
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
)
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71.0 / 57600.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)


@njit(cache=True)
def _deriv(y, kind, lam, mass, omega, out):
    q = y[0]
    p = y[1]
    if kind == 0:  # quartic
        force = -4.0 * lam * q * q * q
        curv = 12.0 * lam * q * q
        pot = lam * q * q * q * q
    else:  # harmonic
        force = -mass * omega * omega * q
        curv = mass * omega * omega + 0j
        pot = 0.5 * mass * omega * omega * q * q
    out[0] = p / mass
    out[1] = force
    # variational equations for (dp, dq) deviations: d/dt M = [[0, -V''],[1/m, 0]] M
    out[2] = -curv * y[4]
    out[3] = -curv * y[5]
    out[4] = y[2] / mass
    out[5] = y[3] / mass
    # action integrand is the Lagrangian p qdot - H
    out[6] = p * p / (2.0 * mass) - pot


@njit(cache=True)
def propagate_core(
    q0,
    p0,
    t_final,
    kind,
    lam,
    mass,
    omega,
    rel_tol,
    abs_tol,
    max_step,
    blowup,
    min_step,
    max_steps,
    max_rotation,
    b_wf,
    b_ov_conj,
):
    """Integrate one complex trajectory with variational matrix and action.

    Returns (y, status, t_reached, theta_wf, theta_ov, min_dwf, min_dov,
    max_rot_seen, n_steps) where y = [q, p, M11, M12, M21, M22, S].
    """
    y = np.empty(7, dtype=np.complex128)
    y[0] = q0
    y[1] = p0
    y[2] = 1.0 + 0j
    y[3] = 0.0 + 0j
    y[4] = 0.0 + 0j
    y[5] = 1.0 + 0j
    y[6] = 0.0 + 0j

    dwf_prev = y[5] + 1j * b_wf * y[4]
    dov_prev = b_ov_conj * (y[5] + 1j * b_wf * y[4]) - 1j * (y[3] + 1j * b_wf * y[2])
    theta_wf = 0.0
    theta_ov = 0.0
    min_dwf = abs(dwf_prev)
    min_dov = abs(dov_prev)
    max_rot_seen = 0.0

    if t_final <= 0.0:
        return y, STATUS_OK, 0.0, theta_wf, theta_ov, min_dwf, min_dov, 0.0, 0

    k1 = np.empty(7, dtype=np.complex128)
    k2 = np.empty(7, dtype=np.complex128)
    k3 = np.empty(7, dtype=np.complex128)
    k4 = np.empty(7, dtype=np.complex128)
    k5 = np.empty(7, dtype=np.complex128)
    k6 = np.empty(7, dtype=np.complex128)
    k7 = np.empty(7, dtype=np.complex128)
    yt = np.empty(7, dtype=np.complex128)
    ynew = np.empty(7, dtype=np.complex128)

    _deriv(y, kind, lam, mass, omega, k1)
    scale0 = max(abs(y[0]), abs(y[1]), 1.0)
    slope0 = max(abs(k1[0]), abs(k1[1]), 1e-10)
    h = min(max_step, 0.01 * scale0 / slope0, t_final)

    t = 0.0
    status = STATUS_OK
    n_steps = 0
    while t < t_final:
        if n_steps >= max_steps:
            status = STATUS_MAX_STEPS
            break
        if h > t_final - t:
            h = t_final - t

        for i in range(7):
            yt[i] = y[i] + h * _A21 * k1[i]
        _deriv(yt, kind, lam, mass, omega, k2)
        for i in range(7):
            yt[i] = y[i] + h * (_A31 * k1[i] + _A32 * k2[i])
        _deriv(yt, kind, lam, mass, omega, k3)
        for i in range(7):
            yt[i] = y[i] + h * (_A41 * k1[i] + _A42 * k2[i] + _A43 * k3[i])
        _deriv(yt, kind, lam, mass, omega, k4)
        for i in range(7):
            yt[i] = y[i] + h * (_A51 * k1[i] + _A52 * k2[i] + _A53 * k3[i] + _A54 * k4[i])
        _deriv(yt, kind, lam, mass, omega, k5)
        for i in range(7):
            yt[i] = y[i] + h * (
                _A61 * k1[i] + _A62 * k2[i] + _A63 * k3[i] + _A64 * k4[i] + _A65 * k5[i]
            )
        _deriv(yt, kind, lam, mass, omega, k6)
        for i in range(7):
            ynew[i] = y[i] + h * (_B1 * k1[i] + _B3 * k3[i] + _B4 * k4[i] + _B5 * k5[i] + _B6 * k6[i])
        _deriv(ynew, kind, lam, mass, omega, k7)

        err_norm = 0.0
        bad = False
        for i in range(7):
            v = ynew[i]
            if not (np.isfinite(v.real) and np.isfinite(v.imag)):
                bad = True
                break
            e_i = h * (
                _E1 * k1[i] + _E3 * k3[i] + _E4 * k4[i] + _E5 * k5[i] + _E6 * k6[i] + _E7 * k7[i]
            )
            sc = abs_tol + rel_tol * max(abs(y[i]), abs(v))
            r = abs(e_i) / sc
            err_norm += r * r
        if not bad:
            err_norm = np.sqrt(err_norm / 7.0)

        if bad or err_norm > 1.0:
            if bad:
                h *= 0.2
            else:
                fac = 0.9 * err_norm**-0.2
                if fac < 0.2:
                    fac = 0.2
                h *= fac
            if h < min_step:
                status = STATUS_STEP_COLLAPSE
                break
            continue

        # keep the prefactor-denominator rotation per step below the cap
        dwf_new = ynew[5] + 1j * b_wf * ynew[4]
        dov_new = b_ov_conj * (ynew[5] + 1j * b_wf * ynew[4]) - 1j * (ynew[3] + 1j * b_wf * ynew[2])
        zr = dwf_new * np.conj(dwf_prev)
        rot_wf = abs(np.arctan2(zr.imag, zr.real))
        zr = dov_new * np.conj(dov_prev)
        rot_ov = abs(np.arctan2(zr.imag, zr.real))
        rot = max(rot_wf, rot_ov)
        if rot > max_rotation and h > 4.0 * min_step:
            fac = 0.8 * max_rotation / rot
            if fac < 0.25:
                fac = 0.25
            h *= fac
            continue

        t += h
        for i in range(7):
            y[i] = ynew[i]
            k1[i] = k7[i]  # FSAL
        n_steps += 1

        zr = dwf_new * np.conj(dwf_prev)
        theta_wf += np.arctan2(zr.imag, zr.real)
        zr = dov_new * np.conj(dov_prev)
        theta_ov += np.arctan2(zr.imag, zr.real)
        if rot > max_rot_seen:
            max_rot_seen = rot
        dwf_prev = dwf_new
        dov_prev = dov_new
        a = abs(dwf_new)
        if a < min_dwf:
            min_dwf = a
        a = abs(dov_new)
        if a < min_dov:
            min_dov = a

        if abs(y[0]) > blowup or abs(y[1]) > blowup:
            status = STATUS_BLOWUP
            break

        if err_norm > 1e-30:
            fac = 0.9 * err_norm**-0.2
        else:
            fac = 5.0
        if fac > 5.0:
            fac = 5.0
        if fac < 0.2:
            fac = 0.2
        h *= fac
        if h > max_step:
            h = max_step

    return y, status, t, theta_wf, theta_ov, min_dwf, min_dov, max_rot_seen, n_steps


@njit(cache=True, parallel=True)
def propagate_core_batch(
    q0s,
    p0s,
    t_final,
    kind,
    lam,
    mass,
    omega,
    rel_tol,
    abs_tol,
    max_step,
    blowup,
    min_step,
    max_steps,
    max_rotation,
    b_wf,
    b_ov_conj,
):
    n = q0s.shape[0]
    state = np.empty((n, 7), dtype=np.complex128)
    status = np.empty(n, dtype=np.int64)
    t_reached = np.empty(n, dtype=np.float64)
    theta_wf = np.empty(n, dtype=np.float64)
    theta_ov = np.empty(n, dtype=np.float64)
    min_dwf = np.empty(n, dtype=np.float64)
    min_dov = np.empty(n, dtype=np.float64)
    max_rot = np.empty(n, dtype=np.float64)
    n_steps = np.empty(n, dtype=np.int64)
    for j in prange(n):
        y, st, tr, tw, to, mdw, mdo, mr, ns = propagate_core(
            q0s[j],
            p0s[j],
            t_final,
            kind,
            lam,
            mass,
            omega,
            rel_tol,
            abs_tol,
            max_step,
            blowup,
            min_step,
            max_steps,
            max_rotation,
            b_wf,
            b_ov_conj,
        )
        for i in range(7):
            state[j, i] = y[i]
        status[j] = st
        t_reached[j] = tr
        theta_wf[j] = tw
        theta_ov[j] = to
        min_dwf[j] = mdw
        min_dov[j] = mdo
        max_rot[j] = mr
        n_steps[j] = ns
    return state, status, t_reached, theta_wf, theta_ov, min_dwf, min_dov, max_rot, n_steps


@njit(cache=True)
def _flow_only(q0, p0, t_final, kind, lam, mass, omega, rel_tol, abs_tol, max_step, blowup, min_step, max_steps):
    """Position/momentum-only integration for raster maps; returns (q, p, status, t_reached)."""
    q = q0
    p = p0
    t = 0.0
    # derivative of (q, p) alone
    if kind == 0:
        fq = p / mass
        fp = -4.0 * lam * q * q * q
    else:
        fq = p / mass
        fp = -mass * omega * omega * q
    scale0 = max(abs(q), abs(p), 1.0)
    slope0 = max(abs(fq), abs(fp), 1e-10)
    h = min(max_step, 0.01 * scale0 / slope0, t_final)
    status = STATUS_OK
    n = 0
    k1q, k1p = fq, fp
    while t < t_final:
        if n >= max_steps:
            status = STATUS_MAX_STEPS
            break
        if h > t_final - t:
            h = t_final - t
        # stage evaluations inline (2 components)
        q2 = q + h * _A21 * k1q
        p2 = p + h * _A21 * k1p
        k2q = p2 / mass
        k2p = -4.0 * lam * q2 * q2 * q2 if kind == 0 else -mass * omega * omega * q2
        q3 = q + h * (_A31 * k1q + _A32 * k2q)
        p3 = p + h * (_A31 * k1p + _A32 * k2p)
        k3q = p3 / mass
        k3p = -4.0 * lam * q3 * q3 * q3 if kind == 0 else -mass * omega * omega * q3
        q4 = q + h * (_A41 * k1q + _A42 * k2q + _A43 * k3q)
        p4 = p + h * (_A41 * k1p + _A42 * k2p + _A43 * k3p)
        k4q = p4 / mass
        k4p = -4.0 * lam * q4 * q4 * q4 if kind == 0 else -mass * omega * omega * q4
        q5 = q + h * (_A51 * k1q + _A52 * k2q + _A53 * k3q + _A54 * k4q)
        p5 = p + h * (_A51 * k1p + _A52 * k2p + _A53 * k3p + _A54 * k4p)
        k5q = p5 / mass
        k5p = -4.0 * lam * q5 * q5 * q5 if kind == 0 else -mass * omega * omega * q5
        q6 = q + h * (_A61 * k1q + _A62 * k2q + _A63 * k3q + _A64 * k4q + _A65 * k5q)
        p6 = p + h * (_A61 * k1p + _A62 * k2p + _A63 * k3p + _A64 * k4p + _A65 * k5p)
        k6q = p6 / mass
        k6p = -4.0 * lam * q6 * q6 * q6 if kind == 0 else -mass * omega * omega * q6
        qn = q + h * (_B1 * k1q + _B3 * k3q + _B4 * k4q + _B5 * k5q + _B6 * k6q)
        pn = p + h * (_B1 * k1p + _B3 * k3p + _B4 * k4p + _B5 * k5p + _B6 * k6p)
        k7q = pn / mass
        k7p = -4.0 * lam * qn * qn * qn if kind == 0 else -mass * omega * omega * qn
        if not (np.isfinite(qn.real) and np.isfinite(qn.imag) and np.isfinite(pn.real) and np.isfinite(pn.imag)):
            h *= 0.2
            if h < min_step:
                status = STATUS_STEP_COLLAPSE
                break
            continue
        eq = h * (_E1 * k1q + _E3 * k3q + _E4 * k4q + _E5 * k5q + _E6 * k6q + _E7 * k7q)
        ep = h * (_E1 * k1p + _E3 * k3p + _E4 * k4p + _E5 * k5p + _E6 * k6p + _E7 * k7p)
        sq = abs_tol + rel_tol * max(abs(q), abs(qn))
        sp = abs_tol + rel_tol * max(abs(p), abs(pn))
        rq = abs(eq) / sq
        rp = abs(ep) / sp
        err_norm = np.sqrt(0.5 * (rq * rq + rp * rp))
        if err_norm > 1.0:
            fac = 0.9 * err_norm**-0.2
            if fac < 0.2:
                fac = 0.2
            h *= fac
            if h < min_step:
                status = STATUS_STEP_COLLAPSE
                break
            continue
        t += h
        q, p = qn, pn
        k1q, k1p = k7q, k7p
        n += 1
        if abs(q) > blowup or abs(p) > blowup:
            status = STATUS_BLOWUP
            break
        fac = 0.9 * err_norm**-0.2 if err_norm > 1e-30 else 5.0
        if fac > 5.0:
            fac = 5.0
        if fac < 0.2:
            fac = 0.2
        h *= fac
        if h > max_step:
            h = max_step
    return q, p, status, t


@njit(cache=True, parallel=True)
def final_position_map(
    q0s, p0s, t_final, kind, lam, mass, omega, rel_tol, abs_tol, max_step, blowup, min_step, max_steps
):
    """Flow-only batch: final (q, p), status, and time reached per initial condition."""
    n = q0s.shape[0]
    qf = np.empty(n, dtype=np.complex128)
    pf = np.empty(n, dtype=np.complex128)
    status = np.empty(n, dtype=np.int64)
    t_reached = np.empty(n, dtype=np.float64)
    for j in prange(n):
        q, p, st, tr = _flow_only(
            q0s[j], p0s[j], t_final, kind, lam, mass, omega, rel_tol, abs_tol, max_step, blowup, min_step, max_steps
        )
        qf[j] = q
        pf[j] = p
        status[j] = st
        t_reached[j] = tr
    return qf, pf, status, t_reached
