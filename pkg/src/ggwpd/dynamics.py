"""Complexified Hamiltonian dynamics with stability matrix and action.

Wraps the numba integrator kernels in result records. The complexified
flow is treated as a real ODE of doubled dimension inside an adaptive
embedded Runge-Kutta pair; symplectic fixed-step schemes cannot chase the
finite-time blow-ups that complex quartic trajectories exhibit, so
adaptivity is not optional here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._kernels import STATUS_BLOWUP, STATUS_MAX_STEPS, STATUS_OK, STATUS_STEP_COLLAPSE
from .params import IntegratorOptions, WavePacketParams
from .wavepacket import ComplexPhasePoint

__all__ = [
    "TrajectoryResult",
    "BatchTrajectories",
    "ScaledReplica",
    "hamiltonian",
    "propagate",
    "propagate_batch",
    "propagate_flow_batch",
    "scale_trajectory",
    "scale_phase_point",
]

_STATUS_NAMES = {
    STATUS_OK: "ok",
    STATUS_BLOWUP: "singular",
    STATUS_STEP_COLLAPSE: "singular",
    STATUS_MAX_STEPS: "max-steps",
}


@dataclass(frozen=True)
class TrajectoryResult:
    """Outcome of propagating one complex initial condition.

    The 2x2 stability matrix acts on deviations ordered (dp, dq):

        (dp_t, dq_t)^T = [[m11, m12], [m21, m22]] (dp_0, dq_0)^T

    winding_wf / winding_ov are the accumulated continuous arguments of
    the prefactor denominators D_wf = M22 + i b M21 and
    D_ov = conj(b_bra)(M22 + i b M21) - i(M12 + i b M11) along the
    trajectory, anchored at t = 0; they are reliable branch data only for
    real initial conditions, where D never vanishes.
    """

    start: ComplexPhasePoint
    final: ComplexPhasePoint
    m11: complex
    m12: complex
    m21: complex
    m22: complex
    action: complex
    status: str
    t: float
    t_reached: float
    winding_wf: float
    winding_ov: float
    min_abs_dwf: float
    min_abs_dov: float
    n_steps: int

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def blowup_time(self) -> float | None:
        """Estimate of the blow-up time for singular trajectories."""
        return None if self.ok else self.t_reached

    @property
    def stability(self) -> np.ndarray:
        return np.array([[self.m11, self.m12], [self.m21, self.m22]], dtype=complex)

    def det_m(self) -> complex:
        return self.m11 * self.m22 - self.m12 * self.m21

    def d_wf(self, width: complex) -> complex:
        """Prefactor denominator dq_t/du = M22 + i b M21 for ket width b."""
        return self.m22 + 1j * width * self.m21

    def dp_du(self, width: complex) -> complex:
        """dp_t/du = M12 + i b M11 along the ket manifold."""
        return self.m12 + 1j * width * self.m11

    def d_ov(self, width_ket: complex, width_bra: complex) -> complex:
        """Overlap Jacobian conj(b_bra) dq_t/du - i dp_t/du."""
        return complex(width_bra).conjugate() * self.d_wf(width_ket) - 1j * self.dp_du(width_ket)


@dataclass(frozen=True)
class BatchTrajectories:
    """Array-of-results form for share-nothing batch propagation."""

    q0: np.ndarray
    p0: np.ndarray
    qf: np.ndarray
    pf: np.ndarray
    m11: np.ndarray
    m12: np.ndarray
    m21: np.ndarray
    m22: np.ndarray
    action: np.ndarray
    status: np.ndarray  # integer kernel codes; 0 = ok
    t_reached: np.ndarray
    winding_wf: np.ndarray
    winding_ov: np.ndarray
    t: float

    @property
    def ok(self) -> np.ndarray:
        return self.status == STATUS_OK

    def __len__(self) -> int:
        return len(self.q0)

    def result(self, i: int) -> TrajectoryResult:
        return TrajectoryResult(
            start=ComplexPhasePoint(complex(self.q0[i]), complex(self.p0[i])),
            final=ComplexPhasePoint(complex(self.qf[i]), complex(self.pf[i])),
            m11=complex(self.m11[i]),
            m12=complex(self.m12[i]),
            m21=complex(self.m21[i]),
            m22=complex(self.m22[i]),
            action=complex(self.action[i]),
            status=_STATUS_NAMES[int(self.status[i])],
            t=self.t,
            t_reached=float(self.t_reached[i]),
            winding_wf=float(self.winding_wf[i]),
            winding_ov=float(self.winding_ov[i]),
            min_abs_dwf=np.nan,
            min_abs_dov=np.nan,
            n_steps=-1,
        )


def hamiltonian(pt: ComplexPhasePoint, sys_params) -> complex:
    """Complex energy p^2/(2m) + V(q)."""
    return pt.p**2 / (2.0 * sys_params.mass) + sys_params.potential(pt.q)


def _widths(wp: WavePacketParams | None, wp_bra: WavePacketParams | None):
    b = complex(wp.width) if wp is not None else 1.0 + 0j
    bb = complex(wp_bra.width).conjugate() if wp_bra is not None else b.conjugate()
    return b, bb


def propagate(
    start: ComplexPhasePoint,
    t: float,
    sys_params,
    opts: IntegratorOptions | None = None,
    wp: WavePacketParams | None = None,
    wp_bra: WavePacketParams | None = None,
) -> TrajectoryResult:
    """Propagate one complex phase point for time t >= 0.

    The wave packet arguments only feed the winding accumulators of the
    prefactor denominators; they do not affect the trajectory itself.
    """
    if t < 0:
        raise ValueError("propagation time must be non-negative")
    opts = opts or IntegratorOptions()
    b, bb = _widths(wp, wp_bra)
    y, st, tr, thw, tho, mdw, mdo, _mr, ns = _kernels.propagate_core(
        complex(start.q),
        complex(start.p),
        float(t),
        sys_params.kind,
        sys_params.lam,
        sys_params.mass,
        sys_params.omega,
        opts.rel_tol,
        opts.abs_tol,
        opts.max_step,
        opts.blowup_threshold,
        opts.min_step,
        opts.max_steps,
        opts.max_rotation,
        b,
        bb,
    )
    if st == STATUS_MAX_STEPS:
        raise RuntimeError(f"integrator exceeded {opts.max_steps} steps at t={tr:.6g}")
    return TrajectoryResult(
        start=start,
        final=ComplexPhasePoint(complex(y[0]), complex(y[1])),
        m11=complex(y[2]),
        m12=complex(y[3]),
        m21=complex(y[4]),
        m22=complex(y[5]),
        action=complex(y[6]),
        status=_STATUS_NAMES[int(st)],
        t=float(t),
        t_reached=float(tr),
        winding_wf=float(thw),
        winding_ov=float(tho),
        min_abs_dwf=float(mdw),
        min_abs_dov=float(mdo),
        n_steps=int(ns),
    )


def propagate_batch(
    q0: np.ndarray,
    p0: np.ndarray,
    t: float,
    sys_params,
    opts: IntegratorOptions | None = None,
    wp: WavePacketParams | None = None,
    wp_bra: WavePacketParams | None = None,
) -> BatchTrajectories:
    """Propagate many independent initial conditions in parallel."""
    if t < 0:
        raise ValueError("propagation time must be non-negative")
    opts = opts or IntegratorOptions()
    b, bb = _widths(wp, wp_bra)
    q0 = np.ascontiguousarray(q0, dtype=np.complex128)
    p0 = np.ascontiguousarray(p0, dtype=np.complex128)
    if q0.shape != p0.shape or q0.ndim != 1:
        raise ValueError("q0 and p0 must be matching 1-d arrays")
    state, st, tr, thw, tho, _mdw, _mdo, _mr, _ns = _kernels.propagate_core_batch(
        q0,
        p0,
        float(t),
        sys_params.kind,
        sys_params.lam,
        sys_params.mass,
        sys_params.omega,
        opts.rel_tol,
        opts.abs_tol,
        opts.max_step,
        opts.blowup_threshold,
        opts.min_step,
        opts.max_steps,
        opts.max_rotation,
        b,
        bb,
    )
    return BatchTrajectories(
        q0=q0,
        p0=p0,
        qf=state[:, 0],
        pf=state[:, 1],
        m11=state[:, 2],
        m12=state[:, 3],
        m21=state[:, 4],
        m22=state[:, 5],
        action=state[:, 6],
        status=st,
        t_reached=tr,
        winding_wf=thw,
        winding_ov=tho,
        t=float(t),
    )


def propagate_flow_batch(q0, p0, t, sys_params, opts: IntegratorOptions | None = None):
    """Position/momentum-only batch propagation (no variational matrix).

    Used for raster maps where only the final phase point and singular
    status matter. Returns (qf, pf, status, t_reached) arrays.
    """
    opts = opts or IntegratorOptions()
    q0 = np.ascontiguousarray(q0, dtype=np.complex128)
    p0 = np.ascontiguousarray(p0, dtype=np.complex128)
    return _kernels.final_position_map(
        q0,
        p0,
        float(t),
        sys_params.kind,
        sys_params.lam,
        sys_params.mass,
        sys_params.omega,
        opts.rel_tol,
        opts.abs_tol,
        opts.max_step,
        opts.blowup_threshold,
        opts.min_step,
        opts.max_steps,
    )


@dataclass(frozen=True)
class ScaledReplica:
    """Homogeneity-scaled copy of a quartic trajectory.

    For gamma = (E/E0)^{1/4}: q_E(t/gamma) = gamma q_{E0}(t),
    p_E(t/gamma) = gamma^2 p_{E0}(t), actions scale as gamma^3 and periods
    as 1/gamma.
    """

    start: ComplexPhasePoint
    final: ComplexPhasePoint
    t: float
    action: complex
    gamma: float


def scale_phase_point(pt: ComplexPhasePoint, gamma: float) -> ComplexPhasePoint:
    return ComplexPhasePoint(q=gamma * pt.q, p=gamma**2 * pt.p)


def scale_trajectory(ref: TrajectoryResult, gamma: float) -> ScaledReplica:
    """Predict the scaled replica of a quartic trajectory without integrating."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return ScaledReplica(
        start=scale_phase_point(ref.start, gamma),
        final=scale_phase_point(ref.final, gamma),
        t=ref.t / gamma,
        action=gamma**3 * ref.action,
        gamma=gamma,
    )
