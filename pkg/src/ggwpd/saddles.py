"""Newton-Raphson solution of the two-point boundary value problems.

Both boundary value problems (final position for the evolved wave
function, bra-manifold membership for overlaps) are root finds in the
single ket-manifold coordinate u, with analytic Jacobians assembled from
the stability matrix through the manifold chain rule dp0 = i b dq0.

Saddles found from real reference trajectories are "exposed"; their
square-root prefactor branch is anchored at the reference's own winding
(which is unambiguous: the prefactor denominator of a real trajectory can
never vanish while det M = 1) and transported along the straight
initial-condition homotopy from the reference to the saddle. Continuing
the branch along the saddle's own time path instead can silently pick up
a spurious full turn whenever that path and the anchored one bracket a
zero of the denominator, which flips the sign of the contribution; the
homotopy route is validated against exact quadratic-Hamiltonian evolution
and the quantum solver.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import TrajectoryResult, propagate, propagate_batch
from .params import IntegratorOptions, NewtonOptions, WavePacketParams
from .wavepacket import (
    ComplexPhasePoint,
    dual_exponent,
    dual_residual,
    ket_residual,
    log_norm,
    manifold_lift,
    phase_exponent,
)
from .wigner import Foliation, FoliationSet, NotCoveringError, ReferencePoint, select_reference

__all__ = [
    "WavefunctionTarget",
    "OverlapTarget",
    "Saddle",
    "NewtonReport",
    "BranchTrackingError",
    "bvp_residual_wavefunction",
    "bvp_residual_overlap",
    "newton_search",
    "newton_search_batch",
    "ExposureTester",
    "seed_from_reference",
    "branch_theta_from_reference",
    "make_saddle",
    "find_exposed_saddles",
    "exposure_check",
    "shadowing_check",
]


class BranchTrackingError(RuntimeError):
    """Prefactor branch could not be transported along the requested path."""


@dataclass(frozen=True)
class WavefunctionTarget:
    """Boundary condition q_t = x for the evolved wave function at position x."""

    x: float

    kind = "wavefunction"

    def residual(self, traj: TrajectoryResult, wp: WavePacketParams):
        return traj.final.q - self.x, traj.d_wf(wp.width)

    def denominator(self, traj: TrajectoryResult, wp: WavePacketParams) -> complex:
        return traj.d_wf(wp.width)

    def initial_denominator(self, wp: WavePacketParams) -> complex:
        return 1.0 + 0.0j

    def exponent(self, u, traj, wp: WavePacketParams):
        return phase_exponent(u, wp) + log_norm(wp) + 1j * traj.action / wp.hbar

    def norm_const(self, wp: WavePacketParams) -> float:
        return log_norm(wp)


@dataclass(frozen=True)
class OverlapTarget:
    """Boundary condition: final point on the bra manifold of packet wp_bra."""

    wp_bra: WavePacketParams

    kind = "overlap"

    def residual(self, traj: TrajectoryResult, wp: WavePacketParams):
        return dual_residual(traj.final, self.wp_bra), traj.d_ov(wp.width, self.wp_bra.width)

    def denominator(self, traj: TrajectoryResult, wp: WavePacketParams) -> complex:
        return traj.d_ov(wp.width, self.wp_bra.width)

    def initial_denominator(self, wp: WavePacketParams) -> complex:
        return complex(wp.width) + complex(self.wp_bra.width).conjugate()

    def exponent(self, u, traj, wp: WavePacketParams):
        return (
            phase_exponent(u, wp)
            + log_norm(wp)
            + 1j * traj.action / wp.hbar
            + dual_exponent(traj.final.q, self.wp_bra)
        )

    def norm_const(self, wp: WavePacketParams) -> float:
        return log_norm(wp) + log_norm(self.wp_bra)


@dataclass(frozen=True)
class Saddle:
    """One solution of a boundary value problem with its branch data."""

    u0: complex
    start: ComplexPhasePoint
    traj: TrajectoryResult
    exponent: complex  # log of the full contribution exponent (prefactor excluded)
    action: complex  # complex Hamilton principal function along the trajectory
    action_like: complex  # action-form of the exponent; Im >= 0 for exposed saddles
    theta: float  # continuous argument of the prefactor denominator (branch)
    exposure: str  # "exposed" | "hidden"
    foliation_label: int | None = None
    stokes_excluded: bool = False
    caustic_on_path: bool = False
    target: object = None

    @property
    def denominator(self) -> complex:
        return cmath.rect(1.0, 0.0)  # placeholder; real value held by traj/target

    def prefactor(self, wp: WavePacketParams, target=None) -> complex:
        """Branch-tracked [denominator]^(-1/2)."""
        target = target or self.target
        d = target.denominator(self.traj, wp)
        return abs(d) ** -0.5 * cmath.exp(-0.5j * self.theta)


@dataclass(frozen=True)
class NewtonReport:
    converged: bool
    u: complex
    traj: TrajectoryResult | None
    iterations: int
    reason: str
    trace: tuple[complex, ...] = field(default=(), repr=False)
    residual: complex = complex("nan")


def _lift_and_propagate(u, t, wp, sys_params, opts, wp_bra=None) -> TrajectoryResult:
    start = manifold_lift(u, wp)
    return propagate(start, t, sys_params, opts, wp=wp, wp_bra=wp_bra)


def bvp_residual_wavefunction(u, x, t, wp, sys_params, opts=None):
    """(F, dF, traj) for the final-position condition q_t(u) - x = 0.

    dF = dq_t/du = M22 + i b M21. Singular trajectories return F = dF = None
    with the trajectory carrying the singular status, for seed rejection.
    """
    traj = _lift_and_propagate(u, t, wp, sys_params, opts or IntegratorOptions())
    if not traj.ok:
        return None, None, traj
    f, df = WavefunctionTarget(x).residual(traj, wp)
    return f, df, traj


def bvp_residual_overlap(u, wp_bra, t, wp, sys_params, opts=None):
    """(F, dF, traj) for the bra-manifold condition at the final point.

    F = conj(b_bra)(q_t - q_b) - i (p_t - p_b);
    dF = conj(b_bra)(M22 + i b M21) - i (M12 + i b M11).
    """
    traj = _lift_and_propagate(u, t, wp, sys_params, opts or IntegratorOptions(), wp_bra=wp_bra)
    if not traj.ok:
        return None, None, traj
    f, df = OverlapTarget(wp_bra).residual(traj, wp)
    return f, df, traj


def newton_search(
    seed: complex,
    target,
    t: float,
    wp: WavePacketParams,
    sys_params,
    opts: IntegratorOptions | None = None,
    newton: NewtonOptions | None = None,
    keep_trace: bool = False,
) -> NewtonReport:
    """Clipped Newton iteration u <- u - F/dF on the manifold coordinate.

    Singular trajectories encountered mid-iteration trigger backtracking
    (halving of the last step up to 8 times); running out of iterations or
    backtracks yields a divergence report rather than an exception.
    """
    opts = opts or IntegratorOptions()
    newton = newton or NewtonOptions()
    clip = newton.clip_for(wp)
    wp_bra = target.wp_bra if target.kind == "overlap" else None
    u = complex(seed)
    trace = [u] if keep_trace else []
    du = 0.0 + 0.0j
    for it in range(newton.max_iter):
        traj = _lift_and_propagate(u, t, wp, sys_params, opts, wp_bra=wp_bra)
        if not traj.ok:
            # backtrack toward the previous iterate
            recovered = False
            for _ in range(8):
                du *= 0.5
                u = u - du
                traj = _lift_and_propagate(u, t, wp, sys_params, opts, wp_bra=wp_bra)
                if traj.ok:
                    recovered = True
                    break
            if not recovered:
                return NewtonReport(False, u, None, it + 1, "singular trajectory", tuple(trace))
        f, df = target.residual(traj, wp)
        if abs(f) < newton.tol:
            return NewtonReport(True, u, traj, it, "converged", tuple(trace), residual=f)
        du = -f / df
        if abs(du) > clip:
            du *= clip / abs(du)
        u = u + du
        if keep_trace:
            trace.append(u)
    return NewtonReport(False, u, None, newton.max_iter, "max iterations", tuple(trace))


def newton_search_batch(
    seeds: np.ndarray,
    target,
    t: float,
    wp: WavePacketParams,
    sys_params,
    opts: IntegratorOptions | None = None,
    newton: NewtonOptions | None = None,
):
    """Lockstep Newton over many seeds; returns (u, converged, last_batch).

    Each element iterates independently; the batch advances together so the
    trajectory integrations parallelize. Elements whose trajectory turns
    singular back off toward their previous iterate.
    """
    opts = opts or IntegratorOptions()
    newton = newton or NewtonOptions()
    clip = newton.clip_for(wp)
    wp_bra = target.wp_bra if target.kind == "overlap" else None
    b = complex(wp.width)

    u = np.asarray(seeds, dtype=complex).copy()
    n = len(u)
    converged = np.zeros(n, dtype=bool)
    dead = np.zeros(n, dtype=bool)
    du = np.zeros(n, dtype=complex)
    backtracks = np.zeros(n, dtype=int)
    final = None
    for _ in range(newton.max_iter):
        active = ~(converged | dead)
        if not active.any():
            break
        p0 = wp.p_center + 1j * b * (u - wp.q_center)
        batch = propagate_batch(u, p0, t, sys_params, opts, wp=wp, wp_bra=wp_bra)
        ok = batch.ok
        if target.kind == "wavefunction":
            f = batch.qf - target.x
            df = batch.m22 + 1j * b * batch.m21
        else:
            bb = complex(target.wp_bra.width).conjugate()
            dwf = batch.m22 + 1j * b * batch.m21
            dpu = batch.m12 + 1j * b * batch.m11
            f = bb * (batch.qf - target.wp_bra.q_center) - 1j * (batch.pf - target.wp_bra.p_center)
            df = bb * dwf - 1j * dpu
        newly = active & ok & (np.abs(f) < newton.tol)
        converged |= newly
        final = batch
        step = np.where(np.abs(df) > 0, -f / df, 0.0)
        mag = np.abs(step)
        over = mag > clip
        step[over] *= clip / mag[over]
        adv = active & ok & ~converged
        du[adv] = step[adv]
        u[adv] += step[adv]
        # singular: halve back toward previous iterate, give up after 8
        sing = active & ~ok
        backtracks[sing] += 1
        dead |= sing & (backtracks >= 8)
        retreat = sing & ~dead
        du[retreat] *= 0.5
        u[retreat] -= du[retreat]
    return u, converged, final


def seed_from_reference(ref: ReferencePoint, x: float, wp: WavePacketParams) -> complex:
    """Linearized-shadowing seed: one stability-matrix Newton jump from a real reference.

    Solving the linearized boundary condition dq_t = x - q_t(ref) for a
    manifold deviation around the reference gives

        u = q_r + (x - q_t - i M21 R_ket) / (M22 + i b M21)

    with R_ket the reference's ket-manifold residual. This places the seed
    inside the saddle's basin; lifting the bare position q_r alone does not.
    """
    traj = ref.traj
    d = traj.d_wf(wp.width)
    r_ket = ket_residual(ComplexPhasePoint(complex(ref.q0), complex(ref.p0)), wp)
    return complex(ref.q0) + ((x - traj.final.q) - 1j * traj.m21 * r_ket) / d


def branch_theta_from_reference(
    ref: ReferencePoint,
    u0: complex,
    target,
    t: float,
    wp: WavePacketParams,
    sys_params,
    opts: IntegratorOptions | None = None,
    max_points: int = 200,
) -> float:
    """Transport the prefactor-denominator argument from a real reference to a saddle.

    Anchors at the reference trajectory's time-path winding, then
    accumulates the argument change of the denominator along the straight
    initial-condition path from (q_r, p_r) to the saddle's manifold point,
    refining until every increment stays below half a radian.
    """
    opts = opts or IntegratorOptions()
    wp_bra = target.wp_bra if target.kind == "overlap" else None
    start = manifold_lift(u0, wp)
    q_a, p_a = complex(ref.q0), complex(ref.p0)
    dq, dp = start.q - q_a, start.p - p_a

    def denom_at(s: float) -> complex:
        traj = propagate(
            ComplexPhasePoint(q_a + s * dq, p_a + s * dp), t, sys_params, opts, wp=wp, wp_bra=wp_bra
        )
        if not traj.ok:
            raise BranchTrackingError(f"singular trajectory on branch homotopy at s={s:.4f}")
        return target.denominator(traj, wp)

    svals = [0.0, 0.25, 0.5, 0.75, 1.0]
    denoms = [target.denominator(ref.traj, wp)] + [denom_at(s) for s in svals[1:]]
    i = 0
    while i < len(svals) - 1:
        ratio = denoms[i + 1] * denoms[i].conjugate()
        if abs(math.atan2(ratio.imag, ratio.real)) > 0.5:
            if len(svals) >= max_points or svals[i + 1] - svals[i] < 1e-9:
                raise BranchTrackingError(
                    f"prefactor argument unresolvable between s={svals[i]:.6f} and s={svals[i+1]:.6f}"
                )
            mid = 0.5 * (svals[i] + svals[i + 1])
            svals.insert(i + 1, mid)
            denoms.insert(i + 1, denom_at(mid))
        else:
            i += 1
    winding = ref.traj.winding_wf if target.kind == "wavefunction" else ref.traj.winding_ov
    theta = cmath.phase(target.initial_denominator(wp)) + winding
    for i in range(len(svals) - 1):
        ratio = denoms[i + 1] * denoms[i].conjugate()
        theta += math.atan2(ratio.imag, ratio.real)
    return theta


def make_saddle(
    u0: complex,
    traj: TrajectoryResult,
    target,
    wp: WavePacketParams,
    theta: float,
    exposure: str,
    foliation_label: int | None = None,
    caustic_tol: float = 1e-6,
) -> Saddle:
    exponent = target.exponent(u0, traj, wp)
    action_like = -1j * wp.hbar * (exponent - target.norm_const(wp))
    min_d = traj.min_abs_dwf if target.kind == "wavefunction" else traj.min_abs_dov
    return Saddle(
        u0=u0,
        start=traj.start,
        traj=traj,
        exponent=exponent,
        action=traj.action,
        action_like=action_like,
        theta=theta,
        exposure=exposure,
        foliation_label=foliation_label,
        caustic_on_path=bool(min_d < caustic_tol),
        target=target,
    )


def _dedup_keep_first(candidates, radius: float):
    kept = []
    for item in candidates:
        if not any(abs(item[0] - other[0]) < radius for other in kept):
            kept.append(item)
    return kept


def find_exposed_saddles(
    fols: FoliationSet,
    x: float,
    t: float,
    wp: WavePacketParams,
    sys_params,
    opts: IntegratorOptions | None = None,
    newton: NewtonOptions | None = None,
) -> tuple[list[Saddle], list[dict]]:
    """One exposed saddle per transport pathway covering x.

    Seeds a Newton search from each covering foliation's reference (both
    arm edges where available; the second edge doubles as the retry seed),
    deduplicates converged roots, and anchors every saddle's prefactor
    branch at its reference. Foliations whose seeds diverge are reported
    in the failure list, never silently dropped.
    """
    opts = opts or IntegratorOptions()
    newton = newton or NewtonOptions()
    target = WavefunctionTarget(x)
    evolved = fols.evolved
    candidates = []
    failures = []
    for fol in fols.foliations:
        if not fol.covers(x):
            continue
        refs = []
        for piece in fol.pieces:
            if piece.covers(x):
                sub = Foliation(label=fol.label, pieces=(piece,))
                try:
                    refs.append(select_reference(sub, evolved, x, wp=wp))
                except NotCoveringError:
                    continue
        if not refs:
            failures.append({"foliation": fol.label, "reason": "no covering reference"})
            continue
        got = None
        for k, ref in enumerate(refs):
            seed = seed_from_reference(ref, x, wp)
            report = newton_search(seed, target, t, wp, sys_params, opts, newton)
            if not report.converged and k == len(refs) - 1:
                # spec fallback: retry from a quarter-interval-shifted reference
                piece = fol.pieces[0]
                th_retry = piece.theta_lo + 0.25 * (piece.theta_hi - piece.theta_lo)
                q0r, p0r = evolved.contour.point(th_retry)
                traj_r = propagate(
                    ComplexPhasePoint(complex(q0r), complex(p0r)), t, sys_params, opts, wp=wp
                )
                ref_retry = ReferencePoint(th_retry, float(q0r), float(p0r), traj_r, fol.label)
                seed = seed_from_reference(ref_retry, x, wp)
                report = newton_search(seed, target, t, wp, sys_params, opts, newton)
                ref = ref_retry
            if report.converged:
                got = (report.u, report.traj, ref, fol.label)
                break
        if got is None:
            failures.append({"foliation": fol.label, "reason": "newton divergence"})
        else:
            candidates.append(got)
    saddles = []
    for u0, traj, ref, label in _dedup_keep_first(candidates, newton.dedup_radius):
        theta = branch_theta_from_reference(ref, u0, target, t, wp, sys_params, opts)
        saddles.append(make_saddle(u0, traj, target, wp, theta, "exposed", foliation_label=label))
    return saddles, failures


class ExposureTester:
    """Repeated exposure tests for one pathway at many target positions.

    The real reference trajectories (seeds spread over the foliation's
    theta extent) do not depend on the target, so their propagation is
    done once; each query only lifts them toward x through the linearized
    shadowing jump and runs a capped batch Newton search. Tolerances are
    deliberately looser than for saddle location: the question is basin
    membership at the dedup radius, not a tight root.
    """

    def __init__(
        self,
        fol: Foliation,
        fols: FoliationSet,
        t: float,
        wp: WavePacketParams,
        sys_params,
        opts: IntegratorOptions | None = None,
        newton: NewtonOptions | None = None,
        n_seeds: int = 6,
    ):
        opts = opts or IntegratorOptions()
        newton = newton or NewtonOptions()
        self.t = t
        self.wp = wp
        self.sys_params = sys_params
        self.opts = replace(opts, rel_tol=max(opts.rel_tol, 1e-9), abs_tol=max(opts.abs_tol, 1e-10))
        self.newton = replace(newton, tol=max(newton.tol, 1e-8), max_iter=min(newton.max_iter, 12))
        thetas = fol.seed_thetas(n_seeds)
        q0, p0 = fols.evolved.contour.point(thetas)
        self.q0 = q0.astype(complex)
        batch = propagate_batch(self.q0, p0.astype(complex), t, sys_params, self.opts, wp=wp)
        b = complex(wp.width)
        self._r_ket = b * (q0 - wp.q_center) + 1j * (p0 - wp.p_center)
        self._m21 = batch.m21
        self._qf = batch.qf
        self._d = batch.m22 + 1j * b * batch.m21

    def check(self, u0: complex, x: float) -> bool:
        seeds = self.q0 + ((x - self._qf) - 1j * self._m21 * self._r_ket) / self._d
        u, conv, _ = newton_search_batch(
            seeds, WavefunctionTarget(x), self.t, self.wp, self.sys_params, self.opts, self.newton
        )
        return bool(np.any(conv & (np.abs(u - u0) < self.newton.dedup_radius)))


def exposure_check(
    u0: complex,
    fol: Foliation,
    fols: FoliationSet,
    x: float,
    t: float,
    wp: WavePacketParams,
    sys_params,
    opts: IntegratorOptions | None = None,
    newton: NewtonOptions | None = None,
    n_seeds: int = 6,
) -> bool:
    """Is u0 reached by a Newton search from real references of this pathway?

    One-shot form of ExposureTester.check for a single query.
    """
    tester = ExposureTester(fol, fols, t, wp, sys_params, opts, newton, n_seeds)
    return tester.check(u0, x)


def shadowing_check(s: Saddle, reference: ReferencePoint) -> float:
    """Relative error of the stability-matrix prediction of the saddle's final point.

    Applies the reference's M to the complex initial-condition deviation
    (dp0, dq0) of the saddle from the reference and compares with the
    saddle's actual final phase point.
    """
    traj = reference.traj
    dp0 = s.start.p - reference.p0
    dq0 = s.start.q - reference.q0
    pred_p = traj.final.p + traj.m11 * dp0 + traj.m12 * dq0
    pred_q = traj.final.q + traj.m21 * dp0 + traj.m22 * dq0
    act_p, act_q = s.traj.final.p, s.traj.final.q
    num = math.hypot(abs(pred_p - act_p), abs(pred_q - act_q))
    den = max(1.0, math.hypot(abs(act_p), abs(act_q)))
    return num / den
