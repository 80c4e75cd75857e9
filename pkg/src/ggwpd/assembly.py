"""Semiclassical assembly: saddle contributions, wave functions, partial theories.

A saddle's contribution to the evolved wave function is

    psi_k(x) = [M22 + i b M21]^(-1/2) exp( log phi(u0) + i S / hbar )

with the square root on the branch transported from the identity anchor
(see the saddle module). Overlap saddles carry the analytically continued
bra exponent and the overlap Jacobian instead. The two partial theories
are included: linearized propagation of a single Gaussian, and the
off-center method that performs the local Gaussian integral about a real
reference of each transport pathway, keeping the non-vanishing linear
term.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import propagate, propagate_flow_batch
from .params import IntegratorOptions, NewtonOptions, WavePacketParams
from .saddles import (
    OverlapTarget,
    Saddle,
    branch_theta_from_reference,
    find_exposed_saddles,
    make_saddle,
    newton_search,
)
from .wavepacket import (
    ComplexPhasePoint,
    dual_residual,
    ket_residual,
    log_norm,
    phase_exponent,
    wavepacket_eval,
)
from .wigner import FoliationSet, ReferencePoint, wigner_eval, wigner_matrix, wigner_sample

__all__ = [
    "Contribution",
    "WavefunctionTable",
    "EvolvedGaussian",
    "saddle_contribution_wavefunction",
    "assemble_wavefunction",
    "wavefunction_from_foliations",
    "lwpd_propagate",
    "lwpd_validity_overlap",
    "offcenter_sum",
    "overlap_semiclassical",
    "RELEVANCE_CUTOFF",
]

# contributions below this fraction of the running maximum are dropped;
# they are far below the inherent error of the saddle point approximation
RELEVANCE_CUTOFF = 1e-12


@dataclass(frozen=True)
class Contribution:
    """prefactor * exp(exponent), with the branch-tracked prefactor kept separate."""

    exponent: complex
    prefactor: complex
    label: int | None = None

    @property
    def value(self) -> complex:
        return self.prefactor * cmath.exp(self.exponent)


def saddle_contribution_wavefunction(s: Saddle, wp: WavePacketParams) -> Contribution:
    """Contribution of one wave function saddle; excluded saddles are refused."""
    if s.stokes_excluded:
        raise ValueError("saddle is Stokes-excluded and must not contribute")
    if s.target.kind != "wavefunction":
        raise ValueError("saddle does not solve the wave function boundary value problem")
    return Contribution(exponent=s.exponent, prefactor=s.prefactor(wp), label=s.foliation_label)


@dataclass(frozen=True)
class WavefunctionTable:
    """Assembled semiclassical wave function on a position grid."""

    x: np.ndarray
    psi: np.ndarray
    per_family: dict  # label -> complex array aligned with x (NaN where absent)
    n_dropped_unvalidated: int = 0

    def magnitude(self) -> np.ndarray:
        return np.abs(self.psi)


def assemble_wavefunction(
    families,
    wp: WavePacketParams,
    x_grid=None,
    relevance_cutoff: float = RELEVANCE_CUTOFF,
) -> WavefunctionTable:
    """Sum family contributions per position with Stokes-aware inclusion.

    A sample contributes when it is exposed, or hidden with a resolved
    Stokes decision behind it and not excluded. Hidden samples never
    validated by any resolved caustic are dropped and counted; including
    them would inject exponentially growing terms.
    """
    if x_grid is None:
        xs = sorted(set().union(*[set(f.samples.keys()) for f in families]))
    else:
        xs = [families[0].key(x) for x in np.asarray(x_grid, dtype=float)]
    xs = np.array(xs)
    psi = np.zeros(len(xs), dtype=complex)
    per_family = {f.label: np.full(len(xs), np.nan, dtype=complex) for f in families}
    dropped = 0
    for i, x in enumerate(xs):
        values = []
        for fam in families:
            s = fam.samples.get(x)
            if s is None:
                continue
            include = s.exposed or (s.hidden_validated and not s.stokes_excluded)
            if not include:
                if not s.exposed and not s.hidden_validated:
                    dropped += 1
                continue
            v = s.contribution
            values.append((fam.label, v))
            per_family[fam.label][i] = v
        if not values:
            continue
        vmax = max(abs(v) for _, v in values)
        psi[i] = sum(v for _, v in values if abs(v) >= relevance_cutoff * vmax)
    return WavefunctionTable(
        x=xs.astype(float), psi=psi, per_family=per_family, n_dropped_unvalidated=dropped
    )


def wavefunction_from_foliations(
    fols: FoliationSet,
    x_grid,
    t: float,
    wp: WavePacketParams,
    sys_params,
    opts: IntegratorOptions | None = None,
    newton: NewtonOptions | None = None,
    relevance_cutoff: float = RELEVANCE_CUTOFF,
):
    """Exposed-saddle wave function evaluated independently at each position.

    Runs the reference-seeded search per grid point; suitable in regimes
    without Stokes structure (short times, quadratic Hamiltonians, or the
    classically allowed core). Returns (x, psi, n_saddles_per_x).
    """
    xs = np.asarray(x_grid, dtype=float)
    psi = np.zeros(len(xs), dtype=complex)
    counts = np.zeros(len(xs), dtype=int)
    for i, x in enumerate(xs):
        sads, _fails = find_exposed_saddles(fols, float(x), t, wp, sys_params, opts, newton)
        counts[i] = len(sads)
        if not sads:
            continue
        vals = [saddle_contribution_wavefunction(s, wp).value for s in sads]
        vmax = max(abs(v) for v in vals)
        psi[i] = sum(v for v in vals if abs(v) >= relevance_cutoff * vmax)
    return xs, psi, counts


@dataclass(frozen=True)
class EvolvedGaussian:
    """Single-Gaussian (linearized) propagation of the packet.

    The evolved packet is exp[ -(w_t/2 hbar)(x - q_c)^2 + i p_c (x - q_c)/hbar
    + i p_c q_c/(2 hbar) + phase_norm ], i.e. the standard packet form with
    the transported width and the accumulated phase/normalization exponent.
    """

    q_c: float
    p_c: float
    width_t: complex
    phase_norm: complex
    hbar: float

    def packet(self) -> WavePacketParams:
        return WavePacketParams(self.q_c, self.p_c, self.width_t, self.hbar)

    def eval(self, x):
        return np.exp(phase_exponent(x, self.packet()) + self.phase_norm)

    def wigner_form(self):
        return wigner_matrix(self.packet())


def lwpd_propagate(
    wp: WavePacketParams, t: float, sys_params, opts: IntegratorOptions | None = None
) -> EvolvedGaussian:
    """Transport center, width, and phase/normalization along the centroid trajectory.

    width_t = (b M11 - i M12) / (M22 + i b M21) is the tangent-map
    transport of the manifold slope; the phase/normalization accumulates
    (i/hbar) S plus the branch-tracked -(1/2) log(M22 + i b M21) and the
    endpoint phase convention terms.
    """
    traj = propagate(
        ComplexPhasePoint(complex(wp.q_center), complex(wp.p_center)), t, sys_params, opts, wp=wp
    )
    if not traj.ok:
        raise RuntimeError("centroid trajectory became singular")
    b = complex(wp.width)
    d = traj.d_wf(b)
    width_t = (b * traj.m11 - 1j * traj.m12) / d
    if width_t.real <= 0:
        raise RuntimeError("transported width lost normalizability; linearized flow invalid")
    log_d = math.log(abs(d)) + 1j * traj.winding_wf
    q_c, p_c = traj.final.q.real, traj.final.p.real
    hbar = wp.hbar
    phase_norm = (
        log_norm(wp)
        + 1j * traj.action / hbar
        + 0.5j * (wp.p_center * wp.q_center - p_c * q_c) / hbar
        - 0.5 * log_d
    )
    return EvolvedGaussian(q_c=q_c, p_c=p_c, width_t=width_t, phase_norm=phase_norm, hbar=hbar)


def lwpd_validity_overlap(
    wp: WavePacketParams,
    t: float,
    sys_params,
    opts: IntegratorOptions | None = None,
    n_samples: int = 200_000,
    seed: int = 0,
) -> float:
    """Overlap of the classically transported Wigner density with the linearized one.

    Monte-Carlo estimate normalized to unity at t = 0 (identical samples
    cancel the normalization exactly there); its decay from one flags the
    breakdown of single-Gaussian propagation.
    """
    wf0 = wigner_matrix(wp)
    rng = np.random.default_rng(seed)
    p0, q0 = wigner_sample(wf0, n_samples, rng)
    denom = float(np.mean(wigner_eval(p0, q0, wf0)))
    if t == 0.0:
        return 1.0
    qf, pf, status, _tr = propagate_flow_batch(
        q0.astype(complex), p0.astype(complex), t, sys_params, opts
    )
    ok = status == 0
    gauss = lwpd_propagate(wp, t, sys_params, opts)
    wf_t = gauss.wigner_form()
    vals = np.zeros(n_samples)
    vals[ok] = wigner_eval(pf[ok].real, qf[ok].real, wf_t)
    return float(np.mean(vals) / denom)


@dataclass(frozen=True)
class OffcenterTable:
    x: np.ndarray
    psi: np.ndarray
    skipped: tuple  # (x, foliation label, reason) diagnostics


def offcenter_sum(
    fols: FoliationSet,
    x_grid,
    t: float,
    wp: WavePacketParams,
    sys_params,
    opts: IntegratorOptions | None = None,
    merge_radius: float | None = None,
) -> OffcenterTable:
    """Off-center real-trajectory wave function.

    For each pathway covering x, the full exponent is expanded to second
    order about the real reference hitting x; the linear term (manifold
    momentum mismatch of the reference) is kept and the Gaussian integral
    done in closed form. Expansions predicting the same stationary point
    are degenerate descriptions of one integrand peak and are merged;
    references whose quadratic form has no decaying direction are skipped
    with a diagnostic.
    """
    from .wigner import NotCoveringError, select_reference

    opts = opts or IntegratorOptions()
    if merge_radius is None:
        merge_radius = 0.25 * wp.sigma_q
    hbar = wp.hbar
    b = complex(wp.width)
    xs = np.asarray(x_grid, dtype=float)
    psi = np.zeros(len(xs), dtype=complex)
    skipped = []
    if t == 0.0:
        return OffcenterTable(x=xs, psi=wavepacket_eval(xs, wp), skipped=())
    evolved = fols.evolved
    for i, x in enumerate(xs):
        expansions = []
        for fol in fols.foliations:
            if not fol.covers(float(x)):
                continue
            try:
                ref = select_reference(fol, evolved, float(x), wp=wp)
            except NotCoveringError:
                continue
            traj = ref.traj
            if abs(traj.m21) == 0.0:
                skipped.append((float(x), fol.label, "degenerate M21"))
                continue
            d = traj.d_wf(b)
            g1 = 1j * ((wp.p_center + 1j * b * (ref.q0 - wp.q_center)) - ref.p0) / hbar
            g2 = -b / hbar + 1j * traj.m22 / (hbar * traj.m21)
            if (-g2).real <= 0.0:
                skipped.append((float(x), fol.label, "non-decaying quadratic form"))
                continue
            u_star = ref.q0 - g1 / g2
            amp = (
                math.exp(log_norm(wp))
                * abs(d) ** -0.5
                * cmath.exp(-0.5j * traj.winding_wf)
                * cmath.exp(
                    complex(phase_exponent(ref.q0, wp)) + 1j * traj.action / hbar - g1 * g1 / (2.0 * g2)
                )
            )
            expansions.append((u_star, amp))
        kept = []
        for u_star, amp in expansions:
            if any(abs(u_star - u2) < merge_radius for u2, _ in kept):
                continue
            kept.append((u_star, amp))
        psi[i] = sum(amp for _, amp in kept)
    return OffcenterTable(x=xs, psi=psi, skipped=tuple(skipped))


def _overlap_reference(fol, fols: FoliationSet, wp_bra: WavePacketParams, wp, sys_params):
    """Pathway reference minimizing the bra-manifold residual of its endpoint."""
    evolved = fols.evolved
    batch = evolved.batch
    theta = evolved.theta
    two_pi = 2.0 * math.pi
    best = None
    for piece in fol.pieces:
        n = len(theta)
        k_lo = int(np.ceil(piece.theta_lo / (two_pi / n)))
        k_hi = int(np.floor(piece.theta_hi / (two_pi / n)))
        idx = np.arange(k_lo, k_hi + 1) % n
        if len(idx) == 0:
            continue
        res = np.abs(
            complex(wp_bra.width).conjugate() * (batch.qf[idx] - wp_bra.q_center)
            - 1j * (batch.pf[idx] - wp_bra.p_center)
        )
        j = int(np.argmin(res))
        if best is None or res[j] < best[0]:
            best = (res[j], int(idx[j]))
    if best is None:
        return None
    j = best[1]
    traj = batch.result(j)
    return ReferencePoint(
        theta=float(theta[j]), q0=float(batch.q0[j].real), p0=float(batch.p0[j].real),
        traj=traj, foliation_label=fol.label,
    )


def overlap_semiclassical(
    wp_bra: WavePacketParams,
    fols: FoliationSet,
    t: float,
    wp: WavePacketParams,
    sys_params,
    opts: IntegratorOptions | None = None,
    newton: NewtonOptions | None = None,
    relevance_cutoff: float = RELEVANCE_CUTOFF,
):
    """Semiclassical transport coefficient <phi_b | phi_a(t)>.

    Seeds the overlap boundary value problem from one reference per
    pathway (the member whose endpoint is closest to the bra manifold),
    sums the closed-form Gaussian result over deduplicated saddles:

        A_k = sqrt(2 pi hbar) [dF/du]^(-1/2) exp(Phi_k)

    with dF/du the overlap Jacobian on its transported branch. Returns
    (value, saddles, contributions).
    """
    opts = opts or IntegratorOptions()
    newton = newton or NewtonOptions()
    target = OverlapTarget(wp_bra)
    b = complex(wp.width)
    bb = complex(wp_bra.width).conjugate()
    candidates = []
    for fol in fols.foliations:
        ref = _overlap_reference(fol, fols, wp_bra, wp, sys_params)
        if ref is None:
            continue
        traj = ref.traj
        f_ref = dual_residual(traj.final, wp_bra)
        r_ket = ket_residual(ComplexPhasePoint(complex(ref.q0), complex(ref.p0)), wp)
        d_ov = traj.d_ov(b, wp_bra.width)
        du = -(f_ref + (bb * traj.m21 - 1j * traj.m11) * 1j * r_ket) / d_ov
        report = newton_search(complex(ref.q0) + du, target, t, wp, sys_params, opts, newton)
        if report.converged:
            candidates.append((report.u, report.traj, ref, fol.label))
    saddles = []
    for u0, traj, ref, label in candidates:
        if any(abs(u0 - s.u0) < newton.dedup_radius for s in saddles):
            continue
        theta = branch_theta_from_reference(ref, u0, target, t, wp, sys_params, opts)
        saddles.append(make_saddle(u0, traj, target, wp, theta, "exposed", foliation_label=label))
    contribs = []
    for s in saddles:
        pref = math.sqrt(2.0 * math.pi * wp.hbar) * s.prefactor(wp)
        contribs.append(Contribution(exponent=s.exponent, prefactor=pref, label=s.foliation_label))
    if not contribs:
        return 0.0 + 0.0j, saddles, []
    vmax = max(abs(c.value) for c in contribs)
    total = sum(c.value for c in contribs if abs(c.value) >= relevance_cutoff * vmax)
    return total, saddles, contribs
