"""Saddle families under final-position continuation, caustics, and Stokes exclusion.

Starting from the maximal exposed set (anchor position x = 0), each saddle
is followed across a grid of final positions using the previous saddle as
the Newton seed with a first-order predictor. Exposure is re-tested at
every sample by fresh real-seeded searches, so the exposed/hidden boundary
is an output. Near-coalescences of two families (avoided crossings) mark
caustics; the Stokes rule excludes, beyond the crossing of the real parts
of the two action-like exponents, the member whose contribution would grow
exponentially into the forbidden region.

Hidden samples enter wave function assembly only when a resolved Stokes
decision validates them; for an unresolved pair both members stay included
inside the caustic window (where they remain bounded) and are dropped with
a diagnostic beyond it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import propagate_flow_batch
from .params import IntegratorOptions, NewtonOptions, WavePacketParams
from .saddles import (
    ExposureTester,
    Saddle,
    WavefunctionTarget,
    make_saddle,
    newton_search,
)
from .wigner import FoliationSet

__all__ = [
    "FamilySample",
    "SaddleFamily",
    "CausticEvent",
    "StokesDecision",
    "SingularityMap",
    "sweep_saddles",
    "detect_caustic",
    "stokes_filter",
    "run_stokes_analysis",
    "grid_singularity_map",
    "classical_zone_check",
]


@dataclass
class FamilySample:
    """One continuation sample of a saddle family."""

    x: float
    u0: complex
    action: complex
    exponent: complex
    action_like: complex
    denom: complex
    theta: float
    exposed: bool
    stokes_excluded: bool = False
    hidden_validated: bool = False
    caustic_on_path: bool = False

    @property
    def contribution(self) -> complex:
        return abs(self.denom) ** -0.5 * np.exp(-0.5j * self.theta) * np.exp(self.exponent)


@dataclass
class SaddleFamily:
    """An anchor saddle and its continuation samples over final position."""

    label: int
    anchor: Saddle
    samples: dict = field(default_factory=dict)  # round(x, 9) -> FamilySample
    terminated: dict = field(default_factory=dict)  # direction -> last good x
    caustics: list = field(default_factory=list)  # StokesDecision records involving this family

    @staticmethod
    def key(x: float) -> float:
        return round(float(x), 9)

    @property
    def xs(self) -> np.ndarray:
        return np.array(sorted(self.samples.keys()))

    def at(self, x: float) -> FamilySample | None:
        return self.samples.get(self.key(x))

    def exposure_flips(self) -> list[tuple[float, float]]:
        xs = self.xs
        flips = []
        for a, b in zip(xs[:-1], xs[1:]):
            if self.samples[a].exposed != self.samples[b].exposed:
                flips.append((float(a), float(b)))
        return flips


def _sample_from(saddle_u, traj, target, wp, theta, exposed, x) -> FamilySample:
    s = make_saddle(saddle_u, traj, target, wp, theta, "exposed" if exposed else "hidden")
    return FamilySample(
        x=float(x),
        u0=saddle_u,
        action=s.action,
        exponent=s.exponent,
        action_like=s.action_like,
        denom=target.denominator(traj, wp),
        theta=theta,
        exposed=exposed,
        caustic_on_path=s.caustic_on_path,
    )


def _advance(
    u_prev,
    d_prev,
    theta_prev,
    x_prev,
    x,
    t,
    wp,
    sys_params,
    opts,
    newton,
    depth,
    max_depth,
):
    """One continuation move x_prev -> x with adaptive halving.

    Returns (u, traj, denom, theta) or None on terminal failure. The
    predictor is u + dx/D from the converged Jacobian; acceptance demands
    Newton convergence, a bounded jump in u, and a resolvable rotation of
    the prefactor denominator so the branch argument stays continuous.
    """
    dx = x - x_prev
    newton = replace(newton, max_iter=min(newton.max_iter, 12))
    clip = newton.clip_for(wp)
    pred = dx / d_prev
    if abs(pred) > clip:
        pred *= clip / abs(pred)
    seed = u_prev + pred
    report = newton_search(seed, WavefunctionTarget(x), t, wp, sys_params, opts, newton)
    if report.converged:
        d_new = report.traj.d_wf(wp.width)
        ratio = d_new * d_prev.conjugate()
        dth = math.atan2(ratio.imag, ratio.real)
        if abs(dth) <= 0.5 and abs(report.u - u_prev) <= max(2.0 * abs(pred), clip):
            return report.u, report.traj, d_new, theta_prev + dth
    if depth >= max_depth:
        return None
    xm = 0.5 * (x_prev + x)
    first = _advance(u_prev, d_prev, theta_prev, x_prev, xm, t, wp, sys_params, opts, newton, depth + 1, max_depth)
    if first is None:
        return None
    u_m, _traj_m, d_m, th_m = first
    return _advance(u_m, d_m, th_m, xm, x, t, wp, sys_params, opts, newton, depth + 1, max_depth)


def sweep_saddles(
    anchors: list[Saddle],
    fols: FoliationSet,
    x_grid: np.ndarray,
    t: float,
    wp: WavePacketParams,
    sys_params,
    opts: IntegratorOptions | None = None,
    newton: NewtonOptions | None = None,
    exposure_seeds: int = 5,
    max_depth: int = 6,
) -> list[SaddleFamily]:
    """Continue every anchor saddle over the final-position grid.

    The grid must contain the anchor position. Exposure is re-decided at
    each grid sample by a fresh batch of real-seeded searches from the
    family's own foliation, making the exposed-to-hidden transition an
    observed quantity rather than an assumption.
    """
    opts = opts or IntegratorOptions()
    newton = newton or NewtonOptions()
    x_grid = np.asarray(sorted(float(x) for x in x_grid))
    families = []
    for anchor in anchors:
        x0 = float(anchor.target.x)
        fam = SaddleFamily(label=anchor.foliation_label, anchor=anchor)
        fol = fols.by_label(anchor.foliation_label)
        tester = ExposureTester(fol, fols, t, wp, sys_params, opts, newton, n_seeds=exposure_seeds)
        d0 = anchor.target.denominator(anchor.traj, wp)
        fam.samples[fam.key(x0)] = _sample_from(
            anchor.u0, anchor.traj, anchor.target, wp, anchor.theta, True, x0
        )
        for direction in (-1, +1):
            if direction < 0:
                xs = x_grid[x_grid < x0][::-1]
            else:
                xs = x_grid[x_grid > x0]
            u, d, th = anchor.u0, d0, anchor.theta
            x_prev = x0
            for x in xs:
                step = _advance(u, d, th, x_prev, float(x), t, wp, sys_params, opts, newton, 0, max_depth)
                if step is None:
                    fam.terminated[direction] = x_prev
                    break
                u, traj, d, th = step
                target = WavefunctionTarget(float(x))
                exposed = tester.check(u, float(x))
                fam.samples[fam.key(x)] = _sample_from(u, traj, target, wp, th, exposed, float(x))
                x_prev = float(x)
        families.append(fam)
    return families


@dataclass(frozen=True)
class CausticEvent:
    """Avoided crossing of two saddle families."""

    x_c: float
    gap: float
    forbidden_direction: int  # +1: forbidden side is x > x_c, -1: x < x_c


def detect_caustic(
    f1: SaddleFamily,
    f2: SaddleFamily,
    gap_max: float = 0.1,
    flip_window: float = 1.0,
) -> CausticEvent | None:
    """Near-coalescence of two families with exposure flipping across it.

    Scans the common sample grid for an interior local minimum of
    |u1(x) - u2(x)| below gap_max such that both families flip exposure
    within flip_window of it. The returned gap is strictly positive for
    the avoided crossings this system produces.
    """
    common = sorted(set(f1.samples.keys()) & set(f2.samples.keys()))
    if len(common) < 3:
        return None
    xs = np.array(common)
    gaps = np.array([abs(f1.samples[x].u0 - f2.samples[x].u0) for x in common])
    best = None
    for i in range(1, len(xs) - 1):
        if gaps[i] <= gaps[i - 1] and gaps[i] <= gaps[i + 1] and gaps[i] < gap_max:
            if best is None or gaps[i] < best[1]:
                best = (float(xs[i]), float(gaps[i]))
    if best is None:
        return None
    x_c, gap = best

    def flips_near(fam):
        return [fl for fl in fam.exposure_flips() if min(abs(fl[0] - x_c), abs(fl[1] - x_c)) <= flip_window]

    fl1, fl2 = flips_near(f1), flips_near(f2)
    if not fl1 or not fl2:
        return None
    # forbidden side: where the families sit hidden next to the caustic
    after = [x for x in common if x > x_c]
    hidden_after = sum(
        1 for x in after[:5] if not (f1.samples[x].exposed or f2.samples[x].exposed)
    )
    before = [x for x in common if x < x_c][-5:]
    hidden_before = sum(
        1 for x in before if not (f1.samples[x].exposed or f2.samples[x].exposed)
    )
    direction = +1 if hidden_after >= hidden_before else -1
    return CausticEvent(x_c=x_c, gap=gap, forbidden_direction=direction)


@dataclass(frozen=True)
class StokesDecision:
    """Outcome of the Stokes rule at one caustic."""

    resolved: bool
    x_c: float
    gap: float
    forbidden_direction: int
    x_cross: float | None = None
    kept_label: int | None = None
    excluded_label: int | None = None


def stokes_filter(
    f1: SaddleFamily,
    f2: SaddleFamily,
    event: CausticEvent,
    search_window: float = 1.5,
    slope_samples: int = 6,
) -> StokesDecision:
    """Apply the Stokes exclusion rule to a caustic pair.

    Locates the crossing of the real parts of the two action-like
    exponents near the caustic, then excludes beyond it (forbidden side)
    the family whose imaginary part decreases moving away from the caustic
    (exponentially growing contribution) and keeps the decaying one. With
    no crossing found the pair is left unresolved: both stay included
    inside the caustic window and both are dropped beyond it, flagged.
    """
    common = sorted(set(f1.samples.keys()) & set(f2.samples.keys()))
    xs = np.array(common)
    near = np.abs(xs - event.x_c) <= search_window
    xs_near = xs[near]
    rediff = np.array(
        [(f1.samples[x].action_like - f2.samples[x].action_like).real for x in xs_near]
    )
    x_cross = None
    sign_change = np.where(np.sign(rediff[:-1]) * np.sign(rediff[1:]) < 0)[0]
    if len(sign_change):
        # the crossing nearest the caustic
        i = sign_change[np.argmin(np.abs(0.5 * (xs_near[sign_change] + xs_near[sign_change + 1]) - event.x_c))]
        a, b = xs_near[i], xs_near[i + 1]
        fa, fb = rediff[i], rediff[i + 1]
        x_cross = float(a - fa * (b - a) / (fb - fa))

    d = event.forbidden_direction
    if x_cross is None:
        window = search_window
        for fam in (f1, f2):
            for x in fam.samples:
                s = fam.samples[x]
                if not s.exposed and d * (x - event.x_c) > 0 and abs(x - event.x_c) <= window:
                    s.hidden_validated = True
        return StokesDecision(False, event.x_c, event.gap, d)

    beyond = [x for x in common if d * (x - x_cross) > 0]
    beyond.sort(key=lambda x: d * (x - x_cross))
    probe = beyond[: max(2, slope_samples)]
    d_im1 = f1.samples[probe[-1]].action_like.imag - f1.samples[probe[0]].action_like.imag
    d_im2 = f2.samples[probe[-1]].action_like.imag - f2.samples[probe[0]].action_like.imag
    loser, keeper = (f1, f2) if d_im1 < d_im2 else (f2, f1)
    for x in beyond:
        sl = loser.samples[x]
        sl.stokes_excluded = True
        sl.hidden_validated = True
        sk = keeper.samples[x]
        sk.hidden_validated = True
    decision = StokesDecision(
        True, event.x_c, event.gap, d, x_cross, kept_label=keeper.label, excluded_label=loser.label
    )
    f1.caustics.append(decision)
    f2.caustics.append(decision)
    return decision


def run_stokes_analysis(
    families: list[SaddleFamily],
    gap_max: float = 0.1,
    flip_window: float = 1.0,
) -> list[StokesDecision]:
    """Detect caustics among all family pairs and apply the Stokes rule to each."""
    decisions = []
    n = len(families)
    for i in range(n):
        for j in range(i + 1, n):
            event = detect_caustic(families[i], families[j], gap_max, flip_window)
            if event is not None:
                decisions.append(stokes_filter(families[i], families[j], event))
    return decisions


@dataclass(frozen=True)
class SingularityMap:
    """Raster of trajectory fate over manifold initial conditions.

    status[i, j] is 0 where the trajectory from u = re[j] + i im[i] reached
    the final time, nonzero where it blew up (kernel status codes);
    re_xt holds Re of the final position, NaN on singular cells.
    """

    re_grid: np.ndarray
    im_grid: np.ndarray
    status: np.ndarray
    re_xt: np.ndarray
    t: float

    @property
    def n_singular(self) -> int:
        return int(np.count_nonzero(self.status))

    def contains(self, u: complex) -> bool:
        return (
            self.re_grid[0] <= u.real <= self.re_grid[-1]
            and self.im_grid[0] <= u.imag <= self.im_grid[-1]
        )


def grid_singularity_map(
    wp: WavePacketParams,
    sys_params,
    t: float,
    re_range: tuple[float, float] = (-8.0, 8.0),
    im_range: tuple[float, float] = (-1.0, 1.0),
    resolution: tuple[int, int] = (1000, 1000),
    opts: IntegratorOptions | None = None,
) -> SingularityMap:
    """Propagate the manifold lift of every grid cell and record its fate."""
    opts = opts or IntegratorOptions()
    n_re, n_im = resolution
    if n_re < 2 or n_im < 2:
        raise ValueError("resolution must be at least 2x2")
    re = np.linspace(re_range[0], re_range[1], n_re)
    im = np.linspace(im_range[0], im_range[1], n_im)
    uu = re[None, :] + 1j * im[:, None]
    u_flat = uu.ravel()
    p_flat = wp.p_center + 1j * complex(wp.width) * (u_flat - wp.q_center)
    qf, _pf, status, _tr = propagate_flow_batch(u_flat, p_flat, t, sys_params, opts)
    status = status.reshape(n_im, n_re)
    re_xt = qf.real.reshape(n_im, n_re).copy()
    re_xt[status != 0] = np.nan
    return SingularityMap(re_grid=re, im_grid=im, status=status, re_xt=re_xt, t=t)


def classical_zone_check(u0s, smap: SingularityMap) -> list[bool | None]:
    """Segment test for classical-zone membership.

    True when the straight vertical segment from the saddle's manifold
    coordinate to the real axis crosses no singular cell; None when the
    coordinate lies outside the map window (indeterminate, reported by the
    caller).
    """
    out = []
    for u in np.atleast_1d(np.asarray(u0s, dtype=complex)):
        if not smap.contains(u):
            out.append(None)
            continue
        j = int(np.argmin(np.abs(smap.re_grid - u.real)))
        lo, hi = sorted((0.0, u.imag))
        rows = np.where((smap.im_grid >= lo) & (smap.im_grid <= hi))[0]
        if len(rows) == 0:
            rows = np.array([int(np.argmin(np.abs(smap.im_grid - u.imag)))])
        out.append(bool(np.all(smap.status[rows, j] == 0)))
    return out
