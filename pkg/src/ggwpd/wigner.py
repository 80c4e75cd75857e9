"""Wigner density of the initial packet and its classically evolved contours.

The evolved sigma-contour of the Wigner density folds into a spiral whose
monotone final-position branches delineate the classical transport
pathways. Segmentation happens in two stages: first the closed contour is
cut at the (refined) folds of q_t(theta) into monotone pieces, then pieces
are grouped into pathways. The two edges of one spiral arm traverse the
same energy band and arrive at matching phase-space points, so they are
recognized and merged; distinct pathways arrive with incompatible momenta
and stay separate. Pathway labels count energy bands from slow to fast,
which reproduces the conventional numbering of the quartic-oscillator
foliations (the pair converting to hidden near x = -10 at t = 3 tau is
labeled 8 and 9, the next pair from larger contours 10 and 11).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .dynamics import BatchTrajectories, TrajectoryResult, propagate, propagate_batch, propagate_flow_batch
from .params import IntegratorOptions, WavePacketParams
from .wavepacket import ComplexPhasePoint

__all__ = [
    "WignerForm",
    "SigmaContour",
    "EvolvedContour",
    "ContourPiece",
    "Foliation",
    "FoliationSet",
    "ReferencePoint",
    "UnresolvedFoldError",
    "NotCoveringError",
    "wigner_matrix",
    "wigner_eval",
    "wigner_sample",
    "sigma_contour",
    "propagate_contour",
    "segment_foliations",
    "select_reference",
    "enclosed_area",
]


class UnresolvedFoldError(RuntimeError):
    """Contour sampling too coarse to separate adjacent folds."""


class NotCoveringError(ValueError):
    """Requested final position lies outside a foliation's covered range."""


@dataclass(frozen=True)
class WignerForm:
    """Quadratic form of the packet's Wigner density.

    W(p, q) = (1/pi hbar) exp[-(dp, dq) . (A/hbar) . (dp, dq)^T] with A the
    real symmetric unit-determinant matrix determined by the packet width.
    """

    a_pp: float
    a_pq: float
    a_qq: float
    p_center: float
    q_center: float
    hbar: float

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.a_pp, self.a_pq], [self.a_pq, self.a_qq]])

    def det(self) -> float:
        return self.a_pp * self.a_qq - self.a_pq**2


def wigner_matrix(wp: WavePacketParams) -> WignerForm:
    """A = [[1/c, d/c], [d/c, c + d^2/c]] for width b = c + i d; det A = 1."""
    b = complex(wp.width)
    c, d = b.real, b.imag
    return WignerForm(
        a_pp=1.0 / c,
        a_pq=d / c,
        a_qq=c + d * d / c,
        p_center=wp.p_center,
        q_center=wp.q_center,
        hbar=wp.hbar,
    )


def wigner_eval(p, q, wf: WignerForm):
    """Wigner density at real phase points; vectorized."""
    dp = np.asarray(p) - wf.p_center
    dq = np.asarray(q) - wf.q_center
    quad = wf.a_pp * dp * dp + 2.0 * wf.a_pq * dp * dq + wf.a_qq * dq * dq
    return np.exp(-quad / wf.hbar) / (math.pi * wf.hbar)


def wigner_sample(wf: WignerForm, n: int, rng: np.random.Generator):
    """Draw n phase points from the Wigner density (covariance hbar A^{-1} / 2)."""
    cov = 0.5 * wf.hbar * np.linalg.inv(wf.matrix)
    pts = rng.multivariate_normal([wf.p_center, wf.q_center], cov, size=n)
    return pts[:, 0], pts[:, 1]


def _inv_sqrt_2x2(a: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(a)
    return (v * (1.0 / np.sqrt(w))) @ v.T


@dataclass(frozen=True)
class SigmaContour:
    """Closed n-sigma level curve of the Wigner density, counter-clockwise in (q, p)."""

    n_sigma: float
    wf: WignerForm
    theta: np.ndarray
    q0: np.ndarray
    p0: np.ndarray
    _sqrt_gain: np.ndarray = field(repr=False, default=None)

    def point(self, theta):
        """Continuum evaluation of the contour at arbitrary angles."""
        s, c = np.sin(theta), np.cos(theta)
        m = self._sqrt_gain
        dp = m[0, 0] * s + m[0, 1] * c
        dq = m[1, 0] * s + m[1, 1] * c
        return self.wf.q_center + dq, self.wf.p_center + dp

    def energy(self, theta, sys_params):
        q, p = self.point(theta)
        return p**2 / (2.0 * sys_params.mass) + sys_params.potential(q)


def sigma_contour(n_sigma: float, n_points: int, wf: WignerForm) -> SigmaContour:
    """Uniform-angle sampling of the ellipse (dp, dq) A (dp, dq)^T = n_sigma^2 hbar / 2."""
    if n_sigma <= 0:
        raise ValueError("n_sigma must be positive")
    if n_points < 16:
        raise ValueError("need at least 16 contour points")
    r = math.sqrt(n_sigma**2 * wf.hbar / 2.0)
    gain = r * _inv_sqrt_2x2(wf.matrix)
    theta = np.linspace(0.0, 2.0 * math.pi, n_points, endpoint=False)
    contour = SigmaContour(n_sigma=n_sigma, wf=wf, theta=theta, q0=None, p0=None, _sqrt_gain=gain)
    q0, p0 = contour.point(theta)
    object.__setattr__(contour, "q0", q0)
    object.__setattr__(contour, "p0", p0)
    return contour


@dataclass(frozen=True)
class EvolvedContour:
    contour: SigmaContour
    t: float
    batch: BatchTrajectories
    sys_params: object
    opts: IntegratorOptions

    @property
    def theta(self) -> np.ndarray:
        return self.contour.theta

    @property
    def qt(self) -> np.ndarray:
        return self.batch.qf.real

    @property
    def pt(self) -> np.ndarray:
        return self.batch.pf.real

    def qt_at(self, theta) -> float:
        """Final position for an arbitrary contour angle (single propagation)."""
        q0, p0 = self.contour.point(theta)
        qf, _pf, status, _tr = propagate_flow_batch(
            np.array([q0], dtype=complex), np.array([p0], dtype=complex), self.t, self.sys_params, self.opts
        )
        if status[0] != 0:
            raise RuntimeError(f"contour trajectory unexpectedly singular at theta={theta}")
        return float(qf[0].real)


def propagate_contour(contour: SigmaContour, t: float, sys_params, opts: IntegratorOptions | None = None,
                      wp: WavePacketParams | None = None) -> EvolvedContour:
    """Classically evolve every contour point, keeping stability and action data."""
    opts = opts or IntegratorOptions()
    batch = propagate_batch(
        contour.q0.astype(complex), contour.p0.astype(complex), t, sys_params, opts, wp=wp
    )
    if not batch.ok.all():
        bad = int(np.argmax(~batch.ok))
        raise RuntimeError(f"real contour trajectory became singular at theta={contour.theta[bad]}")
    return EvolvedContour(contour=contour, t=t, batch=batch, sys_params=sys_params, opts=opts)


@dataclass(frozen=True)
class ContourPiece:
    """Maximal theta-interval on which the evolved final position is monotone."""

    theta_lo: float  # unwrapped; theta_hi > theta_lo, may exceed 2 pi
    theta_hi: float
    rising: bool
    e_lo: float
    e_hi: float
    qt_lo: float
    qt_hi: float
    arrival_q: float  # final phase point at the piece midpoint of covered range
    arrival_p: float
    launch_p_max: float  # most positive launch momentum on the piece

    @property
    def theta_mid(self) -> float:
        return 0.5 * (self.theta_lo + self.theta_hi)

    def covers(self, x: float) -> bool:
        return self.qt_lo <= x <= self.qt_hi


@dataclass(frozen=True)
class Foliation:
    """One classical transport pathway: one or two contour pieces of an arm."""

    label: int
    pieces: tuple[ContourPiece, ...]

    @property
    def qt_range(self) -> tuple[float, float]:
        return (min(p.qt_lo for p in self.pieces), max(p.qt_hi for p in self.pieces))

    @property
    def e_range(self) -> tuple[float, float]:
        return (min(p.e_lo for p in self.pieces), max(p.e_hi for p in self.pieces))

    def covers(self, x: float) -> bool:
        lo, hi = self.qt_range
        return lo <= x <= hi

    def seed_thetas(self, n: int) -> np.ndarray:
        """n angles spread over the pathway's pieces, piece-proportional."""
        spans = np.array([p.theta_hi - p.theta_lo for p in self.pieces])
        counts = np.maximum(1, np.round(n * spans / spans.sum()).astype(int))
        while counts.sum() > n:
            counts[np.argmax(counts)] -= 1
        out = []
        for piece, c in zip(self.pieces, counts):
            # stay off the folds themselves
            frac = (np.arange(c) + 0.5) / c
            out.append(piece.theta_lo + frac * (piece.theta_hi - piece.theta_lo))
        return np.concatenate(out)


@dataclass(frozen=True)
class FoliationSet:
    foliations: tuple[Foliation, ...]
    evolved: EvolvedContour
    fold_thetas: np.ndarray
    fold_qts: np.ndarray

    def __len__(self) -> int:
        return len(self.foliations)

    def covering(self, x: float) -> list[Foliation]:
        return [f for f in self.foliations if f.covers(x)]

    def by_label(self, label: int) -> Foliation:
        for f in self.foliations:
            if f.label == label:
                return f
        raise KeyError(f"no foliation labeled {label}")


def _refine_fold(evolved: EvolvedContour, th_a: float, th_b: float, maximize: bool, tol: float) -> float:
    """Golden-section extremum search for a fold angle, to theta accuracy tol."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = th_a, th_b
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc = evolved.qt_at(c)
    fd = evolved.qt_at(d)
    sgn = 1.0 if maximize else -1.0
    while (b - a) > tol:
        if sgn * fc > sgn * fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = evolved.qt_at(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = evolved.qt_at(d)
    return 0.5 * (a + b)


def _piece_stats(evolved: EvolvedContour, th_lo: float, th_hi: float, sys_params) -> ContourPiece:
    theta = evolved.theta
    two_pi = 2.0 * math.pi
    n = len(theta)
    # sample indices whose (unwrapped) angle falls inside the piece
    k_lo = int(np.ceil(th_lo / (two_pi / n)))
    k_hi = int(np.floor(th_hi / (two_pi / n)))
    idx = np.arange(k_lo, k_hi + 1)
    qt_ends = [evolved.qt_at(th_lo), evolved.qt_at(th_hi)]
    if len(idx) > 0:
        sel = idx % n
        qts = evolved.qt[sel]
        pts = evolved.pt[sel]
        p0s = evolved.contour.p0[sel]
        energies = evolved.contour.energy(theta[sel], sys_params)
        qt_all = np.concatenate([qts, qt_ends])
    else:
        qts = np.array(qt_ends)
        pts = np.array([np.nan, np.nan])
        p0s = np.array([])
        energies = np.array([])
        qt_all = np.array(qt_ends)
    e_ends = [
        float(evolved.contour.energy(np.array(th_lo), sys_params)),
        float(evolved.contour.energy(np.array(th_hi), sys_params)),
    ]
    e_all = np.concatenate([energies, e_ends]) if energies.size else np.array(e_ends)
    qt_lo, qt_hi = float(qt_all.min()), float(qt_all.max())
    # arrival phase point near the middle of the covered range
    if len(idx) > 0:
        mid = 0.5 * (qt_lo + qt_hi)
        j = int(np.argmin(np.abs(qts - mid)))
        arrival_q, arrival_p = float(qts[j]), float(pts[j])
        launch_p_max = float(p0s.max())
    else:
        arrival_q, arrival_p = float(qt_ends[0]), 0.0
        launch_p_max = float(evolved.contour.point(0.5 * (th_lo + th_hi))[1])
    rising = qt_ends[1] > qt_ends[0]
    return ContourPiece(
        theta_lo=th_lo,
        theta_hi=th_hi,
        rising=bool(rising),
        e_lo=float(e_all.min()),
        e_hi=float(e_all.max()),
        qt_lo=qt_lo,
        qt_hi=qt_hi,
        arrival_q=arrival_q,
        arrival_p=arrival_p,
        launch_p_max=launch_p_max,
    )


def _interval_iou(a: tuple[float, float], b: tuple[float, float]) -> float:
    lo = max(a[0], b[0])
    hi = min(a[1], b[1])
    if hi <= lo:
        return 0.0
    union = max(a[1], b[1]) - min(a[0], b[0])
    return (hi - lo) / union if union > 0 else 0.0


def _same_pathway(p1: ContourPiece, p2: ContourPiece, p_extent: float) -> bool:
    """Two pieces are the edges of one spiral arm.

    Edges traverse matching energy bands with opposite theta-orientation
    and arrive at matching phase-space points; distinct pathways arrive
    with incompatible momenta (the t = 0 ellipse halves are the canonical
    counterexample).
    """
    if p1.rising == p2.rising:
        return False
    if _interval_iou((p1.e_lo, p1.e_hi), (p2.e_lo, p2.e_hi)) < 0.5:
        return False
    if _interval_iou((p1.qt_lo, p1.qt_hi), (p2.qt_lo, p2.qt_hi)) < 0.5:
        return False
    dp = abs(p1.arrival_p - p2.arrival_p)
    tol = 0.5 * max(abs(p1.arrival_p), abs(p2.arrival_p)) + 0.05 * p_extent
    if dp > tol:
        return False
    if p1.arrival_p * p2.arrival_p < -0.01 * p_extent**2:
        return False
    return True


def segment_foliations(
    evolved: EvolvedContour,
    sys_params=None,
    theta_tol: float = 1e-6,
    validate: bool = True,
) -> FoliationSet:
    """Cut the evolved contour at its folds and group the pieces into pathways.

    Folds are located by cyclic sign changes of the sampled final-position
    differences and refined by golden-section search until stable to
    theta_tol. A validation pass propagates every interval midpoint and
    escalates to UnresolvedFoldError if unseen folds emerge, naming the
    theta gap.
    """
    sys_params = sys_params or evolved.sys_params
    theta = evolved.theta
    qt = evolved.qt
    n = len(theta)
    two_pi = 2.0 * math.pi

    if validate:
        mids = theta + (two_pi / n) * 0.5
        q0m, p0m = evolved.contour.point(mids)
        qfm, _pf, status, _tr = propagate_flow_batch(
            q0m.astype(complex), p0m.astype(complex), evolved.t, sys_params, evolved.opts
        )
        if (status != 0).any():
            raise RuntimeError("real contour trajectory became singular during validation")
        merged = np.empty(2 * n)
        merged[0::2] = qt
        merged[1::2] = qfm.real
        d_coarse = np.sign(np.diff(np.concatenate([qt, qt[:1]])))
        d_fine = np.sign(np.diff(np.concatenate([merged, merged[:1]])))
        flips_coarse = int(np.sum(d_coarse != np.roll(d_coarse, 1)))
        flips_fine = int(np.sum(d_fine != np.roll(d_fine, 1)))
        if flips_fine > flips_coarse:
            # locate one offending gap for the diagnostic
            dd = d_fine != np.roll(d_fine, 1)
            j = int(np.argmax(dd))
            gap_lo = theta[(j // 2) % n]
            raise UnresolvedFoldError(
                f"refinement revealed extra folds (coarse {flips_coarse}, fine {flips_fine}); "
                f"increase contour resolution near theta = {gap_lo:.4f} "
                f"(gap width {two_pi / n:.2e})"
            )

    diffs = np.sign(np.diff(np.concatenate([qt, qt[:1]])))
    # fold between segment (i-1, i) and (i, i+1): sample i is a local extremum
    fold_idx = [i for i in range(n) if diffs[i - 1] != diffs[i] and diffs[i - 1] != 0]
    if len(fold_idx) < 2:
        raise UnresolvedFoldError("fewer than two folds found; contour too coarse or t too small")

    fold_thetas = []
    fold_qts = []
    for i in fold_idx:
        th_a = theta[i - 1] if i > 0 else theta[0] - two_pi / n
        th_b = theta[i] + two_pi / n
        maximize = diffs[i - 1] > 0
        th_f = _refine_fold(evolved, th_a, th_b, maximize, theta_tol)
        fold_thetas.append(th_f % two_pi)
        fold_qts.append(evolved.qt_at(th_f))
    order = np.argsort(fold_thetas)
    fold_thetas = np.asarray(fold_thetas)[order]
    fold_qts = np.asarray(fold_qts)[order]

    pieces = []
    for k in range(len(fold_thetas)):
        th_lo = fold_thetas[k]
        th_hi = fold_thetas[(k + 1) % len(fold_thetas)]
        if th_hi <= th_lo:
            th_hi += two_pi
        pieces.append(_piece_stats(evolved, th_lo, th_hi, sys_params))

    # pair arm edges
    p_extent = float(evolved.contour.p0.max() - evolved.contour.p0.min())
    unused = list(range(len(pieces)))
    groups: list[tuple[int, ...]] = []
    while unused:
        i = unused.pop(0)
        partner = None
        best = 0.0
        for j in unused:
            if _same_pathway(pieces[i], pieces[j], p_extent):
                score = _interval_iou(
                    (pieces[i].e_lo, pieces[i].e_hi), (pieces[j].e_lo, pieces[j].e_hi)
                )
                if score > best:
                    best = score
                    partner = j
        if partner is not None:
            unused.remove(partner)
            groups.append((i, partner))
        else:
            groups.append((i,))

    # labels: upward-launched pathways by ascending energy first, then
    # downward-launched ones (only present for very wide contours)
    def sort_key(group):
        members = [pieces[g] for g in group]
        downward = all(p.launch_p_max < 0.0 for p in members)
        e_lo = min(p.e_lo for p in members)
        return (1 if downward else 0, e_lo)

    groups.sort(key=sort_key)
    foliations = tuple(
        Foliation(label=k + 1, pieces=tuple(sorted((pieces[g] for g in group), key=lambda p: p.theta_lo)))
        for k, group in enumerate(groups)
    )
    return FoliationSet(
        foliations=foliations, evolved=evolved, fold_thetas=fold_thetas, fold_qts=fold_qts
    )


@dataclass(frozen=True)
class ReferencePoint:
    """A real trajectory representing one transport pathway at a target position."""

    theta: float
    q0: float
    p0: float
    traj: TrajectoryResult
    foliation_label: int


def select_reference(
    fol: Foliation,
    evolved: EvolvedContour,
    x: float,
    wp: WavePacketParams | None = None,
) -> ReferencePoint:
    """Contour point of the pathway whose final position equals x.

    Uses bracketed root finding on theta inside the first covering piece
    (final position is monotone there). Raises NotCoveringError when x is
    outside the pathway's covered range, which marks the foliation
    inactive at this position.
    """
    piece = next((p for p in fol.pieces if p.covers(x)), None)
    if piece is None:
        lo, hi = fol.qt_range
        raise NotCoveringError(f"x={x} outside foliation {fol.label} range [{lo:.4f}, {hi:.4f}]")
    f = lambda th: evolved.qt_at(th) - x
    f_lo = f(piece.theta_lo)
    f_hi = f(piece.theta_hi)
    if f_lo * f_hi > 0:
        # target sits between the fold and the nearest sample; fall back to the endpoint
        theta_star = piece.theta_lo if abs(f_lo) < abs(f_hi) else piece.theta_hi
    else:
        theta_star = brentq(f, piece.theta_lo, piece.theta_hi, xtol=1e-12)
    q0, p0 = evolved.contour.point(theta_star)
    traj = propagate(
        ComplexPhasePoint(complex(q0), complex(p0)), evolved.t, evolved.sys_params, evolved.opts, wp=wp
    )
    return ReferencePoint(theta=float(theta_star % (2 * math.pi)), q0=float(q0), p0=float(p0),
                          traj=traj, foliation_label=fol.label)


def enclosed_area(q: np.ndarray, p: np.ndarray) -> float:
    """Shoelace area of a closed polygon given by ordered vertex arrays."""
    return 0.5 * abs(float(np.dot(q, np.roll(p, -1)) - np.dot(p, np.roll(q, -1))))
