"""Wave packets, their Lagrangian manifolds, and initial-state exponents.

The ket manifold of a packet with parameters (q_a, p_a, b) is the complex
line b (q - q_a) + i (p - p_a) = 0; the bra (dual) manifold replaces b by
its conjugate and flips the sign of the momentum term. Every boundary
value problem in this package is a root find in the single manifold
coordinate u (complex position), with the momentum always dependent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import WavePacketParams

__all__ = [
    "ComplexPhasePoint",
    "ManifoldCoordinate",
    "manifold_lift",
    "ket_residual",
    "dual_residual",
    "phase_exponent",
    "log_norm",
    "initial_exponent",
    "dual_exponent",
    "wavepacket_eval",
    "seed_from_phase_point",
    "gaussian_overlap",
]


@dataclass(frozen=True)
class ComplexPhasePoint:
    """A point (q, p) in complexified phase space."""

    q: complex
    p: complex

    def is_finite(self) -> bool:
        return bool(np.isfinite([self.q.real, self.q.imag, self.p.real, self.p.imag]).all())


# The manifold coordinate is just a complex number; the alias documents intent.
ManifoldCoordinate = complex


def manifold_lift(u: complex, wp: WavePacketParams) -> ComplexPhasePoint:
    """Lift a manifold coordinate to the ket manifold: (q, p) = (u, p_a + i b (u - q_a))."""
    u = complex(u)
    p = wp.p_center + 1j * wp.width * (u - wp.q_center)
    return ComplexPhasePoint(q=u, p=p)


def ket_residual(pt: ComplexPhasePoint, wp: WavePacketParams) -> complex:
    """b (q - q_a) + i (p - p_a); zero iff pt lies on the ket manifold."""
    return wp.width * (pt.q - wp.q_center) + 1j * (pt.p - wp.p_center)


def dual_residual(pt: ComplexPhasePoint, wp_bra: WavePacketParams) -> complex:
    """conj(b) (q - q_b) - i (p - p_b); zero iff pt lies on the bra manifold."""
    b = complex(wp_bra.width)
    return b.conjugate() * (pt.q - wp_bra.q_center) - 1j * (pt.p - wp_bra.p_center)


def phase_exponent(u, wp: WavePacketParams):
    """Exponent of the packet without the normalization constant.

    chi(u) = -b/(2 hbar) (u - q_a)^2 + i p_a (u - q_a)/hbar + i p_a q_a/(2 hbar),
    analytically continued to complex argument. Accepts arrays.
    """
    du = u - wp.q_center
    return (
        -(wp.width / (2.0 * wp.hbar)) * du * du
        + (1j * wp.p_center / wp.hbar) * du
        + 0.5j * wp.p_center * wp.q_center / wp.hbar
    )


def log_norm(wp: WavePacketParams) -> float:
    """Principal-branch log of the normalization constant, (1/4) log[(b + b*)/(2 pi hbar)].

    Re(b) > 0 keeps the argument strictly positive, so there is no branch
    ambiguity.
    """
    b = complex(wp.width)
    return 0.25 * math.log((b + b.conjugate()).real / (2.0 * math.pi * wp.hbar))


def initial_exponent(u, wp: WavePacketParams):
    """log phi_a(u) including normalization; exp of this equals wavepacket_eval on real u."""
    return phase_exponent(u, wp) + log_norm(wp)


def dual_exponent(z, wp_bra: WavePacketParams):
    """Analytic continuation of log conj(phi_b)(x) to complex argument z.

    For real x this is the logarithm of the conjugated packet; the
    continuation is what enters overlap saddle exponents at the complex
    final position.
    """
    b = complex(wp_bra.width).conjugate()
    dz = z - wp_bra.q_center
    return (
        -(b / (2.0 * wp_bra.hbar)) * dz * dz
        - (1j * wp_bra.p_center / wp_bra.hbar) * dz
        - 0.5j * wp_bra.p_center * wp_bra.q_center / wp_bra.hbar
        + log_norm(wp_bra)
    )


def wavepacket_eval(x, wp: WavePacketParams):
    """phi_a(x) on real (or complex) positions; vectorized."""
    return np.exp(initial_exponent(x, wp))


def seed_from_phase_point(q_r: float, p_r: float, wp: WavePacketParams) -> complex:
    """Manifold coordinate whose phase point has real parts (q_r, p_r).

    Writing u = q_r + i e and b = c + i d, solving Re p(u) = p_r gives
    e = (p_a - p_r - d (q_r - q_a)) / c. Used to place real trajectories
    onto the complex manifold before a Newton search.
    """
    b = complex(wp.width)
    e = (wp.p_center - p_r - b.imag * (q_r - wp.q_center)) / b.real
    return complex(q_r, e)


def gaussian_overlap(wp_bra: WavePacketParams, wp_ket: WavePacketParams) -> complex:
    """Closed-form <phi_b | phi_a> of two normalized packets at time zero.

    Evaluated as a single complex Gaussian integral; packets must share hbar.
    """
    if wp_bra.hbar != wp_ket.hbar:
        raise ValueError("packets must share hbar")
    hbar = wp_ket.hbar
    bb = complex(wp_bra.width).conjugate()
    ba = complex(wp_ket.width)
    # integrand exponent: dual_exponent(x) + initial_exponent(x) = -A x^2/2 + B x + C
    a_coef = (bb + ba) / hbar
    b_coef = (
        bb * wp_bra.q_center - 1j * wp_bra.p_center + ba * wp_ket.q_center + 1j * wp_ket.p_center
    ) / hbar
    c_coef = (
        -0.5 * bb * wp_bra.q_center**2
        + 0.5j * wp_bra.p_center * wp_bra.q_center
        - 0.5 * ba * wp_ket.q_center**2
        + 0.5j * wp_ket.p_center * wp_ket.q_center
    ) / hbar
    norm = math.exp(log_norm(wp_bra) + log_norm(wp_ket))
    return norm * np.sqrt(2.0 * np.pi / a_coef) * np.exp(b_coef**2 / (2.0 * a_coef) + c_coef)
