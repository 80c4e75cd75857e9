"""Parameter records shared across the package.

Default numbers reproduce the standard demonstration setup: a Gaussian
wave packet centered at (q, p) = (0, 20) with width 32 evolving under the
pure quartic oscillator H = p^2/2m + lam*q^4 with hbar = m = 1 and
lam = 0.05.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from scipy.special import gamma as _gamma

__all__ = [
    "WavePacketParams",
    "SystemParams",
    "HarmonicParams",
    "IntegratorOptions",
    "NewtonOptions",
    "QUARTIC_KIND",
    "HARMONIC_KIND",
    "default_packet",
    "default_system",
    "central_period",
    "period_for_energy",
]

QUARTIC_KIND = 0
HARMONIC_KIND = 1

# int_0^1 ds / sqrt(1 - s^4) in closed form
_QUARTIC_QUARTER_INTEGRAL = math.sqrt(math.pi) * _gamma(1.25) / _gamma(0.75)


@dataclass(frozen=True)
class WavePacketParams:
    """Gaussian wave packet phi(x) ~ exp[-b/(2 hbar) (x-q)^2 + i p (x-q)/hbar + i p q/(2 hbar)].

    The width b may be complex (chirped packet); normalizability requires
    Re(b) > 0. Coherent-state quadrature conventions are obtained with
    width = 1 and hbar set to the effective quadrature constant.
    """

    q_center: float = 0.0
    p_center: float = 20.0
    width: complex = 32.0
    hbar: float = 1.0

    def __post_init__(self):
        if complex(self.width).real <= 0.0:
            raise ValueError(f"Re(width) must be positive, got {self.width}")
        if self.hbar <= 0.0:
            raise ValueError(f"hbar must be positive, got {self.hbar}")

    @property
    def sigma_q(self) -> float:
        """Position standard deviation sqrt(hbar / (2 Re b))."""
        return math.sqrt(self.hbar / (2.0 * complex(self.width).real))

    @property
    def sigma_p(self) -> float:
        """Momentum standard deviation, = sqrt(hbar Re b / 2) for unchirped b."""
        c = complex(self.width).real
        d = complex(self.width).imag
        return math.sqrt(self.hbar * (c + d * d / c) / 2.0)


@dataclass(frozen=True)
class SystemParams:
    """Pure quartic oscillator H(p, q) = p^2/(2m) + lam q^4."""

    lam: float = 0.05
    mass: float = 1.0
    hbar: float = 1.0
    kind: int = field(default=QUARTIC_KIND, init=False, repr=False)
    omega: float = field(default=0.0, init=False, repr=False)

    def __post_init__(self):
        if self.lam <= 0.0:
            raise ValueError("lam must be positive")
        if self.mass <= 0.0:
            raise ValueError("mass must be positive")

    def potential(self, q):
        return self.lam * q**4


@dataclass(frozen=True)
class HarmonicParams:
    """Harmonic oscillator H = p^2/(2m) + m omega^2 q^2 / 2.

    Exists purely as a test oracle: Gaussian propagation is exact for any
    quadratic Hamiltonian, which pins down every prefactor and branch
    convention in the semiclassical assembly.
    """

    omega: float = 1.0
    mass: float = 1.0
    hbar: float = 1.0
    kind: int = field(default=HARMONIC_KIND, init=False, repr=False)
    lam: float = field(default=0.0, init=False, repr=False)

    def potential(self, q):
        return 0.5 * self.mass * self.omega**2 * q**2


@dataclass(frozen=True)
class IntegratorOptions:
    """Adaptive Runge-Kutta controls for the complexified flow."""

    rel_tol: float = 1e-11
    abs_tol: float = 1e-12
    max_step: float = 0.02
    blowup_threshold: float = 1e8
    min_step: float = 1e-13
    max_steps: int = 1_000_000
    # largest allowed per-step rotation of the tracked prefactor
    # denominators; keeps square-root branch winding resolvable
    max_rotation: float = 0.5

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_step <= 0:
            raise ValueError("max_step must be positive")


@dataclass(frozen=True)
class NewtonOptions:
    """Controls for the one-complex-variable Newton saddle search."""

    tol: float = 1e-10
    max_iter: int = 40
    step_clip: float | None = None  # None: 0.5 * sigma_q of the wave packet
    dedup_radius: float = 1e-6

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")

    def clip_for(self, wp: WavePacketParams) -> float:
        return self.step_clip if self.step_clip is not None else 0.5 * wp.sigma_q


def default_packet() -> WavePacketParams:
    return WavePacketParams()


def default_system() -> SystemParams:
    return SystemParams()


def period_for_energy(sys_params, energy: float) -> float:
    """Period of the real closed orbit at the given energy.

    Quartic: tau(E) = 4 (E/lam)^{1/4} sqrt(m/(2E)) * int_0^1 ds/sqrt(1-s^4),
    evaluated in closed form through Gamma functions. Harmonic: 2 pi/omega.
    """
    if sys_params.kind == HARMONIC_KIND:
        return 2.0 * math.pi / sys_params.omega
    if energy <= 0.0:
        raise ValueError("quartic period requires positive energy")
    q_max = (energy / sys_params.lam) ** 0.25
    return 4.0 * q_max * math.sqrt(sys_params.mass / (2.0 * energy)) * _QUARTIC_QUARTER_INTEGRAL


def central_period(wp: WavePacketParams, sys_params) -> float:
    """Period of the real trajectory launched from the packet centroid."""
    e0 = wp.p_center**2 / (2.0 * sys_params.mass) + sys_params.potential(wp.q_center)
    return period_for_energy(sys_params, e0)
