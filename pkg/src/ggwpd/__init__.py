"""Generalized Gaussian wave packet dynamics for the quartic oscillator.

Complex saddle trajectories of the wave packet boundary value problems:
exposed saddles located from real reference trajectories of the classical
transport pathways, hidden saddles recovered by continuation through
caustics with Stokes-line exclusion, semiclassical wave functions and
transport coefficients, and an exact split-operator quantum reference.
"""

__version__ = "0.1.0"

from .params import (
    HarmonicParams,
    IntegratorOptions,
    NewtonOptions,
    SystemParams,
    WavePacketParams,
    central_period,
    period_for_energy,
)
from .wavepacket import (
    ComplexPhasePoint,
    dual_residual,
    gaussian_overlap,
    initial_exponent,
    ket_residual,
    manifold_lift,
    wavepacket_eval,
)
from .dynamics import (
    TrajectoryResult,
    hamiltonian,
    propagate,
    propagate_batch,
    scale_trajectory,
)
from .wigner import (
    Foliation,
    FoliationSet,
    NotCoveringError,
    UnresolvedFoldError,
    propagate_contour,
    segment_foliations,
    select_reference,
    sigma_contour,
    wigner_eval,
    wigner_matrix,
)
from .saddles import (
    OverlapTarget,
    Saddle,
    WavefunctionTarget,
    bvp_residual_overlap,
    bvp_residual_wavefunction,
    exposure_check,
    find_exposed_saddles,
    newton_search,
    shadowing_check,
)
from .continuation import (
    SaddleFamily,
    SingularityMap,
    classical_zone_check,
    detect_caustic,
    grid_singularity_map,
    run_stokes_analysis,
    stokes_filter,
    sweep_saddles,
)
from .assembly import (
    EvolvedGaussian,
    assemble_wavefunction,
    lwpd_propagate,
    lwpd_validity_overlap,
    offcenter_sum,
    overlap_semiclassical,
    saddle_contribution_wavefunction,
    wavefunction_from_foliations,
)
from .quantum import (
    ComparisonReport,
    GridWavefunction,
    compare_metrics,
    grid_wavefunction,
    overlap_numeric,
    split_operator_propagate,
)
