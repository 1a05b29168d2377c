"""Chord (characteristic) functions of 2D quantum eigenstates and their
semiclassical energy-shell approximations."""

__version__ = "0.1.0"

from .hamiltonian import (
    Chord,
    HamiltonianSpec,
    MassRescaling,
    PhasePoint,
    box_billiard,
    eval_h,
    grad_h,
    mass_rescale,
    nelson,
    polynomial_spec,
    symplectic_matrix,
    wedge,
)
from .eigensolver import (
    Eigenpair,
    GridSpec,
    WavefunctionGrid,
    discretize,
    energy_for_index,
    load_eigenpair,
    solve,
    solve_window,
    store_eigenpair,
    suggest_domain,
)
from .states import box_eigenstate, gaussian_packet, harmonic_eigenstate
from .phasespace import (
    ChordSection,
    CovarianceMatrix,
    SectionPlane,
    WignerGrid,
    chord_exact,
    chord_section,
    cos_sin_expectations,
    covariance,
    husimi,
    inner_product,
    moments,
    resample,
    section_evaluator,
    translate,
    uncertainty_eigenvalues,
    wigner,
)
from .lqec import (
    ChordEstimate,
    EllipsoidForm,
    ChordHyperplane,
    FKernelQuery,
    ForbiddenRegionError,
    QuadratureError,
    QuadratureSpec,
    ShellSample,
    bessel_section,
    chord_bessel,
    chord_mc,
    ellipsoid_predictor,
    f_kernel,
    imag_nodal_plane,
    local_shell_radius,
    mc_section,
    sample_shell,
    shell_covariance,
)
from .analysis import (
    BlindSpot,
    BlindSpotSet,
    CorrelationCurve,
    NodalLineSet,
    OverlapDecomposition,
    blind_spots,
    correlation_exact,
    correlation_lqec,
    eigenstate_overlap_decomposition,
    first_spot_on_axis,
    nodal_lines,
    pattern_distance,
)
