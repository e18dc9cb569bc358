"""Electro-nuclear spin ensembles coupled to a microwave cavity.

Exact diagonalisation of crystal-field + Zeeman + hyperfine spin Hamiltonians,
cavity reflection under spin perturbation, two-stage extraction of spin
decoherence rate and coupling, and mode-volume / coupling integrals over
gridded microwave fields.
"""

from .cavity import (
    CavityBackground,
    CavityParams,
    SpectrumMap,
    SpinResonance,
    cooperativity,
    perturbed_cavity,
    s11_power,
    synthesize_spectrum,
)
from .fieldmap import (
    FieldMap,
    GridSpec,
    RegionMask,
    analytic_loop_field,
    ensemble_coupling,
    mode_volume,
    single_spin_coupling,
    threshold_volume_curve,
    vacuum_scale,
)
from .fitkit import (
    LorentzianFitResult,
    ResonanceFitResult,
    ResonanceTarget,
    fit_lorentzian_trace,
    fit_resonance,
    run_pipeline,
    spin_count,
)
from .lsq import LeastSquaresResult, RankDeficiencyError, least_squares
from .spinham import (
    EigenSolution,
    FieldVector,
    Orientation,
    SpinSystem,
    build_hamiltonian,
    eigensolve,
    spin_matrices,
    stevens_operator,
)
from .transitions import (
    NoResonanceError,
    ResonanceLocation,
    Transition,
    TrackingError,
    find_resonance_field,
    frequency_curve,
    transition_table,
)

__version__ = "0.1.0"
