"""Drive-engineered protection of a gauge symmetry on a spin chain.

A matter-site/gauge-link chain whose local charges are conserved by the
kinetic term alone; periodic pulse protocols cancel the symmetry-breaking
perturbations order by order, and a reduced marble model captures the
surviving slow dynamics of charge defects.  Subpackages: lattice (basis
and sectors), operators (local algebra and model terms), magnus (drive
protocols and effective Hamiltonians), engine (time evolution and
observables), qmm (the reduced model), analysis (lifetimes, fits,
perturbative growth), config/cli (experiment runner).
"""

from .lattice import (
    Boundary,
    LatticeSpec,
    SectorError,
    all_charges,
    charge_at,
    enumerate_sector,
    parse_pattern,
    render_pattern,
    sector_of,
    sector_to_string,
    z2_of_sector,
)
from .operators import (
    ModelParams,
    ModelTerms,
    OperatorSum,
    PulseKind,
    PulseSpec,
    build_gauss_generator,
    build_model,
    build_z2_generator,
    symmetry_report,
)
from .magnus import (
    DriveProtocol,
    EffectiveHamiltonian,
    ProtocolError,
    effective_orders,
    first_order_weight,
    magnus_order_check,
    make_protocol,
    protocol_full,
    protocol_simple,
    second_order_weights,
)
from .engine import (
    EngineError,
    StateSpace,
    StateVector,
    TimeSeries,
    FloquetStepper,
    protocol_quench,
    run_effective,
    run_floquet,
    staggered_vacuum_pattern,
    uniform_vacuum_pattern,
)
from .qmm import (
    QmmConfig,
    QmmError,
    build_qmm_hamiltonian,
    enumerate_qmm_basis,
    map_full_to_qmm,
    qmm_couplings,
    qmm_to_full,
    restrict_full_operator,
    run_qmm,
)
from .analysis import (
    AnalysisError,
    Censored,
    DegeneracyReport,
    FitResult,
    GrowthPrediction,
    departure_time,
    fit_power_law,
    lifetime,
    quadratic_growth_coefficients,
    segment_spectrum,
    spectra_match,
)
from .config import ConfigError, RunConfig, load_config, parse_config

__version__ = "0.1.0"
