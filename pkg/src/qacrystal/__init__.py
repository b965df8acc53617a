"""qacrystal: numerics for quantum anharmonic crystals.

Single-site Schrodinger spectra (gap and effective rigidity), the lattice
dispersion constant and phase-transition/stabilization verdicts, exact
sampling of the Gaussian reference measure on temperature loops, and
Metropolis estimation of imaginary-time correlations and the order
parameter on finite volumes.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigurationError,
    ConvergenceError,
    DefinitenessError,
    DegeneracyError,
    DomainError,
    PreconditionError,
    QacError,
)
from .spectral import (
    GridSpec,
    OscillatorParams,
    Spectrum,
    compute_spectrum,
    discretize_hamiltonian,
    rigidity_mass_scan,
    single_site_spectrum,
)
from .criteria import (
    LatticeDispersion,
    PhaseClassification,
    classify_phase,
    solve_beta_star,
    t_of_u,
    theta_of_d,
    u_of_t,
)
from .loops import (
    BoundaryCondition,
    GaussianLoopFactory,
    LoopConfiguration,
    TemperatureLoop,
    action,
    build_factory,
    default_slices,
    load_loops,
    propagator,
    sample_loop,
    save_loops,
)
from .sampler import (
    ChainSettings,
    EstimateReport,
    GksAuditReport,
    batch_means,
    clipped_identity,
    gks_audit,
    matsubara_estimate,
    merge_reports,
    metropolis_chain,
    order_parameter,
    run_parallel_chains,
)
from .config import RunConfig, config_digest, parse_config, serialize_config

__all__ = [name for name in dir() if not name.startswith("_")]
