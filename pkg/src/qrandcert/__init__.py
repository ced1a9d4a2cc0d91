"""Certified randomness rates for energy-bounded binary-input QRNGs.

The toolkit models a prepare-and-measure generator whose only trusted
property is an upper bound on the mean photon number of the two prepared
states.  From that bound and a measured d-outcome probability table it
certifies extractable min-entropy by solving the adversary's
guessing-probability program, optimizes outcome partitions, and issues
reusable dual certificates for SDP-free real-time bounds.
"""

from .certify import (
    AttackerStrategy,
    CertificationInput,
    CertificationResult,
    DualCertificate,
    build_dual,
    build_primal,
    certificate_bound,
    extract_strategy,
    guessing_probability,
    issue_certificate,
    load_certificate,
    min_entropy,
    save_certificate,
)
from .conic import ConicProblem, ConicSolution, ProblemBuilder, Tolerances, solve
from .detection import (
    ConditionalDistribution,
    DetectorScenario,
    HomodynePartition,
    PhaseSpacePartition,
    RawSampleSet,
    SymmetricPartitionSpec,
    effective_efficiency,
    empirical_probs,
    expand_symmetric,
    heterodyne_probs,
    homodyne_probs,
    scenario_probs,
)
from .optimize import (
    OptimizationSpec,
    OptimizerSettings,
    Optimum,
    SweepResult,
    optimize_levels,
    optimize_mu_and_levels,
    sweep,
)
from .states import EnergyBound, ReducedStatePair, coherent_amplitude, overlap, reduced_states

__version__ = "0.1.0"
