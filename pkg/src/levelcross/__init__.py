"""Level crossings of zero-drift random walks over one excursion, and losses
per busy period in full-rejection batch queues.

Simulation (:mod:`.excursion`, :mod:`.estimators`, :mod:`.queue`), exact
lattice solves (:mod:`.lattice`) and closed forms (:mod:`.formulas`) are
kept independent so that each can check the others; :mod:`.report` lines
them up per scenario.
"""

from .errors import *  # noqa: F401,F403
from .estimators import (
    Assumption1Report,
    Estimate,
    MCConfig,
    Verdict,
    assumption1_diagnostic,
    estimate_alpha_ladder,
    estimate_b,
    estimate_EL,
    estimate_S_tau_pos,
    simulate_excursions,
)
from .excursion import CrossingEpisode, EngineConfig, ExcursionResult, crossing_count_oracle, run_excursion
from .formulas import FormulaInputs, el_cor1, el_pure, el_queue, el_thm2, el_thm4, min_valid_alpha
from .lattice import (
    ChainSolve,
    LatticeSpec,
    OracleConfig,
    certify_assumption1,
    crossing_profiles,
    exact_EL,
    exact_S_tau,
    formula_inputs,
    spec_from_distribution,
)
from .queue import BusyPeriodResult, QueueModel, estimate_EL_N, exact_EL_N, run_busy_period, theorem6_sweep
from .steps import (
    ExponentialLaw,
    FiniteDiscrete,
    FiniteLaw,
    GeometricLaw,
    PointPosExponentialNeg,
    PointPosGeometricNeg,
    QueueMixture,
    Scaled,
    SymmetryClass,
    UniformLaw,
    classify,
    finite,
    moments,
    new_state,
    point,
    sample,
    validate,
)

__version__ = "0.1.0"
