"""Average-cost MDPs at desk scale: evaluation, occupation measures, minimum pairs, diagnostics."""

__version__ = "0.1.0"

from .model import (FiniteMdp, InvalidModelError, MarkovPolicySequence, StationaryPolicy, Trajectory,
                    simulate, validate_model)
from .evaluator import (NonConvergenceError, discount_sweep, discounted_value_iteration,
                        expected_average_cost, pathwise_average_cost)
from .occupancy import (OccupationMeasure, StationaryPairReport, decompose, empirical_occupancy,
                        exact_cesaro_occupancy, invariance_residual)
from .solver import MinPairSolution, solve_min_pair, verify_minimum_pair
from .chains import (BirthResetChain, RecurrenceReport, f_regularity_probe, hitting_analysis_exact,
                     hitting_analysis_mc)
from .certify import (CompactExhaustion, MajorizationCertificate, check_g, check_m_density, check_m_finite,
                      check_su)
from .generators import Example2Config, gen_example1, gen_example2, gen_random_mdp
