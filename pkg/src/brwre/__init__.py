"""Branching random walk in a random environment: tilts, centering, barrier
probabilities and simulation."""

from .barrier import (BarrierEvent, BarrierProfile, Centering, GaussLaw, ProbEstimate, assemble_centering,
                      banana_down, banana_up, estimate_barrier_prob_gauss, estimate_p_all, estimate_p_n)
from .brw import RunRecord, SimConfig, SimulationAborted, simulate_hitting, simulate_until
from .env import (DEFAULT_DIST, EnvDistribution, Environment, EnvFormatError, ParameterError, WindowError,
                  constant_environment, load_environment, sample_environment, save_environment, shift_environment)
from .tilt import (CenteringTable, PhiProfile, TiltSolution, TruncationError, centering_table, h_transform_rates,
                   phi_derivatives, phi_profile, solve_tilt, tilted_profile)
from .walker import HittingPath, estimate_barrier_prob_rw, mc_phi_oracle, sample_hitting_path, sample_tau

__version__ = "0.1.0"
