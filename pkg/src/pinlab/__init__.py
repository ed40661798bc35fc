"""Simulation and verification tools for stochastic pairwise interaction
network models."""

from .concentration import (ConcentrationReport, atm_sweep, concentration_lower_bound,
                            estimate_event_mass, vanishing_alpha_sweep)
from .drift import discrepancy_bounds, integrate_mean_field, limit_drift, mean_drift, q_operator
from .engine import (Configuration, derive_seed, random_configuration, recount, run_replicas,
                     run_stationary, step)
from .graph import (Graph, boundary, generate_complete, generate_erdos_renyi,
                    generate_single_link, generate_star, mixing_gap_exact,
                    mixing_gap_local_search)
from .lyapunov import (build_binary, build_quadratic, build_sirs, certificate_for,
                       hessian_norm_bound, perron_vector, verify_mean_field_lyapunov)
from .model import (PinParams, make_antivoter, make_best_response, make_forgetful,
                    make_params, make_sirs, make_sis, make_voter)

__version__ = "0.1.0"
