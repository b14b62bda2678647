"""Exact simulation and multiscale reduction of stochastic reaction networks."""

from .network import (Network, Reaction, SpeciesSpec, apply_reaction, parse_network, propensity,
                      render_network, stoichiometry_matrix, volume_form_kappa)
from .scaling import (BalanceReport, LimitCase, ScalingExponents, check_balance, classify_case,
                      propose_exponents, split_rate_constant, term_orders)
from .simulate import (LinearPredicate, RunConfig, StopRule, Trajectory, observe_grid, rescale_trajectory,
                       ssa_run, ssa_until)
from .limits import (averaged_fast_law, averaged_moments, build_reduced, diffusion_approx, fluid_limit,
                     integrate_ode, logistic_solution, simulate_em, simulate_hybrid)
from .branching import extinction_probability, growth_rate, pgf_eval, rho
from .stats import compare_to_oracle, conditioned_ensemble, gof_binomial, gof_poisson, run_ensemble
from .exemplars import exemplar, oracle

__version__ = "0.1.0"
