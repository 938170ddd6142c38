"""Data-driven output-feedback distribution steering for stochastic LTI systems.

The package covers the full workflow: simulating a ground-truth plant,
building the input-output window representation and its rank reduction,
estimating the reduced model and the temporally correlated noise, solving the
mean and covariance steering problems, and validating the closed loop by
Monte Carlo against the true plant.
"""

from .estimation import (EstimatedModel, InstrumentMatrix, NoiseEstimate,
                         build_instruments, default_lag_count, estimate_2sls,
                         estimate_C, estimate_dynamics, estimate_ls,
                         estimate_noise, estimate_tls)
from .evaluation import (EvaluationReport, SamplerConfig, covariance_ellipse,
                         finalize_report, measure_initial_moments, model_error,
                         run_closed_loop)
from .moments import (ControlLaw, MomentSchedule, mc_reduced_moments,
                      output_covariance, propagate_covariance_datadriven,
                      propagate_covariance_model, propagate_mean,
                      stationary_innovation_covariance)
from .pipeline import (SteerResult, SteerSettings, collect_dataset,
                       estimate_error_sweep, run_steering_pipeline, sweep_summary)
from .presets import get_preset, lissajous_reference, paper_3state, paper_4state
from .representation import (DataMatrices, PersistencyReport,
                             assemble_data_matrices, build_z_sequence,
                             check_persistency, compute_L, hankel)
from .steering import (ConicProgramDescription, MeanSteeringInfeasibleError,
                       SolverConfig, SteeringSolution, SteeringSpec,
                       assemble_covariance_sdp, recover_gains,
                       solve_covariance_sdp, solve_mean_steering)
from .system_sim import (GroundTruthSystem, HistoryWindow, NonminimalGroundTruth,
                         Trajectory, build_ground_truth_nonminimal,
                         generate_excitation, induced_noise_sequence,
                         lagged_cross_covariance, observability_index,
                         sample_initial_history, simulate_trajectory)

__version__ = "0.1.0"
