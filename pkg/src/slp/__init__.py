"""Symbol-level precoding for the multiuser MISO downlink.

The package is organized as

``slp.constellation``
    Square QAM alphabets, minimum-distance detection, interior/edge labels.
``slp.sep``
    Gaussian tail function, the SEP-to-bound constants and analytic SEP.
``slp.qp``
    Box, linear-inequality and min-max quadratic program solvers.
``slp.precoders``
    Zero-forcing, symbol-level precoding, SINR beamforming and block designs.
``slp.sim``
    Monte Carlo link simulation and experiment sweeps.
``slp.cli``
    The ``slp`` command (``slp run``, ``slp check``).
"""
from .constellation import (PartClass, QamSpec, classify_part, classify_parts, decide,
                            draw_symbols, enumerate_points, is_member)
from .errors import (ChannelError, ConvergenceError, DomainError, InfeasibleGainsError,
                     InvalidInputError, PreconditionError, SlpError, SolverError)
from .precoders import (BeamformerMatrix, BlockDesign, ChannelState, PrecodeOutput,
                        block_average_design, block_peak_design, heuristic_gains,
                        linear_bf_as_perturbed_zf, linear_bf_block, precode_block,
                        sinr_beamforming, slp_direct, slp_per_symbol, zf_block, zf_precode)
from .qp import (BoxQp, IneqQp, MinMaxQp, SolveReport, Status, lift_complex_quadratic,
                 solve_box_qp, solve_ineq_qp, solve_minmax_qp)
from .sep import (GainConstants, SepBounds, analytic_sep_part, analytic_sep_symbol,
                  build_bounds, gain_constants, per_part_eps, q_func, q_inv,
                  sinr_target_from_sep)
from .sim import (SimConfig, TrialResult, estimate_sep, gen_channel, run_experiment,
                  summarize, transmit_receive)

__version__ = "0.1.0"
