"""Backscatter localization with retro-directive antenna arrays.

A node that conjugates and re-radiates whatever hits it turns the two-way
channel into a Hermitian operator whose top eigenvector is the optimum
transmit beam; iterating transmit/receive/conjugate therefore runs the power
method over the air.  This package simulates that loop end to end (channels,
nodes, transceiver, trajectories, Monte Carlo statistics), provides the
matching closed-form SNR and tracking analysis, and exposes a CLI for
scenario runs.
"""

__version__ = "0.1.0"

from .analysis import (SnrSpectrum, SnrTrace, approx_beam_correlation,
                       correlation_coefficient, equilibrium_snr,
                       max_and_bootstrap_snr, max_tracking_speed, snr_recursion,
                       tracking_benefit, uniform_fractions)
from .channel import (BOLTZMANN, REFERENCE_TEMPERATURE, ChannelMatrix,
                      MultipathParams, NoiseModel, Path, PathSet,
                      draw_cluster_angles, los_channel, multipath_channel,
                      noise_variances, round_trip_operator, sample_cn,
                      surrogate_pathset)
from .geometry import (SPEED_OF_LIGHT, ArrayGeometry, FieldOfViewError, Pose,
                       RfParams, array_response, bearing, path_loss,
                       planar_steering_vector, ray_angle_from_x, steering_vector)
from .locengine import (AnchorNode, Ecdf, MonteCarloResult, Scenario, StepRecord,
                        ecdf, fuse_aoa_ls, monte_carlo, simulate_trajectory)
from .raa import (MSEQUENCE_TAPS, PnSequence, RaaNode, backscatter,
                  find_primitive_taps, generate_msequence, id_phase,
                  random_binary_sequence)
from .scenario_io import (SchemaError, build_scenario, load_scenario,
                          msequence_capacity, normalize,
                          validate_scenario_document)
from .trx import (BackscatterLink, DeflationBasis, IdMatch, InterrogationResult,
                  TrxConfig, collapse_to_inplane, correlate_id, deflate,
                  demodulate, detect, detect_all, estimate_aoa, init_beamformer,
                  run_interrogation, step_update)
