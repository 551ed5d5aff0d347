"""RHS beamforming physics, codebook synthesis, beam training, and experiments."""

from .model import (ArrayModel, ConfigError, PolarPosition, PsiMuPosition,
                    SystemConfig, User, channel, psi_mu_from_polar,
                    rayleigh_distance, steering_vector)
from .optimizer import (Codeword, GainTarget, QuadCoeffs, SampleGrid,
                        optimize_codeword, optimize_single_beam, pattern_gains)
from .codebooks import (AngularCodebook, CodebookFormatError,
                        DistanceAdaptiveCodebook, SingleBeamCodebook,
                        assemble_distance_adaptive, build_angular_codebook,
                        build_single_beam_codebook, coverage_membership,
                        load_codebook, num_layers, save_codebook)
from .training import (MeasurementModel, TrainingTranscript, estimate_mu,
                       estimate_psi, feedback_to_index, measure_power,
                       overhead, run_dft_distance, run_exhaustive,
                       run_far_field, run_two_phase, run_two_stage)
from .beamformer import (DegenerateGeometryError, DigitalBeamformer,
                         HolographicBeamformer, MetricsRecord,
                         assemble_holographic, design_digital_beamformer,
                         sum_rate, throughput, training_error, water_fill,
                         zf_beamformer)
from .experiment import (CodebookSet, ExperimentConfig, aggregate,
                         build_codebooks, load_codebooks, make_config,
                         run_experiment, sample_users, save_codebooks)

__version__ = "0.1.0"
