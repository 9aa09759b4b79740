"""Near-field emitter localization on a grouped partially-connected hybrid array.

Simulation of the spherical-wavefront signal model, per-group subspace DOA
with ambiguity enumeration, cross-group calibration, three disambiguation
back ends (scatter clustering, density clustering, regression network), the
matching Cramer-Rao bounds, and a seeded benchmark harness.
"""

from .array_model import (ArrayConfig, BeamformerSetting, EmitterPosition,
                          FresnelInterval, GroupSnapshots, fresnel_interval,
                          group_ff_condition, group_true_angle, grouped_steering,
                          nf_phase, nf_steering, snr_db_to_variances, synthesize)
from .calibration import (CandidatePosition, CandidatePositionSet, DegeneratePair,
                          align_ambiguity_labels, asd_angle_sets,
                          build_candidate_set, calibrate_pair)
from .crlb import (CrlbReport, FimComponents, SingularFim, crlb, fim_closed_form,
                   fim_numeric_oracle, gamma_eta, phi_and_derivatives,
                   remark1_check, xi)
from .disambiguation import (ConvergenceFailure, MsdcEstimate, RsdEstimate,
                             asd_prefilter, dbscan, msdc, polarize,
                             rsd_asd_dbscan)
from .localize import METHODS, LocalizeResult, ambiguous_sets, locate
from .regnet import (AllPairsDegenerate, MlnnParams, PerceptronParams,
                     TrainConfig, TrainingDiverged, TrainingSample,
                     generate_dataset, load_dataset, load_model, mlnn_forward,
                     perceptron_forward, regnet_infer, regnet_range,
                     save_dataset, save_model, train)
from .subspace import (AmbiguousAngleSet, ambiguous_set, group_doa,
                       music_spectrum_oracle, noise_subspace, root_music_arg,
                       sample_covariance, true_coefficient)

__version__ = "0.1.0"
