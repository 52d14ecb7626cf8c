"""Change-point estimation for high-dimensional structured signals.

Each sliding window of observations is averaged and denoised with a
proximal operator (l1 soft-thresholding, singular value thresholding, ...);
change-points are read off the differences between denoised windows.

>>> import numpy as np
>>> from atomcpd import ChangePointDetector
>>> Y = np.r_[np.zeros((20, 3)), np.ones((20, 3))]
>>> ChangePointDetector(theta=5, gamma=0.5, lam=0.1).fit_predict(Y)
array([20])
"""

__version__ = "0.1.0"

from .detector import (
    AutoLambda,
    ChangePointDetector,
    ChangePointReport,
    DetectorConfig,
    StreamingDetector,
    detect,
    detect_streaming,
    difference,
    denoise_windows,
    filter_means,
    group_and_select,
    threshold,
)
from .exceptions import CapabilityError, ConfigError, CsvFormatError, NumericalError
from .geometry import (
    EtaEstimate,
    RecoveryCondition,
    analytic_eta_bound,
    check_recovery_condition,
    estimate_eta,
    select_lambda,
    theorem_parameter_rule,
)
from .io import read_cpd_csv, read_sidecar, write_cpd_csv, write_sidecar
from .reconstruction import SegmentEstimate, SegmentReconstructor, reconstruct_all, reconstruct_segment
from .regularizers import ProximalDenoiser, Regularizer, get_regularizer, gauge, prox, subdiff_dist
from .signals import (
    ObservationSequence,
    PiecewiseConstantSignal,
    Segment,
    SignalSpec,
    corrupt,
    generate,
    generate_cut_matrix,
    generate_planted_lowrank,
    generate_sparse_blocks,
)

