"""qkdkit: desk-scale QKD session simulation and key-rate engineering.

Subpackages group by layer: mathutils (numeric primitives), channel
(physical models), protocols (DV sessions), decoy (decoy-state bounds),
rates (MDI/TF/DPS/COW/RRDPS/DI/QDS calculators), cv (Gaussian-modulation
CV-QKD), postprocessing (sampling/leakage/hashing/budget), engine (the
pipeline, sweeps, optimization), cli (command-line surface), accel (numba
kernels with numpy fallbacks).
"""

from ._version import __version__
from .channel import Detector, FiberLink, LinkModel, OpticalQuality, qber_model, transmissivity
from .cv import CvParams, cv_holevo, cv_key_rate, cv_mutual_info, simulate_cv_session
from .decoy import (
    DecoyEstimate,
    GainTable,
    IntensitySet,
    decoy_key_rate,
    estimate_decoy,
    gains_from_model,
)
from .engine import (
    Report,
    RunConfig,
    load_config,
    optimize_intensities,
    run_pipeline,
    sweep,
)
from .mathutils import (
    ConfidenceInterval,
    SecurityBudget,
    binary_entropy,
    finite_key_penalty,
    hoeffding_interval,
    kl_divergence,
    poisson_pmf,
)
from .postprocessing import (
    KeyAccounting,
    ReconciliationModel,
    ToeplitzSeed,
    epsilon_total,
    estimate_qber_sample,
    final_key_length,
    reconciliation_leakage,
    toeplitz_hash,
)
from .protocols import ChshStats, SessionResult, chsh_s, run_bb84, sarg04_sift, sift, simulate_e91
from .rates import (
    GainTable2D,
    MdiEstimate,
    QdsParams,
    TfSlice,
    TfSliceData,
    cow_rate,
    di_rate,
    dps_rate,
    mdi_bounds,
    mdi_rate,
    qds_required_l,
    qds_security,
    rrdps_rate,
    tf_rate,
)

__all__ = [
    "__version__",
    "FiberLink",
    "Detector",
    "OpticalQuality",
    "LinkModel",
    "transmissivity",
    "qber_model",
    "ConfidenceInterval",
    "SecurityBudget",
    "binary_entropy",
    "kl_divergence",
    "poisson_pmf",
    "hoeffding_interval",
    "finite_key_penalty",
    "ChshStats",
    "SessionResult",
    "run_bb84",
    "sift",
    "sarg04_sift",
    "chsh_s",
    "simulate_e91",
    "IntensitySet",
    "GainTable",
    "DecoyEstimate",
    "gains_from_model",
    "estimate_decoy",
    "decoy_key_rate",
    "GainTable2D",
    "MdiEstimate",
    "TfSlice",
    "TfSliceData",
    "QdsParams",
    "mdi_bounds",
    "mdi_rate",
    "tf_rate",
    "dps_rate",
    "cow_rate",
    "rrdps_rate",
    "di_rate",
    "qds_security",
    "qds_required_l",
    "CvParams",
    "cv_mutual_info",
    "cv_holevo",
    "cv_key_rate",
    "simulate_cv_session",
    "ReconciliationModel",
    "ToeplitzSeed",
    "KeyAccounting",
    "estimate_qber_sample",
    "reconciliation_leakage",
    "toeplitz_hash",
    "final_key_length",
    "epsilon_total",
    "RunConfig",
    "Report",
    "load_config",
    "run_pipeline",
    "sweep",
    "optimize_intensities",
]
