"""semivox: desk-scale semi-supervised volumetric segmentation.

A numpy library implementing a dual-branch encoder/decoder network with
reverse-mode autodiff, confidence-reweighted branch ensembling, Fourier-domain
view augmentation, signed-distance-map consistency training, and the usual
overlap/surface evaluation metrics, plus a small CLI.
"""

from .errors import (
    ConfigError,
    ContractError,
    DegenerateInputError,
    FormatError,
    GeometryError,
    GraphError,
    LengthMismatchError,
    LifecycleError,
    ReadError,
    SemivoxError,
    UndefinedMetricError,
    UnsupportedSizeError,
    ValidationError,
    WriteError,
)
from .volume import (
    BinaryMask,
    Dataset,
    ProbVolume,
    Sample,
    Volume3,
    load_dataset,
    load_vvol,
    save_dataset,
    save_vvol,
    synth_dataset,
    synth_sample,
    zscore_normalize,
)
from .fourier import (
    DEFAULT_VIEWS,
    ComplexVolume,
    ViewSpec,
    fft3,
    ifft3,
    parse_view_specs,
    rotate_freq,
    rotate_mask,
    rotate_volume,
    view_variance_views,
)
from .geometry import (
    DistVolume,
    SignedDistanceVolume,
    dice_jaccard,
    edt,
    find_boundaries,
    signed_distance_map,
    surface_distances,
)
from .ensemble import (
    ConfidenceCache,
    ConfidenceMap,
    SarConfig,
    WeightedLogits,
    confidence_map,
    ensemble,
    pseudo_ensemble,
    reweight,
    sar_step_labeled,
)
from .losses import (
    LossBreakdown,
    RampConfig,
    ce_loss,
    dice_loss,
    plc_loss,
    ramp_gamma,
    src_loss,
    total_loss,
)
from .network import (
    BranchOutputs,
    NetConfig,
    Network,
    backward_and_step,
    build_dual_branch,
    forward,
    load_checkpoint,
    save_checkpoint,
)
from .training import EpochReport, EvalResult, TrainConfig, evaluate, train, train_iteration

__version__ = "0.1.0"
