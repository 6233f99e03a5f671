"""Consistency-based two-stage sample selection for object-detection active learning.

Stage 1 scores each unlabeled image by how consistently the detector
predicts under augmentation; Stage 2 trims the over-selected pool back to
budget by class-distribution divergence against the labeled pool. A seeded
synthetic world lets the whole loop run and be evaluated at desk scale.
"""

from ._kernels import backend as kernel_backend
from .consistency import (
    ConsistencyRecord,
    ImageInformation,
    consistency_records,
    image_information,
    image_information_mean,
    js_divergence,
    match_prediction,
    normalize,
    pair_consistency,
)
from .dataio import (
    DatasetManifest,
    ImagePredictions,
    parse_labels,
    parse_predictions,
    read_selection,
    write_score_report,
    write_selection,
)
from .distribution import (
    ClassDistribution,
    count_distribution,
    labeled_pool_distribution,
    mutual_information,
    select_by_mutual_information,
    softmax,
    unlabeled_image_distribution,
)
from .errors import (
    CaldError,
    ConfigError,
    DataFormatError,
    EmptyPoolError,
    EmptyScoreError,
    IncompleteInputError,
    InsufficientCandidatesError,
    InvalidDistributionError,
    MappingDegenerateError,
)
from .geometry import (
    AugKind,
    AugmentationSpec,
    BoundingBox,
    ImageSize,
    PredictionRecord,
    iou,
    map_box,
    map_predictions,
)
from .pipeline import (
    CycleRecord,
    PoolState,
    SelectionConfig,
    SelectionRow,
    beta_search,
    plan_selection,
    random_baseline,
    run_cycle,
    score_images,
    stage_one,
)
from .simulator import (
    ExperimentConfig,
    MetricsRow,
    SimDetectorModel,
    SimWorld,
    generate_world,
    run_experiment,
    simulate_detector,
    summarize_metrics,
    write_metrics_csv,
)

__version__ = "0.1.0"
