"""detscope: object-detection evaluation, upper bounds, diagnosis and probes."""

from .config import DEFAULT_IOU_THRESHOLDS, EvalConfig
from .data import (
    Category,
    ClassifierOutput,
    Dataset,
    Detection,
    DetscopeError,
    GroundTruth,
    ImageInfo,
    NeighborPrediction,
    ParseError,
    ValidationError,
    load_classifier_outputs,
    load_dataset,
    load_detections,
    save_dataset,
    save_detections,
    size_bucket,
)
from .diagnose import (
    DiagnoseConfig,
    DiagnosisPipeline,
    DiagnosisReport,
    DetectionLabel,
    Stage,
    StageOrderError,
    TargetLabel,
    apply_stage,
    diagnose,
    label_errors,
)
from .evaluate import (
    EvalReport,
    MatchResult,
    PRCurve,
    average_precision,
    evaluate,
    match_image_category,
)
from .geom import (
    BBox,
    CornerCurve,
    LevelSetParam,
    iou,
    level_set_box,
    overlap_product,
    sample_boxes_min_iou,
    scale_box,
)
from .kernels import BACKEND as KERNEL_BACKEND
from .probes import (
    ProbeSpec,
    build_probe_dataset,
    export_context_crops,
    generate_incongruent_set,
    generate_probe,
    paste_incongruent,
)
from .upperbound import (
    AggregationMode,
    Correlation,
    aggregate_neighborhood,
    correlate_accuracy_uap,
    uap_strategy1,
    uap_strategy2,
)

__version__ = "0.1.0"
