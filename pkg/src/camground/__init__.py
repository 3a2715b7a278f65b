"""camground: heatmap-grounding evaluation of VLM predictions.

Reconstructs class-activation heatmaps from serialized model captures
(conv Grad-CAM and gradient-weighted attention rollout) and scores how well
predictions are spatially grounded against annotated frames.
"""

from __future__ import annotations

from .annotations import BoundingBox, FrameAnnotation, TripletLabel, load_annotations
from .bundle_io import (
    FrameCapture,
    RunBundle,
    TensorRecord,
    load_bundle,
    validate_bundle,
    write_bundle,
)
from .cam import (
    Heatmap,
    gradcam_conv,
    normalize,
    rollout_relevance,
    rollout_transformer,
    upsample_bilinear,
)
from .errors import CamgroundError
from .metrics import (
    ArsScore,
    F1Sweep,
    FrameCounts,
    MetricRow,
    RatioScore,
    TripletMatch,
    VideoReport,
    aggregate_video,
    ars,
    f1_threshold_sweep,
    tau_ac,
    tau_aa,
    triplet_match,
)
from .pipeline import (
    DEFAULT_TAU,
    EvalResult,
    heatmap_for_frame,
    run_instrument_eval,
    run_triplet_eval,
)
from .prompts import (
    PromptEntry,
    PromptPool,
    WorklistEntry,
    build_instrument_pool,
    build_triplet_pool,
    load_worklist,
    select_prediction,
    verb_reprompt,
    write_worklist,
)
from .regions import Comparison, PixelRegion, rasterize_boxes, threshold_region

__version__ = "0.1.0"

__all__ = [
    "ArsScore",
    "BoundingBox",
    "CamgroundError",
    "Comparison",
    "DEFAULT_TAU",
    "EvalResult",
    "F1Sweep",
    "FrameAnnotation",
    "FrameCapture",
    "FrameCounts",
    "Heatmap",
    "MetricRow",
    "PixelRegion",
    "PromptEntry",
    "PromptPool",
    "RatioScore",
    "RunBundle",
    "TensorRecord",
    "TripletLabel",
    "TripletMatch",
    "VideoReport",
    "WorklistEntry",
    "aggregate_video",
    "ars",
    "build_instrument_pool",
    "build_triplet_pool",
    "f1_threshold_sweep",
    "gradcam_conv",
    "heatmap_for_frame",
    "load_annotations",
    "load_bundle",
    "load_worklist",
    "normalize",
    "rasterize_boxes",
    "rollout_relevance",
    "rollout_transformer",
    "run_instrument_eval",
    "run_triplet_eval",
    "select_prediction",
    "tau_ac",
    "tau_aa",
    "threshold_region",
    "triplet_match",
    "upsample_bilinear",
    "validate_bundle",
    "verb_reprompt",
    "write_bundle",
    "write_worklist",
]
