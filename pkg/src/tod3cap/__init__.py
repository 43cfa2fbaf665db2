"""Outdoor 3D dense-captioning toolkit: data model, box geometry, matching,
caption metrics with the m@kIoU aggregate, BEV rasterization and driving QA."""

__version__ = "0.1.0"

from .assign import Assignment, hungarian, match_cost, match_for_eval, nms  # noqa: E402
from .capmetrics import Corpus, bleu4, cider_d, meteor, rouge_l  # noqa: E402
from .evaluation import EvalConfig, MetricReport, evaluate, m_at_k  # noqa: E402
from .geom import (  # noqa: E402
    ObjectContext, Rect2D, box_corners, distance, iou3d, project_box, speed, viewing_direction)
from .scene import (  # noqa: E402
    Box3D, CameraCalib, Caption, Frame, ObjectAnnotation, Pose, Prediction, PredictionSet, Scene,
    load_predictions, load_scenes, save_predictions, save_scenes)
from .stats import StatsReport, dataset_stats  # noqa: E402
from .text import tokenize  # noqa: E402
