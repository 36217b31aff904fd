"""Detection post-processing: default boxes, matching, SSD losses, greedy NMS
and affinity-propagation suppression, with VOC-style evaluation."""

from .anchors import AnchorConfig, DefaultBoxSet, generate as generate_anchors
from .clustering import ApcParams, ClusterResult, run as affinity_propagation
from .evaluation import EvalConfig, EvalReport, average_precision, compare, mean_ap
from .features import HogConfig, ImageRaster, appearance_similarity, extract_patch, hog
from .geometry import Box, CornerBox, decode, encode, iou, jaccard_distance
from .losses import classification_loss, localization_loss, smooth_l1, softmax, total_loss
from .matching import GroundTruthObject, MatchResult, match
from .suppression import (ApcSuppressionConfig, Detection, DetectionSet, apc_suppress,
                          nms, nms_all, preference, similarity_matrix)

__version__ = "0.1.0"
