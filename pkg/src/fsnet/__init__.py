"""Tracking-by-detection toolkit with shared-convolution feature extraction.

The pipeline: a small convolutional network runs once per frame, candidate
boxes are cut out of the feature map with a sub-pixel RoI-align extractor,
a mutual-information filter prunes redundant feature channels, and a pair of
fully connected layers is fine-tuned online while tracking.
"""

from .evaluation import (Sequence, auc, load_image, load_rect_file,
                         load_sequence, precision_at, precision_curve,
                         success_curve, write_rect_file)
from .gradcheck import GRADCHECK_CONFIG, GradcheckReport, full_chain_gradcheck
from .network import (ALL_LAYERS, FC_ONLY, FeatureNetwork, NetworkConfig,
                      NetworkParams, describe_layers)
from .rect import Rect, center_distance, iou, rects_to_array
from .roi import (AlignRecord, roi_align_backward, roi_align_forward,
                  roi_pool_backward, roi_pool_forward)
from .sampling import generate_candidates, sample_neg_rois, sample_pos_rois
from .selection import (ChannelSelector, mi_matrix, mutual_information,
                        prune_network, select_channels, select_for_frame)
from .sgd import SgdOptimizer
from .tracking import (BBoxRegressor, LogRow, Tracker, TrackerConfig,
                       mine_hard_negatives, run_finetune_controller,
                       track_sequence)
from .training import MultiDomainTrainer, VideoDomain
from .weights_io import WeightsFormatError, load_weights, save_weights

__version__ = "0.1.0"

__all__ = [
    "ALL_LAYERS",
    "AlignRecord",
    "BBoxRegressor",
    "ChannelSelector",
    "FC_ONLY",
    "FeatureNetwork",
    "GRADCHECK_CONFIG",
    "GradcheckReport",
    "LogRow",
    "MultiDomainTrainer",
    "NetworkConfig",
    "NetworkParams",
    "Rect",
    "Sequence",
    "SgdOptimizer",
    "Tracker",
    "TrackerConfig",
    "VideoDomain",
    "WeightsFormatError",
    "auc",
    "center_distance",
    "describe_layers",
    "full_chain_gradcheck",
    "generate_candidates",
    "iou",
    "load_image",
    "load_rect_file",
    "load_sequence",
    "load_weights",
    "mi_matrix",
    "mine_hard_negatives",
    "mutual_information",
    "precision_at",
    "precision_curve",
    "prune_network",
    "rects_to_array",
    "roi_align_backward",
    "roi_align_forward",
    "roi_pool_backward",
    "roi_pool_forward",
    "run_finetune_controller",
    "sample_neg_rois",
    "sample_pos_rois",
    "save_weights",
    "select_channels",
    "select_for_frame",
    "success_curve",
    "track_sequence",
    "write_rect_file",
]
