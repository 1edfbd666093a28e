"""Human-firearm carrier association from paired bounding boxes."""

from .geometry import BoundingBox, iou, union_box
from .masks import AttentionMode, ObjectClass
from .model import CarrierNet, ModelConfig, TrainConfig, init_model, load_model, save_model
from .pipeline import Detection, PairInstance, ScoredPair, enumerate_pairs, maxout, score_pair

__version__ = "0.1.0"
