from smokeynet.models.aggregators import BackgroundFusion, SpatialViT
from smokeynet.models.backbones import FPNTileEmbedding, build_backbone
from smokeynet.models.checkpoint import load_checkpoint, save_checkpoint
from smokeynet.models.config import (
    PRESETS,
    Backbone,
    ConfigError,
    ExtraChannel,
    ImageHeadMode,
    Spatial,
    Temporal,
    VariantConfig,
    preset,
)
from smokeynet.models.heads import Head, TileFC, image_decision_from_tiles, predict
from smokeynet.models.smokeynet import (
    ModelOutputs,
    SmokeyNet,
    build,
    count_parameters,
    parameters_millions,
)

__all__ = [
    "PRESETS", "Backbone", "BackgroundFusion", "ConfigError", "ExtraChannel", "FPNTileEmbedding",
    "Head", "ImageHeadMode", "ModelOutputs", "SmokeyNet", "Spatial", "SpatialViT", "Temporal",
    "TileFC", "VariantConfig", "build", "build_backbone", "count_parameters",
    "image_decision_from_tiles", "load_checkpoint", "parameters_millions", "predict", "preset",
    "save_checkpoint",
]
