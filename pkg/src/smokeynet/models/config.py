"""Declarative description of one SmokeyNet architecture variant."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, fields, replace


class ConfigError(ValueError):
    pass


class Backbone(str, enum.Enum):
    RESNET34 = "resnet34"
    RESNET50 = "resnet50"
    MOBILENET_V3L = "mobilenet_v3_large"
    MOBILENET_FPN = "mobilenet_fpn"
    EFFICIENTNET_B0 = "efficientnet_b0"
    DEIT_TINY = "deit_tiny"


class Temporal(str, enum.Enum):
    NONE = "none"
    LSTM = "lstm"
    TRANSFORMER = "transformer"
    CNN3D = "cnn3d"


class Spatial(str, enum.Enum):
    NONE = "none"
    VIT = "vit"


class ExtraChannel(str, enum.Enum):
    NONE = "none"
    BACKGROUND = "background"


class ImageHeadMode(str, enum.Enum):
    CLS_TOKEN = "cls_token"
    TILE_FC = "tile_fc"
    ANY_TILE = "any_tile"


_ENUM_FIELDS = {
    "backbone": Backbone,
    "temporal": Temporal,
    "spatial": Spatial,
    "extra_channel": ExtraChannel,
    "image_head_mode": ImageHeadMode,
}


@dataclass(frozen=True)
class VariantConfig:
    backbone: Backbone = Backbone.RESNET34
    temporal: Temporal = Temporal.LSTM
    spatial: Spatial = Spatial.VIT
    num_frames: int = 2
    extra_channel: ExtraChannel = ExtraChannel.NONE
    image_head_mode: ImageHeadMode = ImageHeadMode.CLS_TOKEN
    pretrained_backbone: bool = False
    tile_size: int = 224
    num_tiles: int = 45
    # aggregator sizes are free choices; see README
    vit_depth: int = 6
    vit_heads: int = 8
    vit_max_width: int = 768
    vit_positional: bool = True
    transformer_layers: int = 1
    transformer_heads: int = 8
    cnn3d_width: int = 256
    fpn_hidden: int = 64

    def __post_init__(self) -> None:
        for name, enum_type in _ENUM_FIELDS.items():
            value = getattr(self, name)
            if not isinstance(value, enum_type):
                try:
                    object.__setattr__(self, name, enum_type(value))
                except ValueError:
                    choices = ", ".join(e.value for e in enum_type)
                    raise ConfigError(f"{name}={value!r}; expected one of {choices}") from None

    def validate(self) -> "VariantConfig":
        if self.num_frames not in (1, 2, 3):
            raise ConfigError(f"num_frames={self.num_frames}; expected 1, 2 or 3")
        if self.spatial is Spatial.VIT and self.image_head_mode is not ImageHeadMode.CLS_TOKEN:
            raise ConfigError(
                f"spatial=vit requires image_head_mode=cls_token, got {self.image_head_mode.value}"
            )
        if self.spatial is Spatial.NONE and self.image_head_mode is ImageHeadMode.CLS_TOKEN:
            raise ConfigError("spatial=none has no CLS token; image_head_mode must be tile_fc or any_tile")
        if self.temporal is Temporal.CNN3D and self.spatial is not Spatial.NONE:
            raise ConfigError("temporal=cnn3d replaces the spatial aggregator; spatial must be none")
        if self.num_frames == 1 and self.temporal is not Temporal.NONE:
            raise ConfigError(f"num_frames=1 requires temporal=none, got {self.temporal.value}")
        if self.num_frames > 1 and self.temporal is Temporal.NONE:
            raise ConfigError(f"num_frames={self.num_frames} needs a temporal aggregator")
        if self.extra_channel is ExtraChannel.BACKGROUND and self.spatial is Spatial.NONE:
            raise ConfigError("extra_channel=background fuses ahead of the spatial aggregator; spatial must be vit")
        if self.backbone is Backbone.DEIT_TINY and self.tile_size % 16:
            raise ConfigError(f"deit_tiny needs tile_size divisible by 16, got {self.tile_size}")
        return self

    @property
    def in_channels(self) -> int:
        return 4 if self.extra_channel is ExtraChannel.BACKGROUND else 3

    def to_dict(self) -> dict:
        out = asdict(self)
        for name in _ENUM_FIELDS:
            out[name] = getattr(self, name).value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "VariantConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown variant fields: {', '.join(sorted(unknown))}")
        return cls(**data)

    def with_(self, **changes) -> "VariantConfig":
        return replace(self, **changes)


FLAGSHIP = VariantConfig()

# Named variants, keyed by short name.
PRESETS: dict[str, VariantConfig] = {
    "resnet34_lstm_vit": FLAGSHIP,
    "resnet34_lstm_vit_3frames": FLAGSHIP.with_(num_frames=3),
    "mobilenet_lstm_vit": FLAGSHIP.with_(backbone=Backbone.MOBILENET_V3L),
    "mobilenetfpn_lstm_vit": FLAGSHIP.with_(backbone=Backbone.MOBILENET_FPN),
    "efficientnetb0_lstm_vit": FLAGSHIP.with_(backbone=Backbone.EFFICIENTNET_B0),
    "deit_tiny_lstm_vit": FLAGSHIP.with_(backbone=Backbone.DEIT_TINY),
    "resnet34_1frame": FLAGSHIP.with_(
        num_frames=1, temporal=Temporal.NONE, spatial=Spatial.NONE, image_head_mode=ImageHeadMode.TILE_FC
    ),
    "resnet34_lstm": FLAGSHIP.with_(spatial=Spatial.NONE, image_head_mode=ImageHeadMode.TILE_FC),
    "resnet34_vit_1frame": FLAGSHIP.with_(num_frames=1, temporal=Temporal.NONE),
    "resnet34_transformer_vit": FLAGSHIP.with_(temporal=Temporal.TRANSFORMER),
    "resnet34_r3d18": FLAGSHIP.with_(
        temporal=Temporal.CNN3D, spatial=Spatial.NONE, image_head_mode=ImageHeadMode.TILE_FC
    ),
    "mobilenet_lstm_vit_mog2": FLAGSHIP.with_(
        backbone=Backbone.MOBILENET_V3L, extra_channel=ExtraChannel.BACKGROUND
    ),
    "resnet50_1frame": FLAGSHIP.with_(
        backbone=Backbone.RESNET50, num_frames=1, temporal=Temporal.NONE, spatial=Spatial.NONE,
        image_head_mode=ImageHeadMode.TILE_FC,
    ),
    "resnet34_1frame_anytile": FLAGSHIP.with_(
        num_frames=1, temporal=Temporal.NONE, spatial=Spatial.NONE, image_head_mode=ImageHeadMode.ANY_TILE
    ),
}


def preset(name: str, **overrides) -> VariantConfig:
    try:
        base = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown variant {name!r}; known: {', '.join(PRESETS)}") from None
    return base.with_(**overrides) if overrides else base
