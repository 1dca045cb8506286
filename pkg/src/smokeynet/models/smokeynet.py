"""The SmokeyNet model family: per-tile backbone -> temporal aggregator ->
spatial aggregator, with a tile head on every stage and one image head."""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from smokeynet.models.aggregators import (
    BackgroundFusion,
    CNN3DAggregator,
    LSTMTemporal,
    SpatialViT,
    TransformerTemporal,
)
from smokeynet.models.backbones import build_backbone
from smokeynet.models.config import (
    ExtraChannel,
    ImageHeadMode,
    Spatial,
    Temporal,
    VariantConfig,
)
from smokeynet.models.heads import Head, TileFC, any_tile_logit

STAGES = ("cnn", "temporal", "spatial")


@dataclass
class ModelOutputs:
    image_logit: torch.Tensor
    tile_logits_cnn: torch.Tensor | None = None
    tile_logits_temporal: torch.Tensor | None = None
    tile_logits_spatial: torch.Tensor | None = None

    def stages(self) -> dict[str, torch.Tensor]:
        """Present tile-logit stages in architecture order."""
        out = {}
        for name in STAGES:
            value = getattr(self, f"tile_logits_{name}")
            if value is not None:
                out[name] = value
        return out

    @property
    def final_tile_logits(self) -> torch.Tensor:
        return list(self.stages().values())[-1]


class SmokeyNet(nn.Module):
    """Input ``(B, T, tiles, C, t, t)`` normalized tiles; see :func:`build`.

    With a background channel, ``C = 4``: channel 3 runs through its own
    backbone and temporal stack and is fused before the spatial aggregator.
    """

    def __init__(self, config: VariantConfig, dropout: float = 0.0):
        super().__init__()
        self.config = config.validate()
        cfg = self.config
        grid = (5, 9) if cfg.num_tiles == 45 else (1, cfg.num_tiles)

        self.backbone = build_backbone(cfg.backbone, 3, cfg.pretrained_backbone, cfg.tile_size)
        dim = self.backbone.embed_dim
        self.embed_dim = dim
        self.cnn_head = Head(dim, dropout)

        self.temporal = self._temporal(dim, grid)
        self.temporal_head = None
        width = dim
        if self.temporal is not None:
            width = self.temporal.out_dim
            self.temporal_head = Head(width, dropout)

        self.bg_backbone = self.bg_temporal = self.fusion = None
        if cfg.extra_channel is ExtraChannel.BACKGROUND:
            self.bg_backbone = build_backbone(cfg.backbone, 1, cfg.pretrained_backbone, cfg.tile_size)
            self.bg_temporal = self._temporal(dim, grid)
            self.fusion = BackgroundFusion(width)

        self.spatial = self.spatial_head = self.image_head = self.tile_fc = None
        if cfg.spatial is Spatial.VIT:
            self.spatial = SpatialViT(
                width, cfg.num_tiles, cfg.vit_depth, cfg.vit_heads, cfg.vit_max_width, cfg.vit_positional
            )
            self.spatial_head = Head(self.spatial.out_dim, dropout)
            self.image_head = Head(self.spatial.out_dim, dropout)
        elif cfg.image_head_mode is ImageHeadMode.TILE_FC:
            self.tile_fc = TileFC(cfg.num_tiles)

    def _temporal(self, dim: int, grid):
        cfg = self.config
        if cfg.temporal is Temporal.LSTM:
            return LSTMTemporal(dim)
        if cfg.temporal is Temporal.TRANSFORMER:
            return TransformerTemporal(dim, cfg.transformer_heads, cfg.transformer_layers, max(cfg.num_frames, 3))
        if cfg.temporal is Temporal.CNN3D:
            return CNN3DAggregator(dim, grid, cfg.cnn3d_width)
        return None

    def embed_tiles(self, tiles: torch.Tensor, backbone: nn.Module) -> torch.Tensor:
        """``(B, T, N, C, t, t)`` -> ``(B, T, N, E)``, each tile independently."""
        b, t, n = tiles.shape[:3]
        flat = tiles.reshape(b * t * n, *tiles.shape[3:])
        return backbone(flat).reshape(b, t, n, -1)

    def _aggregate_time(self, emb: torch.Tensor, temporal: nn.Module | None) -> torch.Tensor:
        b, t, n, e = emb.shape
        if temporal is None:
            return emb[:, -1]
        if isinstance(temporal, CNN3DAggregator):
            return temporal(emb)
        seq = emb.permute(0, 2, 1, 3).reshape(b * n, t, e)
        return temporal(seq).reshape(b, n, -1)

    def forward(self, x: torch.Tensor) -> ModelOutputs:
        cfg = self.config
        if x.dim() != 6:
            raise ValueError(f"expected (B, T, tiles, C, t, t) input, got shape {tuple(x.shape)}")
        b, t, n, c, h, w = x.shape
        if n != cfg.num_tiles or h != cfg.tile_size or w != cfg.tile_size:
            raise ValueError(
                f"expected {cfg.num_tiles} tiles of {cfg.tile_size}x{cfg.tile_size}, got {n} of {h}x{w}"
            )
        if c != cfg.in_channels:
            raise ValueError(f"expected {cfg.in_channels} channels, got {c}")
        if t != cfg.num_frames:
            raise ValueError(f"expected {cfg.num_frames} frames, got {t}")

        emb = self.embed_tiles(x[:, :, :, :3], self.backbone)
        out = ModelOutputs(image_logit=torch.empty(0), tile_logits_cnn=self.cnn_head(emb[:, -1]))

        feats = self._aggregate_time(emb, self.temporal)
        if self.bg_backbone is not None:
            bg = self.embed_tiles(x[:, :, :, 3:], self.bg_backbone)
            feats = self.fusion(feats, self._aggregate_time(bg, self.bg_temporal))
        if self.temporal_head is not None:
            out.tile_logits_temporal = self.temporal_head(feats)

        if self.spatial is not None:
            cls, tiles = self.spatial(feats)
            out.tile_logits_spatial = self.spatial_head(tiles)
            out.image_logit = self.image_head(cls)
        elif self.tile_fc is not None:
            out.image_logit = self.tile_fc(out.final_tile_logits)
        else:
            out.image_logit = any_tile_logit(out.final_tile_logits)
        return out


def build(config: VariantConfig, dropout: float = 0.0) -> SmokeyNet:
    return SmokeyNet(config, dropout)


def count_parameters(model: nn.Module) -> int:
    """Exact number of trainable scalars."""
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def parameters_millions(model: nn.Module) -> float:
    return round(count_parameters(model) / 1e6, 1)
