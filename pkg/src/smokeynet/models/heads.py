from __future__ import annotations

import torch
from torch import nn

from smokeynet.models.config import ImageHeadMode

HEAD_WIDTHS = (256, 64, 1)


class Head(nn.Module):
    """Three fully connected layers (256, 64, 1) with ReLU; returns logits.

    Used for both tile heads and the image head.  The sigmoid is applied by
    the loss / decision code, never inside the module.
    """

    def __init__(self, in_dim: int, dropout: float = 0.0):
        super().__init__()
        layers: list[nn.Module] = []
        width = in_dim
        for i, out in enumerate(HEAD_WIDTHS):
            if dropout > 0:
                layers.append(nn.Dropout(dropout))
            layers.append(nn.Linear(width, out))
            if i < len(HEAD_WIDTHS) - 1:
                layers.append(nn.ReLU(inplace=True))
            width = out
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        return self.net(x).squeeze(-1)


class TileFC(nn.Module):
    """Single affine layer over tile probabilities -> image logit."""

    def __init__(self, num_tiles: int = 45):
        super().__init__()
        self.fc = nn.Linear(num_tiles, 1)

    def forward(self, tile_logits):
        return self.fc(torch.sigmoid(tile_logits)).squeeze(-1)


def any_tile_logit(tile_logits: torch.Tensor) -> torch.Tensor:
    """Max tile logit: positive iff some tile probability exceeds 0.5."""
    return tile_logits.max(dim=-1).values


def image_decision_from_tiles(tile_logits: torch.Tensor, mode: ImageHeadMode | str,
                              tile_fc: TileFC | None = None) -> torch.Tensor:
    """Image logit from ``(B, tiles)`` logits under ``TILE_FC`` or ``ANY_TILE``."""
    mode = ImageHeadMode(mode)
    if mode is ImageHeadMode.ANY_TILE:
        return any_tile_logit(tile_logits)
    if mode is ImageHeadMode.TILE_FC:
        if tile_fc is None:
            raise ValueError("TILE_FC needs the learned layer")
        return tile_fc(tile_logits)
    raise ValueError("CLS_TOKEN image decisions come from the spatial aggregator")


def predict(logits: torch.Tensor) -> torch.Tensor:
    """Binary decision at probability 0.5, evaluated on the logit (> 0)."""
    return (logits > 0).to(torch.int64)
