"""Temporal (across frames) and spatial (across tiles) aggregators, plus
background-stream fusion."""

from __future__ import annotations

import torch
from torch import nn


class LSTMTemporal(nn.Module):
    """Single-layer LSTM over each tile's frame sequence, width-preserving."""

    def __init__(self, dim: int):
        super().__init__()
        self.lstm = nn.LSTM(dim, dim, num_layers=1, batch_first=True)
        self.out_dim = dim

    def forward(self, x):
        # x: (N, T, E) -> last step (N, E)
        out, _ = self.lstm(x)
        return out[:, -1]


class TransformerTemporal(nn.Module):
    """Transformer encoder over each tile's frames; output at the newest frame."""

    def __init__(self, dim: int, heads: int = 8, layers: int = 1, max_frames: int = 3):
        super().__init__()
        self.frame_pos = nn.Parameter(torch.zeros(1, max_frames, dim))
        nn.init.trunc_normal_(self.frame_pos, std=0.02)
        layer = nn.TransformerEncoderLayer(
            dim, heads, dim_feedforward=4 * dim, dropout=0.0, batch_first=True, norm_first=True
        )
        self.encoder = nn.TransformerEncoder(layer, layers, enable_nested_tensor=False)
        self.out_dim = dim

    def forward(self, x):
        t = x.shape[1]
        out = self.encoder(x + self.frame_pos[:, -t:])
        return out[:, -1]


class _Block3d(nn.Module):
    def __init__(self, width: int):
        super().__init__()
        self.conv1 = nn.Conv3d(width, width, 3, padding=1, bias=False)
        self.bn1 = nn.BatchNorm3d(width)
        self.conv2 = nn.Conv3d(width, width, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm3d(width)
        self.relu = nn.ReLU(inplace=True)

    def forward(self, x):
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + x)


class CNN3DAggregator(nn.Module):
    """ResNet-style 3D convolutions over the (frames, grid rows, grid cols)
    volume of tile embeddings; mixes time and neighbouring tiles at once and
    returns one embedding per tile."""

    def __init__(self, dim: int, grid: tuple[int, int] = (5, 9), width: int = 256, blocks: int = 2):
        super().__init__()
        self.grid = grid
        self.stem = nn.Sequential(
            nn.Conv3d(dim, width, 1, bias=False), nn.BatchNorm3d(width), nn.ReLU(inplace=True)
        )
        self.blocks = nn.Sequential(*[_Block3d(width) for _ in range(blocks)])
        self.out_dim = width

    def forward(self, x):
        # x: (B, T, tiles, E)
        b, t, n, e = x.shape
        rows, cols = self.grid
        vol = x.permute(0, 3, 1, 2).reshape(b, e, t, rows, cols)
        vol = self.blocks(self.stem(vol))
        out = vol.mean(dim=2)  # pool over time
        return out.reshape(b, self.out_dim, n).transpose(1, 2)


class SpatialViT(nn.Module):
    """Transformer over all tile embeddings plus a learned CLS token.

    Tile embeddings wider than ``max_width`` are projected down first.  With
    ``positional=False`` no per-tile position is added, so the CLS output is
    invariant to tile order.
    """

    def __init__(self, dim: int, num_tiles: int = 45, depth: int = 6, heads: int = 8,
                 max_width: int = 768, positional: bool = True):
        super().__init__()
        width = min(dim, max_width)
        self.proj = nn.Linear(dim, width) if width != dim else nn.Identity()
        self.cls_token = nn.Parameter(torch.zeros(1, 1, width))
        self.pos = nn.Parameter(torch.zeros(1, num_tiles, width)) if positional else None
        nn.init.trunc_normal_(self.cls_token, std=0.02)
        if self.pos is not None:
            nn.init.trunc_normal_(self.pos, std=0.02)
        layer = nn.TransformerEncoderLayer(
            width, heads, dim_feedforward=4 * width, dropout=0.0, activation="gelu",
            batch_first=True, norm_first=True,
        )
        self.encoder = nn.TransformerEncoder(layer, depth, enable_nested_tensor=False)
        self.norm = nn.LayerNorm(width)
        self.out_dim = width

    def forward(self, tiles):
        # tiles: (B, N, E) -> cls (B, W), tiles (B, N, W)
        x = self.proj(tiles)
        if self.pos is not None:
            x = x + self.pos
        x = torch.cat([self.cls_token.expand(x.shape[0], -1, -1), x], dim=1)
        x = self.norm(self.encoder(x))
        return x[:, 0], x[:, 1:]


class BackgroundFusion(nn.Module):
    """Concatenate raw and background tile embeddings (2E) and project to E."""

    def __init__(self, dim: int):
        super().__init__()
        self.fc = nn.Linear(2 * dim, dim)
        self.dim = dim

    def forward(self, raw, background):
        if raw.shape[-1] != self.dim or background.shape[-1] != self.dim:
            raise ValueError(
                f"fusion expects width {self.dim}, got {raw.shape[-1]} and {background.shape[-1]}"
            )
        return self.fc(torch.cat([raw, background], dim=-1))
