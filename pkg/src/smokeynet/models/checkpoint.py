"""Checkpoint files: weights + variant config + epoch + validation error rate."""

from __future__ import annotations

from pathlib import Path

import torch

from smokeynet.models.config import VariantConfig
from smokeynet.models.smokeynet import SmokeyNet, build

FORMAT_VERSION = 1


def save_checkpoint(path: str | Path, model: SmokeyNet, epoch: int, val_error_rate: float,
                    extra: dict | None = None) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "variant": model.config.to_dict(),
        "epoch": epoch,
        "val_error_rate": float(val_error_rate),
        "state_dict": model.state_dict(),
        "extra": extra or {},
    }
    torch.save(payload, Path(path))


def read_checkpoint(path: str | Path) -> dict:
    payload = torch.load(Path(path), map_location="cpu", weights_only=False)
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint format {version!r}")
    return payload


def load_checkpoint(path: str | Path, dropout: float = 0.0) -> tuple[SmokeyNet, dict]:
    """Rebuild the stored variant (random init, no download) and load its weights."""
    payload = read_checkpoint(path)
    config = VariantConfig.from_dict(payload["variant"]).with_(pretrained_backbone=False)
    model = build(config, dropout)
    model.load_state_dict(payload["state_dict"])
    meta = {k: v for k, v in payload.items() if k != "state_dict"}
    return model, meta
