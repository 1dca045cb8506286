"""Weighted binary cross-entropy with per-stage tile supervision."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import torch

from smokeynet.data import SupervisionKind

EPS = 1e-7


class SupervisionError(ValueError):
    pass


@dataclass(frozen=True)
class LossWeights:
    tile_positive_weight: float = 40.0
    image_positive_weight: float = 5.0

    def __post_init__(self) -> None:
        if self.tile_positive_weight <= 0 or self.image_positive_weight <= 0:
            raise ValueError("positive weights must be > 0")


@dataclass
class LossBreakdown:
    image_term: torch.Tensor
    tile_terms: dict[str, torch.Tensor] = field(default_factory=dict)

    @property
    def total(self) -> torch.Tensor:
        total = self.image_term
        for term in self.tile_terms.values():
            total = total + term
        return total


def _as_tensor(x, like: torch.Tensor | None = None) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    dtype = like.dtype if like is not None else torch.float64
    return torch.as_tensor(x, dtype=dtype)


def weighted_bce(probabilities, labels, positive_weight: float = 1.0, eps: float = EPS,
                 dim: int | None = None) -> torch.Tensor:
    """``-mean(w*y*log p + (1-y)*log(1-p))`` with ``p`` clamped to ``[eps, 1-eps]``.

    ``dim=None`` averages over everything; otherwise over ``dim`` only.
    """
    p = _as_tensor(probabilities)
    y = _as_tensor(labels, p).to(p.dtype)
    if p.numel() == 0:
        raise ValueError("weighted_bce of an empty batch is undefined")
    if p.shape != y.shape:
        raise ValueError(f"shape mismatch: {tuple(p.shape)} vs {tuple(y.shape)}")
    p = p.clamp(eps, 1 - eps)
    terms = positive_weight * y * torch.log(p) + (1 - y) * torch.log1p(-p)
    return -(terms.mean() if dim is None else terms.mean(dim=dim))


def weighted_bce_grad(probabilities, labels, positive_weight: float = 1.0) -> torch.Tensor:
    """Closed-form d(loss)/dp for unclamped probabilities."""
    p = _as_tensor(probabilities)
    y = _as_tensor(labels, p).to(p.dtype)
    n = p.numel()
    return -(positive_weight * y / p - (1 - y) / (1 - p)) / n


def total_loss(outputs, tile_labels: torch.Tensor | None, image_labels: torch.Tensor,
               weights: LossWeights = LossWeights(),
               supervision: Sequence[SupervisionKind] | torch.Tensor | None = None,
               normalize_tiles: bool = False) -> LossBreakdown:
    """Image BCE plus, per stage, the sum over tile positions of the
    batch-averaged tile BCE.

    ``supervision`` marks EXCLUDED examples (a list of kinds or a boolean
    "has tile labels" tensor); those contribute to the image term only.
    ``tile_labels`` rows may be negative where labels are unknown.
    """
    image_labels = image_labels.to(outputs.image_logit.dtype)
    image_term = weighted_bce(torch.sigmoid(outputs.image_logit), image_labels, weights.image_positive_weight)
    breakdown = LossBreakdown(image_term=image_term)

    stages = outputs.stages()
    b = image_labels.shape[0]
    if supervision is None:
        keep = torch.ones(b, dtype=torch.bool)
    elif isinstance(supervision, torch.Tensor):
        keep = supervision.to(torch.bool)
    else:
        keep = torch.tensor([s is not SupervisionKind.EXCLUDED for s in supervision], dtype=torch.bool)

    if not keep.any():
        for name, logits in stages.items():
            breakdown.tile_terms[name] = logits.new_zeros(())
        return breakdown
    if tile_labels is None or (tile_labels[keep] < 0).any():
        raise SupervisionError("tile labels missing for an example that is not EXCLUDED")

    y = tile_labels[keep].to(image_term.dtype)
    for name, logits in stages.items():
        per_tile = weighted_bce(torch.sigmoid(logits[keep]), y, weights.tile_positive_weight, dim=0)
        term = per_tile.sum()
        if normalize_tiles:
            term = term / per_tile.numel()
        breakdown.tile_terms[name] = term
    return breakdown
