"""Accumulated-gradient SGD training, per-epoch checkpoints and evaluation."""

from __future__ import annotations

import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import torch
from torch.utils.data import DataLoader

from smokeynet.data import FireSequence
from smokeynet.dataset import PreparedData, TileSequenceDataset
from smokeynet.metrics import (
    MetricsReport,
    classification_metrics,
    measure_latency,
    time_to_detection,
    validation_error_rate,
)
from smokeynet.models import (
    ConfigError,
    ExtraChannel,
    SmokeyNet,
    VariantConfig,
    build,
    load_checkpoint,
    parameters_millions,
    predict,
    save_checkpoint,
)
from smokeynet.objective import LossWeights, total_loss
from smokeynet.preprocess import AugmentationPolicy, FrameDifferenceSubtractor, Mog2Subtractor

logger = logging.getLogger(__name__)

DEVICE_ENV = "SMOKEYNET_DEVICE"

# values tried when tuning; kept here so sweeps and docs agree
LR_GRID = (1e-2, 1e-3, 1e-4)
WEIGHT_DECAY_GRID = (1e-4, 1e-3)
RESIZE_GRID = (1.0, 0.9, 0.8, 0.5)
TILE_THRESHOLD_GRID = (0, 10, 100, 250)
DROPOUT_GRID = (0.0, 0.1)
IMAGE_POSITIVE_WEIGHT_GRID = (1.0, 2.0, 5.0, 10.0)


class DivergenceError(RuntimeError):
    pass


def select_device(default: str | None = None) -> torch.device:
    """``$SMOKEYNET_DEVICE`` if set, else CUDA when available, else CPU."""
    name = os.environ.get(DEVICE_ENV) or default
    if not name:
        name = "cuda" if torch.cuda.is_available() else "cpu"
    return torch.device(name)


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "sgd"
    learning_rate: float = 1e-3
    weight_decay: float = 1e-3
    momentum: float = 0.0
    dropout: float = 0.0
    micro_batch: int = 2
    effective_batch: int = 32
    epochs: int = 25
    seed: int = 0
    tile_positive_weight: float = 40.0
    image_positive_weight: float = 5.0
    normalize_tile_loss: bool = False
    augment: bool = True
    patience: int | None = None  # stop after this many epochs without a new best
    grad_clip: float | None = None
    eval_batch: int = 8

    def __post_init__(self) -> None:
        if self.optimizer not in ("sgd", "adamw"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.micro_batch < 1 or self.effective_batch < 1:
            raise ConfigError("batch sizes must be >= 1")
        if self.effective_batch % self.micro_batch:
            raise ConfigError(
                f"effective_batch {self.effective_batch} is not a multiple of micro_batch {self.micro_batch}"
            )
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ConfigError("learning_rate and weight_decay must be >= 0")

    @property
    def accumulation_steps(self) -> int:
        return self.effective_batch // self.micro_batch

    def steps_per_epoch(self, num_examples: int) -> int:
        batches = math.ceil(num_examples / self.micro_batch)
        return math.ceil(batches / self.accumulation_steps)

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(self.tile_positive_weight, self.image_positive_weight)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown train fields: {sorted(unknown)}")
        return cls(**data)

    def with_(self, **changes) -> "TrainConfig":
        return replace(self, **changes)


# Small-corpus settings used with the desk geometry.  A tiny training set
# gives only a handful of batch-32 steps per epoch, so steps are smaller and
# more frequent; plain SGD leaves the image head at "always positive" for the
# whole budget there, while AdamW separates the classes within ~10 epochs.
DESK_TRAIN = TrainConfig(optimizer="adamw", learning_rate=1e-4, weight_decay=1e-4,
                         micro_batch=2, effective_batch=4, epochs=25)


STREAMS = {"init": 0, "order": 1, "augment": 2}


def stream_seed(seed: int, name: str) -> int:
    """Derive an independent 32-bit seed for one named purpose."""
    return int(np.random.SeedSequence([seed, STREAMS[name]]).generate_state(1)[0])


# -- one optimizer step -------------------------------------------------------


def accumulate_step(model: torch.nn.Module, optimizer: torch.optim.Optimizer,
                    micro_batches: Sequence, loss_fn: Callable, grad_clip: float | None = None) -> list[float]:
    """Sum gradients of ``loss / k`` over ``k`` micro-batches, then step once.

    Returns each micro-batch's unscaled loss.  Raises DivergenceError on a
    non-finite loss before any parameter moves.
    """
    optimizer.zero_grad(set_to_none=True)
    k = len(micro_batches)
    losses = []
    for i, batch in enumerate(micro_batches):
        loss = loss_fn(model, batch)
        if not torch.isfinite(loss):
            raise DivergenceError(f"non-finite loss {loss.item()} at micro-batch {i}")
        (loss / k).backward()
        losses.append(float(loss.detach()))
    if grad_clip is not None:
        torch.nn.utils.clip_grad_norm_(model.parameters(), grad_clip)
    optimizer.step()
    return losses


def make_optimizer(model: torch.nn.Module, cfg: TrainConfig) -> torch.optim.Optimizer:
    params = [p for p in model.parameters() if p.requires_grad]
    if cfg.optimizer == "adamw":
        return torch.optim.AdamW(params, lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
    return torch.optim.SGD(params, lr=cfg.learning_rate, momentum=cfg.momentum, weight_decay=cfg.weight_decay)


# -- evaluation ---------------------------------------------------------------


@dataclass
class Predictions:
    fire_ids: list[str]
    offsets: list[int]
    labels: np.ndarray
    probabilities: np.ndarray
    predictions: np.ndarray

    def by_fire(self) -> dict[str, tuple[list[int], list[int], list[int]]]:
        out: dict[str, tuple[list[int], list[int], list[int]]] = {}
        for fid, off, y, p in zip(self.fire_ids, self.offsets, self.labels, self.predictions):
            o, ys, ps = out.setdefault(fid, ([], [], []))
            o.append(int(off))
            ys.append(int(y))
            ps.append(int(p))
        return out


@torch.no_grad()
def predict_dataset(model: SmokeyNet, dataset: TileSequenceDataset, batch_size: int = 8,
                    device: torch.device | None = None) -> Predictions:
    device = device or next(model.parameters()).device
    was_training = model.training
    model.eval()
    probs, preds, labels, idx = [], [], [], []
    for batch in DataLoader(dataset, batch_size=batch_size, shuffle=False):
        out = model(batch["x"].to(device))
        probs.append(torch.sigmoid(out.image_logit).cpu())
        preds.append(predict(out.image_logit).cpu())
        labels.append(batch["image_label"])
        idx.append(batch["index"])
    model.train(was_training)
    order = torch.cat(idx).tolist() if idx else []
    examples = [dataset.examples[i] for i in order]
    return Predictions(
        fire_ids=[e.fire_id for e in examples],
        offsets=[e.offset_seconds for e in examples],
        labels=torch.cat(labels).numpy() if labels else np.zeros(0, dtype=np.int64),
        probabilities=torch.cat(probs).numpy() if probs else np.zeros(0, dtype=np.float32),
        predictions=torch.cat(preds).numpy() if preds else np.zeros(0, dtype=np.int64),
    )


def report_for(preds: Predictions) -> MetricsReport:
    report = classification_metrics(preds.predictions, preds.labels)
    ttd = time_to_detection(preds.by_fire())
    report.ttd_minutes = ttd.mean_all
    report.ttd_minutes_detected = ttd.mean_detected
    report.ttd_per_fire = ttd.per_fire
    return report


def evaluate(model: SmokeyNet, dataset: TileSequenceDataset, batch_size: int = 8,
             latency_trials: int = 0) -> tuple[MetricsReport, Predictions]:
    """Metrics (with TTD, parameter count and optional latency) on one split."""
    preds = predict_dataset(model, dataset, batch_size)
    report = report_for(preds)
    report.params_millions = parameters_millions(model)
    if latency_trials and len(dataset):
        device = next(model.parameters()).device
        sample = dataset[0]["x"].unsqueeze(0).to(device)
        model.eval()
        report.latency_ms_per_image = measure_latency(model, sample, warmup=1, trials=latency_trials)
    return report, preds


# -- training run -------------------------------------------------------------


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_error: float
    train_accuracy: float  # running accuracy of the training forward passes
    optimizer_steps: int
    seconds: float


@dataclass
class RunRecord:
    variant: VariantConfig
    train: TrainConfig
    epochs: list[EpochRecord] = field(default_factory=list)
    selected_epoch: int | None = None
    checkpoint_dir: Path | None = None
    final: MetricsReport | None = None
    final_train: MetricsReport | None = None

    @property
    def val_errors(self) -> list[float]:
        return [e.val_error for e in self.epochs]

    def checkpoint_path(self, epoch: int) -> Path:
        if self.checkpoint_dir is None:
            raise ValueError("run has no checkpoint directory")
        return self.checkpoint_dir / f"epoch_{epoch:03d}.pt"

    def to_json(self) -> dict:
        def report(r):
            if r is None:
                return None
            d = {k: v for k, v in asdict(r).items() if k not in ("degenerate", "ttd_per_fire")}
            d["degenerate"] = sorted(r.degenerate)
            return d

        return {
            "variant": self.variant.to_dict(),
            "train": self.train.to_dict(),
            "epochs": [asdict(e) for e in self.epochs],
            "selected_epoch": self.selected_epoch,
            "final": report(self.final),
            "final_train": report(self.final_train),
        }


def select_epoch(val_errors: Sequence[float], first_epoch: int = 1) -> int:
    """Epoch number with the lowest validation error; the earliest on ties."""
    if not val_errors:
        raise ValueError("no epochs recorded")
    best = min(range(len(val_errors)), key=lambda i: (val_errors[i], i))
    return first_epoch + best


def _collate_chunks(dataset, order: Sequence[int], size: int) -> Iterable[dict]:
    for start in range(0, len(order), size):
        items = [dataset[i] for i in order[start : start + size]]
        yield {k: torch.stack([it[k] for it in items]) for k in items[0]}


def _loss_fn(weights: LossWeights, normalize_tiles: bool, device: torch.device):
    def fn(model, batch):
        out = model(batch["x"].to(device))
        fn.last = out
        return total_loss(
            out,
            batch["tile_labels"].to(device),
            batch["image_label"].to(device),
            weights,
            supervision=batch["has_tiles"].to(device),
            normalize_tiles=normalize_tiles,
        ).total

    fn.last = None
    return fn


SUBTRACTORS = {"diff": FrameDifferenceSubtractor, "mog2": Mog2Subtractor}


def make_datasets(data: PreparedData, variant: VariantConfig, cfg: TrainConfig,
                  subtractor: str = "diff") -> dict[str, TileSequenceDataset]:
    """Training (augmented), train-eval, validation and test datasets.

    Augmentation is applied to the training split only.
    """
    if subtractor not in SUBTRACTORS:
        raise ConfigError(f"unknown background subtractor {subtractor!r}; known: {', '.join(SUBTRACTORS)}")
    background = variant.extra_channel is ExtraChannel.BACKGROUND

    def ds(split: str, augment: bool) -> TileSequenceDataset:
        return TileSequenceDataset(
            data.split(split), data.geometry, variant.num_frames,
            background=background,
            augment=AugmentationPolicy() if augment else None,
            seed=stream_seed(cfg.seed, "augment"),
            subtractor=SUBTRACTORS[subtractor]() if background else None,
        )

    return {
        "train": ds("train", cfg.augment),
        "train_eval": ds("train", False),
        "val": ds("val", False),
        "test": ds("test", False),
    }


def train(variant: VariantConfig, cfg: TrainConfig, data: PreparedData | dict[str, TileSequenceDataset],
          out_dir: str | Path, device: torch.device | None = None, latency_trials: int = 0,
          subtractor: str = "diff") -> RunRecord:
    """Train one variant, checkpointing every epoch, and evaluate the
    checkpoint with the lowest validation error on the test split."""
    device = device or select_device()
    datasets = make_datasets(data, variant, cfg, subtractor) if isinstance(data, PreparedData) else data
    train_ds, val_ds = datasets["train"], datasets["val"]
    if len(train_ds) == 0:
        raise ConfigError("training split is empty")
    if not train_ds.has_tile_supervision:
        raise ConfigError("training split has no tile supervision")
    if len(val_ds) == 0:
        raise ConfigError("validation split is empty")

    out_dir = Path(out_dir)
    ckpt_dir = out_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    record = RunRecord(variant=variant, train=cfg, checkpoint_dir=ckpt_dir)

    torch.manual_seed(stream_seed(cfg.seed, "init"))
    model = build(variant, dropout=cfg.dropout).to(device)
    optimizer = make_optimizer(model, cfg)
    order_rng = np.random.default_rng(stream_seed(cfg.seed, "order"))
    loss_fn = _loss_fn(cfg.loss_weights, cfg.normalize_tile_loss, device)
    k = cfg.accumulation_steps

    best, stale = math.inf, 0
    for epoch in range(1, cfg.epochs + 1):
        start = time.perf_counter()
        model.train()
        train_ds.set_epoch(epoch)
        order = order_rng.permutation(len(train_ds)).tolist()
        batches = list(_collate_chunks(train_ds, order, cfg.micro_batch))
        losses, correct, seen, steps = [], 0, 0, 0
        for g in range(0, len(batches), k):
            group = batches[g : g + k]
            outputs = []

            def tracked(m, b):
                loss = loss_fn(m, b)
                outputs.append((loss_fn.last.image_logit.detach().cpu(), b["image_label"]))
                return loss

            try:
                losses += accumulate_step(model, optimizer, group, tracked, cfg.grad_clip)
            except DivergenceError as exc:
                bad = group[len(outputs) - 1]
                fires = [train_ds.examples[i].fire_id for i in bad["index"].tolist()]
                offsets = [train_ds.examples[i].offset_seconds for i in bad["index"].tolist()]
                logger.error("epoch %d step %d: %s; batch fires=%s offsets=%s", epoch, steps, exc, fires, offsets)
                raise DivergenceError(f"epoch {epoch}: {exc}; batch fires={fires} offsets={offsets}") from exc
            steps += 1
            for logits, y in outputs:
                correct += int((predict(logits) == y).sum())
                seen += len(y)

        val = predict_dataset(model, val_ds, cfg.eval_batch, device)
        val_error = validation_error_rate(val.predictions, val.labels)
        rec = EpochRecord(epoch, float(np.mean(losses)), val_error, correct / seen, steps,
                          time.perf_counter() - start)
        record.epochs.append(rec)
        save_checkpoint(record.checkpoint_path(epoch), model, epoch, val_error)
        logger.info("epoch %d loss %.4f train acc %.3f val err %.3f (%.1fs)",
                    epoch, rec.train_loss, rec.train_accuracy, val_error, rec.seconds)

        if val_error < best:
            best, stale = val_error, 0
        else:
            stale += 1
        if cfg.patience is not None and stale >= cfg.patience:
            logger.info("no validation improvement for %d epochs; stopping", stale)
            break

    record.selected_epoch = select_epoch(record.val_errors)
    best_model, _ = load_checkpoint(record.checkpoint_path(record.selected_epoch))
    best_model.to(device)
    if "train_eval" in datasets:
        record.final_train, _ = evaluate(best_model, datasets["train_eval"], cfg.eval_batch)
    test_ds = datasets.get("test")
    if test_ds is not None and len(test_ds):
        record.final, _ = evaluate(best_model, test_ds, cfg.eval_batch, latency_trials)
    (out_dir / "run.json").write_text(json.dumps(record.to_json(), indent=2))
    return record
