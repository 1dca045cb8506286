"""Train or load several variants and tabulate their test metrics."""

from __future__ import annotations

import json
import logging
import re
import traceback
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import torch

from smokeynet.dataset import PreparedData, TileSequenceDataset
from smokeynet.metrics import MetricsReport, write_metrics_table
from smokeynet.models import VariantConfig, load_checkpoint
from smokeynet.training import RunRecord, TrainConfig, evaluate, make_datasets, select_device, train

logger = logging.getLogger(__name__)


@dataclass
class SuiteRow:
    name: str
    variant: VariantConfig
    seed: int
    report: MetricsReport | None = None
    run: RunRecord | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name)


def _load_existing(run_dir: Path, datasets: dict[str, TileSequenceDataset], cfg: TrainConfig,
                   latency_trials: int) -> MetricsReport | None:
    meta = run_dir / "run.json"
    if not meta.exists():
        return None
    selected = json.loads(meta.read_text()).get("selected_epoch")
    path = run_dir / "checkpoints" / f"epoch_{selected:03d}.pt"
    if selected is None or not path.exists():
        return None
    model, _ = load_checkpoint(path)
    model.to(select_device())
    report, _ = evaluate(model, datasets["test"], cfg.eval_batch, latency_trials)
    return report


def run_suite(variants: Sequence[VariantConfig | tuple[str, VariantConfig]], train_cfg: TrainConfig,
              data: PreparedData, out_dir: str | Path, latency_trials: int = 5, reuse: bool = False,
              subtractor: str = "diff") -> list[SuiteRow]:
    """Train each variant in order and write ``suite.tsv`` and ``suite.json``.

    A repeated variant gets the next seed up, so its row is an independent
    run.  A variant that fails is recorded with its error and the suite
    moves on.  With ``reuse`` a finished run directory is evaluated instead
    of retrained.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows: list[SuiteRow] = []
    seen: dict[VariantConfig, int] = {}
    for item in variants:
        name, variant = item if isinstance(item, tuple) else (item.backbone.value + "_" + item.temporal.value
                                                               + "_" + item.spatial.value, item)
        repeat = seen.get(variant, 0)
        seen[variant] = repeat + 1
        seed = train_cfg.seed + repeat
        label = name if repeat == 0 else f"{name}#{repeat + 1}"
        row = SuiteRow(label, variant, seed)
        run_dir = out_dir / _slug(label)
        cfg = train_cfg.with_(seed=seed)
        try:
            report = None
            if reuse:
                report = _load_existing(run_dir, make_datasets(data, variant, cfg, subtractor), cfg, latency_trials)
            if report is None:
                row.run = train(variant, cfg, data, run_dir, latency_trials=latency_trials, subtractor=subtractor)
                report = row.run.final
            row.report = report
        except Exception as exc:  # isolate: one broken variant must not sink the suite
            row.error = f"{type(exc).__name__}: {exc}"
            logger.error("variant %s failed: %s\n%s", label, row.error, traceback.format_exc())
        finally:
            if torch.cuda.is_available():
                torch.cuda.empty_cache()
        rows.append(row)
    write_suite(out_dir, rows)
    return rows


def write_suite(out_dir: str | Path, rows: Sequence[SuiteRow]) -> None:
    out_dir = Path(out_dir)
    write_metrics_table(out_dir / "suite.tsv", [(r.name, r.report) for r in rows])
    summary = [
        {"name": r.name, "seed": r.seed, "variant": r.variant.to_dict(), "error": r.error,
         "selected_epoch": r.run.selected_epoch if r.run else None}
        for r in rows
    ]
    (out_dir / "suite.json").write_text(json.dumps(summary, indent=2))
