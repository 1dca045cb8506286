import json
import math

import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st
from torch import nn

from smokeynet.dataset import TileSequenceDataset, prepare_splits
from smokeynet.models import ConfigError, load_checkpoint, preset
from smokeynet.preprocess import DESK
from smokeynet.training import (
    DESK_TRAIN,
    DEVICE_ENV,
    DivergenceError,
    TrainConfig,
    accumulate_step,
    make_datasets,
    make_optimizer,
    select_device,
    select_epoch,
    stream_seed,
    train,
)


def test_default_config_accumulates_16_micro_batches():
    cfg = TrainConfig()
    assert cfg.micro_batch == 2 and cfg.effective_batch == 32
    assert cfg.accumulation_steps == 16


@given(st.integers(1, 5000))
def test_steps_per_epoch(n):
    cfg = TrainConfig()
    assert cfg.steps_per_epoch(n) == math.ceil(math.ceil(n / 2) / 16)


@pytest.mark.parametrize("changes", [
    dict(optimizer="rmsprop"), dict(micro_batch=0), dict(micro_batch=3, effective_batch=32),
    dict(epochs=0), dict(learning_rate=-1.0),
])
def test_invalid_train_config(changes):
    with pytest.raises(ConfigError):
        TrainConfig(**changes)


def test_train_config_round_trip():
    cfg = TrainConfig(optimizer="adamw", patience=3)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"lr": 1})
    assert DESK_TRAIN.effective_batch % DESK_TRAIN.micro_batch == 0


def test_seed_streams_are_distinct_and_stable():
    seeds = {stream_seed(0, n) for n in ("init", "order", "augment")}
    assert len(seeds) == 3
    assert stream_seed(5, "init") == stream_seed(5, "init") != stream_seed(6, "init")


def test_select_device_honours_env(monkeypatch):
    monkeypatch.setenv(DEVICE_ENV, "cpu")
    assert select_device().type == "cpu"
    monkeypatch.delenv(DEVICE_ENV)
    assert select_device().type in ("cpu", "cuda")


def test_select_epoch_earliest_minimum():
    assert select_epoch([0.3, 0.1, 0.2, 0.1]) == 2
    assert select_epoch([0.5]) == 1
    assert select_epoch([0.2, 0.2], first_epoch=0) == 0
    with pytest.raises(ValueError):
        select_epoch([])


def _tiny(seed=0):
    torch.manual_seed(seed)
    return nn.Sequential(nn.Linear(6, 8), nn.Tanh(), nn.Linear(8, 1))


def _mse(model, batch):
    x, y = batch
    return ((model(x).squeeze(-1) - y) ** 2).mean()


def test_accumulation_equals_one_large_batch():
    g = torch.Generator().manual_seed(1)
    x, y = torch.randn(8, 6, generator=g), torch.randn(8, generator=g)
    a, b = _tiny(), _tiny()
    opt_a = torch.optim.SGD(a.parameters(), lr=0.1, momentum=0.9)
    opt_b = torch.optim.SGD(b.parameters(), lr=0.1, momentum=0.9)
    for _ in range(3):
        accumulate_step(a, opt_a, [(x[i : i + 2], y[i : i + 2]) for i in range(0, 8, 2)], _mse)
        accumulate_step(b, opt_b, [(x, y)], _mse)
    for pa, pb in zip(a.parameters(), b.parameters()):
        torch.testing.assert_close(pa, pb, atol=1e-6, rtol=0)


def test_zero_learning_rate_leaves_weights_unchanged():
    model = _tiny()
    before = [p.detach().clone() for p in model.parameters()]
    opt = make_optimizer(model, TrainConfig(learning_rate=0.0, weight_decay=0.0))
    accumulate_step(model, opt, [(torch.randn(2, 6), torch.randn(2))], _mse)
    assert all(torch.equal(p, q) for p, q in zip(model.parameters(), before))


def test_non_finite_loss_raises_before_update():
    model = _tiny()
    before = [p.detach().clone() for p in model.parameters()]
    opt = torch.optim.SGD(model.parameters(), lr=0.1)
    batches = [(torch.randn(2, 6), torch.randn(2)), (torch.randn(2, 6), torch.tensor([float("nan"), 0.0]))]
    with pytest.raises(DivergenceError, match="micro-batch 1"):
        accumulate_step(model, opt, batches, _mse)
    assert all(torch.equal(p, q) for p, q in zip(model.parameters(), before))


def test_grad_clip_bounds_the_update():
    model = _tiny()
    before = [p.detach().clone() for p in model.parameters()]
    opt = torch.optim.SGD(model.parameters(), lr=1.0)
    accumulate_step(model, opt, [(torch.randn(2, 6) * 100, torch.randn(2) * 100)], _mse, grad_clip=0.5)
    moved = torch.sqrt(sum(((p - q) ** 2).sum() for p, q in zip(model.parameters(), before)))
    assert moved.item() <= 0.5 + 1e-5


VARIANT = preset("resnet34_1frame", tile_size=DESK.tile_size)
FAST = TrainConfig(micro_batch=2, effective_batch=4, epochs=2, augment=False, learning_rate=1e-3)


def _datasets(corpus, variant=VARIANT):
    data = prepare_splits(corpus.root, geometry=DESK)
    one = data.split("train")[:1]
    return {
        "train": TileSequenceDataset(one, DESK, variant.num_frames),
        "val": TileSequenceDataset(data.split("val"), DESK, variant.num_frames),
        "test": TileSequenceDataset(data.split("test"), DESK, variant.num_frames),
    }


def test_train_writes_checkpoints_and_selects_val_minimum(small_corpus, tmp_path):
    run = train(VARIANT, FAST, _datasets(small_corpus), tmp_path, device=torch.device("cpu"))
    assert [e.epoch for e in run.epochs] == [1, 2]
    assert all(e.optimizer_steps == 2 for e in run.epochs)  # 7 examples -> 4 micro -> 2 steps
    assert run.selected_epoch == select_epoch(run.val_errors)
    for e in run.epochs:
        _, meta = load_checkpoint(run.checkpoint_path(e.epoch))
        assert meta["epoch"] == e.epoch and meta["val_error_rate"] == e.val_error
    assert run.final is not None and run.final.total == 7
    doc = json.loads((tmp_path / "run.json").read_text())
    assert doc["selected_epoch"] == run.selected_epoch
    assert len(doc["epochs"]) == 2


def test_train_is_deterministic(small_corpus, tmp_path):
    cfg = FAST.with_(epochs=1)
    a = train(VARIANT, cfg, _datasets(small_corpus), tmp_path / "a", device=torch.device("cpu"))
    b = train(VARIANT, cfg, _datasets(small_corpus), tmp_path / "b", device=torch.device("cpu"))
    assert a.epochs[0].train_loss == b.epochs[0].train_loss
    sa = torch.load(a.checkpoint_path(1), weights_only=False)["state_dict"]
    sb = torch.load(b.checkpoint_path(1), weights_only=False)["state_dict"]
    assert all(torch.equal(sa[k], sb[k]) for k in sa)


def test_patience_stops_early(small_corpus, tmp_path):
    cfg = FAST.with_(epochs=5, patience=1, learning_rate=0.0, weight_decay=0.0)
    run = train(VARIANT, cfg, _datasets(small_corpus), tmp_path, device=torch.device("cpu"))
    assert len(run.epochs) == 2 and run.selected_epoch == 1


def test_train_without_tile_supervision_is_rejected(tmp_path):
    from smokeynet.synthetic import SyntheticSpec, generate_synthetic_corpus

    spec = SyntheticSpec(num_fires=4, frames_per_fire=3, geometry=DESK, unannotated_fraction=1.0, plume=True)
    corpus = generate_synthetic_corpus(spec, tmp_path / "c")
    data = prepare_splits(corpus.root, geometry=DESK)
    ds = _datasets(corpus)
    # keep positives only: all EXCLUDED
    ds["train"].examples = [e for e in ds["train"].examples if e.image_label]
    with pytest.raises(ConfigError, match="tile supervision"):
        train(VARIANT, FAST, ds, tmp_path / "run")
    empty = dict(ds, train=TileSequenceDataset([], DESK, 1))
    with pytest.raises(ConfigError, match="empty"):
        train(VARIANT, FAST, empty, tmp_path / "run")
    assert set(make_datasets(data, VARIANT, FAST)) == {"train", "train_eval", "val", "test"}
    with pytest.raises(ConfigError):
        make_datasets(data, VARIANT, FAST, subtractor="median")


class _PoisonedDataset(TileSequenceDataset):
    def __getitem__(self, index):
        item = super().__getitem__(index)
        item["x"] = torch.full_like(item["x"], float("nan"))
        return item


def test_divergence_names_the_batch(small_corpus, tmp_path):
    ds = _datasets(small_corpus)
    ds["train"].__class__ = _PoisonedDataset
    with pytest.raises(DivergenceError, match="batch fires="):
        train(VARIANT, FAST.with_(epochs=1), ds, tmp_path, device=torch.device("cpu"))


def test_augmentation_only_on_training_split(small_corpus):
    data = prepare_splits(small_corpus.root, geometry=DESK)
    ds = make_datasets(data, VARIANT, TrainConfig())
    assert ds["train"].augment is not None
    assert ds["train_eval"].augment is None and ds["val"].augment is None and ds["test"].augment is None
