import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from smokeynet.data import SupervisionKind
from smokeynet.models import ModelOutputs
from smokeynet.objective import (
    LossWeights,
    SupervisionError,
    total_loss,
    weighted_bce,
    weighted_bce_grad,
)

LN2 = math.log(2)


def _outputs(batch=1, stages=3, logit=0.0):
    tiles = torch.full((batch, 45), logit, dtype=torch.float64)
    names = ["cnn", "temporal", "spatial"][:stages]
    return ModelOutputs(
        image_logit=torch.full((batch,), logit, dtype=torch.float64),
        **{f"tile_logits_{n}": tiles.clone() for n in names},
    )


def test_positive_half_probability_costs_weight_times_ln2():
    assert weighted_bce([0.5], [1], positive_weight=5.0).item() == pytest.approx(5 * LN2, abs=1e-12)


def test_negative_half_probability_costs_ln2():
    assert weighted_bce([0.5], [0], positive_weight=5.0).item() == pytest.approx(LN2, abs=1e-12)


def test_all_half_negative_example_over_three_stages():
    out = _outputs()
    lb = total_loss(out, torch.zeros(1, 45, dtype=torch.int64), torch.zeros(1))
    assert lb.total.item() == pytest.approx(136 * LN2, abs=1e-9)
    assert lb.total.item() == pytest.approx(94.27, abs=0.01)


def test_batch_averaging_per_tile_then_sum_over_tiles():
    # 2 examples, tile 0 positive in the first only, everything at p=0.5
    labels = torch.zeros(2, 45, dtype=torch.int64)
    labels[0, 0] = 1
    lb = total_loss(_outputs(batch=2, stages=1), labels, torch.tensor([1.0, 0.0]))
    tile0 = (40 * LN2 + LN2) / 2
    assert lb.tile_terms["cnn"].item() == pytest.approx(tile0 + 44 * LN2, abs=1e-9)
    assert lb.image_term.item() == pytest.approx((5 * LN2 + LN2) / 2, abs=1e-9)


def test_normalized_tiles_divide_by_tile_count():
    lb = total_loss(_outputs(stages=1), torch.zeros(1, 45, dtype=torch.int64), torch.zeros(1),
                    normalize_tiles=True)
    assert lb.tile_terms["cnn"].item() == pytest.approx(LN2, abs=1e-9)


def test_excluded_examples_contribute_only_the_image_term():
    out = _outputs(batch=2)
    labels = torch.zeros(2, 45, dtype=torch.int64)
    labels[1] = -1
    kinds = [SupervisionKind.CONTOUR, SupervisionKind.EXCLUDED]
    lb = total_loss(out, labels, torch.tensor([1.0, 1.0]), supervision=kinds)
    # tile terms come from the first example alone
    assert lb.tile_terms["spatial"].item() == pytest.approx(45 * LN2, abs=1e-9)
    assert lb.image_term.item() == pytest.approx(5 * LN2, abs=1e-9)

    only = total_loss(_outputs(), None, torch.ones(1), supervision=torch.tensor([False]))
    assert only.total.item() == pytest.approx(5 * LN2, abs=1e-9)


def test_missing_tile_labels_raise():
    with pytest.raises(SupervisionError):
        total_loss(_outputs(), None, torch.ones(1))
    labels = -torch.ones(1, 45, dtype=torch.int64)
    with pytest.raises(SupervisionError):
        total_loss(_outputs(), labels, torch.ones(1), supervision=[SupervisionKind.BOX_FILL])


def test_clamping_keeps_loss_finite():
    assert math.isfinite(weighted_bce([0.0, 1.0], [1, 0], 40.0).item())


def test_empty_and_mismatched_inputs():
    with pytest.raises(ValueError):
        weighted_bce(torch.zeros(0), torch.zeros(0))
    with pytest.raises(ValueError):
        weighted_bce(torch.zeros(3), torch.zeros(2))
    with pytest.raises(ValueError):
        LossWeights(0, 5)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.5, 50.0))
def test_analytic_gradient_matches_autograd(seed, weight):
    rng = np.random.default_rng(seed)
    p = torch.tensor(rng.uniform(0.05, 0.95, 12), requires_grad=True)
    y = torch.tensor(rng.integers(0, 2, 12), dtype=torch.float64)
    weighted_bce(p, y, weight).backward()
    torch.testing.assert_close(p.grad, weighted_bce_grad(p.detach(), y, weight), rtol=1e-10, atol=1e-12)


def test_finite_difference_gradient():
    rng = np.random.default_rng(4)
    p = rng.uniform(0.1, 0.9, 6)
    y = rng.integers(0, 2, 6).astype(float)
    analytic = weighted_bce_grad(torch.tensor(p), torch.tensor(y), 5.0).numpy()
    h = 1e-6
    for i in range(6):
        up, dn = p.copy(), p.copy()
        up[i] += h
        dn[i] -= h
        fd = (weighted_bce(up, y, 5.0).item() - weighted_bce(dn, y, 5.0).item()) / (2 * h)
        assert fd == pytest.approx(analytic[i], rel=1e-5)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_loss_is_nonnegative_and_zero_only_when_perfect(seed):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, 10)
    p = rng.uniform(0.01, 0.99, 10)
    assert weighted_bce(p, y, 40.0).item() > 0
    assert weighted_bce(y.astype(float), y, 40.0).item() < 1e-5
