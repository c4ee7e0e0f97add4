import math

import numpy as np
import pytest

import semivox.autodiff as ad
from semivox import (
    BinaryMask,
    ConfigError,
    GraphError,
    ProbVolume,
    RampConfig,
    ce_loss,
    dice_jaccard,
    dice_loss,
    plc_loss,
    ramp_gamma,
    src_loss,
    total_loss,
)


def prob(ch1):
    ch1 = np.asarray(ch1, dtype=np.float64)
    return ProbVolume(ch1.shape, 1.0 - ch1, ch1)


def mask(data):
    data = np.asarray(data, dtype=np.uint8)
    return BinaryMask(data.shape, data)


# ---------------------------------------------------------------------------
# dice


def test_dice_perfect_binary_prediction():
    rng = np.random.default_rng(0)
    y = (rng.random((4, 4, 4)) < 0.5).astype(np.float64)
    if y.sum() == 0:
        y[0, 0, 0] = 1.0
    assert dice_loss(y, y).item() < 1e-4


def test_dice_disjoint_prediction():
    p = np.zeros((4, 4, 4))
    y = np.zeros((4, 4, 4))
    p[0] = 1.0
    y[2] = 1.0
    assert dice_loss(p, y).item() > 0.999


def test_dice_uniform_half_coverage():
    n = 8**3
    p = np.full((8, 8, 8), 0.5)
    y = np.zeros((8, 8, 8))
    y[:4] = 1.0
    # 1 - (2*0.25N + eps) / (0.5N + 0.5N + eps)
    want = 1.0 - (0.5 * n + 1e-5) / (n + 1e-5)
    assert abs(dice_loss(p, y).item() - want) < 1e-6
    assert abs(dice_loss(p, y).item() - 0.5) < 1e-6


def test_dice_matches_overlap_metric_on_binary():
    rng = np.random.default_rng(1)
    p = rng.random((6, 6, 6)) < 0.4
    y = rng.random((6, 6, 6)) < 0.4
    loss = dice_loss(p.astype(np.float64), y.astype(np.float64)).item()
    dice, _ = dice_jaccard(mask(p), mask(y))
    assert abs((1.0 - loss) - dice) < 2e-5


def test_dice_accepts_two_channel_prediction():
    rng = np.random.default_rng(2)
    pv = prob(rng.random((4, 4, 4)))
    y = (rng.random((4, 4, 4)) < 0.5).astype(np.float64)
    via_volume = dice_loss(pv, y).item()
    via_channel = dice_loss(pv.ch1, y).item()
    assert abs(via_volume - via_channel) < 1e-12


# ---------------------------------------------------------------------------
# cross entropy


def test_ce_perfect_one_hot_is_clamp_limited():
    y = np.zeros((4, 4, 4))
    y[1] = 1.0
    loss = ce_loss(prob(y), y).item()
    assert abs(loss - -math.log(1.0 - 1e-7)) < 1e-12
    assert loss < 2e-7


def test_ce_uniform_prediction_is_ln2():
    y = (np.random.default_rng(3).random((4, 4, 4)) < 0.5).astype(np.float64)
    p = prob(np.full((4, 4, 4), 0.5))
    assert abs(ce_loss(p, y).item() - math.log(2.0)) < 1e-9


def test_ce_elementwise_oracle():
    rng = np.random.default_rng(4)
    p1 = rng.uniform(0.05, 0.95, (4, 4, 4))
    y = (rng.random((4, 4, 4)) < 0.5).astype(np.float64)
    got = ce_loss(prob(p1), y).item()
    want = 0.0
    for idx in np.ndindex(4, 4, 4):
        want -= math.log(p1[idx] if y[idx] == 1 else 1.0 - p1[idx])
    want /= 4**3
    assert abs(got - want) < 1e-12


# ---------------------------------------------------------------------------
# consistency losses


def test_plc_identical_branches():
    rng = np.random.default_rng(5)
    p = prob(rng.random((4, 4, 4)))
    assert plc_loss(p, p).item() == 0.0


def test_plc_maximal_disagreement():
    a = prob(np.zeros((4, 4, 4)))  # (1, 0)
    b = prob(np.ones((4, 4, 4)))  # (0, 1)
    assert abs(plc_loss(a, b).item() - 1.0) < 1e-12


def test_plc_elementwise_oracle_and_symmetry():
    rng = np.random.default_rng(6)
    a, b = prob(rng.random((4, 4, 4))), prob(rng.random((4, 4, 4)))
    got = plc_loss(a, b).item()
    diffs = np.stack([a.ch0 - b.ch0, a.ch1 - b.ch1])
    assert abs(got - np.mean(diffs**2)) < 1e-12
    assert abs(got - plc_loss(b, a).item()) < 1e-15


def test_src_identity():
    rng = np.random.default_rng(7)
    t = rng.uniform(-1, 1, (4, 4, 4))
    assert src_loss(t, t, t).item() == 0.0


def test_src_two_unit_errors():
    t = np.zeros((4, 4, 4))
    assert abs(src_loss(t, np.ones((4, 4, 4)), -np.ones((4, 4, 4))).item() - 2.0) < 1e-12


def test_src_elementwise_oracle_and_symmetry():
    rng = np.random.default_rng(8)
    t = rng.uniform(-1, 1, (4, 4, 4))
    rl = rng.uniform(-1, 1, (4, 4, 4))
    rh = rng.uniform(-1, 1, (4, 4, 4))
    got = src_loss(t, rl, rh).item()
    want = np.mean((t - rl) ** 2 + (t - rh) ** 2)
    assert abs(got - want) < 1e-12
    assert abs(got - src_loss(t, rh, rl).item()) < 1e-15


def test_losses_permutation_equivariant():
    rng = np.random.default_rng(9)
    perm = rng.permutation(4**3)

    def shuffled(a):
        return a.reshape(-1)[perm].reshape(4, 4, 4)

    p1 = rng.uniform(0.05, 0.95, (4, 4, 4))
    y = (rng.random((4, 4, 4)) < 0.5).astype(np.float64)
    t = rng.uniform(-1, 1, (4, 4, 4))
    r = rng.uniform(-1, 1, (4, 4, 4))
    assert abs(dice_loss(p1, y).item() - dice_loss(shuffled(p1), shuffled(y)).item()) < 1e-12
    assert abs(ce_loss(prob(p1), y).item() - ce_loss(prob(shuffled(p1)), shuffled(y)).item()) < 1e-12
    assert abs(src_loss(t, r, r).item() - src_loss(shuffled(t), shuffled(r), shuffled(r)).item()) < 1e-12


def test_loss_dim_mismatch():
    with pytest.raises(GraphError):
        dice_loss(np.zeros((4, 4, 4)), np.zeros((4, 4, 8)))
    with pytest.raises(GraphError):
        plc_loss(prob(np.zeros((4, 4, 4))), prob(np.zeros((4, 4, 8))))


# ---------------------------------------------------------------------------
# ramp schedule


def test_ramp_endpoints():
    cfg = RampConfig(gamma_max=1.0, ramp_epochs=40)
    assert ramp_gamma(40, cfg) == 1.0
    assert ramp_gamma(100, cfg) == 1.0
    assert abs(ramp_gamma(0, cfg) - math.exp(-5.0)) < 1e-12
    assert abs(ramp_gamma(20, cfg) - math.exp(-5.0 * 0.25)) < 1e-12


def test_ramp_monotone_nondecreasing():
    cfg = RampConfig()
    values = [ramp_gamma(e, cfg) for e in range(60)]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_ramp_validation():
    with pytest.raises(ConfigError):
        RampConfig(gamma_max=0.0)
    with pytest.raises(ConfigError):
        ramp_gamma(-1, RampConfig())


# ---------------------------------------------------------------------------
# total loss


def test_total_weighted_single_term():
    b = total_loss(1.0, 0.0, 0.0, 0.0, beta=0.5, gamma=0.0)
    assert b.total == 0.5
    assert b.l_seg == 1.0


def test_total_consistency_only():
    b = total_loss(0.0, 0.0, 0.2, 0.3, beta=123.0, gamma=1.0)
    assert abs(b.total - 0.5) < 1e-12


def test_total_unlabeled_drops_supervised_term():
    b = total_loss(0.7, 0.3, 0.2, 0.1, beta=0.5, gamma=1.0, labeled=False)
    assert b.l_dice == 0.0 and b.l_ce == 0.0
    assert abs(b.total - 0.3) < 1e-12


def test_total_random_arithmetic_oracle():
    rng = np.random.default_rng(10)
    for _ in range(20):
        d, c, p, s = rng.random(4)
        beta, gamma = rng.random(2)
        b = total_loss(d, c, p, s, beta, gamma)
        assert abs(b.total - (beta * (d + c) + gamma * (p + s))) < 1e-12
        assert abs(b.l_seg - (b.l_dice + b.l_ce)) < 1e-9


# ---------------------------------------------------------------------------
# gradients through every loss


def test_loss_gradients_match_finite_differences():
    rng = np.random.default_rng(11)
    y = (rng.random((4, 4, 4)) < 0.5).astype(np.float64)
    t = rng.uniform(-0.9, 0.9, (4, 4, 4))

    def full_loss(logits):
        seg = ad.softmax_channels(logits)
        reg = ad.tanh(ad.select_channel(logits, 0))
        return ad.add(
            ad.add(dice_loss(seg, y), ce_loss(seg, y)),
            ad.add(plc_loss(seg, prob(np.full((4, 4, 4), 0.4))), src_loss(t, reg, reg)),
        )

    base = rng.standard_normal((2, 4, 4, 4))
    logits = ad.parameter(base.copy())
    loss = full_loss(logits)
    ad.backward(loss)
    h = 1e-5
    flat_grad = logits.grad.reshape(-1)
    for c in rng.choice(base.size, size=20, replace=False):
        bumped = base.copy()
        bumped.reshape(-1)[c] += h
        lp = full_loss(ad.constant(bumped)).item()
        bumped.reshape(-1)[c] -= 2 * h
        lm = full_loss(ad.constant(bumped)).item()
        fd = (lp - lm) / (2 * h)
        an = flat_grad[c]
        assert abs(fd - an) / max(abs(fd), abs(an), 1e-8) < 1e-4
