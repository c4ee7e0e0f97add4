"""Semi-supervised training loop.

Per sample and iteration: rotate the image through the frequency domain
(labels rotate spatially with the identical index permutation), forward both
branches, ensemble (confidence-reweighted for labeled samples, sharpened
average for unlabeled), binarize the ensemble at 0.5 to build a signed
distance target, and optimize

    beta * L_seg(labeled only) + gamma(epoch) * (L_plc + L_src)

with one plain SGD step per batch on the batch-mean loss. A degenerate
ensemble (all foreground / all background) skips L_src for that sample and
is counted as an event, never fatal.

Held-out evaluation: a seeded fraction of the unlabeled pool is excluded
from training entirely and scored each epoch against its stored labels.
"""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .ensemble import ConfidenceCache, SarConfig, pseudo_ensemble, reweight, sar_step_labeled
from .ensemble import ensemble as sar_ensemble
from .errors import ConfigError
from .fourier import DEFAULT_VIEWS, ViewSpec, fft3, ifft3, rotate_freq, rotate_mask
from .geometry import dice_jaccard, signed_distance_map, surface_distances
from .losses import LossBreakdown, RampConfig, ce_loss, dice_loss, plc_loss, ramp_gamma, src_loss, total_loss
from .network import BranchOutputs, NetConfig, Network, backward_and_step, build_dual_branch, forward, save_checkpoint
from .volume import BinaryMask, Dataset, Sample, Volume3, zscore_normalize

LOG_COLUMNS = ("epoch", "iter", "sample_id", "labeled", "l_dice", "l_ce", "l_plc", "l_src", "gamma", "total")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    batch_size: int = 4
    lr: float = 0.01
    alpha: float = 0.5
    beta: float = 0.5
    ramp: RampConfig = field(default_factory=RampConfig)
    sharpen_t: float = 0.1
    labeled_ratio: float = 0.2
    seed: int = 0
    view_specs: tuple = DEFAULT_VIEWS
    net: NetConfig = field(default_factory=NetConfig)
    eval_fraction: float = 0.2
    ckpt_every: int = 1  # 0: final checkpoint only
    # ablation switches
    use_plc: bool = True
    use_src: bool = True
    use_sar: bool = True
    # documented variants, off by default
    literal_eq_high_branch: bool = False  # high branch reweighted by low-branch confidence
    plc_sharpened_target: bool = False  # unlabeled PLC against the sharpened pseudo-label

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if not 0.0 <= self.eval_fraction < 1.0:
            raise ConfigError(f"eval_fraction must lie in [0, 1), got {self.eval_fraction}")

    def sar_config(self) -> SarConfig:
        return SarConfig(
            alpha=self.alpha,
            sharpen_temperature=self.sharpen_t,
            literal_high_uses_low_confidence=self.literal_eq_high_branch,
        )


@dataclass(frozen=True)
class EvalResult:
    dice: float
    jaccard: float
    hd95: float | None  # None when every sample's surface metric was undefined
    asd: float | None
    n: int
    n_surface_missing: int


@dataclass(frozen=True)
class EpochReport:
    epoch: int
    mean_l_dice: float
    mean_l_ce: float
    mean_l_plc: float
    mean_l_src: float
    gamma: float
    mean_total: float
    eval: EvalResult | None
    degenerate_events: int
    wall_seconds: float


def _augment_image(image: Volume3, view: ViewSpec) -> Volume3:
    return ifft3(rotate_freq(fft3(image), view))


def _binarize_foreground(prob_ch1: np.ndarray) -> np.ndarray:
    # strict > breaks 0.5 ties toward background
    return (prob_ch1 > 0.5).astype(np.uint8)


def train_iteration(
    batch: list[tuple[Sample, ViewSpec, bool]],
    net: Network,
    cache: ConfidenceCache,
    epoch: int,
    cfg: TrainConfig,
) -> tuple[Network, ConfidenceCache, list[LossBreakdown], list[tuple[int, str]]]:
    """One SGD step on a batch of (sample, view, is_labeled) triples.
    Returns per-sample breakdowns and (sample_id, event) pairs."""
    gamma = ramp_gamma(epoch, cfg.ramp)
    sar_cfg = cfg.sar_config()
    totals: list[ad.DiffTensor] = []
    breakdowns: list[LossBreakdown] = []
    events: list[tuple[int, str]] = []

    for sample, view, is_labeled in batch:
        image = _augment_image(zscore_normalize(sample.image), view)
        out: BranchOutputs = forward(net, image)
        p_low = out.prob_low()
        p_high = out.prob_high()

        terms: list[ad.DiffTensor] = []
        l_dice_val = l_ce_val = l_plc_val = l_src_val = 0.0

        if is_labeled:
            gt = rotate_mask(sample.label, view)
            gt_arr = gt.data.astype(np.float64)
            if cfg.use_sar:
                fused, _ = sar_step_labeled(
                    p_low, p_high, gt, cache, sample.sample_id, epoch, sar_cfg
                )
            else:
                zeros = np.zeros(gt.dims)
                fused = sar_ensemble(
                    reweight(p_low, zeros, zeros, 0.0), reweight(p_high, zeros, zeros, 0.0)
                )
            d_lo = dice_loss(out.p_lseg, gt_arr)
            d_hi = dice_loss(out.p_hseg, gt_arr)
            c_lo = ce_loss(out.p_lseg, gt_arr)
            c_hi = ce_loss(out.p_hseg, gt_arr)
            # both branches are supervised independently; their losses add
            l_dice_t = ad.add(d_lo, d_hi)
            l_ce_t = ad.add(c_lo, c_hi)
            terms.append(ad.scale(ad.add(l_dice_t, l_ce_t), cfg.beta))
            l_dice_val = l_dice_t.item()
            l_ce_val = l_ce_t.item()
        else:
            fused = pseudo_ensemble(p_low, p_high, cfg.sharpen_t)

        if cfg.use_plc:
            if cfg.plc_sharpened_target and not is_labeled:
                target = ad.constant(np.stack([fused.ch0, fused.ch1]))
                l_plc_t = ad.scale(
                    ad.add(plc_loss(out.p_lseg, target), plc_loss(out.p_hseg, target)), 0.5
                )
            else:
                l_plc_t = plc_loss(out.p_lseg, out.p_hseg)
            terms.append(ad.scale(l_plc_t, gamma))
            l_plc_val = l_plc_t.item()

        if cfg.use_src:
            fg = _binarize_foreground(fused.ch1)
            n_fg = int(fg.sum())
            if n_fg == 0 or n_fg == fg.size:
                events.append((sample.sample_id, "degenerate-ensemble"))
            else:
                sdm = signed_distance_map(BinaryMask(fused.dims, fg))
                l_src_t = src_loss(sdm.data, out.r_lreg, out.r_hreg)
                terms.append(ad.scale(l_src_t, gamma))
                l_src_val = l_src_t.item()

        sample_total = terms[0] if terms else ad.constant(0.0)
        for t in terms[1:]:
            sample_total = ad.add(sample_total, t)
        totals.append(sample_total)
        breakdowns.append(
            total_loss(l_dice_val, l_ce_val, l_plc_val, l_src_val, cfg.beta, gamma, is_labeled)
        )

    batch_total = totals[0]
    for t in totals[1:]:
        batch_total = ad.add(batch_total, t)
    batch_total = ad.scale(batch_total, 1.0 / len(totals))
    backward_and_step(net, batch_total, cfg.lr)
    return net, cache, breakdowns, events


def evaluate(net: Network, samples: list[Sample]) -> EvalResult:
    """Forward without augmentation; prediction is the argmax of the averaged
    branch probabilities (ties to background). Samples whose predicted mask
    is empty report no surface metrics and are excluded from those means."""
    dices, jaccards, hd95s, asds = [], [], [], []
    n_missing = 0
    for sample in samples:
        out = forward(net, zscore_normalize(sample.image))
        avg_fg = (out.p_lseg.data[1] + out.p_hseg.data[1]) / 2.0
        avg_bg = (out.p_lseg.data[0] + out.p_hseg.data[0]) / 2.0
        pred = BinaryMask(sample.label.dims, (avg_fg > avg_bg).astype(np.uint8))
        ad.free_graph(out.p_lseg)
        ad.free_graph(out.p_hseg)
        d, j = dice_jaccard(pred, sample.label)
        dices.append(d)
        jaccards.append(j)
        if pred.count() == 0 or sample.label.count() == 0:
            n_missing += 1
        else:
            h, a = surface_distances(pred, sample.label)
            hd95s.append(h)
            asds.append(a)
    return EvalResult(
        dice=float(np.mean(dices)),
        jaccard=float(np.mean(jaccards)),
        hd95=float(np.mean(hd95s)) if hd95s else None,
        asd=float(np.mean(asds)) if asds else None,
        n=len(samples),
        n_surface_missing=n_missing,
    )


def _split_holdout(ds: Dataset, cfg: TrainConfig) -> tuple[list[int], list[int]]:
    """Deterministically hold out a fraction of the unlabeled pool for
    evaluation; labeled samples always train."""
    unlabeled = sorted(set(range(len(ds))) - ds.labeled_ids)
    n_eval = min(int(round(cfg.eval_fraction * len(ds))), len(unlabeled))
    rng = np.random.default_rng((cfg.seed, 9173))
    order = rng.permutation(len(unlabeled))
    eval_ids = sorted(unlabeled[i] for i in order[:n_eval])
    train_ids = sorted(set(range(len(ds))) - set(eval_ids))
    return train_ids, eval_ids


def _config_dict(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    d["view_specs"] = [{"axis": v.axis, "angle_deg": v.angle_deg} for v in cfg.view_specs]
    return d


class _RunWriter:
    """CSV/JSON artifacts under a run directory (no-op when dir is None)."""

    def __init__(self, run_dir, cfg: TrainConfig):
        self.run_dir = run_dir
        if run_dir is None:
            return
        os.makedirs(run_dir, exist_ok=True)
        with open(os.path.join(run_dir, "config.json"), "w") as f:
            json.dump(_config_dict(cfg), f, indent=1)
        self._log = open(os.path.join(run_dir, "log.csv"), "w", newline="")
        self._log_csv = csv.writer(self._log)
        self._log_csv.writerow(LOG_COLUMNS)
        self._events = open(os.path.join(run_dir, "events.csv"), "w", newline="")
        self._events_csv = csv.writer(self._events)
        self._events_csv.writerow(("epoch", "iter", "sample_id", "event"))

    def log_rows(self, epoch, it, entries):
        if self.run_dir is None:
            return
        for sample_id, labeled, b in entries:
            self._log_csv.writerow(
                (epoch, it, sample_id, int(labeled), repr(b.l_dice), repr(b.l_ce),
                 repr(b.l_plc), repr(b.l_src), repr(b.gamma), repr(b.total))
            )

    def log_events(self, epoch, it, events):
        if self.run_dir is None:
            return
        for sample_id, kind in events:
            self._events_csv.writerow((epoch, it, sample_id, kind))

    def checkpoint(self, net, epoch, name=None):
        if self.run_dir is None:
            return
        save_checkpoint(net, os.path.join(self.run_dir, name or f"epoch_{epoch}.ckpt"), epoch)

    def close(self):
        if self.run_dir is None:
            return
        self._log.close()
        self._events.close()


def train(dataset: Dataset, cfg: TrainConfig, run_dir=None) -> tuple[Network, list[EpochReport]]:
    """Run cfg.epochs epochs of seeded shuffled batches; evaluate on the
    held-out split every epoch; optionally write config/log/events/checkpoint
    files under run_dir."""
    if not dataset.labeled_ids:
        raise ConfigError("training needs at least one labeled sample")
    if dataset.labeled_ids and any(v.quarter_turns is None for v in cfg.view_specs):
        raise ConfigError("labeled training requires quarter-turn views (labels rotate by index permutation)")

    train_ids, eval_ids = _split_holdout(dataset, cfg)
    net = build_dual_branch(cfg.net)
    cache = ConfidenceCache()
    writer = _RunWriter(run_dir, cfg)
    reports: list[EpochReport] = []
    view_cycle = 0
    try:
        for epoch in range(cfg.epochs):
            t0 = time.perf_counter()
            order = np.random.default_rng((cfg.seed, 1, epoch)).permutation(len(train_ids))
            shuffled = [train_ids[i] for i in order]
            epoch_breakdowns: list[LossBreakdown] = []
            n_events = 0
            for it in range(0, len(shuffled), cfg.batch_size):
                ids = shuffled[it : it + cfg.batch_size]
                batch = []
                for sid in ids:
                    view = cfg.view_specs[view_cycle % len(cfg.view_specs)]
                    view_cycle += 1
                    batch.append((dataset.by_id(sid), view, sid in dataset.labeled_ids))
                net, cache, breakdowns, events = train_iteration(batch, net, cache, epoch, cfg)
                batch_index = it // cfg.batch_size
                writer.log_rows(
                    epoch, batch_index,
                    [(s.sample_id, lab, b) for (s, _, lab), b in zip(batch, breakdowns)],
                )
                writer.log_events(epoch, batch_index, events)
                epoch_breakdowns.extend(breakdowns)
                n_events += len(events)
            eval_result = (
                evaluate(net, [dataset.by_id(i) for i in eval_ids]) if eval_ids else None
            )
            reports.append(
                EpochReport(
                    epoch=epoch,
                    mean_l_dice=float(np.mean([b.l_dice for b in epoch_breakdowns])),
                    mean_l_ce=float(np.mean([b.l_ce for b in epoch_breakdowns])),
                    mean_l_plc=float(np.mean([b.l_plc for b in epoch_breakdowns])),
                    mean_l_src=float(np.mean([b.l_src for b in epoch_breakdowns])),
                    gamma=ramp_gamma(epoch, cfg.ramp),
                    mean_total=float(np.mean([b.total for b in epoch_breakdowns])),
                    eval=eval_result,
                    degenerate_events=n_events,
                    wall_seconds=time.perf_counter() - t0,
                )
            )
            if cfg.ckpt_every and (epoch % cfg.ckpt_every == 0 or epoch == cfg.epochs - 1):
                writer.checkpoint(net, epoch)
        writer.checkpoint(net, max(cfg.epochs - 1, 0), name="final.ckpt")
    finally:
        writer.close()
    return net, reports
