"""Confidence-reweighted ensembling of two branch predictions.

A worked example on a 2x3 grid: with residual coefficient 0.5 the
pre-softmax channel pair at one position moves from 1.5/0.5 to 1.685/0.565,
and two low-confidence disagreement cells flip to the correct class.
"""

import numpy as np

from semivox import (
    BinaryMask,
    ConfidenceCache,
    ProbVolume,
    SarConfig,
    ensemble,
    pseudo_ensemble,
    reweight,
    sar_step_labeled,
)


def prob(ch1):
    ch1 = np.asarray(ch1, dtype=np.float64)
    return ProbVolume(ch1.shape, 1.0 - ch1, ch1)


# a 2x3 grid of voxels (as a 1x2x3 volume), two branches, fixed confidences
p_low = prob([[[0.2, 0.2, 0.6], [0.05, 0.05, 0.5]]])
p_high = prob([[[0.3, 0.3, 0.7], [0.85, 0.85, 0.5]]])
c_low = np.array([[[0.5, 0.2, 0.4], [0.0, 0.0, 0.5]]])
c_high = np.array([[[0.5, 0.3, 0.3], [1.0, 1.0, 0.5]]])

plain0 = p_low.ch0 + p_high.ch0
plain1 = p_low.ch1 + p_high.ch1
w_low = reweight(p_low, c_low, c_low, alpha=0.5)
w_high = reweight(p_high, c_high, c_high, alpha=0.5)
pre0 = w_low.ch0 + w_high.ch0
pre1 = w_low.ch1 + w_high.ch1

print("pre-softmax pairs (background/foreground):")
for r in range(2):
    for c in range(3):
        print(f"  row {r+1} pos {c+1}: plain {plain0[0,r,c]:.3f}/{plain1[0,r,c]:.3f}"
              f" -> reweighted {pre0[0,r,c]:.3f}/{pre1[0,r,c]:.3f}")

fused = ensemble(w_low, w_high)
plain_argmax = (plain1 > plain0).astype(int)
sar_argmax = (fused.ch1 > fused.ch0).astype(int)
print("plain argmax:     ", plain_argmax[0].tolist())
print("reweighted argmax:", sar_argmax[0].tolist())

# the stateful per-epoch loop: confidences come from the previous two epochs
gt = BinaryMask((1, 2, 3), np.array([[[0, 1, 1], [1, 1, 0]]], dtype=np.uint8))
cache = ConfidenceCache()
cfg = SarConfig(alpha=0.5, sharpen_temperature=0.1)
for epoch in range(3):
    fused, cache = sar_step_labeled(p_low, p_high, gt, cache, 0, epoch, cfg)
    print(f"epoch {epoch}: fused foreground row 1 =",
          [round(float(v), 3) for v in fused.ch1[0, 0]])

# unlabeled samples skip the cache and sharpen the branch average instead
sharp = pseudo_ensemble(p_low, p_high, temperature=0.1)
print("sharpened pseudo-label row 1:", [round(float(v), 4) for v in sharp.ch1[0, 0]])
