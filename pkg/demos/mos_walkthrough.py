"""
From raw ratings to mean opinion scores
=======================================

Simulate a small study (20 regular raters plus two answering at random), then
follow the screening steps: kurtosis per item, outlier cells, rejected
raters, and the final 0..100 scores.
"""

import numpy as np

from meshqa.correlation import srcc
from meshqa.mos import compute_mos, is_gaussian, screen_outliers
from meshqa.synthetic import simulate_ratings

rng = np.random.default_rng(3)
quality = rng.uniform(0, 1, 40)
ratings = simulate_ratings(quality, n_subjects=20, n_erratic=2, seed=3)
print("rating grid:", ratings.scores.shape, "(subjects x items)")

gauss = [is_gaussian(ratings.scores[:, j]) for j in range(ratings.scores.shape[1])]
print(f"items classified Gaussian: {sum(gauss)}/{len(gauss)}")

flags = screen_outliers(ratings)
rate = flags.mean(axis=1)
print("outlier share per subject:", np.round(rate, 3))

result = compute_mos(ratings)
print("rejected subjects:", result.disqualified)
print("clamped rescaled scores:", result.clamped)

# the erratic raters are the last ones; they should be the rejected ones
mos = result.mos
print(f"MOS range {np.nanmin(mos):.1f} .. {np.nanmax(mos):.1f}")
print(f"SRCC(MOS, latent quality) = {srcc(mos, quality):.3f}")

raw = ratings.scores.mean(axis=0)
print(f"SRCC(raw mean, latent quality) = {srcc(raw, quality):.3f}")
