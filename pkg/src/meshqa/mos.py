"""Subjective score processing: screening, subject rejection, z-scores, MOS.

Pipeline, computed on a subjects x items rating grid with a validity mask:

1. Per item, classify the ratings as Gaussian when their (non-excess)
   kurtosis lies in [2, 4], and flag ratings further than 2 std (Gaussian)
   or sqrt(20) std (otherwise) from the item mean.
2. Reject, in one pass, every subject whose flagged share of rated cells
   exceeds 5 %.
3. Drop the flagged cells of the remaining subjects.
4. Standardize each subject by the mean and sample std of their remaining
   ratings, map ``z -> 100 (z + 3) / 6`` and clamp to [0, 100].
5. Average per item over remaining cells; items with fewer than 3 are
   omitted.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

GAUSSIAN_KURTOSIS = (2.0, 4.0)
GAUSSIAN_SIGMAS = 2.0
NON_GAUSSIAN_SIGMAS = math.sqrt(20.0)
REJECT_RATE = 0.05
MIN_RATERS = 3
SCORE_RANGE = (0.0, 5.0)


@dataclass
class RatingMatrix:
    scores: np.ndarray  # (subjects, items) float
    mask: np.ndarray  # (subjects, items) bool, True where rated
    subjects: list = field(default_factory=list)
    items: list = field(default_factory=list)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.scores.shape != self.mask.shape or self.scores.ndim != 2:
            raise ValueError("scores and mask must be equal-shape 2-D arrays")
        vals = self.scores[self.mask]
        if np.any(~np.isfinite(vals)) or np.any(vals < SCORE_RANGE[0]) or np.any(vals > SCORE_RANGE[1]):
            raise ValueError("ratings must lie in [0, 5]")
        if not self.subjects:
            self.subjects = [str(i) for i in range(self.scores.shape[0])]
        if not self.items:
            self.items = [str(j) for j in range(self.scores.shape[1])]

    @classmethod
    def dense(cls, scores, **kw):
        scores = np.asarray(scores, dtype=np.float64)
        return cls(scores, np.ones(scores.shape, dtype=bool), **kw)


@dataclass
class MosResult:
    items: list
    mos: np.ndarray  # nan where omitted
    raters: np.ndarray  # valid ratings per item
    disqualified: list  # subject indices
    outliers: np.ndarray  # (subjects, items) bool
    omitted: list = field(default_factory=list)
    clamped: int = 0
    flat_subjects: list = field(default_factory=list)


# Sums are correctly rounded (math.fsum) so results do not depend on the
# summation order, and emitted decimals are reproducible bit for bit.


def _mean(x):
    return math.fsum(x) / len(x)


def _sample_std(x, mu):
    return math.sqrt(math.fsum((x - mu) ** 2) / (len(x) - 1))


def kurtosis(samples):
    """Non-excess kurtosis ``m4 / m2**2``; ``nan`` when the variance is 0."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        return math.nan
    d = x - _mean(x)
    m2 = math.fsum(d**2) / x.size
    if m2 == 0:
        return math.nan
    return math.fsum(d**4) / x.size / (m2 * m2)


def is_gaussian(samples) -> bool:
    k = kurtosis(samples)
    return GAUSSIAN_KURTOSIS[0] <= k <= GAUSSIAN_KURTOSIS[1]


def screen_outliers(matrix: RatingMatrix) -> np.ndarray:
    """Per-cell outlier flags."""
    flags = np.zeros(matrix.scores.shape, dtype=bool)
    for j in range(matrix.scores.shape[1]):
        rows = np.flatnonzero(matrix.mask[:, j])
        if rows.size < 2:
            log.warning("item %s has %d ratings, not screened", matrix.items[j], rows.size)
            continue
        r = matrix.scores[rows, j]
        mu = _mean(r)
        s = _sample_std(r, mu)
        width = (GAUSSIAN_SIGMAS if is_gaussian(r) else NON_GAUSSIAN_SIGMAS) * s
        flags[rows, j] = np.abs(r - mu) > width
    return flags


def disqualify_subjects(flags, mask) -> list:
    """Subjects whose outlier share of rated cells is strictly above 5 %."""
    flags = np.asarray(flags, bool)
    rated = np.asarray(mask, bool).sum(axis=1)
    flagged = (flags & mask).sum(axis=1)
    out = []
    for i in range(len(rated)):
        if rated[i] and flagged[i] / rated[i] > REJECT_RATE:
            out.append(i)
    return out


def zscore_normalize(scores, valid):
    """Per-subject z-scores over ``valid`` cells (sample std).

    Returns ``(z, flat)``; subjects with zero spread get z = 0 and are listed
    in ``flat``.
    """
    z = np.zeros(scores.shape)
    flat = []
    for i in range(scores.shape[0]):
        cols = np.flatnonzero(valid[i])
        if cols.size == 0:
            continue
        r = scores[i, cols]
        mu = _mean(r)
        sd = _sample_std(r, mu) if cols.size > 1 else 0.0
        if sd == 0:
            flat.append(i)
            continue
        z[i, cols] = (r - mu) / sd
    return z, flat


def rescale(z):
    """``100 (z + 3) / 6`` clamped to [0, 100]; returns ``(values, n_clamped)``."""
    zp = 100.0 * (np.asarray(z, dtype=np.float64) + 3.0) / 6.0
    clamped = int(np.count_nonzero((zp < 0) | (zp > 100)))
    return np.clip(zp, 0.0, 100.0), clamped


def compute_mos(matrix: RatingMatrix) -> MosResult:
    flags = screen_outliers(matrix)
    disq = disqualify_subjects(flags, matrix.mask)
    valid = matrix.mask & ~flags
    valid[disq, :] = False
    z, flat = zscore_normalize(matrix.scores, valid)
    zp, _ = rescale(z)
    clamped = int(np.count_nonzero(valid & (np.abs(z) > 3)))
    if clamped:
        log.info("compute_mos: %d rescaled scores clamped to [0, 100]", clamped)

    n_items = matrix.scores.shape[1]
    mos = np.full(n_items, np.nan)
    raters = valid.sum(axis=0)
    omitted = []
    for j in range(n_items):
        if raters[j] < MIN_RATERS:
            omitted.append(j)
            continue
        mos[j] = _mean(zp[valid[:, j], j])
    if omitted:
        log.warning("compute_mos: %d items with fewer than %d valid ratings omitted", len(omitted), MIN_RATERS)
    return MosResult(list(matrix.items), mos, raters, disq, flags, omitted, clamped, flat)


# --------------------------------------------------------------------------
# CSV interchange


def read_ratings_csv(path) -> RatingMatrix:
    """Long-format ``subject_id,item_id,score`` with a header row."""
    subjects, items, cells = {}, {}, []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"subject_id", "item_id", "score"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"ratings CSV lacks columns {sorted(missing)}")
        for row_no, row in enumerate(reader, start=2):
            try:
                score = float(row["score"])
            except (TypeError, ValueError):
                raise ValueError(f"row {row_no}: bad score {row['score']!r}") from None
            s = subjects.setdefault(row["subject_id"], len(subjects))
            j = items.setdefault(row["item_id"], len(items))
            cells.append((s, j, score))
    scores = np.zeros((len(subjects), len(items)))
    mask = np.zeros_like(scores, dtype=bool)
    for s, j, v in cells:
        if mask[s, j]:
            raise ValueError(f"duplicate rating for subject {s}, item {j}")
        scores[s, j] = v
        mask[s, j] = True
    return RatingMatrix(scores, mask, list(subjects), list(items))


def write_ratings_csv(path, matrix: RatingMatrix):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "item_id", "score"])
        for i, sid in enumerate(matrix.subjects):
            for j, iid in enumerate(matrix.items):
                if matrix.mask[i, j]:
                    w.writerow([sid, iid, repr(float(matrix.scores[i, j]))])


def write_mos_csv(path, result: MosResult):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["item_id", "mos", "raters"])
        for j, item in enumerate(result.items):
            if not np.isnan(result.mos[j]):
                w.writerow([item, repr(float(result.mos[j])), int(result.raters[j])])


def read_mos_csv(path) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        return {row["item_id"]: float(row["mos"]) for row in csv.DictReader(fh)}


def mos_summary(result: MosResult, matrix: RatingMatrix) -> dict:
    return {
        "items": len(result.items),
        "items_scored": int(np.count_nonzero(~np.isnan(result.mos))),
        "omitted_items": [result.items[j] for j in result.omitted],
        "disqualified_subjects": [matrix.subjects[i] for i in result.disqualified],
        "outlier_cells": int(result.outliers.sum()),
        "clamped_scores": result.clamped,
        "flat_subjects": [matrix.subjects[i] for i in result.flat_subjects],
    }
