"""Multi-feature quality regressor and identity-disjoint cross-validation.

Topology: each feature block (visual, motion, geometry) is standardized with
training statistics (columns constant in training are zeroed, the rest
winsorized at +-5) and mapped by its own linear projector to a common
width; the projections are concatenated and regressed to a scalar score by
a tanh hidden layer and a linear head.

Training is full-batch Adam on mean squared error plus an L2 penalty, with a
fixed epoch budget. A projector's penalty is scaled by its input/output
dimension ratio, so the wide visual block is shrunk hardest; without this the
model fits identity-specific appearance and transfers badly to unseen
identities. A step that would raise the objective is rejected and
the learning rate halved, so the recorded loss never increases.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from meshqa.correlation import DegenerateCorrelationWarning, correlations

log = logging.getLogger(__name__)

MODEL_FORMAT = "meshqa-rater"
MODEL_VERSION = 1
BLOCKS = ("visual", "motion", "geometry")
Z_CLIP = 5.0  # standardized inputs are winsorized to +-Z_CLIP


@dataclass
class RaterConfig:
    width: int = 32
    hidden: int = 64
    epochs: int = 300
    lr: float = 0.01
    weight_decay: float = 0.01
    seed: int = 0


@dataclass
class RaterModel:
    block_sizes: tuple
    feat_mean: np.ndarray
    feat_std: np.ndarray
    target_mean: float
    target_std: float
    params: dict
    constant: bool = False
    loss_history: list = field(default_factory=list)

    def standardize(self, X) -> np.ndarray:
        return _standardize(X, self.feat_mean, self.feat_std)

    def raw_predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.constant:
            return np.full(len(X), self.target_mean)
        out, _ = _forward(self.params, _split(self.standardize(X), self.block_sizes))
        return out * self.target_std + self.target_mean

    def predict(self, X) -> np.ndarray:
        """Scores clamped to [0, 100]."""
        return np.clip(self.raw_predict(X), 0.0, 100.0)

    def to_json(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "block_sizes": list(self.block_sizes),
            "feat_mean": self.feat_mean.tolist(),
            "feat_std": self.feat_std.tolist(),
            "target_mean": self.target_mean,
            "target_std": self.target_std,
            "constant": self.constant,
            "params": {k: v.tolist() for k, v in self.params.items()},
        }

    @classmethod
    def from_json(cls, obj) -> "RaterModel":
        if obj.get("format") != MODEL_FORMAT or obj.get("version") != MODEL_VERSION:
            raise ValueError("not a version-1 rater model")
        return cls(
            tuple(obj["block_sizes"]),
            np.array(obj["feat_mean"]),
            np.array(obj["feat_std"]),
            float(obj["target_mean"]),
            float(obj["target_std"]),
            {k: np.array(v) for k, v in obj["params"].items()},
            bool(obj["constant"]),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path) -> "RaterModel":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def _split(Z, sizes):
    out, start = [], 0
    for s in sizes:
        out.append(Z[:, start : start + s])
        start += s
    if start != Z.shape[1]:
        raise ValueError(f"feature length {Z.shape[1]} != block sizes {sum(sizes)}")
    return out


def _init_params(sizes, cfg, rng):
    p = {}
    for name, s in zip(BLOCKS, sizes):
        p[f"P_{name}"] = rng.normal(0, 1 / np.sqrt(max(s, 1)), (s, cfg.width))
        p[f"p_{name}"] = np.zeros(cfg.width)
    fused = cfg.width * len(sizes)
    p["W1"] = rng.normal(0, 1 / np.sqrt(fused), (fused, cfg.hidden))
    p["b1"] = np.zeros(cfg.hidden)
    p["w2"] = rng.normal(0, 1 / np.sqrt(cfg.hidden), cfg.hidden)
    p["b2"] = np.zeros(1)
    return p


def _forward(p, blocks):
    proj = [b @ p[f"P_{n}"] + p[f"p_{n}"] for n, b in zip(BLOCKS, blocks)]
    fused = np.concatenate(proj, axis=1)
    hidden = np.tanh(fused @ p["W1"] + p["b1"])
    out = hidden @ p["w2"] + p["b2"][0]
    return out, (fused, hidden)


def _decay_scale(p):
    """Penalty weight per parameter; projectors by fan-in over width."""
    return {k: (v.shape[0] / v.shape[1] if k.startswith("P_") else 1.0) for k, v in p.items() if k[0] in "PW"}


def _objective(p, blocks, y, decay):
    out, cache = _forward(p, blocks)
    err = out - y
    scale = _decay_scale(p)
    penalty = sum(scale[k] * np.sum(p[k] * p[k]) for k in scale)
    return float(np.mean(err * err) + decay * penalty), err, cache


def _gradients(p, blocks, err, cache, decay):
    fused, hidden = cache
    n = len(err)
    g = {}
    d_out = 2 * err / n
    g["w2"] = hidden.T @ d_out
    g["b2"] = np.array([d_out.sum()])
    d_pre = np.outer(d_out, p["w2"]) * (1 - hidden * hidden)
    g["W1"] = fused.T @ d_pre
    g["b1"] = d_pre.sum(axis=0)
    d_fused = d_pre @ p["W1"].T
    start = 0
    for name, b in zip(BLOCKS, blocks):
        w = p[f"P_{name}"].shape[1]
        d = d_fused[:, start : start + w]
        g[f"P_{name}"] = b.T @ d
        g[f"p_{name}"] = d.sum(axis=0)
        start += w
    for k, w in _decay_scale(p).items():
        g[k] = g[k] + 2 * decay * w * p[k]
    return g


def standardization(X):
    """Training mean and std per column; std 0 marks a column as unused."""
    return X.mean(axis=0), X.std(axis=0)


def _standardize(X, mean, std):
    # a column that never varied in training carries nothing learnable
    active = std > 0
    Z = np.where(active, (X - mean) / np.where(active, std, 1.0), 0.0)
    return np.clip(Z, -Z_CLIP, Z_CLIP)


def train(X, y, block_sizes, config: RaterConfig = None) -> RaterModel:
    """Fit a regressor to MOS targets ``y`` (0..100)."""
    cfg = config or RaterConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be (n, d) with one target per row")
    if len(y) < 20:
        raise ValueError("need at least 20 training pairs")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite feature value")
    if np.any(y < 0) or np.any(y > 100):
        raise ValueError("targets must lie in [0, 100]")
    block_sizes = tuple(int(s) for s in block_sizes)
    fmean, fstd = standardization(X)
    tmean, tstd = float(y.mean()), float(y.std())
    if tstd == 0:
        log.warning("train: all targets equal, returning a constant model")
        return RaterModel(block_sizes, fmean, fstd, tmean, 1.0, {}, constant=True)

    blocks = _split(_standardize(X, fmean, fstd), block_sizes)
    ys = (y - tmean) / tstd
    rng = np.random.default_rng(cfg.seed)
    p = _init_params(block_sizes, cfg, rng)
    m = {k: np.zeros_like(v) for k, v in p.items()}
    v = {k: np.zeros_like(v) for k, v in p.items()}
    b1, b2, eps = 0.9, 0.999, 1e-8
    lr = cfg.lr
    loss, err, cache = _objective(p, blocks, ys, cfg.weight_decay)
    history = [loss]
    t = 0
    for _ in range(cfg.epochs):
        g = _gradients(p, blocks, err, cache, cfg.weight_decay)
        t += 1
        m_new = {k: b1 * m[k] + (1 - b1) * g[k] for k in p}
        v_new = {k: b2 * v[k] + (1 - b2) * g[k] ** 2 for k in p}
        trial = {
            k: p[k] - lr * (m_new[k] / (1 - b1**t)) / (np.sqrt(v_new[k] / (1 - b2**t)) + eps) for k in p
        }
        new_loss, new_err, new_cache = _objective(trial, blocks, ys, cfg.weight_decay)
        if new_loss <= loss:
            p, m, v = trial, m_new, v_new
            loss, err, cache = new_loss, new_err, new_cache
        else:
            t -= 1
            lr *= 0.5
        history.append(loss)
    return RaterModel(block_sizes, fmean, fstd, tmean, tstd, p, loss_history=history)


def predict(model: RaterModel, X) -> np.ndarray:
    return model.predict(X)


# --------------------------------------------------------------------------
# Cross-validation


@dataclass
class Fold:
    train_identities: list
    test_identities: list
    train_index: np.ndarray
    test_index: np.ndarray


def kfold_split(identities, k=4, seed=0) -> list:
    """Partition items so that each identity's items share one test fold."""
    identities = np.asarray([str(i) for i in identities])
    uniq = sorted(set(identities.tolist()))
    if len(uniq) < k:
        raise ValueError(f"{len(uniq)} identities cannot fill {k} folds")
    rng = np.random.default_rng(seed)
    shuffled = [uniq[i] for i in rng.permutation(len(uniq))]
    groups = np.array_split(np.arange(len(shuffled)), k)
    folds = []
    for g in groups:
        test_ids = sorted(shuffled[i] for i in g)
        test = np.isin(identities, test_ids)
        folds.append(
            Fold(
                sorted(set(uniq) - set(test_ids)),
                test_ids,
                np.flatnonzero(~test),
                np.flatnonzero(test),
            )
        )
    return folds


def _quiet_correlations(pred, target):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateCorrelationWarning)
        return correlations(pred, target)


def evaluate(X, mos, identities, kinds, block_sizes, config: RaterConfig = None, k=4, seed=0):
    """k-fold identity-disjoint evaluation.

    Returns a dict with ``folds`` (per-fold overall correlations), ``mean``
    (fold average), ``by_kind`` (per distortion kind, averaged over folds)
    and ``predictions`` (out-of-fold, clamped).
    """
    X = np.asarray(X, dtype=np.float64)
    mos = np.asarray(mos, dtype=np.float64)
    kinds = np.asarray([str(s) for s in kinds])
    folds = kfold_split(identities, k, seed)
    per_fold, per_kind = [], {}
    preds = np.full(len(mos), np.nan)
    models = []
    for fold in folds:
        model = train(X[fold.train_index], mos[fold.train_index], block_sizes, config)
        models.append(model)
        pred = model.predict(X[fold.test_index])
        preds[fold.test_index] = pred
        per_fold.append(_quiet_correlations(pred, mos[fold.test_index]))
        test_kinds = kinds[fold.test_index]
        for kind in sorted(set(test_kinds.tolist())):
            sel = test_kinds == kind
            if sel.sum() >= 2:
                per_kind.setdefault(kind, []).append(_quiet_correlations(pred[sel], mos[fold.test_index][sel]))

    def average(rows):
        return {m: float(np.mean([r[m] for r in rows])) for m in ("srcc", "plcc", "krcc")}

    return {
        "folds": per_fold,
        "mean": average(per_fold),
        "by_kind": {kind: average(rows) for kind, rows in per_kind.items()},
        "predictions": preds,
        "models": models,
        "fold_splits": folds,
    }


def config_dict(cfg: RaterConfig) -> dict:
    return asdict(cfg)


def assemble_features(visual, motion, geometry, block_sizes=None) -> np.ndarray:
    """Concatenate visual, motion and geometry blocks in that order."""
    parts = [np.asarray(b, dtype=np.float64).ravel() for b in (visual, motion, geometry)]
    if block_sizes is not None and tuple(len(b) for b in parts) != tuple(block_sizes):
        raise ValueError(f"block lengths {[len(b) for b in parts]} != configured {list(block_sizes)}")
    out = np.concatenate(parts)
    if not np.all(np.isfinite(out)):
        raise ValueError("non-finite feature value")
    return out
