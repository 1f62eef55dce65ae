"""Evaluation against ground truth: SAD, RMSE, material matching, label noise."""
import hashlib
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .cluster import ClassificationMap

ZERO_NORM = 1e-12


def sad(u, v):
    """Spectral angle (radians) between two spectra."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu <= ZERO_NORM or nv <= ZERO_NORM:
        raise ValueError("spectral angle undefined for a zero vector")
    u, v = u / nu, v / nv
    # half-angle form; arccos of the cosine loses ~1e-8 rad near parallel vectors
    return float(2.0 * np.arctan2(np.linalg.norm(u - v), np.linalg.norm(u + v)))


def rmse(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def sad_matrix(M_hat, M):
    """(m_hat, m) spectral angles between estimated and true endmember columns."""
    Mh = M_hat / np.linalg.norm(M_hat, axis=0)
    Mt = M / np.linalg.norm(M, axis=0)
    diff = np.linalg.norm(Mh[:, :, None] - Mt[:, None, :], axis=0)
    summ = np.linalg.norm(Mh[:, :, None] + Mt[:, None, :], axis=0)
    return 2.0 * np.arctan2(diff, summ)


@dataclass
class EvaluationReport:
    per_material_sad: np.ndarray
    per_material_rmse: np.ndarray
    assignment: np.ndarray  # assignment[k] = estimated material matched to true material k
    accuracy: Optional[float] = None

    @property
    def avg_sad(self):
        return float(np.mean(self.per_material_sad))

    @property
    def avg_rmse(self):
        return float(np.mean(self.per_material_rmse))

    def to_dict(self, config=None):
        out = {
            "per_material": [
                {"sad": float(s), "rmse": float(r)}
                for s, r in zip(self.per_material_sad, self.per_material_rmse)
            ],
            "avg_sad": self.avg_sad,
            "avg_rmse": self.avg_rmse,
            "assignment": [int(k) for k in self.assignment],
        }
        if self.accuracy is not None:
            out["accuracy"] = float(self.accuracy)
        out["config_hash"] = config_hash(config) if config is not None else None
        return out


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def match_and_score(result, gt, accuracy=None):
    """Pair estimated with true materials by minimum total SAD, then score.

    ``result`` is anything carrying ``endmembers`` (d, m) and ``abundances``
    (m, n), e.g. an UnmixResult or ResultBundle. The SAD-optimal permutation
    also aligns abundance rows for RMSE.
    """
    M_hat = np.asarray(result.endmembers, dtype=np.float64)
    A_hat = np.asarray(result.abundances, dtype=np.float64)
    if M_hat.shape[1] != gt.m or A_hat.shape[0] != gt.m:
        raise ValueError(f"m mismatch: estimate has {M_hat.shape[1]}, ground truth {gt.m}")
    if M_hat.shape[0] != gt.endmembers.shape[0] or A_hat.shape[1] != gt.n:
        raise ValueError("estimate and ground truth disagree on bands or pixels")
    cost = sad_matrix(M_hat, gt.endmembers)
    est, true = linear_sum_assignment(cost)
    assignment = np.empty(gt.m, dtype=np.int64)
    assignment[true] = est
    sads = np.array([sad(M_hat[:, assignment[k]], gt.endmembers[:, k]) for k in range(gt.m)])
    rmses = np.array([rmse(A_hat[assignment[k]], gt.abundances[k]) for k in range(gt.m)])
    return EvaluationReport(sads, rmses, assignment, accuracy)


def _as_map(labels, m=None):
    if isinstance(labels, ClassificationMap):
        return labels
    labels = np.asarray(labels, dtype=np.int64)
    return ClassificationMap(labels, m if m is not None else int(labels.max()) + 1)


def segmentation_accuracy(pred, truth, m=None):
    """Best agreement fraction over one-to-one relabelings of ``pred``."""
    pred, truth = _as_map(pred, m), _as_map(truth, m)
    if pred.m != truth.m:
        raise ValueError(f"m mismatch: {pred.m} vs {truth.m}")
    if len(pred) != len(truth):
        raise ValueError(f"length mismatch: {len(pred)} vs {len(truth)}")
    confusion = np.zeros((pred.m, pred.m), dtype=np.int64)
    np.add.at(confusion, (pred.labels, truth.labels), 1)
    rows, cols = linear_sum_assignment(confusion, maximize=True)
    return float(confusion[rows, cols].sum()) / len(pred)


def inject_label_noise(labels, p, m, seed=0, other_classes_only=False):
    """Redraw the labels of ``floor(p * n)`` seeded random pixels uniformly at random.

    By default the redraw covers all ``m`` classes, so a redrawn label may
    equal the original one.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"noise fraction must be in [0, 1], got {p}")
    lab = (labels.labels if isinstance(labels, ClassificationMap) else np.asarray(labels, np.int64)).copy()
    n = lab.size
    k = int(math.floor(p * n))
    rng = np.random.default_rng(seed)
    idx = rng.choice(n, size=k, replace=False)
    if other_classes_only and m > 1:
        lab[idx] = (lab[idx] + rng.integers(1, m, size=k)) % m
    else:
        lab[idx] = rng.integers(0, m, size=k)
    return ClassificationMap(lab, m)
