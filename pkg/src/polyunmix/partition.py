"""Polyhedral-cone partition of the (reduced) spectral space.

One unbiased linear SVM is trained per class pair. Each class gets the cone
where it beats every other class. Where the pairwise decisions are cyclic the
arrangement leaves extra cells. The ``m`` most populated regions are kept and
matched one-to-one to the segmentation classes.
"""
import itertools
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.optimize import linear_sum_assignment

from .cluster import ClassificationMap, subsample
from .errors import ConvergenceError, DegenerateError
from .geometry import PolyhedralCone

ON_PLANE = 1e-12


@numba.njit(cache=True)
def _dcd_epoch(X, y, alpha, w, qdiag, C, order):
    # one pass of dual coordinate descent for the L1-hinge SVM without intercept
    d = X.shape[1]
    for k in range(order.shape[0]):
        i = order[k]
        if qdiag[i] <= 0.0:
            continue
        g = 0.0
        for t in range(d):
            g += w[t] * X[i, t]
        g = y[i] * g - 1.0
        a = alpha[i]
        if a == 0.0:
            pg = min(g, 0.0)
        elif a == C:
            pg = max(g, 0.0)
        else:
            pg = g
        if pg != 0.0:
            new = min(max(a - g / qdiag[i], 0.0), C)
            delta = (new - a) * y[i]
            alpha[i] = new
            for t in range(d):
                w[t] += delta * X[i, t]


def svm_primal_objective(X, y, w, C):
    """``0.5 |w|^2 + C * sum(max(0, 1 - y_k <x_k, w>))``."""
    hinge = np.maximum(0.0, 1.0 - y * (X @ w))
    return 0.5 * float(w @ w) + C * float(hinge.sum())


@dataclass
class SvmFit:
    w: np.ndarray
    primal: float
    dual: float
    epochs: int

    @property
    def gap(self):
        return self.primal - self.dual


def fit_unbiased_svm(X, y, C=1.0, seed=0, tol=1e-6, max_epochs=20_000):
    """Solve ``min_w 0.5|w|^2 + C sum hinge(y_k <x_k, w>)`` (no intercept).

    Dual coordinate descent over a fresh seeded permutation each epoch; stops
    when the duality gap falls below ``tol`` relative to the primal value.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = X.shape[0]
    rng = np.random.default_rng(seed)
    alpha = np.zeros(n)
    w = np.zeros(X.shape[1])
    qdiag = (X * X).sum(1)
    primal = dual = np.nan
    for epoch in range(1, max_epochs + 1):
        _dcd_epoch(X, y, alpha, w, qdiag, C, rng.permutation(n))
        w = (alpha * y) @ X  # refresh to shed accumulated rounding
        primal = svm_primal_objective(X, y, w, C)
        dual = float(alpha.sum()) - 0.5 * float(w @ w)
        if primal - dual <= tol * primal:
            return SvmFit(w, primal, dual, epoch)
    raise ConvergenceError(
        f"SVM duality gap {primal - dual:.3g} after {max_epochs} epochs",
        residual=(primal - dual) / primal,
    )


@dataclass
class SeparatingHyperplane:
    """Unit normal of an origin-passing hyperplane; class ``i`` sits on the ``<x, w> <= 0`` side."""

    class_pair: tuple
    normal: np.ndarray
    fit: SvmFit = None

    def decision(self, X):
        return np.asarray(X, dtype=np.float64) @ self.normal


def train_pairwise_svm(data, labels, c_reg=1.0, sample_fraction=0.2, seed=0,
                       tol=1e-6, max_epochs=20_000):
    """One unbiased linear SVM per unordered class pair, on a seeded pixel subsample.

    Returns the hyperplanes in ``itertools.combinations(range(m), 2)`` order.
    """
    X = np.asarray(data, dtype=np.float64)
    if not isinstance(labels, ClassificationMap):
        labels = ClassificationMap(labels, int(np.max(labels)) + 1)
    m = labels.m
    if m < 2:
        raise ValueError("need at least two classes to separate")
    if len(labels) != X.shape[0]:
        raise ValueError(f"{len(labels)} labels for {X.shape[0]} pixels")
    if c_reg <= 0:
        raise ValueError("SVM regularization C must be positive")
    lab = labels.labels
    picked = np.zeros(X.shape[0], bool)
    picked[subsample(X.shape[0], sample_fraction, seed)] = True

    members = []
    for c in range(m):
        idx = np.flatnonzero(picked & (lab == c))
        if idx.size == 0:
            idx = np.flatnonzero(lab == c)
            if idx.size == 0:
                raise DegenerateError(f"class {c} has no pixels")
            warnings.warn(f"class {c} absent from SVM subsample; using all {idx.size} of its pixels")
        members.append(idx)

    planes = []
    for i, j in itertools.combinations(range(m), 2):
        idx = np.concatenate([members[i], members[j]])
        y = np.concatenate([-np.ones(members[i].size), np.ones(members[j].size)])
        fit = fit_unbiased_svm(X[idx], y, C=c_reg, seed=(seed, i, j), tol=tol, max_epochs=max_epochs)
        norm = np.linalg.norm(fit.w)
        if not norm > ON_PLANE:
            raise DegenerateError(f"inseparable degenerate pair ({i}, {j})")
        w = fit.w / norm
        if np.mean(X[members[i]] @ w <= ON_PLANE) < 0.5:
            w = -w
        planes.append(SeparatingHyperplane((i, j), w, fit))
    return planes


@dataclass
class ConePartition:
    hyperplanes: list
    regions: list                 # PolyhedralCone per class
    signatures: np.ndarray        # (m, H) in {-1, 0, +1}: side of each hyperplane, 0 = unconstrained
    region_populations: np.ndarray
    cell_class: np.ndarray        # (n,) class whose region holds the pixel, -1 if its region was dropped
    n_cells: int                  # populated regions before truncation to m
    contingency: np.ndarray = field(repr=False, default=None)  # (m classes, m labels)

    @property
    def m(self):
        return len(self.regions)


def sign_patterns(hyperplanes, X):
    """(n, H) matrix of +1 (strictly positive side) / -1 (on or below the plane)."""
    W = np.array([h.normal for h in hyperplanes])
    return np.where(np.asarray(X, dtype=np.float64) @ W.T > ON_PLANE, 1, -1).astype(np.int8)


def winner_signatures(hyperplanes, m):
    """(m, H) sides a point must take to beat every other class, 0 where a plane is irrelevant."""
    sig = np.zeros((m, len(hyperplanes)), dtype=np.int8)
    for h, plane in enumerate(hyperplanes):
        i, j = plane.class_pair
        sig[i, h], sig[j, h] = -1, 1
    return sig


def region_signatures(hyperplanes, X, m):
    """Region of each pixel as a signature row over the hyperplanes.

    A pixel that wins all pairwise comparisons for class ``c`` lies in that
    class's winner cone, which only involves the ``m - 1`` planes touching
    ``c``. Pixels with an intransitive pattern keep their full sign pattern as
    a cell of their own.
    """
    S = sign_patterns(hyperplanes, X)
    win = winner_signatures(hyperplanes, m)
    keys = S.copy()
    for c in range(m):
        mask = win[c] != 0
        wins = (S[:, mask] == win[c, mask]).all(1)
        keys[wins] = win[c]
    return keys


def build_partition(hyperplanes, data, labels):
    """Group pixels into cone regions, keep the ``m`` most populated, match them to classes.

    Regions are the per-class winner cones plus one cell per intransitive sign
    pattern found in the data. Ranking is by population; ties go to the
    lexicographically smaller signature. The region/class matching maximizes
    total agreement with ``labels`` (Hungarian), so it is a bijection.
    """
    X = np.asarray(data, dtype=np.float64)
    if not isinstance(labels, ClassificationMap):
        labels = ClassificationMap(labels, int(np.max(labels)) + 1)
    m = labels.m
    if m < 2 or X.shape[0] == 0:
        raise ValueError("need m >= 2 and a nonempty dataset")
    keys = region_signatures(hyperplanes, X, m)
    cells, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    if cells.shape[0] < m:
        raise DegenerateError(f"degenerate arrangement: k < m ({cells.shape[0]} populated regions, m={m})")
    # np.unique sorts rows lexicographically, so a stable sort on -count keeps that order on ties
    order = np.argsort(-counts, kind="stable")[:m]

    contingency = np.zeros((m, m), dtype=np.int64)
    for r, cell in enumerate(order):
        contingency[r] = np.bincount(labels.labels[inverse == cell], minlength=m)
    rows, cols = linear_sum_assignment(contingency, maximize=True)
    class_of_row = np.empty(m, dtype=np.int64)
    class_of_row[rows] = cols

    W = np.array([h.normal for h in hyperplanes])
    regions = [None] * m
    signatures = np.empty((m, len(hyperplanes)), np.int8)
    pops = np.empty(m, np.int64)
    cell_class = np.full(X.shape[0], -1, dtype=np.int64)
    for r, cell in enumerate(order):
        c = class_of_row[r]
        sig = cells[cell]
        used = sig != 0
        regions[c] = PolyhedralCone(-sig[used, None] * W[used])  # +1 side is <x, -w> <= 0
        signatures[c] = sig
        pops[c] = counts[cell]
        cell_class[inverse == cell] = c
    ordered = np.empty_like(contingency)
    ordered[class_of_row] = contingency
    return ConePartition(list(hyperplanes), regions, signatures, pops, cell_class,
                         int(cells.shape[0]), ordered)
