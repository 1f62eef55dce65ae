"""Built-in pixel classification: k-means++ / Lloyd and diagonal-covariance GMM.

All randomness flows through :func:`numpy.random.default_rng`, i.e. the PCG64
generator, so a given seed reproduces the same labels everywhere.
"""
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

VARIANCE_FLOOR = 1e-8


@dataclass
class ClassificationMap:
    """Per-pixel class indices in ``{0, ..., m-1}``."""

    labels: np.ndarray
    m: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
        self.m = int(self.m)
        if self.m < 1:
            raise ValueError(f"class count must be >= 1, got {self.m}")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.m):
            raise ValueError(
                f"labels must lie in [0, {self.m - 1}], found "
                f"[{self.labels.min()}, {self.labels.max()}]"
            )

    def __len__(self):
        return self.labels.size

    def counts(self):
        return np.bincount(self.labels, minlength=self.m)


@dataclass
class GmmModel:
    weights: np.ndarray    # (m,)
    means: np.ndarray      # (m, d)
    variances: np.ndarray  # (m, d), diagonal covariances
    log_likelihood: list = field(default_factory=list)  # mean per-sample, one per EM step
    converged: bool = False

    @property
    def m(self):
        return self.weights.shape[0]


def subsample(n, fraction, seed):
    """Sorted ``floor(fraction * n)`` distinct indices drawn uniformly from ``range(n)``."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    k = int(math.floor(fraction * n))
    if k < 1:
        raise ValueError(f"fraction {fraction} of {n} pixels selects nothing")
    if k == n:
        return np.arange(n)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=k, replace=False))


def _sq_dists(X, C):
    # (n, k) squared euclidean distances
    d2 = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    np.maximum(d2, 0.0, out=d2)
    return d2


def _kmeans_pp(X, m, rng):
    n = X.shape[0]
    centers = np.empty((m, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    closest = _sq_dists(X, centers[:1])[:, 0]
    for k in range(1, m):
        total = closest.sum()
        if total <= 0.0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers[k] = X[idx]
        closest = np.minimum(closest, _sq_dists(X, centers[k:k + 1])[:, 0])
    return centers


def kmeans(data, m, seed=0, max_iter=300):
    """k-means++ seeding followed by Lloyd iterations.

    Stops at the first assignment fixpoint (or after ``max_iter``). Clusters
    that go empty are re-seeded at the point farthest from its centroid.

    Returns
    -------
    cmap : ClassificationMap
    centroids : ndarray, shape (m, d)
    inertia : float
    """
    X = np.asarray(data, dtype=np.float64)
    n = X.shape[0]
    if m < 1 or m > n:
        raise ValueError(f"need 1 <= m <= n, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp(X, m, rng)
    labels = None
    for _ in range(max_iter):
        d2 = _sq_dists(X, centroids)
        new = d2.argmin(1)
        counts = np.bincount(new, minlength=m)
        for k in np.flatnonzero(counts == 0):
            far = int(d2[np.arange(n), new].argmax())
            new[far] = k
            d2[far] = np.inf
            d2[far, k] = 0.0
            counts = np.bincount(new, minlength=m)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for k in range(m):
            centroids[k] = X[labels == k].mean(0)
    inertia = float(((X - centroids[labels]) ** 2).sum())
    return ClassificationMap(labels, m), centroids, inertia


def _log_prob(X, model):
    # (n, m) log of weight_k * N(x | mean_k, diag(var_k))
    var = model.variances
    log_det = np.log(var).sum(1)
    maha = ((X[:, None, :] - model.means[None]) ** 2 / var[None]).sum(2)
    d = X.shape[1]
    return np.log(model.weights)[None] - 0.5 * (d * math.log(2 * math.pi) + log_det[None] + maha)


def _m_step(X, resp):
    nk = resp.sum(0) + 10 * np.finfo(float).eps
    means = (resp.T @ X) / nk[:, None]
    var = (resp.T @ (X * X)) / nk[:, None] - means ** 2
    floored = var < VARIANCE_FLOOR
    return nk / nk.sum(), means, np.maximum(var, VARIANCE_FLOOR), bool(floored.any())


def gmm_fit(data, m, seed=0, max_iter=200, tol=1e-6):
    """Fit a diagonal-covariance Gaussian mixture by EM from a k-means start.

    ``model.log_likelihood`` holds the mean per-sample log-likelihood after
    each E-step; EM stops once the gain drops below ``tol``.
    """
    X = np.asarray(data, dtype=np.float64)
    n = X.shape[0]
    if m > n:
        raise ValueError(f"need m <= n, got m={m}, n={n}")
    cmap, _, _ = kmeans(X, m, seed=seed)
    resp = np.zeros((n, m))
    resp[np.arange(n), cmap.labels] = 1.0
    weights, means, var, floored = _m_step(X, resp)
    model = GmmModel(weights, means, var)
    any_floor = floored
    for _ in range(max_iter):
        lp = _log_prob(X, model)
        norm = logsumexp(lp, axis=1)
        ll = float(norm.mean())
        prev = model.log_likelihood[-1] if model.log_likelihood else -np.inf
        model.log_likelihood.append(ll)
        if ll - prev < tol:
            model.converged = True
            break
        resp = np.exp(lp - norm[:, None])
        model.weights, model.means, model.variances, floored = _m_step(X, resp)
        any_floor |= floored
    if any_floor:
        warnings.warn("GMM variance floor engaged on a degenerate component", RuntimeWarning)
    return model


def gmm_responsibilities(model, data):
    lp = _log_prob(np.asarray(data, dtype=np.float64), model)
    return np.exp(lp - logsumexp(lp, axis=1)[:, None])


def gmm_predict(model, data):
    """Most probable component per pixel (lowest index wins ties)."""
    X = np.asarray(data, dtype=np.float64)
    if X.shape[1] != model.means.shape[1]:
        raise ValueError(f"data has {X.shape[1]} dims, model expects {model.means.shape[1]}")
    return ClassificationMap(_log_prob(X, model).argmax(1), model.m)
