"""Luminance normalization and origin-preserving dimensionality reduction.

The reduction is an *uncentered* PCA (SVD of the raw pixel matrix). Centering
would move the origin, and every separating hyperplane downstream has to pass
through it.
"""
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError
from .io import SpectralDataset

ZERO_NORM = 1e-12


@dataclass
class ProjectionBasis:
    components: np.ndarray  # (d, d') orthonormal columns
    captured_energy: float

    @property
    def d(self):
        return self.components.shape[0]

    @property
    def d_prime(self):
        return self.components.shape[1]


def _as_matrix(data):
    if isinstance(data, SpectralDataset):
        return data.data
    return np.asarray(data, dtype=np.float64)


def sphere_normalize(data):
    """Scale every pixel spectrum to unit L2 norm.

    Accepts a :class:`SpectralDataset` or an (n, d) array and returns the same kind.
    """
    X = _as_matrix(data)
    norms = np.linalg.norm(X, axis=1)
    zero = np.flatnonzero(norms <= ZERO_NORM)
    if zero.size:
        raise DegenerateError(f"zero spectrum at pixel {int(zero[0])}")
    out = X / norms[:, None]
    return data.replace(out) if isinstance(data, SpectralDataset) else out


def fit_projection(data, d_prime):
    """Top-``d_prime`` right singular directions of the uncentered data matrix."""
    X = _as_matrix(data)
    n, d = X.shape
    if not 1 <= d_prime <= d:
        raise ValueError(f"d' must be in [1, {d}], got {d_prime}")
    if n < d_prime:
        raise ValueError(f"need at least d'={d_prime} pixels, got {n}")
    _, s, vt = np.linalg.svd(X, full_matrices=False)
    V = vt[:d_prime].T.copy()
    # deterministic sign: largest-magnitude entry of each direction is positive
    flip = np.sign(V[np.abs(V).argmax(0), np.arange(d_prime)])
    V *= np.where(flip == 0, 1.0, flip)
    energy = s ** 2
    total = energy.sum()
    rank = int((s > s[0] * max(n, d) * np.finfo(float).eps).sum()) if s.size and s[0] > 0 else 0
    if rank < d_prime:
        warnings.warn(
            f"data has rank {rank} < d'={d_prime}; basis padded with orthonormal complement",
            RuntimeWarning,
        )
    captured = float(energy[:d_prime].sum() / total) if total > 0 else 0.0
    return ProjectionBasis(V, captured)


def apply_projection(basis, data):
    """Reduced coordinates ``Y' = Y @ components`` (linear, so 0 maps to 0)."""
    X = _as_matrix(data)
    if X.shape[-1] != basis.d:
        raise ValueError(f"data has {X.shape[-1]} bands, basis expects {basis.d}")
    out = X @ basis.components
    return data.replace(out) if isinstance(data, SpectralDataset) else out
