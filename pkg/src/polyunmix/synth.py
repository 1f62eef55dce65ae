"""Synthetic linear-mixing data and a Monte-Carlo check of the cone-partition geometry."""
import math
from dataclasses import dataclass, field

import numpy as np

from .io import GroundTruth, SpectralDataset

TIE_BAND = 1e-9
CONDITION_RATIO = 0.05


@dataclass
class SynthConfig:
    d: int = 16
    m: int = 3
    n: int = 2500
    noise_sigma: float = 0.0
    dirichlet_alpha: float = 0.5
    seed: int = 0
    height: int = None  # default: most square factorization of n

    def __post_init__(self):
        if not self.d >= self.m >= 2:
            raise ValueError(f"need d >= m >= 2, got d={self.d}, m={self.m}")
        if self.n < self.m:
            raise ValueError(f"need n >= m, got n={self.n}")
        if self.noise_sigma < 0 or self.dirichlet_alpha <= 0:
            raise ValueError("noise_sigma must be >= 0 and dirichlet_alpha > 0")
        if self.height is None:
            self.height = max(h for h in range(1, math.isqrt(self.n) + 1) if self.n % h == 0)
        if self.n % self.height:
            raise ValueError(f"height {self.height} does not divide n={self.n}")

    @property
    def width(self):
        return self.n // self.height


def sample_endmembers(d, m, rng):
    """Uniform(0.1, 1) spectra, redrawn until sigma_min > 0.05 * sigma_max."""
    while True:
        M = rng.uniform(0.1, 1.0, size=(d, m))
        s = np.linalg.svd(M, compute_uv=False)
        if s[-1] > CONDITION_RATIO * s[0]:
            return M


def generate(config):
    """Draw ``Y = M A + E`` with Dirichlet abundances; returns ``(dataset, ground_truth)``."""
    rng = np.random.default_rng(config.seed)
    M = sample_endmembers(config.d, config.m, rng)
    A = rng.dirichlet(np.full(config.m, config.dirichlet_alpha), size=config.n).T
    A /= A.sum(0)  # guard against rounding in the sampler
    Y = M @ A
    if config.noise_sigma > 0:
        Y = Y + rng.normal(0.0, config.noise_sigma, size=Y.shape)
    dataset = SpectralDataset(Y.T.copy(), config.height, config.width)
    return dataset, GroundTruth(M, A, A.argmax(0))


def linear_coefficients(M, X):
    """Least-squares coefficients of each row of ``X`` over the columns of ``M``, shape (k, m)."""
    return np.asarray(X, dtype=np.float64) @ np.linalg.pinv(M).T


def _top_two(C):
    part = np.sort(C, axis=1)
    return part[:, -1], part[:, -2]


@dataclass
class TheoremReport:
    trials: int
    convexity_checked: int = 0
    convexity_violations: int = 0
    homogeneity_checked: int = 0
    homogeneity_violations: int = 0
    origin_ok: bool = True
    witnesses: list = field(default_factory=list)

    @property
    def passed(self):
        return self.origin_ok and not (self.convexity_violations or self.homogeneity_violations)


def verify_theorem(gt, trials=10_000, seed=0, max_witnesses=5):
    """Monte-Carlo certificate that dominant-coefficient regions are convex cones.

    ``gt`` is a GroundTruth or a (d, m) endmember matrix with independent columns.
    Checks, for random points in R^d: a convex combination of two same-label
    points keeps the label; positive rescaling keeps the label; the origin has
    all-zero coefficients. Points within ``1e-9`` of a tie are excluded.
    """
    M = np.asarray(getattr(gt, "endmembers", gt), dtype=np.float64)
    d, m = M.shape
    rng = np.random.default_rng(seed)
    report = TheoremReport(trials)
    pinv = np.linalg.pinv(M)

    origin = pinv @ np.zeros(d)
    report.origin_ok = bool(np.all(origin == 0.0))

    X = rng.standard_normal((trials, d))
    C = X @ pinv.T
    label = C.argmax(1)
    top, second = _top_two(C)
    clear = top - second >= TIE_BAND

    # partner with the same label: shuffle within each label group
    partner = np.full(trials, -1)
    for c in range(m):
        idx = np.flatnonzero(clear & (label == c))
        if idx.size >= 2:
            partner[idx] = idx[rng.permutation(idx.size)]
    ok = partner >= 0
    rho = rng.random(trials)
    Xr = rho[:, None] * X + (1 - rho)[:, None] * X[np.maximum(partner, 0)]
    Cr = Xr @ pinv.T
    # label c must still attain the max (ties allowed within the band)
    bad = ok & (Cr[np.arange(trials), label] < Cr.max(1) - TIE_BAND)
    report.convexity_checked = int(ok.sum())
    report.convexity_violations = int(bad.sum())
    for k in np.flatnonzero(bad)[:max_witnesses]:
        report.witnesses.append({"kind": "convexity", "x": X[k].tolist(),
                                 "x_prime": X[partner[k]].tolist(), "rho": float(rho[k])})

    t = np.exp(rng.uniform(np.log(1e-3), np.log(1e3), size=trials))
    Ct = (t[:, None] * X) @ pinv.T
    bad = clear & (Ct[np.arange(trials), label] < Ct.max(1) - TIE_BAND * t)
    report.homogeneity_checked = int(clear.sum())
    report.homogeneity_violations = int(bad.sum())
    for k in np.flatnonzero(bad)[:max_witnesses]:
        report.witnesses.append({"kind": "homogeneity", "x": X[k].tolist(), "t": float(t[k])})
    return report


def random_instance(rng, m_range=(2, 6), d_max=12):
    m = int(rng.integers(m_range[0], m_range[1] + 1))
    d = int(rng.integers(m, d_max + 1))
    return sample_endmembers(d, m, rng)
