"""End-to-end segmentation-to-unmixing pipeline."""
import time
from dataclasses import dataclass, field

import numpy as np

from .cluster import ClassificationMap, gmm_fit, gmm_predict, kmeans, subsample
from .config import RunConfig
from .io import ResultBundle
from .partition import build_partition, train_pairwise_svm
from .preprocess import apply_projection, fit_projection, sphere_normalize
from .unmix import dominant_labels, unmix_from_partition


@dataclass
class PipelineOutput:
    result: object                 # UnmixResult
    segmentation: ClassificationMap
    partition: object              # ConePartition
    reduced: np.ndarray            # (n, d') pixels the partition lives in
    timings: dict = field(default_factory=dict)

    def bundle(self, config):
        return ResultBundle(
            endmembers=self.result.endmembers,
            abundances=self.result.abundances,
            labels=dominant_labels(self.result.abundances).labels,
            config=config,
            timings=self.timings,
            initial_abundances=self.result.initial_abundances,
        )


def preprocess(data, m, config):
    """Optional sphere normalization then uncentered PCA to ``pca_dim`` (default ``m``)."""
    X = np.asarray(data, dtype=np.float64)
    if config.sphere_normalize:
        X = sphere_normalize(X)
    if config.reduce:
        d_prime = min(config.pca_dim or m, X.shape[1])
        X = apply_projection(fit_projection(X, d_prime), X)
    return X


def cluster(X, m, config):
    """Built-in segmentation, fitted on a seeded subsample and applied to every pixel."""
    idx = subsample(X.shape[0], config.cluster_fraction, config.cluster_seed)
    if config.cluster_method == "gmm":
        return gmm_predict(gmm_fit(X[idx], m, seed=config.cluster_seed), X)
    if config.cluster_method == "kmeans":
        _, centroids, _ = kmeans(X[idx], m, seed=config.cluster_seed)
        d2 = ((X[:, None, :] - centroids[None]) ** 2).sum(2)
        return ClassificationMap(d2.argmin(1), m)
    raise ValueError(f"no built-in clustering for method {config.cluster_method!r}")


def run(dataset, m, config=None, labels=None):
    """Unmix ``dataset`` into ``m`` materials.

    ``labels`` (a ClassificationMap) replaces the built-in clustering when given.
    Timings split into ``segmentation`` (clustering only) and ``unmixing``
    (preprocessing, partition and both recovery stages).
    """
    config = (config or RunConfig()).validate()
    timings = {}
    t0 = time.perf_counter()
    X = preprocess(dataset.data, m, config)
    t_pre = time.perf_counter() - t0

    t0 = time.perf_counter()
    if labels is None:
        labels = cluster(X, m, config)
    elif labels.m != m or len(labels) != dataset.n:
        raise ValueError(f"label map ({len(labels)} pixels, m={labels.m}) does not fit "
                         f"dataset ({dataset.n} pixels, m={m})")
    timings["segmentation"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    planes = train_pairwise_svm(X, labels, c_reg=config.svm_c,
                                sample_fraction=config.svm_fraction, seed=config.svm_seed)
    partition = build_partition(planes, X, labels)
    result = unmix_from_partition(
        partition, X, dataset.data.T, labels,
        saturation=config.saturation, lam=config.lam,
        tikhonov_fallback=config.tikhonov_fallback,
        simplex_abundances=config.simplex_abundances,
    )
    timings["unmixing"] = t_pre + time.perf_counter() - t0
    return PipelineOutput(result, labels, partition, X, timings)
