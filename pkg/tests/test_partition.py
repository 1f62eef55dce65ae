import math

import numpy as np
import pytest

from oracles import separable_problem, subgradient_svm
from polyunmix.errors import DegenerateError
from polyunmix.partition import (SeparatingHyperplane, build_partition, fit_unbiased_svm,
                                 region_signatures, svm_primal_objective, train_pairwise_svm)
from polyunmix.pipeline import preprocess
from polyunmix.config import RunConfig
from polyunmix.synth import SynthConfig, generate


def unit(deg):
    return np.array([math.cos(math.radians(deg)), math.sin(math.radians(deg))])


def sector_fixture():
    """Three 120-degree sectors centred at 90, 210 and 330 degrees with hand-placed planes."""
    planes = [SeparatingHyperplane((0, 1), unit(240)),
              SeparatingHyperplane((0, 2), unit(300)),
              SeparatingHyperplane((1, 2), unit(0))]
    angles = np.concatenate([np.linspace(40, 140, 30), np.linspace(160, 260, 20), np.linspace(280, 380, 10)])
    X = np.array([unit(a) for a in angles]) * np.linspace(0.5, 2, angles.size)[:, None]
    labels = np.repeat([0, 1, 2], [30, 20, 10])
    return planes, X, labels


def test_antipodal_classes():
    X = np.array([[1.0, 0.0], [1.0, 0.2], [1.0, -0.2], [-1.0, 0.0], [-1.0, 0.2], [-1.0, -0.2]])
    y = np.array([1, 1, 1, -1, -1, -1.0])
    fit = fit_unbiased_svm(X, y)
    np.testing.assert_allclose(fit.w / np.linalg.norm(fit.w), [1, 0], atol=1e-6)
    assert np.maximum(0, 1 - y * (X @ fit.w)).sum() < 1e-6


def test_svm_matches_subgradient_oracle(rng):
    for _ in range(3):
        X, y = separable_problem(rng)
        fit = fit_unbiased_svm(X, y)
        best, _ = subgradient_svm(X, y)
        assert abs(fit.primal - best) <= 1e-3 * best
        assert fit.gap <= 1e-6 * fit.primal
        assert fit.primal == pytest.approx(svm_primal_objective(X, y, fit.w, 1.0))


def test_svm_inseparable_still_converges(rng):
    X = rng.standard_normal((40, 3))
    y = np.where(rng.random(40) < 0.5, -1.0, 1.0)
    fit = fit_unbiased_svm(X, y, C=0.5)
    assert fit.gap <= 1e-6 * fit.primal


def test_hyperplanes_through_origin_and_oriented(rng):
    X = np.vstack([rng.normal([3, 0, 1], 0.3, (40, 3)), rng.normal([0, 3, 1], 0.3, (40, 3)),
                   rng.normal([1, 1, 3], 0.3, (40, 3))])
    labels = np.repeat([0, 1, 2], 40)
    planes = train_pairwise_svm(X, labels, sample_fraction=0.5)
    assert [p.class_pair for p in planes] == [(0, 1), (0, 2), (1, 2)]
    for p in planes:
        assert p.decision(np.zeros((1, 3)))[0] == 0.0
        assert np.linalg.norm(p.normal) == pytest.approx(1.0)
        i, j = p.class_pair
        assert np.mean(p.decision(X[labels == i]) <= 0) >= 0.5
        assert np.mean(p.decision(X[labels == j]) > 0) >= 0.5


def test_m2_gives_two_cells(rng):
    X = np.vstack([rng.normal([2, 0], 0.3, (30, 2)), rng.normal([0, 2], 0.3, (50, 2))])
    labels = np.repeat([0, 1], [30, 50])
    part = build_partition(train_pairwise_svm(X, labels, sample_fraction=1.0), X, labels)
    assert part.n_cells == 2 and part.m == 2
    for c in range(2):
        assert part.contingency[c].argmax() == c  # each cell maps to its majority class
    assert part.region_populations.sum() == 80


def test_three_planes_in_2d_keep_most_populated():
    planes, X, labels = sector_fixture()
    part = build_partition(planes, X, labels)
    assert 3 <= part.n_cells <= 6
    assert part.region_populations.tolist() == [30, 20, 10]
    np.testing.assert_array_equal(part.cell_class, labels)


def test_intransitive_cells_counted_and_dropped():
    # 0 beats 1 and 1 beats 2 near angle 0, yet 2 beats 0 there: a cyclic pattern
    def n(v):
        return np.asarray(v, float) / np.linalg.norm(v)
    planes = [SeparatingHyperplane((0, 1), n([-1, 0])), SeparatingHyperplane((0, 2), n([1, 0.2])),
              SeparatingHyperplane((1, 2), n([-1, 0.5]))]
    X = np.array([unit(a) for a in range(360)])
    keys = region_signatures(planes, X, 3)
    cyclic = (keys != 0).all(1)
    assert cyclic[0] and not cyclic[90]
    part = build_partition(planes, X, np.arange(360) % 3)
    assert part.n_cells == 5 and part.m == 3
    assert sorted(part.region_populations.tolist()) == [38, 142, 142]
    assert (part.cell_class == -1).sum() == 360 - 322


def test_degenerate_arrangement_raises():
    planes, X, labels = sector_fixture()
    with pytest.raises(DegenerateError, match="k < m"):
        build_partition(planes, X[:30], np.r_[labels[:28], 1, 2])


def test_region_signature_grouping():
    planes, X, _ = sector_fixture()
    keys = region_signatures(planes, X, 3)
    assert len(np.unique(keys, axis=0)) == 3


def test_synthetic_cells_match_dominant_labels():
    # dominant-label classes touch with zero margin, so only pixels whose top
    # abundance leads by >= 0.1 count as well separated
    ds, gt = generate(SynthConfig(d=10, m=3, n=3000, dirichlet_alpha=0.3, seed=5))
    X = preprocess(ds.data, 3, RunConfig())
    part = build_partition(train_pairwise_svm(X, gt.labels), X, gt.labels)
    assert len(set(part.contingency.argmax(1))) == 3
    top2 = np.sort(gt.abundances, 0)[-2:]
    clear = top2[1] - top2[0] >= 0.1
    assert np.mean(part.cell_class[clear] == gt.labels[clear]) >= 0.99
    assert np.mean(part.cell_class == gt.labels) >= 0.95


def test_retained_cones_have_disjoint_interiors(rng):
    ds, gt = generate(SynthConfig(d=8, m=4, n=2000, seed=2))
    X = preprocess(ds.data, 4, RunConfig())
    part = build_partition(train_pairwise_svm(X, gt.labels), X, gt.labels)
    P = rng.standard_normal((10_000, 4))
    strictly_inside = np.stack([(cone.margins(P) < 0).all(1) for cone in part.regions])
    assert strictly_inside.sum(0).max() <= 1
    assert sorted(part.contingency.argmax(0)) == [0, 1, 2, 3]  # bijection


def test_partition_deterministic():
    ds, gt = generate(SynthConfig(d=8, m=3, n=1500, seed=9))
    X = preprocess(ds.data, 3, RunConfig())
    runs = [build_partition(train_pairwise_svm(X, gt.labels, seed=4), X, gt.labels) for _ in range(2)]
    for a, b in zip(runs[0].hyperplanes, runs[1].hyperplanes):
        assert a.normal.tobytes() == b.normal.tobytes()
    np.testing.assert_array_equal(runs[0].signatures, runs[1].signatures)
    np.testing.assert_array_equal(runs[0].cell_class, runs[1].cell_class)


def test_class_missing_from_subsample_falls_back(rng):
    X = np.vstack([rng.normal([2, 0], 0.2, (200, 2)), rng.normal([0, 2], 0.2, (1, 2))])
    labels = np.r_[np.zeros(200, int), 1]
    with pytest.warns(UserWarning, match="absent from SVM subsample"):
        planes = train_pairwise_svm(X, labels, sample_fraction=0.1, seed=0)
    assert planes[0].decision(X[-1:])[0] > 0
