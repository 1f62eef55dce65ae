import numpy as np
import pytest

from polyunmix.synth import SynthConfig, generate, random_instance, sample_endmembers, verify_theorem


def test_noiseless_model_exact():
    ds, gt = generate(SynthConfig(d=8, m=3, n=100, seed=3))
    assert np.linalg.norm(ds.data.T - gt.endmembers @ gt.abundances) == 0.0
    assert (ds.height * ds.width, ds.d) == (100, 8)


def test_noise_level():
    ds, gt = generate(SynthConfig(d=20, m=3, n=2000, noise_sigma=0.01, seed=3))
    resid = ds.data.T - gt.endmembers @ gt.abundances
    assert resid.std() == pytest.approx(0.01, rel=0.05)


def test_spiky_dirichlet_concentrates():
    frac = [np.mean(generate(SynthConfig(d=6, m=3, n=1000, dirichlet_alpha=0.01, seed=s))[1]
                    .abundances.max(0) >= 0.9) for s in range(5)]
    assert min(frac) >= 0.9


def test_labels_are_argmax_and_generation_deterministic():
    cfg = SynthConfig(d=6, m=4, n=300, seed=11)
    (ds1, gt1), (ds2, gt2) = generate(cfg), generate(cfg)
    np.testing.assert_array_equal(gt1.labels, gt1.abundances.argmax(0))
    assert ds1.data.tobytes() == ds2.data.tobytes()


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(d=2, m=3)
    with pytest.raises(ValueError):
        SynthConfig(m=3, n=2)
    with pytest.raises(ValueError):
        SynthConfig(dirichlet_alpha=0.0)


def test_endmembers_well_conditioned(rng):
    for _ in range(20):
        M = sample_endmembers(10, 5, rng)
        s = np.linalg.svd(M, compute_uv=False)
        assert s[-1] > 0.05 * s[0] and (M > 0).all()


def test_theorem_random_instance_lstsq_oracle():
    rng = np.random.default_rng(4)
    M = sample_endmembers(8, 4, rng)
    assert verify_theorem(M, trials=10_000, seed=1).passed
    # independent check with least-squares coefficients
    X = rng.standard_normal((10_000, 8))
    C = np.linalg.lstsq(M, X.T, rcond=None)[0].T
    lab = C.argmax(1)
    rho = rng.random(10_000)
    for c in range(4):
        idx = np.flatnonzero(lab == c)
        j = rng.permutation(idx)
        mix = rho[idx, None] * X[idx] + (1 - rho[idx, None]) * X[j]
        Cm = np.linalg.lstsq(M, mix.T, rcond=None)[0].T
        assert (Cm[:, c] >= Cm.max(1) - 1e-9).all()


def test_theorem_report_counts():
    rep = verify_theorem(sample_endmembers(5, 3, np.random.default_rng(0)), trials=2000)
    assert rep.origin_ok and rep.convexity_checked > 1900 and rep.homogeneity_checked > 1900
    assert rep.witnesses == []


def test_random_instance_ranges(rng):
    for _ in range(30):
        M = random_instance(rng)
        d, m = M.shape
        assert 2 <= m <= 6 and m <= d <= 12
