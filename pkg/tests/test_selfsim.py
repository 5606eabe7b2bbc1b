import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from isomlab import selfsim as ss
from isomlab.geom import (Rotation, Similarity, axis_rotation,
                          apply_similarity, similarity_fixed_point)

GOLDEN = 2 * math.pi * (math.sqrt(5) - 1) / 2
I1 = Rotation(np.eye(1))


def bernoulli():
    return ss.IFS([(Similarity(0.5, I1, np.array([1.0])), 0.5),
                   (Similarity(0.5, I1, np.array([-1.0])), 0.5)])


def rotation_rich(lam=0.9, p1=0.5):
    k1 = Similarity(lam, axis_rotation([1, 0, 0], GOLDEN), np.array([0, 0, 1.0]))
    k2 = Similarity(lam, axis_rotation([0, 0, 1], GOLDEN), np.array([1.0, 0, 0]))
    return ss.IFS([(k1, p1), (k2, 1.0 - p1)])


def test_ifs_validation():
    with pytest.raises(ValueError):
        ss.IFS([])
    with pytest.raises(ValueError):
        ss.IFS([(Similarity(0.5, I1, np.array([1.0])), 0.7)])
    k = Similarity(0.5, I1, np.array([1.0]))
    with pytest.raises(ValueError):
        ss.IFS([(k, 0.5), (Similarity(0.5, I1, np.array([-1.0])), 0.6)])


def test_single_map_flagged_degenerate():
    k = Similarity(0.5, axis_rotation([0, 0, 1], 1.0), np.array([1.0, 0, 0]))
    one = ss.IFS([(k, 1.0)])
    assert one.degenerate
    assert not bernoulli().degenerate


def test_sample_stationary_single_map_at_fixed_point():
    k = Similarity(0.4, axis_rotation([0, 1, 0], 0.8), np.array([0.2, -1.0, 0.5]))
    samples = ss.sample_stationary(ss.IFS([(k, 1.0)]), 25, seed=0)
    fp = similarity_fixed_point(k)
    assert np.max(np.abs(samples - fp)) < 1e-8


def test_bernoulli_law_is_uniform():
    x = ss.sample_stationary(bernoulli(), 20_000, seed=3)[:, 0]
    res = stats.kstest(x, stats.uniform(loc=-2, scale=4).cdf)
    # KS distance below 3 * critical 99% value
    assert res.statistic < 3 * 1.63 / math.sqrt(20_000)


def test_sample_mean_matches_barycenter():
    ifs = rotation_rich(0.6, 0.4)
    b = ifs.barycenter()
    samp = ss.sample_stationary(ifs, 40_000, seed=1)
    sigma = np.std(samp, axis=0) / math.sqrt(len(samp))
    assert np.all(np.abs(samp.mean(axis=0) - b) < 4 * sigma + 1e-9)


def test_covariance_fixed_point_matches_samples():
    ifs = rotation_rich(0.5)
    c = ifs.covariance()
    samp = ss.sample_stationary(ifs, 60_000, seed=2)
    emp = np.cov(samp.T, bias=True)
    assert np.max(np.abs(emp - c)) < 0.05 * max(np.max(np.abs(c)), 1.0)


def test_nu_hat_at_zero_and_symmetry():
    ifs = rotation_rich(0.5)
    assert ss.nu_hat(ifs, np.zeros(3)) == 1.0
    xi = np.array([0.7, -0.3, 0.2])
    v, e = ss.nu_hat_err(ifs, xi, tol=1e-8)
    vm = ss.nu_hat(ifs, -xi, tol=1e-8)
    assert abs(vm - np.conj(v)) < 1e-12
    assert abs(v) <= 1.0 + e


def test_nu_hat_bernoulli_sinc():
    ifs = bernoulli()
    for xi in np.linspace(0.05, 4.0, 25):
        got = ss.nu_hat(ifs, np.array([xi]), tol=1e-8)
        expect = math.sin(4 * math.pi * xi) / (4 * math.pi * xi)
        assert abs(got - expect) < 1e-6


def test_nu_hat_satisfies_recursion():
    ifs = rotation_rich(0.5, 0.35)
    rng = np.random.default_rng(4)
    for _ in range(3):
        xi = rng.standard_normal(3)
        v, e = ss.nu_hat_err(ifs, xi, tol=1e-8)
        rec = sum(p * np.exp(-2j * math.pi * float(xi @ k.v))
                  * ss.nu_hat(ifs, k.lam * (k.rot.matrix.T @ xi), tol=1e-8)
                  for k, p in ifs.maps)
        assert abs(v - rec) <= 2 * e + 1e-12


def test_nu_hat_mc_cross_check():
    ifs = rotation_rich(0.5)
    samp = ss.sample_stationary(ifs, 40_000, seed=5)
    xi = np.array([0.4, 0.1, -0.6])
    emp = np.exp(-2j * math.pi * (samp @ xi)).mean()
    assert abs(ss.nu_hat(ifs, xi, tol=1e-8) - emp) < 4 / math.sqrt(40_000)


def test_nu_hat_budget_error():
    with pytest.raises(ss.RecursionBudgetError):
        ss.nu_hat(rotation_rich(0.97), np.array([40.0, 0, 0]), tol=1e-10,
                  budget=50)


def test_decay_profile_point_mass_flat():
    k = Similarity(0.5, axis_rotation([0, 0, 1], 1.0), np.array([1.0, 0, 0]))
    prof = ss.decay_profile(ss.IFS([(k, 1.0)]), [0.5, 1.0, 2.0, 4.0],
                            method="pointwise", tol=1e-8)
    assert np.allclose(prof["norms"], 1.0, atol=1e-8)
    assert abs(prof["slope"]) < 1e-6
    assert prof["n_est"] == -math.inf


def test_decay_profile_bernoulli_dyadic_slope():
    # |sinc| envelope: at r = 2^j + 1/8 the sine factor is exactly 1 and the
    # transform decays like 1/r, so the fitted slope is near -1
    rs = np.array([0.125 + 2.0**j for j in range(0, 5)])
    prof = ss.decay_profile(bernoulli(), rs, method="pointwise", tol=1e-8)
    assert -1.4 < prof["slope"] < -0.6


def test_ratio_decomposition_exact():
    ifs = rotation_rich(0.7)
    classes = ss.ratio_decomposition(ifs, 2)
    weights = {c.a: c.weight for c in classes}
    assert weights == {(2, 0): Fraction(1, 4), (1, 1): Fraction(1, 2),
                       (0, 2): Fraction(1, 4)}
    assert sum(c.weight for c in classes) == 1
    for c in classes:
        assert len(c.words) * c.cond_weight == 1
        assert abs(c.lam - 0.7**2) < 1e-12
        for w in c.words:
            assert abs(w.lam - c.lam) < 1e-12


def test_ratio_decomposition_sums_to_one_various_l0():
    ifs = rotation_rich(0.8, 0.3)
    for l0 in (1, 3, 6):
        classes = ss.ratio_decomposition(ifs, l0)
        assert sum(c.weight for c in classes) == 1
        assert sum(len(c.words) for c in classes) == 2**l0


def test_extract_gap_component_hand_enumeration():
    ifs = rotation_rich(0.9)
    comp = ss.extract_gap_component(ifs, 2)
    # dominant class (1,1) has weight 1/2; first pivot case multiplies one
    # original map probability
    assert comp.l1 in (5, 6)
    if comp.l1 == 5:
        assert comp.q0 == Fraction(1, 2) ** 2 * Fraction(1, 2)
    else:
        assert comp.q0 == Fraction(1, 2) ** 2 * Fraction(1, 2) ** 2
    assert comp.separation >= 0.5
    lams = [k.lam for k, _ in comp.eta0.atoms]
    assert max(lams) - min(lams) < 1e-12


def test_extract_gap_component_rejects_degenerate():
    k = Similarity(0.5, axis_rotation([0, 0, 1], 1.0), np.array([1.0, 0, 0]))
    with pytest.raises(ValueError):
        ss.extract_gap_component(ss.IFS([(k, 1.0)]), 2)


def test_abert_bound_formula_and_monotonicity():
    assert math.isclose(ss.abert_bound(math.exp(-1.0))["value"],
                        1.0 - math.exp(-2.0), rel_tol=1e-12)
    qs = np.linspace(0.01, math.exp(-1.0), 20)
    vals = [ss.abert_bound(float(q))["value"] for q in qs]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert ss.abert_bound(1e-9)["value"] > 1.0 - 1e-12
    with pytest.raises(ValueError):
        ss.abert_bound(1.5)


def test_smoothness_threshold():
    assert ss.smoothness_threshold(1, 1.0, 0.5, 1.0) == 0.5
    assert (ss.smoothness_threshold(2, 1.0, 0.5)
            > ss.smoothness_threshold(1, 1.0, 0.5))
    assert (ss.smoothness_threshold(1, 2.0, 0.5)
            > ss.smoothness_threshold(1, 1.0, 0.5))
    assert ss.smoothness_threshold(1, 1.0, 1e-9) > 1.0 - 1e-6
    with pytest.raises(ValueError):
        ss.smoothness_threshold(0, 1.0, 0.5)


def test_min_displacement_convex_minimum():
    ifs = rotation_rich(0.9)
    x, val = ss.min_displacement([k for k, _ in ifs.maps])
    rng = np.random.default_rng(6)
    for _ in range(20):
        y = x + 0.1 * rng.standard_normal(3)
        assert ss._separation([k for k, _ in ifs.maps], y) >= val - 1e-9
