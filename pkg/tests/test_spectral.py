import math
import warnings

import numpy as np
import pytest

from isomlab import harmonics as hrm
from isomlab import spectral as sp
from isomlab.config import default_gap_measure
from isomlab.geom import Isometry, Rotation, axis_rotation, haar_rotation
from isomlab.measures import (DiscreteMeasure, dirac, prepare_symmetric,
                              project_theta, symmetrize)


def two_point_measure(v):
    v = np.asarray(v, dtype=float)
    ident = Rotation(np.eye(3))
    return DiscreteMeasure.from_pairs([
        (Isometry(v, ident), 0.5), (Isometry(-v, ident), 0.5)])


def closed_form_norm_sq(r, vnorm):
    a = 4.0 * math.pi * r * vnorm
    return 0.5 * (1.0 + math.sin(a) / a)


def test_constant_image_closed_form():
    lmax = 32
    v = np.array([0.0, 0.0, 1.0])
    for r in (0.1, 0.5, 1.0, 2.0):
        op = sp.transfer_operator(two_point_measure(v), r, lmax)
        one = hrm.BandFunction.constant(lmax).coeffs
        got = float(np.linalg.norm(op.apply(one)) ** 2)
        assert abs(got - closed_form_norm_sq(r, 1.0)) < 1e-8


def test_pure_rotation_blocks_match_wigner_svd():
    rng = np.random.default_rng(0)
    pairs = [(Isometry(np.zeros(3), haar_rotation(rng)), 0.6),
             (Isometry(np.zeros(3), haar_rotation(rng)), 0.4)]
    mu = DiscreteMeasure.from_pairs(pairs)
    lmax = 8
    m = sp.S_r_matrix(mu, 1.0, lmax).entries
    for l in range(lmax + 1):
        sl = slice(l * l, (l + 1) * (l + 1))
        block = m[sl, sl]
        direct = sum(w * hrm.wigner_D(l, g.rot) for g, w in mu.atoms)
        assert np.max(np.abs(block - direct)) < 1e-10
        if l > 0:
            # off-block entries vanish: rotations preserve degree
            assert np.max(np.abs(m[sl, : l * l])) < 1e-12


def test_rho_matrix_unitary_on_safe_degrees():
    g = Isometry(np.array([0.3, 0.1, -0.2]), haar_rotation(np.random.default_rng(1)))
    m = sp.rho_matrix(g, 0.3, 24)
    # rho_r(g) is unitary; compression can only shrink
    s = np.linalg.svd(m.entries, compute_uv=False)
    assert s[0] <= 1.0 + 1e-10


def test_dense_equals_apply():
    mu = symmetrize(default_gap_measure())
    op = sp.transfer_operator(mu, 0.7, 12)
    dense = op.dense()
    rng = np.random.default_rng(2)
    x = rng.standard_normal(dense.shape[0]) + 1j * rng.standard_normal(dense.shape[0])
    assert np.max(np.abs(dense @ x - op.apply(x))) < 1e-11


def test_symmetric_measure_gives_hermitian_psd():
    prep = prepare_symmetric(default_gap_measure(), power=2)
    m = sp.S_r_matrix(prep["mu"], 0.5, 12).entries
    assert np.max(np.abs(m - m.conj().T)) < 1e-10
    vals = np.linalg.eigvalsh((m + m.conj().T) / 2)
    assert vals.min() > -1e-10
    assert vals.max() <= 1.0 + 1e-10


def test_half_norm_matches_direct():
    prep = prepare_symmetric(default_gap_measure(), power=2)
    r, lmax = 0.1, 24
    direct = sp.operator_norm(sp.transfer_operator(prep["mu"], r, lmax))
    via_half = sp.half_norm(sp.transfer_operator(prep["half"], r, lmax))
    # compressing the half operator can only shrink the estimate, and the
    # two routes agree once the band truncation has converged
    assert via_half <= direct + 1e-9
    assert abs(direct - via_half) < 1e-5


def test_identity_measure_norm_one():
    mu = dirac(Isometry(np.zeros(3), Rotation(np.eye(3))))
    assert abs(sp.operator_norm(sp.transfer_operator(mu, 1.0, 8)) - 1.0) < 1e-12


def test_norm_below_one_for_gap_measure():
    prep = prepare_symmetric(default_gap_measure(), power=2)
    nrm = sp.operator_norm(sp.transfer_operator(prep["mu"], 1.0, 16))
    assert nrm < 0.9


def test_auto_lmax_monotone_and_degraded():
    mu = symmetrize(default_gap_measure())
    l1, d1 = sp.auto_lmax(mu, 0.05)
    l2, d2 = sp.auto_lmax(mu, 0.3)
    l3, d3 = sp.auto_lmax(mu, 50.0)
    assert l1 <= l2 <= l3
    assert not d1 and not d2
    assert d3 and l3 == 64


def test_tail_bound_certifies_auto_choice():
    mu = symmetrize(default_gap_measure())
    lmax, degraded = sp.auto_lmax(mu, 0.5, tol=1e-6)
    assert not degraded
    assert sp.tail_bound(mu, 0.5, lmax) <= 1e-6


def test_F_r_function_taylor_regime():
    prep = prepare_symmetric(default_gap_measure(), power=2)
    res = sp.F_r_function(prep["mu"], 0.01, 8)
    assert res["one_minus_F_norm"] <= res["taylor_bound"]
    assert res["norm"] <= 1.0 + 1e-12


def test_t_gap_point_mass_is_one():
    mu = project_theta(dirac(Isometry(np.zeros(3),
                                      axis_rotation([0, 0, 1], 1.1))))
    res = sp.t_gap(mu, 6)
    assert abs(res["norm"] - 1.0) < 1e-12


def test_t_gap_default_prepared_below_one():
    prep = prepare_symmetric(default_gap_measure(), power=3)
    res = sp.t_gap(project_theta(prep["mu"]), 8)
    assert res["norm"] < 0.6
    assert np.all(res["per_l"] <= 1.0 + 1e-12)


def test_spectral_curve_small():
    prep = prepare_symmetric(default_gap_measure(), power=2)
    curve = sp.spectral_curve(prep["mu"], [0.3, 0.6], cap=16,
                              half=prep["half"])
    assert np.all(curve.norms < 1.0)
    assert np.all(curve.err_bars >= 0.0)
    assert curve.fitted_c > 0.0


def test_top_eigenvalues_ordering():
    prep = prepare_symmetric(default_gap_measure(), power=2)
    vals = sp.top_eigenvalues(prep["mu"], 0.1, 24, k=2, half=prep["half"])
    direct = sp.top_eigenvalues(prep["mu"], 0.1, 24, k=2)
    assert vals[0] >= vals[1] >= 0.0
    assert np.max(np.abs(vals - direct)) < 1e-5


def test_two_radius_check_positive():
    prep = prepare_symmetric(default_gap_measure(), power=2)
    res = sp.two_radius_check(prep["mu"], 0.8, 0.9, cap=16, half=prep["half"])
    assert res["ok"]
    assert res["c_fit"] > 0.0


def test_littlewood_paley_trivial_single_block():
    # at r = 0.5, L = 16 the first block covers every degree in the band,
    # so the block decomposition is trivial and the inequality immediate
    prep = prepare_symmetric(default_gap_measure(), power=2)
    lmax = 16
    op = sp.densify(sp.transfer_operator(prep["mu"], 0.5, lmax))
    rng = np.random.default_rng(3)
    for _ in range(5):
        phi = hrm.random_band(lmax, lmax // 2, rng)
        res = sp.littlewood_paley_check(op, 0.5, 16, 4, phi)
        assert res["ok"]


def test_littlewood_paley_multi_block():
    prep = prepare_symmetric(default_gap_measure(), power=2)
    lmax = 32
    r = 0.004
    op = sp.densify(sp.transfer_operator(prep["mu"], r, lmax))
    spec = hrm.block_spec(r, 4.0, lmax)
    assert spec.nblocks >= 3
    rng = np.random.default_rng(4)
    for _ in range(5):
        phi = hrm.random_band(lmax, lmax // 2, rng)
        res = sp.littlewood_paley_check(op, r, 4.0, 4, phi)
        assert res["ok"]


def test_cross_term_bound():
    prep = prepare_symmetric(default_gap_measure(), power=3)
    lmax, r, L, l0 = 32, 0.004, 4.0, 4
    op = sp.densify(sp.transfer_operator(prep["mu"], r, lmax))
    spec = hrm.block_spec(r, L, lmax)
    rng = np.random.default_rng(5)
    lo1, hi1 = spec.ranges[0]
    lo2, hi2 = spec.ranges[2]
    c1 = np.zeros(hrm.band_dim(lmax), dtype=complex)
    sl = slice(0, hrm.band_dim(hi1))
    c1[sl] = rng.standard_normal(hrm.band_dim(hi1))
    psi1 = hrm.BandFunction(lmax, c1 / np.linalg.norm(c1))
    c2 = np.zeros(hrm.band_dim(lmax), dtype=complex)
    a, b = hrm.band_dim(lo2), hrm.band_dim(hi2)
    c2[a:b] = rng.standard_normal(b - a)
    psi2 = hrm.BandFunction(lmax, c2 / np.linalg.norm(c2))
    res = sp.cross_term_check(op, r, L, l0, psi1, psi2, 0)
    assert res["ok"]


def test_schur_exact_value():
    rng = np.random.default_rng(6)
    l = 3
    u = rng.standard_normal(2 * l + 1) + 1j * rng.standard_normal(2 * l + 1)
    v = rng.standard_normal(2 * l + 1) + 1j * rng.standard_normal(2 * l + 1)
    res = sp.schur_average(l, u, v, 40000, seed=7)
    expect = (np.linalg.norm(u) * np.linalg.norm(v)) ** 2 / (2 * l + 1)
    assert math.isclose(res["exact"], expect, rel_tol=1e-12)
    assert abs(res["mean"] - res["exact"]) <= 3.0 * res["mc_sigma"]


def test_schur_deterministic():
    u = np.ones(3, dtype=complex)
    v = np.ones(3, dtype=complex)
    a = sp.schur_average(1, u, v, 5000, seed=1)
    b = sp.schur_average(1, u, v, 5000, seed=1)
    assert a["mean"] == b["mean"]


def test_hs_fourier_bound():
    res = sp.hs_fourier_check(3, 0.7, 20000, seed=2)
    assert res["ok"]
    assert 0.0 < res["cap_mass"] < 1.0


def test_psi_r_and_fourier_step_warning():
    mu = symmetrize(default_gap_measure())
    phi = sp.psi_r(0.5, np.array([0.0, 0.0, 1.0]), 8)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        with pytest.raises(RuntimeWarning):
            sp.fourier_step(phi, mu, 0.5)
    rng = np.random.default_rng(9)
    small = hrm.random_band(16, 8, rng)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        out = sp.fourier_step(small, mu, 0.05)
    assert out.norm() <= small.norm() + 1e-12


def test_transfer_rejects_wrong_dimension():
    mu = dirac(Isometry(np.zeros(2), Rotation(np.eye(2))))
    with pytest.raises(ValueError):
        sp.transfer_operator(mu, 1.0, 8)
