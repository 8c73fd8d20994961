import numpy as np
import pytest

from kdvnf import paracalc as pc

BANDS = (32, 64, 128, 256)


@pytest.fixture
def chi():
    return pc.make_cutoff()


def test_cutoff_values(chi):
    n = np.arange(-50, 51)
    assert np.all(chi(0, n) == 1)
    assert np.all(chi(np.arange(1, 30), 0) == 0)
    assert chi(1, 100) == 1
    with pytest.raises(pc.ParacalcError):
        pc.make_cutoff(0.3, 0.2)


def test_grid_roundtrip_and_product(rng):
    a = pc.random_function(rng, 5)
    b = pc.random_function(rng, 7)
    ab = pc.product(a, b)
    assert pc.band(ab) == 12
    M = 2 * pc.band(ab) + 1
    ga = pc.to_grid(pc.project(a, 12))
    gb = pc.to_grid(pc.project(b, 12))
    assert np.allclose(pc.from_grid(ga * gb), ab, atol=1e-13)
    assert np.allclose(pc.from_grid(pc.to_grid(a)), a, atol=1e-14)
    with pytest.raises(pc.ParacalcError):
        pc.from_grid(np.ones(M + 1))


def test_constant_symbol(chi, rng):
    u = pc.random_function(rng, 20)
    Tu, lost = pc.paraproduct(chi, np.array([2.5 + 0j]), u, 20)
    assert np.allclose(Tu, 2.5 * u) and lost == 0


def test_high_frequency_symbol_on_constant(chi):
    a = np.zeros(21, complex)
    a[[0, 1, 19, 20]] = 1.0
    u = np.array([1.0 + 0j])
    Tu, _ = pc.paraproduct(chi, a, u)
    assert np.max(np.abs(Tu)) == 0


def test_band_locality(chi, rng):
    a = pc.random_function(rng, 4)
    u = pc.random_function(rng, 10)
    full, _ = pc.paraproduct(chi, a, u)
    assert pc.band(full) == 14
    _, lost = pc.paraproduct(chi, a, u, 14)
    assert lost == 0


def test_bony(chi, rng):
    z = np.zeros(9, complex)
    b = pc.random_function(rng, 4)
    assert all(np.max(np.abs(p)) == 0 for p in pc.bony_split(chi, z, b))
    for B in (8, 32, 128):
        a = pc.random_function(rng, B, 1.5)
        b = pc.random_function(rng, B, 1.5)
        scale = np.abs(a).max() * np.abs(b).max()
        assert pc.bony_identity_residual(chi, a, b) < 1e-13 * scale


def test_op_norm_against_svd(chi, rng):
    a = pc.random_function(rng, 6, decay=3)
    T = pc.paraproduct_matrix(chi, a, 40, 40)
    assert pc.op_norm(T) == pytest.approx(np.linalg.svd(T, compute_uv=False)[0], rel=1e-2)
    assert pc.op_norm(np.zeros((5, 5))) == 0


def test_transpose_smoothing(chi, rng):
    assert pc.transpose_smoothing(chi, np.array([1.0 + 0j]), 0, 2, 32) == 0
    a = pc.random_function(rng, 6, decay=3)
    v = [pc.transpose_smoothing(chi, a, 0, 2, B) for B in BANDS]
    assert pc.band_doubling_factor(v) <= 1.5


def test_interpolation_bounded(rng):
    r = [pc.interpolation_ratio(pc.random_function(rng, B, 1.0), pc.random_function(rng, B, 1.0), 2)
         for B in (8, 32, 128) for _ in range(3)]
    assert max(r) < 2


def test_candidate_constants_binomial_series():
    # (n + 1)^{-k} = n^{-k} sum_i C_i(k) n^{-i}: the symbol of d^{-k} after a shift by one mode
    n = 200.0
    for k in (1, 2, 3):
        s = sum(pc.candidate_constant(k, 0, i) * n ** (-k - i) for i in range(6))
        assert s == pytest.approx((n + 1) ** -k, rel=1e-12)
    assert pc.candidate_constant(0, 2, 3) == 0


def test_psido_constant_symbol():
    rep = pc.psido_compose_expand(np.array([3.0 + 0j]), 1, 1, 3, 32)
    assert rep.remainder_norm < 1e-12


def test_psido_cosine_validated():
    cos = np.array([1, 0, 1], complex)
    rep = pc.psido_compose_expand(cos, 1, 0, 3, 64)
    assert rep.validated and rep.discrepancy < 1e-8
    assert [r[3] for r in rep.rows()] == pytest.approx([-1, 1])
    assert rep.fitted[:4] == pytest.approx([1, -1, 1, -1], abs=1e-8)


def test_constants_table():
    rows = pc.constants_table(np.array([1, 0, 1], complex), i_max=3)
    assert len(rows) == 27
    assert max(r[5] for r in rows) < 1e-8
    for k, j, i, c, _, _ in rows:
        assert c == pytest.approx(pc.candidate_constant(k, j, i), abs=1e-8)


def test_para_constants_match_psido(chi, rng):
    a = pc.random_function(rng, 4, decay=2)
    p = pc.psido_compose_expand(a, 2, 1, 5, 64)
    q = pc.para_compose_expand(chi, a, 2, 1, 5, 64)
    assert np.allclose(p.constants, q.constants)
    assert pc.para_compose_expand(chi, np.array([2.0 + 0j]), 1, 1, 3, 32).remainder_norm < 1e-12


def test_remainders_bounded_under_doubling(chi, rng):
    a = pc.random_function(rng, 6, decay=3)
    psi = [pc.psido_compose_expand(a, 1, 1, 3, B).remainder_norm for B in BANDS]
    par = [pc.para_compose_expand(chi, a, 1, 1, 3, B).remainder_norm for B in BANDS]
    assert pc.band_doubling_factor(psi) <= 1.5
    assert pc.band_doubling_factor(par) <= 1.5


def test_bad_orders():
    with pytest.raises(pc.ParacalcError):
        pc.psido_compose_expand(np.array([1.0 + 0j]), 2, 2, 3, 16)
    with pytest.raises(pc.ParacalcError):
        pc.psido_compose_expand(np.array([1.0 + 0j]), -1, 0, 3, 16)


def test_sigma_stabilization(chi):
    sigma, ratios = pc.sigma_stabilization(chi, 1, 1, 3)
    assert sigma is not None
    assert pc.band_doubling_factor(ratios[sigma]) <= 1.5
