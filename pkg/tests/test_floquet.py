import numpy as np
import pytest

from kdvnf import acceptance, floquet as fl, hill
from kdvnf.potential import hamiltonian_kdv, make_lame_one_gap, make_trig_potential, reverse_potential

NS = fl.NSAMPLES
XE = np.linspace(0, 1, NS + 1)
X = XE[:-1]


def loglog_slope(ns, v):
    return np.polyfit(np.log(ns), np.log(np.abs(v)), 1)[0]


@pytest.fixture(scope="module")
def shifted():
    q, t = acceptance.shifted(n_max=20)
    qr = reverse_potential(q)
    return q, t, qr, hill.spectral_table(qr, 20)


@pytest.mark.parametrize("n", [1, 2, 5, 12])
def test_zero_potential_closed_forms(q_zero, t_zero, n):
    ap, am = fl.floquet_coefficient(q_zero, t_zero, n)
    assert abs(ap - 1j * np.pi * n) < 1e-8 and abs(am + 1j * np.pi * n) < 1e-8
    fp, fm = fl.floquet_solution(q_zero, t_zero, n)
    assert np.max(np.abs(fp - np.exp(1j * np.pi * n * XE))) < 1e-8
    assert np.max(np.abs(fm - np.exp(-1j * np.pi * n * XE))) < 1e-8
    H, G = fl.normalized_pair(q_zero, t_zero, n)
    assert np.max(np.abs(H - np.sqrt(2) * np.cos(n * np.pi * XE))) < 1e-8
    assert np.max(np.abs(G - np.sqrt(2) * np.sin(n * np.pi * XE))) < 1e-8
    assert fl.gap_factor_xi(q_zero, t_zero, n) == pytest.approx(1, abs=1e-8)
    assert fl.gap_factor_d(q_zero, t_zero, n) == pytest.approx(1, abs=1e-8)
    assert abs(fl.beta_angle(q_zero, t_zero, n)) < 1e-12
    assert fl.action(q_zero, t_zero, n) == 0
    assert fl.frequency(q_zero, t_zero, n) == pytest.approx((2 * np.pi * n) ** 3, rel=1e-8)
    W, Wm = fl.W_function(q_zero, t_zero, n)
    assert np.max(np.abs(W - np.exp(2j * np.pi * n * X))) < 1e-8
    assert np.max(np.abs(Wm - np.exp(-2j * np.pi * n * X))) < 1e-8


def test_two_formulas_for_a(q_lame, t_lame12):
    a = fl.floquet_coefficient(q_lame, t_lame12, 3)
    b = fl.floquet_coefficient_alt(q_lame, t_lame12, 3)
    assert max(abs(a[0] - b[0]), abs(a[1] - b[1])) < 1e-7


def test_multiplier_modulus(q_lame, t_lame12):
    fp, _ = fl.floquet_solution(q_lame, t_lame12, 4)
    assert abs(abs(fp[-1] / fp[0]) - 1) < 1e-8


def test_normalization(q_lame, t_lame12):
    H, G = fl.normalized_pair(q_lame, t_lame12, 2)
    # plain trapezoid quadrature of the product as the oracle
    assert abs(np.trapezoid(H * G, XE)) < 1e-8
    fp, _ = fl.floquet_solution(q_lame, t_lame12, 2)
    e = hill.floquet_entries(q_lame, t_lame12.tau[2])
    scale = np.sqrt(-2 * e.m2_l.real / e.Delta_ll.real)
    assert np.max(np.abs(H + 1j * G - scale * fp)) < 1e-7


def test_xi_against_opened_gap(q_lame, t_lame12):
    # sqrt(n pi) sqrt(8 I_n / gamma_n^2) on q + eps cos(10 pi x), extrapolated to eps = 0.
    # The eps^-2 term absorbs the finite numerical width of the collapsed gap.
    n = 5
    coeffs = {int(m): c for m, c in zip(q_lame.modes, q_lame.coeffs) if c != 0}
    eps = np.array([0.04, 0.02, 0.01, 0.005])
    vals = []
    for e in eps:
        c = dict(coeffs)
        c[n] = c.get(n, 0) + e / 2
        c[-n] = c.get(-n, 0) + e / 2
        qe = make_trig_potential(c)
        te = hill.spectral_table(qe, 8)
        vals.append(np.sqrt(n * np.pi * 8 * fl.action_segment(qe, te, n)) / te.gamma[n])
    A = np.c_[np.ones(4), eps ** 2, eps ** -2.0]
    v0 = np.linalg.lstsq(A, np.array(vals), rcond=None)[0][0]
    assert abs(v0 - fl.gap_factor_xi(q_lame, t_lame12, n)) < 1e-7


def test_xi_and_d_bounded(q_lame, t_lame):
    ns = np.array([5, 8, 11, 16, 23, 32, 40])
    xi = np.array([fl.gap_factor_xi(q_lame, t_lame, n) - 1 for n in ns]) * ns ** 2
    d = np.array([fl.gap_factor_d(q_lame, t_lame, n, check=None) - 1 for n in ns]) * ns ** 2
    assert loglog_slope(ns, xi) <= 0.1
    assert loglog_slope(ns, d) <= 0.1


def test_d_product_against_direct(q_lame, t_lame12):
    assert fl.gap_factor_d(q_lame, t_lame12, 3, check=None) == pytest.approx(
        fl.gap_factor_d_direct(q_lame, t_lame12, 3), abs=1e-6)


def test_psi_polynomial(q_lame, t_lame):
    s4 = fl.psi_polynomial(q_lame, t_lame, 4)
    assert s4.shape == (1,)
    s = {n: fl.psi_polynomial(q_lame, t_lame, n)[0] for n in (4, 8, 16, 32, 40)}
    lim = -t_lame.lamDot[1]
    assert abs(s[40] - lim) < abs(s[4] - lim)
    assert max(abs(s[n] - s[40]) * n * n for n in (4, 8, 16)) < 1.0


def test_beta(q_lame, t_lame, shifted):
    q, t, qr, tr = shifted
    ns = np.array([5, 8, 11, 16, 23, 32, 40])
    b = np.array([fl.beta_angle(q, acceptance.shifted()[1], n) for n in ns]) * ns
    assert loglog_slope(ns, b) <= 0.1
    for n in (2, 5, 9):
        assert abs(fl.beta_angle(qr, tr, n) + fl.beta_angle(q, t, n)) < 1e-6


def test_reversal(shifted):
    q, t, qr, tr = shifted
    for n in (2, 3, 7):
        ap, am = fl.floquet_coefficient(q, t, n)
        bp, bm = fl.floquet_coefficient(qr, tr, n)
        assert abs(bp + am) < 1e-7 and abs(bm + ap) < 1e-7
        _, fm = fl.floquet_solution(q, t, n)
        gp, _ = fl.floquet_solution(qr, tr, n)
        # f_{-n}(-x) = (-1)^n f_{-n}(1 - x) on a collapsed gap
        assert np.max(np.abs(gp - (-1) ** n * fm[::-1])) < 1e-7
        _, Wm = fl.W_function(q, t, n)
        V, _ = fl.W_function(qr, tr, n)
        assert np.max(np.abs(V - np.roll(Wm[::-1], 1))) < 1e-6
    assert abs(fl.action(qr, tr, 1) - fl.action(q, t, 1)) < 1e-8


def test_action(q_lame, t_lame12):
    I1 = fl.action(q_lame, t_lame12, 1)
    assert I1 > 0
    assert I1 == pytest.approx(fl.action_segment(q_lame, t_lame12, 1), rel=1e-4)
    assert fl.action(q_lame, t_lame12, 2) == 0


def test_frequency_against_hamiltonian_derivative(q_lame, t_lame12):
    dk = 1e-4
    H, I = [], []
    for k in (0.5 - dk, 0.5 + dk):
        q = make_lame_one_gap(k)
        H.append(hamiltonian_kdv(q))
        I.append(fl.action(q, hill.spectral_table(q, 3), 1))
    fd = (H[1] - H[0]) / (I[1] - I[0])
    assert fl.frequency(q_lame, t_lame12, 1) == pytest.approx(fd, rel=1e-3)


def test_omega_and_W_bounded(q_lame, t_lame):
    ns = np.array([5, 8, 11, 16, 23, 32, 40])
    om = np.array([fl.frequency(q_lame, t_lame, n) - (2 * np.pi * n) ** 3 for n in ns]) * 2 * np.pi * ns
    assert loglog_slope(ns, om) <= 0.1
    sup = []
    for n in ns:
        W, _ = fl.W_function(q_lame, t_lame, n)
        sup.append(np.max(np.abs(W * np.exp(-2j * np.pi * n * X) - 1)) * n)
    assert loglog_slope(ns, sup) <= 0.1
    assert max(sup) / min(sup) <= 5


def test_open_gap_rejected(q_lame, t_lame12):
    with pytest.raises(fl.FloquetError):
        fl.gap_factor_xi(q_lame, t_lame12, 1)


def test_floquet_data_bundle(q_lame, t_lame12):
    d = fl.floquet_data(q_lame, t_lame12, 3)
    assert d.H.shape == d.G.shape == (NS + 1,)
    assert d.W_plus.shape == (NS,)
    assert np.allclose(d.W_minus, np.conj(d.W_plus))
