import numpy as np
import pytest

from kdvnf import acceptance, floquet as fl, hill
from kdvnf import nfmap as nf
from kdvnf.potential import Potential


@pytest.fixture(scope="module")
def ch():
    return acceptance.chart(16)


@pytest.fixture(scope="module")
def small():
    cfg = nf.TruncConfig(n_max=8)
    return nf.finite_gap_chart(cfg, 0.0, nf.action_of_modulus(0.02), modulus_guess=0.02)


@pytest.fixture(scope="module")
def state(ch):
    z0 = nf.base_state(ch)
    zp = nf.random_perp(ch.cfg, np.random.default_rng(0), ch.cfg.radius)
    return z0, zp


def test_config():
    cfg = nf.TruncConfig(n_max=4)
    assert cfg.indices.tolist() == [-4, -3, -2, -1, 1, 2, 3, 4]
    assert cfg.perp.tolist() == [-4, -3, -2, 2, 3, 4]
    assert cfg.grid == 32 and cfg.K == 15
    assert cfg.interior().sum() == 4
    with pytest.raises(nf.NFMapError):
        nf.TruncConfig(n_max=4, S_plus=(1, 2))
    with pytest.raises(nf.NFMapError):
        nf.TruncConfig(n_max=4, grid=16)


def test_seq_state():
    cfg = nf.TruncConfig(n_max=4)
    s = nf.SeqState.from_parts(cfg, [1j, -1j], np.arange(6.0))
    assert np.allclose(s.z_S, [1j, -1j])
    assert s.norm(part="S") == pytest.approx(np.sqrt(2))
    assert not s.is_real()
    r = nf.SeqState.from_parts(cfg, [1 + 1j, 1 - 1j], [3, 2, 1, 1, 2, 3])
    assert r.is_real()


def test_dx_inv_and_pairing():
    cfg = nf.TruncConfig(n_max=4)
    d = nf.dx_inv_diag(cfg)
    e1 = np.zeros(len(cfg.kvec), complex)
    e1[cfg.kvec == 1] = 1
    assert np.allclose(d * e1, e1 / (2j * np.pi))
    assert np.allclose(nf.basis_maps(cfg)["dx_inv"]() @ e1, d * e1)
    rng = np.random.default_rng(0)
    A = rng.normal(size=(8, 8))
    a, b = rng.normal(size=8), rng.normal(size=8)
    assert nf.pairing(A @ a, b) == pytest.approx(nf.pairing(a, nf.bt(A) @ b))


def test_action_inverse():
    I = nf.action_of_modulus(0.4)
    assert nf.modulus_for_action(I, guess=0.6) == pytest.approx(0.4, abs=1e-7)


def test_angle_periodicity():
    cfg = nf.TruncConfig(n_max=4)
    I = nf.action_of_modulus(0.5)
    a = nf.finite_gap_chart(cfg, 0.0, I)
    b = nf.finite_gap_chart(cfg, 2 * np.pi, I)
    assert np.max(np.abs(a.point(a.z_S0).q - b.point(b.z_S0).q)) < 1e-13


def test_chart_potential_is_one_gap(ch):
    p = ch.point(ch.z_S0)
    q = Potential(p.q, ch.cfg.K)
    t = hill.spectral_table(q, 8)
    assert fl.action(q, t, 1) == pytest.approx(ch.I1, rel=1e-6)
    assert np.all(t.gamma[2:] < 1e-6)
    th, I = ch.theta_I(ch.z_S0)
    assert I == pytest.approx(ch.I1, rel=1e-12) and abs(th) < 1e-12


def test_small_action_limit(small):
    # Psi_1 tends to the embedding of the Fourier basis
    W = nf.psi1_matrix(small)
    F = nf.basis_maps(small.cfg)["F_perp"]
    assert np.max(np.abs(W - F)) < 1e-3
    om = nf.omega_perp(small)
    n = small.cfg.perp
    assert np.max(np.abs(om / (2 * np.pi * n) ** 2 - 1)) < 1e-4
    assert nf.quadratic_form_check(small)["max_relative"] < 1e-4


def test_canonical_and_transpose(ch):
    assert abs(nf.canonical_check(ch)) < 1e-9
    r = nf.psi1_transpose_identity(ch)
    assert r["residual"] < 1e-4
    assert r["cross"] < 1e-8


def test_vanishing_at_torus(ch, state):
    z0, _ = state
    assert np.max(np.abs(nf.L_blocks(ch, z0))) == 0
    assert np.max(np.abs(nf.E_vector(ch, z0))) == 0
    assert np.max(np.abs(nf.X_field(ch, 0.5, z0))) == 0
    assert np.max(np.abs(nf.psi_C(ch, z0) - z0)) < 1e-10
    assert nf.parametrix_coeffs(ch, z0)["a_norm"][1] == 0
    J = nf.jacobian(ch, lambda v: nf.flow(ch, 0.0, 1.0, v), z0)
    assert np.max(np.abs(J - np.eye(len(z0)))) < 1e-8


def test_L_structure(ch, state):
    z0, zp = state
    L = nf.L_blocks(ch, z0 + zp)
    p = ~ch.cfg.S_mask
    assert np.max(np.abs(L[np.ix_(p, p)])) == 0
    # skew with respect to the bilinear transpose
    assert np.max(np.abs(L + nf.bt(L))) < 1e-12 * np.max(np.abs(L))


def test_E_is_quadratic(ch, state):
    z0, zp = state
    r = np.linalg.norm(nf.E_vector(ch, z0 + 2 * zp)) / np.linalg.norm(nf.E_vector(ch, z0 + zp))
    assert r == pytest.approx(4, rel=0.01)


def test_neumann_matches_dense(ch, state):
    z0, zp = state
    z = z0 + zp
    info = {}
    a = nf.X_field(ch, 0.7, z, info=info)
    b = nf.X_field(ch, 0.7, z, method="dense")
    assert np.max(np.abs(a - b)) < 1e-9


def test_flow_inverse_and_group_law(ch, state):
    z0, zp = state
    z = z0 + zp
    back = nf.psi_C_inv(ch, nf.psi_C(ch, z))
    assert np.max(np.abs(back - z)) < 1e-8
    half = nf.flow(ch, 0.5, 1.0, nf.flow(ch, 0.0, 0.5, z))
    assert np.max(np.abs(half - nf.flow(ch, 0.0, 1.0, z))) < 1e-10


def test_symplectic(ch, state):
    z0, zp = state
    assert nf.symplectic_residual(ch, z0, directions="S") < 1e-6
    r = nf.symplectic_residual(ch, z0 + zp)
    rL = nf.symplectic_residual(ch, z0 + zp, corrector=False)
    assert r < 1e-4
    assert rL > 5 * r


def test_dflow_transpose(ch, state):
    z0, zp = state
    assert nf.dflow_transpose(ch, 1.0, z0 + zp)["residual"] < 1e-5


def test_reversal(ch, state):
    # theta = 0 gives an even potential, so reversal commutes with the map
    z0, zp = state
    z = z0 + zp
    f = nf.psi_full(ch, z)
    fr = nf.psi_full(ch, nf.reverse(z))
    assert np.max(np.abs(fr - f[::-1])) < 1e-10
    assert nf.H_of(ch, nf.reverse(z)) == pytest.approx(nf.H_of(ch, z), rel=1e-10)


def test_hamiltonian_angle_invariant(ch):
    z1 = nf.base_state(ch)
    z2 = z1.copy()
    S = ch.cfg.S_mask
    z2[S] = ch.z_S_of(0.3, ch.I1)
    assert nf.H_of(ch, z2) == pytest.approx(nf.H_of(ch, z1), rel=1e-10)


def test_normal_form(ch):
    rep = nf.hamiltonian_normal_form_check(ch)
    assert rep["quadratic"]["max_relative"] < 5e-3
    assert rep["identity"]["residual"] < 1e-3
    assert rep["cubic"]["exponent"] == pytest.approx(3, abs=0.2)


def test_parametrix(ch, state):
    z0, zp = state
    p1 = nf.parametrix_coeffs(ch, z0 + zp)
    p2 = nf.parametrix_coeffs(ch, z0 + 2 * zp)
    assert p2["a_norm"][1] / p1["a_norm"][1] == pytest.approx(4, rel=0.1)


def test_matrix_roundtrip(tmp_path, ch, state):
    L = nf.L_blocks(ch, sum(state))
    path = tmp_path / "L.bin"
    nf.export_matrix(path, L)
    assert path.stat().st_size == 16 + 16 * L.size
    assert np.array_equal(nf.import_matrix(path), L)
    path.write_bytes(b"XXXXXXXX" + path.read_bytes()[8:])
    with pytest.raises(ValueError):
        nf.import_matrix(path)
