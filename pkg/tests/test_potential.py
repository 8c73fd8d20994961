import json

import numpy as np
import pytest
from scipy import special

from kdvnf import hill
from kdvnf.potential import (PotentialError, eval_derivative, eval_potential, from_samples,
                             hamiltonian_kdv, load_potential, make_lame_one_gap,
                             make_trig_potential, potential_from_json, reverse_potential,
                             translate_potential, zero_potential)

X = np.linspace(0, 1, 37)


def test_empty_dict_is_zero():
    q = make_trig_potential({})
    assert q.is_zero()
    assert np.all(eval_potential(q, X) == 0)


def test_trig_synthesis():
    q = make_trig_potential({1: 1, -1: 1})
    assert np.allclose(eval_potential(q, X), 2 * np.cos(2 * np.pi * X), atol=1e-14)
    q = make_trig_potential({1: 1, -1: 1, 2: -0.5j, -2: 0.5j})
    ref = 2 * np.cos(2 * np.pi * X) + np.sin(4 * np.pi * X)
    assert np.allclose(eval_potential(q, X), ref, atol=1e-14)


def test_rejects_complex_or_nonzero_mean():
    with pytest.raises(PotentialError):
        make_trig_potential({1: 1.0, -1: 2.0})
    with pytest.raises(PotentialError):
        make_trig_potential({0: 1.0, 1: 1.0, -1: 1.0})


def test_lame_matches_elliptic_closed_form():
    # independent oracle: 2(2K)^2 k^2 sn^2(2Kx) minus its mean 8K(K-E)
    k = 0.5
    q = make_lame_one_gap(k)
    K, E = special.ellipk(k * k), special.ellipe(k * k)
    x = np.random.default_rng(0).uniform(0, 1, 50)
    sn = special.ellipj(2 * K * x, k * k)[0]
    ref = 8 * K * K * k * k * sn ** 2 - 8 * K * (K - E)
    assert np.max(np.abs(eval_potential(q, x) - ref)) < 1e-11


def test_lame_mean_and_small_modulus():
    q = make_lame_one_gap(0.5)
    assert abs(np.mean(q.samples(256))) < 1e-12
    sups = [np.abs(make_lame_one_gap(k).samples(256)).max() for k in (0.2, 0.05, 0.01)]
    assert sups[0] > sups[1] > sups[2]
    assert sups[2] < 1e-2


def test_lame_is_one_gap():
    t = hill.spectral_table(make_lame_one_gap(0.5), 8)
    assert t.gamma[2] / t.gamma[1] < 1e-6


def test_lame_rejects_bad_modulus():
    with pytest.raises(PotentialError):
        make_lame_one_gap(1.0)


def test_reverse():
    assert reverse_potential(zero_potential()).is_zero()
    c = make_trig_potential({1: 1, -1: 1})
    assert np.allclose(eval_potential(reverse_potential(c), X), eval_potential(c, X))
    s = make_trig_potential({2: -0.5j, -2: 0.5j})
    assert np.allclose(eval_potential(reverse_potential(s), X), -np.sin(4 * np.pi * X), atol=1e-14)


def test_translate():
    c = make_trig_potential({1: 1, -1: 1})
    assert np.allclose(translate_potential(c, 0).coeffs, c.coeffs)
    assert np.allclose(translate_potential(c, 1).coeffs, c.coeffs, atol=1e-14)
    assert np.allclose(eval_potential(translate_potential(c, 0.25), X),
                       -2 * np.sin(2 * np.pi * X), atol=1e-13)


def test_eval_derivative():
    c = make_trig_potential({1: 1, -1: 1})
    assert np.all(eval_derivative(zero_potential(), X, 0) == 0)
    assert abs(eval_derivative(c, 0.0, 1)) < 1e-14
    assert abs(eval_derivative(c, 0.25, 0)) < 1e-14
    assert np.allclose(eval_derivative(c, X, 2), -2 * (2 * np.pi) ** 2 * np.cos(2 * np.pi * X))


def test_from_samples_projects_mean():
    x = np.arange(64) / 64
    q = from_samples(3 + 2 * np.cos(2 * np.pi * x))
    assert q.n_pot == 1
    assert np.allclose(q.coeffs, [1, 0, 1])


def test_json_roundtrip(tmp_path):
    q = make_trig_potential({1: 1, -1: 1, 3: 0.2 + 0.1j, -3: 0.2 - 0.1j})
    path = tmp_path / "q.json"
    path.write_text(json.dumps(q.to_json()))
    assert np.allclose(load_potential(path).coeffs, q.coeffs)
    assert np.allclose(potential_from_json(q.to_json()).coeffs, q.coeffs)


def test_hamiltonian_of_cosine():
    # 1/2 int q_x^2 = 4 pi^2 and int q^3 = 0 for q = 2 cos(2 pi x)
    assert hamiltonian_kdv(make_trig_potential({1: 1, -1: 1})) == pytest.approx(4 * np.pi ** 2, rel=1e-13)
