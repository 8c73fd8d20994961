"""Real, mean-zero, 1-periodic potentials stored by their Fourier coefficients."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import special


class PotentialError(ValueError):
    pass


@dataclass(frozen=True)
class Potential:
    """q(x) = sum_{|n| <= n_pot} coeffs[n + n_pot] e^{2 pi i n x}."""

    coeffs: np.ndarray
    n_pot: int
    grid: int = field(default=0)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (2 * self.n_pot + 1,):
            raise PotentialError("coefficient array does not match n_pot")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "grid", max(int(self.grid), 4 * self.n_pot, 16))

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.n_pot, self.n_pot + 1)

    def coeff(self, n: int) -> complex:
        if abs(n) > self.n_pot:
            return 0j
        return complex(self.coeffs[n + self.n_pot])

    def samples(self, m: int | None = None) -> np.ndarray:
        """Values on the grid x_j = j/m, j = 0..m-1."""
        m = self.grid if m is None else m
        return eval_potential(self, np.arange(m) / m)

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2)))

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def to_json(self) -> dict:
        rows = [[int(n), float(c.real), float(c.imag)]
                for n, c in zip(self.modes, self.coeffs) if c != 0]
        return {"n_pot": self.n_pot, "coeffs": rows}


def zero_potential() -> Potential:
    return Potential(np.zeros(1, complex), 0)


def make_trig_potential(coeffs: dict, rtol: float = 1e-12) -> Potential:
    """Potential from a mapping n -> q_n; q_{-n} must equal conj(q_n)."""
    coeffs = {int(n): complex(v) for n, v in coeffs.items()}
    if abs(coeffs.get(0, 0)) > 0:
        raise PotentialError("the mean q_0 must vanish")
    n_pot = max([abs(n) for n in coeffs] + [0])
    arr = np.zeros(2 * n_pot + 1, complex)
    for n, v in coeffs.items():
        arr[n + n_pot] = v
    scale = max(np.max(np.abs(arr)), 1.0)
    if np.max(np.abs(arr - np.conj(arr[::-1]))) > rtol * scale:
        raise PotentialError("coefficients are not Hermitian: q would be complex valued")
    arr = 0.5 * (arr + np.conj(arr[::-1]))
    return Potential(arr, n_pot)


def from_samples(values: np.ndarray, tol: float = 1e-15) -> Potential:
    """Project real samples on [0,1) to a mean-zero band-limited potential."""
    m = len(values)
    c = np.fft.fft(np.asarray(values, float)) / m
    c[0] = 0.0
    half = m // 2 - 1
    mags = np.abs(c[1:half + 1])
    big = np.nonzero(mags > tol * max(mags.max(), 1e-300))[0]
    n_pot = int(big[-1] + 1) if len(big) else 0
    arr = np.zeros(2 * n_pot + 1, complex)
    for n in range(1, n_pot + 1):
        arr[n_pot + n] = c[n]
        arr[n_pot - n] = np.conj(c[n])
    return Potential(arr, n_pot, grid=m)


def lame_samples(modulus: float, m: int) -> np.ndarray:
    """Samples of 2(2K)^2 k^2 sn^2(2Kx, k) on x = j/m (mean not removed)."""
    k2 = modulus ** 2
    K = special.ellipk(k2)
    sn = special.ellipj(2 * K * np.arange(m) / m, k2)[0]
    return 2 * (2 * K) ** 2 * k2 * sn ** 2


def make_lame_one_gap(modulus: float, max_grid: int = 4096) -> Potential:
    """One-gap Lame potential 2(2K)^2 k^2 sn^2(2Kx, k) - c(k) of period 1.

    The positive sign is the one that closes every gap except the first for
    the operator -y'' + q y.  c(k) removes the mean.

    The grid is doubled until the trailing Fourier coefficients drop below
    roundoff; the resolution used is stored in ``grid``.
    """
    if not (0.0 < modulus < 1.0):
        raise PotentialError("elliptic modulus must lie in (0, 1)")
    m = 64
    while True:
        vals = lame_samples(modulus, m)
        if not np.all(np.isfinite(vals)):
            raise PotentialError("elliptic function evaluation failed")
        c = np.abs(np.fft.rfft(vals)) / m
        tail = c[m // 4:].max() if m >= 8 else c.max()
        if tail < 1e-15 * max(c[1:].max(), 1e-300) or m >= max_grid:
            break
        m *= 2
    return from_samples(vals)


def reverse_potential(q: Potential) -> Potential:
    """(S_rev q)(x) = q(-x)."""
    return Potential(q.coeffs[::-1].copy(), q.n_pot, q.grid)


def translate_potential(q: Potential, s: float) -> Potential:
    """Coefficients q_n e^{2 pi i n s}, i.e. the potential x -> q(x + s)."""
    return Potential(q.coeffs * np.exp(2j * np.pi * q.modes * s), q.n_pot, q.grid)


def eval_derivative(q: Potential, x, order: int = 0):
    """Spectral derivative of order ``order`` at the points x.

    Any order is exact for the stored trig polynomial; roundoff grows like
    (2 pi n_pot)^order, so orders beyond about 6 lose digits.
    """
    x = np.asarray(x, float)
    n = q.modes
    mult = (2j * np.pi * n) ** order * q.coeffs
    vals = np.exp(2j * np.pi * np.multiply.outer(x, n)) @ mult
    return vals.real


def eval_potential(q: Potential, x):
    return eval_derivative(q, x, 0)


def potential_from_json(obj: dict) -> Potential:
    n_pot = int(obj["n_pot"])
    coeffs = {}
    for n, re, im in obj["coeffs"]:
        if abs(int(n)) > n_pot:
            raise PotentialError(f"mode {n} exceeds n_pot={n_pot}")
        coeffs[int(n)] = complex(re, im)
    q = make_trig_potential(coeffs)
    if q.n_pot < n_pot:
        pad = np.zeros(2 * n_pot + 1, complex)
        pad[n_pot - q.n_pot:n_pot + q.n_pot + 1] = q.coeffs
        q = Potential(pad, n_pot)
    return q


def load_potential(path) -> Potential:
    with open(path) as fh:
        return potential_from_json(json.load(fh))


def hamiltonian_kdv(q: Potential) -> float:
    """H(q) = 1/2 int q_x^2 + int q^3, evaluated exactly for the trig polynomial."""
    n = q.modes
    c = q.coeffs
    h2 = 0.5 * np.sum((2 * np.pi * n) ** 2 * np.abs(c) ** 2)
    m = max(8 * q.n_pot, 16)
    vals = q.samples(m)
    h3 = np.mean(vals ** 3)
    return float(h2 + h3)
