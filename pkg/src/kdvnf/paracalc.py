"""Paraproducts and composition expansions on a truncated torus.

Functions are Fourier coefficient vectors u on modes -B..B, u(x) = sum u_k e^{2 pi i k x}.
Operators are dense matrices between such bands.  Sobolev norms use the
weight <k> = max(1, |k|).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special


class ParacalcError(ValueError):
    pass


def _smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.asarray(x, float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        f = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        g = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
        return np.where(x <= 0, 0.0, np.where(x >= 1, 1.0, f / (f + g)))


def _smooth_step_d(x):
    x = np.asarray(x, float)
    inside = (x > 0) & (x < 1)
    xi = np.where(inside, x, 0.5)
    f = np.exp(-1 / xi)
    g = np.exp(-1 / (1 - xi))
    df = f / xi ** 2
    dg = -g / (1 - xi) ** 2
    d = (df * (f + g) - f * (df + dg)) / (f + g) ** 2
    return np.where(inside, d, 0.0)


@dataclass(frozen=True)
class Cutoff:
    eps1: float = 0.1
    eps2: float = 0.2

    def __post_init__(self):
        if not (0 < self.eps1 < self.eps2 < 1):
            raise ParacalcError("cutoff needs 0 < eps1 < eps2 < 1")

    def phi(self, r):
        return 1.0 - _smooth_step((np.asarray(r, float) - self.eps1) / (self.eps2 - self.eps1))

    def __call__(self, theta, eta):
        return self.phi(np.abs(theta) / (1.0 + np.abs(eta)))

    def d_eta(self, theta, eta):
        theta = np.abs(np.asarray(theta, float))
        eta = np.asarray(eta, float)
        r = theta / (1 + np.abs(eta))
        dphi = -_smooth_step_d((r - self.eps1) / (self.eps2 - self.eps1)) / (self.eps2 - self.eps1)
        return dphi * (-theta * np.sign(eta) / (1 + np.abs(eta)) ** 2)


def make_cutoff(eps1: float = 0.1, eps2: float = 0.2) -> Cutoff:
    return Cutoff(eps1, eps2)


# ---------------------------------------------------------------- functions

def modes(B: int) -> np.ndarray:
    return np.arange(-B, B + 1)


def band(u) -> int:
    return (len(u) - 1) // 2


def bracket(k):
    return np.maximum(1.0, np.abs(k))


def sobolev_norm(u, s: float) -> float:
    k = modes(band(u))
    return float(np.sqrt(np.sum(bracket(k) ** (2 * s) * np.abs(u) ** 2)))


def project(u, B: int):
    """Restriction (or zero extension) of u to modes -B..B."""
    Bu = band(u)
    out = np.zeros(2 * B + 1, complex)
    m = min(B, Bu)
    out[B - m:B + m + 1] = u[Bu - m:Bu + m + 1]
    return out


def random_function(rng, B: int, decay: float = 0.0, real: bool = True, mean_zero: bool = False):
    """Random band-limited coefficients with |u_k| ~ <k>^-decay."""
    k = modes(B)
    u = (rng.standard_normal(2 * B + 1) + 1j * rng.standard_normal(2 * B + 1)) * bracket(k) ** (-decay)
    if real:
        u = 0.5 * (u + np.conj(u[::-1]))
    if mean_zero:
        u[B] = 0
    return u


def from_grid(values):
    """Coefficients on modes -B..B from samples on j/M, M = 2B+1."""
    M = len(values)
    if M % 2 == 0:
        raise ParacalcError("use an odd number of samples")
    c = np.fft.fft(values) / M
    return c[modes((M - 1) // 2) % M]


def to_grid(u):
    M = len(u)
    c = np.zeros(M, complex)
    c[modes(band(u)) % M] = u
    return np.fft.ifft(c) * M


def product(a, b):
    """Exact product of trig polynomials; the band is band(a) + band(b)."""
    return np.convolve(a, b)


def derivative(a, i: int = 1):
    return (2j * np.pi * modes(band(a))) ** i * a


# ---------------------------------------------------------------- operators

def dx_inv(B: int, m: int = 1) -> np.ndarray:
    """d_x^{-m} on modes -B..B; the constant mode is annihilated."""
    k = modes(B)
    d = np.zeros(len(k), complex)
    nz = k != 0
    d[nz] = (2j * np.pi * k[nz]) ** (-m)
    return d


def multiplication_matrix(a, B_in: int, B_out: int) -> np.ndarray:
    A = band(a)
    kout = modes(B_out)[:, None]
    kin = modes(B_in)[None, :]
    d = kout - kin
    M = np.zeros((len(kout), kin.shape[1]), complex)
    ok = np.abs(d) <= A
    M[ok] = a[(d + A)[ok]]
    return M


def paraproduct_matrix(chi: Cutoff, a, B_in: int, B_out: int | None = None) -> np.ndarray:
    """T[m, n] = chi(m - n, n) a_{m - n}."""
    B_out = band(a) + B_in if B_out is None else B_out
    kout = modes(B_out)[:, None]
    kin = modes(B_in)[None, :]
    return multiplication_matrix(a, B_in, B_out) * chi(kout - kin, kin)


def paraproduct(chi: Cutoff, a, u, B_out: int | None = None):
    """T_a u; returns (coefficients on -B_out..B_out, l2 norm of the discarded part)."""
    full = paraproduct_matrix(chi, a, band(u)) @ u
    if B_out is None:
        return full, 0.0
    kept = project(full, B_out)
    lost = float(np.sqrt(max(np.sum(np.abs(full) ** 2) - np.sum(np.abs(kept) ** 2), 0.0)))
    return kept, lost


def bt(A):
    """Bilinear transpose between symmetric mode lists, <Au, v> = <u, A^t v>."""
    return A.T[::-1, ::-1]


def op_norm(A, s_in: float = 0.0, s_out: float = 0.0, iters: int = 20, tol: float = 1e-6,
            seed: int = 0) -> float:
    """H^{s_in} -> H^{s_out} norm of a matrix between bands by power iteration."""
    Bo = (A.shape[0] - 1) // 2
    Bi = (A.shape[1] - 1) // 2
    M = (bracket(modes(Bo)) ** s_out)[:, None] * A * (bracket(modes(Bi)) ** (-s_in))[None, :]
    if not np.any(M):
        return 0.0
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(M.shape[1]) + 1j * rng.standard_normal(M.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = M.conj().T @ (M @ v)
        new = np.linalg.norm(w)
        if new == 0:
            return 0.0
        v = w / new
        if abs(new - lam) <= tol * new:
            lam = new
            break
        lam = new
    return float(np.sqrt(lam))


# ---------------------------------------------------------------- Bony

def bony_split(chi: Cutoff, a, b):
    """(T_a b, T_b a, R) with R = ab - T_a b - T_b a on the product band."""
    B = band(a) + band(b)
    ab = product(a, b)
    Tab = project(paraproduct(chi, a, b)[0], B)
    Tba = project(paraproduct(chi, b, a)[0], B)
    R = ab - Tab - Tba
    return Tab, Tba, R


def bony_identity_residual(chi, a, b) -> float:
    Tab, Tba, R = bony_split(chi, a, b)
    return float(np.abs(Tab + Tba + R - product(a, b)).max())


def bony_smoothing_ratio(chi, a, b, s1: float, s2: float) -> float:
    _, _, R = bony_split(chi, a, b)
    den = sobolev_norm(a, s1) * sobolev_norm(b, s2)
    return sobolev_norm(R, s1 + s2 - 1) / den if den else 0.0


def transpose_smoothing(chi: Cutoff, a, s: float, rho: float, B: int, **kw) -> float:
    """H^s -> H^{s + rho - 1} norm of T_a^t - T_a on modes -B..B."""
    T = paraproduct_matrix(chi, a, B, B)
    return op_norm(bt(T) - T, s, s + rho - 1, **kw)


def paraproduct_norm(chi, a, s: float, B: int, **kw) -> float:
    return op_norm(paraproduct_matrix(chi, a, B, B), s, s, **kw)


def interpolation_ratio(u, v, s: float) -> float:
    """||uv||_s / (||u||_s ||v||_1 + ||u||_1 ||v||_s)."""
    den = sobolev_norm(u, s) * sobolev_norm(v, 1) + sobolev_norm(u, 1) * sobolev_norm(v, s)
    return sobolev_norm(product(u, v), s) / den


# ---------------------------------------------------------------- compositions

def candidate_constant(k: int, j: int, i: int) -> float:
    """binom(-k, i) from the symbol calculus; independent of j."""
    return float((-1) ** i * special.binom(k + i - 1, i)) if i else 1.0


def _fit_constants(M, a, k, j, i_max, chi=None, xmax=0.1, degree=14):
    """Least-squares C_i from the entries of an operator matrix.

    An entry at (n + d, n) of d^{-k} a d^{-j} equals a_d (2 pi i n)^{-k-j} g(d/n)
    with g(x) = (1 + x)^{-k}; g is fitted by a polynomial in x on |x| <= xmax.
    """
    A = band(a)
    B = (M.shape[1] - 1) // 2
    Bo = (M.shape[0] - 1) // 2
    xs, gs = [], []
    for d in range(-A, A + 1):
        ad = a[d + A]
        if abs(ad) < 1e-14 * np.abs(a).max():
            continue
        for n in range(-B, B + 1):
            if n == 0 or n + d == 0 or abs(n + d) > Bo or abs(d) > xmax * abs(n):
                continue
            ref = ad * (2j * np.pi * n) ** (-k - j)
            if chi is not None:
                c = chi(d, n)
                if c < 1 - 1e-15:
                    continue
                ref = ref * c
            xs.append(d / n)
            gs.append(M[n + d + Bo, n + B] / ref)
    xs = np.array(xs)
    gs = np.array(gs)
    if len(xs) < degree + 2:
        raise ParacalcError("not enough samples to fit composition constants")
    V = (xs[:, None] / xmax) ** np.arange(degree + 1)[None, :]
    c, *_ = np.linalg.lstsq(V, gs, rcond=None)
    fit_res = float(np.abs(V @ c - gs).max())
    C = c[:i_max + 1] / xmax ** np.arange(i_max + 1)
    return C, fit_res


def _expansion_matrix(a, k, j, N, C, B, chi=None):
    """sum_{i=0}^{N-k-j} C_i (d^i a) d^{-k-j-i} (or with T_{d^i a})."""
    A = band(a)
    Bo = A + B
    E = np.zeros((2 * Bo + 1, 2 * B + 1), complex)
    for i in range(0, N - k - j + 1):
        ai = derivative(a, i)
        Mi = paraproduct_matrix(chi, ai, B, Bo) if chi is not None else multiplication_matrix(ai, B, Bo)
        E += C[i] * Mi * dx_inv(B, k + j + i)[None, :]
    return E


def _lhs(a, k, j, B, chi=None):
    A = band(a)
    Bo = A + B
    Mi = paraproduct_matrix(chi, a, B, Bo) if chi is not None else multiplication_matrix(a, B, Bo)
    return dx_inv(Bo, k)[:, None] * Mi * dx_inv(B, j)[None, :]


@dataclass
class CompositionReport:
    k: int
    j: int
    N: int
    constants: np.ndarray        # C_0..C_{N-k-j} used in the expansion
    candidate: np.ndarray
    fitted: np.ndarray
    fit_residual: float
    discrepancy: float
    validated: bool
    remainder_norm: float
    s: float

    def rows(self):
        for i in range(1, len(self.constants)):
            yield [self.k, self.j, i, float(self.constants[i].real), self.fit_residual]


def _compose(a, k, j, N, B, s, chi, i_check):
    if k < 0 or j < 0:
        raise ParacalcError("k and j must be non-negative")
    if N < k + j:
        raise ParacalcError("N must be at least k + j")
    n_terms = max(N - k - j, i_check)
    cand = np.array([candidate_constant(k, j, i) for i in range(n_terms + 1)])
    M = _lhs(a, k, j, B, chi)
    if np.abs(a[band(a) + 1:]).max(initial=0) == 0 and np.abs(a[:band(a)]).max(initial=0) == 0:
        fitted = cand.copy()
        fit_res = 0.0
    else:
        fitted, fit_res = _fit_constants(M, a, k, j, n_terms, chi)
    disc = float(np.abs(fitted[1:] - cand[1:]).max(initial=0.0))
    if disc > 1e-4:
        raise ParacalcError(f"constants disagree with the oracle by {disc:.2e} for k={k}, j={j}")
    validated = disc <= 1e-8
    C = cand if validated else fitted
    R = M - _expansion_matrix(a, k, j, N, C, B, chi)
    rn = op_norm(R, s, s + N + 1)
    return CompositionReport(k, j, N, C[:N - k - j + 1], cand, fitted, fit_res, disc, validated, rn, s)


def psido_compose_expand(a, k: int, j: int, N: int, B: int = 64, s: float = 0.0,
                         i_check: int = 3) -> CompositionReport:
    """d^{-k} a d^{-j} = sum_i C_i(k, j) (d^i a) d^{-k-j-i} + R on modes -B..B."""
    return _compose(a, k, j, N, B, s, None, i_check)


def para_compose_expand(chi: Cutoff, a, k: int, j: int, N: int, B: int = 64, s: float = 0.0,
                        i_check: int = 3) -> CompositionReport:
    """d^{-k} T_a d^{-j} = sum_i C_i(k, j) T_{d^i a} d^{-k-j-i} + R on modes -B..B."""
    return _compose(a, k, j, N, B, s, chi, i_check)


def constants_table(a, ks=(0, 1, 2), js=(0, 1, 2), i_max: int = 3, B: int = 128, chi=None):
    """Rows (k, j, i, C_i, fit_residual) for i = 1..i_max, oracle-validated."""
    rows = []
    for k in ks:
        for j in js:
            rep = _compose(a, k, j, k + j + i_max, B, 0.0, chi, i_max)
            for i in range(1, i_max + 1):
                rows.append([k, j, i, float(rep.constants[i].real), rep.fit_residual,
                             rep.discrepancy])
    return rows


def band_doubling_factor(values) -> float:
    """max over successive doublings of value(2B) / value(B)."""
    v = np.asarray(values, float)
    return float(np.max(v[1:] / v[:-1]))


def sigma_stabilization(chi, k: int, j: int, N: int, bands=(32, 64, 128), sigmas=range(0, 8),
                        draws: int = 5, seed: int = 0, factor: float = 1.5):
    """Smallest Sobolev index sigma for which ||R|| / ||a||_sigma is stable under band growth.

    a is drawn with the same band as the truncation, so its smoothness is what
    decides whether the remainder bound holds uniformly.
    """
    rng = np.random.default_rng(seed)
    ratios = {s: [] for s in sigmas}
    for B in bands:
        worst = {s: 0.0 for s in sigmas}
        for _ in range(draws):
            a = random_function(rng, B // 4, decay=1.0)
            r = para_compose_expand(chi, a, k, j, N, B).remainder_norm
            for s in sigmas:
                worst[s] = max(worst[s], r / sobolev_norm(a, s))
        for s in sigmas:
            ratios[s].append(worst[s])
    for s in sigmas:
        if band_doubling_factor(ratios[s]) <= factor:
            return s, ratios
    return None, ratios
