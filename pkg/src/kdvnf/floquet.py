"""Floquet data at closed gaps and the hyperelliptic quantities of finite-gap potentials.

Branch conventions.  R(lam) = (lam_0 - lam) prod_{l in S+} (lam_l^+ - lam)(lam_l^- - lam)
where S+ lists the open gaps.  On the real axis R < 0 on the bands and R > 0 in
the open gaps.  The root used for the frequencies is -i sqrt|R| times a sign
that alternates from band to band and equals +1 on the last band, which makes
omega_n positive and asymptotic to (2 pi n)^3.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import roots_legendre

from . import hill
from .hill import SpectralTable
from .potential import Potential

NSAMPLES = 512  # grid for Floquet solutions and W_n
NQUAD = 128


class FloquetError(RuntimeError):
    pass


def _entries(q: Potential, table: SpectralTable, n: int):
    return hill.floquet_entries(q, complex(table.tau[n]))


def _require_closed(table: SpectralTable, n: int):
    if n < 1 or n > table.n_max:
        raise FloquetError(f"index {n} outside the spectral table")
    if not table.closed(n):
        raise FloquetError(f"gap {n} is open (gamma = {table.gamma[n]:.3e})")


def floquet_coefficient(q: Potential, table: SpectralTable, n: int):
    """(a_{+n}, a_{-n}) at a closed gap from the limits of the Floquet ratios."""
    _require_closed(table, n)
    e = _entries(q, table, n)
    sgn = (-1) ** n
    m2d = e.m2_l.real
    ddD = e.Delta_ll.real
    if sgn * m2d <= 0 or -sgn * ddD <= 0:
        raise FloquetError(f"sign conditions fail at n={n}: "
                           f"(-1)^n m2'={sgn * m2d:.3e}, (-1)^(n+1) Delta''={-sgn * ddD:.3e}")
    root = np.sqrt(-sgn * ddD / 2)
    re = -e.m1_l.real / m2d
    im = root / (sgn * m2d)
    return complex(re, im), complex(re, -im)


def floquet_coefficient_alt(q: Potential, table: SpectralTable, n: int):
    """Same pair from the Neumann-side formula (independent cross-check)."""
    _require_closed(table, n)
    e = _entries(q, table, n)
    sgn = (-1) ** n
    root = np.sqrt(-sgn * e.Delta_ll.real / 2)
    ap = e.dm1_l.real / complex(-e.dm2_l.real, sgn * root)
    am = e.dm1_l.real / complex(-e.dm2_l.real, -sgn * root)
    return ap, am


def _y12(q: Potential, lam: float, nsamples: int):
    st = hill.solution_grid(q, [lam], nsamples)[0]
    return st[:, 0].real, st[:, 6].real


def floquet_solution(q: Potential, table: SpectralTable, n: int, nsamples: int = NSAMPLES):
    """f_{+n}, f_{-n} on x_j = j/nsamples, j = 0..nsamples."""
    ap, am = floquet_coefficient(q, table, n)
    y1, y2 = _y12(q, table.tau[n], nsamples)
    return y1 + ap * y2, y1 + am * y2


def normalization_scale(q: Potential, table: SpectralTable, n: int) -> float:
    e = _entries(q, table, n)
    return float(np.sqrt(-2 * e.m2_l.real / e.Delta_ll.real))


def normalized_pair(q: Potential, table: SpectralTable, n: int, nsamples: int = NSAMPLES,
                    tol: float = 1e-6):
    """H_n, G_n on the grid; raises if the normalization conditions fail."""
    fp, _ = floquet_solution(q, table, n, nsamples)
    hg = normalization_scale(q, table, n) * fp
    H, G = hg.real, hg.imag
    res = normalization_residuals(H, G)
    if max(res.values()) > tol:
        raise FloquetError(f"normalization residuals too large at n={n}: {res}")
    return H, G


def normalization_residuals(H, G) -> dict:
    # squares and products are 1-periodic, so the trapezoid rule is spectral
    def mean(v):
        return float(np.mean(v[:-1]))
    return {"HH": abs(mean(H * H) - 1), "GG": abs(mean(G * G) - 1),
            "HG": abs(mean(H * G)), "G0": abs(G[0])}


# ---------------------------------------------------------------- gap factors

def chi(table: SpectralTable, lam: float) -> float:
    t = lam
    val = 1 / np.sqrt(t) / np.sqrt(1 - table.lam0 / t)
    for k in table.open_gaps():
        val *= (1 - table.lamDot[k] / t) / np.sqrt(
            (1 - table.lamPlus[k] / t) * (1 - table.lamMinus[k] / t))
    return float(val)


def gap_factor_xi(q: Potential, table: SpectralTable, n: int) -> float:
    """sqrt(n pi) xi_n at a closed gap."""
    _require_closed(table, n)
    t = table.tau[n]
    if t <= 0:
        raise FloquetError("tau_n on the branch cut")
    return float(np.sqrt(n * np.pi * chi(table, t)))


def gap_factor_d(q: Potential, table: SpectralTable, n: int, check: float = 1e-5) -> float:
    """d_n = -m2'(tau_n)/Delta''(tau_n) from the product over open gaps."""
    _require_closed(table, n)
    t = table.tau[n]
    d = 1.0
    for k in table.open_gaps():
        d *= (1 - table.mu[k] / t) / (1 - table.lamDot[k] / t)
    if check is not None:
        direct = gap_factor_d_direct(q, table, n)
        if abs(d - direct) > check * max(1.0, abs(direct)):
            raise FloquetError(f"d_n product {d} disagrees with direct quotient {direct}")
    return float(d)


def gap_factor_d_direct(q: Potential, table: SpectralTable, n: int) -> float:
    e = _entries(q, table, n)
    return float(-e.m2_l.real / e.Delta_ll.real)


# ---------------------------------------------------------------- gap integrals

def _R(table: SpectralTable, lam, gaps):
    r = table.lam0 - lam
    for k in gaps:
        r = r * (table.lamPlus[k] - lam) * (table.lamMinus[k] - lam)
    return r


def _gap_nodes(table: SpectralTable, l: int, gaps, nq: int = NQUAD):
    """Midpoint nodes in phi for lam = m - h cos(phi) over the whole gap l.

    Returns lam, weight = dlam / sqrt|R| (the endpoint singularity cancels).
    """
    lo, hi = table.lamMinus[l], table.lamPlus[l]
    m, h = 0.5 * (lo + hi), 0.5 * (hi - lo)
    phi = (np.arange(nq) + 0.5) * np.pi / nq
    lam = m - h * np.cos(phi)
    rest = np.abs(_R(table, lam, [k for k in gaps if k != l]))
    return lam, (np.pi / nq) / np.sqrt(rest)


def psi_polynomial(q: Potential, table: SpectralTable, n: int, nq: int = NQUAD):
    """Coefficients s_0..s_{M-1} of the monic numerator of psi_n/sqrt(Delta^2-4)."""
    gaps = table.open_gaps()
    M = len(gaps)
    if M == 0:
        return np.zeros(0)
    t = table.tau[n]
    E = np.empty((M, M))
    b = np.empty(M)
    for i, l in enumerate(gaps):
        lam, w = _gap_nodes(table, l, gaps, nq)
        w = w * (n * np.pi) ** 2 / (t - lam)
        for j in range(M):
            E[i, j] = np.sum(w * lam ** j)
        b[i] = np.sum(w * lam ** M)
    try:
        s = np.linalg.solve(E, -b)
    except np.linalg.LinAlgError as exc:
        raise FloquetError(f"degenerate gap system at n={n}") from exc
    return s


def _poly(s, lam):
    M = len(s)
    return lam ** M + sum(s[j] * lam ** j for j in range(M))


def _branch_sign(q: Potential, table: SpectralTable, gaps, l: int) -> float:
    """Sign s with sqrt R = s sqrt|R| on gap l, from the delta(mu_l) rule."""
    e = hill.floquet_entries(q, complex(table.mu[l]))
    dl = np.sign(e.delta.real)
    if dl == 0:
        dl = 1.0
    above = sum(1 for k in gaps if k > l)
    return float((-1) ** (l + above) * dl)


def _closed_product(table: SpectralTable, lam: float, gaps) -> float:
    """prod over closed k of (tau_k - lam)^2/(k pi)^4, with the q = 0 tail."""
    k = np.array([k for k in range(1, table.n_max + 1) if k not in gaps])
    kk = np.arange(1, table.n_max + 1)
    val = np.prod((table.tau[k] - lam) ** 2 / (k * np.pi) ** 4)
    full = np.sinc(np.sqrt(complex(lam)) / np.pi).real if lam >= 0 else \
        np.sinh(np.sqrt(-lam)) / np.sqrt(-lam)
    tail = full / np.prod(1 - lam / (kk * np.pi) ** 2)
    return float(val * tail ** 2)


def _mu_angle(q: Potential, table: SpectralTable, gaps, l: int) -> float:
    """Phi in [0, pi] with mu_l = m - h cos(Phi).

    Near the gap ends Phi is taken from delta(mu_l)^2 = Delta^2(mu_l) - 4,
    which fixes sin(Phi) to relative accuracy where arccos would lose half
    the digits of mu_l.
    """
    lo, hi = table.lamMinus[l], table.lamPlus[l]
    m, h = 0.5 * (lo + hi), 0.5 * (hi - lo)
    mu = table.mu[l]
    c = np.clip((m - mu) / h, -1, 1)
    if abs(c) < 0.9:
        return float(np.arccos(c))
    dl = hill.floquet_entries(q, complex(mu)).delta.real
    scale = np.prod([(k * np.pi) ** 4 for k in gaps])
    R = dl * dl * scale / (4 * _closed_product(table, mu, gaps))
    rest = _R(table, mu, [k for k in gaps if k != l])
    sin_phi = np.sqrt(max(-R / rest, 0.0)) / h
    a = np.arcsin(min(sin_phi, 1.0))
    return float(a if c > 0 else np.pi - a)


def beta_angle(q: Potential, table: SpectralTable, n: int, nq: int = NQUAD) -> float:
    _require_closed(table, n)
    gaps = table.open_gaps()
    if not gaps:
        return 0.0
    s = psi_polynomial(q, table, n, nq)
    t = table.tau[n]
    x, w = roots_legendre(nq)
    total = 0.0
    for l in gaps:
        lo, hi = table.lamMinus[l], table.lamPlus[l]
        mu = table.mu[l]
        if not (lo - 1e-9 <= mu <= hi + 1e-9):
            raise FloquetError(f"mu_{l} outside its gap")
        m, h = 0.5 * (lo + hi), 0.5 * (hi - lo)
        Phi = _mu_angle(q, table, gaps, l)
        phi = 0.5 * Phi * (x + 1)
        lam = m - h * np.cos(phi)
        rest = np.abs(_R(table, lam, [k for k in gaps if k != l]))
        sg = _branch_sign(q, table, gaps, l)
        f = _poly(s, lam) / (sg * np.sqrt(rest)) * (n * np.pi) ** 2 / (t - lam)
        total += 0.5 * Phi * np.sum(w * f) / (n * np.pi)
    return float(total)


# ---------------------------------------------------------------- W_n

def W_function(q: Potential, table: SpectralTable, n: int, nsamples: int = NSAMPLES):
    """W_n, W_{-n} on x_j = j/nsamples, j = 0..nsamples-1 (one period)."""
    fp, _ = floquet_solution(q, table, n, nsamples)
    e = _entries(q, table, n)
    ratio = e.m2_l.real / e.Delta_ll.real
    fac = gap_factor_xi(q, table, n) * ratio * np.exp(1j * beta_angle(q, table, n))
    f2 = fp[:-1] ** 2
    k = np.fft.fftfreq(nsamples, 1.0 / nsamples)
    df2 = np.fft.ifft(2j * np.pi * k * np.fft.fft(f2))
    W = fac * (-1 / (2j * np.pi * n)) * df2
    return W, np.conj(W)


@dataclass(frozen=True)
class FloquetData:
    n: int
    a_plus: complex
    a_minus: complex
    f_plus: np.ndarray
    f_minus: np.ndarray
    H: np.ndarray
    G: np.ndarray
    W_plus: np.ndarray
    W_minus: np.ndarray
    xi: float
    d: float
    beta: float


def floquet_data(q: Potential, table: SpectralTable, n: int, nsamples: int = NSAMPLES) -> FloquetData:
    ap, am = floquet_coefficient(q, table, n)
    fp, fm = floquet_solution(q, table, n, nsamples)
    hg = normalization_scale(q, table, n) * fp
    W, Wm = W_function(q, table, n, nsamples)
    return FloquetData(n, ap, am, fp, fm, hg.real, hg.imag, W, Wm,
                       gap_factor_xi(q, table, n), gap_factor_d(q, table, n, check=None),
                       beta_angle(q, table, n))


# ---------------------------------------------------------------- actions

def _contour_radius(table: SpectralTable, n: int, eps_r: float = 0.05) -> float:
    r = max(table.gamma[n], eps_r * n * n)
    left = table.lamPlus[n - 1] if n > 1 else table.lam0
    gaps = [table.tau[n] - left]
    if n < table.n_max:
        gaps.append(table.lamMinus[n + 1] - table.tau[n])
    room = 0.6 * min(gaps)
    half = 0.5 * table.gamma[n]
    # stay clear of the gap ends and of the neighbouring roots
    return float(min(max(r, 1.5 * half), max(room, 1.2 * half)))


def action(q: Potential, table: SpectralTable, n: int, npts: int = 512) -> float:
    """I_n = (1/pi) contour integral of lam Delta'/sqrt(Delta^2-4) around gap n."""
    if table.closed(n):
        return 0.0
    r = _contour_radius(table, n)
    th = 2 * np.pi * np.arange(npts) / npts
    lam = table.tau[n] + r * np.exp(1j * th)
    e = hill.floquet_entries(q, lam)
    root = np.sqrt(e.Delta ** 2 - 4)
    # continuity of the branch along the circle
    for j in range(1, npts):
        if abs(root[j] + root[j - 1]) < abs(root[j] - root[j - 1]):
            root[j] = -root[j]
    if abs(root[0] + root[-1]) < abs(root[0] - root[-1]):
        raise FloquetError(f"branch does not close around gap {n}")
    dlam = 1j * r * np.exp(1j * th) * (2 * np.pi / npts)
    val = np.sum(lam * e.Delta_l / root * dlam) / np.pi
    # the orientation/branch pair is fixed by I_n >= 0 for real q
    return float(abs(val.real)) if abs(val.imag) < 1e-6 * max(1, abs(val)) else float("nan")


def action_segment(q: Potential, table: SpectralTable, n: int, nq: int = 256) -> float:
    """(2/pi) int over the gap of arccosh(|Delta|/2), an independent reduction."""
    if table.closed(n):
        return 0.0
    lo, hi = table.lamMinus[n], table.lamPlus[n]
    m, h = 0.5 * (lo + hi), 0.5 * (hi - lo)
    phi = (np.arange(nq) + 0.5) * np.pi / nq
    lam = m - h * np.cos(phi)
    D = hill.floquet_entries(q, lam.astype(complex)).Delta.real
    f = np.arccosh(np.maximum(np.abs(D) / 2, 1.0)) * h * np.sin(phi)
    return float(2 / np.pi * np.sum(f) * np.pi / nq)


# ---------------------------------------------------------------- frequencies

def omega_polynomial(table: SpectralTable, nq: int = NQUAD) -> np.ndarray:
    """Monic P(lam) = lam^{M+1} + c1 lam^M + ... as ascending coefficients."""
    gaps = table.open_gaps()
    M = len(gaps)
    c1 = -0.5 * (table.lam0 + sum(table.lamPlus[k] + table.lamMinus[k] for k in gaps))
    coef = np.zeros(M + 2)
    coef[M + 1] = 1.0
    coef[M] = c1
    if M:
        A = np.empty((M, M))
        rhs = np.empty(M)
        for i, l in enumerate(gaps):
            lam, w = _gap_nodes(table, l, gaps, nq)
            for j in range(M):
                A[i, j] = np.sum(w * lam ** j)
            rhs[i] = -np.sum(w * (lam ** (M + 1) + c1 * lam ** M))
        coef[:M] = np.linalg.solve(A, rhs)
    return coef


def _band_integral(table, coef, gaps, a, b, nq):
    """int_a^b P/sqrt|R| over a band with root singularities at both ends."""
    m, h = 0.5 * (a + b), 0.5 * (b - a)
    phi = (np.arange(nq) + 0.5) * np.pi / nq
    lam = m - h * np.cos(phi)
    R = np.abs(_R(table, lam, gaps)) / ((lam - a) * (b - lam))
    return float(np.sum(np.polyval(coef[::-1], lam) / np.sqrt(R)) * np.pi / nq)


def _tail_integral(table, coef, gaps, L, T):
    """int_L^T (P/sqrt|R| - sqrt(lam)) dlam with lam = L + t^2."""
    tmax = np.sqrt(T - L)
    edges = [0.0]
    e = min(1.0, tmax)
    while e < tmax:
        edges.append(e)
        e *= 2
    edges.append(tmax)
    x, w = roots_legendre(40)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        t = 0.5 * (b - a) * (x + 1) + a
        lam = L + t * t
        R = np.abs(_R(table, lam, gaps)) / np.where(t > 0, t * t, 1.0)
        f = np.polyval(coef[::-1], lam) / np.sqrt(R) * 2 - 2 * t * np.sqrt(lam)
        total += 0.5 * (b - a) * np.sum(w * f)
    return total


def frequency(q: Potential, table: SpectralTable, n: int, nq: int = NQUAD) -> float:
    """omega_n = 12 i int_{b_n} Omega_4 reduced to real band integrals."""
    gaps = table.open_gaps()
    coef = omega_polynomial(table, nq)
    M = len(gaps)
    ends = [table.lam0] + [v for k in gaps for v in (table.lamMinus[k], table.lamPlus[k])]
    target = table.lamMinus[n]
    total = 0.0
    for j in range(M):
        a, b = ends[2 * j], ends[2 * j + 1]
        if a >= target:
            break
        sign = (-1) ** (M - j)
        if b <= target:
            total += sign * _band_integral(table, coef, gaps, a, b, nq)
        else:
            raise FloquetError("frequency target inside an inner band is unsupported")
    L = ends[-1]
    if target > L:
        total += _tail_integral(table, coef, gaps, L, target) + \
            2.0 / 3.0 * (target ** 1.5 - L ** 1.5)
    return float(12 * total)


def big_omega(q: Potential, table: SpectralTable, n: int) -> float:
    return frequency(q, table, n) / (2 * np.pi * n)


@dataclass(frozen=True)
class GapFactors:
    ns: np.ndarray
    xi: np.ndarray
    d: np.ndarray
    beta: np.ndarray
    s_poly: list
    I_S: dict
    omega: np.ndarray
    Omega: np.ndarray


def gap_factors(q: Potential, table: SpectralTable, ns) -> GapFactors:
    ns = np.asarray(list(ns))
    xi = np.array([gap_factor_xi(q, table, n) for n in ns])
    d = np.array([gap_factor_d(q, table, n, check=None) for n in ns])
    beta = np.array([beta_angle(q, table, n) for n in ns])
    sp = [psi_polynomial(q, table, n) for n in ns]
    I_S = {k: action(q, table, k) for k in table.open_gaps()}
    om = np.array([frequency(q, table, n) for n in ns])
    return GapFactors(ns, xi, d, beta, sp, I_S, om, om / (2 * np.pi * ns))
