"""Truncated phase space, the partially linearized map Psi_L and the symplectic corrector.

Sequences z are stored on the index list -n_max..-1, 1..n_max; functions by
their Fourier coefficients on k = -K..K.  All transposes are taken with the
bilinear pairing <z, w> = sum z_n w_{-n}, which for both index sets is the
ordinary transpose with rows and columns reversed.

The one-gap chart maps z_S = (z_{-1}, z_1) to (theta, I) through
z_{+-1} = sqrt(2 pi I) e^{-+ i theta}; the potential is the Lame potential of
action I translated by s = -theta/(2 pi).  Fourier data are interpolated in I on
Chebyshev nodes and theta enters exactly, so every chart derivative is
analytic.  All maps are holomorphic in z, which lets finite differences use
complex directions.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as cheb
from scipy import optimize

from . import floquet as fl
from .hill import spectral_table
from .potential import Potential, make_lame_one_gap

MAGIC = b"KDVNFMAT"


class NFMapError(RuntimeError):
    pass


@dataclass(frozen=True)
class TruncConfig:
    n_max: int = 32
    grid: int = 0
    ode_steps: int = 8
    S_plus: tuple = (1,)
    radius: float = 0.05
    fd_step: float = 1e-5

    def __post_init__(self):
        if tuple(self.S_plus) != (1,):
            raise NFMapError("only the one-gap chart S_+ = {1} is implemented")
        if self.n_max <= max(self.S_plus):
            raise NFMapError("n_max must exceed max(S_plus)")
        g = self.grid or 8 * self.n_max
        if g < 8 * self.n_max:
            raise NFMapError("grid must be at least 8 n_max")
        object.__setattr__(self, "grid", int(g))
        if self.ode_steps < 1:
            raise NFMapError("ode_steps must be positive")

    @property
    def indices(self) -> np.ndarray:
        n = np.arange(1, self.n_max + 1)
        return np.concatenate([-n[::-1], n])

    @property
    def S_mask(self) -> np.ndarray:
        return np.abs(self.indices) == 1

    @property
    def perp(self) -> np.ndarray:
        return self.indices[~self.S_mask]

    @property
    def K(self) -> int:
        return self.grid // 2 - 1

    @property
    def kvec(self) -> np.ndarray:
        return np.arange(-self.K, self.K + 1)

    def interior(self, idx=None) -> np.ndarray:
        idx = self.indices if idx is None else idx
        return np.abs(idx) <= self.n_max // 2


@dataclass
class SeqState:
    """A point of the truncated phase space h_S x h_perp."""
    z: np.ndarray
    cfg: TruncConfig = field(repr=False)

    @classmethod
    def from_parts(cls, cfg, z_S, z_perp):
        z = np.zeros(2 * cfg.n_max, complex)
        z[cfg.S_mask] = z_S
        z[~cfg.S_mask] = z_perp
        return cls(z, cfg)

    @property
    def z_S(self):
        return self.z[self.cfg.S_mask]

    @property
    def z_perp(self):
        return self.z[~self.cfg.S_mask]

    def is_real(self, tol=1e-14) -> bool:
        return bool(np.max(np.abs(self.z - np.conj(self.z[::-1]))) <= tol * max(1, np.abs(self.z).max()))

    def norm(self, s: float = 0.0, part: str = "all") -> float:
        n = self.cfg.indices
        m = {"all": np.ones(len(n), bool), "S": self.cfg.S_mask, "perp": ~self.cfg.S_mask}[part]
        return float(np.sqrt(np.sum(np.abs(n[m]) ** (2 * s) * np.abs(self.z[m]) ** 2)))


def pairing(a, b):
    """<a, b> = sum a_n b_{-n} for vectors on a symmetric index list."""
    return np.sum(a * b[::-1])


def bt(A):
    """Bilinear transpose of a matrix between symmetric index lists."""
    return A.T[::-1, ::-1]


def basis_maps(cfg: TruncConfig) -> dict:
    n = cfg.indices
    k = cfg.kvec
    perp = cfg.perp
    F = np.zeros((len(k), len(perp)))
    F[perp + cfg.K, np.arange(len(perp))] = 1.0
    J = np.diag(2j * np.pi * n)

    def dx_inv(order=1):
        with np.errstate(divide="ignore"):
            d = np.where(k == 0, 0, 1 / (2j * np.pi * np.where(k == 0, 1, k)) ** order)
        return np.diag(d)

    return {"F_perp": F, "F_perp_inv": F.T.copy(), "J": J, "J_inv": np.diag(1 / (2j * np.pi * n)),
            "dx_inv": dx_inv, "Pi_S": np.diag(cfg.S_mask.astype(float)),
            "Pi_perp": np.diag((~cfg.S_mask).astype(float))}


def dx_inv_diag(cfg: TruncConfig, order: int = 1) -> np.ndarray:
    k = cfg.kvec
    with np.errstate(divide="ignore"):
        return np.where(k == 0, 0, 1 / (2j * np.pi * np.where(k == 0, 1, k)) ** order)


# ---------------------------------------------------------------- chart

_ACTION_TABLE_NMAX = 3


def action_of_modulus(k: float) -> float:
    q = make_lame_one_gap(k)
    return fl.action(q, spectral_table(q, _ACTION_TABLE_NMAX), 1)


def modulus_for_action(I1: float, guess: float = 0.5, rtol: float = 1e-8) -> float:
    """Elliptic modulus whose Lame potential has first action I1."""
    if I1 <= 0:
        raise NFMapError("the action must be positive")
    f = lambda k: action_of_modulus(k) - I1
    lo, hi = max(guess - 0.05, 1e-3), min(guess + 0.05, 0.95)
    flo, fhi = f(lo), f(hi)
    while flo > 0 and lo > 1e-3:
        lo = max(lo / 2, 1e-3)
        flo = f(lo)
    while fhi < 0 and hi < 0.95:
        hi = min(hi + (1 - hi) / 2, 0.95)
        fhi = f(hi)
    if flo > 0 or fhi < 0:
        raise NFMapError(f"action {I1} outside the calibrated modulus range")
    return optimize.brentq(f, lo, hi, xtol=1e-14, rtol=rtol * 1e-2)


def _fourier(samples: np.ndarray, K: int) -> np.ndarray:
    m = len(samples)
    c = np.fft.fft(samples) / m
    k = np.arange(-K, K + 1)
    return c[k % m]


def _node_data(k: float, cfg: TruncConfig):
    q = make_lame_one_gap(k)
    t = spectral_table(q, cfg.n_max)
    ns = max(fl.NSAMPLES, cfg.grid)
    W = np.empty((cfg.n_max - 1, 2 * cfg.K + 1), complex)
    for j, n in enumerate(range(2, cfg.n_max + 1)):
        W[j] = _fourier(fl.W_function(q, t, n, ns)[0], cfg.K)
    qf = np.zeros(2 * cfg.K + 1, complex)
    qf[np.arange(-q.n_pot, q.n_pot + 1) + cfg.K] = q.coeffs
    return q, t, qf, W


@dataclass
class ChartPoint:
    """Chart data at one z_S: potential, W columns and their z_S-derivatives."""
    q: np.ndarray       # (2K+1,)
    W: np.ndarray       # (2K+1, n_perp), columns ordered as cfg.perp
    dq: np.ndarray      # (2K+1, 2), derivative along z_{-1}, z_1
    dW: np.ndarray      # (2, 2K+1, n_perp)
    I: complex
    u: complex          # e^{-i theta}


class OneGapChart:
    """Lame chart around (theta, I1); Fourier data are Chebyshev interpolants in the modulus."""

    def __init__(self, cfg: TruncConfig, theta: float, I1: float, modulus_guess: float = 0.5,
                 width: float = 0.05, nodes: int = 9):
        t_start = time.perf_counter()
        self.cfg = cfg
        self.theta = float(theta)
        self.I1 = float(I1)
        self.width = width
        self.modulus = modulus_for_action(I1, modulus_guess)
        q, t, qf, W = _node_data(self.modulus, cfg)
        self.table = t
        self.base_lame = q
        self.q0 = Potential(q.coeffs * np.exp(-1j * q.modes * self.theta), q.n_pot, q.grid)
        # nodes are Chebyshev points in the modulus; I(k) is inverted by Newton
        tj = np.cos(np.pi * (np.arange(nodes) + 0.5) / nodes)
        self.k_half = width * self.modulus
        Qs, Ws, Is = [], [], []
        for tt in tj:
            km = self.modulus + self.k_half * tt
            qn_pot, _, qn, Wn = _node_data(km, cfg)
            Is.append(action_of_modulus(km))
            Qs.append(qn)
            Ws.append(Wn)
        deg = nodes - 1
        Vinv = np.linalg.inv(cheb.chebvander(tj, deg))
        self.cI = Vinv @ np.array(Is)
        self.dcI = cheb.chebder(self.cI)
        self.I_range = (min(Is), max(Is))
        self.cq = np.tensordot(Vinv, np.array(Qs), axes=1)
        Ws = np.array(Ws)
        # W_{-n} = conj W_n: coefficients conj((W_n)_{-k}); conjugating node
        # values keeps the interpolant holomorphic
        Wfull = np.concatenate([np.conj(Ws[:, ::-1, ::-1]), Ws], axis=1)
        self.cW = np.tensordot(Vinv, Wfull, axes=1)
        self.dcq = cheb.chebder(self.cq, axis=0)
        self.dcW = cheb.chebder(self.cW, axis=0)
        self.u0 = np.exp(-1j * self.theta)
        r = np.sqrt(2 * np.pi * self.I1)
        self.z_S0 = np.array([r * np.conj(self.u0), r * self.u0])
        self.build_seconds = time.perf_counter() - t_start

    # chart coordinates
    def coords(self, z_S):
        zm, zp = z_S
        I = zm * zp / (2 * np.pi)
        u = self.u0 * np.sqrt(zp / zm / self.u0 ** 2)
        return I, u

    def theta_I(self, z_S):
        I, u = self.coords(z_S)
        return complex(1j * np.log(u)), complex(I)

    def z_S_of(self, theta, I):
        r = np.sqrt(2 * np.pi * I)
        return np.array([r * np.exp(1j * theta), r * np.exp(-1j * theta)])

    def t_of_I(self, I):
        """Node variable t in [-1, 1] with I(k(t)) = I."""
        t = np.clip((I - self.I1) / (0.5 * (self.I_range[1] - self.I_range[0])), -1, 1) + 0j
        for _ in range(50):
            dt = (cheb.chebval(t, self.cI) - I) / cheb.chebval(t, self.dcI)
            t -= dt
            if abs(dt) < 1e-15:
                break
        if abs(t) > 1.2:
            raise NFMapError("action left the interpolation window of the chart")
        return t

    def _interp(self, I):
        t = self.t_of_I(I)
        T = cheb.chebvander(np.array([t]), self.cq.shape[0] - 1)[0]
        dT = cheb.chebvander(np.array([t]), self.dcq.shape[0] - 1)[0]
        s = 1 / cheb.chebval(t, self.dcI)
        q = T @ self.cq
        W = np.tensordot(T, self.cW, axes=1)
        return q, W, s * (dT @ self.dcq), s * np.tensordot(dT, self.dcW, axes=1)

    def point(self, z_S) -> ChartPoint:
        cfg = self.cfg
        k = cfg.kvec
        I, u = self.coords(z_S)
        qI, WI, qI_I, WI_I = self._interp(I)
        ph_q = u ** k
        rel = k[:, None] - cfg.perp[None, :]
        ph_W = u ** rel
        q = ph_q * qI
        qth = -1j * k * q
        qI_ = ph_q * qI_I
        Wfull = ph_W * WI.T
        Wfth = -1j * rel * Wfull
        WfI = ph_W * WI_I.T
        zm, zp = z_S
        # d/dz_{-1} and d/dz_1 of a function F(theta, I)
        a_m = (zp / (2 * np.pi), -0.5j / zm)
        a_p = (zm / (2 * np.pi), 0.5j / zp)
        dq = np.stack([a_m[0] * qI_ + a_m[1] * qth, a_p[0] * qI_ + a_p[1] * qth], axis=1)
        dW = np.stack([a_m[0] * WfI + a_m[1] * Wfth, a_p[0] * WfI + a_p[1] * Wfth])
        return ChartPoint(q, Wfull, dq, dW, I, u)

    def omega(self, n: int) -> float:
        return fl.frequency(self.base_lame, self.table, n)


def finite_gap_chart(cfg: TruncConfig, theta: float, I1: float, **kw) -> OneGapChart:
    return OneGapChart(cfg, theta, I1, **kw)


# ---------------------------------------------------------------- Psi_L and L(z)

def psi1_matrix(chart: OneGapChart, z_S=None) -> np.ndarray:
    z_S = chart.z_S0 if z_S is None else z_S
    return chart.point(z_S).W


def psi_L(chart: OneGapChart, z) -> np.ndarray:
    cfg = chart.cfg
    z = np.asarray(z)
    p = chart.point(z[cfg.S_mask])
    return p.q + p.W @ z[~cfg.S_mask]


def _blocks(chart: OneGapChart, z, p: ChartPoint | None = None):
    cfg = chart.cfg
    S = cfg.S_mask
    if p is None:
        p = chart.point(z[S])
    D = dx_inv_diag(cfg)[:, None]
    zp = z[~S]
    dSV = np.stack([p.dW[0] @ zp, p.dW[1] @ zp], axis=1)
    LSS = bt(dSV) @ (D * dSV) + bt(p.dq) @ (D * dSV) + bt(dSV) @ (D * p.dq)
    LSp = bt(dSV) @ (D * p.W)
    LpS = bt(p.W) @ (D * dSV)
    return LSS, LSp, LpS, p


def L_blocks(chart: OneGapChart, z) -> np.ndarray:
    """The two-form L(z) as a matrix on the full index list; the perp-perp block is 0."""
    cfg = chart.cfg
    S = cfg.S_mask
    LSS, LSp, LpS, _ = _blocks(chart, np.asarray(z, complex))
    L = np.zeros((2 * cfg.n_max, 2 * cfg.n_max), complex)
    iS = np.nonzero(S)[0]
    ip = np.nonzero(~S)[0]
    L[np.ix_(iS, iS)] = LSS
    L[np.ix_(iS, ip)] = LSp
    L[np.ix_(ip, iS)] = LpS
    return L


def E_vector(chart: OneGapChart, z) -> np.ndarray:
    cfg = chart.cfg
    z = np.asarray(z, complex)
    _, LSp, _, _ = _blocks(chart, z)
    E = np.zeros(2 * cfg.n_max, complex)
    E[cfg.S_mask] = 0.5 * LSp @ z[~cfg.S_mask]
    return E


def L_tau(chart: OneGapChart, tau: float, z) -> np.ndarray:
    cfg = chart.cfg
    Jd = 2j * np.pi * cfg.indices
    return np.eye(2 * cfg.n_max) + tau * Jd[:, None] * L_blocks(chart, z)


def X_field(chart: OneGapChart, tau: float, z, method: str = "neumann", tol: float = 1e-12,
            maxit: int = 200, info: dict | None = None) -> np.ndarray:
    """X(tau, z) = -L_tau(z)^{-1} J E(z), by Neumann series with a dense fallback."""
    cfg = chart.cfg
    z = np.asarray(z, complex)
    Jd = 2j * np.pi * cfg.indices
    L = L_blocks(chart, z)
    S = cfg.S_mask
    rhs = np.zeros(2 * cfg.n_max, complex)
    rhs[S] = -Jd[S] * (0.5 * L[np.ix_(S, ~S)] @ z[~S])
    if not np.any(rhs):
        return rhs
    A = tau * Jd[:, None] * L
    if method == "neumann":
        x = rhs.copy()
        term = rhs
        prev = np.inf
        for it in range(maxit):
            term = -(A @ term)
            nt = np.linalg.norm(term)
            x += term
            if nt < tol * max(np.linalg.norm(x), 1e-300):
                if info is not None:
                    info.update(method="neumann", terms=it + 1)
                return x
            if nt > 0.9 * prev:
                break
            prev = nt
    try:
        x = np.linalg.solve(np.eye(len(rhs)) + A, rhs)
    except np.linalg.LinAlgError as exc:
        raise NFMapError("L_tau is singular") from exc
    if info is not None:
        info.update(method="dense")
    return x


def flow_increment(chart: OneGapChart, tau0: float, tau1: float, z, steps: int | None = None,
                   record: bool = False):
    """RK4 for dz/dtau = X(tau, z), integrating the increment z(tau) - z(tau0).

    The increment is small compared with z, so carrying it separately keeps
    its relative accuracy.
    """
    steps = chart.cfg.ode_steps if steps is None else steps
    h = (tau1 - tau0) / steps
    z0 = np.asarray(z, complex)
    d = np.zeros_like(z0)
    path = [d.copy()]
    t = tau0
    for _ in range(steps):
        k1 = X_field(chart, t, z0 + d)
        k2 = X_field(chart, t + h / 2, z0 + (d + h / 2 * k1))
        k3 = X_field(chart, t + h / 2, z0 + (d + h / 2 * k2))
        k4 = X_field(chart, t + h, z0 + (d + h * k3))
        d = d + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
        if record:
            path.append(d.copy())
    return (d, np.array(path)) if record else d


def flow(chart: OneGapChart, tau0: float, tau1: float, z, steps: int | None = None):
    """Psi_X^{tau0, tau1}(z) by RK4."""
    return np.asarray(z, complex) + flow_increment(chart, tau0, tau1, z, steps)


def flow_checked(chart, tau0, tau1, z, tol=1e-9):
    """Flow with a step-halving consistency check."""
    a = flow(chart, tau0, tau1, z)
    b = flow(chart, tau0, tau1, z, steps=2 * chart.cfg.ode_steps)
    err = float(np.max(np.abs(a - b)))
    if err > tol * max(1.0, np.abs(b).max()):
        raise NFMapError(f"flow step halving disagreement {err:.2e}")
    return b


def psi_C(chart, z):
    return flow(chart, 0.0, 1.0, z)


def psi_C_inv(chart, z):
    return flow(chart, 1.0, 0.0, z)


def psi_full(chart, z, corrector: bool = True):
    return psi_L(chart, psi_C(chart, z) if corrector else z)


# ---------------------------------------------------------------- states

def base_state(chart: OneGapChart) -> np.ndarray:
    cfg = chart.cfg
    z = np.zeros(2 * cfg.n_max, complex)
    z[cfg.S_mask] = chart.z_S0
    return z


def random_perp(cfg: TruncConfig, rng, norm: float, flat: bool = False, interior: bool = False):
    """Real perp sequence (z_{-n} = conj z_n) of given ||.||_0 norm."""
    pos = np.arange(2, cfg.n_max + 1)
    if flat:
        v = np.exp(2j * np.pi * rng.random(len(pos)))
    else:
        v = rng.standard_normal(len(pos)) + 1j * rng.standard_normal(len(pos))
    if interior:
        v[pos > cfg.n_max // 2] = 0
    z = np.zeros(2 * cfg.n_max, complex)
    n = cfg.indices
    z[n >= 2] = v
    z[n <= -2] = np.conj(v[::-1])
    return z * norm / np.linalg.norm(z)


def reverse(z):
    """(S_rev z)_n = z_{-n}."""
    return np.asarray(z)[::-1].copy()


# ---------------------------------------------------------------- checks

def Lambda(cfg: TruncConfig, a, b) -> complex:
    """Lambda[a, b] = <J^{-1} a, b>."""
    return pairing(a / (2j * np.pi * cfg.indices), b)


def Lambda_G(cfg: TruncConfig, u, v) -> complex:
    """Lambda_G[u, v] = <d_x^{-1} u, v> for Fourier vectors."""
    return pairing(dx_inv_diag(cfg) * u, v)


def canonical_check(chart: OneGapChart) -> complex:
    """Lambda_G[d Psi e_{-1}, d Psi e_1] - Lambda[e_{-1}, e_1] at z_perp = 0."""
    cfg = chart.cfg
    p = chart.point(chart.z_S0)
    e = np.zeros(2 * cfg.n_max)
    e1 = e.copy()
    e[cfg.indices == -1] = 1
    e1[cfg.indices == 1] = 1
    return Lambda_G(cfg, p.dq[:, 0], p.dq[:, 1]) - Lambda(cfg, e, e1)


def psi1_transpose_identity(chart: OneGapChart) -> dict:
    """||Psi_1^t d_x^{-1} Psi_1 - J_perp^{-1}|| and cross terms with the torus."""
    cfg = chart.cfg
    p = chart.point(chart.z_S0)
    D = dx_inv_diag(cfg)[:, None]
    M = bt(p.W) @ (D * p.W)
    Jinv = np.diag(1 / (2j * np.pi * cfg.perp))
    inner = cfg.interior(cfg.perp)
    R = (M - Jinv)[np.ix_(inner, inner)]
    C = bt(p.dq) @ (D * p.W)
    # first-order symbols of Psi_1 and of its transpose
    a1 = _first_symbol(p.W, cfg, transpose=False)
    a1t = _first_symbol(bt(p.W), cfg, transpose=True)
    scale = max(np.abs(a1).max(), 1e-300)
    return {"residual": float(np.abs(R).max() / np.abs(Jinv).max()),
            "residual_abs": float(np.abs(R).max()),
            "cross": float(np.abs(C[:, inner]).max()),
            "a1_sign": float(np.abs(a1 + a1t).max() / scale),
            "a1_scale": float(scale)}


def _offdiag_fit(M, rows_idx, cols_idx, offsets, n_fit, powers=(1, 2, 3)):
    """Fit M[m+d, m] = sum_p c_p(d) / (2 pi i m)^p over m in n_fit, for each offset d."""
    rpos = {int(n): i for i, n in enumerate(rows_idx)}
    cpos = {int(n): i for i, n in enumerate(cols_idx)}
    out = np.zeros((len(offsets), len(powers)), complex)
    for a, d in enumerate(offsets):
        ms = [m for m in n_fit if (m + d) in rpos and m in cpos]
        if len(ms) < len(powers) + 1:
            continue
        ms = np.array(ms)
        y = np.array([M[rpos[m + d], cpos[m]] for m in ms])
        A = np.array([(2j * np.pi * ms) ** (-float(p)) for p in powers]).T
        out[a] = np.linalg.lstsq(A, y, rcond=None)[0]
    return out


def _first_symbol(A, cfg: TruncConfig, transpose: bool, band: int = 6) -> np.ndarray:
    """Fourier coefficients of a_1 in A - F ~ F a_1 d_x^{-1}, fitted over interior modes.

    For the transpose (a map functions -> sequences) the row/column roles swap.
    """
    perp = cfg.perp
    # every column W_n is exact, so the fit may use all n up to n_max
    m_fit = list(range(band + 2, cfg.n_max - band + 1))
    offs = list(range(-band, band + 1))
    powers = (1, 2, 3, 4, 5)
    if not transpose:
        # A: perp -> functions, A[k, n] with k = n + d
        M = A - basis_maps(cfg)["F_perp"]
        coef = _offdiag_fit(M, cfg.kvec, perp, offs, m_fit, powers)
    else:
        # A: functions -> perp; in the sequence variable the operator reads
        # A[m, k] with m = k + d acting on e^{2 pi i k x}
        M = A - basis_maps(cfg)["F_perp_inv"]
        coef = _offdiag_fit(M, perp, cfg.kvec, offs, m_fit, powers)
    return coef[:, 0]


def symplectic_residual(chart: OneGapChart, z, pairs: int = 4, seed: int = 0,
                        corrector: bool = True, h: float | None = None,
                        directions: str = "interior") -> float:
    """max |Lambda_G[dPsi a, dPsi b] - Lambda[a, b]| over seeded tangent pairs."""
    cfg = chart.cfg
    h = cfg.fd_step if h is None else h
    rng = np.random.default_rng(seed)
    mask = cfg.interior() if directions == "interior" else cfg.S_mask
    z = np.asarray(z, complex)

    def dpsi(v):
        return (psi_full(chart, z + h * v, corrector) - psi_full(chart, z - h * v, corrector)) / (2 * h)

    worst = 0.0
    for _ in range(pairs):
        a = np.zeros(len(z), complex)
        b = np.zeros(len(z), complex)
        a[mask] = rng.standard_normal(mask.sum()) + 1j * rng.standard_normal(mask.sum())
        b[mask] = rng.standard_normal(mask.sum()) + 1j * rng.standard_normal(mask.sum())
        a /= np.linalg.norm(a)
        b /= np.linalg.norm(b)
        r = abs(Lambda_G(cfg, dpsi(a), dpsi(b)) - Lambda(cfg, a, b))
        worst = max(worst, r)
    return float(worst)


def hamiltonian(cfg: TruncConfig, f: np.ndarray) -> complex:
    """H(q) = 1/2 int q_x^2 + int q^3 for a Fourier vector, as a bilinear expression."""
    k = cfg.kvec
    h2 = 0.5 * pairing((2 * np.pi * k) ** 2 * f, f)
    M = 4 * (cfg.K + 1)
    c = np.zeros(M, complex)
    c[k % M] = f
    vals = np.fft.ifft(c) * M
    h3 = np.mean(vals ** 3)
    return complex(h2 + h3)


def H_of(chart, z, corrector=True) -> float:
    return hamiltonian(chart.cfg, psi_full(chart, z, corrector)).real


def omega_perp(chart: OneGapChart) -> np.ndarray:
    """Omega_n = omega_n / (2 pi n) on cfg.perp (even in n)."""
    cfg = chart.cfg
    pos = {n: fl.big_omega(chart.base_lame, chart.table, n) for n in range(2, cfg.n_max + 1)}
    return np.array([pos[abs(int(n))] for n in cfg.perp])


def G_operator(chart: OneGapChart, omega1: float | None = None) -> np.ndarray:
    """G(z_S) = -omega_1 Psi_1^t d_x^{-1} d_theta Psi_1 at the chart base point."""
    cfg = chart.cfg
    w1 = chart.omega(1) if omega1 is None else omega1
    p = chart.point(chart.z_S0)
    rel = cfg.kvec[:, None] - cfg.perp[None, :]
    Wth = -1j * rel * p.W
    D = dx_inv_diag(cfg)[:, None]
    return -w1 * bt(p.W) @ (D * Wth)


def maradona_identity(chart: OneGapChart) -> dict:
    """Residual of Psi_1^t (-d_x^2 + 6 q) Psi_1 = Omega_perp + G on interior modes."""
    cfg = chart.cfg
    p = chart.point(chart.z_S0)
    k = cfg.kvec
    M = 4 * (cfg.K + 1)
    qc = np.zeros(M, complex)
    qc[k % M] = p.q
    qx = np.fft.ifft(qc) * M
    Wc = np.zeros((M, p.W.shape[1]), complex)
    Wc[k % M] = p.W
    prod = np.fft.fft(qx[:, None] * (np.fft.ifft(Wc, axis=0) * M), axis=0) / M
    AW = ((2 * np.pi * k) ** 2)[:, None] * p.W + 6 * prod[k % M]
    lhs = bt(p.W) @ AW
    Om = omega_perp(chart)
    rhs = np.diag(Om) + G_operator(chart)
    inner = cfg.interior(cfg.perp)
    R = (lhs - rhs)[np.ix_(inner, inner)]
    scale = np.abs(np.diag(Om)[np.ix_(inner, inner)]).max()
    return {"residual": float(np.abs(R).max() / scale),
            "residual_abs": float(np.abs(R).max()),
            "G_norm": float(np.abs(G_operator(chart)[np.ix_(inner, inner)]).max())}


def quadratic_form_check(chart: OneGapChart, eps: float = 1e-3, corrector: bool = True,
                         modes=None) -> dict:
    """Second differences of H o Psi along real directions e_n + e_{-n} versus 2 Omega_n."""
    cfg = chart.cfg
    modes = range(2, cfg.n_max // 2 + 1) if modes is None else modes
    z0 = base_state(chart)
    H0 = H_of(chart, z0, corrector)
    Om = dict(zip(cfg.perp, omega_perp(chart)))
    rel = {}
    for n in modes:
        w = np.zeros(len(z0), complex)
        w[cfg.indices == n] = 1
        w[cfg.indices == -n] = 1
        d2 = (H_of(chart, z0 + eps * w, corrector) - 2 * H0 + H_of(chart, z0 - eps * w, corrector)) / eps ** 2
        rel[int(n)] = float(abs(d2 - 2 * Om[n]) / (2 * Om[n]))
    return {"relative": rel, "max_relative": max(rel.values())}


def cubic_scaling(chart: OneGapChart, eps=(0.0125, 0.025, 0.05), seed: int = 1) -> dict:
    """Exponent of |H o Psi - H(I_S) - 1/2 <Omega z, z>| in ||z_perp||_0."""
    cfg = chart.cfg
    rng = np.random.default_rng(seed)
    w = random_perp(cfg, rng, 1.0, interior=True)
    z0 = base_state(chart)
    H0 = H_of(chart, z0)
    Om = np.zeros(len(z0))
    Om[~cfg.S_mask] = omega_perp(chart)
    quad = 0.5 * pairing(Om * w, w).real
    vals = np.array([abs(H_of(chart, z0 + e * w) - H0 - e * e * quad) for e in eps])
    slope = np.polyfit(np.log(eps), np.log(vals), 1)[0]
    return {"eps": list(map(float, eps)), "defect": vals.tolist(), "exponent": float(slope)}


def hamiltonian_normal_form_check(chart: OneGapChart) -> dict:
    return {"quadratic": quadratic_form_check(chart), "identity": maradona_identity(chart),
            "cubic": cubic_scaling(chart)}


def jacobian(chart, fun, z, h=None, cols=None):
    """Central-difference Jacobian of a map on sequences, one column per index."""
    cfg = chart.cfg
    h = cfg.fd_step if h is None else h
    z = np.asarray(z, complex)
    cols = range(len(z)) if cols is None else cols
    out = []
    for j in cols:
        e = np.zeros(len(z))
        e[j] = h
        out.append((fun(z + e) - fun(z - e)) / (2 * h))
    return np.array(out).T


def dflow_transpose(chart: OneGapChart, tau: float, z) -> dict:
    """Compare the bilinear transpose of dPsi^{0,tau} with J^{-1} dPsi^{tau,0} L_tau^{-1} J."""
    cfg = chart.cfg
    z = np.asarray(z, complex)
    A = jacobian(chart, lambda v: flow(chart, 0.0, tau, v), z)
    zt = flow(chart, 0.0, tau, z)
    B = jacobian(chart, lambda v: flow(chart, tau, 0.0, v), zt)
    Jd = 2j * np.pi * cfg.indices
    rhs = (1 / Jd)[:, None] * (B @ np.linalg.solve(L_tau(chart, tau, zt), np.diag(Jd)))
    lhs = bt(A)
    m = cfg.interior()
    R = (lhs - rhs)[np.ix_(m, m)]
    return {"residual": float(np.abs(R).max()), "identity_dev": float(np.abs(A - np.eye(len(z))).max())}


# ---------------------------------------------------------------- parametrix

def _symbol_matrix(cfg: TruncConfig, ahat: dict, order: int) -> np.ndarray:
    """perp matrix of F (a d_x^{-order}) F^{-1} for a = sum_d ahat[d] e^{2 pi i d x}."""
    perp = cfg.perp
    pos = {int(n): i for i, n in enumerate(perp)}
    M = np.zeros((len(perp), len(perp)), complex)
    for j, m in enumerate(perp):
        for d, a in ahat.items():
            if int(m + d) in pos:
                M[pos[int(m + d)], j] += a / (2j * np.pi * m) ** order
    return M


def X_perp_operator(chart: OneGapChart, tau: float, z) -> np.ndarray:
    """B with X_perp(tau, z) = B z_perp, B = -tau J_perp L_perp^S [X_S] in operator form."""
    cfg = chart.cfg
    z = np.asarray(z, complex)
    X = X_field(chart, tau, z)
    p = chart.point(z[cfg.S_mask])
    g = np.tensordot(X[cfg.S_mask], p.dW, axes=1)  # d_S W_n [X_S], columns n in perp
    D = dx_inv_diag(cfg)[:, None]
    Jp = 2j * np.pi * cfg.perp
    return -tau * Jp[:, None] * (bt(p.W) @ (D * g))


def extract_symbols(cfg: TruncConfig, B: np.ndarray, band: int = 6, N: int = 1) -> dict:
    """a_1..a_N of B ~ sum_k F a_k d_x^{-k} F^{-1}, fitted per Fourier offset."""
    offs = list(range(-band, band + 1))
    m_fit = [m for m in range(band + 2, cfg.n_max - band + 1)]
    m_fit += [-m for m in m_fit]
    powers = tuple(range(1, N + 3))
    coef = _offdiag_fit(B, cfg.perp, cfg.perp, offs, m_fit, powers)
    return {k: {d: coef[i, k - 1] for i, d in enumerate(offs)} for k in range(1, N + 1)}


def parametrix_coeffs(chart: OneGapChart, z, N: int = 1, band: int = 6) -> dict:
    """a_k(z; Psi_C) by Simpson quadrature in tau and the remainder rows of the reconstruction."""
    cfg = chart.cfg
    if band + 2 > cfg.n_max - band:
        raise NFMapError(f"n_max={cfg.n_max} leaves no fit window for band {band}")
    z = np.asarray(z, complex)
    steps = cfg.ode_steps
    steps += steps % 2
    d1, path = flow_increment(chart, 0.0, 1.0, z, steps=steps, record=True)
    taus = np.linspace(0, 1, steps + 1)
    w = np.ones(steps + 1)
    w[1:-1:2] = 4
    w[2:-1:2] = 2
    w /= 3 * steps
    acc = {k: {} for k in range(1, N + 1)}
    for t, dt, wt in zip(taus, path, w):
        sym = extract_symbols(cfg, X_perp_operator(chart, t, z + dt), band, N)
        for k in sym:
            for d, v in sym[k].items():
                acc[k][d] = acc[k].get(d, 0) + wt * v
    S = cfg.S_mask
    recon = np.zeros(int((~S).sum()), complex)
    for k in range(1, N + 1):
        recon = recon + _symbol_matrix(cfg, acc[k], k) @ z[~S]
    R = d1[~S] - recon
    perp = cfg.perp
    inner = (np.abs(perp) >= band + 2) & (np.abs(perp) <= cfg.n_max - band)
    ns = np.abs(perp[inner])
    rows = np.abs(R[inner])
    # at z_perp = 0 the remainder vanishes identically and has no slope
    slope = float(np.polyfit(np.log(ns), np.log(rows), 1)[0]) if np.all(rows > 0) else float("nan")
    a_norm = {k: float(np.sqrt(sum(abs(v) ** 2 for v in acc[k].values()))) for k in acc}
    return {"a": acc, "a_norm": a_norm, "remainder": R, "slope": slope, "ns": ns, "rows": rows}


# ---------------------------------------------------------------- L rows

def L_perp_row_norms(chart: OneGapChart, z) -> tuple:
    cfg = chart.cfg
    _, _, LpS, _ = _blocks(chart, np.asarray(z, complex))
    perp = cfg.perp
    inner = (perp >= 2) & (perp <= cfg.n_max // 2)
    ns = perp[inner]
    rows = np.linalg.norm(LpS[inner], axis=1)
    slope = float(np.polyfit(np.log(ns), np.log(rows), 1)[0])
    return ns, rows, slope


# ---------------------------------------------------------------- export

def export_matrix(path, A: np.ndarray):
    """Little-endian row-major complex128 with a 16-byte header (magic, rows, cols)."""
    A = np.ascontiguousarray(np.asarray(A, dtype="<c16"))
    if A.ndim != 2:
        raise ValueError("only matrices can be exported")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<8sII", MAGIC, A.shape[0], A.shape[1]))
        fh.write(A.tobytes(order="C"))


def import_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic, r, c = struct.unpack("<8sII", fh.read(16))
        if magic != MAGIC:
            raise ValueError("not a kdvnf matrix file")
        return np.frombuffer(fh.read(), dtype="<c16").reshape(r, c).copy()
