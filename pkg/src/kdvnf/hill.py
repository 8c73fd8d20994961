"""Fundamental solutions, Floquet matrix entries and spectra of -d^2/dx^2 + q."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import _ode
from .potential import Potential

STEPS_PER_UNIT = 192  # RK4 steps per unit of max(n_pot, sqrt|lam|/pi, 1)
ODE_TOL = 1e-5  # bound on the un-extrapolated fine-step error


class HillError(RuntimeError):
    pass


@dataclass(frozen=True)
class FundamentalPair:
    lam: complex
    x: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    dy1: np.ndarray
    dy2: np.ndarray
    # lam-derivatives at x = 1, indexed [order-1] for order 1, 2
    y1_lam: tuple
    y2_lam: tuple
    dy1_lam: tuple
    dy2_lam: tuple
    err: float

    def wronskian(self) -> np.ndarray:
        return self.y1 * self.dy2 - self.dy1 * self.y2


@dataclass(frozen=True)
class FloquetEntries:
    """Entries of the Floquet matrix and their lam-derivatives.

    Fields are scalars or arrays matching the shape of ``lam``.
    """
    lam: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    dm1: np.ndarray
    dm2: np.ndarray
    m1_l: np.ndarray
    m2_l: np.ndarray
    dm1_l: np.ndarray
    dm2_l: np.ndarray
    m1_ll: np.ndarray
    m2_ll: np.ndarray
    dm1_ll: np.ndarray
    dm2_ll: np.ndarray

    @property
    def Delta(self):
        return self.m1 + self.dm2

    @property
    def delta(self):
        return self.m1 - self.dm2

    @property
    def Delta_l(self):
        return self.m1_l + self.dm2_l

    @property
    def Delta_ll(self):
        return self.m1_ll + self.dm2_ll

    @property
    def det(self):
        return self.m1 * self.dm2 - self.m2 * self.dm1


_QCACHE: dict = {}


def _qhalf(q: Potential, nsteps: int) -> np.ndarray:
    key = (q.coeffs.tobytes(), nsteps)
    v = _QCACHE.get(key)
    if v is None:
        if len(_QCACHE) > 64:
            _QCACHE.clear()
        v = _ode.q_on_grid(np.asarray(q.coeffs), q.modes, 4 * nsteps + 1)
        _QCACHE[key] = v
    return v


def _nsteps(q: Potential, lam: complex, nsamples: int) -> int:
    scale = max(q.n_pot, np.sqrt(abs(lam)) / np.pi, 1.0)
    # the global RK4 error grows like the number of oscillations at fixed
    # steps per wavelength, so refine a little further for very large lam
    n0 = int(np.ceil(STEPS_PER_UNIT * scale * max(1.0, scale / 100) ** 0.25))
    # quantize so that nearby lam share a grid of q values
    n0 = 64 * int(np.ceil(n0 / 64))
    return nsamples * int(np.ceil(n0 / nsamples))


def _solve(q: Potential, lams, nsamples: int = 1):
    """States (len(lams), nsamples+1, 12) and error estimates."""
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    out = np.empty((len(lams), nsamples + 1, 12), complex)
    err = np.empty(len(lams))
    steps = np.array([_nsteps(q, l, nsamples) for l in lams])
    for ns in np.unique(steps):
        idx = np.nonzero(steps == ns)[0]
        r, e = _ode.solve_batch(lams[idx], _qhalf(q, int(ns)), int(ns), nsamples)
        out[idx] = r
        err[idx] = e
    scale = np.maximum(1.0, np.abs(out[:, -1, [0, 1, 6, 7]]).max(axis=1))
    bad = err > ODE_TOL * scale
    if np.any(bad):
        j = int(np.nonzero(bad)[0][0])
        raise HillError(f"RK4 step halving did not converge at lam={lams[j]}: "
                        f"error estimate {err[j]:.2e}")
    return out, err


def fundamental_solutions(q: Potential, lam: complex, nsamples: int = 256) -> FundamentalPair:
    """y1, y2 and derivatives on x_j = j/nsamples, j = 0..nsamples."""
    st, err = _solve(q, [lam], nsamples)
    st = st[0]
    end = st[-1]
    return FundamentalPair(
        lam=complex(lam), x=np.linspace(0, 1, nsamples + 1),
        y1=st[:, 0], dy1=st[:, 1], y2=st[:, 6], dy2=st[:, 7],
        y1_lam=(end[2], end[4]), dy1_lam=(end[3], end[5]),
        y2_lam=(end[8], end[10]), dy2_lam=(end[9], end[11]),
        err=float(err[0]))


def solution_grid(q: Potential, lams, nsamples: int = 256) -> np.ndarray:
    """Raw states for a batch of lam: array (len(lams), nsamples+1, 12)."""
    return _solve(q, lams, nsamples)[0]


def floquet_entries(q: Potential, lam) -> FloquetEntries:
    scalar = np.ndim(lam) == 0
    e = _solve(q, lam, 1)[0][:, -1, :]
    if scalar:
        e = e[0]
    cols = [e[..., i] for i in (0, 6, 1, 7, 2, 8, 3, 9, 4, 10, 5, 11)]
    return FloquetEntries(np.asarray(lam), *cols)


# ---------------------------------------------------------------- spectra

@dataclass(frozen=True)
class SpectralTable:
    """Arrays are indexed by n = 0..n_max; entry 0 of lamMinus/mu/lamDot is nan."""
    n_max: int
    lam0: float
    lamMinus: np.ndarray
    lamPlus: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    lamDot: np.ndarray

    @property
    def tau(self):
        return 0.5 * (self.lamPlus + self.lamMinus)

    @property
    def gamma(self):
        return self.lamPlus - self.lamMinus

    def closed(self, n: int) -> bool:
        return bool(self.gamma[n] < gap_tolerance(n))

    def open_gaps(self) -> list:
        return [n for n in range(1, self.n_max + 1) if not self.closed(n)]

    def to_json(self) -> dict:
        def arr(a):
            return [None if np.isnan(v) else float(v) for v in a]
        return {"n_max": self.n_max, "lam0": self.lam0,
                "lamMinus": arr(self.lamMinus), "lamPlus": arr(self.lamPlus),
                "mu": arr(self.mu), "nu": arr(self.nu), "lamDot": arr(self.lamDot),
                "tau": arr(self.tau), "gamma": arr(self.gamma)}

    def csv_rows(self):
        yield ["n", "lam_minus", "lam_plus", "mu", "nu", "lam_dot", "tau", "gamma"]
        for n in range(self.n_max + 1):
            yield [n] + [float(a[n]) for a in (self.lamMinus, self.lamPlus, self.mu,
                                               self.nu, self.lamDot, self.tau, self.gamma)]


def gap_tolerance(n: int) -> float:
    return 1e-8 * max(1, n * n)


def galerkin_periodic(q: Potential, n_max: int, extra: int | None = None) -> np.ndarray:
    """lam_0^+, lam_1^-, lam_1^+, ..., lam_{n_max}^+ from Hill's method.

    The operator is discretized in the basis e^{i pi m x}; even m gives the
    periodic and odd m the antiperiodic spectrum.  For a band-limited q both
    blocks are banded and the truncation error is negligible once the basis
    extends well past the wanted index.
    """
    if extra is None:
        extra = 4 * q.n_pot + 32
    K = n_max + extra
    vals = []
    for parity in (0, 1):
        m = np.arange(-K, K + 1)
        m = m[(m % 2) == parity]
        A = np.diag((np.pi * m) ** 2).astype(complex)
        d = (m[:, None] - m[None, :]) // 2
        mask = np.abs(d) <= q.n_pot
        A[mask] += q.coeffs[(d + q.n_pot)[mask]]
        vals.append(np.linalg.eigvalsh(A))
    ev = np.sort(np.concatenate(vals))
    return ev[:2 * n_max + 1]


def _bracketed_newton(q, which, lo, hi, tol=1e-14, maxit=60):
    """Vectorized safeguarded Newton for a sign change of an entry on [lo, hi]."""
    lo = np.array(lo, float)
    hi = np.array(hi, float)

    def fd(x):
        e = floquet_entries(q, x.astype(complex))
        f, df = {
            "m2": (e.m2, e.m2_l),
            "dm1": (e.dm1, e.dm1_l),
            "Delta_l": (e.Delta_l, e.Delta_ll),
        }[which]
        return f.real, df.real

    flo, _ = fd(lo)
    fhi, _ = fd(hi)
    if np.any(np.sign(flo) == np.sign(fhi)):
        j = int(np.nonzero(np.sign(flo) == np.sign(fhi))[0][0])
        raise HillError(f"no sign change of {which} on [{lo[j]}, {hi[j]}] (entry {j})")
    x = 0.5 * (lo + hi)
    active = np.ones(len(x), bool)
    for _ in range(maxit):
        idx = np.nonzero(active)[0]
        if len(idx) == 0:
            break
        f, df = fd(x[idx])
        same = np.sign(f) == np.sign(flo[idx])
        lo[idx] = np.where(same, x[idx], lo[idx])
        flo[idx] = np.where(same, f, flo[idx])
        hi[idx] = np.where(same, hi[idx], x[idx])
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = x[idx] - f / df
        bad = ~np.isfinite(xn) | (xn <= lo[idx]) | (xn >= hi[idx])
        xn = np.where(bad, 0.5 * (lo[idx] + hi[idx]), xn)
        step = np.abs(xn - x[idx])
        x[idx] = xn
        done = (step < tol * np.maximum(1.0, np.abs(xn))) | (f == 0) | \
               (hi[idx] - lo[idx] < tol * np.maximum(1.0, np.abs(xn)))
        active[idx[done]] = False
    return x


def spectral_table(q: Potential, n_max: int) -> SpectralTable:
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    ev = galerkin_periodic(q, n_max)
    lam0 = float(ev[0])
    lm = np.full(n_max + 1, np.nan)
    lp = np.full(n_max + 1, np.nan)
    lm[1:] = ev[1::2]
    lp[1:] = ev[2::2]
    lp[0] = lam0
    n = np.arange(1, n_max + 1)
    closed = (lp[1:] - lm[1:]) < np.array([gap_tolerance(k) for k in n])
    # collapse numerically double roots onto their mean
    mid = 0.5 * (lp[1:] + lm[1:])
    lm[1:] = np.where(closed, mid, lm[1:])
    lp[1:] = np.where(closed, mid, lp[1:])
    eta = np.array([1e-6 * max(1, k * k) for k in n])
    lo = lm[1:] - eta
    hi = lp[1:] + eta
    mu = np.full(n_max + 1, np.nan)
    nu = np.full(n_max + 1, np.nan)
    ld = np.full(n_max + 1, np.nan)
    mu[1:] = _bracketed_newton(q, "m2", lo, hi)
    ld[1:] = _bracketed_newton(q, "Delta_l", lo, hi)
    floor = float(np.min(q.samples())) - 1.0
    nu_lo = np.concatenate([[floor], lo])
    nu_hi = np.concatenate([[lam0 + 1e-9], hi])
    nu[:] = _bracketed_newton(q, "dm1", nu_lo, nu_hi)
    table = SpectralTable(n_max, lam0, lm, lp, mu, nu, ld)
    _check_order(table)
    return table


def _check_order(t: SpectralTable, slack: float = 1e-7):
    seq = [t.lam0]
    for n in range(1, t.n_max + 1):
        s = slack * max(1, n * n)
        for v in (t.mu[n], t.nu[n], t.lamDot[n]):
            if not (t.lamMinus[n] - s <= v <= t.lamPlus[n] + s):
                raise HillError(f"interlacing violated at n={n}")
        seq += [t.lamMinus[n], t.lamPlus[n]]
    if np.any(np.diff(seq) < -slack):
        raise HillError("periodic eigenvalues out of order")
    if t.nu[0] > t.lam0 + slack:
        raise HillError("nu_0 above lam_0")


def spectral_table_json(t: SpectralTable) -> str:
    return json.dumps(t.to_json())


# ---------------------------------------------------------------- products

def _sinc_prod(lam, n_trunc):
    """prod_{n > n_trunc} (1 - lam/(n pi)^2) from sin(sqrt lam)/sqrt lam."""
    lam = complex(lam)
    w = np.sqrt(lam)
    full = np.sinc(w / np.pi) if lam.imag == 0 and lam.real >= 0 else (
        np.sin(w) / w if w != 0 else 1.0)
    head = np.prod([1 - lam / (k * np.pi) ** 2 for k in range(1, n_trunc + 1)])
    return full / head


def product_representation_eval(table: SpectralTable, which: str, lam, n_trunc: int | None = None):
    """Truncated product with the q = 0 tail beyond n_trunc.

    which: 'Delta2m4' (Delta^2 - 4), 'Delta_l', 'm2' or 'dm1'.
    """
    n_trunc = table.n_max if n_trunc is None else n_trunc
    if n_trunc > table.n_max:
        raise ValueError("n_trunc exceeds n_max")
    lam = complex(lam)
    k = np.arange(1, n_trunc + 1)
    pk2 = (k * np.pi) ** 2
    tail = _sinc_prod(lam, n_trunc)
    if which == "Delta2m4":
        p = np.prod((table.lamPlus[1:n_trunc + 1] - lam) * (table.lamMinus[1:n_trunc + 1] - lam) / pk2 ** 2)
        return 4 * (table.lam0 - lam) * p * tail ** 2
    if which == "Delta_l":
        return -np.prod((table.lamDot[1:n_trunc + 1] - lam) / pk2) * tail
    if which == "m2":
        return np.prod((table.mu[1:n_trunc + 1] - lam) / pk2) * tail
    if which == "dm1":
        # sign fixed by q = 0, where m1'(lam) = -sqrt(lam) sin(sqrt(lam))
        return (table.nu[0] - lam) * np.prod((table.nu[1:n_trunc + 1] - lam) / pk2) * tail
    raise ValueError(f"unknown product {which!r}")
