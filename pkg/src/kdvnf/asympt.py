"""Asymptotic expansions in powers of 1/(2 pi i n): WKB coefficients and numerical extraction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import floquet as fl
from .hill import SpectralTable
from .potential import Potential

MAX_DEPTH = 8
DEFAULT_NSET = (8, 11, 16, 23, 32, 45)


class AsymptError(RuntimeError):
    pass


# ---------------------------------------------------------------- x^p * trig polynomials

class PolyTrig:
    """sum_p x^p T_p(x) with T_p trig polynomials of common band B."""

    def __init__(self, coef: np.ndarray):
        # coef[p, m + B]
        self.coef = np.asarray(coef, complex)

    @property
    def band(self) -> int:
        return (self.coef.shape[1] - 1) // 2

    @property
    def modes(self):
        return np.arange(-self.band, self.band + 1)

    @classmethod
    def constant(cls, c=1.0):
        return cls(np.array([[c]], complex))

    @classmethod
    def from_potential(cls, q: Potential):
        return cls(q.coeffs[None, :].copy())

    def padded(self, B: int, P: int):
        out = np.zeros((P, 2 * B + 1), complex)
        b = self.band
        out[:self.coef.shape[0], B - b:B + b + 1] = self.coef
        return out

    def __add__(self, other):
        B = max(self.band, other.band)
        P = max(self.coef.shape[0], other.coef.shape[0])
        return PolyTrig(self.padded(B, P) + other.padded(B, P))

    def __neg__(self):
        return PolyTrig(-self.coef)

    def __sub__(self, other):
        return self + (-other)

    def deriv(self):
        c = self.coef
        P = c.shape[0]
        out = c * (2j * np.pi * self.modes)[None, :]
        for p in range(1, P):
            out[p - 1] += p * c[p]
        return PolyTrig(out)

    def mul_trig(self, t: np.ndarray):
        out = np.array([np.convolve(row, t) for row in self.coef])
        return PolyTrig(out)

    def antiderivative(self):
        """int_0^x of the function."""
        c = self.coef
        P, B = c.shape[0], self.band
        m = self.modes
        out = np.zeros((P + 1, 2 * B + 1), complex)
        nz = m != 0
        iw = 2j * np.pi * m[nz]
        for p in range(P):
            row = c[p]
            out[p + 1, B] += row[B] / (p + 1)
            if not np.any(row[nz]):
                continue
            # J_p = x^p e/(iw) - p/(iw) J_{p-1},  J_0 = (e - 1)/(iw)
            fac = row[nz].copy()
            for j in range(p, -1, -1):
                out[j, np.nonzero(nz)[0]] += fac / iw
                if j == 0:
                    out[0, B] -= np.sum(fac / iw)
                fac = -fac * j / iw
        return PolyTrig(out)

    def __call__(self, x):
        x = np.asarray(x, float)
        e = np.exp(2j * np.pi * np.multiply.outer(x, self.modes))
        return sum(x ** p * (e @ self.coef[p]) for p in range(self.coef.shape[0]))


@dataclass(frozen=True)
class YAECoefficients:
    k_max: int
    y_ae: list   # PolyTrig per k, y_ae[0] = 1
    Q: PolyTrig

    def on_grid(self, k: int, x):
        return self.y_ae[k](x)


def y_ae_coefficients(q: Potential, k_max: int) -> YAECoefficients:
    """y_k = int_0^x (-d^2/dt^2 + q) y_{k-1} dt, y_0 = 1."""
    if k_max > MAX_DEPTH:
        raise AsymptError(f"k_max={k_max} exceeds the supported depth {MAX_DEPTH}")
    ys = [PolyTrig.constant(1.0)]
    for _ in range(k_max):
        prev = ys[-1]
        integrand = prev.mul_trig(q.coeffs) - prev.deriv().deriv()
        ys.append(integrand.antiderivative())
    Q = PolyTrig.from_potential(q).antiderivative()
    return YAECoefficients(k_max, ys, Q)


def wkb_defect(q: Potential, N: int, nu: float, npts: int = 256) -> float:
    """sup_x |(-d^2 + q - nu^2) y| for y = e^{i nu x} sum_{k<=N} y_k/(2 i nu)^k."""
    ya = y_ae_coefficients(q, N + 1)
    x = np.arange(npts) / npts
    # by the recursion the defect collapses to e^{i nu x} y_{N+1}'/(2 i nu)^N
    d = ya.y_ae[N + 1].deriv()(x)
    return float(np.max(np.abs(d)) / abs(2 * nu) ** N)


# ---------------------------------------------------------------- extraction

@dataclass
class ExpansionReport:
    powers: list
    ns: np.ndarray
    coeffs: list
    remainder: np.ndarray
    rem_power: int
    condition: float
    sup: np.ndarray = field(default=None)
    decay_slope: float = 0.0
    ratio: float = 1.0
    extras: dict = field(default_factory=dict)

    @property
    def sup_bound(self) -> float:
        return float(np.max(self.sup))

    def bounded(self, slope: float = 0.1, ratio: float = 5.0) -> bool:
        return bool(self.decay_slope <= slope and self.ratio <= ratio)

    def to_json(self) -> dict:
        def enc(c):
            c = np.asarray(c)
            if c.ndim == 0:
                return [float(c.real), float(c.imag)]
            return {"max_abs": float(np.max(np.abs(c)))}
        return {"powers": list(self.powers), "n_set": [int(n) for n in self.ns],
                "coeffs": [enc(c) for c in self.coeffs],
                "remainder_sup": [float(v) for v in self.sup],
                "rem_power": self.rem_power, "condition": self.condition,
                "decay_slope": self.decay_slope, "ratio": self.ratio,
                **{k: v for k, v in self.extras.items()}}


def _loglog_slope(ns, v):
    v = np.asarray(v, float)
    if np.any(v <= 0):
        v = np.maximum(v, 1e-300)
    return float(np.polyfit(np.log(ns), np.log(v), 1)[0])


def expansion_extract(values, powers, n_set, extra: int = 2, step: int = 1,
                      rem_power: int | None = None, max_cond: float = 1e12) -> ExpansionReport:
    """Least-squares fit of values(n) in (2 pi i n)^{-p}.

    The fit uses ``extra`` further powers beyond the requested ones (spaced by
    ``step``) so that the requested coefficients are not polluted by the next
    orders; only the requested coefficients are reported, and the remainder is
    the exact residual (value - requested part) * (2 pi i n)^rem_power.
    """
    ns = np.asarray(list(n_set), float)
    powers = list(powers)
    if rem_power is None:
        rem_power = (max(powers) + 1) if powers else 0
    V = np.array([values[int(n)] for n in ns], complex)
    shape = V.shape[1:]
    V2 = V.reshape(len(ns), -1)
    z = 2j * np.pi * ns
    cond = 1.0
    if powers:
        top = max(powers)
        fit_p = powers + [top + step * (i + 1) for i in range(extra)]
        if len(ns) < len(powers) + 1:
            raise AsymptError("need more n values than fitted powers")
        fit_p = fit_p[:max(len(powers), min(len(fit_p), len(ns) - 1))]
        A = np.stack([z ** (-p) for p in fit_p], axis=1)
        scale = np.abs(A).max(axis=0)
        cond = float(np.linalg.cond(A / scale))
        if cond > max_cond:
            raise AsymptError(f"extraction ill-conditioned (cond={cond:.2e})")
        sol = np.linalg.lstsq(A / scale, V2, rcond=None)[0] / scale[:, None]
        coeffs = sol[:len(powers)]
        model = A[:, :len(powers)] @ coeffs
    else:
        coeffs = np.zeros((0, V2.shape[1]), complex)
        model = np.zeros_like(V2)
    rem = (V2 - model) * (z ** rem_power)[:, None]
    sup = np.max(np.abs(rem), axis=1)
    rep = ExpansionReport(powers, ns.astype(int), [c.reshape(shape) for c in coeffs],
                          rem.reshape(V.shape), rem_power, cond, sup)
    rep.decay_slope = _loglog_slope(ns, sup)
    rep.ratio = float(sup.max() / max(sup.min(), 1e-300))
    return rep


# ---------------------------------------------------------------- families

def _grid(nsamples):
    return np.arange(nsamples) / nsamples


def floquet_expansion(q: Potential, table: SpectralTable, N: int, n_set=DEFAULT_NSET,
                      nsamples: int = fl.NSAMPLES, extra: int = 4) -> ExpansionReport:
    """Coefficients f_k of e^{-i pi n x} f_n(x) = 1 + sum f_k/(2 pi i n)^k + ...

    f_n carries every power of 1/n, so more guard powers are needed than for
    the even families before f_1 is clean to 1e-6.
    """
    x = _grid(nsamples)
    vals = {}
    for n in n_set:
        fp, _ = fl.floquet_solution(q, table, n, nsamples)
        vals[n] = np.exp(-1j * np.pi * n * x) * fp[:-1] - 1
    rep = expansion_extract(vals, list(range(1, N + 1)), n_set, extra=extra, rem_power=N + 1)
    if N >= 1:
        Q = y_ae_coefficients(q, 1).Q(x)
        rep.extras["f1_vs_Q"] = float(np.max(np.abs(rep.coeffs[0] - Q)))
        rep.extras["f1_imag"] = float(np.max(np.abs(rep.coeffs[0].imag)))
    return rep


def W_values(q: Potential, table: SpectralTable, n_set, nsamples: int = fl.NSAMPLES) -> dict:
    x = _grid(nsamples)
    out = {}
    for n in n_set:
        W, _ = fl.W_function(q, table, n, nsamples)
        out[n] = np.exp(-2j * np.pi * n * x) * W - 1
    return out


def W_expansion(q: Potential, table: SpectralTable, N: int, n_set=DEFAULT_NSET,
                nsamples: int = fl.NSAMPLES, reversal=None) -> ExpansionReport:
    """Coefficients W_k of e^{-2 pi i n x} W_n(x).

    With ``reversal=(q_rev, table_rev)`` the symmetry W_k(x, S_rev) = (-1)^k W_k(-x)
    is measured and stored in ``extras['reversal']``.
    """
    rep = expansion_extract(W_values(q, table, n_set, nsamples), list(range(1, N + 1)),
                            n_set, rem_power=N + 1)
    if reversal is not None:
        qr, tr = reversal
        rr = expansion_extract(W_values(qr, tr, n_set, nsamples), list(range(1, N + 1)),
                               n_set, rem_power=N + 1)
        res = 0.0
        for k in range(1, N + 1):
            c = rep.coeffs[k - 1]
            flipped = np.roll(c[::-1], 1)  # c(-x) on the grid
            res = max(res, float(np.max(np.abs(rr.coeffs[k - 1] - (-1) ** k * flipped))))
        rep.extras["reversal"] = res
    return rep


def family_values(q: Potential, table: SpectralTable, which: str, n_set) -> dict:
    """Deviation of a scalar family from its q = 0 value, per n."""
    out = {}
    for n in n_set:
        if which == "tau":
            v = table.tau[n] - (n * np.pi) ** 2
        elif which == "a":
            v = fl.floquet_coefficient(q, table, n)[0] - 1j * np.pi * n
        elif which == "xi":
            v = fl.gap_factor_xi(q, table, n) - 1
        elif which == "d":
            v = fl.gap_factor_d(q, table, n, check=None) - 1
        elif which == "beta":
            v = fl.beta_angle(q, table, n)
        elif which == "omega":
            v = fl.frequency(q, table, n) - (2 * np.pi * n) ** 3
        elif which == "Omega":
            v = fl.big_omega(q, table, n) - (2 * np.pi * n) ** 2
        else:
            raise ValueError(f"unknown family {which!r}")
        out[n] = complex(v)
    return out


def family_powers(which: str, N: int):
    """(powers, step, rem_power) for the expansion structure of each family."""
    if which == "a":
        return list(range(0, N + 1)), 1, N + 1
    if which in ("tau", "xi", "d"):
        return [2 * k for k in range(1, N + 1)], 2, 2 * N + 2
    if which in ("beta", "omega"):
        return [2 * k + 1 for k in range(N)], 2, 2 * N + 1
    if which == "Omega":
        return [2 * k for k in range(1, N + 1)], 2, 2 * N + 1
    raise ValueError(f"unknown family {which!r}")


def scalar_expansions(q: Potential, table: SpectralTable, which: str, N: int,
                      n_set=DEFAULT_NSET) -> ExpansionReport:
    vals = family_values(q, table, which, n_set)
    powers, step, rp = family_powers(which, N)
    rep = expansion_extract(vals, powers, n_set, step=step, rem_power=rp)
    rep.extras["family"] = which
    return rep


def odd_power_check(values: dict, n_set, top: int = 4) -> dict:
    """Fit a full power basis 1..top and report odd and even coefficient sizes."""
    rep = expansion_extract(values, list(range(1, top + 1)), n_set, extra=0,
                            rem_power=top + 1)
    c = [complex(np.asarray(v)) for v in rep.coeffs]
    return {"odd": [abs(c[p - 1]) for p in range(1, top + 1, 2)],
            "even": [abs(c[p - 1]) for p in range(2, top + 1, 2)]}
