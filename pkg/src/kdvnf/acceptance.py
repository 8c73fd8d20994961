"""The acceptance suite: fourteen quantitative checks with one pass/fail result each."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import asympt, floquet as fl, hill, nfmap as nf, paracalc as pc
from .potential import (hamiltonian_kdv, make_lame_one_gap, make_trig_potential,
                        reverse_potential, translate_potential, zero_potential)

NSET = asympt.DEFAULT_NSET
LAME_K = 0.5
SHIFT = 0.125  # translation used where the even Lame potential makes a check degenerate


@dataclass
class Result:
    number: int
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] criterion {self.number:2d}: {self.name} ({self.seconds:.1f} s)"


# ---------------------------------------------------------------- shared data

@lru_cache(maxsize=None)
def lame(k: float = LAME_K):
    return make_lame_one_gap(k)


@lru_cache(maxsize=None)
def lame_table(k: float = LAME_K, n_max: int = 45):
    return hill.spectral_table(lame(k), n_max)


@lru_cache(maxsize=None)
def shifted(k: float = LAME_K, n_max: int = 45):
    q = translate_potential(lame(k), SHIFT)
    return q, hill.spectral_table(q, n_max)


@lru_cache(maxsize=None)
def chart(n_max: int, k: float = LAME_K):
    cfg = nf.TruncConfig(n_max=n_max)
    return nf.OneGapChart(cfg, 0.0, nf.action_of_modulus(k), modulus_guess=k)


def corrector_state(ch, norm: float = 0.05, seed: int = 0, flat: bool = False):
    rng = np.random.default_rng(seed)
    return nf.base_state(ch) + nf.random_perp(ch.cfg, rng, norm, flat=flat)


# ---------------------------------------------------------------- criteria

def c01_zero_potential() -> dict:
    q = zero_potential()
    out = {}
    lams = np.linspace(0, (12 * np.pi) ** 2, 200)
    e = hill.floquet_entries(q, lams.astype(complex))
    out["Delta"] = float(np.max(np.abs(e.Delta - 2 * np.cos(np.sqrt(lams)))))
    t = hill.spectral_table(q, 12)
    n = np.arange(1, 13)
    ref = (n * np.pi) ** 2
    out["eigen"] = float(max(np.max(np.abs(getattr(t, a)[1:] - ref) / ref)
                             for a in ("lamMinus", "lamPlus", "mu", "nu")))
    x = np.arange(fl.NSAMPLES) / fl.NSAMPLES
    xe = np.linspace(0, 1, fl.NSAMPLES + 1)
    a_err = f_err = W_err = xi_err = beta_err = d_err = om_err = 0.0
    for k in n:
        ap, am = fl.floquet_coefficient(q, t, k)
        a_err = max(a_err, abs(ap - 1j * np.pi * k), abs(am + 1j * np.pi * k))
        fp, _ = fl.floquet_solution(q, t, k)
        f_err = max(f_err, np.max(np.abs(fp - np.exp(1j * np.pi * k * xe))))
        W, _ = fl.W_function(q, t, k)
        W_err = max(W_err, np.max(np.abs(W - np.exp(2j * np.pi * k * x))))
        xi_err = max(xi_err, abs(fl.gap_factor_xi(q, t, k) - 1))
        beta_err = max(beta_err, abs(fl.beta_angle(q, t, k)))
        d_err = max(d_err, abs(fl.gap_factor_d(q, t, k, check=None) - 1))
        om_err = max(om_err, abs(fl.frequency(q, t, k) / (2 * np.pi * k) ** 3 - 1))
    out.update(a=float(a_err), f=float(f_err), W=float(W_err), xi=float(xi_err),
               beta=float(beta_err), d=float(d_err), omega=float(om_err))
    out["passed"] = (out["Delta"] < 1e-9 and out["eigen"] < 1e-8 and out["a"] < 1e-8
                     and out["f"] < 1e-8 and out["W"] < 1e-8 and out["xi"] < 1e-8
                     and out["beta"] < 1e-8 and out["d"] < 1e-8 and out["omega"] < 1e-6)
    return out


def c02_wronskian(seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(10):
        n_pot = int(rng.integers(1, 5))
        coeffs = {}
        for m in range(1, n_pot + 1):
            c = complex(rng.normal(), rng.normal()) * 3 / m
            coeffs[m] = c
            coeffs[-m] = np.conj(c)
        q = make_trig_potential(coeffs)
        lams = rng.uniform(-20, 2000, 20)
        for lam in lams:
            fs = hill.fundamental_solutions(q, lam, nsamples=64)
            worst = max(worst, float(np.max(np.abs(fs.wronskian() - 1))))
    return {"max_deviation": worst, "passed": worst < 1e-9}


def c03_one_gap() -> dict:
    ev = hill.galerkin_periodic(lame(), 8)
    gam = ev[2::2] - ev[1::2]
    n = np.arange(1, 9)
    ratios = gam[1:] / (1e-6 * n[1:] ** 2)
    return {"gamma": gam.tolist(), "gamma1": float(gam[0]),
            "max_closed_ratio": float(ratios.max()),
            "passed": bool(gam[0] > 1e-2 and np.all(ratios < 1))}


def c04_normalization() -> dict:
    q, t = lame(), lame_table(n_max=20)
    worst = 0.0
    for n in range(2, 21):
        H, G = fl.normalized_pair(q, t, n)
        r = fl.normalization_residuals(H, G)
        worst = max(worst, r["HH"], r["GG"], r["HG"])
    return {"max_residual": float(worst), "passed": worst < 1e-6}


def c05_remainders() -> dict:
    q, t = lame(), lame_table()
    out = {}
    ok = True
    for N in (1, 2):
        for name, fun in (("f", asympt.floquet_expansion), ("W", asympt.W_expansion)):
            rep = fun(q, t, N, NSET)
            out[f"{name}_N{N}"] = {"slope": rep.decay_slope, "ratio": rep.ratio,
                                   "sup": rep.sup.tolist()}
            ok &= rep.bounded()
    out["passed"] = bool(ok)
    return out


def c06_scalars() -> dict:
    out = {}
    ok = True
    q, t = lame(), lame_table()
    qs, ts = shifted()
    for fam in ("tau", "a", "xi", "d", "beta", "omega"):
        qq, tt = (qs, ts) if fam == "beta" else (q, t)
        rep = asympt.scalar_expansions(qq, tt, fam, 0, NSET)
        good = rep.bounded()
        out[fam] = {"slope": rep.decay_slope, "ratio": rep.ratio, "passed": good}
        ok &= good
    out["passed"] = bool(ok)
    return out


def c07_reversibility() -> dict:
    q, t = shifted(n_max=20)
    qr = reverse_potential(q)
    tr = hill.spectral_table(qr, 20)
    spec = max(float(np.nanmax(np.abs(getattr(t, a)[1:] - getattr(tr, a)[1:])))
               for a in ("lamMinus", "lamPlus", "mu", "nu", "lamDot"))
    spec = max(spec, abs(t.nu[0] - tr.nu[0]), abs(t.lam0 - tr.lam0))
    ns = fl.NSAMPLES
    j = np.arange(ns + 1)
    f_err = beta_err = 0.0
    for n in range(2, 11):
        _, fm = fl.floquet_solution(q, t, n, ns)
        gp, _ = fl.floquet_solution(qr, tr, n, ns)
        # f_{-n}(-x) = (-1)^n f_{-n}(1 - x) for the closed gap n
        f_err = max(f_err, float(np.max(np.abs(gp - (-1) ** n * fm[ns - j]))))
        beta_err = max(beta_err, abs(fl.beta_angle(qr, tr, n) + fl.beta_angle(q, t, n)))
    I_err = abs(fl.action(q, t, 1) - fl.action(qr, tr, 1))
    return {"spectra": spec, "f": f_err, "beta": float(beta_err), "action": float(I_err),
            "passed": spec < 1e-9 and f_err < 1e-7 and beta_err < 1e-6 and I_err < 1e-8}


def c08_two_smoothing() -> dict:
    ch = chart(32)
    ns, rows, slope = nf.L_perp_row_norms(ch, corrector_state(ch, flat=True))
    return {"slope": slope, "ns": ns.tolist(), "rows": rows.tolist(), "passed": slope <= -1.7}


def c09_corrector(halving: bool = True) -> dict:
    ch = chart(32)
    t0 = time.perf_counter()
    z0 = nf.base_state(ch)
    z = corrector_state(ch)
    base = float(np.max(np.abs(nf.psi_C(ch, z0) - z0)))
    inv = float(np.max(np.abs(nf.psi_C_inv(ch, nf.psi_C(ch, z)) - z)))
    r32 = nf.symplectic_residual(ch, z)
    rL = nf.symplectic_residual(ch, z, corrector=False)
    secs = time.perf_counter() - t0 + ch.build_seconds
    out = {"base_fixed": base, "inverse": inv, "residual_32": r32, "residual_no_corrector": rL,
           "seconds_32": secs}
    ok = base < 1e-10 and inv < 1e-8 and r32 < 1e-4 and secs < 300
    if halving:
        ch64 = chart(64)
        r64 = nf.symplectic_residual(ch64, corrector_state(ch64))
        out["residual_64"] = r64
        out["halving_ratio"] = r64 / r32
        ok = ok and r64 <= 0.5 * r32
    out["passed"] = bool(ok)
    return out


def c10_vanishing() -> dict:
    ch = chart(32)
    quad = nf.quadratic_form_check(ch)
    cub = nf.cubic_scaling(ch)
    return {"quadratic_max_relative": quad["max_relative"], "cubic_exponent": cub["exponent"],
            "passed": quad["max_relative"] < 5e-3 and abs(cub["exponent"] - 3) <= 0.2}


def c11_identity() -> dict:
    r = nf.maradona_identity(chart(32))
    r["passed"] = r["residual"] < 1e-3
    return r


def c12_frequency(moduli=(0.3, 0.5, 0.7), dk: float = 1e-4) -> dict:
    out = {}
    worst = 0.0
    for k in moduli:
        vals = []
        for kk in (k - dk, k + dk):
            q = make_lame_one_gap(kk)
            vals.append((hamiltonian_kdv(q), fl.action(q, hill.spectral_table(q, 3), 1)))
        fd = (vals[1][0] - vals[0][0]) / (vals[1][1] - vals[0][1])
        q = lame(k)
        w1 = fl.frequency(q, hill.spectral_table(q, 3), 1)
        rel = abs(w1 - fd) / abs(fd)
        out[str(k)] = {"omega1": w1, "dH_dI": fd, "relative": rel}
        worst = max(worst, rel)
    out["passed"] = worst < 1e-3
    return out


def c13_paracalc(seed: int = 0) -> dict:
    chi = pc.make_cutoff()
    rng = np.random.default_rng(seed)
    out = {}
    bony = 0.0
    bands = (16, 32, 64, 128)
    ratios = []
    for B in bands:
        worst = 0.0
        for _ in range(25):
            a = pc.random_function(rng, B, decay=1.5)
            b = pc.random_function(rng, B, decay=1.5)
            bony = max(bony, pc.bony_identity_residual(chi, a, b) / max(np.abs(a).max() * np.abs(b).max(), 1e-300))
            worst = max(worst, pc.bony_smoothing_ratio(chi, a, b, 1, 1))
        ratios.append(worst)
    out["bony_identity"] = bony
    out["bony_ratio_by_band"] = ratios
    a = pc.random_function(rng, 6, decay=3)
    tr = [pc.transpose_smoothing(chi, a, 0, 2, B) for B in (32, 64, 128, 256)]
    psi = [pc.psido_compose_expand(a, 1, 1, 3, B).remainder_norm for B in (32, 64, 128, 256)]
    par = [pc.para_compose_expand(chi, a, 1, 1, 3, B).remainder_norm for B in (32, 64, 128, 256)]
    out["transpose_norms"] = tr
    out["psido_remainder_norms"] = psi
    out["para_remainder_norms"] = par
    factors = [pc.band_doubling_factor(v) for v in (ratios, tr, psi, par)]
    out["doubling_factors"] = factors
    cos = np.array([1.0, 0.0, 1.0], complex)
    rows = pc.constants_table(cos, i_max=3)
    out["constant_discrepancy"] = max(r[5] for r in rows)
    out["passed"] = bool(bony < 1e-13 and max(factors) <= 1.5 and out["constant_discrepancy"] < 1e-8)
    return out


def c14_parametrix() -> dict:
    ch = chart(32)
    z0 = nf.base_state(ch)
    zp = corrector_state(ch, flat=True) - z0
    p1 = nf.parametrix_coeffs(ch, z0 + zp, N=1)
    p2 = nf.parametrix_coeffs(ch, z0 + 2 * zp, N=1)
    scale = p2["a_norm"][1] / p1["a_norm"][1]
    return {"a1_scaling": scale, "remainder_slope": p1["slope"],
            "passed": abs(scale / 4 - 1) <= 0.1 and p1["slope"] <= -1.7}


CRITERIA = [
    (1, "q=0 closed forms", c01_zero_potential),
    (2, "Wronskian identity", c02_wronskian),
    (3, "one-gap Lame generator", c03_one_gap),
    (4, "H_n, G_n normalizations", c04_normalization),
    (5, "remainder boundedness f_n, W_n", c05_remainders),
    (6, "scalar expansions", c06_scalars),
    (7, "reversibility suite", c07_reversibility),
    (8, "two-smoothing of L_perp^S", c08_two_smoothing),
    (9, "symplectic corrector", c09_corrector),
    (10, "quadratic form and cubic remainder", c10_vanishing),
    (11, "operator identity", c11_identity),
    (12, "frequency cross-check", c12_frequency),
    (13, "paracalc bounds and constants", c13_paracalc),
    (14, "parametrix", c14_parametrix),
]

QUICK = (1, 2)


def run(number: int) -> Result:
    for num, name, fun in CRITERIA:
        if num == number:
            t0 = time.perf_counter()
            det = fun()
            return Result(num, name, bool(det.pop("passed")), det, time.perf_counter() - t0)
    raise KeyError(number)


def run_all(quick: bool = False, only=None):
    nums = [c[0] for c in CRITERIA]
    if quick:
        nums = list(QUICK)
    if only:
        nums = [n for n in nums if n in set(only)]
    return [run(n) for n in nums]
