"""Fixed-step RK4 for -y'' + q y = lam y together with its lam-derivatives.

State layout per fundamental solution (6 complex numbers):
    y, y', d_lam y, d_lam y', d_lam^2 y, d_lam^2 y'
The first block starts from (1, 0), the second from (0, 1).
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _rhs(q, lam, u, du):
    v = q - lam
    for b in (0, 6):
        y = u[b]
        a = u[b + 2]
        du[b] = u[b + 1]
        du[b + 1] = v * y
        du[b + 2] = u[b + 3]
        du[b + 3] = v * a - y
        du[b + 4] = u[b + 5]
        du[b + 5] = v * u[b + 4] - 2.0 * a


@njit(cache=True)
def _march(lam, qhalf, nsteps, stride, every, out):
    # qhalf holds q on a grid of spacing h/(2*stride); every: steps between samples
    h = 1.0 / nsteps
    u = np.zeros(12, dtype=np.complex128)
    u[0] = 1.0
    u[7] = 1.0
    k1 = np.empty(12, dtype=np.complex128)
    k2 = np.empty(12, dtype=np.complex128)
    k3 = np.empty(12, dtype=np.complex128)
    k4 = np.empty(12, dtype=np.complex128)
    tmp = np.empty(12, dtype=np.complex128)
    for i in range(12):
        out[0, i] = u[i]
    row = 1
    for s in range(nsteps):
        i0 = 2 * stride * s
        q0 = qhalf[i0]
        qm = qhalf[i0 + stride]
        q1 = qhalf[i0 + 2 * stride]
        _rhs(q0, lam, u, k1)
        for i in range(12):
            tmp[i] = u[i] + 0.5 * h * k1[i]
        _rhs(qm, lam, tmp, k2)
        for i in range(12):
            tmp[i] = u[i] + 0.5 * h * k2[i]
        _rhs(qm, lam, tmp, k3)
        for i in range(12):
            tmp[i] = u[i] + h * k3[i]
        _rhs(q1, lam, tmp, k4)
        for i in range(12):
            u[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        if (s + 1) % every == 0:
            for i in range(12):
                out[row, i] = u[i]
            row += 1


@njit(cache=True)
def solve_batch(lams, qhalf, nsteps_coarse, nsamples):
    """Richardson-extrapolated RK4 at each lam.

    qhalf must hold q at spacing 1/(4*nsteps_coarse) including x = 1.
    Returns the states, shape (len(lams), nsamples + 1, 12), and for each lam
    the extrapolation correction |fine - coarse|/15 of the endpoint values.
    """
    nl = lams.shape[0]
    res = np.empty((nl, nsamples + 1, 12), dtype=np.complex128)
    coarse = np.empty((nsamples + 1, 12), dtype=np.complex128)
    fine = np.empty((nsamples + 1, 12), dtype=np.complex128)
    err = np.zeros(nl)
    ec = nsteps_coarse // nsamples
    for j in range(nl):
        _march(lams[j], qhalf, nsteps_coarse, 2, ec, coarse)
        _march(lams[j], qhalf, 2 * nsteps_coarse, 1, 2 * ec, fine)
        for r in range(nsamples + 1):
            for i in range(12):
                res[j, r, i] = fine[r, i] + (fine[r, i] - coarse[r, i]) / 15.0
        for i in (0, 1, 6, 7):
            e = abs(fine[nsamples, i] - coarse[nsamples, i]) / 15.0
            if e > err[j]:
                err[j] = e
    return res, err


def q_on_grid(coeffs, modes, npts):
    """q at x = j/(npts-1), j = 0..npts-1, by a real trig sum."""
    x = np.linspace(0.0, 1.0, npts)
    if len(modes) == 1:
        return np.zeros(npts)
    pos = modes > 0
    n = modes[pos]
    c = coeffs[pos]
    vals = np.zeros(npts)
    for nn, cc in zip(n, c):
        ph = 2 * np.pi * nn * x
        vals += 2 * (cc.real * np.cos(ph) - cc.imag * np.sin(ph))
    return vals
