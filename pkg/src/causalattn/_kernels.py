"""Compiled inner loops for ensemble integration.

Angles are laid out as ``(N, B)`` with replicates in the contiguous axis so the
innermost loops vectorize.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def drift_fourier(theta, decay, inv_z, coef, out):
    """Causal ALiBi drift through a truncated Fourier expansion of ``w'``.

    ``w'(x) = sum_n coef[n-1] sin(n x)``.  The weighted past sums
    ``P_n(j) = sum_{k<j} decay**(j-k) exp(-i n theta_k)`` obey
    ``P_n(j+1) = decay * (P_n(j) + exp(-i n theta_j))``, which makes each
    evaluation O(N K B).
    """
    n_tok, nb = theta.shape
    kmax = coef.shape[0]
    p_re = np.zeros((kmax, nb))
    p_im = np.zeros((kmax, nb))
    c1 = np.empty(nb)
    s1 = np.empty(nb)
    zr = np.empty(nb)
    zi = np.empty(nb)
    acc = np.empty(nb)
    for j in range(n_tok):
        for b in range(nb):
            c1[b] = np.cos(theta[j, b])
            s1[b] = np.sin(theta[j, b])
            zr[b] = 1.0
            zi[b] = 0.0
            acc[b] = 0.0
        for m in range(kmax):
            cm = coef[m]
            for b in range(nb):
                # z <- z * exp(i theta_j), so z = exp(i (m+1) theta_j)
                r = zr[b] * c1[b] - zi[b] * s1[b]
                i = zr[b] * s1[b] + zi[b] * c1[b]
                zr[b] = r
                zi[b] = i
                # Im(exp(i n theta_j) P_n) = sum_k decay^(j-k) sin(n (theta_j - theta_k))
                acc[b] += cm * (r * p_im[m, b] + i * p_re[m, b])
                # P_n <- decay (P_n + exp(-i n theta_j))
                p_re[m, b] = decay * (p_re[m, b] + r)
                p_im[m, b] = decay * (p_im[m, b] - i)
        w = inv_z[j]
        for b in range(nb):
            out[j, b] = w * acc[b]


@njit(cache=True, nogil=True)
def rk4_advance(theta, n_steps, dt, decay, inv_z, coef):
    """Advance ``theta`` in place by ``n_steps`` classical RK4 steps of size ``dt``."""
    n_tok, nb = theta.shape
    k1 = np.empty((n_tok, nb))
    k2 = np.empty((n_tok, nb))
    k3 = np.empty((n_tok, nb))
    k4 = np.empty((n_tok, nb))
    tmp = np.empty((n_tok, nb))
    h2 = 0.5 * dt
    h6 = dt / 6.0
    for _ in range(n_steps):
        drift_fourier(theta, decay, inv_z, coef, k1)
        for j in range(n_tok):
            for b in range(nb):
                tmp[j, b] = theta[j, b] + h2 * k1[j, b]
        drift_fourier(tmp, decay, inv_z, coef, k2)
        for j in range(n_tok):
            for b in range(nb):
                tmp[j, b] = theta[j, b] + h2 * k2[j, b]
        drift_fourier(tmp, decay, inv_z, coef, k3)
        for j in range(n_tok):
            for b in range(nb):
                tmp[j, b] = theta[j, b] + dt * k3[j, b]
        drift_fourier(tmp, decay, inv_z, coef, k4)
        for j in range(n_tok):
            for b in range(nb):
                theta[j, b] += h6 * (k1[j, b] + 2.0 * (k2[j, b] + k3[j, b]) + k4[j, b])
