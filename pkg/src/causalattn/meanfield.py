"""Spectral solvers for the layered mean-field, autocorrelation and cross-correlation limits.

Fields are stored as Fourier coefficients ``F[i, n + n_max]`` on the uniform
midpoint grid ``sigma_i = (i + 1/2) / S``, plus one extra output row at
``sigma = 1`` that is advanced by the same equations but never feeds back
(every integral only reaches strictly smaller sigma).

Positional integrals ``int_L^sigma k_lam(sigma, s) F(s) ds`` use the
factorization ``k_lam(sigma, s) = pref(sigma) exp(lam s)``: the field is
interpolated piecewise-linearly between midpoints (linearly extrapolated on
the half cells at the ends) and integrated exactly against ``exp(lam s)``, so
every application is a prefix sum.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .errors import DomainError, TruncationWarning
from .model import ModelParams, TrigPoly, fourier_w, graphon_k, graphon_prefactor

DEFAULT_S = 512
DEFAULT_N_MAX = 32
DEFAULT_DT = 1e-3
TAIL_THRESHOLD = 1e-6


def _phi1(z: float) -> float:
    """``(e^z - 1)/z``."""
    if abs(z) < 0.5:
        term, total = 1.0, 1.0
        for k in range(1, 30):
            term *= z / (k + 1)
            total += term
        return total
    return math.expm1(z) / z


def _phi2(z: float) -> float:
    """``(z e^z - e^z + 1)/z^2 = int_0^1 e^{z u} u du``."""
    if abs(z) < 0.5:
        # sum_k z^k / (k! (k+2))
        term, total = 1.0, 0.5
        for k in range(1, 30):
            term *= z / k
            total += term / (k + 2)
        return total
    return (z * math.exp(z) - math.expm1(z)) / (z * z)


@dataclass
class SpectralField:
    """Complex Fourier coefficients on a sigma grid.

    ``coeffs`` has shape ``(len(sigma), 2 n_max + 1)``; column ``n + n_max``
    holds frequency ``n``.  ``sigma`` is the midpoint grid, optionally followed
    by the output point ``1.0``.
    """

    sigma: np.ndarray
    n_max: int
    coeffs: np.ndarray
    t: float = 0.0

    @property
    def n_cells(self) -> int:
        return int(np.sum(self.sigma < 1.0))

    def mode(self, n: int) -> np.ndarray:
        if abs(n) > self.n_max:
            return np.zeros(len(self.sigma), dtype=complex)
        return self.coeffs[:, n + self.n_max]

    def at(self, sigma: float, n: int) -> complex:
        """Coefficient at a grid point (exact match) or by linear interpolation."""
        hit = np.nonzero(np.abs(self.sigma - sigma) < 1e-12)[0]
        m = self.mode(n)
        if hit.size:
            return complex(m[hit[0]])
        return complex(np.interp(sigma, self.sigma, m.real) + 1j * np.interp(sigma, self.sigma, m.imag))

    def midpoints(self) -> "SpectralField":
        s = self.n_cells
        return SpectralField(self.sigma[:s], self.n_max, self.coeffs[:s], self.t)

    def tail_indicator(self) -> float:
        return float(np.max(np.abs(self.coeffs[:, [0, -1]])))

    def is_hermitian(self) -> bool:
        return bool(np.array_equal(self.coeffs, np.conj(self.coeffs[:, ::-1])))

    @classmethod
    def from_function(cls, fn, n_cells: int = DEFAULT_S, n_max: int = DEFAULT_N_MAX, with_edge: bool = True):
        """Build a field from ``fn(sigma_array, n) -> coefficients``."""
        sigma = sigma_grid(n_cells, with_edge)
        coeffs = np.zeros((len(sigma), 2 * n_max + 1), dtype=complex)
        for n in range(-n_max, n_max + 1):
            coeffs[:, n + n_max] = fn(sigma, n)
        return cls(sigma, n_max, coeffs)

    @classmethod
    def uniform(cls, n_cells: int = DEFAULT_S, n_max: int = DEFAULT_N_MAX, with_edge: bool = True):
        return cls.from_function(lambda s, n: np.full(s.shape, 1.0 if n == 0 else 0.0), n_cells, n_max, with_edge)

    @classmethod
    def dirac(cls, angle: float, n_cells: int = DEFAULT_S, n_max: int = DEFAULT_N_MAX, with_edge: bool = True):
        return cls.from_function(lambda s, n: np.full(s.shape, np.exp(-1j * n * angle)), n_cells, n_max, with_edge)

    def rows(self):
        """Yield ``(sigma, n, value)`` for CSV export."""
        for i, s in enumerate(self.sigma):
            for c, n in enumerate(range(-self.n_max, self.n_max + 1)):
                yield float(s), n, complex(self.coeffs[i, c])


def sigma_grid(n_cells: int, with_edge: bool = True) -> np.ndarray:
    mid = (np.arange(n_cells) + 0.5) / n_cells
    return np.append(mid, 1.0) if with_edge else mid


class KernelQuadrature:
    """Discretized ``F -> int_L^sigma k_lam(sigma, s) F(s) ds`` on the midpoint grid.

    ``lower`` is the lower limit ``L`` in ``[0, 1)``.  The partial cell from
    ``L`` to the first midpoint above it is integrated exactly against the
    linear extrapolation of the field, so ``L`` need not be a grid point.
    Results are returned for every midpoint, plus ``sigma = 1`` when
    ``with_edge`` is set; rows with ``sigma_i <= L`` are zero.
    """

    def __init__(self, n_cells: int, lam: float, lower: float = 0.0, with_edge: bool = True):
        if n_cells < 2:
            raise DomainError("need at least two cells")
        s = n_cells
        h = 1.0 / s
        mid = (np.arange(s) + 0.5) * h
        if not 0.0 <= lower < mid[-1]:
            raise DomainError(f"lower limit {lower} is not covered by a grid of {n_cells} cells")
        m = int(np.searchsorted(mid, lower, side="right"))
        self.n_cells = n_cells
        self.lam = lam
        self.lower = lower
        self.first = m
        self.with_edge = with_edge
        z = lam * h
        p1, p2 = _phi1(z), _phi2(z)
        ea = np.exp(lam * mid[:-1])
        # segment [sigma_j, sigma_{j+1}]: weights on F_j and F_{j+1}
        self._wl = ea * h * (p1 - p2)
        self._wr = ea * h * p2
        # partial cell [L, sigma_m] of length d, linear extrapolation through F_m, F_{m+1}
        d = mid[m] - lower
        q1, q2 = _phi1(lam * d), _phi2(lam * d)
        el = math.exp(lam * lower)
        j0 = el * d * q1
        j1 = el * (d * d / h) * (q2 - q1)
        self._head = (j0 - j1, j1) if m + 1 < s else (j0, 0.0)
        # half cell [sigma_{S-1}, 1], linear extrapolation through F_{S-2}, F_{S-1}
        r1, r2 = _phi1(z / 2), _phi2(z / 2)
        ek = math.exp(lam * mid[-1])
        k0 = ek * (h / 2) * r1
        k1 = ek * (h / 4) * r2
        self._tail = (k0 + k1, -k1)
        self._pref_mid = np.asarray(graphon_prefactor(mid, lam), dtype=float)
        self._pref_one = float(graphon_prefactor(1.0, lam))

    def apply(self, f: np.ndarray) -> np.ndarray:
        """Apply to ``f`` of shape ``(S, ...)`` or ``(S + 1, ...)`` (the last row is ignored)."""
        s, m = self.n_cells, self.first
        f = f[:s]
        head = self._head[0] * f[m] + (self._head[1] * f[m + 1] if m + 1 < s else 0.0)
        shape = (-1,) + (1,) * (f.ndim - 1)
        seg = self._wl[m:].reshape(shape) * f[m:-1] + self._wr[m:].reshape(shape) * f[m + 1:]
        cum = np.empty((s - m,) + f.shape[1:], dtype=np.result_type(f, float))
        cum[0] = head
        np.cumsum(seg, axis=0, out=cum[1:])
        cum[1:] += head
        out_rows = s + 1 if self.with_edge else s
        out = np.zeros((out_rows,) + f.shape[1:], dtype=cum.dtype)
        out[m:s] = self._pref_mid[m:].reshape(shape) * cum
        if self.with_edge:
            last = cum[-1] + self._tail[0] * f[s - 1] + self._tail[1] * f[s - 2]
            out[s] = self._pref_one * last
        return out

    def matrix(self) -> np.ndarray:
        """Dense quadrature matrix (for inspection and tests)."""
        eye = np.eye(self.n_cells)
        return self.apply(eye)


def _coupling(h: np.ndarray, v: np.ndarray, wprime_hat: np.ndarray, n_max: int) -> np.ndarray:
    """Fourier coefficients of ``-d/dtheta (H * (w' * V))`` truncated to ``|n| <= n_max``.

    Equals ``n * sum_xi H(n - xi) xi I_xi V(xi)`` with both factors truncated.
    ``wprime_hat[xi + n_max] = xi I_xi(beta)``.
    """
    length = scipy.fft.next_fast_len(3 * n_max + 1)
    u = v * wprime_hat

    def pad(a):
        buf = np.zeros(a.shape[:-1] + (length,), dtype=complex)
        buf[..., : n_max + 1] = a[..., n_max:]
        buf[..., length - n_max:] = a[..., :n_max]
        return buf

    conv = scipy.fft.ifft(scipy.fft.fft(pad(h), axis=-1) * scipy.fft.fft(pad(u), axis=-1), axis=-1)
    res = np.concatenate([conv[..., length - n_max:], conv[..., : n_max + 1]], axis=-1)
    n = np.arange(-n_max, n_max + 1)
    return n * res


def _hermitize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.conj(a[:, ::-1]))


def _rk4(state, rhs, dt: float, t_end: float):
    """Fixed-step RK4 over a tuple of arrays, landing exactly on ``t_end``."""
    n_full = int(math.floor(t_end / dt + 1e-9))
    steps = [dt] * n_full
    rest = t_end - n_full * dt
    if rest > 1e-12 * max(1.0, t_end):
        steps.append(rest)
    for h in steps:
        k1 = rhs(state)
        k2 = rhs(tuple(x + 0.5 * h * k for x, k in zip(state, k1)))
        k3 = rhs(tuple(x + 0.5 * h * k for x, k in zip(state, k2)))
        k4 = rhs(tuple(x + h * k for x, k in zip(state, k3)))
        state = tuple(x + (h / 6) * (a + 2 * b + 2 * c + d) for x, a, b, c, d in zip(state, k1, k2, k3, k4))
    return state


def check_sigma0(sigma0: float, n_cells: int) -> None:
    if not 0 < sigma0 < 1:
        raise DomainError(f"sigma0 must lie in (0, 1), got {sigma0}")
    if sigma0 >= 1.0 - 0.5 / n_cells:
        raise DomainError(f"sigma0={sigma0} is not covered by a grid of {n_cells} cells")


class LimitSolver:
    """Co-evolves the mean field ``f``, the autocorrelation ``A`` and the cross-correlation ``C``."""

    def __init__(self, params: ModelParams, n_cells: int, n_max: int):
        self.params = params
        self.n_cells = n_cells
        self.n_max = n_max
        self.q0 = KernelQuadrature(n_cells, params.lam)
        xi = np.arange(-n_max, n_max + 1)
        self.wprime_hat = xi * np.array([fourier_w(x, params.beta) for x in xi])

    def _meanfield_rhs(self, f, real):
        v = self.q0.apply(f)
        out = _coupling(f, v, self.wprime_hat, self.n_max)
        return (_hermitize(out) if real else out), v

    def evolve(self, f0: SpectralField, dt: float, t: float, phi: TrigPoly | None = None, sigma0: float | None = None):
        """Advance ``f`` (and ``A``, ``C`` when requested) to time ``t``."""
        if f0.n_max != self.n_max or f0.n_cells != self.n_cells or len(f0.sigma) != self.n_cells + 1:
            raise DomainError("initial field does not match the solver grid (with sigma=1 row)")
        f_real = f0.is_hermitian()
        state = [f0.coeffs.copy()]
        if phi is not None:
            a_init = autocorr_initial(f0, phi)
            state.append(a_init.coeffs)
            a_real = f_real and phi.is_real
        qc = None
        if sigma0 is not None:
            if phi is None:
                raise ValueError("cross-correlation needs a test function")
            check_sigma0(sigma0, self.n_cells)
            qc = KernelQuadrature(self.n_cells, self.params.lam, lower=sigma0)
            k_src = np.asarray(graphon_k(f0.sigma, sigma0, self.params.lam), dtype=float)[:, None]
            # linear interpolation weights of the autocorrelation at sigma0
            mids = f0.sigma[: self.n_cells]
            src_hi = int(np.clip(np.searchsorted(mids, sigma0), 1, self.n_cells - 1))
            src_w = (sigma0 - mids[src_hi - 1]) / (mids[src_hi] - mids[src_hi - 1])
            state.append(np.zeros_like(f0.coeffs))
        nm = self.n_max
        wh = self.wprime_hat

        def rhs(st):
            f = st[0]
            df, vf = self._meanfield_rhs(f, f_real)
            out = [df]
            if phi is not None:
                a = st[1]
                da = _coupling(a, vf, wh, nm)
                out.append(_hermitize(da) if a_real else da)
            if qc is not None:
                c = st[2]
                a_src = (1 - src_w) * a[src_hi - 1] + src_w * a[src_hi]
                dc = _coupling(f, qc.apply(c), wh, nm) + _coupling(c, vf, wh, nm)
                dc = dc + _coupling(f, k_src * a_src[None, :], wh, nm)
                out.append(_hermitize(dc) if a_real else dc)
            return tuple(out)

        final = _rk4(tuple(state), rhs, dt, t)
        fields = [SpectralField(f0.sigma.copy(), nm, x, t) for x in final]
        for fld in fields:
            if fld.tail_indicator() > TAIL_THRESHOLD:
                warnings.warn(
                    f"spectral tail {fld.tail_indicator():.2e} exceeds {TAIL_THRESHOLD:g}; raise n_max",
                    TruncationWarning,
                    stacklevel=3,
                )
                break
        return fields


def autocorr_initial(f0: SpectralField, phi: TrigPoly) -> SpectralField:
    """Spectrum of ``f0 (phi - int phi f0)``."""
    nm = f0.n_max
    coeffs = np.zeros_like(f0.coeffs)
    mean = np.zeros(len(f0.sigma), dtype=complex)
    for m, c in phi.coeffs.items():
        mean += c * f0.mode(-m)
    for n in range(-nm, nm + 1):
        col = -f0.mode(n) * mean
        for m, c in phi.coeffs.items():
            col = col + c * f0.mode(n - m)
        coeffs[:, n + nm] = col
    if phi.is_real and f0.is_hermitian():
        # the sums above run in a different order for n and -n
        coeffs = _hermitize(coeffs)
    return SpectralField(f0.sigma.copy(), nm, coeffs, f0.t)


def evolve_meanfield(f0: SpectralField, params: ModelParams, dt: float = DEFAULT_DT, t: float | None = None) -> SpectralField:
    """Mean-field coefficients at time ``t`` (default ``params.t_final``)."""
    t = params.t_final if t is None else t
    return LimitSolver(params, f0.n_cells, f0.n_max).evolve(f0, dt, t)[0]


def evolve_autocorr(f0: SpectralField, phi: TrigPoly, params: ModelParams, dt: float = DEFAULT_DT, t: float | None = None) -> SpectralField:
    """Limiting autocorrelation spectrum, co-evolved with the mean field from ``f0``."""
    t = params.t_final if t is None else t
    return LimitSolver(params, f0.n_cells, f0.n_max).evolve(f0, dt, t, phi=phi)[1]


def evolve_crosscorr(
    f0: SpectralField,
    phi: TrigPoly,
    params: ModelParams,
    sigma0: float,
    dt: float = DEFAULT_DT,
    t: float | None = None,
) -> SpectralField:
    """Limiting cross-correlation spectrum for source position ``sigma0``."""
    t = params.t_final if t is None else t
    return LimitSolver(params, f0.n_cells, f0.n_max).evolve(f0, dt, t, phi=phi, sigma0=sigma0)[2]


def volterra_g_numeric(
    a: float,
    lam: float,
    sigma0: float,
    t: float,
    dt: float = DEFAULT_DT,
    n_cells: int = 2048,
) -> tuple[np.ndarray, np.ndarray]:
    """Time-step ``dg/dt = a (k(s, s0) + int_{s0}^s k(s, s') g(s') ds')`` from ``g = 0``.

    Returns ``(sigma, g)`` on the midpoint grid followed by ``sigma = 1``.
    """
    if a < 0:
        raise DomainError("a must be >= 0")
    check_sigma0(sigma0, n_cells)
    sigma = sigma_grid(n_cells)
    q = KernelQuadrature(n_cells, lam, lower=sigma0)
    src = a * np.asarray(graphon_k(sigma, sigma0, lam), dtype=float)

    def rhs(st):
        return (src + a * q.apply(st[0]),)

    (g,) = _rk4((np.zeros(len(sigma)),), rhs, dt, t)
    return sigma, g
