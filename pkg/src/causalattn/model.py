"""Model parameters, interaction kernel, ALiBi weights and the limiting graphon.

Fourier coefficients of laws on the torus use the character convention
``f_hat(n) = E[exp(-i n theta)]``, so the uniform law has ``f_hat = 1{n=0}`` and
the interaction kernel ``exp(beta cos theta)`` has coefficients ``I_n(beta)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, DomainError, TruncationError
from .special import iv_series

#: Below this magnitude of lambda the exact lambda = 0 formulas are used.
LAMBDA_EPS = 1e-8


@dataclass(frozen=True)
class ModelParams:
    """Physical configuration ``(beta, lambda, N, M)`` plus the time horizon."""

    beta: float
    lam: float
    n_tokens: int
    vocab_size: int
    t_final: float

    def __post_init__(self):
        if not self.beta > 0:
            raise ConfigError(f"beta must be > 0, got {self.beta}")
        if int(self.n_tokens) != self.n_tokens or self.n_tokens < 1:
            raise ConfigError(f"n_tokens must be an integer >= 1, got {self.n_tokens}")
        if int(self.vocab_size) != self.vocab_size or self.vocab_size < 2:
            raise ConfigError(f"vocab_size must be an integer >= 2, got {self.vocab_size}")
        if not self.t_final >= 0:
            raise ConfigError(f"t_final must be >= 0, got {self.t_final}")
        if not math.isfinite(self.lam):
            raise ConfigError(f"lambda must be finite, got {self.lam}")

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        required = ("beta", "lambda", "n_tokens", "vocab_size", "t_final")
        missing = [k for k in required if k not in d]
        if missing:
            raise ConfigError(f"missing model parameters: {', '.join(missing)}")
        return cls(
            beta=float(d["beta"]),
            lam=float(d["lambda"]),
            n_tokens=int(d["n_tokens"]),
            vocab_size=int(d["vocab_size"]),
            t_final=float(d["t_final"]),
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d


def interaction_w(theta, beta: float):
    """``exp(beta cos theta)``."""
    return np.exp(beta * np.cos(theta))


def interaction_w_prime(theta, beta: float):
    """Derivative of the interaction kernel, ``-beta sin theta exp(beta cos theta)``."""
    return -beta * np.sin(theta) * np.exp(beta * np.cos(theta))


def fourier_w(n: int, beta: float) -> float:
    """Fourier coefficient of the interaction kernel, ``I_|n|(beta)``."""
    return iv_series(abs(int(n)), beta)


def a_coeff(n: int, beta: float) -> float:
    """Mode growth rate ``n**2 I_n(beta)`` of the uniform-case correlation equation."""
    n = int(n)
    return float(n * n) * fourier_w(n, beta)


def _a_tail_bound(n: int, beta: float) -> float:
    # I_n(z) <= (z/2)^n / n! * exp(z^2/4)
    return n * n * math.exp(n * math.log(beta / 2) - math.lgamma(n + 1) + beta * beta / 4)


def sup_a(beta: float, n_max: int) -> tuple[float, int]:
    """Return ``(max a_n, argmax)`` over ``1 <= n <= n_max`` with a certified tail.

    Raises
    ------
    TruncationError
        If the range is empty or the bound on the omitted modes is not below
        the maximum found.
    """
    if n_max < 1:
        raise TruncationError(f"n_max must be >= 1, got {n_max}")
    values = [a_coeff(n, beta) for n in range(1, n_max + 1)]
    best = int(np.argmax(values))
    top = values[best]
    m = n_max + 1
    # the bound decreases in m once (m+1)/m^2 * beta/2 < 1
    decreasing = (m + 1) ** 2 / (m * m) * (beta / 2) / (m + 1) < 1.0
    if not decreasing or _a_tail_bound(m, beta) >= top:
        raise TruncationError(
            f"tail bound at n={m} does not certify the supremum; increase n_max"
        )
    return top, best + 1


def _normalizers(n_tokens: int, lam: float) -> np.ndarray:
    """``Z_{N,j}`` for j = 1..N (entry 0 is the empty sum)."""
    m = np.arange(1, n_tokens)
    z = np.zeros(n_tokens)
    z[1:] = np.cumsum(np.exp(-lam * m / n_tokens))
    return z


def alibi_weights(params: ModelParams) -> np.ndarray:
    """Row-normalized causal ALiBi weights ``omega[j-1, k-1]``; row 1 is zero."""
    n = params.n_tokens
    j = np.arange(1, n + 1)[:, None]
    k = np.arange(1, n + 1)[None, :]
    z = _normalizers(n, params.lam)
    lag = j - k
    raw = np.where(lag > 0, np.exp(-params.lam * np.maximum(lag, 0) / n), 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(z[:, None] > 0, raw / np.where(z > 0, z, 1.0)[:, None], 0.0)
    return w


def alibi_column_sums(params: ModelParams) -> np.ndarray:
    """Column sums ``sum_j omega[j, k]`` in O(N) via the factorization of the weights."""
    n = params.n_tokens
    idx = np.arange(1, n + 1)
    z = _normalizers(n, params.lam)
    u = np.exp(params.lam * idx / n)
    v = np.zeros(n)
    v[1:] = np.exp(-params.lam * idx[1:] / n) / z[1:]
    # sum over j > k of v_j
    suffix = np.concatenate([np.cumsum(v[::-1])[::-1][1:], [0.0]])
    return u * suffix


def graphon_k(sigma, sigma_prime, lam: float):
    """Limiting directed graphon ``lam exp(-lam (s - s')) / (1 - exp(-lam s)) 1{s' < s}``."""
    sigma = np.asarray(sigma, dtype=float)
    sigma_prime = np.asarray(sigma_prime, dtype=float)
    if np.any(sigma <= 0):
        raise DomainError("sigma must be > 0")
    if abs(lam) < LAMBDA_EPS:
        val = 1.0 / sigma + 0.0 * sigma_prime
    else:
        val = lam * np.exp(-lam * (sigma - sigma_prime)) / -np.expm1(-lam * sigma)
    out = np.where(sigma_prime < sigma, val, 0.0)
    return out if out.ndim else float(out)


def graphon_prefactor(sigma, lam: float):
    """``k_lam(s, s') = prefactor(s) * exp(lam s')`` for ``s' < s``."""
    sigma = np.asarray(sigma, dtype=float)
    if abs(lam) < LAMBDA_EPS:
        return 1.0 / sigma
    return lam / np.expm1(lam * sigma)


def token_index(sigma: float, n_tokens: int) -> int:
    """1-based token index ``ceil(N sigma)``, robust to rounding in ``N sigma``."""
    if not 0 < sigma <= 1 + 1e-12:
        raise DomainError(f"sigma must lie in (0, 1], got {sigma}")
    x = n_tokens * sigma
    j = math.ceil(x - 1e-9 * max(1.0, x))
    return min(max(j, 1), n_tokens)


def graphon_KN(sigma: float, sigma_prime: float, params: ModelParams) -> float:
    """Rescaled step kernel ``N omega_{ceil(N s), ceil(N s')}``."""
    if not (0 < sigma <= 1 and 0 < sigma_prime <= 1):
        raise DomainError("sigma and sigma_prime must lie in (0, 1]")
    n = params.n_tokens
    j = token_index(sigma, n)
    k = token_index(sigma_prime, n)
    if k >= j:
        return 0.0
    z = _normalizers(n, params.lam)[j - 1]
    return n * math.exp(-params.lam * (j - k) / n) / z


def _abs_diff_integral(c, pref, lam, a, b):
    """Exact ``int_a^b |c - pref exp(lam s)| ds`` for arrays of intervals."""
    c, pref, a, b = np.broadcast_arrays(*map(np.asarray, (c, pref, a, b)))

    def prim(s):
        # antiderivative of pref * exp(lam s)
        if abs(lam) < LAMBDA_EPS:
            return pref * s
        return pref * np.exp(lam * s) / lam

    def signed(lo, hi):
        return c * (hi - lo) - (prim(hi) - prim(lo))

    if abs(lam) < LAMBDA_EPS:
        cross = np.full(c.shape, np.nan)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            cross = np.log(c / pref) / lam
    inside = np.isfinite(cross) & (cross > a) & (cross < b)
    x = np.where(inside, cross, a)
    split = np.abs(signed(a, x)) + np.abs(signed(x, b))
    whole = np.abs(signed(a, b))
    return np.where(inside, split, whole)


def graphon_L1_error(sigma: float, params: ModelParams) -> float:
    """``int_0^1 |K_N(sigma, .) - k_lam(sigma, .)|`` by exact piecewise integration."""
    if not 0 < sigma <= 1:
        raise DomainError(f"sigma must lie in (0, 1], got {sigma}")
    n = params.n_tokens
    lam = params.lam
    j = token_index(sigma, n)
    pref = float(graphon_prefactor(sigma, lam))
    z = _normalizers(n, lam)[j - 1]
    total = 0.0
    if j > 1:
        k = np.arange(1, j)
        c = n * np.exp(-lam * (j - k) / n) / z
        total += float(np.sum(_abs_diff_integral(c, pref, lam, (k - 1) / n, k / n)))
    # no step mass on ((j-1)/N, sigma]
    lo = (j - 1) / n
    if abs(lam) < LAMBDA_EPS:
        total += pref * (sigma - lo)
    else:
        total += pref * (math.exp(lam * sigma) - math.exp(lam * lo)) / lam
    return total


class TrigPoly:
    """Test function ``phi(theta) = sum_m c_m exp(i m theta)`` given by finitely many coefficients."""

    def __init__(self, coeffs: dict):
        self.coeffs = {int(m): complex(c) for m, c in coeffs.items() if c != 0}

    @classmethod
    def from_dict(cls, d) -> "TrigPoly":
        return cls({int(k): complex(v) if not isinstance(v, (list, tuple)) else complex(*v) for k, v in d.items()})

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.zeros(theta.shape, dtype=complex)
        for m, c in self.coeffs.items():
            out += c * np.exp(1j * m * theta)
        return out

    def hat(self, n: int) -> complex:
        return self.coeffs.get(int(n), 0.0)

    @property
    def degree(self) -> int:
        return max((abs(m) for m in self.coeffs), default=0)

    @property
    def is_real(self) -> bool:
        return all(np.isclose(self.coeffs.get(-m, 0), np.conj(c), rtol=0, atol=0) for m, c in self.coeffs.items())

    def to_dict(self) -> dict:
        return {str(m): [c.real, c.imag] for m, c in sorted(self.coeffs.items())}

    def __repr__(self):
        return f"TrigPoly({self.coeffs})"
