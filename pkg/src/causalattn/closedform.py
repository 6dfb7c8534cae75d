"""Closed-form correlation profile and the lost-in-the-middle score.

For iid uniform prompts the cross-correlation of mode ``n`` is ``g_{a_n}``,
where ``g_a`` solves the Volterra-Hardy equation

    dg/dt = a (k(s, s0) + int_{s0}^{s} k(s, s') g(s') ds'),   g(0) = 0,

and is given explicitly by ``pref(s, s0) * psi_{a t}(Y(s; s0))`` with
``psi_c(y) = sqrt(c/y) I_1(2 sqrt(c y))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConditionError, DomainError
from .model import LAMBDA_EPS, a_coeff, sup_a
from .special import i0_sqrt_series, psi_series

SQRT3 = math.sqrt(3.0)
CONVEXITY_LIMIT = 3.0 - SQRT3
SERIES_REL_TOL = 1e-14


def psi_c(c, y):
    """``sqrt(c/y) I_1(2 sqrt(c y))`` through its power series, regular at ``y = 0``."""
    c_arr = np.asarray(c, dtype=float)
    y_arr = np.asarray(y, dtype=float)
    if np.any(c_arr < 0) or np.any(y_arr < 0):
        raise DomainError("psi_c needs c, y >= 0")
    return psi_series(c_arr, y_arr)


def Y_map(sigma, sigma0, lam: float):
    """``log((e^{lam s} - 1)/(e^{lam s0} - 1))``; ``log(s/s0)`` when ``lam = 0``."""
    sigma = np.asarray(sigma, dtype=float)
    sigma0 = np.asarray(sigma0, dtype=float)
    if np.any(sigma0 <= 0) or np.any(sigma0 > sigma):
        raise DomainError("need 0 < sigma0 <= sigma")
    if abs(lam) < LAMBDA_EPS:
        out = np.log(sigma / sigma0)
    else:
        out = np.log(np.expm1(lam * sigma) / np.expm1(lam * sigma0))
    out = np.maximum(out, 0.0)
    return out if out.ndim else float(out)


def _prefactor(sigma, sigma0, lam):
    if abs(lam) < LAMBDA_EPS:
        return 1.0 / sigma
    return lam * np.exp(-lam * (sigma - sigma0)) / -np.expm1(-lam * sigma)


def g_closed(a, t, sigma, sigma0, lam: float):
    """Explicit solution ``g_a(t, sigma; sigma0)`` of the Volterra-Hardy equation."""
    sigma = np.asarray(sigma, dtype=float)
    sigma0 = np.asarray(sigma0, dtype=float)
    if np.any(sigma0 <= 0) or np.any(sigma0 >= sigma) or np.any(sigma > 1):
        raise DomainError("need 0 < sigma0 < sigma <= 1")
    if np.any(np.asarray(a) < 0) or np.any(np.asarray(t) < 0):
        raise DomainError("need a, t >= 0")
    y = Y_map(sigma, sigma0, lam)
    out = _prefactor(sigma, sigma0, lam) * psi_c(np.asarray(a) * np.asarray(t), y)
    return out if np.ndim(out) else float(out)


def g_closed_dt(a, t, sigma, sigma0, lam: float):
    """Analytic time derivative ``pref * a * I_0(2 sqrt(a t Y))``."""
    y = Y_map(sigma, sigma0, lam)
    out = _prefactor(np.asarray(sigma, float), np.asarray(sigma0, float), lam) * a * i0_sqrt_series(a * t * y)
    return out if np.ndim(out) else float(out)


def goursat_U(a, t, y, lam: float, sigma0: float):
    """``U(t, y) = e^{lam s0} I_0(2 sqrt(a t y))``, solution of ``U_ty = a U``."""
    return math.exp(lam * sigma0) * i0_sqrt_series(np.asarray(a * t * np.asarray(y), dtype=float))


@dataclass
class ScoreResult:
    value: float
    n_terms: int
    last_term: float


def _mode_weight(n, vocab_size):
    return math.exp(-(math.pi**2) * n * n / (2.0 * vocab_size**2))


def _score_terms(beta, lam, vocab_size, t, sigma0, a_max):
    """Yield the n-th summand together with a bound on everything after it."""
    y = Y_map(1.0, sigma0, lam)
    pref = _prefactor(1.0, sigma0, lam)
    # g is increasing in a, so g_{a_max} bounds every remaining mode
    g_cap = pref * psi_c(a_max * t, y)
    n = 1
    while True:
        term = _mode_weight(n, vocab_size) * pref * psi_c(a_coeff(n, beta) * t, y)
        # sum_{m>n} w_m <= w_{n+1} / (1 - w_{n+2}/w_{n+1})
        w1 = _mode_weight(n + 1, vocab_size)
        q = _mode_weight(n + 2, vocab_size) / w1
        yield n, term, w1 * g_cap / (1.0 - q)
        n += 1


def score_S_detail(beta: float, lam: float, vocab_size: int, t: float, sigma0: float) -> ScoreResult:
    """Truncated score with the number of modes used."""
    if not 0 < sigma0 < 1:
        raise DomainError(f"sigma0 must lie in (0, 1), got {sigma0}")
    if t < 0:
        raise DomainError("t must be >= 0")
    if t == 0:
        return ScoreResult(0.0, 0, 0.0)
    a_max, _ = sup_a(beta, 64)
    total = 0.0
    for n, term, tail in _score_terms(beta, lam, vocab_size, t, sigma0, a_max):
        total += term
        if tail <= SERIES_REL_TOL * total:
            return ScoreResult(total, n, term)


def score_S(beta: float, lam: float, vocab_size: int, t: float, sigma0: float) -> float:
    """Leading correction ``S_t(sigma0) = sum_{n>=1} exp(-pi^2 n^2 / (2 M^2)) g_{a_n}(t, 1; sigma0)``."""
    return score_S_detail(beta, lam, vocab_size, t, sigma0).value


def score_profile(beta: float, lam: float, vocab_size: int, t: float, sigma0) -> tuple[np.ndarray, int]:
    """Vectorized score over an array of ``sigma0``; returns values and the max modes used."""
    s0 = np.asarray(sigma0, dtype=float)
    if np.any(s0 <= 0) or np.any(s0 >= 1):
        raise DomainError("sigma0 must lie in (0, 1)")
    if t == 0:
        return np.zeros_like(s0), 0
    a_max, _ = sup_a(beta, 64)
    y = Y_map(1.0, s0, lam)
    pref = _prefactor(1.0, s0, lam)
    g_cap = pref * psi_c(a_max * t, y)
    total = np.zeros_like(s0)
    n = 1
    while True:
        total += _mode_weight(n, vocab_size) * pref * psi_c(a_coeff(n, beta) * t, y)
        w1 = _mode_weight(n + 1, vocab_size)
        tail = w1 * g_cap / (1.0 - _mode_weight(n + 2, vocab_size) / w1)
        if np.all(tail <= SERIES_REL_TOL * total):
            return total, n
        n += 1


def accuracy_expansion(beta: float, lam: float, vocab_size: int, n_tokens: int, t: float, sigma0: float) -> float:
    """Two-term large-N soft accuracy ``sqrt(pi/2)/M + sqrt(2 pi)/(M N) S_t(sigma0)``."""
    if n_tokens < 1:
        raise DomainError("n_tokens must be >= 1")
    base = math.sqrt(math.pi / 2) / vocab_size
    return base + math.sqrt(2 * math.pi) / (vocab_size * n_tokens) * score_S(beta, lam, vocab_size, t, sigma0)


@dataclass
class SmallnessCheck:
    ok: bool
    margin: float
    threshold: float
    sup_a: float
    t_star: float


def smallness_check(beta: float, lam: float, t: float, n_max: int = 64) -> SmallnessCheck:
    """Test ``t sup_n a_n <= min(3 - sqrt 3, 2 (1 - e^{-lam}))``."""
    if not lam > 0:
        raise DomainError("the U-shape hypotheses need lambda > 0")
    a_sup, _ = sup_a(beta, n_max)
    threshold = min(CONVEXITY_LIMIT, -2.0 * math.expm1(-lam))
    lhs = t * a_sup
    return SmallnessCheck(lhs <= threshold, threshold - lhs, threshold, a_sup, threshold / a_sup)


def convexity_coefficient(c, k):
    """Coefficient ``c^2 - 2 (k+3) c + (k+2)(k+3)`` of ``psi'' - 2 psi' + psi``."""
    return c * c - 2.0 * (k + 3) * c + (k + 2) * (k + 3)


def psi_c_prime(c, y):
    """``d/dy psi_c(y) = sum_k c^{k+2} y^k / (k! (k+2)!)``."""
    c = float(c)
    y = np.asarray(y, dtype=float)
    term = np.full(y.shape, c * c / 2.0)
    total = term.copy()
    for k in range(1, 400):
        term = term * c * y / (k * (k + 2))
        total = total + term
        if np.all(term <= 1e-17 * total):
            break
    return total if total.ndim else float(total)


def h_c(c: float, lam: float, y):
    """One-mode score at the output layer, ``(lam/(e^lam - 1) + lam e^{-y}) psi_c(y)``."""
    y = np.asarray(y, dtype=float)
    return (lam / math.expm1(lam) + lam * np.exp(-y)) * psi_c(c, y)


@dataclass
class HDiagnostics:
    value: float
    slope0: float
    convex: bool
    coefficients: np.ndarray


def h_diagnostics(c: float, lam: float, y: float, k_max: int = 64) -> HDiagnostics:
    """Value of ``h_c(y)``, the closed-form slope ``h_c'(0)`` and the convexity certificate."""
    if c < 0:
        raise DomainError("c must be >= 0")
    if not lam > 0:
        raise DomainError("lambda must be > 0")
    slope0 = lam * c * (c / (2.0 * -math.expm1(-lam)) - 1.0)
    coeffs = convexity_coefficient(c, np.arange(k_max + 1))
    # coefficients are increasing in k once k=0 is nonnegative, so k=0 decides
    convex = bool(coeffs[0] >= 0 and np.all(coeffs >= 0))
    return HDiagnostics(float(h_c(c, lam, y)), slope0, convex, coeffs)


@dataclass
class ClosedFormProfile:
    """Sampled score profile with the metadata needed to certify it."""

    beta: float
    lam: float
    vocab_size: int
    t: float
    sigma0_grid: np.ndarray
    scores: np.ndarray
    n_terms_used: int
    condition: SmallnessCheck | None
    min_location: float = field(init=False)

    def __post_init__(self):
        self.min_location = float(self.sigma0_grid[int(np.argmin(self.scores))])

    @property
    def condition_ok(self) -> bool:
        return bool(self.condition is not None and self.condition.ok)


def build_profile(beta: float, lam: float, vocab_size: int, t: float, n_points: int = 512) -> ClosedFormProfile:
    """Score on the midpoint grid ``(i + 1/2)/n_points`` of (0, 1)."""
    grid = (np.arange(n_points) + 0.5) / n_points
    scores, used = score_profile(beta, lam, vocab_size, t, grid)
    cond = smallness_check(beta, lam, t) if lam > 0 else None
    return ClosedFormProfile(beta, lam, vocab_size, t, grid, scores, used, cond)


@dataclass
class UShapeReport:
    structured: bool
    condition_ok: bool
    local_minima: list
    argmin: float | None
    recency_slope: float | None
    primacy_ratio: float | None
    decreasing_head: int
    increasing_tail: int
    notes: list

    @property
    def u_shaped(self) -> bool:
        return (
            self.structured
            and len(self.local_minima) == 1
            and self.recency_slope is not None
            and self.recency_slope > 0
            and self.decreasing_head > 0
            and self.increasing_tail > 0
        )


RECENCY_H = 1.0 / 1024


def u_shape_analyze(profile: ClosedFormProfile, strict: bool = False) -> UShapeReport:
    """Check primacy, recency and a unique interior minimum on the profile grid.

    A failed smallness condition is recorded in the report; with ``strict``
    it raises :class:`ConditionError` instead.
    """
    s = profile.scores
    notes = []
    if profile.sigma0_grid.size < 64:
        raise DomainError("the analysis needs at least 64 grid points")
    if not profile.condition_ok:
        if strict:
            raise ConditionError("smallness condition failed; U-shape hypotheses unmet")
        notes.append("smallness condition not satisfied")
    if not np.any(s > 0):
        return UShapeReport(False, profile.condition_ok, [], None, None, None, 0, 0, notes + ["no structure"])
    d = np.diff(s)
    minima = [
        float(profile.sigma0_grid[i])
        for i in range(1, len(s) - 1)
        if s[i] < s[i - 1] and s[i] <= s[i + 1]
    ]
    head = int(np.argmax(d >= 0)) if np.any(d >= 0) else len(d)
    tail = int(np.argmax(d[::-1] <= 0)) if np.any(d <= 0) else len(d)
    args = (profile.beta, profile.lam, profile.vocab_size, profile.t)
    h = RECENCY_H
    # second-order one-sided difference at sigma0 -> 1^-
    s1, s2, s3 = (score_S(*args, 1.0 - k * h) for k in (1, 2, 3))
    slope = (3 * s1 - 4 * s2 + s3) / (2 * h)
    ratio = score_S(*args, 2.0**-10) / score_S(*args, 2.0**-4)
    argmin = float(profile.sigma0_grid[int(np.argmin(s))])
    return UShapeReport(True, profile.condition_ok, minima, argmin, float(slope), float(ratio), head, tail, notes)

