"""Monte Carlo estimators over trajectory ensembles.

Every estimator is a fold over replicates: per-replicate observables are
formed first, then reduced with numpy's pairwise summation in replicate
order, so results are deterministic and independent of how the ensemble was
produced.  Standard errors of complex quantities are computed per real and
imaginary component; ``std_error`` is their Euclidean combination.

Observables are bilinear (no conjugation): ``Cov(X, Y) = E[(X - EX)(Y - EY)]``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainError, InsufficientReplicates, OrderError, SamplerError
from .model import TrigPoly, token_index
from .particles import TWO_PI, TrajectoryEnsemble, decode_nearest

KINDS = ("mode", "autocov", "crosscov", "cumulant3", "accuracy", "pair_cov")
CSV_FIELDS = ("kind", "t", "sigma", "sigma0", "n", "value_re", "value_im", "std_error", "replicates")
#: Wrapped-Gaussian images kept on each side.
WRAP_K = 3


@dataclass
class CorrelationEstimate:
    """Point estimate with its Monte Carlo standard error."""

    value: complex
    std_error: float
    replicates: int
    kind: str
    std_re: float = 0.0
    std_im: float = 0.0
    t: float | None = None
    sigma: float | None = None
    sigma0: float | None = None
    n: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown estimate kind {self.kind!r}")

    def within(self, target: complex, n_se: float = 3.0, slack: float = 0.0) -> bool:
        return abs(self.value - target) <= n_se * self.std_error + slack

    def to_row(self) -> dict:
        v = complex(self.value)
        return {
            "kind": self.kind,
            "t": self.t,
            "sigma": self.sigma,
            "sigma0": self.sigma0,
            "n": self.n,
            "value_re": v.real,
            "value_im": v.imag,
            "std_error": self.std_error,
            "replicates": self.replicates,
        }

    def to_dict(self) -> dict:
        d = asdict(self)
        v = complex(self.value)
        d["value"] = [v.real, v.imag]
        return d


def _as_observable(phi):
    if isinstance(phi, TrigPoly) or callable(phi):
        return phi
    if isinstance(phi, dict):
        return TrigPoly(phi)
    raise TypeError("phi must be a TrigPoly, a coefficient dict or a callable")


def _mean_se(x: np.ndarray) -> tuple[complex, float, float]:
    """Sample mean and per-component standard errors of ``x`` (complex or real)."""
    r = x.shape[0]
    mean = np.mean(x)
    if r < 2:
        return complex(mean), 0.0, 0.0
    se_re = float(np.std(x.real, ddof=1) / math.sqrt(r))
    se_im = float(np.std(x.imag, ddof=1) / math.sqrt(r)) if np.iscomplexobj(x) else 0.0
    return complex(mean), se_re, se_im


def _estimate(samples: np.ndarray, kind: str, scale: float = 1.0, **meta) -> CorrelationEstimate:
    mean, se_re, se_im = _mean_se(samples)
    se_re *= abs(scale)
    se_im *= abs(scale)
    return CorrelationEstimate(
        value=scale * mean,
        std_error=math.hypot(se_re, se_im),
        replicates=int(samples.shape[0]),
        kind=kind,
        std_re=se_re,
        std_im=se_im,
        **meta,
    )


def _covariance(x: np.ndarray, y: np.ndarray, kind: str, scale: float = 1.0, **meta) -> CorrelationEstimate:
    """Unbiased ``Cov(X, Y)`` with the delta-method standard error of the centered products."""
    r = x.shape[0]
    if r < 2:
        raise InsufficientReplicates(f"covariance needs at least 2 replicates, got {r}")
    z = (x - np.mean(x)) * (y - np.mean(y))
    est = _estimate(z, kind, scale * r / (r - 1), **meta)
    return est


def _token(ens: TrajectoryEnsemble, sigma: float) -> int:
    if not 0 < sigma <= 1:
        raise DomainError(f"sigma must lie in (0, 1], got {sigma}")
    return token_index(sigma, ens.params.n_tokens)


def _character(theta: np.ndarray, n: int) -> np.ndarray:
    return np.exp(-1j * n * theta)


def estimate_mode(ens: TrajectoryEnsemble, t: float, sigma: float, n: int) -> CorrelationEstimate:
    """Sample mean of ``exp(-i n theta_{ceil(N sigma)}(t))``."""
    theta = ens.angles(t, _token(ens, sigma))
    if n == 0:
        return CorrelationEstimate(1.0 + 0j, 0.0, ens.replicates, "mode", t=t, sigma=sigma, n=0)
    return _estimate(_character(theta, n), "mode", t=t, sigma=sigma, n=n)


def estimate_autocov(ens: TrajectoryEnsemble, t: float, sigma: float, n: int, phi) -> CorrelationEstimate:
    """``Cov(exp(-i n theta_i(t)), phi(theta_i(0)))`` with ``i = ceil(N sigma)``."""
    phi = _as_observable(phi)
    i = _token(ens, sigma)
    x = _character(ens.angles(t, i), n)
    y = np.asarray(phi(ens.initial(i)), dtype=complex)
    return _covariance(x, y, "autocov", t=t, sigma=sigma, n=n)


def estimate_crosscov(ens: TrajectoryEnsemble, t: float, sigma: float, sigma0: float, n: int, phi) -> CorrelationEstimate:
    """``N Cov(exp(-i n theta_i(t)), phi(theta_{i0}(0)))``; requires ``i0 < i`` at index level."""
    phi = _as_observable(phi)
    i = _token(ens, sigma)
    i0 = _token(ens, sigma0)
    if i0 >= i:
        raise OrderError(f"source token {i0} is not before observed token {i}")
    x = _character(ens.angles(t, i), n)
    y = np.asarray(phi(ens.initial(i0)), dtype=complex)
    return _covariance(x, y, "crosscov", scale=float(ens.params.n_tokens), t=t, sigma=sigma, sigma0=sigma0, n=n)


def estimate_pair_cov(ens: TrajectoryEnsemble, t: float, i: int, j: int, n: int = 1, m: int = -1) -> CorrelationEstimate:
    """``Cov(exp(i n theta_i(t)), exp(i m theta_j(t)))`` between tokens ``i`` and ``j`` at time ``t``.

    The default ``m = -n`` gives the Hermitian covariance; for rotation-invariant
    initial laws the bilinear choice ``m = n`` vanishes identically in
    expectation.
    """
    x = np.exp(1j * n * ens.angles(t, i))
    y = np.exp(1j * m * ens.angles(t, j))
    return _covariance(x, y, "pair_cov", t=t, n=n)


def estimate_cumulant3(ens: TrajectoryEnsemble, specs) -> CorrelationEstimate:
    """Plug-in third joint cumulant ``E[(X - EX)(Y - EY)(Z - EZ)]``.

    ``specs`` holds three ``(t, sigma, phi)`` triples; each observable is
    ``phi(theta_{ceil(N sigma)}(t))``.
    """
    specs = list(specs)
    if len(specs) != 3:
        raise ValueError("cumulant3 needs exactly three (t, sigma, phi) triples")
    if ens.replicates < 2:
        raise InsufficientReplicates("cumulant3 needs at least 2 replicates")
    cols = []
    for t, sigma, phi in specs:
        phi = _as_observable(phi)
        v = np.asarray(phi(ens.angles(t, _token(ens, sigma))), dtype=complex)
        cols.append(v - np.mean(v))
    z = cols[0] * cols[1] * cols[2]
    return _estimate(z, "cumulant3", t=specs[0][0], sigma=specs[0][1])


def wilson_se(successes: int, trials: int, z: float = 1.0) -> float:
    """Half-width of the Wilson score interval at ``z`` standard deviations."""
    if trials < 1:
        raise InsufficientReplicates("no trials")
    p = successes / trials
    denom = 1.0 + z * z / trials
    return z / denom * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials))


def _source_token(ens: TrajectoryEnsemble, sigma0: float) -> int:
    if not 0 < sigma0 < 1:
        raise DomainError(f"sigma0 must lie in (0, 1), got {sigma0}")
    return token_index(sigma0, ens.params.n_tokens)


def hard_accuracy(ens: TrajectoryEnsemble, t: float, sigma0: float) -> CorrelationEstimate:
    """Fraction of replicates whose last token decodes to the source codeword."""
    if ens.sampler is None or not ens.sampler.codeword_valued:
        raise SamplerError("hard accuracy needs codeword-valued initial data")
    m = ens.params.vocab_size
    src = decode_nearest(ens.initial(_source_token(ens, sigma0)), m)
    out = decode_nearest(ens.angles(t, ens.params.n_tokens), m)
    hits = int(np.sum(out == src))
    r = ens.replicates
    return CorrelationEstimate(hits / r + 0j, wilson_se(hits, r), r, "accuracy", wilson_se(hits, r), 0.0, t=t, sigma0=sigma0)


def _wrap(x: np.ndarray) -> np.ndarray:
    return np.mod(x + math.pi, TWO_PI) - math.pi


def soft_kernel_direct(delta, vocab_size: int) -> np.ndarray:
    """Wrapped Gaussian ``sum_{|k| <= 3} exp(-(M^2 / 2 pi^2) (delta - 2 pi k)^2)``."""
    alpha = vocab_size**2 / (2 * math.pi**2)
    d = _wrap(np.asarray(delta, dtype=float))
    # for |d| <= pi the first omitted image sits at distance >= (2 WRAP_K + 1) pi
    tail = 2 * math.exp(-alpha * ((2 * WRAP_K + 1) * math.pi) ** 2)
    if tail > 1e-15:
        raise DomainError(f"wrapped-Gaussian truncation error {tail:.1e} too large for M={vocab_size}")
    k = np.arange(-WRAP_K, WRAP_K + 1)
    return np.sum(np.exp(-alpha * (d[..., None] - TWO_PI * k) ** 2), axis=-1)


def soft_kernel_fourier(delta, vocab_size: int) -> np.ndarray:
    """Poisson-dual form ``(sqrt(pi/2)/M) sum_n exp(-pi^2 n^2 / (2 M^2)) cos(n delta)``."""
    d = np.asarray(delta, dtype=float)
    # exp(-pi^2 n^2 / (2 M^2)) < 1e-20 beyond n = 3.1 M
    n_top = int(math.ceil(3.1 * vocab_size)) + 1
    total = np.full(d.shape, 1.0)
    for n in range(1, n_top + 1):
        total = total + 2 * math.exp(-(math.pi * n / vocab_size) ** 2 / 2) * np.cos(n * d)
    return math.sqrt(math.pi / 2) / vocab_size * total


def soft_accuracy(ens: TrajectoryEnsemble, t: float, sigma0: float, check_tol: float = 1e-10) -> CorrelationEstimate:
    """Mean wrapped-Gaussian proximity of the last token to the source's initial angle.

    Both the direct and Fourier forms are evaluated per sample and must agree
    to ``check_tol``.
    """
    m = ens.params.vocab_size
    delta = ens.angles(t, ens.params.n_tokens) - ens.initial(_source_token(ens, sigma0))
    direct = soft_kernel_direct(delta, m)
    dual = soft_kernel_fourier(delta, m)
    gap = float(np.max(np.abs(direct - dual))) if delta.size else 0.0
    if gap > check_tol:
        raise ArithmeticError(f"soft-accuracy kernel forms disagree by {gap:.2e}")
    return _estimate(direct, "accuracy", t=t, sigma0=sigma0)


def soft_baseline(vocab_size: int) -> float:
    """Soft accuracy of independent uniform angles, ``sqrt(pi/2) / M``."""
    return math.sqrt(math.pi / 2) / vocab_size


def centered_soft_profile(values, vocab_size: int, n_tokens: int) -> np.ndarray:
    """``(A_N - sqrt(pi/2)/M) M N / sqrt(2 pi)``, the scale on which it tracks the score."""
    return (np.asarray(values, dtype=float) - soft_baseline(vocab_size)) * vocab_size * n_tokens / math.sqrt(TWO_PI)


def write_estimates_csv(estimates, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        for e in estimates:
            w.writerow({k: ("" if v is None else v) for k, v in e.to_row().items()})


def estimates_summary(estimates) -> dict:
    return {"estimates": [e.to_dict() for e in estimates]}


def write_estimates_json(estimates, path, extra: dict | None = None) -> None:
    d = estimates_summary(estimates)
    if extra:
        d.update(extra)
    with open(path, "w") as fh:
        json.dump(d, fh, indent=2, sort_keys=True)


def estimate_empirical_rms(ens: TrajectoryEnsemble, t: float, n: int = 1) -> CorrelationEstimate:
    """Root-mean-square over replicates of the empirical mode ``(1/N) sum_j exp(-i n theta_j(t))``.

    Needs every token recorded.  The standard error follows from the delta
    method applied to the mean of ``|m_r|^2``.
    """
    n_tok = ens.params.n_tokens
    if len(ens.tokens) != n_tok:
        raise DomainError("the empirical measure needs all tokens recorded")
    theta = ens.states[:, ens.checkpoint_index(t), :]
    m = np.mean(np.exp(-1j * n * theta), axis=1)
    q, se_q, _ = _mean_se(np.abs(m) ** 2)
    value = math.sqrt(q.real)
    se = se_q / (2 * value) if value > 0 else 0.0
    return CorrelationEstimate(value + 0j, se, ens.replicates, "mode", se, 0.0, t=t, n=n)
