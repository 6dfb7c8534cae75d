"""Causal N-particle dynamics on the torus: sampling, integration and decoding."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import CheckpointError, ConfigError, StepError
from .model import ModelParams, _normalizers, alibi_weights, fourier_w, interaction_w_prime

TWO_PI = 2.0 * math.pi
DEFAULT_DT = 1e-2


@dataclass
class InitialSampler:
    """Law of the initial prompt.

    ``kind`` is ``"iid-uniform"`` or ``"vocabulary-profile"``.  For the latter,
    ``profile`` has shape ``(G, vocab_size)``: row ``g`` is the distribution
    over codewords at position ``profile_sigma[g]`` (equispaced on [0, 1] when
    omitted).  ``jitter`` adds centered Gaussian noise of that standard
    deviation to codeword angles, for visualization runs only.
    """

    kind: str = "iid-uniform"
    profile: np.ndarray | None = None
    profile_sigma: np.ndarray | None = None
    seed: int = 0
    jitter: float = 0.0

    def __post_init__(self):
        if self.kind not in ("iid-uniform", "vocabulary-profile"):
            raise ConfigError(f"unknown sampler kind {self.kind!r}")
        if self.kind == "vocabulary-profile":
            if self.profile is None:
                raise ConfigError("vocabulary-profile sampler needs a profile")
            p = np.atleast_2d(np.asarray(self.profile, dtype=float))
            if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-12):
                raise ConfigError("every profile row must be a probability vector")
            self.profile = p
            if self.profile_sigma is None:
                g = p.shape[0]
                self.profile_sigma = np.linspace(0.0, 1.0, g) if g > 1 else np.zeros(1)
            self.profile_sigma = np.asarray(self.profile_sigma, dtype=float)
            if self.profile_sigma.shape != (p.shape[0],) or np.any(np.diff(self.profile_sigma) <= 0):
                raise ConfigError("profile_sigma must be increasing with one node per profile row")
        if self.jitter < 0:
            raise ConfigError("jitter must be nonnegative")

    @property
    def codeword_valued(self) -> bool:
        return self.kind == "vocabulary-profile" and self.jitter == 0.0

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "seed": int(self.seed), "jitter": float(self.jitter)}
        if self.profile is not None:
            d["profile"] = np.asarray(self.profile).tolist()
            d["profile_sigma"] = np.asarray(self.profile_sigma).tolist()
        return d


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """Counter-based stream owned by one replicate; depends on ``(seed, replicate)`` only."""
    if replicate < 0:
        raise ValueError("replicate must be >= 0")
    return np.random.Generator(np.random.Philox(key=int(seed) % 2**64, counter=int(replicate) << 192))


def profile_at(sampler: InitialSampler, sigma: np.ndarray) -> np.ndarray:
    """Piecewise-linear interpolation of the vocabulary profile, renormalized."""
    p = sampler.profile
    nodes = sampler.profile_sigma
    out = np.empty((len(sigma), p.shape[1]))
    for m in range(p.shape[1]):
        out[:, m] = np.interp(sigma, nodes, p[:, m])
    out /= out.sum(axis=1, keepdims=True)
    return out


def sample_initial(sampler: InitialSampler, params: ModelParams, replicate: int) -> np.ndarray:
    """Draw the ``N`` initial angles of one replicate."""
    n = params.n_tokens
    rng = replicate_rng(sampler.seed, replicate)
    if sampler.kind == "iid-uniform":
        return TWO_PI * rng.random(n)
    if sampler.profile.shape[1] != params.vocab_size:
        raise ConfigError(
            f"profile has {sampler.profile.shape[1]} codewords, vocab_size is {params.vocab_size}"
        )
    probs = profile_at(sampler, np.arange(1, n + 1) / n)
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(n)
    m = (u[:, None] >= cdf[:, :-1]).sum(axis=1)
    theta = TWO_PI * m / params.vocab_size
    if sampler.jitter > 0:
        theta = theta + sampler.jitter * rng.standard_normal(n)
    return theta


def drift(theta: np.ndarray, params: ModelParams, weights: np.ndarray | None = None) -> np.ndarray:
    """Direct O(N^2) drift ``sum_{k<j} omega_jk w'(theta_j - theta_k)``."""
    if weights is None:
        weights = alibi_weights(params)
    diff = theta[:, None] - theta[None, :]
    return np.sum(weights * interaction_w_prime(diff, params.beta), axis=1)


def drift_coefficients(beta: float, tol: float = 1e-15) -> np.ndarray:
    """Sine coefficients ``-2 n I_n(beta)`` of ``w'``, truncated once the tail is below ``tol``."""
    coef = []
    n = 1
    while True:
        c = -2.0 * n * fourier_w(n, beta)
        coef.append(c)
        # I_{n+1}/I_n < beta/(2n+1) bounds the tail by a geometric series
        ratio = (n + 1) / n * beta / (2 * n + 1)
        if n > beta and ratio < 0.5 and abs(c) * ratio / (1 - ratio) < tol:
            break
        n += 1
    return np.array(coef)


class _FastDrift:
    """Precomputed constants for the compiled Fourier-prefix drift."""

    def __init__(self, params: ModelParams):
        n = params.n_tokens
        z = _normalizers(n, params.lam)
        self.inv_z = np.where(z > 0, 1.0 / np.where(z > 0, z, 1.0), 0.0)
        self.decay = math.exp(-params.lam / n)
        self.coef = drift_coefficients(params.beta)

    def __call__(self, theta_nb: np.ndarray) -> np.ndarray:
        out = np.empty_like(theta_nb)
        _kernels.drift_fourier(theta_nb, self.decay, self.inv_z, self.coef, out)
        return out

    def advance(self, theta_nb: np.ndarray, n_steps: int, dt: float) -> None:
        if n_steps > 0:
            _kernels.rk4_advance(theta_nb, n_steps, dt, self.decay, self.inv_z, self.coef)


def fast_drift(theta: np.ndarray, params: ModelParams) -> np.ndarray:
    """Same drift as :func:`drift`, evaluated in O(N K) through the Fourier expansion.

    Accepts ``(N,)`` or ``(B, N)`` arrays.
    """
    th = np.atleast_2d(np.asarray(theta, dtype=float))
    out = _FastDrift(params)(np.ascontiguousarray(th.T)).T
    return out[0] if np.ndim(theta) == 1 else out


def _check_schedule(dt: float, checkpoints, t_final: float) -> list[float]:
    if not dt > 0:
        raise StepError(f"dt must be > 0, got {dt}")
    if t_final > 0 and dt > t_final:
        raise StepError(f"dt={dt} exceeds t_final={t_final}")
    cps = [float(c) for c in checkpoints]
    if any(b < a for a, b in zip(cps, cps[1:])):
        raise StepError("checkpoints must be sorted")
    if cps and (cps[0] < 0 or cps[-1] > t_final + 1e-12):
        raise StepError(f"checkpoints must lie within [0, {t_final}]")
    return cps


def _integrate_nb(theta_nb: np.ndarray, stepper: _FastDrift, dt: float, cps: list[float]) -> np.ndarray:
    """RK4 with fixed ``dt``, landing exactly on each checkpoint; returns ``(C, N, B)``."""
    out = np.empty((len(cps),) + theta_nb.shape)
    t = 0.0
    for c, tc in enumerate(cps):
        span = tc - t
        n_full = int(math.floor(span / dt + 1e-9))
        stepper.advance(theta_nb, n_full, dt)
        rest = span - n_full * dt
        if rest > 1e-12 * max(1.0, tc):
            stepper.advance(theta_nb, 1, rest)
        t = tc
        out[c] = theta_nb
    return out


def integrate(initial: np.ndarray, params: ModelParams, dt: float = DEFAULT_DT, checkpoints=None) -> np.ndarray:
    """Integrate the causal system from ``initial`` and return states at ``checkpoints``.

    ``initial`` may be ``(N,)`` or ``(B, N)``; the result has shape ``(C, N)``
    or ``(C, B, N)`` respectively.  Checkpoints default to ``[t_final]``.
    """
    if checkpoints is None:
        checkpoints = [params.t_final]
    cps = _check_schedule(dt, checkpoints, params.t_final)
    init = np.asarray(initial, dtype=float)
    single = init.ndim == 1
    # explicit copy: for 1-D input the transpose is already contiguous and would alias the caller's array
    theta_nb = np.array(np.atleast_2d(init).T, order="C", copy=True)
    res = _integrate_nb(theta_nb, _FastDrift(params), dt, cps)
    res = np.transpose(res, (0, 2, 1))
    return res[:, 0, :] if single else res


def decode_nearest(theta, vocab_size: int):
    """Nearest codeword ``2 pi m / M`` on the torus; ties go to the smaller index."""
    x = np.mod(np.asarray(theta, dtype=float) * vocab_size / TWO_PI, vocab_size)
    lo = np.floor(x)
    frac = x - lo
    lo = lo.astype(np.int64) % vocab_size
    hi = (lo + 1) % vocab_size
    out = np.where(frac < 0.5, lo, np.where(frac > 0.5, hi, np.minimum(lo, hi)))
    return out if out.ndim else int(out)


@dataclass
class TrajectoryEnsemble:
    """``R`` independent trajectories recorded at a list of checkpoints.

    Only the 1-based token indices in ``tokens`` are retained, which keeps
    million-replicate runs in memory.  ``states`` has shape ``(R, C, T)`` and
    ``initial_states`` shape ``(R, T)`` with ``T = len(tokens)``.
    """

    params: ModelParams
    checkpoints: tuple
    states: np.ndarray
    initial_states: np.ndarray
    tokens: np.ndarray
    seed: int
    dt: float
    sampler: InitialSampler | None = None
    _column: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._column = {int(k): i for i, k in enumerate(self.tokens)}

    @property
    def replicates(self) -> int:
        return self.states.shape[0]

    def _col(self, token: int) -> int:
        try:
            return self._column[int(token)]
        except KeyError:
            raise CheckpointError(f"token {token} was not recorded") from None

    def checkpoint_index(self, t: float) -> int:
        for i, c in enumerate(self.checkpoints):
            if abs(c - t) <= 1e-12 * max(1.0, abs(t)):
                return i
        raise CheckpointError(f"time {t} is not a recorded checkpoint {self.checkpoints}")

    def angles(self, t: float, token: int) -> np.ndarray:
        """Angles of ``token`` at checkpoint ``t`` across replicates."""
        return self.states[:, self.checkpoint_index(t), self._col(token)]

    def initial(self, token: int) -> np.ndarray:
        return self.initial_states[:, self._col(token)]


def _simulate_block(params, sampler, start, stop, dt, cps, cols):
    init = np.stack([sample_initial(sampler, params, r) for r in range(start, stop)])
    theta_nb = np.array(init.T, order="C", copy=True)
    res = _integrate_nb(theta_nb, _FastDrift(params), dt, cps)
    # (C, N, B) -> (B, C, T)
    return init[:, cols], np.transpose(res[:, cols, :], (2, 0, 1))


def simulate_ensemble(
    params: ModelParams,
    sampler: InitialSampler,
    replicates: int,
    dt: float = DEFAULT_DT,
    checkpoints=None,
    tokens=None,
    block_size: int = 64,
    threads: int = 1,
) -> TrajectoryEnsemble:
    """Simulate ``replicates`` independent prompts.

    Replicate ``r`` uses the stream ``replicate_rng(sampler.seed, r)``, so the
    result does not depend on ``block_size`` or ``threads``.
    """
    if replicates < 1:
        raise ConfigError("replicates must be >= 1")
    if checkpoints is None:
        checkpoints = [0.0, params.t_final]
    cps = _check_schedule(dt, checkpoints, params.t_final)
    n = params.n_tokens
    tok = np.arange(1, n + 1) if tokens is None else np.unique(np.asarray(tokens, dtype=np.int64))
    if tok.size == 0 or tok[0] < 1 or tok[-1] > n:
        raise ConfigError(f"token indices must lie in 1..{n}")
    cols = tok - 1
    states = np.empty((replicates, len(cps), tok.size))
    initial = np.empty((replicates, tok.size))
    bounds = [(s, min(s + block_size, replicates)) for s in range(0, replicates, block_size)]

    def work(b):
        s, e = b
        initial[s:e], states[s:e] = _simulate_block(params, sampler, s, e, dt, cps, cols)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, bounds))
    else:
        for b in bounds:
            work(b)
    return TrajectoryEnsemble(
        params=params,
        checkpoints=tuple(cps),
        states=states,
        initial_states=initial,
        tokens=tok,
        seed=sampler.seed,
        dt=dt,
        sampler=sampler,
    )


def write_trajectory_csv(ens: TrajectoryEnsemble, path, comments=None) -> None:
    """Dump ``(replicate, checkpoint_time, token_index, angle)`` rows.

    ``comments`` are written first as ``#``-prefixed lines.
    """
    with open(path, "w", newline="") as fh:
        for line in comments or ():
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replicate", "checkpoint_time", "token_index", "angle"])
        for r in range(ens.replicates):
            for c, t in enumerate(ens.checkpoints):
                for i, tok in enumerate(ens.tokens):
                    w.writerow([r, repr(float(t)), int(tok), repr(float(ens.states[r, c, i]))])
