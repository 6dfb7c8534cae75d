"""Experiment configuration: parsing, validation and the resolved form echoed into outputs.

A configuration is a YAML mapping::

    experiment: correlations
    model: {beta: 1.0, lambda: 1.0, n_tokens: 64, vocab_size: 8, t_final: 1.0}
    sampler: {kind: iid-uniform}
    seed: 7
    replicates: 10000
    numerics: {dt_particle: 0.05, dt_field: 0.001, n_cells: 512, n_max: 32}
    observe: {times: [0.0, 1.0], sigma: [1.0], sigma0: [0.25, 0.5], n: [1], phi: {1: [1.0, 0.0]}}
    output_dir: out

Physics parameters have no defaults.  Numerical resolutions do, but the
resolved values are always written back out.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError
from .model import ModelParams, TrigPoly
from .particles import InitialSampler

EXPERIMENTS = ("simulate", "meanfield", "correlations", "profile", "accuracy", "verify")
NUMERIC_DEFAULTS = {"dt_particle": 0.05, "dt_field": 1e-3, "n_cells": 512, "n_max": 32, "n_points": 512, "block_size": 64}


@dataclass
class ExperimentConfig:
    experiment: str
    params: ModelParams | None
    sampler: InitialSampler | None
    seed: int | None
    replicates: int
    dt_particle: float
    dt_field: float
    n_cells: int
    n_max: int
    n_points: int
    block_size: int
    times: list
    sigma_list: list
    sigma0_list: list
    n_list: list
    phi: TrigPoly
    output_dir: str
    tier: str = "fast"
    replicate_scale: float = 1.0
    raw: dict = field(default_factory=dict, repr=False)

    def resolved(self) -> dict:
        """Fully explicit configuration, suitable for echoing into every output."""
        d = {
            "experiment": self.experiment,
            "seed": self.seed,
            "replicates": self.replicates,
            "numerics": {
                "dt_particle": self.dt_particle,
                "dt_field": self.dt_field,
                "n_cells": self.n_cells,
                "n_max": self.n_max,
                "n_points": self.n_points,
                "block_size": self.block_size,
            },
            "observe": {
                "times": list(self.times),
                "sigma": list(self.sigma_list),
                "sigma0": list(self.sigma0_list),
                "n": list(self.n_list),
                "phi": self.phi.to_dict(),
            },
            "output_dir": self.output_dir,
        }
        if self.params is not None:
            d["model"] = self.params.to_dict()
        if self.sampler is not None:
            d["sampler"] = self.sampler.to_dict()
        if self.experiment == "verify":
            d["verify"] = {"tier": self.tier, "replicate_scale": self.replicate_scale}
        return d

    def input_hash(self) -> str:
        return config_hash(self.resolved())


def config_hash(resolved: dict) -> str:
    """SHA-256 of the canonical JSON form of a resolved configuration."""
    blob = json.dumps(resolved, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _float_list(values, name: str) -> list:
    if values is None:
        return []
    if not isinstance(values, (list, tuple)):
        values = [values]
    out = []
    for v in values:
        try:
            x = float(v)
        except (TypeError, ValueError):
            raise ConfigError(f"{name} entries must be numbers, got {v!r}") from None
        out.append(x)
    return out


def _check_unit(values, name: str, upper_open: bool = False) -> None:
    for x in values:
        bad = not (0 < x < 1) if upper_open else not (0 < x <= 1)
        if bad:
            interval = "(0, 1)" if upper_open else "(0, 1]"
            raise ConfigError(f"{name} entries must lie in {interval}, got {x}")


def _parse_phi(d) -> TrigPoly:
    if d is None:
        return TrigPoly({1: 1.0})
    if not isinstance(d, dict) or not d:
        raise ConfigError("phi must be a nonempty mapping from frequency to coefficient")
    try:
        return TrigPoly.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad phi coefficients: {exc}") from None


def _parse_sampler(d, seed) -> InitialSampler:
    if d is None:
        raise ConfigError("missing sampler section")
    if not isinstance(d, dict):
        raise ConfigError("sampler must be a mapping")
    allowed = {"kind", "profile", "profile_sigma", "jitter"}
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"unknown sampler keys: {sorted(extra)}")
    profile = d.get("profile")
    nodes = d.get("profile_sigma")
    return InitialSampler(
        kind=d.get("kind", "iid-uniform"),
        profile=None if profile is None else np.asarray(profile, dtype=float),
        profile_sigma=None if nodes is None else np.asarray(nodes, dtype=float),
        seed=0 if seed is None else seed,
        jitter=float(d.get("jitter", 0.0)),
    )


def parse_config(raw: dict, seed_override: int | None = None, output_override: str | None = None) -> ExperimentConfig:
    """Validate a configuration mapping; raises :class:`ConfigError` before any computation."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    raw = copy.deepcopy(raw)
    exp = raw.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {exp!r}")
    seed = raw.get("seed") if seed_override is None else seed_override
    if seed is not None:
        if int(seed) != seed or not 0 <= int(seed) < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
        seed = int(seed)
    needs_model = exp != "verify"
    params = None
    if needs_model:
        model = raw.get("model")
        if not isinstance(model, dict):
            raise ConfigError("missing model section (beta, lambda, n_tokens, vocab_size, t_final)")
        params = ModelParams.from_dict(model)
    stochastic = exp in ("simulate", "correlations", "accuracy")
    if stochastic and seed is None:
        raise ConfigError("a seed is required (config key 'seed' or --seed)")
    sampler = _parse_sampler(raw.get("sampler"), seed) if (stochastic or exp == "meanfield") else None
    if sampler is not None and sampler.profile is not None and sampler.profile.shape[1] != params.vocab_size:
        raise ConfigError(f"profile has {sampler.profile.shape[1]} codewords, vocab_size is {params.vocab_size}")
    replicates = int(raw.get("replicates", 1))
    if replicates < 1:
        raise ConfigError(f"replicates must be >= 1, got {replicates}")
    num = dict(NUMERIC_DEFAULTS)
    given = raw.get("numerics") or {}
    if not isinstance(given, dict):
        raise ConfigError("numerics must be a mapping")
    extra = set(given) - set(NUMERIC_DEFAULTS)
    if extra:
        raise ConfigError(f"unknown numerics keys: {sorted(extra)}")
    num.update(given)
    if not (num["dt_particle"] > 0 and num["dt_field"] > 0):
        raise ConfigError("time steps must be positive")
    for k in ("n_cells", "n_max", "n_points", "block_size"):
        if int(num[k]) != num[k] or num[k] < 1:
            raise ConfigError(f"{k} must be a positive integer")
    obs = raw.get("observe") or {}
    if not isinstance(obs, dict):
        raise ConfigError("observe must be a mapping")
    times = _float_list(obs.get("times"), "times")
    sigma = _float_list(obs.get("sigma"), "sigma")
    sigma0 = _float_list(obs.get("sigma0"), "sigma0")
    _check_unit(sigma, "sigma")
    _check_unit(sigma0, "sigma0", upper_open=True)
    if any(t < 0 for t in times):
        raise ConfigError("observation times must be >= 0")
    if params is not None:
        if not times:
            times = [0.0, params.t_final] if params.t_final > 0 else [0.0]
        if exp != "profile" and any(t > params.t_final + 1e-12 for t in times):
            raise ConfigError("observation times must not exceed t_final")
    n_list = [int(n) for n in (obs.get("n") or [1])]
    phi = _parse_phi(obs.get("phi"))
    ver = raw.get("verify") or {}
    tier = ver.get("tier", "fast")
    if tier not in ("fast", "mc", "all"):
        raise ConfigError(f"tier must be fast, mc or all, got {tier!r}")
    out = output_override or raw.get("output_dir")
    if not out:
        raise ConfigError("output_dir is required (config key or --output)")
    return ExperimentConfig(
        experiment=exp,
        params=params,
        sampler=sampler,
        seed=seed,
        replicates=replicates,
        dt_particle=float(num["dt_particle"]),
        dt_field=float(num["dt_field"]),
        n_cells=int(num["n_cells"]),
        n_max=int(num["n_max"]),
        n_points=int(num["n_points"]),
        block_size=int(num["block_size"]),
        times=sorted(set(times)),
        sigma_list=sigma,
        sigma0_list=sigma0,
        n_list=n_list,
        phi=phi,
        output_dir=str(out),
        tier=tier,
        replicate_scale=float(ver.get("replicate_scale", 1.0)),
        raw=raw,
    )


def load_config(path, seed_override: int | None = None, output_override: str | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    return parse_config(raw, seed_override, output_override)
