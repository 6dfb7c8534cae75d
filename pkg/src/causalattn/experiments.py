"""Experiment runners behind the command-line subcommands.

Each runner takes a validated :class:`ExperimentConfig`, writes its outputs
into ``config.output_dir`` and returns a dict with the written paths and a
short summary.  Outputs depend only on the resolved configuration.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import closedform, meanfield, stats, verify
from .config import ExperimentConfig
from .io import provenance_lines, write_csv, write_json, write_svg
from .model import token_index
from .particles import TWO_PI, InitialSampler, profile_at, simulate_ensemble, write_trajectory_csv


def _outdir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _ensemble(cfg: ExperimentConfig, tokens=None, threads: int = 1):
    return simulate_ensemble(
        cfg.params,
        cfg.sampler,
        cfg.replicates,
        dt=cfg.dt_particle,
        checkpoints=cfg.times,
        tokens=tokens,
        block_size=cfg.block_size,
        threads=threads,
    )


def run_simulate(cfg: ExperimentConfig, threads: int = 1) -> dict:
    """Trajectory snapshots at the requested times plus per-checkpoint cluster diagnostics."""
    out = _outdir(cfg)
    resolved, digest = cfg.resolved(), cfg.input_hash()
    ens = _ensemble(cfg, threads=threads)
    traj = out / "trajectories.csv"
    write_trajectory_csv(ens, traj, comments=provenance_lines(resolved, digest))
    summary = []
    for t in ens.checkpoints:
        theta = ens.states[:, ens.checkpoint_index(t), :]
        # order parameter of the empirical measure, averaged over replicates
        r = np.abs(np.mean(np.exp(1j * theta), axis=1))
        summary.append({"t": t, "mean_order_parameter": float(np.mean(r))})
    js = write_json(out / "summary.json", {"checkpoints": summary}, resolved, digest)
    fig = _snapshot_figure(ens)
    svg = write_svg(fig, out / "snapshots.svg", resolved, digest)
    return {"files": [str(traj), str(js), str(svg)], "checkpoints": summary}


def _snapshot_figure(ens):
    import matplotlib.pyplot as plt

    cps = ens.checkpoints
    fig, axes = plt.subplots(1, len(cps), figsize=(3.2 * len(cps), 3.0), squeeze=False, sharey=True)
    for ax, t in zip(axes[0], cps):
        theta = np.mod(ens.states[0, ens.checkpoint_index(t), :], TWO_PI)
        ax.scatter(ens.tokens, theta, s=6)
        ax.set_title(f"t = {t:g}")
        ax.set_xlabel("token index")
    axes[0][0].set_ylabel("angle")
    fig.tight_layout()
    return fig


def initial_field(sampler: InitialSampler | None, n_cells: int, n_max: int) -> meanfield.SpectralField:
    """Spectrum of the initial law: uniform, or the codeword mixture of a vocabulary profile."""
    if sampler is None or sampler.kind == "iid-uniform":
        return meanfield.SpectralField.uniform(n_cells, n_max)
    vocab = sampler.profile.shape[1]
    angles = TWO_PI * np.arange(vocab) / vocab

    def fn(sigma, n):
        p = profile_at(sampler, sigma)
        return p @ np.exp(-1j * n * angles)

    return meanfield.SpectralField.from_function(fn, n_cells, n_max)


def run_meanfield(cfg: ExperimentConfig, threads: int = 1) -> dict:
    """Limiting mean field (and autocorrelation / cross-correlations) at the requested times."""
    out = _outdir(cfg)
    resolved, digest = cfg.resolved(), cfg.input_hash()
    f0 = initial_field(cfg.sampler, cfg.n_cells, cfg.n_max)
    solver = meanfield.LimitSolver(cfg.params, cfg.n_cells, cfg.n_max)
    modes = [n for n in cfg.n_list if abs(n) <= cfg.n_max]
    rows = []
    for t in cfg.times:
        f, a = solver.evolve(f0, cfg.dt_field, t, phi=cfg.phi)
        for name, fld in (("meanfield", f), ("autocov", a)):
            for n in modes:
                for s, v in zip(fld.sigma, fld.mode(n)):
                    rows.append((name, t, float(s), None, n, float(v.real), float(v.imag)))
        for s0 in cfg.sigma0_list:
            c = solver.evolve(f0, cfg.dt_field, t, phi=cfg.phi, sigma0=s0)[2]
            for n in modes:
                for s, v in zip(c.sigma, c.mode(n)):
                    rows.append(("crosscov", t, float(s), s0, n, float(v.real), float(v.imag)))
    csv_path = write_csv(out / "fields.csv", ["kind", "t", "sigma", "sigma0", "n", "value_re", "value_im"], rows,
                         resolved, digest)
    js = write_json(out / "summary.json", {"rows": len(rows)}, resolved, digest)
    return {"files": [str(csv_path), str(js)], "rows": len(rows)}


def run_correlations(cfg: ExperimentConfig, threads: int = 1) -> dict:
    """Monte Carlo modes, autocovariances and rescaled cross-covariances."""
    out = _outdir(cfg)
    resolved, digest = cfg.resolved(), cfg.input_hash()
    n_tok = cfg.params.n_tokens
    sig = cfg.sigma_list or [1.0]
    toks = {token_index(s, n_tok) for s in sig} | {token_index(s, n_tok) for s in cfg.sigma0_list}
    ens = _ensemble(cfg, tokens=sorted(toks), threads=threads)
    est = []
    for t in ens.checkpoints:
        for s in sig:
            for n in cfg.n_list:
                est.append(stats.estimate_mode(ens, t, s, n))
                if ens.replicates >= 2:
                    est.append(stats.estimate_autocov(ens, t, s, n, cfg.phi))
                for s0 in cfg.sigma0_list:
                    if token_index(s0, n_tok) < token_index(s, n_tok) and ens.replicates >= 2:
                        est.append(stats.estimate_crosscov(ens, t, s, s0, n, cfg.phi))
    csv_path = out / "estimates.csv"
    write_csv(csv_path, stats.CSV_FIELDS, [tuple(e.to_row()[k] for k in stats.CSV_FIELDS) for e in est], resolved, digest)
    js = write_json(out / "summary.json", stats.estimates_summary(est), resolved, digest)
    return {"files": [str(csv_path), str(js)], "estimates": len(est)}


def run_profile(cfg: ExperimentConfig, threads: int = 1) -> dict:
    """Closed-form score profiles, their U-shape diagnostics and a centered-correction plot."""
    import matplotlib.pyplot as plt

    out = _outdir(cfg)
    resolved, digest = cfg.resolved(), cfg.input_hash()
    p = cfg.params
    rows, reports = [], []
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    for t in cfg.times:
        prof = closedform.build_profile(p.beta, p.lam, p.vocab_size, t, cfg.n_points)
        rep = closedform.u_shape_analyze(prof)
        centered = prof.scores - np.min(prof.scores)
        for s0, sc, c in zip(prof.sigma0_grid, prof.scores, centered):
            rows.append((t, float(s0), float(sc), float(c)))
        reports.append({
            "t": t,
            "condition_ok": prof.condition_ok,
            "t_star": None if prof.condition is None else prof.condition.t_star,
            "u_shaped": rep.u_shaped,
            "argmin": rep.argmin,
            "local_minima": rep.local_minima,
            "recency_slope": rep.recency_slope,
            "primacy_ratio": rep.primacy_ratio,
            "n_terms": prof.n_terms_used,
            "notes": rep.notes,
        })
        ax.plot(prof.sigma0_grid, centered, label=f"t = {t:g}")
    ax.set_xlabel("source position")
    ax.set_ylabel("centered correction")
    ax.legend()
    fig.tight_layout()
    csv_path = write_csv(out / "profile.csv", ["t", "sigma0", "score", "centered"], rows, resolved, digest)
    js = write_json(out / "summary.json", {"profiles": reports}, resolved, digest)
    svg = write_svg(fig, out / "profile.svg", resolved, digest)
    return {"files": [str(csv_path), str(js), str(svg)], "profiles": reports}


def run_accuracy(cfg: ExperimentConfig, threads: int = 1) -> dict:
    """Soft (and, for codeword data, hard) retrieval accuracy against the closed-form expansion."""
    out = _outdir(cfg)
    resolved, digest = cfg.resolved(), cfg.input_hash()
    p = cfg.params
    n_tok = p.n_tokens
    sigma0 = cfg.sigma0_list or [k / 10 for k in range(1, 10)]
    toks = {n_tok} | {token_index(s, n_tok) for s in sigma0}
    ens = _ensemble(cfg, tokens=sorted(toks), threads=threads)
    rows, est = [], []
    for t in ens.checkpoints:
        for s0 in sigma0:
            soft = stats.soft_accuracy(ens, t, s0)
            est.append(soft)
            hard = stats.hard_accuracy(ens, t, s0) if cfg.sampler.codeword_valued else None
            if hard is not None:
                est.append(hard)
            pred = closedform.accuracy_expansion(p.beta, p.lam, p.vocab_size, n_tok, t, s0)
            rows.append((
                t, s0, soft.value.real, soft.std_error,
                None if hard is None else hard.value.real,
                None if hard is None else hard.std_error,
                pred,
            ))
    header = ["t", "sigma0", "soft", "soft_se", "hard", "hard_se", "soft_expansion"]
    csv_path = write_csv(out / "accuracy.csv", header, rows, resolved, digest)
    payload = stats.estimates_summary(est)
    payload["baseline"] = stats.soft_baseline(p.vocab_size)
    js = write_json(out / "summary.json", payload, resolved, digest)
    return {"files": [str(csv_path), str(js)], "rows": len(rows)}


def run_verify(cfg: ExperimentConfig, threads: int = 1) -> dict:
    """Run an acceptance tier; the report lists one verdict per criterion."""
    out = _outdir(cfg)
    resolved, digest = cfg.resolved(), cfg.input_hash()
    results = verify.run_tier(cfg.tier, threads=threads, replicate_scale=cfg.replicate_scale, seed=cfg.seed)
    lines = [r.line() for r in results]
    report = {"results": [r.to_dict() for r in results], "failed": [r.number for r in results if r.verdict == verify.FAIL]}
    js = write_json(out / "verify.json", report, resolved, digest)
    return {"files": [str(js)], "lines": lines, "failed": report["failed"]}


RUNNERS = {
    "simulate": run_simulate,
    "meanfield": run_meanfield,
    "correlations": run_correlations,
    "profile": run_profile,
    "accuracy": run_accuracy,
    "verify": run_verify,
}


def run(cfg: ExperimentConfig, threads: int = 1) -> dict:
    return RUNNERS[cfg.experiment](cfg, threads=threads)

