"""Experiment drivers behind the command line: q sweeps, single chains, the
force table and the two inverse problems.

Every driver returns plain Python results and, when given an output
directory, writes CSV series plus a metadata JSON whose ``"config"`` entry
replays the run exactly.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .config import ExperimentConfig
from .diagnostics import MixingReport, summarize
from .errors import ConfigError
from .integrator import IntegratorConfig
from .inverse.diffusion import (
    diffusion_hamiltonian,
    diffusion_solve,
    make_diffusion_problem,
    reconstruction_metrics,
)
from .inverse.gravity import gravity_hamiltonian, make_gravity_problem, posterior_mode
from .potentials import get_potential, octic
from .qcalc import DeformationParameter, HamiltonianSpec, jackson_dx
from .sampler import ChainOutput, SamplerConfig, run_chain

__all__ = [
    "SWEEP_COLUMNS",
    "FORCE_COLUMNS",
    "SweepRow",
    "q_seed",
    "build_hamiltonian",
    "run_single",
    "run_sweep",
    "force_table",
    "run_force_table",
    "run_inverse",
    "samples_digest",
]

SWEEP_COLUMNS = ("q", "time_s", "accept_rate", "ess", "iat", "ess_per_time")
FORCE_COLUMNS = ("q", "reference_point", "jackson_derivative", "force_magnitude")


def q_seed(seed: int, index: int) -> int:
    """Seed of the chain at position ``index`` of a q grid."""
    return int(seed) ^ int(index)


def samples_digest(chain: ChainOutput) -> str:
    return hashlib.sha256(np.ascontiguousarray(chain.samples, dtype="<f8").tobytes()).hexdigest()


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "nan" if math.isnan(v) else repr(v)


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _write_json(path: Path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, allow_nan=True)
        fh.write("\n")


def build_hamiltonian(cfg: ExperimentConfig) -> HamiltonianSpec:
    pot = get_potential(cfg.target)
    if len(cfg.x0) != pot.dimension:
        raise ConfigError(f"x0 has {len(cfg.x0)} entries but target {cfg.target!r} has dimension {pot.dimension}")
    if cfg.analyzed_coordinate >= pot.dimension:
        raise ConfigError(f"analyzed_coordinate {cfg.analyzed_coordinate} out of range for {cfg.target!r}")
    return HamiltonianSpec(pot.field)


def _sampler_config(cfg: ExperimentConfig, q: float, seed: int) -> SamplerConfig:
    icfg = IntegratorConfig(cfg.dt, cfg.steps, DeformationParameter(q))
    return SamplerConfig(icfg, cfg.n_samples, cfg.burn_in, seed, cfg.adapt)


@dataclass
class SweepRow:
    q: float
    seed: int
    time_s: float
    accept_rate: float
    ess: float
    iat: float
    ess_per_time: float
    valid: bool
    n_divergent: int
    degenerate: bool
    final_dt: float
    samples_sha256: str

    def csv_row(self):
        if not self.valid:
            return (self.q, self.time_s, self.accept_rate, "nan", "N/A", "nan")
        return (self.q, self.time_s, self.accept_rate, self.ess, self.iat, self.ess_per_time)


def _row(q, seed, chain: ChainOutput, rep: MixingReport) -> SweepRow:
    return SweepRow(q, seed, chain.wall_time, rep.accept_rate, rep.ess, rep.iat, rep.ess_per_second,
                    rep.valid, rep.n_divergent, rep.degenerate, chain.final_dt, samples_digest(chain))


def _one_chain(cfg: ExperimentConfig, index: int):
    H = build_hamiltonian(cfg)
    q = cfg.q_values[index]
    seed = q_seed(cfg.seed, index)
    chain = run_chain(np.array(cfg.x0), H, _sampler_config(cfg, q, seed))
    rep = summarize(chain, coordinate=cfg.analyzed_coordinate, k_max=cfg.k_max)
    return chain, rep


def _write_chain_series(out: Path, tag: str, chain: ChainOutput, rep: MixingReport, H: HamiltonianSpec,
                        coordinate: int, bins: int = 50):
    d = chain.samples.shape[1]
    with np.errstate(over="ignore", invalid="ignore"):
        pot = H.potential.batch(chain.samples)
    _write_csv(out / f"trace_{tag}.csv",
               ["iteration"] + [f"x{i}" for i in range(d)] + ["potential", "accepted", "diverged"],
               ([k, *chain.samples[k], pot[k], chain.accepted[k], chain.diverged[k]]
                for k in range(chain.n_samples)))
    _write_csv(out / f"acf_{tag}.csv", ["lag", "rho"], enumerate(rep.acf))
    y = chain.samples[chain.burn_in:, coordinate]
    y = y[np.isfinite(y)]
    if y.size:
        dens, edges = np.histogram(y, bins=bins, density=True)
        rows = zip(edges[:-1], edges[1:], dens)
    else:
        rows = []
    _write_csv(out / f"hist_{tag}.csv", ["bin_left", "bin_right", "density"], rows)


def run_sweep(cfg: ExperimentConfig, out_dir=None, keep_chains: bool = False):
    """One chain per q value; chain ``i`` uses seed ``cfg.seed ^ i``.

    Returns the list of :class:`SweepRow` (and the chains when
    ``keep_chains``). With ``cfg.workers > 1`` the chains run in separate
    processes; results are identical to a sequential sweep.
    """
    if cfg.is_inverse:
        raise ConfigError("sweeps run on potential targets; use the inverse command for gravity/diffusion")
    H = build_hamiltonian(cfg)
    idx = range(len(cfg.q_values))
    if cfg.workers > 1 and len(cfg.q_values) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(cfg.q_values))) as ex:
            results = list(ex.map(_one_chain, [cfg] * len(idx), idx))
    else:
        results = [_one_chain(cfg, i) for i in idx]

    rows = [_row(cfg.q_values[i], q_seed(cfg.seed, i), ch, rep) for i, (ch, rep) in zip(idx, results)]
    if out_dir is not None:
        out = Path(out_dir)
        _write_csv(out / "sweep.csv", SWEEP_COLUMNS, (r.csv_row() for r in rows))
        for i, (ch, rep) in zip(idx, results):
            _write_chain_series(out, f"q{i:02d}", ch, rep, H, cfg.analyzed_coordinate)
        _write_json(out / "sweep.json", {"kind": "sweep", "config": cfg.to_dict(),
                                         "runs": [asdict(r) for r in rows]})
    if keep_chains:
        return rows, [ch for ch, _ in results]
    return rows


def run_single(cfg: ExperimentConfig, out_dir=None):
    """A single chain at the first q value. Returns ``(chain, report)``."""
    if cfg.is_inverse:
        raise ConfigError("single chains run on potential targets; use the inverse command for gravity/diffusion")
    H = build_hamiltonian(cfg)
    chain, rep = _one_chain(cfg, 0)
    if out_dir is not None:
        out = Path(out_dir)
        _write_chain_series(out, "chain", chain, rep, H, cfg.analyzed_coordinate)
        row = _row(cfg.q_values[0], q_seed(cfg.seed, 0), chain, rep)
        _write_csv(out / "summary.csv", SWEEP_COLUMNS, [row.csv_row()])
        _write_json(out / "chain.json", {"kind": "chain", "config": cfg.to_dict(), "run": asdict(row)})
    return chain, rep


def force_table(x: float, q_values) -> list[tuple]:
    """Rows (q, q^2 x, Jackson derivative of x^8 at x, q^(1/2) times that derivative).

    At q == 1 the derivative is the classical one.
    """
    field = octic().field
    rows = []
    for q in q_values:
        dp = DeformationParameter(float(q))
        d = jackson_dx(field, np.array([float(x)]), 0, dp)
        rows.append((float(q), float(q) * float(q) * float(x), d, dp.sqrt_q * abs(d)))
    return rows


def run_force_table(x: float, q_values, out_dir=None) -> list[tuple]:
    rows = force_table(x, q_values)
    if out_dir is not None:
        _write_csv(Path(out_dir) / "force_table.csv", FORCE_COLUMNS, rows)
    return rows


def _gravity(cfg: ExperimentConfig, out: Optional[Path]) -> dict:
    ps = cfg.problem
    model, record = make_gravity_problem(ps["true_h"], ps["x_f"], ps["sensors"], ps["sigma"], ps["prior_mean"],
                                         ps["prior_std"], seed=int(ps["data_seed"]), noise=bool(ps["noise"]))
    x0 = np.array(cfg.x0) if cfg.x0 else np.array([ps["prior_mean"]])
    mode = posterior_mode(model)
    runs = []
    for i, q in enumerate(cfg.q_values):
        classical = q == 1.0 and ps["forward_difference_step"] > 0
        H = gravity_hamiltonian(model, ps["forward_difference_step"] if classical else None)
        seed = q_seed(cfg.seed, i)
        chain = run_chain(x0, H, _sampler_config(cfg, q, seed))
        post = chain.samples[chain.burn_in:, 0]
        run = {
            "q": q,
            "seed": seed,
            "gradient": "forward_difference" if classical else "jackson",
            "accept_rate": chain.accept_rate,
            "posterior_mean": float(np.mean(post)),
            "posterior_std": float(np.std(post)),
            "n_divergent": int(chain.diverged.sum()),
            "time_s": chain.wall_time,
            "samples_sha256": samples_digest(chain),
        }
        runs.append(run)
        if out is not None:
            tag = f"q{i:02d}"
            _write_csv(out / f"trace_{tag}.csv", ["iteration", "h", "potential", "accepted"],
                       ([k, chain.samples[k, 0], model.potential_batch(chain.samples[k, 0]), chain.accepted[k]]
                        for k in range(chain.n_samples)))
            dens, edges = np.histogram(post, bins=int(ps["hist_bins"]), density=True)
            _write_csv(out / f"hist_{tag}.csv", ["bin_left", "bin_right", "density"], zip(edges[:-1], edges[1:], dens))
    result = {"problem": "gravity", "posterior_mode": mode, "runs": runs}
    if out is not None:
        _write_csv(out / "summary.csv", ["q", "gradient", "accept_rate", "posterior_mean", "posterior_std", "posterior_mode"],
                   ((r["q"], r["gradient"], r["accept_rate"], r["posterior_mean"], r["posterior_std"], mode)
                    for r in runs))
        _write_json(out / "inverse.json", {"kind": "inverse", "config": cfg.to_dict(), "data": record, **result})
    return result


def _diffusion(cfg: ExperimentConfig, out: Optional[Path]) -> dict:
    ps = cfg.problem
    model, record = make_diffusion_problem(int(ps["grid_n"]), int(ps["n_modes"]), int(ps["n_obs"]), ps["sigma"],
                                           ps["smoothness"], ps["source"], seed=int(ps["data_seed"]),
                                           noise=bool(ps["noise"]))
    k = model.kl.n_modes
    x0 = np.array(cfg.x0) if cfg.x0 else np.zeros(k)
    if x0.size != k:
        raise ConfigError(f"x0 must have n_modes = {k} entries")
    H = diffusion_hamiltonian(model)
    alpha_true = np.array(record["alpha_true"])
    runs = []
    for i, q in enumerate(cfg.q_values):
        seed = q_seed(cfg.seed, i)
        chain = run_chain(x0, H, _sampler_config(cfg, q, seed))
        alphas = np.exp(chain.samples[chain.burn_in:] @ model.kl_design)
        a_mean, a_std = alphas.mean(axis=0), alphas.std(axis=0)
        metrics = reconstruction_metrics(a_mean, alpha_true)
        runs.append({
            "q": q,
            "seed": seed,
            "accept_rate": chain.accept_rate,
            "final_dt": chain.final_dt,
            "rmse": metrics["rmse"],
            "correlation": metrics["correlation"],
            "n_divergent": int(chain.diverged.sum()),
            "time_s": chain.wall_time,
            "samples_sha256": samples_digest(chain),
        })
        if out is not None:
            tag = f"q{i:02d}"
            u_mean = diffusion_solve(a_mean, model)
            _write_csv(out / f"reconstruction_{tag}.csv",
                       ["x", "alpha_true", "alpha_mean", "alpha_std", "u_true", "u_at_mean"],
                       zip(model.grid, alpha_true, a_mean, a_std, record["u_true"], u_mean))
            _write_csv(out / f"trace_{tag}.csv",
                       ["iteration", "potential", "accepted", "dt"] + [f"theta{j}" for j in range(k)],
                       ([n, H.potential(chain.samples[n]), chain.accepted[n], chain.dt_trace[n], *chain.samples[n]]
                        for n in range(chain.n_samples)))
    result = {"problem": "diffusion", "runs": runs}
    if out is not None:
        _write_csv(out / "observations.csv", ["x", "node", "data"],
                   zip(model.obs_points, model.obs_nodes, model.data))
        _write_csv(out / "summary.csv", ["q", "accept_rate", "final_dt", "rmse", "correlation"],
                   ((r["q"], r["accept_rate"], r["final_dt"], r["rmse"], r["correlation"]) for r in runs))
        _write_json(out / "inverse.json", {"kind": "inverse", "config": cfg.to_dict(), "data": record, **result})
    return result


def run_inverse(cfg: ExperimentConfig, out_dir=None) -> dict:
    """Generate synthetic data, sample the posterior at each q and report."""
    out = Path(out_dir) if out_dir is not None else None
    if cfg.target == "gravity":
        return _gravity(cfg, out)
    if cfg.target == "diffusion":
        return _diffusion(cfg, out)
    raise ConfigError(f"unknown inverse problem {cfg.target!r}; known problems: gravity, diffusion")
