"""Achievability sweeps and paired solver comparisons on simulated Burgers data.

A trial draws a fresh noise realization and a fresh set of sample points
from a cached clean simulation, then asks whether the true support is
recovered: either by stability selection (``mode="stride"``) or by a bare
solver at any value of the regularization path (``mode="solver_path"``).
"""
from __future__ import annotations

import csv
import io
import logging
import warnings
from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from pathlib import Path

import numpy as np

from ._rng import derive_seed
from .denoise import denoise_field
from .dictionary import assemble_design, preset_terms, standardize
from .field import add_noise, sample_points
from .simulate import BurgersConfig, simulate_burgers
from .solvers import PENALTY, GramSystem, SolverError, SolverOptions, solve
from .stability import build_path, pde_stride

__all__ = [
    "BURGERS_TRUTH",
    "ExperimentDesign",
    "AchievabilityRow",
    "burgers_source",
    "run_trial",
    "achievability",
    "compare_solvers",
    "rows_to_csv",
    "read_rows_csv",
    "mostly_monotone",
]

log = logging.getLogger(__name__)

BURGERS_TRUTH = ("u*u_x", "u_xx")
MODES = ("stride", "solver_path")
CSV_COLUMNS = ("model", "p", "sigma", "n", "reps", "successes", "frequency", "variance")


@lru_cache(maxsize=4)
def burgers_source(config: BurgersConfig = BurgersConfig()):
    """Clean Burgers field, simulated once per configuration."""
    return simulate_burgers(config)


@dataclass(frozen=True)
class ExperimentDesign:
    """One ``(N, p, sigma)`` cell of a sweep."""

    n: int
    preset: str = "burgers-p19"
    sigma: float = 0.0
    reps: int = 20
    mode: str = "stride"
    solver: str = "ihtd"
    options: SolverOptions = dc_field(default_factory=SolverOptions)
    truth: tuple = BURGERS_TRUTH
    model: str = "burgers"
    B: int = 250
    M: int = 20
    epsilon: float = 0.1
    pi_th: float = 0.8

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.model != "burgers":
            raise ValueError("only the burgers model is wired into the harness")
        object.__setattr__(self, "truth", tuple(self.truth))

    @property
    def terms(self) -> list:
        return preset_terms(self.preset)

    @property
    def p(self) -> int:
        return len(self.terms)


@dataclass(frozen=True)
class AchievabilityRow:
    design: ExperimentDesign
    successes: int

    @property
    def frequency(self) -> float:
        return self.successes / self.design.reps

    @property
    def variance(self) -> float:
        f = self.frequency
        return f * (1.0 - f) / self.design.reps

    def to_record(self) -> dict:
        d = self.design
        return {
            "model": d.model,
            "p": d.p,
            "sigma": d.sigma,
            "n": d.n,
            "reps": d.reps,
            "successes": self.successes,
            "frequency": self.frequency,
            "variance": self.variance,
        }


def _observe(design: ExperimentDesign, trial_seed: int, source):
    clean = source if source is not None else burgers_source()
    noisy = add_noise(clean, design.sigma, derive_seed(trial_seed, "noise"))
    return noisy


def _solver_path_success(design: ExperimentDesign, field, trial_seed: int) -> bool:
    terms = design.terms
    denoised, _ = denoise_field(field)
    margin = max(t.halfwidth for t in terms)
    samples = sample_points(denoised, None, design.n, derive_seed(trial_seed, "points"), margin)
    raw = assemble_design([denoised], 0, terms, samples)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        std = standardize(raw)
    labels = std.labels
    truth = set(design.truth)
    gs = GramSystem(std.theta, std.ut)
    path = build_path(gs, None, PENALTY[design.solver], design.epsilon, design.M, design.options.ridge_lambda)
    options = design.options
    if design.solver == "htp":
        stepped = np.abs(gs.c) / gs.L
        levels = sorted({max(1, int(np.sum(stepped > np.sqrt(lam)))) for lam in path.values})
        runs = [dict(K=min(k, gs.p)) for k in levels]
    else:
        runs = [dict(lam=lam) for lam in path.values]
    for kw in runs:
        try:
            coef = solve(design.solver, gs, options=options, **kw)
        except SolverError:
            continue
        if {labels[k] for k in coef.support} == truth:
            return True
    return False


def run_trial(design: ExperimentDesign, trial_seed: int, source=None, threads: int | None = None) -> bool:
    """Whether one seeded trial recovers exactly ``design.truth``.

    ``source`` overrides the cached clean simulation (useful for tests).
    """
    labels = {t.label for t in design.terms}
    if not set(design.truth) <= labels:
        warnings.warn(f"truth {design.truth} is not contained in preset {design.preset}")
        return False
    field = _observe(design, trial_seed, source)
    if design.mode == "solver_path":
        return _solver_path_success(design, field, trial_seed)
    model, _, _ = pde_stride(
        field,
        0,
        design.terms,
        design.n,
        solver=design.solver,
        options=design.options,
        B=design.B,
        M=design.M,
        epsilon=design.epsilon,
        pi_th=design.pi_th,
        seed=trial_seed,
        threads=threads,
        sigma=design.sigma,
    )
    return set(model.stable_support) == set(design.truth)


def _trial_seed(master_seed: int, cell: int, trial: int) -> int:
    return derive_seed(master_seed, "trial", cell, trial)


def achievability(designs, master_seed: int, source=None, threads: int | None = None, cells=None) -> list:
    """Success counts for every design.

    Trial ``t`` of the ``i``-th design uses the seed derived from
    ``(master_seed, cells[i], t)``; ``cells`` defaults to ``range(len(designs))``.
    Designs sharing a cell index therefore see identical noise and sample
    points, which is what paired comparisons rely on.
    """
    designs = list(designs)
    if not designs:
        raise ValueError("no designs given")
    cells = list(range(len(designs))) if cells is None else list(cells)
    rows = []
    for design, cell in zip(designs, cells):
        hits = 0
        for t in range(design.reps):
            hits += bool(run_trial(design, _trial_seed(master_seed, cell, t), source, threads))
        log.info("n=%d p=%d sigma=%g: %d/%d", design.n, design.p, design.sigma, hits, design.reps)
        rows.append(AchievabilityRow(design, hits))
    return rows


def compare_solvers(
    grid,
    solvers=("lasso", "stridge", "ihtd"),
    reps: int = 30,
    master_seed: int = 0,
    options: SolverOptions | None = None,
    source=None,
) -> dict:
    """Paired ``solver_path`` success tables, one list of rows per solver.

    ``grid`` holds ``(n, preset, sigma)`` triples. Every solver sees the same
    noise and points for a given cell and trial.
    """
    grid = list(grid)
    opts = options or SolverOptions()
    out = {}
    for solver in solvers:
        designs = [
            ExperimentDesign(n=n, preset=preset, sigma=sigma, reps=reps, mode="solver_path", solver=solver, options=opts)
            for n, preset, sigma in grid
        ]
        out[solver] = achievability(designs, master_seed, source)
    return out


def rows_to_csv(rows, path=None) -> str:
    """CSV sorted by ``(p, sigma, n)``."""
    records = sorted((r.to_record() for r in rows), key=lambda r: (r["p"], r["sigma"], r["n"]))
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for rec in records:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in rec.items()})
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_rows_csv(path) -> list:
    """Parse an achievability CSV back into dicts; validates the columns."""
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: expected columns {','.join(CSV_COLUMNS)}")
        out = []
        for rec in reader:
            out.append(
                {
                    "model": rec["model"],
                    "p": int(rec["p"]),
                    "sigma": float(rec["sigma"]),
                    "n": int(rec["n"]),
                    "reps": int(rec["reps"]),
                    "successes": int(rec["successes"]),
                    "frequency": float(rec["frequency"]),
                    "variance": float(rec["variance"]),
                }
            )
    return out


def mostly_monotone(values, allowed_drops: int = 1) -> bool:
    """True if ``values`` is non-decreasing apart from at most ``allowed_drops`` steps."""
    drops = sum(1 for a, b in zip(values, values[1:]) if b < a)
    return drops <= allowed_drops
