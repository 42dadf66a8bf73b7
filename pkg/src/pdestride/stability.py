"""Stability selection over a regularization path, and the end-to-end pipeline.

For each of ``B`` random half-size row subsamples the design is
re-standardized and the chosen solver is run at every path value; the
importance of a term at a path value is the fraction of subsamples whose
support contains it. Terms whose importance at the smallest penalty reaches
``pi_th`` form the stable support, which is refit by least squares on the
raw columns.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field, replace
from pathlib import Path

import numpy as np

from ._rng import derive_seed, make_rng
from .denoise import denoise_field
from .dictionary import DesignSystem, assemble_design, standardize
from .field import Field, sample_points
from .solvers import (
    PENALTY,
    SOLVERS,
    GramSystem,
    SolverError,
    SolverOptions,
    lambda_max,
    ols_refit,
    solve,
)

__all__ = [
    "LambdaPath",
    "StabilityProfile",
    "RecoveredModel",
    "StabilityError",
    "PipelineError",
    "build_path",
    "subsample_indices",
    "importance_profile",
    "stable_support",
    "refit_model",
    "run_stride",
    "pde_stride",
    "resolve_threads",
    "profile_to_csv",
    "read_profile_csv",
    "model_to_json",
]

log = logging.getLogger(__name__)

FAILURE_LIMIT = 0.10


class StabilityError(RuntimeError):
    """Degenerate path or too many failed solver runs."""


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class LambdaPath:
    lambda_max: float
    epsilon: float
    values: np.ndarray
    penalty: str = "l0"

    @property
    def M(self) -> int:
        return len(self.values)

    @property
    def normalized(self) -> np.ndarray:
        return self.values / self.lambda_max


def build_path(
    theta, ut=None, penalty: str = "l0", epsilon: float = 0.1, M: int = 20, ridge_lambda: float = 1e-5
) -> LambdaPath:
    """``M`` log-spaced values from ``lambda_max`` down to ``epsilon * lambda_max``."""
    if M < 1:
        raise ValueError("M must be >= 1")
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    lam_max = lambda_max(theta, ut, penalty, ridge_lambda)
    if lam_max == 0.0:
        raise StabilityError("lambda_max is 0: the response is orthogonal to every column")
    if M == 1:
        values = np.array([lam_max])
    else:
        values = lam_max * epsilon ** (np.arange(M) / (M - 1))
        values[0] = lam_max
        values[-1] = epsilon * lam_max
    return LambdaPath(lam_max, epsilon, values, penalty)


def subsample_indices(n: int, b: int, seed: int) -> list:
    """``b`` independent draws of ``n // 2`` distinct rows (sorted)."""
    if n < 4:
        raise ValueError("need at least 4 rows to subsample")
    half = n // 2
    return [
        np.sort(make_rng(seed, "subsample", i).choice(n, size=half, replace=False))
        for i in range(b)
    ]


@dataclass(frozen=True)
class StabilityProfile:
    path: LambdaPath
    pi: np.ndarray
    labels: tuple
    B: int
    seed: int
    solver: str = "ihtd"
    failures: int = 0

    @property
    def pi_min(self) -> np.ndarray:
        """Importances at the smallest penalty."""
        return self.pi[-1]


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        env = os.environ.get("PDESTRIDE_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


def _htp_levels(full: DesignSystem, path: LambdaPath) -> np.ndarray:
    gs = GramSystem(full.theta, full.ut)
    stepped = np.abs(gs.c) / gs.L
    return np.array([max(1, int(np.sum(stepped > np.sqrt(lam)))) for lam in path.values])


def importance_profile(
    design: DesignSystem,
    solver: str = "ihtd",
    options: SolverOptions | None = None,
    path: LambdaPath | None = None,
    B: int = 250,
    seed: int = 0,
    threads: int | None = None,
    epsilon: float = 0.1,
    M: int = 20,
) -> StabilityProfile:
    """Selection frequencies of every term along the path.

    ``design`` is the raw (unstandardized) system. The path is built once on
    the full standardized design unless given. Each subsample is
    standardized on its own rows; its solver runs are seeded from
    ``(seed, subsample index)``, so the result does not depend on
    ``threads``. For ``l1`` solvers the shared path is rescaled by the row
    ratio so that ``lambda / lambda_max`` means the same on every
    subsample. ``htp`` maps each path value to a sparsity level: the number
    of entries of the first gradient step above ``sqrt(lambda)``.
    """
    if design.standardization is not None:
        raise ValueError("importance_profile expects the raw design")
    if B < 1:
        raise ValueError("B must be >= 1")
    opts = options or SolverOptions()
    penalty = PENALTY[solver]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        full = standardize(design)
    labels = full.labels
    kept_raw = full.standardization["kept"]
    if path is None:
        path = build_path(full.theta, full.ut, penalty, epsilon, M, opts.ridge_lambda)
    lambdas = np.asarray(path.values, dtype=np.float64)
    levels = _htp_levels(full, path) if solver == "htp" else None
    raw_kept = design.columns(kept_raw)
    subsets = subsample_indices(design.n, B, seed)
    Mp = len(lambdas)

    def run(i):
        counts = np.zeros((Mp, len(labels)), dtype=np.int64)
        failures = 0
        sub = raw_kept.rows(subsets[i])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            std = standardize(sub)
        colmap = np.asarray(std.standardization["kept"], dtype=np.int64)
        if colmap.size == 0:
            return counts, 0
        gs = GramSystem(std.theta, std.ut)
        sub_opts = replace(opts, seed=derive_seed(seed, "solver", i))
        scale = std.n / full.n if penalty == "l1" else 1.0
        x_prev = None
        for j, lam in enumerate(lambdas):
            try:
                if solver == "htp":
                    coef = solve("htp", gs, K=min(int(levels[j]), gs.p), options=sub_opts)
                elif solver in ("lasso", "rlasso"):
                    coef = SOLVERS[solver](gs, None, lam * scale, sub_opts, x_prev)
                    x_prev = coef.values
                else:
                    coef = solve(solver, gs, lam=lam, options=sub_opts)
            except SolverError as exc:
                failures += 1
                log.info("subsample %d, lambda %d failed: %s", i, j, exc)
                continue
            counts[j, colmap[list(coef.support)]] = 1
        return counts, failures

    n_threads = resolve_threads(threads)
    if n_threads == 1:
        results = [run(i) for i in range(B)]
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(run, range(B)))
    counts = np.zeros((Mp, len(labels)), dtype=np.int64)
    failures = 0
    for c, f in results:
        counts += c
        failures += f
    if failures > FAILURE_LIMIT * B * Mp:
        raise StabilityError(f"{failures} of {B * Mp} solver runs failed")
    return StabilityProfile(path, counts / B, labels, B, seed, solver, failures)


def stable_support(profile: StabilityProfile, pi_th: float = 0.8) -> list:
    """Labels whose importance at the smallest penalty is at least ``pi_th``."""
    if not 0 < pi_th <= 1:
        raise ValueError("pi_th must lie in (0, 1]")
    # importances are multiples of 1/B; compare on the count scale
    need = pi_th * profile.B - 1e-9
    counts = np.rint(profile.pi_min * profile.B)
    return [lab for lab, c in zip(profile.labels, counts) if c >= need]


@dataclass(frozen=True)
class RecoveredModel:
    stable_support: tuple
    coefficients: dict
    importances: dict
    intercept: float | None = None
    meta: dict = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "support": [
                {
                    "label": lab,
                    "coefficient": float(self.coefficients[lab]),
                    "importance": float(self.importances[lab]),
                }
                for lab in self.stable_support
            ],
            "intercept": None if self.intercept is None else float(self.intercept),
            "meta": self.meta,
        }


def refit_model(design: DesignSystem, profile: StabilityProfile, pi_th: float = 0.8, meta=None) -> RecoveredModel:
    """Stable support plus least-squares coefficients on the raw columns.

    When the dictionary has a constant term an intercept is fitted alongside
    and reported if its magnitude exceeds 1e-12.
    """
    support = stable_support(profile, pi_th)
    has_const = "1" in design.labels
    raw_idx = [design.labels.index(lab) for lab in support]
    coef = ols_refit(design.theta, design.ut, raw_idx, intercept=has_const, labels=list(design.labels))
    coefficients = {lab: float(coef.values[k]) for lab, k in zip(support, raw_idx)}
    importances = {lab: float(v) for lab, v in zip(profile.labels, profile.pi_min)}
    intercept = coef.intercept if has_const and abs(coef.intercept) > 1e-12 else None
    return RecoveredModel(tuple(support), coefficients, importances, intercept, dict(meta or {}))


def run_stride(
    design: DesignSystem,
    solver: str = "ihtd",
    options: SolverOptions | None = None,
    B: int = 250,
    M: int = 20,
    epsilon: float = 0.1,
    pi_th: float = 0.8,
    seed: int = 0,
    threads: int | None = None,
    extra_meta: dict | None = None,
) -> tuple:
    """Stability selection and refit on an assembled raw design.

    Returns ``(RecoveredModel, StabilityProfile)``. Stage failures are
    re-raised as :class:`PipelineError` tagged ``stability`` or ``refit``.
    """
    opts = options or SolverOptions()
    try:
        profile = importance_profile(
            design, solver, opts, None, B, derive_seed(seed, "stability"), threads, epsilon, M
        )
    except Exception as exc:
        raise PipelineError("stability", exc) from exc
    extra = dict(extra_meta or {})
    params = {"B": B, "M": M, "epsilon": epsilon, "pi_th": pi_th, "options": opts.to_dict()}
    params.update(extra.pop("params", {}))
    meta = {
        "N": design.n,
        "p": design.p,
        "sigma": design.provenance.get("sigma"),
        "solver": solver,
        "params": params,
        "seed": seed,
    }
    meta.update(extra)
    try:
        model = refit_model(design, profile, pi_th, meta)
    except Exception as exc:
        raise PipelineError("refit", exc) from exc
    return model, profile


def pde_stride(
    fields,
    target,
    terms,
    n_samples: int,
    solver: str = "ihtd",
    options: SolverOptions | None = None,
    B: int = 250,
    M: int = 20,
    epsilon: float = 0.1,
    pi_th: float = 0.8,
    seed: int = 0,
    region=None,
    denoise=True,
    threads: int | None = None,
    sigma: float | None = None,
) -> tuple:
    """Denoise, assemble, run stability selection and refit.

    Parameters
    ----------
    fields : Field or list of Field
        Observed (possibly noisy) fields on one grid.
    target : int or str
        Field whose time derivative is the response.
    terms : list of TermSpec
    denoise : bool or int
        ``True`` picks each field's SVD rank at the elbow, an int fixes the
        rank, ``False`` skips denoising.
    sigma : float, optional
        Noise level, recorded in the metadata only.

    Returns
    -------
    (RecoveredModel, StabilityProfile, DesignSystem)
    """
    if isinstance(fields, Field):
        fields = [fields]
    fields = list(fields)

    ranks = []
    try:
        if denoise is not False:
            out = []
            for f in fields:
                den, rep = denoise_field(f, None if denoise is True else int(denoise))
                out.append(den)
                ranks.append(rep.chosen_rank)
            fields = out
    except Exception as exc:
        raise PipelineError("denoise", exc) from exc

    try:
        margin = max((t.halfwidth for t in terms), default=0)
        samples = sample_points(fields[0], region, n_samples, derive_seed(seed, "points"), margin)
        design = assemble_design(fields, target, terms, samples, {"sigma": sigma})
    except Exception as exc:
        raise PipelineError("dictionary", exc) from exc

    model, profile = run_stride(
        design, solver, options, B, M, epsilon, pi_th, seed, threads,
        {"params": {"denoise_ranks": ranks}},
    )
    return model, profile, design


# ------------------------------------------------------------------- exports


def profile_to_csv(profile: StabilityProfile, path=None) -> str:
    """``lambda_star,<label_1>,...`` header and one row per path value."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["lambda_star", *profile.labels])
    for lam_star, row in zip(profile.path.normalized, profile.pi):
        writer.writerow([repr(float(lam_star))] + [repr(float(v)) for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_profile_csv(path) -> tuple:
    """Parse a profile CSV into ``(labels, lambda_star, pi)``; validates the schema."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "lambda_star" or len(rows[0]) < 2:
        raise ValueError(f"{path}: header must start with lambda_star")
    labels = rows[0][1:]
    data = np.array([[float(c) for c in r] for r in rows[1:]], dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != len(labels) + 1:
        raise ValueError(f"{path}: ragged rows")
    pi = data[:, 1:]
    if np.any(pi < 0) or np.any(pi > 1):
        raise ValueError(f"{path}: importances outside [0, 1]")
    if np.any(np.diff(data[:, 0]) >= 0):
        raise ValueError(f"{path}: lambda_star must decrease")
    return labels, data[:, 0], pi


def model_to_json(model: RecoveredModel, path=None) -> str:
    text = json.dumps(model.to_dict(), indent=2, sort_keys=True) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text
