"""Sparsity-promoting least-squares solvers.

Every solver maps ``(theta, ut, lam or K, options)`` to :class:`Coefficients`
for the loss ``0.5 * ||ut - theta @ xi||^2`` plus its penalty. Designs are
expected to be standardized (see :func:`pdestride.dictionary.standardize`),
except for :func:`ols_refit`, which works on raw columns.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import _kernels
from ._rng import make_rng

__all__ = [
    "SolverOptions",
    "Coefficients",
    "SolverError",
    "GramSystem",
    "soft_threshold",
    "hard_threshold",
    "lipschitz",
    "lambda_max",
    "lasso_cd",
    "randomized_lasso",
    "iht",
    "iht_d",
    "htp",
    "stridge",
    "ols_refit",
    "SOLVERS",
    "PENALTY",
    "solve",
]


class SolverError(RuntimeError):
    """A solver could not produce a valid answer (singular system, ...)."""


@dataclass(frozen=True)
class SolverOptions:
    maxit: int = 1000
    subit: int = 100
    tol: float = 1e-6
    lasso_alpha: float = 0.2
    ridge_lambda: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if self.maxit < 1 or self.subit < 1:
            raise ValueError("maxit and subit must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0 < self.lasso_alpha <= 1:
            raise ValueError("lasso_alpha must lie in (0, 1]")
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be >= 0")

    def to_dict(self) -> dict:
        return {
            "maxit": self.maxit,
            "subit": self.subit,
            "tol": self.tol,
            "lasso_alpha": self.lasso_alpha,
            "ridge_lambda": self.ridge_lambda,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class Coefficients:
    values: np.ndarray
    iterations_used: int = 0
    converged: bool = True
    intercept: float = 0.0
    info: dict = dc_field(default_factory=dict)

    @property
    def support(self) -> tuple:
        return tuple(int(k) for k in np.flatnonzero(self.values))


def soft_threshold(x, gamma):
    """``sign(x) * max(|x| - gamma, 0)``."""
    if np.any(np.asarray(gamma) < 0):
        raise ValueError("gamma must be >= 0")
    return np.sign(x) * np.maximum(np.abs(x) - gamma, 0.0)


def hard_threshold(x, lam):
    """Zero every entry with ``|x| <= sqrt(lam)``; keep the rest unchanged."""
    if np.any(np.asarray(lam) < 0):
        raise ValueError("lambda must be >= 0")
    x = np.asarray(x, dtype=np.float64)
    out = np.where(np.abs(x) <= np.sqrt(lam), 0.0, x)
    return out if out.ndim else float(out)


def lipschitz(theta, tol: float = 1e-12, maxit: int = 100_000) -> float:
    """Squared spectral norm of ``theta`` by power iteration on its Gram matrix."""
    theta = np.asarray(theta, dtype=np.float64)
    G = theta.T @ theta if theta.shape[0] >= theta.shape[1] else theta @ theta.T
    return float(_kernels.power_iteration(np.ascontiguousarray(G), tol, maxit))


class GramSystem:
    """Cached ``theta.T theta``, ``theta.T ut`` and Lipschitz constant of one design."""

    def __init__(self, theta, ut):
        theta = np.asarray(theta, dtype=np.float64)
        ut = np.asarray(ut, dtype=np.float64).ravel()
        if theta.ndim != 2 or theta.shape[0] != ut.shape[0]:
            raise ValueError("theta must be N x p with N = len(ut)")
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(ut))):
            raise ValueError("design contains non-finite entries")
        self.theta = theta
        self.ut = ut
        self.G = np.ascontiguousarray(theta.T @ theta)
        self.c = theta.T @ ut
        self.yy = float(ut @ ut)
        self._L = None

    @property
    def p(self) -> int:
        return self.theta.shape[1]

    @property
    def L(self) -> float:
        if self._L is None:
            self._L = float(_kernels.power_iteration(self.G, 1e-12, 100_000))
        return self._L


def _as_gram(theta, ut) -> GramSystem:
    return theta if isinstance(theta, GramSystem) else GramSystem(theta, ut)


def _ridge(theta, ut, ridge_lambda):
    p = theta.shape[1]
    A = theta.T @ theta + ridge_lambda * np.eye(p)
    try:
        if ridge_lambda == 0 and np.linalg.matrix_rank(theta) < p:
            raise np.linalg.LinAlgError("rank-deficient design")
        return np.linalg.solve(A, theta.T @ ut)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"ridge solve failed: {exc}") from exc


def lambda_max(theta, ut=None, penalty: str = "l0", ridge_lambda: float = 1e-5) -> float:
    """Smallest penalty at which the solver family returns the empty model.

    ``l1``: ``max_k |theta_k . ut|``. ``l0``: ``(max_k |theta_k . ut| / L)^2``,
    so the first IHT step from zero is fully thresholded. ``ridge``: the
    largest ridge-coefficient magnitude, the STRidge threshold scale.
    """
    gs = _as_gram(theta, ut)
    corr = float(np.max(np.abs(gs.c))) if gs.p else 0.0
    if corr == 0.0:
        return 0.0
    if penalty == "l1":
        return corr
    if penalty == "l0":
        return (corr / gs.L) ** 2
    if penalty == "ridge":
        return float(np.max(np.abs(_ridge(gs.theta, gs.ut, ridge_lambda))))
    raise ValueError(f"unknown penalty {penalty!r}")


def _check_lambda(lam):
    if not lam >= 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")


def _full_rank(gs: GramSystem) -> bool:
    return np.linalg.matrix_rank(gs.theta) == gs.p


def lasso_cd(theta, ut=None, lam: float = 0.0, options: SolverOptions | None = None, x0=None):
    """LASSO by cyclic coordinate descent with soft thresholding.

    ``converged`` means the KKT conditions hold to ``1e-6 * lam`` (or
    ``1e-9`` when ``lam == 0``).
    """
    opts = options or SolverOptions()
    gs = _as_gram(theta, ut)
    _check_lambda(lam)
    if lam == 0 and not _full_rank(gs):
        raise SolverError("lambda=0 on a rank-deficient design has no unique solution")
    return _lasso_weighted(gs, lam, np.full(gs.p, float(lam)), opts, x0)


def _lasso_weighted(gs, lam, pen, opts, x0=None):
    x = np.zeros(gs.p) if x0 is None else np.array(x0, dtype=np.float64)
    kkt_tol = 1e-6 * lam if lam > 0 else 1e-9
    x, it, ok, viol = _kernels.lasso_cd(gs.G, gs.c, pen, x, opts.maxit, kkt_tol)
    return Coefficients(x, int(it), bool(ok), info={"kkt_residual": float(viol)})


def randomized_lasso(theta, ut=None, lam: float = 0.0, options: SolverOptions | None = None, x0=None):
    """LASSO with per-column penalties ``lam / W_k``, ``W_k ~ U[alpha, 1]``.

    Solved by rescaling column ``k`` by ``W_k``; the weights depend only on
    ``options.seed``.
    """
    opts = options or SolverOptions()
    gs = _as_gram(theta, ut)
    _check_lambda(lam)
    if lam == 0 and not _full_rank(gs):
        raise SolverError("lambda=0 on a rank-deficient design has no unique solution")
    w = make_rng(opts.seed, "randomized_lasso").uniform(opts.lasso_alpha, 1.0, gs.p)
    if opts.lasso_alpha == 1.0:
        w = np.ones(gs.p)
    Gw = np.ascontiguousarray(gs.G * np.outer(w, w))
    cw = gs.c * w
    beta0 = None if x0 is None else np.asarray(x0) / w
    kkt_tol = 1e-6 * lam if lam > 0 else 1e-9
    beta = np.zeros(gs.p) if beta0 is None else np.array(beta0, dtype=np.float64)
    beta, it, ok, viol = _kernels.lasso_cd(Gw, cw, np.full(gs.p, float(lam)), beta, opts.maxit, kkt_tol)
    return Coefficients(w * beta, int(it), bool(ok), info={"weights": w, "kkt_residual": float(viol)})


def iht(theta, ut=None, lam: float = 0.0, options: SolverOptions | None = None):
    """Iterative hard thresholding, step ``1/L``, started at zero.

    The objective ``0.5 * ||ut - theta xi||^2 + 0.5 * L * lam * ||xi||_0`` is
    checked to be non-increasing; thresholding at ``sqrt(lam)`` after a
    ``1/L`` gradient step is exactly its majorize-minimize update.
    """
    opts = options or SolverOptions()
    gs = _as_gram(theta, ut)
    _check_lambda(lam)
    if gs.L == 0.0:
        return Coefficients(np.zeros(gs.p), 0, True)
    x, it, ok, monotone = _kernels.iht(gs.G, gs.c, gs.yy, gs.L, float(lam), opts.maxit, opts.tol)
    if not monotone:
        raise RuntimeError("IHT objective increased: step-size contract violated")
    return Coefficients(x, int(it), bool(ok))


def iht_d(theta, ut=None, lam: float = 0.0, options: SolverOptions | None = None):
    """IHT with debiasing.

    Each outer step thresholds a ``1/L`` gradient step to get a support
    ``S``, then runs up to ``subit`` gradient steps of size ``1/L_S`` on the
    loss restricted to ``S``. Returns as soon as
    ``||ut - theta u||^2 <= lam * |S|``.
    """
    opts = options or SolverOptions()
    gs = _as_gram(theta, ut)
    _check_lambda(lam)
    if gs.L == 0.0:
        return Coefficients(np.zeros(gs.p), 0, True)
    x, it, ok, descent = _kernels.iht_debiased(
        gs.G, gs.c, gs.yy, gs.L, float(lam), float(lam), opts.maxit, opts.subit, opts.tol
    )
    if not descent:
        raise RuntimeError("debiasing step increased the residual")
    return Coefficients(x, int(it), bool(ok))


def _restricted_lstsq(theta, ut, support):
    sub = theta[:, support]
    if np.linalg.matrix_rank(sub) < len(support):
        raise SolverError("restricted least-squares system is rank deficient")
    sol, *_ = np.linalg.lstsq(sub, ut, rcond=None)
    return sol


def htp(theta, ut=None, K: int = 1, options: SolverOptions | None = None):
    """Hard thresholding pursuit: keep the ``K`` largest entries of a gradient
    step, then solve least squares exactly on them, until the support repeats."""
    opts = options or SolverOptions()
    gs = _as_gram(theta, ut)
    p = gs.p
    if not 1 <= K <= p:
        raise ValueError(f"K must lie in [1, {p}], got {K}")
    x = np.zeros(p)
    prev = None
    L = gs.L
    for it in range(1, opts.maxit + 1):
        z = x - (gs.G @ x - gs.c) / L
        # stable sort so ties resolve to the lower index
        support = np.sort(np.argsort(-np.abs(z), kind="stable")[:K])
        x = np.zeros(p)
        x[support] = _restricted_lstsq(gs.theta, gs.ut, support)
        if prev is not None and np.array_equal(support, prev):
            return Coefficients(x, it, True)
        prev = support
    return Coefficients(x, opts.maxit, False)


def stridge(theta, ut=None, threshold: float = 0.0, options: SolverOptions | None = None):
    """Sequentially thresholded ridge regression.

    Ridge-solve, zero coefficients with ``|xi_k| < threshold``, re-solve on
    the survivors, and repeat until the support stops changing.
    """
    opts = options or SolverOptions()
    gs = _as_gram(theta, ut)
    _check_lambda(threshold)
    p = gs.p
    support = np.arange(p)
    x = np.zeros(p)
    for it in range(1, opts.maxit + 1):
        x = np.zeros(p)
        if support.size:
            x[support] = _ridge(gs.theta[:, support], gs.ut, opts.ridge_lambda)
        keep = support[np.abs(x[support]) >= threshold]
        if keep.size == support.size:
            return Coefficients(x, it, True)
        support = keep
    x = np.zeros(p)
    if support.size:
        x[support] = _ridge(gs.theta[:, support], gs.ut, opts.ridge_lambda)
    return Coefficients(x, opts.maxit, False)


def ols_refit(theta_raw, ut_raw, support, intercept: bool = False, labels=None):
    """Least squares on the raw columns in ``support``; zero elsewhere.

    With ``intercept=True`` a free constant is fitted alongside and returned
    as ``Coefficients.intercept``.
    """
    theta_raw = np.asarray(theta_raw, dtype=np.float64)
    ut_raw = np.asarray(ut_raw, dtype=np.float64).ravel()
    support = [int(k) for k in support]
    n, p = theta_raw.shape
    cols = [theta_raw[:, k] for k in support]
    if intercept:
        cols = [np.ones(n)] + cols
    if len(cols) > n:
        raise SolverError(f"support of size {len(cols)} exceeds N={n}")
    values = np.zeros(p)
    if not cols:
        return Coefficients(values, 1, True)
    A = np.stack(cols, axis=1)
    rank = np.linalg.matrix_rank(A)
    if rank < A.shape[1]:
        names = (["1"] if intercept else []) + [
            labels[k] if labels is not None else str(k) for k in support
        ]
        _, _, vt = np.linalg.svd(A, full_matrices=False)
        null = np.abs(vt[-1])
        involved = [nm for nm, w in zip(names, null) if w > 1e-8]
        raise SolverError(f"collinear columns in refit: {', '.join(involved)}")
    sol, *_ = np.linalg.lstsq(A, ut_raw, rcond=None)
    b0 = 0.0
    if intercept:
        b0, sol = float(sol[0]), sol[1:]
    values[support] = sol
    return Coefficients(values, 1, True, intercept=b0)


SOLVERS = {
    "lasso": lasso_cd,
    "rlasso": randomized_lasso,
    "iht": iht,
    "ihtd": iht_d,
    "htp": htp,
    "stridge": stridge,
}

PENALTY = {
    "lasso": "l1",
    "rlasso": "l1",
    "iht": "l0",
    "ihtd": "l0",
    "htp": "l0",
    "stridge": "ridge",
}


def solve(name: str, theta, ut=None, lam=None, options: SolverOptions | None = None, K=None):
    """Dispatch by solver id; ``htp`` takes ``K``, everything else ``lam``."""
    if name not in SOLVERS:
        raise ValueError(f"unknown solver {name!r}; choose from {sorted(SOLVERS)}")
    if name == "htp":
        if K is None:
            raise ValueError("htp needs a sparsity level K")
        return htp(theta, ut, int(K), options)
    if lam is None:
        raise ValueError(f"{name} needs a lambda")
    return SOLVERS[name](theta, ut, float(lam), options)
