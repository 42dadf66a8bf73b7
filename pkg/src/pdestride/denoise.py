"""Truncated-SVD denoising of a field's time x space matrix."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import Field

__all__ = ["SvdReport", "detect_elbow", "denoise_field"]


@dataclass(frozen=True)
class SvdReport:
    singular_values: np.ndarray
    chosen_rank: int
    reconstruction_error: float

    def to_dict(self) -> dict:
        return {
            "singular_values": [float(s) for s in self.singular_values],
            "chosen_rank": int(self.chosen_rank),
            "reconstruction_error": float(self.reconstruction_error),
        }


def detect_elbow(singular_values, method: str = "chord") -> int:
    """Rank at the elbow of a descending singular-value curve.

    Works on ``l_i = log(s_i + delta)`` with ``delta = 1e-12 * s_1``.

    ``method="chord"`` (default) draws the straight line from ``l_1`` to
    ``l_n`` and returns the number of values before the point lying
    furthest below it, i.e. the corner where the fast decay meets the
    noise floor. A curve that never dips below the line (flat or concave)
    gives 1.

    ``method="curvature"`` returns the 1-based ``k`` maximising
    ``l_{k+2} - 2 l_{k+1} + l_k``. On spectra that decay geometrically
    before reaching the noise floor it tends to pick ``k = 1``.

    Ties go to the smallest rank in both cases.
    """
    s = np.asarray(singular_values, dtype=np.float64)
    if s.ndim != 1 or s.size < 3:
        raise ValueError("need at least 3 singular values")
    if np.any(s < 0) or np.any(np.diff(s) > 0):
        raise ValueError("singular values must be nonnegative and descending")
    if s[0] == 0:
        return 1
    logs = np.log(s + 1e-12 * s[0])
    if method == "curvature":
        curvature = logs[2:] - 2.0 * logs[1:-1] + logs[:-2]
        return int(np.argmax(curvature)) + 1
    if method != "chord":
        raise ValueError(f"unknown elbow method {method!r}")
    idx = np.arange(s.size)
    chord = logs[0] + (logs[-1] - logs[0]) * idx / (s.size - 1)
    below = chord - logs
    k = int(np.argmax(below))
    return k if below[k] > 0 else 1


def denoise_field(field: Field, rank: int | None = None, method: str = "chord") -> tuple:
    """Best rank-``r`` approximation of the time x space matrix of ``field``.

    ``rank=None`` picks ``r`` with :func:`detect_elbow` using ``method``.
    Returns the denoised field and an :class:`SvdReport`.
    """
    mat = field.time_space_matrix()
    max_rank = min(mat.shape)
    if rank is not None and not 1 <= int(rank) <= max_rank:
        raise ValueError(f"rank must lie in [1, {max_rank}], got {rank}")
    u, s, vt = np.linalg.svd(mat, full_matrices=False)
    r = detect_elbow(s, method) if rank is None else int(rank)
    approx = (u[:, :r] * s[:r]) @ vt[:r]
    err = float(np.sqrt(np.sum(s[r:] ** 2)))
    out = Field.from_time_space_matrix(field.name, approx, field.dims, field.spacing)
    return out, SvdReport(s, r, err)
