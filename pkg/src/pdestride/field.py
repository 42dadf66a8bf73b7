"""Spatiotemporal fields on regular grids, noise injection and point sampling.

A :class:`Field` stores its values as an array indexed ``[x, (y, (z,)) t]``;
on disk the same values are written flat with the first spatial axis varying
fastest and time slowest (Fortran order of that array).
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from ._rng import make_rng

__all__ = [
    "Field",
    "SampleSet",
    "FieldFormatError",
    "CapacityError",
    "add_noise",
    "sample_points",
    "interior_box",
    "central_box",
    "save_field",
    "load_field",
    "field_to_csv",
    "field_from_csv",
]

LAYOUT = "t-major,x-fastest"
AXIS_NAMES = "xyz"


class FieldFormatError(ValueError):
    """A field file is malformed or inconsistent with its metadata."""


class CapacityError(ValueError):
    """The requested sampling region holds fewer points than asked for."""

    def __init__(self, requested: int, available: int):
        super().__init__(
            f"sampling region holds {available} valid points, {requested} requested"
        )
        self.requested = requested
        self.available = available


@dataclass(frozen=True)
class Field:
    """Named scalar field sampled on a uniform space-time grid.

    Parameters
    ----------
    name : str
        Variable name, used for dictionary labels (``u``, ``v``...).
    values : ndarray
        Array of shape ``(n_1[, n_2[, n_3]], n_t)``.
    spacing : tuple of float
        ``(dx_1[, dx_2[, dx_3]], dt)``.
    derived : bool
        Set on finite-difference outputs, whose stencil-less border cells
        hold NaN to mark them invalid for sampling.
    """

    name: str
    values: np.ndarray
    spacing: tuple
    derived: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.flags.writeable:
            values = values.copy()
        spacing = tuple(float(s) for s in self.spacing)
        if values.ndim < 2 or values.ndim > 4:
            raise ValueError("field needs 1 to 3 spatial axes plus time")
        if len(spacing) != values.ndim:
            raise ValueError(
                f"spacing has {len(spacing)} entries for a {values.ndim}-axis field"
            )
        if min(values.shape) < 3:
            raise ValueError(f"all extents must be >= 3, got {values.shape}")
        if min(spacing) <= 0:
            raise ValueError("spacings must be positive")
        if not self.derived and not np.all(np.isfinite(values)):
            raise ValueError(f"field {self.name!r} contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "spacing", spacing)

    @property
    def dims(self) -> tuple:
        return self.values.shape

    @property
    def ndim_space(self) -> int:
        return self.values.ndim - 1

    @property
    def nt(self) -> int:
        return self.values.shape[-1]

    @property
    def dt(self) -> float:
        return self.spacing[-1]

    def with_values(self, values, name=None) -> "Field":
        return Field(self.name if name is None else name, values, self.spacing)

    def time_space_matrix(self) -> np.ndarray:
        """Values as a matrix with one row per time slice."""
        return self.values.reshape(-1, self.nt, order="F").T

    @classmethod
    def from_time_space_matrix(cls, name, matrix, dims, spacing) -> "Field":
        values = np.asarray(matrix).T.reshape(dims, order="F")
        return cls(name, values, spacing)


@dataclass(frozen=True)
class SampleSet:
    """Distinct grid points ``(i_1[, i_2[, i_3]], t)`` used as regression rows."""

    indices: np.ndarray
    seed: int | None = None
    margin: int = 0
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 2:
            raise ValueError("indices must be a 2-D array (points x axes)")
        if len(np.unique(idx, axis=0)) != len(idx):
            raise ValueError("sample indices contain duplicates")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @property
    def count(self) -> int:
        return len(self.indices)

    def __len__(self):
        return self.count


def add_noise(field: Field, sigma: float, seed: int) -> Field:
    """Return ``u + eps`` with ``eps ~ N(0, (sigma * std(u))^2)`` i.i.d.

    ``std(u)`` is the population standard deviation over every entry of the
    field. The draw depends only on ``seed``.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    scale = sigma * float(np.std(field.values))
    if scale == 0.0:
        return field.with_values(field.values)
    rng = make_rng(seed, "add_noise")
    # drawn in on-disk order so the realization does not depend on array strides
    eps = rng.standard_normal(field.values.size).reshape(field.dims, order="F")
    return field.with_values(field.values + scale * eps)


def interior_box(field: Field, margin: int) -> list:
    """Valid index box: ``margin`` cells off every spatial face, time in [1, n_t-2]."""
    box = [(margin, n - margin) for n in field.dims[:-1]]
    box.append((1, field.nt - 1))
    return box


def central_box(field: Field, side: float, t_range=None) -> list:
    """Index box of a centred spatial cube of physical edge length ``side``."""
    box = []
    for n, dx in zip(field.dims[:-1], field.spacing[:-1]):
        width = int(round(side / dx))
        width = max(1, min(width, n))
        lo = (n - width) // 2
        box.append((lo, lo + width))
    box.append(tuple(t_range) if t_range is not None else (0, field.nt))
    return box


def sample_points(
    field: Field, region=None, n: int = 0, seed: int = 0, margin: int = 2
) -> SampleSet:
    """Draw ``n`` distinct points uniformly from ``region`` intersected with the interior.

    Parameters
    ----------
    region : sequence of (lo, hi), optional
        Half-open index ranges, one per axis (time last). ``None`` means the
        whole grid.
    margin : int
        Spatial cells to keep clear of every face; must cover the half-width
        of the widest derivative stencil used downstream.
    """
    valid = interior_box(field, margin)
    if region is None:
        region = [(0, d) for d in field.dims]
    if len(region) != len(field.dims):
        raise ValueError("region needs one (lo, hi) pair per axis")
    box = [
        (max(int(lo), vlo), min(int(hi), vhi))
        for (lo, hi), (vlo, vhi) in zip(region, valid)
    ]
    extents = [max(hi - lo, 0) for lo, hi in box]
    capacity = int(np.prod(extents))
    if n > capacity or n < 1:
        raise CapacityError(n, capacity)
    rng = make_rng(seed, "sample_points")
    flat = rng.choice(capacity, size=n, replace=False)
    local = np.stack(np.unravel_index(flat, extents), axis=1)
    offset = np.array([lo for lo, _ in box], dtype=np.int64)
    return SampleSet(local + offset, seed=seed, margin=margin, meta={"box": box})


# ---------------------------------------------------------------- file formats


def _paths(path) -> tuple:
    p = Path(path)
    if p.suffix in (".json", ".bin"):
        p = p.with_suffix("")
    return p.with_suffix(".json"), p.with_suffix(".bin")


def save_field(field: Field, path) -> Path:
    """Write ``<path>.json`` metadata plus ``<path>.bin`` little-endian float64 data."""
    meta_path, bin_path = _paths(path)
    meta_path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "name": field.name,
        "dims": list(field.dims),
        "spacing": list(field.spacing),
        "dtype": "f64le",
        "layout": LAYOUT,
        "data": bin_path.name,
    }
    meta_path.write_text(json.dumps(meta, indent=2) + "\n")
    field.values.ravel(order="F").astype("<f8").tofile(bin_path)
    return meta_path


def load_field(path) -> Field:
    meta_path, bin_path = _paths(path)
    try:
        meta = json.loads(Path(meta_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FieldFormatError(f"cannot read field metadata {meta_path}: {exc}") from exc
    if meta.get("dtype", "f64le") != "f64le" or meta.get("layout", LAYOUT) != LAYOUT:
        raise FieldFormatError(f"{meta_path}: unsupported dtype/layout")
    if "data" in meta:
        bin_path = meta_path.parent / meta["data"]
    try:
        dims = tuple(int(d) for d in meta["dims"])
        spacing = tuple(float(s) for s in meta["spacing"])
        name = str(meta["name"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FieldFormatError(f"{meta_path}: missing or bad key ({exc})") from exc
    if not bin_path.exists():
        raise FieldFormatError(f"{meta_path}: data file {bin_path} not found")
    raw = np.fromfile(bin_path, dtype="<f8")
    expected = int(np.prod(dims))
    if raw.size * 8 != bin_path.stat().st_size or raw.size != expected:
        raise FieldFormatError(
            f"{bin_path} holds {bin_path.stat().st_size} bytes but {meta_path} "
            f"declares dims {list(dims)} ({expected * 8} bytes)"
        )
    try:
        return Field(name, raw.reshape(dims, order="F"), spacing)
    except ValueError as exc:
        raise FieldFormatError(f"{meta_path}: {exc}") from exc


def field_to_csv(field: Field, path) -> Path:
    """Write a 1-D field as rows ``t, x, value`` (time-major, x fastest)."""
    if field.ndim_space != 1:
        raise ValueError("CSV export supports 1-D fields only")
    path = Path(path)
    nx, nt = field.dims
    dx, dt = field.spacing
    with path.open("w", newline="") as fh:
        fh.write(f"# name={field.name}\n")
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "value"])
        for k in range(nt):
            for i in range(nx):
                writer.writerow([repr(k * dt), repr(i * dx), repr(float(field.values[i, k]))])
    return path


def field_from_csv(path, name: str | None = None) -> Field:
    path = Path(path)
    file_name = None
    lines = []
    with path.open(newline="") as fh:
        for ln in fh:
            if ln.startswith("#"):
                body = ln[1:].strip()
                if body.startswith("name="):
                    file_name = body[5:]
                continue
            lines.append(ln)
    reader = csv.reader(lines)
    try:
        header = next(reader)
        if [h.strip() for h in header] != ["t", "x", "value"]:
            raise FieldFormatError(f"{path}: expected header t,x,value")
        data = np.array([[float(c) for c in r] for r in reader if r], dtype=np.float64)
    except (StopIteration, ValueError) as exc:
        raise FieldFormatError(f"{path}: {exc}") from exc
    if data.ndim != 2 or data.shape[1] != 3:
        raise FieldFormatError(f"{path}: expected three columns")
    ts = np.unique(data[:, 0])
    xs = np.unique(data[:, 1])
    nt, nx = len(ts), len(xs)
    if nt * nx != len(data) or nt < 2 or nx < 2:
        raise FieldFormatError(f"{path}: rows do not form a complete t,x grid")
    ti = np.searchsorted(ts, data[:, 0])
    xi = np.searchsorted(xs, data[:, 1])
    values = np.empty((nx, nt))
    values[xi, ti] = data[:, 2]
    # coordinates are written as index * spacing, so index 1 gives the spacing exactly
    spacing = (float(xs[1] - xs[0]), float(ts[1] - ts[0]))
    return Field(name or file_name or path.stem, values, spacing)
