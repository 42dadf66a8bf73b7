"""Finite-difference derivatives, candidate-term dictionaries and design assembly."""
from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass, field as dc_field, replace
from pathlib import Path

import numpy as np

from .field import AXIS_NAMES, Field, SampleSet

__all__ = [
    "TermSpec",
    "DesignSystem",
    "PRESETS",
    "time_derivative",
    "spatial_derivative",
    "stencil_halfwidth",
    "enumerate_terms",
    "preset_terms",
    "assemble_design",
    "standardize",
    "raw_coefficients",
    "save_design",
    "load_design",
]

D_MAX_SUPPORTED = 8


def time_derivative(field: Field) -> Field:
    """First-order forward difference in time; the last slice is NaN (invalid)."""
    if field.nt < 2:
        raise ValueError("need at least two time slices")
    vals = np.full(field.dims, np.nan)
    vals[..., :-1] = (field.values[..., 1:] - field.values[..., :-1]) / field.dt
    return Field(f"{field.name}_t", vals, field.spacing, derived=True)


def _central(values: np.ndarray, axis: int, dx: float, order: int) -> np.ndarray:
    out = np.full(values.shape, np.nan)
    n = values.shape[axis]

    def sl(a, b):
        idx = [slice(None)] * values.ndim
        idx[axis] = slice(a, n + b if b <= 0 else b)
        return tuple(idx)

    if order == 1:
        out[sl(1, -1)] = (values[sl(2, 0)] - values[sl(0, -2)]) / (2.0 * dx)
    else:
        out[sl(1, -1)] = (values[sl(2, 0)] - 2.0 * values[sl(1, -1)] + values[sl(0, -2)]) / dx**2
    return out


def stencil_halfwidth(order: int) -> int:
    """Cells consumed on each side by the composed central stencil of ``order``."""
    return (order + 1) // 2


def spatial_derivative(field: Field, axis: int, order: int, d_max: int = D_MAX_SUPPORTED) -> Field:
    """Central-difference derivative of ``order`` along spatial ``axis``.

    Orders above two are built by repeatedly applying the second-order
    stencil, then the first-order one if the order is odd. Cells whose stencil
    leaves the grid are NaN.
    """
    if not 0 <= axis < field.ndim_space:
        raise ValueError(f"axis {axis} out of range for a {field.ndim_space}-D field")
    if not 1 <= order <= d_max:
        raise ValueError(f"order must be in [1, {d_max}], got {order}")
    if field.dims[axis] < order + 2:
        raise ValueError("grid too short along axis for this stencil")
    dx = field.spacing[axis]
    vals = np.asarray(field.values, dtype=np.float64)
    for _ in range(order // 2):
        vals = _central(vals, axis, dx, 2)
    if order % 2:
        vals = _central(vals, axis, dx, 1)
    label = f"{field.name}_{AXIS_NAMES[axis] * order}"
    return Field(label, vals, field.spacing, derived=True)


# ------------------------------------------------------------------ dictionary


@dataclass(frozen=True)
class TermSpec:
    """One dictionary column: a monomial optionally times one derivative.

    ``powers[f]`` is the power of field ``f``; ``derivative`` is
    ``(field, axis, order)`` or ``None``.
    """

    powers: tuple
    derivative: tuple | None
    label: str

    @property
    def degree(self) -> int:
        return int(sum(self.powers))

    @property
    def is_constant(self) -> bool:
        return self.derivative is None and self.degree == 0

    @property
    def halfwidth(self) -> int:
        return 0 if self.derivative is None else stencil_halfwidth(self.derivative[2])

    def to_dict(self) -> dict:
        return {
            "powers": list(self.powers),
            "derivative": None if self.derivative is None else list(self.derivative),
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, d) -> "TermSpec":
        der = d.get("derivative")
        return cls(tuple(d["powers"]), None if der is None else tuple(der), d["label"])


def _monomial_label(powers, names) -> str:
    parts = []
    for p, name in zip(powers, names):
        if p == 1:
            parts.append(name)
        elif p > 1:
            parts.append(f"{name}^{p}")
    return "*".join(parts)


def _monomials(n_fields: int, degree: int):
    # descending powers of the first field first: u^2, u*v, v^2
    combos = [
        c for c in itertools.product(range(degree, -1, -1), repeat=n_fields) if sum(c) == degree
    ]
    return combos


def enumerate_terms(
    n_fields: int, p_max: int, d_max: int, spatial_dims: int, names=None
) -> list:
    """Ordered candidate terms.

    Order: the constant ``1``; every monomial of total degree 1..``p_max``;
    then for each monomial of degree 0..``p_max`` (same order, constant
    first) times each pure-axis derivative of one field (field, then order
    1..``d_max``, then axis). No mixed derivatives.
    """
    if p_max < 1 or d_max < 1:
        raise ValueError("p_max and d_max must be >= 1")
    if not 1 <= spatial_dims <= 3:
        raise ValueError("spatial_dims must be 1, 2 or 3")
    names = list(names) if names is not None else ["u", "v", "w", "q"][:n_fields]
    if len(names) != n_fields:
        raise ValueError("need one name per field")

    monos = [m for d in range(p_max + 1) for m in _monomials(n_fields, d)]
    derivs = [
        (f, axis, order)
        for f in range(n_fields)
        for order in range(1, d_max + 1)
        for axis in range(spatial_dims)
    ]
    terms = [TermSpec(tuple(m), None, _monomial_label(m, names) or "1") for m in monos]
    for m in monos:
        mlabel = _monomial_label(m, names)
        for f, axis, order in derivs:
            dlabel = f"{names[f]}_{AXIS_NAMES[axis] * order}"
            label = f"{mlabel}*{dlabel}" if mlabel else dlabel
            terms.append(TermSpec(tuple(m), (f, axis, order), label))
    return terms


# Published dictionary sizes; each preset is a prefix of one enumeration.
PRESETS = {
    "burgers-p11": dict(n_fields=1, p_max=3, d_max=4, spatial_dims=1, p=11),
    "burgers-p15": dict(n_fields=1, p_max=3, d_max=4, spatial_dims=1, p=15),
    "burgers-p19": dict(n_fields=1, p_max=3, d_max=4, spatial_dims=1, p=19),
    "gray-scott-p26": dict(n_fields=2, p_max=3, d_max=2, spatial_dims=3, p=26),
    "gray-scott-p53": dict(n_fields=2, p_max=3, d_max=2, spatial_dims=3, p=53),
    "gray-scott-p69": dict(n_fields=2, p_max=3, d_max=2, spatial_dims=3, p=69),
    "gray-scott-2d-p46": dict(n_fields=2, p_max=3, d_max=2, spatial_dims=2, p=46),
}


def preset_terms(name: str, names=None) -> list:
    """Term list of a named preset (``burgers-p19``, ``gray-scott-p69``...)."""
    if name not in PRESETS and f"burgers-{name}" in PRESETS:
        name = f"burgers-{name}"
    try:
        cfg = dict(PRESETS[name])
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; known: {sorted(PRESETS)}") from None
    p = cfg.pop("p")
    terms = enumerate_terms(names=names, **cfg)
    return terms[:p]


# ---------------------------------------------------------------- design system


@dataclass(frozen=True)
class DesignSystem:
    """Regression system ``ut ~ theta @ xi`` at sampled grid points.

    ``standardization`` is ``None`` for a raw system. For a standardized one
    it records, per kept column, the raw-scale mean and scale, the response
    mean, the raw labels and which raw columns were dropped (the constant,
    and any zero-variance column).
    """

    theta: np.ndarray
    ut: np.ndarray
    labels: tuple
    standardization: dict | None = None
    provenance: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64)
        ut = np.asarray(self.ut, dtype=np.float64).ravel()
        if theta.ndim != 2 or theta.shape[0] != ut.shape[0]:
            raise ValueError("theta must be N x p with N matching ut")
        if theta.shape[1] != len(self.labels):
            raise ValueError("one label per column required")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "ut", ut)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def n(self) -> int:
        return self.theta.shape[0]

    @property
    def p(self) -> int:
        return self.theta.shape[1]

    def rows(self, idx) -> "DesignSystem":
        idx = np.asarray(idx)
        return replace(self, theta=self.theta[idx], ut=self.ut[idx])

    def columns(self, idx) -> "DesignSystem":
        idx = list(idx)
        if self.standardization is not None:
            raise ValueError("select columns before standardizing")
        return replace(self, theta=self.theta[:, idx], labels=[self.labels[i] for i in idx])


def assemble_design(
    fields, target, terms, samples: SampleSet, provenance: dict | None = None
) -> DesignSystem:
    """Evaluate ``terms`` and the target's forward time derivative at ``samples``.

    ``fields`` must share one grid. Derivatives are computed on the bounding
    box of the samples (plus stencil margin), which gives the same numbers as
    differentiating the whole field.
    """
    fields = list(fields)
    if isinstance(target, str):
        target = [f.name for f in fields].index(target)
    dims = fields[0].dims
    if any(f.dims != dims for f in fields):
        raise ValueError("all fields must share one grid")
    idx = samples.indices
    nsp = len(dims) - 1
    margin = max((t.halfwidth for t in terms), default=0)

    lo = idx.min(axis=0)
    hi = idx.max(axis=0)
    for a in range(nsp):
        if lo[a] < margin or hi[a] >= dims[a] - margin:
            raise RuntimeError(
                f"sample touches boundary cells along axis {a} (stencil margin {margin})"
            )
    if lo[-1] < 0 or hi[-1] > dims[-1] - 2:
        raise RuntimeError("sample time index outside [0, n_t-2]")

    crop = tuple(
        [slice(lo[a] - margin, hi[a] + margin + 1) for a in range(nsp)]
        + [slice(lo[-1], hi[-1] + 2)]
    )
    local = tuple((idx - np.array([c.start for c in crop])).T)
    cropped = [Field(f.name, f.values[crop], f.spacing) for f in fields]

    base = [f.values[local] for f in cropped]
    deriv_cache = {}
    cols = []
    for term in terms:
        col = np.ones(len(idx))
        for f, pw in enumerate(term.powers):
            if pw:
                col = col * base[f] ** pw
        if term.derivative is not None:
            key = tuple(term.derivative)
            if key not in deriv_cache:
                f, axis, order = key
                deriv_cache[key] = spatial_derivative(cropped[f], axis, order).values[local]
            col = col * deriv_cache[key]
        cols.append(col)
    theta = np.stack(cols, axis=1) if cols else np.empty((len(idx), 0))
    ut = time_derivative(cropped[target]).values[local]
    if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(ut))):
        raise RuntimeError("design touches invalid (boundary) cells")

    prov = {
        "fields": [f.name for f in fields],
        "target": fields[target].name,
        "sample_seed": samples.seed,
        "terms": [t.to_dict() for t in terms],
    }
    prov.update(provenance or {})
    return DesignSystem(theta, ut, [t.label for t in terms], None, prov)


def _base_record(system: DesignSystem) -> dict:
    return {
        "raw_labels": list(system.labels),
        "kept": list(range(system.p)),
        "column_mean": [0.0] * system.p,
        "column_scale": [1.0] * system.p,
        "response_mean": 0.0,
        "intercept_label": None,
        "dropped": [],
    }


def standardize(system: DesignSystem) -> DesignSystem:
    """Center every column, scale to unit 1/n variance, and center ``ut``.

    The constant column vanishes under centering and is dropped; its effect
    lives in the recorded response mean. Other zero-variance columns are
    dropped with a warning. Applying this twice composes the records, so the
    stored means and scales always refer to the raw columns.
    """
    rec = system.standardization or _base_record(system)
    theta = system.theta
    mean = theta.mean(axis=0)
    scale = theta.std(axis=0)
    keep = []
    dropped = list(rec["dropped"])
    intercept_label = rec["intercept_label"]
    for k, label in enumerate(system.labels):
        spread = np.max(np.abs(theta[:, k])) if system.n else 0.0
        if label == "1":
            intercept_label = label
            dropped.append({"label": label, "reason": "constant"})
        elif scale[k] <= 1e-12 * spread or scale[k] == 0.0:
            warnings.warn(f"dropping zero-variance column {label!r}", RuntimeWarning)
            dropped.append({"label": label, "reason": "degenerate"})
        else:
            keep.append(k)
    keep = np.array(keep, dtype=int)
    z = (theta[:, keep] - mean[keep]) / scale[keep]
    ut_mean = float(system.ut.mean())
    old_mean = np.asarray(rec["column_mean"])[keep]
    old_scale = np.asarray(rec["column_scale"])[keep]
    new_rec = {
        "raw_labels": list(rec["raw_labels"]),
        "kept": [int(rec["kept"][k]) for k in keep],
        "column_mean": list(old_mean + old_scale * mean[keep]),
        "column_scale": list(old_scale * scale[keep]),
        "response_mean": float(rec["response_mean"]) + ut_mean,
        "intercept_label": intercept_label,
        "dropped": dropped,
    }
    labels = [system.labels[k] for k in keep]
    return DesignSystem(z, system.ut - ut_mean, labels, new_rec, dict(system.provenance))


def raw_coefficients(system: DesignSystem, beta) -> tuple:
    """Map coefficients of a standardized system back to the raw columns.

    Returns ``(xi, intercept)`` with ``xi`` indexed like the raw labels
    (zero on dropped columns).
    """
    rec = system.standardization
    if rec is None:
        raise ValueError("system is not standardized")
    beta = np.asarray(beta, dtype=np.float64)
    scale = np.asarray(rec["column_scale"])
    mean = np.asarray(rec["column_mean"])
    raw = beta / scale
    xi = np.zeros(len(rec["raw_labels"]))
    xi[np.asarray(rec["kept"], dtype=int)] = raw
    intercept = float(rec["response_mean"] - np.dot(raw, mean))
    return xi, intercept


# --------------------------------------------------------------------- file IO


def _design_paths(path) -> tuple:
    p = Path(path)
    if p.suffix in (".json", ".bin"):
        p = p.with_suffix("")
    return p.with_suffix(".json"), p.with_suffix(".bin")


def save_design(system: DesignSystem, path) -> Path:
    """JSON header plus ``.bin``: theta (row-major, f64le) followed by ut."""
    meta_path, bin_path = _design_paths(path)
    meta_path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "labels": list(system.labels),
        "N": system.n,
        "p": system.p,
        "dtype": "f64le",
        "layout": "theta row-major N x p, then ut (N)",
        "data": bin_path.name,
        "standardization": system.standardization,
        "provenance": system.provenance,
    }
    meta_path.write_text(json.dumps(header, indent=2) + "\n")
    np.concatenate([system.theta.ravel(order="C"), system.ut]).astype("<f8").tofile(bin_path)
    return meta_path


def load_design(path) -> DesignSystem:
    from .field import FieldFormatError

    meta_path, bin_path = _design_paths(path)
    try:
        header = json.loads(meta_path.read_text())
        n, p = int(header["N"]), int(header["p"])
        labels = header["labels"]
    except (OSError, KeyError, ValueError) as exc:
        raise FieldFormatError(f"cannot read design header {meta_path}: {exc}") from exc
    if "data" in header:
        bin_path = meta_path.parent / header["data"]
    if not bin_path.exists():
        raise FieldFormatError(f"{meta_path}: data file {bin_path} not found")
    raw = np.fromfile(bin_path, dtype="<f8")
    if raw.size != n * p + n:
        raise FieldFormatError(
            f"{bin_path} holds {raw.size} values but {meta_path} declares N={n}, p={p}"
        )
    theta = raw[: n * p].reshape(n, p)
    return DesignSystem(
        theta, raw[n * p :], labels, header.get("standardization"), header.get("provenance") or {}
    )
