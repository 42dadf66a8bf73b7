"""Command-line front end.

Every subcommand reads and writes the on-disk formats of the library and,
on success, leaves a JSON run manifest next to its main output. Exit codes:
0 success, 1 usage error, 2 data or format error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._rng import RNG_NAME, RNG_VERSION, derive_seed
from .denoise import denoise_field
from .dictionary import (
    assemble_design,
    enumerate_terms,
    load_design,
    preset_terms,
    save_design,
    standardize,
)
from .experiments import ExperimentDesign, achievability, rows_to_csv
from .field import (
    CapacityError,
    FieldFormatError,
    add_noise,
    field_from_csv,
    field_to_csv,
    load_field,
    sample_points,
    save_field,
)
from .simulate import (
    BurgersConfig,
    GrayScottConfig,
    SimulationError,
    simulate_burgers,
    simulate_gray_scott,
)
from .solvers import SOLVERS, SolverError, SolverOptions, ols_refit, solve
from .stability import PipelineError, StabilityError, model_to_json, profile_to_csv, run_stride

log = logging.getLogger("pdestride")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _field_arg(path: str) -> Path:
    p = Path(path)
    return p.with_suffix("") if p.suffix in (".json", ".bin") else p


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _field_files(prefix: Path) -> list:
    return [prefix.with_suffix(".json"), prefix.with_suffix(".bin")]


# ---------------------------------------------------------------- subcommands


def cmd_simulate(args) -> dict:
    out = Path(args.out)
    if args.model == "burgers":
        kw = {}
        if args.steps is not None:
            kw["nt"] = args.steps + 1
        if args.grid is not None:
            kw["nx"] = args.grid
        cfg = BurgersConfig(save_stride=args.save_stride or 1, **kw)
        fields = [simulate_burgers(cfg)]
        config = {"model": "burgers", **vars(cfg)}
    else:
        kw = {"dims": args.dims, "seed": args.seed}
        if args.grid is not None:
            kw["n"] = args.grid
        if args.save_stride is not None:
            kw["save_stride"] = args.save_stride
        if args.steps is not None:
            kw["T"] = args.steps * GrayScottConfig.dt
        cfg = GrayScottConfig(**kw)
        ic = None
        if args.ic:
            u0 = load_field(_field_arg(args.ic[0]))
            v0 = load_field(_field_arg(args.ic[1]))
            ic = (u0.values[..., 0], v0.values[..., 0])
        fields = list(simulate_gray_scott(cfg, ic))
        config = {"model": "grayscott", **vars(cfg), "ic": args.ic}
    outputs = []
    for f in fields:
        prefix = out.parent / f"{out.name}_{f.name}"
        save_field(f, prefix)
        outputs += _field_files(prefix)
    return {"config": config, "outputs": outputs, "seeds": {"ic": getattr(cfg, "seed", None)}}


def cmd_noise(args) -> dict:
    field = load_field(_field_arg(args.inp))
    seed = derive_seed(args.seed, "noise")
    noisy = add_noise(field, args.sigma, seed)
    out = _field_arg(args.out)
    save_field(noisy, out)
    return {"config": {"sigma": args.sigma}, "outputs": _field_files(out), "seeds": {"master": args.seed, "noise": seed}}


def cmd_denoise(args) -> dict:
    field = load_field(_field_arg(args.inp))
    den, report = denoise_field(field, args.rank, args.elbow)
    out = _field_arg(args.out)
    save_field(den, out)
    outputs = _field_files(out)
    if args.report:
        Path(args.report).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
        outputs.append(Path(args.report))
    return {"config": {"rank": args.rank, "elbow": args.elbow, "chosen_rank": report.chosen_rank}, "outputs": outputs}


def cmd_dictionary(args) -> dict:
    fields = [load_field(_field_arg(p)) for p in args.fields.split(",")]
    names = [f.name for f in fields]
    if args.target not in names:
        raise DataError(f"target {args.target!r} is not one of the fields {names}")
    if args.preset:
        terms = preset_terms(args.preset, names=names)
    else:
        if args.pmax is None or args.dmax is None:
            raise UsageError("give --preset or both --pmax and --dmax")
        terms = enumerate_terms(len(fields), args.pmax, args.dmax, fields[0].ndim_space, names)
    margin = max(t.halfwidth for t in terms)
    seed = derive_seed(args.seed, "points")
    samples = sample_points(fields[0], None, args.n, seed, margin)
    design = assemble_design(fields, args.target, terms, samples, {"sigma": args.sigma_used})
    meta = save_design(design, args.out)
    return {
        "config": {"preset": args.preset, "pmax": args.pmax, "dmax": args.dmax, "n": args.n, "target": args.target},
        "outputs": [meta, meta.with_suffix(".bin")],
        "seeds": {"master": args.seed, "points": seed},
    }


def _options(args) -> SolverOptions:
    return SolverOptions(
        maxit=args.maxit,
        subit=args.subit,
        tol=args.tol,
        lasso_alpha=args.alpha,
        ridge_lambda=args.ridge,
        seed=args.seed,
    )


def cmd_solve(args) -> dict:
    raw = load_design(args.design)
    std = standardize(raw)
    opts = _options(args)
    if args.solver == "htp":
        if args.k is None:
            raise UsageError("htp needs --k")
        coef = solve("htp", std.theta, std.ut, K=args.k, options=opts)
    else:
        if args.lam is None:
            raise UsageError(f"{args.solver} needs --lambda")
        coef = solve(args.solver, std.theta, std.ut, lam=args.lam, options=opts)
    support = [std.labels[k] for k in coef.support]
    raw_idx = [raw.labels.index(lab) for lab in support]
    has_const = "1" in raw.labels
    ref = ols_refit(raw.theta, raw.ut, raw_idx, intercept=has_const, labels=list(raw.labels))
    refit = {
        "coefficients": {lab: float(ref.values[k]) for lab, k in zip(support, raw_idx)},
        "intercept": ref.intercept if has_const else None,
    }
    payload = {
        "solver": args.solver,
        "lambda": args.lam,
        "k": args.k,
        "labels": list(std.labels),
        "standardized_values": [float(v) for v in coef.values],
        "support": support,
        "refit": refit,
        "iterations_used": coef.iterations_used,
        "converged": coef.converged,
    }
    Path(args.out).write_text(json.dumps(payload, indent=2) + "\n")
    return {"config": {"solver": args.solver, "options": opts.to_dict()}, "outputs": [Path(args.out)], "seeds": {"solver": args.seed}}


def cmd_stride(args) -> dict:
    design = load_design(args.design)
    opts = _options(args)
    model, profile = run_stride(
        design, args.solver, opts, args.b, args.m, args.eps, args.pith, args.seed, args.threads
    )
    profile_to_csv(profile, args.profile)
    model_to_json(model, args.model)
    return {
        "config": {"solver": args.solver, "B": args.b, "M": args.m, "epsilon": args.eps, "pi_th": args.pith},
        "outputs": [Path(args.profile), Path(args.model)],
        "seeds": {"master": args.seed, "stability": derive_seed(args.seed, "stability")},
    }


def cmd_achievability(args) -> dict:
    if args.model != "burgers":
        raise UsageError("achievability supports --model burgers")
    presets = [p if p.startswith("burgers-") else f"burgers-{p}" for p in args.preset_list.split(",")]
    ns = [int(x) for x in args.n_list.split(",")]
    sigmas = [float(x) for x in args.sigma_list.split(",")]
    opts = SolverOptions(seed=args.seed)
    designs, cells = [], []
    cell = 0
    for preset in presets:
        for sigma in sigmas:
            for n in ns:
                designs.append(
                    ExperimentDesign(n=n, preset=preset, sigma=sigma, reps=args.reps, mode=args.mode,
                                     solver=args.solver, options=opts)
                )
                cells.append(cell)
                cell += 1
    rows = achievability(designs, args.seed, threads=args.threads, cells=cells)
    rows_to_csv(rows, args.out)
    return {
        "config": {"presets": presets, "n": ns, "sigma": sigmas, "reps": args.reps, "mode": args.mode, "solver": args.solver},
        "outputs": [Path(args.out)],
        "seeds": {"master": args.seed},
    }


def cmd_convert(args) -> dict:
    src, dst = Path(args.inp), Path(args.out)
    if src.suffix == ".csv":
        field = field_from_csv(src)
        prefix = _field_arg(str(dst))
        save_field(field, prefix)
        outputs = _field_files(prefix)
    else:
        field = load_field(_field_arg(str(src)))
        if dst.suffix != ".csv":
            raise UsageError("one side of convert must be a .csv file")
        field_to_csv(field, dst)
        outputs = [dst]
    return {"config": {"from": str(src), "to": str(dst)}, "outputs": outputs}


def cmd_replay(args) -> dict:
    manifest = json.loads(Path(args.source).read_text())
    argv = manifest["argv"]
    cwd = Path(manifest.get("cwd", "."))
    here = Path.cwd()
    os.chdir(cwd)
    try:
        code = main(argv + ["--manifest", os.devnull])
    finally:
        os.chdir(here)
    if code != EXIT_OK:
        raise RuntimeError(f"replayed command exited with {code}")
    mismatched = [
        path for path, digest in manifest["artifacts"].items() if _sha256(cwd / path) != digest
    ]
    if mismatched:
        raise DataError(f"replay differs from manifest for: {', '.join(mismatched)}")
    return {"config": {"replayed": argv}, "outputs": []}


# -------------------------------------------------------------------- parser


def _add_solver_options(p):
    p.add_argument("--alpha", type=float, default=0.2, help="randomized-lasso weight floor")
    p.add_argument("--ridge", type=float, default=1e-5, help="ridge parameter for stridge")
    p.add_argument("--maxit", type=int, default=1000)
    p.add_argument("--subit", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-6)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pdestride", description="Stability-selection PDE identification.")
    parser.add_argument("--version", action="version", version=f"pdestride {__version__}")
    common = _Parser(add_help=False)
    common.add_argument("--threads", type=int, default=None, help="worker threads (default: PDESTRIDE_THREADS or all cores)")
    common.add_argument("--manifest", default=None, help="where to write the run manifest")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="generate ground-truth data")
    p.add_argument("--model", choices=("burgers", "grayscott"), required=True)
    p.add_argument("--dims", type=int, choices=(2, 3), default=3)
    p.add_argument("--grid", type=int, default=None, help="cells per axis")
    p.add_argument("--save-stride", type=int, default=None)
    p.add_argument("--steps", type=int, default=None, help="number of time steps")
    p.add_argument("--seed", type=int, default=0, help="seed for the randomized initial condition")
    p.add_argument("--ic", nargs=2, metavar=("U", "V"), default=None, help="initial-condition fields")
    p.add_argument("--out", required=True, help="output prefix; writes <out>_<field>.json/.bin")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("noise", parents=[common], help="add Gaussian noise")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("denoise", parents=[common], help="truncated-SVD denoising")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rank", type=int, default=None)
    p.add_argument("--elbow", choices=("chord", "curvature"), default="chord")
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("dictionary", parents=[common], help="assemble a design matrix")
    p.add_argument("--fields", required=True, help="comma-separated field files")
    p.add_argument("--target", required=True, help="name of the field whose time derivative is the response")
    p.add_argument("--preset", default=None)
    p.add_argument("--pmax", type=int, default=None)
    p.add_argument("--dmax", type=int, default=None)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--sigma-used", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dictionary)

    p = sub.add_parser("solve", parents=[common], help="one solver run on a design")
    p.add_argument("--design", required=True)
    p.add_argument("--solver", choices=sorted(SOLVERS), required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    _add_solver_options(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("stride", parents=[common], help="stability selection on a design")
    p.add_argument("--design", required=True)
    p.add_argument("--solver", choices=sorted(SOLVERS), default="ihtd")
    p.add_argument("--b", type=int, default=250)
    p.add_argument("--m", type=int, default=20)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--pith", type=float, default=0.8)
    p.add_argument("--seed", type=int, required=True)
    _add_solver_options(p)
    p.add_argument("--profile", required=True)
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_stride)

    p = sub.add_parser("achievability", parents=[common], help="success-frequency sweep")
    p.add_argument("--model", default="burgers")
    p.add_argument("--preset-list", default="p11,p15,p19")
    p.add_argument("--n-list", default="40,70,100,150,200,300,400")
    p.add_argument("--sigma-list", default="0,0.01,0.02,0.05")
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--mode", choices=("stride", "solver_path"), default="stride")
    p.add_argument("--solver", choices=sorted(SOLVERS), default="ihtd")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_achievability)

    p = sub.add_parser("convert", parents=[common], help="field .json/.bin <-> .csv")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("replay", parents=[common], help="re-run a manifest and verify its artifacts")
    p.add_argument("source", metavar="MANIFEST", help="manifest written by an earlier run")
    p.set_defaults(func=cmd_replay)
    return parser


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, PipelineError):
        return _exit_code(exc.cause)
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    if isinstance(exc, (SolverError, SimulationError, StabilityError, np.linalg.LinAlgError, FloatingPointError)):
        return EXIT_NUMERIC
    if isinstance(exc, (DataError, FieldFormatError, CapacityError, OSError, json.JSONDecodeError, KeyError, ValueError)):
        return EXIT_DATA
    return EXIT_NUMERIC


def _manifest_path(args, outputs) -> Path | None:
    if args.manifest is not None:
        return None if args.manifest == os.devnull else Path(args.manifest)
    if args.command == "replay":
        src = Path(args.source)
        return src.with_name(src.stem.removesuffix(".manifest") + ".replay.json")
    if not outputs:
        return None
    first = Path(outputs[0])
    return first.with_name(first.stem + ".manifest.json")


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads is None and os.environ.get("PDESTRIDE_THREADS"):
        args.threads = int(os.environ["PDESTRIDE_THREADS"])
    start = time.perf_counter()
    try:
        result = args.func(args)
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes
        code = _exit_code(exc)
        print(f"pdestride {args.command}: {exc}", file=sys.stderr)
        if code == EXIT_USAGE:
            parser.print_usage(sys.stderr)
        return code
    outputs = [Path(p) for p in result.get("outputs", [])]
    target = _manifest_path(args, outputs)
    if target is not None:
        manifest = {
            "argv": _strip_manifest_flag(argv),
            "cwd": str(Path.cwd()),
            "command": args.command,
            "config": _jsonable(result.get("config", {})),
            "seeds": result.get("seeds", {}),
            "rng": {"name": RNG_NAME, "version": RNG_VERSION},
            "artifacts": {str(p): _sha256(p) for p in outputs},
            "version": __version__,
            "threads": args.threads,
            "wall_time_s": time.perf_counter() - start,
        }
        target.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _strip_manifest_flag(argv) -> list:
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
        elif a == "--manifest":
            skip = True
        elif not a.startswith("--manifest="):
            out.append(a)
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    return obj


if __name__ == "__main__":
    sys.exit(main())
