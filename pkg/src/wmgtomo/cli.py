"""Command-line driver: phantom generation, projection, reconstruction,
spectral analysis, and benchmark table reproduction.

File format for images and sinograms: 16-byte header (magic "WMGT",
format version, rows, cols as little-endian uint32) followed by row-major
little-endian float64 values. Every output is accompanied by a flat
key=value manifest; re-running from the same parameters reproduces all
non-timing outputs bit-for-bit.

Exit codes: 0 success, 2 argument/file errors, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import struct
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .geometry import build_geometry, build_projector
from .multilevel import (build_wmg_hierarchy, classical_tg_preconditioner,
                         wmg_preconditioner)
from .phantom import add_noise, error_metrics, shepp_logan
from .solvers import (ConvergenceRecord, SolverConfig, bicgstab_solve,
                      normal_operator, sirt_solve)
from .spectral import preconditioned_spectrum, sirt_spectrum
from .sparse_kernels import (DimensionMismatchError, NotPositiveDefiniteError)

MAGIC = b"WMGT"
FORMAT_VERSION = 1

EXIT_ARG_ERROR = 2
EXIT_NUMERICAL_ERROR = 3

# Reference error levels for the bench pass/fail columns: solver ->
# (iterations, relative L2 error); the acceptance window is +-30% relative.
TABLE_TARGETS = {
    "1": {"sirt": (1000, 0.1015), "bicgstab": (300, 0.0166),
          "wmg-bicgstab": (50, 0.0152)},
    "2": {"bicgstab": (300, 0.0180), "wmg-bicgstab": (50, 0.0165)},
    "3": {"sirt": (1000, 0.1385), "bicgstab": (100, 0.1074),
          "wmg-bicgstab": (14, 0.1083)},
}
TABLE_LAMBDAS = {
    "1": {"sirt": 0.0, "bicgstab": 0.0, "wmg-bicgstab": 0.0},
    "2": {"bicgstab": 0.4, "wmg-bicgstab": 0.4},
    "3": {"sirt": 0.001, "bicgstab": 10.0, "wmg-bicgstab": 10.0},
}
DEFAULT_BENCH_SEED = 11


class CliError(Exception):
    """User-facing argument or file error (exit code 2)."""


def write_grid(path, values: np.ndarray, rows: int, cols: int):
    values = np.ascontiguousarray(values, dtype="<f8").ravel()
    if values.size != rows * cols:
        raise CliError(f"grid size {values.size} != {rows}x{cols}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", FORMAT_VERSION, rows, cols))
        fh.write(values.tobytes())


def read_grid(path) -> tuple[np.ndarray, int, int]:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:4] != MAGIC:
            raise CliError(f"{path}: not a WMGT grid file")
        version, rows, cols = struct.unpack("<III", header[4:])
        if version != FORMAT_VERSION:
            raise CliError(f"{path}: unsupported format version {version}")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != rows * cols:
        raise CliError(f"{path}: truncated payload")
    return data.astype(np.float64), rows, cols


def write_pgm(path, values: np.ndarray, rows: int, cols: int):
    """8-bit PGM with linear min-max scaling, for visual inspection."""
    img = np.asarray(values, dtype=np.float64).reshape(rows, cols)
    lo, hi = img.min(), img.max()
    scaled = np.zeros_like(img) if hi == lo else (img - lo) / (hi - lo)
    bytes_ = (scaled * 255).round().astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode())
        fh.write(bytes_.tobytes())


def write_manifest(path, entries: dict):
    lines = [f"{k}={v}" for k, v in entries.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def _base_manifest(command: str) -> dict:
    return {
        "software": "wmgtomo",
        "version": __version__,
        "command": command,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }


def write_convergence_csv(path, record: ConvergenceRecord):
    """Columns iter, rel_res, rel_err_l2, rel_err_linf, seconds; error
    fields are blank when no exact image was supplied."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "rel_res", "rel_err_l2", "rel_err_linf",
                         "seconds"])
        for i, k in enumerate(record.iterations):
            e2 = record.rel_err_l2[i]
            einf = record.rel_err_linf[i]
            writer.writerow([
                k, repr(record.rel_residual[i]),
                "" if e2 is None else repr(e2),
                "" if einf is None else repr(einf),
                repr(record.seconds[i]),
            ])


def cmd_phantom(args) -> int:
    x = shepp_logan(args.n)
    write_grid(args.out, x, args.n, args.n)
    if args.pgm:
        write_pgm(args.pgm, x, args.n, args.n)
    manifest = _base_manifest("phantom")
    manifest.update(n=args.n, out=args.out)
    write_manifest(str(args.out) + ".manifest", manifest)
    return 0


def cmd_project(args) -> int:
    x, rows, cols = read_grid(args.image)
    if rows != cols:
        raise CliError("input image must be square")
    if args.noise and args.seed is None:
        raise CliError("--noise requires an explicit --seed")
    g = build_geometry(rows, args.detectors, args.angles)
    w = build_projector(g)
    b = w @ x
    if args.noise:
        b = add_noise(b, args.noise, args.seed)
    write_grid(args.out, b, args.angles, args.detectors)
    manifest = _base_manifest("project")
    manifest.update(image=args.image, n=rows, angles=args.angles,
                    detectors=args.detectors, noise=args.noise or 0.0)
    if args.noise:
        manifest.update(seed=args.seed, rng="PCG64")
    write_manifest(str(args.out) + ".manifest", manifest)
    return 0


def _run_solver(solver, w, g, b, cfg, x_ex, levels, multiplicative):
    if solver == "sirt":
        return sirt_solve(w, b, np.zeros(g.n_image), cfg, x_ex=x_ex)
    lam = cfg.regularization_lambda
    op = normal_operator(w, lam)
    f = w.T @ b
    precond = None
    if solver == "tg-bicgstab":
        precond = classical_tg_preconditioner(w, g.n_pixels_per_side, lam)
    elif solver == "wmg-bicgstab":
        h = build_wmg_hierarchy(w, g.n_pixels_per_side, lam, levels)
        precond = wmg_preconditioner(h, multiplicative=multiplicative)
    return bicgstab_solve(op, f, precond=precond, cfg=cfg, x_ex=x_ex)


def cmd_reconstruct(args) -> int:
    b, rows, cols = read_grid(args.sino)
    if rows != args.angles or cols != args.detectors:
        raise CliError(
            f"sinogram is {rows}x{cols}, geometry says "
            f"{args.angles}x{args.detectors}")
    if args.levels is not None and args.solver != "wmg-bicgstab":
        raise CliError("--levels requires --solver wmg-bicgstab")
    x_ex = None
    if args.xexact:
        x_ex, xr, xc = read_grid(args.xexact)
        if xr != args.n or xc != args.n:
            raise CliError("--xexact image does not match --n")
    g = build_geometry(args.n, args.detectors, args.angles)
    w = build_projector(g)

    if args.iters == 0:
        x = np.zeros(g.n_image)
        record = ConvergenceRecord()
        err2 = errinf = None
        if x_ex is not None:
            err2, errinf = error_metrics(x, x_ex)
        record.log(0, 1.0, err2, errinf, 0.0)
    else:
        cfg = SolverConfig(max_iterations=args.iters,
                           residual_tolerance=args.tol,
                           regularization_lambda=args.regularization)
        x, record = _run_solver(args.solver, w, g, b, cfg, x_ex,
                                args.levels or 3, args.multiplicative_wtg)

    write_grid(args.out, x, args.n, args.n)
    write_convergence_csv(args.log, record)
    if args.pgm:
        write_pgm(args.pgm, x, args.n, args.n)
    manifest = _base_manifest("reconstruct")
    manifest.update(sino=args.sino, n=args.n, angles=args.angles,
                    detectors=args.detectors, solver=args.solver,
                    iters=args.iters, tol=args.tol,
                    regularization_lambda=args.regularization,
                    levels=args.levels or "",
                    multiplicative_wtg=args.multiplicative_wtg,
                    status=record.status if args.iters else "skipped")
    write_manifest(str(args.out) + ".manifest", manifest)
    return 0


def cmd_spectrum(args) -> int:
    g = build_geometry(args.n, args.detectors or args.n, args.angles)
    w = build_projector(g)
    modes = None
    if args.operator == "sirt-s":
        spec = sirt_spectrum(w, with_eigenvectors=bool(args.modes))
        if args.modes:
            modes = spec.eigenvectors[:, :args.modes]
    else:
        kind = {"normal": "none", "tg": "tg", "wtg": "wtg"}[args.operator]
        spec = preconditioned_spectrum(w, args.n, args.regularization, kind,
                                       hybrid_wtg=args.hybrid_wtg)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "real", "imag", "magnitude"])
        for i, v in enumerate(spec.eigenvalues):
            writer.writerow([i, repr(float(v.real)), repr(float(v.imag)),
                             repr(float(abs(v)))])
    if modes is not None:
        for j in range(modes.shape[1]):
            vec = modes[:, j].real
            # fix the sign: largest-magnitude component positive
            if vec[np.argmax(np.abs(vec))] < 0:
                vec = -vec
            write_pgm(f"{args.modes_prefix}{j:03d}.pgm", vec, args.n, args.n)
    manifest = _base_manifest("spectrum")
    manifest.update(n=args.n, angles=args.angles,
                    detectors=args.detectors or args.n,
                    operator=args.operator,
                    regularization_lambda=args.regularization,
                    wtg_form="hybrid" if args.hybrid_wtg else "multiplicative")
    if spec.condition_number is not None:
        manifest["condition_number"] = repr(spec.condition_number)
        print(f"kappa = {spec.condition_number:.4e}")
    write_manifest(str(args.out) + ".manifest", manifest)
    return 0


def cmd_bench(args) -> int:
    table = args.table
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    n = args.n
    g = build_geometry(n, args.detectors or n, args.angles)
    w = build_projector(g)
    x_ex = shepp_logan(n)
    b = w @ x_ex
    noise = 0.01 if table == "3" else 0.0
    if noise:
        b = add_noise(b, noise, args.seed)

    rows = []
    for solver, (iters, target_l2) in TABLE_TARGETS[table].items():
        lam = TABLE_LAMBDAS[table][solver]
        budget = max(1, int(round(iters * args.iters_scale)))
        cfg = SolverConfig(max_iterations=budget, regularization_lambda=lam)
        t0 = time.perf_counter()
        x, record = _run_solver(solver, w, g, b, cfg, x_ex, args.levels, False)
        elapsed = time.perf_counter() - t0
        rel_l2, rel_linf = error_metrics(x, x_ex)
        low, high = 0.7 * target_l2, 1.3 * target_l2
        ok = "yes" if low <= rel_l2 <= high else "no"
        rows.append([solver, budget, f"{elapsed:.3f}", repr(rel_l2),
                     repr(rel_linf), repr(target_l2), ok])

    csv_path = outdir / f"table{table}.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["solver", "iterations", "seconds", "rel_l2",
                         "rel_linf", "ref_rel_l2", "within_window"])
        writer.writerows(rows)
    manifest = _base_manifest("bench")
    manifest.update(table=table, n=n, angles=args.angles,
                    detectors=args.detectors or n, levels=args.levels,
                    iters_scale=args.iters_scale, noise=noise)
    if noise:
        manifest.update(seed=args.seed, rng="PCG64")
    write_manifest(str(csv_path) + ".manifest", manifest)
    for row in rows:
        print(" ".join(str(v) for v in row))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wmgtomo",
        description="Algebraic tomographic reconstruction with wavelet-based "
                    "multigrid preconditioned Krylov solvers")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate the Shepp-Logan test image")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pgm", help="also write an 8-bit PGM preview")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("project", help="forward-project an image")
    p.add_argument("--image", required=True)
    p.add_argument("--angles", type=int, required=True)
    p.add_argument("--detectors", type=int, required=True)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("reconstruct", help="solve the reconstruction problem")
    p.add_argument("--sino", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--angles", type=int, required=True)
    p.add_argument("--detectors", type=int, required=True)
    p.add_argument("--solver", required=True,
                   choices=["sirt", "bicgstab", "tg-bicgstab", "wmg-bicgstab"])
    p.add_argument("--iters", type=int, required=True)
    p.add_argument("--tol", type=float, default=0.0)
    p.add_argument("--lambda", dest="regularization", type=float, default=0.0)
    p.add_argument("--levels", type=int)
    p.add_argument("--multiplicative-wtg", action="store_true")
    p.add_argument("--xexact")
    p.add_argument("--out", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--pgm")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("spectrum", help="eigenvalue analysis of small operators")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--angles", type=int, required=True)
    p.add_argument("--detectors", type=int)
    p.add_argument("--operator", required=True,
                   choices=["sirt-s", "normal", "tg", "wtg"])
    p.add_argument("--lambda", dest="regularization", type=float, default=0.0)
    p.add_argument("--hybrid-wtg", action="store_true")
    p.add_argument("--modes", type=int, default=0,
                   help="export this many eigenmode images (sirt-s only)")
    p.add_argument("--modes-prefix", default="mode_")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("bench", help="reproduce a benchmark table")
    p.add_argument("--table", required=True, choices=["1", "2", "3"])
    p.add_argument("--outdir", required=True)
    p.add_argument("--n", type=int, default=160)
    p.add_argument("--angles", type=int, default=400)
    p.add_argument("--detectors", type=int)
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--iters-scale", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=DEFAULT_BENCH_SEED)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (NotPositiveDefiniteError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL_ERROR
    except (CliError, DimensionMismatchError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARG_ERROR


if __name__ == "__main__":
    sys.exit(main())
