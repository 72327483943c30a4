"""SIRT stationary iteration and right-preconditioned BiCGStab.

Both solvers work on the (optionally Tikhonov-regularized) normal equations
of the projection system and log per-iteration relative residuals, relative
errors against a known exact image, and cumulative wall-clock time.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .phantom import error_metrics
from .sparse_kernels import DimensionMismatchError

BREAKDOWN_REL_TOL = 1e-14

STATUS_CONVERGED = "converged"
STATUS_MAX_ITERATIONS = "max-iterations"
STATUS_BREAKDOWN = "breakdown"


@dataclass
class SolverConfig:
    max_iterations: int = 100
    residual_tolerance: float = 0.0
    regularization_lambda: float = 0.0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.residual_tolerance < 0 or self.regularization_lambda < 0:
            raise ValueError("tolerance and lambda must be nonnegative")


@dataclass
class ConvergenceRecord:
    """Per-iteration (index, rel. residual, rel. L2 error, rel. Linf error, seconds)."""

    iterations: list[int] = field(default_factory=list)
    rel_residual: list[float] = field(default_factory=list)
    rel_err_l2: list[Optional[float]] = field(default_factory=list)
    rel_err_linf: list[Optional[float]] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    status: str = STATUS_MAX_ITERATIONS

    def log(self, k, rel_res, err2, errinf, secs):
        self.iterations.append(int(k))
        self.rel_residual.append(float(rel_res))
        self.rel_err_l2.append(None if err2 is None else float(err2))
        self.rel_err_linf.append(None if errinf is None else float(errinf))
        self.seconds.append(float(secs))

    @property
    def has_errors(self) -> bool:
        return all(e is not None for e in self.rel_err_l2) and bool(self.rel_err_l2)


def find_kopt(record: ConvergenceRecord) -> int:
    """First iteration index attaining the minimum relative L2 error."""
    if not record.has_errors:
        raise ValueError("record has no error data; solve with x_ex provided")
    errs = np.asarray(record.rel_err_l2, dtype=np.float64)
    return int(record.iterations[int(np.argmin(errs))])


@dataclass(frozen=True)
class SirtScaling:
    """Inverse column sums (c, length N) and inverse row sums (r, length M) of W."""

    c: np.ndarray
    r: np.ndarray


def sirt_scaling(w: sp.spmatrix) -> SirtScaling:
    w = w.tocsr()
    row_sums = np.asarray(w.sum(axis=1)).ravel()
    col_sums = np.asarray(w.sum(axis=0)).ravel()
    with np.errstate(divide="ignore"):
        r = np.where(row_sums > 0, 1.0 / row_sums, 0.0)
        c = np.where(col_sums > 0, 1.0 / col_sums, 0.0)
    return SirtScaling(c=c, r=r)


def _errors(x, x_ex):
    if x_ex is None:
        return None, None
    return error_metrics(x, x_ex)


def sirt_solve(w: sp.spmatrix, b: np.ndarray, x0: np.ndarray,
               cfg: SolverConfig, x_ex: Optional[np.ndarray] = None,
               ) -> tuple[np.ndarray, ConvergenceRecord]:
    """Gregor-Benson scaled SIRT: x <- x + C W^T R (b - W x) - lambda C x.

    The Tikhonov term is passed through the column scaling so the fixed
    point solves the C-scaled regularized normal equations.
    """
    b = np.asarray(b, dtype=np.float64)
    if x0 is None:
        x = np.zeros(w.shape[1])
    else:
        x = np.array(x0, dtype=np.float64, copy=True)
    if b.shape[0] != w.shape[0] or x.shape[0] != w.shape[1]:
        raise DimensionMismatchError("sirt_solve: dimension mismatch")
    scaling = sirt_scaling(w)
    wt = w.T.tocsr()
    lam = cfg.regularization_lambda

    record = ConvergenceRecord()
    t0 = time.perf_counter()
    res = b - w @ x
    res_norm0 = np.linalg.norm(res)
    err2, errinf = _errors(x, x_ex)
    record.log(0, 1.0, err2, errinf, time.perf_counter() - t0)
    if res_norm0 == 0.0:
        record.status = STATUS_CONVERGED
        return x, record

    for k in range(1, cfg.max_iterations + 1):
        update = scaling.c * (wt @ (scaling.r * res))
        if lam > 0:
            update -= lam * (scaling.c * x)
        x += update
        res = b - w @ x
        rel = np.linalg.norm(res) / res_norm0
        err2, errinf = _errors(x, x_ex)
        record.log(k, rel, err2, errinf, time.perf_counter() - t0)
        if cfg.residual_tolerance > 0 and rel < cfg.residual_tolerance:
            record.status = STATUS_CONVERGED
            return x, record
    record.status = STATUS_MAX_ITERATIONS
    return x, record


def normal_operator(w: sp.spmatrix, lam: float) -> Callable[[np.ndarray], np.ndarray]:
    """v -> W^T (W v) + lambda v, computed without materializing W^T W."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    wt = w.T.tocsr()

    def op(v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape[0] != w.shape[1]:
            raise DimensionMismatchError(
                f"normal_operator: length {v.shape[0]} != {w.shape[1]}")
        out = wt @ (w @ v)
        if lam != 0:
            out = out + lam * v
        return out

    return op


def bicgstab_solve(op: Callable[[np.ndarray], np.ndarray], f: np.ndarray,
                   precond: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                   x0: Optional[np.ndarray] = None,
                   cfg: SolverConfig = None,
                   x_ex: Optional[np.ndarray] = None,
                   ) -> tuple[np.ndarray, ConvergenceRecord]:
    """Van der Vorst BiCGStab with right preconditioning.

    `op` applies the system matrix on image-domain vectors, `precond` (when
    given) applies M^{-1}; the solution is reported in the unpreconditioned
    variable. Breakdown (rho or omega vanishing relative to the initial
    scale) returns the last iterate with breakdown status.
    """
    if cfg is None:
        cfg = SolverConfig()
    f = np.asarray(f, dtype=np.float64)
    x = np.zeros_like(f) if x0 is None else np.array(x0, dtype=np.float64, copy=True)
    if x.shape != f.shape:
        raise DimensionMismatchError("bicgstab_solve: x0/f length mismatch")
    minv = (lambda v: v) if precond is None else precond

    record = ConvergenceRecord()
    t0 = time.perf_counter()
    r = f - op(x)
    res_norm0 = np.linalg.norm(r)
    err2, errinf = _errors(x, x_ex)
    record.log(0, 1.0, err2, errinf, time.perf_counter() - t0)
    if res_norm0 == 0.0:
        record.status = STATUS_CONVERGED
        return x, record

    r_hat = r.copy()
    r_hat_norm = np.linalg.norm(r_hat)
    rho_prev = alpha = omega = 1.0
    v = p = np.zeros_like(r)

    for k in range(1, cfg.max_iterations + 1):
        rho = float(r_hat @ r)
        # breakdown tests are relative to the current vector magnitudes,
        # not the initial residual, so deep convergence is not mistaken
        # for a Lanczos breakdown
        if abs(rho) <= BREAKDOWN_REL_TOL * r_hat_norm * np.linalg.norm(r):
            record.status = STATUS_BREAKDOWN
            return x, record
        if k == 1:
            p = r.copy()
        else:
            beta = (rho / rho_prev) * (alpha / omega)
            p = r + beta * (p - omega * v)
        p_hat = minv(p)
        v = op(p_hat)
        denom = float(r_hat @ v)
        if abs(denom) <= BREAKDOWN_REL_TOL * r_hat_norm * np.linalg.norm(v):
            record.status = STATUS_BREAKDOWN
            return x, record
        alpha = rho / denom
        s = r - alpha * v
        s_hat = minv(s)
        t = op(s_hat)
        tt = float(t @ t)
        if tt < BREAKDOWN_REL_TOL ** 2 * res_norm0 ** 2:
            # s is already (numerically) the solved residual
            x = x + alpha * p_hat
            r = s
            rel = np.linalg.norm(r) / res_norm0
            err2, errinf = _errors(x, x_ex)
            record.log(k, rel, err2, errinf, time.perf_counter() - t0)
            record.status = STATUS_CONVERGED
            return x, record
        omega = float(t @ s) / tt
        x = x + alpha * p_hat + omega * s_hat
        r = s - omega * t
        rho_prev = rho

        rel = np.linalg.norm(r) / res_norm0
        err2, errinf = _errors(x, x_ex)
        record.log(k, rel, err2, errinf, time.perf_counter() - t0)
        if cfg.residual_tolerance > 0 and rel < cfg.residual_tolerance:
            record.status = STATUS_CONVERGED
            return x, record
        if abs(omega) < BREAKDOWN_REL_TOL:
            record.status = STATUS_BREAKDOWN
            return x, record
    record.status = STATUS_MAX_ITERATIONS
    return x, record
