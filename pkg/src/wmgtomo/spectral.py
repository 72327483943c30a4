"""Dense assembly of small iteration/preconditioned operators and their spectra.

These diagnostics are inherently small-scale: they assemble N-by-N dense
matrices (guarded at N <= 6400 unless forced) and invert the normal
operator by dense factorization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .multilevel import BAND_IDS, build_intergrid_set
from .solvers import sirt_scaling

ASSEMBLY_GUARD = 6400


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues sorted by ascending magnitude, with a source label."""

    eigenvalues: np.ndarray
    label: str
    eigenvectors: Optional[np.ndarray] = None
    condition_number: Optional[float] = None

    def kappa(self) -> float:
        """max|lambda| / min|lambda| of the stored eigenvalues."""
        mags = np.abs(self.eigenvalues)
        return float(mags.max() / mags.min())


def _sorted_by_magnitude(vals, vecs=None):
    order = np.argsort(np.abs(vals), kind="stable")
    vals = vals[order]
    vecs = vecs[:, order] if vecs is not None else None
    return vals, vecs


def assemble_dense(op: Callable[[np.ndarray], np.ndarray], dim: int,
                   force: bool = False) -> np.ndarray:
    """Column j is op applied to the j-th standard basis vector."""
    if dim > ASSEMBLY_GUARD and not force:
        raise ValueError(
            f"assemble_dense: dim={dim} exceeds guard {ASSEMBLY_GUARD}; "
            "pass force=True to override")
    out = np.empty((dim, dim))
    e = np.zeros(dim)
    for j in range(dim):
        e[j] = 1.0
        out[:, j] = op(e)
        e[j] = 0.0
    return out


def _dense_normal(w: sp.spmatrix, lam: float) -> np.ndarray:
    a = (w.T @ w).toarray()
    if lam != 0:
        a[np.diag_indices_from(a)] += lam
    return a


def _dense_sirt_iteration_matrix(w: sp.spmatrix, lam: float = 0.0) -> np.ndarray:
    scaling = sirt_scaling(w)
    m = (w.T @ sp.diags(scaling.r) @ w).toarray()
    if lam != 0:
        m[np.diag_indices_from(m)] += lam
    s = -scaling.c[:, None] * m
    s[np.diag_indices_from(s)] += 1.0
    return s


def sirt_spectrum(w: sp.spmatrix, with_eigenvectors: bool = False) -> Spectrum:
    """Spectrum of S = I - C W^T R W (real up to roundoff; S is similar to
    a symmetric matrix)."""
    s = _dense_sirt_iteration_matrix(w)
    if with_eigenvectors:
        vals, vecs = scipy.linalg.eig(s)
        vals, vecs = _sorted_by_magnitude(vals, vecs)
        return Spectrum(eigenvalues=vals, label="sirt-S", eigenvectors=vecs)
    vals = scipy.linalg.eigvals(s)
    vals, _ = _sorted_by_magnitude(vals)
    return Spectrum(eigenvalues=vals, label="sirt-S")


def _dense_band_correction(a: np.ndarray, r_band: np.ndarray) -> np.ndarray:
    """I - R^T (R A R^T)^{-1} R A for one restriction band."""
    coarse = r_band @ a @ r_band.T
    correction = r_band.T @ np.linalg.solve(coarse, r_band @ a)
    return np.eye(a.shape[0]) - correction


def dense_tg_operator(w: sp.spmatrix, n: int, lam: float = 0.0,
                      smoother_steps: tuple[int, int] = (1, 1)) -> np.ndarray:
    """Error-propagation matrix of classical TG with SIRT smoothing."""
    a = _dense_normal(w, lam)
    s = _dense_sirt_iteration_matrix(w, lam)
    r_ll = build_intergrid_set(n)["LL"].toarray()
    tg = _dense_band_correction(a, r_ll)
    nu1, nu2 = smoother_steps
    return np.linalg.matrix_power(s, nu2) @ tg @ np.linalg.matrix_power(s, nu1)


def dense_wtg_operator(w: sp.spmatrix, n: int, lam: float = 0.0,
                       hybrid: bool = False) -> np.ndarray:
    """Error-propagation matrix of the wavelet two-grid correction.

    Multiplicative form (default): the product of the four band corrections,
    LL applied first. Hybrid form: LL first, then the three oscillatory-band
    corrections applied additively to the refreshed residual.
    """
    a = _dense_normal(w, lam)
    grids = build_intergrid_set(n)
    dense_r = {band: grids[band].toarray() for band in BAND_IDS}
    ll = _dense_band_correction(a, dense_r["LL"])
    if not hybrid:
        out = ll
        for band in ("LH", "HL", "HH"):
            out = _dense_band_correction(a, dense_r[band]) @ out
        return out
    # hybrid: e += sum_id R^T A_id^{-1} R r' with a single refreshed residual
    accum = np.zeros_like(a)
    for band in ("LH", "HL", "HH"):
        r_band = dense_r[band]
        coarse = r_band @ a @ r_band.T
        accum += r_band.T @ np.linalg.solve(coarse, r_band @ a)
    return (np.eye(a.shape[0]) - accum) @ ll


def preconditioned_spectrum(w: sp.spmatrix, n: int, lam: float,
                            precond_kind: str,
                            smoother_steps: tuple[int, int] = (1, 1),
                            hybrid_wtg: bool = False) -> Spectrum:
    """Spectrum (and kappa) of the preconditioned Krylov iteration matrix.

    'none' returns the spectrum of A = W^T W + lam*I itself; 'tg' and 'wtg'
    return the spectrum of I - A G A^{-1} with G the corresponding dense
    error-propagation matrix.
    """
    a = _dense_normal(w, lam)
    if precond_kind == "none":
        vals = scipy.linalg.eigvalsh(a)
        vals, _ = _sorted_by_magnitude(vals.astype(np.complex128))
        spec = Spectrum(eigenvalues=vals, label="normal-A")
        return Spectrum(eigenvalues=vals, label="normal-A",
                        condition_number=spec.kappa())
    if precond_kind == "tg":
        g = dense_tg_operator(w, n, lam, smoother_steps)
        label = "tg-preconditioned"
    elif precond_kind == "wtg":
        g = dense_wtg_operator(w, n, lam, hybrid=hybrid_wtg)
        label = "wtg-preconditioned"
    else:
        raise ValueError(f"unknown preconditioner kind '{precond_kind}'")
    # I - A G A^{-1}: right-preconditioned iteration matrix
    iteration = np.eye(a.shape[0]) - a @ np.linalg.solve(a.T, g.T).T
    vals = scipy.linalg.eigvals(iteration)
    vals, _ = _sorted_by_magnitude(vals)
    spec = Spectrum(eigenvalues=vals, label=label)
    return Spectrum(eigenvalues=vals, label=label, condition_number=spec.kappa())


def coarse_spectrum(w: sp.spmatrix, n: int, band: str) -> Spectrum:
    """Spectrum of the dense Galerkin operator R_id W^T W R_id^T."""
    if band not in BAND_IDS:
        raise ValueError(f"unknown band '{band}'")
    r_band = build_intergrid_set(n)[band]
    p = w @ r_band.T
    coarse = (p.T @ p).toarray()
    vals = scipy.linalg.eigvalsh(coarse)
    vals, _ = _sorted_by_magnitude(vals.astype(np.complex128))
    return Spectrum(eigenvalues=vals, label="coarse-A")
