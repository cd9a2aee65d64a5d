"""Reference and coarse Galerkin solves, K-norm errors and spectral bounds."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .correctors import MultiscaleBasis
from .operators import NumericalError, SparseSymOperator, seminorm

log = logging.getLogger(__name__)

DENSE_LIMIT = 2000


class SolverError(NumericalError):
    pass


def _free(dirichlet, n):
    d = np.asarray(dirichlet)
    if d.dtype == bool:
        return np.flatnonzero(~d)
    mask = np.ones(n, bool)
    mask[d] = False
    return np.flatnonzero(mask)


def reference_solve(K: SparseSymOperator, f, dirichlet, rtol: float = 1e-12,
                    method: str = "direct") -> np.ndarray:
    """Fine solution of ``(K u, v) = (f, v)`` with ``u = 0`` on ``dirichlet``."""
    A = K.matrix if hasattr(K, "matrix") else sp.csr_matrix(K)
    n = A.shape[0]
    f = np.asarray(f, float)
    free = _free(dirichlet, n)
    u = np.zeros(n)
    if not np.any(f[free]):
        return u
    Aff = A[free][:, free].tocsc()
    b = f[free]
    if method == "direct":
        u[free] = spla.splu(Aff, permc_spec="MMD_AT_PLUS_A").solve(b)
    elif method == "cg":
        dinv = 1.0 / Aff.diagonal()
        pre = spla.LinearOperator(Aff.shape, lambda x: dinv * x)
        x, info = spla.cg(Aff, b, rtol=rtol, atol=0.0, maxiter=20 * len(b), M=pre)
        if info != 0:
            res = np.linalg.norm(Aff @ x - b) / np.linalg.norm(b)
            raise SolverError(f"CG did not converge (relative residual {res:.3e})")
        u[free] = x
    else:
        raise ValueError(f"unknown method {method!r}")
    res = np.linalg.norm(Aff @ u[free] - b) / np.linalg.norm(b)
    if res > max(rtol, 1e-10) * 1e2:
        raise SolverError(f"reference solve residual too large ({res:.3e})")
    return u


@dataclass
class GalerkinResult:
    coefficients: np.ndarray
    u_H: np.ndarray
    condition: float


def galerkin_solve(K: SparseSymOperator, f, basis: MultiscaleBasis | sp.spmatrix) -> GalerkinResult:
    """Galerkin approximation in the span of the basis columns."""
    Phi = basis.Phi if isinstance(basis, MultiscaleBasis) else sp.csc_matrix(basis)
    label = (f"variant {basis.variant}, ell {basis.ell}" if isinstance(basis, MultiscaleBasis)
             else "given basis")
    A = K.matrix if hasattr(K, "matrix") else sp.csr_matrix(K)
    KPhi = A @ Phi
    G = (Phi.T @ KPhi)
    b = Phi.T @ np.asarray(f, float)
    N = G.shape[0]
    if N <= DENSE_LIMIT:
        G = G.toarray() if sp.issparse(G) else np.asarray(G)
        G = 0.5 * (G + G.T)
        try:
            cho = sla.cho_factor(G)
        except sla.LinAlgError as exc:
            raise SolverError(f"coarse Gram matrix not positive definite ({label}); "
                              "localization may be too aggressive") from exc
        c = sla.cho_solve(cho, b)
        # 1-norm condition estimate from the factor
        rcond = sla.lapack.dpocon(cho[0], np.abs(G).sum(axis=0).max(),
                                   uplo="L" if cho[1] else "U")[0]
        cond = 1.0 / rcond if rcond > 0 else np.inf
    else:
        Gs = sp.csc_matrix(G)
        c = spla.splu(Gs).solve(b)
        cond = float("nan")
    if not np.isfinite(cond) or cond > 1e14:
        raise SolverError(f"coarse Gram matrix numerically singular ({label}, cond {cond:.2e})")
    return GalerkinResult(c, np.asarray(Phi @ c).ravel(), float(cond))


def relative_error_K(K: SparseSymOperator, u, u_H) -> float:
    u = np.asarray(u, float)
    nu = seminorm(K, u)
    if nu == 0:
        raise ValueError("reference solution has zero K-norm")
    return seminorm(K, u - np.asarray(u_H, float)) / nu


@dataclass
class SpectralBounds:
    gamma: float
    gamma_prime: float
    converged: bool
    iterations: int


def spectral_bounds_estimate(K: SparseSymOperator, L: SparseSymOperator, free,
                             tol: float = 1e-4, maxiter: int = 500, seed: int = 0) -> SpectralBounds:
    """Extreme values of ``(Kv, v) / (Lv, v)`` on ``free`` nodes by power iteration.

    The largest eigenvalue of ``L^-1 K`` gives ``gamma'`` and the largest of
    ``K^-1 L`` gives ``1 / gamma``; each iteration is normalized in the
    inner product of the inverted operator.
    """
    free = np.asarray(free)
    Kf = K.restrict(free).tocsc()
    Lf = L.restrict(free).tocsc()
    luK, luL = spla.splu(Kf), spla.splu(Lf)
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal(len(free))

    def rayleigh_power(A, B, luB):
        # power iteration for B^-1 A with B-normalization
        x = x0.copy()
        lam, conv = 0.0, False
        it = 0
        for it in range(1, maxiter + 1):
            y = luB.solve(A @ x)
            lam_new = float(y @ (B @ x)) / float(x @ (B @ x))
            x = y / np.sqrt(float(y @ (B @ y)))
            if it > 1 and abs(lam_new - lam) <= tol * abs(lam_new):
                conv = True
                lam = lam_new
                break
            lam = lam_new
        return lam, conv, it

    gp, c1, i1 = rayleigh_power(Kf, Lf, luL)
    ig, c2, i2 = rayleigh_power(Lf, Kf, luK)
    if not (c1 and c2):
        log.warning("spectral bound estimate not converged; values are approximate")
    return SpectralBounds(1.0 / ig, gp, c1 and c2, max(i1, i2))
