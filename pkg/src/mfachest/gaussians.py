"""Complex-Gaussian numerics over low-rank-plus-diagonal covariances.

Covariances are kept in factored form ``C = loading @ loading^H + diag(diag_term)``,
and every routine works through the small latent-dimension system instead of a
dense N x N factorization: inversion uses the Woodbury identity, the
log-determinant the matrix determinant lemma, and densities never leave the
log domain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

LOG_PI = float(np.log(np.pi))

# Condition-number guard for the latent-dimension system; estimated from the
# Cholesky diagonal, which is exact for diagonal matrices and a lower bound
# otherwise.
COND_LIMIT = 1e12


class ConditioningError(ArithmeticError):
    """The latent L x L system is numerically singular beyond the condition limit."""


@dataclass(frozen=True)
class LowRankCovariance:
    """Covariance ``loading @ loading^H + diag(diag_term)``.

    Parameters
    ----------
    loading : ndarray, shape (N, L)
        Complex factor loading matrix; L <= N.
    diag_term : ndarray, shape (N,)
        Strictly positive diagonal term.
    """

    loading: np.ndarray
    diag_term: np.ndarray

    def __post_init__(self):
        loading = np.asarray(self.loading, dtype=np.complex128)
        diag_term = np.asarray(self.diag_term, dtype=np.float64)
        if loading.ndim != 2:
            raise ValueError("loading must be a 2-D (N, L) array")
        if diag_term.ndim != 1 or diag_term.shape[0] != loading.shape[0]:
            raise ValueError("diag_term must be a length-N vector")
        if loading.shape[1] > loading.shape[0]:
            raise ValueError("latent dimension L must not exceed N")
        if not np.all(np.isfinite(loading)):
            raise ValueError("loading entries must be finite")
        if not np.all(np.isfinite(diag_term)) or np.any(diag_term <= 0.0):
            raise ValueError("diag_term entries must be finite and > 0")
        object.__setattr__(self, "loading", loading)
        object.__setattr__(self, "diag_term", diag_term)

    @property
    def dim(self) -> int:
        return self.loading.shape[0]

    @property
    def latent_dim(self) -> int:
        return self.loading.shape[1]

    def dense(self, sigma2: float = 0.0) -> np.ndarray:
        """Materialize the (N, N) covariance, optionally with sigma2 added to the diagonal."""
        w = self.loading
        out = w @ w.conj().T + np.diag(self.diag_term + sigma2)
        return 0.5 * (out + out.conj().T)


class _CovFactors(NamedTuple):
    """Shared Woodbury factorization of ``C + sigma2*I``.

    d is the inverse of the diagonal part, wd = diag(d) @ loading, chol the lower
    Cholesky factor of the latent system ``I + loading^H diag(d) loading``, and
    logdet the log-determinant of the full covariance.
    """

    d: np.ndarray
    wd: np.ndarray
    chol: np.ndarray
    logdet: float


def _check_sigma2(sigma2: float) -> float:
    sigma2 = float(sigma2)
    if not np.isfinite(sigma2) or sigma2 < 0.0:
        raise ValueError("sigma2 must be finite and >= 0")
    return sigma2


def factorize(cov: LowRankCovariance, sigma2: float, label: str = "covariance") -> _CovFactors:
    """Factor ``C + sigma2*I`` through the latent L x L system.

    Raises ConditioningError (naming `label`) when that system is not positive
    definite or its condition estimate exceeds COND_LIMIT.
    """
    sigma2 = _check_sigma2(sigma2)
    diag = cov.diag_term + sigma2
    if np.any(diag <= 0.0):
        raise ValueError("diag_term + sigma2 must be entrywise positive")
    d = 1.0 / diag
    wd = cov.loading * d[:, None]
    latent = cov.latent_dim
    a_inv = np.eye(latent, dtype=np.complex128) + cov.loading.conj().T @ wd
    a_inv = 0.5 * (a_inv + a_inv.conj().T)
    if latent:
        try:
            chol = np.linalg.cholesky(a_inv)
        except np.linalg.LinAlgError as exc:
            raise ConditioningError(
                f"latent system of {label} is not positive definite"
            ) from exc
        pivots = chol.diagonal().real
        cond_est = (pivots.max() / pivots.min()) ** 2
        if not np.isfinite(cond_est) or cond_est > COND_LIMIT:
            raise ConditioningError(
                f"latent system of {label} is ill-conditioned "
                f"(estimate {cond_est:.2e} > {COND_LIMIT:.0e})"
            )
        logdet_latent = 2.0 * float(np.log(pivots).sum())
    else:
        chol = np.zeros((0, 0), dtype=np.complex128)
        logdet_latent = 0.0
    logdet = float(np.log(diag).sum()) + logdet_latent
    return _CovFactors(d=d, wd=wd, chol=chol, logdet=logdet)


def woodbury_inverse(cov: LowRankCovariance, sigma2: float) -> np.ndarray:
    """Dense inverse of ``loading @ loading^H + diag(diag_term) + sigma2*I``.

    Computed as ``D - D W A W^H D`` with diagonal ``D`` and the L x L capacitance
    ``A = (I + W^H D W)^{-1}``; the result is exactly Hermitian.
    """
    f = factorize(cov, sigma2)
    inv = np.diag(f.d).astype(np.complex128)
    if cov.latent_dim:
        # D W A W^H D == half^H half with half = chol^{-1} (W^H D).
        half = solve_triangular(f.chol, f.wd.conj().T, lower=True, check_finite=False)
        inv -= half.conj().T @ half
    return 0.5 * (inv + inv.conj().T)


def lowrank_logdet(cov: LowRankCovariance, sigma2: float) -> float:
    """log det of ``loading @ loading^H + diag(diag_term) + sigma2*I``."""
    return factorize(cov, sigma2).logdet


def cgauss_logpdf(
    x: np.ndarray,
    mean: np.ndarray,
    cov: LowRankCovariance,
    sigma2: float = 0.0,
) -> np.ndarray | float:
    """Circularly-symmetric complex Gaussian log-density with covariance C + sigma2*I.

    Accepts a single vector ``x`` of shape (N,) or a batch of shape (T, N);
    returns a float or a length-T vector accordingly. The density convention is
    ``pi^-N det(C)^-1 exp(-(x-mean)^H C^-1 (x-mean))`` and the evaluation stays
    in the log domain throughout.
    """
    f = factorize(cov, sigma2)
    x = np.asarray(x, dtype=np.complex128)
    single = x.ndim == 1
    xc = np.atleast_2d(x) - np.asarray(mean, dtype=np.complex128)
    if xc.shape[1] != cov.dim:
        raise ValueError("x/mean dimension does not match the covariance")
    quad = _quad_form(xc, f)
    out = -cov.dim * LOG_PI - f.logdet - quad
    return float(out[0]) if single else out


def _quad_form(xc: np.ndarray, f: _CovFactors) -> np.ndarray:
    """Mahalanobis terms ``xc^H (C + sigma2 I)^{-1} xc`` for rows of xc."""
    # einsum over the real/imag views: no (T, N)-sized temporaries or conj copies
    quad = np.einsum("tn,tn,n->t", xc.real, xc.real, f.d)
    quad += np.einsum("tn,tn,n->t", xc.imag, xc.imag, f.d)
    if f.wd.shape[1]:
        proj = xc @ f.wd.conj()  # rows are (W^H D xc)^T
        half = solve_triangular(f.chol, proj.T, lower=True, check_finite=False)
        quad -= np.einsum("lt,lt->t", half.real, half.real)
        quad -= np.einsum("lt,lt->t", half.imag, half.imag)
    return quad


def _latent_posterior(xc: np.ndarray, f: _CovFactors) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean (rows) and shared covariance of the latent factor given xc rows."""
    latent = f.wd.shape[1]
    if latent == 0:
        return np.zeros((xc.shape[0], 0), dtype=np.complex128), np.zeros((0, 0), np.complex128)
    proj = xc @ f.wd.conj()
    # one zpotrs call does both triangular sweeps; the transpose of its
    # Fortran-ordered output is C-contiguous
    mean = cho_solve((f.chol, True), proj.T, check_finite=False).T
    cov = cho_solve((f.chol, True), np.eye(latent, dtype=np.complex128))
    cov = 0.5 * (cov + cov.conj().T)
    return mean, cov


def sample_component(
    mean: np.ndarray,
    cov: LowRankCovariance,
    rng: np.random.Generator,
    size: int | None = None,
) -> np.ndarray:
    """Draw ``mean + loading @ z + u`` with z standard complex normal and u ~ N_C(0, diag).

    With ``size=None`` a single (N,) vector is returned, otherwise a (size, N)
    array. Draw order (z first, then u) is fixed, so outputs are reproducible
    for a seeded generator.
    """
    mean = np.asarray(mean, dtype=np.complex128)
    n_draws = 1 if size is None else int(size)
    latent = cov.latent_dim
    z = _std_cnormal(rng, (n_draws, latent))
    u = _std_cnormal(rng, (n_draws, cov.dim)) * np.sqrt(cov.diag_term)
    out = mean + z @ cov.loading.T + u
    return out[0] if size is None else out


def _std_cnormal(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard circularly-symmetric complex normal: unit variance per entry."""
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) / np.sqrt(2.0)


def log_sum_exp(values: np.ndarray, axis: int | None = None) -> np.ndarray | float:
    """``log(sum(exp(values)))`` via max shift; exact for single-element input."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("log_sum_exp requires a nonempty input")
    shift = np.max(values, axis=axis, keepdims=True)
    # An all--inf slice would propagate nan through the subtraction.
    shift = np.where(np.isfinite(shift), shift, 0.0)
    out = np.log(np.exp(values - shift).sum(axis=axis, keepdims=True)) + shift
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)
