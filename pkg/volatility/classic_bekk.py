"""
Constant-coefficient diagonal BEKK(1,1):

    Sigma_t = C'C + A' r_{t-1} r_{t-1}' A + B' Sigma_{t-1} B

with A, B diagonal and C upper triangular. Because A and B are diagonal each
entry follows its own linear recursion
Sigma_ij,t = K_ij + a_i a_j r_i r_j + b_i b_j Sigma_ij,t-1, which is run with
``scipy.signal.lfilter``.
"""

from dataclasses import dataclass
from math import log as math_log
from math import pi as math_pi
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter
from scipy.special import expit, gammaln, logit

from logger import Logger
from . import linalg
from .errors import (
    DegreesOfFreedomTooSmall,
    DimensionMismatch,
    InvalidParams,
    NotPositiveDefinite,
    OptimizerDiverged,
    SeriesTooShort,
)

LOG_2PI = math_log(2.0 * math_pi)
MIN_OBS_PER_ASSET = 50
INNOVATIONS = ("normal", "student_t")


@dataclass(frozen=True, eq=False)
class BekkParams:
    C: np.ndarray  # n x n upper triangular
    a_diag: np.ndarray
    b_diag: np.ndarray
    nu: Optional[float] = None

    @property
    def n(self) -> int:
        return len(self.a_diag)

    @property
    def n_params(self) -> int:
        n = self.n
        return 2 * n + n * (n + 1) // 2 + (1 if self.nu is not None else 0)

    @property
    def intercept(self) -> np.ndarray:
        return self.C.T @ self.C

    def validate(self) -> "BekkParams":
        C = np.asarray(self.C, dtype=float)
        n = len(self.a_diag)
        if C.shape != (n, n) or len(self.b_diag) != n:
            raise InvalidParams(f"BEKK shapes disagree: C {C.shape}, n={n}")
        values = np.concatenate([C.ravel(), self.a_diag, self.b_diag])
        if not np.all(np.isfinite(values)):
            raise InvalidParams("Non-finite BEKK parameters")
        if np.any(np.tril(C, -1) != 0):
            raise InvalidParams("C must be upper triangular")
        if np.any(np.diag(C) < 0):
            raise InvalidParams("C must have a non-negative diagonal")
        if np.any(self.a_diag < 0) or np.any(self.b_diag < 0):
            raise InvalidParams("A and B diagonals must be non-negative")
        if self.nu is not None and self.nu <= 2:
            raise DegreesOfFreedomTooSmall(self.nu)
        return self

    def to_dict(self) -> dict:
        out = {
            "C": self.C,
            "a_diag": self.a_diag,
            "b_diag": self.b_diag,
        }
        if self.nu is not None:
            out["nu"] = self.nu
        return out


@dataclass(frozen=True, eq=False)
class BekkFitResult:
    kind: str
    params: BekkParams
    loglik: float
    n_obs: int
    sigma0: np.ndarray
    n_starts: int
    n_failed: int


def _lagged(R: np.ndarray) -> np.ndarray:
    out = np.zeros_like(R)
    out[1:] = R[:-1]
    return out


def bekk_filter(params: BekkParams, R: np.ndarray, Sigma0: linalg.MatrixLike) -> np.ndarray:
    """Conditional covariances Sigma_1..Sigma_T as a (T, n, n) array."""
    params.validate()
    R = np.atleast_2d(np.asarray(R, dtype=float))
    sigma0 = Sigma0.entries if isinstance(Sigma0, linalg.CovMatrix) else np.asarray(Sigma0, float)
    n = params.n
    if R.shape[1] != n or sigma0.shape != (n, n):
        raise DimensionMismatch(f"Returns {R.shape} / Sigma0 {sigma0.shape} vs n={n}")
    if not linalg.is_positive_definite(sigma0):
        raise InvalidParams("Sigma0 must be positive definite")

    K = params.intercept
    lagged = _lagged(R)
    a, b = params.a_diag, params.b_diag
    out = np.empty((R.shape[0], n, n))
    for i in range(n):
        for j in range(i, n):
            phi = b[i] * b[j]
            drive = K[i, j] + (a[i] * a[j]) * (lagged[:, i] * lagged[:, j])
            path, _ = lfilter([1.0], [1.0, -phi], drive, zi=[phi * sigma0[i, j]])
            out[:, i, j] = path
            out[:, j, i] = path
    return out


def _stack(Sigmas: Union[np.ndarray, Sequence[linalg.CovMatrix]]) -> np.ndarray:
    if isinstance(Sigmas, np.ndarray):
        return Sigmas
    return np.stack([s.entries for s in Sigmas])


def _quad_terms(Sigmas, R) -> Tuple[np.ndarray, np.ndarray, int]:
    S = _stack(Sigmas)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if S.shape[0] != R.shape[0] or S.shape[1:] != (R.shape[1], R.shape[1]):
        raise DimensionMismatch(f"Covariances {S.shape} do not match returns {R.shape}")
    logdets, quads = linalg.batch_logdet_and_quadform(S, R)
    return logdets, quads, R.shape[1]


def loglik_mvn_terms(Sigmas, R) -> np.ndarray:
    logdets, quads, n = _quad_terms(Sigmas, R)
    return -0.5 * n * LOG_2PI - 0.5 * logdets - 0.5 * quads


def loglik_mvn(Sigmas, R) -> float:
    """Multivariate normal log-likelihood of r_t ~ N(0, Sigma_t)."""
    return float(np.sum(loglik_mvn_terms(Sigmas, R)))


def loglik_mvt_terms(Sigmas, R, nu: float) -> np.ndarray:
    if not nu > 2:
        raise DegreesOfFreedomTooSmall(nu)
    logdets, quads, n = _quad_terms(Sigmas, R)
    return (
        gammaln((nu + n) / 2.0)
        - gammaln(nu / 2.0)
        - 0.5 * n * np.log((nu - 2.0) * np.pi)
        - 0.5 * logdets
        - 0.5 * (nu + n) * np.log1p(quads / (nu - 2.0))
    )


def loglik_mvt(Sigmas, R, nu: float) -> float:
    """Standardized multivariate t log-likelihood with covariance Sigma_t."""
    return float(np.sum(loglik_mvt_terms(Sigmas, R, nu)))


def loglik_per_obs(params: BekkParams, Sigmas, R) -> np.ndarray:
    if params.nu is not None:
        return loglik_mvt_terms(Sigmas, R, params.nu)
    return loglik_mvn_terms(Sigmas, R)


def heldout_loglik(
    params: BekkParams, full: np.ndarray, Sigma0: np.ndarray, test_range: Tuple[int, int]
) -> float:
    """Filter the full series, sum the log-likelihood over test_range."""
    Sigmas = bekk_filter(params, full, Sigma0)
    start, stop = test_range
    return float(np.sum(loglik_per_obs(params, Sigmas[start:stop], full[start:stop])))


# Parameter vector <-> BekkParams

_TINY = 1e-6


def params_from_vector(u: np.ndarray, n: int, with_nu: bool) -> BekkParams:
    """Unconstrained vector -> parameters.

    Layout: C upper entries (diagonal on log scale), then per-asset
    persistence logits, then per-asset ARCH-share logits, then log(nu - 2).
    """
    iu = np.triu_indices(n)
    n_c = len(iu[0])
    C = np.zeros((n, n))
    C[iu] = u[:n_c]
    C[np.diag_indices(n)] = np.exp(np.diag(C))
    persistence = expit(u[n_c : n_c + n])
    share = expit(u[n_c + n : n_c + 2 * n])
    nu = float(np.exp(u[n_c + 2 * n]) + 2.0) if with_nu else None
    return BekkParams(
        C=C,
        a_diag=np.sqrt(persistence * share),
        b_diag=np.sqrt(persistence * (1.0 - share)),
        nu=nu,
    )


def params_to_vector(p: BekkParams) -> np.ndarray:
    n = p.n
    C = np.array(p.C, dtype=float)
    C[np.diag_indices(n)] = np.log(np.maximum(np.diag(C), _TINY))
    a2, b2 = p.a_diag**2, p.b_diag**2
    persistence = np.clip(a2 + b2, _TINY, 1.0 - _TINY)
    share = np.clip(a2 / np.maximum(a2 + b2, _TINY), _TINY, 1.0 - _TINY)
    parts = [C[np.triu_indices(n)], logit(persistence), logit(share)]
    if p.nu is not None:
        parts.append([np.log(p.nu - 2.0)])
    return np.concatenate(parts)


def _targeted_params(
    sigma0: np.ndarray, a2: np.ndarray, b2: np.ndarray, nu: Optional[float]
) -> BekkParams:
    """Parameters whose intercept matches the sample covariance in the long run."""
    n = sigma0.shape[0]
    scale = np.sqrt(np.outer(1.0 - a2 - b2, 1.0 - a2 - b2))
    K = sigma0 * scale
    try:
        L = linalg.cholesky(K)
    except NotPositiveDefinite:
        L = np.diag(np.sqrt(np.maximum(np.diag(K), _TINY)))
    return BekkParams(C=L.T.copy(), a_diag=np.sqrt(a2), b_diag=np.sqrt(b2), nu=nu)


def baseline_params(sigma0: np.ndarray, with_nu: bool) -> BekkParams:
    n = sigma0.shape[0]
    return _targeted_params(
        sigma0, np.full(n, 0.05), np.full(n, 0.9), 8.0 if with_nu else None
    )


def fit_mle(
    innovation: str,
    train: np.ndarray,
    n_starts: int = 5,
    seed: int = 0,
    log_level: str = "INFO",
) -> BekkFitResult:
    """Multi-start maximum likelihood for diagonal BEKK(1,1)."""
    logger = Logger(log_level, "classic_bekk")
    if innovation not in INNOVATIONS:
        raise ValueError(f"Unknown innovation '{innovation}', expected one of {INNOVATIONS}")
    R = np.atleast_2d(np.asarray(train, dtype=float))
    if R.shape[0] == 1 and R.shape[1] > 1:
        R = R.T
    T, n = R.shape
    if T < MIN_OBS_PER_ASSET * n:
        raise SeriesTooShort(f"BEKK with n={n} needs at least {MIN_OBS_PER_ASSET * n} rows, got {T}")

    with_nu = innovation == "student_t"
    kind = "bekk_t" if with_nu else "bekk_n"
    sigma0 = np.atleast_2d(np.cov(R, rowvar=False, bias=True))
    if not linalg.is_positive_definite(sigma0):
        raise SeriesTooShort("Training covariance is singular")

    def loglik(params: BekkParams) -> float:
        with np.errstate(all="ignore"):
            Sigmas = bekk_filter(params, R, sigma0)
            return float(np.sum(loglik_per_obs(params, Sigmas, R)))

    def objective(u: np.ndarray) -> float:
        try:
            value = loglik(params_from_vector(u, n, with_nu))
        except (InvalidParams, NotPositiveDefinite, DegreesOfFreedomTooSmall):
            return 1e10
        return -value / T if np.isfinite(value) else 1e10

    rng = np.random.default_rng(seed)
    starts: List[BekkParams] = [baseline_params(sigma0, with_nu)]
    for _ in range(max(n_starts, 5)):
        b2 = rng.uniform(0.5, 0.95, n)
        a2 = rng.uniform(0.01, np.minimum(0.3, 0.999 - b2))
        nu = float(rng.uniform(4.0, 20.0)) if with_nu else None
        starts.append(_targeted_params(sigma0, a2, b2, nu))

    best_u, best_value, n_failed = None, np.inf, 0
    for i, start in enumerate(starts):
        u0 = params_to_vector(start)
        start_value = objective(u0)
        try:
            result = minimize(objective, u0, method="L-BFGS-B")
            value, u = min([(result.fun, result.x), (start_value, u0)], key=lambda c: c[0])
        except (ValueError, FloatingPointError) as e:
            logger.debug(f"Start {i} raised {e}")
            value, u = start_value, u0
        if not np.isfinite(value) or value >= 1e10:
            n_failed += 1
            continue
        logger.debug(f"Start {i}: loglik {-value * T:.4f}")
        if value < best_value:
            best_u, best_value = u, value

    if best_u is None:
        raise OptimizerDiverged(f"All {len(starts)} starts failed for {kind}")

    params = params_from_vector(best_u, n, with_nu)
    ll = loglik(params)
    logger.info(f"📈 {kind} fitted on n={n}: loglik {ll:.4f}")
    return BekkFitResult(
        kind=kind,
        params=params,
        loglik=ll,
        n_obs=T,
        sigma0=sigma0,
        n_starts=len(starts),
        n_failed=n_failed,
    )


def simulate_bekk(
    params: BekkParams, n_obs: int, rng: np.random.Generator, burn: int = 500
) -> Tuple[np.ndarray, np.ndarray]:
    """Simulate (returns T x n, covariances T x n x n)."""
    params.validate()
    n = params.n
    total = n_obs + burn
    K = params.intercept
    a, b = params.a_diag, params.b_diag
    aa, bb = np.outer(a, a), np.outer(b, b)
    denom = 1.0 - aa - bb
    sigma = K / np.where(np.abs(denom) > _TINY, denom, _TINY)
    if not linalg.is_positive_definite(sigma):
        sigma = K + np.eye(n)
    r_prev = np.zeros(n)
    R = np.empty((total, n))
    S = np.empty((total, n, n))
    for t in range(total):
        sigma = K + aa * np.outer(r_prev, r_prev) + bb * sigma
        eps = rng.standard_normal(n)
        if params.nu is not None:
            eps *= np.sqrt((params.nu - 2.0) / rng.chisquare(params.nu))
        R[t] = linalg.cholesky(sigma) @ eps
        S[t] = sigma
        r_prev = R[t]
    return R[burn:], S[burn:]
