"""
Constant-coefficient univariate benchmarks: GARCH(1,1) and EGARCH(1,1,1)
with normal or Student's t innovations, fitted by maximum likelihood.

Recursions use the presample convention r_0 = 0, so with ``r`` holding
r_1..r_T and the initial variance sigma_0^2 the filters return sigma_1^2..sigma_T^2.
"""

from dataclasses import asdict, dataclass
from math import log as math_log
from math import pi as math_pi
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter
from scipy.special import expit, gammaln, logit

from logger import Logger
from .errors import (
    DegreesOfFreedomTooSmall,
    InvalidParams,
    NonPositiveVariance,
    OptimizerDiverged,
    SeriesTooShort,
)

LOG_2PI = math_log(2.0 * math_pi)
MIN_FIT_LENGTH = 50
MODEL_KINDS = ("garch_n", "garch_t", "egarch_n", "egarch_t")


@dataclass(frozen=True)
class GarchParams:
    omega: float
    alpha: float
    beta: float
    nu: Optional[float] = None

    def validate(self) -> "GarchParams":
        values = [self.omega, self.alpha, self.beta] + ([self.nu] if self.nu is not None else [])
        if not np.all(np.isfinite(values)):
            raise InvalidParams(f"Non-finite GARCH parameters {self}")
        if self.omega <= 0 or self.alpha < 0 or self.beta < 0:
            raise InvalidParams(f"GARCH needs omega > 0, alpha >= 0, beta >= 0: {self}")
        if self.nu is not None and self.nu <= 2:
            raise DegreesOfFreedomTooSmall(self.nu)
        return self

    @property
    def persistence(self) -> float:
        return self.alpha + self.beta

    @property
    def unconditional_variance(self) -> float:
        if self.persistence >= 1:
            return float("inf")
        return self.omega / (1.0 - self.persistence)


@dataclass(frozen=True)
class EgarchParams:
    omega: float
    alpha: float
    gamma_lev: float
    beta: float
    nu: Optional[float] = None

    def validate(self) -> "EgarchParams":
        values = [self.omega, self.alpha, self.gamma_lev, self.beta]
        if not np.all(np.isfinite(values)):
            raise InvalidParams(f"Non-finite EGARCH parameters {self}")
        if abs(self.beta) >= 1:
            raise InvalidParams(f"EGARCH needs |beta| < 1, got {self.beta}")
        if self.nu is not None and self.nu <= 2:
            raise DegreesOfFreedomTooSmall(self.nu)
        return self


Params = Union[GarchParams, EgarchParams]


@dataclass(frozen=True)
class FitResult:
    """Outcome of a maximum-likelihood fit."""

    kind: str
    params: Params
    loglik: float
    n_obs: int
    sigma0_sq: float
    n_starts: int
    n_failed: int

    def params_dict(self) -> Dict[str, float]:
        return {k: v for k, v in asdict(self.params).items() if v is not None}


# Filters


def _lagged(r: np.ndarray) -> np.ndarray:
    out = np.empty_like(r)
    out[0] = 0.0
    out[1:] = r[:-1]
    return out


def garch_filter(params: GarchParams, r: np.ndarray, sigma0_sq: float) -> np.ndarray:
    """sigma_t^2 = omega + alpha r_{t-1}^2 + beta sigma_{t-1}^2 for t = 1..T."""
    params.validate()
    if not sigma0_sq > 0:
        raise InvalidParams(f"Initial variance must be positive, got {sigma0_sq}")
    r = np.asarray(r, dtype=float)
    drive = params.omega + params.alpha * _lagged(r) ** 2
    sigma_sq, _ = lfilter([1.0], [1.0, -params.beta], drive, zi=[params.beta * sigma0_sq])
    return sigma_sq


def egarch_abs_moment(nu: Optional[float] = None) -> float:
    """E|z| for a unit-variance normal (nu=None) or standardized Student's t."""
    if nu is None:
        return float(np.sqrt(2.0 / np.pi))
    if nu <= 2:
        raise DegreesOfFreedomTooSmall(nu)
    return float(
        np.sqrt(nu - 2.0)
        * np.exp(gammaln((nu - 1.0) / 2.0) - gammaln(nu / 2.0))
        / np.sqrt(np.pi)
    )


def egarch_filter(params: EgarchParams, r: np.ndarray, logsigma0_sq: float) -> np.ndarray:
    """Nelson EGARCH(1,1,1) on the log variance.

    log sigma_t^2 = omega + alpha (|z_{t-1}| - E|z|) + gamma_lev z_{t-1} + beta log sigma_{t-1}^2
    """
    params.validate()
    r = np.asarray(r, dtype=float)
    abs_moment = egarch_abs_moment(params.nu)
    log_var = np.empty(len(r))
    prev_log = float(logsigma0_sq)
    prev_z = 0.0
    for t in range(len(r)):
        cur = (
            params.omega
            + params.alpha * (abs(prev_z) - abs_moment)
            + params.gamma_lev * prev_z
            + params.beta * prev_log
        )
        log_var[t] = cur
        prev_z = r[t] * np.exp(-0.5 * cur)
        prev_log = cur
    return np.exp(log_var)


# Likelihoods


def _check_variances(sigma_sq: np.ndarray, r: np.ndarray):
    if sigma_sq.shape != r.shape:
        raise ValueError(f"Variance shape {sigma_sq.shape} differs from returns {r.shape}")
    if np.any(~(sigma_sq > 0)):
        raise NonPositiveVariance("Conditional variances must be strictly positive")


def loglik_normal_terms(
    sigma_sq: np.ndarray, r: np.ndarray, include_constant: bool = True
) -> np.ndarray:
    sigma_sq = np.asarray(sigma_sq, dtype=float)
    r = np.asarray(r, dtype=float)
    _check_variances(sigma_sq, r)
    terms = -0.5 * np.log(sigma_sq) - r**2 / (2.0 * sigma_sq)
    if include_constant:
        terms = terms - 0.5 * LOG_2PI
    return terms


def loglik_normal(sigma_sq: np.ndarray, r: np.ndarray, include_constant: bool = True) -> float:
    """Gaussian log-likelihood; include_constant=False drops -1/2 log 2pi per point."""
    return float(np.sum(loglik_normal_terms(sigma_sq, r, include_constant)))


def loglik_student_t_terms(
    sigma_sq: np.ndarray, r: np.ndarray, nu: float, include_constant: bool = True
) -> np.ndarray:
    if not nu > 2:
        raise DegreesOfFreedomTooSmall(nu)
    sigma_sq = np.asarray(sigma_sq, dtype=float)
    r = np.asarray(r, dtype=float)
    _check_variances(sigma_sq, r)
    terms = (
        gammaln((nu + 1.0) / 2.0)
        - gammaln(nu / 2.0)
        - 0.5 * np.log(nu - 2.0)
        - 0.5 * np.log(sigma_sq)
        - ((nu + 1.0) / 2.0) * np.log1p(r**2 / ((nu - 2.0) * sigma_sq))
    )
    if include_constant:
        terms = terms - 0.5 * np.log(np.pi)
    return terms


def loglik_student_t(
    sigma_sq: np.ndarray, r: np.ndarray, nu: float, include_constant: bool = True
) -> float:
    """Standardized Student's t log-likelihood with variance sigma_t^2.

    include_constant=False drops only the nu-free -1/2 log pi term.
    """
    return float(np.sum(loglik_student_t_terms(sigma_sq, r, nu, include_constant)))


def filter_variance(kind: str, params: Params, r: np.ndarray, sigma0_sq: float) -> np.ndarray:
    if kind.startswith("garch"):
        return garch_filter(params, r, sigma0_sq)
    return egarch_filter(params, r, math_log(sigma0_sq))


def loglik_per_obs(
    kind: str, params: Params, sigma_sq: np.ndarray, r: np.ndarray, include_constant: bool = True
) -> np.ndarray:
    if kind.endswith("_t"):
        return loglik_student_t_terms(sigma_sq, r, params.nu, include_constant)
    return loglik_normal_terms(sigma_sq, r, include_constant)


def heldout_loglik(
    kind: str,
    params: Params,
    full: np.ndarray,
    sigma0_sq: float,
    test_range: Tuple[int, int],
    include_constant: bool = True,
) -> float:
    """Run the filter over the full series, sum the log-likelihood over test_range."""
    sigma_sq = filter_variance(kind, params, full, sigma0_sq)
    start, stop = test_range
    terms = loglik_per_obs(kind, params, sigma_sq[start:stop], full[start:stop], include_constant)
    return float(np.sum(terms))


# Parameter transforms for unconstrained optimisation

_TINY = 1e-6


def _garch_to_params(u: np.ndarray, with_nu: bool) -> GarchParams:
    persistence = expit(u[1])
    share = expit(u[2])
    nu = float(np.exp(u[3]) + 2.0) if with_nu else None
    return GarchParams(
        omega=float(np.exp(u[0])),
        alpha=float(persistence * share),
        beta=float(persistence * (1.0 - share)),
        nu=nu,
    )


def _garch_from_params(p: GarchParams) -> np.ndarray:
    persistence = np.clip(p.alpha + p.beta, _TINY, 1.0 - _TINY)
    share = np.clip(p.alpha / max(p.alpha + p.beta, _TINY), _TINY, 1.0 - _TINY)
    u = [np.log(p.omega), logit(persistence), logit(share)]
    if p.nu is not None:
        u.append(np.log(p.nu - 2.0))
    return np.array(u, dtype=float)


def _egarch_to_params(u: np.ndarray, with_nu: bool) -> EgarchParams:
    nu = float(np.exp(u[4]) + 2.0) if with_nu else None
    return EgarchParams(
        omega=float(u[0]),
        alpha=float(u[1]),
        gamma_lev=float(u[2]),
        beta=float(np.tanh(u[3])),
        nu=nu,
    )


def _egarch_from_params(p: EgarchParams) -> np.ndarray:
    u = [p.omega, p.alpha, p.gamma_lev, np.arctanh(np.clip(p.beta, -1 + _TINY, 1 - _TINY))]
    if p.nu is not None:
        u.append(np.log(p.nu - 2.0))
    return np.array(u, dtype=float)


def baseline_params(kind: str, sample_var: float) -> Params:
    """The reference start every fit must match or beat."""
    nu = 8.0 if kind.endswith("_t") else None
    if kind.startswith("garch"):
        return GarchParams(omega=sample_var, alpha=0.05, beta=0.9, nu=nu)
    return EgarchParams(
        omega=0.1 * math_log(sample_var), alpha=0.05, gamma_lev=0.0, beta=0.9, nu=nu
    )


def _random_start(kind: str, sample_var: float, rng: np.random.Generator) -> Params:
    nu = float(rng.uniform(4.0, 20.0)) if kind.endswith("_t") else None
    beta = float(rng.uniform(0.5, 0.95))
    if kind.startswith("garch"):
        alpha = float(rng.uniform(0.01, min(0.3, 0.999 - beta)))
        omega = sample_var * (1.0 - alpha - beta)
        return GarchParams(omega=omega, alpha=alpha, beta=beta, nu=nu)
    return EgarchParams(
        omega=(1.0 - beta) * math_log(sample_var),
        alpha=float(rng.uniform(0.0, 0.3)),
        gamma_lev=float(rng.uniform(-0.1, 0.05)),
        beta=beta,
        nu=nu,
    )


def _objective(
    kind: str, r: np.ndarray, sigma0_sq: float, include_constant: bool
) -> Tuple[
    Callable[[np.ndarray], float],
    Callable[[Params], float],
    Callable[[np.ndarray], Params],
    Callable[[Params], np.ndarray],
]:
    with_nu = kind.endswith("_t")
    if kind.startswith("garch"):
        to_params, from_params = _garch_to_params, _garch_from_params
    else:
        to_params, from_params = _egarch_to_params, _egarch_from_params

    def loglik(params: Params) -> float:
        with np.errstate(all="ignore"):
            sigma_sq = filter_variance(kind, params, r, sigma0_sq)
            value = float(np.sum(loglik_per_obs(kind, params, sigma_sq, r, include_constant)))
        return value

    def negative_mean_loglik(u: np.ndarray) -> float:
        try:
            value = loglik(to_params(u, with_nu))
        except (InvalidParams, NonPositiveVariance, DegreesOfFreedomTooSmall):
            return 1e10
        return -value / len(r) if np.isfinite(value) else 1e10

    return negative_mean_loglik, loglik, (lambda u: to_params(u, with_nu)), from_params


def fit_mle(
    kind: str,
    train: np.ndarray,
    n_starts: int = 5,
    seed: int = 0,
    include_constant: bool = True,
    log_level: str = "INFO",
) -> FitResult:
    """Maximum-likelihood fit with multi-start L-BFGS-B on transformed parameters.

    The baseline start (omega = sample variance, alpha = 0.05, beta = 0.9)
    is always tried, followed by ``n_starts`` random starts. The returned
    log-likelihood is never below any start's.
    """
    logger = Logger(log_level, "classic_garch")
    if kind not in MODEL_KINDS:
        raise ValueError(f"Unknown model kind '{kind}', expected one of {MODEL_KINDS}")
    r = np.asarray(train, dtype=float).ravel()
    if len(r) < MIN_FIT_LENGTH:
        raise SeriesTooShort(f"MLE needs at least {MIN_FIT_LENGTH} returns, got {len(r)}")

    sample_var = float(np.var(r))
    if not sample_var > 0:
        raise SeriesTooShort("Training returns have zero variance")
    rng = np.random.default_rng(seed)
    objective, loglik, to_params, from_params = _objective(kind, r, sample_var, include_constant)

    starts: List[Params] = [baseline_params(kind, sample_var)]
    starts += [_random_start(kind, sample_var, rng) for _ in range(max(n_starts, 5))]

    best_params: Optional[Params] = None
    best_ll = -np.inf
    n_failed = 0
    for i, start in enumerate(starts):
        u0 = from_params(start)
        start_value = objective(u0)
        try:
            result = minimize(objective, u0, method="L-BFGS-B")
            candidates = [(result.fun, result.x), (start_value, u0)]
        except (ValueError, FloatingPointError) as e:
            logger.debug(f"Start {i} raised {e}")
            candidates = [(start_value, u0)]
        value, u = min(candidates, key=lambda c: c[0])
        if not np.isfinite(value) or value >= 1e10:
            n_failed += 1
            logger.debug(f"Start {i} failed")
            continue
        ll = -value * len(r)
        logger.debug(f"Start {i}: loglik {ll:.4f}")
        if ll > best_ll:
            best_ll, best_params = ll, to_params(u)

    if best_params is None:
        raise OptimizerDiverged(f"All {len(starts)} starts failed for {kind}")

    best_ll = loglik(best_params)
    logger.info(f"📈 {kind} fitted: loglik {best_ll:.4f} ({len(starts) - n_failed}/{len(starts)} starts ok)")
    return FitResult(
        kind=kind,
        params=best_params,
        loglik=best_ll,
        n_obs=len(r),
        sigma0_sq=sample_var,
        n_starts=len(starts),
        n_failed=n_failed,
    )


# Simulation


def _standardized_innovations(
    rng: np.random.Generator, size: int, nu: Optional[float]
) -> np.ndarray:
    if nu is None:
        return rng.standard_normal(size)
    return rng.standard_t(nu, size) * np.sqrt((nu - 2.0) / nu)


def simulate_garch(
    params: GarchParams,
    n_obs: int,
    rng: np.random.Generator,
    burn: int = 500,
    omega_path: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Simulate (returns, variances) from a GARCH(1,1).

    ``omega_path`` (length n_obs) replaces the constant omega after burn-in.
    """
    params.validate()
    total = n_obs + burn
    z = _standardized_innovations(rng, total, params.nu)
    omega = np.full(total, params.omega)
    if omega_path is not None:
        omega[burn:] = omega_path
    r = np.empty(total)
    sigma_sq = np.empty(total)
    prev_var = params.unconditional_variance
    if not np.isfinite(prev_var):
        prev_var = params.omega
    prev_r = 0.0
    for t in range(total):
        sigma_sq[t] = omega[t] + params.alpha * prev_r**2 + params.beta * prev_var
        r[t] = np.sqrt(sigma_sq[t]) * z[t]
        prev_r, prev_var = r[t], sigma_sq[t]
    return r[burn:], sigma_sq[burn:]


def simulate_regime_switch(
    params: GarchParams, n_obs: int, rng: np.random.Generator, burn: int = 500
) -> Tuple[np.ndarray, np.ndarray]:
    """GARCH(1,1) whose omega doubles at the midpoint of the sample."""
    omega_path = np.full(n_obs, params.omega)
    omega_path[n_obs // 2 :] *= 2.0
    return simulate_garch(params, n_obs, rng, burn=burn, omega_path=omega_path)
