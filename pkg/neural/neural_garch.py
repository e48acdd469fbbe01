"""
Neural GARCH / Neural BEKK: GARCH(1,1) and diagonal BEKK(1,1) recursions whose
coefficient vector gamma_t is a latent Gaussian driven by a shared GRU.

Prediction head:  prior p(gamma_t | gamma_{t-1}, h_{t-1})
Inference head:   posterior q(gamma_t | gamma_{t-1}, h_t)

Coefficient layout of gamma_t:
    univariate    [omega, alpha, beta] (+ nu')
    multivariate  [a_11..a_nn, b_11..b_nn, c_11, c_12, .., c_nn] (+ nu')
with nu = nu' * nu_scale + 2 for Student's t innovations.
"""

from dataclasses import asdict, dataclass, fields
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from volatility import linalg
from volatility.errors import InvalidConfig, SeriesTooShort, ShapeMismatch
from . import autodiff as ad
from .autodiff import Tape, Var
from .checkpoint import load_checkpoint, save_checkpoint
from .layers import (
    GaussianParams,
    GruCell,
    MlpHead,
    Parameter,
    TapeContext,
    all_parameters,
    kl_diag_gauss,
    sample_gaussian,
)

LOG_2PI = float(np.log(2.0 * np.pi))
LOG_PI = float(np.log(np.pi))
INNOVATIONS = ("normal", "student_t")
CHECKPOINT_FORMAT = "neural-garch"

ValueLike = Union[Var, np.ndarray]


@dataclass(frozen=True)
class ModelConfig:
    n_assets: int = 1
    innovation: str = "normal"
    multivariate: bool = False
    hidden_size: int = 64
    mlp_width: int = 64
    nu_scale: float = 28.0
    learning_rate: float = 1e-3
    epochs: int = 200
    seed: int = 0
    scale: float = 100.0
    n_samples: int = 1
    squash: str = "sigmoid"
    mc_draws: int = 0
    log_every: int = 10
    coefficient_floor: float = 1e-8

    def __post_init__(self):
        if self.innovation not in INNOVATIONS:
            raise InvalidConfig(f"innovation must be one of {INNOVATIONS}, got '{self.innovation}'")
        for name in ("n_assets", "hidden_size", "mlp_width", "n_samples"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"model.{name} must be positive")
        if self.epochs < 0 or self.mc_draws < 0 or self.log_every < 1:
            raise InvalidConfig("epochs and mc_draws must be >= 0, log_every >= 1")
        if self.nu_scale <= 0 or self.learning_rate <= 0 or self.scale <= 0:
            raise InvalidConfig("nu_scale, learning_rate and scale must be positive")
        if not self.multivariate and self.n_assets != 1:
            raise InvalidConfig("univariate neural GARCH needs exactly one asset")

    @property
    def student_t(self) -> bool:
        return self.innovation == "student_t"

    @property
    def gamma_dim(self) -> int:
        n = self.n_assets
        base = 2 * n + n * (n + 1) // 2 if self.multivariate else 3
        return base + (1 if self.student_t else 0)

    @property
    def coefficient_names(self) -> List[str]:
        n = self.n_assets
        if self.multivariate:
            names = [f"a{i + 1}{i + 1}" for i in range(n)]
            names += [f"b{i + 1}{i + 1}" for i in range(n)]
            names += [f"c{i + 1}{j + 1}" for i in range(n) for j in range(i, n)]
        else:
            names = ["omega", "alpha", "beta"]
        if self.student_t:
            names.append("nu")
        return names

    def to_meta(self) -> Dict[str, str]:
        meta = {k: repr(v) if isinstance(v, float) else str(v) for k, v in asdict(self).items()}
        meta["format"] = CHECKPOINT_FORMAT
        return meta

    @classmethod
    def from_meta(cls, meta: Dict[str, str]) -> "ModelConfig":
        kwargs = {}
        for f in fields(cls):
            if f.name not in meta:
                continue
            raw = meta[f.name]
            if f.type in (bool, "bool"):
                kwargs[f.name] = raw == "True"
            elif f.type in (int, "int"):
                kwargs[f.name] = int(raw)
            elif f.type in (float, "float"):
                kwargs[f.name] = float(raw)
            else:
                kwargs[f.name] = raw
        return cls(**kwargs)


@dataclass
class GammaState:
    """Sampled coefficients and the distribution they were drawn from (None for the delta prior)."""

    values: ValueLike
    dist: Optional[GaussianParams] = None


@dataclass
class FilterState:
    """Recursion state at one time step: GRU hidden state, coefficients, variance."""

    h: ValueLike
    gamma: GammaState
    sigma: ValueLike
    r_prev: np.ndarray


@dataclass
class ElboTerms:
    loss: Var
    loglik: float
    kl: float
    n_out_of_range: int = 0
    n_sampled: int = 0

    @property
    def out_of_range_fraction(self) -> float:
        return self.n_out_of_range / self.n_sampled if self.n_sampled else 0.0


@dataclass
class RollingPrediction:
    """One-step-ahead forecasts over a test range."""

    start: int
    sigmas: np.ndarray
    loglik_terms: np.ndarray
    gamma_path: np.ndarray

    @property
    def loglik(self) -> float:
        return float(np.sum(self.loglik_terms))


def _c_selection(n: int) -> np.ndarray:
    """Maps the upper-triangular coefficient block to row-major entries of C."""
    m = n * (n + 1) // 2
    select = np.zeros((n * n, m))
    k = 0
    for i in range(n):
        for j in range(i, n):
            select[i * n + j, k] = 1.0
            k += 1
    return select


class NeuralGarch:
    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        d = config.gamma_dim
        H = config.hidden_size
        self.gru = GruCell("gru", config.n_assets, H, rng)
        self.pred_head = MlpHead("pred", d + H, config.mlp_width, d, rng, config.squash)
        self.inf_head = MlpHead("inf", d + H, config.mlp_width, d, rng, config.squash)
        self._select = _c_selection(config.n_assets) if config.multivariate else None

    def parameters(self) -> List[Parameter]:
        return all_parameters([self.gru, self.pred_head, self.inf_head])

    # Weights

    def state_tensors(self) -> Dict[str, np.ndarray]:
        return {p.name: p.value.copy() for p in self.parameters()}

    def load_tensors(self, tensors: Dict[str, np.ndarray]):
        for p in self.parameters():
            if p.name not in tensors:
                raise InvalidConfig(f"Checkpoint lacks parameter '{p.name}'")
            value = np.asarray(tensors[p.name], dtype=float)
            if value.shape != p.value.shape:
                raise ShapeMismatch(f"Checkpoint '{p.name}' has shape {value.shape}, expected {p.value.shape}")
            p.value = value.copy()

    def save(self, path: str):
        save_checkpoint(path, self.state_tensors(), self.config.to_meta())

    @classmethod
    def load(cls, path: str) -> "NeuralGarch":
        tensors, meta = load_checkpoint(path)
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise InvalidConfig(f"{path} is not a neural GARCH checkpoint")
        model = cls(ModelConfig.from_meta(meta))
        model.load_tensors(tensors)
        return model

    # Building blocks

    def init_priors(self, train: np.ndarray) -> FilterState:
        """State at t=0: Sigma_0 the training covariance, gamma_0 ones, h_0 zeros."""
        train = np.asarray(train, dtype=float)
        if train.ndim == 1:
            train = train[:, None]
        if train.shape[1] != self.config.n_assets:
            raise ShapeMismatch(f"Expected {self.config.n_assets} assets, got {train.shape[1]}")
        if train.shape[0] < 2:
            raise SeriesTooShort("Need at least two training returns for the initial covariance")
        cov = np.atleast_2d(np.cov(train, rowvar=False, bias=True))
        sigma0 = cov if self.config.multivariate else np.array(cov[0, 0])
        return FilterState(
            h=self.gru.initial_state(),
            gamma=GammaState(np.ones(self.config.gamma_dim)),
            sigma=sigma0,
            r_prev=np.zeros(self.config.n_assets),
        )

    def gru_encode(self, ctx: TapeContext, h_prev: ValueLike, r: np.ndarray) -> Var:
        return self.gru(ctx, h_prev, np.asarray(r, dtype=float))

    def predict_gamma(self, ctx: TapeContext, gamma_prev: ValueLike, h_prev: ValueLike) -> GaussianParams:
        return self.pred_head(ctx, gamma_prev, h_prev)

    def infer_gamma(self, ctx: TapeContext, gamma_prev: ValueLike, h_t: ValueLike) -> GaussianParams:
        return self.inf_head(ctx, gamma_prev, h_t)

    def sample(self, dist: GaussianParams, noise: Optional[np.ndarray] = None) -> Var:
        if noise is None:
            noise = np.zeros(self.config.gamma_dim)
        return sample_gaussian(dist, noise, floor=self.config.coefficient_floor)

    def out_of_range(self, gamma: ValueLike) -> np.ndarray:
        """Flags sampled coefficients above 1 or clipped to the floor.

        Flagged values are used as they are; only the floor is enforced.
        """
        values = np.asarray(gamma.value if isinstance(gamma, Var) else gamma, dtype=float)
        return (values > 1.0) | (values <= self.config.coefficient_floor)

    def step_variance(self, ctx: TapeContext, gamma: ValueLike, r_prev: np.ndarray, sigma_prev: ValueLike) -> Var:
        gamma, sigma_prev = ctx.lift(gamma), ctx.lift(sigma_prev)
        r_prev = np.asarray(r_prev, dtype=float)
        if gamma.shape != (self.config.gamma_dim,):
            raise ShapeMismatch(f"gamma has shape {gamma.shape}, expected ({self.config.gamma_dim},)")
        if not self.config.multivariate:
            if sigma_prev.shape != ():
                raise ShapeMismatch("univariate variance must be a scalar")
            return gamma[0] + gamma[1] * float(r_prev[0] ** 2) + gamma[2] * sigma_prev

        n = self.config.n_assets
        if sigma_prev.shape != (n, n):
            raise ShapeMismatch(f"Sigma has shape {sigma_prev.shape}, expected ({n}, {n})")
        a = gamma[0:n]
        b = gamma[n : 2 * n]
        c = gamma[2 * n : 2 * n + self._select.shape[1]]
        C = ad.reshape(ad.matmul(self._select, c), (n, n))
        ar = a * r_prev
        sigma = C.T @ C + ad.outer(ar, ar) + ad.outer(b, b) * sigma_prev
        sigma = 0.5 * (sigma + sigma.T)
        linalg.cholesky(sigma.value)
        return sigma

    def nu(self, gamma: ValueLike) -> Optional[Var]:
        if not self.config.student_t:
            return None
        return gamma[self.config.gamma_dim - 1] * self.config.nu_scale + 2.0

    def loglik(self, ctx: TapeContext, sigma: ValueLike, nu: Optional[ValueLike], r: np.ndarray) -> Var:
        """Log-density of one observation under N(0, Sigma) or standardized t(nu)."""
        sigma = ctx.lift(sigma)
        r = np.asarray(r, dtype=float)
        if not self.config.multivariate:
            r2 = float(r[0] ** 2)
            if nu is None:
                return -0.5 * (LOG_2PI + ad.log(sigma) + r2 / sigma)
            nu = ctx.lift(nu)
            nu_m2 = nu - 2.0
            return (
                ad.lgamma(0.5 * (nu + 1.0))
                - ad.lgamma(0.5 * nu)
                - 0.5 * (LOG_PI + ad.log(nu_m2) + ad.log(sigma))
                - 0.5 * (nu + 1.0) * ad.log(1.0 + r2 / (nu_m2 * sigma))
            )

        n = self.config.n_assets
        logdet = ad.logdet(sigma)
        quad = ad.quadform(sigma, r)
        if nu is None:
            return -0.5 * (n * LOG_2PI + logdet + quad)
        nu = ctx.lift(nu)
        nu_m2 = nu - 2.0
        return (
            ad.lgamma(0.5 * (nu + n))
            - ad.lgamma(0.5 * nu)
            - 0.5 * n * (LOG_PI + ad.log(nu_m2))
            - 0.5 * logdet
            - 0.5 * (nu + n) * ad.log(1.0 + quad / nu_m2)
        )

    # Training objective

    def elbo(
        self,
        train: np.ndarray,
        noise: np.ndarray,
        ctx: Optional[TapeContext] = None,
        state: Optional[FilterState] = None,
    ) -> ElboTerms:
        """Negated single-sample ELBO over a training sequence.

        The posterior chain carries Sigma_t; every step adds log p(r_t | Sigma_t)
        and subtracts KL(posterior || prior).
        """
        train = np.asarray(train, dtype=float)
        if train.ndim == 1:
            train = train[:, None]
        T = train.shape[0]
        if T < 2:
            raise SeriesTooShort("ELBO needs at least two observations")
        noise = np.asarray(noise, dtype=float)
        if noise.shape != (T, self.config.gamma_dim):
            raise ShapeMismatch(f"noise has shape {noise.shape}, expected ({T}, {self.config.gamma_dim})")
        ctx = ctx if ctx is not None else TapeContext(Tape())
        state = state if state is not None else self.init_priors(train)

        h, gamma, sigma, r_prev = state.h, state.gamma.values, state.sigma, state.r_prev
        ll_terms, kl_terms = [], []
        n_flagged = 0
        for t in range(T):
            r_t = train[t]
            prior = self.predict_gamma(ctx, gamma, h)
            h = self.gru_encode(ctx, h, r_t)
            post = self.infer_gamma(ctx, gamma, h)
            gamma = self.sample(post, noise[t])
            n_flagged += int(np.count_nonzero(self.out_of_range(gamma)))
            sigma = self.step_variance(ctx, gamma, r_prev, sigma)
            ll_terms.append(self.loglik(ctx, sigma, self.nu(gamma), r_t))
            kl_terms.append(kl_diag_gauss(post, prior))
            r_prev = r_t

        loglik = ad.sum_(ad.concat([ad.reshape(v, (1,)) for v in ll_terms]))
        kl = ad.sum_(ad.concat([ad.reshape(v, (1,)) for v in kl_terms]))
        return ElboTerms(
            loss=kl - loglik,
            loglik=float(loglik.value),
            kl=float(kl.value),
            n_out_of_range=n_flagged,
            n_sampled=T * self.config.gamma_dim,
        )

    # Prediction

    def _forecast(
        self, ctx: TapeContext, state: FilterState, rng: Optional[np.random.Generator]
    ) -> Tuple[Var, Optional[Var], np.ndarray]:
        prior = self.predict_gamma(ctx, state.gamma.values, state.h)
        draws = self.config.mc_draws
        if draws == 0 or rng is None:
            gamma_hat = self.sample(prior)
            sigma_hat = self.step_variance(ctx, gamma_hat, state.r_prev, state.sigma)
            return sigma_hat, self.nu(gamma_hat), gamma_hat.value

        sigmas, nus, gammas = [], [], []
        for _ in range(draws):
            g = self.sample(prior, rng.standard_normal(self.config.gamma_dim))
            sigmas.append(self.step_variance(ctx, g, state.r_prev, state.sigma).value)
            if self.config.student_t:
                nus.append(float(self.nu(g).value))
            gammas.append(g.value)
        sigma_hat = ctx.lift(np.mean(sigmas, axis=0))
        nu_hat = ctx.lift(np.mean(nus)) if nus else None
        return sigma_hat, nu_hat, np.mean(gammas, axis=0)

    def posterior_update(self, ctx: TapeContext, state: FilterState, r_t: np.ndarray) -> FilterState:
        """Advance the state once r_t is observed, at the posterior mean."""
        h = self.gru_encode(ctx, state.h, r_t)
        post = self.infer_gamma(ctx, state.gamma.values, h)
        gamma = self.sample(post)
        sigma = self.step_variance(ctx, gamma, state.r_prev, state.sigma)
        return FilterState(h=h.value, gamma=GammaState(gamma.value, post), sigma=sigma.value, r_prev=np.array(r_t))

    def predict_rolling(
        self,
        returns: np.ndarray,
        test_range: Tuple[int, int],
        sigma0: ValueLike,
        rng: Optional[np.random.Generator] = None,
    ) -> RollingPrediction:
        """One-step-ahead forecasts for rows [start, stop) of ``returns``.

        Rows before ``start`` only advance the posterior chain. At each test row
        the prior head forecasts gamma and Sigma, the observed return is scored,
        and the posterior update is carried forward.
        """
        returns = np.asarray(returns, dtype=float)
        if returns.ndim == 1:
            returns = returns[:, None]
        start, stop = test_range
        if not 0 <= start < stop <= returns.shape[0]:
            raise ShapeMismatch(f"test range {test_range} outside series of length {returns.shape[0]}")
        if returns.shape[1] != self.config.n_assets:
            raise ShapeMismatch(f"Expected {self.config.n_assets} assets, got {returns.shape[1]}")

        state = FilterState(
            h=self.gru.initial_state(),
            gamma=GammaState(np.ones(self.config.gamma_dim)),
            sigma=np.asarray(sigma0, dtype=float) if self.config.multivariate else np.array(float(np.squeeze(sigma0))),
            r_prev=np.zeros(self.config.n_assets),
        )
        sigmas, ll_terms, gammas = [], [], []
        for t in range(stop):
            ctx = TapeContext(Tape(requires_grad=False))
            if t >= start:
                sigma_hat, nu_hat, gamma_hat = self._forecast(ctx, state, rng)
                ll_terms.append(float(self.loglik(ctx, sigma_hat, nu_hat, returns[t]).value))
                sigmas.append(sigma_hat.value)
                gammas.append(gamma_hat)
            state = self.posterior_update(ctx, state, returns[t])
        return RollingPrediction(
            start=start,
            sigmas=np.array(sigmas),
            loglik_terms=np.array(ll_terms),
            gamma_path=np.array(gammas),
        )

    def readable_gamma_path(self, gamma_path: np.ndarray) -> np.ndarray:
        """Copy of a gamma path with the nu' column mapped to nu."""
        path = np.array(gamma_path, dtype=float)
        if self.config.student_t:
            path[:, -1] = path[:, -1] * self.config.nu_scale + 2.0
        return path


def unconditional_variance_diag(gamma_path: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """omega_t / (1 - alpha_t - beta_t) per step and flags where alpha_t + beta_t >= 1.

    Flagged steps report ``inf``.
    """
    path = np.atleast_2d(np.asarray(gamma_path, dtype=float))
    if path.shape[1] < 3:
        raise ShapeMismatch("gamma path needs omega, alpha and beta columns")
    omega, persistence = path[:, 0], path[:, 1] + path[:, 2]
    flags = persistence >= 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.where(flags, np.inf, omega / (1.0 - persistence))
    return values, flags

