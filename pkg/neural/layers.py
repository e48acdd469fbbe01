"""
Neural building blocks on the autodiff tape: GRU cell, 3-layer MLP heads
producing diagonal-Gaussian parameters, reparameterised sampling and the
diagonal-Gaussian KL divergence.
"""

from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from volatility.errors import NonPositiveVariance, ShapeMismatch
from . import autodiff as ad
from .autodiff import Tape, Var

SQUASHES = ("sigmoid", "softplus")
_SQRT_GUARD = 1e-300


class Parameter:
    """Trainable array with a gradient buffer."""

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.asarray(value, dtype=float)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)

    def __repr__(self) -> str:
        return f"Parameter({self.name}, shape={self.value.shape})"


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class TapeContext:
    """Binds parameters onto one tape, once each.

    On a gradient tape parameters become named leaves; on a recording-free
    tape they are uncopied constants.
    """

    def __init__(self, tape: Optional[Tape] = None):
        self.tape = tape if tape is not None else Tape()
        self._bound: Dict[str, Var] = {}

    def var(self, param: Parameter) -> Var:
        bound = self._bound.get(param.name)
        if bound is None:
            if self.tape.requires_grad:
                bound = self.tape.variable(param.value, param.name)
            else:
                bound = self.tape.constant(param.value, copy=False)
            self._bound[param.name] = bound
        return bound

    def lift(self, x: Union[Var, np.ndarray, float]) -> Var:
        if isinstance(x, Var):
            return x
        return self.tape.constant(x)


class Linear:
    def __init__(self, name: str, fan_in: int, fan_out: int, rng: np.random.Generator):
        self.fan_in = fan_in
        self.fan_out = fan_out
        self.weight = Parameter(f"{name}.weight", _uniform(rng, fan_in, (fan_out, fan_in)))
        self.bias = Parameter(f"{name}.bias", _uniform(rng, fan_in, (fan_out,)))

    def parameters(self) -> List[Parameter]:
        return [self.weight, self.bias]

    def __call__(self, ctx: TapeContext, x: Var) -> Var:
        if x.shape != (self.fan_in,):
            raise ShapeMismatch(f"Linear expects ({self.fan_in},), got {x.shape}")
        return ctx.var(self.weight) @ x + ctx.var(self.bias)


class GruCell:
    """Gated recurrent unit, gates ordered (reset, update, candidate).

    r = sigmoid(W_xr x + b_xr + W_hr h + b_hr)
    z = sigmoid(W_xz x + b_xz + W_hz h + b_hz)
    n = tanh(W_xn x + b_xn + r * (W_hn h + b_hn))
    h' = (1 - z) * n + z * h
    """

    def __init__(self, name: str, input_size: int, hidden_size: int, rng: np.random.Generator):
        self.input_size = input_size
        self.hidden_size = hidden_size
        H = hidden_size
        self.w_x = Parameter(f"{name}.w_x", _uniform(rng, input_size, (3 * H, input_size)))
        self.w_h = Parameter(f"{name}.w_h", _uniform(rng, H, (3 * H, H)))
        self.b_x = Parameter(f"{name}.b_x", np.zeros(3 * H))
        self.b_h = Parameter(f"{name}.b_h", np.zeros(3 * H))

    def parameters(self) -> List[Parameter]:
        return [self.w_x, self.w_h, self.b_x, self.b_h]

    def initial_state(self) -> np.ndarray:
        return np.zeros(self.hidden_size)

    def __call__(self, ctx: TapeContext, h_prev, x) -> Var:
        h_prev, x = ctx.lift(h_prev), ctx.lift(x)
        if x.shape != (self.input_size,) or h_prev.shape != (self.hidden_size,):
            raise ShapeMismatch(
                f"GRU expects x ({self.input_size},), h ({self.hidden_size},); "
                f"got {x.shape}, {h_prev.shape}"
            )
        H = self.hidden_size
        gx = ctx.var(self.w_x) @ x + ctx.var(self.b_x)
        gh = ctx.var(self.w_h) @ h_prev + ctx.var(self.b_h)
        reset = ad.sigmoid(gx[0:H] + gh[0:H])
        update = ad.sigmoid(gx[H : 2 * H] + gh[H : 2 * H])
        candidate = ad.tanh(gx[2 * H :] + reset * gh[2 * H :])
        return (1.0 - update) * candidate + update * h_prev


@dataclass(frozen=True)
class GaussianParams:
    """Diagonal Gaussian: means and variances as tape nodes."""

    mu: Var
    var: Var

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    @classmethod
    def constant(cls, tape: Tape, mu, var) -> "GaussianParams":
        return cls(tape.constant(mu), tape.constant(var))


class MlpHead:
    """Three affine layers with ReLU between; output split into means and variances.

    The variance half always goes through a sigmoid. The mean half uses
    ``squash`` (sigmoid by default, softplus as the alternative).
    """

    def __init__(
        self,
        name: str,
        input_size: int,
        width: int,
        gamma_dim: int,
        rng: np.random.Generator,
        squash: str = "sigmoid",
    ):
        if squash not in SQUASHES:
            raise ValueError(f"Unknown squash '{squash}', expected one of {SQUASHES}")
        self.input_size = input_size
        self.gamma_dim = gamma_dim
        self.squash = squash
        self.layers = [
            Linear(f"{name}.l1", input_size, width, rng),
            Linear(f"{name}.l2", width, width, rng),
            Linear(f"{name}.l3", width, 2 * gamma_dim, rng),
        ]

    def parameters(self) -> List[Parameter]:
        return [p for layer in self.layers for p in layer.parameters()]

    def __call__(self, ctx: TapeContext, gamma_prev, h) -> GaussianParams:
        x = ad.concat([ctx.lift(gamma_prev), ctx.lift(h)])
        if x.shape != (self.input_size,):
            raise ShapeMismatch(f"Head expects input ({self.input_size},), got {x.shape}")
        out = ad.relu(self.layers[0](ctx, x))
        out = ad.relu(self.layers[1](ctx, out))
        out = self.layers[2](ctx, out)
        d = self.gamma_dim
        mean_block = out[0:d]
        mu = ad.sigmoid(mean_block) if self.squash == "sigmoid" else ad.softplus(mean_block)
        return GaussianParams(mu=mu, var=ad.sigmoid(out[d : 2 * d]))


def sample_gaussian(p: GaussianParams, noise: np.ndarray, floor: Optional[float] = None) -> Var:
    """gamma = mu + sqrt(var) * noise, optionally floored elementwise."""
    noise = np.asarray(noise, dtype=float)
    if noise.shape != p.mu.shape:
        raise ShapeMismatch(f"Noise shape {noise.shape} does not match {p.mu.shape}")
    if np.any(noise):
        gamma = p.mu + ad.sqrt(ad.maximum(p.var, _SQRT_GUARD)) * noise
    else:
        gamma = p.mu
    if floor is not None:
        gamma = ad.maximum(gamma, floor)
    return gamma


def kl_diag_gauss(q: GaussianParams, p: GaussianParams) -> Var:
    """KL(q || p) between diagonal Gaussians."""
    if q.mu.shape != p.mu.shape or q.var.shape != q.mu.shape or p.var.shape != p.mu.shape:
        raise ShapeMismatch("KL operands have different dimensions")
    if np.any(~(q.var.value > 0)) or np.any(~(p.var.value > 0)):
        raise NonPositiveVariance("KL divergence needs strictly positive variances")
    diff = q.mu - p.mu
    terms = ad.log(p.var) - ad.log(q.var) + (q.var + ad.square(diff)) / p.var - 1.0
    return 0.5 * ad.sum_(terms)


def all_parameters(modules: Iterable) -> List[Parameter]:
    return [p for m in modules for p in m.parameters()]
