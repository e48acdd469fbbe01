"""Stochastic gradient variational Bayes training loop for NeuralGarch."""

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np

from logger import Logger
from volatility.errors import NonFiniteLoss, NumericError, SeriesTooShort
from volatility.timeseries import ReturnSeries
from .neural_garch import NeuralGarch
from .optim import Adam


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    loglik: float
    kl: float
    val_loglik: float
    out_of_range: float = 0.0


@dataclass
class TrainResult:
    history: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loglik: float = -np.inf
    initial_val_loglik: float = -np.inf


def epoch_noise(seed: int, epoch: int, sample: int, shape) -> np.ndarray:
    """Standard-normal reparameterisation noise for one ELBO sample."""
    rng = np.random.default_rng([seed, epoch, sample])
    return rng.standard_normal(shape)


def validation_loglik(model: NeuralGarch, train: np.ndarray, val: np.ndarray, sigma0) -> float:
    """Rolling predictive log-likelihood of ``val`` after warming up on ``train``."""
    joined = np.vstack([train, val])
    prediction = model.predict_rolling(joined, (len(train), len(joined)), sigma0)
    return prediction.loglik


class Trainer:
    def __init__(self, model: NeuralGarch, log_level: str = "INFO"):
        self.model = model
        self.config = model.config
        self.logger = Logger(log_level, self.__class__.__name__)
        self.optimizer = Adam(model.parameters(), lr=self.config.learning_rate)

    def _check_finite(self, epoch: int, loss: float, grads: Optional[Dict[str, np.ndarray]] = None):
        finite = np.isfinite(loss)
        if finite and grads is not None:
            finite = all(np.all(np.isfinite(g)) for g in grads.values())
        if not finite:
            self.logger.error(f"💥 Non-finite loss at epoch {epoch}: {loss}")
            raise NonFiniteLoss(epoch, loss)

    def run_epoch(self, epoch: int, train: np.ndarray) -> EpochRecord:
        cfg = self.config
        shape = (train.shape[0], cfg.gamma_dim)
        self.optimizer.zero_grad()
        loss = loglik = kl = flagged = 0.0
        for s in range(cfg.n_samples):
            try:
                terms = self.model.elbo(train, epoch_noise(cfg.seed, epoch, s, shape))
            except NumericError as e:
                self.logger.error(f"💥 Forward pass left the valid domain at epoch {epoch}: {e}")
                raise NonFiniteLoss(epoch, float("nan")) from e
            self._check_finite(epoch, float(terms.loss.value))
            grads = terms.loss.tape.backward(terms.loss)
            self._check_finite(epoch, float(terms.loss.value), grads)
            self.optimizer.accumulate(grads, weight=1.0 / cfg.n_samples)
            loss += float(terms.loss.value) / cfg.n_samples
            loglik += terms.loglik / cfg.n_samples
            kl += terms.kl / cfg.n_samples
            flagged += terms.out_of_range_fraction / cfg.n_samples
        self.optimizer.step()
        self.logger.debug(f"Epoch {epoch}: {flagged:.2%} of sampled coefficients outside (0, 1)")
        return EpochRecord(epoch=epoch, loss=loss, loglik=loglik, kl=kl, val_loglik=np.nan, out_of_range=flagged)

    def _validate(self, epoch: int, train_r: np.ndarray, val_r: np.ndarray, sigma0) -> float:
        try:
            val_ll = validation_loglik(self.model, train_r, val_r, sigma0)
        except NumericError as e:
            raise NonFiniteLoss(epoch, float("nan")) from e
        self._check_finite(epoch, val_ll)
        return val_ll

    def train(self, train: ReturnSeries, val: ReturnSeries) -> TrainResult:
        """Adam on -ELBO with full-sequence batches.

        Keeps the weights of the epoch with the best validation log-likelihood,
        the untrained weights (epoch 0) included.
        """
        if len(train) < 2 or len(val) < 1:
            raise SeriesTooShort("Training needs at least two training and one validation return")
        train_r, val_r = train.returns, val.returns
        sigma0 = self.model.init_priors(train_r).sigma

        result = TrainResult()
        best_val = self._validate(0, train_r, val_r, sigma0)
        best_weights = self.model.state_tensors()
        result.initial_val_loglik = best_val
        self.logger.info(f"🧪 Epoch 0: validation loglik {best_val:.4f}")

        for epoch in range(1, self.config.epochs + 1):
            record = self.run_epoch(epoch, train_r)
            val_ll = self._validate(epoch, train_r, val_r, sigma0)
            record = replace(record, val_loglik=val_ll)
            result.history.append(record)

            if val_ll > best_val:
                best_val = val_ll
                best_weights = self.model.state_tensors()
                result.best_epoch = epoch
                self.logger.success(f"🏆 Epoch {epoch}: new best validation loglik {val_ll:.4f}")
            if epoch % self.config.log_every == 0:
                self.logger.info(
                    f"Epoch {epoch}: -ELBO {record.loss:.4f} (loglik {record.loglik:.4f}, "
                    f"KL {record.kl:.4f}), validation loglik {val_ll:.4f}"
                )

        self.model.load_tensors(best_weights)
        result.best_val_loglik = best_val
        self.logger.info(f"✅ Training done: best epoch {result.best_epoch}, validation loglik {best_val:.4f}")
        return result


def train(model: NeuralGarch, train_series: ReturnSeries, val_series: ReturnSeries, log_level: str = "INFO") -> TrainResult:
    return Trainer(model, log_level).train(train_series, val_series)
