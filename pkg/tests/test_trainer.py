import logging

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from neural.neural_garch import ModelConfig, NeuralGarch, unconditional_variance_diag
from neural.trainer import Trainer, epoch_noise, train, validation_loglik
from volatility.classic_garch import GarchParams, fit_mle, heldout_loglik, simulate_garch, simulate_regime_switch
from volatility.errors import NonFiniteLoss, SeriesTooShort
from volatility.timeseries import ReturnSeries


def _series(returns):
    returns = np.asarray(returns, dtype=float).reshape(len(returns), -1)
    names = tuple(f"s{i}" for i in range(returns.shape[1]))
    return ReturnSeries(names=names, dates=np.arange(len(returns)), returns=returns)


def _small_model(**kwargs):
    options = dict(hidden_size=4, mlp_width=8, epochs=3, seed=1, learning_rate=1e-2, log_every=1)
    options.update(kwargs)
    return NeuralGarch(ModelConfig(**options))


def test_epoch_noise_is_seeded():
    assert_array_equal(epoch_noise(3, 1, 0, (5, 3)), epoch_noise(3, 1, 0, (5, 3)))
    assert not np.array_equal(epoch_noise(3, 1, 0, (5, 3)), epoch_noise(3, 2, 0, (5, 3)))
    assert not np.array_equal(epoch_noise(3, 1, 0, (5, 3)), epoch_noise(3, 1, 1, (5, 3)))


def test_training_keeps_best_validation_weights(garch_returns):
    model = _small_model()
    train_s, val_s = _series(garch_returns[:120]), _series(garch_returns[120:160])
    result = train(model, train_s, val_s, log_level="WARNING")
    assert len(result.history) == 3
    assert result.best_val_loglik >= result.initial_val_loglik
    assert result.best_val_loglik == max([result.initial_val_loglik] + [e.val_loglik for e in result.history])
    sigma0 = model.init_priors(train_s.returns).sigma
    assert validation_loglik(model, train_s.returns, val_s.returns, sigma0) == result.best_val_loglik


def test_training_history_is_bit_identical(garch_returns):
    histories = []
    for _ in range(2):
        model = _small_model(innovation="student_t", n_samples=2)
        result = train(model, _series(garch_returns[:80]), _series(garch_returns[80:100]), log_level="WARNING")
        histories.append([(e.loss, e.loglik, e.kl, e.val_loglik) for e in result.history])
    assert histories[0] == histories[1]


def test_multivariate_training_runs(rng):
    r = rng.standard_normal((80, 2))
    model = _small_model(n_assets=2, multivariate=True, epochs=2)
    result = train(model, _series(r[:60]), _series(r[60:]), log_level="WARNING")
    assert all(np.isfinite(e.loss) for e in result.history)


def test_nan_weights_raise_non_finite_loss(garch_returns):
    model = _small_model()
    model.parameters()[0].value[0, 0] = np.nan
    trainer = Trainer(model, log_level="CRITICAL")
    with pytest.raises(NonFiniteLoss) as info:
        trainer.run_epoch(1, garch_returns[:50, None])
    assert info.value.exit_code == 3


def test_training_needs_enough_data():
    model = _small_model()
    with pytest.raises(SeriesTooShort):
        train(model, _series([0.5]), _series([0.1, 0.2]), log_level="WARNING")


def test_epochs_record_out_of_range_fraction(garch_returns, caplog):
    model = _small_model(epochs=2)
    with caplog.at_level(logging.DEBUG, logger="neuralgarch"):
        result = train(model, _series(garch_returns[:60]), _series(garch_returns[60:80]), log_level="DEBUG")
    assert all(0.0 <= e.out_of_range <= 1.0 for e in result.history)
    assert any("sampled coefficients outside (0, 1)" in r.getMessage() for r in caplog.records)


@pytest.mark.slow
def test_neural_model_approaches_true_filter_on_garch_data():
    truth = GarchParams(0.05, 0.1, 0.85)
    r, _ = simulate_garch(truth, 2000, np.random.default_rng(21))
    train_r, val_r, test_start = r[:1600], r[1600:1800], 1800
    model = NeuralGarch(ModelConfig(hidden_size=8, mlp_width=16, epochs=40, seed=0, learning_rate=5e-3))
    train(model, _series(train_r), _series(val_r), log_level="WARNING")

    sigma0 = float(np.var(train_r))
    neural_ll = model.predict_rolling(r, (test_start, len(r)), sigma0).loglik
    true_ll = heldout_loglik("garch_n", truth, r, sigma0, (test_start, len(r)))
    assert neural_ll >= true_ll - 5.0

    terms = model.elbo(train_r, epoch_noise(0, 0, 0, (len(train_r), model.config.gamma_dim)))
    assert terms.out_of_range_fraction < 0.01


@pytest.mark.slow
def test_neural_model_beats_constant_garch_on_regime_switch():
    wins, persistence_ok = 0, []
    for seed in range(10):
        r, _ = simulate_regime_switch(GarchParams(0.05, 0.1, 0.85), 1200, np.random.default_rng(100 + seed))
        train_r, val_r = r[:960], r[960:1080]
        model = NeuralGarch(ModelConfig(hidden_size=8, mlp_width=16, epochs=30, seed=seed, learning_rate=5e-3))
        train(model, _series(train_r), _series(val_r), log_level="WARNING")

        sigma0 = float(np.var(train_r))
        prediction = model.predict_rolling(r, (1080, 1200), sigma0)
        fit = fit_mle("garch_n", train_r, seed=seed, log_level="WARNING")
        classic_ll = heldout_loglik("garch_n", fit.params, r, sigma0, (1080, 1200))
        wins += prediction.loglik >= classic_ll

        _, flags = unconditional_variance_diag(prediction.gamma_path)
        persistence_ok.append(~flags)
    assert wins >= 7
    assert np.concatenate(persistence_ok).mean() > 0.95
