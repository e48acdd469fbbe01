"""
Fit, predict, rank and simulate commands.

A run's files live in ``<run.output_dir>/<series>/<kind>/seed-<seed>/``:
    params.txt        fitted parameters (classic) or checkpoint reference (neural)
    model.ckpt        neural weights
    fit_report.txt    train/validation log-likelihoods and wall time
    history.csv       neural training history
    predictions.csv   one-step-ahead volatility per test date with ll_t
    gamma_paths.csv   neural coefficient paths
    results.csv       one (series, model, seed) row of train/val/test LL
"""

from dataclasses import dataclass, replace
from os import makedirs as os_makedirs
from os.path import exists as os_exists
from os.path import join as os_join
from time import perf_counter
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import yaml

from logger import Logger
from neural.neural_garch import ModelConfig, NeuralGarch, unconditional_variance_diag
from neural.trainer import Trainer
from volatility import classic_bekk, classic_garch, linalg
from volatility.cd_diagram import draw_cd_diagram
from volatility.errors import DimensionMismatch, InvalidConfig, SeriesTooShort
from volatility.evaluation import (
    DEFAULT_ALPHA,
    RankReport,
    ResultsMatrix,
    cd_report,
    format_report,
    format_results_table,
)
from volatility.timeseries import (
    DEFAULT_SCALE,
    MIN_SPLIT_LENGTH,
    ReturnSeries,
    demean,
    load_prices,
    split_ranges,
    to_returns,
)
from .artifacts import (
    append_result,
    config_hash,
    content_hash,
    read_artifact,
    write_artifact,
    write_csv_with_header,
    write_text_with_header,
)
from .config import RunConfig, check_dimensions, load_config

PARAMS_FILE = "params.txt"
CHECKPOINT_FILE = "model.ckpt"
FIT_REPORT_FILE = "fit_report.txt"
HISTORY_FILE = "history.csv"
PREDICTIONS_FILE = "predictions.csv"
GAMMA_FILE = "gamma_paths.csv"
RESULTS_FILE = "results.csv"
RANK_REPORT_FILE = "rank_report.txt"
CD_DIAGRAM_FILE = "cd_diagram.svg"
PARAM_PREFIX = "param."
SIMULATED_PROCESSES = ("garch", "bekk", "regime")


@dataclass
class PreparedData:
    returns: ReturnSeries
    ranges: List[Tuple[int, int]]

    @property
    def series_name(self) -> str:
        return "+".join(self.returns.names)

    @property
    def train(self) -> np.ndarray:
        start, stop = self.ranges[0]
        return self.returns.returns[start:stop]

    @property
    def val_end(self) -> int:
        return self.ranges[1][1]


@dataclass
class FitReport:
    run_dir: str
    train_ll: float
    val_ll: float
    wall_time: float


@dataclass
class PredictReport:
    run_dir: str
    test_ll: float
    n_test: int


def prepare_data(config: RunConfig, log_level: str = "INFO") -> PreparedData:
    series = [
        load_prices(f.path, columns, log_level) for f, columns in zip(config.data.files, config.data.columns())
    ]
    returns = to_returns(series, config.data.scale)
    ranges = split_ranges(len(returns), config.data.split)
    if len(returns) < MIN_SPLIT_LENGTH or min(stop - start for start, stop in ranges) < 1:
        raise SeriesTooShort(f"{len(returns)} returns cannot be split into train/val/test")
    if config.data.demean:
        returns = demean(returns, ranges[0][1])
    Logger(log_level, "commands").debug(
        f"Prepared {len(returns)} returns for {returns.names}, split {ranges}"
    )
    return PreparedData(returns=returns, ranges=ranges)


def series_label(config: RunConfig) -> str:
    return "+".join(f.name for f in config.data.files)


def run_dir(config: RunConfig) -> str:
    return os_join(config.run.output_dir, series_label(config), config.model.kind, f"seed-{config.run.seed}")


def neural_model_config(config: RunConfig, n_assets: int) -> ModelConfig:
    m = config.model
    return ModelConfig(
        n_assets=n_assets,
        innovation=m.innovation,
        multivariate=m.is_multivariate,
        hidden_size=m.hidden_size,
        mlp_width=m.mlp_width,
        nu_scale=m.nu_scale,
        learning_rate=m.learning_rate,
        epochs=m.epochs,
        seed=config.run.seed,
        scale=config.data.scale,
        n_samples=m.n_samples,
        squash=m.squash,
        mc_draws=m.mc_draws,
        log_every=m.log_every,
    )


def _params_entries(params: Dict[str, object]) -> Dict[str, object]:
    entries = {}
    for key, value in params.items():
        entries[PARAM_PREFIX + key] = np.asarray(value, dtype=float) if isinstance(value, np.ndarray) else float(value)
    return entries


def _read_params(entries: Dict[str, object]) -> Dict[str, object]:
    params = {}
    for key, value in entries.items():
        if key.startswith(PARAM_PREFIX):
            params[key[len(PARAM_PREFIX) :]] = value if isinstance(value, np.ndarray) else float(value)
    return params


class RunWorker:
    """Executes one configured run."""

    def __init__(self, config: RunConfig, log_level: Optional[str] = None):
        self.config = config
        self.log_level = log_level or config.run.log_level
        self.logger = Logger(self.log_level, self.__class__.__name__)
        self.hash = config_hash(config)
        self.seed = config.run.seed
        self.run_dir = run_dir(config)

    # Fit

    def _fit_classic(self, data: PreparedData) -> Tuple[Dict[str, object], float, float]:
        model = self.config.model
        full = data.returns.returns[: data.val_end]
        val_range = data.ranges[1]
        if model.kind.startswith("bekk"):
            fit = classic_bekk.fit_mle(model.innovation, data.train, model.n_starts, self.seed, self.log_level)
            val_ll = classic_bekk.heldout_loglik(fit.params, full, fit.sigma0, val_range)
            entries = _params_entries(fit.params.to_dict())
            entries["sigma0"] = np.asarray(fit.sigma0)
        else:
            kind = model.classic_kind
            fit = classic_garch.fit_mle(kind, data.train[:, 0], model.n_starts, self.seed, log_level=self.log_level)
            val_ll = classic_garch.heldout_loglik(kind, fit.params, full[:, 0], fit.sigma0_sq, val_range)
            entries = _params_entries(fit.params_dict())
            entries["sigma0"] = float(fit.sigma0_sq)
        entries["n_failed_starts"] = fit.n_failed
        return entries, fit.loglik, val_ll

    def _fit_neural(self, data: PreparedData) -> Tuple[Dict[str, object], float, float]:
        model = NeuralGarch(neural_model_config(self.config, data.returns.n_assets))
        train_rs = data.returns.segment(*data.ranges[0])
        val_rs = data.returns.segment(*data.ranges[1])
        result = Trainer(model, self.log_level).train(train_rs, val_rs)
        model.save(os_join(self.run_dir, CHECKPOINT_FILE))

        sigma0 = model.init_priors(train_rs.returns).sigma
        train_ll = model.predict_rolling(train_rs.returns, (0, len(train_rs)), sigma0).loglik
        history = pd.DataFrame(
            [
                {
                    "epoch": r.epoch,
                    "loss": r.loss,
                    "loglik": r.loglik,
                    "kl": r.kl,
                    "val_ll": r.val_loglik,
                    "out_of_range": r.out_of_range,
                }
                for r in result.history
            ],
            columns=["epoch", "loss", "loglik", "kl", "val_ll", "out_of_range"],
        )
        write_csv_with_header(os_join(self.run_dir, HISTORY_FILE), history, self.hash, self.seed)
        entries = {
            "checkpoint": CHECKPOINT_FILE,
            "sigma0": np.asarray(sigma0, dtype=float) if model.config.multivariate else float(sigma0),
            "best_epoch": result.best_epoch,
            "initial_val_ll": result.initial_val_loglik,
        }
        return entries, train_ll, result.best_val_loglik

    def fit(self) -> FitReport:
        check_dimensions(self.config, self.log_level)
        os_makedirs(self.run_dir, exist_ok=True)
        data = prepare_data(self.config, self.log_level)
        kind = self.config.model.kind
        self.logger.info(f"🚀 Fitting {kind} on {data.series_name} (seed {self.seed}, {len(data.returns)} returns)")

        started = perf_counter()
        if self.config.model.is_neural:
            entries, train_ll, val_ll = self._fit_neural(data)
        else:
            entries, train_ll, val_ll = self._fit_classic(data)
        wall_time = perf_counter() - started

        n_train, n_val = (stop - start for start, stop in data.ranges[:2])
        artifact = {
            "model": kind,
            "series": data.series_name,
            "n_assets": data.returns.n_assets,
            "scale": data.returns.scale,
            "train_ll": train_ll,
            "val_ll": val_ll,
        }
        artifact.update(entries)
        write_artifact(os_join(self.run_dir, PARAMS_FILE), artifact, self.hash, self.seed)
        write_artifact(
            os_join(self.run_dir, FIT_REPORT_FILE),
            {
                "model": kind,
                "series": data.series_name,
                "n_train": n_train,
                "n_val": n_val,
                "train_ll": train_ll,
                "val_ll": val_ll,
                "wall_time_s": round(wall_time, 3),
            },
            self.hash,
            self.seed,
        )
        self.logger.success(f"✅ {kind} fitted: train LL {train_ll:.3f}, validation LL {val_ll:.3f} ({wall_time:.1f}s)")
        return FitReport(run_dir=self.run_dir, train_ll=train_ll, val_ll=val_ll, wall_time=wall_time)

    # Predict

    def _load_artifact(self, n_assets: int) -> Dict[str, object]:
        path = os_join(self.run_dir, PARAMS_FILE)
        if not os_exists(path):
            raise InvalidConfig(f"No fitted artifact at {path}; run 'fit' first")
        _, entries = read_artifact(path)
        if entries.get("model") != self.config.model.kind:
            raise InvalidConfig(f"Artifact holds model '{entries.get('model')}', config asks for '{self.config.model.kind}'")
        if int(entries["n_assets"]) != n_assets:
            raise DimensionMismatch(f"Artifact was fitted on {entries['n_assets']} assets, data has {n_assets}")
        return entries

    def _predict_classic(self, data: PreparedData, entries, start: int, stop: int) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
        full = data.returns.returns
        params = _read_params(entries)
        columns: Dict[str, np.ndarray] = {}
        if self.config.model.kind.startswith("bekk"):
            nu = params.get("nu")
            bekk = classic_bekk.BekkParams(
                C=params["C"], a_diag=params["a_diag"], b_diag=params["b_diag"], nu=nu
            ).validate()
            sigmas = classic_bekk.bekk_filter(bekk, full, entries["sigma0"])[start:stop]
            ll_t = classic_bekk.loglik_per_obs(bekk, sigmas, full[start:stop])
            columns.update(_vech_columns(sigmas))
            n = bekk.n
            for i in range(n):
                columns[f"a{i + 1}{i + 1}"] = np.full(stop - start, bekk.a_diag[i])
            for i in range(n):
                columns[f"b{i + 1}{i + 1}"] = np.full(stop - start, bekk.b_diag[i])
            for i in range(n):
                for j in range(i, n):
                    columns[f"c{i + 1}{j + 1}"] = np.full(stop - start, bekk.C[i, j])
            if nu is not None:
                columns["nu"] = np.full(stop - start, nu)
            return columns, ll_t

        kind = self.config.model.classic_kind
        cls = classic_garch.EgarchParams if kind.startswith("egarch") else classic_garch.GarchParams
        garch = cls(**params)
        sigma_sq = classic_garch.filter_variance(kind, garch, full[:, 0], float(entries["sigma0"]))[start:stop]
        ll_t = classic_garch.loglik_per_obs(kind, garch, sigma_sq, full[start:stop, 0])
        columns["sigma"] = np.sqrt(sigma_sq)
        for name, value in params.items():
            columns[name] = np.full(stop - start, value)
        return columns, ll_t

    def _predict_neural(self, data: PreparedData, entries, start: int, stop: int, dates) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
        model = NeuralGarch.load(os_join(self.run_dir, str(entries["checkpoint"])))
        model.config = replace(model.config, mc_draws=self.config.model.mc_draws)
        rng = np.random.default_rng([self.seed, 1]) if model.config.mc_draws else None
        sigma0 = entries["sigma0"] if model.config.multivariate else float(entries["sigma0"])
        prediction = model.predict_rolling(data.returns.returns, (start, stop), sigma0, rng)

        columns: Dict[str, np.ndarray] = {}
        if model.config.multivariate:
            columns.update(_vech_columns(prediction.sigmas))
        else:
            columns["sigma"] = np.sqrt(prediction.sigmas)
        path = model.readable_gamma_path(prediction.gamma_path)
        gamma_columns = {name: path[:, i] for i, name in enumerate(model.config.coefficient_names)}
        columns.update(gamma_columns)

        gamma_frame = pd.DataFrame({"date": dates, **gamma_columns})
        if not model.config.multivariate:
            uncond, flags = unconditional_variance_diag(prediction.gamma_path)
            gamma_frame["uncond_var"] = uncond
            gamma_frame["violation"] = flags.astype(int)
            share = 1.0 - flags.mean() if len(flags) else 1.0
            self.logger.note(f"📐 alpha_t + beta_t < 1 on {100 * share:.1f}% of test steps")
        write_csv_with_header(os_join(self.run_dir, GAMMA_FILE), gamma_frame, self.hash, self.seed)
        return columns, prediction.loglik_terms

    def predict(self) -> PredictReport:
        check_dimensions(self.config, self.log_level)
        data = prepare_data(self.config, self.log_level)
        entries = self._load_artifact(data.returns.n_assets)
        start, stop = data.ranges[2]
        dates = [str(d) for d in data.returns.dates[start:stop]]

        if self.config.model.is_neural:
            columns, ll_t = self._predict_neural(data, entries, start, stop, dates)
        else:
            columns, ll_t = self._predict_classic(data, entries, start, stop)

        frame = pd.DataFrame({"date": dates, **columns, "ll_t": ll_t})
        write_csv_with_header(os_join(self.run_dir, PREDICTIONS_FILE), frame, self.hash, self.seed)
        test_ll = float(np.sum(ll_t))
        append_result(
            os_join(self.run_dir, RESULTS_FILE),
            {
                "series": data.series_name,
                "model": self.config.model.kind,
                "seed": self.seed,
                "train_ll": float(entries["train_ll"]),
                "val_ll": float(entries["val_ll"]),
                "test_ll": test_ll,
            },
            self.hash,
            self.seed,
        )
        self.logger.success(f"📈 {self.config.model.kind} on {data.series_name}: test LL {test_ll:.3f} over {stop - start} steps")
        return PredictReport(run_dir=self.run_dir, test_ll=test_ll, n_test=stop - start)


def _vech_columns(sigmas: np.ndarray) -> Dict[str, np.ndarray]:
    n = sigmas.shape[1]
    stacked = np.array([linalg.vech(s) for s in sigmas]).reshape(len(sigmas), -1)
    names = [f"s{i + 1}{j + 1}" for i in range(n) for j in range(i, n)]
    return {name: stacked[:, k] for k, name in enumerate(names)}


def _resolve(config: Union[str, RunConfig]) -> RunConfig:
    return load_config(config) if isinstance(config, str) else config


def cmd_fit(config: Union[str, RunConfig], log_level: Optional[str] = None) -> FitReport:
    """Fit the configured model; ``config`` is a RunConfig or a YAML path."""
    return RunWorker(_resolve(config), log_level).fit()


def cmd_predict(config: Union[str, RunConfig], log_level: Optional[str] = None) -> PredictReport:
    return RunWorker(_resolve(config), log_level).predict()


def cmd_rank(
    result_paths: Sequence[str],
    output_dir: str,
    alpha: float = DEFAULT_ALPHA,
    correct: bool = True,
    log_level: str = "INFO",
) -> RankReport:
    """Rank models across datasets and write the text report and CD diagram."""
    logger = Logger(log_level, "commands")
    paths = sorted(result_paths)
    if not paths:
        raise InvalidConfig("No results files given")
    rm = ResultsMatrix.from_csv(paths)
    report = cd_report(rm, alpha=alpha, correct=correct, log_level=log_level)

    os_makedirs(output_dir, exist_ok=True)
    inputs_hash = content_hash(paths)
    text = format_results_table(rm) + "\n" + format_report(report)
    write_text_with_header(os_join(output_dir, RANK_REPORT_FILE), text, inputs_hash, "none")
    svg_path = os_join(output_dir, CD_DIAGRAM_FILE)
    draw_cd_diagram(report, svg_path, title=f"{rm.m} datasets")
    _stamp_svg(svg_path, inputs_hash)
    logger.success(f"🏁 Ranked {rm.k} models on {rm.m} datasets -> {output_dir}")
    return report


def _stamp_svg(path: str, hash_hex: str):
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().split("\n", 1)
    stamp = f"<!-- config_hash={hash_hex} seed=none -->"
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(lines[0] + "\n" + stamp + "\n" + (lines[1] if len(lines) > 1 else ""))


def _default_bekk(n: int, nu: Optional[float]) -> classic_bekk.BekkParams:
    C = np.triu(np.full((n, n), 0.05)) + np.eye(n) * 0.15
    return classic_bekk.BekkParams(C=C, a_diag=np.full(n, 0.3), b_diag=np.full(n, 0.94), nu=nu)


def cmd_simulate(
    process: str,
    n_obs: int,
    output_dir: str,
    seed: int,
    n_assets: int = 1,
    innovation: str = "normal",
    scale: float = DEFAULT_SCALE,
    log_level: str = "INFO",
) -> List[str]:
    """Simulate returns and write one price CSV per asset plus a starter config.

    Prices are 100 * exp(cumsum(r / scale)) on a business-day calendar.
    """
    logger = Logger(log_level, "commands")
    if process not in SIMULATED_PROCESSES:
        raise InvalidConfig(f"process must be one of {SIMULATED_PROCESSES}, got '{process}'")
    if n_obs < 10:
        raise InvalidConfig("simulate needs at least 10 observations")
    if process != "bekk" and n_assets != 1:
        raise InvalidConfig(f"'{process}' simulates a single asset")
    nu = 8.0 if innovation == "student_t" else None
    rng = np.random.default_rng(seed)

    if process == "bekk":
        returns, _ = classic_bekk.simulate_bekk(_default_bekk(n_assets, nu), n_obs, rng)
    else:
        params = classic_garch.GarchParams(omega=0.05, alpha=0.1, beta=0.85, nu=nu)
        simulate = classic_garch.simulate_regime_switch if process == "regime" else classic_garch.simulate_garch
        r, _ = simulate(params, n_obs, rng)
        returns = r[:, None]

    settings = {
        "process": process,
        "n_obs": n_obs,
        "n_assets": n_assets,
        "innovation": innovation,
        "scale": scale,
        "seed": seed,
    }
    hash_hex = config_hash(settings)
    os_makedirs(output_dir, exist_ok=True)
    dates = pd.bdate_range(start="2000-01-03", periods=n_obs + 1).strftime("%Y-%m-%d")
    prices = 100.0 * np.exp(np.vstack([np.zeros((1, returns.shape[1])), np.cumsum(returns / scale, axis=0)]))

    paths = []
    files = []
    for i in range(returns.shape[1]):
        name = f"{process}{i + 1}"
        path = os_join(output_dir, f"{name}.csv")
        write_csv_with_header(path, pd.DataFrame({"date": dates, "price": prices[:, i]}), hash_hex, seed)
        paths.append(path)
        files.append({"path": f"{name}.csv", "name": name})

    kind = ("bekk" if process == "bekk" else "garch") + ("-t" if nu else "-n")
    starter = {
        "data": {"files": files, "scale": scale},
        "model": {"kind": kind},
        "run": {"seed": seed, "output_dir": "output"},
    }
    config_path = os_join(output_dir, "simulated.yaml")
    write_text_with_header(config_path, yaml.safe_dump(starter, sort_keys=False), hash_hex, seed)
    paths.append(config_path)
    logger.success(f"🎲 Simulated {process} ({n_obs} x {n_assets}) -> {output_dir}")
    return paths
