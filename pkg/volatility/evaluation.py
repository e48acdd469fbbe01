"""
Cross-model comparison on test log-likelihoods: Friedman test, pairwise
Wilcoxon signed-rank tests with Holm correction, average ranks and
critical-difference cliques.
"""

from dataclasses import dataclass, field
from re import search as re_search
from typing import List, Sequence, Tuple

import numpy as np
import pandas as pd
import pingouin as pg
from scipy.stats import rankdata, wilcoxon

from logger import Logger
from .errors import AllZeroDifferences, InvalidConfig, MissingResult, ParseError, TooFewDatasets, TooFewPairs

EXACT_WILCOXON_MAX = 20
MIN_NONZERO_PAIRS = 5
MIN_DATASETS = 3
DEFAULT_ALPHA = 0.05


@dataclass(frozen=True, eq=False)
class ResultsMatrix:
    """m datasets x k models of test log-likelihoods (higher is better)."""

    models: Tuple[str, ...]
    datasets: Tuple[str, ...]
    ll: np.ndarray

    def __post_init__(self):
        ll = np.asarray(self.ll, dtype=float)
        if ll.shape != (len(self.datasets), len(self.models)):
            raise InvalidConfig(
                f"results shape {ll.shape} does not match {len(self.datasets)} datasets x {len(self.models)} models"
            )
        if len(self.models) < 2 or len(self.datasets) < 2:
            raise InvalidConfig("need at least two models and two datasets")
        missing = np.argwhere(~np.isfinite(ll))
        if len(missing):
            i, j = missing[0]
            raise MissingResult(self.datasets[i], self.models[j])
        object.__setattr__(self, "ll", ll)

    @property
    def k(self) -> int:
        return len(self.models)

    @property
    def m(self) -> int:
        return len(self.datasets)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, value_column: str = "test_ll") -> "ResultsMatrix":
        """Pivot long-format rows (series, model[, seed], value) into a matrix.

        Repeated seeds for one (series, model) cell are averaged.
        """
        for column in ("series", "model", value_column):
            if column not in frame.columns:
                raise InvalidConfig(f"results file lacks column '{column}'")
        datasets = tuple(str(s) for s in pd.unique(frame["series"]))
        models = tuple(str(m) for m in pd.unique(frame["model"]))
        cells = frame.groupby(["series", "model"], sort=False)[value_column].mean()
        ll = np.full((len(datasets), len(models)), np.nan)
        for i, dataset in enumerate(datasets):
            for j, model in enumerate(models):
                if (dataset, model) not in cells.index:
                    raise MissingResult(dataset, model)
                ll[i, j] = cells[(dataset, model)]
        return cls(models=models, datasets=datasets, ll=ll)

    @classmethod
    def from_csv(cls, paths: Sequence[str], value_column: str = "test_ll") -> "ResultsMatrix":
        frames = [_read_results(path) for path in paths]
        return cls.from_frame(pd.concat(frames, ignore_index=True), value_column)


def _read_results(path: str) -> pd.DataFrame:
    try:
        return pd.read_csv(path, comment="#", dtype={"series": str, "model": str})
    except pd.errors.EmptyDataError as e:
        raise ParseError(path, 1, "no results rows") from e
    except pd.errors.ParserError as e:
        # pandas reports "... in line N, saw M"
        match = re_search(r"line (\d+)", str(e))
        raise ParseError(path, int(match.group(1)) if match else 1, str(e).strip()) from e


@dataclass
class RankReport:
    models: Tuple[str, ...]
    avg_ranks: np.ndarray
    friedman_stat: float
    friedman_p: float
    alpha: float
    significant: bool
    pairwise_p: np.ndarray
    cliques: List[Tuple[str, ...]] = field(default_factory=list)
    corrected: bool = True

    def ordered(self) -> List[Tuple[str, float]]:
        order = np.argsort(self.avg_ranks, kind="stable")
        return [(self.models[i], float(self.avg_ranks[i])) for i in order]


def rank_matrix(rm: ResultsMatrix) -> np.ndarray:
    """Per-dataset ranks, 1 for the highest log-likelihood, ties averaged."""
    return rankdata(-rm.ll, axis=1, method="average")


def average_ranks(rm: ResultsMatrix) -> np.ndarray:
    return rank_matrix(rm).mean(axis=0)


def friedman_test(rm: ResultsMatrix) -> Tuple[float, float]:
    """Friedman chi-square statistic (k - 1 dof, tie corrected) and its p-value."""
    if rm.m < MIN_DATASETS:
        raise TooFewDatasets(f"Friedman test needs at least {MIN_DATASETS} datasets, got {rm.m}")
    if np.all(rm.ll == rm.ll[:, :1]):
        return 0.0, 1.0
    long = pd.DataFrame(
        {
            "dataset": np.repeat(np.arange(rm.m), rm.k),
            "model": np.tile(np.arange(rm.k), rm.m),
            "ll": rm.ll.ravel(),
        }
    )
    result = pg.friedman(data=long, dv="ll", within="model", subject="dataset")
    return float(result["Q"].values[0]), float(result["p-unc"].values[0])


def wilcoxon_signed_rank(a: Sequence[float], b: Sequence[float]) -> Tuple[float, float]:
    """Two-sided signed-rank test on paired values, zero differences dropped.

    Exact null distribution up to 20 pairs without tied magnitudes, normal
    approximation with tie correction otherwise.
    """
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if diff.ndim != 1:
        raise InvalidConfig("paired samples must be one-dimensional and of equal length")
    nonzero = diff[diff != 0]
    if len(diff) and not len(nonzero):
        raise AllZeroDifferences("all paired differences are zero")
    if len(nonzero) < MIN_NONZERO_PAIRS:
        raise TooFewPairs(f"need at least {MIN_NONZERO_PAIRS} non-zero differences, got {len(nonzero)}")
    magnitudes = np.abs(nonzero)
    has_ties = len(np.unique(magnitudes)) < len(magnitudes)
    method = "exact" if len(nonzero) <= EXACT_WILCOXON_MAX and not has_ties else "approx"
    result = wilcoxon(nonzero, alternative="two-sided", method=method)
    return float(result.statistic), float(result.pvalue)


def pairwise_wilcoxon(rm: ResultsMatrix, correct: bool = True, log_level: str = "INFO") -> np.ndarray:
    """k x k symmetric matrix of (Holm-corrected) two-sided p-values; diagonal 1."""
    logger = Logger(log_level, "evaluation")
    pairs = [(i, j) for i in range(rm.k) for j in range(i + 1, rm.k)]
    raw = []
    for i, j in pairs:
        try:
            raw.append(wilcoxon_signed_rank(rm.ll[:, i], rm.ll[:, j])[1])
        except AllZeroDifferences:
            raw.append(1.0)
        except TooFewPairs:
            logger.warning(f"⚠️ {rm.models[i]} vs {rm.models[j]}: too few non-zero differences, treated as p=1")
            raw.append(1.0)
    raw = np.array(raw)
    adjusted = raw
    if correct and len(raw) > 1:
        _, adjusted = pg.multicomp(raw, alpha=DEFAULT_ALPHA, method="holm")
    p = np.ones((rm.k, rm.k))
    for (i, j), value in zip(pairs, adjusted):
        p[i, j] = p[j, i] = float(value)
    return p


def find_cliques(order: Sequence[int], pairwise_p: np.ndarray, alpha: float) -> List[Tuple[int, ...]]:
    """Maximal runs of rank-adjacent models with no significant pairwise difference.

    Runs of a single model are not cliques.
    """
    order = list(order)
    runs = []
    for start in range(len(order)):
        stop = start
        while stop + 1 < len(order):
            candidate = order[start : stop + 2]
            newcomer = candidate[-1]
            if any(pairwise_p[newcomer, other] < alpha for other in candidate[:-1]):
                break
            stop += 1
        if stop > start:
            runs.append((start, stop))
    maximal = [
        (s, e) for s, e in runs if not any(s2 <= s and e <= e2 and (s2, e2) != (s, e) for s2, e2 in runs)
    ]
    return [tuple(order[s : e + 1]) for s, e in maximal]


def cd_report(
    rm: ResultsMatrix, alpha: float = DEFAULT_ALPHA, correct: bool = True, log_level: str = "INFO"
) -> RankReport:
    """Average ranks, Friedman test and, when it rejects, post-hoc cliques.

    Without a significant Friedman test every model sits in one clique.
    """
    logger = Logger(log_level, "evaluation")
    stat, p = friedman_test(rm)
    ranks = average_ranks(rm)
    order = np.argsort(ranks, kind="stable")
    if not p < alpha:
        logger.info(f"Friedman chi2={stat:.4f}, p={p:.4f}: no significant difference")
        return RankReport(
            models=rm.models,
            avg_ranks=ranks,
            friedman_stat=stat,
            friedman_p=p,
            alpha=alpha,
            significant=False,
            pairwise_p=np.ones((rm.k, rm.k)),
            cliques=[tuple(rm.models[i] for i in order)],
            corrected=correct,
        )

    pairwise = pairwise_wilcoxon(rm, correct=correct, log_level=log_level)
    cliques = [tuple(rm.models[i] for i in clique) for clique in find_cliques(order, pairwise, alpha)]
    logger.info(f"📊 Friedman chi2={stat:.4f}, p={p:.4g}; {len(cliques)} clique(s)")
    return RankReport(
        models=rm.models,
        avg_ranks=ranks,
        friedman_stat=stat,
        friedman_p=p,
        alpha=alpha,
        significant=True,
        pairwise_p=pairwise,
        cliques=cliques,
        corrected=correct,
    )


def format_report(report: RankReport) -> str:
    lines = [
        f"Friedman chi2 = {report.friedman_stat:.4f}, p = {report.friedman_p:.6g} (alpha = {report.alpha})",
    ]
    if not report.significant:
        lines.append("No significant difference between models")
    lines.append("")
    lines.append("Average ranks (1 = best):")
    for name, rank in report.ordered():
        lines.append(f"  {rank:8.4f}  {name}")
    if report.significant:
        label = "Holm-corrected" if report.corrected else "uncorrected"
        lines.append("")
        lines.append(f"Pairwise Wilcoxon p-values ({label}):")
        for i in range(len(report.models)):
            for j in range(i + 1, len(report.models)):
                marker = " *" if report.pairwise_p[i, j] < report.alpha else ""
                lines.append(
                    f"  {report.models[i]} vs {report.models[j]}: {report.pairwise_p[i, j]:.6g}{marker}"
                )
    lines.append("")
    lines.append("Cliques (no significant difference):")
    if report.cliques:
        for clique in report.cliques:
            lines.append("  [" + ", ".join(clique) + "]")
    else:
        lines.append("  none")
    return "\n".join(lines) + "\n"


def format_results_table(rm: ResultsMatrix) -> str:
    """Dataset-by-model log-likelihood table, best model per row starred."""
    name_width = max(len("dataset"), *(len(d) for d in rm.datasets))
    col_width = max(12, *(len(m) for m in rm.models)) + 1
    header = "dataset".ljust(name_width) + "".join(m.rjust(col_width) for m in rm.models)
    lines = [header, "-" * len(header)]
    for i, dataset in enumerate(rm.datasets):
        best = np.max(rm.ll[i])
        cells = []
        for value in rm.ll[i]:
            cell = f"{value:.3f}" + ("*" if value == best else " ")
            cells.append(cell.rjust(col_width))
        lines.append(dataset.ljust(name_width) + "".join(cells))
    return "\n".join(lines) + "\n"
