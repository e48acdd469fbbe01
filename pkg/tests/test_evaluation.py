from itertools import product

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from volatility.cd_diagram import draw_cd_diagram
from volatility.errors import AllZeroDifferences, InvalidConfig, MissingResult, ParseError, TooFewDatasets, TooFewPairs
from volatility.evaluation import (
    ResultsMatrix,
    average_ranks,
    cd_report,
    find_cliques,
    format_report,
    format_results_table,
    friedman_test,
    rank_matrix,
    wilcoxon_signed_rank,
)


def _matrix(ll, models=None):
    ll = np.asarray(ll, dtype=float)
    models = models or tuple(f"M{j}" for j in range(ll.shape[1]))
    return ResultsMatrix(models=tuple(models), datasets=tuple(f"d{i}" for i in range(ll.shape[0])), ll=ll)


def _enumerated_p(diff):
    """Two-sided signed-rank p-value by listing every sign assignment."""
    ranks = np.argsort(np.argsort(np.abs(diff))) + 1
    observed = ranks[diff > 0].sum()
    total = ranks.sum()
    w = min(observed, total - observed)
    count = sum(1 for signs in product((0, 1), repeat=len(diff)) if np.dot(signs, ranks) <= w)
    return min(1.0, 2.0 * count / 2 ** len(diff))


def test_wilcoxon_exact_all_positive():
    stat, p = wilcoxon_signed_rank(np.arange(1.0, 7.0), np.zeros(6))
    assert stat == 0.0
    assert_allclose(p, 2 / 64)


@pytest.mark.parametrize("m", range(5, 13))
def test_wilcoxon_exact_matches_enumeration(m):
    rng = np.random.default_rng(m)
    diff = (rng.permutation(m) + 1.0) * rng.choice([-1.0, 1.0], size=m)
    _, p = wilcoxon_signed_rank(diff, np.zeros(m))
    assert_allclose(p, _enumerated_p(diff), rtol=1e-10)


def test_wilcoxon_drops_zero_differences():
    a = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 7.0])
    b = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 7.0, 7.0])
    _, p = wilcoxon_signed_rank(a, b)
    assert_allclose(p, 2 / 64)


def test_wilcoxon_errors():
    with pytest.raises(AllZeroDifferences):
        wilcoxon_signed_rank(np.ones(8), np.ones(8))
    with pytest.raises(TooFewPairs):
        wilcoxon_signed_rank(np.arange(4.0), np.zeros(4) - 1)


def test_wilcoxon_large_sample_uses_normal_approximation():
    rng = np.random.default_rng(0)
    diff = rng.normal(0.5, 1.0, size=40)
    _, p = wilcoxon_signed_rank(diff, np.zeros(40))
    assert 0.0 < p < 0.05


def test_friedman_identical_columns():
    assert friedman_test(_matrix(np.tile([[1.0], [2.0], [5.0]], (1, 3)))) == (0.0, 1.0)


def test_friedman_needs_three_datasets():
    with pytest.raises(TooFewDatasets):
        friedman_test(_matrix([[1.0, 2.0], [3.0, 1.0]]))


def test_friedman_detects_dominant_model():
    rng = np.random.default_rng(1)
    ll = rng.normal(size=(10, 4))
    ll[:, 2] = ll.max(axis=1) + 1.0
    stat, p = friedman_test(_matrix(ll))
    assert p < 0.05
    assert stat > 0


def test_friedman_ignores_row_offsets():
    rng = np.random.default_rng(2)
    ll = rng.normal(size=(8, 3))
    shifted = ll.copy()
    shifted[3] += 100.0
    assert_allclose(friedman_test(_matrix(ll)), friedman_test(_matrix(shifted)))


def test_ranks_are_per_dataset_permutations():
    rng = np.random.default_rng(3)
    ll = rng.normal(size=(12, 5))
    ll[0] = ll[0, 0]
    ranks = rank_matrix(_matrix(ll))
    assert_allclose(ranks.sum(axis=1), 15.0)
    assert_allclose(ranks[0], 3.0)
    assert np.all((ranks >= 1) & (ranks <= 5))


def test_higher_loglik_ranks_first():
    ranks = average_ranks(_matrix([[-10.0, -5.0], [-3.0, -1.0]]))
    assert_allclose(ranks, [2.0, 1.0])


def test_results_matrix_validation():
    with pytest.raises(InvalidConfig):
        _matrix([[1.0, 2.0, 3.0]])
    with pytest.raises(MissingResult) as info:
        _matrix([[1.0, np.nan], [2.0, 3.0]])
    assert (info.value.dataset, info.value.model) == ("d0", "M1")


def test_find_cliques_on_constructed_matrices():
    order = [0, 1, 2, 3]
    chain = np.ones((4, 4))
    for i, j in [(0, 2), (0, 3), (1, 3)]:
        chain[i, j] = chain[j, i] = 0.01
    assert find_cliques(order, chain, 0.05) == [(0, 1), (1, 2), (2, 3)]

    assert find_cliques(order, np.ones((4, 4)), 0.05) == [(0, 1, 2, 3)]

    separated = np.full((4, 4), 0.001)
    assert find_cliques(order, separated, 0.05) == []

    split = np.ones((4, 4))
    for i in (0, 1):
        for j in (2, 3):
            split[i, j] = split[j, i] = 0.01
    assert find_cliques([1, 0, 3, 2], split, 0.05) == [(1, 0), (3, 2)]


def test_identical_models_form_one_clique():
    rng = np.random.default_rng(4)
    ll = np.tile(rng.normal(size=(6, 1)), (1, 4))
    report = cd_report(_matrix(ll), log_level="WARNING")
    assert not report.significant
    assert_allclose(report.avg_ranks, 2.5)
    assert len(report.cliques) == 1 and set(report.cliques[0]) == set(report.models)
    assert "No significant difference between models" in format_report(report)


def test_dominant_model_sits_outside_every_clique():
    rng = np.random.default_rng(5)
    ll = rng.normal(size=(37, 4))
    ll[:, 0] = ll.max(axis=1) + rng.uniform(0.5, 1.5, size=37)
    report = cd_report(_matrix(ll, ["neural", "garch", "egarch", "bekk"]), log_level="WARNING")
    assert report.significant
    assert report.ordered()[0] == ("neural", 1.0)
    assert all("neural" not in clique for clique in report.cliques)
    assert_allclose(report.pairwise_p, report.pairwise_p.T)
    assert np.all(report.pairwise_p[0, 1:] < 0.05)
    assert "Holm-corrected" in format_report(report)


def test_uncorrected_p_values_are_not_larger():
    rng = np.random.default_rng(6)
    ll = rng.normal(size=(15, 3))
    ll[:, 1] += 0.8
    ll[:, 2] += 1.6
    corrected = cd_report(_matrix(ll), alpha=0.5, log_level="WARNING")
    raw = cd_report(_matrix(ll), alpha=0.5, correct=False, log_level="WARNING")
    assert np.all(raw.pairwise_p <= corrected.pairwise_p + 1e-15)
    assert "uncorrected" in format_report(raw)


def test_from_csv_averages_seeds(tmp_path):
    rows = [
        ("a", "garch-n", 0, -10.0),
        ("a", "garch-n", 1, -12.0),
        ("a", "neural-garch-n", 0, -9.0),
        ("b", "garch-n", 0, -5.0),
        ("b", "neural-garch-n", 0, -6.0),
    ]
    first, second = tmp_path / "r1.csv", tmp_path / "r2.csv"
    frame = pd.DataFrame(rows, columns=["series", "model", "seed", "test_ll"])
    first.write_text("# config_hash=aa seed=0\n" + frame.iloc[:3].to_csv(index=False))
    second.write_text("# config_hash=bb seed=0\n" + frame.iloc[3:].to_csv(index=False))
    rm = ResultsMatrix.from_csv([str(first), str(second)])
    assert rm.models == ("garch-n", "neural-garch-n")
    assert rm.datasets == ("a", "b")
    assert_allclose(rm.ll, [[-11.0, -9.0], [-5.0, -6.0]])


def test_from_frame_reports_missing_cell():
    frame = pd.DataFrame(
        {"series": ["a", "a", "b"], "model": ["x", "y", "x"], "test_ll": [1.0, 2.0, 3.0]}
    )
    with pytest.raises(MissingResult, match="'b', model 'y'"):
        ResultsMatrix.from_frame(frame)


def test_results_table_stars_best_model():
    table = format_results_table(_matrix([[-3.0, -1.0], [-2.0, -4.0]], ["garch-n", "bekk-n"]))
    lines = table.splitlines()
    assert lines[0].split() == ["dataset", "garch-n", "bekk-n"]
    assert lines[2].split() == ["d0", "-3.000", "-1.000*"]
    assert lines[3].split() == ["d1", "-2.000*", "-4.000"]


def test_cd_diagram_is_byte_stable(tmp_path):
    rng = np.random.default_rng(7)
    ll = rng.normal(size=(10, 4))
    ll[:, 3] += 3.0
    report = cd_report(_matrix(ll), log_level="WARNING")
    first, second = tmp_path / "a.svg", tmp_path / "b.svg"
    draw_cd_diagram(report, str(first), title="10 datasets")
    draw_cd_diagram(report, str(second), title="10 datasets")
    content = first.read_bytes()
    assert b"<svg" in content
    assert b"M3" in content
    assert content == second.read_bytes()


def test_from_csv_reports_malformed_rows(tmp_path):
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("series,model,test_ll\na,x,1.0\nb,y,2.0,extra\n")
    with pytest.raises(ParseError) as info:
        ResultsMatrix.from_csv([str(ragged)])
    assert info.value.line == 3
    assert info.value.exit_code == 2

    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(ParseError):
        ResultsMatrix.from_csv([str(empty)])
