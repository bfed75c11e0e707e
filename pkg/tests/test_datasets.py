import io
import math

import numpy as np
import pytest

from fanova_shapley.datasets import (
    GROUND_TRUTH,
    RankReport,
    SyntheticSpec,
    average_rank,
    feature_ranks,
    generate_synthetic,
    read_csv,
    read_features_csv,
    synthetic_response,
    write_csv,
)
from fanova_shapley.exceptions import IngestionError, InvalidInputError
from fanova_shapley.gp import Dataset


def test_response_values_at_origin():
    zero = np.zeros((1, 5))
    assert synthetic_response(1, zero)[0] == 0.0
    assert synthetic_response(4, zero)[0] == pytest.approx(math.exp(-4.0), rel=1e-15)
    x = np.array([[0.0, 0.0, 0.7, 0.0]])
    assert synthetic_response(2, x)[0] == 0.0


def test_dataset_three_formula():
    x = np.array([[0.3, -0.5, 1.1, 0.2]])
    x1, x2, x3, x4 = x[0]
    ref = (math.sin(x1) * math.exp(x2) + math.cos(x3 * x4) * math.tanh(math.pi * x1 * x2)
           + math.exp(-(x1 ** 2 + x2 ** 2)) * math.sin(math.pi * (x3 + x4)))
    assert synthetic_response(3, x)[0] == pytest.approx(ref, rel=1e-14)


def test_generator_determinism():
    a = generate_synthetic(SyntheticSpec(2, n=50, d=6, seed=1))
    b = generate_synthetic(SyntheticSpec(2, n=50, d=6, seed=1))
    c = generate_synthetic(SyntheticSpec(2, n=50, d=6, seed=2))
    assert np.array_equal(a.y, b.y)
    assert not np.array_equal(a.y, c.y)


def test_spec_validation():
    with pytest.raises(InvalidInputError):
        SyntheticSpec(5)
    with pytest.raises(InvalidInputError):
        SyntheticSpec(2, d=3)
    assert SyntheticSpec(4).ideal_rank == 2.0
    assert [SyntheticSpec(i).ideal_rank for i in (1, 2, 3)] == [1.5, 2.5, 2.5]


@pytest.mark.parametrize("attr,truth,expect", [
    ([5, 4, 0, 0], [0, 1], 1.5),
    ([1, 1, 1, 1], [0], 1.0),
    ([0, 0, 9], [0], 2.0),
    ([-3, 1, 2], [0], 1.0),
])
def test_average_rank_examples(attr, truth, expect):
    assert average_rank(attr, truth) == expect


def test_average_rank_scale_invariant():
    rng = np.random.default_rng(0)
    a = rng.normal(size=10)
    assert average_rank(a, [1, 4]) == average_rank(7.3 * a, [1, 4])


def test_average_rank_bounds():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a = rng.normal(size=8)
        r = average_rank(a, [0, 1, 2])
        assert 2.0 <= r <= 8 - 1.0
    with pytest.raises(InvalidInputError):
        average_rank([1.0], [])
    with pytest.raises(InvalidInputError):
        average_rank([1.0, 2.0], [2])


def test_feature_ranks_tie_break():
    assert feature_ranks([0.0, 2.0, 2.0, 1.0]).tolist() == [4, 1, 2, 3]


def test_rank_report():
    rep = RankReport([1.5, 2.0, 3.5], (0, 1), 1.5)
    assert rep.mean == pytest.approx(7 / 3)
    assert rep.to_dict()["truth"] == [1, 2]


def test_csv_imputation(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b,y\n1,2,0.5\n,4,1.5\n3,6,2.5\n")
    data = read_csv(p, "y")
    assert data.X[1, 0] == 2.0
    assert data.feature_names == ["a", "b"]


def test_csv_missing_target_dropped(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("y,a\n1,2\n,4\n3,6\n")
    data = read_csv(p, "y")
    assert data.n == 2 and data.dropped_rows == 1
    np.testing.assert_array_equal(data.y, [1.0, 3.0])


def test_csv_target_defaults_to_last(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,t\n1,2\n3,4\n")
    assert read_csv(p).target_name == "t"


@pytest.mark.parametrize("body,row,column", [
    ("a,y\n1,2\nfoo,3\n", 3, "a"),
    ("a,y\n1,2\n1,inf\n", 3, "y"),
])
def test_csv_bad_cell(tmp_path, body, row, column):
    p = tmp_path / "d.csv"
    p.write_text(body)
    with pytest.raises(IngestionError) as info:
        read_csv(p, "y")
    assert info.value.row == row and info.value.column == column


def test_csv_structural_errors(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,y\n1,2,3\n4,5\n")
    with pytest.raises(IngestionError):
        read_csv(p, "y")
    p.write_text("a,y\n1,2\n")
    with pytest.raises(IngestionError):
        read_csv(p, "y")
    p.write_text("a,y\n1,2\n3,4\n")
    with pytest.raises(IngestionError):
        read_csv(p, "z")
    with pytest.raises(IngestionError):
        read_csv(tmp_path / "missing.csv")


def test_scientific_notation(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,y\n1e-3,2E2\n-4.5e+1,1\n")
    data = read_csv(p, "y")
    assert data.X[:, 0].tolist() == [1e-3, -45.0]


def test_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    data = Dataset(rng.normal(size=(6, 3)) * 1e3, rng.normal(size=6) / 7, ["p", "q", "r"], "out")
    p = tmp_path / "rt.csv"
    write_csv(p, data)
    back = read_csv(p, "out")
    assert np.max(np.abs(back.X - data.X)) <= 1e-12 * np.max(np.abs(data.X))
    assert np.array_equal(back.y, data.y)


def test_query_file_by_name(tmp_path):
    p = tmp_path / "q.csv"
    p.write_text("b,extra,a\n1,9,2\n,9,4\n")
    X = read_features_csv(p, ["a", "b"], fill=[0.0, -1.0])
    np.testing.assert_array_equal(X, [[2.0, 1.0], [4.0, -1.0]])


def test_write_to_stream():
    buf = io.StringIO()
    write_csv(buf, Dataset(np.array([[0.1]]), np.array([0.2])))
    assert buf.getvalue() == "x1,y\n0.1,0.2\n"
