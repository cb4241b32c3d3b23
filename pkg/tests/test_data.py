import gzip
import io

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from dscovr.data import (
    cluster_data,
    distribute_rows,
    make_problem,
    normalize_rows,
    parse_libsvm,
    serialize_libsvm,
    synth_data,
    synth_problem,
)
from dscovr.errors import ParseError


def test_parse_examples():
    y, X = parse_libsvm(io.StringIO("+1 1:0.5 3:0.25\n-1\n"))
    assert list(y) == [1.0, -1.0]
    assert X.shape == (2, 3)
    assert X[0].toarray().tolist() == [[0.5, 0.0, 0.25]]
    assert X[1].nnz == 0


@pytest.mark.parametrize(
    "text, line",
    [("1:abc\n", 1), ("1 2:1 1:1\n", 1), ("1 1:1\n1 0:2\n", 2), ("+1 3\n", 1), ("", 1), ("abc 1:2\n", 1),
     ("1 1:1\n\n-1 2:x\n", 3)],
)
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(ParseError) as err:
        parse_libsvm(io.StringIO(text))
    assert err.value.line == line
    assert f"line {line}" in str(err.value)


def test_dimension_override():
    _, X = parse_libsvm(io.StringIO("1 2:1\n"), d=10)
    assert X.shape == (1, 10)
    with pytest.raises(ParseError):
        parse_libsvm(io.StringIO("1 5:1\n"), d=3)


def test_gzip_and_paths(tmp_path):
    text = "1 1:0.1 4:-2.5e-07\n-1 2:3\n"
    plain = tmp_path / "a.svm"
    plain.write_text(text)
    packed = tmp_path / "a.svm.gz"
    packed.write_bytes(gzip.compress(text.encode()))
    y1, X1 = parse_libsvm(plain)
    y2, X2 = parse_libsvm(str(packed))
    y3, X3 = parse_libsvm(io.BytesIO(gzip.compress(text.encode())))
    for y, X in ((y2, X2), (y3, X3)):
        assert np.array_equal(y, y1) and (X != X1).nnz == 0


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), rows=st.integers(1, 8), cols=st.integers(1, 8))
def test_round_trip_is_exact(seed, rows, cols):
    rng = np.random.default_rng(seed)
    X = sp.random(rows, cols, density=0.5, random_state=seed, format="csr",
                  data_rvs=lambda k: rng.standard_normal(k) * 10.0 ** rng.integers(-300, 300, k))
    y = rng.choice([-1.0, 1.0, 0.5, 3.25], rows)
    text = serialize_libsvm(y, X)
    y2, X2 = parse_libsvm(io.StringIO(text), d=cols)
    assert np.array_equal(y, y2)
    assert np.array_equal(X.toarray(), X2.toarray())
    assert serialize_libsvm(y2, X2) == text


def test_normalize_rows():
    out = normalize_rows(sp.csr_matrix([[3.0, 4.0], [0.0, 2.0]]))
    assert np.allclose(out.toarray(), [[0.6, 0.8], [0.0, 1.0]])
    with pytest.warns(RuntimeWarning):
        z = normalize_rows(sp.csr_matrix([[0.0, 0.0], [1.0, 0.0]]))
    assert z[0].nnz == 0


def test_distribute_examples():
    perm, part = distribute_rows(np.ones(4), 2, "as_is")
    assert [list(perm[part.slice(b)]) for b in range(2)] == [[0, 1], [2, 3]]
    perm, part = distribute_rows(np.array([1.0, -1.0, 1.0, -1.0]), 2, "sorted_by_label")
    assert [list(perm[part.slice(b)]) for b in range(2)] == [[1, 3], [0, 2]]
    with pytest.raises(ValueError):
        distribute_rows(np.ones(3), 2, "random")


@given(N=st.integers(1, 200), m=st.integers(1, 20), seed=st.integers(0, 99),
       order=st.sampled_from(["shuffled", "sorted_by_label", "as_is"]))
def test_distribute_partitions_exactly(N, m, seed, order):
    if m > N:
        return
    labels = np.random.default_rng(seed).choice([-1.0, 1.0], N)
    perm, part = distribute_rows(labels, m, order, seed)
    assert sorted(perm.tolist()) == list(range(N))
    assert part.total == N and part.count == m


def test_make_problem_permutes_labels_with_rows():
    X = np.arange(8.0).reshape(4, 2) + 1
    y = np.array([1.0, -1.0, 1.0, -1.0])
    pr = make_problem(X, y, 2, 1, "smoothed_hinge", 0.1, order="sorted_by_label")
    assert list(pr.labels) == [-1, -1, 1, 1]
    assert pr.data.X.toarray()[:, 0].tolist() == [3.0, 7.0, 1.0, 5.0]


def test_synthetic_data():
    X, y = synth_data(50, 6, "logistic", seed=1)
    assert np.allclose(np.linalg.norm(X, axis=1), 1.0)
    assert set(np.unique(y)) <= {-1.0, 1.0}
    X2, y2 = synth_data(50, 6, "logistic", seed=1)
    assert np.array_equal(X, X2) and np.array_equal(y, y2)
    # a zero planted model leaves only the noise sign
    _, yq = synth_data(200, 6, "quadratic", seed=1, planted_w=0.0, noise=0.1)
    assert np.std(yq) == pytest.approx(0.1, rel=0.2)
    pr = synth_problem(30, 6, 3, 2, "quadratic", 0.1, seed=0)
    assert (pr.m, pr.n, pr.N, pr.d) == (3, 2, 30, 6)


def test_cluster_data_sorted_split_gives_one_cluster_per_worker():
    X, y = cluster_data(40, 12, 4, seed=2, noise=0.1)
    assert np.allclose(np.linalg.norm(X, axis=1), 1.0)
    assert y.tolist() == [1.0] * 20 + [-1.0] * 20
    pr = make_problem(X, y, 4, 3, "logistic", 0.01, order="sorted_by_label")
    dense = pr.data.X.toarray()
    for j in range(4):
        block = dense[pr.data.row_part.slice(j)]
        sv = np.linalg.svd(block, compute_uv=False)
        assert sv[1] < 0.2 * sv[0]
    with pytest.raises(ValueError):
        cluster_data(41, 12, 4)
