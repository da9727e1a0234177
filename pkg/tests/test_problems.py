import math

import numpy as np
import pytest
import scipy.sparse
from hypothesis import given
from hypothesis import strategies as st

from alrmom import (InvalidArgument, LogisticProblem, ParseError, PolyhedralProblem,
                    ProblemMeta, QuadraticProblem, gen_least_squares, gen_logistic_overlap,
                    gen_logistic_synthetic, gen_two_dim_quadratic, make_problem, parse_libsvm,
                    serialize_libsvm)
from alrmom.diagnostics import finite_diff_gradient
from alrmom.problems import Dataset, logistic_from_dataset


def scalar_quadratic(h=1.0):
    return QuadraticProblem.from_diagonal([h], [0.0])


# -- meta ----------------------------------------------------------------------


def test_meta_rejects_mu_above_L():
    with pytest.raises(InvalidArgument):
        ProblemMeta(lipschitz=1.0, strong_convexity=2.0)


def test_meta_checks_value_at_minimizer():
    A = np.eye(2)
    with pytest.raises(InvalidArgument):
        QuadraticProblem(A, [1.0, 1.0], meta=ProblemMeta(fstar=0.0, minimizer=[0.0, 0.0]))


def test_dimension_mismatch_is_invalid_argument(ls20):
    with pytest.raises(InvalidArgument):
        ls20.value(np.zeros(19))
    with pytest.raises(InvalidArgument):
        ls20.value(np.full(20, np.nan))


# -- least squares -------------------------------------------------------------


def test_least_squares_kappa_one():
    p = gen_least_squares(2, 1.0, 0)
    np.testing.assert_allclose(np.linalg.svd(p.A, compute_uv=False), [1.0, 1.0], rtol=1e-14)
    assert np.linalg.cond(p.hessian()) == pytest.approx(1.0, rel=1e-12)


def test_least_squares_condition_number_large():
    p = gen_least_squares(1000, 1e4, 5)
    eig = np.linalg.eigvalsh(p.hessian())
    assert eig[-1] / eig[0] / 1e4 == pytest.approx(1.0, abs=1e-6)
    assert p.meta.lipschitz == 1.0
    assert p.meta.strong_convexity == pytest.approx(1e-4, rel=1e-12)


def test_least_squares_minimizer():
    p = gen_least_squares(20, 100.0, 7)
    xs = p.meta.minimizer
    assert p.value(xs) <= 1e-18
    assert np.linalg.norm(p.gradient(xs)) <= 1e-9
    assert p.meta.fstar == 0.0


@given(st.integers(2, 30), st.floats(1.0, 1e6), st.integers(0, 2**32 - 1))
def test_least_squares_spectrum(dim, kappa, seed):
    p = gen_least_squares(dim, kappa, seed)
    eig = np.sort(np.linalg.eigvalsh(p.hessian()))[::-1]
    expected = np.logspace(0.0, -math.log10(kappa), dim)
    np.testing.assert_allclose(eig, expected, rtol=1e-10, atol=0)


def test_least_squares_rejects_bad_kappa():
    with pytest.raises(InvalidArgument):
        gen_least_squares(5, 0.5, 0)
    with pytest.raises(InvalidArgument):
        gen_least_squares(1, 10.0, 0)


def test_least_squares_is_deterministic():
    a, b = gen_least_squares(10, 50.0, 3), gen_least_squares(10, 50.0, 3)
    np.testing.assert_array_equal(a.A, b.A)
    np.testing.assert_array_equal(a.b, b.b)


def test_least_squares_full_batch_matches_full_objective(ls20, rng):
    x = rng.standard_normal(20)
    f, g = ls20.value_and_grad(x)
    fb, gb = ls20.batch_value_and_grad(x, np.arange(20))
    assert fb == pytest.approx(f, rel=1e-14)
    np.testing.assert_allclose(gb, g, rtol=1e-13)


def test_batch_value_is_mean_of_sample_terms(ls20, rng):
    x = rng.standard_normal(20)
    batch = np.array([3, 7, 11])
    singles = [ls20.batch_value(x, [i]) for i in batch]
    assert ls20.batch_value(x, batch) == pytest.approx(np.mean(singles), rel=1e-13)


def test_batch_index_out_of_range(ls20):
    with pytest.raises(InvalidArgument):
        ls20.batch_value(np.zeros(20), [20])


# -- two dimensional quadratic -------------------------------------------------


def test_two_dim_quadratic_values():
    p = gen_two_dim_quadratic(100.0)
    assert p.value([48.0, -28.0]) == 37554.5
    np.testing.assert_array_equal(p.gradient([1.0, 0.0]), [0.0, 100.0])
    q = gen_two_dim_quadratic(1.0)
    assert q.value([1.0, -1.0]) == 0.0
    np.testing.assert_array_equal(q.gradient([1.0, -1.0]), [0.0, 0.0])
    assert p.meta.lipschitz == 100.0 and p.meta.strong_convexity == 1.0
    np.testing.assert_array_equal(p.meta.minimizer, [1.0, -1.0])


def test_scalar_quadratic():
    p = scalar_quadratic()
    assert p.value([4.0]) == 8.0
    assert p.gradient([4.0])[0] == 4.0


# -- logistic ------------------------------------------------------------------


def test_logistic_synthetic_margin():
    p = gen_logistic_synthetic(100, 5, 0.1, 1)
    assert p.margins(p.generator_hyperplane).min() >= 0.1
    assert p.batch_fstar([0, 1, 2]) == 0.0
    assert p.meta.fstar == 0.0


def test_logistic_synthetic_smallest_instance():
    p = gen_logistic_synthetic(2, 1, 1.0, 0)
    assert set(p.labels) == {-1.0, 1.0}
    assert np.sign(p.features[0, 0]) == -np.sign(p.features[1, 0])


@given(st.integers(2, 60), st.integers(1, 8), st.floats(0.01, 0.3), st.integers(0, 10**6))
def test_logistic_synthetic_is_separable(n, dim, margin, seed):
    if dim == 1:
        margin = min(margin, 0.3)
    p = gen_logistic_synthetic(n, dim, margin, seed)
    assert p.margins(p.generator_hyperplane).min() >= margin
    assert set(p.labels) == {-1.0, 1.0}


def test_logistic_at_zero(logistic_small):
    w = np.zeros(5)
    assert logistic_small.value(w) == pytest.approx(math.log(2.0), rel=1e-15)
    assert logistic_small.batch_value(w, [4, 9]) == pytest.approx(math.log(2.0), rel=1e-15)


def test_logistic_sparse_matches_dense(logistic_small, rng):
    sparse = LogisticProblem(scipy.sparse.csr_matrix(logistic_small.features),
                             logistic_small.labels, l2=0.1)
    dense = LogisticProblem(logistic_small.features, logistic_small.labels, l2=0.1)
    w = rng.standard_normal(5)
    f1, g1 = sparse.value_and_grad(w)
    f2, g2 = dense.value_and_grad(w)
    assert f1 == pytest.approx(f2, rel=1e-14)
    np.testing.assert_allclose(g1, g2, rtol=1e-13)


def test_logistic_is_stable_for_large_margins(logistic_small):
    f, g = logistic_small.value_and_grad(1e4 * logistic_small.generator_hyperplane)
    assert math.isfinite(f) and f >= 0.0 and np.all(np.isfinite(g))


def test_logistic_overlap_has_positive_fstar():
    p = gen_logistic_overlap(300, 4, 1.0, 0)
    assert p.meta.fstar > 0.1
    assert np.linalg.norm(p.gradient(p.meta.minimizer)) < 1e-6


# -- polyhedral ----------------------------------------------------------------


def test_polyhedral_basics():
    p = PolyhedralProblem(3)
    f, g = p.value_and_grad([0.5, -2.0, 1.0])
    assert f == 2.0
    np.testing.assert_array_equal(g, [0.0, -1.0, 0.0])
    assert p.value(np.zeros(3)) == 0.0


# -- gradient correctness and convexity ----------------------------------------


def _problems():
    return [gen_least_squares(6, 30.0, 1), gen_two_dim_quadratic(100.0),
            gen_logistic_synthetic(40, 6, 0.1, 2),
            LogisticProblem(np.random.default_rng(0).standard_normal((30, 6)),
                            np.random.default_rng(1).choice([-1, 1], 30), l2=0.3),
            PolyhedralProblem(6)]


@pytest.mark.parametrize("problem", _problems(), ids=lambda p: type(p).__name__)
def test_gradient_matches_finite_differences(problem):
    rng = np.random.default_rng(99)
    for _ in range(50):
        x = rng.standard_normal(problem.dim) * 2.0
        fd = finite_diff_gradient(problem, x, 1e-6)
        g = problem.gradient(x)
        assert np.linalg.norm(fd - g) <= 1e-4 * max(1.0, np.linalg.norm(g))


@pytest.mark.parametrize("problem", _problems()[:4], ids=lambda p: type(p).__name__)
def test_convexity_spot_check(problem):
    rng = np.random.default_rng(5)
    for _ in range(100):
        x, y = rng.standard_normal((2, problem.dim)) * 3.0
        mid = problem.value(0.5 * (x + y))
        assert mid <= 0.5 * problem.value(x) + 0.5 * problem.value(y) + 1e-12


# -- LIBSVM --------------------------------------------------------------------


def test_parse_libsvm_single_row():
    ds = parse_libsvm(b"1 5:0.3 17:1.0\n")
    assert len(ds) == 1 and ds.dim == 17
    assert ds.labels[0] == 1.0
    row = ds.rows.toarray()[0]
    assert row[4] == 0.3 and row[16] == 1.0 and np.count_nonzero(row) == 2


def test_parse_libsvm_two_rows():
    ds = parse_libsvm("-1 1:2\n+1 2:3\n")
    assert len(ds) == 2 and ds.dim == 2
    np.testing.assert_array_equal(ds.labels, [-1.0, 1.0])


@pytest.mark.parametrize("text,line", [
    ("1 3:a\n", 1),
    ("1 1:1\n1 2:1 2:3\n", 2),
    ("1 1:1\n\n-1 0:2\n", 3),
    ("x 1:1\n", 1),
    ("1 1:1 7\n", 1),
    ("", 1),
])
def test_parse_libsvm_errors_carry_line(text, line):
    with pytest.raises(ParseError) as info:
        parse_libsvm(text)
    assert info.value.line == line
    assert str(info.value).startswith(f"line {line}:")


labels_st = st.lists(st.sampled_from([-1.0, 1.0]), min_size=1, max_size=8)


@given(labels_st, st.data())
def test_libsvm_round_trip(labels, data):
    dim = data.draw(st.integers(1, 10))
    rows = []
    for _ in labels:
        idx = sorted(data.draw(st.sets(st.integers(0, dim - 1), max_size=dim)))
        vals = [data.draw(st.floats(-1e6, 1e6, allow_nan=False).filter(lambda v: v != 0))
                for _ in idx]
        rows.append((idx, vals))
    indptr = np.cumsum([0] + [len(i) for i, _ in rows])
    indices = np.array([j for i, _ in rows for j in i], dtype=np.int64)
    values = np.array([v for _, vs in rows for v in vs])
    used = int(indices.max()) + 1 if indices.size else 0
    mat = scipy.sparse.csr_matrix((values, indices, indptr), shape=(len(labels), used))
    ds = Dataset(mat, labels, used)
    assert parse_libsvm(serialize_libsvm(ds)) == ds


def test_libsvm_problem_from_file(tmp_path):
    path = tmp_path / "tiny.svm"
    path.write_text("1 1:1.0 2:0.5\n-1 1:-1.0 2:-0.25\n")
    p = make_problem({"name": "libsvm", "path": str(path)})
    assert p.dim == 2 and p.n_samples == 2
    ds = parse_libsvm(path.read_bytes())
    assert logistic_from_dataset(ds).value(np.zeros(2)) == pytest.approx(math.log(2.0))


def test_make_problem_unknown_name():
    with pytest.raises(InvalidArgument):
        make_problem({"name": "nope"})
    with pytest.raises(InvalidArgument):
        make_problem({"name": "least_squares", "dim": 3})
