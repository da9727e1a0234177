"""Objective functions, synthetic problem generators and LIBSVM ingestion.

Every problem exposes ``value``, ``gradient`` and ``value_and_grad`` for the
full objective. Finite-sum problems (least squares, logistic regression) also
expose the mini-batch versions used by the stochastic optimizers; the full
objective is the unweighted mean of its per-sample terms.
"""

import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize
import scipy.sparse
from scipy.special import expit

from ._validation import InvalidArgument, ParseError, as_vector


@dataclass(frozen=True)
class ProblemMeta:
    fstar: float = None
    lipschitz: float = None
    strong_convexity: float = None
    minimizer: np.ndarray = None

    def __post_init__(self):
        if self.lipschitz is not None and not self.lipschitz > 0:
            raise InvalidArgument("lipschitz constant must be positive")
        if self.strong_convexity is not None and not self.strong_convexity > 0:
            raise InvalidArgument("strong convexity constant must be positive")
        if self.lipschitz is not None and self.strong_convexity is not None:
            if self.strong_convexity > self.lipschitz:
                raise InvalidArgument("strong convexity constant exceeds the Lipschitz constant")
        if self.minimizer is not None:
            object.__setattr__(self, "minimizer", as_vector(self.minimizer, name="minimizer"))

    @property
    def kappa(self):
        if self.lipschitz is None or self.strong_convexity is None:
            return None
        return self.lipschitz / self.strong_convexity


class Problem:
    """Base class for deterministic objectives."""

    dim = None
    meta = ProblemMeta()
    spec = None

    def value_and_grad(self, x):
        raise NotImplementedError

    def value(self, x):
        return self.value_and_grad(x)[0]

    def gradient(self, x):
        return self.value_and_grad(x)[1]

    def _check_x(self, x):
        return as_vector(x, self.dim)

    def _check_meta(self):
        m = self.meta
        if m.minimizer is not None:
            if m.minimizer.shape[0] != self.dim:
                raise InvalidArgument("minimizer dimension does not match the problem")
            if m.fstar is not None:
                gap = abs(self.value(m.minimizer) - m.fstar)
                if gap > 1e-8 * max(1.0, abs(m.fstar)):
                    raise InvalidArgument(
                        f"value at the stored minimizer differs from fstar by {gap:.3e}")


class FiniteSumProblem(Problem):
    """Objective ``f(x) = (1/n) sum_i f_i(x)`` with mini-batch access.

    ``batch_fstar`` returns the per-batch optimal value used in the
    stochastic step sizes. It is ``fstar_batch`` (0 by default) unless a
    table keyed by the sorted batch indices overrides it.
    """

    n_samples = None
    fstar_batch = 0.0
    fstar_table = None

    def batch_value_and_grad(self, x, batch):
        raise NotImplementedError

    def batch_value(self, x, batch):
        return self.batch_value_and_grad(x, batch)[0]

    def batch_gradient(self, x, batch):
        return self.batch_value_and_grad(x, batch)[1]

    def batch_fstar(self, batch):
        if self.fstar_table is not None:
            key = tuple(sorted(int(i) for i in batch))
            if key in self.fstar_table:
                return float(self.fstar_table[key])
        return float(self.fstar_batch)

    def _check_batch(self, batch):
        batch = np.asarray(batch, dtype=np.intp)
        if batch.ndim != 1 or batch.size == 0:
            raise InvalidArgument("batch must be a non-empty 1-D index array")
        if batch.min() < 0 or batch.max() >= self.n_samples:
            raise InvalidArgument(f"batch indices must lie in [0, {self.n_samples})")
        return batch


class QuadraticProblem(FiniteSumProblem):
    """``f(x) = 1/2 ||A x - b||^2``, viewed as the mean of ``(m/2)(a_i x - b_i)^2``."""

    def __init__(self, A, b, meta=None, singular_values=None, spec=None):
        A = np.asarray(A, dtype=np.float64)
        if A.ndim != 2:
            raise InvalidArgument("A must be a matrix")
        self.A = A
        self.b = as_vector(b, A.shape[0], name="b")
        self.dim = A.shape[1]
        self.n_samples = A.shape[0]
        self.singular_values = singular_values
        self.meta = meta if meta is not None else ProblemMeta()
        self.spec = spec
        self._check_meta()

    @classmethod
    def from_diagonal(cls, curvatures, center, spec=None):
        """Separable quadratic ``sum_i (h_i/2)(x_i - center_i)^2``."""
        h = as_vector(curvatures, name="curvatures")
        if np.any(h <= 0):
            raise InvalidArgument("curvatures must be positive")
        center = as_vector(center, h.shape[0], name="center")
        s = np.sqrt(h)
        meta = ProblemMeta(fstar=0.0, lipschitz=float(h.max()),
                           strong_convexity=float(h.min()), minimizer=center)
        return cls(np.diag(s), s * center, meta=meta, singular_values=np.sort(s)[::-1], spec=spec)

    def value_and_grad(self, x):
        x = self._check_x(x)
        r = self.A @ x - self.b
        return 0.5 * float(r @ r), self.A.T @ r

    def batch_value_and_grad(self, x, batch):
        x = self._check_x(x)
        batch = self._check_batch(batch)
        A_s = self.A[batch]
        r = A_s @ x - self.b[batch]
        scale = self.n_samples / batch.size
        return 0.5 * scale * float(r @ r), scale * (A_s.T @ r)

    def hessian(self):
        return self.A.T @ self.A


class LogisticProblem(FiniteSumProblem):
    """Mean logistic loss ``log(1 + exp(-y <w, a>)) + (l2/2)||w||^2``.

    ``features`` may be a dense array or a scipy sparse matrix; labels are
    mapped to +-1 by sign.
    """

    def __init__(self, features, labels, l2=0.0, meta=None, spec=None, fstar_table=None):
        if scipy.sparse.issparse(features):
            features = scipy.sparse.csr_matrix(features, dtype=np.float64)
        else:
            features = np.asarray(features, dtype=np.float64)
            if features.ndim != 2:
                raise InvalidArgument("features must be a matrix")
        labels = np.asarray(labels, dtype=np.float64)
        if labels.shape != (features.shape[0],):
            raise InvalidArgument("labels must have one entry per row")
        if l2 < 0:
            raise InvalidArgument("l2 must be non-negative")
        self.features = features
        self.labels = np.where(labels > 0, 1.0, -1.0)
        self.l2 = float(l2)
        self.n_samples, self.dim = features.shape
        self.meta = meta if meta is not None else ProblemMeta()
        self.spec = spec
        self.fstar_table = fstar_table
        self._check_meta()

    def _loss_grad(self, w, A, y):
        z = y * (A @ w)
        loss = float(np.mean(np.logaddexp(0.0, -z)))
        coef = -y * expit(-z) / y.shape[0]
        grad = np.asarray(A.T @ coef).ravel()
        if self.l2:
            loss += 0.5 * self.l2 * float(w @ w)
            grad = grad + self.l2 * w
        return loss, grad

    def value_and_grad(self, x):
        return self._loss_grad(self._check_x(x), self.features, self.labels)

    def batch_value_and_grad(self, x, batch):
        x = self._check_x(x)
        batch = self._check_batch(batch)
        return self._loss_grad(x, self.features[batch], self.labels[batch])

    def margins(self, w):
        return self.labels * (self.features @ as_vector(w, self.dim))


class PolyhedralProblem(Problem):
    """``f(x) = ||x||_inf`` with minimizer 0.

    The subgradient returned is ``sign(x_i) e_i`` for the first index
    attaining the maximum, so its norm is at most 1.
    """

    G = 1.0

    def __init__(self, dim, spec=None):
        if dim < 1:
            raise InvalidArgument("dim must be positive")
        self.dim = int(dim)
        self.meta = ProblemMeta(fstar=0.0, minimizer=np.zeros(self.dim))
        self.spec = spec if spec is not None else {"name": "polyhedral", "dim": self.dim}

    def value_and_grad(self, x):
        x = self._check_x(x)
        i = int(np.argmax(np.abs(x)))
        g = np.zeros(self.dim)
        g[i] = np.sign(x[i])
        return float(abs(x[i])), g


# -- generators ---------------------------------------------------------------


def _orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def gen_least_squares(dim, kappa, seed, rows=None):
    """Least squares with ``cond(A^T A) = kappa`` and a planted zero-residual solution.

    Singular values of ``A`` are log-spaced in ``[kappa^-1/2, 1]`` so that
    ``L = 1`` and ``mu = 1/kappa``.
    """
    if dim < 2:
        raise InvalidArgument("dim must be at least 2")
    if not kappa >= 1:
        raise InvalidArgument("kappa must be at least 1")
    rows = dim if rows is None else int(rows)
    if rows < dim:
        raise InvalidArgument("rows must be at least dim")
    rng = np.random.default_rng(seed)
    sigma = np.logspace(0.0, -0.5 * math.log10(kappa), dim)
    U = _orthogonal(rng, rows)[:, :dim]
    V = _orthogonal(rng, dim)
    A = (U * sigma) @ V.T
    x_true = rng.standard_normal(dim)
    b = A @ x_true
    meta = ProblemMeta(fstar=0.0, lipschitz=1.0, strong_convexity=float(sigma[-1] ** 2),
                       minimizer=x_true)
    spec = {"name": "least_squares", "dim": int(dim), "kappa": float(kappa), "seed": int(seed)}
    if rows != dim:
        spec["rows"] = rows
    return QuadraticProblem(A, b, meta=meta, singular_values=sigma, spec=spec)


def gen_two_dim_quadratic(kappa):
    """``f(x, y) = 1/2 (x - 1)^2 + (kappa/2)(y + 1)^2``."""
    if not kappa >= 1:
        raise InvalidArgument("kappa must be at least 1")
    return QuadraticProblem.from_diagonal(
        [1.0, float(kappa)], [1.0, -1.0],
        spec={"name": "two_dim_quadratic", "kappa": float(kappa)})


def gen_logistic_synthetic(n, dim, margin, seed):
    """Linearly separable logistic regression data.

    Features are uniform on the unit sphere; points with
    ``|<w, a>| < margin`` around a random unit hyperplane ``w`` are rejected
    and redrawn. Labels alternate ``+1, -1, ...`` and each point is reflected
    through the origin if needed to lie on its label's side, so
    ``y_i <w, a_i> >= margin`` for every sample. The returned problem stores
    ``w`` as ``generator_hyperplane``.
    """
    if n < 2 or dim < 1:
        raise InvalidArgument("need n >= 2 and dim >= 1")
    if not 0 < margin <= 1:
        raise InvalidArgument("margin must lie in (0, 1]")
    if dim > 1 and margin == 1:
        raise InvalidArgument("margin 1 is only attainable in one dimension")
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(dim)
    w /= np.linalg.norm(w)
    kept, count = [], 0
    for _ in range(10_000):
        block = rng.standard_normal((2 * n, dim))
        block /= np.linalg.norm(block, axis=1, keepdims=True)
        block = block[np.abs(block @ w) >= margin]
        kept.append(block)
        count += block.shape[0]
        if count >= n:
            break
    else:
        raise InvalidArgument(f"margin {margin} leaves too few points in dimension {dim}")
    X = np.concatenate(kept)[:n]
    y = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    X *= (np.sign(X @ w) * y)[:, None]
    meta = ProblemMeta(fstar=0.0)
    spec = {"name": "logistic_synthetic", "n": int(n), "dim": int(dim),
            "margin": float(margin), "seed": int(seed)}
    problem = LogisticProblem(X, y, meta=meta, spec=spec)
    problem.generator_hyperplane = w
    return problem


def gen_logistic_overlap(n, dim, separation, seed):
    """Two overlapping Gaussian clusters: logistic regression without interpolation.

    Cluster means are ``+-separation * e_1``; labels follow the cluster, so
    points deep inside the other cluster cannot all be fit. ``fstar`` is the
    global minimum found by L-BFGS.
    """
    if n < 2 or dim < 1:
        raise InvalidArgument("need n >= 2 and dim >= 1")
    rng = np.random.default_rng(seed)
    y = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    X = rng.standard_normal((n, dim))
    X[:, 0] += separation * y
    problem = LogisticProblem(X, y)
    res = scipy.optimize.minimize(problem.value_and_grad, np.zeros(dim), jac=True,
                                  method="L-BFGS-B",
                                  options={"gtol": 1e-12, "ftol": 1e-15, "maxiter": 10000})
    problem.meta = ProblemMeta(fstar=float(res.fun), minimizer=res.x)
    problem.spec = {"name": "logistic_overlap", "n": int(n), "dim": int(dim),
                    "separation": float(separation), "seed": int(seed)}
    return problem


# -- LIBSVM --------------------------------------------------------------------


@dataclass
class Dataset:
    rows: scipy.sparse.csr_matrix
    labels: np.ndarray
    dim: int = field(default=None)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.rows.shape[0] != self.labels.shape[0]:
            raise InvalidArgument("row count and label count differ")
        if self.dim is None:
            self.dim = self.rows.shape[1]

    def __len__(self):
        return self.labels.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        a, b = self.rows.tocsr(), other.rows.tocsr()
        return (self.dim == other.dim and a.shape == b.shape
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(a.indptr, b.indptr)
                and np.array_equal(a.indices, b.indices)
                and np.array_equal(a.data, b.data))


def _lines(stream):
    if isinstance(stream, (bytes, bytearray)):
        stream = io.BytesIO(stream)
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    for raw in stream:
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        yield raw


def parse_libsvm(stream):
    """Parse LIBSVM text (``label idx:val ...``, 1-based indices).

    Accepts bytes, str, or a file-like object. Blank lines and ``#``
    comments are skipped.
    """
    labels, indptr, indices, data = [], [0], [], []
    for lineno, raw in enumerate(_lines(stream), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            labels.append(float(tokens[0]))
        except ValueError:
            raise ParseError(f"bad label {tokens[0]!r}", lineno) from None
        prev = 0
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise ParseError(f"token {tok!r} is not idx:val", lineno)
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise ParseError(f"non-numeric token {tok!r}", lineno) from None
            if idx < 1:
                raise ParseError(f"index {idx} is below 1", lineno)
            if idx <= prev:
                raise ParseError(f"index {idx} does not increase", lineno)
            if not math.isfinite(val):
                raise ParseError(f"non-finite value in {tok!r}", lineno)
            prev = idx
            indices.append(idx - 1)
            data.append(val)
        indptr.append(len(indices))
    if not labels:
        raise ParseError("empty file", 1)
    dim = max(indices) + 1 if indices else 0
    rows = scipy.sparse.csr_matrix(
        (np.array(data, dtype=np.float64), np.array(indices, dtype=np.int64),
         np.array(indptr, dtype=np.int64)),
        shape=(len(labels), dim))
    return Dataset(rows, np.array(labels), dim)


def serialize_libsvm(dataset):
    """Inverse of :func:`parse_libsvm`, with 17 significant digits."""
    rows = dataset.rows.tocsr()
    out = []
    for i, label in enumerate(dataset.labels):
        lo, hi = rows.indptr[i], rows.indptr[i + 1]
        parts = [f"{label:.17g}"]
        parts += [f"{j + 1}:{v:.17g}" for j, v in zip(rows.indices[lo:hi], rows.data[lo:hi])]
        out.append(" ".join(parts))
    return ("\n".join(out) + "\n").encode("utf-8")


def logistic_from_dataset(dataset, l2=0.0, spec=None):
    return LogisticProblem(dataset.rows, dataset.labels, l2=l2, spec=spec)


# -- JSON problem specs ----------------------------------------------------------

_GENERATORS = {
    "least_squares": lambda p: gen_least_squares(p["dim"], p["kappa"], p["seed"], p.get("rows")),
    "two_dim_quadratic": lambda p: gen_two_dim_quadratic(p["kappa"]),
    "logistic_synthetic": lambda p: gen_logistic_synthetic(p["n"], p["dim"], p["margin"], p["seed"]),
    "logistic_overlap": lambda p: gen_logistic_overlap(p["n"], p["dim"], p["separation"], p["seed"]),
    "polyhedral": lambda p: PolyhedralProblem(p["dim"]),
}


def _load_libsvm(p):
    with open(p["path"], "rb") as fh:
        ds = parse_libsvm(fh)
    return logistic_from_dataset(ds, l2=p.get("l2", 0.0), spec=dict(p))


_GENERATORS["libsvm"] = _load_libsvm

PROBLEM_NAMES = tuple(sorted(_GENERATORS))


def make_problem(spec):
    """Build a problem from its JSON description ``{"name": ..., **params}``."""
    name = spec.get("name")
    if name not in _GENERATORS:
        raise InvalidArgument(f"unknown problem {name!r}; expected one of {PROBLEM_NAMES}")
    try:
        return _GENERATORS[name](spec)
    except KeyError as exc:
        raise InvalidArgument(f"problem {name!r} is missing parameter {exc.args[0]!r}") from None
