"""LIBSVM ingestion, row normalization, row distribution and synthetic problems."""

from __future__ import annotations

import gzip
import io
import os
import warnings

import numpy as np
import scipy.sparse as sp

from .errors import ParseError
from .losses import L2, ElasticNet, get_loss
from .problem import ErmProblem, build_even_partition, partition_matrix

GZIP_MAGIC = b"\x1f\x8b"


def _open_text(source):
    """Text stream for a path, a bytes/text stream, or raw bytes; gzip is detected by magic."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            raw = fh.read()
    elif isinstance(source, (bytes, bytearray)):
        raw = bytes(source)
    elif isinstance(source, io.TextIOBase):
        return source
    else:
        raw = source.read()
        if isinstance(raw, str):
            return io.StringIO(raw)
    if raw[:2] == GZIP_MAGIC:
        raw = gzip.decompress(raw)
    return io.StringIO(raw.decode("utf-8"))


def parse_libsvm(source, d=None):
    """Parse LIBSVM text into ``(labels, X)`` with ``X`` a CSR matrix.

    Feature indices are 1-based and must be strictly ascending within a
    line.  ``d`` overrides the width (it may not be smaller than the largest
    index seen).  Blank lines are skipped.
    """
    labels, indptr, cols, vals = [], [0], [], []
    max_idx = 0
    for lineno, line in enumerate(_open_text(source), start=1):
        tokens = line.split()
        if not tokens:
            continue
        try:
            labels.append(float(tokens[0]))
        except ValueError:
            raise ParseError(f"bad label {tokens[0]!r}", lineno) from None
        if ":" in tokens[0]:
            raise ParseError("missing label", lineno)
        prev = 0
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise ParseError(f"malformed token {tok!r}", lineno)
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise ParseError(f"malformed token {tok!r}", lineno) from None
            if idx < 1:
                raise ParseError(f"feature index {idx} is not 1-based", lineno)
            if idx <= prev:
                raise ParseError(f"feature indices not ascending at {idx}", lineno)
            prev = idx
            cols.append(idx - 1)
            vals.append(val)
        max_idx = max(max_idx, prev)
        indptr.append(len(cols))
    if not labels:
        raise ParseError("no examples found", 1)
    if d is None:
        d = max_idx
    elif d < max_idx:
        raise ParseError(f"dimension override {d} below largest index {max_idx}")
    X = sp.csr_matrix((np.array(vals, dtype=float), np.array(cols, dtype=np.int64), np.array(indptr)),
                      shape=(len(labels), d))
    return np.array(labels), X


def _fmt(x):
    x = float(x)
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def serialize_libsvm(labels, X, stream=None):
    """Write LIBSVM text with shortest round-trip float formatting."""
    X = sp.csr_matrix(X)
    X.sort_indices()
    lines = []
    for r, y in enumerate(labels):
        lo, hi = X.indptr[r], X.indptr[r + 1]
        feats = " ".join(f"{c + 1}:{_fmt(v)}" for c, v in zip(X.indices[lo:hi], X.data[lo:hi]))
        lines.append(f"{_fmt(y)} {feats}".rstrip())
    text = "\n".join(lines) + "\n"
    if stream is not None:
        stream.write(text)
    return text


def normalize_rows(X):
    """Scale every nonzero row to unit Euclidean norm; zero rows are kept and warned about."""
    X = sp.csr_matrix(X, dtype=float, copy=True)
    norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        warnings.warn(f"{zero.size} zero row(s) left unnormalized: {zero[:10].tolist()}", RuntimeWarning,
                      stacklevel=2)
    scale = np.where(norms > 0, 1.0 / np.where(norms > 0, norms, 1.0), 1.0)
    return sp.csr_matrix(sp.diags(scale) @ X)


def distribute_rows(labels, m, order="shuffled", seed=0):
    """Row permutation and contiguous ``m``-way partition of the permuted rows.

    ``order`` is ``"shuffled"`` (seeded), ``"sorted_by_label"`` (stable sort,
    ascending label) or ``"as_is"``.
    """
    labels = np.asarray(labels)
    N = labels.size
    if order == "as_is":
        perm = np.arange(N)
    elif order in ("sorted_by_label", "sorted"):
        perm = np.argsort(labels, kind="stable")
    elif order == "shuffled":
        perm = np.random.default_rng(seed).permutation(N)
    else:
        raise ValueError(f"unknown row order {order!r}")
    return perm, build_even_partition(N, m)


def make_problem(X, labels, m, n, loss="quadratic", lam=0.1, order="as_is", seed=0, l1=0.0):
    """Distribute rows over ``m`` workers and columns over ``n`` servers' blocks."""
    X = sp.csr_matrix(X, dtype=float)
    perm, row_part = distribute_rows(labels, m, order, seed)
    col_part = build_even_partition(X.shape[1], n)
    data = partition_matrix(X[perm], row_part, col_part)
    reg = ElasticNet(lam, l1) if l1 else L2(lam)
    loss = get_loss(loss) if isinstance(loss, str) else loss
    return ErmProblem(data, np.asarray(labels, dtype=float)[perm], loss, reg)


def synth_data(N, d, loss="quadratic", seed=0, planted_w=None, noise=0.1):
    """Gaussian rows normalized to unit length and labels from a planted model.

    Regression labels are ``x^T w + noise``; classification labels are the
    sign of the same quantity (ties go to +1).
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((N, d))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    if planted_w is None:
        planted_w = rng.standard_normal(d) * np.sqrt(d / 4.0)
    planted_w = np.broadcast_to(np.asarray(planted_w, dtype=float), (d,))
    t = X @ planted_w + noise * rng.standard_normal(N)
    name = loss if isinstance(loss, str) else loss.name
    y = t if name == "quadratic" else np.where(t >= 0, 1.0, -1.0)
    return X, y


def cluster_data(N, d, clusters, seed=0, noise=0.3):
    """Rows drawn around ``clusters`` random unit directions, in cluster order.

    The first half of the clusters is labelled +1 and the rest -1, so a
    label-sorted split with one worker per cluster gives every worker a
    nearly rank-one block of a single class.  Rows are normalized.
    """
    if N % clusters:
        raise ValueError("N must be a multiple of clusters")
    rng = np.random.default_rng(seed)
    means = rng.standard_normal((clusters, d))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    c = np.repeat(np.arange(clusters), N // clusters)
    X = means[c] + noise * rng.standard_normal((N, d)) / np.sqrt(d)
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    return X, np.where(c < clusters // 2, 1.0, -1.0)


def synth_problem(N, d, m, n, loss="quadratic", lam=0.1, seed=0, planted_w=None, noise=0.1, order="as_is",
                  l1=0.0):
    """Deterministic synthetic :class:`ErmProblem`."""
    X, y = synth_data(N, d, loss, seed, planted_w, noise)
    return make_problem(X, y, m, n, loss, lam, order, seed, l1)
