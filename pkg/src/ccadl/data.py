"""Datasets, file ingestion, synthetic generators and minibatch draws."""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace as dc_replace

import numpy as np


class DataFormatError(ValueError):
    """Malformed input file; the message carries the offending location."""


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray | None = None
    provenance: str = ""
    projection: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise ValueError("features must be a 2-D array")
        X.setflags(write=False)
        object.__setattr__(self, "features", X)
        if self.labels is not None:
            y = np.asarray(self.labels)
            if y.shape != (X.shape[0],):
                raise ValueError("one label per record required")
            y.setflags(write=False)
            object.__setattr__(self, "labels", y)

    @property
    def N(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class Minibatch:
    indices: np.ndarray
    N: int

    @property
    def n(self) -> int:
        return len(self.indices)

    @property
    def scale(self) -> float:
        return self.N / self.n


def subset_indices(u: np.ndarray, N: int) -> np.ndarray:
    """Partial Fisher-Yates shuffle of ``range(N)`` driven by uniforms ``u``.

    The first ``len(u)`` positions of the shuffled range form a uniformly
    random ordered subset without replacement.
    """
    perm = np.arange(N)
    for j, uj in enumerate(u):
        k = j + int(uj * (N - j))
        perm[j], perm[k] = perm[k], perm[j]
    return perm[: len(u)].copy()


def draw_minibatch(rng: np.random.Generator, N: int, n: int, replace: bool = False) -> Minibatch:
    """Draw ``n`` record indices out of ``N``.

    Consumes exactly ``n`` uniforms from ``rng`` either way, so batch draws
    can be reproduced in bulk from the same stream.
    """
    if not 1 <= n <= N:
        raise ValueError(f"minibatch size n={n} must lie in [1, N={N}]")
    u = rng.random(n)
    if replace:
        idx = (u * N).astype(np.int64)
    else:
        idx = subset_indices(u, N)
    return Minibatch(idx, N)


# ---------------------------------------------------------------------------
# file formats


def load_dense_csv(path, label_column: bool = False, header: bool = False,
                   remap_binary: bool = False) -> Dataset:
    """Read comma-separated reals; ``#`` lines are comments.

    With ``label_column`` the last column holds the labels.
    """
    rows = []
    width = None
    with open(path, encoding="utf-8") as fh:
        seen_header = not header
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if not seen_header:
                seen_header = True
                continue
            fields = line.split(",")
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise DataFormatError(
                    f"{path}:{lineno}: expected {width} fields, found {len(fields)}"
                )
            try:
                rows.append([float(f) for f in fields])
            except ValueError:
                bad = next(f for f in fields if not _is_float(f))
                raise DataFormatError(f"{path}:{lineno}: non-numeric field {bad!r}") from None
    if not rows:
        raise DataFormatError(f"{path}: no records")
    arr = np.array(rows, dtype=float)
    if label_column:
        if arr.shape[1] < 2:
            raise DataFormatError(f"{path}: label column requested but only one column")
        labels = arr[:, -1]
        if remap_binary:
            labels = _remap_binary(labels, path)
        return Dataset(arr[:, :-1], labels, provenance=f"csv:{path}")
    return Dataset(arr, provenance=f"csv:{path}")


def write_dense_csv(path, dataset: Dataset, comment: str | None = None) -> None:
    X = dataset.features
    if dataset.labels is not None:
        X = np.column_stack((X, dataset.labels))
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    np.savetxt(buf, X, delimiter=",", fmt="%.17g")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(buf.getvalue())


def load_libsvm(path, n_features: int | None = None, remap_binary: bool = False) -> Dataset:
    """Parse ``label idx:val ...`` lines with 1-based feature indices."""
    labels, rows = [], []
    max_idx = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0]
            if not body.strip():
                continue
            tokens = body.split()
            try:
                labels.append(float(tokens[0]))
            except ValueError:
                raise DataFormatError(
                    f"{path}:{lineno}:{line.index(tokens[0]) + 1}: bad label {tokens[0]!r}"
                ) from None
            row = {}
            pos = line.index(tokens[0]) + len(tokens[0])
            for tok in tokens[1:]:
                col = line.index(tok, pos) + 1
                pos = col - 1 + len(tok)
                idx_s, sep, val_s = tok.partition(":")
                try:
                    if not sep:
                        raise ValueError
                    idx, val = int(idx_s), float(val_s)
                except ValueError:
                    raise DataFormatError(f"{path}:{lineno}:{col}: malformed token {tok!r}") from None
                if idx < 1:
                    raise DataFormatError(f"{path}:{lineno}:{col}: index {idx} is not 1-based")
                if idx in row:
                    raise DataFormatError(f"{path}:{lineno}:{col}: duplicate index {idx}")
                row[idx] = val
                max_idx = max(max_idx, idx)
            rows.append(row)
    if not rows:
        raise DataFormatError(f"{path}: no records")
    d = max_idx if n_features is None else n_features
    if max_idx > d:
        raise DataFormatError(f"{path}: index {max_idx} exceeds n_features={d}")
    X = np.zeros((len(rows), d))
    for i, row in enumerate(rows):
        for idx, val in row.items():
            X[i, idx - 1] = val
    y = np.array(labels)
    if remap_binary:
        y = _remap_binary(y, path)
    return Dataset(X, y, provenance=f"libsvm:{path}")


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _remap_binary(labels, path="") -> np.ndarray:
    vals = set(np.unique(labels).tolist())
    if vals <= {0.0, 1.0}:
        return np.where(labels > 0, 1.0, -1.0)
    if vals <= {-1.0, 1.0}:
        return np.asarray(labels, dtype=float)
    raise DataFormatError(f"{path}: labels {sorted(vals)} are not binary")


# ---------------------------------------------------------------------------
# generators


def synth_gaussian(rng: np.random.Generator, N: int, mean: float = 0.0, sd: float = 1.0) -> Dataset:
    if sd <= 0:
        raise ValueError("sd must be positive")
    x = mean + sd * rng.standard_normal(N)
    return Dataset(x, provenance=f"synthetic normal(mean={mean}, sd={sd}), N={N}")


def synth_two_class(rng: np.random.Generator, N: int, d: int, separation: float,
                    scales=None) -> Dataset:
    """Two Gaussian blobs centred at +-(separation/2) e_1, labels +-1.

    Within-class noise is independent with per-feature standard deviations
    ``scales`` (default ones).
    """
    if d < 1 or separation < 0:
        raise ValueError("need d >= 1 and separation >= 0")
    sd = np.ones(d) if scales is None else np.broadcast_to(np.asarray(scales, float), (d,))
    if np.any(sd <= 0):
        raise ValueError("feature scales must be positive")
    y = np.where(np.arange(N) < (N + 1) // 2, 1.0, -1.0)
    y = y[rng.permutation(N)]
    X = rng.standard_normal((N, d)) * sd
    X[:, 0] += 0.5 * separation * y
    return Dataset(X, y, provenance=f"synthetic two-class N={N} d={d} sep={separation}")


def random_projection(rng: np.random.Generator, dataset: Dataset, k: int,
                      identity: bool = False, matrix: np.ndarray | None = None) -> Dataset:
    """Project features with a ``k x d`` matrix of N(0, 1/k) entries.

    The matrix is kept on the result so the same map can be applied to a
    test set via ``matrix=``.
    """
    d = dataset.d
    if k > d:
        raise ValueError(f"projection dimension k={k} exceeds d={d}")
    if matrix is None:
        matrix = np.eye(d) if identity else rng.standard_normal((k, d)) / np.sqrt(k)
    matrix = np.asarray(matrix, dtype=float)
    if matrix.shape[1] != d:
        raise ValueError("projection matrix does not match feature dimension")
    return dc_replace(dataset, features=dataset.features @ matrix.T, projection=matrix,
                      provenance=f"{dataset.provenance} | projected to k={matrix.shape[0]}")
