"""Datasets, standardization, covariance factoring, and seeded sampling.

Conventions shared by every module here:

* sample moments always use the n - 1 divisor;
* a standardized dataset has zero-mean, unit-sd marker columns and a
  zero-mean, unit-sd response;
* all randomness flows through :class:`RngSpec`, so replicate k of any
  procedure can be regenerated in isolation and results never depend on
  how replicates were scheduled across threads.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConstantColumn,
    DegenerateResponse,
    IoFailure,
    NotSymmetric,
)

SD_FLOOR = 1e-12
_STD_TOL = 1e-10
_SYM_TOL = 1e-10
_EIG_FLOOR_REL = 1e-12
_FINGERPRINT_QUANTUM = 1e-6

_U64 = 0xFFFFFFFFFFFFFFFF
_U32 = 0xFFFFFFFF


@dataclass(frozen=True)
class RngSpec:
    """A seed plus a substream index, the root of all randomness.

    Substream k of a base spec (seed, stream) is (seed, stream + k).
    Each spec maps to an independent PCG64 generator, so work items
    indexed by substream give bit-identical results no matter how many
    worker threads consume them.
    """

    seed: int
    stream: int = 0

    def __post_init__(self):
        if self.stream < 0:
            raise ValueError("stream index must be non-negative")

    def generator(self) -> np.random.Generator:
        """Fresh generator for this (seed, stream) pair."""
        ss = np.random.SeedSequence(
            entropy=self.seed & _U64,
            spawn_key=(self.stream & _U32, (self.stream >> 32) & _U32),
        )
        return np.random.default_rng(ss)

    def substream(self, offset: int) -> "RngSpec":
        return RngSpec(self.seed, self.stream + offset)


@dataclass(frozen=True)
class Dataset:
    """Response vector y and n x p marker matrix x.

    ``standardized`` is only set by :func:`standardize` (or by callers
    whose arrays verifiably satisfy the invariant; ``from_arrays``
    re-checks it).
    """

    y: np.ndarray
    x: np.ndarray
    n: int
    p: int
    standardized: bool = False

    @classmethod
    def from_arrays(cls, y, x, standardized: bool = False) -> "Dataset":
        y = np.ascontiguousarray(y, dtype=np.float64)
        x = np.ascontiguousarray(x, dtype=np.float64)
        if y.ndim != 1 or x.ndim != 2:
            raise ValueError("y must be one-dimensional and x two-dimensional")
        n, p = x.shape
        if y.shape[0] != n:
            raise ValueError(f"y has {y.shape[0]} rows but x has {n}")
        if n < 3:
            raise ValueError("need at least 3 observations")
        if p < 1:
            raise ValueError("need at least one marker column")
        if not np.isfinite(y).all() or not np.isfinite(x).all():
            raise ValueError("non-finite entries in dataset")
        if standardized:
            _check_standardized(y, x)
        return cls(y=y, x=x, n=n, p=p, standardized=standardized)


def _check_standardized(y: np.ndarray, x: np.ndarray) -> None:
    if abs(y.mean()) > _STD_TOL or abs(y.std(ddof=1) - 1.0) > _STD_TOL:
        raise ValueError("response does not satisfy the standardized invariant")
    if np.abs(x.mean(axis=0)).max() > _STD_TOL:
        raise ValueError("column means violate the standardized invariant")
    if np.abs(x.std(axis=0, ddof=1) - 1.0).max() > _STD_TOL:
        raise ValueError("column sds violate the standardized invariant")


def standardize(raw: Dataset) -> Dataset:
    """Center and scale every marker column and the response.

    Sample sds use the n - 1 divisor. A marker column whose sd falls
    below 1e-12 raises :class:`ConstantColumn` (carrying the column
    index); a constant response raises :class:`DegenerateResponse`.
    Applying this to an already standardized dataset is a no-op up to
    rounding.
    """
    mu = raw.x.mean(axis=0)
    sd = raw.x.std(axis=0, ddof=1)
    bad = np.flatnonzero(sd < SD_FLOOR)
    if bad.size:
        raise ConstantColumn(int(bad[0]))
    y_sd = raw.y.std(ddof=1)
    if y_sd < SD_FLOOR:
        raise DegenerateResponse("response is constant within tolerance")
    xs = (raw.x - mu) / sd
    ys = (raw.y - raw.y.mean()) / y_sd
    return Dataset(y=ys, x=xs, n=raw.n, p=raw.p, standardized=True)


def sample_covariance(data: Dataset) -> np.ndarray:
    """p x p sample covariance of the marker columns (n - 1 divisor).

    Requires a standardized dataset, where this equals the sample
    correlation matrix with a unit diagonal. The result is explicitly
    symmetrized so downstream eigendecomposition never trips on float
    asymmetry from the matrix product.
    """
    if not data.standardized:
        raise ValueError("sample_covariance expects a standardized dataset")
    c = data.x.T @ data.x / (data.n - 1)
    return (c + c.T) / 2.0


@dataclass(frozen=True)
class SpectralFactor:
    """Sampling operator for a covariance: sigma = o @ diag(d**2) @ o.T.

    ``o`` holds orthonormal eigenvectors (columns, descending
    eigenvalue order), ``d`` the non-negative eigenvalue square roots,
    and ``source_rank`` the count of strictly positive entries of d
    after the clipping floor.
    """

    o: np.ndarray
    d: np.ndarray
    source_rank: int


def spectral_decompose(sigma: np.ndarray) -> SpectralFactor:
    """Factor a symmetric covariance into a :class:`SpectralFactor`.

    Eigenvalues are clipped below at zero; values within
    1e-12 * max(eigenvalue) of zero are treated as that floor, so the
    round-off rank deficiency of a wide-data sample covariance is not
    counted by ``source_rank``. Raises :class:`NotSymmetric` when the
    input is asymmetric beyond 1e-10.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ValueError("sigma must be a square matrix")
    gap = float(np.abs(sigma - sigma.T).max())
    if gap > _SYM_TOL:
        raise NotSymmetric(f"max asymmetry {gap:.3e} exceeds {_SYM_TOL:g}")
    w, o = np.linalg.eigh((sigma + sigma.T) / 2.0)
    w = w[::-1].copy()
    o = np.ascontiguousarray(o[:, ::-1])
    floor = _EIG_FLOOR_REL * max(float(w[0]), 0.0)
    w = np.where(w > floor, w, 0.0)
    return SpectralFactor(o=o, d=np.sqrt(w), source_rank=int(np.count_nonzero(w)))


def factor_rows(factor: SpectralFactor, gen: np.random.Generator, n: int) -> np.ndarray:
    """n rows x_i = o @ (d * z_i) drawn from an existing generator."""
    z = gen.standard_normal((n, factor.d.shape[0]))
    return (z * factor.d) @ factor.o.T


def correlated_normals(factor: SpectralFactor, n: int, rng: RngSpec) -> np.ndarray:
    """Draw n rows with population covariance o @ diag(d**2) @ o.T.

    Pure function of (factor, n, rng): safe to call concurrently with
    distinct streams, and repeated calls with equal arguments return
    identical arrays.
    """
    if n < 1:
        raise ValueError("need at least one row")
    return factor_rows(factor, rng.generator(), n)


def fingerprint(factor: SpectralFactor, n: int) -> str:
    """64-bit digest of (n, p, eigenvalue spectrum) as 16 hex chars.

    Eigenvalues are quantized at 1e-6 resolution, so factors equal up
    to tiny float noise collide while perturbations at or above 1e-3
    separate. Eigenvector rotations do not enter the digest: two
    factors sharing a spectrum are interchangeable for calibration of
    a rotation-invariant statistic.
    """
    lam = np.sort(factor.d.astype(np.float64) ** 2)[::-1]
    quantized = np.round(lam / _FINGERPRINT_QUANTUM).astype(np.int64)
    h = hashlib.blake2b(digest_size=8)
    h.update(np.array([n, factor.d.shape[0]], dtype="<i8").tobytes())
    h.update(quantized.astype("<i8").tobytes())
    return h.hexdigest()


def load_dataset_csv(path: str | Path) -> Dataset:
    """Read a dataset CSV: header row, response in the first column.

    Parsing is strict: every row must match the header width and every
    field must be a float. OS-level failures surface as
    :class:`IoFailure`, malformed content as ValueError with the
    offending line number.
    """
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise ValueError(f"{path}: empty file")
    width = len(rows[0])
    if width < 2:
        raise ValueError(f"{path}: need a response column and at least one marker")
    values = []
    for ln, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != width:
            raise ValueError(f"{path}:{ln}: expected {width} fields, got {len(row)}")
        try:
            values.append([float(v) for v in row])
        except ValueError:
            raise ValueError(f"{path}:{ln}: non-numeric field") from None
    if not values:
        raise ValueError(f"{path}: no data rows")
    arr = np.asarray(values, dtype=np.float64)
    return Dataset.from_arrays(arr[:, 0], arr[:, 1:])


def save_dataset_csv(data: Dataset, path: str | Path) -> None:
    """Write a dataset CSV that round-trips exactly through repr floats."""
    header = ["y"] + [f"x{j + 1}" for j in range(data.p)]
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(data.n):
                writer.writerow(
                    [repr(float(data.y[i]))] + [repr(float(v)) for v in data.x[i]]
                )
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
