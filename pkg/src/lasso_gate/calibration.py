"""Monte-Carlo calibration of activation-count penalty thresholds.

For a covariance factor and sample size, each null replicate draws an
independent standard-normal response and a marker matrix with the
factor's covariance, standardizes both exactly like real data, and
records the largest penalty at which the fitted active count first
exceeds each requested r. The calibrated lambda_r is the
ceil((1 - alpha) * (M + 1))-th order statistic of those per-replicate
thresholds, the classical Monte-Carlo quantile convention that makes
the exceedance probability at most alpha for continuous statistics.

Two refinements keep the calibrated size on target (both verified
against fresh-sample exceedance rates in the test suite):

* r = 0 uses the exact activation boundary 2 * max|x_j . y| per
  replicate rather than a grid value: the all-zero fit is stationary
  above it and strictly not below it, so no descent is needed;
* r >= 1 thresholds interpolate to the geometric midpoint of the grid
  step bracketing the first exceedance, removing the half-step
  downward bias a raw grid snap would introduce.

Simulated responses are standardized (centered and scaled) like the
test phase standardizes real responses; leaving them raw makes the
calibrated thresholds conservative by a factor of the response's
sample sd spread and the realized test size lands near 0.017 instead
of alpha = 0.05 at the default design size.

Every table carries a mandatory fresh-batch validation: observed
exceedance rates at the calibrated thresholds on replicates the
calibration never saw, with the acceptance band
alpha +- 3 * sqrt(alpha * (1 - alpha) / V).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import solver
from .data import (
    RngSpec,
    SpectralFactor,
    fingerprint,
    SD_FLOOR,
)
from .errors import (
    ConstantColumn,
    DegenerateResponse,
    InsufficientReplicates,
    IoFailure,
    FingerprintMismatch,
)

PRODUCTION_MIN_REPLICATES = 10_000
MIN_REPLICATES = 100
DEFAULT_VALIDATION_REPLICATES = 2_000
ZERO_PENALTY_EVAL_RATIO = 1e-6

_FORMAT_TAG = "lasso-gate calibration table"


@dataclass(frozen=True)
class CalibrationEntry:
    """One calibrated threshold with its fresh-batch exceedance rate."""

    r: int
    lambda_r: float
    exceedance_rate: float


@dataclass(frozen=True)
class CalibrationTable:
    """Calibrated penalty thresholds for one covariance model.

    ``flags`` records, per r, how many calibration replicates never
    exceeded r on the grid (threshold recorded as 0.0) and how many
    showed the active count falling back after first exceedance
    (non-monotone activation along the path).
    """

    alpha: float
    replicates: int
    rng: RngSpec
    n: int
    p: int
    factor_fingerprint: str
    entries: tuple[CalibrationEntry, ...]
    validation_replicates: int
    validated: bool
    flags: tuple[tuple[int, int, int], ...] = ()

    def r_values(self) -> tuple[int, ...]:
        return tuple(e.r for e in self.entries)

    def entry_for(self, r: int) -> CalibrationEntry:
        for e in self.entries:
            if e.r == r:
                return e
        raise ValueError(f"table has no entry for r={r}")

    def size_band(self) -> tuple[float, float]:
        """alpha +- 3 mc-se band the validation rates are held to."""
        half = 3.0 * math.sqrt(
            self.alpha * (1.0 - self.alpha) / self.validation_replicates
        )
        return self.alpha - half, self.alpha + half


def calibration_quantile(values, alpha: float) -> float:
    """k-th order statistic with k = ceil((1 - alpha) * (m + 1)).

    alpha = 0.05 with m = 19 picks the sample maximum. Raises
    :class:`InsufficientReplicates` when k exceeds m. The ceil gets a
    1e-9 downward nudge so float products landing epsilon above an
    exact integer cannot shift k by one.
    """
    v = np.sort(np.asarray(values, dtype=np.float64))
    m = v.shape[0]
    if m == 0:
        raise ValueError("need at least one value")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    k = math.ceil((1.0 - alpha) * (m + 1) - 1e-9)
    if k > m:
        raise InsufficientReplicates(
            f"order statistic {k} of {m} replicates does not exist; "
            f"need at least {k} replicates at alpha={alpha:g}"
        )
    return float(v[k - 1])


def _null_draw(
    factor: SpectralFactor, n: int, gen: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """One standardized null replicate: (y, x-transposed).

    Draw order is fixed (response first, then markers) and shared by
    calibration, validation, and the r = 0 oracle, so identical
    streams give identical replicates everywhere.
    """
    y = gen.standard_normal(n)
    z = gen.standard_normal((n, factor.d.shape[0]))
    x = (z * factor.d) @ factor.o.T
    sd = x.std(axis=0, ddof=1)
    bad = np.flatnonzero(sd < SD_FLOOR)
    if bad.size:
        raise ConstantColumn(int(bad[0]))
    y_sd = y.std(ddof=1)
    if y_sd < SD_FLOOR:
        raise DegenerateResponse("simulated response is constant")
    xs = (x - x.mean(axis=0)) / sd
    ys = (y - y.mean()) / y_sd
    return ys, np.ascontiguousarray(xs.T)


def _thread_map(worker, count: int, threads: int) -> list:
    """Index-ordered map over range(count), optionally threaded."""
    workers = threads if threads > 0 else (os.cpu_count() or 1)
    if workers == 1:
        return [worker(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker, range(count)))


def _entry_values(
    factor: SpectralFactor,
    n: int,
    rs: np.ndarray,
    rng: RngSpec,
    replicate: int,
    grid_points: int,
    grid_floor: float,
    tol_cd: float,
    tol_kkt: float,
    max_sweeps: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-replicate entry thresholds for all requested r (ascending)."""
    y, xt = _null_draw(factor, n, rng.substream(replicate).generator())
    col_norms = np.einsum("ji,ji->j", xt, xt)
    lam_max = 2.0 * solver.max_abs_correlation(xt, y)
    p = xt.shape[0]
    out = np.zeros(rs.shape[0])
    never = np.zeros(rs.shape[0], dtype=bool)
    fell = np.zeros(rs.shape[0], dtype=bool)
    out[rs == 0] = lam_max
    # r >= p can never be exceeded (u <= p): threshold stays 0, no scan
    scan_mask = (rs >= 1) & (rs < p)
    never[rs >= p] = True
    targets = rs[scan_mask]
    if targets.size and lam_max > 0.0:
        grid = solver.lambda_grid(lam_max, grid_points, grid_floor)
        hit, dropped = solver.scan_entries(
            xt,
            col_norms,
            y,
            grid,
            targets,
            tol_cd=tol_cd,
            tol_kkt=tol_kkt,
            max_sweeps=max_sweeps,
        )
        vals = np.zeros(targets.shape[0])
        for k, gi in enumerate(hit):
            if gi < 0:
                continue
            # first exceedance at grid[gi]; the boundary lies inside
            # (grid[gi], grid[gi-1]): take the log-scale midpoint
            vals[k] = (
                math.sqrt(grid[gi] * grid[gi - 1]) if gi >= 1 else float(grid[0])
            )
        out[scan_mask] = vals
        never[scan_mask] = hit < 0
        fell[scan_mask] = dropped
    elif targets.size:
        never[scan_mask] = True
    return out, never, fell


def _observed_rates(
    pairs: list[tuple[int, float]],
    factor: SpectralFactor,
    n: int,
    replicates: int,
    rng: RngSpec,
    threads: int,
    tol_cd: float,
    tol_kkt: float,
    max_sweeps: int,
) -> list[tuple[int, float]]:
    """Fresh-sample exceedance rates P(u(lambda_r) > r) per (r, lambda_r).

    A zero threshold is evaluated at lambda_max * 1e-6, the saturated
    small-penalty limit: the exactly unpenalized problem is
    underdetermined for p >= n.
    """
    rs = np.array([r for r, _ in pairs], dtype=np.int64)
    lams = np.array([lam for _, lam in pairs], dtype=np.float64)
    order = np.argsort(-lams, kind="stable")

    def worker(m: int) -> np.ndarray:
        y, xt = _null_draw(factor, n, rng.substream(m).generator())
        col_norms = np.einsum("ji,ji->j", xt, xt)
        lam_eval = lams.copy()
        if np.any(lam_eval <= 0.0):
            lam_max = 2.0 * solver.max_abs_correlation(xt, y)
            lam_eval[lam_eval <= 0.0] = lam_max * ZERO_PENALTY_EVAL_RATIO
        counts = solver.counts_at(
            xt,
            col_norms,
            y,
            lam_eval[order],
            tol_cd=tol_cd,
            tol_kkt=tol_kkt,
            max_sweeps=max_sweeps,
        )
        exceed = np.zeros(rs.shape[0], dtype=np.int64)
        exceed[order] = counts > rs[order]
        return exceed

    hits = np.zeros(rs.shape[0], dtype=np.int64)
    for exceed in _thread_map(worker, replicates, threads):
        hits += exceed
    return [(int(r), float(h) / replicates) for r, h in zip(rs, hits)]


def calibrate(
    factor: SpectralFactor,
    n: int,
    r_values,
    alpha: float,
    replicates: int,
    rng: RngSpec,
    *,
    validation_replicates: int = DEFAULT_VALIDATION_REPLICATES,
    grid_points: int = solver.DEFAULT_GRID_POINTS,
    grid_floor: float = solver.DEFAULT_GRID_FLOOR,
    threads: int = 0,
    allow_small: bool = False,
    tol_cd: float = solver.DEFAULT_TOL_CD,
    tol_kkt: float = solver.DEFAULT_TOL_KKT,
    max_sweeps: int = solver.DEFAULT_MAX_SWEEPS,
) -> CalibrationTable:
    """Calibrate lambda_r for each requested r under the null.

    Replicate m draws from rng.substream(m); the mandatory validation
    batch uses substreams replicates .. replicates + V - 1, disjoint
    from calibration by construction. Tables meant for real decisions
    need replicates >= 10000; smaller runs require allow_small=True
    and are meant for tests and smoke checks. The returned table's
    ``validated`` flag says whether every fresh-batch exceedance rate
    landed inside the alpha +- 3 mc-se band.
    """
    rs = np.array(sorted(set(int(r) for r in r_values)), dtype=np.int64)
    if rs.size == 0:
        raise ValueError("need at least one r value")
    if rs[0] < 0:
        raise ValueError("r values must be non-negative")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if n < 3:
        raise ValueError("need n >= 3")
    if replicates < MIN_REPLICATES:
        raise ValueError(f"need at least {MIN_REPLICATES} calibration replicates")
    if replicates < PRODUCTION_MIN_REPLICATES and not allow_small:
        raise ValueError(
            f"production tables need >= {PRODUCTION_MIN_REPLICATES} replicates; "
            "pass allow_small=True to build a downgraded table"
        )
    if validation_replicates < MIN_REPLICATES:
        raise ValueError(f"need at least {MIN_REPLICATES} validation replicates")
    # fail before simulating if the order statistic cannot exist
    calibration_quantile(np.zeros(replicates), alpha)

    def worker(m: int):
        return _entry_values(
            factor,
            n,
            rs,
            rng,
            m,
            grid_points,
            grid_floor,
            tol_cd,
            tol_kkt,
            max_sweeps,
        )

    thresholds = np.empty((replicates, rs.shape[0]))
    never_counts = np.zeros(rs.shape[0], dtype=np.int64)
    fell_counts = np.zeros(rs.shape[0], dtype=np.int64)
    for m, (vals, never, fell) in enumerate(_thread_map(worker, replicates, threads)):
        thresholds[m] = vals
        never_counts += never
        fell_counts += fell

    lambdas = [calibration_quantile(thresholds[:, k], alpha) for k in range(rs.shape[0])]
    pairs = list(zip((int(r) for r in rs), lambdas))
    rates = dict(
        _observed_rates(
            pairs,
            factor,
            n,
            validation_replicates,
            rng.substream(replicates),
            threads,
            tol_cd,
            tol_kkt,
            max_sweeps,
        )
    )
    entries = tuple(
        CalibrationEntry(r=r, lambda_r=lam, exceedance_rate=rates[r])
        for r, lam in pairs
    )
    half = 3.0 * math.sqrt(alpha * (1.0 - alpha) / validation_replicates)
    validated = all(abs(e.exceedance_rate - alpha) <= half for e in entries)
    return CalibrationTable(
        alpha=alpha,
        replicates=replicates,
        rng=rng,
        n=n,
        p=int(factor.d.shape[0]),
        factor_fingerprint=fingerprint(factor, n),
        entries=entries,
        validation_replicates=validation_replicates,
        validated=validated,
        flags=tuple(
            (int(r), int(nv), int(fl))
            for r, nv, fl in zip(rs, never_counts, fell_counts)
        ),
    )


def validate_size(
    table: CalibrationTable,
    factor: SpectralFactor,
    n: int,
    replicates: int,
    rng: RngSpec,
    *,
    threads: int = 0,
    tol_cd: float = solver.DEFAULT_TOL_CD,
    tol_kkt: float = solver.DEFAULT_TOL_KKT,
    max_sweeps: int = solver.DEFAULT_MAX_SWEEPS,
) -> list[tuple[int, float]]:
    """Observed exceedance rates of a table's thresholds on fresh nulls.

    The factor must match the table's fingerprint; use a stream
    disjoint from the one that built the table for an honest check.
    """
    if replicates < MIN_REPLICATES:
        raise ValueError(f"need at least {MIN_REPLICATES} validation replicates")
    fp = fingerprint(factor, n)
    if fp != table.factor_fingerprint:
        raise FingerprintMismatch(
            f"factor fingerprint {fp} does not match table {table.factor_fingerprint}"
        )
    pairs = [(e.r, e.lambda_r) for e in table.entries]
    return _observed_rates(
        pairs, factor, n, replicates, rng, threads, tol_cd, tol_kkt, max_sweeps
    )


def save_calibration_csv(table: CalibrationTable, path: str | Path) -> None:
    """Write a table as CSV with provenance in # comment lines."""
    from . import __version__

    lines = [
        f"# {_FORMAT_TAG}",
        f"# version={__version__}",
        f"# alpha={table.alpha!r}",
        f"# replicates={table.replicates}",
        f"# seed={table.rng.seed}",
        f"# stream={table.rng.stream}",
        f"# n={table.n}",
        f"# p={table.p}",
        f"# factor_fingerprint={table.factor_fingerprint}",
        f"# validation_replicates={table.validation_replicates}",
        f"# validated={int(table.validated)}",
    ]
    for r, never, fell in table.flags:
        lines.append(f"# flags r={r} never={never} fell_back={fell}")
    lines.append("r,lambda_r,exceedance_rate")
    for e in table.entries:
        lines.append(f"{e.r},{e.lambda_r!r},{e.exceedance_rate!r}")
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_calibration_csv(path: str | Path) -> CalibrationTable:
    """Read a table written by :func:`save_calibration_csv`."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    meta: dict[str, str] = {}
    flags: list[tuple[int, int, int]] = []
    entries: list[CalibrationEntry] = []
    saw_header = False
    for ln, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("flags "):
                parts = dict(kv.split("=", 1) for kv in body[6:].split())
                flags.append(
                    (int(parts["r"]), int(parts["never"]), int(parts["fell_back"]))
                )
            elif "=" in body:
                key, _, val = body.partition("=")
                meta[key.strip()] = val.strip()
            continue
        if not saw_header:
            if line != "r,lambda_r,exceedance_rate":
                raise ValueError(f"{path}:{ln}: unexpected header {line!r}")
            saw_header = True
            continue
        fields = line.split(",")
        if len(fields) != 3:
            raise ValueError(f"{path}:{ln}: expected 3 fields")
        entries.append(
            CalibrationEntry(
                r=int(fields[0]),
                lambda_r=float(fields[1]),
                exceedance_rate=float(fields[2]),
            )
        )
    required = {
        "alpha",
        "replicates",
        "seed",
        "stream",
        "n",
        "p",
        "factor_fingerprint",
        "validation_replicates",
        "validated",
    }
    missing = required - meta.keys()
    if missing:
        raise ValueError(f"{path}: missing metadata keys {sorted(missing)}")
    if not entries:
        raise ValueError(f"{path}: no table rows")
    return CalibrationTable(
        alpha=float(meta["alpha"]),
        replicates=int(meta["replicates"]),
        rng=RngSpec(int(meta["seed"]), int(meta["stream"])),
        n=int(meta["n"]),
        p=int(meta["p"]),
        factor_fingerprint=meta["factor_fingerprint"],
        entries=tuple(entries),
        validation_replicates=int(meta["validation_replicates"]),
        validated=bool(int(meta["validated"])),
        flags=tuple(flags),
    )
