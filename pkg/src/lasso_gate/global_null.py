"""The calibrated activation-count test of the global null.

The test statistic is u(lambda_r), the number of exactly nonzero
LASSO coefficients at the calibrated penalty for the chosen r, and
the decision is reject iff u > r (strict). It is a pure
significance gate: no p-value is defined, by design, because the
calibration fixes a single rejection threshold rather than a family.

The whole pipeline runs on standardized data (columns and response),
so decisions are invariant to affine changes of units in y and in
every marker. Calibration can be reused across datasets through a
:class:`CalibrationTable` whose covariance fingerprint matches;
otherwise it is run fresh, derived from the dataset's own sample
covariance spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from . import solver
from .calibration import (
    CalibrationTable,
    ZERO_PENALTY_EVAL_RATIO,
    calibrate,
)
from .data import Dataset, RngSpec, fingerprint, sample_covariance, spectral_decompose, standardize
from .errors import FingerprintMismatch, IoFailure
from .solver import LassoFit


@dataclass(frozen=True)
class TestOutcome:
    """Decision record for one dataset at one r."""

    r: int
    lambda_r: float
    u_observed: int
    reject: bool
    alpha: float
    factor_fingerprint: str
    fit: LassoFit


def run_global_test(
    raw: Dataset,
    r: int,
    alpha: float,
    replicates: int,
    rng: RngSpec,
    *,
    table: CalibrationTable | None = None,
    validation_replicates: int | None = None,
    threads: int = 0,
    allow_small: bool = False,
    grid_points: int = solver.DEFAULT_GRID_POINTS,
    grid_floor: float = solver.DEFAULT_GRID_FLOOR,
) -> TestOutcome:
    """Run the calibrated test of the global null on one dataset.

    Standardizes the data, derives the covariance factor, obtains
    lambda_r (from ``table`` when given and fingerprint-compatible,
    else by fresh calibration with ``replicates`` null draws), fits at
    lambda_r and rejects iff the active count strictly exceeds r.

    A table calibrated for a different covariance spectrum or sample
    size raises :class:`FingerprintMismatch`; a table missing the
    requested r, or disagreeing with ``alpha``, raises ValueError. A
    zero lambda_r (possible only when r >= p) is evaluated at the
    saturated small-penalty limit lambda_max * 1e-6, since the exactly
    unpenalized problem is underdetermined for p >= n.
    """
    if r < 0:
        raise ValueError("r must be non-negative")
    data = standardize(raw)
    factor = spectral_decompose(sample_covariance(data))
    fp = fingerprint(factor, data.n)
    if table is not None:
        if table.factor_fingerprint != fp:
            raise FingerprintMismatch(
                f"dataset fingerprint {fp} does not match table "
                f"{table.factor_fingerprint}"
            )
        if table.alpha != alpha:
            raise ValueError(
                f"table was calibrated at alpha={table.alpha:g}, requested {alpha:g}"
            )
        entry = table.entry_for(r)
    else:
        table = calibrate(
            factor,
            data.n,
            [r],
            alpha,
            replicates,
            rng,
            validation_replicates=(
                validation_replicates
                if validation_replicates is not None
                else min(2000, max(100, replicates // 5))
            ),
            grid_points=grid_points,
            grid_floor=grid_floor,
            threads=threads,
            allow_small=allow_small,
        )
        entry = table.entry_for(r)
    lam = entry.lambda_r
    if lam <= 0.0:
        lam = solver.lambda_max(data) * ZERO_PENALTY_EVAL_RATIO
    fit = solver.fit_lasso(data, lam)
    return TestOutcome(
        r=r,
        lambda_r=entry.lambda_r,
        u_observed=fit.u,
        reject=bool(fit.u > r),
        alpha=alpha,
        factor_fingerprint=fp,
        fit=fit,
    )


def append_outcome_csv(outcome: TestOutcome, path: str | Path) -> None:
    """Append one decision record; the header is written on creation."""
    from . import __version__

    path = Path(path)
    new_file = not path.exists()
    try:
        with open(path, "a") as fh:
            if new_file:
                fh.write(f"# lasso-gate test record version={__version__}\n")
                fh.write("r,lambda_r,u_observed,reject,alpha\n")
            fh.write(
                f"{outcome.r},{outcome.lambda_r!r},{outcome.u_observed},"
                f"{int(outcome.reject)},{outcome.alpha!r}\n"
            )
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


# fingerprint is re-exported here because it names what a table certifies
__all__ = [
    "TestOutcome",
    "run_global_test",
    "append_outcome_csv",
    "fingerprint",
]
