"""Command line interface.

Subcommands: calibrate, test, validate, power. Exit codes: 0 success,
2 input or usage error, 3 calibration validation failure (observed
size outside the announced band), 4 calibration fingerprint mismatch.
Output files never contain timestamps; reruns with the same seed are
byte-identical regardless of --threads.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, power as power_mod, solver
from .calibration import (
    calibrate,
    load_calibration_csv,
    save_calibration_csv,
    validate_size,
)
from .data import (
    RngSpec,
    load_dataset_csv,
    sample_covariance,
    spectral_decompose,
    standardize,
)
from .errors import FingerprintMismatch, NoConvergence
from .global_null import append_outcome_csv, run_global_test
from .power import (
    MULTI_PREDICTOR,
    ONE_PREDICTOR,
    ScenarioConfig,
    export_power_tables,
    parse_power_config,
    simulate_scenario1,
    simulate_scenario2,
)


def _parse_r_list(text: str) -> list[int]:
    try:
        values = sorted({int(v.strip()) for v in text.split(",") if v.strip()})
    except ValueError:
        raise ValueError(f"bad r list {text!r}") from None
    if not values or values[0] < 0:
        raise ValueError("r values must be non-negative integers")
    return values


def _factor_from_dataset(path: str):
    data = standardize(load_dataset_csv(path))
    return data, spectral_decompose(sample_covariance(data))


def cmd_calibrate(args: argparse.Namespace) -> int:
    data, factor = _factor_from_dataset(args.data)
    rng = RngSpec(args.seed, args.stream)
    table = calibrate(
        factor,
        data.n,
        _parse_r_list(args.r),
        args.alpha,
        args.replicates,
        rng,
        validation_replicates=args.validation_replicates,
        grid_points=args.grid_points,
        grid_floor=args.grid_floor,
        threads=args.threads,
        allow_small=args.allow_small_replicates,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "calibration.csv"
    save_calibration_csv(table, out_path)
    lo, hi = table.size_band()
    print(f"calibration table written to {out_path}")
    print(
        f"n={table.n} p={table.p} alpha={table.alpha:g} "
        f"replicates={table.replicates} fingerprint={table.factor_fingerprint}"
    )
    for e in table.entries:
        print(
            f"  r={e.r}: lambda_r={e.lambda_r:.6g} "
            f"exceedance={e.exceedance_rate:.4f}"
        )
    print(f"validation band [{lo:.4f}, {hi:.4f}] over "
          f"{table.validation_replicates} fresh replicates")
    if not table.validated:
        print("VALIDATION FAILED: observed size outside the band", file=sys.stderr)
        return 3
    print("validation passed")
    return 0


def cmd_test(args: argparse.Namespace) -> int:
    raw = load_dataset_csv(args.data)
    table = load_calibration_csv(args.table) if args.table else None
    rng = RngSpec(args.seed, args.stream)
    outcome = run_global_test(
        raw,
        args.r,
        args.alpha,
        args.replicates,
        rng,
        table=table,
        threads=args.threads,
        allow_small=args.allow_small_replicates,
    )
    decision = "REJECT" if outcome.reject else "no rejection"
    print(
        f"u={outcome.u_observed} at lambda_r={outcome.lambda_r:.6g} "
        f"(r={outcome.r}, alpha={outcome.alpha:g}): {decision}"
    )
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        record = out_dir / "test_results.csv"
        append_outcome_csv(outcome, record)
        print(f"record appended to {record}")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    table = load_calibration_csv(args.table)
    data, factor = _factor_from_dataset(args.data)
    rates = validate_size(
        table,
        factor,
        data.n,
        args.replicates,
        RngSpec(args.seed, args.stream),
        threads=args.threads,
    )
    half = 3.0 * math.sqrt(table.alpha * (1.0 - table.alpha) / args.replicates)
    lo, hi = table.alpha - half, table.alpha + half
    ok = True
    for r, rate in rates:
        inside = lo <= rate <= hi
        ok = ok and inside
        marker = "ok" if inside else "OUTSIDE"
        print(f"  r={r}: observed={rate:.4f} band=[{lo:.4f}, {hi:.4f}] {marker}")
    if not ok:
        print("VALIDATION FAILED", file=sys.stderr)
        return 3
    print("validation passed")
    return 0


def _scenario_defaults(cfg: dict) -> dict:
    merged = {
        "scenario": "both",
        "n": 40,
        "p": 200,
        "runs": 10_000,
        "alpha": 0.05,
        "seed": 0,
        "stream": 0,
        "noise_sd": 1.0,
        "threads": 0,
        "r_values": power_mod.DEFAULT_R_VALUES,
        "beta1_grid": power_mod.DEFAULT_BETA_GRID,
        "k_values": power_mod.DEFAULT_K_VALUES,
        "mu_values": (0.2, 0.4),
        "calibration_replicates": 10_000,
        "validation_replicates": 2_000,
        "grid_points": solver.DEFAULT_GRID_POINTS,
        "grid_floor": solver.DEFAULT_GRID_FLOOR,
        "allow_small_replicates": False,
    }
    merged.update(cfg)
    return merged


def cmd_power(args: argparse.Namespace) -> int:
    cfg = _scenario_defaults(parse_power_config(args.config))
    if args.threads is not None:
        cfg["threads"] = args.threads
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = RngSpec(cfg["seed"], cfg["stream"])
    factor = spectral_decompose(np.eye(cfg["p"]))
    t0 = time.perf_counter()
    solves0, sweeps0 = solver.fit_counter.snapshot()
    table = calibrate(
        factor,
        cfg["n"],
        cfg["r_values"],
        cfg["alpha"],
        cfg["calibration_replicates"],
        rng,
        validation_replicates=cfg["validation_replicates"],
        grid_points=cfg["grid_points"],
        grid_floor=cfg["grid_floor"],
        threads=cfg["threads"],
        allow_small=cfg["allow_small_replicates"],
    )
    table_path = out_dir / "calibration_identity.csv"
    save_calibration_csv(table, table_path)
    print(f"calibration table written to {table_path} "
          f"(validated={table.validated})")
    meta_common = {
        "n": cfg["n"],
        "p": cfg["p"],
        "alpha": cfg["alpha"],
        "runs": cfg["runs"],
        "seed": cfg["seed"],
        "stream": cfg["stream"],
        "noise_sd": cfg["noise_sd"],
        "calibration_replicates": cfg["calibration_replicates"],
        "calibration_fingerprint": table.factor_fingerprint,
        "r_values": ",".join(str(r) for r in cfg["r_values"]),
    }
    written = []
    if cfg["scenario"] in {"1", "both"}:
        config = ScenarioConfig(
            kind=ONE_PREDICTOR,
            n=cfg["n"],
            p=cfg["p"],
            noise_sd=cfg["noise_sd"],
            runs=cfg["runs"],
            r_values=tuple(cfg["r_values"]),
            beta1_grid=tuple(cfg["beta1_grid"]),
            rng=rng,
            threads=cfg["threads"],
        )
        curves = simulate_scenario1(config, table)
        path = out_dir / "power_scenario1.csv"
        export_power_tables(
            curves,
            path,
            metadata=dict(
                meta_common,
                scenario="one_predictor",
                beta1_grid=",".join(f"{b:g}" for b in cfg["beta1_grid"]),
            ),
        )
        written.append(path)
    if cfg["scenario"] in {"2", "both"}:
        for mu in cfg["mu_values"]:
            config = ScenarioConfig(
                kind=MULTI_PREDICTOR,
                n=cfg["n"],
                p=cfg["p"],
                noise_sd=cfg["noise_sd"],
                runs=cfg["runs"],
                r_values=tuple(cfg["r_values"]),
                k_values=tuple(cfg["k_values"]),
                mu=mu,
                rng=rng,
                threads=cfg["threads"],
            )
            curves = simulate_scenario2(config, table)
            path = out_dir / f"power_scenario2_mu{mu:g}.csv"
            export_power_tables(
                curves,
                path,
                metadata=dict(
                    meta_common,
                    scenario="multi_predictor",
                    mu=f"{mu:g}",
                    k_values=",".join(str(k) for k in cfg["k_values"]),
                ),
            )
            written.append(path)
    solves1, sweeps1 = solver.fit_counter.snapshot()
    elapsed = time.perf_counter() - t0
    for path in written:
        print(f"power table written to {path}")
    print(
        f"accounting: {solves1 - solves0} penalty solves, "
        f"{sweeps1 - sweeps0} sweeps, {elapsed:.1f}s wall"
    )
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lasso-gate",
        description="Calibrated activation-count test of the global null",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    cal = sub.add_parser("calibrate", help="build a calibration table")
    cal.add_argument("--data", required=True, help="dataset CSV (defines the factor)")
    cal.add_argument("--r", default="0,1,2,5,10,20", help="comma list of r values")
    cal.add_argument("--alpha", type=float, default=0.05)
    cal.add_argument("--replicates", type=int, default=10_000)
    cal.add_argument("--validation-replicates", type=int, default=2_000)
    cal.add_argument("--seed", type=int, required=True)
    cal.add_argument("--stream", type=int, default=0)
    cal.add_argument("--out", required=True, help="output directory")
    cal.add_argument("--threads", type=int, default=0)
    cal.add_argument("--grid-points", type=int, default=solver.DEFAULT_GRID_POINTS)
    cal.add_argument("--grid-floor", type=float, default=solver.DEFAULT_GRID_FLOOR)
    cal.add_argument("--allow-small-replicates", action="store_true")
    cal.set_defaults(func=cmd_calibrate)

    tst = sub.add_parser("test", help="test one dataset against the global null")
    tst.add_argument("--data", required=True)
    tst.add_argument("--r", type=int, required=True, help="allowed false activations")
    tst.add_argument("--alpha", type=float, default=0.05)
    tst.add_argument("--replicates", type=int, default=10_000,
                     help="calibration replicates when no --table is given")
    tst.add_argument("--table", help="reuse a calibration table CSV")
    tst.add_argument("--seed", type=int, required=True)
    tst.add_argument("--stream", type=int, default=0)
    tst.add_argument("--out", help="directory for the appended decision record")
    tst.add_argument("--threads", type=int, default=0)
    tst.add_argument("--allow-small-replicates", action="store_true")
    tst.set_defaults(func=cmd_test)

    val = sub.add_parser("validate", help="re-check a table on fresh replicates")
    val.add_argument("--table", required=True)
    val.add_argument("--data", required=True, help="dataset CSV (defines the factor)")
    val.add_argument("--replicates", type=int, default=2_000)
    val.add_argument("--seed", type=int, required=True)
    val.add_argument("--stream", type=int, default=0)
    val.add_argument("--threads", type=int, default=0)
    val.set_defaults(func=cmd_validate)

    pwr = sub.add_parser("power", help="run the power study from a config file")
    pwr.add_argument("--config", required=True, help="key=value config file")
    pwr.add_argument("--out", required=True, help="output directory")
    pwr.add_argument("--threads", type=int, default=None,
                     help="override the config's thread count")
    pwr.set_defaults(func=cmd_power)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FingerprintMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except NoConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
