"""Power studies for the activation-count test against t-test baselines.

Two generative scenarios over an uncorrelated design:

* one_predictor: y = beta_1 * x_1 + noise, beta_1 swept over a fixed
  grid, all other coefficients zero;
* multi_predictor: for each k, effect sizes beta_1..beta_k are redrawn
  per replicate from N(mu, sd = 0.5 * mu) and y = x[:, :k] @ beta
  + noise.

Every replicate applies the full test pipeline (standardize columns
and response, evaluate active counts at the calibrated thresholds)
plus the per-marker t tests with Bonferroni and BH global rules, so
all methods see the same data. A replicate costs one warm-started
path evaluation at the |r_values| calibrated penalties, not a fit per
(r, penalty) pair; the solver's fit counter lets callers audit the
budget.

Replicate m of parameter index i draws from stream
(scenario << 56) | (i << 40) | m of the configured seed: injective,
so results are independent of threading and any (scenario, point,
replicate) can be regenerated alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import solver
from .baselines import bh_global, bonferroni_global, t_statistics, two_sided_p
from .calibration import CalibrationTable, _thread_map
from .data import RngSpec, SD_FLOOR, fingerprint, spectral_decompose
from .errors import ConstantColumn, DegenerateResponse, IoFailure

ONE_PREDICTOR = "one_predictor"
MULTI_PREDICTOR = "multi_predictor"

_SCENARIO_INDEX = {ONE_PREDICTOR: 1, MULTI_PREDICTOR: 2}

DEFAULT_BETA_GRID = tuple(round(0.1 * i, 1) for i in range(1, 11))
DEFAULT_K_VALUES = (1, 2, 5, 10, 20, 50)
DEFAULT_R_VALUES = (0, 1, 2, 5, 10, 20)


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything one scenario run depends on, seeds included."""

    kind: str
    n: int = 40
    p: int = 200
    noise_sd: float = 1.0
    runs: int = 10_000
    r_values: tuple[int, ...] = DEFAULT_R_VALUES
    beta1_grid: tuple[float, ...] = DEFAULT_BETA_GRID
    k_values: tuple[int, ...] = DEFAULT_K_VALUES
    mu: float = 0.4
    rng: RngSpec = field(default_factory=lambda: RngSpec(0, 0))
    threads: int = 0

    def __post_init__(self):
        if self.kind not in _SCENARIO_INDEX:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.n < 3:
            raise ValueError("need n >= 3")
        if self.p < 1:
            raise ValueError("need p >= 1")
        if self.noise_sd <= 0.0:
            raise ValueError("noise_sd must be positive")
        if self.runs < 100:
            raise ValueError("need runs >= 100")
        if not self.r_values or any(r < 0 for r in self.r_values):
            raise ValueError("r_values must be non-empty and non-negative")
        if tuple(sorted(set(self.r_values))) != tuple(self.r_values):
            raise ValueError("r_values must be strictly ascending")
        if self.kind == ONE_PREDICTOR:
            if not self.beta1_grid or any(b < 0.0 for b in self.beta1_grid):
                raise ValueError("beta1_grid must be non-empty and non-negative")
        else:
            if not self.k_values or any(k < 1 for k in self.k_values):
                raise ValueError("k_values must be non-empty and positive")
            if max(self.k_values) > self.p:
                raise ValueError("k cannot exceed p")
            if self.mu <= 0.0:
                raise ValueError("mu must be positive")


@dataclass(frozen=True)
class PowerCurve:
    """Rejection-rate curve for one method over the scenario's x axis."""

    method: str
    x_values: tuple[float, ...]
    power: tuple[float, ...]
    mc_se: tuple[float, ...]
    runs: int


def _method_labels(r_values) -> list[str]:
    return [f"U({r})" for r in r_values] + ["t-Bonferroni", "t-BH"]


def power_stream(scenario_kind: str, param_index: int, replicate: int) -> int:
    """Injective substream index for one scenario replicate."""
    if param_index >= (1 << 16) or replicate >= (1 << 40):
        raise ValueError("parameter or replicate index out of stream range")
    return (
        (_SCENARIO_INDEX[scenario_kind] << 56) | (param_index << 40) | replicate
    )


def _standardize_draw(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    sd = x.std(axis=0, ddof=1)
    bad = np.flatnonzero(sd < SD_FLOOR)
    if bad.size:
        raise ConstantColumn(int(bad[0]))
    y_sd = y.std(ddof=1)
    if y_sd < SD_FLOOR:
        raise DegenerateResponse("simulated response is constant")
    return (x - x.mean(axis=0)) / sd, (y - y.mean()) / y_sd


def _check_table(config: ScenarioConfig, table: CalibrationTable) -> None:
    if table.n != config.n or table.p != config.p:
        raise ValueError(
            f"table is for n={table.n}, p={table.p}; "
            f"scenario needs n={config.n}, p={config.p}"
        )
    covered = set(table.r_values())
    missing = [r for r in config.r_values if r not in covered]
    if missing:
        raise ValueError(f"table lacks entries for r={missing}")
    identity_fp = fingerprint(spectral_decompose(np.eye(config.p)), config.n)
    if table.factor_fingerprint != identity_fp:
        raise ValueError(
            "scenario designs are uncorrelated; the table's fingerprint "
            f"{table.factor_fingerprint} is not the identity-covariance "
            f"fingerprint {identity_fp}"
        )


def _run_scenario(
    config: ScenarioConfig,
    table: CalibrationTable,
    x_values: list[float],
    signal,
) -> list[PowerCurve]:
    """Shared engine: ``signal(gen, param_value)`` -> (x_raw, y_raw)."""
    _check_table(config, table)
    rs = np.array(config.r_values, dtype=np.int64)
    lams = np.array(
        [table.entry_for(int(r)).lambda_r for r in rs], dtype=np.float64
    )
    if np.any(lams <= 0.0):
        raise ValueError("table thresholds must be positive for a power run")
    order = np.argsort(-lams, kind="stable")
    lams_desc = lams[order]
    labels = _method_labels(config.r_values)
    n_methods = len(labels)
    alpha = table.alpha
    df = config.n - 2
    results = np.zeros((len(x_values), config.runs, n_methods), dtype=bool)

    def worker(flat: int) -> None:
        ip, m = divmod(flat, config.runs)
        spec = config.rng.substream(power_stream(config.kind, ip, m))
        x_raw, y_raw = signal(spec.generator(), x_values[ip])
        xs, ys = _standardize_draw(x_raw, y_raw)
        xt = np.ascontiguousarray(xs.T)
        col_norms = np.einsum("ji,ji->j", xt, xt)
        counts = solver.counts_at(xt, col_norms, ys, lams_desc)
        row = results[ip, m]
        row[order] = counts > rs[order]
        pvals = two_sided_p(t_statistics(xs, ys), df)
        row[-2] = bonferroni_global(pvals, alpha)
        row[-1] = bh_global(pvals, alpha)

    _thread_map(worker, len(x_values) * config.runs, config.threads)
    hits = results.sum(axis=1)
    curves = []
    for j, label in enumerate(labels):
        power = hits[:, j] / config.runs
        mc_se = np.sqrt(power * (1.0 - power) / config.runs)
        curves.append(
            PowerCurve(
                method=label,
                x_values=tuple(float(v) for v in x_values),
                power=tuple(float(v) for v in power),
                mc_se=tuple(float(v) for v in mc_se),
                runs=config.runs,
            )
        )
    return curves


def simulate_scenario1(
    config: ScenarioConfig, table: CalibrationTable
) -> list[PowerCurve]:
    """Power over the fixed beta_1 grid (all other coefficients zero).

    Draw order inside a replicate: marker matrix, then noise.
    """
    if config.kind != ONE_PREDICTOR:
        raise ValueError("config.kind must be 'one_predictor'")

    def signal(gen: np.random.Generator, beta1: float):
        x = gen.standard_normal((config.n, config.p))
        eps = gen.standard_normal(config.n)
        return x, beta1 * x[:, 0] + config.noise_sd * eps

    return _run_scenario(config, table, list(config.beta1_grid), signal)


def simulate_scenario2(
    config: ScenarioConfig, table: CalibrationTable
) -> list[PowerCurve]:
    """Power over k active markers, effects redrawn every replicate.

    Effect sizes are N(mu, sd = 0.5 * mu), so negatives occur with
    probability Phi(-2) ~ 0.023 and are kept: they are part of the
    model. Draw order inside a replicate: effects, then markers, then
    noise.
    """
    if config.kind != MULTI_PREDICTOR:
        raise ValueError("config.kind must be 'multi_predictor'")

    def signal(gen: np.random.Generator, k: float):
        k = int(k)
        beta = gen.normal(config.mu, 0.5 * config.mu, size=k)
        x = gen.standard_normal((config.n, config.p))
        eps = gen.standard_normal(config.n)
        return x, x[:, :k] @ beta + config.noise_sd * eps

    return _run_scenario(config, table, [float(k) for k in config.k_values], signal)


def export_power_tables(
    curves: list[PowerCurve], path: str | Path, metadata: dict | None = None
) -> None:
    """Write curves as x,method,power,mc_se rows sorted by (method, x).

    All curves must share an ascending x axis and carry distinct
    method labels. Metadata key=value pairs land in # comment lines;
    nothing time-dependent is written, so identical inputs give
    byte-identical files.
    """
    from . import __version__

    if not curves:
        raise ValueError("need at least one curve")
    x_axis = curves[0].x_values
    if any(c.x_values != x_axis for c in curves):
        raise ValueError("curves disagree on the x axis")
    if list(x_axis) != sorted(x_axis):
        raise ValueError("x axis must be ascending")
    labels = [c.method for c in curves]
    if len(set(labels)) != len(labels):
        raise ValueError("duplicate method labels")
    lines = ["# lasso-gate power table", f"# version={__version__}"]
    for key in sorted(metadata or {}):
        lines.append(f"# {key}={metadata[key]}")
    lines.append("x,method,power,mc_se")
    for curve in sorted(curves, key=lambda c: c.method):
        for x, pw, se in zip(curve.x_values, curve.power, curve.mc_se):
            lines.append(f"{x:g},{curve.method},{pw:.6g},{se:.6g}")
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


_LIST_KEYS = {"r_values", "beta1_grid", "k_values", "mu_values"}


def _parse_int_list(val: str) -> tuple[int, ...]:
    return tuple(int(v.strip()) for v in val.split(",") if v.strip())


def _parse_float_list(val: str) -> tuple[float, ...]:
    return tuple(float(v.strip()) for v in val.split(",") if v.strip())


_CONFIG_SCHEMA = {
    "scenario": str,
    "n": int,
    "p": int,
    "runs": int,
    "alpha": float,
    "seed": int,
    "stream": int,
    "noise_sd": float,
    "threads": int,
    "r_values": _parse_int_list,
    "beta1_grid": _parse_float_list,
    "k_values": _parse_int_list,
    "mu_values": _parse_float_list,
    "calibration_replicates": int,
    "validation_replicates": int,
    "grid_points": int,
    "grid_floor": float,
    "allow_small_replicates": lambda v: bool(int(v)),
}


def parse_power_config(path: str | Path) -> dict:
    """Parse a key=value power-study config; unknown keys are rejected.

    Blank lines and # comments are skipped; list values are comma
    separated. Returns only what the file sets; defaults are applied
    by the consumer.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    out: dict = {}
    for ln, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{ln}: expected key=value")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _CONFIG_SCHEMA:
            raise ValueError(f"{path}:{ln}: unknown key {key!r}")
        if key in out:
            raise ValueError(f"{path}:{ln}: duplicate key {key!r}")
        try:
            out[key] = _CONFIG_SCHEMA[key](val)
        except ValueError:
            raise ValueError(f"{path}:{ln}: bad value for {key!r}") from None
    if "scenario" in out and out["scenario"] not in {"1", "2", "both"}:
        raise ValueError(f"{path}: scenario must be 1, 2 or both")
    return out


def mc_se(power: float, runs: int) -> float:
    """Binomial Monte-Carlo standard error of an estimated rate."""
    if runs < 1:
        raise ValueError("runs must be positive")
    if not 0.0 <= power <= 1.0:
        raise ValueError("power must lie in [0, 1]")
    return math.sqrt(power * (1.0 - power) / runs)
