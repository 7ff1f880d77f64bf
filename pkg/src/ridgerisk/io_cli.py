"""File formats, experiment configuration, orchestration, and the CLI.

Binary kernel files carry a precomputed Gram matrix plus label columns;
experiments are described by a JSON-serializable config whose hash is
stamped into every CSV report so stale outputs are caught on re-runs. The
command-line surface wraps the library: synth, predict, scaling, mpcheck,
and baselines, with exit codes 0 (ok), 2 (input), 3 (numerical),
4 (invariant).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import struct
import sys
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .errors import InputError, InvariantError, NumericalError, RidgeRiskError
from .predictors import (
    RiskReport,
    RiskReportRow,
    SpecParams,
    apply_spec_params,
    fit_spec_params,
    pearson_correlation,
)
from .ridge_path import LabelMatrix, LambdaGrid
from .rmt_core import curve_coincidence, mp_consistency_curves, omniscient_risk, omniscient_risk_noisy, solve_kappa
from .scaling_laws import ScalingEstimate, _ols_slope, estimate_delta, estimate_gamma, observed_rate, trace_inverse_gram
from .spectral import SCALE_RAW, EigenSystem, GramMatrix, eigh, eigvalsh_gram, gram_from_features
from .synthesis import make_population, sample_instance

MAGIC = b"KRMX"
KERNEL_FORMAT_VERSION = 1

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_INVARIANT = 4

_REPORT_HEADER_PREFIX = "# ridgerisk-report v1"
_ABORT_PREFIX = "# ABORTED"

# Columns of the flat report table; kernel-file mode has no population to
# evaluate, so the two omniscient columns are dropped there.
SYNTHETIC_COLUMNS = (
    "n", "lambda0", "lambda", "seed", "r_emp", "r_test", "gcv", "kappa_hat",
    "regime_ratio", "r_spec", "r_norm", "r_omni", "r_omni_noisy",
)
KERNEL_COLUMNS = SYNTHETIC_COLUMNS[:-2]
_COLUMN_TO_ATTR = {"lambda": "lam"}

# Stream-separation tags mixed into SeedSequence entropy so the holdout
# draw and the subsample permutation never alias the training stream.
_HOLDOUT_TAG = 202
_SPLIT_TAG = 101


# ---------------------------------------------------------------------------
# Kernel file format
# ---------------------------------------------------------------------------
def write_kernel(path: str, gram: GramMatrix, labels: LabelMatrix) -> None:
    """Serialize a raw-scale Gram matrix and its label block."""
    if gram.scale != SCALE_RAW:
        raise InputError("kernel files store raw-scale Gram matrices")
    if labels.n != gram.n:
        raise InputError(f"labels have {labels.n} rows but kernel has n={gram.n}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", KERNEL_FORMAT_VERSION))
        fh.write(struct.pack("<Q", gram.n))
        fh.write(struct.pack("<Q", labels.c))
        fh.write(np.ascontiguousarray(gram.entries, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(labels.values, dtype="<f8").tobytes())


def read_kernel(path: str) -> tuple[GramMatrix, LabelMatrix]:
    """Parse and validate a kernel file; labels come back uncentered."""
    with open(path, "rb") as fh:
        blob = fh.read()
    header = 4 + 4 + 8 + 8
    if len(blob) < header:
        raise InputError(f"kernel file truncated: {len(blob)} bytes, header needs {header}")
    if blob[:4] != MAGIC:
        raise InputError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != KERNEL_FORMAT_VERSION:
        raise InputError(f"unsupported kernel file version {version}")
    (n,) = struct.unpack_from("<Q", blob, 8)
    (c,) = struct.unpack_from("<Q", blob, 16)
    if n < 1 or c < 1:
        raise InputError(f"kernel file declares n={n}, c={c}; both must be at least 1")
    expected = header + 8 * n * n + 8 * n * c
    if len(blob) != expected:
        raise InputError(f"kernel file length {len(blob)} does not match declared shape (expected {expected})")
    kernel = np.frombuffer(blob, dtype="<f8", count=n * n, offset=header).reshape(n, n)
    labels = np.frombuffer(blob, dtype="<f8", count=n * c, offset=header + 8 * n * n).reshape(n, c)
    if not np.all(np.isfinite(kernel)) or not np.all(np.isfinite(labels)):
        raise InputError("kernel file contains non-finite values")
    asym = float(np.max(np.abs(kernel - kernel.T))) if n > 1 else 0.0
    scale = float(np.max(np.abs(kernel))) if kernel.size else 0.0
    if asym > 1e-8 * max(scale, 1.0):
        raise InputError(f"kernel block asymmetry {asym:.3e} exceeds tolerance at scale {scale:.3e}")
    sym = (kernel + kernel.T) / 2.0
    return GramMatrix(entries=sym, n=int(n), scale=SCALE_RAW), LabelMatrix(values=labels.copy(), centered=False)


def center_labels(y: LabelMatrix) -> LabelMatrix:
    """Subtract each column's mean; no-op on already-centered input."""
    if y.centered:
        return y
    return LabelMatrix(values=y.values - y.values.mean(axis=0, keepdims=True), centered=True)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class LambdaGridSpec:
    """Geometric base-grid endpoints in units of the top empirical eigenvalue."""

    min: float = 1e-6
    max: float = 10.0
    count: int = 24

    def __post_init__(self) -> None:
        if not (0 < self.min <= self.max) or not math.isfinite(self.max):
            raise InputError("lambda grid spec needs 0 < min <= max, both finite")
        if self.count < 1 or (self.count > 1 and self.min == self.max):
            raise InputError("lambda grid spec needs count >= 1 and min < max for count > 1")


@dataclass(frozen=True)
class PopulationSpec:
    """Synthetic-mode power-law population parameters."""

    p: int = 2000
    gamma: float = 0.5
    delta: float = 0.2
    sigma2: float = 0.0


@dataclass(frozen=True)
class PredictorFlags:
    """Which optional estimator columns to populate."""

    gcv: bool = True
    spec: bool = True
    norm: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one experiment; hashable for output stamping.

    ``holdout`` below 1 is a fraction (of each subsample size); 1 or more
    is an absolute count of held-out points.
    """

    n_grid: tuple[int, ...]
    seeds: tuple[int, ...] = (0,)
    lambda0: LambdaGridSpec = field(default_factory=LambdaGridSpec)
    population: Optional[PopulationSpec] = None
    kernel_path: Optional[str] = None
    holdout: float = 2000.0
    predictors: PredictorFlags = field(default_factory=PredictorFlags)
    scaling: bool = False
    output_path: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.n_grid or any(n < 1 for n in self.n_grid):
            raise InputError("n_grid must be a nonempty list of positive sizes")
        if not self.seeds or any(s < 0 for s in self.seeds):
            raise InputError("seeds must be a nonempty list of nonnegative integers")
        if (self.population is None) == (self.kernel_path is None):
            raise InputError("exactly one of population (synthetic) or kernel_path must be set")
        if self.holdout <= 0:
            raise InputError("holdout must be a positive fraction or count")

    @property
    def mode(self) -> str:
        return "synthetic" if self.population is not None else "kernel"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_grid"] = list(self.n_grid)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        if d.get("lambda0") is not None:
            d["lambda0"] = LambdaGridSpec(**d["lambda0"])
        if d.get("population") is not None:
            d["population"] = PopulationSpec(**d["population"])
        if d.get("predictors") is not None:
            d["predictors"] = PredictorFlags(**d["predictors"])
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise InputError("config JSON must be an object")
        return cls.from_dict(d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def config_hash(self) -> str:
        """Digest of everything that affects the computed rows.

        output_path is excluded: where a report lands does not change its
        contents, and the hash is what ties a CSV back to its config.
        """
        d = self.to_dict()
        d.pop("output_path", None)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def build_lambda_grid(eig: EigenSystem, spec: LambdaGridSpec) -> LambdaGrid:
    """Geometric base grid spanning [spec.min, spec.max] times the top eigenvalue."""
    top = float(eig.eigenvalues[0])
    return LambdaGrid(base_values=_geometric_base(top, spec), n=eig.n)


def _geometric_base(top_eigenvalue: float, spec: LambdaGridSpec) -> np.ndarray:
    if top_eigenvalue <= 0:
        raise InputError("lambda grid needs a positive top eigenvalue")
    return np.geomspace(spec.min * top_eigenvalue, spec.max * top_eigenvalue, spec.count)


# ---------------------------------------------------------------------------
# Experiment orchestration
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ExperimentResult:
    report: RiskReport
    scaling: Optional[ScalingEstimate]
    config_hash: str
    mode: str
    spec_params: Optional[SpecParams] = None


class _ScalingSink:
    """Per-(n, seed) inputs for the exponent pipeline, averaged over seeds."""

    def __init__(self) -> None:
        self.traces: dict[int, list[float]] = {}
        self.q: dict[int, list[np.ndarray]] = {}
        self.kappa_hat: dict[int, list[np.ndarray]] = {}
        self.r_test: dict[int, list[np.ndarray]] = {}
        self.resolved: dict[int, np.ndarray] = {}

    def add(self, n: int, resolved: np.ndarray, trace: float, q: np.ndarray, kh: np.ndarray, r_test: np.ndarray) -> None:
        self.resolved[n] = resolved
        self.traces.setdefault(n, []).append(trace)
        self.q.setdefault(n, []).append(q)
        self.kappa_hat.setdefault(n, []).append(kh)
        self.r_test.setdefault(n, []).append(r_test)


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Evaluate every enabled predictor over the (n, seed, lambda) grid.

    Deterministic in the config; if output_path is set the report is
    persisted as CSV, and a failing job still flushes the rows computed so
    far under an abort marker before the error propagates.
    """
    sink = _ScalingSink() if config.scaling else None
    rows: list[RiskReportRow] = []
    try:
        if config.mode == "synthetic":
            _run_synthetic(config, rows, sink)
        else:
            _run_kernel(config, rows, sink)
    except RidgeRiskError as exc:
        if config.output_path:
            partial = RiskReport(rows=tuple(rows))
            _write_report_file(
                config.output_path, partial, config.config_hash(), config.mode,
                aborted=str(exc),
            )
        raise

    report = RiskReport(rows=tuple(rows))
    spec_params = None
    if config.predictors.spec:
        spec_params = fit_spec_params(report)
        report = apply_spec_params(report, spec_params)
    report.validate()
    scaling = _scaling_estimate(sink) if sink is not None else None
    result = ExperimentResult(
        report=report,
        scaling=scaling,
        config_hash=config.config_hash(),
        mode=config.mode,
        spec_params=spec_params,
    )
    if config.output_path:
        write_report(config.output_path, report, result.config_hash, result.mode)
    return result


def _holdout_count(holdout: float, n: int) -> int:
    if holdout < 1:
        return max(1, int(round(holdout * n)))
    return int(holdout)


def _job_context(exc: RidgeRiskError, n: int, seed: int) -> RidgeRiskError:
    return type(exc)(f"job n={n} seed={seed}: {exc}")


def _run_synthetic(config, rows, sink) -> None:
    ps = config.population
    pop = make_population(ps.p, ps.gamma, ps.delta, ps.sigma2)
    n_grid = sorted(set(config.n_grid))
    probe = sample_instance(pop, max(n_grid), config.seeds[0])
    top = float(eigvalsh_gram(gram_from_features(probe.features))[0])
    base = _geometric_base(top, config.lambda0)

    omni_cache: dict[int, list[tuple[float, float]]] = {}
    for n in n_grid:
        grid = LambdaGrid(base_values=base, n=n)
        if n not in omni_cache:
            try:
                pairs = []
                for lam in grid.resolved:
                    reg = solve_kappa(pop, float(lam), n)
                    pairs.append((
                        omniscient_risk(pop, float(lam), n, reg=reg),
                        omniscient_risk_noisy(pop, float(lam), n, reg=reg),
                    ))
                omni_cache[n] = pairs
            except RidgeRiskError as exc:
                raise type(exc)(f"population formulas at n={n}: {exc}") from exc
        for seed in config.seeds:
            try:
                inst = sample_instance(pop, n, seed)
                eig = eigh(gram_from_features(inst.features))
                y = inst.label_matrix
                m = _holdout_count(config.holdout, n)
                rng = np.random.default_rng(np.random.SeedSequence([seed, n, _HOLDOUT_TAG]))
                x_test = rng.standard_normal((m, pop.p)) * np.sqrt(pop.eigenvalues)[None, :]
                y_test = x_test @ inst.beta + math.sqrt(pop.noise_var) * rng.standard_normal(m)
                cross = x_test @ inst.features.T
                r_tests = _test_risk_path(eig, y, grid, cross, y_test[:, None])
                _append_grid_rows(
                    rows, eig, y, grid, n=n, seed=seed, r_tests=r_tests,
                    omni=omni_cache[n], flags=config.predictors, sink=sink,
                )
            except RidgeRiskError as exc:
                raise _job_context(exc, n, seed) from exc


def _run_kernel(config, rows, sink) -> None:
    gram_full, labels_raw = read_kernel(config.kernel_path)
    y_full = center_labels(labels_raw)
    n_total = gram_full.n
    n_grid = sorted(set(config.n_grid))
    if max(n_grid) > n_total:
        raise InputError(f"requested n={max(n_grid)} exceeds kernel size {n_total}")

    def split(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
        m = _holdout_count(config.holdout, n)
        if n + m > n_total:
            raise InputError(f"n={n} plus holdout {m} exceeds kernel size {n_total}")
        perm = np.random.default_rng(np.random.SeedSequence([seed, n, _SPLIT_TAG])).permutation(n_total)
        return perm[:n], perm[n : n + m]

    train0, _ = split(max(n_grid), config.seeds[0])
    sub0 = GramMatrix(entries=gram_full.entries[np.ix_(train0, train0)], n=len(train0), scale=SCALE_RAW)
    base = _geometric_base(float(eigvalsh_gram(sub0)[0]), config.lambda0)

    for n in n_grid:
        grid = LambdaGrid(base_values=base, n=n)
        for seed in config.seeds:
            try:
                train, test = split(n, seed)
                sub = GramMatrix(entries=gram_full.entries[np.ix_(train, train)], n=n, scale=SCALE_RAW)
                eig = eigh(sub)
                y = LabelMatrix(values=y_full.values[train], centered=False)
                y_test = y_full.values[test]
                cross = gram_full.entries[np.ix_(test, train)]
                r_tests = _test_risk_path(eig, y, grid, cross, y_test)
                _append_grid_rows(
                    rows, eig, y, grid, n=n, seed=seed, r_tests=r_tests,
                    omni=None, flags=config.predictors, sink=sink,
                )
            except RidgeRiskError as exc:
                raise _job_context(exc, n, seed) from exc


def _test_risk_path(eig: EigenSystem, y: LabelMatrix, grid: LambdaGrid, cross: np.ndarray, y_test: np.ndarray) -> np.ndarray:
    """Held-out MSE at every grid lambda, via one projected cross kernel."""
    uty = eig.eigenvectors.T @ y.values
    cross_u = cross @ eig.eigenvectors
    m = y_test.shape[0]
    out = np.empty(len(grid))
    for j, lam in enumerate(grid.resolved):
        w = 1.0 / (eig.n * (eig.eigenvalues + lam))
        resid = y_test - cross_u @ (w[:, None] * uty)
        out[j] = float(np.sum(resid * resid)) / m
    return out


def _append_grid_rows(rows, eig, y, grid, *, n, seed, r_tests, omni, flags, sink) -> None:
    proj2 = eig.label_projections(y.values)
    sums = _kernels.path_sums(eig.eigenvalues, proj2, grid.resolved)
    kh_arr = n / sums[:, 2]
    q_arr = sums[:, 3] / n
    for j in range(len(grid)):
        lam = float(grid.resolved[j])
        s = sums[j]
        r_emp = s[1] / n
        mult = s[0] / n
        kh = float(kh_arr[j])
        r_omni, r_omni_noisy = omni[j] if omni is not None else (None, None)
        rows.append(RiskReportRow(
            n=n,
            lambda0=float(grid.base_values[j]),
            lam=lam,
            seed=seed,
            r_emp=float(r_emp),
            gcv=float(r_emp / (mult * mult)) if flags.gcv else None,
            kappa_hat=kh,
            regime_ratio=kh / lam,
            r_test=float(r_tests[j]),
            r_spec=None,
            r_norm=float(np.sqrt(s[4]) / n) if flags.norm else None,
            r_omni=r_omni,
            r_omni_noisy=r_omni_noisy,
            spec_signal_basis=float(kh * kh * s[5]) if flags.spec else None,
            spec_noise_basis=float(kh * kh * s[6] / n) if flags.spec else None,
        ))
    if sink is not None:
        trace = trace_inverse_gram(eig)
        sink.add(n, np.asarray(grid.resolved), trace, q_arr, kh_arr, np.asarray(r_tests))


def _scaling_estimate(sink: _ScalingSink) -> ScalingEstimate:
    ns = sorted(sink.traces)
    trace_means = [float(np.mean(sink.traces[n])) for n in ns]
    samples = list(zip(ns, trace_means))
    gamma_hat = estimate_gamma(samples)
    _, gamma_se = _ols_slope(np.log(np.array(ns, dtype=float)), np.log(np.array(trace_means)))

    n_big = max(ns)
    lams = sink.resolved[n_big]
    q_mean = np.mean(np.stack(sink.q[n_big]), axis=0)
    kh_mean = np.mean(np.stack(sink.kappa_hat[n_big]), axis=0)
    delta_hat = estimate_delta(
        list(zip(lams, q_mean)), list(zip(lams, kh_mean)), gamma_hat,
    )

    curves = {
        n: list(zip(sink.resolved[n], np.mean(np.stack(sink.r_test[n]), axis=0)))
        for n in ns
    }
    rate = observed_rate(curves)
    return ScalingEstimate(
        gamma_hat=gamma_hat,
        delta_hat=delta_hat,
        alpha_observed=rate.alpha_observed,
        per_n_lambda_star=rate.per_n_lambda_star,
        fit_diagnostics={"gamma_stderr": gamma_se, "alpha_observed_stderr": rate.stderr},
        boundary_ns=rate.boundary_ns,
    )


# ---------------------------------------------------------------------------
# CSV reports
# ---------------------------------------------------------------------------
def _format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _report_lines(report: RiskReport, config_hash: str, mode: str, aborted: Optional[str] = None) -> list[str]:
    columns = SYNTHETIC_COLUMNS if mode == "synthetic" else KERNEL_COLUMNS
    lines = [f"{_REPORT_HEADER_PREFIX} config_hash={config_hash} mode={mode}", ",".join(columns)]
    for row in report.rows:
        values = [getattr(row, _COLUMN_TO_ATTR.get(col, col)) for col in columns]
        lines.append(",".join(_format_value(v) for v in values))
    if aborted is not None:
        lines.append(f"{_ABORT_PREFIX} {aborted}")
    return lines


def write_report(path: str, report: RiskReport, config_hash: str, mode: str) -> None:
    """Persist a report; refuses to clobber a report from a different config."""
    _write_report_file(path, report, config_hash, mode)


def _write_report_file(path: str, report: RiskReport, config_hash: str, mode: str, aborted: Optional[str] = None) -> None:
    if os.path.exists(path) and os.path.getsize(path) > 0:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            first = fh.readline().rstrip("\n")
        if not first.startswith(_REPORT_HEADER_PREFIX):
            raise InputError(f"{path} exists and is not a ridgerisk report; refusing to overwrite")
        existing = _parse_header(first)
        if existing[0] != config_hash:
            raise InputError(
                f"{path} was written by a different config (hash {existing[0][:12]}..., "
                f"current {config_hash[:12]}...); delete it or change output_path"
            )
    text = "\n".join(_report_lines(report, config_hash, mode, aborted)) + "\n"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _parse_header(line: str) -> tuple[str, str]:
    rest = line[len(_REPORT_HEADER_PREFIX):].split()
    kv = dict(part.split("=", 1) for part in rest if "=" in part)
    if "config_hash" not in kv or "mode" not in kv:
        raise InputError(f"malformed report header: {line!r}")
    if kv["mode"] not in ("synthetic", "kernel"):
        raise InputError(f"unknown report mode {kv['mode']!r}")
    return kv["config_hash"], kv["mode"]


def read_report(path: str) -> tuple[RiskReport, str, str]:
    """Parse a CSV report back into rows; rejects aborted partial files."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith(_REPORT_HEADER_PREFIX):
        raise InputError(f"{path} is not a ridgerisk report")
    config_hash, mode = _parse_header(lines[0])
    for line in lines:
        if line.startswith(_ABORT_PREFIX):
            raise InputError(f"report {path} is a partial aborted run: {line[len(_ABORT_PREFIX):].strip()}")
    columns = SYNTHETIC_COLUMNS if mode == "synthetic" else KERNEL_COLUMNS
    if len(lines) < 2 or tuple(lines[1].split(",")) != columns:
        raise InputError(f"report column header does not match mode {mode!r}")
    rows = []
    for line in lines[2:]:
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != len(columns):
            raise InputError(f"row has {len(parts)} fields, expected {len(columns)}: {line!r}")
        kwargs = {}
        for col, part in zip(columns, parts):
            attr = _COLUMN_TO_ATTR.get(col, col)
            if col in ("n", "seed"):
                kwargs[attr] = int(part)
            else:
                kwargs[attr] = float(part) if part else None
        rows.append(RiskReportRow(**kwargs))
    return RiskReport(rows=tuple(rows)), config_hash, mode


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------
def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON config file; explicit flags override its fields")
    sub.add_argument("--out", help="output CSV path")
    sub.add_argument("--seed", type=int, help="single RNG seed (config files may list several)")
    sub.add_argument("--threads", type=int, help="cap BLAS thread pools")
    sub.add_argument("--lambda-min", type=float, dest="lambda_min", help="grid lower endpoint, units of top eigenvalue")
    sub.add_argument("--lambda-max", type=float, dest="lambda_max", help="grid upper endpoint, units of top eigenvalue")
    sub.add_argument("--lambda-count", type=int, dest="lambda_count", help="number of grid points")
    sub.add_argument("--n-grid", dest="n_grid", help="comma-separated sample sizes, e.g. 128,256,512")
    sub.add_argument("--holdout", type=float, help="held-out fraction (<1) or count (>=1)")


def _add_population(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--p", type=int, help="population dimension")
    sub.add_argument("--gamma", type=float, help="eigendecay exponent")
    sub.add_argument("--delta", type=float, help="alignment exponent")
    sub.add_argument("--sigma2", type=float, help="label noise variance")


def _add_kernel(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--kernel", help="kernel file path")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ridgerisk",
        description="Risk prediction and scaling-law estimation for high-dimensional ridge regression.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    synth = subs.add_parser("synth", help="generate a synthetic ensemble and evaluate all predictors")
    _add_common(synth)
    _add_population(synth)
    synth.set_defaults(func=_cmd_table, force_mode="synthetic", force_scaling=False)

    predict = subs.add_parser("predict", help="evaluate predictors on a kernel file")
    _add_common(predict)
    _add_kernel(predict)
    predict.set_defaults(func=_cmd_table, force_mode="kernel", force_scaling=False)

    scaling = subs.add_parser("scaling", help="estimate scaling exponents (synthetic or kernel)")
    _add_common(scaling)
    _add_population(scaling)
    _add_kernel(scaling)
    scaling.set_defaults(func=_cmd_scaling, force_mode=None, force_scaling=True)

    mpcheck = subs.add_parser("mpcheck", help="cross-sample-size consistency curves and coincidence score")
    _add_common(mpcheck)
    _add_population(mpcheck)
    _add_kernel(mpcheck)
    mpcheck.set_defaults(func=_cmd_mpcheck)

    baselines = subs.add_parser("baselines", help="fit alpha2/sigma2 and report predictor correlations")
    _add_common(baselines)
    _add_population(baselines)
    _add_kernel(baselines)
    baselines.set_defaults(func=_cmd_baselines, force_mode=None, force_scaling=False)

    return parser


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    base: dict = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            base = ExperimentConfig.from_json(fh.read()).to_dict()

    def put(key, value):
        if value is not None:
            base[key] = value

    if args.n_grid is not None:
        try:
            base["n_grid"] = [int(tok) for tok in str(args.n_grid).split(",") if tok]
        except ValueError as exc:
            raise InputError(f"--n-grid must be comma-separated integers: {args.n_grid!r}") from exc
    put("output_path", args.out)
    put("holdout", args.holdout)
    if args.seed is not None:
        base["seeds"] = [args.seed]

    grid = dict(base.get("lambda0") or {})
    for key, val in (("min", args.lambda_min), ("max", args.lambda_max), ("count", args.lambda_count)):
        if val is not None:
            grid[key] = val
    if grid:
        base["lambda0"] = grid

    kernel = getattr(args, "kernel", None)
    if kernel is not None:
        base["kernel_path"] = kernel
        base.pop("population", None)

    wants_kernel = base.get("kernel_path") is not None
    force_mode = getattr(args, "force_mode", None)
    if force_mode == "kernel" and not wants_kernel:
        raise InputError("this command needs --kernel (or kernel_path in the config)")
    if force_mode == "synthetic" and wants_kernel:
        raise InputError("this command is synthetic-only; use predict for kernel files")

    if not wants_kernel:
        pop = dict(base.get("population") or {})
        for key in ("p", "gamma", "delta", "sigma2"):
            val = getattr(args, key, None)
            if val is not None:
                pop[key] = val
        base["population"] = {**asdict(PopulationSpec()), **pop}
    else:
        for key in ("p", "gamma", "delta", "sigma2"):
            if getattr(args, key, None) is not None:
                raise InputError(f"--{key} only applies to synthetic mode")

    base.setdefault("n_grid", [128, 256, 512])
    if wants_kernel:
        base.setdefault("holdout", 0.2)
    if getattr(args, "force_scaling", False):
        base["scaling"] = True
    return ExperimentConfig.from_dict(base)


@contextmanager
def _thread_limit(threads: Optional[int]):
    if threads is None:
        yield
        return
    if threads < 1:
        raise InputError("--threads must be at least 1")
    try:
        from threadpoolctl import threadpool_limits
    except ImportError as exc:
        raise InputError("--threads requires the threadpoolctl package") from exc
    with threadpool_limits(limits=threads):
        yield


def _cmd_table(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    result = run_experiment(config)
    if not config.output_path:
        sys.stdout.write("\n".join(_report_lines(result.report, result.config_hash, result.mode)) + "\n")
    return EXIT_OK


def _cmd_scaling(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    result = run_experiment(config)
    est = result.scaling
    payload = {
        "gamma_hat": est.gamma_hat,
        "delta_hat": est.delta_hat,
        "alpha_hat": est.alpha_hat,
        "alpha_observed": est.alpha_observed,
        "per_n_lambda_star": {str(k): v for k, v in sorted(est.per_n_lambda_star.items())},
        "boundary_ns": list(est.boundary_ns),
        "fit_diagnostics": est.fit_diagnostics,
        "config_hash": result.config_hash,
    }
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_mpcheck(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    if len(config.n_grid) < 2:
        raise InputError("mpcheck needs at least 2 sample sizes to compare")
    curves = []
    n_grid = sorted(set(config.n_grid))
    seed = config.seeds[0]
    if config.mode == "synthetic":
        ps = config.population
        pop = make_population(ps.p, ps.gamma, ps.delta, ps.sigma2)
        probe = sample_instance(pop, max(n_grid), seed)
        base = _geometric_base(float(eigvalsh_gram(gram_from_features(probe.features))[0]), config.lambda0)
        for n in n_grid:
            inst = sample_instance(pop, n, seed)
            eig = eigh(gram_from_features(inst.features))
            y = center_labels(inst.label_matrix)
            curves.append(mp_consistency_curves(eig, y, LambdaGrid(base_values=base, n=n)))
    else:
        gram_full, labels_raw = read_kernel(config.kernel_path)
        if max(n_grid) > gram_full.n:
            raise InputError(f"requested n={max(n_grid)} exceeds kernel size {gram_full.n}")
        y_centered = center_labels(labels_raw)
        base = None
        for n in reversed(n_grid):
            perm = np.random.default_rng(np.random.SeedSequence([seed, n, _SPLIT_TAG])).permutation(gram_full.n)
            train = perm[:n]
            sub = GramMatrix(entries=gram_full.entries[np.ix_(train, train)], n=n, scale=SCALE_RAW)
            eig = eigh(sub)
            if base is None:
                base = _geometric_base(float(eig.eigenvalues[0]), config.lambda0)
            y = center_labels(LabelMatrix(values=y_centered.values[train], centered=False))
            curves.insert(0, mp_consistency_curves(eig, y, LambdaGrid(base_values=base, n=n)))
    score = curve_coincidence(curves)
    payload = {
        "coincidence": score,
        "n_grid": list(n_grid),
        "points_per_curve": int(config.lambda0.count),
        "seed": seed,
    }
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_baselines(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    result = run_experiment(config)
    rows = result.report.rows

    def corr(attr: str, subset) -> Optional[float]:
        pairs = [(getattr(r, attr), r.r_test) for r in subset if getattr(r, attr) is not None and r.r_test is not None]
        if len(pairs) < 2:
            return None
        try:
            return pearson_correlation([p[0] for p in pairs], [p[1] for p in pairs])
        except InputError:
            return None

    best_rows = []
    for key in sorted({(r.n, r.seed) for r in rows}):
        group = [r for r in rows if (r.n, r.seed) == key and r.r_test is not None]
        if group:
            best_rows.append(min(group, key=lambda r: (r.r_test, r.lam)))

    predictors = ["gcv", "r_spec", "r_norm"] + (["r_omni", "r_omni_noisy"] if result.mode == "synthetic" else [])
    payload = {
        "spec_params": None,
        "correlations_all_rows": {p: corr(p, rows) for p in predictors},
        "correlations_at_optimum": {p: corr(p, best_rows) for p in predictors},
        "rows": len(rows),
        "optimum_rows": len(best_rows),
        "config_hash": result.config_hash,
    }
    if result.spec_params is not None:
        payload["spec_params"] = {
            "alpha2": result.spec_params.alpha2,
            "sigma2": result.spec_params.sigma2,
            "degenerate": result.spec_params.degenerate,
            "sse": result.spec_params.sse,
        }
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        with _thread_limit(args.threads):
            return args.func(args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except InvariantError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
