"""Monte Carlo convergence experiments: configuration, simulation, fitting, output.

Every test scheme runs on coarse steps built by Chen aggregation of one
shared fine-resolution noise stream, and is compared against a reference
scheme run on the fine steps themselves.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np
import scipy.linalg

from .drivers import DriverConfig, StepSample, chen_aggregate, sample_step
from .errors import DomainError
from .operators import LinearField, OperatorEngine, VectorFieldSet, trig_field
from .schemes import SchemeTable, build_table, parse_scheme_name
from .words import EMPTY, JumpSpec, Word

SCHEMA_VERSION = 1
CSV_COLUMNS = ("scheme", "h", "mse", "mse_se", "cpu_seconds", "p", "M", "paths", "seed")
EXACT_REFERENCE = "exact"


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------
@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one convergence experiment.

    Args:
        fields: vector fields with their jump laws.
        y0: initial state.
        horizon: final time ``T``.
        steps: coarse step sizes.
        paths: number of sample paths.
        schemes: scheme names such as ``taylor-ms-2`` or ``masri-2``.
        fine_ratio: smallest coarse step divided by the fine step.
        reference: scheme run at the fine step, or ``"exact"`` for pure
            linear drift.
        fourier_terms: Levy-area Fourier terms on fine steps.
        p_scale: timing runs use ``ceil(p_scale / h)`` Fourier terms.
        timing_paths: paths used for the timing runs.
        timing_repeats: timing repeats; the minimum is reported.
        max_derivative_order: jet budget for nonlinear fields.
        seed: master seed.
        block_size: paths per random stream.
        outputs: optional ``csv``, ``svg`` and ``gnuplot`` target paths.
    """

    fields: VectorFieldSet
    y0: np.ndarray
    horizon: float = 1.0
    steps: tuple = tuple(2.0**-k for k in range(4, 10))
    paths: int = 1000
    schemes: tuple = ("taylor-ms-2", "masri-2")
    fine_ratio: int = 32
    reference: str = "taylor-ms-2"
    fourier_terms: int = 4
    p_scale: float = 8.0
    timing_paths: int = 100
    timing_repeats: int = 3
    max_derivative_order: int = 4
    seed: int = 0
    block_size: int = 128
    outputs: dict = field(default_factory=dict)

    def __post_init__(self):
        self.y0 = np.asarray(self.y0, dtype=float)
        self.steps = tuple(sorted((float(h) for h in self.steps), reverse=True))
        self.schemes = tuple(self.schemes)
        if self.y0.shape != (self.fields.dimension,):
            raise DomainError(f"y0 has shape {self.y0.shape}, fields expect ({self.fields.dimension},)")
        if self.paths < 1 or self.fine_ratio < 1 or self.timing_repeats < 1:
            raise DomainError("paths, fine_ratio and timing_repeats must be positive")
        if not self.steps:
            raise DomainError("at least one step size is required")
        for name in self.schemes:
            parse_scheme_name(name)
        if self.reference != EXACT_REFERENCE:
            parse_scheme_name(self.reference)
        elif not (self.fields.is_linear and not self.fields.wiener and not self.fields.jumps):
            raise DomainError("the exact reference needs a linear drift-only field set")
        self.fine_step  # validates the ladder

    @property
    def fine_step(self) -> float:
        h = min(self.steps) / self.fine_ratio
        for coarse in self.steps + (self.horizon,):
            r = coarse / h
            if abs(r - round(r)) > 1e-9 * r:
                raise DomainError(f"step {coarse} is not an integer multiple of the fine step {h}")
        return h

    @property
    def fine_steps(self) -> int:
        return round(self.horizon / self.fine_step)

    def driver_config(self, fourier_terms: int | None = None) -> DriverConfig:
        return DriverConfig(
            wiener_count=len(self.fields.wiener),
            jumps=tuple(s for s, _ in self.fields.jumps),
            fourier_terms=self.fourier_terms if fourier_terms is None else fourier_terms,
            seed=self.seed,
            step=self.fine_step,
            block_size=self.block_size,
        )

    def with_(self, **changes) -> "ExperimentConfig":
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        data.update(changes)
        return ExperimentConfig(**data)

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "fields": self.fields.to_json(),
            "y0": self.y0.tolist(),
            "horizon": self.horizon,
            "steps": list(self.steps),
            "paths": self.paths,
            "schemes": list(self.schemes),
            "fine_ratio": self.fine_ratio,
            "reference": self.reference,
            "fourier_terms": self.fourier_terms,
            "p_scale": self.p_scale,
            "timing_paths": self.timing_paths,
            "timing_repeats": self.timing_repeats,
            "max_derivative_order": self.max_derivative_order,
            "seed": self.seed,
            "block_size": self.block_size,
            "outputs": dict(self.outputs),
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "ExperimentConfig":
        data = dict(data)
        version = data.pop("schema_version", None)
        if version != SCHEMA_VERSION:
            raise DomainError(f"unsupported config schema_version {version!r}, expected {SCHEMA_VERSION}")
        if "preset" in data:
            base = preset(data.pop("preset"))
            return base.with_(**{k: v for k, v in data.items()})
        data["fields"] = VectorFieldSet.from_json(data["fields"])
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_json(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------
TRIG_A0 = [
    [0.314724, 0.132359, 0.457507, 0.457167],
    [0.405792, -0.402460, 0.464889, -0.014624],
    [-0.373013, -0.221502, -0.342387, 0.300280],
    [0.413376, 0.046882, 0.470593, -0.358114],
]
TRIG_A1 = [
    [-0.078239, 0.155741, 0.178735, 0.155478],
    [0.415736, -0.464288, 0.257740, -0.328813],
    [0.292207, 0.349129, 0.243132, 0.206046],
    [0.459492, 0.433993, -0.107773, -0.468167],
]
TRIG_A3 = [
    [-0.223077, 0.194829, -0.061256, -0.313127],
    [-0.453829, -0.182901, -0.118442, -0.010236],
    [-0.402868, 0.450222, 0.265517, -0.054414],
    [0.323458, -0.465554, 0.295200, 0.146313],
]
# linear part of the trigonometric field at the origin (cos x2 contributes nothing)
TRIG_FIELD_LINEAR = [[1, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 1], [0, 0, -1, 0]]
TRIG_Y0 = (1.0, 0.8, 0.6, 0.4)


def trig_fields(linear: bool = False, intensity: float = 50) -> VectorFieldSet:
    """Four-dimensional jump-diffusion with two Wiener drivers and one unit Poisson driver."""
    second = LinearField(TRIG_FIELD_LINEAR) if linear else trig_field()
    spec = JumpSpec(1, Fraction(intensity))
    return VectorFieldSet(LinearField(TRIG_A0), (LinearField(TRIG_A1), second), ((spec, LinearField(TRIG_A3)),))


def linear_jump_fields(seed: int = 7, dimension: int = 2, intensity: float = 5, scale: float = 0.4) -> VectorFieldSet:
    """Linear jump-diffusion with seeded random matrices (one Wiener, one unit Poisson)."""
    rng = np.random.default_rng(seed)
    mats = [scale * rng.standard_normal((dimension, dimension)) for _ in range(3)]
    spec = JumpSpec(1, Fraction(intensity))
    return VectorFieldSet(LinearField(mats[0]), (LinearField(mats[1]),), ((spec, LinearField(mats[2])),))


def preset(name: str) -> ExperimentConfig:
    """Named experiment configurations.

    ``trig`` and ``trig-smoke`` (200 paths) reproduce the trigonometric
    four-dimensional experiment; ``trig-linear`` swaps the trigonometric
    field for its linear part; ``linear-jump`` is the two-dimensional
    convergence-order check.
    """
    if name in ("trig", "trig-smoke", "trig-linear"):
        return ExperimentConfig(
            fields=trig_fields(linear=name == "trig-linear"),
            y0=np.array(TRIG_Y0),
            horizon=0.25,
            steps=tuple(2.0**-k for k in range(4, 10)),
            paths=200 if name == "trig-smoke" else 1000,
            schemes=("taylor-ms-2", "masri-2"),
            fine_ratio=32,
            reference="taylor-ms-2",
            max_derivative_order=6,
        )
    if name == "linear-jump":
        return ExperimentConfig(
            fields=linear_jump_fields(),
            y0=np.array([1.0, 0.5]),
            horizon=1.0,
            steps=tuple(2.0**-k for k in range(4, 9)),
            paths=500,
            schemes=("taylor-ms-1", "taylor-ms-2"),
            fine_ratio=32,
            reference="taylor-ms-2",
            timing_paths=50,
            timing_repeats=1,
        )
    raise DomainError(f"unknown preset {name!r}; known: trig, trig-smoke, trig-linear, linear-jump")


# ---------------------------------------------------------------------------
# one step
# ---------------------------------------------------------------------------
class CompiledScheme:
    """A scheme table bound to an operator engine for fixed fields."""

    def __init__(self, table: SchemeTable, fields: VectorFieldSet, max_order: int):
        self.table = table
        self.rows = [(w, e) for w, e in table.rows if e]
        words = [w for w, _ in self.rows if w]
        self.engine = OperatorEngine(fields, words, max_order)
        self.required = {w for w in table.required_integral_words if w}

    @property
    def name(self) -> str:
        return self.table.name

    def step(self, sample: StepSample, y: np.ndarray) -> np.ndarray:
        ops = self.engine.evaluate(y)
        out = np.zeros_like(y)
        for w, expr in self.rows:
            coeff = expr.evaluate(sample.integrals)
            vec = y if w == EMPTY else ops[w]
            out = out + np.reshape(coeff, np.shape(coeff) + (1,)) * vec
        return out


def compile_scheme(name: str, fields: VectorFieldSet, max_order: int = 4) -> CompiledScheme:
    kind, n, grading = parse_scheme_name(name)
    table = build_table(kind, n, fields.alphabet.with_max_grade(max(n + 1, 2)), grading)
    return CompiledScheme(table, fields, max_order)


def run_step(
    table: SchemeTable | CompiledScheme, sample: StepSample, y: np.ndarray, fields: VectorFieldSet | None = None, max_order: int = 4
) -> np.ndarray:
    """One step ``y' = sum over rows of expr(sample) * V~_w(id)(y)``.

    Args:
        table: a scheme table, or a compiled scheme to reuse its engine.
        sample: integrals over the step.
        y: state ``(N,)`` or ``(P, N)``.
        fields: vector fields (required with a plain table).
        max_order: jet budget for nonlinear fields.

    Returns:
        The new state.
    """
    if not isinstance(table, CompiledScheme):
        if fields is None:
            raise DomainError("run_step needs the vector fields to evaluate a table")
        table = CompiledScheme(table, fields, max_order)
    return table.step(sample, np.asarray(y, dtype=float))


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------
@dataclass
class SchemeResult:
    scheme: str
    h: float
    mse: float
    mse_se: float
    cpu_seconds: float
    p: int
    M: int
    paths: int
    seed: int
    sup_sq: np.ndarray | None = field(default=None, repr=False)


@dataclass
class OrderFit:
    slope: float
    stderr: float
    admitted: list[float]
    excluded: list[float]


@dataclass
class ConvergenceReport:
    results: list[SchemeResult] = field(default_factory=list)
    noise_digest: str = ""
    timing_paths: int = 0
    orders: dict[str, OrderFit] = field(default_factory=dict)
    y0_norm: float = 1.0

    @property
    def schemes(self) -> list[str]:
        return list(dict.fromkeys(r.scheme for r in self.results))

    def by_scheme(self, name: str) -> list[SchemeResult]:
        return sorted((r for r in self.results if r.scheme == name), key=lambda r: -r.h)

    def result(self, name: str, h: float) -> SchemeResult:
        for r in self.results:
            if r.scheme == name and math.isclose(r.h, h):
                return r
        raise KeyError((name, h))

    def paired(self, a: str, b: str, h: float, z: float = 1.96) -> tuple[float, float, float]:
        """Mean of sup|err_a|^2 - sup|err_b|^2 over paths with a ``z`` interval."""
        da, db = self.result(a, h).sup_sq, self.result(b, h).sup_sq
        if da is None or db is None:
            raise DomainError("per-path errors are not available for this report")
        diff = da - db
        mean = float(diff.mean())
        se = float(diff.std(ddof=1) / math.sqrt(len(diff))) if len(diff) > 1 else float("nan")
        return mean, mean - z * se, mean + z * se


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------
def _required_words(schemes: Sequence[CompiledScheme]) -> set[Word]:
    req: set[Word] = set()
    for s in schemes:
        req |= s.required
    return req


def _chunk_bounds(config: ExperimentConfig, workers: int) -> list[tuple[int, int]]:
    blocks = math.ceil(config.paths / config.block_size)
    per = math.ceil(blocks / max(1, workers))
    out = []
    for b in range(0, blocks, per):
        start = b * config.block_size
        stop = min(config.paths, (b + per) * config.block_size)
        out.append((b, stop - start))
    return out


def _simulate_chunk(args) -> tuple[dict, bytes]:
    config_json, first_block, n_paths = args
    config = ExperimentConfig.from_json(config_json) if isinstance(config_json, dict) else config_json
    fields = config.fields
    order = config.max_derivative_order
    tests = {name: compile_scheme(name, fields, order) for name in config.schemes}
    ref = None if config.reference == EXACT_REFERENCE else compile_scheme(config.reference, fields, order)
    req = _required_words(list(tests.values()) + ([ref] if ref else []))
    drivers = config.driver_config()
    h_f = config.fine_step
    ratios = [round(h / h_f) for h in config.steps]
    levels = sorted(set(ratios))
    # each level aggregates the completed samples of the largest finer level dividing it
    source = {r: max([1] + [q for q in levels if q < r and r % q == 0]) for r in levels}
    pending: dict[int, StepSample | None] = {r: None for r in levels}
    counts = {r: 0 for r in levels}

    y_ref = np.tile(config.y0, (n_paths, 1))
    states = {(name, r): y_ref.copy() for name in tests for r in levels}
    sup = {(name, r): np.zeros(n_paths) for name in tests for r in levels}
    digest = hashlib.sha256()
    drift = fields.drift.matrix if ref is None else None

    for k in range(config.fine_steps):
        fine = sample_step(drivers, req, paths=n_paths, step_index=k, h=h_f, first_block=first_block)
        digest.update(fine.dW.tobytes())
        for ev in fine.events.values():
            digest.update(ev.time.tobytes())
        if ref is None:
            y_ref = np.tile(scipy.linalg.expm((k + 1) * h_f * drift) @ config.y0, (n_paths, 1))
        else:
            y_ref = ref.step(fine, y_ref)
        done = {1: fine}
        for r in levels:
            src = done.get(source[r])
            if src is None:
                continue
            if r == 1:
                done[r] = fine
            else:
                acc = pending[r]
                pending[r] = src if acc is None else chen_aggregate(acc, src, keep_events=False)
                counts[r] += source[r]
                if counts[r] < r:
                    continue
                done[r] = pending[r]
                pending[r], counts[r] = None, 0
            for name, scheme in tests.items():
                y = scheme.step(done[r], states[(name, r)])
                states[(name, r)] = y
                err = np.sum((y - y_ref) ** 2, axis=1)
                np.maximum(sup[(name, r)], err, out=sup[(name, r)])
    result = {f"{name}|{r}": sup[(name, r)] for name in tests for r in levels}
    return result, digest.digest()


def _timing(config: ExperimentConfig, name: str, h: float) -> tuple[float, int, int]:
    scheme = compile_scheme(name, config.fields, config.max_derivative_order)
    p = max(1, math.ceil(config.p_scale / h))
    drivers = config.driver_config(fourier_terms=p)
    n_steps = round(config.horizon / h)
    req = scheme.required
    best = math.inf
    for _ in range(config.timing_repeats):
        y = np.tile(config.y0, (config.timing_paths, 1))
        start = time.perf_counter()
        for k in range(n_steps):
            sample = sample_step(drivers, req, paths=config.timing_paths, step_index=k, h=h)
            y = scheme.step(sample, y)
        best = min(best, time.perf_counter() - start)
    return best, p, drivers.grid


def worker_count() -> int:
    """Worker processes from ``ASRI_WORKERS`` (default 1)."""
    raw = os.environ.get("ASRI_WORKERS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise DomainError(f"ASRI_WORKERS must be an integer, got {raw!r}") from None
    return max(1, n)


def simulate_paths(config: ExperimentConfig, workers: int | None = None, timing: bool = True) -> ConvergenceReport:
    """Run the paired fine/coarse experiment and fit convergence orders.

    Args:
        config: the experiment.
        workers: worker processes (default from ``ASRI_WORKERS``).
        timing: measure per-scheme CPU time on regenerated coarse samples.

    Returns:
        A ``ConvergenceReport`` with per-path sup errors attached.
    """
    workers = worker_count() if workers is None else max(1, workers)
    chunks = _chunk_bounds(config, workers)
    if workers > 1 and len(chunks) > 1:
        import multiprocessing

        payload = config.to_json()
        with multiprocessing.get_context("fork").Pool(min(workers, len(chunks))) as pool:
            parts = pool.map(_simulate_chunk, [(payload, b, n) for b, n in chunks])
    else:
        parts = [_simulate_chunk((config, b, n)) for b, n in chunks]

    digest = hashlib.sha256()
    for _, d in parts:
        digest.update(d)
    h_f = config.fine_step
    report = ConvergenceReport(noise_digest=digest.hexdigest(), timing_paths=config.timing_paths if timing else 0)
    report.y0_norm = float(np.linalg.norm(config.y0))
    for name in config.schemes:
        for h in config.steps:
            key = f"{name}|{round(h / h_f)}"
            sup_sq = np.concatenate([part[key] for part, _ in parts])
            m = float(sup_sq.mean())
            mse = math.sqrt(m)
            se = float(sup_sq.std(ddof=1) / math.sqrt(len(sup_sq))) / (2 * mse) if len(sup_sq) > 1 and mse > 0 else 0.0
            cpu, p, M = _timing(config, name, h) if timing else (float("nan"), 0, 0)
            report.results.append(SchemeResult(name, h, mse, se, cpu, p, M, config.paths, config.seed, sup_sq))
    fit_order(report)
    return report


def refinement_check(config: ExperimentConfig, workers: int | None = None) -> dict[tuple[str, float], tuple[float, float, bool]]:
    """Rerun with the fine step halved and compare every MSE.

    Returns:
        ``(scheme, h) -> (|mse change|, mse_se, change < mse_se)``.
    """
    base = simulate_paths(config, workers, timing=False)
    finer = simulate_paths(config.with_(fine_ratio=2 * config.fine_ratio), workers, timing=False)
    out = {}
    for r in base.results:
        change = abs(finer.result(r.scheme, r.h).mse - r.mse)
        out[(r.scheme, r.h)] = (change, r.mse_se, change < r.mse_se)
    return out


# ---------------------------------------------------------------------------
# order fitting
# ---------------------------------------------------------------------------
def fit_slope(h: Sequence[float], mse: Sequence[float]) -> tuple[float, float]:
    """Least-squares slope of log(mse) against log(h) with its standard error."""
    x, y = np.log(np.asarray(h, float)), np.log(np.asarray(mse, float))
    if len(x) < 2:
        return float("nan"), float("nan")
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    if len(x) > 2:
        resid = y - A @ coef
        s2 = float(resid @ resid) / (len(x) - 2)
        se = math.sqrt(s2 / float(((x - x.mean()) ** 2).sum()))
    else:
        se = float("nan")
    return float(coef[0]), se


def fit_order(report: ConvergenceReport) -> dict[str, OrderFit]:
    """Fit the global order of every scheme in ``report``.

    Points are admitted at and below the largest ``h`` whose MSE is under
    ``0.5 * |y0|``; larger steps are pre-asymptotic and recorded as excluded.

    Returns:
        ``scheme -> OrderFit`` (also stored on the report).
    """
    out = {}
    limit = 0.5 * report.y0_norm
    for name in report.schemes:
        rows = report.by_scheme(name)
        good = [r.h for r in rows if r.mse < limit]
        cutoff = max(good) if good else -math.inf
        admitted = [r for r in rows if r.h <= cutoff]
        excluded = [r.h for r in rows if r.h > cutoff]
        slope, se = fit_slope([r.h for r in admitted], [r.mse for r in admitted])
        out[name] = OrderFit(slope, se, [r.h for r in admitted], excluded)
    report.orders = out
    return out


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------
def write_csv(report: ConvergenceReport, path: str | Path) -> Path:
    path = Path(path)
    lines = [
        "# mse = sqrt(mean over paths of sup over the coarse grid of |y_ref - y|^2)",
        f"# cpu_seconds = minimum over repeats of the scheme loop on {report.timing_paths} paths",
        f"# noise_digest = {report.noise_digest}",
        ",".join(CSV_COLUMNS),
    ]
    for r in report.results:
        lines.append(",".join(str(v) for v in (r.scheme, r.h, r.mse, r.mse_se, r.cpu_seconds, r.p, r.M, r.paths, r.seed)))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path: str | Path) -> list[dict]:
    import csv

    with open(path) as fh:
        rows = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(rows))


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _panel(x0: float, series: list[tuple[str, list[tuple[float, float]]]], xlabel: str) -> list[str]:
    w, h, pad = 360.0, 280.0, 50.0
    pts = [(x, y) for _, s in series for x, y in s if x > 0 and y > 0 and math.isfinite(x) and math.isfinite(y)]
    out = [f'<rect x="{x0}" y="0" width="{w + 2 * pad}" height="{h + 2 * pad}" fill="white" stroke="black"/>']
    if not pts:
        return out
    lx = [math.log10(x) for x, _ in pts]
    ly = [math.log10(y) for _, y in pts]
    xmin, xmax = min(lx), max(lx) + 1e-12
    ymin, ymax = min(ly), max(ly) + 1e-12

    def px(x: float) -> float:
        return x0 + pad + (math.log10(x) - xmin) / (xmax - xmin) * w

    def py(y: float) -> float:
        return pad + h - (math.log10(y) - ymin) / (ymax - ymin) * h

    out.append(f'<text x="{x0 + pad + w / 2}" y="{h + 2 * pad - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="{x0 + 12}" y="{pad + h / 2}" transform="rotate(-90 {x0 + 12} {pad + h / 2})" text-anchor="middle">mse</text>')
    for n, (name, s) in enumerate(series):
        s = [(x, y) for x, y in s if x > 0 and y > 0 and math.isfinite(x) and math.isfinite(y)]
        color = _COLORS[n % len(_COLORS)]
        coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in sorted(s))
        if coords:
            out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for x, y in s:
            out.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="{color}"/>')
        out.append(f'<text x="{x0 + pad + 8}" y="{pad + 14 + 16 * n}" fill="{color}">{escape(name)}</text>')
    return out


def write_svg(report: ConvergenceReport, path: str | Path) -> Path:
    """Two log-log panels: error against step size and against CPU time."""
    path = Path(path)
    by_h = [(name, [(r.h, r.mse) for r in report.by_scheme(name)]) for name in report.schemes]
    by_cpu = [(name, [(r.cpu_seconds, r.mse) for r in report.by_scheme(name)]) for name in report.schemes]
    body = _panel(0.0, by_h, "step size h") + _panel(470.0, by_cpu, "cpu seconds")
    svg = (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        '<svg xmlns="http://www.w3.org/2000/svg" width="940" height="380" font-family="sans-serif" font-size="12">\n'
        + "\n".join(body)
        + "\n</svg>\n"
    )
    path.write_text(svg)
    return path


def write_gnuplot(report: ConvergenceReport, path: str | Path, csv_path: str | Path) -> Path:
    path = Path(path)
    lines = [
        "set datafile separator ','",
        "set logscale xy",
        "set key left top",
        "set terminal pngcairo size 1000,400",
        f"set output '{Path(path).with_suffix('.png').name}'",
        "set multiplot layout 1,2",
        "set xlabel 'h'; set ylabel 'mse'",
    ]
    plots = [f"'{csv_path}' using (strcol(1) eq '{n}' ? $2 : 1/0):3 with linespoints title '{n}'" for n in report.schemes]
    lines.append("plot " + ", ".join(plots) if plots else "# no data")
    lines.append("set xlabel 'cpu seconds'")
    plots = [f"'{csv_path}' using (strcol(1) eq '{n}' ? $5 : 1/0):3 with linespoints title '{n}'" for n in report.schemes]
    lines.append("plot " + ", ".join(plots) if plots else "# no data")
    lines.append("unset multiplot")
    path.write_text("\n".join(lines) + "\n")
    return path


def emit(report: ConvergenceReport, out_dir: str | Path, formats: Sequence[str] = ("csv", "svg", "gnuplot"), stem: str = "convergence") -> dict[str, Path]:
    """Write the report in the requested formats.

    Args:
        report: the report.
        out_dir: output directory (created if missing).
        formats: any of ``csv``, ``svg``, ``gnuplot``.
        stem: base file name.

    Returns:
        ``format -> path``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    unknown = set(formats) - {"csv", "svg", "gnuplot"}
    if unknown:
        raise DomainError(f"unknown output formats {sorted(unknown)}")
    written = {}
    csv_path = out_dir / f"{stem}.csv"
    if "csv" in formats or "gnuplot" in formats:
        written["csv"] = write_csv(report, csv_path)
    if "svg" in formats:
        written["svg"] = write_svg(report, out_dir / f"{stem}.svg")
    if "gnuplot" in formats:
        written["gnuplot"] = write_gnuplot(report, out_dir / f"{stem}.gp", csv_path.name)
    return written


def crossover(report: ConvergenceReport, fast: str, accurate: str) -> dict[str, float]:
    """Compare CPU time at equal error by log-log interpolation.

    Returns:
        ``ratio_at_largest_error`` and ``ratio_at_smallest_error``: CPU of
        ``accurate`` divided by CPU of ``fast`` at the largest and smallest
        error both schemes reach.
    """
    a = sorted((r.mse, r.cpu_seconds) for r in report.by_scheme(fast))
    b = sorted((r.mse, r.cpu_seconds) for r in report.by_scheme(accurate))
    lo = max(a[0][0], b[0][0])
    hi = min(a[-1][0], b[-1][0])
    if lo >= hi:
        raise DomainError("the error ranges of the two schemes do not overlap")

    def cpu_at(series, err):
        xs = np.log([e for e, _ in series])
        ys = np.log([c for _, c in series])
        return float(np.exp(np.interp(math.log(err), xs, ys)))

    return {
        "ratio_at_largest_error": cpu_at(b, hi) / cpu_at(a, hi),
        "ratio_at_smallest_error": cpu_at(b, lo) / cpu_at(a, lo),
        "largest_error": hi,
        "smallest_error": lo,
    }
