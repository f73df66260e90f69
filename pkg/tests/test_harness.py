from __future__ import annotations

import json
import math
import xml.etree.ElementTree as ET
from fractions import Fraction

import numpy as np
import pytest

from asri.drivers import DriverConfig, sample_step
from asri.errors import DomainError
from asri.harness import (
    CSV_COLUMNS,
    ConvergenceReport,
    ExperimentConfig,
    SchemeResult,
    compile_scheme,
    crossover,
    emit,
    fit_order,
    fit_slope,
    preset,
    read_csv,
    refinement_check,
    run_step,
    simulate_paths,
)
from asri.operators import LinearField, VectorFieldSet
from asri.schemes import asri_direct
from asri.words import JumpSpec


def scalar_fields(a0: float, a1: float | None = None, a3: float | None = None, lam: int = 2) -> VectorFieldSet:
    wiener = () if a1 is None else (LinearField([[a1]]),)
    jumps = () if a3 is None else ((JumpSpec(1, Fraction(lam)), LinearField([[a3]])),)
    return VectorFieldSet(LinearField([[a0]]), wiener, jumps)


# one step -----------------------------------------------------------------------------------------
def test_pure_drift_euler_step():
    A = np.array([[0.2, -0.1], [0.3, 0.05]])
    fields = VectorFieldSet(LinearField(A))
    scheme = compile_scheme("taylor-ms-1", fields)
    s = sample_step(DriverConfig(wiener_count=0), scheme.required, paths=3, h=0.1)
    y = np.array([[1.0, 2.0], [0.0, 1.0], [-1.0, 0.5]])
    np.testing.assert_allclose(scheme.step(s, y), y + 0.1 * y @ A.T, rtol=1e-14)


def test_scalar_milstein_step():
    a0, a1, a3, lam, h = 0.3, 0.5, -0.4, 2, 0.1
    fields = scalar_fields(a0, a1, a3, lam)
    scheme = compile_scheme("taylor-ms-2", fields)
    cfg = DriverConfig(wiener_count=1, jumps=(JumpSpec(1, Fraction(lam)),), seed=3)
    s = sample_step(cfg, scheme.required, paths=200, h=h)
    y = np.ones((200, 1))
    dW = s.dW[:, 0]
    N = s.events[1].counts(200)
    dJ = N - lam * h
    # commuting scalars: the noise part is exp-free Milstein with the product rule for double integrals
    expected = 1 + a0 * h + a1 * dW + a3 * dJ + a1 * a1 * (dW**2 - h) / 2 + a3 * a3 * (dJ**2 - N) / 2 + a1 * a3 * dW * dJ
    np.testing.assert_allclose(scheme.step(s, y)[:, 0], expected, rtol=1e-12)


def test_asri_on_zero_noise_returns_state():
    fields = scalar_fields(0.0, 1.0)
    s = sample_step(DriverConfig(wiener_count=1), paths=4, h=1e-300)
    s.integrals = {w: np.zeros(4) if w else np.ones(4) for w in s.integrals}
    table = asri_direct(1, fields.alphabet.with_max_grade(2))
    y = np.array([[1.0], [2.0], [3.0], [4.0]])
    np.testing.assert_allclose(run_step(table, s, y, fields), y)
    with pytest.raises(DomainError):
        run_step(table, s, y)


# strong order against the exact scalar solution --------------------------------------------------------
def exact_scalar_errors(name: str, fields: VectorFieldSet, steps, paths: int = 2000, T: float = 1.0) -> list[float]:
    a0 = fields.drift.matrix[0, 0]
    a1 = fields.wiener[0].matrix[0, 0] if fields.wiener else 0.0
    spec, jf = fields.jumps[0] if fields.jumps else (None, None)
    lam = float(spec.intensity) if spec else 0.0
    a3 = jf.matrix[0, 0] if jf is not None else 0.0
    scheme = compile_scheme(name, fields)
    cfg = DriverConfig(wiener_count=len(fields.wiener), jumps=tuple(s for s, _ in fields.jumps), seed=11)
    out = []
    for h in steps:
        y = np.ones((paths, 1))
        W = np.zeros(paths)
        N = np.zeros(paths)
        for k in range(round(T / h)):
            s = sample_step(cfg, scheme.required, paths=paths, step_index=k, h=h)
            y = scheme.step(s, y)
            if fields.wiener:
                W += s.dW[:, 0]
            if spec:
                N += s.events[1].counts(paths)
        exact = np.exp((a0 - lam * a3 - a1 * a1 / 2) * T + a1 * W) * (1 + a3) ** N
        out.append(math.sqrt(np.mean((y[:, 0] - exact) ** 2)))
    return out


@pytest.mark.parametrize(
    "name,fields,order",
    [
        ("taylor-ms-1", scalar_fields(0.4, 0.6), 0.5),
        ("taylor-ms-2", scalar_fields(0.4, 0.6), 1.0),
        ("taylor-ms-2", scalar_fields(0.4, 0.6, -0.3), 1.0),
        ("asri-1", scalar_fields(0.4, 0.6), 1.0),
    ],
    ids=["euler-wiener", "milstein-wiener", "milstein-jump", "asri1-wiener"],
)
def test_strong_order_against_exact_solution(name, fields, order):
    steps = [2.0**-k for k in range(3, 8)]
    slope, se = fit_slope(steps, exact_scalar_errors(name, fields, steps))
    assert abs(slope - order) < 0.15, (slope, se)


def test_ode_limit_against_matrix_exponential():
    A = np.array([[-0.5, 1.0], [-1.0, -0.2]])
    config = ExperimentConfig(
        fields=VectorFieldSet(LinearField(A)), y0=np.array([1.0, 0.0]), horizon=1.0,
        steps=(2.0**-3, 2.0**-4, 2.0**-5, 2.0**-6), paths=2, schemes=("taylor-ms-1",),
        fine_ratio=1, reference="exact",
    )
    report = simulate_paths(config, timing=False)
    assert abs(report.orders["taylor-ms-1"].slope - 1.0) < 0.1


# reproducibility -------------------------------------------------------------------------------------------
def small_config(**changes) -> ExperimentConfig:
    base = preset("linear-jump").with_(paths=40, block_size=16, steps=(0.25, 0.125), horizon=0.5, fine_ratio=4)
    return base.with_(**changes)


def test_simulation_is_deterministic_and_chunk_invariant():
    a = simulate_paths(small_config(), workers=1, timing=False)
    b = simulate_paths(small_config(), workers=1, timing=False)
    c = simulate_paths(small_config(), workers=2, timing=False)
    assert a.noise_digest == b.noise_digest
    for r in a.results:
        np.testing.assert_array_equal(r.sup_sq, b.result(r.scheme, r.h).sup_sq)
        np.testing.assert_array_equal(r.sup_sq, c.result(r.scheme, r.h).sup_sq)
    assert simulate_paths(small_config(seed=1), timing=False).noise_digest != a.noise_digest


def test_timing_fields_are_filled():
    report = simulate_paths(small_config(timing_paths=5, timing_repeats=1), timing=True)
    for r in report.results:
        assert r.cpu_seconds > 0 and r.p == math.ceil(8.0 / r.h) and r.M > 0


# configuration --------------------------------------------------------------------------------------------
def test_config_json_round_trip():
    config = small_config()
    again = ExperimentConfig.from_json(json.loads(json.dumps(config.to_json())))
    assert again.to_json() == config.to_json()
    assert ExperimentConfig.from_json({"schema_version": 1, "preset": "trig-smoke"}).paths == 200


def test_config_validation():
    with pytest.raises(DomainError):
        small_config(steps=(0.3, 0.125))
    with pytest.raises(DomainError):
        ExperimentConfig.from_json({"schema_version": 99})
    with pytest.raises(DomainError):
        small_config(reference="exact")
    with pytest.raises(DomainError):
        small_config(schemes=("rk4",))
    with pytest.raises(DomainError):
        preset("nope")


# fitting and output -----------------------------------------------------------------------------------------
def synthetic_report(points: int = 4) -> ConvergenceReport:
    rep = ConvergenceReport(y0_norm=10.0, timing_paths=5)
    rng = np.random.default_rng(0)
    for name, order, cost in (("taylor-ms-1", 0.5, 1.0), ("taylor-ms-2", 1.0, 2.0)):
        for k in range(points):
            h = 2.0**-k
            rep.results.append(SchemeResult(name, h, h**order, 0.01, cost / h, 1, 1, 10, 0, rng.random(10) + order))
    return rep


@pytest.mark.parametrize("order", [0.5, 1.0, 1.5])
def test_fit_slope_recovers_power_law(order):
    h = [2.0**-k for k in range(6)]
    slope, se = fit_slope(h, [3 * x**order for x in h])
    assert slope == pytest.approx(order) and se == pytest.approx(0.0, abs=1e-12)


def test_fit_order_excludes_pre_asymptotic_points():
    rep = synthetic_report()
    rep.results.append(SchemeResult("taylor-ms-2", 2.0, 50.0, 0.1, 1.0, 1, 1, 10, 0))
    fits = fit_order(rep)
    assert fits["taylor-ms-2"].excluded == [2.0]
    assert fits["taylor-ms-2"].slope == pytest.approx(1.0)
    assert fits["taylor-ms-1"].slope == pytest.approx(0.5)


def test_paired_interval():
    rep = synthetic_report()
    mean, lo, hi = rep.paired("taylor-ms-2", "taylor-ms-1", 1.0)
    assert lo < mean < hi
    assert mean == pytest.approx(float(np.mean(rep.result("taylor-ms-2", 1.0).sup_sq - rep.result("taylor-ms-1", 1.0).sup_sq)))


def test_crossover():
    rep = synthetic_report()
    c = crossover(rep, "taylor-ms-1", "taylor-ms-2")
    # ms-1 cost 1/h at error h^0.5, ms-2 cost 2/h at error h: at error e, ratio = 2 e^-1 / e^-2 = 2 e
    assert c["ratio_at_largest_error"] == pytest.approx(2 * c["largest_error"])
    assert c["ratio_at_smallest_error"] == pytest.approx(2 * c["smallest_error"])


def test_emit_empty_report(tmp_path):
    written = emit(ConvergenceReport(), tmp_path)
    lines = written["csv"].read_text().splitlines()
    assert [ln for ln in lines if not ln.startswith("#")] == [",".join(CSV_COLUMNS)]
    ET.parse(written["svg"])
    assert read_csv(written["csv"]) == []


def test_emit_full_report(tmp_path):
    written = emit(synthetic_report(), tmp_path, formats=["csv", "svg", "gnuplot"])
    rows = read_csv(written["csv"])
    assert len(rows) == 8 and set(rows[0]) == set(CSV_COLUMNS)
    root = ET.parse(written["svg"]).getroot()
    assert root.tag.endswith("svg")
    assert "convergence.csv" in written["gnuplot"].read_text()
    with pytest.raises(DomainError):
        emit(synthetic_report(), tmp_path, formats=["pdf"])


@pytest.mark.slow
def test_linear_preset_error_ordering():
    # asri-2 <= taylor-wl-2 <= taylor-ms-2: no step size may show the reverse at paired 95% confidence
    config = preset("trig-linear").with_(schemes=("asri-2", "taylor-wl-2", "taylor-ms-2"))
    rep = simulate_paths(config, timing=False)
    for h in config.steps:
        for better, worse in (("asri-2", "taylor-wl-2"), ("taylor-wl-2", "taylor-ms-2")):
            _, _, hi = rep.paired(worse, better, h)
            assert hi >= 0, (better, worse, h)
    strict = [rep.paired("taylor-wl-2", "asri-2", h)[1] > 0 for h in config.steps]
    assert sum(strict) >= len(strict) - 1


def test_refinement_check_flags():
    out = refinement_check(small_config(paths=16, fine_ratio=2))
    assert set(out) == {(n, h) for n in ("taylor-ms-1", "taylor-ms-2") for h in (0.25, 0.125)}
    for change, se, ok in out.values():
        assert change >= 0 and ok == (change < se)
