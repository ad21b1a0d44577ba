"""
Acceptance suite: twelve end-to-end criteria at their stated tolerances.

Each experiment runs once per session (cached); the determinism criterion
reruns all of them and compares report digests. Every criterion prints one
line of the form ``[PASS] criterion N: ...`` or ``[FAIL] criterion N: ...``.
Expect several minutes of runtime on one core.
"""

import math

import numpy as np
import pytest

from marcusflow.cli import report_digest
from marcusflow.experiments import run_experiment

pytestmark = pytest.mark.slow

EXPERIMENTS = [
    "rotation_decomposition", "constituent_sde", "no_explosion", "marcus_order", "ivk",
    "truncation", "alternate", "attain_example1", "attain_example2", "trivial_bundle",
    "reductive",
]

RESULTS = {}


@pytest.fixture(scope="session")
def reports():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = run_experiment(name)
        return cache[name]

    return get


def _values(rep):
    return {c["name"]: c["value"] for c in rep["checks"]}


def _report(num, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {title}: {detail}"
    RESULTS[num] = line
    print(line)
    return ok


def test_criterion_01_rotation_factorization(reports):
    rep = reports("rotation_decomposition")
    v, p = _values(rep), rep["params"]
    step = p["dt"]
    ok = (p["T"] == 1.4 and v["reassembly_max_abs"] <= 1e-9
          and v["entries_sec_tan_sin_cos"] <= 1e-9
          and v["breakdown_time_minus_pi_over_2"] <= step
          and v["restart_time_minus_target"] <= step)
    assert _report(1, "rotation factorization", ok,
                   f"reassembly {v['reassembly_max_abs']:.2e}, entries "
                   f"{v['entries_sec_tan_sin_cos']:.2e}, restart offset "
                   f"{v['restart_time_minus_target']:.2e} (step {step:g})")


def test_criterion_02_constituent_sde(reports):
    rep = reports("constituent_sde")
    v, p, m = _values(rep), rep["params"], rep["metrics"]
    ok = (p["generators"] == 20 and p["k"] == 2 and len(p["jumps"]) == 3
          and np.allclose(sorted(m["dt"]), [2.5e-4, 5e-4, 1e-3])
          and v["max_deviation_slope"] >= 0.8 and v["deviation_finite"] == 1.0)
    assert _report(2, "constituent-SDE equivalence", ok,
                   f"slope {v['max_deviation_slope']:.3f} (>= 0.8)")


def test_criterion_03_no_explosion(reports):
    rep = reports("no_explosion")
    v, p = _values(rep), rep["params"]
    ok = (p["spectra"] == 100 and p["T"] == 5 and v["non_finite_runs"] == 0
          and v["breakdown_runs"] == 0)
    assert _report(3, "no-explosion certificate", ok,
                   f"{v['non_finite_runs']} non-finite, {v['breakdown_runs']} breakdowns "
                   f"over {p['spectra']} spectra")


def test_criterion_04_marcus_order(reports):
    rep = reports("marcus_order")
    v, p = _values(rep), rep["params"]
    ok = (p["halvings"] == 4 and v["strong_order_slope"] >= 0.9
          and v["jump_transport_error"] <= 1e-9 and p["max_jump"] <= 1)
    assert _report(4, "Marcus solver order", ok,
                   f"slope {v['strong_order_slope']:.3f} (>= 0.9), jump error "
                   f"{v['jump_transport_error']:.2e} (<= 1e-9)")


def test_criterion_05_ivk(reports):
    rep = reports("ivk")
    v, p = _values(rep), rep["params"]
    ratios = [v["residual_ratio_1"], v["residual_ratio_2"]]
    ok = (p["levels"] == 3 and all(1.6 <= r <= 2.4 for r in ratios)
          and p["commuting_dt"] == 1e-4 and v["commuting_endpoint_error"] <= 1e-6)
    assert _report(5, "IVK formula", ok,
                   f"ratios {ratios[0]:.3f}, {ratios[1]:.3f} (2 +- 20%), commuting error "
                   f"{v['commuting_endpoint_error']:.2e} (<= 1e-6)")


def test_criterion_06_truncation(reports):
    rep = reports("truncation")
    v, p = _values(rep), rep["params"]
    ok = (p["ensemble"] == 100 and v["bound_holds_fraction"] >= 0.95
          and v["single_jump_slope"] >= 1.9)
    assert _report(6, "truncation bound", ok,
                   f"bound holds on {100 * v['bound_holds_fraction']:.0f}% (>= 95%), "
                   f"single-jump slope {v['single_jump_slope']:.3f} (>= 1.9)")


def test_criterion_07_alternate(reports):
    rep = reports("alternate")
    v, p = _values(rep), rep["params"]
    margins = p["margins"]
    ok = (math.isclose(p["T"], 2 * math.pi) and sorted(margins) == [2.5e-3, 5e-3, 1e-2]
          and all(v[f"restarts_margin_{m:g}"] >= 2 for m in margins)
          and all(v[f"recompose_error_margin_{m:g}"] <= 1e-4 for m in margins)
          and v["margin_monotone_breakpoints"] == 1.0)
    worst = max(v[f"recompose_error_margin_{m:g}"] for m in margins)
    restarts = [v[f"restarts_margin_{m:g}"] for m in margins]
    assert _report(7, "alternate decomposition", ok,
                   f"restarts {restarts}, worst recomposition {worst:.2e} (<= 1e-4), monotone")


def test_criterion_08_attain_example1(reports):
    rep = reports("attain_example1")
    v, p = _values(rep), rep["params"]
    ok = (p["resolution"] == 600 and p["half_width"] == 3 and list(p["point"]) == [1, 1]
          and v["A1_agreement_half_plane"] >= 0.99 and v["attainability_index"] == 3
          and v["C1_agreement_quadrant"] >= 0.98 and rep["wall_time"] <= 120)
    assert _report(8, "attainability example 1", ok,
                   f"A1 {v['A1_agreement_half_plane']:.4f}, index {v['attainability_index']}, "
                   f"C1 {v['C1_agreement_quadrant']:.4f}, {rep['wall_time']:.0f}s (<= 120s)")


def test_criterion_09_attain_example2(reports):
    rep = reports("attain_example2")
    v, p = _values(rep), rep["params"]
    mism = [v[f"strip_mismatch_k{k}"] for k in range(1, 6)]
    ok = (p["kmax"] == 5 and p["layers"] == 1 and all(c == 0 for c in mism)
          and v["verdict_window_unbounded"] == 1.0)
    assert _report(9, "attainability example 2", ok,
                   f"mismatches beyond one layer {mism}, verdict {rep['metrics']['verdict']}")


def test_criterion_10_trivial_bundle(reports):
    rep = reports("trivial_bundle")
    v = _values(rep)
    ok = v["recompose_error"] <= 1e-12
    assert _report(10, "trivial bundle", ok, f"recomposition {v['recompose_error']:.2e} (<= 1e-12)")


def test_criterion_11_reductive(reports):
    rep = reports("reductive")
    v, p = _values(rep), rep["params"]
    ok = (list(p["W"]) == [1, 0, 1] and p["dt"] == 1e-4
          and 0.7 <= v["composite_error_slope"] <= 1.3
          and v["projection_residual"] <= 1e-4
          and v["connection_residual"] <= p["connection_tol"]
          and v["swapped_control_connection_residual"] > p["connection_tol"])
    assert _report(11, "reductive case", ok,
                   f"slope {v['composite_error_slope']:.3f}, projection "
                   f"{v['projection_residual']:.2e} (<= 1e-4), swap control "
                   f"{v['swapped_control_connection_residual']:.2f} fails connection test")


def test_criterion_12_determinism(reports):
    first = {n: report_digest(reports(n)) for n in EXPERIMENTS}
    second = {n: report_digest(run_experiment(n)) for n in EXPERIMENTS}
    differing = [n for n in EXPERIMENTS if first[n] != second[n]]
    assert _report(12, "determinism", not differing,
                   f"{len(EXPERIMENTS) - len(differing)}/{len(EXPERIMENTS)} report digests identical"
                   + (f", differing: {differing}" if differing else ""))
