import csv
import json
import math

import jsonschema
import numpy as np
import pytest

from resphase.errors import NoCrossing, PreconditionViolation
from resphase.experiments import (
    SINGLE_SCHEMA, TABLE_COLUMNS, TABLE_SCHEMA, UNIFORMITY_SCHEMA, ExperimentTable, SweepConfig, TableRow,
    UniformityConfig, adiabatic_probe, analyze_at_resonance, analyze_point, companion_path, emit, epsilon_grid,
    linear_fit, pseudophase_errors, run_single, run_table1, run_uniformity, sample_ball, sample_epsilons,
    to_json_dict,
)
from resphase.model import PhaseState, example_system
from resphase.resonance import pseudophase_theory_closed_example

# published RMSE column, eps = 0.001 * 0.5**k, k = 1..10
REFERENCE_RMSE = (0.0013758, 0.0009735, 0.0007024, 0.0004924, 0.0003457,
              0.0002458, 0.0001735, 0.0001227, 0.0000876, 0.0000621)


def test_epsilon_grid():
    g = epsilon_grid(1, 3)
    assert g == (5e-4, 2.5e-4, 1.25e-4)
    assert len(epsilon_grid()) == 10


def test_linear_fit_exact_line():
    slope, icpt, res = linear_fit([(0, 1), (1, 3), (2, 5)])
    assert slope == pytest.approx(2.0, abs=1e-14) and icpt == pytest.approx(1.0, abs=1e-14)
    assert res < 1e-14
    with pytest.raises(ValueError):
        linear_fit([(0, 1)])
    with pytest.raises(ValueError):
        linear_fit([(1, 1), (1, 2)])


def test_linear_fit_on_published_column():
    pts = [(math.log(0.001 * 0.5**k), math.log(r)) for k, r in enumerate(REFERENCE_RMSE, start=1)]
    slope, icpt, _ = linear_fit(pts)
    # numpy.polyfit oracle on the rounded column
    assert slope == pytest.approx(0.49780339, abs=1e-8)
    assert icpt == pytest.approx(-2.80112402, abs=1e-8)
    # the published fit was made on unrounded values; rounding moves it by < 1e-3
    assert abs(slope - 0.4977231) < 1e-3 and abs(icpt - (-2.8018347)) < 1e-3


def test_sweep_config_validation():
    with pytest.raises(ValueError):
        SweepConfig(phi0_count=1)
    with pytest.raises(ValueError):
        SweepConfig(epsilon_list=())
    with pytest.raises(ValueError):
        SweepConfig(epsilon_list=(1e-3, -1e-3))
    with pytest.raises(ValueError):
        SweepConfig(i0_mode="fix-everything")
    with pytest.raises(ValueError):
        SweepConfig(format="xml")
    assert SweepConfig(phi0_count=4).phases()[1] == pytest.approx(np.pi / 2)


def test_uniformity_config_validation():
    with pytest.raises(ValueError):
        UniformityConfig(sample_count=10)
    with pytest.raises(ValueError):
        UniformityConfig(alpha=0.7, beta=0.2)
    with pytest.raises(ValueError):
        UniformityConfig(mode="grid")
    with pytest.raises(ValueError):
        UniformityConfig(epsilon=0.0)


# -- single runs -------------------------------------------------------------

@pytest.fixture(scope="module")
def single(example):
    return run_single(example, PhaseState(1.0, 0.0, [0.0], [0.0], 5e-4))


def test_run_single_example(single):
    assert single.xi_theor == pytest.approx(212.20659, abs=1e-5)
    assert single.J0 == 1.0
    assert abs(single.diff) < 0.005
    assert single.energy_drift < 1e-9
    assert abs(single.tau_e - 1.0) < 0.15
    assert single.nu == 0.5 and single.safe and single.margin == float("inf")


def test_run_single_no_crossing(example):
    with pytest.raises(NoCrossing):
        run_single(example, PhaseState(1.0, 0.0, [0.0], [0.0], 1e-3), horizon_tau=0.5)


def test_errors_shrink_with_epsilon(example):
    phases = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    rms = []
    for eps in (2e-3, 5e-4):
        d, ok = pseudophase_errors(example, eps, phases)
        assert np.all(ok)
        rms.append(np.sqrt(np.mean(d**2)))
    assert 1.5 < rms[0] / rms[1] < 2.5  # sqrt(4) = 2


def test_fix_modes_differ_only_through_initial_action(example):
    phases = np.array([0.0, np.pi])
    d_j, _ = pseudophase_errors(example, 1e-3, phases, i0_mode="fix-j0")
    d_i, _ = pseudophase_errors(example, 1e-3, phases, i0_mode="fix-i0")
    # at phi0 = 0 and pi the near-identity shift of the action vanishes
    np.testing.assert_allclose(d_j, d_i, atol=1e-9)


# -- tables ---------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_table(example):
    return run_table1(example, SweepConfig(phi0_count=24, epsilon_list=epsilon_grid(1, 2)))


def test_small_table(small_table):
    assert [r.epsilon for r in small_table.rows] == [5e-4, 2.5e-4]
    assert not small_table.flagged_rows
    for r in small_table.rows:
        assert r.sample_count == 24 and r.failed_count == 0
        assert r.rmse >= abs(r.mean_signed_error)
    # a two point fit passes through both rows
    slope = math.log(small_table.rows[0].rmse / small_table.rows[1].rmse) / math.log(2)
    assert small_table.fit_slope == pytest.approx(slope, rel=1e-12)
    assert small_table.fit_residual < 1e-12
    assert 0.3 < small_table.fit_slope < 0.7


def test_table_rows_sorted_and_flagged(example):
    t = ExperimentTable([TableRow(1e-4, 1.0, 3, 0.0), TableRow(1e-3, 2.0, 3, 0.0)])
    assert [r.epsilon for r in t.rows] == [1e-3, 1e-4]
    short = run_table1(example, SweepConfig(phi0_count=4, epsilon_list=(1e-3,), horizon_tau=0.5))
    row = short.rows[0]
    assert row.flagged and row.failed_count == 4 and row.sample_count == 0 and math.isnan(row.rmse)
    assert math.isnan(short.fit_slope)


# -- sampling and uniformity ------------------------------------------------------

def test_sample_ball_inside_and_prefix_stable():
    pts = sample_ball(7, 300, (1.0, 0.0, 0.0, 0.0), 0.05)
    assert np.all(np.linalg.norm(pts - [1.0, 0.0, 0.0, 0.0], axis=1) <= 0.05 + 1e-15)
    np.testing.assert_array_equal(sample_ball(7, 50, (1.0, 0.0, 0.0, 0.0), 0.05), pts[:50])
    assert not np.array_equal(sample_ball(8, 50, (1.0, 0.0, 0.0, 0.0), 0.05), pts[:50])
    # radial law r^4 for a 4-ball: median radius at 0.5**(1/4)
    r = np.linalg.norm(pts - [1.0, 0.0, 0.0, 0.0], axis=1) / 0.05
    assert abs(np.median(r) - 0.5**0.25) < 0.06


def test_sample_epsilons_range():
    e = sample_epsilons(3, 500, 5e-5, 1e-4)
    assert np.all((e > 5e-5) & (e <= 1e-4))
    np.testing.assert_array_equal(sample_epsilons(3, 10, 5e-5, 1e-4), e[:10])


def test_uniformity_reproducible_and_full_interval(example):
    cfg = UniformityConfig(sample_count=100, seed=5, epsilon=1e-3, alpha=0.0, beta=1.0)
    a = run_uniformity(example, cfg)
    b = run_uniformity(example, cfg)
    np.testing.assert_array_equal(a.xi_frac, b.xi_frac)
    assert a.n_used + a.n_dropped == 100
    assert a.fraction_in_interval == 1.0 and a.expected_fraction == 1.0
    assert np.all((a.xi_frac >= 0) & (a.xi_frac < 1))
    xs, F = a.ecdf()
    assert np.all(np.diff(xs) >= 0) and F[-1] == 1.0


def test_uniformity_epsilon_sweep_mode(example):
    rep = run_uniformity(example, UniformityConfig(mode="epsilon_sweep", sample_count=100, epsilon0=2e-3))
    assert rep.n_used == 100
    assert np.all((rep.epsilons > 1e-3) & (rep.epsilons <= 2e-3))
    assert rep.ks_pvalue > 1e-3


# -- adiabatic invariance and analysis ------------------------------------------------

def test_adiabatic_probe_scaling(example):
    s = PhaseState(1.0, 0.3, [0.0], [0.0], 1e-3)
    p1 = adiabatic_probe(example, s)
    p2 = adiabatic_probe(example, PhaseState(1.0, 0.3, [0.0], [0.0], 5e-4))
    assert p1.tau_stop == pytest.approx(math.sqrt(0.5), abs=2e-3)  # omega_a = J - tau^2 with J = 1 + O(eps)
    assert p1.max_J_deviation < 1e-4 and p1.max_y_deviation < 1e-4
    assert 3.0 < p1.max_J_deviation / p2.max_J_deviation < 5.0
    with pytest.raises(PreconditionViolation):
        adiabatic_probe(example, s, omega_stop=2.0)


def test_analyze_examples(example):
    rep = analyze_at_resonance(example, 1.0, [0.0], [0.0])
    assert rep.tau_star == pytest.approx(1.0, abs=1e-10)
    assert rep.alpha == pytest.approx(1.0) and rep.b == pytest.approx(2.0)
    assert rep.condition_B and rep.condition_C and rep.condition_E
    assert not rep.portrait.oscillatory and rep.exclusion_bands == [] and rep.nu_without_maxima == 0.5
    rep = analyze_point(example_system(h1_scale=2.0), [0.5], [1.0], epsilon=1e-3)
    assert rep.portrait.oscillatory and len(rep.exclusion_bands) == 1
    center, half = rep.exclusion_bands[0]
    assert half == pytest.approx(math.sqrt(1e-3) * abs(math.log(1e-3)))
    assert 0 <= center < 1


# -- output -------------------------------------------------------------------------

def test_emit_table_csv_round_trip(small_table, tmp_path):
    path = emit(small_table, tmp_path / "t.csv")
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == TABLE_COLUMNS
    for got, row in zip(rows[1:], small_table.rows):
        assert float(got[0]) == row.epsilon and float(got[1]) == row.rmse  # exact round trip
        assert got[5] == "false"
    comp = companion_path(path).read_text().splitlines()
    assert comp[0].startswith("# log(epsilon) log(rmse)") and len(comp) == 3


def test_emit_json_validates(small_table, single, tmp_path, example):
    jsonschema.validate(json.loads(emit(small_table, tmp_path / "t.json", "json").read_text()), TABLE_SCHEMA)
    jsonschema.validate(json.loads(emit(single, tmp_path / "s.json", "json").read_text()), SINGLE_SCHEMA)
    rec = json.loads((tmp_path / "s.json").read_text())["record"]
    assert rec["margin"] is None and rec["safe"] is True  # inf margin is written as null
    rep = run_uniformity(example, UniformityConfig(sample_count=100, epsilon=2e-3))
    doc = to_json_dict(rep)
    jsonschema.validate(doc, UNIFORMITY_SCHEMA)
    assert doc["n_used"] == len(doc["samples"])


def test_emit_empty_table_and_errors(tmp_path):
    path = emit(ExperimentTable([]), tmp_path / "empty.csv")
    assert path.read_text().strip() == ",".join(TABLE_COLUMNS)
    with pytest.raises(OSError, match="nowhere"):
        emit(ExperimentTable([]), tmp_path / "nowhere" / "t.csv")
    with pytest.raises(TypeError):
        emit(object(), tmp_path / "x.csv")


def test_closed_form_against_single_theory(single):
    assert single.xi_theor == pytest.approx(pseudophase_theory_closed_example(1.0, 0.0, 5e-4), abs=1e-8)
