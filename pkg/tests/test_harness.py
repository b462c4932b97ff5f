import dataclasses
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hvdcfr.harness import (
    ContinuousSpec,
    ControllerSpec,
    IdentificationSpec,
    PROFILE_CHANNELS,
    Scenario,
    ScenarioError,
    StepEvent,
    build_disturbance_profile,
    compare_cases,
    compute_metrics,
    generate_continuous_profile,
    run_cases,
    run_scenario,
    run_sweep,
    scenario_from_dict,
    sweep_table_csv,
    to_plant_disturbance,
)
from hvdcfr.plant import REFERENCE_CHANNELS, build_plant, simulate, without_hvdc_droops
from hvdcfr.signals import SignalRecord, zeros_record


def make_trace(t_s, channels, columns):
    return SignalRecord(t_s, channels, np.column_stack(columns))


TRACE_CHANNELS = ("f_i", "f_r", "v_dc", "int_f_i", "int_f_r", "int_v_dc",
                  "p_gi", "p_gr", "p_dci", "p_dcr", "i_dci", "v_dcr")


def trace_from_f(f_i, f_r, t_s=0.1, **extra):
    n = len(f_i)
    cols = {name: np.zeros(n) for name in TRACE_CHANNELS}
    cols["f_i"] = np.asarray(f_i)
    cols["f_r"] = np.asarray(f_r)
    for k, v in extra.items():
        cols[k] = np.asarray(v)
    return SignalRecord(t_s, TRACE_CHANNELS, np.column_stack([cols[c] for c in TRACE_CHANNELS]))


class TestMetrics:
    def test_constant_signal_rms(self):
        trace = trace_from_f(np.full(100, -0.25), np.zeros(100))
        report = compute_metrics(trace)
        assert report.rms_f_i == pytest.approx(0.25)
        assert report.max_f_i == pytest.approx(0.25)

    def test_sine_over_integer_periods(self):
        t = np.arange(0, 20, 0.1)
        f = 0.4 * np.sin(2 * np.pi * t / 5.0)
        report = compute_metrics(trace_from_f(f, np.zeros_like(f)))
        assert abs(report.rms_f_i - 0.4 / np.sqrt(2)) < 1e-3

    @given(st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_rms_matches_naive_two_pass_loop(self, seed):
        rng = np.random.default_rng(seed)
        f_i = rng.normal(size=64)
        f_r = rng.normal(size=64)
        report = compute_metrics(trace_from_f(f_i, f_r), n_gens=(8, 12))
        total = 0.0
        for v in f_i:
            total += v * v
        naive = math.sqrt(total / len(f_i))
        assert abs(report.rms_f_i - naive) < 1e-12

    def test_generator_rms_scaled_per_machine(self):
        p_g = np.full(50, 0.36)
        report = compute_metrics(trace_from_f(np.zeros(50), np.zeros(50), p_gi=p_g),
                                 n_gens=(9, 12))
        # equal N-way split: per-generator sum of squares is agg^2 / N
        assert report.rms_p_gi == pytest.approx(0.36 / 3.0)

    def test_sum_column_exact(self):
        rng = np.random.default_rng(1)
        report = compute_metrics(trace_from_f(rng.normal(size=30), rng.normal(size=30)))
        assert report.sum_max_f == report.max_f_i + report.max_f_r

    def test_settling_time(self):
        f = np.concatenate([np.full(50, 0.01), np.full(100, 1e-4)])
        report = compute_metrics(trace_from_f(f, np.zeros_like(f)))
        assert report.settle_f_i_s == pytest.approx(5.0)
        assert report.settle_f_r_s == 0.0

    def test_empty_trace_rejected(self):
        with pytest.raises(ScenarioError, match="empty"):
            compute_metrics(SignalRecord(0.1, TRACE_CHANNELS, np.zeros((0, 12))))


class TestProfiles:
    def test_peak_scaling_exact(self):
        rec = generate_continuous_profile(5, 0.1, 0.05, 200.0, 0.1)
        for col in range(3):
            assert abs(np.max(np.abs(rec.samples[:, col])) - 0.1) < 1e-9

    def test_different_seeds_uncorrelated(self):
        a = generate_continuous_profile(1, 0.3, 0.05, 200.0, 0.1)
        b = generate_continuous_profile(2, 0.3, 0.05, 200.0, 0.1)
        for col in range(3):
            rho = np.corrcoef(a.samples[:, col], b.samples[:, col])[0, 1]
            assert abs(rho) < 0.2

    def test_same_seed_reproducible(self):
        a = generate_continuous_profile(9, 0.3, 0.05, 200.0, 0.1)
        b = generate_continuous_profile(9, 0.3, 0.05, 200.0, 0.1)
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_spectrum_concentrated_below_twice_cutoff(self):
        rec = generate_continuous_profile(3, 0.3, 0.05, 200.0, 0.1)
        for col in range(3):
            x = rec.samples[:, col]
            spectrum = np.abs(np.fft.rfft(x - x.mean())) ** 2
            freqs = np.fft.rfftfreq(len(x), 0.1)
            fraction = spectrum[freqs <= 0.1].sum() / spectrum.sum()
            assert fraction >= 0.95

    def test_bandwidth_beyond_nyquist_rejected(self):
        with pytest.raises(ScenarioError, match="Nyquist"):
            generate_continuous_profile(1, 0.3, 6.0, 10.0, 0.1)


class TestScenario:
    def test_round_trip_via_dict(self):
        s = Scenario(name="x", steps=(StepEvent("p_li", 1.0, 0.2, 5.0),), duration_s=30.0)
        back = scenario_from_dict(s.to_json_dict())
        assert back == s

    def test_exactly_one_disturbance_source(self):
        with pytest.raises(ScenarioError, match="exactly one"):
            Scenario(name="x", steps=(StepEvent("p_li", 1.0, 0.2, 5.0),),
                     continuous=ContinuousSpec())
        with pytest.raises(ScenarioError, match="exactly one"):
            Scenario(name="x")

    def test_bad_case_rejected(self):
        with pytest.raises(ScenarioError, match="case"):
            Scenario(name="x", case=4, steps=(StepEvent("p_li", 1.0, 0.2, 5.0),))

    def test_bad_step_channel_rejected(self):
        with pytest.raises(ScenarioError, match="channel"):
            StepEvent("bogus", 1.0, 0.2, 5.0)

    def test_step_profile_layout(self):
        s = Scenario(name="x", duration_s=10.0, t_s=0.1,
                     steps=(StepEvent("p_w", 2.0, 0.4, 3.0),))
        profile = build_disturbance_profile(s)
        w = profile.channel("p_w")
        assert w[int(2.5 / 0.1)] == pytest.approx(0.4)
        assert w[int(5.5 / 0.1)] == 0.0
        # wind subtracts from the rectifier-side net load
        plant_w = to_plant_disturbance(profile)
        assert plant_w.channel("p_lr_net")[int(2.5 / 0.1)] == pytest.approx(-0.4)

    def test_file_disturbance_round_trip(self, tmp_path):
        profile = generate_continuous_profile(4, 0.2, 0.05, 30.0, 0.1)
        path = tmp_path / "profile.csv"
        profile.to_csv(path)
        s = Scenario(name="x", duration_s=20.0, disturbance_file=str(path))
        loaded = build_disturbance_profile(s)
        assert loaded.n_samples == 201
        np.testing.assert_allclose(loaded.samples, profile.samples[:201])


@pytest.fixture(scope="module")
def quick_step_scenario():
    return Scenario(
        name="quick-step",
        steps=(StepEvent("p_li", 5.0, 0.3, 15.0), StepEvent("p_lr", 35.0, 0.3, 15.0)),
        duration_s=60.0,
    )


@pytest.fixture(scope="module")
def step_reports(quick_step_scenario):
    return run_cases(quick_step_scenario)


class TestRunScenario:
    def test_zero_disturbance_zero_metrics(self):
        s = Scenario(name="null", case=2, duration_s=20.0,
                     steps=(StepEvent("p_li", 5.0, 0.0, 1.0),))
        report = run_scenario(s)
        assert report.sum_max_f == 0.0
        assert report.rms_p_gi == 0.0

    def test_determinism_identical_reports(self, quick_step_scenario):
        s = dataclasses.replace(quick_step_scenario, case=1)
        a = run_scenario(s)
        b = run_scenario(s)
        assert a.to_json_dict() == b.to_json_dict()
        np.testing.assert_array_equal(a.trace.samples, b.trace.samples)

    def test_case1_wins_step_protocol(self, step_reports):
        by_case = {r.case: r for r in step_reports}
        assert by_case[1].sum_max_f < by_case[2].sum_max_f
        assert by_case[1].sum_max_f < by_case[3].sum_max_f

    def test_case_ordering_of_rms(self, step_reports):
        by_case = {r.case: r for r in step_reports}
        assert by_case[1].sum_rms_f < by_case[2].sum_rms_f


class TestCompare:
    def test_identical_reports_zero_reduction(self, step_reports):
        r1 = step_reports[0]
        clone = dataclasses.replace(r1, case=2)
        table = compare_cases([r1, clone])
        assert all(v == 0.0 for k, v in table.reductions[0].items() if k != "case")

    def test_percent_arithmetic_by_hand(self, step_reports):
        table = compare_cases(list(step_reports))
        rows = {r["case"]: r for r in table.rows}
        red = {r["case"]: r for r in table.reductions}
        base = rows[2]["sum_max_f"]
        ours = rows[1]["sum_max_f"]
        assert red[2]["sum_max_f"] == pytest.approx(100.0 * (base - ours) / base)

    def test_mismatched_disturbances_rejected(self, step_reports):
        other = dataclasses.replace(step_reports[0], disturbance_sha256="f" * 64)
        with pytest.raises(ScenarioError, match="different disturbances"):
            compare_cases([step_reports[1], other])

    def test_csv_layout(self, step_reports):
        text = compare_cases(list(step_reports)).to_csv_text()
        lines = text.strip().splitlines()
        assert lines[0].startswith("case,max_f_i")
        assert len([ln for ln in lines if ln and ln[0].isdigit()]) == 3 + 2


class TestSweep:
    def test_no_pfc_increases_open_loop_excursion(self, jh_params):
        t_s, dur = 0.1, 40.0
        refs = zeros_record(t_s, REFERENCE_CHANNELS, dur)
        n = int(round(dur / t_s)) + 1
        w = np.zeros((n, 2))
        w[int(5 / t_s):, 0] = 0.3
        dist = SignalRecord(t_s, ("p_li", "p_lr_net"), w)
        base = simulate(build_plant(jh_params), refs, dist, dt=0.001)
        nopfc = simulate(build_plant(without_hvdc_droops(jh_params)), refs, dist, dt=0.001)
        assert (np.max(np.abs(nopfc.channel("f_i")))
                > np.max(np.abs(base.channel("f_i"))))

    def test_sweep_table_shapes(self):
        s = Scenario(name="sweep", continuous=ContinuousSpec(duration_s=80.0),
                     duration_s=80.0)
        results = run_sweep(s, conditions=("no_pfc",))
        assert set(results) == {"no_pfc"}
        assert [r.case for r in results["no_pfc"]] == [1, 2, 3]
        csv_text = sweep_table_csv(results)
        assert csv_text.splitlines()[0].startswith("condition,case")
