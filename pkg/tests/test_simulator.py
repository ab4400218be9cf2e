import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dacglitch import binary_basis, published_basis, segmented_basis
from dacglitch.core import canonical_table
from dacglitch.errors import ConsistencyError, UndefinedMeasurementError, ValidationError
from dacglitch.mappers import make_mapper
from dacglitch.simulator import (
    EdgeModel,
    StimulusConfig,
    ideal_zoh,
    measure_sfdr,
    measure_sndr,
    power_spectrum,
    reference_zoh,
    run_experiment,
    sweep,
    synthesize,
)
from oracles import box_average


def _mapped(basis, codes, mapper="viterbi"):
    return make_mapper(mapper, basis)(codes).masks


@given(st.lists(st.integers(0, 255), min_size=2, max_size=40), st.sampled_from([8, 16, 64]))
def test_zero_skew_equals_ideal_zoh(codes, osr):
    b = published_basis(10)
    wave = synthesize(codes, _mapped(b, codes), b, EdgeModel(), osr)
    assert np.array_equal(wave, ideal_zoh(codes, osr))


@given(st.lists(st.integers(0, 255), min_size=2, max_size=40), st.floats(-0.4, 0.4))
def test_equal_delays_equal_delayed_reference(codes, tau):
    b = published_basis(11)
    edges = EdgeModel(tau_on=tau, tau_off=tau)
    wave = synthesize(codes, _mapped(b, codes), b, edges, 32)
    assert np.array_equal(wave, reference_zoh(codes, 32, edges.reference_delay))


def test_single_rectangle_energy():
    b = binary_basis(3)
    codes = [3, 4]
    osr, tau = 64, 0.125
    wave = synthesize(codes, [0b011, 0b100], b, EdgeModel.skewed(tau, reference="nominal"), osr)
    err = wave - ideal_zoh(codes, osr)
    # 3 -> 4 turns on weight 4 late; the wrap 4 -> 3 turns on weights 1 + 2 late
    assert np.sum(err ** 2) / osr == pytest.approx(tau * (4 ** 2 + 3 ** 2), rel=1e-12)
    assert err.min() == -4 and err.sum() / osr == pytest.approx(-tau * 7)


@pytest.mark.parametrize("tau_on,tau_off,rise", [(0.0137, 0.0, 0.0), (0.2, -0.07, 0.0),
                                                  (0.03, 0.01, 0.045)])
def test_rendering_matches_fine_integration(tau_on, tau_off, rise):
    b = binary_basis(3)
    codes = np.array([3, 4, 6, 1])
    masks = [3, 4, 6, 1]
    osr = 16
    edges = EdgeModel(tau_on=tau_on, tau_off=tau_off, rise_time=rise, reference="nominal")
    wave = synthesize(codes, masks, b, edges, osr)
    bits = np.array([[(m >> i) & 1 for i in range(3)] for m in masks])
    w = np.array(b.weights)

    def analog(t):
        n = np.floor(t).astype(int) % 4
        prev = (n - 1) % 4
        frac = t - np.floor(t)
        out = np.zeros_like(t)
        for i in range(3):
            cur, old = bits[n, i], bits[prev, i]
            delay = np.where(cur > old, tau_on, np.where(cur < old, tau_off, 0.0))
            shift = frac - delay
            # state after the edge: ramp from old to cur over the rise time
            if rise > 0:
                s = np.clip(shift / rise, 0, 1)
            else:
                s = (shift >= 0).astype(float)
            level = old + (cur - old) * s
            # negative delays switch during the previous period
            nxt = bits[(n + 1) % 4, i]
            nd = np.where(nxt > cur, tau_on, np.where(nxt < cur, tau_off, 0.0))
            early = (nd < 0) & (frac - 1 - nd >= 0)
            if rise > 0:
                es = np.clip((frac - 1 - nd) / rise, 0, 1)
            else:
                es = early.astype(float)
            level = np.where(nd < 0, level + (nxt - cur) * np.where(frac - 1 - nd >= 0, es, 0), level)
            out += w[i] * level
        return out

    ref = box_average(analog, osr, 4)
    assert np.allclose(wave, ref, atol=2e-3)


def test_sndr_error_halving_gains_six_db():
    n = np.arange(4096)
    ref = np.sin(2 * np.pi * 37 * n / 4096)
    err = 1e-3 * np.random.default_rng(0).standard_normal(4096)
    a = measure_sndr(ref + err, ref)
    b = measure_sndr(ref + err / 2, ref)
    assert b - a == pytest.approx(20 * math.log10(2), abs=1e-9)
    assert measure_sndr(ref, ref) == math.inf
    a = measure_sndr(ref + err, ref, osr=8)
    b = measure_sndr(ref + err / 2, ref, osr=8)
    assert b - a == pytest.approx(6.0206, abs=1e-4)


def test_sfdr_of_injected_spur():
    n = np.arange(8192)
    x = np.sin(2 * np.pi * 101 * n / 8192) + 0.01 * np.sin(2 * np.pi * 733 * n / 8192)
    assert measure_sfdr(x, 101) == pytest.approx(40.0, abs=1e-9)
    assert measure_sfdr(x, 101, osr=16) == math.inf
    with pytest.raises(UndefinedMeasurementError):
        measure_sfdr(np.zeros(1024), 5)
    with pytest.raises(ValidationError):
        measure_sfdr(x, 5000)


def test_parseval():
    x = np.random.default_rng(1).standard_normal(2 ** 14) + 0.3
    assert power_spectrum(x).sum() == pytest.approx(np.mean(x ** 2), rel=1e-9)
    y = np.random.default_rng(2).standard_normal(1001)
    assert power_spectrum(y).sum() == pytest.approx(np.mean(y ** 2), rel=1e-9)


def test_stimulus_validation_and_codes():
    s = StimulusConfig()
    codes = s.codes(8)
    assert codes.min() == 0 and codes.max() == 255 and codes.size == 1024
    assert s.cycles == 31
    with pytest.raises(ValidationError):
        StimulusConfig(frequency="31/1000")
    with pytest.raises(ValidationError):
        StimulusConfig(frequency="32/1024")
    with pytest.raises(ValidationError):
        StimulusConfig(osr=4)
    with pytest.raises(ValidationError):
        StimulusConfig(kind="chirp")
    p = StimulusConfig(kind="prbs-codes", samples=500)
    assert np.array_equal(p.codes(8, seed=3), p.codes(8, seed=3))


def test_edge_model_validation():
    with pytest.raises(ValidationError):
        EdgeModel(tau_on=0.6)
    with pytest.raises(ValidationError):
        EdgeModel(shape="sigmoid")
    e = EdgeModel.symmetric(0.1)
    assert (e.tau_on, e.tau_off, e.reference_delay) == (0.05, -0.05, 0.0)
    assert EdgeModel.skewed(0.1).reference_delay == pytest.approx(0.05)
    assert EdgeModel.skewed(0.1, reference="nominal").reference_delay == 0.0


def test_synthesize_rejects_inconsistent_reps():
    b = binary_basis(3)
    with pytest.raises(ConsistencyError):
        synthesize([1, 2], [1, 1], b, EdgeModel(), 8)


def test_run_experiment_outputs():
    b = published_basis(12)
    st_ = StimulusConfig(osr=16)
    r = run_experiment(b, "viterbi", st_, EdgeModel.skewed(0.05), seed=0)
    assert r.spectrum_db.size == 1024 * 16 // 2 + 1
    assert r.waveform.size == 1024 * 16
    assert math.isfinite(r.sndr_db) and math.isfinite(r.sfdr_db)
    r2 = run_experiment(b, "viterbi", st_, EdgeModel.skewed(0.05), seed=0)
    assert r.sndr_db == r2.sndr_db and np.array_equal(r.waveform, r2.waveform)
    d = r.to_json()
    assert d["stimulus"]["frequency"] == "31/1024"
    prbs = run_experiment(b, "greedy", StimulusConfig(kind="prbs-codes", osr=16), EdgeModel.skewed(0.05))
    assert prbs.sfdr_db is None
    clean = run_experiment(b, "viterbi", st_, EdgeModel())
    assert clean.sndr_db == math.inf and clean.sfdr_db == math.inf


def test_sndr_scales_with_skew():
    b = segmented_basis(4, 4)
    st_ = StimulusConfig(osr=64)
    m = make_mapper("canonical", b)
    a = run_experiment(b, m, st_, EdgeModel.skewed(2 / 64))
    c = run_experiment(b, m, st_, EdgeModel.skewed(8 / 64))
    ref_a = reference_zoh(m(st_.codes(8)).codes, 64, 1 / 64)
    ref_c = reference_zoh(m(st_.codes(8)).codes, 64, 4 / 64)
    # total rectangle energy grows linearly with the skew
    full = measure_sndr(a.waveform, ref_a) - measure_sndr(c.waveform, ref_c)
    assert full == pytest.approx(10 * math.log10(4), abs=1e-9)
    # narrow pulses: in-band power follows the pulse area squared
    assert a.sndr_db - c.sndr_db == pytest.approx(20 * math.log10(4), abs=0.1)


def test_thermometer_canonical_runs():
    from dacglitch import thermometer_basis

    th = thermometer_basis(8)
    codes = StimulusConfig().codes(8)
    wave = synthesize(codes, [canonical_table(th)[c] for c in codes], th, EdgeModel.skewed(0.05), 16)
    err = wave - reference_zoh(codes, 16, 0.025)
    assert np.isfinite(err).all() and np.abs(err).max() > 0


def test_sweep_and_exports(tmp_path):
    rows = sweep([binary_basis(8)], ["canonical"], [0.0, 0.05], StimulusConfig(osr=16))
    assert [r["tau"] for r in rows] == [0.0, 0.05]
    assert rows[0]["sfdr_db"] == math.inf and math.isfinite(rows[1]["sfdr_db"])
    r = run_experiment(binary_basis(8), "canonical", StimulusConfig(osr=8), EdgeModel.skewed(0.05))
    r.export_waveform(tmp_path / "w.csv", 8)
    r.export_spectrum(tmp_path / "s.csv")
    w = list(csv.reader(open(tmp_path / "w.csv")))
    assert w[0] == ["time", "value", "error"] and len(w) == 1024 * 8 + 1
    s = list(csv.reader(open(tmp_path / "s.csv")))
    assert s[0] == ["bin", "db"] and len(s) == 1024 * 4 + 2
