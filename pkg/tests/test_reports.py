import numpy as np
import pytest

from ecramsim.config import parse_config, scenario_dict
from ecramsim.protocol import execute
from ecramsim.reports import (
    arrhenius_report,
    conservation_report,
    gq_report,
    rebound_report,
    retention_tangents_report,
    run_analyses,
    settled_states_report,
    switching_report,
)


def setup_for(protocol, **blocks):
    # fig3c device parameters with a custom protocol
    raw = scenario_dict("fig3c")
    raw["protocol"] = protocol
    for k, v in blocks.items():
        raw[k] = {**raw.get(k, {}), **v}
    return parse_config(raw)


def run(setup):
    return execute(setup.protocol, setup.initial, setup.models, setup.circuit, setup.sampling, setup.read)


def test_rebound_pairs():
    s = setup_for([{"type": "drive", "v_gate": -2.0, "duration": 600.0}, {"type": "hold", "duration": 7200.0}],
                  circuit={"c_dl": 1e-4})
    rec = run(s)
    (pair,) = rebound_report(rec, s)["pairs"]
    assert pair["drive_charge_C"] < 0 < pair["rebound_charge_C"]
    assert pair["sign_reversal"] and pair["settled_between"]
    assert pair["settled_charge_C"] == pytest.approx(rec.q[-1], rel=1e-12)
    assert 0 < pair["rebound_ratio"] < 1


def test_settled_states_and_separation():
    steps = []
    for d in (60.0, 120.0, 180.0):
        steps += [{"type": "drive", "v_gate": 2.0, "duration": d}, {"type": "hold", "duration": 600.0}]
    s = setup_for(steps, read={"noise_sigma": 0.01})
    rec = run(s)
    r = settled_states_report(rec, s)
    assert len(r["g_S"]) == 3
    assert np.all(np.diff(r["g_S"]) > 0)
    assert r["min_separation_sigmas"] > 3
    assert r["g_range_S"] == pytest.approx(np.ptp(rec.g))


def test_noiseless_separation_is_unbounded():
    steps = [{"type": "drive", "v_gate": 2.0, "duration": 60.0}, {"type": "hold", "duration": 60.0}] * 2
    s = setup_for(steps, read={"noise_sigma": 0.0})
    assert settled_states_report(run(s), s)["min_separation_sigmas"] is None


def test_retention_tangents_on_flat_holds():
    s = setup_for([{"type": "drive", "v_gate": -2.0, "duration": 600.0}, {"type": "hold", "duration": 3600.0},
                   {"type": "drive", "v_gate": 2.0, "duration": 600.0}, {"type": "hold", "duration": 3600.0}])
    r = retention_tangents_report(run(s), s)
    assert len(r["holds"]) == 2 and len(r["convergence"]) == 1
    assert all(len(h["tangents"]) == 4 for h in r["holds"])


def test_arrhenius_report_recovers_ea():
    steps = []
    for t in (473.15, 423.15):
        steps += [{"type": "set_temperature", "kelvin": t}, {"type": "drive", "v_gate": 2.0, "duration": 10.0},
                  {"type": "drive", "v_gate": -2.0, "duration": 10.0}]
    s = setup_for(steps, sampling={"interval": 1.0})
    r = arrhenius_report(run(s), s)
    assert r["temperatures_K"] == [473.15, 423.15]
    assert r["relative_error"] < 1e-3


def test_gq_and_conservation():
    s = setup_for([{"type": "drive", "v_gate": 2.0, "duration": 600.0}, {"type": "hold", "duration": 600.0}])
    rec = run(s)
    assert gq_report(rec, s)["max_residual_fraction"] <= 1e-3
    c = conservation_report(rec, s)
    assert c["max_relative_drift"] <= 1e-12 and not c["leak"]


def test_switching_report_counts_reads():
    s = setup_for([{"type": "read"},
                   {"type": "pulse_train", "count": 5, "v_gate": 2.0, "pulse_duration": 30.0, "rest_duration": 120.0}])
    r = switching_report(run(s), s)
    assert r["n_reads"] == 6 and r["n_distinct"] == 6


def test_run_analyses_uses_declared_names():
    s = parse_config({"scenario": "figS5_arrhenius"})
    assert set(run_analyses(run(s), s)) == set(s.analyses)
