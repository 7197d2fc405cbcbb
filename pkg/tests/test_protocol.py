import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecramsim.analysis import integrate_charge
from ecramsim.cell import CellState, CircuitParams
from ecramsim.conductance import ConductanceModel, ReadConfig
from ecramsim.errors import ConfigError, DomainError, ProtocolError, StiffnessFailure, UnknownScenario
from ecramsim.protocol import (
    Drive,
    Hold,
    Models,
    PulseTrain,
    Read,
    ResetCharge,
    Sampling,
    SetTemperature,
    execute,
    expand,
    scenario,
)
from ecramsim.thermo import FreeEnergyModel

T = 473.15
REG = FreeEnergyModel.regular_kT(3.0, T)
IDEAL = FreeEnergyModel.ideal()
COND = ConductanceModel.calibrated(1e-4, 0.5, T, ea_el=0.18, c0=0.2, c1=1.0, aspect=16.0)
CIRCUIT = CircuitParams(r_ref=2e7, t_ref=T, ea_ion=1.2)
MODELS = Models(REG, COND)
SAMPLING = Sampling(interval=10.0)


def state(x1=0.5, x2=0.5, **kw):
    return CellState(x1, x2, 2.5e15, 1e16, T, **kw)


def run(protocol, initial=None, models=MODELS, circuit=CIRCUIT, sampling=SAMPLING, read=ReadConfig(), **kw):
    return execute(protocol, initial or state(), models, circuit, sampling, read, **kw)


# -- steps ---------------------------------------------------------------------------

def test_step_validation():
    with pytest.raises(DomainError):
        Drive(2.0, 0.0)
    with pytest.raises(DomainError):
        Hold(-1.0)
    with pytest.raises(DomainError):
        PulseTrain(0, 2.0, 30.0, 30.0)
    with pytest.raises(DomainError):
        SetTemperature(0.0)


def test_pulse_train_expansion():
    read = ReadConfig(half_period=5.0, n_cycles=2)
    steps = expand(PulseTrain(3, 2.0, 30.0, 30.0), read)
    assert steps == [Drive(2.0, 30.0), Hold(10.0), Read()] * 3
    assert expand(PulseTrain(2, -1.0, 5.0, 20.0, read_between=False), read) == [Drive(-1.0, 5.0), Hold(20.0)] * 2
    # a rest exactly one read window long leaves no settling hold
    assert expand(PulseTrain(1, 1.0, 5.0, 20.0), read) == [Drive(1.0, 5.0), Read()]


def test_rest_shorter_than_read_window():
    with pytest.raises(ConfigError) as info:
        expand(PulseTrain(1, 2.0, 30.0, 10.0), ReadConfig(half_period=30.0))
    assert info.value.key == "rest_duration"


# -- executor ------------------------------------------------------------------------

def test_hold_from_equilibrium_is_flat():
    rec = run([Hold(100.0)])
    assert np.all(rec.i_gate == 0.0)
    assert np.all(rec.q == 0.0)
    assert rec.t[0] == 0.0 and rec.t[-1] == 100.0
    assert np.all(rec.g == rec.g[0])


def test_time_strictly_increasing_and_spans_protocol():
    rec = run([Drive(2.0, 95.0), Hold(40.0), Read(), Drive(-2.0, 10.0)])
    assert np.all(np.diff(rec.t) > 0)
    assert rec.t[-1] == pytest.approx(95 + 40 + ReadConfig().window + 10)


def test_q_is_trapezoid_of_current():
    rec = run([Drive(-2.0, 600.0), Hold(1200.0), Drive(2.0, 300.0), Read(), Hold(600.0)])
    assert np.allclose(rec.q, integrate_charge(rec.t, rec.i_gate), rtol=1e-9, atol=0)


def test_edge_sample_resolves_current_jump():
    rec = run([Drive(-2.0, 600.0), Hold(600.0)], sampling=Sampling(interval=60.0, edge=1e-3))
    k = int(np.flatnonzero(rec.select(1))[0])
    assert rec.t[k] == pytest.approx(600.001)
    assert rec.v_gate[k - 1] == -2.0 and rec.v_gate[k] == 0.0


def test_q_continuous_across_steps():
    rec = run([Drive(2.0, 200.0), Drive(1.0, 200.0), Hold(200.0)], sampling=Sampling(interval=1.0))
    # no jump larger than what the local current can carry in one interval
    dq = np.abs(np.diff(rec.q))
    bound = np.maximum(np.abs(rec.i_gate[1:]), np.abs(rec.i_gate[:-1])) * np.diff(rec.t)
    assert np.all(dq <= bound * (1 + 1e-12))


def test_reset_charge_starts_new_origin():
    rec = run([Drive(2.0, 100.0), ResetCharge(), Drive(2.0, 100.0)])
    k = int(np.flatnonzero(rec.select(2))[0])
    dt = rec.t[k] - rec.t[k - 1]
    assert rec.q[k] == pytest.approx(0.5 * (rec.i_gate[k - 1] + rec.i_gate[k]) * dt, rel=1e-12)
    second = integrate_charge(rec.t[k - 1:], rec.i_gate[k - 1:])
    # the offset subtraction cancels about 1e-5 C, so compare absolutely
    assert np.allclose(rec.q[k:], second[1:], rtol=0, atol=1e-12 * np.max(np.abs(second)))


def test_drive_then_hold_rebound():
    rec = run([Drive(-2.0, 3600.0), Hold(86400.0)], circuit=CircuitParams(2e7, T, 1.2, c_dl=1.5e-4),
              sampling=Sampling(interval=60.0))
    drive = rec.select(0)
    hold = rec.select(1)
    assert np.all(rec.i_gate[drive][1:] < 0)
    assert rec.i_gate[hold][0] > 0
    q_drive = rec.q[drive][-1]
    q_end = rec.q[-1]
    assert q_drive < q_end < 0
    assert abs(q_end - q_drive) < abs(q_drive)


def test_staircase_up_then_down():
    read = ReadConfig(half_period=7.5, n_cycles=2)
    rec = run([PulseTrain(10, 2.0, 30.0, 30.0), PulseTrain(10, -2.0, 30.0, 30.0)], initial=state(0.3), read=read)
    r = rec.read_arrays()
    assert r["g"].size == 20
    assert np.all(np.diff(r["g"][:10]) > 0) and np.all(np.diff(r["g"][10:]) < 0)
    assert list(r["branch"]) == [1] * 10 + [-1] * 10


def test_read_events_carry_noise_and_truth():
    read = ReadConfig(noise_sigma=0.01, seed=3)
    rec = run([Read(), Drive(2.0, 60.0), Read()], read=read)
    assert len(rec.reads) == 2
    for ev in rec.reads:
        assert ev.g != ev.g_true
        assert abs(ev.g - ev.g_true) < 6 * ev.sigma
    assert rec.reads[0].branch == 0 and rec.reads[1].branch == 1


def test_read_is_non_perturbative_by_default():
    rec = run([Read()], initial=state(0.3))
    assert np.all(rec.i_gate == 0.0)
    assert rec.reads[0].g_true == pytest.approx(rec.g[0], rel=1e-15)


def test_perturbative_read_moves_charge():
    cfg = ReadConfig(amplitude=0.05, half_period=30.0, n_cycles=2, perturbative=True)
    rec = run([Read(cfg)], initial=state(0.3))
    assert np.any(rec.i_gate != 0.0)
    assert set(np.unique(rec.v_gate)) == {0.05, -0.05}


def test_set_temperature_changes_current():
    rec = run([Drive(2.0, 10.0), SetTemperature(423.15), Drive(2.0, 10.0)])
    i_hot = rec.i_gate[rec.select(0)][-1]
    i_cold = rec.i_gate[rec.select(2)][-1]
    assert 0 < i_cold < i_hot
    assert rec.temperature[-1] == 423.15


def test_error_carries_step_index():
    with pytest.raises(ProtocolError) as info:
        run([Hold(10.0), Drive(2.0, 1e6)], initial=state(0.9))
    assert info.value.step_index == 1
    assert isinstance(info.value.cause, StiffnessFailure)


def test_empty_protocol():
    with pytest.raises(ConfigError):
        run([SetTemperature(400.0)])


def test_ions_conserved():
    rec = run([Drive(2.0, 600.0), Hold(600.0), Drive(-2.0, 900.0)])
    assert np.max(np.abs(rec.ions - rec.ions[0])) <= 1e-12 * rec.ions[0]


def test_determinism():
    proto = [Read(), PulseTrain(5, 2.0, 30.0, 120.0), Hold(100.0), Read()]
    read = ReadConfig(noise_sigma=0.02, seed=11)
    a = run(proto, read=read)
    b = run(proto, read=read)
    for x, y in zip(a.columns(), b.columns()):
        assert np.array_equal(x, y)
    assert a.reads == b.reads


@settings(max_examples=15, deadline=None)
@given(
    v=st.sampled_from([-2.0, -0.5, 0.0, 1.0, 2.0]),
    n_half=st.integers(1, 12),
    x1=st.floats(0.1, 0.9),
)
def test_segment_associativity(v, n_half, x1):
    half = 10.0 * n_half
    step = Drive(v, 2 * half) if v else Hold(2 * half)
    halves = [Drive(v, half)] * 2 if v else [Hold(half)] * 2
    whole = run([step], initial=state(x1))
    split = run(halves, initial=state(x1))
    common, ia, ib = np.intersect1d(whole.t, split.t, return_indices=True)
    assert common.size == whole.t.size
    for name in ("x1", "x2", "g", "q", "i_gate"):
        a = getattr(whole, name)[ia]
        b = getattr(split, name)[ib]
        scale = np.max(np.abs(a)) or 1.0
        assert np.allclose(a, b, rtol=1e-8, atol=1e-8 * scale), name


def test_csv_columns_and_precision(tmp_path):
    rec = run([Drive(2.0, 30.0), Read()], read=ReadConfig(noise_sigma=0.01))
    path = tmp_path / "record.csv"
    rec.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t_s,v_gate_V,i_gate_A,q_C,g_S,x1,x2,T_K"
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.array_equal(data[:, 3], rec.q)
    assert np.array_equal(data[:, 4], rec.g)
    rec.write_reads_csv(tmp_path / "reads.csv")
    assert (tmp_path / "reads.csv").read_text().splitlines()[0] == "t_s,g_S,g_true_S,sigma_S,branch,step_index"


# -- scenarios --------------------------------------------------------------------------

def test_scenario_lookup():
    setup = scenario("figS4_volatile")
    protocol, models, circuit, initial = setup
    assert models.free_energy.kind.value == "ideal"
    assert any(isinstance(s, Drive) for s in protocol)
    assert initial.temperature == 473.15
    with pytest.raises(UnknownScenario):
        scenario("fig9z")


def test_fig2a_uses_regular_solution():
    setup = scenario("fig2a")
    assert setup.models.free_energy.kind.value == "regular"
    assert setup.models.free_energy.omega == pytest.approx(3.0 * 8.617333262e-5 * 473.15, rel=1e-9)
    assert sum(isinstance(s, Drive) for s in setup.protocol) == 5


def test_figS5_temperatures():
    setup = scenario("figS5_arrhenius")
    temps = [s.kelvin for s in setup.protocol if isinstance(s, SetTemperature)]
    assert temps == [473.15, 448.15, 423.15, 398.15]
