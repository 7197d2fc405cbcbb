"""JSON run configurations and the shipped scenario files.

A configuration is a JSON object with these top-level keys:

``scenario`` *or* ``protocol`` (exactly one)
    Name of a shipped scenario, or an inline list of steps.
``model``, ``circuit``, ``conductance``, ``initial``, ``sampling``, ``read``
    Parameter blocks.  With ``scenario`` they are merged key by key over the
    scenario's own blocks; an override of one of two alternative keys (for
    instance ``omega`` against ``omega_kT``) drops the other.
``seed``, ``name``, ``description``, ``analyses``, ``output``
    Run metadata.

Unknown keys anywhere are rejected with :class:`ConfigError` naming the key.
Every parameter is stored in SI units with temperatures in kelvin.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .cell import CellState, CircuitParams, IntegratorOptions
from .conductance import ConductanceModel, ReadConfig, activation_for_ratio
from .constants import K_B_EV
from .errors import ConfigError, DomainError, UnknownScenario
from .protocol import Drive, Hold, Models, PulseTrain, Read, ResetCharge, Sampling, SetTemperature
from .thermo import FreeEnergyModel

__all__ = [
    "PhaseFieldSetup",
    "Setup",
    "list_scenarios",
    "load_config",
    "load_scenario",
    "parse_config",
    "parse_phasefield_config",
    "scenario_dict",
]

TOP_KEYS = {"scenario", "protocol", "model", "circuit", "conductance", "initial", "sampling", "read",
            "seed", "name", "description", "analyses", "output"}
BLOCK_KEYS = {
    "model": {"kind", "omega", "omega_kT", "omega_temperature", "mu0", "kappa"},
    "circuit": {"r_ref", "t_ref", "ea_ion", "z", "c_dl", "oxidation_rate", "x_ambient"},
    "conductance": {"g_ref", "g_target", "x_target", "t_target", "t_ref_el", "ea_el", "ea_el_from_ratio",
                    "c0", "c1", "aspect"},
    "initial": {"x1", "x2", "n1", "n2", "temperature", "q_accum", "v_dl"},
    "sampling": {"interval", "edge", "rtol", "h_min", "max_substeps", "smoothing"},
    "read": {"amplitude", "half_period", "n_cycles", "noise_sigma", "sample_rate", "perturbative"},
}
STEP_KEYS = {
    "set_temperature": {"kelvin"},
    "drive": {"v_gate", "duration"},
    "hold": {"duration"},
    "read": {"read"},
    "pulse_train": {"count", "v_gate", "pulse_duration", "rest_duration", "read_between"},
    "reset_charge": set(),
}
ANALYSES = {"switching", "rebound", "settled_states", "retention_tangents", "arrhenius", "gq_collapse",
            "conservation"}


@dataclass
class Setup:
    """Everything needed to execute one run, plus the resolved JSON it came from."""

    name: str
    protocol: list
    models: Models
    circuit: CircuitParams
    initial: CellState
    sampling: Sampling
    read: ReadConfig
    seed: int
    analyses: list = field(default_factory=list)
    description: str = ""
    resolved: dict = field(default_factory=dict)

    def __iter__(self):
        # unpacks as (protocol, models, circuit, initial)
        return iter((self.protocol, self.models, self.circuit, self.initial))


def _check_keys(block: dict, allowed: set, where: str):
    if not isinstance(block, dict):
        raise ConfigError(f"{where} must be a JSON object", key=where)
    for k in block:
        if k not in allowed:
            raise ConfigError(f"unknown key '{k}' in {where}", key=k)


def _require(block: dict, key: str, where: str):
    if key not in block:
        raise ConfigError(f"missing required key '{key}' in {where}", key=key)
    return block[key]


def _number(block, key, where, default=None):
    if key not in block:
        if default is None:
            raise ConfigError(f"missing required key '{key}' in {where}", key=key)
        return default
    v = block[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"'{key}' in {where} must be a number, got {v!r}", key=key)
    return float(v)


# -- scenarios --------------------------------------------------------------------------

def _scenario_files():
    return resources.files("ecramsim") / "scenarios"


def list_scenarios() -> list:
    return sorted(p.name[:-5] for p in _scenario_files().iterdir() if p.name.endswith(".json"))


def scenario_dict(name: str) -> dict:
    path = _scenario_files() / f"{name}.json"
    if not path.is_file():
        raise UnknownScenario(f"unknown scenario {name!r}; available: {', '.join(list_scenarios())}")
    return json.loads(path.read_text())


def load_scenario(name: str) -> Setup:
    return parse_config({"scenario": name})


def load_config(path) -> Setup:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    # a meta.json written by a previous run replays its resolved configuration
    if isinstance(raw, dict) and "config" in raw and "artifact_version" in raw:
        raw = raw["config"]
    return parse_config(raw)


# -- parsing ------------------------------------------------------------------------------

# keys that replace each other when a scenario block is overridden
EXCLUSIVE = {
    "model": [{"omega"}, {"omega_kT", "omega_temperature"}],
    "conductance": [{"g_ref"}, {"g_target", "x_target", "t_target"}, {"ea_el"}, {"ea_el_from_ratio"}],
}
EXCLUSIVE_PAIRS = {"model": [(0, 1)], "conductance": [(0, 1), (2, 3)]}


def _merge_block(name, base: dict, override: dict) -> dict:
    out = dict(base)
    groups = EXCLUSIVE.get(name, [])
    for a, b in EXCLUSIVE_PAIRS.get(name, []):
        for mine, other in ((groups[a], groups[b]), (groups[b], groups[a])):
            if mine & override.keys():
                for k in other:
                    out.pop(k, None)
    if name == "model" and override.get("kind") == "ideal":
        for k in ("omega", "omega_kT", "omega_temperature"):
            out.pop(k, None)
    out.update(override)
    return out


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if k in BLOCK_KEYS and isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge_block(k, out[k], copy.deepcopy(v))
        else:
            out[k] = copy.deepcopy(v)
    return out


def _parse_model(block, initial_t):
    where = "model"
    _check_keys(block, BLOCK_KEYS[where], where)
    kind = block.get("kind", "regular")
    if kind not in ("ideal", "regular"):
        raise ConfigError(f"model kind must be 'ideal' or 'regular', got {kind!r}", key="kind")
    mu0 = _number(block, "mu0", where, 0.0)
    kappa = _number(block, "kappa", where, 0.0)
    if kind == "ideal":
        for k in ("omega", "omega_kT"):
            if k in block:
                raise ConfigError(f"'{k}' is not allowed for an ideal model", key=k)
        omega = 0.0
    elif "omega" in block and "omega_kT" in block:
        raise ConfigError("give either 'omega' or 'omega_kT', not both", key="omega_kT")
    elif "omega" in block:
        omega = _number(block, "omega", where)
    else:
        ratio = _number(block, "omega_kT", where)
        omega = ratio * K_B_EV * _number(block, "omega_temperature", where, initial_t)
    resolved = {"kind": kind, "mu0": mu0, "kappa": kappa}
    if kind == "regular":
        resolved["omega"] = omega
    return FreeEnergyModel(kind, mu0=mu0, omega=omega, kappa=kappa), resolved


def _parse_conductance(block):
    where = "conductance"
    _check_keys(block, BLOCK_KEYS[where], where)
    t_ref_el = _number(block, "t_ref_el", where)
    if "ea_el" in block and "ea_el_from_ratio" in block:
        raise ConfigError("give either 'ea_el' or 'ea_el_from_ratio'", key="ea_el_from_ratio")
    if "ea_el_from_ratio" in block:
        r = block["ea_el_from_ratio"]
        _check_keys(r, {"ratio", "t_low", "t_high"}, "conductance.ea_el_from_ratio")
        ea = activation_for_ratio(_number(r, "ratio", "ea_el_from_ratio"), _number(r, "t_low", "ea_el_from_ratio"),
                                  _number(r, "t_high", "ea_el_from_ratio"))
    else:
        ea = _number(block, "ea_el", where)
    c0 = _number(block, "c0", where, 0.0)
    c1 = _number(block, "c1", where, 1.0)
    aspect = _number(block, "aspect", where, 1.0)
    calib = [k for k in ("g_target", "x_target", "t_target") if k in block]
    if "g_ref" in block and calib:
        raise ConfigError("give either 'g_ref' or the g_target/x_target/t_target calibration", key=calib[0])
    if "g_ref" in block:
        model = ConductanceModel(_number(block, "g_ref", where), t_ref_el, ea, c0, c1, aspect)
    else:
        model = ConductanceModel.calibrated(
            _number(block, "g_target", where), _number(block, "x_target", where),
            _number(block, "t_target", where), ea_el=ea, c0=c0, c1=c1, aspect=aspect, t_ref_el=t_ref_el)
    resolved = {"g_ref": model.g_ref, "t_ref_el": t_ref_el, "ea_el": ea, "c0": c0, "c1": c1, "aspect": aspect}
    return model, resolved


def _parse_read(block, seed):
    where = "read"
    _check_keys(block, BLOCK_KEYS[where], where)
    d = ReadConfig()
    perturbative = block.get("perturbative", d.perturbative)
    if not isinstance(perturbative, bool):
        raise ConfigError("'perturbative' must be true or false", key="perturbative")
    n_cycles = block.get("n_cycles", d.n_cycles)
    if isinstance(n_cycles, bool) or not isinstance(n_cycles, int):
        raise ConfigError("'n_cycles' must be an integer", key="n_cycles")
    cfg = ReadConfig(
        amplitude=_number(block, "amplitude", where, d.amplitude),
        half_period=_number(block, "half_period", where, d.half_period),
        n_cycles=n_cycles,
        noise_sigma=_number(block, "noise_sigma", where, d.noise_sigma),
        seed=seed,
        sample_rate=_number(block, "sample_rate", where, d.sample_rate),
        perturbative=perturbative,
    )
    resolved = {"amplitude": cfg.amplitude, "half_period": cfg.half_period, "n_cycles": cfg.n_cycles,
                "noise_sigma": cfg.noise_sigma, "sample_rate": cfg.sample_rate, "perturbative": cfg.perturbative}
    return cfg, resolved


def _parse_step(item, k, seed, read_defaults):
    where = f"protocol[{k}]"
    if not isinstance(item, dict):
        raise ConfigError(f"{where} must be a JSON object", key=where)
    kind = _require(item, "type", where)
    if kind not in STEP_KEYS:
        raise ConfigError(f"unknown step type {kind!r} in {where}", key="type")
    _check_keys(item, STEP_KEYS[kind] | {"type"}, where)
    if kind == "set_temperature":
        return SetTemperature(_number(item, "kelvin", where))
    if kind == "drive":
        return Drive(_number(item, "v_gate", where), _number(item, "duration", where))
    if kind == "hold":
        return Hold(_number(item, "duration", where))
    if kind == "reset_charge":
        return ResetCharge()
    if kind == "read":
        if "read" not in item:
            return Read()
        cfg, _ = _parse_read({**read_defaults, **item["read"]}, seed)
        return Read(cfg)
    count = _require(item, "count", where)
    if isinstance(count, bool) or not isinstance(count, int):
        raise ConfigError(f"'count' in {where} must be an integer", key="count")
    read_between = item.get("read_between", True)
    if not isinstance(read_between, bool):
        raise ConfigError(f"'read_between' in {where} must be true or false", key="read_between")
    return PulseTrain(count, _number(item, "v_gate", where), _number(item, "pulse_duration", where),
                      _number(item, "rest_duration", where), read_between)


def parse_config(raw: dict) -> Setup:
    """Validate a configuration object and build the run setup."""
    _check_keys(raw, TOP_KEYS, "config")
    if ("scenario" in raw) == ("protocol" in raw):
        raise ConfigError("config needs exactly one of 'scenario' or 'protocol'", key="scenario")
    if "scenario" in raw:
        name = raw["scenario"]
        if not isinstance(name, str):
            raise ConfigError("'scenario' must be a string", key="scenario")
        base = scenario_dict(name)
        if "scenario" in base:
            raise ConfigError(f"scenario file {name!r} must not itself reference a scenario", key="scenario")
        merged = _merge(base, {k: v for k, v in raw.items() if k != "scenario"})
        merged.setdefault("name", name)
        return parse_config(merged)

    try:
        return _parse_resolved(raw)
    except DomainError as exc:
        raise ConfigError(f"invalid parameter: {exc}") from exc


def _parse_resolved(raw):
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("'seed' must be a non-negative integer", key="seed")
    blocks = {}
    for b in BLOCK_KEYS:
        blocks[b] = raw.get(b, {})
        _check_keys(blocks[b], BLOCK_KEYS[b], b)

    ini = blocks["initial"]
    initial = CellState(
        x1=_number(ini, "x1", "initial"), x2=_number(ini, "x2", "initial"),
        n1=_number(ini, "n1", "initial"), n2=_number(ini, "n2", "initial"),
        temperature=_number(ini, "temperature", "initial"),
        q_accum=_number(ini, "q_accum", "initial", 0.0), v_dl=_number(ini, "v_dl", "initial", 0.0),
    )
    fe, model_res = _parse_model(blocks["model"], initial.temperature)
    cond, cond_res = _parse_conductance(blocks["conductance"])

    cb = blocks["circuit"]
    circuit = CircuitParams(
        r_ref=_number(cb, "r_ref", "circuit"), t_ref=_number(cb, "t_ref", "circuit"),
        ea_ion=_number(cb, "ea_ion", "circuit"), z=_number(cb, "z", "circuit", 2.0),
        c_dl=_number(cb, "c_dl", "circuit", 0.0), oxidation_rate=_number(cb, "oxidation_rate", "circuit", 0.0),
        x_ambient=_number(cb, "x_ambient", "circuit", 0.0),
    )
    sb = blocks["sampling"]
    d = IntegratorOptions()
    max_sub = sb.get("max_substeps", d.max_substeps)
    if isinstance(max_sub, bool) or not isinstance(max_sub, int):
        raise ConfigError("'max_substeps' must be an integer", key="max_substeps")
    options = IntegratorOptions(rtol=_number(sb, "rtol", "sampling", d.rtol), h_min=_number(sb, "h_min", "sampling", d.h_min),
                                max_substeps=max_sub, smoothing=_number(sb, "smoothing", "sampling", d.smoothing))
    sampling = Sampling(interval=_number(sb, "interval", "sampling", 1.0), edge=_number(sb, "edge", "sampling", 1e-3),
                        options=options)
    read, read_res = _parse_read(blocks["read"], seed)

    steps = raw["protocol"]
    if not isinstance(steps, list) or not steps:
        raise ConfigError("'protocol' must be a non-empty list of steps", key="protocol")
    protocol = [_parse_step(s, k, seed, blocks["read"]) for k, s in enumerate(steps)]

    analyses = raw.get("analyses", [])
    if not isinstance(analyses, list):
        raise ConfigError("'analyses' must be a list", key="analyses")
    for a in analyses:
        if a not in ANALYSES:
            raise ConfigError(f"unknown analysis {a!r}", key=str(a))

    resolved = {
        "name": raw.get("name", "custom"),
        "description": raw.get("description", ""),
        "seed": seed,
        "model": model_res,
        "circuit": {"r_ref": circuit.r_ref, "t_ref": circuit.t_ref, "ea_ion": circuit.ea_ion, "z": circuit.z,
                    "c_dl": circuit.c_dl, "oxidation_rate": circuit.oxidation_rate, "x_ambient": circuit.x_ambient},
        "conductance": cond_res,
        "initial": {"x1": initial.x1, "x2": initial.x2, "n1": initial.n1, "n2": initial.n2,
                    "temperature": initial.temperature, "q_accum": initial.q_accum, "v_dl": initial.v_dl},
        "sampling": {"interval": sampling.interval, "edge": sampling.edge, "rtol": options.rtol,
                     "h_min": options.h_min, "max_substeps": options.max_substeps, "smoothing": options.smoothing},
        "read": read_res,
        "protocol": copy.deepcopy(steps),
        "analyses": list(analyses),
    }
    if "output" in raw:
        resolved["output"] = raw["output"]
    return Setup(
        name=resolved["name"], protocol=protocol, models=Models(fe, cond), circuit=circuit, initial=initial,
        sampling=sampling, read=read, seed=seed, analyses=list(analyses), description=resolved["description"],
        resolved=resolved,
    )


# -- phase-field runs ------------------------------------------------------------------

PF_TOP_KEYS = {"name", "description", "seed", "temperature", "model", "grid", "initial", "time", "output"}
PF_BLOCK_KEYS = {
    "model": BLOCK_KEYS["model"] | {"kappa_kT"},
    "grid": {"n", "dx", "mobility"},
    "initial": {"x0", "noise", "profile_csv"},
    "time": {"dt", "n_steps", "scheme", "sample_every", "snapshot_every", "boundary_flux"},
}


@dataclass
class PhaseFieldSetup:
    name: str
    model: object
    temperature: float
    profile: object
    dt: float
    n_steps: int
    scheme: str
    sample_every: int
    snapshot_every: int
    boundary_flux: float
    seed: int
    resolved: dict = field(default_factory=dict)


def _int(block, key, where, default):
    v = block.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int) or v < 0:
        raise ConfigError(f"'{key}' in {where} must be a non-negative integer", key=key)
    return v


def parse_phasefield_config(raw: dict, base_dir=None) -> PhaseFieldSetup:
    """Validate a phase-field configuration.

    ``time.dt`` may be the string ``"auto"`` for the explicit step bound.
    ``initial`` is either ``x0`` with optional seeded ``noise`` or a
    ``profile_csv`` path (relative paths resolve against ``base_dir``).
    """
    from .phasefield import SCHEMES, FieldProfile, read_profile_csv, stable_dt
    from .thermo import thermal_energy

    _check_keys(raw, PF_TOP_KEYS, "config")
    blocks = {}
    for b in PF_BLOCK_KEYS:
        blocks[b] = raw.get(b, {})
        _check_keys(blocks[b], PF_BLOCK_KEYS[b], b)
    seed = _int(raw, "seed", "config", 0)
    try:
        temperature = _number(raw, "temperature", "config")
        mb = dict(blocks["model"])
        if "kappa_kT" in mb:
            if "kappa" in mb:
                raise ConfigError("give either 'kappa' or 'kappa_kT'", key="kappa_kT")
            mb["kappa"] = _number(mb, "kappa_kT", "model") * thermal_energy(temperature)
            del mb["kappa_kT"]
        model, model_res = _parse_model(mb, temperature)

        grid = blocks["grid"]
        dx = _number(grid, "dx", "grid", 1.0)
        mobility = _number(grid, "mobility", "grid", 1.0)
        ini = blocks["initial"]
        if "profile_csv" in ini:
            if {"x0", "noise"} & ini.keys():
                raise ConfigError("give either 'profile_csv' or 'x0'/'noise'", key="profile_csv")
            path = Path(ini["profile_csv"])
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            profile = read_profile_csv(path, mobility=mobility)
            initial_res = {"profile_csv": str(path)}
        else:
            n = _int(grid, "n", "grid", 256)
            x0 = _number(ini, "x0", "initial")
            noise = _number(ini, "noise", "initial", 0.0)
            profile = FieldProfile.uniform(n, x0, dx=dx, mobility=mobility, noise=noise, seed=seed)
            initial_res = {"x0": x0, "noise": noise}

        tb = blocks["time"]
        scheme = tb.get("scheme", "explicit")
        if scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {scheme!r}", key="scheme")
        dt = stable_dt(profile, model, temperature) if tb.get("dt") == "auto" else _number(tb, "dt", "time")
        n_steps = _int(tb, "n_steps", "time", 1000)
        sample_every = max(1, _int(tb, "sample_every", "time", 100))
        snapshot_every = _int(tb, "snapshot_every", "time", sample_every)
        if snapshot_every % sample_every:
            raise ConfigError("'snapshot_every' must be a multiple of 'sample_every'", key="snapshot_every")
        flux = _number(tb, "boundary_flux", "time", 0.0)
    except (DomainError, OSError) as exc:
        raise ConfigError(f"invalid parameter: {exc}") from exc

    resolved = {
        "name": raw.get("name", "phasefield"),
        "description": raw.get("description", ""),
        "seed": seed,
        "temperature": temperature,
        "model": model_res,
        "grid": {"n": len(profile), "dx": profile.dx, "mobility": mobility},
        "initial": initial_res,
        "time": {"dt": dt, "n_steps": n_steps, "scheme": scheme, "sample_every": sample_every,
                 "snapshot_every": snapshot_every, "boundary_flux": flux},
    }
    return PhaseFieldSetup(resolved["name"], model, temperature, profile, dt, n_steps, scheme, sample_every,
                           snapshot_every, flux, seed, resolved)
