"""Simulator for electrochemical random-access memory (ECRAM) cells.

Subpackages by layer: :mod:`thermo` (free energies and phase diagrams),
:mod:`cell` (two-electrode circuit model), :mod:`phasefield` (1-D film
dynamics), :mod:`conductance` (channel read-out), :mod:`protocol` (measurement
scripts), :mod:`analysis` and :mod:`reports` (post-processing) and :mod:`cli`.
"""

__version__ = "0.1.0"

from .cell import CellState, CircuitParams, IntegratorOptions
from .conductance import ConductanceModel, ReadConfig
from .config import load_config, load_scenario, list_scenarios
from .protocol import Drive, Hold, Models, PulseTrain, Read, ResetCharge, Sampling, SetTemperature, execute
from .thermo import FreeEnergyModel, common_tangent, spinodal

__all__ = [
    "CellState",
    "CircuitParams",
    "ConductanceModel",
    "Drive",
    "FreeEnergyModel",
    "Hold",
    "IntegratorOptions",
    "Models",
    "PulseTrain",
    "Read",
    "ReadConfig",
    "ResetCharge",
    "Sampling",
    "SetTemperature",
    "__version__",
    "common_tangent",
    "execute",
    "list_scenarios",
    "load_config",
    "load_scenario",
    "spinodal",
]
