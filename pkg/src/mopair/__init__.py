"""mopair: simulation and heterodyne tomography of heralded
microwave-optical photon pairs from a piezo-optomechanical transducer."""

__version__ = "0.1.0"

from .device import PulseProfile, SystemParams
from .engine import BathSchedule
from .fock import DensityMatrix, ModeDims, Operator
from .temporal import TemporalEnvelope
from .tomography import CorrelationResult, HeraldBudget, MomentsMatrix, SampleSet

__all__ = [
    "__version__",
    "SystemParams",
    "PulseProfile",
    "BathSchedule",
    "ModeDims",
    "Operator",
    "DensityMatrix",
    "TemporalEnvelope",
    "SampleSet",
    "MomentsMatrix",
    "CorrelationResult",
    "HeraldBudget",
]
