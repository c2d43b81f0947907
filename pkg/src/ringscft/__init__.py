"""Ring-polymer self-consistent field theory for neutral atoms H..Ne.

Electron pairs are modelled as ring polymers in imaginary time. Densities,
fields and propagators are expanded in angular Gaussians centred on the
nucleus and the mean-field equations are iterated to self-consistency.
"""

__version__ = "0.1.0"

from ringscft.basis import BasisSet, ChannelSpec, build_basis, desk_channels, paper_channels
from ringscft.tensors import TensorSet, assemble_tensors
from ringscft.scf import ScfConfig, ScfResult, scf_iterate
from ringscft.observables import EnergyReport, energy_report

__all__ = [
    "BasisSet",
    "ChannelSpec",
    "build_basis",
    "desk_channels",
    "paper_channels",
    "TensorSet",
    "assemble_tensors",
    "ScfConfig",
    "ScfResult",
    "scf_iterate",
    "EnergyReport",
    "energy_report",
]

