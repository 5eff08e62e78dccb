"""Bosonic qudits on 2T coherent-state constellations: codes, noise, and SDP fidelity optimization."""
from .group_2t import Quaternion, GroupElement, Group2T, two_t
from .constellation import StateBasis, ConstellationState, build_2t_basis, orthonormalize
from .codes import Encoding, make_encoding, qutrit_logical, quoctit_logical, psk_encoding, random_encoding
from .channels import ChannelRep, loss_superop, dephasing_fock, lifetimes_to_rates
from .conic_solver import SdpProblem, SolverSettings, ChoiMatrix, solve
from .fidelity_opt import (FidelityInstance, entanglement_fidelity, optimal_recovery, optimal_encoding,
                           alternate_optimize, fidelity_loss, fidelity_dephasing)

__version__ = "0.1.0"

__all__ = [
    "Quaternion", "GroupElement", "Group2T", "two_t",
    "StateBasis", "ConstellationState", "build_2t_basis", "orthonormalize",
    "Encoding", "make_encoding", "qutrit_logical", "quoctit_logical", "psk_encoding", "random_encoding",
    "ChannelRep", "loss_superop", "dephasing_fock", "lifetimes_to_rates",
    "SdpProblem", "SolverSettings", "ChoiMatrix", "solve",
    "FidelityInstance", "entanglement_fidelity", "optimal_recovery", "optimal_encoding",
    "alternate_optimize", "fidelity_loss", "fidelity_dephasing",
]
