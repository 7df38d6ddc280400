"""Three-level Rydberg dynamics, CZ pulses, coherent mapping and two-copy entropies."""

from .analysis import oscillation_correlation, revival_period
from .cz import CZPulseParams, CZResult, cz_pulse_unitary, echoed_pair, ideal_cz, process_fidelity
from .hamiltonian import (MHZ, DimensionOverflow, HamiltonianParams, ThreeLevelState, energy, evolve,
                          evolve_grid, hamiltonian, reduced_density_matrix, reduced_purity, self_test,
                          step_halving_error)
from .interferometry import (EntropyResult, LengthMismatch, PairShots, bell_map, classical_offset,
                             interfere_and_sample, interferometry_benchmark, mutual_information,
                             pair_distribution, purity_from_pairs, purity_oracle, renyi_entropy,
                             sample_pairs, trajectory_pairs)
from .mapping import MappedState, MappingErrorModel, coherent_map, prepare_z2, trajectory
from .pxp import lucas, pxp_basis, pxp_evolve, pxp_single_site_entropy, pxp_z2

__all__ = [n for n in dir() if not n.startswith("_")]
