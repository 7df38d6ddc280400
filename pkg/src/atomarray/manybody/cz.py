"""Two-pulse detuned Rydberg CZ gate on a blockaded pair."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

TWO_PI = 2 * math.pi
_COMP = [0, 1, 3, 4]  # |00>, |01>, |10>, |11> inside the 9-dim {0,1,r}^2 space


@dataclass(frozen=True)
class CZPulseParams:
    omega: float                       # rad/s
    delta_ratio: float = -0.377371     # detuning / omega
    xi: float = -0.621089 * TWO_PI     # phase jump between the pulses (rad)
    tau_cycles: float = 0.683201       # pulse length in units of 2 pi / omega

    @property
    def delta(self) -> float:
        return self.delta_ratio * self.omega

    @property
    def tau(self) -> float:
        return self.tau_cycles / (self.omega / TWO_PI)


@dataclass
class CZResult:
    unitary: np.ndarray   # 4x4 block on {|00>,|01>,|10>,|11>}
    zeta: float           # single-qubit phase
    fidelity: float       # process fidelity to CZ . (Z(zeta) x Z(zeta))
    leakage: float        # worst-case population left outside the qubit space


def _pair_hamiltonian(omega: float, delta: float, phase: float, blockade: float) -> np.ndarray:
    one = np.zeros((3, 3), dtype=complex)
    one[2, 1] = omega / 2 * np.exp(1j * phase)
    one[1, 2] = np.conj(one[2, 1])
    one[2, 2] = -delta
    eye = np.eye(3)
    h = np.kron(one, eye) + np.kron(eye, one)
    h[8, 8] += blockade
    return h


def pulse_pair(p: CZPulseParams, blockade: float) -> np.ndarray:
    """Full 9x9 propagator of the two pulses (second pulse phase-shifted)."""
    u1 = expm(-1j * p.tau * _pair_hamiltonian(p.omega, p.delta, 0.0, blockade))
    u2 = expm(-1j * p.tau * _pair_hamiltonian(p.omega, p.delta, -p.xi, blockade))
    return u2 @ u1


def ideal_cz(zeta: float = 0.0) -> np.ndarray:
    return np.diag([1, np.exp(1j * zeta), np.exp(1j * zeta), -np.exp(2j * zeta)])


def process_fidelity(u: np.ndarray, v: np.ndarray) -> float:
    d = u.shape[0]
    return float(abs(np.trace(v.conj().T @ u)) ** 2 / d ** 2)


def cz_pulse_unitary(p: CZPulseParams, blockade: float) -> CZResult:
    full = pulse_pair(p, blockade)
    u = full[np.ix_(_COMP, _COMP)]
    leak = float(np.max(1 - np.sum(np.abs(u) ** 2, axis=0)))
    zeta = float(np.angle(u[1, 1] / u[0, 0]))
    return CZResult(u, zeta, process_fidelity(u, ideal_cz(zeta)), leak)


def rotation_y_pi() -> np.ndarray:
    return np.array([[0, -1], [1, 0]], dtype=complex)


def echoed_pair(p: CZPulseParams, blockade: float) -> np.ndarray:
    """Two gates with a Y(pi) on both qubits in between."""
    u = cz_pulse_unitary(p, blockade).unitary
    yy = np.kron(rotation_y_pi(), rotation_y_pi())
    return u @ yy @ u
