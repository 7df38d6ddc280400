"""State preparation and the {|1>,|r>} -> {|0>,|1>} coherent mapping with its error sources."""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .hamiltonian import MHZ, TWO_PI, HamiltonianParams, ThreeLevelState, _digits, evolve


@dataclass(frozen=True)
class MappingErrorModel:
    doppler_sigma: float = 100e3            # Hz, std of the random on-site detuning of |r>
    gap_time: float = 150e-9                # s, free evolution before the final pi pulse
    final_pulse_omega_scale: float = 2.0
    empirical_decay_rate: float = 1 / 70e-6  # per atom, 1/s
    t0_purity_scale: float = 1.0            # measured global purity at t = 0
    pulse_interactions: bool = True         # interactions act during the final pi pulse
    dephase_during_dynamics: bool = True

    def __post_init__(self):
        if min(self.doppler_sigma, self.gap_time, self.final_pulse_omega_scale,
               self.empirical_decay_rate, self.t0_purity_scale) < 0:
            raise ValueError("error-model parameters must be non-negative")
        if self.final_pulse_omega_scale == 0:
            raise ValueError("final pulse needs a non-zero Rabi frequency")

    @classmethod
    def zero(cls) -> "MappingErrorModel":
        return cls(0.0, 0.0, 2.0, 0.0, 1.0, False, False)

    @classmethod
    def ed8(cls, n_atoms: int = 8, pair_purity: float = 0.961) -> "MappingErrorModel":
        """Default error sources plus the benchmarked per-pair purity as the t = 0 offset."""
        return cls(t0_purity_scale=pair_purity ** n_atoms)

    @property
    def is_zero(self) -> bool:
        return (self.doppler_sigma == 0 and self.empirical_decay_rate == 0
                and self.t0_purity_scale == 1 and not self.pulse_interactions)

    def pair_factor(self, n_pairs: int, t: float) -> float:
        """Multiplicative purity factor per twin pair from decay and the t = 0 offset."""
        return self.t0_purity_scale ** (1 / n_pairs) * math.exp(-2 * t * self.empirical_decay_rate)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "MappingErrorModel":
        return cls(**d)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "MappingErrorModel":
        """Read a JSON file; the names ``zero`` and ``ed8`` select the presets."""
        if str(path) in ("zero", "ed8"):
            return getattr(cls, str(path))()
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class MappedState:
    """Qubit amplitudes over {|0>,|1>}^n; lost sites carry bit 0 and are flagged."""

    amps: np.ndarray
    lost: np.ndarray

    @property
    def n(self) -> int:
        return self.lost.size

    @classmethod
    def from_qubits(cls, amps: np.ndarray) -> "MappedState":
        amps = np.asarray(amps, dtype=complex)
        n = int(round(math.log2(amps.size)))
        if 2 ** n != amps.size:
            raise ValueError("amplitude count is not a power of two")
        return cls(amps, np.zeros(n, dtype=bool))


def prepare_z2(state: ThreeLevelState, params: HamiltonianParams, lightshift: float,
               mask: Sequence[bool], omega: float = 4.45 * MHZ,
               detuning: float | None = None) -> ThreeLevelState:
    """Global pi pulse with a light shift of |r> on the masked sites.

    The pulse detuning defaults to the interaction between atoms two sites
    apart, which is the shift every excited atom sees from its excited
    neighbours in the target pattern.  An infinite ``lightshift`` removes the
    drive from masked sites altogether.
    """
    mask = np.asarray(mask, dtype=bool)
    if detuning is None:
        detuning = params.interaction(0, 2) if params.n_atoms > 2 else 0.0
    p = params.replace(omega=omega, delta=detuning)
    t = math.pi / omega
    if math.isinf(lightshift):
        return evolve(state, p, t, drive_sites=~mask)
    return evolve(state, p, t, site_shift=lightshift * mask)


def sample_detunings(n: int, errs: MappingErrorModel, rng: np.random.Generator) -> np.ndarray:
    if errs.doppler_sigma == 0:
        return np.zeros(n)
    return rng.normal(0.0, TWO_PI * errs.doppler_sigma, size=n)


def _swap_ground_levels(t: np.ndarray) -> np.ndarray:
    for ax in range(t.ndim):
        t = np.take(t, [1, 0, 2], axis=ax)
    return t


def coherent_map(state: ThreeLevelState, errs: MappingErrorModel, params: HamiltonianParams,
                 rng: np.random.Generator | None = None,
                 detunings: np.ndarray | None = None) -> MappedState:
    """Raman |1>->|0>, a dephasing gap, Rydberg pi pulse |r>->|1>, then loss of residual |r>.

    Residual Rydberg population is resolved projectively site by site: the
    atom is lost with probability equal to its |r> population.
    """
    n = state.n
    if detunings is None:
        detunings = sample_detunings(n, errs, rng) if errs.doppler_sigma else np.zeros(n)
    t = _swap_ground_levels(state.tensor().copy())
    if errs.gap_time and np.any(detunings):
        dig = _digits(n)
        phase = np.exp(-1j * errs.gap_time * ((dig == 2) @ detunings))
        t = (t.reshape(-1) * phase).reshape(t.shape)
    omega = errs.final_pulse_omega_scale * params.omega
    if errs.pulse_interactions:
        p = params.replace(omega=omega, delta=0.0)
        amps = evolve(ThreeLevelState(t.reshape(-1), n), p, math.pi / omega,
                      site_shift=detunings).amps
        t = amps.reshape((3,) * n)
    else:
        for ax in range(n):  # ideal single-atom pi pulse: |r> -> -i|1>, |1> -> -i|r>
            t = np.take(t, [0, 2, 1], axis=ax)
            sl = [slice(None)] * n
            sl[ax] = slice(1, 3)
            t[tuple(sl)] *= -1j
    lost = np.zeros(n, dtype=bool)
    for i in range(n):
        p_r = float(np.sum(np.abs(np.take(t, 2, axis=i)) ** 2))
        if p_r < 1e-14:
            keep = [0, 1]
        elif p_r > 1 - 1e-14:
            keep = [2]
        else:
            if rng is None:
                raise ValueError("residual Rydberg population needs an rng to resolve loss")
            keep = [2] if rng.random() < p_r else [0, 1]
        mask = np.zeros(3, dtype=bool)
        mask[keep] = True
        shape = [1] * n
        shape[i] = 3
        t = t * mask.reshape(shape)
        t /= np.linalg.norm(t)  # later sites see the conditional state
        lost[i] = keep == [2]
    sel = tuple(slice(2, 3) if lost[i] else slice(0, 2) for i in range(n))
    q = t[sel]
    # lost sites collapse to a single index; pad them onto bit 0
    full = np.zeros((2,) * n, dtype=complex)
    full[tuple(slice(0, 1) if lost[i] else slice(0, 2) for i in range(n))] = q
    amps = full.reshape(-1)
    amps /= np.linalg.norm(amps)
    return MappedState(amps, lost)


def trajectory(initial: ThreeLevelState, params: HamiltonianParams, t: float,
               errs: MappingErrorModel, rng: np.random.Generator | None) -> MappedState:
    """One noise realisation: dynamics with static random detunings, then mapping."""
    det = sample_detunings(initial.n, errs, rng) if errs.doppler_sigma else np.zeros(initial.n)
    shift = det if errs.dephase_during_dynamics and np.any(det) else None
    state = evolve(initial, params, t, site_shift=shift)
    return coherent_map(state, errs, params, rng, det)
