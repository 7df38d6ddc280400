"""Three-level Rydberg chains: states, sparse Hamiltonians and time evolution.

Levels per atom are indexed 0 -> |0>, 1 -> |1> (= |g>), 2 -> |r>.  Site 0 is
the most significant digit of the basis index.  Frequencies are angular
(rad/s) and times are seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

TWO_PI = 2 * math.pi
MHZ = TWO_PI * 1e6  # angular frequency of 1 MHz
LEVELS = {"0": 0, "1": 1, "g": 1, "r": 2}


class DimensionOverflow(ValueError):
    pass


@dataclass(frozen=True)
class HamiltonianParams:
    n_atoms: int
    omega: float
    delta: float
    v0: float
    spacing: float = 1.0
    max_atoms: int = 10

    def __post_init__(self):
        if self.n_atoms < 1:
            raise ValueError("need at least one atom")
        if self.v0 <= 0 or self.spacing <= 0:
            raise ValueError("v0 and spacing must be positive")
        if self.n_atoms > self.max_atoms:
            raise DimensionOverflow(f"{self.n_atoms} atoms exceeds the limit of {self.max_atoms}")

    @property
    def blockaded(self) -> bool:
        return self.v0 > self.omega

    def interaction(self, i: int, j: int) -> float:
        r = abs(i - j) * self.spacing
        return self.v0 * (self.spacing / r) ** 6

    def replace(self, **kw) -> "HamiltonianParams":
        d = dict(n_atoms=self.n_atoms, omega=self.omega, delta=self.delta, v0=self.v0,
                 spacing=self.spacing, max_atoms=self.max_atoms)
        d.update(kw)
        return HamiltonianParams(**d)

    @classmethod
    def quench(cls, n_atoms: int = 8, detuning: str = "0.3MHz") -> "HamiltonianParams":
        """Chain quench presets; ``detuning`` is "0.3MHz" or "0.0173V0"."""
        v0 = 20 * MHZ
        delta = {"0.3MHz": 0.3 * MHZ, "0.0173V0": 0.0173 * v0}[detuning]
        return cls(n_atoms, 3.1 * MHZ, delta, v0)


@dataclass
class ThreeLevelState:
    amps: np.ndarray
    n: int

    def __post_init__(self):
        self.amps = np.asarray(self.amps, dtype=complex)
        if self.amps.shape != (3 ** self.n,):
            raise ValueError(f"expected {3 ** self.n} amplitudes")

    @classmethod
    def product(cls, levels: str) -> "ThreeLevelState":
        """Basis state from a string over {0, 1, g, r}, e.g. ``"r1r1"``."""
        idx = 0
        for ch in levels:
            idx = 3 * idx + LEVELS[ch]
        amps = np.zeros(3 ** len(levels), dtype=complex)
        amps[idx] = 1.0
        return cls(amps, len(levels))

    @classmethod
    def ground(cls, n: int) -> "ThreeLevelState":
        return cls.product("1" * n)

    @classmethod
    def z2(cls, n: int) -> "ThreeLevelState":
        return cls.product("".join("r" if k % 2 == 0 else "1" for k in range(n)))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def tensor(self) -> np.ndarray:
        return self.amps.reshape((3,) * self.n)

    def populations(self) -> np.ndarray:
        """(n, 3) array of per-site level populations."""
        p = np.abs(self.tensor()) ** 2
        out = np.empty((self.n, 3))
        for i in range(self.n):
            out[i] = p.sum(axis=tuple(k for k in range(self.n) if k != i))
        return out

    def purity(self, sites: Sequence[int]) -> float:
        return reduced_purity(self.amps, self.n, 3, sites)


def reduced_matrix(amps: np.ndarray, n: int, d: int, sites: Sequence[int]) -> np.ndarray:
    """Amplitudes reshaped to (d^|A|, rest) with the ``sites`` axes first."""
    sites = list(sites)
    rest = [k for k in range(n) if k not in sites]
    t = np.transpose(amps.reshape((d,) * n), sites + rest)
    return t.reshape(d ** len(sites), -1)


def reduced_density_matrix(amps: np.ndarray, n: int, d: int, sites: Sequence[int]) -> np.ndarray:
    m = reduced_matrix(amps, n, d, sites)
    return m @ m.conj().T


def reduced_purity(amps: np.ndarray, n: int, d: int, sites: Sequence[int]) -> float:
    if not len(sites):
        return float(np.vdot(amps, amps).real) ** 2
    m = reduced_matrix(amps, n, d, sites)
    small = m @ m.conj().T if m.shape[0] <= m.shape[1] else m.conj().T @ m
    return float(np.sum(np.abs(small) ** 2))


@lru_cache(maxsize=16)
def _digits(n: int) -> np.ndarray:
    idx = np.arange(3 ** n)
    return np.stack([(idx // 3 ** (n - 1 - i)) % 3 for i in range(n)], axis=1)


@lru_cache(maxsize=16)
def _flip_operator(n: int, phase: complex = 1.0) -> sp.csr_matrix:
    """sum_i (e^{i phi}|r><1| + h.c.) acting on every site."""
    dig = _digits(n)
    rows, cols, vals = [], [], []
    for i in range(n):
        src = np.nonzero(dig[:, i] == 1)[0]
        dst = src + 3 ** (n - 1 - i)
        rows += [dst, src]
        cols += [src, dst]
        vals += [np.full(src.size, phase), np.full(src.size, np.conj(phase))]
    dim = 3 ** n
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(dim, dim))


def rydberg_counts(n: int) -> np.ndarray:
    return (_digits(n) == 2).astype(float)


def hamiltonian(params: HamiltonianParams, site_shift: Sequence[float] | None = None,
                drive_sites: Sequence[bool] | None = None) -> sp.csr_matrix:
    """Sparse H/hbar: drive, detuning, r^-6 interactions and optional per-site shifts of |r>.

    ``drive_sites`` masks the Rabi coupling (sites with False are not driven).
    """
    n = params.n_atoms
    nr = rydberg_counts(n)
    diag = -params.delta * nr.sum(axis=1)
    for i in range(n):
        for j in range(i + 1, n):
            diag = diag + params.interaction(i, j) * nr[:, i] * nr[:, j]
    if site_shift is not None:
        diag = diag + nr @ np.asarray(site_shift, dtype=float)
    if drive_sites is None:
        drive = _flip_operator(n)
    else:
        dig = _digits(n)
        drive = sp.csr_matrix((3 ** n, 3 ** n), dtype=complex)
        for i in np.nonzero(np.asarray(drive_sites, bool))[0]:
            src = np.nonzero(dig[:, i] == 1)[0]
            dst = src + 3 ** (n - 1 - i)
            drive = drive + sp.csr_matrix((np.ones(2 * src.size), (np.r_[dst, src], np.r_[src, dst])),
                                          shape=drive.shape)
    return (params.omega / 2 * drive + sp.diags(diag)).tocsr()


def _check_norm(amps: np.ndarray, tol: float = 1e-9) -> None:
    err = abs(np.linalg.norm(amps) - 1)
    if err > tol:
        raise ArithmeticError(f"norm drifted by {err:.2e}")


def evolve(state: ThreeLevelState, params: HamiltonianParams, t: float,
           site_shift: Sequence[float] | None = None,
           drive_sites: Sequence[bool] | None = None) -> ThreeLevelState:
    """exp(-i H t) applied to ``state`` (Krylov-type action of the sparse exponential)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if state.n != params.n_atoms:
        raise ValueError("state and Hamiltonian sizes differ")
    if t == 0:
        return ThreeLevelState(state.amps.copy(), state.n)
    h = hamiltonian(params, site_shift, drive_sites)
    keep = _occupied_blocks(state.amps, state.n)
    out = np.zeros_like(state.amps)
    if keep is None:
        out = expm_multiply(-1j * t * h, state.amps)
    else:
        out[keep] = expm_multiply(-1j * t * h[keep][:, keep], state.amps[keep])
    _check_norm(out)
    return ThreeLevelState(out, state.n)


def _occupied_blocks(amps: np.ndarray, n: int) -> np.ndarray | None:
    """Indices of the |0>-patterns the state occupies, or None if that is all of them.

    H never touches |0>, so each pattern of |0> sites is a conserved block.
    """
    zeros = (_digits(n) == 0) @ (1 << np.arange(n))
    present = np.unique(zeros[np.abs(amps) > 0])
    if present.size == 2 ** n:
        return None
    return np.nonzero(np.isin(zeros, present))[0]


def evolve_grid(state: ThreeLevelState, params: HamiltonianParams, times: Sequence[float],
                site_shift: Sequence[float] | None = None) -> list[ThreeLevelState]:
    """States at each of the (sorted, non-negative) ``times``."""
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise ValueError("times must be sorted and non-negative")
    h = hamiltonian(params, site_shift)
    out, psi, now = [], state.amps, 0.0
    for t in times:
        if t > now:
            psi = expm_multiply(-1j * (t - now) * h, psi)
            _check_norm(psi)
            now = t
        out.append(ThreeLevelState(psi.copy(), state.n))
    return out


def energy(state: ThreeLevelState, params: HamiltonianParams) -> float:
    return float(np.vdot(state.amps, hamiltonian(params) @ state.amps).real)


def step_halving_error(params: HamiltonianParams, t: float, state: ThreeLevelState | None = None) -> float:
    """Relative difference between one propagation over t and two over t/2."""
    state = state or ThreeLevelState.ground(params.n_atoms)
    one = evolve(state, params, t).amps
    two = evolve(evolve(state, params, t / 2), params, t / 2).amps
    return float(np.linalg.norm(one - two) / np.linalg.norm(one))


def self_test(params: HamiltonianParams, t: float, tol: float = 1e-8) -> float:
    err = step_halving_error(params, t)
    if err > tol:
        raise ArithmeticError(f"propagator self-test failed: step-halving difference {err:.2e}")
    return err
