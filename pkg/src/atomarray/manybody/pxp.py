"""PXP model on a periodic ring in the nearest-neighbour blockaded subspace.

Basis states are integers whose set bits mark Rydberg atoms (bit i = site i);
no two cyclically adjacent bits may both be set.  H = (omega/2) sum_i P X_i P.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .hamiltonian import DimensionOverflow

MAX_PXP_ATOMS = 24


def lucas(n: int) -> int:
    a, b = 2, 1
    for _ in range(n):
        a, b = b, a + b
    return a


def _check(n: int) -> None:
    if n < 2:
        raise ValueError("ring needs at least two sites")
    if n > MAX_PXP_ATOMS:
        raise DimensionOverflow(f"{n} sites exceeds the PXP limit of {MAX_PXP_ATOMS}")


@lru_cache(maxsize=8)
def pxp_basis(n: int) -> np.ndarray:
    """Sorted blockade-allowed configurations of an n-site ring."""
    _check(n)
    states = np.array([0, 1], dtype=np.int64)  # build site by site without adjacent ones
    for i in range(1, n):
        last = (states >> (i - 1)) & 1
        states = np.concatenate([states, (states | (1 << i))[last == 0]])
    if n > 2:
        states = states[~(((states >> (n - 1)) & 1).astype(bool) & (states & 1).astype(bool))]
    return np.sort(states)


@lru_cache(maxsize=8)
def _pxp_operator(n: int) -> sp.csr_matrix:
    basis = pxp_basis(n)
    rows, cols = [], []
    for i in range(n):
        flipped = basis ^ (1 << i)
        pos = np.searchsorted(basis, flipped)
        pos = np.minimum(pos, basis.size - 1)
        ok = basis[pos] == flipped
        rows.append(np.nonzero(ok)[0])
        cols.append(pos[ok])
    r, c = np.concatenate(rows), np.concatenate(cols)
    return sp.csr_matrix((np.ones(r.size), (r, c)), shape=(basis.size, basis.size))


def pxp_z2(n: int) -> np.ndarray:
    """|rgrg...> with Rydberg atoms on even sites."""
    basis = pxp_basis(n)
    target = sum(1 << i for i in range(0, n, 2))
    if n % 2:
        raise ValueError("Z2 order needs an even ring")
    psi = np.zeros(basis.size, dtype=complex)
    psi[np.searchsorted(basis, target)] = 1.0
    return psi


def pxp_evolve(n_atoms: int, t: float | np.ndarray, initial: np.ndarray | None = None,
               omega: float = 1.0) -> np.ndarray:
    """State(s) at time(s) ``t`` (units of 1/omega); a grid of times returns one row per time."""
    _check(n_atoms)
    psi = pxp_z2(n_atoms) if initial is None else np.asarray(initial, dtype=complex)
    h = -1j * (omega / 2) * _pxp_operator(n_atoms)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if ts.size == 1:
        out = expm_multiply(h * ts[0], psi)
        return out if np.ndim(t) == 0 else out[None, :]
    if np.allclose(np.diff(ts), ts[1] - ts[0]):
        return expm_multiply(h, psi, start=ts[0], stop=ts[-1], num=ts.size, endpoint=True)
    return np.array([expm_multiply(h * x, psi) for x in ts])


def pxp_single_site_entropy(psi: np.ndarray, n: int, site: int) -> float:
    """Second Renyi entropy of one site."""
    basis = pxp_basis(n)
    occ = (basis >> site) & 1
    p1 = float(np.sum(np.abs(psi[occ == 1]) ** 2))
    partner = np.searchsorted(basis, basis[occ == 0] | (1 << site))
    partner = np.minimum(partner, basis.size - 1)
    ok = basis[partner] == (basis[occ == 0] | (1 << site))
    coh = np.vdot(psi[occ == 1][np.searchsorted(basis[occ == 1], basis[partner[ok]])],
                  psi[occ == 0][ok])
    purity = (1 - p1) ** 2 + p1 ** 2 + 2 * abs(coh) ** 2
    return -math.log2(purity)
