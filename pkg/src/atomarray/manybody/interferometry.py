"""Two-copy Bell interferometry and Renyi entropies from twin-pair parities."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .hamiltonian import HamiltonianParams, ThreeLevelState, evolve, reduced_matrix
from .mapping import MappedState, MappingErrorModel, trajectory


class LengthMismatch(ValueError):
    pass


def _rx(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


@lru_cache(maxsize=1)
def bell_map() -> np.ndarray:
    """Twin-pair circuit sending the singlet to |00> (basis order |00>,|01>,|10>,|11>)."""
    cz = np.diag([1, 1, 1, -1]).astype(complex)
    z_first = np.kron(np.diag([1, -1]), np.eye(2))
    pre = np.kron(_rx(math.pi / 4), _rx(math.pi / 4))
    post = np.kron(_rx(math.pi / 2), _rx(math.pi / 2))
    return post @ cz @ pre @ z_first


SINGLET = np.array([0, 1, -1, 0], dtype=complex) / math.sqrt(2)


@dataclass
class PairShots:
    outcomes: np.ndarray  # (shots, n) pair outcome 0..3, 0 == |00>
    lost: np.ndarray      # (shots, n)
    singlet: np.ndarray   # (shots, n) counted |00> detections

    def __len__(self) -> int:
        return self.outcomes.shape[0]

    @property
    def n(self) -> int:
        return self.outcomes.shape[1]

    @classmethod
    def concat(cls, parts: Sequence["PairShots"]) -> "PairShots":
        return cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in ("outcomes", "lost", "singlet")))

    def p00(self) -> float:
        return float(self.singlet.mean())


def _as_mapped(x) -> MappedState:
    if isinstance(x, MappedState):
        return x
    if isinstance(x, ThreeLevelState):
        t = x.tensor()
        q = t[(slice(0, 2),) * x.n].reshape(-1)
        if abs(np.linalg.norm(q) - 1) > 1e-9:
            raise ValueError("state has population outside {|0>,|1>}; map it first")
        return MappedState.from_qubits(q)
    return MappedState.from_qubits(np.asarray(x))


def pair_distribution(copy1, copy2) -> np.ndarray:
    """Joint probability over base-4 pair outcomes after the Bell map on every twin pair."""
    a, b = _as_mapped(copy1), _as_mapped(copy2)
    if a.n != b.n:
        raise LengthMismatch(f"copies have {a.n} and {b.n} sites")
    n = a.n
    joint = np.multiply.outer(a.amps, b.amps).reshape((2,) * (2 * n))
    order = [k for i in range(n) for k in (i, n + i)]
    t = np.transpose(joint, order).reshape((4,) * n)
    u = bell_map()
    for ax in range(n):
        t = np.moveaxis(np.tensordot(u, t, axes=([1], [ax])), 0, ax)
    p = np.abs(t.reshape(-1)) ** 2
    p[p < 1e-15] = 0.0
    return p / p.sum()


def interfere_and_sample(copy1, copy2, n_shots: int, rng: np.random.Generator,
                         pair_factor: float = 1.0) -> PairShots:
    """Sample Bell-map outcomes on every twin pair of two independent copies.

    Pairs with a lost atom never count as |00>.  ``pair_factor`` < 1 flips
    each pair's singlet indicator with probability (1 - pair_factor)/2,
    multiplying every subsystem purity by pair_factor^|A|.
    """
    a, b = _as_mapped(copy1), _as_mapped(copy2)
    p = pair_distribution(a, b)
    n = a.n
    idx = rng.choice(p.size, size=n_shots, p=p)
    outcomes = np.stack([(idx // 4 ** (n - 1 - i)) % 4 for i in range(n)], axis=1).astype(np.uint8)
    lost = np.broadcast_to(a.lost | b.lost, outcomes.shape).copy()
    singlet = (outcomes == 0) & ~lost
    if pair_factor < 1:
        singlet ^= rng.random(outcomes.shape) < (1 - pair_factor) / 2
    return PairShots(outcomes, lost, singlet)


# ------------------------------------------------------------ estimators

@dataclass
class EntropyResult:
    mask: tuple[int, ...]
    purity: float
    purity_stderr: float
    s2: float
    stderr: float
    classical_offset: float = 0.0
    nonpositive: bool = False

    @property
    def s2_subtracted(self) -> float:
        return self.s2 - self.classical_offset


def _parity(shots: PairShots, sites: Sequence[int]) -> np.ndarray:
    sites = list(sites)
    if not sites:
        return np.ones(len(shots))
    return 1.0 - 2.0 * (shots.singlet[:, sites].sum(axis=1) % 2)


def _jackknife(values: np.ndarray, fn) -> float:
    """Jackknife standard error of fn(mean of columns) over rows."""
    n = values.shape[0]
    loo = (values.sum(axis=0) - values) / (n - 1)
    est = np.array([fn(row) for row in loo]) if values.ndim > 1 else fn(loo)
    est = np.asarray(est, dtype=float)
    est = est[np.isfinite(est)]
    if est.size < 2:
        return float("nan")
    return float(math.sqrt((n - 1) / n * np.sum((est - est.mean()) ** 2)))


def _safe_s2(p):
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(p > 0, -np.log2(np.where(p > 0, p, 1.0)), np.nan)


def renyi_entropy(shots: PairShots, mask: Sequence[int], classical_offset: float = 0.0) -> EntropyResult:
    """Purity as the mean twin-pair parity on ``mask``; S2 = -log2(purity)."""
    mask = tuple(mask)
    par = _parity(shots, mask)
    n = par.size
    purity = float(par.mean())
    p_err = float(par.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    if purity <= 0:
        return EntropyResult(mask, purity, p_err, float("nan"), float("nan"), classical_offset, True)
    s2 = -math.log2(purity)
    err = _jackknife(par, _safe_s2) if n > 1 else float("nan")
    return EntropyResult(mask, purity, p_err, s2, err, classical_offset)


def classical_offset(global_s2_t0: float, subsystem_size: int, n_sites: int) -> float:
    """Extensive classical entropy: the t = 0 global entropy per site times the subsystem size."""
    return global_s2_t0 * subsystem_size / n_sites


def mutual_information(shots: PairShots, a: Sequence[int], b: Sequence[int]) -> tuple[float, float]:
    """I(A:B) = S2(A) + S2(B) - S2(AB) with a jackknife error."""
    cols = np.stack([_parity(shots, a), _parity(shots, b), _parity(shots, list(a) + list(b))], axis=1)

    def fn(m):
        s = _safe_s2(m)
        return s[0] + s[1] - s[2]

    value = float(fn(cols.mean(axis=0)))
    return value, _jackknife(cols, fn)


# ------------------------------------------------------------ exact references

def pair_overlap(a: MappedState, b: MappedState, sites: Sequence[int]) -> float:
    """Tr[rho_A^a rho_A^b] with sites lost in either copy removed from A."""
    keep = [s for s in sites if not (a.lost[s] or b.lost[s])]
    if not keep:
        return 1.0
    ma = reduced_matrix(a.amps, a.n, 2, keep)
    mb = reduced_matrix(b.amps, b.n, 2, keep)
    if ma.shape[1] <= ma.shape[0]:
        return float(np.sum(np.abs(ma.conj().T @ mb) ** 2))
    return float(np.real(np.trace((ma @ ma.conj().T) @ (mb @ mb.conj().T))))


def trajectory_pairs(initial: ThreeLevelState, params: HamiltonianParams, t: float,
                     errs: MappingErrorModel, n_pairs: int, rng: np.random.Generator
                     ) -> list[tuple[MappedState, MappedState]]:
    """Independent noise realisations for the two copies."""
    if errs.is_zero:
        m = trajectory(initial, params, t, errs, None)
        return [(m, m)]
    return [(trajectory(initial, params, t, errs, rng), trajectory(initial, params, t, errs, rng))
            for _ in range(n_pairs)]


def purity_from_pairs(pairs, sites: Sequence[int], factor: float = 1.0) -> float:
    return float(np.mean([pair_overlap(a, b, sites) for a, b in pairs])) * factor ** len(sites)


def purity_oracle(params: HamiltonianParams, t: float, subsystem: Sequence[int],
                  errs: MappingErrorModel | None = None, initial: ThreeLevelState | None = None,
                  n_pairs: int = 50, rng: np.random.Generator | None = None) -> float:
    """Expected SWAP value between two copies; exact Tr[rho_A^2] when ``errs`` is zero."""
    errs = errs or MappingErrorModel.zero()
    initial = initial or ThreeLevelState.ground(params.n_atoms)
    if errs.is_zero:
        return evolve(initial, params, t).purity(list(subsystem))
    pairs = trajectory_pairs(initial, params, t, errs, n_pairs, rng or np.random.default_rng(0))
    return purity_from_pairs(pairs, subsystem, errs.pair_factor(params.n_atoms, t))


def sample_pairs(pairs, n_shots: int, rng: np.random.Generator, factor: float = 1.0) -> PairShots:
    """Spread ``n_shots`` evenly over the trajectory pairs."""
    k = len(pairs)
    counts = [n_shots // k + (1 if i < n_shots % k else 0) for i in range(k)]
    return PairShots.concat([interfere_and_sample(a, b, c, rng, factor)
                             for (a, b), c in zip(pairs, counts) if c])


@dataclass
class BenchmarkPoint:
    theta: float
    p00: float
    purity: float
    stderr: float


def interferometry_benchmark(thetas: Sequence[float], n_shots: int, rng: np.random.Generator,
                             errs: MappingErrorModel | None = None, n_atoms: int = 8) -> list[BenchmarkPoint]:
    """Identical single-qubit states Rx(theta)|0> in both copies, one twin pair each.

    The per-pair purity factor is that of an ``n_atoms`` chain under ``errs``.
    """
    errs = errs or MappingErrorModel.zero()
    factor = errs.pair_factor(n_atoms, 0.0)
    out = []
    for th in thetas:
        q = _rx(th) @ np.array([1, 0], dtype=complex)
        shots = interfere_and_sample(q, q, n_shots, rng, factor)
        r = renyi_entropy(shots, [0])
        out.append(BenchmarkPoint(float(th), shots.p00(), r.purity, r.purity_stderr))
    return out
