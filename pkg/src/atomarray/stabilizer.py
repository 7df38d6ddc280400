"""Batched stabilizer-tableau simulation with Pauli and loss noise.

The tableau follows the Aaronson-Gottesman layout (n destabilizer rows then
n stabilizer rows).  Every array carries a leading shot axis so that a whole
block of Monte Carlo shots advances through a layer with a handful of numpy
operations.  Rows are bit-packed: bit ``q`` of ``xs[b, i]`` is the X part of
row ``i`` on qubit ``q`` in shot ``b``.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import (Circuit, EchoPulse, GlobalRotation, Layer, MeasureAll, Move, ParallelCZ,
                   PauliString, ShotBatch, SublatticeRotation, quarter_turns, single_qubit_table)

MAX_QUBITS = 64
_ONE = np.uint64(1)
# symplectic class index 2x + z


def _popcount_parity(words: np.ndarray) -> np.ndarray:
    return (np.bitwise_count(words) & 1).astype(np.uint8)


def _rowsum_phase(x1, z1, r1, x2, z2, r2) -> np.ndarray:
    """Sign bit of P1 * P2 for packed rows (arrays broadcast)."""
    xo1, zo1 = x1 & ~z1, ~x1 & z1
    y1 = x1 & z1
    pos = (xo1 & x2 & z2) | (zo1 & x2 & ~z2) | (y1 & ~x2 & z2)
    neg = (xo1 & ~x2 & z2) | (zo1 & x2 & z2) | (y1 & x2 & ~z2)
    tot = (2 * r1.astype(np.int64) + 2 * r2.astype(np.int64)
           + np.bitwise_count(pos).astype(np.int64) - np.bitwise_count(neg).astype(np.int64))
    return ((tot % 4) // 2).astype(np.uint8)


def _word(qubits) -> np.uint64:
    w = 0
    for q in qubits:
        w |= 1 << int(q)
    return np.uint64(w)


class StabilizerState:
    """Tableaux for ``batch`` independent shots of an ``n``-qubit register."""

    def __init__(self, n: int, batch: int = 1, atom_ids: Sequence[int] | None = None):
        if n > MAX_QUBITS:
            raise ValueError(f"at most {MAX_QUBITS} qubits supported")
        self.n = n
        self.batch = batch
        self.atom_ids = tuple(atom_ids) if atom_ids is not None else tuple(range(n))
        self._index = {a: i for i, a in enumerate(self.atom_ids)}
        rows = np.array([1 << i for i in range(n)], dtype=np.uint64)
        zero = np.zeros(n, dtype=np.uint64)
        self.xs = np.tile(np.concatenate([rows, zero]), (batch, 1))
        self.zs = np.tile(np.concatenate([zero, rows]), (batch, 1))
        self.r = np.zeros((batch, 2 * n), dtype=np.uint8)
        self.lost = np.zeros((batch, n), dtype=bool)

    def copy(self) -> "StabilizerState":
        out = StabilizerState.__new__(StabilizerState)
        out.__dict__.update({k: (v.copy() if isinstance(v, np.ndarray) else v)
                             for k, v in self.__dict__.items()})
        return out

    def qubit(self, atom: int) -> int:
        return self._index[atom]

    @property
    def alive_words(self) -> np.ndarray:
        """Per-shot bitmask of qubits still present."""
        weights = (np.uint64(1) << np.arange(self.n, dtype=np.uint64))
        return (~self.lost).astype(np.uint64) @ weights if self.n else np.zeros(self.batch, np.uint64)

    # -- gates --------------------------------------------------------
    def rotate(self, qubits: Sequence[int], axis: str, angle: float) -> None:
        """Clifford rotation on the given qubit indices, skipping lost qubits."""
        table = single_qubit_table(axis, quarter_turns(angle), True)
        if all(table[s] == (s, 1) for s in table):
            return
        active = (_word(qubits) & self.alive_words)[:, None]
        x, z = self.xs, self.zs
        classes = {"I": ~x & ~z, "Z": ~x & z, "X": x & ~z, "Y": x & z}
        nx = np.zeros_like(x)
        nz = np.zeros_like(z)
        flip = np.zeros_like(x)
        for s, m in classes.items():
            t, sg = table[s]
            if t in ("X", "Y"):
                nx |= m
            if t in ("Z", "Y"):
                nz |= m
            if sg < 0:
                flip |= m
        self.xs = (x & ~active) | (nx & active)
        self.zs = (z & ~active) | (nz & active)
        self.r ^= _popcount_parity(flip & active)

    def cz(self, a: int, b: int) -> None:
        ok = (~self.lost[:, a] & ~self.lost[:, b])[:, None]
        ba, bb = np.uint64(a), np.uint64(b)
        xa = (self.xs >> ba) & _ONE
        xb = (self.xs >> bb) & _ONE
        za = (self.zs >> ba) & _ONE
        zb = (self.zs >> bb) & _ONE
        self.r ^= (ok & (xa & xb & (za ^ zb)).astype(bool)).astype(np.uint8)
        upd = np.where(ok, (xb << ba) | (xa << bb), np.uint64(0))
        self.zs ^= upd

    def apply_pauli_words(self, ex: np.ndarray, ez: np.ndarray) -> None:
        """Apply per-shot Pauli errors given as packed X and Z words."""
        anti = (self.xs & ez[:, None]) ^ (self.zs & ex[:, None])
        self.r ^= _popcount_parity(anti)

    # -- measurement --------------------------------------------------
    def measure(self, q: int, coin: np.ndarray) -> np.ndarray:
        """Z measurement of qubit ``q`` in every shot; ``coin`` supplies random outcomes."""
        n, bit = self.n, _ONE << np.uint64(q)
        hasx = (self.xs & bit) != 0
        rand = hasx[:, n:].any(axis=1)
        out = np.zeros(self.batch, dtype=np.uint8)
        idx = np.nonzero(rand)[0]
        if idx.size:
            ar = np.arange(idx.size)
            p = n + hasx[idx, n:].argmax(axis=1)
            X, Z, R = self.xs[idx], self.zs[idx], self.r[idx]
            px, pz, pr = X[ar, p], Z[ar, p], R[ar, p]
            hit = hasx[idx].copy()
            hit[ar, p] = False
            newr = _rowsum_phase(px[:, None], pz[:, None], pr[:, None], X, Z, R)
            R = np.where(hit, newr, R)
            X = np.where(hit, X ^ px[:, None], X)
            Z = np.where(hit, Z ^ pz[:, None], Z)
            X[ar, p - n], Z[ar, p - n], R[ar, p - n] = px, pz, pr
            X[ar, p], Z[ar, p] = 0, bit
            R[ar, p] = coin[idx]
            self.xs[idx], self.zs[idx], self.r[idx] = X, Z, R
            out[idx] = coin[idx]
        det = np.nonzero(~rand)[0]
        if det.size:
            out[det] = self._product_sign(det, hasx[det, :n])
        return out

    def _product_sign(self, idx: np.ndarray, select: np.ndarray) -> np.ndarray:
        """Sign bit of the product of stabilizer rows ``i`` where ``select[:, i]``."""
        n = self.n
        sx = np.zeros(idx.size, dtype=np.uint64)
        sz = np.zeros_like(sx)
        sr = np.zeros(idx.size, dtype=np.uint8)
        for i in range(n):
            m = select[:, i]
            if not m.any():
                continue
            rx, rz, rr = self.xs[idx, n + i], self.zs[idx, n + i], self.r[idx, n + i]
            nr = _rowsum_phase(rx, rz, rr, sx, sz, sr)
            sr = np.where(m, nr, sr)
            sx = np.where(m, sx ^ rx, sx)
            sz = np.where(m, sz ^ rz, sz)
        return sr

    def expectation(self, op: PauliString) -> np.ndarray:
        """Per-shot expectation (+1, -1 or 0) of a Pauli on the current state."""
        ex = np.uint64(0)
        ez = np.uint64(0)
        for a, s in op.ops:
            q = np.uint64(self._index[a])
            if s in ("X", "Y"):
                ex |= _ONE << q
            if s in ("Z", "Y"):
                ez |= _ONE << q
        n = self.n
        anti = _popcount_parity((self.xs & ez) ^ (self.zs & ex)).astype(bool)
        val = np.zeros(self.batch, dtype=np.int64)
        det = ~anti[:, n:].any(axis=1)
        idx = np.nonzero(det)[0]
        if idx.size:
            sign = self._product_sign(idx, anti[idx, :n])
            val[idx] = op.sign * (1 - 2 * sign.astype(np.int64))
        return val

    def stabilizers(self, shot: int = 0) -> list[PauliString]:
        out = []
        for i in range(self.n, 2 * self.n):
            ops = {}
            for q, a in enumerate(self.atom_ids):
                x = int(self.xs[shot, i] >> np.uint64(q)) & 1
                z = int(self.zs[shot, i] >> np.uint64(q)) & 1
                if x or z:
                    ops[a] = "IZXY"[2 * x + z]
            out.append(PauliString.from_dict(ops, -1 if self.r[shot, i] else 1))
        return out


def apply_layer(state: StabilizerState, layer: Layer) -> StabilizerState:
    """Apply one noiseless Clifford layer in place and return the state."""
    if isinstance(layer, MeasureAll):
        raise ValueError("measurement is handled by sample_shots")
    if isinstance(layer, GlobalRotation):
        state.rotate(range(state.n), layer.axis, layer.angle)
    elif isinstance(layer, SublatticeRotation):
        state.rotate([state.qubit(a) for a in layer.atoms], layer.axis, layer.angle)
    elif isinstance(layer, EchoPulse):
        state.rotate(range(state.n), "Y", math.pi)
    elif isinstance(layer, ParallelCZ):
        for a, b in layer.pairs:
            state.cz(state.qubit(a), state.qubit(b))
    elif isinstance(layer, Move):
        pass
    else:
        raise TypeError(f"unknown layer {layer!r}")
    return state


# ------------------------------------------------------------------ noise

@dataclass(frozen=True)
class PauliChannel:
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    loss: float = 0.0

    def __post_init__(self):
        probs = (self.x, self.y, self.z, self.loss)
        if any(p < 0 or p > 1 for p in probs) or sum(probs) > 1 + 1e-12:
            raise ValueError(f"invalid channel probabilities {probs}")

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum([self.x, self.y, self.z, self.loss])

    @property
    def is_zero(self) -> bool:
        return not any((self.x, self.y, self.z, self.loss))


# Layer kinds that trigger the ambient channel by default.
DEFAULT_AMBIENT_KINDS = frozenset({"global_rotation", "sublattice_rotation", "parallel_cz", "echo", "move"})


@dataclass(frozen=True)
class NoiseModel:
    tq_layer: PauliChannel = field(default_factory=PauliChannel)
    ambient_layer: PauliChannel = field(default_factory=PauliChannel)
    p_init_loss: float = 0.0
    ambient_kinds: frozenset[str] = DEFAULT_AMBIENT_KINDS
    tq_scope: str = "participants"
    tq_placement: str = "after"

    def __post_init__(self):
        if not 0 <= self.p_init_loss <= 1:
            raise ValueError("p_init_loss must lie in [0, 1]")
        object.__setattr__(self, "ambient_kinds", frozenset(self.ambient_kinds))
        if self.tq_scope not in ("participants", "all"):
            raise ValueError("tq_scope must be 'participants' or 'all'")
        if self.tq_placement not in ("before", "after"):
            raise ValueError("tq_placement must be 'before' or 'after'")

    @classmethod
    def zero(cls) -> "NoiseModel":
        return cls()

    @classmethod
    def ed6(cls) -> "NoiseModel":
        """Tabulated per-layer rates used for the code Monte Carlo.

        Ambient errors hit every atom at the preparation rotation and at each
        CZ layer; gate errors hit the gate participants ahead of the pulse.
        """
        return cls(PauliChannel(0.002, 0.002, 0.005, 0.005),
                   PauliChannel(0.001, 0.001, 0.004, 0.002), 0.01,
                   frozenset({"parallel_cz", "global_rotation"}), "participants", "before")

    @property
    def is_zero(self) -> bool:
        return self.tq_layer.is_zero and self.ambient_layer.is_zero and self.p_init_loss == 0

    def to_dict(self) -> dict:
        ch = lambda c: {"x": c.x, "y": c.y, "z": c.z, "loss": c.loss}
        return {"tq_layer": ch(self.tq_layer), "ambient_layer": ch(self.ambient_layer),
                "init_loss": self.p_init_loss, "ambient_kinds": sorted(self.ambient_kinds),
                "tq_scope": self.tq_scope, "tq_placement": self.tq_placement}

    @classmethod
    def from_dict(cls, d: Mapping) -> "NoiseModel":
        ch = lambda c: PauliChannel(c.get("x", 0.0), c.get("y", 0.0), c.get("z", 0.0), c.get("loss", 0.0))
        return cls(ch(d.get("tq_layer", {})), ch(d.get("ambient_layer", {})), d.get("init_loss", 0.0),
                   frozenset(d.get("ambient_kinds", DEFAULT_AMBIENT_KINDS)),
                   d.get("tq_scope", "participants"), d.get("tq_placement", "after"))

    @classmethod
    def load(cls, path: str | os.PathLike) -> "NoiseModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class RngSpec:
    """Counter-based stream: shot ``k`` uses key (seed, stream_id + k)."""

    seed: int
    stream_id: int = 0

    def generator(self, k: int = 0) -> np.random.Generator:
        key = np.array([self.seed & 0xFFFFFFFFFFFFFFFF, self.stream_id + k], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


def _sample_channel(u: np.ndarray, ch: PauliChannel, weights: np.ndarray):
    """Turn uniforms (batch, n) into packed X, Z and loss words."""
    c = ch.cumulative
    kind = np.searchsorted(c, u, side="right")  # 0:X 1:Y 2:Z 3:loss 4:none
    word = lambda m: (m.astype(np.uint64) @ weights) if m.shape[1] else np.zeros(m.shape[0], np.uint64)
    ex = word((kind == 0) | (kind == 1))
    ez = word((kind == 1) | (kind == 2))
    return ex, ez, kind == 3


def _inject_tq(state: StabilizerState, layer: Layer, noise: NoiseModel, u: np.ndarray,
               weights: np.ndarray) -> None:
    if not isinstance(layer, ParallelCZ) or noise.tq_layer.is_zero:
        return
    part = np.zeros(state.n, dtype=bool)
    if noise.tq_scope == "all":
        part[:] = True
    else:
        part[[state.qubit(a) for a in layer.participants]] = True
    ex, ez, lose = _sample_channel(np.where(part, u, 2.0), noise.tq_layer, weights)
    alive = state.alive_words
    state.apply_pauli_words(ex & alive, ez & alive)
    state.lost |= lose & part


def _uniform_count(c: Circuit) -> int:
    n = len(c.atoms)
    return n + 2 * n * len(c.layers)


def _run_block(c: Circuit, noise: NoiseModel, rng: RngSpec, start: int, stop: int):
    n, b = len(c.atoms), stop - start
    k = _uniform_count(c)
    u = np.stack([rng.generator(s).random(k) for s in range(start, stop)]) if b else np.zeros((0, k))
    state = StabilizerState(n, b, c.atom_ids)
    weights = np.uint64(1) << np.arange(n, dtype=np.uint64)
    state.lost |= u[:, :n] < noise.p_init_loss
    off = n
    noisy = not noise.is_zero
    measured = None
    for layer in c.layers:
        if isinstance(layer, MeasureAll):
            if layer.basis != "Z":
                raise ValueError("readout is in the Z basis; rotate first")
            coin = (u[:, off:off + n] < 0.5).astype(np.uint8)
            measured = np.stack([state.measure(q, coin[:, q]) for q in range(n)], axis=1) \
                if n else np.zeros((b, 0), np.uint8)
            break
        ua, ut = u[:, off:off + n], u[:, off + n:off + 2 * n]
        if noisy and noise.tq_placement == "before":
            _inject_tq(state, layer, noise, ut, weights)
        apply_layer(state, layer)
        if noisy:
            if layer.kind in noise.ambient_kinds and not noise.ambient_layer.is_zero:
                ex, ez, lose = _sample_channel(ua, noise.ambient_layer, weights)
                alive = state.alive_words
                state.apply_pauli_words(ex & alive, ez & alive)
                state.lost |= lose
            if noise.tq_placement == "after":
                _inject_tq(state, layer, noise, ut, weights)
        off += 2 * n
    if measured is None:
        raise ValueError("circuit has no final measurement")
    return measured, state.lost.copy()


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("ATOMARRAY_THREADS", "1")))
    except ValueError:
        return 1


def sample_shots(c: Circuit, noise: NoiseModel, n_shots: int, rng: RngSpec | int,
                 block: int = 4096) -> ShotBatch:
    """Monte Carlo shots of ``c``; identical (circuit, noise, rng) give identical output."""
    if isinstance(rng, int):
        rng = RngSpec(rng)
    bounds = [(s, min(s + block, n_shots)) for s in range(0, n_shots, block)]
    workers = min(_threads(), max(1, len(bounds)))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda se: _run_block(c, noise, rng, *se), bounds))
    else:
        parts = [_run_block(c, noise, rng, s, e) for s, e in bounds]
    n = len(c.atoms)
    bits = np.concatenate([p[0] for p in parts]) if parts else np.zeros((0, n), np.uint8)
    lost = np.concatenate([p[1] for p in parts]) if parts else np.zeros((0, n), bool)
    return ShotBatch(c.atom_ids, bits, lost)


def bell_fidelity_estimator(pop00: float, pop11: float, parity_amplitude: float,
                            loss_mode: str = "auto") -> float:
    """Bell fidelity from populations and parity-oscillation amplitude.

    With ``loss_mode="auto"`` a surplus of ``11`` counts above 0.1 is read as
    loss and the population term falls back to ``2 * pop00``.
    """
    for p in (pop00, pop11):
        if not 0 <= p <= 1:
            raise ValueError("populations must lie in [0, 1]")
    pops = pop00 + pop11
    if loss_mode == "skew" or (loss_mode == "auto" and pop11 - pop00 > 0.1):
        pops = 2 * pop00
    return pops / 2 + parity_amplitude / 2


def write_shots_csv(shots: ShotBatch, path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["shot_id", "bitstring", "loss_mask"])
        for k in range(len(shots)):
            w.writerow([k, "".join(map(str, shots.bits[k])),
                        "".join("1" if x else "0" for x in shots.lost[k])])


def read_shots_csv(path: str | os.PathLike, atom_ids: Sequence[int]) -> ShotBatch:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    bits = np.array([[int(ch) for ch in r["bitstring"]] for r in rows], dtype=np.uint8)
    lost = np.array([[ch == "1" for ch in r["loss_mask"]] for r in rows], dtype=bool)
    return ShotBatch(tuple(atom_ids), bits.reshape(len(rows), len(atom_ids)),
                     lost.reshape(len(rows), len(atom_ids)))
