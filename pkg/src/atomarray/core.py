"""Shared domain types and the circuit intermediate representation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Iterable, Iterator, Mapping, Sequence, Union

import numpy as np

BLOCKADE_RADIUS_UM = 5.0

PAULI_SYMBOLS = ("I", "X", "Y", "Z")


class BasisMismatch(ValueError):
    """Raised when an operator is not diagonal in a measurement setting."""


class NonCliffordAngle(ValueError):
    """Raised when a rotation is not a multiple of pi/2."""


class Trap(str, Enum):
    STATIC = "StaticSLM"
    MOBILE = "MobileAOD"


@dataclass(frozen=True)
class AtomRecord:
    id: int
    trap: Trap
    position: tuple[float, float]
    row: int | None = None
    col: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "trap", Trap(self.trap))
        x, y = (float(v) for v in self.position)
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ValueError(f"atom {self.id}: non-finite position")
        object.__setattr__(self, "position", (x, y))
        if self.trap is Trap.MOBILE and (self.row is None or self.col is None):
            raise ValueError(f"atom {self.id}: mobile atoms need AOD row and column")
        if self.trap is Trap.STATIC and (self.row is not None or self.col is not None):
            raise ValueError(f"atom {self.id}: static atoms carry no AOD indices")

    def to_dict(self) -> dict:
        return {"id": self.id, "trap": self.trap.value, "row": self.row,
                "col": self.col, "x": self.position[0], "y": self.position[1]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "AtomRecord":
        return cls(int(d["id"]), Trap(d["trap"]), (d["x"], d["y"]),
                   d.get("row"), d.get("col"))


# ---------------------------------------------------------------- layers

def _check_axis(axis: str) -> str:
    axis = axis.upper()
    if axis not in ("X", "Y", "Z"):
        raise ValueError(f"rotation axis must be X, Y or Z, got {axis!r}")
    return axis


@dataclass(frozen=True)
class GlobalRotation:
    axis: str
    angle: float
    kind = "global_rotation"

    def __post_init__(self):
        object.__setattr__(self, "axis", _check_axis(self.axis))
        object.__setattr__(self, "angle", float(self.angle))


@dataclass(frozen=True)
class SublatticeRotation:
    sublattice: str
    atoms: tuple[int, ...]
    axis: str
    angle: float
    kind = "sublattice_rotation"

    def __post_init__(self):
        object.__setattr__(self, "axis", _check_axis(self.axis))
        object.__setattr__(self, "angle", float(self.angle))
        object.__setattr__(self, "atoms", tuple(int(a) for a in self.atoms))


@dataclass(frozen=True)
class ParallelCZ:
    pairs: tuple[tuple[int, int], ...]
    kind = "parallel_cz"

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple((int(a), int(b)) for a, b in self.pairs))

    @property
    def participants(self) -> tuple[int, ...]:
        return tuple(q for p in self.pairs for q in p)


@dataclass(frozen=True)
class EchoPulse:
    """Global Y(pi)."""

    kind = "echo"


@dataclass(frozen=True)
class Move:
    """Rigid AOD displacement: (atom id, dx, dy) in micrometers over ``duration`` microseconds."""

    displacements: tuple[tuple[int, float, float], ...]
    duration: float
    kind = "move"

    def __post_init__(self):
        object.__setattr__(self, "displacements", tuple(
            (int(a), float(dx), float(dy)) for a, dx, dy in self.displacements))
        object.__setattr__(self, "duration", float(self.duration))


@dataclass(frozen=True)
class MeasureAll:
    basis: str = "Z"
    kind = "measure"

    def __post_init__(self):
        object.__setattr__(self, "basis", _check_axis(self.basis))


Layer = Union[GlobalRotation, SublatticeRotation, ParallelCZ, EchoPulse, Move, MeasureAll]


def layer_to_dict(layer: Layer) -> dict:
    if isinstance(layer, GlobalRotation):
        return {"kind": layer.kind, "axis": layer.axis, "angle": layer.angle}
    if isinstance(layer, SublatticeRotation):
        return {"kind": layer.kind, "sublattice": layer.sublattice, "atoms": list(layer.atoms),
                "axis": layer.axis, "angle": layer.angle}
    if isinstance(layer, ParallelCZ):
        return {"kind": layer.kind, "pairs": [list(p) for p in layer.pairs]}
    if isinstance(layer, EchoPulse):
        return {"kind": layer.kind}
    if isinstance(layer, Move):
        return {"kind": layer.kind, "duration": layer.duration,
                "displacements": [list(d) for d in layer.displacements]}
    if isinstance(layer, MeasureAll):
        return {"kind": layer.kind, "basis": layer.basis}
    raise TypeError(f"not a layer: {layer!r}")


def layer_from_dict(d: Mapping) -> Layer:
    kind = d["kind"]
    if kind == "global_rotation":
        return GlobalRotation(d["axis"], d["angle"])
    if kind == "sublattice_rotation":
        return SublatticeRotation(d["sublattice"], tuple(d["atoms"]), d["axis"], d["angle"])
    if kind == "parallel_cz":
        return ParallelCZ(tuple(tuple(p) for p in d["pairs"]))
    if kind == "echo":
        return EchoPulse()
    if kind == "move":
        return Move(tuple(tuple(x) for x in d["displacements"]), d["duration"])
    if kind == "measure":
        return MeasureAll(d.get("basis", "Z"))
    raise ValueError(f"unknown layer kind {kind!r}")


@dataclass(frozen=True)
class Circuit:
    name: str
    atoms: tuple[AtomRecord, ...]
    layers: tuple[Layer, ...]
    code: str | None = None
    blockade_radius: float = BLOCKADE_RADIUS_UM

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(self.atoms))
        object.__setattr__(self, "layers", tuple(self.layers))

    @property
    def atom_ids(self) -> tuple[int, ...]:
        return tuple(a.id for a in self.atoms)

    @property
    def index(self) -> dict[int, int]:
        return {a.id: i for i, a in enumerate(self.atoms)}

    @property
    def n_cz_layers(self) -> int:
        return sum(isinstance(l, ParallelCZ) for l in self.layers)

    def positions(self) -> Iterator[tuple[Layer, dict[int, tuple[float, float]]]]:
        """Yield each layer with atom positions in effect when it runs (after any Move)."""
        pos = {a.id: a.position for a in self.atoms}
        for layer in self.layers:
            if isinstance(layer, Move):
                pos = dict(pos)
                for aid, dx, dy in layer.displacements:
                    if aid in pos:
                        x, y = pos[aid]
                        pos[aid] = (x + dx, y + dy)
            yield layer, pos

    def to_dict(self) -> dict:
        return {"name": self.name, "code": self.code, "blockade_radius": self.blockade_radius,
                "atoms": [a.to_dict() for a in self.atoms],
                "layers": [layer_to_dict(l) for l in self.layers]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Circuit":
        return cls(d["name"], tuple(AtomRecord.from_dict(a) for a in d["atoms"]),
                   tuple(layer_from_dict(l) for l in d["layers"]), d.get("code"),
                   d.get("blockade_radius", BLOCKADE_RADIUS_UM))

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text: str) -> "Circuit":
        return cls.from_dict(json.loads(text))


# ------------------------------------------------------------ validation

@dataclass(frozen=True)
class Violation:
    layer: int
    rule: str
    detail: str = ""

    def __str__(self):
        return f"layer {self.layer}: {self.rule}" + (f" ({self.detail})" if self.detail else "")


def _dist(p, q) -> float:
    return math.hypot(p[0] - q[0], p[1] - q[1])


def _check_move(i: int, layer: Move, atoms: dict[int, AtomRecord],
                before: dict, after: dict) -> list[Violation]:
    out = []
    disp = {aid: (dx, dy) for aid, dx, dy in layer.displacements}
    if layer.duration <= 0:
        out.append(Violation(i, "move duration must be positive"))
    for aid, (dx, dy) in disp.items():
        if aid in atoms and atoms[aid].trap is Trap.STATIC and (dx or dy):
            out.append(Violation(i, "static atom moved", f"atom {aid}"))
    mobile = [a for a in atoms.values() if a.trap is Trap.MOBILE]
    for attr, axis, label in (("col", 0, "column"), ("row", 1, "row")):
        groups: dict[int, list[AtomRecord]] = {}
        for a in mobile:
            groups.setdefault(getattr(a, attr), []).append(a)
        coord = {}
        for key, members in groups.items():
            shifts = {round(disp.get(a.id, (0.0, 0.0))[axis], 9) for a in members}
            if len(shifts) > 1:
                out.append(Violation(i, f"AOD {label} not rigid", f"{label} {key}"))
            coord[key] = (before[members[0].id][axis], after[members[0].id][axis])
        keys = sorted(coord)
        for a, b in zip(keys, keys[1:]):
            if not (coord[a][0] < coord[b][0] and coord[a][1] < coord[b][1]):
                out.append(Violation(i, f"{label} order not preserved", f"{label}s {a},{b}"))
    return out


def validate_circuit(c: Circuit, blockade_radius: float | None = None) -> list[Violation]:
    """Check every layer invariant; an empty list means the circuit is valid."""
    radius = c.blockade_radius if blockade_radius is None else blockade_radius
    out: list[Violation] = []
    atoms = {a.id: a for a in c.atoms}
    if len(atoms) != len(c.atoms):
        out.append(Violation(-1, "atom ids not unique"))
    if not c.layers or not isinstance(c.layers[-1], MeasureAll):
        out.append(Violation(len(c.layers) - 1, "measurement is not the final layer"))
    prev = {a.id: a.position for a in c.atoms}
    for i, (layer, pos) in enumerate(c.positions()):
        if isinstance(layer, MeasureAll) and i != len(c.layers) - 1:
            out.append(Violation(i, "measurement is not the final layer"))
        refs: Iterable[int] = ()
        if isinstance(layer, ParallelCZ):
            refs = layer.participants
        elif isinstance(layer, SublatticeRotation):
            refs = layer.atoms
        elif isinstance(layer, Move):
            refs = [d[0] for d in layer.displacements]
        missing = sorted({r for r in refs if r not in atoms})
        if missing:
            out.append(Violation(i, "unknown atom", f"ids {missing}"))
            continue
        if isinstance(layer, ParallelCZ):
            seen = layer.participants
            if len(set(seen)) != len(seen) or any(a == b for a, b in layer.pairs):
                out.append(Violation(i, "pairs not disjoint"))
            paired = {frozenset(p) for p in layer.pairs}
            for a, b in layer.pairs:
                if a != b and _dist(pos[a], pos[b]) > radius:
                    out.append(Violation(i, "pair not adjacent",
                                         f"({a},{b}) at {_dist(pos[a], pos[b]):.2f} um"))
            ids = sorted(pos)
            xy = np.array([pos[k] for k in ids])
            d = np.hypot(*(xy[:, None, :] - xy[None, :, :]).transpose(2, 0, 1))
            for p, q in zip(*np.nonzero(np.triu(d <= radius, 1))):
                if frozenset((ids[p], ids[q])) not in paired:
                    out.append(Violation(i, "unpaired atoms within blockade radius",
                                         f"({ids[p]},{ids[q]})"))
        elif isinstance(layer, Move):
            out.extend(_check_move(i, layer, atoms, prev, pos))
        prev = pos
    return out


# ---------------------------------------------------------------- Paulis

_MULT = {  # (a, b) -> (phase exponent of i, product)
    ("X", "Y"): (1, "Z"), ("Y", "Z"): (1, "X"), ("Z", "X"): (1, "Y"),
    ("Y", "X"): (3, "Z"), ("Z", "Y"): (3, "X"), ("X", "Z"): (3, "Y"),
}


def _mult(a: str, b: str) -> tuple[int, str]:
    if a == "I":
        return 0, b
    if b == "I" or a == b:
        return (0, a) if b == "I" else (0, "I")
    return _MULT[a, b]


@dataclass(frozen=True)
class PauliString:
    """Signed tensor product of single-atom Paulis, keyed by atom id."""

    ops: tuple[tuple[int, str], ...]
    sign: int = 1

    def __post_init__(self):
        ops = tuple(sorted((int(q), s.upper()) for q, s in self.ops if s.upper() != "I"))
        if any(s not in PAULI_SYMBOLS for _, s in ops):
            raise ValueError(f"bad Pauli symbols in {ops}")
        if len({q for q, _ in ops}) != len(ops):
            raise ValueError("repeated atom in Pauli string")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        object.__setattr__(self, "ops", ops)

    @classmethod
    def from_dict(cls, ops: Mapping[int, str], sign: int = 1) -> "PauliString":
        return cls(tuple(ops.items()), sign)

    @classmethod
    def uniform(cls, symbol: str, atoms: Iterable[int], sign: int = 1) -> "PauliString":
        return cls(tuple((a, symbol) for a in atoms), sign)

    @classmethod
    def parse(cls, text: str) -> "PauliString":
        """Parse ``"-X1Z2"`` style strings (ids are decimal integers)."""
        import re
        text = text.strip()
        sign = -1 if text.startswith("-") else 1
        body = text.lstrip("+-")
        return cls(tuple((int(n), s) for s, n in re.findall(r"([IXYZ])(\d+)", body)), sign)

    def as_dict(self) -> dict[int, str]:
        return dict(self.ops)

    def symbol(self, q: int) -> str:
        return self.as_dict().get(q, "I")

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(q for q, _ in self.ops)

    @property
    def weight(self) -> int:
        return len(self.ops)

    def __neg__(self) -> "PauliString":
        return PauliString(self.ops, -self.sign)

    def __str__(self):
        body = "".join(f"{s}{q}" for q, s in self.ops) or "I"
        return ("+" if self.sign > 0 else "-") + body

    def commutes_with(self, other: "PauliString") -> bool:
        mine = self.as_dict()
        anti = sum(1 for q, s in other.ops if mine.get(q, "I") not in ("I", s))
        return anti % 2 == 0

    def __mul__(self, other: "PauliString") -> "PauliString":
        a, b = self.as_dict(), other.as_dict()
        phase = 0 if self.sign * other.sign > 0 else 2
        out = {}
        for q in sorted(set(a) | set(b)):
            k, s = _mult(a.get(q, "I"), b.get(q, "I"))
            phase += k
            out[q] = s
        phase %= 4
        if phase % 2:
            raise ValueError("product of anticommuting Paulis is not Hermitian")
        return PauliString.from_dict(out, 1 if phase == 0 else -1)

    def symplectic(self, order: Sequence[int]) -> np.ndarray:
        """Binary (x | z) vector over ``order``."""
        d = self.as_dict()
        x = [d.get(q, "I") in ("X", "Y") for q in order]
        z = [d.get(q, "I") in ("Z", "Y") for q in order]
        return np.array(x + z, dtype=np.uint8)


def pauli_product(ops: Iterable[PauliString]) -> PauliString:
    out = PauliString(())
    for op in ops:
        out = out * op
    return out


# ---------------------------------------------- Clifford conjugation tables

_PAULI_MATS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def rotation_matrix(axis: str, angle: float) -> np.ndarray:
    """exp(-i angle sigma_axis / 2)."""
    return (math.cos(angle / 2) * _PAULI_MATS["I"]
            - 1j * math.sin(angle / 2) * _PAULI_MATS[_check_axis(axis)])


def quarter_turns(angle: float) -> int:
    """Angle in units of pi/2, or NonCliffordAngle."""
    k = angle / (math.pi / 2)
    if abs(k - round(k)) > 1e-9:
        raise NonCliffordAngle(f"rotation angle {angle} is not a multiple of pi/2")
    return int(round(k)) % 4


def _identify(m: np.ndarray, basis: dict[tuple[str, ...], np.ndarray]) -> tuple[tuple[str, ...], int]:
    for key, p in basis.items():
        c = np.trace(p.conj().T @ m) / p.shape[0]
        if abs(abs(c) - 1) < 1e-9:
            if abs(c.imag) > 1e-9:
                raise AssertionError("non-Hermitian image")
            return key, int(round(c.real))
    raise AssertionError("matrix is not a signed Pauli")


@lru_cache(maxsize=None)
def single_qubit_table(axis: str, turns: int, forward: bool = True) -> dict[str, tuple[str, int]]:
    """Map P -> (P', sign) with U P U^dag (forward) or U^dag P U, U = R_axis(turns*pi/2)."""
    u = rotation_matrix(axis, turns * math.pi / 2)
    basis = {(s,): m for s, m in _PAULI_MATS.items()}
    out = {}
    for s, m in _PAULI_MATS.items():
        img = u @ m @ u.conj().T if forward else u.conj().T @ m @ u
        (t,), sg = _identify(img, basis)
        out[s] = (t, sg)
    return out


@lru_cache(maxsize=None)
def cz_table() -> dict[tuple[str, str], tuple[str, str, int]]:
    cz = np.diag([1, 1, 1, -1]).astype(complex)
    basis = {(a, b): np.kron(_PAULI_MATS[a], _PAULI_MATS[b]) for a in PAULI_SYMBOLS for b in PAULI_SYMBOLS}
    out = {}
    for key, m in basis.items():
        (a, b), sg = _identify(cz @ m @ cz, basis)
        out[key] = (a, b, sg)
    return out


def _rotate(ops: dict, sign: int, atoms: Iterable[int], axis: str, angle: float, forward: bool):
    table = single_qubit_table(axis, quarter_turns(angle), forward)
    for q in atoms:
        s, sg = table[ops.get(q, "I")]
        ops[q] = s
        sign *= sg
    return sign


def conjugate(op: PauliString, layer: Layer, all_atoms: Sequence[int], forward: bool = False) -> PauliString:
    """Conjugate ``op`` through a Clifford layer.

    ``forward=False`` gives the Heisenberg pull-back U^dag op U, used to trace a
    measured observable back to the initial product state.
    """
    ops, sign = op.as_dict(), op.sign
    if isinstance(layer, GlobalRotation):
        sign = _rotate(ops, sign, all_atoms, layer.axis, layer.angle, forward)
    elif isinstance(layer, SublatticeRotation):
        sign = _rotate(ops, sign, layer.atoms, layer.axis, layer.angle, forward)
    elif isinstance(layer, EchoPulse):
        sign = _rotate(ops, sign, all_atoms, "Y", math.pi, forward)
    elif isinstance(layer, ParallelCZ):
        table = cz_table()
        for a, b in layer.pairs:
            sa, sb, sg = table[ops.get(a, "I"), ops.get(b, "I")]
            ops[a], ops[b] = sa, sb
            sign *= sg
    return PauliString.from_dict(ops, sign)


def initial_expectation(op: PauliString) -> int:
    """Expectation of ``op`` on the all-zeros product state."""
    if any(s != "Z" for _, s in op.ops):
        return 0
    return op.sign


# ------------------------------------------------------------------ shots

@dataclass(frozen=True)
class ShotRecord:
    bits: tuple[int, ...]
    lost: tuple[bool, ...]

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        lost = tuple(bool(x) for x in self.lost)
        if len(bits) != len(lost):
            raise ValueError("bits and lost flags differ in length")
        object.__setattr__(self, "bits", tuple(1 if l else b for b, l in zip(bits, lost)))
        object.__setattr__(self, "lost", lost)


@dataclass
class ShotBatch(Sequence[ShotRecord]):
    """Array-backed collection of shots; column ``j`` belongs to ``atom_ids[j]``."""

    atom_ids: tuple[int, ...]
    bits: np.ndarray
    lost: np.ndarray

    def __post_init__(self):
        self.atom_ids = tuple(self.atom_ids)
        self.lost = np.asarray(self.lost, dtype=bool)
        self.bits = np.where(self.lost, 1, np.asarray(self.bits)).astype(np.uint8)
        if self.bits.shape != self.lost.shape or self.bits.shape[1:] != (len(self.atom_ids),):
            raise ValueError("shot arrays do not match atom ids")

    def __len__(self):
        return self.bits.shape[0]

    def __getitem__(self, k):
        if isinstance(k, slice):
            return ShotBatch(self.atom_ids, self.bits[k], self.lost[k])
        return ShotRecord(tuple(self.bits[k]), tuple(self.lost[k]))

    @classmethod
    def from_records(cls, atom_ids: Sequence[int], records: Iterable[ShotRecord]) -> "ShotBatch":
        records = list(records)
        bits = np.array([r.bits for r in records], dtype=np.uint8).reshape(len(records), len(atom_ids))
        lost = np.array([r.lost for r in records], dtype=bool).reshape(bits.shape)
        return cls(tuple(atom_ids), bits, lost)

    def select(self, mask: np.ndarray) -> "ShotBatch":
        return ShotBatch(self.atom_ids, self.bits[mask], self.lost[mask])

    def column(self, atom: int) -> np.ndarray:
        return self.bits[:, self.atom_ids.index(atom)]


@dataclass(frozen=True)
class MeasurementSetting:
    """Final readout: atoms in ``x_atoms`` are read in X (rotated before a Z readout)."""

    name: str
    x_atoms: frozenset[int] = field(default_factory=frozenset)

    def diagonal(self, op: PauliString) -> bool:
        return all(s == ("X" if q in self.x_atoms else "Z") for q, s in op.ops)


def parities(shots: ShotBatch, op: PauliString, setting: MeasurementSetting | None = None) -> np.ndarray:
    """Per-shot eigenvalue sign * (-1)^(parity on support), as +-1 integers."""
    if setting is not None and not setting.diagonal(op):
        raise BasisMismatch(f"{op} is not diagonal in setting {setting.name!r}")
    cols = [shots.atom_ids.index(q) for q in op.support]
    par = np.bitwise_xor.reduce(shots.bits[:, cols], axis=1) if cols else np.zeros(len(shots), np.uint8)
    return op.sign * (1 - 2 * par.astype(np.int64))


def pauli_expectation(shots: ShotBatch | Sequence[ShotRecord], op: PauliString,
                      setting: MeasurementSetting | None = None,
                      atom_ids: Sequence[int] | None = None) -> tuple[float, float]:
    """Mean and binomial standard error of a diagonal Pauli over shots."""
    if not isinstance(shots, ShotBatch):
        shots = list(shots)
        ids = atom_ids if atom_ids is not None else range(len(shots[0].bits) if shots else 0)
        shots = ShotBatch.from_records(tuple(ids), shots)
    if len(shots) == 0:
        raise ValueError("no shots")
    vals = parities(shots, op, setting)
    mean = float(vals.mean())
    return mean, math.sqrt(max(0.0, 1.0 - mean * mean) / len(vals))
