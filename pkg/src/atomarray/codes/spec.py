"""Graph and code definitions loaded from the shipped layout files."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Mapping, Sequence

import numpy as np

from ..core import AtomRecord, MeasurementSetting, PauliString, pauli_product

SHIPPED_CODES = ("cluster12", "steane7", "surface19", "toric24")


class LayoutMismatch(ValueError):
    """Raised when a layout does not cover the code's graph."""


class DecoderKind(str, Enum):
    STEANE_LOOKUP = "SteaneLookup"
    MWPM = "MWPM"
    NONE = "None"


@dataclass(frozen=True)
class GraphSpec:
    vertices: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    sublattice: Mapping[int, str]
    ancilla: frozenset[int] = frozenset()

    def __post_init__(self):
        edges = tuple(tuple(sorted((int(a), int(b)))) for a, b in self.edges)
        if len(set(edges)) != len(edges):
            raise ValueError("duplicate edges")
        verts = set(self.vertices)
        for a, b in edges:
            if a == b or a not in verts or b not in verts:
                raise ValueError(f"bad edge ({a},{b})")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "vertices", tuple(int(v) for v in self.vertices))
        object.__setattr__(self, "sublattice", {int(k): v for k, v in self.sublattice.items()})
        object.__setattr__(self, "ancilla", frozenset(self.ancilla))

    def neighbors(self, v: int) -> list[int]:
        return sorted({b for a, b in self.edges if a == v} | {a for a, b in self.edges if b == v})

    def side(self, tag: str) -> tuple[int, ...]:
        return tuple(v for v in self.vertices if self.sublattice.get(v) == tag)

    def is_bipartite_split(self) -> bool:
        return all(self.sublattice.get(a) != self.sublattice.get(b) for a, b in self.edges)

    @classmethod
    def path(cls, n: int) -> "GraphSpec":
        return cls(tuple(range(1, n + 1)), tuple((k, k + 1) for k in range(1, n)),
                   {k: "A" if k % 2 else "B" for k in range(1, n + 1)})


def graph_stabilizers(g: GraphSpec) -> list[PauliString]:
    """One generator per vertex: X on the vertex, Z on each neighbour."""
    out = []
    for v in g.vertices:
        ops = {u: "Z" for u in g.neighbors(v)}
        ops[v] = "X"
        out.append(PauliString.from_dict(ops))
    return out


@dataclass(frozen=True)
class Logical:
    name: str
    x: PauliString
    z: PauliString
    distance: int


@dataclass(frozen=True)
class Stabilizer:
    name: str
    op: PauliString
    setting: str  # "X" or "Z"


@dataclass(frozen=True)
class Syndrome:
    values: tuple[int, ...]

    def __post_init__(self):
        vals = tuple(int(v) for v in self.values)
        if any(v not in (1, -1) for v in vals):
            raise ValueError("syndrome entries must be +1 or -1")
        object.__setattr__(self, "values", vals)

    @property
    def defects(self) -> tuple[int, ...]:
        return tuple(i for i, v in enumerate(self.values) if v < 0)


@dataclass(frozen=True, eq=False)
class CodeSpec:
    """Graph-state code; operators are written in the graph frame."""

    name: str
    graph: GraphSpec
    stabilizers: tuple[Stabilizer, ...]
    logicals: tuple[Logical, ...]
    decoder: DecoderKind
    atoms: tuple[AtomRecord, ...]
    layers: tuple[tuple[tuple[int, int], ...], ...]
    moves: tuple[tuple[tuple[int, float, float], ...], ...]
    move_duration_us: float
    rotated: Mapping[str, str] = field(default_factory=lambda: {"X": "A", "Z": "B"})

    @property
    def distances(self) -> tuple[int, ...]:
        return tuple(l.distance for l in self.logicals)

    def setting(self, kind: str) -> MeasurementSetting:
        """Readout setting: ``kind`` "X" rotates the sublattice mapped to X-type checks."""
        return MeasurementSetting(kind, frozenset(self.graph.side(self.rotated[kind])))

    @property
    def settings(self) -> dict[str, MeasurementSetting]:
        return {k: self.setting(k) for k in ("X", "Z")}

    def stabilizers_in(self, kind: str) -> list[int]:
        return [i for i, s in enumerate(self.stabilizers) if s.setting == kind]

    def setting_of(self, op: PauliString) -> str:
        for k, s in self.settings.items():
            if s.diagonal(op):
                return k
        raise ValueError(f"{op} is not measurable in any setting")

    @property
    def data_qubits(self) -> tuple[int, ...]:
        return tuple(v for v in self.graph.vertices if v not in self.graph.ancilla)


def _parse_ops(d: Mapping[str, str]) -> PauliString:
    return PauliString.from_dict({int(k): v for k, v in d.items()})


def code_from_dict(d: Mapping) -> CodeSpec:
    g = GraphSpec(tuple(d["vertices"]), tuple(tuple(e) for e in d["edges"]),
                  {int(k): v for k, v in d["sublattice"].items()}, frozenset(d.get("ancilla", ())))
    if not g.is_bipartite_split():
        raise ValueError(f"{d['name']}: sublattice tags are not a bipartition")
    gens = {v: s for v, s in zip(g.vertices, graph_stabilizers(g))}

    def build(spec: Mapping) -> PauliString:
        if "generators" in spec:
            return pauli_product(gens[int(v)] for v in spec["generators"])
        return _parse_ops(spec["ops"])

    rotated = dict(d.get("settings", {"X": "A", "Z": "B"}))
    probe = CodeSpec(d["name"], g, (), (), DecoderKind.NONE, (), (), (), 0.0, rotated)
    stabs = []
    for s in d["stabilizers"]:
        op = build(s)
        stabs.append(Stabilizer(s["name"], op, probe.setting_of(op)))
    logicals = tuple(Logical(l["name"], build(l["x"]), build(l["z"]), int(l["distance"]))
                     for l in d.get("logicals", ()))
    atoms = tuple(AtomRecord.from_dict(a) for a in d["atoms"])
    if {a.id for a in atoms} != set(g.vertices):
        raise LayoutMismatch(f"{d['name']}: atoms and vertices differ")
    return CodeSpec(
        name=d["name"], graph=g, stabilizers=tuple(stabs), logicals=logicals,
        decoder=DecoderKind(d.get("decoder", "None")), atoms=atoms,
        layers=tuple(tuple(tuple(p) for p in l) for l in d["layers"]),
        moves=tuple(tuple(tuple(m) for m in mv) for mv in d.get("moves", ())),
        move_duration_us=float(d.get("move_duration_us", 200.0)), rotated=rotated)


@lru_cache(maxsize=None)
def load_code(name: str) -> CodeSpec:
    if name not in SHIPPED_CODES:
        raise KeyError(f"unknown code {name!r}; shipped: {', '.join(SHIPPED_CODES)}")
    text = resources.files("atomarray.codes").joinpath("data", f"{name}.json").read_text()
    return code_from_dict(json.loads(text))


def symplectic_matrix(ops: Sequence[PauliString], order: Sequence[int]) -> np.ndarray:
    return np.array([op.symplectic(order) for op in ops], dtype=np.uint8).reshape(len(ops), 2 * len(order))


def commutation_matrix(a: Sequence[PauliString], b: Sequence[PauliString], order: Sequence[int]) -> np.ndarray:
    """Entry (i, j) is 1 when a[i] and b[j] anticommute."""
    n = len(order)
    sa, sb = symplectic_matrix(a, order), symplectic_matrix(b, order)
    swapped = np.concatenate([sb[:, n:], sb[:, :n]], axis=1)
    return (sa.astype(np.int64) @ swapped.T.astype(np.int64)) % 2
