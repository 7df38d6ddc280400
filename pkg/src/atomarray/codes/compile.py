"""Turn a code's shipped schedule into a circuit and derive readout signs."""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Mapping, Sequence

from ..core import (AtomRecord, Circuit, EchoPulse, GlobalRotation, Layer, MeasureAll, Move,
                    ParallelCZ, PauliString, SublatticeRotation, conjugate)
from .spec import CodeSpec, LayoutMismatch, load_code

_SETTING_ALIASES = {"X": "X", "Xside": "X", "Z": "Z", "Zside": "Z"}


def _kind(setting: str) -> str:
    try:
        return _SETTING_ALIASES[setting]
    except KeyError:
        raise ValueError(f"unknown setting {setting!r}") from None


def compile_code_circuit(code: CodeSpec, layout: Mapping[int, tuple[float, float]] | None = None,
                         setting: str = "X", move_duration_us: float | None = None) -> Circuit:
    """Preparation circuit for ``code`` followed by readout in ``setting``.

    Structure: global Y(pi/2); CZ layers separated by AOD moves and echo
    pulses (plus a trailing echo when the layer count is odd); Y(pi/2) on the
    sublattice read in X; Z readout.
    """
    kind = _kind(setting)
    atoms = code.atoms
    if layout is not None:
        if set(layout) != set(code.graph.vertices):
            raise LayoutMismatch("layout does not cover exactly the graph vertices")
        atoms = tuple(AtomRecord(a.id, a.trap, tuple(layout[a.id]), a.row, a.col) for a in atoms)
    duration = code.move_duration_us if move_duration_us is None else move_duration_us
    layers: list[Layer] = [GlobalRotation("Y", math.pi / 2)]
    n_layers = len(code.layers)
    for k, pairs in enumerate(code.layers):
        if k > 0 and code.moves and any(dx or dy for _, dx, dy in code.moves[k - 1]):
            layers.append(Move(code.moves[k - 1], duration))
        layers.append(ParallelCZ(pairs))
        if k < n_layers - 1:
            layers.append(EchoPulse())
    if n_layers % 2:
        layers.append(EchoPulse())
    tag = code.rotated[kind]
    layers.append(SublatticeRotation(tag, code.graph.side(tag), "Y", math.pi / 2))
    layers.append(MeasureAll("Z"))
    return Circuit(f"{code.name}-{kind}", atoms, tuple(layers), code.name)


def pull_back(op: PauliString, layers: Sequence[Layer], atoms: Sequence[int]) -> PauliString:
    for layer in reversed(layers):
        op = conjugate(op, layer, atoms, forward=False)
    return op


def reference_layers(code: CodeSpec) -> list[Layer]:
    """Echo-free graph-state preparation used as the sign reference."""
    return [GlobalRotation("Y", math.pi / 2)] + [ParallelCZ(p) for p in code.layers]


def sign_correction(code: CodeSpec, op: PauliString, circuit: Circuit) -> int:
    """Factor c such that c * (-1)^parity estimates ``op`` on the graph state.

    The Z-parity read out on ``op``'s support is pulled back through the
    compiled circuit and compared with ``op`` pulled back through the echo-free
    reference; both must reduce to the same Pauli at the start.
    """
    atoms = circuit.atom_ids
    readout = PauliString.uniform("Z", op.support)
    actual = pull_back(readout, [l for l in circuit.layers if not isinstance(l, MeasureAll)], atoms)
    ideal = pull_back(op, reference_layers(code), atoms)
    if actual.ops != ideal.ops:
        raise ValueError(f"{op} is not read out by circuit {circuit.name}")
    return actual.sign * ideal.sign * op.sign


def measured_operator(code: CodeSpec, op: PauliString, circuit: Circuit) -> PauliString:
    """``op`` with its sign adjusted so that pauli_expectation reports the graph-state value."""
    return PauliString(op.ops, op.sign * sign_correction(code, op, circuit))


@lru_cache(maxsize=None)
def shipped_circuit(name: str, setting: str) -> Circuit:
    return compile_code_circuit(load_code(name), setting=setting)


def sign_corrections(code: CodeSpec, circuits: Mapping[str, Circuit] | None = None) -> dict[str, int]:
    """Sign factor for every stabilizer and logical, keyed by name."""
    if circuits is None:
        circuits = {k: compile_code_circuit(code, setting=k) for k in ("X", "Z")}
    out = {s.name: sign_correction(code, s.op, circuits[s.setting]) for s in code.stabilizers}
    for lg in code.logicals:
        for label, op in (("X", lg.x), ("Z", lg.z)):
            out[f"{label}_{lg.name}"] = sign_correction(code, op, circuits[code.setting_of(op)])
    return out
