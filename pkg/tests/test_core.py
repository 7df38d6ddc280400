import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from atomarray.core import (AtomRecord, BasisMismatch, Circuit, EchoPulse, GlobalRotation,
                            MeasureAll, MeasurementSetting, Move, NonCliffordAngle, ParallelCZ,
                            PauliString, ShotBatch, ShotRecord, SublatticeRotation, Trap, conjugate,
                            pauli_expectation, quarter_turns, rotation_matrix, validate_circuit)
from atomarray.codes import shipped_circuit


def static(i, x, y=0.0):
    return AtomRecord(i, Trap.STATIC, (x, y))


def simple_circuit(layers, atoms=None):
    atoms = atoms or [static(1, 0), static(2, 3), static(3, 6)]
    return Circuit("t", tuple(atoms), tuple(layers) + (MeasureAll(),))


# ---------------------------------------------------------------- records

def test_lost_atom_reads_one():
    r = ShotRecord((0, 0, 1), (True, False, False))
    assert r.bits == (1, 0, 1)


def test_shot_batch_forces_lost_bits():
    b = ShotBatch((1, 2), np.zeros((3, 2), np.uint8), np.array([[1, 0], [0, 0], [0, 1]], bool))
    assert b.bits.tolist() == [[1, 0], [0, 0], [0, 1]]


def test_mobile_atom_needs_aod_indices():
    with pytest.raises(ValueError):
        AtomRecord(1, Trap.MOBILE, (0, 0))
    with pytest.raises(ValueError):
        AtomRecord(1, Trap.STATIC, (0, 0), row=0, col=0)
    with pytest.raises(ValueError):
        AtomRecord(1, Trap.STATIC, (math.nan, 0))


# ---------------------------------------------------------------- validation

def test_shipped_cluster_circuit_is_valid():
    assert validate_circuit(shipped_circuit("cluster12", "X")) == []


@pytest.mark.parametrize("name", ["cluster12", "steane7", "surface19", "toric24"])
@pytest.mark.parametrize("setting", ["X", "Z"])
def test_all_shipped_circuits_valid(name, setting):
    assert validate_circuit(shipped_circuit(name, setting)) == []


def test_overlapping_pairs_flagged():
    c = simple_circuit([ParallelCZ(((1, 2), (2, 3)))])
    rules = [v.rule for v in validate_circuit(c)]
    assert "pairs not disjoint" in rules


def test_distant_pair_and_spectator_flagged():
    c = simple_circuit([ParallelCZ(((1, 3),))])
    rules = {v.rule for v in validate_circuit(c)}
    assert "pair not adjacent" in rules
    assert "unpaired atoms within blockade radius" in rules


def test_column_crossing_flagged():
    atoms = [AtomRecord(1, Trap.MOBILE, (0, 0), 0, 0), AtomRecord(2, Trap.MOBILE, (10, 0), 0, 1)]
    c = simple_circuit([Move(((1, 20, 0), (2, 0, 0)), 100)], atoms)
    assert any(v.rule == "column order not preserved" for v in validate_circuit(c))


def test_non_rigid_row_flagged():
    atoms = [AtomRecord(1, Trap.MOBILE, (0, 0), 0, 0), AtomRecord(2, Trap.MOBILE, (10, 0), 0, 1)]
    c = simple_circuit([Move(((1, 0, 3), (2, 0, 0)), 100)], atoms)
    assert any(v.rule == "AOD row not rigid" for v in validate_circuit(c))


def test_static_atom_cannot_move():
    c = simple_circuit([Move(((1, 1, 0),), 10)])
    assert any(v.rule == "static atom moved" for v in validate_circuit(c))


def test_measurement_must_be_last():
    c = Circuit("t", (static(1, 0),), (MeasureAll(), GlobalRotation("Y", math.pi / 2)))
    assert any(v.rule == "measurement is not the final layer" for v in validate_circuit(c))


def test_unknown_atom_flagged():
    c = simple_circuit([SublatticeRotation("A", (9,), "Y", math.pi)])
    assert any(v.rule == "unknown atom" for v in validate_circuit(c))


def test_violation_names_layer():
    c = simple_circuit([GlobalRotation("Y", math.pi / 2), ParallelCZ(((1, 2), (2, 3)))])
    assert {v.layer for v in validate_circuit(c)} == {1}


# ---------------------------------------------------------------- serialization

@pytest.mark.parametrize("name", ["cluster12", "steane7", "surface19", "toric24"])
def test_circuit_json_round_trip(name):
    c = shipped_circuit(name, "X")
    assert Circuit.from_json(c.to_json()) == c


layers_strategy = st.lists(st.one_of(
    st.builds(GlobalRotation, st.sampled_from("XYZ"), st.integers(-4, 4).map(lambda k: k * math.pi / 2)),
    st.builds(lambda a: SublatticeRotation("A", a, "Y", math.pi / 2),
              st.lists(st.integers(1, 3), unique=True).map(tuple)),
    st.just(EchoPulse()),
    st.builds(lambda p: ParallelCZ(p), st.sampled_from([((1, 2),), ((2, 3),), ()])),
    st.builds(lambda d: Move(((1, 0.0, 0.0),), d), st.floats(0.1, 500)),
), max_size=8)


@given(layers_strategy)
def test_round_trip_property(layers):
    c = simple_circuit(layers)
    back = Circuit.from_json(c.to_json())
    assert back == c
    assert [l.kind for l in back.layers] == [l.kind for l in c.layers]


# ---------------------------------------------------------------- Paulis

def test_parse_and_str():
    p = PauliString.parse("-X1Z12")
    assert p.sign == -1 and p.as_dict() == {1: "X", 12: "Z"}
    assert str(p) == "-X1Z12"


def test_product_and_commutation():
    a, b = PauliString.parse("X1Z2"), PauliString.parse("Z1X2")
    assert a.commutes_with(b)
    assert str(a * b) == "+Y1Y2"
    assert not PauliString.parse("X1").commutes_with(PauliString.parse("Z1"))
    with pytest.raises(ValueError):
        PauliString.parse("X1") * PauliString.parse("Z1")


def test_quarter_turns():
    assert quarter_turns(-math.pi / 2) == 3
    with pytest.raises(NonCliffordAngle):
        quarter_turns(math.pi / 4)


def test_echo_flips_z():
    out = conjugate(PauliString.parse("Z1"), EchoPulse(), [1], forward=True)
    assert str(out) == "-Z1"


def _matrix(op, order):
    mats = {"I": np.eye(2), "X": np.array([[0, 1], [1, 0]]), "Y": np.array([[0, -1j], [1j, 0]]),
            "Z": np.diag([1, -1])}
    m = np.array([[1]])
    for q in order:
        m = np.kron(m, mats[op.symbol(q)])
    return op.sign * m


@given(st.sampled_from("IXYZ"), st.sampled_from("IXYZ"), st.sampled_from("XYZ"), st.integers(0, 3))
def test_conjugation_matches_matrices(p1, p2, axis, k):
    op = PauliString(((1, p1), (2, p2)))
    layer = SublatticeRotation("A", (1,), axis, k * math.pi / 2)
    u = np.kron(rotation_matrix(axis, k * math.pi / 2), np.eye(2))
    back = conjugate(op, layer, [1, 2])
    assert np.allclose(_matrix(back, [1, 2]), u.conj().T @ _matrix(op, [1, 2]) @ u)
    cz = np.diag([1, 1, 1, -1])
    assert np.allclose(_matrix(conjugate(op, ParallelCZ(((1, 2),)), [1, 2]), [1, 2]),
                       cz @ _matrix(op, [1, 2]) @ cz)


# ---------------------------------------------------------------- expectation

def test_all_zero_shots():
    shots = [ShotRecord((0, 0), (False, False))] * 5
    assert pauli_expectation(shots, PauliString.parse("Z1Z2"), atom_ids=(1, 2)) == (1.0, 0.0)


def test_balanced_shots():
    shots = [ShotRecord(b, (False, False)) for b in ((0, 0), (1, 1), (0, 1), (1, 0))]
    mean, err = pauli_expectation(shots, PauliString.parse("Z1Z2"), atom_ids=(1, 2))
    assert mean == 0.0
    assert err == pytest.approx(0.5)


def test_basis_mismatch():
    shots = ShotBatch((1, 2), np.zeros((2, 2)), np.zeros((2, 2), bool))
    setting = MeasurementSetting("Z")
    with pytest.raises(BasisMismatch):
        pauli_expectation(shots, PauliString.parse("X1"), setting)
    x = MeasurementSetting("X", frozenset({1, 2}))
    assert pauli_expectation(shots, PauliString.parse("X1X2"), x)[0] == 1.0


@settings(max_examples=50)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=30),
       st.randoms())
def test_expectation_permutation_invariant(rows, rnd):
    shots = [ShotRecord(r, (False,) * 3) for r in rows]
    op = PauliString.parse("Z1Z3")
    a = pauli_expectation(shots, op, atom_ids=(1, 2, 3))
    rnd.shuffle(shots)
    b = pauli_expectation(shots, op, atom_ids=(1, 2, 3))
    assert a == pytest.approx(b)
