import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from atomarray.core import (AtomRecord, Circuit, EchoPulse, GlobalRotation, MeasureAll, NonCliffordAngle,
                            ParallelCZ, PauliString, SublatticeRotation, Trap, conjugate)
from atomarray.codes import SHIPPED_CODES, load_code, shipped_circuit
from atomarray.codes.compile import pull_back, sign_correction, sign_corrections
from atomarray.stabilizer import (NoiseModel, PauliChannel, RngSpec, StabilizerState, apply_layer,
                                  bell_fidelity_estimator, read_shots_csv, sample_shots, write_shots_csv)
from oracles import born_marginals, dense_expectation, dense_state


def line(n):
    return tuple(AtomRecord(i, Trap.STATIC, (3.0 * i, 0.0)) for i in range(n))


def circuit(n, layers):
    return Circuit("rand", line(n), tuple(layers) + (MeasureAll(),), blockade_radius=0.0)


@st.composite
def clifford_circuits(draw):
    n = draw(st.integers(1, 6))
    layers = []
    for _ in range(draw(st.integers(0, 10))):
        kind = draw(st.sampled_from(["y2", "x", "z", "cz", "echo"]))
        if kind == "cz" and n >= 2:
            a, b = draw(st.lists(st.integers(0, n - 1), min_size=2, max_size=2, unique=True))
            layers.append(ParallelCZ(((a, b),)))
        elif kind == "echo":
            layers.append(EchoPulse())
        else:
            atoms = tuple(draw(st.lists(st.integers(0, n - 1), min_size=1, unique=True)))
            axis, angle = {"y2": ("Y", math.pi / 2), "x": ("X", math.pi), "z": ("Z", math.pi)}.get(kind, ("Y", math.pi / 2))
            layers.append(SublatticeRotation("A", atoms, axis, angle))
    return circuit(n, layers)


def tableau(c):
    s = StabilizerState(len(c.atoms), 1, c.atom_ids)
    for layer in c.layers[:-1]:
        apply_layer(s, layer)
    return s


# ---------------------------------------------------------------- gates

def test_cz_on_plus_plus():
    s = StabilizerState(2, 1, (1, 2))
    apply_layer(s, GlobalRotation("Y", math.pi / 2))
    apply_layer(s, ParallelCZ(((1, 2),)))
    assert s.expectation(PauliString.parse("X1Z2"))[0] == 1
    assert s.expectation(PauliString.parse("Z1X2"))[0] == 1
    assert s.expectation(PauliString.parse("X1"))[0] == 0


def test_echo_flips_z_sign():
    s = StabilizerState(1)
    apply_layer(s, EchoPulse())
    assert [str(p) for p in s.stabilizers()] == ["-Z0"]


def test_non_clifford_rejected():
    with pytest.raises(NonCliffordAngle):
        apply_layer(StabilizerState(1), GlobalRotation("Y", math.pi / 4))


def test_steane_matches_dense_oracle():
    c = shipped_circuit("steane7", "X")
    psi = dense_state(c)
    s = tableau(c)
    order = list(c.atom_ids)
    for op in s.stabilizers():
        assert dense_expectation(psi, op, order) == pytest.approx(1.0)


@settings(max_examples=60, deadline=None)
@given(clifford_circuits(), st.data())
def test_expectations_match_dense(c, data):
    psi = dense_state(c)
    s = tableau(c)
    order = list(c.atom_ids)
    for _ in range(4):
        syms = data.draw(st.lists(st.sampled_from("IXYZ"), min_size=len(order), max_size=len(order)))
        op = PauliString(tuple(zip(order, syms)))
        assert s.expectation(op)[0] == pytest.approx(dense_expectation(psi, op, order), abs=1e-9)


@settings(max_examples=15, deadline=None)
@given(clifford_circuits(), st.integers(0, 2 ** 32))
def test_marginals_match_born_rule(c, seed):
    n_shots = 10_000
    shots = sample_shots(c, NoiseModel.zero(), n_shots, RngSpec(seed))
    p = born_marginals(dense_state(c), len(c.atoms))
    freq = shots.bits.mean(axis=0)
    sigma = np.sqrt(np.maximum(p * (1 - p), 1e-12) / n_shots)
    assert np.all(np.abs(freq - p) <= 3 * sigma + 1e-12)


@settings(max_examples=40, deadline=None)
@given(clifford_circuits())
def test_tableau_rows_commute(c):
    stabs = tableau(c).stabilizers()
    assert all(a.commutes_with(b) for a in stabs for b in stabs)


# ---------------------------------------------------------------- sampling

@pytest.mark.parametrize("name", SHIPPED_CODES)
def test_noiseless_codes_all_plus_one(name):
    code = load_code(name)
    for setting in ("X", "Z"):
        c = shipped_circuit(name, setting)
        shots = sample_shots(c, NoiseModel.zero(), 500, RngSpec(1))
        from atomarray.codes import measured_operator
        from atomarray.core import parities
        for stab in code.stabilizers:
            if code.setting_of(stab.op) != setting:
                continue
            assert np.all(parities(shots, measured_operator(code, stab.op, c)) == 1)


@pytest.mark.parametrize("name", SHIPPED_CODES)
@pytest.mark.parametrize("setting", ["X", "Z"])
def test_echo_sign_bookkeeping(name, setting):
    """Tableau readout signs equal symbolic conjugation through every layer, echoes included."""
    code = load_code(name)
    c = shipped_circuit(name, setting)
    s = tableau(c)
    ids = list(c.atom_ids)
    ops = [st.op for st in code.stabilizers if st.setting == setting]
    ops += [lg.x for lg in code.logicals if code.setting_of(lg.x) == setting]
    for op in ops:
        readout = PauliString.uniform("Z", op.support)
        pre = pull_back(readout, list(c.layers[:-1]), ids)
        assert all(sym == "Z" for _, sym in pre.ops)
        assert s.expectation(readout)[0] == pre.sign
        assert sign_correction(code, op, c) * s.expectation(readout)[0] == op.sign


def test_echoes_flip_some_signs():
    flips = [v for name in SHIPPED_CODES for v in sign_corrections(load_code(name)).values()]
    assert -1 in flips and 1 in flips


def test_determinism_and_stream_independence():
    c = shipped_circuit("surface19", "X")
    noise = NoiseModel.ed6()
    a = sample_shots(c, noise, 3000, RngSpec(11), block=1000)
    b = sample_shots(c, noise, 3000, RngSpec(11), block=700)
    assert np.array_equal(a.bits, b.bits) and np.array_equal(a.lost, b.lost)
    d = sample_shots(c, noise, 3000, RngSpec(12))
    assert not np.array_equal(a.bits, d.bits)


def test_threads_do_not_change_output(monkeypatch):
    c = shipped_circuit("steane7", "X")
    base = sample_shots(c, NoiseModel.ed6(), 5000, RngSpec(3), block=512)
    monkeypatch.setenv("ATOMARRAY_THREADS", "4")
    par = sample_shots(c, NoiseModel.ed6(), 5000, RngSpec(3), block=512)
    assert np.array_equal(base.bits, par.bits)


def test_loss_is_absorbing_and_reads_one():
    c = circuit(3, [GlobalRotation("Y", math.pi / 2)])
    shots = sample_shots(c, NoiseModel(p_init_loss=1.0), 100, RngSpec(0))
    assert shots.lost.all() and (shots.bits == 1).all()


def test_init_loss_rate():
    c = circuit(4, [])
    shots = sample_shots(c, NoiseModel(p_init_loss=0.2), 20_000, RngSpec(5))
    assert shots.lost.mean() == pytest.approx(0.2, abs=0.01)


def test_tq_channel_only_on_participants():
    c = circuit(3, [ParallelCZ(((0, 1),))])
    noise = NoiseModel(tq_layer=PauliChannel(x=0.5))
    shots = sample_shots(c, noise, 4000, RngSpec(2))
    flips = shots.bits.mean(axis=0)
    assert flips[2] == 0
    assert flips[0] == pytest.approx(0.5, abs=0.04)


def test_ambient_x_rate():
    c = circuit(2, [GlobalRotation("Z", math.pi)])
    noise = NoiseModel(ambient_layer=PauliChannel(x=0.1), ambient_kinds={"global_rotation"})
    shots = sample_shots(c, noise, 20_000, RngSpec(9))
    assert shots.bits.mean() == pytest.approx(0.1, abs=0.01)


def test_channel_validation():
    with pytest.raises(ValueError):
        PauliChannel(0.6, 0.6)
    with pytest.raises(ValueError):
        NoiseModel(p_init_loss=2)


def test_noise_model_round_trip(tmp_path):
    m = NoiseModel.ed6()
    assert NoiseModel.from_dict(m.to_dict()) == m
    p = tmp_path / "noise.json"
    import json
    p.write_text(json.dumps({"tq_layer": {"x": 0.01}, "init_loss": 0.02}))
    loaded = NoiseModel.load(p)
    assert loaded.tq_layer.x == 0.01 and loaded.p_init_loss == 0.02


def test_shots_csv_round_trip(tmp_path):
    c = shipped_circuit("cluster12", "Z")
    shots = sample_shots(c, NoiseModel.ed6(), 200, RngSpec(4))
    path = tmp_path / "shots.csv"
    write_shots_csv(shots, path)
    back = read_shots_csv(path, c.atom_ids)
    assert np.array_equal(back.bits, shots.bits) and np.array_equal(back.lost, shots.lost)
    assert path.read_text().splitlines()[0] == "shot_id,bitstring,loss_mask"


# ---------------------------------------------------------------- Bell estimator

@pytest.mark.parametrize("p00,p11,amp,expected", [
    (0.5, 0.5, 1.0, 1.0),
    (0.46, 0.49, 0.95, 0.95),
    (0.40, 0.55, 0.90, 0.85),
])
def test_bell_fidelity(p00, p11, amp, expected):
    assert bell_fidelity_estimator(p00, p11, amp) == pytest.approx(expected)


def test_bell_fidelity_rejects_bad_population():
    with pytest.raises(ValueError):
        bell_fidelity_estimator(1.2, 0.0, 0.5)
