import itertools
import math

import numpy as np
import pytest

from atomarray.codes import (SHIPPED_CODES, DecoderKind, GraphSpec, InvalidSyndromeLength,
                             LayoutMismatch, Syndrome, check_graph, compile_code_circuit, decode,
                             decode_flips, evaluate_code, graph_stabilizers, load_code,
                             shipped_circuit, sign_corrections)
from atomarray.codes.spec import commutation_matrix, symplectic_matrix
from atomarray.core import EchoPulse, ParallelCZ, PauliString, pauli_product
from atomarray.stabilizer import NoiseModel, RngSpec, sample_shots

CZ_LAYERS = {"cluster12": 2, "steane7": 4, "surface19": 4, "toric24": 5}


def rank_gf2(m):
    m = m.copy() % 2
    r = 0
    for c in range(m.shape[1]):
        piv = next((i for i in range(r, m.shape[0]) if m[i, c]), None)
        if piv is None:
            continue
        m[[r, piv]] = m[[piv, r]]
        for i in range(m.shape[0]):
            if i != r and m[i, c]:
                m[i] ^= m[r]
        r += 1
    return r


# ---------------------------------------------------------------- graph stabilizers

def test_path_graph_stabilizers():
    s = graph_stabilizers(GraphSpec.path(12))
    assert str(s[0]) == "+X1Z2"
    assert str(s[4]) == "+Z4X5Z6"
    assert str(s[11]) == "+Z11X12"


def test_single_vertex():
    g = GraphSpec((1,), (), {1: "A"})
    assert [str(p) for p in graph_stabilizers(g)] == ["+X1"]


def test_duplicate_edges_rejected():
    with pytest.raises(ValueError):
        GraphSpec((1, 2), ((1, 2), (2, 1)), {1: "A", 2: "B"})


def _rotate_side(op: PauliString, side) -> PauliString:
    swap = {"X": "Z", "Z": "X", "Y": "Y"}
    return PauliString(tuple((q, swap[s] if q in side else s) for q, s in op.ops), op.sign)


def test_steane_graph_gives_plaquettes_and_logical():
    code = load_code("steane7")
    gens = graph_stabilizers(code.graph)
    assert len(gens) == 7
    order = list(code.graph.vertices)
    span = symplectic_matrix(gens, order)
    targets = [s.op for s in code.stabilizers] + [code.logicals[0].x]
    assert rank_gf2(np.vstack([span, symplectic_matrix(targets, order)])) == 7
    assert rank_gf2(symplectic_matrix(targets, order)) == 7
    # in the readout frame every target is pure X or pure Z type
    for kind in ("X", "Z"):
        side = code.setting(kind).x_atoms
        for s in code.stabilizers:
            if s.setting == kind:
                rot = _rotate_side(s.op, set(order) - side if kind == "Z" else side)
                assert len({sym for _, sym in rot.ops}) == 1
                assert rot.weight == 4


# ---------------------------------------------------------------- code structure

@pytest.mark.parametrize("name", SHIPPED_CODES)
def test_code_algebra(name):
    code = load_code(name)
    order = list(code.graph.vertices)
    stabs = [s.op for s in code.stabilizers]
    assert not commutation_matrix(stabs, stabs, order).any()
    for lg in code.logicals:
        assert not commutation_matrix([lg.x, lg.z], stabs, order).any()
        assert not lg.x.commutes_with(lg.z)
    for a, b in itertools.combinations(code.logicals, 2):
        for p, q in itertools.product((a.x, a.z), (b.x, b.z)):
            assert p.commutes_with(q)


@pytest.mark.parametrize("name", SHIPPED_CODES)
def test_graphs_bipartite(name):
    assert load_code(name).graph.is_bipartite_split()


@pytest.mark.parametrize("name", SHIPPED_CODES)
def test_stabilizers_belong_to_graph_state(name):
    code = load_code(name)
    order = list(code.graph.vertices)
    gens = symplectic_matrix(graph_stabilizers(code.graph), order)
    ops = [s.op for s in code.stabilizers] + [lg.x for lg in code.logicals]
    r = rank_gf2(gens)
    assert rank_gf2(np.vstack([gens, symplectic_matrix(ops, order)])) == r


def test_toric_distances():
    assert load_code("toric24").distances == (4, 2)


# ---------------------------------------------------------------- compilation

@pytest.mark.parametrize("name", SHIPPED_CODES)
@pytest.mark.parametrize("setting", ["Xside", "Zside"])
def test_layer_counts_and_echoes(name, setting):
    c = compile_code_circuit(load_code(name), setting=setting)
    assert c.n_cz_layers == CZ_LAYERS[name]
    kinds = [l.kind for l in c.layers if l.kind in ("parallel_cz", "echo")]
    # echo between consecutive CZ layers, and one trailing echo for an odd count
    expected = []
    for k in range(CZ_LAYERS[name]):
        expected += ["parallel_cz"] + (["echo"] if k < CZ_LAYERS[name] - 1 else [])
    if CZ_LAYERS[name] % 2:
        expected.append("echo")
    assert kinds == expected
    assert c.layers[-1].kind == "measure"
    assert c.layers[-2].kind == "sublattice_rotation"


def test_layout_mismatch():
    code = load_code("steane7")
    with pytest.raises(LayoutMismatch):
        compile_code_circuit(code, {1: (0, 0)})


def test_custom_layout_is_used():
    code = load_code("cluster12")
    layout = {a.id: (a.position[0] + 100, a.position[1]) for a in code.atoms}
    c = compile_code_circuit(code, layout, "X")
    assert c.atoms[0].position[0] == code.atoms[0].position[0] + 100


def test_moves_between_cz_layers():
    c = shipped_circuit("toric24", "X")
    kinds = [l.kind for l in c.layers]
    assert kinds.count("move") >= 1
    for i, k in enumerate(kinds):
        if k == "move":
            assert "parallel_cz" in kinds[:i] and "parallel_cz" in kinds[i:]


@pytest.mark.parametrize("name", SHIPPED_CODES)
def test_sign_corrections_cover_everything(name):
    code = load_code(name)
    signs = sign_corrections(code)
    assert set(signs.values()) <= {1, -1}
    assert len(signs) == len(code.stabilizers) + 2 * len(code.logicals)


# ---------------------------------------------------------------- evaluation

@pytest.mark.parametrize("name", SHIPPED_CODES)
def test_noiseless_evaluation(name):
    code = load_code(name)
    shots = {k: sample_shots(shipped_circuit(name, k), NoiseModel.zero(), 4000, RngSpec(21, i << 32))
             for i, k in enumerate(("X", "Z"))}
    rep = evaluate_code(shots, code)
    assert all(e.mean == 1.0 for e in rep.stabilizers.values())
    assert all(e.mean == 1.0 for e in rep.pass_fraction.values())
    for lg in code.logicals:
        assert rep.raw[f"X_{lg.name}"].mean == 1.0
        z = rep.raw[f"Z_{lg.name}"]
        assert abs(z.mean) <= 4 * z.stderr
    if code.decoder is not DecoderKind.NONE:
        assert all(e.mean == 1.0 for k, e in rep.corrected.items() if k.startswith("X_"))


def test_report_serialises():
    code = load_code("steane7")
    shots = {"X": sample_shots(shipped_circuit("steane7", "X"), NoiseModel.ed6(), 500, RngSpec(1))}
    d = evaluate_code(shots, code).to_dict()
    assert set(d) == {"code", "stabilizers", "logicals", "pass_fraction"}
    assert set(d["logicals"]) == {"raw", "detected", "corrected"}
    assert set(d["pass_fraction"]["X"]) == {"mean", "stderr", "shots"}


# ---------------------------------------------------------------- decoders

def _syndrome(cg, flips):
    return Syndrome(tuple(-1 if len(flips & c) % 2 else 1 for c in cg.checks))


def _bit_flips(code, kind, q, pauli):
    measured = "X" if q in code.setting(kind).x_atoms else "Z"
    return frozenset({q}) if pauli not in ("I", measured) else frozenset()


def test_identity_for_trivial_syndrome():
    for name in ("steane7", "surface19", "toric24"):
        code = load_code(name)
        for kind in ("X", "Z"):
            n = len(check_graph(code, kind).checks)
            assert decode(Syndrome((1,) * n), code, kind).weight == 0


def test_invalid_syndrome_length():
    with pytest.raises(InvalidSyndromeLength):
        decode(Syndrome((1, -1)), load_code("steane7"), "X")


def test_cluster_has_no_decoder():
    code = load_code("cluster12")
    with pytest.raises(ValueError):
        decode(Syndrome((1,) * 6), code, "X")


def test_steane_single_qubit_errors_exhaustive():
    code = load_code("steane7")
    cases = 0
    for q, pauli in itertools.product(code.data_qubits, "XYZ"):
        cases += 1
        for kind in ("X", "Z"):
            cg = check_graph(code, kind)
            err = _bit_flips(code, kind, q, pauli)
            assert decode_flips(_syndrome(cg, err), code, kind) == err
    assert cases == 21


def test_steane_correction_is_a_pauli():
    code = load_code("steane7")
    cg = check_graph(code, "X")
    q = next(iter(cg.checks[0]))
    corr = decode(_syndrome(cg, frozenset({q})), code, "X")
    assert corr.support == (q,)
    assert corr.symbol(q) == ("Z" if q in code.setting("X").x_atoms else "X")


def _residual_logicals(code, kind, err):
    cg = check_graph(code, kind)
    res = err ^ decode_flips(_syndrome(cg, err), code, kind)
    assert all(len(res & c) % 2 == 0 for c in cg.checks)
    return [len(res & lg) % 2 for lg in cg.logicals]


@pytest.mark.parametrize("kind", ["X", "Z"])
def test_surface_weight_one_exhaustive(kind):
    code = load_code("surface19")
    for q, pauli in itertools.product(code.graph.vertices, "XYZ"):
        assert _residual_logicals(code, kind, _bit_flips(code, kind, q, pauli)) == [0]


def _min_logical_weight(cg, j, max_w=4):
    for w in range(1, max_w + 1):
        for sub in itertools.combinations(cg.qubits, w):
            s = frozenset(sub)
            if all(len(s & c) % 2 == 0 for c in cg.checks) and len(s & cg.logicals[j]) % 2:
                return w
    return max_w + 1


def test_toric_distance_asymmetry():
    code = load_code("toric24")
    cg = check_graph(code, "X")
    assert [_min_logical_weight(cg, j) for j in range(2)] == [4, 2]


@pytest.mark.parametrize("kind", ["X", "Z"])
def test_toric_weight_one_never_flipped_by_decoder(kind):
    code = load_code("toric24")
    cg = check_graph(code, kind)
    robust = [_min_logical_weight(cg, j) >= 3 for j in range(len(cg.logicals))]
    assert any(robust) and not all(robust)
    for q in cg.qubits:
        err = frozenset({q})
        res = _residual_logicals(code, kind, err)
        for j, lg in enumerate(cg.logicals):
            # decoding never flips a logical the error left intact
            assert res[j] <= len(err & lg) % 2
            if robust[j]:
                assert res[j] == 0


def test_robust_toric_logical_detects_up_to_three_flips():
    code = load_code("toric24")
    cg = check_graph(code, "X")
    for w in (1, 2, 3):
        for sub in itertools.combinations(cg.qubits, w):
            err = frozenset(sub)
            if len(err & cg.logicals[0]) % 2:
                assert any(len(err & c) % 2 for c in cg.checks)
