from .compile import compile_code_circuit, measured_operator, shipped_circuit, sign_corrections
from .decode import InvalidSyndromeLength, check_graph, decode, decode_flips
from .evaluate import CodeReport, Estimate, evaluate_code
from .spec import (SHIPPED_CODES, CodeSpec, DecoderKind, GraphSpec, LayoutMismatch, Logical,
                   Stabilizer, Syndrome, code_from_dict, commutation_matrix, graph_stabilizers,
                   load_code)

__all__ = [
    "SHIPPED_CODES", "CodeReport", "CodeSpec", "DecoderKind", "Estimate", "GraphSpec",
    "InvalidSyndromeLength", "LayoutMismatch", "Logical", "Stabilizer", "Syndrome", "check_graph",
    "code_from_dict", "commutation_matrix", "compile_code_circuit", "decode", "decode_flips",
    "evaluate_code", "graph_stabilizers", "load_code", "measured_operator", "shipped_circuit",
    "sign_corrections",
]
