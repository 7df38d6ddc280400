"""Stabilizer and logical statistics from readout shots."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..core import Circuit, ShotBatch, parities
from .compile import compile_code_circuit, measured_operator
from .decode import check_graph, decode_flips
from .spec import CodeSpec, DecoderKind, Syndrome


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    shots: int

    @classmethod
    def of(cls, values: np.ndarray) -> "Estimate":
        n = len(values)
        if n == 0:
            return cls(float("nan"), float("nan"), 0)
        m = float(np.mean(values))
        return cls(m, math.sqrt(max(0.0, 1 - m * m) / n), n)

    @classmethod
    def fraction(cls, flags: np.ndarray) -> "Estimate":
        """Binomial estimate of the rate of True entries."""
        n = len(flags)
        if n == 0:
            return cls(float("nan"), float("nan"), 0)
        p = float(np.mean(flags))
        return cls(p, math.sqrt(p * (1 - p) / n), n)

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "shots": self.shots}


@dataclass
class CodeReport:
    code: str
    stabilizers: dict[str, Estimate] = field(default_factory=dict)
    raw: dict[str, Estimate] = field(default_factory=dict)
    detected: dict[str, Estimate] = field(default_factory=dict)
    corrected: dict[str, Estimate] = field(default_factory=dict)
    pass_fraction: dict[str, Estimate] = field(default_factory=dict)

    def to_dict(self) -> dict:
        conv = lambda d: {k: v.to_dict() for k, v in d.items()}
        return {"code": self.code, "stabilizers": conv(self.stabilizers),
                "logicals": {"raw": conv(self.raw), "detected": conv(self.detected),
                             "corrected": conv(self.corrected)},
                "pass_fraction": conv(self.pass_fraction)}


def _corrected(code: CodeSpec, kind: str, check_vals: np.ndarray, raw_vals: np.ndarray,
               support) -> np.ndarray:
    """Apply the decoder shot by shot (cached per syndrome pattern)."""
    out = raw_vals.copy()
    patterns, inverse = np.unique(check_vals, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    for k, pat in enumerate(patterns):
        flips = decode_flips(Syndrome(tuple(int(v) for v in pat)), code, kind)
        if len(flips & support) % 2:
            out[inverse == k] *= -1
    return out


def evaluate_code(shots: Mapping[str, ShotBatch], code: CodeSpec,
                  circuits: Mapping[str, Circuit] | None = None) -> CodeReport:
    """Stabilizer means, raw/detected/corrected logicals and postselection rates.

    ``shots`` maps a readout setting ("X" or "Z") to the shots taken in it.
    Logicals are reported under ``X_<name>`` and ``Z_<name>``.
    """
    circuits = dict(circuits or {})
    for kind in shots:
        circuits.setdefault(kind, compile_code_circuit(code, setting=kind))
    report = CodeReport(code.name)
    checks: dict[str, np.ndarray] = {}
    for kind, batch in shots.items():
        idx = code.stabilizers_in(kind)
        vals = [parities(batch, measured_operator(code, code.stabilizers[i].op, circuits[kind]),
                         code.setting(kind)) for i in idx]
        for i, v in zip(idx, vals):
            report.stabilizers[code.stabilizers[i].name] = Estimate.of(v)
        checks[kind] = np.stack(vals, axis=1) if vals else np.ones((len(batch), 0), np.int64)
        report.pass_fraction[kind] = Estimate.fraction(np.all(checks[kind] > 0, axis=1))
    for lg in code.logicals:
        for label, op in (("X", lg.x), ("Z", lg.z)):
            kind = code.setting_of(op)
            if kind not in shots:
                continue
            batch = shots[kind]
            vals = parities(batch, measured_operator(code, op, circuits[kind]), code.setting(kind))
            key = f"{label}_{lg.name}"
            report.raw[key] = Estimate.of(vals)
            ok = np.all(checks[kind] > 0, axis=1)
            report.detected[key] = Estimate.of(vals[ok])
            if code.decoder is not DecoderKind.NONE and checks[kind].shape[1]:
                fixed = _corrected(code, kind, checks[kind], vals, frozenset(op.support))
                report.corrected[key] = Estimate.of(fixed)
    return report
