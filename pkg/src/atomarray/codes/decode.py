"""Syndrome decoders: Hamming-code lookup and exact minimum-weight matching.

Decoders work on readout bits.  A correction is the set of atoms whose bit
must be flipped; it is returned as a Pauli that anticommutes with the
measured symbol on each of those atoms.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

from ..core import PauliString
from .spec import CodeSpec, DecoderKind, Syndrome


class InvalidSyndromeLength(ValueError):
    pass


@dataclass(frozen=True)
class CheckGraph:
    """Checks of one readout setting and how single bit flips excite them."""

    kind: str
    checks: tuple[frozenset[int], ...]
    qubits: tuple[int, ...]
    logicals: tuple[frozenset[int], ...]      # supports of logicals read in this setting
    flips: tuple[frozenset[int], ...]         # bit-flip sets toggling each logical alone

    def excited(self, q: int) -> tuple[int, ...]:
        return tuple(i for i, c in enumerate(self.checks) if q in c)


@lru_cache(maxsize=None)
def check_graph(code: CodeSpec, kind: str) -> CheckGraph:
    idx = code.stabilizers_in(kind)
    checks = tuple(frozenset(code.stabilizers[i].op.support) for i in idx)
    qubits = tuple(sorted(set().union(*checks))) if checks else ()
    logicals, flips = [], []
    for lg in code.logicals:
        for op, partner in ((lg.x, lg.z), (lg.z, lg.x)):
            if code.setting_of(op) == kind:
                logicals.append(frozenset(op.support))
                flips.append(frozenset(partner.support))
    return CheckGraph(kind, checks, qubits, tuple(logicals), tuple(flips))


def _correction_pauli(code: CodeSpec, kind: str, atoms: frozenset[int]) -> PauliString:
    x_atoms = code.setting(kind).x_atoms
    return PauliString(tuple((a, "Z" if a in x_atoms else "X") for a in sorted(atoms)))


def _lookup(cg: CheckGraph, defects: Sequence[int]) -> frozenset[int]:
    if not defects:
        return frozenset()
    want = set(defects)
    for q in cg.qubits:
        if set(cg.excited(q)) == want:
            return frozenset({q})
    return frozenset()


def _logical_mask(cg: CheckGraph, q: int) -> int:
    return sum(1 << j for j, sup in enumerate(cg.logicals) if q in sup)


@lru_cache(maxsize=None)
def _matching_graph(cg: CheckGraph):
    """Adjacency over check nodes plus one boundary node (index len(checks))."""
    m = len(cg.checks)
    adj: list[list[tuple[int, int, int]]] = [[] for _ in range(m + 1)]
    for q in cg.qubits:
        ex = cg.excited(q)
        if len(ex) > 2:
            raise ValueError(f"atom {q} touches {len(ex)} checks; matching needs at most 2")
        a, b = (ex[0], ex[1]) if len(ex) == 2 else (ex[0], m)
        mask = _logical_mask(cg, q)
        adj[a].append((b, q, mask))
        adj[b].append((a, q, mask))
    return adj


def _bfs(adj, src: int, n_classes: int):
    """Shortest paths over (node, logical class); returns dist and parent maps."""
    dist = {(src, 0): 0}
    parent: dict = {(src, 0): None}
    dq = deque([(src, 0)])
    while dq:
        node, cls = dq.popleft()
        for nxt, q, mask in adj[node]:
            state = (nxt, cls ^ mask)
            if state not in dist:
                dist[state] = dist[(node, cls)] + 1
                parent[state] = ((node, cls), q)
                dq.append(state)
    return dist, parent


def _path(parent, state) -> list[int]:
    out = []
    while parent[state] is not None:
        state, q = parent[state]
        out.append(q)
    return out


def _mwpm(cg: CheckGraph, defects: tuple[int, ...]) -> frozenset[int]:
    if not defects:
        return frozenset()
    adj = _matching_graph(cg)
    boundary = len(cg.checks)
    has_boundary = bool(adj[boundary])
    n_cls = 1 << len(cg.logicals)
    searches = {d: _bfs(adj, d, n_cls) for d in defects}
    k = len(defects)

    @lru_cache(maxsize=None)
    def best(mask: int) -> dict[int, tuple[int, tuple]]:
        """class -> (weight, pairing) for the defects in ``mask``."""
        if mask == 0:
            return {0: (0, ())}
        i = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << i)
        dist, _ = searches[defects[i]]
        out: dict[int, tuple[int, tuple]] = {}

        def offer(cls, w, pairing):
            if cls not in out or w < out[cls][0]:
                out[cls] = (w, pairing)

        options = []
        for j in range(k):
            if rest >> j & 1:
                options.append((j, rest & ~(1 << j), defects[j]))
        if has_boundary:
            options.append((None, rest, boundary))
        for j, remaining, target in options:
            sub = best(remaining)
            for c1 in range(n_cls):
                w1 = dist.get((target, c1))
                if w1 is None:
                    continue
                for c2, (w2, pairing) in sub.items():
                    offer(c1 ^ c2, w1 + w2, ((i, j, c1),) + pairing)
        return out

    table = best((1 << k) - 1)
    if not table:
        return frozenset()
    wmin = min(w for w, _ in table.values())
    optimal = [c for c, (w, _) in table.items() if w == wmin]
    # flip a logical only when every optimal matching agrees on it
    target = 0
    for j in range(len(cg.logicals)):
        bits = {c >> j & 1 for c in optimal}
        if bits == {1}:
            target |= 1 << j
    base = target if target in optimal else optimal[0]
    flips: set[int] = set()
    for i, j, c1 in table[base][1]:
        _, parent = searches[defects[i]]
        dest = boundary if j is None else defects[j]
        flips ^= set(_path(parent, (dest, c1)))
    for j in range(len(cg.logicals)):
        if (base ^ target) >> j & 1:
            flips ^= set(cg.flips[j])
    return frozenset(flips)


def decode_flips(syndrome: Syndrome, code: CodeSpec, kind: str = "X") -> frozenset[int]:
    """Atoms whose readout bit the decoder flips."""
    cg = check_graph(code, kind)
    if len(syndrome.values) != len(cg.checks):
        raise InvalidSyndromeLength(f"expected {len(cg.checks)} outcomes, got {len(syndrome.values)}")
    if code.decoder is DecoderKind.STEANE_LOOKUP:
        return _lookup(cg, syndrome.defects)
    if code.decoder is DecoderKind.MWPM:
        return _mwpm(cg, syndrome.defects)
    raise ValueError(f"code {code.name} has no decoder")


def decode(syndrome: Syndrome, code: CodeSpec, kind: str = "X") -> PauliString:
    """Pauli correction for a syndrome of the ``kind`` readout setting."""
    return _correction_pauli(code, kind, decode_flips(syndrome, code, kind))
