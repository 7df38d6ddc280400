"""AOD transport: constant-jerk moves, heating and retention, waveform plans, layout search."""

from __future__ import annotations

import csv
import itertools
import math
import os
import random
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.special import erf

from .core import (AtomRecord, Circuit, GlobalRotation, MeasureAll, Move, ParallelCZ, Trap,
                   validate_circuit)

HBAR = 1.054571817e-34
KB = 1.380649e-23
RB87_MASS = 1.443160648e-25


class OrderingViolation(ValueError):
    """Raised when a requested move would reorder AOD rows or columns."""


class NonBipartite(ValueError):
    pass


@dataclass(frozen=True)
class TrapParams:
    omega0: float = 2 * math.pi * 40e3
    x_zpf: float | None = None
    mass: float = RB87_MASS
    n_max: float = 26.0
    omega_spread: float = 0.15
    derating: Callable[[float], float] | None = None  # optional omega0(t) factor, t in [0, 1]

    def __post_init__(self):
        expected = zero_point_size(self.omega0, self.mass)
        if self.x_zpf is None:
            object.__setattr__(self, "x_zpf", expected)
        elif abs(self.x_zpf / expected - 1) > 1e-6:
            raise ValueError(f"x_zpf {self.x_zpf:.4g} m inconsistent with omega0 and mass ({expected:.6g} m)")
        if min(self.omega0, self.mass, self.n_max) <= 0 or self.omega_spread < 0:
            raise ValueError("trap parameters must be positive")


def zero_point_size(omega: float, mass: float = RB87_MASS) -> float:
    return math.sqrt(HBAR / (2 * mass * omega))


@dataclass(frozen=True)
class MoveSegment:
    atom: int
    displacement: tuple[float, float]  # micrometers
    duration: float                    # microseconds
    profile: str = "CubicConstantJerk"

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("move duration must be positive")
        if self.profile != "CubicConstantJerk":
            raise ValueError("only the cubic constant-jerk profile is supported")

    @property
    def distance(self) -> float:
        return math.hypot(*self.displacement)


# ------------------------------------------------------------ profile

def cubic_position(tau: np.ndarray | float) -> np.ndarray | float:
    """Normalised position of a rest-to-rest constant-jerk move, tau in [0, 1]."""
    tau = np.clip(tau, 0.0, 1.0)
    return 3 * tau ** 2 - 2 * tau ** 3


def cubic_velocity(tau):
    tau = np.clip(tau, 0.0, 1.0)
    return 6 * tau - 6 * tau ** 2


def cubic_acceleration(tau):
    return 6 - 12 * np.asarray(tau, dtype=float)


def cubic_jerk(tau):
    return np.full_like(np.asarray(tau, dtype=float), -12.0)


# ------------------------------------------------------------ heating

def _delta_n_axis(d_m: float, t_s: float, omega: float, x_zpf: float) -> float:
    return 0.5 * (6 * abs(d_m) / x_zpf / (omega ** 2 * t_s ** 2)) ** 2


def heating_delta_n(seg: MoveSegment, traps: TrapParams, omega: float | None = None) -> float:
    """Mean vibrational quanta added by a constant-jerk move, summed over x and y.

    With a ``derating`` curve the trap frequency is its time average over the move.
    """
    if omega is None:
        omega = traps.omega0
        if traps.derating is not None:
            omega *= float(np.mean([traps.derating(t) for t in np.linspace(0.0, 1.0, 101)]))
    x_zpf = zero_point_size(omega, traps.mass)
    t = seg.duration * 1e-6
    return sum(_delta_n_axis(d * 1e-6, t, omega, x_zpf) for d in seg.displacement)


def heating_delta_n_spectral(accel: Callable[[np.ndarray], np.ndarray], duration_s: float,
                             traps: TrapParams, n_freq: int = 201, n_time: int = 20001) -> float:
    """|a(omega)|^2 / (2 x_zpf omega)^2 averaged over the trap-frequency spread.

    Direct quadrature of the Fourier transform of an acceleration profile;
    used to cross-check the closed form.
    """
    t = np.linspace(-duration_s / 2, duration_s / 2, n_time)
    a = accel(t)
    lo, hi = traps.omega0 * (1 - traps.omega_spread), traps.omega0 * (1 + traps.omega_spread)
    out = []
    for w in np.linspace(lo, hi, n_freq):
        amp = np.trapezoid(a * np.exp(1j * w * t), t)
        out.append(abs(amp) ** 2 / (2 * zero_point_size(w, traps.mass) * w) ** 2)
    return float(np.mean(out))


def _retention_point(dn: np.ndarray, n_max: float) -> np.ndarray:
    dn = np.asarray(dn, dtype=float)
    out = np.ones_like(dn)
    pos = dn > 0
    out[pos] = 0.5 * (1 + erf((n_max - dn[pos]) / np.sqrt(2 * dn[pos])))
    return out


def retention(delta_n: float, traps: TrapParams, n_nodes: int = 64) -> float:
    """Survival probability for a move whose heating at omega0 is ``delta_n``.

    The heating is rescaled to each trap frequency in the +-omega_spread band
    (delta_n scales as omega^-3) and the survival averaged uniformly.
    """
    if delta_n < 0:
        raise ValueError("delta_n must be non-negative")
    if delta_n == 0:
        return 1.0
    if traps.omega_spread == 0:
        return float(_retention_point(np.array([delta_n]), traps.n_max)[0])
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    ratio = 1 + traps.omega_spread * x
    vals = _retention_point(delta_n * ratio ** -3, traps.n_max)
    return float(np.sum(w * vals) / 2)


def bell_retention_curve(speeds_um_per_us: Sequence[float], traps: TrapParams,
                         distance_um: float = 55.0) -> np.ndarray:
    """Two-atom survival (retention squared) against separation speed 2D/T."""
    out = []
    for v in speeds_um_per_us:
        t = 2 * distance_um / v
        dn = heating_delta_n(MoveSegment(0, (distance_um, 0.0), t), traps)
        out.append(retention(dn, traps) ** 2)
    return np.array(out)


def knee_speed(speeds: np.ndarray, values: np.ndarray, drop: float = 0.01) -> float:
    """First speed at which a curve falls ``drop`` below its slow-move plateau (linear interpolation)."""
    speeds, values = np.asarray(speeds, float), np.asarray(values, float)
    level = values[0] - drop
    below = np.nonzero(values < level)[0]
    if below.size == 0:
        return float("nan")
    k = below[0]
    if k == 0:
        return float(speeds[0])
    s0, s1, v0, v1 = speeds[k - 1], speeds[k], values[k - 1], values[k]
    return float(s0 + (level - v0) * (s1 - s0) / (v1 - v0))


# ------------------------------------------------------------ drop loss

def drop_loss(t_drop: float, n_drops: int, temperature: float = 10.0, trap_radius: float = 1.0,
              mass: float = RB87_MASS) -> float:
    """Survival after repeated release-recapture cycles.

    Each drop of ``t_drop`` microseconds adds a Gaussian free-flight step of
    scale v_th * t_drop per axis; the atom survives while the accumulated 2D
    displacement stays inside ``trap_radius`` (micrometers).  Temperature in uK.
    """
    if n_drops < 0 or t_drop < 0 or temperature <= 0 or trap_radius <= 0:
        raise ValueError("invalid drop parameters")
    if n_drops == 0 or t_drop == 0:
        return 1.0
    v_th = math.sqrt(KB * temperature * 1e-6 / mass)  # m/s == um/us
    sigma2 = n_drops * (v_th * t_drop) ** 2
    return 1.0 - math.exp(-trap_radius ** 2 / (2 * sigma2))


def drop_loss_monte_carlo(t_drop: float, n_drops: int, temperature: float, trap_radius: float,
                          n_atoms: int, rng: np.random.Generator, mass: float = RB87_MASS) -> float:
    v_th = math.sqrt(KB * temperature * 1e-6 / mass)
    steps = rng.normal(0.0, v_th * t_drop, size=(n_atoms, n_drops, 2))
    r = np.hypot(*steps.sum(axis=1).T)
    return float(np.mean(r < trap_radius))


# ------------------------------------------------------------ waveforms

@dataclass
class WaveformPlan:
    times: np.ndarray                          # microseconds
    rows: dict[int, np.ndarray]                # AOD row -> y(t) micrometers
    cols: dict[int, np.ndarray]                # AOD column -> x(t) micrometers
    row_amp: dict[int, np.ndarray] = field(default_factory=dict)
    col_amp: dict[int, np.ndarray] = field(default_factory=dict)

    def to_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_us", "tone", "position_um", "amplitude"])
            for k, t in enumerate(self.times):
                for key, pos in sorted(self.rows.items()):
                    w.writerow([f"{t:.6f}", f"row{key}", f"{pos[k]:.6f}", f"{self.row_amp[key][k]:.6f}"])
                for key, pos in sorted(self.cols.items()):
                    w.writerow([f"{t:.6f}", f"col{key}", f"{pos[k]:.6f}", f"{self.col_amp[key][k]:.6f}"])

    def to_dict(self) -> dict:
        return {"times_us": self.times.tolist(),
                "rows": {str(k): v.tolist() for k, v in self.rows.items()},
                "cols": {str(k): v.tolist() for k, v in self.cols.items()}}


def _tone_coords(atoms: Sequence[AtomRecord]) -> tuple[dict[int, float], dict[int, float]]:
    rows, cols = {}, {}
    for a in atoms:
        if a.trap is not Trap.MOBILE:
            continue
        for store, key, val in ((rows, a.row, a.position[1]), (cols, a.col, a.position[0])):
            if key in store and abs(store[key] - val) > 1e-9:
                raise OrderingViolation(f"AOD tone {key} carries atoms at different coordinates")
            store[key] = val
    return rows, cols


def _check_order(coords: Mapping[int, float], label: str):
    keys = sorted(coords)
    for a, b in zip(keys, keys[1:]):
        if not coords[a] < coords[b]:
            raise OrderingViolation(f"{label}s {a} and {b} out of order")


def plan_moves(start: Sequence[AtomRecord], end: Sequence[AtomRecord], duration: float,
               sample_rate_mhz: float = 1.0,
               amplitude_cal: Callable[[float], float] = lambda pos: 1.0) -> WaveformPlan:
    """Cubic interpolation of every AOD tone from ``start`` to ``end`` positions.

    Only stretches, compressions and translations are allowed; rows and
    columns keep their order.  Amplitudes interpolate linearly between the
    calibration values at the two endpoints.
    """
    r0, c0 = _tone_coords(start)
    r1, c1 = _tone_coords(end)
    if set(r0) != set(r1) or set(c0) != set(c1):
        raise OrderingViolation("start and end use different AOD rows or columns")
    for coords, label in ((r0, "row"), (c0, "column"), (r1, "row"), (c1, "column")):
        _check_order(coords, label)
    n = max(2, int(math.ceil(duration * sample_rate_mhz)) + 1)
    times = np.linspace(0.0, duration, n)
    s = cubic_position(times / duration)
    lin = times / duration
    plan = WaveformPlan(times, {}, {})
    for src, dst, pos, amp in ((r0, r1, plan.rows, plan.row_amp), (c0, c1, plan.cols, plan.col_amp)):
        for k in src:
            pos[k] = src[k] + (dst[k] - src[k]) * s
            a0, a1 = amplitude_cal(src[k]), amplitude_cal(dst[k])
            amp[k] = a0 + (a1 - a0) * lin
    return plan


def validate_plan(plan: WaveformPlan) -> list[str]:
    out = []
    for store, label in ((plan.rows, "row"), (plan.cols, "column")):
        keys = sorted(store)
        for a, b in zip(keys, keys[1:]):
            bad = np.nonzero(store[b] - store[a] <= 0)[0]
            if bad.size:
                out.append(f"{label}s {a},{b} cross at t={plan.times[bad[0]]:.3f} us")
    if plan.times.size > 1 and np.max(np.diff(plan.times)) > 1.0 + 1e-12:
        out.append("sampling coarser than 1 MHz")
    return out


@dataclass
class MoveReport:
    layer: int
    duration: float
    max_delta_n: float
    min_retention: float
    violations: list[str]


def check_circuit_transport(c: Circuit, traps: TrapParams | None = None) -> list[MoveReport]:
    """Heating, retention and plan validity for every Move layer of a circuit."""
    traps = traps or TrapParams()
    out = []
    atoms = {a.id: a for a in c.atoms}
    prev = None
    for i, (layer, pos) in enumerate(c.positions()):
        if isinstance(layer, Move) and prev is not None:
            before = [AtomRecord(a.id, a.trap, prev[a.id], a.row, a.col) for a in atoms.values()]
            after = [AtomRecord(a.id, a.trap, pos[a.id], a.row, a.col) for a in atoms.values()]
            try:
                violations = validate_plan(plan_moves(before, after, layer.duration))
            except OrderingViolation as exc:
                violations = [str(exc)]
            dns = [heating_delta_n(MoveSegment(aid, (dx, dy), layer.duration), traps)
                   for aid, dx, dy in layer.displacements] or [0.0]
            if max(dns) >= traps.n_max:
                violations.append(f"heating dN={max(dns):.3g} reaches the trap depth n_max={traps.n_max:g}")
            out.append(MoveReport(i, layer.duration, max(dns), retention(max(dns), traps), violations))
        prev = pos
    return out


# ------------------------------------------------------------ layout search

@dataclass
class LayoutResult:
    atoms: tuple[AtomRecord, ...]
    layers: tuple[tuple[tuple[int, int], ...], ...]
    moves: tuple[tuple[tuple[int, float, float], ...], ...]
    mobile: tuple[int, ...]
    score: tuple

    def circuit(self, duration: float = 200.0, traps: TrapParams | None = None,
                heating_budget: float = 0.5) -> Circuit:
        """Circuit with moves of at least ``duration`` us.

        A move whose worst heating would exceed ``heating_budget * n_max`` is
        lengthened until it fits (dN scales as T^-4).
        """
        traps = traps or TrapParams()
        layers = []
        for k, pairs in enumerate(self.layers):
            if k:
                moves = self.moves[k - 1]
                worst = max((heating_delta_n(MoveSegment(a, (dx, dy), duration), traps)
                             for a, dx, dy in moves), default=0.0)
                limit = heating_budget * traps.n_max
                t = duration * (worst / limit) ** 0.25 if worst > limit else duration
                layers.append(Move(moves, t))
            layers.append(ParallelCZ(pairs))
        return Circuit("layout", self.atoms, (GlobalRotation("Y", math.pi / 2), *layers, MeasureAll()))


def two_colour(vertices: Sequence[int], edges: Sequence[tuple[int, int]]) -> dict[int, int]:
    adj = {v: [] for v in vertices}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    colour: dict[int, int] = {}
    for root in vertices:
        if root in colour:
            continue
        colour[root] = 0
        stack = [root]
        while stack:
            v = stack.pop()
            for u in adj[v]:
                if u not in colour:
                    colour[u] = 1 - colour[v]
                    stack.append(u)
                elif colour[u] == colour[v]:
                    raise NonBipartite(f"edge ({v},{u}) closes an odd cycle")
    return colour


def _best_layer(mobile_order, slot_of, remaining):
    """Largest order-preserving set of gates with room to park idle movers.

    Mobile column i may sit at a static slot (gate) or at a half-integer slot
    (idle).  Between gates at slots p < s there are s - p half slots.
    """
    m = len(mobile_order)
    partners = [sorted(slot_of[t] for t in remaining.get(v, ())) for v in mobile_order]
    memo: dict = {}

    def go(i, last, idle):
        if i == m:
            return 0, ()
        key = (i, last, idle)
        if key not in memo:
            best = go(i + 1, last, idle + 1)
            for s in partners[i]:
                if last is not None and (s <= last or s - last < idle):
                    continue
                cnt, rest = go(i + 1, s, 0)
                if cnt + 1 > best[0]:
                    best = (cnt + 1, ((i, s),) + rest)
            memo[key] = best
        return memo[key]

    return go(0, None, 0)[1]


def _place(m: int, gates: dict[int, int]) -> dict[int, float]:
    """Slot coordinate (pitch units) for each of ``m`` mobile columns.

    Gate columns sit on their static slot; idle columns take the half slots
    just right of the previous gate (or just left of the first one).
    """
    pos = {i: float(s) for i, s in gates.items()}
    anchors = sorted(gates.items())
    first_i, first_s = anchors[0]
    for j, i in enumerate(range(first_i)):
        pos[i] = first_s - first_i + j - 0.5
    for (i, s), nxt in zip(anchors, anchors[1:] + [(m, None)]):
        for j, k in enumerate(range(i + 1, nxt[0])):
            pos[k] = s + j + 0.5
    return pos


def _schedule(static_order, mobile_order, adjacency, max_layers):
    slot_of = {v: k for k, v in enumerate(static_order)}
    remaining = {v: set(adjacency[v]) for v in mobile_order}
    layers, placements = [], []
    while any(remaining.values()):
        if len(layers) >= max_layers:
            return None
        chosen = _best_layer(mobile_order, slot_of, remaining)
        if not chosen:
            return None
        pairs = []
        for i, s in chosen:
            v, t = mobile_order[i], static_order[s]
            remaining[v].discard(t)
            pairs.append((v, t))
        layers.append(tuple(sorted(pairs)))
        placements.append(_place(len(mobile_order), dict(chosen)))
    return layers, placements


def search_layout(vertices: Sequence[int], edges: Sequence[tuple[int, int]],
                  weights: Sequence[float] = (1.0, 1.0), restarts: int = 200, seed: int = 0,
                  pitch: float = 12.0, offset: float = 2.0, max_layers: int = 12) -> LayoutResult:
    """Heuristic layout: static sublattice in a row, movers in one AOD row.

    Candidates (mover side, static order, mover order) are scored
    lexicographically by CZ layer count, weighted move distance, and mover
    count; every layer places as many gates as the ordering allows.
    """
    colour = two_colour(vertices, edges)
    sides = {c: [v for v in vertices if colour[v] == c] for c in (0, 1)}
    rng = random.Random(seed)
    best: tuple | None = None
    for mover in (0, 1):
        mob, stat = sides[mover], sides[1 - mover]
        if not mob or not stat:
            continue
        adjacency = {v: {u for a, b in edges for u in ((b,) if a == v else (a,) if b == v else ())}
                     for v in mob}
        tried = set()
        for trial in range(restarts):
            so = list(stat)
            mo = list(mob)
            if trial:
                rng.shuffle(so)
                rng.shuffle(mo)
            key = (tuple(so), tuple(mo))
            if key in tried:
                continue
            tried.add(key)
            res = _schedule(so, mo, adjacency, max_layers)
            if res is None:
                continue
            layers, placements = res
            dist = sum(abs(b[i] - a[i]) for a, b in zip(placements, placements[1:]) for i in a) * pitch
            score = (len(layers), weights[0] * dist, weights[1] * len(mob))
            if best is None or score < best[0]:
                best = (score, so, mo, layers, placements)
    if best is None:
        raise ValueError("no layout found within the layer budget")
    score, so, mo, layers, placements = best
    atoms = [AtomRecord(v, Trap.STATIC, (pitch * k, 0.0)) for k, v in enumerate(so)]
    atoms += [AtomRecord(v, Trap.MOBILE, (pitch * placements[0][i], offset), 0, i) for i, v in enumerate(mo)]
    moves = tuple(tuple((v, pitch * (b[i] - a[i]), 0.0) for i, v in enumerate(mo))
                  for a, b in zip(placements, placements[1:]))
    result = LayoutResult(tuple(sorted(atoms, key=lambda a: a.id)), tuple(layers), moves, tuple(mo), score)
    problems = validate_circuit(result.circuit())
    if problems:
        raise AssertionError(f"layout search produced an invalid layout: {problems[0]}")
    return result
