"""Named reproduction pipelines with seeded, byte-stable outputs and run manifests."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

from . import __version__
from .codes import evaluate_code, load_code, shipped_circuit
from .manybody import (MHZ, HamiltonianParams, MappingErrorModel, ThreeLevelState, evolve_grid,
                       oscillation_correlation, pxp_evolve, pxp_single_site_entropy, pxp_z2,
                       renyi_entropy, revival_period, sample_pairs, self_test)
from .manybody.interferometry import purity_from_pairs
from .manybody.mapping import coherent_map, trajectory
from .stabilizer import NoiseModel, RngSpec, sample_shots, write_shots_csv
from .transport import TrapParams, bell_retention_curve, heating_delta_n, knee_speed, MoveSegment, retention


class UnknownExperiment(KeyError):
    pass


class ConfigError(ValueError):
    pass


class ExperimentMismatch(ValueError):
    pass


CODE_EXPERIMENTS = {"surface-code-ed6": "surface19", "toric-code-ed6": "toric24",
                    "cluster-fig2": "cluster12", "steane-fig2": "steane7"}
EXPERIMENTS = (*CODE_EXPERIMENTS, "bell-transport-fig1d", "entropy-fig4", "scar-ed9")
DEFAULT_SHOTS = {"surface-code-ed6": 50000, "toric-code-ed6": 50000, "cluster-fig2": 10000,
                 "steane-fig2": 50000, "entropy-fig4": 2000}


@dataclass
class ExperimentConfig:
    experiment: str
    shots: int | None = None
    seed: int | None = None
    noise: str | None = None   # "zero", "ed6", "ed8" or a JSON file path
    out: str = "results"
    options: dict[str, Any] = field(default_factory=dict)
    version: str = __version__

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise UnknownExperiment(f"unknown experiment {self.experiment!r}; "
                                    f"choose from {', '.join(EXPERIMENTS)}")
        if self.shots is not None and self.shots <= 0:
            raise ConfigError("shots must be positive")
        if self.noisy and self.seed is None:
            raise ConfigError("a seed is required for noisy runs")

    @property
    def noisy(self) -> bool:
        if self.experiment in CODE_EXPERIMENTS:
            return self.noise != "zero"
        if self.experiment == "entropy-fig4":
            return True  # shot sampling is random even without an error model
        return False

    def resolved_shots(self) -> int:
        return self.shots if self.shots is not None else DEFAULT_SHOTS.get(self.experiment, 0)

    def echo(self) -> dict:
        return {"experiment": self.experiment, "shots": self.resolved_shots(), "seed": self.seed,
                "noise": self.noise, "options": dict(sorted(self.options.items())), "version": self.version}


@dataclass
class RunManifest:
    config: dict
    input_hash: str
    started: str
    finished: str
    outputs: dict[str, str]  # file name -> sha256

    def to_dict(self) -> dict:
        return {"config": self.config, "input_hash": self.input_hash, "started": self.started,
                "finished": self.finished, "outputs": self.outputs}


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=True) + "\n"


def _noise_source(cfg: ExperimentConfig) -> bytes:
    if cfg.noise in (None, "zero", "ed6", "ed8"):
        return (cfg.noise or "").encode()
    return Path(cfg.noise).read_bytes()


def input_hash(cfg: ExperimentConfig) -> str:
    h = hashlib.sha256(_dumps(cfg.echo()).encode())
    h.update(_noise_source(cfg))
    if cfg.experiment in CODE_EXPERIMENTS:
        data = resources.files("atomarray.codes").joinpath("data", f"{CODE_EXPERIMENTS[cfg.experiment]}.json")
        h.update(data.read_bytes())
    return h.hexdigest()


def _code_noise(cfg: ExperimentConfig) -> NoiseModel:
    if cfg.noise == "ed8":
        raise ConfigError("ed8 is a mapping error model; use ed6 or a gate noise JSON file")
    if cfg.noise in (None, "ed6"):
        return NoiseModel.ed6()
    if cfg.noise == "zero":
        return NoiseModel.zero()
    return NoiseModel.load(cfg.noise)


def _mapping_noise(cfg: ExperimentConfig) -> MappingErrorModel:
    if cfg.noise in (None, "zero"):
        return MappingErrorModel.zero()
    if cfg.noise == "ed6":
        raise ConfigError("ed6 is a gate noise model; use ed8 or a mapping error JSON file")
    return MappingErrorModel.load(cfg.noise)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([f"{x:.10g}" if isinstance(x, float) else x for x in r])
    return buf.getvalue()


# ------------------------------------------------------------ pipelines

def _run_code(cfg: ExperimentConfig, out: Path) -> dict[str, str]:
    name = CODE_EXPERIMENTS[cfg.experiment]
    code = load_code(name)
    noise = _code_noise(cfg)
    seed = 0 if cfg.seed is None else cfg.seed
    n = cfg.resolved_shots()
    shots, circuits = {}, {}
    for k, kind in enumerate(("X", "Z")):
        circuits[kind] = shipped_circuit(name, kind)
        shots[kind] = sample_shots(circuits[kind], noise, n, RngSpec(seed, k << 40))
    report = evaluate_code(shots, code, circuits)
    files = {}
    for kind, batch in shots.items():
        path = out / f"shots_{kind}.csv"
        write_shots_csv(batch, path)
        files[path.name] = path
    body = {"experiment": cfg.experiment, "noise": noise.to_dict(), **report.to_dict()}
    (out / "report.json").write_text(_dumps(body))
    files["report.json"] = out / "report.json"
    return files


def bell_transport_table(speeds: np.ndarray, traps: TrapParams, distance_um: float = 55.0) -> list[dict]:
    rows = []
    for v in speeds:
        t = 2 * distance_um / v
        dn = heating_delta_n(MoveSegment(0, (distance_um, 0.0), t), traps)
        r = retention(dn, traps)
        rows.append({"speed_um_per_us": float(v), "duration_us": float(t), "delta_n": dn,
                     "retention": r, "retention_sq": r * r})
    return rows


def _run_bell(cfg: ExperimentConfig, out: Path) -> dict[str, str]:
    traps = TrapParams(n_max=float(cfg.options.get("n_max", 26.0)))
    speeds = np.round(np.arange(0.30, 1.0001, 0.01), 4)
    rows = bell_transport_table(speeds, traps)
    (out / "bell_transport.csv").write_text(_csv_text(list(rows[0]), [list(r.values()) for r in rows]))
    fine = np.linspace(0.3, 1.0, 1401)
    knee = knee_speed(fine, bell_retention_curve(fine, traps))
    dn = heating_delta_n(MoveSegment(0, (55.0, 0.0), 200.0), traps)
    (out / "report.json").write_text(_dumps({"experiment": cfg.experiment, "knee_um_per_us": knee,
                                             "delta_n_55um_200us": dn, "n_max": traps.n_max,
                                             "omega_spread": traps.omega_spread}))
    return {"bell_transport.csv": out / "bell_transport.csv", "report.json": out / "report.json"}


def subsystems(n: int) -> dict[str, list[int]]:
    out = {f"0-{k - 1}": list(range(k)) for k in range(1, n + 1)}
    out.update({f"{k}-{n - 1}": list(range(k, n)) for k in range(1, n)})
    out.update({f"site{k}": [k] for k in range(n)})
    return out


def entropy_quench(initial: str, times_us: np.ndarray, n_shots: int, errs: MappingErrorModel,
                   seed: int, n_atoms: int = 8, n_pairs: int = 8) -> list[dict]:
    """Sampled and exact-model entropies along a quench from |g...g> or |Z2>."""
    params = HamiltonianParams.quench(n_atoms)
    psi0 = ThreeLevelState.ground(n_atoms) if initial == "ground" else ThreeLevelState.z2(n_atoms)
    rng = np.random.Generator(np.random.Philox(key=[seed, 0xE47]))
    subs = subsystems(n_atoms)
    if np.max(times_us) > 0:
        self_test(params, float(np.max(times_us)) * 1e-6)
    grid = evolve_grid(psi0, params, times_us * 1e-6)
    rows, offsets = [], None
    for t_us, state in zip(times_us, grid):
        t = t_us * 1e-6
        if errs.is_zero:
            m = coherent_map(state, errs, params)
            pairs = [(m, m)]
        else:
            pairs = [(trajectory(psi0, params, t, errs, rng), trajectory(psi0, params, t, errs, rng))
                     for _ in range(n_pairs)]
        factor = errs.pair_factor(n_atoms, t)
        shots = sample_pairs(pairs, n_shots, rng, factor)
        results = {name: renyi_entropy(shots, sites) for name, sites in subs.items()}
        if offsets is None:
            g = results[f"0-{n_atoms - 1}"].s2
            g = 0.0 if not math.isfinite(g) else g
            offsets = {name: g * len(sites) / n_atoms for name, sites in subs.items()}
        for name, sites in subs.items():
            r = results[name]
            exact = purity_from_pairs(pairs, sites, factor)
            rows.append({"t_us": float(t_us), "subsystem": name, "purity": r.purity,
                         "s2_raw": r.s2, "s2_offset_subtracted": r.s2 - offsets[name],
                         "stderr": r.stderr, "s2_model": -math.log2(exact)})
    return rows


def _run_entropy(cfg: ExperimentConfig, out: Path) -> dict[str, str]:
    errs = _mapping_noise(cfg)
    tmax = float(cfg.options.get("tmax", 1.5))
    dt = float(cfg.options.get("dt", 0.05))
    times = np.round(np.arange(0.0, tmax + dt / 2, dt), 10)
    files = {}
    for initial in ("ground", "z2"):
        rows = entropy_quench(initial, times, cfg.resolved_shots(), errs, cfg.seed or 0)
        path = out / f"entropy_{initial}.csv"
        path.write_text(_csv_text(list(rows[0]), [list(r.values()) for r in rows]))
        files[path.name] = path
    return files


def _run_scar(cfg: ExperimentConfig, out: Path) -> dict[str, str]:
    n = int(cfg.options.get("pxp_sites", 16))
    times = np.linspace(0.0, 30.0, 301)
    psi = pxp_evolve(n, times)
    fid = np.abs(psi @ pxp_z2(n).conj()) ** 2
    s0 = [pxp_single_site_entropy(p, n, 0) for p in psi]
    s1 = [pxp_single_site_entropy(p, n, 1) for p in psi]
    (out / "pxp.csv").write_text(_csv_text(["t_omega", "z2_fidelity", "s2_site0", "s2_site1"],
                                           zip(times.tolist(), fid.tolist(), s0, s1)))
    params = HamiltonianParams.quench(8)
    ts = np.linspace(0.0, 1.5e-6, 151)
    grid = evolve_grid(ThreeLevelState.z2(8), params, ts)
    per_site = np.array([[-math.log2(s.purity([k])) for k in range(8)] for s in grid])
    rows = [[float(t * 1e6), *map(float, r)] for t, r in zip(ts, per_site)]
    (out / "chain_sites.csv").write_text(_csv_text(["t_us"] + [f"s2_site{k}" for k in range(8)], rows))
    period = revival_period(ts, np.array([s.populations()[0, 2] for s in grid]))
    corr = oscillation_correlation(ts, per_site[:, 3], per_site[:, 4], period)
    (out / "report.json").write_text(_dumps({"experiment": cfg.experiment, "pxp_sites": n,
                                             "chain_revival_us": period * 1e6,
                                             "middle_site_oscillation_correlation": corr}))
    return {"pxp.csv": out / "pxp.csv", "chain_sites.csv": out / "chain_sites.csv",
            "report.json": out / "report.json"}


PIPELINES: dict[str, Callable[[ExperimentConfig, Path], dict[str, Path]]] = {
    **{k: _run_code for k in CODE_EXPERIMENTS},
    "bell-transport-fig1d": _run_bell, "entropy-fig4": _run_entropy, "scar-ed9": _run_scar,
}


def _stamp() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def _check_inputs(cfg: ExperimentConfig) -> None:
    """Load the noise source up front so a bad file is a config error, not a pipeline failure."""
    try:
        if cfg.experiment in CODE_EXPERIMENTS:
            _code_noise(cfg)
        elif cfg.experiment == "entropy-fig4":
            _mapping_noise(cfg)
    except ConfigError:
        raise
    except (OSError, ValueError, TypeError) as exc:
        raise ConfigError(f"noise {cfg.noise!r}: {exc}") from exc


def run_experiment(cfg: ExperimentConfig) -> RunManifest:
    _check_inputs(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    started = _stamp()
    try:
        files = PIPELINES[cfg.experiment](cfg, out)
    except (UnknownExperiment, ConfigError):
        raise
    except Exception as exc:
        raise RuntimeError(f"{cfg.experiment}: {type(exc).__name__}: {exc}") from exc
    outputs = {name: _sha(Path(p).read_bytes()) for name, p in sorted(files.items())}
    manifest = RunManifest(cfg.echo(), input_hash(cfg), started, _stamp(), outputs)
    (out / "manifest.json").write_text(_dumps(manifest.to_dict()))
    return manifest


# ------------------------------------------------------------ report comparison

@dataclass
class MetricDelta:
    key: str
    a: float
    b: float
    delta: float
    sigma: float | None
    significant: bool | None


def _load_report(x) -> dict:
    if isinstance(x, Mapping):
        return dict(x)
    return json.loads(Path(x).read_text())


def _walk(d, prefix=""):
    if isinstance(d, Mapping):
        if "mean" in d and "stderr" in d:
            yield prefix, float(d["mean"]), float(d["stderr"])
            return
        for k in sorted(d):
            yield from _walk(d[k], f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(d, (int, float)) and not isinstance(d, bool):
        yield prefix, float(d), None


def diff_reports(a, b, n_sigma: float = 3.0) -> list[MetricDelta]:
    """Per-metric differences; metrics with a standard error get a significance flag.

    Only entries that differ are returned, so identical reports give an empty list.
    """
    ra, rb = _load_report(a), _load_report(b)
    if ra.get("experiment") != rb.get("experiment"):
        raise ExperimentMismatch(f"{ra.get('experiment')} vs {rb.get('experiment')}")
    va = {k: (m, s) for k, m, s in _walk(ra)}
    vb = {k: (m, s) for k, m, s in _walk(rb)}
    out = []
    for key in sorted(set(va) & set(vb)):
        (ma, sa), (mb, sb) = va[key], vb[key]
        same = ma == mb or (math.isnan(ma) and math.isnan(mb))
        if same:
            continue
        sigma = math.hypot(sa, sb) if sa is not None and sb is not None else None
        sig = None if sigma is None else (abs(mb - ma) > n_sigma * sigma if sigma > 0 else True)
        out.append(MetricDelta(key, ma, mb, mb - ma, sigma, sig))
    return out
