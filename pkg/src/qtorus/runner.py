"""Experiment pipelines, run manifests and baseline comparison."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import yaml

from . import __version__
from .classical import cell_jacobians, find_periodic_orbit, lyapunov_max, sample_invariant_measure
from .config import ExperimentConfig
from .maps import eigensystem, egorov_residual, propagator, unitarity_residual
from .partitions import ks_entropy_rate, smooth_partition
from .qentropy import (
    EhrenfestClock,
    backward_family,
    cross_norm_bound,
    dispersive_sweep,
    entropy_bound_report,
    eup_level1,
    eup_level2,
    forward_family,
    quantize_partition,
    write_json,
    write_reports_csv,
)
from .quantization import TrigSymbol, coherent_state, dft, position_state, TorusOperator

THREADS_ENV = "QTORUS_NUM_THREADS"
MANIFEST = "manifest.json"
RESOLVED_CONFIG = "config.resolved.yaml"


class NumericFailure(RuntimeError):
    """A computed quantity violated a hard check."""


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def _f(x: float) -> str:
    return f"{x:.12e}"


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_f(v) if isinstance(v, float) else v for v in row])


@dataclass
class TaskResult:
    name: str
    status: str = "ok"
    message: str = ""


@dataclass
class RunManifest:
    config_hash: str
    version: str
    started: str
    finished: str
    tasks: list[TaskResult]
    files: dict[str, str] = field(default_factory=dict)  # name -> sha256

    @property
    def ok(self) -> bool:
        return all(t.status == "ok" for t in self.tasks)

    def to_json(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "version": self.version,
            "started": self.started,
            "finished": self.finished,
            "tasks": [t.__dict__ for t in self.tasks],
            "files": self.files,
        }

    @classmethod
    def load(cls, path) -> "RunManifest":
        with open(path) as fh:
            d = json.load(fh)
        tasks = [TaskResult(**t) for t in d["tasks"]]
        return cls(d["config_hash"], d["version"], d["started"], d["finished"], tasks, d["files"])


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# -- pipelines ---------------------------------------------------------------------------------
# Each pipeline returns a list of (task name, callable) pairs; a callable
# returns {filename: (header, rows)} for CSV output or {filename: payload} for JSON.


def _quantum_partition(cfg: ExperimentConfig, N: int):
    part = cfg.partition.build()
    if cfg.partition.mode == "smooth":
        return part, quantize_partition(N, smooth_partition(part, cfg.partition.width), "smooth")
    return part, quantize_partition(N, part, "sharp")


def _spectrum_tasks(cfg: ExperimentConfig):
    spec = cfg.map.build()

    def task(N):
        P = propagator(N, spec)
        defect = unitarity_residual(P)
        if defect >= 1e-10:
            raise NumericFailure(f"N={N}: unitarity defect {defect:.2e}")
        sp = eigensystem(P)
        rows = [[i, float(t), float(r)] for i, (t, r) in enumerate(zip(sp.eigenphases, sp.residuals))]
        return {f"spectrum_N{N}.csv": (["index", "eigenphase", "residual"], rows)}

    return [(f"spectrum N={N}", lambda N=N: task(N)) for N in cfg.N]


def _egorov_tasks(cfg: ExperimentConfig):
    spec = cfg.map.build()
    M = cfg.params.frequency_cutoff

    def task(N):
        P = propagator(N, spec)
        rows = []
        for t in cfg.params.t_list:
            for m in range(-M, M + 1):
                for n in range(-M, M + 1):
                    f = TrigSymbol.from_dict({(m, n): 1.0})
                    r = egorov_residual(N, spec, f, t, n_max=cfg.clock.n_max, prop=P)
                    rows.append([N, t, m, n, r.residual, r.tail_mass])
        return {f"egorov_N{N}.csv": (["N", "t", "m", "n", "residual", "tail_mass"], rows)}

    return [(f"egorov N={N}", lambda N=N: task(N)) for N in cfg.N]


def _eup_tasks(cfg: ExperimentConfig):
    spec = cfg.map.build()
    part = cfg.partition.build()

    def level1(N):
        rng = np.random.default_rng(cfg.seeds.states)
        pos = TorusOperator(np.eye(N, dtype=complex), unitary=True)
        F = dft(N)
        rows = []
        states = [("e0", position_state(N, 0))]
        for i in range(cfg.params.random_states):
            z = rng.standard_normal(N) + 1j * rng.standard_normal(N)
            states.append((f"random{i}", z / np.linalg.norm(z)))
        worst = math.inf
        for name, psi in states:
            r = eup_level1(psi, pos, F)
            worst = min(worst, r.slack)
            rows.append([N, name, r.lhs, r.rhs, r.slack])
        if worst < -1e-9:
            raise NumericFailure(f"N={N}: level-1 slack {worst:.2e}")
        return rows

    def level2(N):
        lam = lyapunov_max(spec, seed=cfg.seeds.lyapunov).lambda_max
        clock = EhrenfestClock.from_lyapunov(N, lam, cfg.clock.epsilon, cfg.clock.n_max, cfg.clock.log_scale)
        n = clock.eup_depth
        P = propagator(N, spec)
        _, qp = _quantum_partition(cfg, N)
        cv = cell_jacobians(spec, part)
        tau, rho = forward_family(qp, P, n), backward_family(qp, P, n)
        v = [math.sqrt(float(np.prod(cv[list(b)]))) for b in rho.labels]
        w = [math.sqrt(float(np.prod(cv[list(a)]))) for a in tau.labels]
        cross = cross_norm_bound(rho, tau, v, w)
        sp = eigensystem(P)
        rows, worst = [], math.inf
        for k in range(N):
            r = eup_level2(sp.state(k), rho, tau, v, w, cross)
            worst = min(worst, r.slack)
            rows.append([N, n, k, r.pressure_rho, r.pressure_tau, r.log_term, r.slack])
        if worst < -1e-8:
            raise NumericFailure(f"N={N}: level-2 slack {worst:.2e}")
        return rows

    def task():
        rows1, rows2 = [], []
        for N in cfg.N:
            rows1 += level1(N)
            rows2 += level2(N)
        return {
            "eup_level1.csv": (["N", "state", "lhs", "rhs", "slack"], rows1),
            "eup_level2.csv": (["N", "n", "eigenstate", "pressure_rho", "pressure_tau", "log_term", "slack"], rows2),
        }

    return [("eup", task)]


def _dispersive_tasks(cfg: ExperimentConfig):
    spec = cfg.map.build()
    part = cfg.partition.build()

    def task(N):
        lam = lyapunov_max(spec, seed=cfg.seeds.lyapunov).lambda_max
        cv = cell_jacobians(spec, part)
        P = propagator(N, spec)
        _, qp = _quantum_partition(cfg, N)
        n_list = cfg.params.n_list or list(range(1, int(2 * math.log(N) / lam) + 1))
        rows = []
        for n in n_list:
            for r in dispersive_sweep(qp, P, cv, n, max_words=cfg.params.max_words, seed=cfg.seeds.sampling):
                rows.append([N, n, ".".join(map(str, r.word)), r.norm, r.ratio, int(r.converged)])
        return rows

    def run():
        rows = []
        for N in cfg.N:
            rows += task(N)
        summary = {}
        for N, n, _, _, ratio, _ in rows:
            key = (N, n)
            summary[key] = max(summary.get(key, 0.0), ratio)
        return {
            "dispersive.csv": (["N", "n", "word", "norm", "ratio", "converged"], rows),
            "dispersive_summary.csv": (["N", "n", "max_ratio"], [[N, n, v] for (N, n), v in sorted(summary.items())]),
        }

    return [("dispersive", run)]


def _entropy_bound_tasks(cfg: ExperimentConfig):
    spec = cfg.map.build()
    part = cfg.partition.build()
    trend: dict[str, dict] = {}

    def task(N):
        lam = lyapunov_max(spec, seed=cfg.seeds.lyapunov).lambda_max
        clock = EhrenfestClock.from_lyapunov(N, lam, cfg.clock.epsilon, cfg.clock.n_max, cfg.clock.log_scale)
        P = propagator(N, spec)
        _, qp = _quantum_partition(cfg, N)
        sp = eigensystem(P)
        point = find_periodic_orbit(spec, 2)
        control = coherent_state(N, float(point[0]), float(point[1]))
        rows = entropy_bound_report(sp, spec, part, clock, P, qp, lam, control=control, prune=cfg.params.prune)
        eigen = [r for r in rows if r.label != "control"]
        trend[str(N)] = {
            "n": clock.depth,
            "ehrenfest_time": clock.time,
            "min_slack": eigen[0].slack,
            "median_slack": eigen[len(eigen) // 2].slack,
            "control_entropy_rate": rows[-1].entropy_rate,
        }
        path = f"entropy_bound_N{N}.csv"
        return {path: ("reports", rows)}

    tasks = [(f"entropy-bound N={N}", lambda N=N: task(N)) for N in cfg.N]

    def summary():
        ns = sorted(trend, key=int)
        mins = [trend[k]["min_slack"] for k in ns]
        payload = {"per_N": trend, "min_slack_non_decreasing": all(b >= a for a, b in zip(mins, mins[1:]))}
        return {"entropy_bound_trend.json": payload}

    return tasks + [("entropy-bound trend", summary)]


def _classical_entropy_tasks(cfg: ExperimentConfig):
    spec = cfg.map.build()
    part = cfg.partition.build()

    def task():
        p = cfg.params
        if p.measure == "lebesgue":
            pts = sample_invariant_measure("lebesgue", spec, p.samples, cfg.seeds.sampling)
        else:
            point = find_periodic_orbit(spec, p.period)
            pts = sample_invariant_measure("periodic", spec, p.samples, cfg.seeds.sampling, point, p.period)
        report = ks_entropy_rate(spec, part, pts, list(range(1, p.depth + 1)))
        rows = [[r.n, r.block_rate, r.conditional_rate, r.entropy, r.standard_error, int(r.flagged)]
                for r in report.rates]
        sub = [[c.n, c.m, c.violation, c.tolerance] for c in report.subadditivity]
        return {
            "classical_entropy.csv": (["n", "block_rate", "conditional_rate", "entropy", "standard_error", "flagged"], rows),
            "subadditivity.csv": (["n", "m", "violation", "tolerance"], sub),
        }

    return [("classical-entropy", task)]


PIPELINES: dict[str, Callable] = {
    "spectrum": _spectrum_tasks,
    "egorov": _egorov_tasks,
    "eup": _eup_tasks,
    "dispersive": _dispersive_tasks,
    "entropy-bound": _entropy_bound_tasks,
    "classical-entropy": _classical_entropy_tasks,
}


def _emit(out: Path, produced: dict) -> None:
    for name, payload in produced.items():
        path = out / name
        if name.endswith(".json"):
            write_json(path, payload)
        elif isinstance(payload, tuple) and payload[0] == "reports":
            write_reports_csv(path, payload[1])
        else:
            header, rows = payload
            _write_csv(path, header, rows)


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def run_experiment(cfg: ExperimentConfig, output: str | os.PathLike | None = None) -> RunManifest:
    """Run the configured pipeline; the manifest is written last."""
    from threadpoolctl import threadpool_limits

    out = Path(output if output is not None else cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    started = _now()
    with open(out / RESOLVED_CONFIG, "w") as fh:
        yaml.safe_dump(cfg.resolved(), fh, sort_keys=True)
    threads = thread_count()
    tasks = PIPELINES[cfg.experiment](cfg)
    results: list[TaskResult] = []

    def guarded(item):
        name, fn = item
        try:
            return name, fn(), None
        except Exception as exc:  # recorded in the manifest
            return name, None, f"{type(exc).__name__}: {exc}"

    with threadpool_limits(limits=threads):
        # the last task of a pipeline may summarize the others, so it runs after them
        head, tail = tasks[:-1], tasks[-1:]
        if threads > 1 and len(head) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                outcomes = list(pool.map(guarded, head))
        else:
            outcomes = [guarded(t) for t in head]
        outcomes += [guarded(t) for t in tail]
    for name, produced, error in outcomes:  # writes serialized, in task order
        if error is None:
            _emit(out, produced)
            results.append(TaskResult(name))
        else:
            results.append(TaskResult(name, "failed", error))
    files = {
        p.name: sha256_file(p) for p in sorted(out.iterdir()) if p.is_file() and p.name != MANIFEST
    }
    manifest = RunManifest(cfg.digest(), __version__, started, _now(), results, files)
    write_json(out / MANIFEST, manifest.to_json())
    return manifest


# -- baseline comparison ---------------------------------------------------------------------------

COLUMN_TOLERANCES = {"eigenphase": 1e-8, "residual": 1e-9, "tail_mass": 1e-9}
DEFAULT_ATOL = 1e-10
DEFAULT_RTOL = 1e-8
# Monte-Carlo columns and the column holding their standard error
MC_COLUMNS = {"block_rate": "standard_error", "conditional_rate": "standard_error", "entropy": "standard_error"}
# standard errors are estimates too; reruns with new seeds agree only loosely
SE_RTOL = 0.5


@dataclass
class FileDiff:
    name: str
    status: str  # same | differs | new | missing
    details: list[str] = field(default_factory=list)


@dataclass
class DiffReport:
    files: list[FileDiff]

    @property
    def ok(self) -> bool:
        return all(f.status == "same" for f in self.files)

    def lines(self) -> list[str]:
        out = []
        for f in self.files:
            if f.status != "same":
                out.append(f"{f.status}: {f.name}")
                out += [f"  {d}" for d in f.details[:20]]
        return out


def _read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _as_float(text: str):
    try:
        return float(text)
    except ValueError:
        return None


def _compare_csv(new_path, old_path) -> list[str]:
    h1, r1 = _read_csv(new_path)
    h2, r2 = _read_csv(old_path)
    if h1 != h2:
        return [f"header {h1} != {h2}"]
    if len(r1) != len(r2):
        return [f"{len(r1)} rows vs {len(r2)} in baseline"]
    col = {c: i for i, c in enumerate(h1)}
    issues = []
    for i, (a, b) in enumerate(zip(r1, r2)):
        for j, name in enumerate(h1):
            x, y = _as_float(a[j]), _as_float(b[j])
            if x is None or y is None:
                if a[j] != b[j]:
                    issues.append(f"row {i} {name}: {a[j]!r} != {b[j]!r}")
                continue
            if name in MC_COLUMNS and MC_COLUMNS[name] in col:
                se = MC_COLUMNS[name]
                tol = 3 * math.hypot(float(a[col[se]]), float(b[col[se]])) + DEFAULT_ATOL
            elif name in MC_COLUMNS.values():
                tol = SE_RTOL * max(abs(x), abs(y)) + DEFAULT_ATOL
            else:
                tol = COLUMN_TOLERANCES.get(name, DEFAULT_ATOL + DEFAULT_RTOL * abs(y))
            if not abs(x - y) <= tol:
                issues.append(f"row {i} {name}: {x!r} vs {y!r} (tol {tol:.1e})")
    return issues


def compare_baseline(manifest_path, baseline_dir) -> DiffReport:
    """Compare every file of a run against the same-named file in ``baseline_dir``."""
    manifest = RunManifest.load(manifest_path)
    run_dir = Path(manifest_path).parent
    base = Path(baseline_dir)
    if not base.is_dir():
        raise FileNotFoundError(f"baseline directory {base} does not exist")
    diffs = []
    for name, digest in sorted(manifest.files.items()):
        old = base / name
        if not old.exists():
            diffs.append(FileDiff(name, "new"))
            continue
        if sha256_file(old) == digest:
            diffs.append(FileDiff(name, "same"))
            continue
        if name == RESOLVED_CONFIG:
            diffs.append(FileDiff(name, "differs", ["configuration changed"]))
        elif name.endswith(".csv"):
            issues = _compare_csv(run_dir / name, old)
            diffs.append(FileDiff(name, "differs" if issues else "same", issues))
        elif name.endswith(".json"):
            issues = _compare_json(run_dir / name, old)
            diffs.append(FileDiff(name, "differs" if issues else "same", issues))
        else:
            diffs.append(FileDiff(name, "differs", ["content digest differs"]))
    for old in sorted(base.iterdir()):
        if old.is_file() and old.name != MANIFEST and old.name not in manifest.files:
            diffs.append(FileDiff(old.name, "missing", ["present in baseline only"]))
    return DiffReport(diffs)


def _compare_json(new_path, old_path) -> list[str]:
    with open(new_path) as fh:
        a = json.load(fh)
    with open(old_path) as fh:
        b = json.load(fh)
    issues: list[str] = []

    def walk(x, y, where):
        if isinstance(x, dict) and isinstance(y, dict):
            for k in sorted(set(x) | set(y)):
                if k not in x or k not in y:
                    issues.append(f"{where}.{k}: key present on one side only")
                else:
                    walk(x[k], y[k], f"{where}.{k}")
        elif isinstance(x, (int, float)) and isinstance(y, (int, float)) and not isinstance(x, bool):
            if not abs(x - y) <= DEFAULT_ATOL + DEFAULT_RTOL * abs(y):
                issues.append(f"{where}: {x!r} vs {y!r}")
        elif x != y:
            issues.append(f"{where}: {x!r} != {y!r}")

    walk(a, b, "$")
    return issues
