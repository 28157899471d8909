"""Trajectory batches, persistence, sweeps and table generation.

A run directory holds

* ``manifest.json`` - config, digest, completed trajectory seeds, failures
  and the accumulated (count, mean, M2) state of every recorded quantity;
* ``samples/NNNNN.npz`` - the per-trajectory records;
* ``correlator.csv``, ``correlator_raw.npz``, ``covariance.csv``,
  ``entropy.csv`` - the aggregated tables.

Aggregates are always folded in trajectory-index order, so the tables do
not depend on the number of workers or on interruptions.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .collapse import extrapolate_q0
from .config import RunConfig
from .gaussian_state import NumericalDegradationError
from .observables import (
    RunningStats,
    estimate_from_profiles,
    mean_and_error,
    momentum_correlator,
    profile_from_samples,
    trajectory_samples,
)
from .theory import bare_coupling_raw
from .trajectory import run_trajectory, trajectory_seed, splitmix64

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"


class DigestMismatchError(ValueError):
    pass


# ------------------------------------------------------------------ workers
def _run_one(config: RunConfig, index: int):
    seed = trajectory_seed(config.base_seed, index)
    try:
        result = run_trajectory(config, seed, record_outcomes=False)
    except NumericalDegradationError as exc:
        return index, seed, None, str(exc), 0, 0
    samples = trajectory_samples(result.green, config.lattice, config.observables)
    return index, seed, samples, None, result.n_events, len(result.repurifications)


def _atomic_write(path: Path, text: str):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _config_json(config: RunConfig) -> dict:
    data = asdict(config)
    data["observables"] = list(config.observables)
    return data


def config_from_json(data: dict) -> RunConfig:
    data = dict(data)
    data["observables"] = tuple(data["observables"])
    return RunConfig(**data)


class Run:
    """A run directory bound to one configuration."""

    def __init__(self, config: RunConfig, directory=None):
        self.config = config
        self.dir = Path(directory or config.output)
        self.sample_dir = self.dir / "samples"
        self.completed: dict[int, int] = {}
        self.failed: dict[int, str] = {}
        self.n_events = 0
        self.n_repurified = 0

    # -------------------------------------------------------------- state
    @property
    def manifest_path(self) -> Path:
        return self.dir / MANIFEST

    def load(self):
        data = json.loads(self.manifest_path.read_text())
        if data["config_digest"] != self.config.digest:
            raise DigestMismatchError(
                f"{self.dir} holds config {data['config_digest']}, not {self.config.digest}")
        self.completed = {int(k): int(v) for k, v in data["completed"].items()}
        self.failed = {int(k): v for k, v in data["failed"].items()}
        self.n_events = data.get("n_events", 0)
        self.n_repurified = data.get("repurified_trajectories", 0)

    def sample_path(self, index: int) -> Path:
        return self.sample_dir / f"{index:05d}.npz"

    def samples(self) -> dict[str, np.ndarray]:
        """Per-trajectory records stacked in index order."""
        out: dict[str, list] = {}
        for index in sorted(self.completed):
            with np.load(self.sample_path(index)) as npz:
                for key in npz.files:
                    out.setdefault(key, []).append(npz[key])
        return {k: np.array(v) for k, v in out.items()}

    def accumulated(self) -> dict[str, RunningStats]:
        stats: dict[str, RunningStats] = {}
        for key, values in self.samples().items():
            acc = RunningStats(values.shape[1:])
            for v in values:
                acc.add(v)
            stats[key] = acc
        return stats

    def write_manifest(self, with_accumulated: bool = False):
        data = {
            "tool_version": __version__,
            "config_digest": self.config.digest,
            "config": _config_json(self.config),
            "completed": {str(k): v for k, v in sorted(self.completed.items())},
            "failed": {str(k): v for k, v in sorted(self.failed.items())},
            "n_failed": len(self.failed),
            "n_events": self.n_events,
            "repurified_trajectories": self.n_repurified,
        }
        if with_accumulated:
            data["accumulated"] = {
                k: {"count": s.count, "mean": np.ravel(s.mean).tolist(),
                    "m2": np.ravel(s.m2).tolist()}
                for k, s in self.accumulated().items()
            }
        _atomic_write(self.manifest_path, json.dumps(data, indent=1))

    # -------------------------------------------------------------- running
    def pending(self) -> list[int]:
        done = set(self.completed) | set(self.failed)
        return [i for i in range(self.config.n_trajectories) if i not in done]

    def execute(self, resume: bool = True, max_new: int | None = None, progress=None):
        """Run all pending trajectories (at most ``max_new`` of them)."""
        self.sample_dir.mkdir(parents=True, exist_ok=True)
        if resume and self.manifest_path.exists():
            self.load()
        elif self.manifest_path.exists():
            raise FileExistsError(f"{self.dir} already holds a run; pass resume")
        todo = self.pending()
        if max_new is not None:
            todo = todo[:max_new]
        workers = min(self.config.n_workers, max(len(todo), 1))
        if workers == 1:
            results = (_run_one(self.config, i) for i in todo)
            self._collect(results, progress)
        else:
            with ProcessPoolExecutor(workers) as pool:
                results = pool.map(_run_one, [self.config] * len(todo), todo)
                self._collect(results, progress)
        self.write_manifest(with_accumulated=True)
        return self

    def _collect(self, results, progress):
        for index, seed, samples, error, n_events, n_rep in results:
            if error is not None:
                log.warning("trajectory %d failed: %s", index, error)
                self.failed[index] = error
            else:
                np.savez(self.sample_path(index), **samples)
                self.completed[index] = seed
                self.n_events += n_events
                self.n_repurified += int(n_rep > 0)
            self.write_manifest()
            if progress:
                progress(index)

    @property
    def finished(self) -> bool:
        return not self.pending()

    # -------------------------------------------------------------- tables
    def write_tables(self):
        samples = self.samples()
        if not samples:
            raise RuntimeError(f"{self.dir}: no completed trajectories")
        cfg = self.config
        header = self.header_lines()
        if "profile" in samples:
            write_correlator_tables(self.dir, cfg, samples["profile"], header)
        if "covariance" in samples:
            write_covariance_table(self.dir / "covariance.csv", [covariance_row(cfg, samples)],
                                   header)
        if "entropy" in samples:
            prof = profile_from_samples(samples["entropy"], samples["c2"], cfg.L)
            write_entropy_table(self.dir / "entropy.csv", prof, header)

    def header_lines(self, n_trajectories: int | None = None) -> list[str]:
        cfg = self.config
        if n_trajectories is None:
            n_trajectories = len(self.completed)
        return [f"config_digest={cfg.digest}", f"tool_version={__version__}",
                f"d={cfg.d}", f"L={cfg.L}", f"J={cfg.J}", f"gamma={cfg.gamma}",
                f"filling={cfg.filling}", f"n_trajectories={n_trajectories}",
                f"n_failed={len(self.failed)}"]


def simulate(config: RunConfig, resume: bool = True, progress=None) -> Run:
    run = Run(config).execute(resume=resume, progress=progress)
    run.write_tables()
    return run


# ------------------------------------------------------------------- tables
def _write_csv(path: Path, header: list[str], columns: list[str], rows):
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_table(path) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    """Read a CSV written here: returns (header key/values, columns)."""
    meta: dict[str, str] = {}
    lines = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key] = value
            elif line.strip():
                lines.append(line)
    reader = csv.reader(lines)
    names = next(reader)
    rows = list(reader)
    cols = {}
    for i, name in enumerate(names):
        vals = [r[i] for r in rows]
        try:
            cols[name] = np.array([float(v) if v != "" else np.nan for v in vals])
        except ValueError:
            cols[name] = np.array(vals)
    return meta, cols


CORRELATOR_COLUMNS = ["m", "q", "q_tilde", "C_q", "C_q_err", "q_tilde_l0",
                      "C_q_over_g0_q_tilde", "C_q_over_g0_q_tilde_err"]
COVARIANCE_COLUMNS = ["L", "gamma", "G_AB", "G_AB_err", "I_AB", "I_AB_err", "n_trajectories"]
ENTROPY_COLUMNS = ["ell", "ell_tilde", "S", "S_err", "C2", "C2_err", "ratio", "ratio_err"]


def correlator_rows(config: RunConfig, profiles):
    est = estimate_from_profiles(profiles, config.lattice)
    mc = momentum_correlator(est)
    g0 = bare_coupling_raw(config.d, config.J, config.gamma, config.filling) if config.gamma else np.inf
    l0 = np.sqrt(config.d / 2) * config.J / config.gamma if config.gamma else np.inf
    rows = []
    for i, m in enumerate(mc.m):
        err = None if mc.std_err is None else mc.std_err[i]
        if m == 0:
            ratio = ratio_err = None
        else:
            ratio = mc.mean[i] / (g0 * mc.q_tilde[i])
            ratio_err = None if err is None else err / (g0 * mc.q_tilde[i])
        rows.append([int(m), mc.q[i], mc.q_tilde[i], mc.mean[i], err, mc.q_tilde[i] * l0,
                     ratio, ratio_err])
    return est, mc, rows


def write_correlator_tables(directory: Path, config: RunConfig, profiles, header):
    est, mc, rows = correlator_rows(config, profiles)
    _write_csv(directory / "correlator.csv", header, CORRELATOR_COLUMNS, rows)
    np.savez(directory / "correlator_raw.npz", displacement_mean=est.mean,
             displacement_err=est.std_err if est.std_err is not None else np.full_like(est.mean, np.nan),
             momentum_mean=mc.grid_mean,
             momentum_err=mc.grid_err if mc.grid_err is not None else np.full_like(mc.grid_mean, np.nan))


def covariance_row(config: RunConfig, samples):
    cov = samples["covariance"]
    mean, err = mean_and_error(cov)
    err = [None, None] if err is None else err
    return [config.L, config.gamma, mean[0], err[0], mean[1], err[1], cov.shape[0]]


def write_covariance_table(path: Path, rows, header):
    _write_csv(path, header, COVARIANCE_COLUMNS, rows)


def write_entropy_table(path: Path, prof, header):
    def at(arr, i):
        return None if arr is None else arr[i]

    rows = [[int(prof.ell[i]), prof.ell_tilde[i], prof.entropy[i], at(prof.entropy_err, i),
             prof.c2[i], at(prof.c2_err, i), prof.ratio[i], at(prof.ratio_err, i)]
            for i in range(prof.ell.size)]
    _write_csv(path, header, ENTROPY_COLUMNS, rows)


# -------------------------------------------------------------------- sweeps
def template_digest(config: RunConfig) -> str:
    """Digest of the physics shared by all cells of a sweep (everything but L, gamma, seed)."""
    return config.replace(gamma=1.0, L=4, base_seed=0).digest


def cell_seed(base_seed: int, L: int, gamma: float) -> int:
    key = splitmix64(L) ^ splitmix64(int(round(gamma * 1e6)) + (1 << 40))
    return splitmix64(base_seed ^ key)


def cell_config(template: RunConfig, L: int, gamma: float, root: Path) -> RunConfig:
    return template.replace(L=L, gamma=gamma, base_seed=cell_seed(template.base_seed, L, gamma),
                            output=str(root / f"L{L}_g{gamma:.4f}"))


def sweep(template: RunConfig, gammas, sizes, root=None, resume: bool = True, progress=None):
    """Independent runs on the (L, gamma) grid plus a merged covariance table.

    Returns ``(rows, failures)`` where ``failures`` maps cell names to errors.
    """
    gammas = list(gammas)
    sizes = list(sizes)
    if not gammas or not sizes:
        raise ValueError("sweep needs at least one gamma and one size")
    root = Path(root or template.output)
    root.mkdir(parents=True, exist_ok=True)
    rows, failures = [], {}
    for L in sizes:
        for g in gammas:
            cfg = cell_config(template, L, g, root)
            try:
                run = simulate(cfg, resume=resume, progress=progress)
            except (OSError, RuntimeError, ValueError) as exc:
                log.error("sweep cell L=%s gamma=%s failed: %s", L, g, exc)
                failures[Path(cfg.output).name] = str(exc)
                continue
            if "covariance" in cfg.observables:
                rows.append(covariance_row(cfg, run.samples()))
    header = [f"template_digest={template_digest(template)}", f"tool_version={__version__}",
              f"gammas={','.join(map(str, gammas))}", f"sizes={','.join(map(str, sizes))}"]
    if rows:
        write_covariance_table(root / "covariance.csv", rows, header)
    return rows, failures


# ------------------------------------------------------------------ analyze
def _run_dirs(paths) -> list[Run]:
    runs = []
    for p in paths:
        p = Path(p)
        data = json.loads((p / MANIFEST).read_text())
        run = Run(config_from_json(data["config"]), p)
        run.load()
        runs.append(run)
    return runs


def analyze(paths, mode: str, out=None, force: bool = False):
    """Emit summary tables from one or more run directories.

    ``momentum`` and ``entropy`` pool trajectories of runs sharing a config
    digest; ``covariance`` stacks one row per run and requires a common
    template digest.  ``force`` skips the digest check.
    """
    runs = _run_dirs(paths)
    if not runs:
        raise ValueError("no run directories given")
    if mode in ("momentum", "entropy"):
        digests = {r.config.digest for r in runs}
        if len(digests) > 1 and not force:
            raise DigestMismatchError(f"mixed config digests {sorted(digests)}")
        cfg = runs[0].config
        pooled: dict[str, list] = {}
        for r in runs:
            for k, v in r.samples().items():
                pooled.setdefault(k, []).append(v)
        samples = {k: np.concatenate(v) for k, v in pooled.items()}
        header = runs[0].header_lines(len(next(iter(samples.values()))))
        target = Path(out) if out else runs[0].dir / ("analysis_" + mode + ".csv")
        if mode == "momentum":
            if "profile" not in samples:
                raise ValueError("runs did not record the correlator")
            _, mc, rows = correlator_rows(cfg, samples["profile"])
            fit = None
            if mc.std_err is not None and mc.m.size > 5:
                fit = extrapolate_q0(mc.q_tilde[1:6], mc.mean[1:6] / mc.q_tilde[1:6],
                                     mc.std_err[1:6] / mc.q_tilde[1:6])
                g0 = bare_coupling_raw(cfg.d, cfg.J, cfg.gamma, cfg.filling)
                header += [f"extrapolated_C_over_q_tilde={fit.value!r}",
                           f"extrapolated_C_over_q_tilde_err={fit.error!r}",
                           f"extrapolated_over_g0={fit.value / g0!r}"]
            _write_csv(target, header, CORRELATOR_COLUMNS, rows)
            return rows, fit
        if "entropy" not in samples:
            raise ValueError("runs did not record the entropy profile")
        prof = profile_from_samples(samples["entropy"], samples["c2"], cfg.L)
        write_entropy_table(target, prof, header)
        return prof, None
    if mode == "covariance":
        digests = {template_digest(r.config) for r in runs}
        if len(digests) > 1 and not force:
            raise DigestMismatchError(f"mixed template digests {sorted(digests)}")
        rows = [covariance_row(r.config, r.samples()) for r in runs]
        rows.sort(key=lambda row: (row[0], row[1]))
        target = Path(out) if out else Path("covariance.csv")
        header = [f"template_digest={digests.pop()}", f"tool_version={__version__}"]
        write_covariance_table(target, rows, header)
        return rows, None
    raise ValueError(f"unknown analysis mode {mode!r}")
