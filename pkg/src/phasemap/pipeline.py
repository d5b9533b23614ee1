"""Config-driven runs: data generation, models, indicator fields, references and artifacts."""
from __future__ import annotations

import csv
import io
import json
import os
import platform
import shutil
import tempfile
import time
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from . import __version__, ising, quantum, snake
from .config import RunConfig
from .grid import ParameterGrid, make_scheme1_labels
from .indicators import (IndicatorField, ModelField, Sampled, class_posterior_field, config_hash, indicator1,
                         indicator2, indicator3)
from .models import (CorruptModelFileError, ExactModel, HistogramModel, histogram_fit, read_exact, read_histogram,
                     write_exact, write_histogram)
from .sampling import ising_grid_stats, ising_path_stats

DEFAULT_NAMES = {
    ("ising", 2): ("gamma1", "gamma2"),
    ("ising", 1): ("t",),
    ("cluster-ising", 2): ("h1", "h2"),
    ("cluster-ising", 1): ("h2",),
    ("synthetic", 2): ("gamma1", "gamma2"),
}


def build_grid(cfg: RunConfig) -> ParameterGrid:
    axes = []
    for a in cfg.grid.axes:
        if a.values is not None:
            axes.append(np.array(a.values, dtype=float))
        elif a.count == 1:
            axes.append(np.array([float(a.min)]))
        else:
            axes.append(np.linspace(a.min, a.max, a.count))
    names = tuple(cfg.grid.names) or DEFAULT_NAMES.get((cfg.system, len(axes)), ())
    return ParameterGrid(tuple(axes), names)


def physical_points(cfg: RunConfig, grid: ParameterGrid) -> np.ndarray:
    """``(size, 2)`` model parameters for every grid point in C order."""
    c = grid.coord_array()
    if grid.dims == 2:
        return c
    t = c[:, 0]
    if cfg.system == "ising":
        d = np.array(cfg.ising.line.direction)
        o = np.array(cfg.ising.line.offset)
        return o[None, :] + t[:, None] * d[None, :]
    return np.stack([np.full_like(t, cfg.cluster.h1), t], axis=1)


class _Artifacts:
    """Everything a run will write, gathered in memory and flushed by one writer."""

    def __init__(self):
        self.files: dict[str, object] = {}

    def text(self, name: str, content: str):
        self.files[name] = content

    def writer(self, name: str, fn):
        self.files[name] = fn

    def flush(self, out: Path) -> list[str]:
        out = Path(out)
        out.parent.mkdir(parents=True, exist_ok=True)
        stage = Path(tempfile.mkdtemp(prefix=".phasemap-stage-", dir=out.parent))
        try:
            for name, item in self.files.items():
                p = stage / name
                p.parent.mkdir(parents=True, exist_ok=True)
                if callable(item):
                    item(p)
                else:
                    p.write_text(item)
            out.mkdir(parents=True, exist_ok=True)
            for name in self.files:
                dst = out / name
                dst.parent.mkdir(parents=True, exist_ok=True)
                os.replace(stage / name, dst)
        finally:
            shutil.rmtree(stage, ignore_errors=True)
        return sorted(self.files)


def _csv(header, rows, chash: str) -> str:
    buf = io.StringIO()
    buf.write(f"# config_sha256={chash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([f"{v:.17g}" if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


# --- models -----------------------------------------------------------------------

def _ising_key_fn(cfg: RunConfig):
    s = cfg.ising
    if s.representation == "line":
        d = np.array([int(v) for v in s.line.direction], dtype=np.int64)
        return lambda st: st @ d
    return lambda st: st


def _ising_models(cfg: RunConfig, grid: ParameterGrid, threads: int, meta: dict):
    s = cfg.ising
    pts = physical_points(cfg, grid)
    if s.backend == "exact":
        rep = "stat" if s.representation == "line" else s.representation
        models = []
        for p in pts:
            m = ising.boltzmann_model(tuple(p), s.L, rep, s.translations)
            if s.representation == "line":
                m = _project_exact(m, cfg)
            models.append(m)
        return models, None
    if grid.dims == 2:
        by_idx = ising_grid_stats(grid, s.L, s.n_samples, s.n_therm, cfg.seed, threads, s.anneal)
        stats = [by_idx[idx] for idx in grid.indices()]
    else:
        order = np.arange(len(pts))
        if s.anneal == "from_cold":
            order = np.argsort(-np.linalg.norm(pts, axis=1), kind="stable")
        visited = ising_path_stats(pts[order], s.L, s.n_samples, s.n_therm, cfg.seed)
        stats = [None] * len(pts)
        for k, st in zip(order, visited):
            stats[k] = st
    key = _ising_key_fn(cfg)
    meta["sampler"] = {"n_samples": s.n_samples, "n_therm": s.n_therm, "anneal": s.anneal}
    return [histogram_fit(key(st)) for st in stats], stats


def _project_exact(model: ExactModel, cfg: RunConfig) -> ExactModel:
    d = [int(v) for v in cfg.ising.line.direction]
    acc: dict = {}
    for k, p in model.support():
        key = d[0] * k[0] + d[1] * k[1]
        acc[key] = acc.get(key, 0.0) + p
    keys = np.array(sorted(acc), dtype=np.int64)
    return ExactModel(keys, np.array([acc[k] for k in keys.tolist()]))


def _cluster_models(cfg: RunConfig, grid: ParameterGrid, threads: int, meta: dict):
    c = cfg.cluster
    pts = physical_points(cfg, grid)
    states = quantum.ground_states(pts, c.L, threads)
    if c.backend == "exact":
        models = [quantum.povm_model(s) for s in states]
        samples = None
    else:
        seqs = np.random.SeedSequence(cfg.seed).spawn(len(states))
        samples = [quantum.povm_sample(s, c.n_samples, np.random.default_rng(q)) for s, q in zip(states, seqs)]
        models = [histogram_fit(x) for x in samples]
    meta["degenerate_points"] = int(sum(s.degenerate for s in states))
    return models, states, samples


def _synthetic_models(cfg: RunConfig, grid: ParameterGrid):
    s = cfg.synthetic
    f = snake.line_boundary_field(grid, s.n_keys, s.width, s.seed)
    keys = np.arange(f.n_keys, dtype=np.int64)
    return [ExactModel(keys, f.probs[idx]) for idx in grid.indices()]


def load_models(directory, grid: ParameterGrid) -> list:
    """Model files ``models/<flat index>.tsv`` written by ``data.dump_models``."""
    base = Path(directory) / "models"
    out = []
    for k in range(grid.size):
        p = base / f"{k:06d}.tsv"
        if not p.exists():
            raise CorruptModelFileError(p, "missing model file")
        head = p.read_text().split("\n", 1)[0]
        out.append(read_histogram(p) if head.startswith("# total") else read_exact(p))
    return out


def check_model_files(directory) -> list[dict]:
    """Parse every model file; one entry per file with its status."""
    res = []
    for p in sorted((Path(directory) / "models").glob("*.tsv")):
        try:
            head = p.read_text().split("\n", 1)[0]
            (read_histogram if head.startswith("# total") else read_exact)(p)
            res.append({"file": str(p), "passed": True})
        except (CorruptModelFileError, ValueError) as e:
            res.append({"file": str(p), "passed": False, "detail": str(e)})
    return res


# --- references ----------------------------------------------------------------------

def line_onsager_crossings(pts: np.ndarray, t: np.ndarray) -> list[float]:
    """Values of t where the path crosses the Onsager curve |γ₂| = −ln tanh|γ₁| / 2."""
    def f(tv):
        g1 = np.interp(tv, t, pts[:, 0])
        g2 = np.interp(tv, t, pts[:, 1])
        if g1 == 0:
            return np.inf
        return abs(g2) - ising.onsager_boundary(g1)
    vals = [f(v) for v in t]
    out = []
    for k in range(len(t) - 1):
        a, b = vals[k], vals[k + 1]
        if np.isfinite(a) and np.isfinite(b) and a * b < 0:
            out.append(float(brentq(f, t[k], t[k + 1], xtol=1e-14)))
        elif a == 0:
            out.append(float(t[k]))
    return out


# --- run -----------------------------------------------------------------------------

def run(cfg: RunConfig, config_text: str, out: str | Path | None = None) -> dict:
    """Execute one configured run; returns the run metadata that was written to ``run.json``."""
    t_start = time.perf_counter()
    out = Path(out or cfg.out)
    threads = cfg.threads or os.cpu_count() or 1
    chash = config_hash(config_text)
    grid = build_grid(cfg)
    names = list(grid.names)
    art = _Artifacts()
    meta: dict = {"config_sha256": chash, "system": cfg.system, "seed": cfg.seed, "threads": threads,
                  "grid": grid.to_dict(), "version": __version__, "timings": {},
                  "platform": {"python": platform.python_version(), "numpy": np.__version__}}
    timings = meta["timings"]

    t0 = time.perf_counter()
    stats = states = samples = None
    if cfg.data.load:
        models = load_models(cfg.data.load, grid)
    elif cfg.system == "ising":
        models, stats = _ising_models(cfg, grid, threads, meta)
    elif cfg.system == "cluster-ising":
        models, states, samples = _cluster_models(cfg, grid, threads, meta)
    else:
        models = _synthetic_models(cfg, grid)
    timings["models"] = time.perf_counter() - t0

    est = "exact" if cfg.estimator.kind == "exact" else Sampled(cfg.estimator.n)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    t0 = time.perf_counter()
    mf = ModelField(grid, models, est, rng)
    timings["model_field"] = time.perf_counter() - t0
    meta["n_keys"] = mf.stack.n_keys
    meta["indicators"] = {}

    def emit(field: IndicatorField, name: str):
        art.writer(f"{name}.csv", lambda p, f=field: f.write_csv(p, chash))
        art.text(f"{name}.json", json.dumps(field.sidecar(), indent=2, default=_jsonable) + "\n")
        meta["indicators"][name] = {"n_dropped": int(field.n_dropped.sum()), "n_flagged": int(field.flags.sum())}

    for scheme in cfg.schemes:
        t0 = time.perf_counter()
        if scheme == "1":
            labels = make_scheme1_labels(grid, [(c.label, c.points) for c in cfg.scheme1.classes])
            curve = class_posterior_field(mf, labels)
            emit(indicator1(curve, grid), "indicator1")
            rows = [(*grid.coords(p), *curve.posterior[k]) for k, p in enumerate(curve.points)]
            art.text("scheme1_posterior.csv",
                     _csv(names + [f"P({y})" for y in curve.labels], rows, chash))
        elif scheme == "2":
            for prior in cfg.scheme2.priors:
                f = indicator2(grid, mf, cfg.scheme2.l, metric=cfg.scheme2.metric, prior=prior)
                emit(f, f"indicator2_{prior}")
        elif scheme in ("3", "3prime"):
            f = indicator3(grid, mf, mode="normalized" if scheme == "3" else "unnormalized")
            emit(f, f"indicator{scheme}")
        elif scheme == "snake":
            meta["snake"] = _run_snake(cfg, grid, mf, art, chash)
        timings[f"scheme_{scheme}"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    _references(cfg, grid, stats, states, art, chash, meta)
    timings["references"] = time.perf_counter() - t0

    if cfg.data.dump_models:
        for k, m in enumerate(models):
            fn = write_histogram if isinstance(m, HistogramModel) else write_exact
            art.writer(f"models/{k:06d}.tsv", lambda p, m=m, fn=fn: fn(p, m))
    if cfg.data.dump_samples:
        _dump_samples(cfg, stats, samples, art)

    timings["total"] = time.perf_counter() - t_start
    meta["files"] = sorted(set(art.files) | {"run.json"})
    art.text("run.json", json.dumps(meta, indent=2, default=_jsonable) + "\n")
    art.flush(out)
    return meta


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    return str(o)


def _run_snake(cfg: RunConfig, grid: ParameterGrid, mf: ModelField, art: _Artifacts, chash: str) -> dict:
    s = cfg.snake
    probs = mf.weights / mf.mass[:, None]
    fld = snake.InterpolatedField(grid, probs.reshape(grid.shape + (mf.stack.n_keys,)))
    sigma_end = s.sigma_end or fld.spacing()
    pinned = np.zeros(s.n_nodes, dtype=bool)
    if s.pin_ends:
        pinned[[0, -1]] = True
    st = snake.straight_snake(s.start, s.end, s.n_nodes, sigma_end, alpha=s.alpha, beta=s.beta,
                              l_sense=s.l_sense, kappa=s.kappa, lr_int=s.lr_int, lr_ext=s.lr_ext, pinned=pinned)
    st = snake.run(st, fld, s.epochs)
    art.writer("snake_trajectory.csv", lambda p, h=st.history: snake.write_trajectory(p, h, chash))
    return {"epochs": s.epochs, "sigma_end": sigma_end, "final_nodes": st.nodes.tolist(),
            "clamped_sensing_points_last_step": st.flagged}


def _references(cfg, grid, stats, states, art: _Artifacts, chash: str, meta: dict):
    names = list(grid.names)
    pts = physical_points(cfg, grid)
    if cfg.system == "ising":
        L = cfg.ising.L
        if cfg.references.heat_capacity and (stats is not None or cfg.ising.backend == "exact"):
            rows = []
            for k, idx in enumerate(grid.indices()):
                g = tuple(pts[k])
                if stats is not None:
                    c = ising.heat_capacity(stats[k], g, L)
                else:
                    c = ising.heat_capacity_exact(ising.boltzmann_model(g, L, "stat"), g, L)
                rows.append((*grid.coords(idx), float(c)))
            art.text("heat_capacity.csv", _csv(names + ["heat_capacity"], rows, chash))
        if cfg.references.onsager:
            if grid.dims == 2:
                rows = [(float(g1), ising.onsager_boundary(g1), ising.onsager_boundary(g1, upper=False))
                        for g1 in grid.axes[0] if g1 != 0]
                art.text("onsager.csv", _csv(["gamma1", "gamma2_upper", "gamma2_lower"], rows, chash))
            else:
                cross = line_onsager_crossings(pts, grid.axes[0])
                meta["onsager_crossings"] = cross
                art.text("onsager.csv", _csv([names[0]], [(float(c),) for c in cross], chash))
    elif cfg.system == "cluster-ising" and states is not None and cfg.references.string_order:
        rows = []
        bounds = {}
        h2 = grid.axes[-1]
        row_h1 = [cfg.cluster.h1] if grid.dims == 1 else list(grid.axes[0])
        n2 = len(h2)
        for r, h1 in enumerate(row_h1):
            st = states[r * n2:(r + 1) * n2]
            if n2 >= 5:
                scan = quantum.reference_boundaries(h1, h2, cfg.cluster.L, states=st)
                bounds[f"{h1:.17g}"] = scan.boundaries
                d2, ds = scan.d2_energy, scan.d_string
            else:
                d2 = ds = np.full(n2, np.nan)
            for j, s in enumerate(st):
                rows.append((float(h1), float(h2[j]), s.energy, quantum.string_order(s), float(d2[j]),
                             float(ds[j]), s.gap, int(s.degenerate)))
        art.text("string_order.csv", _csv(["h1", "h2", "energy", "string_order", "abs_d2_energy",
                                           "abs_d_string_order", "gap", "degenerate"], rows, chash))
        art.text("boundaries.json", json.dumps({"d2_energy_maxima": bounds}, indent=2) + "\n")
        gs = [{"h1": float(s.gamma[0]), "h2": float(s.gamma[1]), "energy": s.energy, "gap": s.gap,
               "string_order": quantum.string_order(s), "degenerate": bool(s.degenerate)} for s in states]
        art.text("ground_states.json", json.dumps(gs, indent=2) + "\n")


def _dump_samples(cfg, stats, samples, art: _Artifacts):
    if stats is not None:
        for k, st in enumerate(stats):
            art.text(f"samples/{k:06d}.tsv", "".join(f"{a}\t{b}\n" for a, b in st.tolist()))
    if samples is not None:
        L = cfg.cluster.L
        for k, x in enumerate(samples):
            art.writer(f"samples/{k:06d}.txt", lambda p, x=x: quantum.write_povm_samples(p, x, L))

