"""Batch command line: ``rcising <subcommand> [options]``.

Subcommands
-----------
verify     exact-identity suite on a generated corpus (exit 2 on failure)
enumerate  exact two-point and truncated values on a small box
sample     parity-current samples: per-edge label frequencies, optional dumps
estimate   Monte Carlo two-point / truncated estimates
decompose  cluster snapshots from a ladder run, cut into irreducible pieces
fit        OZ prefactor fit of a records CSV
steps      step law and tail rates of a decomposition directory
oracle1d   d=1 transfer-matrix table

Run configurations are JSON files with the sections ``lattice``,
``sources``, ``chain``, ``estimator``, ``analysis``, ``output`` and the
integer ``workers``; unknown keys are errors and ``chain.seed`` is
required.  The worker count may be overridden with RCISING_WORKERS.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import subprocess
import sys
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, DomainError, ResourceError

RECORD_HEADER = ("configHash", "chain", "observable", "argument", "estimate", "stdError", "nSamples",
                 "autocorrTime", "seed", "flag")
SCHEMA_VERSION = 1
WORKERS_ENV = "RCISING_WORKERS"

SECTIONS = {
    "lattice": {"dimension": None, "half_width": None, "J": None, "couplings": None, "field": None},
    "sources": {"origin": None, "targets": None, "direction": None, "distances": None, "A": [], "B": None},
    "chain": {"seed": None, "samples": 10_000, "sweeps_per_sample": 1, "burn_in": 1_000, "chains": 1},
    "estimator": {"method": "worm", "radius": 2, "reach": None, "guess": 1.0, "p_win": 0.9,
                  "one_point": None},
    "analysis": {"fit_window": None, "joint": True, "delta": None, "grid": 4, "norm_scale": 1.0,
                 "min_samples": 1},
    "output": {"directory": "rcising-out", "formats": ["csv", "json"], "dumpConfigurations": False},
}
REQUIRED = {"lattice": ("dimension", "half_width", "field"), "chain": ("seed",)}


# ---------------------------------------------------------------------------
# configuration

def _fmt(x) -> str:
    if isinstance(x, float) or isinstance(x, np.floating):
        return format(float(x), ".17g")
    return str(x)


def load_config(path) -> dict:
    """Parse and validate a run configuration; returns a complete dict."""
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such config file") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    return validate_config(raw)


def validate_config(raw) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - set(SECTIONS) - {"workers"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    cfg = {}
    for name, defaults in SECTIONS.items():
        sec = raw.get(name, {})
        if not isinstance(sec, dict):
            raise ConfigError(f"section {name!r} must be an object")
        bad = set(sec) - set(defaults)
        if bad:
            raise ConfigError(f"unknown keys in [{name}]: {sorted(bad)}")
        cfg[name] = {**defaults, **sec}
        for k in REQUIRED.get(name, ()):
            if sec.get(k) is None:
                raise ConfigError(f"[{name}].{k} is required")
    w = raw.get("workers", 1)
    if not isinstance(w, int) or isinstance(w, bool) or w < 1:
        raise ConfigError("workers must be a positive integer")
    cfg["workers"] = w
    lat = cfg["lattice"]
    if (lat["J"] is None) == (lat["couplings"] is None):
        raise ConfigError("[lattice] needs exactly one of J and couplings")
    if cfg["estimator"]["method"] not in ("worm", "ladder"):
        raise ConfigError("[estimator].method must be 'worm' or 'ladder'")
    fm = cfg["output"]["formats"]
    if not fm or not set(fm) <= {"csv", "json"}:
        raise ConfigError("[output].formats must be a non-empty subset of ['csv', 'json']")
    chain_config(cfg)
    lattice_spec(cfg)
    return cfg


def config_hash(cfg: dict) -> str:
    """Digest of everything that affects data (workers and output excluded)."""
    core = {k: v for k, v in cfg.items() if k not in ("workers", "output")}
    s = json.dumps(core, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(s.encode()).hexdigest()[:16]


def worker_count(cfg: dict) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env is None or env == "":
        return cfg.get("workers", 1)
    try:
        w = int(env)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be a positive integer, got {env!r}") from None
    if w < 1:
        raise ConfigError(f"{WORKERS_ENV} must be a positive integer, got {env!r}")
    return w


def lattice_spec(cfg):
    from .graphcore import LatticeSpec
    lat = cfg["lattice"]
    try:
        if lat["J"] is not None:
            return LatticeSpec.nearest_neighbour(lat["dimension"], lat["half_width"], float(lat["J"]),
                                                 float(lat["field"]))
        table = {tuple(off): float(j) for off, j in lat["couplings"]}
        return LatticeSpec(lat["dimension"], lat["half_width"], table, float(lat["field"]))
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"[lattice]: {e}") from None


def chain_config(cfg):
    from .sampler import ChainConfig
    c = cfg["chain"]
    try:
        return ChainConfig(seed=c["seed"], samples=c["samples"], sweeps_per_sample=c["sweeps_per_sample"],
                           burn_in=c["burn_in"], chains=c["chains"])
    except DomainError as e:
        raise ConfigError(f"[chain]: {e}") from None


@lru_cache(maxsize=4)
def _ghost_graph(spec_json: str):
    from .graphcore import LatticeSpec, augment_ghost, build_lattice
    d = json.loads(spec_json)
    spec = LatticeSpec(d["dimension"], d["half_width"], {tuple(o): j for o, j in d["couplings"]}, d["field"])
    return augment_ghost(build_lattice(spec), spec.field)


def ghost_graph(cfg):
    return _ghost_graph(json.dumps(lattice_spec(cfg).to_dict(), sort_keys=True))


def _vertex(v, d):
    from .graphcore import GHOST
    if v == "g":
        return GHOST
    t = tuple(int(c) for c in (v if isinstance(v, (list, tuple)) else [v]))
    if len(t) != d:
        raise ConfigError(f"vertex {v!r} does not have {d} coordinates")
    return t


def origin(cfg):
    d = cfg["lattice"]["dimension"]
    o = cfg["sources"]["origin"]
    return (0,) * d if o is None else _vertex(o, d)


def targets(cfg) -> list:
    """Explicit ``targets`` or origin + k * direction for k in distances."""
    s = cfg["sources"]
    d = cfg["lattice"]["dimension"]
    o = np.array(origin(cfg))
    if s["targets"] is not None:
        return [_vertex(t, d) for t in s["targets"]]
    if s["direction"] is None or s["distances"] is None:
        raise ConfigError("[sources] needs targets, or direction and distances")
    u = np.array(_vertex(s["direction"], d))
    lo, hi = (int(x) for x in s["distances"])
    if not 1 <= lo <= hi:
        raise ConfigError("[sources].distances must be [lo, hi] with 1 <= lo <= hi")
    return [tuple(int(c) for c in o + k * u) for k in range(lo, hi + 1)]


def ladder_path(cfg) -> list:
    """Lattice path origin, origin + e, ... to the farthest target along
    a coordinate direction."""
    s = cfg["sources"]
    d = cfg["lattice"]["dimension"]
    if s["direction"] is None or s["distances"] is None:
        raise ConfigError("ladder runs need [sources].direction and distances")
    u = np.array(_vertex(s["direction"], d))
    if np.abs(u).sum() != 1:
        raise ConfigError("ladder direction must be a coordinate unit vector")
    o = np.array(origin(cfg))
    hi = int(s["distances"][1])
    return [tuple(int(c) for c in o + k * u) for k in range(hi + 1)]


# ---------------------------------------------------------------------------
# persistence

def version_string() -> str:
    """Package version with the git revision when available."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], cwd=here, capture_output=True,
                             text=True, timeout=5)
        rev = out.stdout.strip() if out.returncode == 0 else ""
    except (OSError, subprocess.SubprocessError):
        rev = ""
    return f"{__version__}+g{rev}" if rev else __version__


def _chain_label(chains: int) -> str:
    return "0" if chains == 1 else f"0:{chains}"


def persist(records, cfg, directory=None, stem="records", extra_manifest=None) -> dict:
    """Write records as CSV and/or JSON plus manifest.json; returns paths.

    CSV columns follow RECORD_HEADER with 17 significant digits for floats;
    every row carries the config hash and the chain range it came from.
    """
    out = Path(directory or cfg["output"]["directory"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"{out}: cannot create output directory ({e})") from e
    h = config_hash(cfg)
    chain = _chain_label(cfg["chain"]["chains"])
    rows = [[h, chain, r.observable, r.argument, _fmt(float(r.estimate)), _fmt(float(r.stdError)), str(r.nSamples),
             _fmt(float(r.autocorrTime)), str(r.seed), r.flag] for r in records]
    paths = {}
    fm = cfg["output"]["formats"]
    try:
        if "csv" in fm:
            p = out / f"{stem}.csv"
            with open(p, "w", newline="") as f:
                w = csv.writer(f, lineterminator="\n")
                w.writerow(RECORD_HEADER)
                w.writerows(rows)
            paths["csv"] = str(p)
        if "json" in fm:
            p = out / f"{stem}.json"
            body = {"schema": SCHEMA_VERSION, "configHash": h,
                    "records": [dict(zip(RECORD_HEADER, row)) for row in rows]}
            p.write_text(json.dumps(body, indent=1) + "\n")
            paths["json"] = str(p)
        man = {"schema": SCHEMA_VERSION, "configHash": h, "seed": cfg["chain"]["seed"], "version": version_string(),
               "rows": {stem: len(rows)}, "config": {k: v for k, v in cfg.items() if k != "output"}}
        if extra_manifest:
            man.update(extra_manifest)
        mp = out / "manifest.json"
        if mp.exists():
            old = json.loads(mp.read_text())
            if old.get("configHash") == h:
                man["rows"] = {**old.get("rows", {}), **man["rows"]}
        mp.write_text(json.dumps(man, indent=1, sort_keys=True) + "\n")
        paths["manifest"] = str(mp)
    except OSError as e:
        raise OSError(f"{out}: write failed ({e})") from e
    return paths


def read_records(path) -> list:
    """EstimateRecords from a records CSV written by :func:`persist`."""
    from .sampler import EstimateRecord
    try:
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such records file") from None
    out = []
    for r in rows:
        try:
            out.append(EstimateRecord(r["observable"], r["argument"], float(r["estimate"]), float(r["stdError"]),
                                      int(r["nSamples"]), float(r["autocorrTime"]), int(r["seed"]), r.get("flag", "")))
        except (KeyError, ValueError) as e:
            raise ConfigError(f"{path}: malformed record row ({e})") from None
    return out


def _write_table(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows([[_fmt(c) for c in row] for row in rows])


# ---------------------------------------------------------------------------
# tasks (module level so worker processes can import them)

def run_tasks(fn, tasks, workers: int) -> list:
    """Map ``fn`` over ``tasks``; results come back in task order whatever
    the worker count, so merged outputs do not depend on scheduling."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as ex:
        return list(ex.map(fn, tasks))


def _task_worm(task):
    from .sampler import estimate_truncated, estimate_two_point
    cfg, u, v = task
    gg = ghost_graph(cfg)
    cc = chain_config(cfg)
    return [estimate_two_point(gg, u, v, cc), estimate_truncated(gg, u, v, cc)]


def _one_point(cfg, gg, o):
    from .graphcore import GHOST
    from .sampler import EstimateRecord, estimate_two_point
    op = cfg["estimator"]["one_point"]
    if op is not None:
        c, dc = (float(x) for x in op)
        return EstimateRecord("one_point", f"{o}|{o}", c, dc, 1, 0.0, cfg["chain"]["seed"], "given")
    r = estimate_two_point(gg, o, GHOST, chain_config(cfg))
    return EstimateRecord("one_point", f"{o}|{o}", 1.0 - r.estimate ** 2, 2 * abs(r.estimate) * r.stdError,
                          r.nSamples, r.autocorrTime, r.seed, r.flag)


def _task_rung(task):
    from .sampler import run_rung
    cfg, path, k = task
    e = cfg["estimator"]
    return run_rung(ghost_graph(cfg), path, k, chain_config(cfg), radius=e["radius"], guess=e["guess"],
                    p_win=e["p_win"], reach=e["reach"])


def _task_rung_decompose(task):
    """Ratio record plus decompositions of the block-end snapshots."""
    from .geometry import ConeSystem, NormModel, cluster_geom, decompose_irreducible, reassemble
    from .sampler import run_rung
    cfg, path, k = task
    e, a = cfg["estimator"], cfg["analysis"]
    gg = ghost_graph(cfg)
    d = cfg["lattice"]["dimension"]
    nm = NormModel.euclidean(d, a["norm_scale"], None)
    o = np.array(path[0])
    dirv = np.subtract(path[-1], path[0])
    cs = ConeSystem.for_direction(nm, dirv, a["delta"])
    out = []

    def grab(kk, nb, mb, head):
        c = cluster_geom(gg, nb, mb)
        dec = decompose_irreducible(c, tuple(o), tuple(head), cs)
        ok = reassemble(dec) == c
        out.append((kk, head, dec, ok, float(nm(np.subtract(head, o)))))

    rec = run_rung(gg, path, k, chain_config(cfg), radius=e["radius"], guess=e["guess"], p_win=e["p_win"],
                   reach=e["reach"], on_snapshot=grab)
    return rec, out, cs.delta


# ---------------------------------------------------------------------------
# subcommands

def cmd_verify(args) -> int:
    from .corpus import SuiteRow, identity_suite
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    w = csv.writer(out, lineterminator="\n")
    w.writerow(SuiteRow.HEADER)
    n = fails = 0
    try:
        for row in identity_suite(args.corpus, args.seed):
            w.writerow(row.cells())
            n += 1
            fails += not row.passed
    finally:
        if args.output:
            out.close()
    print(f"verify: {n - fails}/{n} passed", file=sys.stderr)
    return 2 if fails else 0


def cmd_enumerate(args) -> int:
    from .exact import spin_correlation, truncated_two_point
    from .sampler import EstimateRecord
    cfg = load_config(args.config)
    gg = ghost_graph(cfg)
    o = origin(cfg)
    recs = []
    seed = cfg["chain"]["seed"]
    for t in targets(cfg):
        a, b = truncated_two_point(gg, o, t, routes="spin" if gg.graph.n_edges > 14 else "both")
        arg = f"{o}|{t}"
        recs.append(EstimateRecord("exact_two_point", arg, spin_correlation(gg, {o, t} if o != t else set()),
                                   0.0, 1, 0.0, seed, "exact"))
        recs.append(EstimateRecord("exact_truncated", arg, a, 0.0, 1, 0.0, seed, "exact"))
        if not math.isnan(b):
            recs.append(EstimateRecord("exact_truncated_percolation", arg, b, 0.0, 1, 0.0, seed, "exact"))
    persist(recs, cfg, args.out, stem="exact")
    return 0


def cmd_sample(args) -> int:
    from .sampler import EstimateRecord, sample_double_current, sample_parity_current
    cfg = load_config(args.config)
    gg = ghost_graph(cfg)
    cc = chain_config(cfg)
    d = cfg["lattice"]["dimension"]
    A = {_vertex(v, d) for v in cfg["sources"]["A"]}
    Bs = cfg["sources"]["B"]
    G = gg.graph
    E = G.n_edges
    counts = np.zeros((2, 3, E), dtype=np.int64)
    out = Path(args.out or cfg["output"]["directory"])
    out.mkdir(parents=True, exist_ok=True)
    dump = cfg["output"]["dumpConfigurations"]
    fdump = open(out / "configurations.jsonl", "w") if dump else None
    n = 0
    try:
        if Bs is None:
            stream = ((x, None) for x in sample_parity_current(gg, A, cc))
        else:
            stream = sample_double_current(gg, A, {_vertex(v, d) for v in Bs}, cc)
        for x, y in stream:
            n += 1
            for s, z in enumerate((x, y)):
                if z is not None:
                    for lab in range(3):
                        counts[s, lab] += z.labels == lab
            if fdump is not None:
                row = {"sample": n - 1, "n": x.to_dict()}
                if y is not None:
                    row["m"] = y.to_dict()
                fdump.write(json.dumps(row, sort_keys=True) + "\n")
    finally:
        if fdump is not None:
            fdump.close()
    recs = []
    names = ("zero", "odd", "even")
    for s in range(1 if Bs is None else 2):
        for e in range(E):
            a, b = G.edges[e]
            arg = f"{G.vertices[a]}|{G.vertices[b]}"
            for lab in range(3):
                p = counts[s, lab, e] / max(n, 1)
                se = math.sqrt(max(p * (1 - p), 0.0) / max(n - 1, 1))
                recs.append(EstimateRecord(f"{'nm'[s]}_{names[lab]}_fraction", arg, float(p), se, max(n, 1),
                                           float("nan"), cc.seed, ""))
    persist(recs, cfg, out, stem="samples")
    return 0


def _ladder_records(cfg, gg, path, ratios):
    from .sampler import Ladder
    one = _one_point(cfg, gg, path[0])
    lad = Ladder(path, list(range(len(path) - 1)), ratios, (one.estimate, one.stdError))
    want = set(targets(cfg))
    trunc = [r for r, x in zip(lad.truncated_records(), path[1:]) if x in want]
    return [one] + list(ratios) + trunc


def cmd_estimate(args) -> int:
    cfg = load_config(args.config)
    gg = ghost_graph(cfg)
    workers = worker_count(cfg)
    o = origin(cfg)
    if cfg["estimator"]["method"] == "worm":
        tasks = [(cfg, o, t) for t in targets(cfg)]
        recs = [r for rs in run_tasks(_task_worm, tasks, workers) for r in rs]
    else:
        path = ladder_path(cfg)
        tasks = [(cfg, path, k) for k in range(len(path) - 1)]
        ratios = run_tasks(_task_rung, tasks, workers)
        recs = _ladder_records(cfg, gg, path, ratios)
    persist(recs, cfg, args.out, stem="records")
    return 0


def cmd_decompose(args) -> int:
    cfg = load_config(args.config)
    gg = ghost_graph(cfg)
    path = ladder_path(cfg)
    tasks = [(cfg, path, k) for k in range(len(path) - 1)]
    res = run_tasks(_task_rung_decompose, tasks, worker_count(cfg))
    out = Path(args.out or cfg["output"]["directory"])
    out.mkdir(parents=True, exist_ok=True)
    h = config_hash(cfg)
    ratios = [r[0] for r in res]
    persist(_ladder_records(cfg, gg, path, ratios), cfg, out, stem="records")
    d = cfg["lattice"]["dimension"]
    srows, prows = [], []
    sid = 0
    for rec, snaps, delta in res:
        for k, head, dec, ok, xl in snaps:
            srows.append([h, sid, k, "|".join(map(str, head)), len(dec.cone_points), xl, int(dec.degenerate), int(ok)])
            if not dec.degenerate:
                for p in dec.pieces:
                    prows.append([h, sid, p.kind, p.size] + [int(c) for c in p.displacement])
            sid += 1
    _write_table(out / "samples.csv", ("configHash", "sample", "rung", "head", "conePoints", "xiLength",
                                       "degenerate", "roundTrip"), srows)
    _write_table(out / "pieces.csv", ("configHash", "sample", "kind", "size") + tuple(f"D{i}" for i in range(d)),
                 prows)
    if srows and not all(r[-1] for r in srows):
        print("decompose: round trip failed on some samples", file=sys.stderr)
        return 1
    return 0


def _series(records, direction=None):
    from .ozanalysis import DecaySeries
    ratios = [r for r in records if r.observable == "ratio"]
    if ratios:
        one = [r for r in records if r.observable == "one_point"]
        if len(one) != 1:
            raise ConfigError("ladder records need exactly one one_point row")
        vals = [(r.estimate, r.stdError) for r in ratios]
        ds = DecaySeries.from_ratios(0, one[0].estimate, one[0].stdError, vals, direction=direction or (1,))
        # the origin point only anchors the products; fits start at distance 1
        return ds.window(1, math.inf)
    tr = [r for r in records if r.observable == "truncated"]
    if not tr:
        raise ConfigError("no truncated or ratio records to fit")
    return DecaySeries.from_records(tr, direction)


def cmd_fit(args) -> int:
    from .ozanalysis import fit_oz_prefactor, inverse_correlation_length, masses_decreasing
    recs = read_records(args.input)
    ds = _series(recs, tuple(args.direction) if args.direction else None)
    if args.window:
        ds = ds.window(*args.window)
    fit = fit_oz_prefactor(ds, xi=args.xi)
    out = fit.to_dict()
    lo, hi = fit.p_interval()
    out["pInterval95"] = [lo, hi]
    try:
        xi, sxi = inverse_correlation_length(ds)
        out["xiMasses"] = [xi, sxi]
    except DomainError as e:
        out["xiMasses"] = str(e)
    out["massesDecreasing"] = masses_decreasing(ds, z=2.0)
    text = json.dumps(out, indent=1)
    if args.output:
        Path(args.output).write_text(text + "\n")
    print(text)
    return 0


def _read_decomposition(directory):
    from .geometry import ClusterGeom, Decomposition, IrreduciblePiece
    d = Path(directory)
    try:
        with open(d / "samples.csv", newline="") as f:
            samples = list(csv.DictReader(f))
        with open(d / "pieces.csv", newline="") as f:
            pieces = list(csv.DictReader(f))
    except FileNotFoundError as e:
        raise ConfigError(f"{directory}: missing decomposition table ({e.filename})") from None
    by = {}
    for p in pieces:
        D = tuple(int(p[k]) for k in sorted(p) if k.startswith("D"))
        by.setdefault(p["sample"], []).append((p["kind"], int(p["size"]), D))
    empty = ClusterGeom.build(np.zeros((1, 1), dtype=np.int64), [])
    decs, lens = [], []
    for s in samples:
        ps = by.get(s["sample"], [])

        def mk(kind, D):
            return IrreduciblePiece(kind, empty, None, None, None, D)
        left = [mk(k, D) for k, _, D in ps if k == "left"]
        right = [mk(k, D) for k, _, D in ps if k == "right"]
        bulk = [mk(k, D) for k, _, D in ps if k == "bulk"]
        head = tuple(int(c) for c in s["head"].split("|"))
        u = (0,) * len(head)
        cp = [None] * int(s["conePoints"])
        decs.append(Decomposition(left[0] if left else None, bulk, right[0] if right else None, u, head,
                                  bool(int(s["degenerate"])), cp))
        lens.append(float(s["xiLength"]))
    return decs, lens


def cmd_steps(args) -> int:
    from .ozanalysis import step_statistics
    decs, lens = _read_decomposition(args.input)
    sl, rates = step_statistics(decs, min_samples=args.min_samples)
    dens = [len(dec.cone_points) / x for dec, x in zip(decs, lens) if x > 0]
    out = {"stepLaw": sl.to_dict(), "coneDensity": {"mean": float(np.mean(dens)) if dens else None,
                                                    "n": len(dens)},
           "tailRates": {k: {"rate": v.rate, "stdError": v.stdError, "levels": v.n_levels,
                             "subexponential": v.subexponential} for k, v in rates.items()}}
    text = json.dumps(out, indent=1, default=float)
    if args.output:
        Path(args.output).write_text(text + "\n")
    print(text)
    print("piece  rate  stdError  levels", file=sys.stderr)
    for k, v in rates.items():
        print(f"{k:6s} {_fmt(v.rate)} {_fmt(v.stdError)} {v.n_levels}", file=sys.stderr)
    return 0


def cmd_oracle1d(args) -> int:
    from .ozanalysis import transfer_matrix_oracle
    rows = transfer_matrix_oracle(args.J, args.h, list(range(1, args.n + 1)))
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(("n", "two_point", "truncated", "xi"))
    for r in rows:
        w.writerow((r.n, _fmt(float(r.two_point)), _fmt(float(r.truncated)), _fmt(float(r.xi))))
    return 0


# ---------------------------------------------------------------------------
# dispatch

class _Parser(argparse.ArgumentParser):
    """Usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rcising", description="Random-current Ising toolkit")
    p.add_argument("--version", action="version", version=f"rcising {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    v = sub.add_parser("verify", help="exact-identity suite")
    v.add_argument("--corpus", default="small", help="corpus name (small, tiny)")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--output", help="CSV file instead of stdout")
    v.set_defaults(func=cmd_verify)

    for name, func, hlp in (("enumerate", cmd_enumerate, "exact values on a small box"),
                            ("sample", cmd_sample, "parity-current samples"),
                            ("estimate", cmd_estimate, "Monte Carlo estimates"),
                            ("decompose", cmd_decompose, "irreducible decomposition of ladder snapshots")):
        s = sub.add_parser(name, help=hlp)
        s.add_argument("--config", required=True, help="JSON run configuration")
        s.add_argument("--out", help="output directory (overrides [output].directory)")
        s.set_defaults(func=func)

    f = sub.add_parser("fit", help="OZ prefactor fit of a records CSV")
    f.add_argument("--input", required=True)
    f.add_argument("--direction", type=int, nargs="+")
    f.add_argument("--window", type=float, nargs=2, metavar=("LO", "HI"))
    f.add_argument("--xi", type=float, help="fixed rate (default: fitted jointly)")
    f.add_argument("--output")
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("steps", help="step law of a decomposition directory")
    s.add_argument("--input", required=True, help="directory holding samples.csv and pieces.csv")
    s.add_argument("--min-samples", type=int, default=100)
    s.add_argument("--output")
    s.set_defaults(func=cmd_steps)

    o = sub.add_parser("oracle1d", help="d=1 transfer-matrix table")
    o.add_argument("--J", type=float, required=True)
    o.add_argument("--h", type=float, required=True)
    o.add_argument("--n", type=int, required=True)
    o.set_defaults(func=cmd_oracle1d)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return int(args.func(args))
    except (ConfigError, DomainError, ResourceError) as e:
        print(f"rcising {args.command}: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"rcising {args.command}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
