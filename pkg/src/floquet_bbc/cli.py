"""Command-line front end: spectrum | bulk | edge | verify | oracle."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from functools import cached_property
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .errors import ConfigError, DomainError, GapViolationError, PreconditionError, UnsupportedGeometryError
from .evolution import evolve, periodize, restrict_half_space
from .invariants_bulk import (ChernResult, IdentityCheck, bloch_chern_oracle, bott_loop,
                              even_chern, odd_chern_time)
from .invariants_edge import deep_bulk_mask, edge_channel_count, edge_odd_chern, exp_map_unitary
from .lattice import IndexSet, LatticeGeometry
from .models import (ChalkerCoddington, Custom, DisorderConfig, DrivenQWZ, Trivial,
                     bloch_symbol, build_protocol)
from .spectral import GapFunction, band_projection, find_gaps

log = logging.getLogger("floquet_bbc")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4
COMMANDS = ("spectrum", "bulk", "edge", "verify", "oracle")
ALLOWED = {
    "spectrum": set(),
    "bulk": {"band_chern", "winding"},
    "edge": {"edge_count", "edge_winding"},
    "verify": {"verify_prop21", "verify_prop31", "verify_prop32", "verify_cor34", "verify_bott", "oracle"},
    "oracle": {"oracle"},
}


def model_spec(cfg: RunConfig, seed: int):
    m = cfg.model
    if m.kind == "chalker_coddington":
        cuts = tuple(m.branch_cuts) if m.branch_cuts is not None else None
        return ChalkerCoddington(m.beta, DisorderConfig(seed, m.lam), cuts)
    if m.kind == "driven_qwz":
        return DrivenQWZ(m.mass, m.hopping)
    if m.kind == "trivial":
        return Trivial()
    return Custom(m.path)


class ModelRun:
    """One seed of one model: lazily built torus and cylinder evolutions with cached invariants."""

    def __init__(self, cfg: RunConfig, seed: int):
        self.cfg = cfg
        self.seed = seed
        self.spec = model_spec(cfg, seed)
        self.nodes = cfg.numerics.quadrature_nodes
        self.fraction = cfg.numerics.bump_fraction
        self._cache = {}

    def _geometry(self, extents):
        return LatticeGeometry.torus(tuple(extents), self.cfg.geometry.fiber)

    @cached_property
    def bulk(self):
        return evolve(build_protocol(self.spec, self._geometry(self.cfg.geometry.bulk)))

    @cached_property
    def edge(self):
        if isinstance(self.spec, Custom):
            torus = self.bulk.protocol
        else:
            torus = build_protocol(self.spec, self._geometry(self.cfg.geometry.edge))
        if not torus.geometry.is_torus:
            raise UnsupportedGeometryError("edge runs start from a torus protocol")
        return evolve(restrict_half_space(torus))

    @cached_property
    def gaps(self):
        gaps = find_gaps(self.bulk.spectrum, self.cfg.numerics.min_gap_width)
        if not gaps:
            raise GapViolationError(
                f"no spectral gap wider than {self.cfg.numerics.min_gap_width} (seed {self.seed})")
        return gaps

    def select(self, sel):
        if sel == "all":
            return list(range(len(self.gaps)))
        for k in sel:
            if not 0 <= k < len(self.gaps):
                raise GapViolationError(f"gap label {k} not among the {len(self.gaps)} detected gaps")
        return list(sel)

    def theta(self, k):
        return self.gaps[k].center

    def band_arc(self, k):
        """Arc from gap ``k`` counterclockwise to the next gap."""
        t0 = self.theta(k)
        t1 = self.theta((k + 1) % len(self.gaps))
        if t1 <= t0:
            t1 += 2 * np.pi
        return t0, t1

    def _memo(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    def band_chern(self, k, I=(1, 2)) -> ChernResult:
        def run():
            P = band_projection(self.bulk.spectrum, *self.band_arc(k))
            return even_chern(P, IndexSet(I))
        return self._memo(("band", k, tuple(I)), run)

    def winding(self, k, J=(0, 1, 2)) -> ChernResult:
        return self._memo(("wind", k, tuple(J)),
                          lambda: odd_chern_time(periodize(self.bulk, self.theta(k)), IndexSet(J), self.nodes))

    def edge_count(self, k, window) -> ChernResult:
        return self._memo(("N", k, window), lambda: edge_channel_count(
            self.edge.spectrum, self.gaps[k], self.theta(k), self.fraction, window))

    def edge_winding(self, k, window) -> ChernResult:
        def run():
            k1 = (k + 1) % len(self.gaps)
            t0, t1 = self.band_arc(k)
            gf = GapFunction.step_pair(self.gaps[k], self.gaps[k1], self.fraction, t0, t1)
            W = exp_map_unitary(self.edge.spectrum, gf, self.bulk.spectrum, window)
            return edge_odd_chern(W, IndexSet((self.edge.geometry.periodic_axes()[0],)))
        return self._memo(("W", k, window), run)

    def bott(self, k) -> ChernResult:
        def run():
            P = band_projection(self.bulk.spectrum, *self.band_arc(k))
            return odd_chern_time(bott_loop(P), IndexSet((0, 1, 2)), self.nodes)
        return self._memo(("bott", k), run)

    def oracle(self, k) -> int:
        symbol = bloch_symbol(self.spec)
        if symbol is None:
            raise UnsupportedGeometryError("the Bloch oracle needs a clean built-in model")
        return self._memo(("oracle", k), lambda: bloch_chern_oracle(
            symbol, self.band_arc(k), self.cfg.numerics.oracle_k_grid))


def _windows(req):
    return ("lower", "upper") if req.window == "both" else (req.window,)


def _orientation(window):
    """The upper edge bounds the bulk from the opposite side, so its counts enter with -1."""
    return 1.0 if window == "lower" else -1.0


def _chern_row(req, run, label, res: ChernResult, **extra):
    row = {"request": req.kind, "seed": run.seed, "label": label}
    row.update(extra)
    row.update(res.as_dict())
    return row


def _check_row(req, run, label, chk: IdentityCheck, tol):
    row = {"request": req.kind, "seed": run.seed, "label": label}
    row.update(chk.as_dict())
    row["tolerance"] = tol
    row["passed"] = bool(chk.residual < tol)
    return row


def _gap_meta(run, k):
    g = run.gaps[k]
    return {"theta": g.center, "gap_width": g.width}


def evaluate(req, run: ModelRun):
    """Rows for one request on one seed."""
    tol = getattr(run.cfg.numerics.tolerances, req.kind, None)
    rows = []
    ks = run.select(req.gaps)
    n_gaps = len(run.gaps)
    if req.kind == "band_chern":
        I = tuple(req.index_set or (1, 2))
        for k in ks:
            a, b = run.band_arc(k)
            rows.append(_chern_row(req, run, f"band{k}", run.band_chern(k, I), arc_lo=a, arc_hi=b))
    elif req.kind == "winding":
        J = tuple(req.index_set or (0, 1, 2))
        for k in ks:
            rows.append(_chern_row(req, run, f"gap{k}", run.winding(k, J), **_gap_meta(run, k)))
    elif req.kind == "edge_count":
        for k in ks:
            for w in _windows(req):
                rows.append(_chern_row(req, run, f"gap{k}", run.edge_count(k, w), **_gap_meta(run, k)))
    elif req.kind == "edge_winding":
        for k in ks:
            for w in _windows(req):
                rows.append(_chern_row(req, run, f"band{k}", run.edge_winding(k, w)))
    elif req.kind == "oracle":
        for k in ks:
            ch = run.band_chern(k)
            o = run.oracle(k)
            chk = IdentityCheck("oracle", ch.raw.real, float(o), {"oracle": o})
            row = _check_row(req, run, f"band{k}", chk, tol)
            row["passed"] = bool(chk.residual < tol and ch.value == o)
            rows.append(row)
    elif req.kind == "verify_bott":
        for k in ks:
            ch = run.band_chern(k)
            chk = IdentityCheck("bott_loop", run.bott(k).raw.real, ch.raw.real, {"band_chern": ch.raw.real})
            rows.append(_check_row(req, run, f"band{k}", chk, tol))
    elif req.kind == "verify_cor34":
        for k in ks:
            for w in _windows(req):
                wd, n = run.winding(k), run.edge_count(k, w)
                o = _orientation(w)
                chk = IdentityCheck("anomalous_edge", wd.raw.real, o * n.raw.real,
                                    {"window": w, "orientation": o, **_gap_meta(run, k)})
                rows.append(_check_row(req, run, f"gap{k}", chk, tol))
    else:
        if n_gaps < 2:
            raise GapViolationError(f"{req.kind} needs two gaps, found {n_gaps}")
        for k in ks:
            k1 = (k + 1) % n_gaps
            ch = run.band_chern(k)
            if req.kind == "verify_prop21":
                if k1 <= k:
                    # the identity needs theta < theta' inside one turn
                    continue
                w0, w1 = run.winding(k), run.winding(k1)
                chk = IdentityCheck("gap_difference", w1.raw.real - w0.raw.real, ch.raw.real,
                                    {"winding_theta": w0.raw.real, "winding_theta_p": w1.raw.real})
                rows.append(_check_row(req, run, f"band{k}", chk, tol))
            for w in _windows(req) if req.kind in ("verify_prop31", "verify_prop32") else ():
                if req.kind == "verify_prop32":
                    n0, n1 = run.edge_count(k, w), run.edge_count(k1, w)
                    o = _orientation(w)
                    chk = IdentityCheck("band_edge", ch.raw.real, o * (n0.raw.real - n1.raw.real),
                                        {"window": w, "orientation": o,
                                         "N_theta": n0.raw.real, "N_theta_p": n1.raw.real})
                else:
                    ew = run.edge_winding(k, w)
                    o = _orientation(w)
                    chk = IdentityCheck("exp_map", ch.raw.real, o * ew.raw.real,
                                        {"window": w, "orientation": o, "edge_winding": ew.raw.real})
                rows.append(_check_row(req, run, f"band{k}", chk, tol))
    return rows


def _summary(rows, key):
    """Mean and sample standard deviation of ``key`` over seeds, per (request, label, window)."""
    groups = {}
    for r in rows:
        g = (r["request"], r["label"], r.get("window"))
        groups.setdefault(g, []).append(r[key])
    out = []
    for (req, label, window), vals in groups.items():
        v = np.asarray(vals, dtype=float)
        out.append({"request": req, "label": label, "window": window, "statistic": key,
                     "mean": float(v.mean()), "std": float(v.std(ddof=1)) if len(v) > 1 else 0.0,
                     "n_seeds": len(v)})
    return out


def run_command(command, cfg: RunConfig, threads=1):
    seeds = cfg.ensemble.resolved()
    runs = [ModelRun(cfg, s) for s in seeds]
    requests = cfg.requests
    if command != "spectrum":
        if not requests:
            raise ConfigError("config key 'requests': empty request list")
        bad = [r.kind for r in requests if r.kind not in ALLOWED[command]]
        if bad:
            raise ConfigError(f"config key 'requests': {bad} not valid for '{command}'")

    def work(run):
        if command == "spectrum":
            return spectrum_rows(run)
        rows = []
        for req in requests:
            rows.extend(evaluate(req, run))
        return rows

    if threads > 1 and len(runs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_seed = list(pool.map(work, runs))
    else:
        per_seed = [work(r) for r in runs]
    rows = [r for chunk in per_seed for r in chunk]
    return rows


def spectrum_rows(run: ModelRun):
    rows = [{"phase": float(p), "edge_weight": None, "geometry": "torus", "seed": run.seed}
            for p in run.bulk.spectrum.phases]
    if run.cfg.output.cylinder_spectrum:
        s = run.edge.spectrum
        mask = ~deep_bulk_mask(s.geometry)
        weights = (np.abs(s.vectors[mask]) ** 2).sum(axis=0)
        rows.extend({"phase": float(p), "edge_weight": float(w), "geometry": "cylinder", "seed": run.seed}
                    for p, w in zip(s.phases, weights))
    return rows


def provenance():
    import scipy
    return {"library": "floquet_bbc", "version": __version__, "numpy": np.__version__,
            "scipy": scipy.__version__, "python": platform.python_version()}


def write_outputs(out_dir: Path, command, cfg: RunConfig, rows, elapsed):
    out_dir.mkdir(parents=True, exist_ok=True)
    if command == "spectrum":
        results = rows
    else:
        stat_key = "lhs" if command == "verify" or any("residual" in r for r in rows) else "raw_re"
        results = rows + _summary(rows, "residual" if stat_key == "lhs" else "raw_re")
    report = {"config": cfg.model_dump(mode="json"), "results": results, "provenance": provenance()}
    with open(out_dir / f"{command}_report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")
    # wall time lives apart so the report itself is byte-deterministic
    with open(out_dir / f"{command}_timing.json", "w", encoding="utf-8") as fh:
        json.dump({"wall_time_s": elapsed}, fh)
    if cfg.output.csv and rows:
        cols = []
        for r in rows:
            cols.extend(c for c in r if c not in cols)
        with open(out_dir / f"{command}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({c: _fmt(r.get(c)) for c in cols})
    return report


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def print_table(rows, stream=None):
    stream = stream or sys.stdout
    for r in rows:
        if "residual" in r:
            mark = "PASS" if r["passed"] else "FAIL"
            print(f"{mark} {r['request']:<14} {r['label']:<6} {r.get('window') or '':<5} seed={r['seed']} "
                  f"lhs={r['lhs']:+.6f} rhs={r['rhs']:+.6f} residual={r['residual']:.3e} tol={r['tolerance']}",
                  file=stream)
        elif "value" in r:
            print(f"{r['request']:<14} {r['label']:<6} seed={r['seed']} {r.get('window') or '':<5} "
                  f"raw={r['raw_re']:+.6f} value={r['value']:g}", file=stream)


def build_parser():
    p = argparse.ArgumentParser(prog="floquet-bbc", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="JSON run configuration")
        s.add_argument("--out", default=None, help="output directory (default: output.dir)")
        s.add_argument("--seeds", type=int, default=None, help="ensemble size from ensemble.base_seed")
        s.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="dot-path override, value parsed as JSON when possible")
        s.add_argument("--threads", type=int, default=1)
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    t0 = time.perf_counter()
    try:
        cfg = load_config(args.config, args.override, args.seeds)
        rows = run_command(args.command, cfg, max(1, args.threads))
    except (ConfigError, DomainError, UnsupportedGeometryError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PreconditionError as exc:
        print(f"numeric precondition failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    out = Path(args.out or cfg.output.dir)
    write_outputs(out, args.command, cfg, rows, time.perf_counter() - t0)
    if args.command != "spectrum":
        print_table(rows)
    if args.command in ("verify", "oracle") and not all(r.get("passed", True) for r in rows):
        return EXIT_VERIFY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
