"""Experiment orchestration: manifests, subcommands, and deterministic output.

Every run is described by a JSON manifest with five sections::

    {
      "lattice":   {"d": 2, "s": 1, "side_d": 64, "side_s": 4,
                    "boundary": "periodic,periodic", "variant": "nearest_neighbor"},
      "params":    {"p": 0.45, "q": 0.2},            # or "p_grid" / "q_grid" lists
      "seeds":     {"master_seed": 0, "replicas": 10},
      "estimator": {...},                            # subcommand-specific knobs
      "output":    {"dir": "out", "prefix": "run"}
    }

Precedence, highest first: command-line flag, manifest field, environment
(``ANISOPERC_OUT`` for the output directory), built-in default.  The fully
resolved manifest is snapshotted next to the results so that any output file
can be regenerated byte-for-byte from the snapshot alone.  To keep that
guarantee the writers are deterministic: no timestamps, no machine info,
canonical JSON (sorted keys), and shortest round-trip float formatting.
Wall-clock durations are reported on stderr only, never inside data files.
The worker count is an execution knob and does not influence output bytes.

Subcommands
-----------
sample       draw configurations on a (p, q) grid, emit cluster statistics
explore      run coupled explorations, emit outcome rows and a summary
qc-scan      certified bisection for the critical curve over a p grid
fit          weighted log-log fit of the crossover exponent from a curve file
check        deterministic, RNG-free arithmetic self-checks (exit 1 on failure)
equivalence  multigraph-vs-plain law comparison on a small box

Exit codes: 0 success, 1 invariant or check failure, 2 usage error.
"""

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .constants import PC_BOND, pc_default
from .lattice import LatticeSpec
from .sampling import (Params, SeedPlan, effective_qbar, sample_configuration,
                       verify_domination_chain)
from .clusters import cluster_stats
from .coupling import explore_coupled, verify_trace, equivalence_check
from .estimators import (CurvePoint, estimate_qc_bisect, fit_crossover_exponent,
                         bound_check, default_workers)

OUT_ENV_VAR = "ANISOPERC_OUT"
SCHEMA_VERSION = 1

SAMPLE_CSV_HEADER = ["kind", "p", "q", "replica", "stream", "origin_size",
                     "max_size", "n_components", "spans"]
EXPLORE_CSV_HEADER = ["kind", "run", "stream", "outcome", "n_steps",
                      "eta_open", "eta_total", "max_height", "verify_ok"]
QC_CSV_HEADER = ["kind", "p", "pc_minus_p", "qc", "qc_lo", "qc_hi", "n_total",
                 "bound", "bound_vacuous", "bound_holds", "flags"]


class ManifestError(ValueError):
    """Invalid manifest content; the message names the offending field path."""


# --------------------------------------------------------------------------
# manifest plumbing


def _require(mapping, key, typ, path):
    if key not in mapping:
        raise ManifestError(f"{path}.{key}: missing required field")
    value = mapping[key]
    if typ is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, typ):
        raise ManifestError(f"{path}.{key}: expected {typ.__name__}, "
                            f"got {type(value).__name__}")
    return value


@dataclass
class ExperimentManifest:
    """Complete, self-contained description of one experiment run."""

    lattice: dict
    params: dict
    seeds: dict
    estimator: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    version: str = __version__
    schema: int = SCHEMA_VERSION

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentManifest":
        if not isinstance(raw, dict):
            raise ManifestError("manifest: expected a JSON object at top level")
        known = {"lattice", "params", "seeds", "estimator", "output",
                 "version", "schema"}
        for key in raw:
            if key not in known:
                raise ManifestError(f"{key}: unknown manifest section")
        return cls(lattice=dict(raw.get("lattice", {})),
                   params=dict(raw.get("params", {})),
                   seeds=dict(raw.get("seeds", {})),
                   estimator=dict(raw.get("estimator", {})),
                   output=dict(raw.get("output", {})),
                   version=str(raw.get("version", __version__)),
                   schema=int(raw.get("schema", SCHEMA_VERSION)))

    @classmethod
    def from_file(cls, path: str) -> "ExperimentManifest":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ManifestError(f"manifest: cannot read {path}: {exc}")
        except json.JSONDecodeError as exc:
            raise ManifestError(f"manifest: {path} is not valid JSON: {exc}")
        return cls.from_dict(raw)

    # --- resolution helpers -------------------------------------------------

    def spec(self) -> LatticeSpec:
        if not self.lattice:
            raise ManifestError("lattice: section is required")
        try:
            return LatticeSpec.from_config(self.lattice)
        except (ValueError, TypeError, KeyError) as exc:
            raise ManifestError(f"lattice: {exc}")

    def seed_plan(self) -> SeedPlan:
        seed = _require(self.seeds, "master_seed", int, "seeds")
        replicas = self.seeds.get("replicas", 1)
        if not isinstance(replicas, int) or replicas < 1:
            raise ManifestError("seeds.replicas: expected a positive integer")
        return SeedPlan(master_seed=seed, replicas=replicas)

    def param_grid(self) -> list:
        """Expand params into an ordered [(p, q), ...] grid, p outer."""
        sec = self.params
        if "p_grid" in sec:
            ps = [float(v) for v in sec["p_grid"]]
        elif "p" in sec:
            ps = [float(sec["p"])]
        else:
            raise ManifestError("params.p: missing (or provide params.p_grid)")
        if "q_grid" in sec:
            qs = [float(v) for v in sec["q_grid"]]
        elif "q" in sec:
            qs = [float(sec["q"])]
        else:
            raise ManifestError("params.q: missing (or provide params.q_grid)")
        for name, vals in (("p", ps), ("q", qs)):
            for v in vals:
                if not 0.0 <= v <= 1.0:
                    raise ManifestError(f"params.{name}: {v} outside [0, 1]")
        return [(p, q) for p in ps for q in qs]

    def to_dict(self) -> dict:
        # output.dir is execution context (like --workers), not experiment
        # identity: the snapshot must not depend on where it was written.
        output = {k: v for k, v in self.output.items() if k != "dir"}
        return {"schema": self.schema, "version": self.version,
                "lattice": self.lattice, "params": self.params,
                "seeds": self.seeds, "estimator": self.estimator,
                "output": output}

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2,
                          allow_nan=False) + "\n"

    def digest(self) -> str:
        """Content hash of the resolved manifest (records reference it)."""
        compact = json.dumps(self.to_dict(), sort_keys=True,
                             separators=(",", ":"), allow_nan=False)
        return hashlib.sha256(compact.encode()).hexdigest()[:16]


@dataclass
class ResultRecord:
    """One emitted result.  wall_clock stays in memory / on stderr only;
    serializing it would break byte-identical regeneration."""

    manifest_digest: str
    kind: str                # theta | chi | qc | fit | coupling-trace | check
    replica: int
    payload: dict
    wall_clock: float = 0.0

    def to_json_dict(self) -> dict:
        return {"manifest": self.manifest_digest, "kind": self.kind,
                "replica": self.replica, "payload": self.payload}


def resolve_manifest(args, defaults: dict) -> ExperimentManifest:
    """Build the effective manifest: flags > manifest file > defaults."""
    if getattr(args, "manifest", None):
        man = ExperimentManifest.from_file(args.manifest)
    else:
        man = ExperimentManifest.from_dict(defaults)
    # Defaults fill only wholly-missing sections; a section present in the
    # manifest is taken as-is (field-level fallbacks live in the drivers).
    for section, values in defaults.items():
        if isinstance(values, dict) and not getattr(man, section):
            setattr(man, section, dict(values))
    if getattr(args, "seed", None) is not None:
        man.seeds["master_seed"] = args.seed
    if getattr(args, "out", None):
        man.output["dir"] = args.out
    elif not man.output.get("dir"):
        man.output["dir"] = os.environ.get(OUT_ENV_VAR, "anisoperc-out")
    man.output.setdefault("prefix", "")
    return man


# --------------------------------------------------------------------------
# deterministic writers


def _fmt(value) -> str:
    """Stable scalar formatting: shortest round-trip floats, plain ints."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _jsonify(obj):
    """Convert numpy scalars/arrays and tuples for canonical JSON output."""
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def write_csv(path: str, header: list, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_jsonl(path: str, records: list) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(_jsonify(rec), sort_keys=True,
                                separators=(",", ":"), allow_nan=False))
            fh.write("\n")


def write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(_jsonify(obj), sort_keys=True, indent=2,
                            allow_nan=False))
        fh.write("\n")


def _prepare_outdir(man: ExperimentManifest) -> str:
    out_dir = man.output["dir"]
    os.makedirs(out_dir, exist_ok=True)
    prefix = man.output.get("prefix", "")
    with open(os.path.join(out_dir, prefix + "manifest.json"), "w") as fh:
        fh.write(man.canonical_json())
    return out_dir


def _path(man: ExperimentManifest, out_dir: str, name: str) -> str:
    return os.path.join(out_dir, man.output.get("prefix", "") + name)


# --------------------------------------------------------------------------
# subcommand drivers


def run_sample(man: ExperimentManifest) -> list:
    """Draw configurations over the parameter grid; one row per replica."""
    spec = man.spec()
    plan = man.seed_plan()
    grid = man.param_grid()
    digest = man.digest()
    records = []
    stream = 0
    for p, q in grid:
        params = Params.for_spec(p, q, spec)
        for replica in range(plan.replicas):
            t0 = time.perf_counter()
            config = sample_configuration(spec, params, plan.master_seed,
                                          stream_id=stream)
            stats = cluster_stats(config)
            payload = {"p": p, "q": q, "stream": stream,
                       "origin_size": stats.origin_size,
                       "max_size": stats.max_size,
                       "n_components": sum(stats.histogram.values()),
                       "spans": list(stats.spanning)}
            records.append(ResultRecord(digest, "theta", replica, payload,
                                        time.perf_counter() - t0))
            stream += 1
    return records


def _sample_rows(records: list) -> list:
    rows = []
    for rec in records:
        pl = rec.payload
        spans = "|".join(str(int(v)) for v in pl["spans"])
        rows.append(["theta", pl["p"], pl["q"], rec.replica, pl["stream"],
                     pl["origin_size"], pl["max_size"], pl["n_components"],
                     spans])
    return rows


def run_explore(man: ExperimentManifest, want_trace: bool) -> tuple:
    """Run a campaign of coupled explorations; verify every trace."""
    spec = man.spec()
    if spec.s != 1:
        raise ManifestError("lattice.s: explore requires s = 1")
    plan = man.seed_plan()
    grid = man.param_grid()
    if len(grid) != 1:
        raise ManifestError("params: explore takes a single (p, q) point")
    p, q = grid[0]
    params = Params.for_spec(p, q, spec)
    est = man.estimator
    n_runs = int(est.get("n_runs", plan.replicas))
    step_budget = int(est.get("step_budget", 10_000))
    height_window = est.get("height_window")
    digest = man.digest()
    records = []
    traces = []
    for run in range(n_runs):
        t0 = time.perf_counter()
        result = explore_coupled(spec, params, plan.master_seed,
                                 step_budget=step_budget, stream_id=run,
                                 height_window=height_window)
        report = verify_trace(result.state)
        state = result.state
        eta_open = sum(1 for v in state.eta.values() if v)
        max_h = max(state.heights.values()) if state.heights else 0
        payload = {"run": run, "stream": run, "outcome": result.outcome,
                   "n_steps": state.n, "eta_open": eta_open,
                   "eta_total": len(state.eta), "max_height": max_h,
                   "verify_ok": report.ok}
        records.append(ResultRecord(digest, "coupling-trace", run, payload,
                                    time.perf_counter() - t0))
        if want_trace:
            for step in state.trace:
                entry = {"run": run}
                entry.update(step._asdict())
                if entry.get("hook") is not None:
                    entry["hook"] = entry["hook"]._asdict()
                traces.append(entry)
    return records, traces


def _explore_rows(records: list) -> list:
    rows = []
    for rec in records:
        pl = rec.payload
        rows.append(["coupling", pl["run"], pl["stream"], pl["outcome"],
                     pl["n_steps"], pl["eta_open"], pl["eta_total"],
                     pl["max_height"], pl["verify_ok"]])
    return rows


def _explore_summary(man: ExperimentManifest, records: list) -> dict:
    outcomes = {}
    for rec in records:
        key = rec.payload["outcome"]
        outcomes[key] = outcomes.get(key, 0) + 1
    eta_open = sum(r.payload["eta_open"] for r in records)
    eta_total = sum(r.payload["eta_total"] for r in records)
    failures = sum(1 for r in records if not r.payload["verify_ok"])
    return {"kind": "coupling-summary", "n_runs": len(records),
            "outcomes": dict(sorted(outcomes.items())),
            "eta_open_fraction": (eta_open / eta_total) if eta_total else None,
            "verify_failures": failures}


def run_qc_scan(man: ExperimentManifest, workers: int) -> list:
    """Certified bisection per grid p; theorem-bound comparison per point."""
    spec = man.spec()
    plan = man.seed_plan()
    est = man.estimator
    sec = man.params
    if "p_grid" in sec:
        ps = [float(v) for v in sec["p_grid"]]
    elif "p" in sec:
        ps = [float(sec["p"])]
    else:
        raise ManifestError("params.p: qc-scan needs p or p_grid")
    d = spec.d
    p_c = float(est.get("p_c", pc_default(d)))
    surrogate = est.get("surrogate", "spanning")
    axis = int(est.get("axis", 0))
    n_per_probe = int(est.get("n_per_probe", 400))
    tol = float(est.get("tol", 1e-3))
    digest = man.digest()
    records = []
    for index, p in enumerate(ps):
        t0 = time.perf_counter()
        if p >= p_c:
            # Flagged, not fatal: the curve is only defined below p_c.
            payload = {"p": p, "pc_minus_p": p_c - p, "qc": None,
                       "ci_lo": None, "ci_hi": None, "n_total": 0,
                       "flags": ["p_at_or_above_pc"], "bound": None,
                       "trace": [], "point": None}
            records.append(ResultRecord(digest, "qc", index, payload, 0.0))
            continue
        point = estimate_qc_bisect(
            spec, p, n_per_probe=n_per_probe, tol=tol,
            seed=plan.master_seed, surrogate=surrogate, axis=axis,
            n_cap_factor=int(est.get("n_cap_factor", 16)),
            ci_level=float(est.get("ci_level", 0.95)), workers=workers)
        bound = bound_check(point, d, p_c)
        payload = {"p": p, "pc_minus_p": p_c - p, "qc": point.qc,
                   "ci_lo": point.ci_lo, "ci_hi": point.ci_hi,
                   "n_total": point.n_total, "flags": list(point.flags),
                   "bound": {"value": bound.bound, "raw": bound.raw_bound,
                             "vacuous": bound.vacuous, "holds": bound.holds},
                   "trace": list(point.trace),
                   "point": _curve_point_dict(point)}
        records.append(ResultRecord(digest, "qc", index, payload,
                                    time.perf_counter() - t0))
    return records


def _curve_point_dict(point: CurvePoint) -> dict:
    return {"p": point.p, "qc": point.qc, "ci_lo": point.ci_lo,
            "ci_hi": point.ci_hi, "L": point.L, "n_total": point.n_total,
            "surrogate": point.surrogate, "axis": point.axis,
            "seed": point.seed, "ci_level": point.ci_level,
            "flags": list(point.flags), "spec": dict(point.spec_config)}


def _qc_rows(records: list) -> list:
    rows = []
    for rec in records:
        pl = rec.payload
        bound = pl["bound"]
        rows.append(["qc", pl["p"], pl["pc_minus_p"],
                     "" if pl["qc"] is None else pl["qc"],
                     "" if pl["ci_lo"] is None else pl["ci_lo"],
                     "" if pl["ci_hi"] is None else pl["ci_hi"],
                     pl["n_total"],
                     "" if bound is None else bound["value"],
                     "" if bound is None else bound["vacuous"],
                     "" if bound is None else bound["holds"],
                     "|".join(pl["flags"])])
    return rows


def load_curve_csv(path: str) -> list:
    """Read qc-scan CSV rows back into CurvePoints (skips flagged gaps)."""
    points = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in ("p", "qc", "qc_lo", "qc_hi")
                   if c not in (reader.fieldnames or [])]
        if missing:
            raise ManifestError(
                f"curve file {path}: missing columns {missing}")
        for row in reader:
            if row["qc"] == "":
                continue
            flags = [f for f in row.get("flags", "").split("|") if f]
            points.append(CurvePoint(
                p=float(row["p"]), qc=float(row["qc"]),
                ci_lo=float(row["qc_lo"]), ci_hi=float(row["qc_hi"]),
                L=0, n_total=int(row.get("n_total") or 0), trace=[],
                surrogate="", axis=0, seed=0, ci_level=0.95, flags=flags))
    return points


def run_fit(man: ExperimentManifest, curve_path: Optional[str],
            pc_flag: Optional[float]) -> dict:
    """Fit the crossover exponent from a curve file or manifest points."""
    est = man.estimator
    path = curve_path or est.get("curve")
    if path:
        points = load_curve_csv(path)
    elif est.get("points"):
        points = [CurvePoint(p=float(e["p"]), qc=float(e["qc"]),
                             ci_lo=float(e.get("ci_lo", e["qc"])),
                             ci_hi=float(e.get("ci_hi", e["qc"])),
                             L=0, n_total=0, trace=[], surrogate="", axis=0,
                             seed=0, ci_level=0.95)
                  for e in est["points"]]
    else:
        raise ManifestError("estimator.curve: fit needs --curve PATH or "
                            "estimator.points in the manifest")
    d = int(man.lattice.get("d", 2))
    p_c = pc_flag if pc_flag is not None else float(est.get("p_c",
                                                            pc_default(d)))
    fit = fit_crossover_exponent(points, p_c)
    return {"kind": "fit", "psi_hat": fit.psi_hat, "intercept": fit.intercept,
            "cov": fit.cov, "p_c": p_c, "n_used": fit.n_used,
            "p_grid": fit.p_grid, "refused": fit.refused,
            "residuals": fit.residuals, "notes": fit.notes}


def run_equivalence(man: ExperimentManifest) -> dict:
    spec = man.spec()
    plan = man.seed_plan()
    grid = man.param_grid()
    if len(grid) != 1:
        raise ManifestError("params: equivalence takes a single (p, q) point")
    p, q = grid[0]
    params = Params.for_spec(p, q, spec)
    n_samples = int(man.estimator.get("n_samples", 100_000))
    report = equivalence_check(spec, params, n_samples,
                               seed=plan.master_seed)
    return {"kind": "equivalence", "mode": report.mode,
            "n_samples": report.n_samples, "tv": report.tv,
            "chi2": report.chi2, "dof": report.dof,
            "noise_floor": report.noise_floor,
            "law_exact": {str(k): v for k, v in sorted(report.law_exact.items())},
            "hist_mc": {str(k): v for k, v in sorted(report.hist_mc.items())},
            "flags": list(report.flags)}


# --------------------------------------------------------------------------
# the RNG-free check suite


def _check_qbar_roundtrip() -> tuple:
    worst = 0.0
    for i in range(101):
        q = i / 100.0
        for m in (2, 4, 6, 8, 12):
            qbar = effective_qbar(q, m)
            back = -np.expm1(m * np.log1p(-qbar)) if qbar < 1.0 else 1.0
            worst = max(worst, abs(back - q))
            if not 0.0 <= qbar <= q + 1e-15:
                return False, f"qbar({q}, {m}) = {qbar} outside [0, q]"
    ok = worst <= 1e-12
    return ok, f"max |roundtrip - q| = {worst:.3e} over 101 q x 5 m values"

def _check_pc_table(pc_table: dict) -> tuple:
    dims = sorted(pc_table)
    for d in dims:
        pc = pc_table[d]
        if not 0.0 < pc <= 1.0:
            return False, f"p_c({d}) = {pc} is not a probability"
        if d >= 2 and pc <= 1.0 / (2 * d):
            return False, (f"p_c({d}) = {pc} <= 1/(2d) = {1.0 / (2 * d)}; "
                           "domination window is empty")
    for lo, hi in zip(dims, dims[1:]):
        if pc_table[hi] >= pc_table[lo]:
            return False, (f"p_c not strictly decreasing: "
                           f"p_c({hi}) = {pc_table[hi]} >= "
                           f"p_c({lo}) = {pc_table[lo]}")
    return True, f"{len(dims)} entries, monotone, above 1/(2d)"


def _check_chain(d: int, p_c: float, n_grid: int = 1000) -> tuple:
    lo = 1.0 / (2 * d)
    if p_c <= lo:
        return False, f"window (1/(2d), p_c) = ({lo}, {p_c}) is empty"
    checked = 0
    for i in range(1, n_grid + 1):
        p = lo + (p_c - lo) * i / (n_grid + 1)
        q = 8 * d * d * (p_c - p)
        if q > 1.0:
            continue
        report = verify_domination_chain(d, p, q, p_c=p_c)
        if not report.holds:
            return False, (f"chain fails at p = {p!r}: r = {report.r!r}, "
                           f"needs > {report.lower_bound!r} and >= {p_c!r}")
        checked += 1
    if checked == 0:
        return False, "no grid point satisfies 8 d^2 (p_c - p) <= 1"
    return True, f"{checked} grid points, r > p + q/(8d^2) and r >= p_c"


def run_checks(pc_overrides: Optional[dict] = None) -> dict:
    """Deterministic arithmetic self-checks; no RNG, sub-second."""
    pc_table = dict(PC_BOND)
    if pc_overrides:
        pc_table.update(pc_overrides)
    items = []
    ok, detail = _check_qbar_roundtrip()
    items.append({"name": "qbar-roundtrip", "ok": ok, "detail": detail})
    ok, detail = _check_pc_table(pc_table)
    items.append({"name": "pc-table", "ok": ok, "detail": detail})
    for d in range(2, 9):
        ok, detail = _check_chain(d, pc_table[d])
        items.append({"name": f"chain[d={d}]", "ok": ok, "detail": detail})
    return {"kind": "check", "ok": all(item["ok"] for item in items),
            "items": items}


# --------------------------------------------------------------------------
# argument parsing and dispatch


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anisoperc",
        description="Anisotropic bond percolation experiments.")
    parser.add_argument("--version", action="version",
                        version=f"anisoperc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, workers=True):
        sp.add_argument("--manifest", help="path to a JSON manifest")
        sp.add_argument("--seed", type=int,
                        help="override seeds.master_seed")
        sp.add_argument("--out", help="output directory "
                        f"(or ${OUT_ENV_VAR}, or manifest output.dir)")
        if workers:
            sp.add_argument("--workers", type=int, default=None,
                            help="process count; never affects output bytes")

    sp = sub.add_parser("sample", help="draw configurations, emit "
                        "cluster statistics")
    common(sp)
    sp.add_argument("--n", type=int, help="replicas per grid point")

    sp = sub.add_parser("explore", help="run coupled explorations")
    common(sp)
    sp.add_argument("--n-runs", type=int, help="number of explorations")
    sp.add_argument("--budget", type=int, help="step budget per run")
    sp.add_argument("--trace", action="store_true",
                    help="write per-step records to trace.jsonl")

    sp = sub.add_parser("qc-scan", help="estimate the critical curve "
                        "over a p grid")
    common(sp)

    sp = sub.add_parser("fit", help="fit the crossover exponent from "
                        "a curve file")
    common(sp, workers=False)
    sp.add_argument("--curve", help="qc-scan CSV to read points from")
    sp.add_argument("--pc", type=float, help="critical point p_c to fit "
                    "against")

    sp = sub.add_parser("check", help="deterministic arithmetic self-checks")
    sp.add_argument("--pc", action="append", default=[], metavar="D=VALUE",
                    help="override p_c for dimension D (repeatable; "
                    "for fault injection)")
    sp.add_argument("--out", help="also write check.json here")

    sp = sub.add_parser("equivalence", help="multigraph vs plain-graph "
                        "law comparison")
    common(sp, workers=False)
    sp.add_argument("--n", type=int, help="Monte Carlo sample count")
    return parser


DEFAULTS = {
    "sample": {
        "lattice": {"d": 2, "s": 1, "side_d": 16, "side_s": 4,
                    "boundary": "periodic,periodic"},
        "params": {"p": 0.45, "q": 0.2},
        "seeds": {"master_seed": 0, "replicas": 10},
        "output": {"prefix": ""},
    },
    "explore": {
        "lattice": {"d": 2, "s": 1, "side_d": 64, "side_s": 2,
                    "boundary": "free,periodic"},
        "params": {"p": 0.45, "q": 0.2},
        "seeds": {"master_seed": 0, "replicas": 100},
        "estimator": {"step_budget": 10000},
        "output": {"prefix": ""},
    },
    "qc-scan": {
        "lattice": {"d": 2, "s": 1, "side_d": 32, "side_s": 4,
                    "boundary": "periodic,periodic"},
        "params": {"p_grid": [0.35, 0.40, 0.45]},
        "seeds": {"master_seed": 0, "replicas": 1},
        "estimator": {"surrogate": "wrapping", "axis": 2,
                      "n_per_probe": 200, "tol": 1e-3, "p_c": 0.5},
        "output": {"prefix": ""},
    },
    "fit": {
        "lattice": {"d": 2},
        "params": {},
        "seeds": {"master_seed": 0},
        "output": {"prefix": ""},
    },
    "equivalence": {
        "lattice": {"d": 1, "s": 1, "side_d": 2, "side_s": 2,
                    "boundary": "free,free"},
        "params": {"p": 0.5, "q": 0.3},
        "seeds": {"master_seed": 0},
        "estimator": {"n_samples": 100000},
        "output": {"prefix": ""},
    },
}


def _workers(args) -> int:
    w = getattr(args, "workers", None)
    return default_workers() if w is None else max(1, w)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except ManifestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    if args.command == "check":
        overrides = {}
        for item in args.pc:
            try:
                dim, _, value = item.partition("=")
                overrides[int(dim)] = float(value)
            except ValueError:
                raise ManifestError(f"--pc {item}: expected D=VALUE")
        report = run_checks(overrides)
        for item in report["items"]:
            status = "ok" if item["ok"] else "FAIL"
            print(f"[{status}] {item['name']}: {item['detail']}")
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            write_json(os.path.join(args.out, "check.json"), report)
        print("all checks passed" if report["ok"] else "CHECK FAILURES",
              file=sys.stderr)
        return 0 if report["ok"] else 1

    man = resolve_manifest(args, DEFAULTS[args.command])

    if args.command == "sample":
        if args.n is not None:
            man.seeds["replicas"] = args.n
        out_dir = _prepare_outdir(man)
        t0 = time.perf_counter()
        records = run_sample(man)
        write_csv(_path(man, out_dir, "sample.csv"), SAMPLE_CSV_HEADER,
                  _sample_rows(records))
        print(f"sample: {len(records)} rows -> "
              f"{_path(man, out_dir, 'sample.csv')} "
              f"({time.perf_counter() - t0:.2f}s)", file=sys.stderr)
        return 0

    if args.command == "explore":
        if args.n_runs is not None:
            man.estimator["n_runs"] = args.n_runs
        if args.budget is not None:
            man.estimator["step_budget"] = args.budget
        out_dir = _prepare_outdir(man)
        t0 = time.perf_counter()
        records, traces = run_explore(man, args.trace)
        write_csv(_path(man, out_dir, "explore.csv"), EXPLORE_CSV_HEADER,
                  _explore_rows(records))
        summary = _explore_summary(man, records)
        write_json(_path(man, out_dir, "explore_summary.json"), summary)
        if args.trace:
            write_jsonl(_path(man, out_dir, "trace.jsonl"), traces)
        failures = summary["verify_failures"]
        print(f"explore: {len(records)} runs, outcomes "
              f"{summary['outcomes']}, {failures} verify failures "
              f"({time.perf_counter() - t0:.2f}s)", file=sys.stderr)
        return 0 if failures == 0 else 1

    if args.command == "qc-scan":
        out_dir = _prepare_outdir(man)
        t0 = time.perf_counter()
        records = run_qc_scan(man, _workers(args))
        write_csv(_path(man, out_dir, "curve.csv"), QC_CSV_HEADER,
                  _qc_rows(records))
        write_jsonl(_path(man, out_dir, "curve.jsonl"),
                    [rec.to_json_dict() for rec in records])
        print(f"qc-scan: {len(records)} points -> "
              f"{_path(man, out_dir, 'curve.csv')} "
              f"({time.perf_counter() - t0:.2f}s)", file=sys.stderr)
        return 0

    if args.command == "fit":
        result = run_fit(man, args.curve, args.pc)
        out_dir = _prepare_outdir(man)
        write_json(_path(man, out_dir, "fit.json"), result)
        print(f"fit: psi_hat = {result['psi_hat']:.4f} "
              f"(n_used = {result['n_used']}, "
              f"refused = {len(result['refused'])}) -> "
              f"{_path(man, out_dir, 'fit.json')}", file=sys.stderr)
        return 0

    if args.command == "equivalence":
        if args.n is not None:
            man.estimator["n_samples"] = args.n
        out_dir = _prepare_outdir(man)
        t0 = time.perf_counter()
        result = run_equivalence(man)
        write_json(_path(man, out_dir, "equivalence.json"), result)
        print(f"equivalence[{result['mode']}]: tv = {result['tv']:.5f} "
              f"(noise floor {result['noise_floor']:.5f}) "
              f"({time.perf_counter() - t0:.2f}s)", file=sys.stderr)
        return 0

    raise ManifestError(f"unknown command {args.command}")  # pragma: no cover


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
