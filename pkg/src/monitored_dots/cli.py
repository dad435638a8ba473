"""Command-line experiment harness.

Every subcommand builds an :class:`ExperimentSpec`, runs it with
:func:`run` and writes data files plus ``manifest.json`` into the output
directory. Trajectory ``i`` always uses random stream ``i`` of the experiment
seed, so results do not depend on the number of worker processes.

Exit codes: 0 success, 2 usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import ast
import configparser
import csv
import hashlib
import json
import math
import os
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__, kernels
from .born import BetaLaw, beta_cdf, born_ks_test, log_born_cdf
from .circuits import CircuitConfig, Model, TrajectoryRecord, run_trajectory
from .entropy import renyi_integer_moment_exact, renyi_nonfluctuating, renyi_series
from .numerics import DomainError, NumericalError, RngStream
from .spectral import (
    lyapunov_exact_projective,
    lyapunov_fit,
    purification_fit,
)
from .weak import (
    compute_gamma,
    fp_exact_sample,
    langevin_ensemble,
    lyapunov_exact_weak,
    solve_integral_equation,
    uniform_profile_distance,
)

__all__ = ["ExperimentSpec", "ResultManifest", "run", "report", "main", "ENV_OUT"]

ENV_OUT = "MONITORED_DOTS_OUT"
EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 2, 3

COMMANDS = ("simulate", "lyapunov", "born", "entropy", "fp-sample", "fp-langevin", "ie-solve")
CIRCUIT_COMMANDS = ("simulate", "lyapunov", "born", "entropy")
_CIRCUIT_KEYS = ("L", "p", "model", "epsilon", "t_max", "n_traj", "outcomes", "record_every", "track_born")


class UsageError(ValueError):
    """Invalid experiment specification or command line."""


class TrajectoryFailure(NumericalError):
    """One or more trajectories raised during the parallel phase."""

    def __init__(self, failures: Dict[int, str]):
        self.failures = failures
        ids = ", ".join(str(i) for i in sorted(failures))
        detail = "; ".join(f"{i}: {failures[i]}" for i in sorted(failures)[:5])
        super().__init__(f"trajectories failed: [{ids}] ({detail})")


@dataclass
class ExperimentSpec:
    """Declarative description of one experiment.

    Attributes:
        name: Experiment name, used in file names.
        command: One of the analysis subcommands.
        params: Model or analysis parameters.
        outputs: Requested artifacts; empty selects the command's defaults.
        output_dir: Directory receiving data files and the manifest.
        format: ``"csv"`` or ``"json"``.
        seed: Experiment seed.
        jobs: Worker processes (does not affect results).
    """

    name: str
    command: str
    params: Dict[str, object] = field(default_factory=dict)
    outputs: List[str] = field(default_factory=list)
    output_dir: str = "."
    format: str = "csv"
    seed: int = 0
    jobs: int = 1

    def validate(self) -> None:
        if not self.name:
            raise UsageError("experiment name must be non-empty")
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        if self.format not in ("csv", "json"):
            raise UsageError("format must be csv or json")
        if self.seed < 0 or self.seed >= 2**64:
            raise UsageError("seed must be a 64-bit unsigned integer")
        if self.jobs < 1:
            raise UsageError("jobs must be positive")
        allowed = {
            "simulate": {"spectra", "born"},
            "lyapunov": {"spectra", "lyapunov", "purification"},
            "born": {"born", "ks"},
            "entropy": {"entropy"},
            "fp-sample": {"fp"},
            "fp-langevin": {"fp"},
            "ie-solve": {"iesolve"},
        }[self.command]
        bad = set(self.outputs) - allowed
        if bad:
            raise UsageError(f"outputs {sorted(bad)} are not valid for {self.command}")

    def digest(self) -> str:
        """SHA-256 of the fields that determine the numeric results."""
        core = {k: v for k, v in asdict(self).items() if k not in ("output_dir", "jobs")}
        blob = json.dumps(core, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass
class ResultManifest:
    """Record of one run: provenance, produced files and their row counts."""

    name: str
    command: str
    spec_hash: str
    seed: int
    provenance: str
    files: Dict[str, int]
    wall_time: float
    output_dir: str
    summary: Dict[str, object] = field(default_factory=dict)

    def write(self) -> Path:
        path = Path(self.output_dir) / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True, default=_json_default))
        return path

    @classmethod
    def load(cls, path) -> "ResultManifest":
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.json"
        if not path.exists():
            raise FileNotFoundError(f"manifest not found: {path}")
        data = json.loads(path.read_text())
        return cls(**data)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _provenance() -> str:
    rev = "unknown"
    try:
        rev = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        ).stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        pass
    return f"monitored_dots {__version__} ({rev}); kernels={kernels.BACKEND}; numpy {np.__version__}"


# --- output helpers ---------------------------------------------------------


def _write_table(out_dir: Path, stem: str, header: Sequence[str], rows: Sequence[Sequence], fmt: str) -> tuple:
    if fmt == "csv":
        path = out_dir / f"{stem}.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([_cell(v) for v in r])
    else:
        path = out_dir / f"{stem}.json"
        recs = [{h: _plain(v) for h, v in zip(header, r)} for r in rows]
        path.write_text(json.dumps(recs, indent=1))
    return path.name, len(rows)


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def _plain(v):
    if isinstance(v, np.floating):
        v = float(v)
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, np.integer):
        return int(v)
    return v


# --- parallel trajectory execution -----------------------------------------


def _run_one(args):
    cfg, i = args
    try:
        return i, run_trajectory(cfg, i), None
    except Exception as exc:  # noqa: BLE001 -- reported with the trajectory id
        return i, None, f"{type(exc).__name__}: {exc}"


def run_trajectories(cfg: CircuitConfig, jobs: int = 1) -> List[TrajectoryRecord]:
    """Run ``cfg.n_traj`` trajectories; trajectory ``i`` uses stream ``i``.

    Raises:
        TrajectoryFailure: naming every trajectory that raised.
    """
    tasks = [(cfg, i) for i in range(cfg.n_traj)]
    if jobs > 1 and cfg.n_traj > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, tasks, chunksize=max(1, cfg.n_traj // (4 * jobs))))
    else:
        results = [_run_one(t) for t in tasks]
    failures = {i: err for i, _, err in results if err is not None}
    if failures:
        raise TrajectoryFailure(failures)
    return [rec for _, rec, _ in sorted(results, key=lambda r: r[0])]


# --- per-command runners ----------------------------------------------------


def _circuit_config(spec: ExperimentSpec) -> CircuitConfig:
    kw = {k: spec.params[k] for k in _CIRCUIT_KEYS if k in spec.params}
    if "L" not in kw or "p" not in kw:
        raise UsageError("circuit experiments need L and p")
    kw["model"] = Model.parse(kw.get("model", "II"))
    for k in ("L", "t_max", "n_traj", "record_every"):
        if k in kw:
            kw[k] = int(kw[k])
    for k in ("p", "epsilon"):
        if k in kw:
            kw[k] = float(kw[k])
    if "track_born" in kw:
        kw["track_born"] = _as_bool(kw["track_born"])
    return CircuitConfig(seed=spec.seed, **kw)


def _as_bool(v) -> bool:
    if isinstance(v, str):
        return v.strip().lower() in ("1", "true", "yes", "on")
    return bool(v)


def _spectra_rows(records) -> list:
    rows = []
    for rec in records:
        for sp in rec.spectra:
            for n, v in enumerate(sp.log_sigma, start=1):
                rows.append((rec.stream_id, sp.t, n, float(v)))
    return rows


def _simulate(spec, out_dir, files, summary, want) -> list:
    cfg = _circuit_config(spec)
    records = run_trajectories(cfg, spec.jobs)
    if "spectra" in want:
        header = ("trajectory_id", "t", "mode_index", "value")
        f, n = _write_table(out_dir, "spectra", header, _spectra_rows(records), spec.format)
        files[f] = n
    if "born" in want and records[0].born_log_factors is not None:
        rows = [
            (rec.stream_id, t, float(v))
            for rec in records
            for t, v in enumerate(rec.born_log_factors, start=1)
        ]
        f, n = _write_table(out_dir, "born_factors", ("trajectory_id", "t", "log_factor"), rows, spec.format)
        files[f] = n
    if cfg.model is Model.MODEL_I:
        stops = [rec.stopping_time for rec in records if rec.stopping_time is not None]
        summary["rank_collapse_fraction"] = len(stops) / len(records)
        if stops:
            summary["mean_stopping_time"] = float(np.mean(stops))
    summary["n_traj"] = len(records)
    return records


def _run_simulate(spec, out_dir, files, summary):
    _simulate(spec, out_dir, files, summary, set(spec.outputs or ["spectra", "born"]))


def _run_lyapunov(spec, out_dir, files, summary):
    want = set(spec.outputs or ["lyapunov", "purification"])
    records = _simulate(spec, out_dir, files, summary, want)
    cfg = records[0].config
    window = spec.params.get("window")
    window = tuple(window) if window else None
    est = lyapunov_fit(records, window=window)
    if cfg.model is Model.MODEL_II:
        exact = lyapunov_exact_projective(cfg.N, cfg.M)
    elif cfg.model is Model.WEAK:
        exact = lyapunov_exact_weak(compute_gamma(cfg.L, cfg.p, cfg.epsilon))
    else:
        exact = np.full(est.lambda_hat.size, math.nan)
    rows = []
    for n, (lam, se) in enumerate(zip(est.lambda_hat, est.stderr), start=1):
        ex = float(exact[n - 1]) if n - 1 < exact.size else math.nan
        z = (lam - ex) / se if se > 0 and math.isfinite(ex) else math.nan
        rows.append((n, float(lam), float(se), ex, float(z)))
    header = ("mode_index", "lambda_hat", "stderr", "lambda_exact", "z_score")
    if "lyapunov" in want:
        f, k = _write_table(out_dir, "lyapunov", header, rows, spec.format)
        files[f] = k
    summary["fit_window"] = list(est.t_window)
    if "purification" in want:
        try:
            pur = purification_fit(records, window=window)
            summary["tau_p_hat"] = pur.tau_p_hat
            summary["tau_p_stderr"] = pur.tau_p_stderr
            summary["tau_p_exact"] = pur.tau_p_exact
        except DomainError as exc:
            summary["tau_p_error"] = str(exc)


def _run_born(spec, out_dir, files, summary):
    params = dict(spec.params)
    params.setdefault("model", "II")
    params["track_born"] = True
    spec2 = ExperimentSpec(**{**asdict(spec), "params": params})
    cfg = _circuit_config(spec2)
    if cfg.model is not Model.MODEL_II:
        raise UsageError("born experiments need Model II")
    records = _simulate(spec2, out_dir, files, summary, set(spec.outputs or ["born", "ks"]))
    factors = np.concatenate([rec.born_log_factors for rec in records])
    n, m = cfg.N, cfg.M
    law = BetaLaw(m, n - m)
    rows = []
    if m < n:
        ks = born_ks_test(np.exp(factors), lambda x: beta_cdf(law, x))
        rows.append(("layer_factor", int(factors.size), ks[0], ks[1]))
    t_eval = int(params.get("t_eval", cfg.t_max))
    if cfg.t_max >= t_eval and m < n and len(records) >= 20:
        totals = np.array([rec.born_log_factors[:t_eval].sum() for rec in records])
        cdf = log_born_cdf(n, m, t_eval)
        ks = born_ks_test(totals, cdf)
        rows.append((f"log_born_t{t_eval}", int(totals.size), ks[0], ks[1]))
    f, k = _write_table(out_dir, "born_ks", ("test", "n", "ks_statistic", "p_value"), rows, spec.format)
    files[f] = k


def _run_entropy(spec, out_dir, files, summary):
    cfg = _circuit_config(spec)
    records = run_trajectories(cfg, spec.jobs)
    alphas = spec.params.get("alphas", [2.0])
    if not isinstance(alphas, (list, tuple)):
        alphas = [alphas]
    rows = []
    for alpha in alphas:
        alpha = float(alpha)
        ser = renyi_series(records, alpha)
        for k, t in enumerate(ser.t_grid):
            spectra = [rec.spectrum_at(int(t)) for rec in records]
            sbar = renyi_nonfluctuating(spectra, alpha) if alpha != 1 else math.nan
            pred = math.nan
            if cfg.model is Model.MODEL_II and alpha == int(alpha) and 2 <= alpha <= cfg.M:
                pred = renyi_integer_moment_exact(cfg.M, int(t), int(alpha))
            rows.append((alpha, int(t), ser.mean_S[k], ser.var_S[k], ser.mean_log_S[k], sbar, pred))
    header = ("alpha", "t", "mean_S", "var_S", "mean_log_S", "S_bar", "S_bar_ginibre")
    f, k = _write_table(out_dir, "entropy", header, rows, spec.format)
    files[f] = k


def _need(params, *keys):
    missing = [k for k in keys if k not in params]
    if missing:
        raise UsageError(f"missing parameters: {missing}")


def _run_fp_sample(spec, out_dir, files, summary):
    _need(spec.params, "N", "s")
    n, s = int(spec.params["N"]), float(spec.params["s"])
    k = int(spec.params.get("n_samples", 1000))
    res = fp_exact_sample(n, s, k, RngStream(spec.seed, 0))
    rows = [(i, j + 1, float(v)) for i, row in enumerate(res.z) for j, v in enumerate(row)]
    f, c = _write_table(out_dir, "fp_samples", ("sample_id", "mode_index", "value"), rows, spec.format)
    files[f] = c
    summary.update(
        acceptance=res.acceptance.tolist(),
        iat=res.iat.tolist(),
        thin=res.thin,
        n_chains=res.n_chains,
        warnings=res.warnings,
    )


def _run_fp_langevin(spec, out_dir, files, summary):
    _need(spec.params, "N", "s")
    n, s = int(spec.params["N"]), float(spec.params["s"])
    k = int(spec.params.get("n_walkers", 1000))
    dt = float(spec.params.get("dt_max", 1e-3))
    z = langevin_ensemble(n, s, k, RngStream(spec.seed, 0), dt_max=dt)
    rows = [(i, j + 1, float(v)) for i, row in enumerate(z) for j, v in enumerate(row)]
    f, c = _write_table(out_dir, "langevin", ("walker_id", "mode_index", "value"), rows, spec.format)
    files[f] = c


def _run_ie_solve(spec, out_dir, files, summary):
    _need(spec.params, "N")
    n = int(spec.params["N"])
    s_grid = spec.params.get("s_grid", spec.params.get("s"))
    if s_grid is None:
        raise UsageError("missing parameter s_grid")
    if not isinstance(s_grid, (list, tuple)):
        s_grid = [s_grid]
    grid = int(spec.params.get("grid_size", 1000))
    rows_sum = []
    for s in s_grid:
        d = solve_integral_equation(float(s), n, grid)
        rows = list(zip(d.grid.tolist(), d.values.tolist()))
        f, c = _write_table(out_dir, f"iesolve_s{float(s):g}", ("z", "rho"), rows, spec.format)
        files[f] = c
        rows_sum.append((float(s), d.a, d.mass, d.cond, d.clipped_mass, int(d.clip_flag), uniform_profile_distance(d, d.a)))
    header = ("s", "a", "mass", "cond", "clipped_mass", "clip_flag", "l2_to_uniform")
    f, c = _write_table(out_dir, "iesolve_summary", header, rows_sum, spec.format)
    files[f] = c


_RUNNERS = {
    "simulate": _run_simulate,
    "lyapunov": _run_lyapunov,
    "born": _run_born,
    "entropy": _run_entropy,
    "fp-sample": _run_fp_sample,
    "fp-langevin": _run_fp_langevin,
    "ie-solve": _run_ie_solve,
}


def run(spec: ExperimentSpec) -> ResultManifest:
    """Execute an experiment and write its outputs and manifest.

    Raises:
        UsageError: for an invalid spec or unwritable output directory.
        NumericalError: for numerical failures, including failed trajectories.
    """
    spec.validate()
    out_dir = Path(spec.output_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out_dir}: {exc}") from exc
    if not os.access(out_dir, os.W_OK):
        raise UsageError(f"output directory {out_dir} is not writable")
    files: Dict[str, int] = {}
    summary: Dict[str, object] = {}
    t0 = time.perf_counter()
    try:
        _RUNNERS[spec.command](spec, out_dir, files, summary)
    except DomainError as exc:
        raise UsageError(str(exc)) from exc
    manifest = ResultManifest(
        name=spec.name,
        command=spec.command,
        spec_hash=spec.digest(),
        seed=spec.seed,
        provenance=_provenance(),
        files=files,
        wall_time=time.perf_counter() - t0,
        output_dir=str(out_dir),
        summary={"params": spec.params, **summary},
    )
    manifest.write()
    return manifest


# --- report -----------------------------------------------------------------


def _read_table(path: Path) -> List[Dict[str, object]]:
    if path.suffix == ".json":
        return json.loads(path.read_text())
    with path.open(newline="") as fh:
        out = []
        for row in csv.DictReader(fh):
            out.append({k: _parse_cell(v) for k, v in row.items()})
        return out


def _parse_cell(v: str):
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v


_REPORT_TABLES = ("lyapunov", "born_ks", "entropy", "iesolve_summary")


def report(manifest) -> Dict[str, object]:
    """Summarize a finished run as text (``report.txt``) and JSON (``report.json``).

    Raises:
        UsageError: if the manifest lists no files.
        FileNotFoundError: listing every file named in the manifest that is missing.
    """
    if not isinstance(manifest, ResultManifest):
        manifest = ResultManifest.load(manifest)
    if not manifest.files:
        raise UsageError("manifest lists no output files")
    out_dir = Path(manifest.output_dir)
    missing = [f for f in manifest.files if not (out_dir / f).exists()]
    if missing:
        raise FileNotFoundError(f"missing output files: {missing}")
    doc = {
        "name": manifest.name,
        "command": manifest.command,
        "spec_hash": manifest.spec_hash,
        "seed": manifest.seed,
        "summary": manifest.summary,
        "tables": {},
    }
    lines = [f"# {manifest.name} ({manifest.command})", f"spec {manifest.spec_hash[:12]}  seed {manifest.seed}", ""]
    for f in sorted(manifest.files):
        stem = Path(f).stem
        if stem not in _REPORT_TABLES:
            continue
        rows = _read_table(out_dir / f)
        doc["tables"][stem] = rows
        if not rows:
            continue
        cols = list(rows[0].keys())
        lines.append(f"## {stem}")
        lines.append("  ".join(f"{c:>14s}" for c in cols))
        for r in rows:
            lines.append("  ".join(_fmt(r[c]) for c in cols))
        lines.append("")
    for key, val in manifest.summary.items():
        if key != "params":
            lines.append(f"{key}: {val}")
    text = "\n".join(lines) + "\n"
    (out_dir / "report.txt").write_text(text)
    (out_dir / "report.json").write_text(json.dumps(doc, indent=2, default=_json_default))
    doc["text"] = text
    return doc


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:>14.6g}"
    return f"{str(v):>14s}"


# --- command line -----------------------------------------------------------


def _literal(v: str):
    try:
        return ast.literal_eval(v)
    except (ValueError, SyntaxError):
        return v


def load_config(path) -> Dict[str, object]:
    """Read an INI file with ``[experiment]`` and ``[params]`` sections."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    if not cp.read(path):
        raise UsageError(f"cannot read config file {path}")
    out: Dict[str, object] = {}
    if cp.has_section("experiment"):
        out.update({k: _literal(v) for k, v in cp.items("experiment")})
    out["params"] = {k: _literal(v) for k, v in cp.items("params")} if cp.has_section("params") else {}
    return out


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="monitored-dots", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [experiment] and [params] sections")
    common.add_argument("--seed", type=int, help="64-bit experiment seed")
    common.add_argument("--jobs", type=int, help="worker processes")
    common.add_argument("--out", help=f"output directory (default ${ENV_OUT} or ./results)")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--name", help="experiment name")
    common.add_argument("--outputs", help="comma-separated artifacts to write")
    common.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE", help="override a parameter"
    )
    circuit = argparse.ArgumentParser(add_help=False)
    circuit.add_argument("--L", type=int)
    circuit.add_argument("--p", type=float)
    circuit.add_argument("--model")
    circuit.add_argument("--epsilon", type=float)
    circuit.add_argument("--t-max", type=int, dest="t_max")
    circuit.add_argument("--n-traj", type=int, dest="n_traj")
    circuit.add_argument("--outcomes", choices=("fixed", "uniform", "born"))
    circuit.add_argument("--record-every", type=int, dest="record_every")
    for name in CIRCUIT_COMMANDS:
        sub.add_parser(name, parents=[common, circuit], help=f"{name} experiment")
    fp = argparse.ArgumentParser(add_help=False)
    fp.add_argument("--N", type=int)
    fp.add_argument("--s", type=float)
    sub.add_parser("fp-sample", parents=[common, fp], help="Metropolis samples of the exact density").add_argument(
        "--n-samples", type=int, dest="n_samples"
    )
    sub.add_parser("fp-langevin", parents=[common, fp], help="Langevin ensemble").add_argument(
        "--n-walkers", type=int, dest="n_walkers"
    )
    ie = sub.add_parser("ie-solve", parents=[common], help="integral-equation level densities")
    ie.add_argument("--N", type=int)
    ie.add_argument("--s-grid", dest="s_grid", help="comma-separated s values")
    ie.add_argument("--grid-size", type=int, dest="grid_size")
    rp = sub.add_parser("report", help="summarize a finished run")
    rp.add_argument("manifest", help="manifest.json or its directory")
    return ap


_PARAM_FLAGS = _CIRCUIT_KEYS + ("N", "s", "n_samples", "n_walkers", "s_grid", "grid_size")


def spec_from_args(ns: argparse.Namespace) -> ExperimentSpec:
    """Merge config-file values with command-line overrides."""
    base: Dict[str, object] = load_config(ns.config) if ns.config else {"params": {}}
    params = dict(base.get("params", {}))
    for key in _PARAM_FLAGS:
        val = getattr(ns, key, None)
        if val is not None:
            if key == "s_grid":
                val = [float(x) for x in str(val).split(",") if x.strip()]
            params[key] = val
    for item in ns.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        params[k.strip()] = _literal(v.strip())
    out = ns.out or base.get("output_dir") or os.environ.get(ENV_OUT) or "results"
    outputs = ns.outputs if ns.outputs is not None else base.get("outputs", [])
    if isinstance(outputs, str):
        outputs = [o.strip() for o in outputs.split(",") if o.strip()]
    return ExperimentSpec(
        name=str(ns.name or base.get("name") or ns.command),
        command=ns.command,
        params=params,
        outputs=list(outputs),
        output_dir=str(out),
        format=ns.format or str(base.get("format", "csv")),
        seed=int(ns.seed if ns.seed is not None else base.get("seed", 0)),
        jobs=int(ns.jobs if ns.jobs is not None else base.get("jobs", 1)),
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point; returns the process exit code."""
    ap = _parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        if ns.command == "report":
            doc = report(ns.manifest)
            sys.stdout.write(doc["text"])
            return EXIT_OK
        manifest = run(spec_from_args(ns))
        print(f"wrote {len(manifest.files)} files to {manifest.output_dir} (spec {manifest.spec_hash[:12]})")
        return EXIT_OK
    except (UsageError, FileNotFoundError, NotImplementedError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
