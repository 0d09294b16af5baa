"""Batch command line: parse an INI experiment file, run it, write CSV and SVG.

Exit codes: 0 success, 1 a requested check failed, 2 configuration error,
3 numerical error raised by one of the computational modules.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import sys
import time
import traceback
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import gf, mqp, simulate, verify
from .errors import ConfigError, InfiniteMoment, MBPError
from .offspring import OffspringLaw, law_from_mapping
from .svg import write_line_plot

MODES = ("solve", "simulate", "qprocess", "verify")
STOCHASTIC = ("simulate", "verify")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

REPORT_FIELDS = ("check_id", "law", "statistic", "target", "tolerance", "kind",
                 "tail_bound", "passed", "budget", "notes")


# -- configuration ----------------------------------------------------------
@dataclass
class ExperimentConfig:
    """Validated experiment description.

    ``params`` holds the mode-specific section as raw strings; typed access
    goes through :meth:`get_float`, :meth:`get_int` and friends so every
    value is range-checked where it is read.
    """

    law: OffspringLaw
    mode: str
    out_dir: Path
    seed: int | None = None
    jobs: int = 1
    params: dict = field(default_factory=dict)
    source: str = ""

    def _raw(self, key, default):
        if key in self.params:
            return self.params[key]
        if default is None:
            raise ConfigError(f"[{self.mode}] is missing required key {key!r}")
        return default

    def get_float(self, key, default=None, lo=-math.inf, hi=math.inf, lo_open=False) -> float:
        raw = self._raw(key, default)
        try:
            val = float(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"[{self.mode}] {key} = {raw!r} is not a number") from None
        if not math.isfinite(val) or val > hi or val < lo or (lo_open and val == lo):
            raise ConfigError(f"[{self.mode}] {key} = {val} out of range")
        return val

    def get_int(self, key, default=None, lo=0, hi=10**9) -> int:
        raw = self._raw(key, default)
        try:
            val = int(str(raw).strip())
        except ValueError:
            raise ConfigError(f"[{self.mode}] {key} = {raw!r} is not an integer") from None
        if not lo <= val <= hi:
            raise ConfigError(f"[{self.mode}] {key} = {val} outside [{lo}, {hi}]")
        return val

    def get_floats(self, key, default=None, lo=0.0) -> list[float]:
        raw = self._raw(key, default)
        items = [x for x in str(raw).replace(";", ",").split(",") if x.strip()]
        if not items:
            raise ConfigError(f"[{self.mode}] {key} is empty")
        try:
            vals = [float(x) for x in items]
        except ValueError:
            raise ConfigError(f"[{self.mode}] {key} = {raw!r} is not a number list") from None
        if any(not math.isfinite(v) or v < lo for v in vals):
            raise ConfigError(f"[{self.mode}] {key} has values below {lo} or not finite")
        return vals

    def get_str(self, key, default=None) -> str:
        return str(self._raw(key, default)).strip()

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError(f"mode {self.mode!r} is stochastic and needs a seed")
        return self.seed


def _parse_int(raw, name, lo=0):
    try:
        val = int(str(raw).strip())
    except ValueError:
        raise ConfigError(f"{name} = {raw!r} is not an integer") from None
    if val < lo:
        raise ConfigError(f"{name} must be at least {lo}")
    return val


def load_config(path, mode: str | None = None, seed: int | None = None,
                out_dir: str | None = None, jobs: int | None = None) -> ExperimentConfig:
    """Read ``path`` and apply command-line overrides."""
    path = Path(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if not parser.has_section("law"):
        raise ConfigError("config has no [law] section")
    law = law_from_mapping(dict(parser["law"]))
    exp = dict(parser["experiment"]) if parser.has_section("experiment") else {}

    mode = (mode or exp.get("mode", "")).strip().lower()
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    if seed is None and "seed" in exp:
        seed = _parse_int(exp["seed"], "seed")
    if seed is not None and seed < 0:
        raise ConfigError("seed must be nonnegative")
    if mode in STOCHASTIC and seed is None:
        raise ConfigError(f"mode {mode!r} is stochastic and needs a seed")
    jobs = jobs if jobs is not None else _parse_int(exp.get("jobs", "1"), "jobs", lo=1)
    if jobs < 1:
        raise ConfigError("jobs must be at least 1")
    target = out_dir or exp.get("out_dir")
    if target:
        target = Path(target)
        if not target.is_absolute() and out_dir is None:
            target = path.parent / target
    else:
        target = Path("out") / path.stem
    params = dict(parser[mode]) if parser.has_section(mode) else {}
    return ExperimentConfig(law, mode, Path(target), seed, jobs, params, str(path))


# -- output helpers ---------------------------------------------------------
def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def _tag(t: float) -> str:
    return f"{t:g}".replace(".", "p")


# -- modes ------------------------------------------------------------------
def run_solve(cfg: ExperimentConfig) -> int:
    """Transition series ``P_ij(t)`` on a time grid plus extinction data."""
    law = cfg.law
    times = cfg.get_floats("times", "1")
    i = cfg.get_int("i", 1, lo=1, hi=10_000)
    n = cfg.get_int("n", 50, lo=0, hi=200_000)
    tol = cfg.get_float("tol", gf.DEFAULT_TOL, lo=1e-14, hi=1e-4)
    ext = gf.extinction_data(law)
    write_csv(cfg.out_dir / "extinction.csv", ("quantity", "value"), [
        ("q", ext.q), ("beta", ext.beta), ("lambda_S", ext.lambda_S),
        ("criticality", ext.criticality.value)])
    for t in times:
        ps = gf.transition_probabilities(law, t, i, n, tol)
        write_csv(cfg.out_dir / f"P_i{i}_t{_tag(t)}.csv", ("j", "value"), ps.rows())
    n_inv = cfg.get_int("invariant_n", 0, lo=0, hi=200_000)
    if n_inv:
        write_csv(cfg.out_dir / "invariant_measure.csv", ("j", "value"),
                  gf.invariant_measure(law, n_inv).rows())
    n_cond = cfg.get_int("conditioned_n", 0, lo=0, hi=200_000)
    if n_cond:
        write_csv(cfg.out_dir / "conditioned_limit.csv", ("j", "value"),
                  gf.conditioned_limit(law, n_cond).rows())
    return EXIT_OK


def run_simulate(cfg: ExperimentConfig) -> int:
    """Monte Carlo final-state distribution and a few exported paths."""
    seed = cfg.require_seed()
    process = cfg.get_str("process", "mbp").lower()
    if process not in ("mbp", "mqp"):
        raise ConfigError("[simulate] process must be 'mbp' or 'mqp'")
    t = cfg.get_float("t", None, lo=0.0)
    i = cfg.get_int("i", 1, lo=1, hi=10**6)
    reps = cfg.get_int("reps", 10_000, lo=1000, hi=10**8)
    cap = cfg.get_int("cap", simulate.DEFAULT_CAP, lo=i, hi=10**12)
    paths = cfg.get_int("paths", 1, lo=0, hi=1000)
    law = cfg.law
    params = law if process == "mbp" else mqp.build_qprocess(law)
    emp = simulate.empirical_transition(process, params, t, i, reps, seed, cap, cfg.jobs)
    write_csv(cfg.out_dir / "empirical.csv", ("state", "mass", "ci_halfwidth"), emp.rows())
    path_seed = verify._derive_seed(seed, 1)
    for k in range(paths):
        rng = simulate.stream(path_seed, k)
        if process == "mbp":
            traj = simulate.simulate_mbp(law, i, t, rng, cap)
        else:
            traj = simulate.simulate_mqp(params, i, t, rng, cap)
        write_csv(cfg.out_dir / f"trajectory_{k}.csv", ("time", "population"), traj.rows())
    rows = [("replications", emp.replications), ("capped", emp.capped),
            ("mean", float(np.dot(emp.support, emp.masses)))]
    if process == "mbp":
        alive = float(emp.masses[emp.support > 0].sum())
        lo, hi = simulate.wilson_interval(round(alive * emp.replications), emp.replications)
        rows += [("survival", alive), ("survival_ci_low", lo), ("survival_ci_high", hi)]
    write_csv(cfg.out_dir / "summary.csv", ("quantity", "value"), rows)
    return EXIT_OK


def run_qprocess(cfg: ExperimentConfig) -> int:
    """q-matrix rows, optional transition series, moments and invariant objects."""
    spec = mqp.build_qprocess(cfg.law)
    nrows = cfg.get_int("rows", 20, lo=1, hi=10_000)
    max_omitted = cfg.get_float("max_omitted", 1e-8, lo=0.0, hi=1e-2, lo_open=True)
    n = cfg.get_int("n", 100, lo=1, hi=200_000)
    entries, sums = [], []
    for i in range(1, nrows + 1):
        row = mqp.q_matrix_row(spec, i, max_omitted=max_omitted)
        entries += row.rows()
        sums.append((i, row.row_sum(), row.omitted_rate))
    write_csv(cfg.out_dir / "q_matrix.csv", ("i", "j", "q_ij"), entries)
    write_csv(cfg.out_dir / "q_row_sums.csv", ("i", "row_sum", "omitted_rate"), sums)

    times = cfg.get_floats("times", "") if cfg.params.get("times", "").strip() else []
    i0 = cfg.get_int("i", 1, lo=1, hi=10_000)
    moments = []
    for t in times:
        ps = mqp.qprocess_transition(spec, t, i0, n)
        write_csv(cfg.out_dir / f"Q_i{i0}_t{_tag(t)}.csv", ("j", "value"), ps.rows())
        try:
            mean, var = mqp.qprocess_moments(spec, t, i0)
        except InfiniteMoment:
            mean, var = math.inf, math.inf
        moments.append((t, mean, var))
    if moments:
        write_csv(cfg.out_dir / "moments.csv", ("t", "mean", "variance"), moments)

    if spec.kind is mqp.QProcessClass.RESTRICTIVE:
        write_csv(cfg.out_dir / "stationary.csv", ("j", "value"),
                  mqp.stationary_distribution(spec, n).rows())
    else:
        write_csv(cfg.out_dir / "pi.csv", ("j", "value"), mqp.pi_coefficients(spec, n).rows())
        nu, _ = cfg.law.regular_variation()
        xs = np.linspace(0.0, cfg.get_float("cdf_xmax", 8.0, lo=0.0, lo_open=True),
                         cfg.get_int("cdf_points", 81, lo=2, hi=10_000))
        write_csv(cfg.out_dir / "limit_cdf.csv", ("x", "G"),
                  zip(xs, np.atleast_1d(mqp.limit_cdf(nu, xs))))
    return EXIT_OK


def write_report(out_dir: Path, results) -> Path:
    """Report CSV plus one diagnostics CSV per check that carries series."""
    report = write_csv(out_dir / "report.csv", REPORT_FIELDS, [
        (r.check_id, r.law, r.statistic, r.target, r.tolerance, r.kind, r.tail_bound,
         r.passed, r.budget, r.notes) for r in results])
    diag_dir = out_dir / "diagnostics"
    for r in results:
        if not r.diagnostics:
            continue
        rows = []
        for name, (x, y) in r.diagnostics.items():
            for a, b in zip(np.asarray(x, float), np.asarray(y, float)):
                rows.append((name, float(a), float(b)))
        write_csv(diag_dir / f"{r.check_id}.csv", ("series", "x", "y"), rows)
    return report


def run_verify(cfg: ExperimentConfig) -> int:
    """Default theorem-check suite on the configured law."""
    seed = cfg.require_seed()
    reps = cfg.get_int("reps", 10_000, lo=1000, hi=10**8)
    raw = cfg.get_str("checks", "all").lower()
    groups = None if raw in ("", "all") else [g.strip() for g in raw.split(",") if g.strip()]
    if groups is not None:
        bad = set(groups) - set(verify.CHECK_GROUPS)
        if bad:
            raise ConfigError(f"[verify] unknown checks {sorted(bad)}; choose from {verify.CHECK_GROUPS}")
    start = time.perf_counter()
    results = verify.default_suite(cfg.law, seed, jobs=cfg.jobs, reps=reps, groups=groups)
    elapsed = time.perf_counter() - start
    write_report(cfg.out_dir, results)
    failed = [r.check_id for r in results if not r.passed]
    # wall time lives here, not in report.csv, so reports stay byte-identical
    lines = [f"law: {verify.law_label(cfg.law)}", f"seed: {seed}", f"checks: {len(results)}",
             f"failed: {len(failed)}" + (f" ({', '.join(failed)})" if failed else ""),
             f"runtime_seconds: {elapsed:.2f}"]
    (cfg.out_dir / "summary.txt").write_text("\n".join(lines) + "\n")
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.check_id}: statistic={r.statistic:.6g} "
              f"target={r.target:.6g} tolerance={r.tolerance:.3g}")
    return EXIT_CHECK if failed else EXIT_OK


RUNNERS = {"solve": run_solve, "simulate": run_simulate, "qprocess": run_qprocess, "verify": run_verify}


# -- plotting ---------------------------------------------------------------
def _read_rows(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def plot_report(report_csv, out_dir=None) -> list[Path]:
    """One SVG per diagnostics file referenced by ``report_csv``.

    Missing or unreadable series are skipped with a warning; an empty
    report yields no files.
    """
    report_csv = Path(report_csv)
    rows = _read_rows(report_csv)
    out = Path(out_dir) if out_dir else report_csv.parent / "plots"
    if not rows:
        warnings.warn(f"{report_csv} has no checks; nothing to plot", stacklevel=2)
        return []
    written = []
    for row in rows:
        cid = row["check_id"]
        diag = report_csv.parent / "diagnostics" / f"{cid}.csv"
        if not diag.exists():
            continue
        series: dict[str, tuple[list, list]] = {}
        try:
            for d in _read_rows(diag):
                xs, ys = series.setdefault(d["series"], ([], []))
                xs.append(float(d["x"]))
                ys.append(float(d["y"]))
        except (KeyError, ValueError) as exc:
            warnings.warn(f"skipping {diag}: {exc}", stacklevel=2)
            continue
        if not series:
            warnings.warn(f"skipping {diag}: no series", stacklevel=2)
            continue
        stat = float(row["statistic"])
        verdict = "PASS" if row["passed"] == "true" else "FAIL"
        if cid.startswith("scaling_limit_ks"):
            note = f"max vertical gap {stat:.4f} ({verdict})"
        else:
            note = f"statistic {stat:.4g}, target {float(row['target']):.4g} ({verdict})"
        out.mkdir(parents=True, exist_ok=True)
        written.append(write_line_plot(out / f"{cid}.svg", series, title=f"{cid}: {row['law']}",
                                       xlabel="x", ylabel="value", annotation=note))
    return written


# -- entry point -------------------------------------------------------------
def _provenance(exc: BaseException) -> str:
    """Innermost mbplab module in the traceback, for error messages."""
    where = "mbplab"
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        mod = frame.f_globals.get("__name__", "")
        if mod.startswith("mbplab.") and mod != "mbplab.errors":
            where = mod
    return where


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mbplab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_positional=False):
        if config_positional:
            p.add_argument("config_file", nargs="?", help="experiment INI file")
        p.add_argument("--config", help="experiment INI file")
        p.add_argument("--seed", type=int, help="master seed (overrides [experiment] seed)")
        p.add_argument("--out-dir", help="output directory (overrides [experiment] out_dir)")
        p.add_argument("--jobs", type=int, help="worker threads for simulation")

    common(sub.add_parser("run", help="dispatch on [experiment] mode"), config_positional=True)
    for mode in MODES:
        common(sub.add_parser(mode, help=RUNNERS[mode].__doc__.splitlines()[0]), config_positional=True)
    p = sub.add_parser("plot", help="SVG plots from a verify report")
    p.add_argument("report", help="report.csv written by verify")
    p.add_argument("--out-dir", help="directory for SVG files (default: <report dir>/plots)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "plot":
            if not Path(args.report).exists():
                raise ConfigError(f"report {args.report} not found")
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                files = plot_report(args.report, args.out_dir)
            for w in caught:
                print(f"warning: {w.message}", file=sys.stderr)
            print(f"wrote {len(files)} SVG file(s)")
            return EXIT_OK
        path = args.config or args.config_file
        if not path:
            raise ConfigError("no config file given")
        if args.jobs is not None and args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        mode = None if args.command == "run" else args.command
        cfg = load_config(path, mode, args.seed, args.out_dir, args.jobs)
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        return RUNNERS[cfg.mode](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MBPError as exc:
        print(f"numerical error [{_provenance(exc)}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
