"""Command-line runner: ``nonlocal-lab {series,kernel,solve,suite,check}``.

Every run reads a JSON config, writes CSV tables (and optional SVG plots) into
the output directory and finishes with ``manifest.json`` listing the config
hash, stage timings, verdicts and the SHA-256 of every produced file.

Exit codes: 0 pass, 1 verdict fail, 2 usage or configuration error,
3 numerical guard tripped.
"""

import argparse
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
import hashlib
import json
import math
import os
import sys
import tempfile
import time

import numpy as np

from . import __version__, io
from .decayfit import SCENARIOS, Scenario, run_theorem_suite
from .errors import (CostError, DomainError, EvaluationError, FitError,
                     PeriodizationError, ResolutionError)
from .kernels import k_max, kernel_from_descriptor, sharp_young_bound, wraparound_estimate
from .regvar import RegVarying
from .xseries import SeriesSpec, verify_series_asymptotics

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_GUARD = 0, 1, 2, 3
MANIFEST = "manifest.json"
REPORTS = "reports.jsonl"

SERIES_FIELDS = {"alpha", "N", "R", "t0", "t1", "points", "bound", "tail_tolerance"}
TIME_FIELDS = {"t0", "t1", "ratio"}


class ConfigError(ValueError):
    pass


def _p_value(p):
    if p in ("inf", "Inf", "infinity", math.inf):
        return np.inf
    if p in (1, 2):
        return p
    raise ConfigError(f"p: norm index must be 1, 2 or 'inf', got {p!r}")


@dataclass
class ExperimentConfig:
    """Run configuration; every field is optional and ``None`` means default.

    ``scenario`` names a built-in scenario whose fields are used unless
    overridden here.  ``series`` drives the ``series`` command, ``k_range``
    and ``slope_range`` the ``kernel`` command.
    """

    scenario: str = None
    source: str = None
    kernel: dict = None
    u0: dict = None
    chi0: float = None
    time: dict = None
    norms: list = None
    p: object = None
    window: list = None
    tolerance: float = None
    ratio_cap: float = None
    beta: float = None
    R: dict = None
    wrap_tol: float = None
    series: dict = None
    k_range: list = None
    slope_range: list = None
    expected_slope: float = None
    slope_tolerance: float = None
    output_dir: str = None
    seed: int = None

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        for key, allowed in (("series", SERIES_FIELDS), ("time", TIME_FIELDS)):
            sub = d.get(key)
            if sub is not None:
                if not isinstance(sub, dict):
                    raise ConfigError(f"{key}: expected an object")
                bad = set(sub) - allowed
                if bad:
                    raise ConfigError(f"unknown fields in {key}: {sorted(bad)}")
        return cls(**d)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)
                if getattr(self, f.name) is not None}

    def canonical(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"),
                          ensure_ascii=True, allow_nan=False)

    def hash(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    # -- views -------------------------------------------------------------
    def to_scenario(self):
        if self.scenario in SCENARIOS:
            base = SCENARIOS[self.scenario]
        elif self.source is None or self.kernel is None:
            raise ConfigError(
                f"scenario {self.scenario!r} is not built in; give 'source' and 'kernel'")
        else:
            base = Scenario(self.scenario or "custom", self.source, self.kernel)
        over = {}
        for key in ("source", "kernel", "u0", "chi0", "tolerance", "ratio_cap", "beta",
                    "R", "wrap_tol"):
            val = getattr(self, key)
            if val is not None:
                over[key] = val
        if self.time is not None:
            t = self.time
            over["t_range"] = (float(t.get("t0", base.t_range[0])),
                               float(t.get("t1", base.t_range[1])))
            over["time_ratio"] = float(t.get("ratio", base.time_ratio))
        if self.norms is not None:
            over["norms"] = tuple(_p_value(p) for p in self.norms)
        if self.p is not None:
            over["p"] = _p_value(self.p)
            if "norms" not in over and over["p"] not in base.norms:
                over["norms"] = tuple(base.norms) + (over["p"],)
        if self.window is not None:
            over["window"] = tuple(float(v) for v in self.window)
        return replace(base, **over)


def load_config(path):
    try:
        with open(path) as fh:
            d = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return ExperimentConfig.from_dict(d)


# -- manifests -----------------------------------------------------------------

def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    config_hash: str
    artifact_version: str
    command: str
    stages: dict
    files: dict
    verdicts: dict
    seed: int = 0

    def write(self, out_dir):
        with open(os.path.join(out_dir, MANIFEST), "w") as fh:
            json.dump(self.__dict__, fh, sort_keys=True, indent=2)
            fh.write("\n")

    @classmethod
    def read(cls, out_dir):
        with open(os.path.join(out_dir, MANIFEST)) as fh:
            return cls(**json.load(fh))


def verify_manifest(out_dir):
    """Names of listed files that are missing or whose hash changed."""
    m = RunManifest.read(out_dir)
    bad = []
    for name, digest in sorted(m.files.items()):
        path = os.path.join(out_dir, name)
        if not os.path.exists(path) or sha256_file(path) != digest:
            bad.append(name)
    return bad


class Run:
    """Collects produced files, stage timings and verdicts for one command."""

    def __init__(self, command, config, out_dir):
        self.command = command
        self.config = config
        self.out_dir = out_dir
        self.files = []
        self.stages = {}
        self.verdicts = {}
        os.makedirs(out_dir, exist_ok=True)

    def path(self, name):
        self.files.append(name)
        return os.path.join(self.out_dir, name)

    def stage(self, name, start):
        self.stages[name] = round(time.perf_counter() - start, 6)

    def finish(self):
        files = {name: sha256_file(os.path.join(self.out_dir, name))
                 for name in sorted(set(self.files))}
        RunManifest(self.config.hash(), __version__, self.command, self.stages, files,
                    self.verdicts, self.config.seed or 0).write(self.out_dir)


# -- plots ---------------------------------------------------------------------

def write_svg_plot(path, t, norm, slope, title, config_hash):
    """ln norm versus ln t with a guide line of the predicted slope."""
    import matplotlib
    matplotlib.use("Agg")
    from matplotlib import pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = config_hash
    fig, ax = plt.subplots(figsize=(5, 3.5))
    lt, ly = np.log(t), np.log(norm)
    ax.plot(lt, ly, "o", ms=3, label="measured")
    ax.plot(lt, ly[0] + slope * (lt - lt[0]), "-", lw=1, label=f"slope {slope:.4g}")
    ax.set_xlabel("ln t")
    ax.set_ylabel("ln norm")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    with open(path) as fh:
        text = fh.read()
    head, sep, rest = text.partition("?>\n")
    comment = f"<!-- config-hash: {config_hash} -->\n"
    text = head + sep + comment + rest if sep else comment + text
    with open(path, "w") as fh:
        fh.write(text)


# -- commands --------------------------------------------------------------------

def _series_spec(cfg):
    s = cfg.series
    if s is None:
        raise ConfigError("series command needs a 'series' section")
    if "R" not in s:
        raise ConfigError("series.R is required")
    try:
        R = RegVarying.from_descriptor(s["R"])
        spec = SeriesSpec(float(s.get("alpha", 1.0)), int(s.get("N", 1)), R,
                          float(s.get("tail_tolerance", 1e-12)))
    except DomainError as exc:
        raise ConfigError(f"series: {exc}") from None
    t = np.geomspace(float(s.get("t0", 1e2)), float(s.get("t1", 1e4)),
                     int(s.get("points", 17)))
    return spec, t, float(s.get("bound", 10.0))


def cmd_series(cfg, run, args):
    start = time.perf_counter()
    spec, t, bound = _series_spec(cfg)
    try:
        res = verify_series_asymptotics(spec, t, bound)
    except (DomainError, EvaluationError) as exc:
        raise ConfigError(f"series: {exc}") from None
    run.stage("series", start)
    io.write_csv(run.path("series.csv"), ["t", "ratio"], zip(res.t_grid, res.ratios))
    run.verdicts["series"] = {"verdict": res.verdict,
                              "top_decade_spread": res.top_decade_spread}
    print(f"series: {res.verdict}, top-decade spread {res.top_decade_spread:.6g}, "
          f"final ratio {res.ratios[-1]:.6g}")
    return EXIT_PASS if res.verdict == "bounded" else EXIT_FAIL


def _k_values(k_lo, k_hi):
    if k_hi - k_lo + 1 <= 2048:
        return np.arange(k_lo, k_hi + 1)
    return np.unique(np.round(np.geomspace(k_lo, k_hi, 512)).astype(int))


def cmd_kernel(cfg, run, args):
    if cfg.kernel is None:
        raise ConfigError("kernel command needs a 'kernel' descriptor")
    start = time.perf_counter()
    J = kernel_from_descriptor(cfg.kernel)
    k_lo, k_hi = (int(v) for v in (cfg.k_range or (1, 1024)))
    if not 1 <= k_lo <= k_hi:
        raise ConfigError("k_range must satisfy 1 <= k_lo <= k_hi")
    wrap_tol = cfg.wrap_tol if cfg.wrap_tol is not None else 1e-6
    km = k_max(J, wrap_tol)
    if k_hi > km:
        raise PeriodizationError(
            f"k_range reaches {k_hi} but k_max = {km} at wrap tolerance {wrap_tol:g}; "
            "enlarge X or M", k_max=km)
    run.stage("kernel", start)

    start = time.perf_counter()
    ks = _k_values(k_lo, k_hi)
    g = J.grid
    rows = []
    powered = np.ones_like(J.symbol)
    prev = 0
    for k in ks:
        powered = powered * J.symbol ** (k - prev)
        prev = k
        s = J.samples if k == 1 else g.inverse(powered)
        rows.append((int(k), float(np.max(np.abs(s))), g.integrate(np.abs(s)),
                     sharp_young_bound(J, int(k)).bound,
                     0.0 if k == 1 else wraparound_estimate(J, int(k))))
    run.stage("powers", start)
    io.write_csv(run.path("kernel_powers.csv"),
                 ["k", "sup_norm", "l1_norm", "bound", "wraparound_estimate"], rows)

    arr = np.array(rows)
    s_lo, s_hi = cfg.slope_range or (max(k_lo, 64), k_hi)
    sel = (arr[:, 0] >= s_lo) & (arr[:, 0] <= s_hi)
    slope = float(np.polyfit(np.log(arr[sel, 0]), np.log(arr[sel, 1]), 1)[0]) \
        if np.count_nonzero(sel) >= 2 else math.nan
    bound_ok = bool(np.all(arr[:, 1] <= arr[:, 3]))
    ok = bound_ok
    if cfg.expected_slope is not None:
        tol = cfg.slope_tolerance if cfg.slope_tolerance is not None else 0.02
        ok = ok and abs(slope - cfg.expected_slope) <= tol
    run.verdicts["kernel"] = {"slope": slope, "bound_holds": bound_ok, "k_max": km,
                              "verdict": "pass" if ok else "fail"}
    print(f"kernel {J.family}: slope {slope:.5f} on k in [{s_lo}, {s_hi}], "
          f"sup <= bound for all k: {bound_ok}, k_max {km}")
    if args.plot:
        write_svg_plot(run.path("kernel_powers.svg"), arr[:, 0], arr[:, 1],
                       cfg.expected_slope if cfg.expected_slope is not None else slope,
                       f"{J.family}: sup norm of J_k", cfg.hash())
    return EXIT_PASS if ok else EXIT_FAIL


def _verdict_code(verdicts):
    if any(v == "fail" for v in verdicts):
        return EXIT_FAIL
    if any(v == "inconclusive" for v in verdicts):
        return EXIT_GUARD
    return EXIT_PASS


def _emit_result(run, res, plot, config_hash):
    name = res.scenario.name
    res.table.write_csv(run.path(f"{name}_norms.csv"))
    res.report.write_csv(run.path(f"{name}_compensated.csv"))
    res.report.append_to_manifest(run.path(REPORTS))
    run.verdicts[name] = res.report.summary()
    rep = res.report
    print(f"{name}: exponent {rep.fitted_exponent:.4f} (expected {rep.expected_exponent:.4f}), "
          f"ratio spread {rep.ratio_spread:.4f}, {rep.verdict}")
    for note in res.advisories:
        print(f"  advisory: {note}")
    if plot:
        write_svg_plot(run.path(f"{name}_decay.svg"), rep.times, rep.norms,
                       rep.expected_exponent, name, config_hash)


def cmd_solve(cfg, run, args):
    sc = cfg.to_scenario()
    start = time.perf_counter()
    res = run_theorem_suite(sc)
    run.stage(sc.name, start)
    open(os.path.join(run.out_dir, REPORTS), "w").close()
    _emit_result(run, res, args.plot, cfg.hash())
    return _verdict_code([res.report.verdict])


def _suite_worker(sc):
    start = time.perf_counter()
    res = run_theorem_suite(sc)
    return res, time.perf_counter() - start


def cmd_suite(cfg, run, args):
    names = [cfg.scenario] if cfg.scenario else list(SCENARIOS)
    scenarios = []
    for name in names:
        scenarios.append(replace(cfg, scenario=name).to_scenario())
    workers = max(1, int(args.workers or 1))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_suite_worker, scenarios))
    else:
        results = [_suite_worker(sc) for sc in scenarios]
    # single collector: files are written here, in scenario order
    open(os.path.join(run.out_dir, REPORTS), "w").close()
    for res, seconds in results:
        run.stages[res.scenario.name] = round(seconds, 6)
        _emit_result(run, res, args.plot, cfg.hash())
    return _verdict_code([r.report.verdict for r, _ in results])


def cmd_check(cfg, run, args):
    raise AssertionError("handled in main")


COMMANDS = {"series": cmd_series, "kernel": cmd_kernel, "solve": cmd_solve,
            "suite": cmd_suite, "check": cmd_check}


def build_parser():
    ap = argparse.ArgumentParser(prog="nonlocal-lab", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="JSON experiment config")
    ap.add_argument("--out", help="output directory (default: config output_dir or 'runs')")
    ap.add_argument("--workers", type=int, default=1, help="parallel scenarios for 'suite'")
    ap.add_argument("--seed", type=int, help="recorded in the config and manifest")
    ap.add_argument("--plot", action="store_true", help="also write SVG plots")
    ap.add_argument("--check", action="store_true",
                    help="rerun and compare against the manifest in --out without "
                         "overwriting it")
    return ap


def _execute(cfg, args, out_dir):
    run = Run(args.command, cfg, out_dir)
    code = COMMANDS[args.command](cfg, run, args)
    run.finish()
    return code


def _compare_runs(out_dir, fresh_dir):
    old = RunManifest.read(out_dir)
    new = RunManifest.read(fresh_dir)
    if old.config_hash != new.config_hash:
        print(f"config hash differs: {old.config_hash} vs {new.config_hash}")
        return False
    bad = sorted(n for n in set(old.files) | set(new.files)
                 if old.files.get(n) != new.files.get(n))
    for name in bad:
        print(f"mismatch: {name}")
    return not bad


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_PASS
    try:
        if args.command == "check":
            out_dir = args.out or "runs"
            if not os.path.exists(os.path.join(out_dir, MANIFEST)):
                raise ConfigError(f"no {MANIFEST} in {out_dir}")
            bad = verify_manifest(out_dir)
            for name in bad:
                print(f"hash mismatch or missing: {name}")
            print("manifest ok" if not bad else f"{len(bad)} file(s) differ")
            return EXIT_PASS if not bad else EXIT_FAIL

        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.command in ("series", "kernel") and not args.config:
            raise ConfigError(f"{args.command} needs --config")
        if args.command == "solve" and cfg.scenario is None and cfg.source is None:
            raise ConfigError("solve needs a scenario or a source and kernel")
        if args.seed is not None:
            cfg.seed = args.seed
        out_dir = args.out or cfg.output_dir or "runs"

        if args.check:
            if not os.path.exists(os.path.join(out_dir, MANIFEST)):
                raise ConfigError(f"--check needs an existing {MANIFEST} in {out_dir}")
            with tempfile.TemporaryDirectory() as fresh:
                code = _execute(cfg, args, fresh)
                same = _compare_runs(out_dir, fresh)
            print("rerun matches manifest" if same else "rerun differs from manifest")
            return code if same else EXIT_FAIL
        return _execute(cfg, args, out_dir)
    except (ConfigError, DomainError, ResolutionError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PeriodizationError as exc:
        # requesting powers past k_max is a request error
        print(f"periodization: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EvaluationError, FitError, CostError, FloatingPointError) as exc:
        print(f"numerical guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (ValueError, TypeError, KeyError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
