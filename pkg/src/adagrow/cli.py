"""Command-line entry point: ``adagrow {bound,sweep,simulate,validate}``.

Settings come from an optional TOML file (``--config``); any flag given on
the command line wins over the file. Exit codes: 0 ok, 1 validation failure,
2 bad configuration, 3 I/O error.
"""

import argparse
import concurrent.futures as cf
import csv
import io
import itertools
import json
import math
import os
import sys
import time

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import bounds, interact, schedule, specfun, validate
from .bounds import AccuracySpec, Method
from .exceptions import DomainError

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

CSV_COLUMNS = ["method", "n", "n0", "b", "k", "alpha_prime", "beta_prime", "k_max",
               "sigma_opt", "beta_opt", "eps_opt", "vacuous"]

DEFAULTS = {
    "method": ["OursN", "OursU", "JLNRSSPlus", "JLNRSS", "Split"],
    "alpha": 0.1,
    "beta_prime": 0.05,
    "n": [1_500_000],
    "n0": None,
    "growth_ratio": 3.0,
    "b": [10],
    "k": None,
    "seed": 0,
    "restarts": 8,
    "axis": "n",
    "out": None,
    "svg": None,
}


class ConfigError(Exception):
    pass


def _listify(v):
    if v is None:
        return None
    if isinstance(v, (list, tuple)):
        return list(v)
    return [v]


def _ints(v, name):
    out = []
    for x in _listify(v) or []:
        f = float(x)
        if f != int(f) or f < 1:
            raise ConfigError(f"{name} must hold positive integers, got {x!r}")
        out.append(int(f))
    return out


def _split_csv(s):
    return [p.strip() for p in s.split(",") if p.strip()]


def load_config(args):
    """Merge defaults, the TOML file and explicit flags (flags win)."""
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config, "rb") as fh:
                raw = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {args.config}: {exc}") from exc
        raw = {k.replace("-", "_"): v for k, v in raw.items()}
        nested = {k: raw.pop(k) for k in list(raw) if isinstance(raw[k], dict)}
        cfg.update(raw)
        cfg["sections"] = nested
    for key in DEFAULTS:
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    return normalize(cfg)


def normalize(cfg):
    out = dict(cfg)
    try:
        methods = cfg["method"]
        if isinstance(methods, str):
            methods = _split_csv(methods)
        out["method"] = [Method.parse(m) for m in methods]
        out["n"] = _ints(_parse_grid(cfg["n"]), "n")
        out["b"] = _ints(_parse_grid(cfg["b"]), "b")
        out["k"] = _ints(_parse_grid(cfg["k"]), "k") if cfg.get("k") is not None else None
        out["alpha"] = float(cfg["alpha"])
        out["beta_prime"] = float(cfg["beta_prime"])
        out["seed"] = int(cfg["seed"])
        out["restarts"] = int(cfg["restarts"])
        if cfg.get("n0") is not None:
            out["n0"] = int(cfg["n0"])
            out["growth_ratio"] = None
        else:
            out["growth_ratio"] = float(cfg["growth_ratio"])
        AccuracySpec(out["alpha"], out["beta_prime"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad configuration value: {exc}") from exc
    if not out["n"] or not out["b"] or not out["method"]:
        raise ConfigError("method, n and b grids must be non-empty")
    if out["k"] is not None and not out["k"]:
        raise ConfigError("k grid must be non-empty when given")
    if out["axis"] not in ("n", "b", "k"):
        raise ConfigError(f"axis must be n, b or k, got {out['axis']!r}")
    for n in out["n"]:
        _schedule(out, n)
    return out


def _parse_grid(v):
    if isinstance(v, str):
        return [float(x) for x in _split_csv(v)]
    return v


def _schedule(cfg, n):
    try:
        if cfg.get("n0") is not None:
            return schedule.GrowthSchedule(cfg["n0"], n)
        return schedule.growth_schedule(n, growth_ratio=cfg["growth_ratio"])
    except DomainError as exc:
        raise ConfigError(f"invalid schedule for n={n}: {exc}") from exc


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _row(method, sched, b, k=None, res=None, k_max=None, beta_prime=None):
    p = res.opt_params if res is not None else {}
    alpha = None if res is None else float(res.alpha_prime)
    return {
        "method": method.value, "n": sched.n, "n0": sched.n0, "b": b, "k": k,
        "alpha_prime": alpha, "beta_prime": beta_prime, "k_max": k_max,
        "sigma_opt": p.get("sigma"), "beta_opt": p.get("beta"), "eps_opt": p.get("epsilon"),
        "vacuous": None if alpha is None else alpha > 1.0,
    }


def evaluate_point(task):
    """One CSV row. ``task`` is a plain tuple so it pickles for worker processes."""
    method, n, n0, b, k, alpha, beta_prime, restarts, seed = task
    sched = schedule.GrowthSchedule(n0, n)
    if k is None:
        spec = AccuracySpec(alpha, beta_prime)
        mq = bounds.max_queries(method, sched, b, spec, restarts=restarts, seed=seed)
        return _row(method, sched, b, None, mq.result, mq.k_max, beta_prime)
    if method is Method.SPLIT:
        a = bounds.split_alpha(n, k, beta_prime)
        return _row(method, sched, b, k, bounds.BoundResult(a, beta_prime, method), None, beta_prime)
    res = bounds.method_alpha(method, sched, b, k, beta_prime, restarts=restarts, seed=seed)
    return _row(method, sched, b, k, res, None, beta_prime)


def grid_tasks(cfg):
    tasks = []
    ks = cfg["k"] or [None]
    for method, n, b, k in itertools.product(cfg["method"], cfg["n"], cfg["b"], ks):
        sched = _schedule(cfg, n)
        tasks.append((method, n, sched.n0, b, k, cfg["alpha"], cfg["beta_prime"],
                      cfg["restarts"], cfg["seed"]))
    return tasks


def worker_count():
    cap = os.environ.get("ADAGROW_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError as exc:
            raise ConfigError(f"ADAGROW_THREADS must be an integer, got {cap!r}") from exc
    return n


def run_grid(cfg):
    tasks = grid_tasks(cfg)
    workers = min(worker_count(), len(tasks))
    try:
        if workers <= 1:
            return [evaluate_point(t) for t in tasks]
        with cf.ProcessPoolExecutor(max_workers=workers) as ex:
            # map keeps grid order whatever the completion order
            return list(ex.map(evaluate_point, tasks))
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc


def rows_to_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def write_text(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", newline="") as fh:
        fh.write(text)


def write_svg(path, rows, axis):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "adagrow"
    y_key = "k_max" if rows and rows[0]["k_max"] is not None else "alpha_prime"
    fig, ax = plt.subplots(figsize=(6, 4))
    groups = {}
    for r in rows:
        groups.setdefault((r["method"], r["b"] if axis != "b" else None), []).append(r)
    for (method, b), rs in groups.items():
        pts = [(r[axis], r[y_key]) for r in rs if r[y_key] not in (None, 0)]
        if not pts:
            continue
        xs, ys = zip(*sorted(pts))
        ax.plot(xs, ys, marker="o", label=method if b is None else f"{method} b={b}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(axis)
    ax.set_ylabel(y_key)
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# ----------------------------------------------------------------- commands

def cmd_bound(cfg):
    rows = run_grid(cfg)
    write_text(cfg["out"], rows_to_csv(rows))
    return EXIT_OK


def cmd_sweep(cfg):
    axis = cfg["axis"]
    if axis == "k" and not cfg["k"]:
        raise ConfigError("a k sweep needs a k grid")
    rows = run_grid(cfg)
    write_text(cfg["out"], rows_to_csv(rows))
    if cfg.get("svg"):
        write_svg(cfg["svg"], rows, axis)
    return EXIT_OK


SIM_DEFAULTS = {
    "scenario": "fixed",
    "domain_size": 2,
    "trials": 10,
    "sigma": None,
    "target_rho": None,
    "final_fraction": 0.0,
}


def _sim_settings(cfg, args):
    sim = dict(SIM_DEFAULTS)
    sim.update(cfg.get("sections", {}).get("simulate", {}))
    for key in SIM_DEFAULTS:
        v = getattr(args, key, None)
        if v is not None:
            sim[key] = v
    if sim["scenario"] not in ("fixed", "attack", "filter"):
        raise ConfigError(f"unknown scenario {sim['scenario']!r}")
    if cfg["k"] is None:
        raise ConfigError("simulate needs k")
    return sim


def cmd_simulate(cfg, args):
    sim = _sim_settings(cfg, args)
    n, b, k = cfg["n"][0], cfg["b"][0], cfg["k"][0]
    sched = _schedule(cfg, n)
    p = interact.Distribution.uniform(int(sim["domain_size"]))
    try:
        alloc = schedule.batch_allocation(k, b, sched)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    envelope = None
    sigma = sim["sigma"]
    if sigma is None or sim["scenario"] == "fixed":
        res = bounds.ours_bound(sched, alloc, k, cfg["beta_prime"], restarts=cfg["restarts"],
                                seed=cfg["seed"])
        envelope = res.alpha_prime
        sigma = float(sigma) if sigma is not None else res.opt_params["sigma"]
    sigma = float(sigma)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    report = {"scenario": sim["scenario"], "n": n, "n0": sched.n0, "b": b, "k": k,
              "sigma": sigma, "bound_alpha_prime": envelope}
    if sim["scenario"] == "attack":
        w.writerow(["trial", "err_exact", "err_noisy"])
        for trial in range(int(sim["trials"])):
            e0, e1 = interact.paired_attack_trial(k, sigma, p, sched, cfg["seed"], trial,
                                                  float(sim["final_fraction"]))
            w.writerow([trial, _fmt(e0), _fmt(e1)])
    else:
        w.writerow(["trial", "t", "k_t", "max_snapshot_error", "max_dist_error",
                    "bound_alpha_prime", "terminated_at"])
        analyst = interact.fixed_schedule_analyst(alloc)
        for trial in range(int(sim["trials"])):
            if sim["scenario"] == "filter":
                if sim["target_rho"] is None:
                    raise ConfigError("the filter scenario needs target_rho")
                mech = interact.FilteredMechanism(sigma, float(sim["target_rho"]))
            else:
                mech = interact.gaussian_mechanism(sigma)
            data, tr = interact.run_interaction(analyst, mech, p, sched,
                                                interact.seed_sequence(cfg["seed"], trial))
            counts = tr.counts()
            for e in interact.empirical_errors(data, tr, p):
                w.writerow([trial, e.t, counts[e.t], _fmt(e.snapshot), _fmt(e.distributional),
                            _fmt(envelope), _fmt(tr.terminated_at)])
            if tr.terminated_at is not None and tr.terminated_at not in counts:
                w.writerow([trial, tr.terminated_at, 0, "", "", _fmt(envelope), _fmt(tr.terminated_at)])
    write_text(cfg["out"], buf.getvalue())
    if getattr(args, "report", None):
        write_text(args.report, json.dumps(report, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def validation_suite(inject_fault=False, mc_trials=10_000):
    """Named oracle checks as ``(name, passed, detail)`` triples."""
    results = []

    def check(name, fn):
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing oracle is a failing oracle
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append((name, bool(ok), f"{detail} [{time.perf_counter() - t0:.1f}s]"))

    def erfc_roundtrip():
        ps = np.logspace(-280, math.log10(1.999), 400)
        worst = max(abs(specfun.erfc(specfun.erfc_inv(p)) - p) / p for p in ps if p > 1e-300)
        return worst <= 1e-10, f"worst relative round-trip error {worst:.2e}"

    def resampling():
        worst = max(validate.resampling_check(t).discrepancy for t in validate.shipped_toys())
        if inject_fault:
            worst = max(worst, validate.resampling_check(validate.shipped_toys()[1], 1e-3).discrepancy)
        return worst <= 1e-12, f"max discrepancy {worst:.2e}"

    def fault_detected():
        d = validate.resampling_check(validate.shipped_toys()[1], perturb=1e-3).discrepancy
        return d > 1e-12, f"perturbed posterior discrepancy {d:.2e}"

    def conversion():
        rng = np.random.default_rng(7)
        pairs = [(0.18, 1.0)] + [(10 ** rng.uniform(-5, 0), rng.uniform(0, 3)) for _ in range(10)]
        worst = max(validate.conversion_crosscheck(r, e) for r, e in pairs)
        return worst <= 1e-6, f"worst relative gap {worst:.2e}"

    def snapshot_mc():
        alloc = schedule.batch_allocation(20, 4, schedule.GrowthSchedule(50, 100))
        r = validate.mc_snapshot_accuracy(0.05, alloc, mc_trials, seed=0, beta=0.1)
        return r.certified, f"rate {r.rate:.4f}, 99% Wilson [{r.ci[0]:.4f}, {r.ci[1]:.4f}]"

    def static_point():
        sched = schedule.GrowthSchedule(20_000, 20_000)
        a = bounds.ours_bound(sched, schedule.batch_allocation(200, 1, sched), 200, 0.05).alpha_prime
        j = bounds.jung_plus_static_alpha(20_000, 200, 0.05)
        gap = abs(a - j) / j
        return gap <= 1e-9, f"relative gap {gap:.2e}"

    def filter_safety():
        worst = -math.inf
        for trial in range(50):
            rng = np.random.default_rng(trial)
            sched = schedule.GrowthSchedule(10, 30)
            mech = interact.FilteredMechanism(float(rng.uniform(0.05, 0.5)), float(rng.uniform(0, 0.05)))
            alloc = schedule.batch_allocation(int(rng.integers(3, 30)), 3, sched)
            interact.run_interaction(interact.fixed_schedule_analyst(alloc), mech,
                                     interact.Distribution.uniform(2), sched, trial)
            if mech.charges:
                worst = max(worst, max(mech.charges) - mech.state.target_rho)
        return worst <= 0, "spend never exceeded the target"

    check("erfc_inv round trip", erfc_roundtrip)
    check("resampling lemma", resampling)
    check("resampling fault detection", fault_detected)
    check("zCDP conversion vs grid", conversion)
    check("snapshot accuracy Monte Carlo", snapshot_mc)
    check("static coincidence", static_point)
    check("filter safety", filter_safety)
    return results


def cmd_validate(args):
    results = validation_suite(inject_fault=args.inject_fault, mc_trials=args.mc_trials)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    failed = [name for name, ok, _ in results if not ok]
    if failed:
        print(f"failing oracles: {', '.join(failed)}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


# ------------------------------------------------------------------- parser

def _add_common(p):
    p.add_argument("--config", help="TOML file with defaults for any flag")
    p.add_argument("--method", help="comma-separated methods (OursN,OursU,JLNRSS,JLNRSSPlus,Split)")
    p.add_argument("--alpha", type=float, help="target error alpha")
    p.add_argument("--beta-prime", dest="beta_prime", type=float, help="joint failure probability")
    p.add_argument("--n", help="final dataset size(s), comma-separated")
    p.add_argument("--n0", type=int, help="fixed initial size (overrides --growth-ratio)")
    p.add_argument("--growth-ratio", dest="growth_ratio", type=float, help="n / n0")
    p.add_argument("--b", help="batch count(s), comma-separated")
    p.add_argument("--k", help="query count(s); when given, report alpha' instead of k_max")
    p.add_argument("--seed", type=int)
    p.add_argument("--restarts", type=int, help="optimizer restarts per evaluation")
    p.add_argument("--out", help="output CSV path ('-' for stdout)")


def build_parser():
    parser = argparse.ArgumentParser(prog="adagrow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bound", help="bound values or query capacities for a grid of settings")
    _add_common(p)

    p = sub.add_parser("sweep", help="grid sweep to CSV with an optional SVG chart")
    _add_common(p)
    p.add_argument("--axis", choices=["n", "b", "k"])
    p.add_argument("--svg", help="SVG chart path")

    p = sub.add_parser("simulate", help="run interactions and report empirical errors")
    _add_common(p)
    p.add_argument("--scenario", choices=["fixed", "attack", "filter"])
    p.add_argument("--domain-size", dest="domain_size", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--sigma", type=float, help="noise level (default: the bound's optimum)")
    p.add_argument("--target-rho", dest="target_rho", type=float)
    p.add_argument("--final-fraction", dest="final_fraction", type=float)
    p.add_argument("--report", help="JSON summary path")

    p = sub.add_parser("validate", help="run the oracle suite")
    p.add_argument("--inject-fault", action="store_true", help="perturb a posterior table")
    p.add_argument("--mc-trials", dest="mc_trials", type=int, default=10_000)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "validate":
            return cmd_validate(args)
        cfg = load_config(args)
        if args.command == "bound":
            return cmd_bound(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        return cmd_simulate(cfg, args)
    except (ConfigError, DomainError) as exc:
        print(f"adagrow: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"adagrow: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
