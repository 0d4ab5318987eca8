"""Command-line front end: sample, study-convergence, study-picard, verify.

Outputs per run directory:

* ``samples.f64`` -- row-major little-endian float64, d columns per row;
* ``report.json`` -- config (and its hash), seed, version, schedule, work
  accounting and metrics, enough to reproduce the run;
* ``metrics.csv`` -- frozen schema v1: ``metric,value,stderr,n,config_hash``.

Exit codes: 0 ok, 1 verification failure, 2 config error, 3 numerical
blow-up (with step provenance on stderr).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .corrector import run_corrector
from .errors import BlowUpError, SamplerError
from .metrics import (check_helper_lemmas, fit_order, tv_estimate, w2_empirical)
from .oracles import (fine_grid_shenlee_cov, fine_grid_uld_cov,
                      reference_ode_solve)
from .parallel import collocation_weight, run_parallel
from .pool import resolve_workers, sharded_score
from .predictor import run_predictor
from .logconcave import run_logconcave
from .rng import (RngStream, shenlee_noise_covariance,
                  uld_noise_covariance, uniform_midpoints)
from .schedules import (Schedule, make_logconcave_schedule,
                        make_parallel_schedule, make_sequential_schedule)
from .targets import (CorruptedScore, ExactScore, TargetModel,
                      sample_exact, target_from_config)

METRICS_SCHEMA = "metric,value,stderr,n,config_hash"
ALGORITHMS = ("seq", "parallel", "logconcave", "baseline-exp")


class ConfigError(SamplerError):
    pass


# ---------------------------------------------------------------------------
# Config handling
# ---------------------------------------------------------------------------

def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if "target" not in cfg or "algorithm" not in cfg:
        raise ConfigError("config needs 'target' and 'algorithm'")
    if cfg["algorithm"] not in ALGORITHMS:
        raise ConfigError(f"algorithm must be one of {ALGORITHMS}")
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def build_target(cfg: dict) -> TargetModel:
    try:
        return target_from_config(cfg["target"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad target config: {exc}") from exc


def build_schedule(cfg: dict, target: TargetModel) -> Schedule:
    algo = cfg["algorithm"]
    eps = float(cfg.get("eps", 0.3))
    consts = cfg.get("constants") or None
    L = float(cfg.get("L", target.L if target.L is not None
                      else target.lipschitz_bound()))
    m2 = float(cfg.get("m2", target.m2))
    if algo in ("seq", "baseline-exp"):
        return make_sequential_schedule(L, target.dim, eps, m2, consts)
    if algo == "parallel":
        beta = float(cfg.get("beta", 2.0))
        return make_parallel_schedule(L, target.dim, eps, m2, beta, consts)
    m = float(cfg.get("m", target.m if target.m is not None else 1.0))
    return make_logconcave_schedule(m, L, target.dim, eps, consts)


def make_score_source(target: TargetModel, cfg: dict, rng: RngStream):
    eps_sc = float(cfg.get("eps_sc", 0.0))
    if eps_sc > 0:
        return CorruptedScore(target, eps_sc, rng.child("score-corruption"))
    return ExactScore(target)


# ---------------------------------------------------------------------------
# Sequential driver (predictor-corrector blocks, then the geometric tail)
# ---------------------------------------------------------------------------

def run_sequential(target: TargetModel, schedule: Schedule, n: int,
                   rng: RngStream, score_source=None, workers: int | None = None,
                   method: str = "midpoint") -> np.ndarray:
    """Draw x ~ N(0, I), alternate predictor blocks with correctors, finish
    with the tail phase and a final corrector at time delta."""
    if schedule.mode != "sequential":
        raise ValueError("run_sequential needs a sequential-mode schedule")
    workers = resolve_workers(workers)
    base = score_source if score_source is not None else ExactScore(target)
    fn = sharded_score(base, workers)
    x = rng.child("init").normal(size=(n, target.dim))
    t = schedule.T
    for b, steps in enumerate(schedule.block_steps):
        state = run_predictor(x, t, steps, fn, rng.child("pred", b), method)
        t = state.t
        fixed = lambda xx, _t=t: fn(_t, xx)
        x = run_corrector(state.x, fixed, schedule.T_corr, schedule.h_corr,
                          schedule.gamma, rng.child("corr", b))
    if schedule.tail_steps:
        state = run_predictor(x, t, schedule.tail_steps, fn,
                              rng.child("pred-tail"), method)
        t = state.t
        fixed = lambda xx, _t=schedule.delta: fn(_t, xx)
        x = run_corrector(state.x, fixed, schedule.T_corr, schedule.h_corr,
                          schedule.gamma, rng.child("corr-tail"))
    return x


def run_algorithm(cfg: dict, target: TargetModel, schedule: Schedule,
                  rng: RngStream):
    """Dispatch; returns (samples, WorkReport | None)."""
    n = int(cfg.get("batch", 10_000))
    workers = cfg.get("workers")
    algo = cfg["algorithm"]
    source = make_score_source(target, cfg, rng)
    if algo == "seq":
        return run_sequential(target, schedule, n, rng.child("run"), source,
                              workers), None
    if algo == "baseline-exp":
        return run_sequential(target, schedule, n, rng.child("run"), source,
                              workers, method="exp"), None
    if algo == "parallel":
        x0 = rng.child("run", "init").normal(size=(n, target.dim))
        return run_parallel(x0, schedule, source, rng.child("run"), workers)
    return run_logconcave(target, schedule, n, rng.child("run"), workers), None


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def write_samples(path: Path, x: np.ndarray):
    path.write_bytes(np.ascontiguousarray(x, dtype="<f8").tobytes())


def append_metrics_csv(path: Path, rows: list[dict]):
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(METRICS_SCHEMA.split(","))
        for r in rows:
            writer.writerow([r["metric"], r["value"], r["stderr"], r["n"],
                             r["config_hash"]])


def measure(x: np.ndarray, target: TargetModel, chash: str) -> tuple[dict, list[dict]]:
    marv = target.noised(0.0)
    w2 = w2_empirical(x, target=marv)
    tv = tv_estimate(x, marv)
    summary = {
        "w2": {"value": w2.value, "stderr": w2.stderr,
               "gaussian_exact": w2.gaussian_exact},
        "tv_lower_bound": {"value": tv.value, "stderr": tv.stderr,
                           "gaussian_anchor": tv.gaussian_anchor},
    }
    n = x.shape[0]
    rows = [
        {"metric": "w2", "value": w2.value, "stderr": w2.stderr, "n": n,
         "config_hash": chash},
        {"metric": "tv_lower_bound", "value": tv.value, "stderr": tv.stderr,
         "n": n, "config_hash": chash},
    ]
    return summary, rows


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_sample(args) -> int:
    cfg = _merged_config(args)
    target = build_target(cfg)
    schedule = build_schedule(cfg, target)
    chash = config_hash(cfg)
    rng = RngStream(int(cfg["seed"]), ("run",))
    tic = time.perf_counter()
    x, work = run_algorithm(cfg, target, schedule, rng)
    elapsed = time.perf_counter() - tic
    out = Path(cfg.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    write_samples(out / "samples.f64", x)
    metrics, rows = measure(x, target, chash)
    report = {
        "version": f"midpoint-sampler {__version__}",
        "config": cfg,
        "config_hash": chash,
        "seed": int(cfg["seed"]),
        "schedule": json.loads(schedule.to_json()),
        "notes": _schedule_notes(cfg, target),
        "work": (work.as_dict() if work is not None else None),
        "elapsed_seconds": elapsed,
        "metrics": metrics,
    }
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    append_metrics_csv(out / "metrics.csv", rows)
    print(f"wrote {out / 'samples.f64'} ({x.shape[0]} x {x.shape[1]}), "
          f"tv_lower_bound={metrics['tv_lower_bound']['value']:.4f}")
    return 0


def _schedule_notes(cfg: dict, target: TargetModel) -> list[str]:
    notes = []
    m2 = float(cfg.get("m2", target.m2))
    if math.log(max(m2, 1e-12)) < 1.0:
        notes.append("log(m2) clamped to 1 in step-size formulas")
    return notes


def cmd_convergence_study(args) -> int:
    cfg = _merged_config(args)
    target = build_target(cfg)
    chash = config_hash(cfg)
    n = int(cfg.get("batch", 100_000))
    t_hi, t_lo = float(args.t_start), float(args.t_end)
    h_grid = [float(h) for h in args.h_grid.split(",")]
    rng = RngStream(int(cfg["seed"]), ("study-convergence",))
    x0 = sample_exact(target, t_hi, n, rng.child("x0"))
    n_ref = max(200, int(math.ceil((t_hi - t_lo) / (min(h_grid) / 100.0))))
    ref = reference_ode_solve(target, x0, t_hi, t_lo, n_ref)
    source = make_score_source(target, cfg, rng)
    marv = target.noised(t_lo)
    out = Path(cfg.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    rows, table = [], []
    for method, name in (("midpoint", "seq"), ("exp", "baseline-exp")):
        errs = []
        for h in h_grid:
            steps = [h] * int(round((t_hi - t_lo) / h))
            state = run_predictor(x0, t_hi, steps, source,
                                  rng.child("run", name, str(h)), method)
            w2 = w2_empirical(state.x, batch_b=ref)
            tv = tv_estimate(state.x, marv, rng=rng.child("tv", name, str(h)))
            errs.append(w2.value)
            table.append({"algorithm": name, "h": h, "w2": w2.value,
                          "tv": tv.value})
            rows.append({"metric": f"w2[{name},h={h}]", "value": w2.value,
                         "stderr": w2.stderr, "n": n, "config_hash": chash})
        fit = fit_order(h_grid, errs)
        table.append({"algorithm": name, "h": 0.0, "w2": float("nan"),
                      "tv": float("nan"), "order": fit.slope,
                      "ci": [fit.ci_low, fit.ci_high]})
    with open(out / "convergence.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["algorithm", "h", "w2", "tv",
                                                "order", "ci"])
        writer.writeheader()
        for r in table:
            writer.writerow(r)
    append_metrics_csv(out / "metrics.csv", rows)
    orders = {r["algorithm"]: r["order"] for r in table if "order" in r}
    (out / "convergence.json").write_text(json.dumps(
        {"config_hash": chash, "orders": orders, "table": table}, indent=2))
    print("fitted orders:", orders)
    return 0


def cmd_picard_study(args) -> int:
    from .oracles import reference_ode_solve_durations
    from .parallel import picard_init, picard_round

    cfg = _merged_config(args)
    target = build_target(cfg)
    chash = config_hash(cfg)
    n = int(cfg.get("batch", 4096))
    t_n, h, R = float(args.t), float(args.h), int(args.R)
    K = max(1, math.ceil(4.0 * math.log(R)))
    extra = int(args.extra_rounds)
    rng = RngStream(int(cfg["seed"]), ("study-picard",))
    x_n = sample_exact(target, t_n, n, rng.child("x0"))
    alphas = uniform_midpoints(rng.child("alpha"), R, n)
    source = make_score_source(target, cfg, rng)
    oracle = np.stack([
        reference_ode_solve_durations(target, x_n, t_n, alphas[:, i] * h, 100)
        for i in range(R)])
    lattice = picard_init(x_n, t_n, alphas, h, source)
    mses = [float(((lattice.estimates - oracle) ** 2).sum(axis=2).mean())]
    for _ in range(K + extra):
        lattice = picard_round(lattice, x_n, t_n, h, source)
        mses.append(float(((lattice.estimates - oracle) ** 2).sum(axis=2).mean()))
    floor = min(mses)
    ratios = [mses[k + 1] / mses[k] for k in range(len(mses) - 1)]
    pre_floor = [k for k in range(len(ratios)) if mses[k] > 2.0 * floor]
    if len(pre_floor) >= 2:
        ks = np.array(pre_floor, dtype=float)
        slope = np.polyfit(ks, np.log([mses[k] for k in pre_floor]), 1)[0]
        factor = float(math.exp(slope))
    else:
        factor = ratios[0] if ratios else float("nan")
    out = Path(cfg.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "picard.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "mse", "ratio"])
        for k, mse in enumerate(mses):
            writer.writerow([k, mse, ratios[k - 1] if k else ""])
    payload = {"config_hash": chash, "t": t_n, "h": h, "R": R, "K": K,
               "mse": mses, "contraction_factor": factor, "floor": floor,
               "reached_floor_by_K": bool(mses[min(K, len(mses) - 1)] <= 2.0 * floor)}
    (out / "picard.json").write_text(json.dumps(payload, indent=2))
    print(f"contraction factor {factor:.3f}, floor {floor:.3e}, "
          f"K={K} reaches floor: {payload['reached_floor_by_K']}")
    return 0


def _verify_checks(cfg: dict, target: TargetModel, n_paths: int,
                   rng: RngStream) -> list[dict]:
    checks: list[dict] = []

    def add(name, ok, detail):
        checks.append({"name": name, "ok": bool(ok), "detail": detail})

    # Noise-covariance oracles: closed forms vs fine-grid simulation.
    for gamma, delta in ((1.0, 1.0), (2.0, 0.25), (math.sqrt(8.0), 0.35)):
        var_x, var_v, cov_xv = uld_noise_covariance(delta, gamma)
        emp = fine_grid_uld_cov(gamma, delta, n_paths, 2000,
                                rng.child("uld-em", str(gamma), str(delta)))
        ref = np.array([[var_x, cov_xv], [cov_xv, var_v]])
        rel = float(np.max(np.abs(emp - ref) / np.abs(ref)))
        add(f"uld_noise_cov(gamma={gamma:.3g},delta={delta})", rel <= 0.02,
            {"max_rel_err": rel})
    for alpha, h in ((0.5, 0.1), (0.25, 0.3), (0.9, 0.05)):
        c11, c22, c33, c12, c13, c23 = (
            float(np.asarray(v).ravel()[0])
            for v in shenlee_noise_covariance(alpha, h))
        ref = np.array([[c11, c12, c13], [c12, c22, c23], [c13, c23, c33]])
        emp = fine_grid_shenlee_cov(alpha, h, n_paths, 2000,
                                    rng.child("sl-em", str(alpha), str(h)))
        rel = float(np.max(np.abs(emp - ref) / np.abs(ref)))
        add(f"shenlee_noise_cov(alpha={alpha},h={h})", rel <= 0.02,
            {"max_rel_err": rel})

    # Randomized-midpoint unbiasedness: E_alpha[h e^{(1-alpha)h}] = e^h - 1.
    for h in (0.05, 0.2):
        al = rng.child("unbias", str(h)).uniform(size=1_000_000)
        vals = h * np.exp((1.0 - al) * h)
        se = vals.std(ddof=1) / math.sqrt(vals.size)
        gap = abs(vals.mean() - math.expm1(h))
        add(f"midpoint_unbiasedness(h={h})", gap <= 4.0 * se,
            {"gap": float(gap), "stderr": float(se)})

    # Collocation telescoping: sum_j w_ij = e^{alpha_i h} - 1.
    tele_ok, worst = True, 0.0
    for trial in range(20):
        g = rng.child("telescope", trial).gen
        R = int(g.integers(1, 40))
        h = float(g.uniform(0.01, 0.5))
        alphas = uniform_midpoints(rng.child("telescope-alpha", trial), R, 1)[0]
        delta = h / R
        for i in range(1, R + 1):
            tot = sum(collocation_weight(i, j, h, delta, alphas[i - 1])
                      for j in range(1, i + 1))
            gap = abs(tot - math.expm1(alphas[i - 1] * h))
            worst = max(worst, gap)
            tele_ok &= gap < 1e-12
    add("collocation_telescoping", tele_ok, {"worst_gap": worst})

    # Helper lemmas on the configured target.
    for row in check_helper_lemmas(target, n=min(n_paths, 100_000),
                                   rng=rng.child("lemmas")):
        add(f"{row['check']}(t={row['t']})", row["ok"],
            {"value": row["value"], "bound": row["bound"]})
    return checks


def cmd_verify(args) -> int:
    cfg = _merged_config(args)
    target = build_target(cfg)
    rng = RngStream(int(cfg["seed"]), ("verify",))
    checks = _verify_checks(cfg, target, int(args.paths), rng)
    out = Path(cfg.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    ok = all(c["ok"] for c in checks)
    (out / "verify.json").write_text(json.dumps(
        {"ok": ok, "checks": checks, "config_hash": config_hash(cfg)},
        indent=2, sort_keys=True))
    for c in checks:
        print(f"[{'PASS' if c['ok'] else 'FAIL'}] {c['name']}")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

CONSTANT_FLAGS = {
    "c_T": "T", "c_delta": "delta", "c_hpred": "h_pred", "c_hcorr": "h_corr",
    "c_tcorr": "T_corr", "c_gamma": "gamma", "c_hwin": "h_win", "c_R": "R",
    "c_K": "K", "c_rcorr": "R_corr", "c_hrand": "h_rand", "c_nrand": "N_rand",
}


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", required=True, help="JSON run config")
    p.add_argument("--seed", type=int, default=None, help="64-bit RNG seed")
    p.add_argument("--workers", type=int, default=None,
                   help="worker threads (falls back to $MIDPOINT_SAMPLER_THREADS)")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--batch", type=int, default=None, help="particle count")
    for flag, name in CONSTANT_FLAGS.items():
        p.add_argument(f"--{flag.replace('_', '-')}", dest=flag, type=float,
                       default=None, help=f"override constant {name}")


def _merged_config(args) -> dict:
    cfg = load_config(args.config)
    for key in ("seed", "workers", "out", "batch"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    cfg.setdefault("seed", 0)
    consts = dict(cfg.get("constants") or {})
    for flag, name in CONSTANT_FLAGS.items():
        val = getattr(args, flag, None)
        if val is not None:
            consts[name] = val
    if consts:
        cfg["constants"] = consts
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="midpoint-sampler")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="run a sampler end to end")
    _add_common(p)
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("study-convergence", help="step-size sweep vs RK4 oracle")
    _add_common(p)
    p.add_argument("--h-grid", default="0.1,0.05,0.025,0.0125")
    p.add_argument("--t-start", type=float, default=1.0)
    p.add_argument("--t-end", type=float, default=0.5)
    p.set_defaults(fn=cmd_convergence_study)

    p = sub.add_parser("study-picard", help="per-round Picard error table")
    _add_common(p)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--h", type=float, default=0.25)
    p.add_argument("--R", type=int, default=32)
    p.add_argument("--extra-rounds", type=int, default=6)
    p.set_defaults(fn=cmd_picard_study)

    p = sub.add_parser("verify", help="run the numerical property suite")
    _add_common(p)
    p.add_argument("--paths", type=int, default=1_000_000,
                   help="paths per fine-grid noise oracle")
    p.set_defaults(fn=cmd_verify)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except BlowUpError as exc:
        print(f"numerical blow-up: {exc} (t={exc.t}, step={exc.step})",
              file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
