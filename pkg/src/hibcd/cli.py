"""Command-line runner: generate scenes, solve, evaluate, benchmark.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 I/O error.
"""

import argparse
import csv
import dataclasses
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from hibcd import cosmf, engine, io, metrics, sensing
from hibcd.engine import FPG, FW
from hibcd.errors import ConfigError, NumericalFailure

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

SCENE_FILES = ("Y_M", "Y_H", "F", "G", "A_true", "S_true")
TRACE_COLUMNS = ("iter", "elapsed_ms", "objective", "fw_gap_total", "fw_gap_A",
                 "fw_gap_S", "beta_or_gamma_A", "beta_or_gamma_S", "alpha_k", "descent_ok")
RULE_PAIRS = ((FPG, FPG), (FPG, FW), (FW, FW))
VARIANTS = (cosmf.PLAIN, cosmf.NNC)
EXTRAPOLATIONS = ("fista", "fista2", "constant", "none")


@dataclass
class ExperimentConfig:
    """Everything a command needs; built from a JSON file and/or flags."""

    preset: str = "desk"
    scene: str = None
    solution: str = None
    out: str = "runs/out"
    seed: int = 0
    snr_db: float = None
    variant: str = cosmf.PLAIN
    rules: tuple = (FPG, FW)
    N: int = None
    tau: object = None
    delta_A: float = None
    delta_S: float = None
    extrapolation: str = "fista"
    alpha_cap: float = 0.9999
    alpha_const: float = 0.0
    L_A: int = 1
    L_S: int = 1
    obj_tol: float = 1e-4
    max_iter: int = 3000
    gap_tol: float = None
    lo_tol: float = 1e-6
    track_gap: bool = True
    baseline: bool = False
    parallel: bool = False

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def validate(self):
        self.variant = str(self.variant).lower()
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if isinstance(self.rules, str):
            self.rules = tuple(self.rules.split(","))
        self.rules = tuple(str(r).strip().upper() for r in self.rules)
        if len(self.rules) != 2 or any(r not in (FPG, FW) for r in self.rules):
            raise ConfigError(f"rules must be two of FPG/FW, got {self.rules!r}")
        if self.variant == cosmf.NNC and self.tau is None:
            raise ConfigError("the nnc variant needs tau")
        if self.tau is not None and np.any(np.asarray(self.tau, dtype=float) <= 0):
            raise ConfigError("tau must be positive")
        if self.extrapolation not in EXTRAPOLATIONS:
            raise ConfigError(f"extrapolation must be one of {EXTRAPOLATIONS}")
        if not 0 <= self.alpha_cap < 1:
            raise ConfigError("alpha_cap must lie in [0, 1)")
        if int(self.L_A) < 1 or int(self.L_S) < 1:
            raise ConfigError("L_A and L_S must be >= 1")
        if int(self.max_iter) < 1:
            raise ConfigError("max_iter must be >= 1")
        for name in ("obj_tol", "gap_tol", "delta_A", "delta_S"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name} must be positive")
        if self.N is not None and int(self.N) < 1:
            raise ConfigError("N must be >= 1")
        return self

    def solve_config(self):
        return cosmf.SolveConfig(
            delta_A=self.delta_A, delta_S=self.delta_S, repeats_A=int(self.L_A),
            repeats_S=int(self.L_S), extrapolation=self.extrapolation,
            alpha_cap=self.alpha_cap, alpha_const=self.alpha_const,
            obj_tol=self.obj_tol, max_iter=int(self.max_iter), gap_tol=self.gap_tol,
            track_gap=self.track_gap, lo_tol=self.lo_tol)


# scene files

def _scene_overrides(cfg):
    over = {}
    if cfg.snr_db is not None:
        over["snr_db"] = cfg.snr_db
    if cfg.N is not None:
        over["N"] = int(cfg.N)
    return over


def build_scene(cfg):
    try:
        return sensing.wald_scene(cfg.preset, seed=int(cfg.seed), **_scene_overrides(cfg))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def write_scene(scene, out, preset=None, seed=None):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    G = scene.G
    io.write_matrix(out / "Y_M", scene.Y_M, "Y_M")
    io.write_matrix(out / "Y_H", scene.Y_H, "Y_H")
    io.write_matrix(out / "F", scene.F, "F")
    io.write_matrix(out / "G", io.operator_to_matrix(G), "G")
    io.write_matrix(out / "A_true", scene.truth.A, "A_true")
    io.write_matrix(out / "S_true", scene.truth.S, "S_true")
    manifest = {
        "preset": preset,
        "seed": seed,
        "noise_seed": scene.seed,
        "N": scene.N,
        "M": int(scene.Y_H.shape[0]),
        "M_M": int(scene.Y_M.shape[0]),
        "L_x": G.L_x, "L_y": G.L_y, "factor": G.factor,
        "kernel_width": G.kernel_width, "sigma": G.sigma,
        "snr_db": _snr_pair(scene.snr_db),
        "realized_snr_db": _snr_pair(scene.realized_snr_db),
        "files": list(SCENE_FILES),
    }
    io.write_json(out / "manifest.json", manifest)
    return manifest


def _snr_pair(pair):
    """``{"Y_M": ..., "Y_H": ...}`` with non-finite values as strings."""
    if np.ndim(pair) == 0:
        pair = (pair, pair)
    return {k: (float(v) if v is not None and math.isfinite(v) else str(v))
            for k, v in zip(("Y_M", "Y_H"), pair)}


def _snr_tuple(d):
    return tuple(float(d[k]) if d[k] != "None" else None for k in ("Y_M", "Y_H"))


def read_scene(path):
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
    except (OSError, ValueError) as exc:
        raise io.ContainerError(f"cannot read scene manifest in {path}: {exc}") from exc
    G = io.matrix_to_operator(io.read_matrix(path / "G"), manifest["L_x"], manifest["L_y"],
                              manifest["factor"], manifest["kernel_width"], manifest["sigma"])
    truth = sensing.GroundTruth(io.read_matrix(path / "A_true"), io.read_matrix(path / "S_true"))
    return sensing.ScenePair(io.read_matrix(path / "Y_M"), io.read_matrix(path / "Y_H"),
                             io.read_matrix(path / "F"), G, _snr_tuple(manifest["snr_db"]),
                             manifest["noise_seed"], manifest["N"], truth,
                             _snr_tuple(manifest["realized_snr_db"]))


def scene_from_config(cfg):
    return read_scene(cfg.scene) if cfg.scene else build_scene(cfg)


def _tau(cfg):
    if cfg.variant != cosmf.NNC:
        return None
    return cfg.tau


def make_problem(scene, cfg):
    N = int(cfg.N) if cfg.N is not None else scene.N
    try:
        return cosmf.CosmfProblem(scene.Y_M, scene.Y_H, scene.F, scene.G, N,
                                  variant=cfg.variant, tau=_tau(cfg))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# traces

def trace_rows(trace, n_blocks=2):
    """One dict per outer iteration with the columns of ``trace.csv``."""
    last = {}
    for s in trace.steps:
        last[(s.iter, s.block)] = s.value
    rows = []
    for r in trace.records:
        gaps = tuple(r.gaps) if r.gaps else (math.nan,) * n_blocks
        rows.append({
            "iter": r.iter,
            "elapsed_ms": r.elapsed * 1e3,
            "objective": r.objective,
            "fw_gap_total": r.gap_total,
            "fw_gap_A": gaps[0],
            "fw_gap_S": gaps[1],
            "beta_or_gamma_A": last.get((r.iter, 0), math.nan),
            "beta_or_gamma_S": last.get((r.iter, 1), math.nan),
            "alpha_k": r.alpha,
            "descent_ok": int(bool(r.descent_ok)),
        })
    return rows


def write_trace(trace, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS)
        w.writeheader()
        for row in trace_rows(trace):
            w.writerow({k: (repr(float(v)) if isinstance(v, float) else v)
                        for k, v in row.items()})
    return path


# commands

def cmd_generate(cfg):
    scene = build_scene(cfg)
    manifest = write_scene(scene, cfg.out, cfg.preset, int(cfg.seed))
    snr = manifest["realized_snr_db"]
    print(f"wrote scene to {cfg.out}; realized SNR MS {snr['Y_M']} dB, HS {snr['Y_H']} dB")
    return manifest


def cmd_solve(cfg):
    scene = scene_from_config(cfg)
    problem = make_problem(scene, cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        sol = cosmf.solve(problem, *cfg.rules, cfg.solve_config(), seed=int(cfg.seed))
    except NumericalFailure as exc:
        if exc.trace is not None:
            exc.trace.stop_reason = "numerical_failure"
            write_trace(exc.trace, out / "trace.csv")
        raise
    io.write_matrix(out / "A", sol.A, "A")
    io.write_matrix(out / "S", sol.S, "S")
    io.write_matrix(out / "X_hat", sol.X_hat, "X_hat")
    write_trace(sol.trace, out / "trace.csv")
    summary = {
        "stop_reason": sol.trace.stop_reason,
        "iterations": sol.iterations,
        "objective": sol.objective,
        "elapsed_s": sol.trace.elapsed,
        "rules": list(sol.rules),
        "variant": sol.variant,
        "deltas": list(sol.deltas),
        "tau": None if problem.tau is None else [float(t) for t in problem.tau],
        "seed": int(cfg.seed),
    }
    io.write_json(out / "summary.json", summary)
    print(f"{sol.rules[0]}-{sol.rules[1]} {sol.variant}: {sol.iterations} iterations, "
          f"objective {sol.objective:.6g}, stop {sol.trace.stop_reason}")
    return sol


def evaluation_report(scene, X_hat, objective=None, baseline=False):
    X = scene.truth.X
    rep = metrics.evaluate(X, X_hat, scene.Y_M.shape[0]).as_dict()
    if objective is not None:
        rep["objective"] = float(objective)
    if baseline:
        G = scene.G
        naive = metrics.naive_interpolation(scene.Y_H, G.L_x, G.L_y, G.factor)
        rep["baseline_naive"] = metrics.evaluate(X, naive, scene.Y_M.shape[0]).as_dict()
    return rep


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def cmd_evaluate(cfg):
    if not cfg.solution:
        raise ConfigError("evaluate needs a solution directory")
    scene = scene_from_config(cfg)
    sol_dir = Path(cfg.solution)
    X_hat = io.read_matrix(sol_dir / "X_hat")
    objective = None
    summary = sol_dir / "summary.json"
    if summary.exists():
        objective = json.loads(summary.read_text()).get("objective")
    rep = _json_safe(evaluation_report(scene, X_hat, objective, cfg.baseline))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(out / "report.json", rep)
    print(json.dumps({k: rep[k] for k in ("sam_mean_deg", "psnr_mean_db", "ergas")},
                     sort_keys=True))
    return rep


BENCH_COLUMNS = ("variant", "rules", "time_s", "iterations", "time_per_iter_ms",
                 "objective", "ergas", "sam_deg")


def _bench_one(args):
    scene, cfg, variant, rules = args
    c = dataclasses.replace(cfg, variant=variant, rules=rules, track_gap=False)
    problem = make_problem(scene, c)
    sol = cosmf.solve(problem, *rules, c.solve_config(), seed=int(c.seed))
    rep = metrics.evaluate(scene.truth.X, sol.X_hat, scene.Y_M.shape[0])
    t = sol.trace.elapsed
    return {"variant": variant, "rules": f"{rules[0]}-{rules[1]}", "time_s": t,
            "iterations": sol.iterations,
            "time_per_iter_ms": 1e3 * t / max(sol.iterations, 1),
            "objective": sol.objective, "ergas": rep.ergas, "sam_deg": rep.sam_mean_deg}


def format_table(rows):
    head = f"{'variant':<8}{'rules':<9}{'time[s]':>10}{'iters':>7}{'ms/iter':>10}" \
           f"{'objective':>13}{'ERGAS':>9}{'SAM[deg]':>10}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r['variant']:<8}{r['rules']:<9}{r['time_s']:>10.3f}{r['iterations']:>7d}"
                     f"{r['time_per_iter_ms']:>10.3f}{r['objective']:>13.6g}{r['ergas']:>9.3f}"
                     f"{r['sam_deg']:>10.3f}")
    return "\n".join(lines)


def cmd_benchmark(cfg):
    """Every rule pair for both variants; NNC is skipped when ``tau`` is unset."""
    scene = scene_from_config(cfg)
    if cfg.tau is None and not cfg.scene:
        cfg = dataclasses.replace(cfg, tau=sensing.resolve_preset(cfg.preset).tau)
    variants = VARIANTS if cfg.tau is not None else (cosmf.PLAIN,)
    jobs = [(scene, cfg, v, r) for v in variants for r in RULE_PAIRS]
    if cfg.parallel:
        with ProcessPoolExecutor() as pool:
            rows = list(pool.map(_bench_one, jobs))
    else:
        rows = [_bench_one(j) for j in jobs]
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "benchmark.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS)
        w.writeheader()
        w.writerows(rows)
    table = format_table(rows)
    (out / "benchmark.txt").write_text(table + "\n")
    print(table)
    return rows


def cmd_recommend_repeats(rule, eta, rho_over_beta):
    try:
        bound = engine.inner_repeat_bound(rule, eta, rho_over_beta)
        rec = engine.recommend_inner_repeats(rule, eta, rho_over_beta)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    res = {"rule": rule.upper(), "eta": eta, "rho_over_beta": rho_over_beta,
           "bound": bound, "recommended": rec}
    print(json.dumps(res, sort_keys=True))
    return res


# argument handling

def _parser():
    p = argparse.ArgumentParser(prog="hibcd", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file with ExperimentConfig fields")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        sp.add_argument("--preset", choices=sorted(sensing.PRESETS))
        sp.add_argument("--snr-db", type=float, dest="snr_db")

    def solver(sp):
        sp.add_argument("--scene", help="scene directory written by 'generate'")
        sp.add_argument("--variant", choices=VARIANTS)
        sp.add_argument("--tau", type=float)
        sp.add_argument("--max-iter", type=int, dest="max_iter")
        sp.add_argument("--obj-tol", type=float, dest="obj_tol")
        sp.add_argument("--gap-tol", type=float, dest="gap_tol")

    common(sub.add_parser("generate", help="synthesize a scene"))
    sp = sub.add_parser("solve", help="run CoSMF on a scene")
    common(sp)
    solver(sp)
    sp.add_argument("--rules", help="update rules for A and S, e.g. FPG,FW")
    sp = sub.add_parser("evaluate", help="score a solution against ground truth")
    common(sp)
    sp.add_argument("--scene")
    sp.add_argument("--solution", required=True)
    sp.add_argument("--baseline", action="store_true", default=None,
                    help="also score naive bicubic interpolation")
    sp = sub.add_parser("benchmark", help="all rule pairs for both variants")
    common(sp)
    solver(sp)
    sp.add_argument("--parallel", action="store_true", default=None)
    sp = sub.add_parser("recommend-repeats", help="inner-repeat bound for a block")
    sp.add_argument("--rule", required=True)
    sp.add_argument("--eta", type=float, required=True)
    sp.add_argument("--rho-over-beta", type=float, default=0.0, dest="rho_over_beta")
    return p


def load_config(args):
    data = {}
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise io.ContainerError(f"cannot read config {args.config}: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    cfg = ExperimentConfig.from_dict(data)
    fields = {f.name for f in dataclasses.fields(ExperimentConfig)}
    for k, v in vars(args).items():
        if k in fields and v is not None:
            setattr(cfg, k, v)
    return cfg.validate()


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.command == "recommend-repeats":
            cmd_recommend_repeats(args.rule, args.eta, args.rho_over_beta)
            return EXIT_OK
        cfg = load_config(args)
        {"generate": cmd_generate, "solve": cmd_solve, "evaluate": cmd_evaluate,
         "benchmark": cmd_benchmark}[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
