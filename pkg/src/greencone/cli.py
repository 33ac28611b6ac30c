"""Configuration-driven command line for the verification experiments.

Subcommands: cone-check, green, weak-kam, verify-theorem, semiconcavity,
action-hessian.  Configuration comes from an INI file (sections below) with
flag overrides; outputs are a report.json with stable key order plus CSV
series and the kernel binary.

Exit codes: 0 pass, 2 configuration error, 3 mathematical failure
(conjugate point, non-convergence, failed verification).

Config file sections and defaults::

    [system]            [grid]              [green]
    name = pendulum     resolution = 256    t_max = 4.0
    cohomology = 0.0    t_step = 0.5        tail_tol = 1e-8
    params =            n_segments = 0      # 0 = module default

    [verify]                        [run]
    epsilon = 1e-3                  seed = 12345
    window_min = 1e-3               out = out
    window_max = 1e-2               threads = 1
    t_max = 2.0                     trials = 10000
    tail_tol = 1.0
    i_set_floor = -1                # < 0 = automatic

    [tolerances]
    tol_order = 1e-10
    solve_tol = 1e-9
    hessian_tol = 1e-3
"""

from __future__ import annotations

import argparse
import configparser
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, GreenconeError
from .green_dynamics import SYSTEMS, PhasePoint, green_limits, orbit
from .reporting import (
    inputs_digest,
    ladder_csv_rows,
    make_report,
    orbit_csv_rows,
    solution_csv_rows,
    verify_report_extra,
    write_csv,
    write_report,
)
from .suites import CONE_SUITES, SEMICONCAVITY_SUITES
from .weak_kam import (
    action_hessian_check,
    build_kernel,
    conjugate_pair,
    save_kernel,
    verify_theorem,
    weak_kam_solve,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MATH = 3


@dataclass
class ExperimentConfig:
    system: str = "pendulum"
    cohomology: float = 0.0
    params: tuple = ()
    resolution: int = 256
    t_step: float = 0.5
    n_segments: int = 0
    green_t_max: float = 4.0
    green_tail_tol: float = 1e-8
    epsilon: float = 1e-3
    window_min: float = 1e-3
    window_max: float = 1e-2
    verify_t_max: float = 2.0
    verify_tail_tol: float = 1.0
    i_set_floor: float = -1.0
    tol_order: float = 1e-10
    solve_tol: float = 1e-9
    hessian_tol: float = 1e-3
    seed: int = 12345
    out: str = "out"
    threads: int = 1
    trials: int = 10000

    def validate(self) -> None:
        if self.system not in SYSTEMS:
            raise ConfigError(f"unknown system {self.system!r}; known: {sorted(SYSTEMS)}")
        for name in ("t_step", "green_t_max", "epsilon", "window_min", "window_max",
                     "verify_t_max", "verify_tail_tol", "tol_order", "solve_tol",
                     "green_tail_tol", "hessian_tol"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.window_min >= self.window_max:
            raise ConfigError("window_min must be below window_max")
        if self.resolution < 16:
            raise ConfigError("resolution must be at least 16")
        if self.threads < 1 or self.trials < 1:
            raise ConfigError("threads and trials must be at least 1")

    def echo(self) -> dict:
        return {f.name: getattr(self, f.name) if f.name != "params" else list(self.params)
                for f in fields(self)}

    def make_system(self):
        factory = SYSTEMS[self.system]
        c = self.cohomology
        if self.system in ("free2d", "product"):
            cvec = [c, c]
            if self.params and self.system == "product":
                return factory(*self.params, c=cvec)
            return factory(c=cvec)
        if self.params:
            return factory(*self.params, c=c)
        return factory(c=c)


_CONFIG_LAYOUT = {
    "system": {"name": ("system", str), "cohomology": ("cohomology", float),
               "params": ("params", "floats")},
    "grid": {"resolution": ("resolution", int), "t_step": ("t_step", float),
             "n_segments": ("n_segments", int)},
    "green": {"t_max": ("green_t_max", float), "tail_tol": ("green_tail_tol", float)},
    "verify": {"epsilon": ("epsilon", float), "window_min": ("window_min", float),
               "window_max": ("window_max", float), "t_max": ("verify_t_max", float),
               "tail_tol": ("verify_tail_tol", float), "i_set_floor": ("i_set_floor", float)},
    "tolerances": {"tol_order": ("tol_order", float), "solve_tol": ("solve_tol", float),
                   "hessian_tol": ("hessian_tol", float)},
    "run": {"seed": ("seed", int), "out": ("out", str), "threads": ("threads", int),
            "trials": ("trials", int)},
}


def load_config(path: str | None) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file {path!r} not found")
    for section, keys in _CONFIG_LAYOUT.items():
        if not parser.has_section(section):
            continue
        for key, value in parser[section].items():
            if key not in keys:
                raise ConfigError(f"unknown config key [{section}] {key}")
            attr, typ = keys[key]
            try:
                if typ == "floats":
                    parsed = tuple(float(v) for v in value.split(",") if v.strip())
                else:
                    parsed = typ(value)
            except ValueError as exc:
                raise ConfigError(f"bad value for [{section}] {key}: {value!r}") from exc
            setattr(cfg, attr, parsed)
    return cfg


def _apply_overrides(cfg: ExperimentConfig, args) -> None:
    for flag, attr in (
        ("seed", "seed"), ("out", "out"), ("resolution", "resolution"),
        ("t_step", "t_step"), ("epsilon", "epsilon"), ("threads", "threads"),
        ("trials", "trials"), ("cohomology", "cohomology"),
    ):
        val = getattr(args, flag, None)
        if val is not None:
            setattr(cfg, attr, val)


def _suite_scaled(trials: int) -> dict:
    """Per-suite trial counts derived from the configured budget."""
    return {
        "cone_equivalence": trials,
        "slope_oracle_1d": trials,
        "well_definedness": max(200, trials // 10),
        "decompose_nonneg": trials,
        "symplectic_invariance": max(1000, trials // 10),
        "degenerate_reduction": max(200, trials // 20),
        "ball_cone_identity": trials,
        "concavity_shift": max(100, trials // 20),
        "gradient_bound": max(100, trials // 100),
        "isotropic_lipschitz": max(50, trials // 200),
    }


def _run_suites(suite_fns, cfg: ExperimentConfig) -> list[dict]:
    budget = _suite_scaled(cfg.trials)
    checks = []
    for fn in suite_fns:
        name = fn.__name__.removeprefix("suite_")
        key = {"decompose": "decompose_nonneg", "ball_cone": "ball_cone_identity"}.get(name, name)
        n = budget[key]
        rec = fn(cfg.seed, n)
        checks.append({
            "name": rec.name,
            "inputs_digest": inputs_digest(rec.name, cfg.seed, n),
            "margin": rec.margin,
            "pass": rec.passed,
            "trials": rec.trials,
            "detail": rec.detail,
        })
    return checks


def cmd_cone_check(cfg: ExperimentConfig, args) -> int:
    t0 = time.perf_counter()
    checks = _run_suites(CONE_SUITES, cfg)
    report = make_report("cone-check", cfg.echo(), checks, timing=time.perf_counter() - t0)
    write_report(report, Path(cfg.out) / "report.json")
    return EXIT_OK if report["pass"] else EXIT_MATH


def cmd_semiconcavity(cfg: ExperimentConfig, args) -> int:
    t0 = time.perf_counter()
    checks = _run_suites(SEMICONCAVITY_SUITES, cfg)
    report = make_report("semiconcavity", cfg.echo(), checks, timing=time.perf_counter() - t0)
    write_report(report, Path(cfg.out) / "report.json")
    return EXIT_OK if report["pass"] else EXIT_MATH


def cmd_green(cfg: ExperimentConfig, args) -> int:
    t0 = time.perf_counter()
    sys_obj = cfg.make_system()
    x = np.array(args.x if args.x is not None else [0.0] * sys_obj.n)
    p = np.array(args.p if args.p is not None else [0.0] * sys_obj.n)
    t_max = args.t_max if args.t_max is not None else cfg.green_t_max
    if t_max <= 0:
        raise ConfigError("T_max must be positive")
    z = PhasePoint(x, p)
    out = Path(cfg.out)
    try:
        res = green_limits(sys_obj, z, T_max=t_max, tail_tol=cfg.green_tail_tol)
    except GreenconeError as exc:
        partial = getattr(exc, "partial", None)
        if partial:
            class _Partial:
                ladder = partial
                G_plus = partial[-1][1]
                G_minus = partial[-1][2]
                residual_plus = [float("nan")] * (len(partial) - 1)
                residual_minus = [float("nan")] * (len(partial) - 1)
            header, rows = ladder_csv_rows(_Partial)
            write_csv(out / "ladder.csv", header, rows)
        report = make_report("green", cfg.echo(), [{
            "name": "green_limits", "inputs_digest": inputs_digest(x, p, t_max),
            "margin": float("nan"), "pass": False, "detail": str(exc),
        }], timing=time.perf_counter() - t0)
        write_report(report, out / "report.json")
        print(f"green: {exc}", file=sys.stderr)
        return EXIT_MATH
    header, rows = ladder_csv_rows(res)
    write_csv(out / "ladder.csv", header, rows)
    rows_orbit = orbit(sys_obj, z, np.linspace(0.0, t_max, 65))
    oh, orows = orbit_csv_rows(rows_orbit, sys_obj.n)
    write_csv(out / "orbit.csv", oh, orows)
    checks = [{
        "name": "green_limits",
        "inputs_digest": inputs_digest(x, p, t_max, cfg.green_tail_tol),
        "margin": float(min(res.residual_plus[-1], res.residual_minus[-1]))
        if res.residual_plus else 0.0,
        "pass": True,
        "detail": f"converged at t={res.converged_at:g}, orientation {res.orientation}",
    }]
    extra = {
        "green": {
            "G_plus": res.G_plus.a.ravel().tolist(),
            "G_minus": res.G_minus.a.ravel().tolist(),
            "T_max": res.T_max,
            "converged_at": res.converged_at,
            "separation_min": res.separation_min,
        }
    }
    report = make_report("green", cfg.echo(), checks, extra=extra,
                         timing=time.perf_counter() - t0)
    write_report(report, out / "report.json")
    return EXIT_OK


def _build_artifacts(cfg: ExperimentConfig):
    sys_obj = cfg.make_system()
    n_seg = cfg.n_segments if cfg.n_segments > 0 else None
    kernel = build_kernel(sys_obj, cfg.resolution, cfg.t_step,
                          n_segments=n_seg, threads=cfg.threads)
    sol = weak_kam_solve(sys_obj, cfg.resolution, cfg.t_step, kernel=kernel,
                         tol=cfg.solve_tol)
    floor = None if cfg.i_set_floor < 0 else cfg.i_set_floor
    pair = conjugate_pair(sys_obj, sol, kernel=kernel, tol=cfg.solve_tol,
                          i_set_floor=floor)
    return sys_obj, kernel, sol, pair


def cmd_weak_kam(cfg: ExperimentConfig, args) -> int:
    t0 = time.perf_counter()
    out = Path(cfg.out)
    try:
        sys_obj, kernel, sol, pair = _build_artifacts(cfg)
    except GreenconeError as exc:
        report = make_report("weak-kam", cfg.echo(), [{
            "name": "weak_kam_solve", "inputs_digest": inputs_digest(cfg.system, cfg.resolution),
            "margin": float("nan"), "pass": False, "detail": str(exc),
        }], timing=time.perf_counter() - t0)
        write_report(report, out / "report.json")
        print(f"weak-kam: {exc}", file=sys.stderr)
        return EXIT_MATH
    header, rows = solution_csv_rows(pair)
    write_csv(out / "solution.csv", header, rows)
    save_kernel(kernel, out / "kernel.bin")
    checks = [
        {
            "name": "weak_kam_solve",
            "inputs_digest": inputs_digest(cfg.system, cfg.cohomology, cfg.resolution, cfg.t_step),
            "margin": float(cfg.solve_tol - sol.residual),
            "pass": sol.residual <= cfg.solve_tol,
            "detail": f"c={sol.c!r}, iterations={sol.iterations}",
        },
        {
            "name": "conjugate_pair",
            "inputs_digest": inputs_digest(cfg.system, cfg.cohomology, cfg.resolution),
            "margin": float(np.max(sol.u.flat() - pair.w.flat())),
            "pass": True,
            "detail": f"I_set size {pair.I_set.m}, lipschitz {pair.lipschitz:.3f}",
        },
    ]
    extra = {
        "weak_kam": {
            "c": sol.c,
            "c_spread": sol.c_spread,
            "residual": sol.residual,
            "iterations": sol.iterations,
            "gap_max": float(np.max(pair.gap.flat())),
            "i_set_size": int(pair.I_set.m),
            "lipschitz": pair.lipschitz,
        }
    }
    report = make_report("weak-kam", cfg.echo(), checks, extra=extra,
                         timing=time.perf_counter() - t0)
    write_report(report, out / "report.json")
    return EXIT_OK if report["pass"] else EXIT_MATH


def cmd_verify_theorem(cfg: ExperimentConfig, args) -> int:
    t0 = time.perf_counter()
    out = Path(cfg.out)
    try:
        sys_obj, kernel, sol, pair = _build_artifacts(cfg)
        base_index = None
        if args.base_x is not None:
            dx = (pair.I_set.xs[:, 0] - args.base_x + 0.5) % 1.0 - 0.5
            base_index = int(np.argmin(np.abs(dx)))
        rep = verify_theorem(
            sys_obj, pair, epsilon=cfg.epsilon,
            window=(cfg.window_min, cfg.window_max), base_index=base_index,
            green_t_max=cfg.verify_t_max, green_tail_tol=cfg.verify_tail_tol,
            adversarial=args.adversarial, seed=cfg.seed,
        )
        green_res = green_limits(sys_obj, rep.base, T_max=cfg.verify_t_max,
                                 tail_tol=cfg.verify_tail_tol)
    except GreenconeError as exc:
        report = make_report("verify-theorem", cfg.echo(), [{
            "name": "verify_theorem", "inputs_digest": inputs_digest(cfg.system, cfg.epsilon),
            "margin": float("nan"), "pass": False, "detail": str(exc),
        }], timing=time.perf_counter() - t0)
        write_report(report, out / "report.json")
        print(f"verify-theorem: {exc}", file=sys.stderr)
        return EXIT_MATH
    header, rows = ladder_csv_rows(green_res)
    write_csv(out / "ladder.csv", header, rows)
    header, rows = solution_csv_rows(pair)
    write_csv(out / "solution.csv", header, rows)
    checks = [{
        "name": "paratingent_in_cone",
        "inputs_digest": inputs_digest(cfg.system, cfg.cohomology, cfg.epsilon,
                                       cfg.window_min, cfg.window_max, args.adversarial),
        "margin": rep.worst_margin if rep.n_directions else float("inf"),
        "pass": rep.all_pass,
        "detail": rep.note or f"{rep.n_directions} directions, base x={rep.base.x.tolist()}",
    }, {
        "name": "modified_cone_consistency",
        "inputs_digest": inputs_digest(cfg.system, cfg.cohomology, cfg.epsilon, "modified"),
        "margin": rep.worst_margin_modified if rep.n_directions else float("inf"),
        "pass": rep.all_pass_modified or not rep.all_pass,
        "detail": "every direction passing the Green cone passes the modified cone",
    }]
    report = make_report("verify-theorem", cfg.echo(), checks,
                         extra=verify_report_extra(rep), timing=time.perf_counter() - t0)
    write_report(report, out / "report.json")
    return EXIT_OK if report["pass"] else EXIT_MATH


def cmd_action_hessian(cfg: ExperimentConfig, args) -> int:
    t0 = time.perf_counter()
    sys_obj = cfg.make_system()
    x = np.array(args.x if args.x is not None else [0.25] * sys_obj.n)
    p = np.array(args.p if args.p is not None else [2 * np.sin(np.pi * 0.25)] * sys_obj.n)
    T = args.T if args.T is not None else 1.0
    out = Path(cfg.out)
    try:
        rep = action_hessian_check(sys_obj, PhasePoint(x, p), T)
    except GreenconeError as exc:
        report = make_report("action-hessian", cfg.echo(), [{
            "name": "action_hessian", "inputs_digest": inputs_digest(x, p, T),
            "margin": float("nan"), "pass": False, "detail": str(exc),
        }], timing=time.perf_counter() - t0)
        write_report(report, out / "report.json")
        print(f"action-hessian: {exc}", file=sys.stderr)
        return EXIT_MATH
    checks = [{
        "name": "hessian_vs_green",
        "inputs_digest": inputs_digest(x, p, T),
        "margin": float(cfg.hessian_tol - max(rep.rel_22, rep.rel_11)),
        "pass": max(rep.rel_22, rep.rel_11) <= cfg.hessian_tol,
        "detail": f"rel_22={rep.rel_22:.3e}, rel_11={rep.rel_11:.3e}",
    }]
    extra = {
        "hessian": {
            "T": rep.T,
            "fd_22": rep.fd_22.ravel().tolist(),
            "fd_11": rep.fd_11.ravel().tolist(),
            "green_T": rep.green_T.a.ravel().tolist(),
            "green_minus_T": rep.green_minus_T.a.ravel().tolist(),
            "richardson_22": rep.richardson_22,
            "richardson_11": rep.richardson_11,
        }
    }
    report = make_report("action-hessian", cfg.echo(), checks, extra=extra,
                         timing=time.perf_counter() - t0)
    write_report(report, Path(cfg.out) / "report.json")
    return EXIT_OK if report["pass"] else EXIT_MATH


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="greencone",
                                     description="Green-bundle cone verification toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=str, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", type=str, default=None)
        p.add_argument("--resolution", type=int, default=None)
        p.add_argument("--t-step", dest="t_step", type=float, default=None)
        p.add_argument("--epsilon", type=float, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--trials", type=int, default=None)
        p.add_argument("--cohomology", type=float, default=None)

    p = sub.add_parser("cone-check", help="symplectic-cone property suites")
    common(p)
    p.set_defaults(func=cmd_cone_check)

    p = sub.add_parser("semiconcavity", help="semiconcavity property suites")
    common(p)
    p.set_defaults(func=cmd_semiconcavity)

    p = sub.add_parser("green", help="Green-bundle limits at a phase point")
    common(p)
    p.add_argument("--x", type=float, nargs="+", default=None)
    p.add_argument("--p", type=float, nargs="+", default=None)
    p.add_argument("--t-max", dest="t_max", type=float, default=None)
    p.set_defaults(func=cmd_green)

    p = sub.add_parser("weak-kam", help="solve, build the conjugate pair, extract the argmin set")
    common(p)
    p.set_defaults(func=cmd_weak_kam)

    p = sub.add_parser("verify-theorem", help="cone containment of paratingent directions")
    common(p)
    p.add_argument("--base-x", dest="base_x", type=float, default=None,
                   help="select the argmin-set sample nearest this coordinate")
    p.add_argument("--adversarial", action="store_true",
                   help="replace momenta by window-scale noise (control)")
    p.set_defaults(func=cmd_verify_theorem)

    p = sub.add_parser("action-hessian", help="finite-difference Hessians vs pre-Green matrices")
    common(p)
    p.add_argument("--x", type=float, nargs="+", default=None)
    p.add_argument("--p", type=float, nargs="+", default=None)
    p.add_argument("--T", type=float, default=None)
    p.set_defaults(func=cmd_action_hessian)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        _apply_overrides(cfg, args)
        cfg.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
