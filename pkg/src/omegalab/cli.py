"""Config-driven command line for solves, barrier sweeps and MC checks.

Commands emit CSV (to --out prefix or stdout) with '#'-prefixed metadata
lines, a header row, '.' decimals and UTF-8 text.  Reruns with the same
config and seed are byte-identical.  Exit codes: 0 success, 2 config error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import control, mc, omega as omega_mod, volterra
from .errors import ConfigError, NumericError
from .levy import LevyModel, phi as phi_inverse
from .scale import W, Z, laplace_residual, scale_basis

log = logging.getLogger("omegalab")

SCHEMA_LINE = "# omegalab-csv v1"

DEFAULT_CONFIG = {
    "model": {"mu": 0.075, "sigma": 0.25, "lambda": 0.5,
              "jump_mix": [[1.0, 9.0]]},
    "q": 0.05,
    "omega": {"family": "parisian", "phi": 1.5, "a": -1.0},
    "solver": {"grid_step": 1e-3, "x_max": 3.0, "method": "marching"},
    "grid": {"x_min": -1.0, "x_max": 3.0, "step": 0.01},
    "mc": {"dt": 1e-3, "n_paths": 200000, "weight_floor": 1e-7,
           "seed": 1, "estimator": "discounted", "x0": [0.0, 0.5]},
}

PRESETS = {
    "parisian": {"omega": {"family": "parisian", "phi": 1.5, "a": -1.0}},
    "step-sweep": {"sweep": {"family": "step", "values": [0, 1, 2, 3, 4, 5]}},
    "affine-sweep": {"sweep": {"family": "affine",
                               "values": [-1.5, -1.0, -0.5, 0.0]}},
}

_ALLOWED = {
    "": {"model", "q", "omega", "solver", "sweep", "grid", "mc", "out"},
    "model": {"mu", "sigma", "lambda", "jump_mix"},
    "omega": {"family", "phi", "a", "n", "m", "pieces", "rho"},
    "solver": {"p", "grid_step", "x_max", "picard_tol", "picard_max_iter",
               "method"},
    "sweep": {"family", "values"},
    "grid": {"x_min", "x_max", "step"},
    "mc": {"dt", "n_paths", "weight_floor", "seed", "estimator", "b", "x0"},
}


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _check_keys(cfg: dict) -> None:
    for section, allowed in _ALLOWED.items():
        node = cfg if section == "" else cfg.get(section)
        if node is None:
            continue
        if not isinstance(node, dict):
            raise ConfigError(f"section '{section or 'root'}' must be an object")
        for key in node:
            if key not in allowed:
                raise ConfigError(f"unknown key '{key}' in section "
                                  f"'{section or 'root'}'")


def load_config(path: str | None, preset: str | None,
                overrides: dict | None = None) -> dict:
    cfg = dict(DEFAULT_CONFIG)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset '{preset}'; "
                              f"choose from {sorted(PRESETS)}")
        cfg = _merge(cfg, PRESETS[preset])
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                user = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} line {exc.lineno}: {exc.msg}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config root must be a JSON object")
        cfg = _merge(cfg, user)
    if overrides:
        cfg = _merge(cfg, overrides)
    _check_keys(cfg)
    return cfg


def _build_model(cfg: dict) -> LevyModel:
    m = cfg["model"]
    try:
        return LevyModel(mu=float(m["mu"]), sigma=float(m["sigma"]),
                         lam=float(m["lambda"]),
                         jump_mix=tuple((float(w), float(a))
                                        for w, a in m["jump_mix"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad model section: {exc}") from exc


def _build_rate(desc: dict) -> omega_mod.BankruptcyRate:
    fam = desc.get("family", "parisian")
    phi = float(desc.get("phi", 1.5))
    a = float(desc.get("a", -1.0))
    try:
        if fam == "parisian":
            return omega_mod.parisian(phi)
        if fam == "step":
            return omega_mod.step_family(int(desc["n"]), a, phi)
        if fam == "affine":
            return omega_mod.affine_family(float(desc["m"]), a, phi)
        if fam == "pieces":
            return omega_mod.from_pieces(a, desc["pieces"], phi,
                                         float(desc.get("rho", 0.0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad omega section: {exc}") from exc
    raise ConfigError(f"unknown omega family '{fam}'")


def _sweep_entries(cfg: dict) -> list[tuple[str, omega_mod.BankruptcyRate]]:
    sweep = cfg.get("sweep")
    base = cfg["omega"]
    if not sweep:
        return [(base.get("family", "parisian"), _build_rate(base))]
    fam = sweep.get("family")
    values = sweep.get("values", [])
    phi = float(base.get("phi", 1.5))
    a = float(base.get("a", -1.0))
    entries = []
    for v in values:
        if fam == "step":
            label = f"step_n{int(v)}"
            rate = (omega_mod.parisian(phi) if int(v) == 0
                    else omega_mod.step_family(int(v), a, phi))
        elif fam == "affine":
            label = f"affine_m{float(v):g}"
            rate = omega_mod.affine_family(float(v), a, phi)
        else:
            raise ConfigError(f"unknown sweep family '{fam}'")
        entries.append((label, rate))
    return entries


def _solver_config(cfg: dict) -> volterra.SolverConfig:
    s = cfg.get("solver", {})
    try:
        return volterra.SolverConfig(
            p=None if s.get("p") is None else float(s["p"]),
            grid_step=float(s.get("grid_step", 1e-3)),
            x_max=None if s.get("x_max") is None else float(s["x_max"]),
            picard_tol=float(s.get("picard_tol", 1e-12)),
            picard_max_iter=int(s.get("picard_max_iter", 500)),
            method=str(s.get("method", "marching")),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad solver section: {exc}") from exc


def _digest(cfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:12]


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


class _Writer:
    def __init__(self, cfg: dict, command: str, out_prefix: str | None):
        self.lines: list[str] = [SCHEMA_LINE,
                                 f"# command={command} config={_digest(cfg)}"]

        self.command = command
        self.out_prefix = out_prefix

    def meta(self, text: str) -> None:
        self.lines.append(f"# {text}")

    def header(self, *cols: str) -> None:
        self.lines.append(",".join(cols))

    def row(self, *vals) -> None:
        self.lines.append(",".join(_fmt(v) for v in vals))

    def flush(self) -> str:
        text = "\n".join(self.lines) + "\n"
        if self.out_prefix:
            path = f"{self.out_prefix}{self.command}.csv"
            os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
            return path
        sys.stdout.write(text)
        return "<stdout>"


def _output_grid(cfg: dict) -> np.ndarray:
    g = cfg.get("grid", {})
    lo = float(g.get("x_min", -1.0))
    hi = float(g.get("x_max", 3.0))
    step = float(g.get("step", 0.01))
    if step <= 0 or hi <= lo:
        raise ConfigError("grid requires step > 0 and x_max > x_min")
    n = int(round((hi - lo) / step))
    return lo + step * np.arange(n + 1)


def cmd_scale(cfg: dict, out_prefix: str | None) -> int:
    model = _build_model(cfg)
    q = float(cfg["q"])
    phi = float(cfg["omega"].get("phi", 1.5))
    basis = scale_basis(model, q)
    s = q + phi
    phi_s = phi_inverse(model, s)
    resid = laplace_residual(model, basis, phi_inverse(model, q) + 1.0)
    xs = _output_grid(cfg)
    w = _Writer(cfg, "scale", out_prefix)
    w.meta(f"q={q!r} phi={phi!r} roots={[repr(r) for r in basis.roots]}")
    w.header("x", "W", "W1", "Z", "lt_resid")
    wv = W(basis, xs)
    w1 = W(basis, xs, deriv=1)
    zv = Z(basis, xs, s, phi_s)
    for i, x in enumerate(xs):
        w.row(float(x), float(wv[i]), float(w1[i]), float(zv[i]), resid)
    path = w.flush()
    log.info("scale table written to %s", path)
    return 0


def _solve_for(cfg: dict, rate: omega_mod.BankruptcyRate):
    q = float(cfg["q"])
    return volterra.solve_H(_build_model(cfg), rate.shifted(q),
                            _solver_config(cfg))


def cmd_omega(cfg: dict, out_prefix: str | None) -> int:
    entries = _sweep_entries(cfg)
    label, rate = entries[0]
    table = _solve_for(cfg, rate)
    w = _Writer(cfg, "omega", out_prefix)
    m = table.meta
    w.meta(f"omega={label} p={m.p!r} method={m.method} "
           f"iterations={m.iterations} increment={m.increment!r} "
           f"grid_step={m.grid_step!r}")
    w.header("x", "H", "H1", "H2")
    for i, x in enumerate(table.grid):
        w.row(float(x), float(table.H[i]), float(table.H1[i]),
              float(table.H2[i]))
    path = w.flush()
    log.info("omega scale table written to %s", path)
    return 0


def _barriers(cfg: dict, jobs: int):
    entries = _sweep_entries(cfg)

    def work(item):
        label, rate = item
        table = _solve_for(cfg, rate)
        return label, control.find_barrier(table)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(work, entries))
    return [work(e) for e in entries]


def cmd_barrier(cfg: dict, out_prefix: str | None, jobs: int) -> int:
    results = _barriers(cfg, jobs)
    w = _Writer(cfg, "barrier", out_prefix)
    w.header("omega", "b_star", "H_at_b", "H1_at_b", "smooth_fit")
    for label, sol in results:
        w.row(label, sol.b_star, sol.H_at_b, sol.H1_at_b,
              sol.diagnostics.smooth_fit_residual
              if sol.diagnostics.smooth_fit_residual is not None else 0.0)
    path = w.flush()
    summary = " ".join(f"{label}:b*={sol.b_star:.6f}"
                       for label, sol in results)
    print(f"barrier levels {summary}", file=sys.stderr)
    log.info("barrier table written to %s", path)
    return 0


def cmd_value(cfg: dict, out_prefix: str | None, jobs: int) -> int:
    results = _barriers(cfg, jobs)
    xs = _output_grid(cfg)
    w = _Writer(cfg, "value", out_prefix)
    for label, sol in results:
        w.meta(f"{label} b_star={sol.b_star!r}")
    w.header("x", *[label for label, _ in results])
    cols = [np.asarray(control.value_at(sol, xs)) for _, sol in results]
    for i, x in enumerate(xs):
        w.row(float(x), *[float(c[i]) for c in cols])
    path = w.flush()
    log.info("value table written to %s", path)
    return 0


def cmd_mc(cfg: dict, out_prefix: str | None, jobs: int) -> int:
    model = _build_model(cfg)
    q = float(cfg["q"])
    mcfg = cfg.get("mc", {})
    results = _barriers(cfg, jobs)
    w = _Writer(cfg, "mc", out_prefix)
    w.header("omega", "estimator", "b", "x0", "mean", "stderr", "n_paths",
             "trunc_bound", "analytic")
    for label, sol in results:
        rate = _entry_rate(cfg, label)
        b = float(mcfg["b"]) if mcfg.get("b") is not None else sol.b_star
        for x0 in mcfg.get("x0", [0.0]):
            run = mc.McConfig(dt=float(mcfg.get("dt", 1e-3)),
                              n_paths=int(mcfg.get("n_paths", 200000)),
                              weight_floor=float(mcfg.get("weight_floor", 1e-7)),
                              seed=int(mcfg.get("seed", 1)),
                              estimator=str(mcfg.get("estimator", "discounted")))
            est = mc.simulate_value(model, rate, q, b, float(x0), run)
            w.row(label, run.estimator, b, float(x0), est.mean, est.stderr,
                  est.n_paths_used, est.truncation_bias_bound,
                  float(control.barrier_value_at(sol.table, b, float(x0))))
    path = w.flush()
    log.info("mc table written to %s", path)
    return 0


def _entry_rate(cfg: dict, label: str) -> omega_mod.BankruptcyRate:
    for lab, rate in _sweep_entries(cfg):
        if lab == label:
            return rate
    raise ConfigError(f"no sweep entry labelled {label}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="omegalab",
        description="Scale-function solves, dividend barrier sweeps and "
                    "Monte Carlo validation for Omega models.")
    ap.add_argument("command",
                    choices=["scale", "omega", "barrier", "value", "mc"],
                    help="scale: W/Z tables; omega: solved H table "
                         "(x,H,H1,H2); barrier: optimal levels per sweep "
                         "entry; value: v*(x) curves; mc: simulation vs "
                         "analytic values")
    ap.add_argument("--config", metavar="PATH", help="JSON config file")
    ap.add_argument("--preset", metavar="NAME",
                    help=f"built-in config: {', '.join(sorted(PRESETS))}")
    ap.add_argument("--out", metavar="PREFIX",
                    help="output file prefix (default: stdout)")
    ap.add_argument("--jobs", type=int, default=1,
                    help="concurrent sweep entries")
    ap.add_argument("--seed", type=int, help="override mc seed")
    ap.add_argument("--grid-step", type=float, help="override solver grid step")
    ap.add_argument("--x-max", type=float, help="override solver x_max")
    return ap


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("OMEGALAB_LOG", "WARNING").upper()
    logging.basicConfig(stream=sys.stderr,
                        level=getattr(logging, level, logging.WARNING))
    args = build_parser().parse_args(argv)
    overrides: dict = {}
    if args.seed is not None:
        overrides.setdefault("mc", {})["seed"] = args.seed
    if args.grid_step is not None:
        overrides.setdefault("solver", {})["grid_step"] = args.grid_step
    if args.x_max is not None:
        overrides.setdefault("solver", {})["x_max"] = args.x_max
    try:
        cfg = load_config(args.config, args.preset, overrides)
        if args.command == "scale":
            return cmd_scale(cfg, args.out)
        if args.command == "omega":
            return cmd_omega(cfg, args.out)
        if args.command == "barrier":
            return cmd_barrier(cfg, args.out, args.jobs)
        if args.command == "value":
            return cmd_value(cfg, args.out, args.jobs)
        return cmd_mc(cfg, args.out, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, ValueError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
