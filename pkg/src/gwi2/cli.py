"""
Command-line front end.

Every subcommand reads a JSON config (``--config``); ``--seed``,
``--workers`` and ``--out`` override the corresponding config entries.
Primary output goes to ``--out`` through a temporary file that is renamed
into place, so a failed run never leaves a partial file behind.

Exit codes: 0 success, 2 configuration error, 3 runtime resource error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .estimate import cls_estimate
from .laws import (
    PRESETS,
    FiniteLaw,
    GwiModel,
    degeneracy_indicators,
    mean_matrix,
    mixed_variance,
    preset,
    tilde_variance,
)
from .limit import SCALES, LimitConstants
from .mcharness import (
    COMPARISONS,
    LIMIT_FUNCTIONALS,
    McConfig,
    conditional_variance_check,
    limit_samples,
    mc_compare,
    moment_scaling_check,
    replication_seed,
    sllna_check,
    third_moment_check,
)
from .model import ModelError, classify
from .simulate import METHODS, PopulationCapError, read_trajectory_csv, simulate_gwi

EXIT_OK, EXIT_CONFIG, EXIT_RESOURCE = 0, 2, 3

ESTIMATE_HEADER = ["n", "seed", "exists", "disc_ok", "a11", "a12", "a21", "a22", "rho_hat", "det_A"]


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


# ---- config ---------------------------------------------------------------

@dataclass
class RunConfig:
    model: GwiModel
    raw: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.raw.get(key, default)

    def integer(self, key, default=None, lo=None, hi=None) -> int:
        v = self.raw.get(key, default)
        if v is None:
            raise ConfigError(f"{key}: required")
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{key}: expected an integer, got {v!r}")
        if lo is not None and v < lo:
            raise ConfigError(f"{key}: must be >= {lo}, got {v}")
        if hi is not None and v > hi:
            raise ConfigError(f"{key}: must be <= {hi}, got {v}")
        return v

    def real(self, key, default=None, lo=None, hi=None) -> float:
        v = self.raw.get(key, default)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {v!r}")
        if lo is not None and not v > lo:
            raise ConfigError(f"{key}: must be > {lo}, got {v}")
        if hi is not None and v > hi:
            raise ConfigError(f"{key}: must be <= {hi}, got {v}")
        return float(v)

    def choice(self, key, options, default=None) -> str:
        v = self.raw.get(key, default)
        if v not in options:
            raise ConfigError(f"{key}: expected one of {sorted(options)}, got {v!r}")
        return v

    def state(self, key="state"):
        v = self.raw.get(key)
        if (
            not isinstance(v, list)
            or len(v) != 2
            or not all(isinstance(x, int) and not isinstance(x, bool) and x >= 0 for x in v)
        ):
            raise ConfigError(f"{key}: expected two nonnegative integers, got {v!r}")
        return tuple(v)

    def mc(self, n_default=1000) -> McConfig:
        try:
            return McConfig(
                reps=self.integer("reps", 1000, lo=1),
                n=self.integer("n", n_default, lo=1),
                seed=self.integer("seed", 0, lo=0, hi=2**64 - 1),
                dt=self.real("dt", 5e-4, lo=0, hi=0.01),
                workers=self.integer("workers", 1, lo=1),
                method=self.choice("method", METHODS, "multinomial"),
            )
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"reps: {e}") from None


def parse_model(obj) -> GwiModel:
    if isinstance(obj, str):
        if obj not in PRESETS:
            raise ConfigError(f"model: unknown preset {obj!r}; choose from {sorted(PRESETS)}")
        return preset(obj)
    if not isinstance(obj, dict):
        raise ConfigError("model: expected a preset name or an object with three laws")
    laws = {}
    for key in ("offspring1", "offspring2", "immigration"):
        if key not in obj:
            raise ConfigError(f"model.{key}: required")
        try:
            laws[key] = FiniteLaw.from_json(obj[key])
        except (ValueError, TypeError, KeyError) as e:
            raise ConfigError(f"model.{key}: {e}") from None
    try:
        return GwiModel(laws["offspring1"], laws["offspring2"], laws["immigration"], name=str(obj.get("name", "")))
    except ValueError as e:
        raise ConfigError(f"model: {e}") from None


def load_config(path, overrides: dict) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as e:
        raise ConfigError(f"config: cannot read {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config: invalid JSON ({e})") from None
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a JSON object")
    raw.update({k: v for k, v in overrides.items() if v is not None})
    if "model" not in raw:
        raise ConfigError("model: required")
    return RunConfig(parse_model(raw["model"]), raw)


# ---- output ---------------------------------------------------------------

def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` via a sibling temp file and ``os.replace``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(out, text: str) -> None:
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _num(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 2**53 else repr(x)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# ---- subcommands ----------------------------------------------------------

def cmd_simulate(cfg: RunConfig, out) -> int:
    n = cfg.integer("n", lo=1)
    seed = cfg.integer("seed", 0, lo=0, hi=2**64 - 1)
    method = cfg.choice("method", METHODS, "individual")
    cap = cfg.integer("cap", 10**9, lo=1)
    traj = simulate_gwi(cfg.model, n, seed, method=method, cap=cap)
    _emit(out, _csv(["k", "x1", "x2"], [[k, a, b] for k, (a, b) in enumerate(traj.states.tolist())]))
    return EXIT_OK


def _estimate_row(states, n, seed, m_eps):
    est = cls_estimate(states, m_eps)
    m = [None] * 4 if est.m_hat is None else list(est.m_hat.ravel())
    det = int(round(est.det_A)) if float(est.det_A).is_integer() else est.det_A
    return [n, _num(seed), int(est.on_omega_n), int(est.on_omega_tilde_n), *map(_num, m), _num(est.rho_hat), _num(det)]


def cmd_estimate(cfg: RunConfig, out) -> int:
    m_eps = cfg.model.m_eps
    if cfg.get("trajectory") is not None:
        try:
            traj = read_trajectory_csv(cfg.get("trajectory"))
        except (OSError, ValueError) as e:
            raise ConfigError(f"trajectory: {e}") from None
        if traj.n < 1:
            raise ConfigError("trajectory: needs at least two generations")
        rows = [_estimate_row(traj.states, traj.n, None, m_eps)]
    else:
        mc = cfg.mc()
        rows = []
        for r in range(mc.reps):
            s = replication_seed(mc.seed, r)
            traj = simulate_gwi(cfg.model, mc.n, s, method=mc.method)
            rows.append(_estimate_row(traj.states, mc.n, s, m_eps))
    _emit(out, _csv(ESTIMATE_HEADER, rows))
    failures = sum(1 for r in rows if r[2] == 0)
    summary = {
        "reps": len(rows),
        "failures": failures,
        "failure_rate": failures / len(rows),
        "rho_failures": sum(1 for r in rows if r[3] == 0),
    }
    if out:
        print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_limit_sample(cfg: RunConfig, out) -> int:
    functional = cfg.choice("functional", LIMIT_FUNCTIONALS)
    scale = cfg.choice("scale", SCALES, "1-lam^2")
    mc = cfg.mc(n_default=1)
    try:
        constants = LimitConstants.from_model(cfg.model)
        seeds, values, _, _ = limit_samples(constants, mc, functional, scale)
    except ModelError as e:
        raise ConfigError(f"model: {e}") from None
    if values.ndim == 1:
        rows = [[s, functional, _num(v)] for s, v in zip(seeds, values)]
        text = _csv(["seed", "functional", "value"], rows)
    else:
        rows = [[s, functional, *map(_num, v)] for s, v in zip(seeds, values)]
        text = _csv(["seed", "functional", "m11", "m12", "m21", "m22"], rows)
    _emit(out, text)
    return EXIT_OK


def cmd_mc_compare(cfg: RunConfig, out) -> int:
    comparison = cfg.choice("comparison", COMPARISONS, "rho")
    scale = cfg.choice("scale", SCALES, "1-lam^2")
    mc = cfg.mc()
    limit_reps = cfg.integer("limit_reps", mc.reps, lo=1)
    try:
        report = mc_compare(cfg.model, mc, comparison, limit_reps=limit_reps, scale=scale)
    except ModelError as e:
        raise ConfigError(f"model: {e}") from None
    d = json.loads(report.to_json())
    if out:
        # keep the file byte-reproducible; wall time goes to stderr instead
        print(f"runtime_seconds: {d.pop('runtime_seconds'):.2f}", file=sys.stderr)
    _emit(out, json.dumps(d, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_moments_check(cfg: RunConfig, out) -> int:
    check = cfg.choice("check", ("scaling", "variance", "third", "slln"), "scaling")
    seed = cfg.integer("seed", 0, lo=0, hi=2**64 - 1)
    method = cfg.choice("method", METHODS, "multinomial")
    t0 = time.perf_counter()
    try:
        if check == "scaling":
            grid = cfg.get("k_grid", [100, 200, 400, 800])
            if not isinstance(grid, list) or not grid or not all(isinstance(k, int) and k >= 1 for k in grid):
                raise ConfigError(f"k_grid: expected a list of positive integers, got {grid!r}")
            table = moment_scaling_check(
                cfg.model, cfg.integer("ell", 2, lo=1, hi=8), grid,
                reps=cfg.integer("reps", 2000, lo=1), seed=seed, method=method,
            )
            report = {
                "k": table.k.tolist(),
                "columns": {k: v.tolist() for k, v in table.columns.items()},
                "max_ratio": {k: table.drift(k) for k in table.columns},
                "reps": table.reps,
            }
        elif check in ("variance", "third"):
            fn = conditional_variance_check if check == "variance" else third_moment_check
            default = 10**4 if check == "variance" else 10**5
            rep = fn(cfg.model, cfg.state(), reps=cfg.integer("reps", default, lo=default), seed=seed,
                     method=cfg.choice("method", METHODS, "individual"))
            report = rep.to_dict()
        else:
            rep = sllna_check(cfg.model, cfg.integer("n", 10**6, lo=1), seed=seed, method=method)
            report = {
                "time_average": rep.time_average.tolist(),
                "stationary": rep.stationary.tolist(),
                "rel_error": rep.rel_error,
                "n": rep.n,
            }
    except ModelError as e:
        raise ConfigError(f"model: {e}") from None
    report["check"] = check
    print(f"runtime_seconds: {time.perf_counter() - t0:.2f}", file=sys.stderr)
    _emit(out, json.dumps(report, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _fmt(a) -> str:
    return np.array2string(np.asarray(a, dtype=float), precision=6, suppress_small=True)


def cmd_validate_laws(cfg: RunConfig, out) -> int:
    model = cfg.model
    lines = [f"offspring means m = {_fmt(model.offspring_means)}", f"m_eps = {_fmt(model.m_eps)}"]
    report = {"m": model.offspring_means.tolist(), "m_eps": model.m_eps.tolist()}
    try:
        m = mean_matrix(model)
    except ModelError as e:
        raise ConfigError(f"model: {e}") from None
    crit = classify(m)
    label = crit.kind.value.capitalize()
    lines += [f"rho = {crit.rho:.12g}", f"criticality: {label}"]
    report.update(rho=crit.rho, criticality=crit.kind.value)
    if crit.is_critical:
        vbar, vtil = mixed_variance(model), tilde_variance(model)
        ind = degeneracy_indicators(model)
        lines += [
            f"Vbar = {_fmt(vbar)}",
            f"Vtilde = {_fmt(vtil)}",
            f"vbar_v = {ind.vbar_v:.12g}",
            f"vbar_u = {ind.vbar_u:.12g}",
            f"veps_v = {ind.veps_v:.12g}",
            f"vl_meps = {ind.vl_meps:.12g}",
            f"lambda_minus = {ind.lam:.12g}",
            f"M = {ind.M:.12g}",
        ]
        if abs(ind.vbar_v) <= 1e-12:
            lines.append("degenerate regime: <Vbar v_L, v_L> = 0")
        if ind.full_degenerate:
            lines.append("full degeneracy: there is no unique CLS estimator")
        report.update(
            vbar=vbar.tolist(), vtilde=vtil.tolist(), vbar_v=ind.vbar_v, vbar_u=ind.vbar_u,
            veps_v=ind.veps_v, vl_meps=ind.vl_meps, lambda_minus=ind.lam, M=ind.M,
            full_degenerate=ind.full_degenerate,
        )
    print("\n".join(lines))
    if out:
        atomic_write(out, json.dumps(report, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "limit-sample": cmd_limit_sample,
    "mc-compare": cmd_mc_compare,
    "moments-check": cmd_moments_check,
    "validate-laws": cmd_validate_laws,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gwi2", description="Two-type GWI simulation and CLS inference.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="JSON config file")
        s.add_argument("--seed", type=int, help="master seed (overrides config)")
        s.add_argument("--out", help="output path (default: stdout)")
        s.add_argument("--workers", type=int, help="worker processes (overrides config)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, {"seed": args.seed, "workers": args.workers})
        return COMMANDS[args.command](cfg, args.out)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (PopulationCapError, MemoryError) as e:
        print(f"resource error: {e}", file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())
