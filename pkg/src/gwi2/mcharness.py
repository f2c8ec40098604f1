"""
Monte Carlo campaigns: estimator-side and limit-side sampling, two-sample
comparison, and moment checks.

Replication ``r`` of a campaign with master seed ``s`` always uses the
stream derived from ``(s, salt, r)``, whichever worker runs it and in
whatever order; results are merged by replication index, so a campaign is a
pure function of its configuration.
"""
from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .estimate import cls_estimate
from .laws import (
    GwiModel,
    degeneracy_indicators,
    exact_moments,
    mean_matrix,
    mixed_variance,
    stationary_second_moment,
    tilde_variance,
)
from .limit import (
    DEFAULT_DT,
    DegeneratePathError,
    LimitConstants,
    SdeConfig,
    functional_mxi,
    functional_mxi_degenerate,
    functional_rho,
    simulate_limit_path,
)
from .model import DEFAULT_TOL, CriticalityKind, ModelError, classify, eigen_decompose, spectral_radius
from .rng import SALT, derive_seed, generator
from .simulate import one_step, simulate_gwi

__all__ = [
    "McConfig",
    "EmpiricalDist",
    "ComparisonReport",
    "ESTIMATOR_STATISTICS",
    "LIMIT_FUNCTIONALS",
    "COMPARISONS",
    "estimator_samples",
    "run_estimator_mc",
    "limit_samples",
    "run_limit_mc",
    "ks_statistic",
    "compare",
    "mc_compare",
    "moment_scaling_check",
    "conditional_variance_check",
    "third_moment_check",
    "sllna_check",
]

QUANTILE_LEVELS = (0.01, 0.05, 0.25, 0.50, 0.75, 0.95, 0.99)
MAX_RESAMPLES = 100


@dataclass(frozen=True)
class McConfig:
    reps: int
    n: int = 1000
    seed: int = 0
    dt: float = DEFAULT_DT
    workers: int = 1
    method: str = "multinomial"
    # upper bound on reps * n, a guard against runaway campaigns
    budget: float = 1e11

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.reps * self.n > self.budget:
            raise ValueError(f"reps * n = {self.reps * self.n:g} exceeds the budget {self.budget:g}")


@dataclass(frozen=True, eq=False)
class EmpiricalDist:
    values: np.ndarray
    failures: int = 0
    label: str = ""
    resamples: int = 0

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float))
        object.__setattr__(self, "values", v)

    @property
    def count(self) -> int:
        return len(self.values)

    def quantiles(self, levels=QUANTILE_LEVELS) -> dict:
        return {f"{100 * q:g}%": float(np.quantile(self.values, q)) for q in levels}

    def __eq__(self, other):
        return (
            isinstance(other, EmpiricalDist)
            and self.failures == other.failures
            and np.array_equal(self.values, other.values)
        )


# ---- estimator-side statistics -------------------------------------------

@dataclass(frozen=True)
class _Context:
    model: GwiModel
    n: int
    m_true: np.ndarray
    rho: float
    v_left: np.ndarray


def _proj(mat, v_left):
    return float(mat[0] @ v_left / (v_left @ v_left))


def _critical_diff(states, ctx):
    est = cls_estimate(states, ctx.model.m_eps)
    return None if est.m_hat is None else est.m_hat - ctx.m_true


def _stat_rho_scaled(states, ctx):
    est = cls_estimate(states, ctx.model.m_eps)
    return None if est.rho_hat is None else ctx.n * (est.rho_hat - 1)


def _stat_mxi_proj(states, ctx):
    d = _critical_diff(states, ctx)
    return None if d is None else _proj(math.sqrt(ctx.n) * d, ctx.v_left)


def _stat_mxi_11(states, ctx):
    d = _critical_diff(states, ctx)
    return None if d is None else math.sqrt(ctx.n) * float(d[0, 0])


def _stat_mxi_deg_proj(states, ctx):
    d = _critical_diff(states, ctx)
    return None if d is None else _proj(d, ctx.v_left)


def _stat_mxi_deg_11(states, ctx):
    d = _critical_diff(states, ctx)
    return None if d is None else float(d[0, 0])


def _stat_sub_rho(states, ctx):
    est = cls_estimate(states, ctx.model.m_eps)
    return None if est.rho_hat is None else math.sqrt(ctx.n) * (est.rho_hat - ctx.rho)


def _stat_sub_mxi(states, ctx):
    d = _critical_diff(states, ctx)
    return None if d is None else math.sqrt(ctx.n) * d.ravel()


def _stat_existence(states, ctx):
    est = cls_estimate(states, ctx.model.m_eps)
    return np.array([est.on_omega_n, est.on_omega_tilde_n], dtype=float)


# name -> (function, regime, output width)
ESTIMATOR_STATISTICS: dict[str, tuple[Callable, str, int]] = {
    "rho_scaled": (_stat_rho_scaled, "critical_nondegenerate", 1),
    "mxi_proj": (_stat_mxi_proj, "critical_nondegenerate", 1),
    "mxi_11": (_stat_mxi_11, "critical_nondegenerate", 1),
    "mxi_degenerate_proj": (_stat_mxi_deg_proj, "critical_degenerate", 1),
    "mxi_degenerate_11": (_stat_mxi_deg_11, "critical_degenerate", 1),
    "sub_rho": (_stat_sub_rho, "subcritical", 1),
    "sub_mxi": (_stat_sub_mxi, "subcritical", 4),
    "existence": (_stat_existence, "any", 2),
}


def _regime(model: GwiModel) -> set[str]:
    crit = classify(mean_matrix(model), DEFAULT_TOL)
    out = {"any"}
    if crit.kind is CriticalityKind.SUBCRITICAL:
        out.add("subcritical")
    elif crit.kind is CriticalityKind.CRITICAL:
        ind = degeneracy_indicators(model)
        out.add("critical_nondegenerate" if ind.vbar_v > 1e-12 else "critical_degenerate")
    return out


def _check_regime(model: GwiModel, regime: str, what: str) -> None:
    have = _regime(model)
    if regime not in have:
        raise ValueError(f"{what} needs a {regime} model; this model is {sorted(have - {'any'})}")


def replication_seed(seed: int, rep: int) -> int:
    """Seed handed to :func:`simulate_gwi` for estimator replication ``rep``."""
    return derive_seed(seed, SALT["estimator"], rep)


def _estimator_chunk(model, mc, statistic, reps):
    fn = ESTIMATOR_STATISTICS[statistic][0]
    m = mean_matrix(model)
    ctx = _Context(model, mc.n, m.array, spectral_radius(m), eigen_decompose(m).v_left)
    out = []
    for r in reps:
        traj = simulate_gwi(model, mc.n, replication_seed(mc.seed, r), method=mc.method)
        out.append((r, fn(traj.states, ctx)))
    return out


def _chunks(reps: int, workers: int):
    size = max(1, math.ceil(reps / (4 * workers)))
    return [range(i, min(i + size, reps)) for i in range(0, reps, size)]


def _map(fn, args, mc):
    """Run ``fn(*a)`` per chunk, in-process or on a worker pool."""
    if mc.workers == 1:
        results = [fn(*a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=mc.workers) as pool:
            results = list(pool.map(_star, [(fn, a) for a in args]))
    merged = [item for chunk in results for item in chunk]
    merged.sort(key=lambda t: t[0])
    return merged


def _star(job):
    fn, a = job
    return fn(*a)


def estimator_samples(model: GwiModel, mc: McConfig, statistic: str):
    """Per-replication statistic values, ``NaN`` rows where it is absent.

    Returns ``(values, failures)`` with ``values`` of shape ``(reps,)`` or
    ``(reps, width)`` in replication order.
    """
    if statistic not in ESTIMATOR_STATISTICS:
        raise ValueError(f"unknown statistic {statistic!r}; choose from {sorted(ESTIMATOR_STATISTICS)}")
    _, regime, width = ESTIMATOR_STATISTICS[statistic]
    _check_regime(model, regime, f"statistic {statistic!r}")
    merged = _map(_estimator_chunk, [(model, mc, statistic, c) for c in _chunks(mc.reps, mc.workers)], mc)
    vals = np.full((mc.reps, width), np.nan)
    failures = 0
    for r, v in merged:
        if v is None:
            failures += 1
        else:
            vals[r] = v
    return (vals[:, 0] if width == 1 else vals), failures


def run_estimator_mc(model: GwiModel, mc: McConfig, statistic: str) -> EmpiricalDist:
    """Empirical law of a scalar estimator statistic over ``mc.reps`` paths."""
    if ESTIMATOR_STATISTICS.get(statistic, (None, None, 1))[2] != 1:
        raise ValueError(f"statistic {statistic!r} is not scalar; use estimator_samples")
    vals, failures = estimator_samples(model, mc, statistic)
    return EmpiricalDist(vals[~np.isnan(vals)], failures=failures, label=statistic)


# ---- limit-side functionals ----------------------------------------------

# scalar functionals, plus the matrix-valued "mxi" and "mxi_degenerate"
# (returned flattened row-major)
LIMIT_FUNCTIONALS: dict[str, str] = {
    "rho": "critical_nondegenerate",
    "mxi": "critical_nondegenerate",
    "mxi_degenerate": "critical_degenerate",
    "mxi_proj": "critical_nondegenerate",
    "mxi_11": "critical_nondegenerate",
    "mxi_degenerate_proj": "critical_degenerate",
    "mxi_degenerate_11": "critical_degenerate",
}


def evaluate_functional(name: str, path, c: LimitConstants, scale: str = "1-lam^2"):
    if name == "rho":
        return functional_rho(path, c.drift)
    if name not in LIMIT_FUNCTIONALS:
        raise ValueError(f"unknown functional {name!r}; choose from {sorted(LIMIT_FUNCTIONALS)}")
    if name.startswith("mxi_degenerate"):
        f = functional_mxi_degenerate(path, c)
    else:
        f = functional_mxi(path, c, scale=scale)
    if name.endswith("proj"):
        return _proj(f, c.v_left)
    if name.endswith("11"):
        return float(f[0, 0])
    return f.ravel()


def limit_path_seed(seed: int, rep: int, attempt: int = 0) -> int:
    """Seed of limit replication ``rep``; resampled paths move to their own salt."""
    if attempt == 0:
        return derive_seed(seed, SALT["limit"], rep)
    return derive_seed(seed, SALT["resample"], rep, attempt)


def _limit_chunk(constants, mc, functional, reps, scale):
    out = []
    for r in reps:
        for attempt in range(MAX_RESAMPLES):
            cfg = SdeConfig(constants, mc.dt, seed=limit_path_seed(mc.seed, r, attempt))
            try:
                val = evaluate_functional(functional, simulate_limit_path(cfg), constants, scale)
            except DegeneratePathError:
                continue
            out.append((r, (cfg.seed, val, attempt)))
            break
        else:
            out.append((r, (None, None, MAX_RESAMPLES)))
    return out


def limit_samples(constants: LimitConstants, mc: McConfig, functional: str, scale: str = "1-lam^2"):
    """``(seeds, values, resamples, failures)`` in replication order.

    ``values`` has shape ``(count,)`` for scalar functionals and
    ``(count, 4)`` for the matrix-valued ones.
    """
    if functional not in LIMIT_FUNCTIONALS:
        raise ValueError(f"unknown functional {functional!r}; choose from {sorted(LIMIT_FUNCTIONALS)}")
    merged = _map(
        _limit_chunk,
        [(constants, mc, functional, c, scale) for c in _chunks(mc.reps, mc.workers)],
        mc,
    )
    seeds, values, resamples, failures = [], [], 0, 0
    for _, (s, v, attempts) in merged:
        resamples += attempts
        if v is None:
            failures += 1
            continue
        seeds.append(s)
        values.append(v)
    return seeds, np.array(values), resamples, failures


def run_limit_mc(constants: LimitConstants, mc: McConfig, functional: str, scale: str = "1-lam^2") -> EmpiricalDist:
    """Empirical law of a scalar limit functional over ``mc.reps`` SDE paths."""
    if functional in ("mxi", "mxi_degenerate"):
        raise ValueError(f"functional {functional!r} is matrix-valued; use limit_samples")
    _, values, resamples, failures = limit_samples(constants, mc, functional, scale)
    return EmpiricalDist(values, failures=failures, label=functional, resamples=resamples)


# ---- comparison -----------------------------------------------------------

def ks_statistic(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov distance ``sup |F_a - F_b|``."""
    a = np.sort(np.asarray(a.values if isinstance(a, EmpiricalDist) else a, dtype=float))
    b = np.sort(np.asarray(b.values if isinstance(b, EmpiricalDist) else b, dtype=float))
    if len(a) == 0 or len(b) == 0:
        raise ValueError("both samples must be nonempty")
    pooled = np.concatenate([a, b])
    fa = np.searchsorted(a, pooled, side="right") / len(a)
    fb = np.searchsorted(b, pooled, side="right") / len(b)
    return float(np.max(np.abs(fa - fb)))


@dataclass
class ComparisonReport:
    statistic: str
    reps: int
    failures: dict
    ks: float
    quantiles: dict
    runtime_seconds: float
    resamples: int = 0
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def compare(a: EmpiricalDist, b: EmpiricalDist, statistic: str = "", runtime: float = 0.0) -> ComparisonReport:
    return ComparisonReport(
        statistic=statistic or f"{a.label} vs {b.label}",
        reps=max(a.count + a.failures, b.count + b.failures),
        failures={"estimator": a.failures, "limit": b.failures},
        ks=ks_statistic(a, b),
        quantiles={"estimator": a.quantiles(), "limit": b.quantiles()},
        runtime_seconds=runtime,
        resamples=b.resamples,
    )


# comparison name -> (estimator statistic, limit functional)
COMPARISONS = {
    "rho": ("rho_scaled", "rho"),
    "mxi": ("mxi_proj", "mxi_proj"),
    "mxi_entry": ("mxi_11", "mxi_11"),
    "mxi_degenerate": ("mxi_degenerate_proj", "mxi_degenerate_proj"),
    "mxi_degenerate_entry": ("mxi_degenerate_11", "mxi_degenerate_11"),
}


def mc_compare(model: GwiModel, mc: McConfig, comparison: str, limit_reps: int | None = None, scale: str = "1-lam^2") -> ComparisonReport:
    """KS comparison of an estimator statistic with its limit functional."""
    if comparison not in COMPARISONS:
        raise ValueError(f"unknown comparison {comparison!r}; choose from {sorted(COMPARISONS)}")
    stat, func = COMPARISONS[comparison]
    t0 = time.perf_counter()
    est = run_estimator_mc(model, mc, stat)
    lim_mc = McConfig(reps=limit_reps or mc.reps, n=1, seed=mc.seed, dt=mc.dt, workers=mc.workers)
    lim = run_limit_mc(LimitConstants.from_model(model), lim_mc, func, scale)
    return compare(est, lim, statistic=comparison, runtime=time.perf_counter() - t0)


# ---- moment checks --------------------------------------------------------

@dataclass(frozen=True)
class MomentTable:
    k: np.ndarray
    columns: dict
    reps: int

    def drift(self, name: str) -> float:
        """``max / min`` of a column over the k-grid."""
        col = np.asarray(self.columns[name], dtype=float)
        return float(col.max() / col.min())


def _states_at(model, k_grid, reps, seed, method, salt):
    kmax = int(max(k_grid))
    out = np.empty((reps, len(k_grid), 2))
    for r in range(reps):
        traj = simulate_gwi(model, kmax, derive_seed(seed, salt, r), method=method)
        out[r] = traj.states[list(k_grid)]
    return out


def moment_scaling_check(model: GwiModel, ell: int, k_grid, reps: int = 2000, seed: int = 0, method: str = "multinomial") -> MomentTable:
    """Monte Carlo moments along ``k_grid`` for the order bounds of the model.

    Critical models get ``E|X_k|^l / k^l``, ``E U_k^l / k^l``,
    ``E V_k^{2j} / k^j`` and the raw ``E V_k^{2j}`` with ``j = l // 2``;
    subcritical models get the raw ``E|X_k|^l``.
    """
    if not 1 <= ell <= 8:
        raise ValueError("ell must lie in 1..8")
    k = np.asarray(sorted(k_grid), dtype=int)
    if k[0] < 1:
        raise ValueError("k-grid entries must be >= 1")
    x = _states_at(model, k, reps, seed, method, SALT["trajectory"] + 101)
    norm = np.linalg.norm(x, axis=2) ** ell
    cols = {"norm_raw": norm.mean(axis=0)}
    try:
        m = mean_matrix(model)
    except ModelError:
        # not positively regular (e.g. deterministic unit growth): no U/V split
        rho = float(np.max(np.abs(np.linalg.eigvals(model.offspring_means))))
        if abs(rho - 1) <= DEFAULT_TOL:
            cols["norm_ratio"] = cols["norm_raw"] / k**ell
        return MomentTable(k=k, columns=cols, reps=reps)
    crit = classify(m)
    if crit.is_critical:
        s = eigen_decompose(m)
        u = x @ s.u_left
        v = x @ s.v_left
        j = max(ell // 2, 1)
        cols["norm_ratio"] = cols["norm_raw"] / k**ell
        cols["u_ratio"] = (u**ell).mean(axis=0) / k**ell
        cols["v_raw"] = (v ** (2 * j)).mean(axis=0)
        cols["v_ratio"] = cols["v_raw"] / k**j
    elif crit.kind is not CriticalityKind.SUBCRITICAL:
        raise ValueError("moment checks cover critical and subcritical models")
    return MomentTable(k=k, columns=cols, reps=reps)


@dataclass(frozen=True)
class MomentCheckReport:
    empirical: np.ndarray
    target: np.ndarray
    stderr: np.ndarray
    max_z: float
    target_uv: np.ndarray | None = None
    max_z_uv: float | None = None
    reps: int = 0

    def to_dict(self) -> dict:
        d = {
            "empirical": self.empirical.tolist(),
            "target": self.target.tolist(),
            "max_z": self.max_z,
            "reps": self.reps,
        }
        if self.target_uv is not None:
            d["target_uv"] = self.target_uv.tolist()
            d["max_z_uv"] = self.max_z_uv
        return d


def _max_z(emp, target, se):
    diff = np.abs(emp - target)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, diff / se, np.where(diff > 1e-12, np.inf, 0.0))
    return float(np.max(z))


MIN_REPS_VARIANCE = 10**4
MIN_REPS_THIRD = 10**5


def _one_step_m(model, state, reps, seed, method, min_reps):
    if reps < min_reps:
        raise ValueError(f"reps must be >= {min_reps}")
    x = np.asarray(state, dtype=float)
    draws = one_step(model, state, reps, generator(seed, SALT["onestep"]), method=method)
    return draws - model.offspring_means @ x - model.m_eps


def conditional_variance_check(model: GwiModel, state, reps: int = 10**5, seed: int = 0, method: str = "individual") -> MomentCheckReport:
    """Empirical ``Var(M_k | X_{k-1} = state)`` against both closed forms."""
    M = _one_step_m(model, state, reps, seed, method, MIN_REPS_VARIANCE)
    prod = np.einsum("ri,rj->rij", M, M).reshape(reps, 4)
    emp = prod.mean(axis=0)
    se = prod.std(axis=0, ddof=1) / math.sqrt(reps)
    v1, v2 = model.v_xi
    x1, x2 = (float(s) for s in state)
    target = (x1 * v1 + x2 * v2 + model.v_eps).reshape(-1)
    target_uv = z_uv = None
    try:
        m = mean_matrix(model)
    except ModelError:
        m = None
    if m is not None and classify(m).is_critical:
        s = eigen_decompose(m)
        u = float(s.u_left @ np.asarray(state, dtype=float))
        v = float(s.v_left @ np.asarray(state, dtype=float))
        target_uv = (u * mixed_variance(model) + v * tilde_variance(model) + model.v_eps).reshape(-1)
        z_uv = _max_z(emp, target_uv, se)
    return MomentCheckReport(
        empirical=emp.reshape(2, 2), target=target.reshape(2, 2), stderr=se.reshape(2, 2),
        max_z=_max_z(emp, target, se),
        target_uv=None if target_uv is None else target_uv.reshape(2, 2), max_z_uv=z_uv, reps=reps,
    )


def third_moment_check(model: GwiModel, state, reps: int = 10**5, seed: int = 0, method: str = "individual") -> MomentCheckReport:
    """Empirical ``E(M_k^{(x)3} | X_{k-1} = state)`` against the exact tensor."""
    M = _one_step_m(model, state, reps, seed, method, MIN_REPS_THIRD)
    prod = np.einsum("ri,rj,rk->rijk", M, M, M).reshape(reps, 8)
    emp = prod.mean(axis=0)
    se = prod.std(axis=0, ddof=1) / math.sqrt(reps)
    x1, x2 = (float(s) for s in state)
    t1, t2, te = (exact_moments(law, 3).flat_tensor(3) for law in model.laws)
    target = x1 * t1 + x2 * t2 + te
    return MomentCheckReport(empirical=emp, target=target, stderr=se, max_z=_max_z(emp, target, se), reps=reps)


@dataclass(frozen=True)
class SllnReport:
    time_average: np.ndarray
    stationary: np.ndarray
    rel_error: float
    n: int


def sllna_check(model: GwiModel, n: int, seed: int = 0, method: str = "multinomial") -> SllnReport:
    """Time average of ``X_{k-1} X_{k-1}^T`` against the stationary series."""
    traj = simulate_gwi(model, n, derive_seed(seed, SALT["stationary"]), method=method)
    x = traj.states[:-1].astype(float)
    avg = x.T @ x / n
    target = stationary_second_moment(model)
    err = float(np.linalg.norm(avg - target) / np.linalg.norm(target))
    return SllnReport(avg, target, err, n)
