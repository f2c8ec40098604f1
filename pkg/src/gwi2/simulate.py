"""
Trajectory simulation and the derived martingale / (U, V) series.

Generation ``k`` is the sum of the offspring vectors of every individual
alive in generation ``k - 1`` plus one immigration vector.  Two samplers are
available:

``"individual"``
    one inverse-CDF draw per individual, O(population) per step;
``"multinomial"``
    for each type, the number of individuals landing on each atom of the
    offspring law is multinomial, drawn as a chain of binomials.  The
    resulting generation has exactly the same law at O(#atoms) cost.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numba as nb
import numpy as np

from .laws import FiniteLaw, GwiModel
from .model import SpectralData
from .rng import SALT, generator

__all__ = [
    "PopulationCapError",
    "Trajectory",
    "DerivedSeries",
    "DEFAULT_CAP",
    "METHODS",
    "sample_law",
    "simulate_gwi",
    "simulate_from_rng",
    "one_step",
    "martingale_differences",
    "uv_decompose",
    "write_trajectory_csv",
    "read_trajectory_csv",
]

DEFAULT_CAP = 10**9
METHODS = ("individual", "multinomial")


class PopulationCapError(RuntimeError):
    """A generation exceeded the configured population cap."""


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States ``X_0, ..., X_n`` as an ``(n + 1, 2)`` int64 array."""

    states: np.ndarray
    model: GwiModel | None = None
    seed: int | None = None

    @property
    def n(self) -> int:
        return len(self.states) - 1


@dataclass(frozen=True, eq=False)
class DerivedSeries:
    """``M_1..M_n`` (rows of ``M``) and ``U_0..U_n``, ``V_0..V_n``."""

    states: np.ndarray
    M: np.ndarray | None
    U: np.ndarray
    V: np.ndarray
    spectral: SpectralData


def _tables(law: FiniteLaw):
    cum = np.cumsum(law.probs)
    return np.ascontiguousarray(law.points, dtype=np.int64), cum, law.probs.copy()


def sample_law(law: FiniteLaw, rng: np.random.Generator, size=None) -> np.ndarray:
    """Inverse-CDF draw(s) from ``law``; shape ``(2,)`` or ``(size, 2)``."""
    cum = np.cumsum(law.probs)
    u = rng.random(size)
    idx = np.minimum(np.searchsorted(cum, u, side="right"), len(cum) - 1)
    return law.points[idx]


@nb.njit(cache=True)
def _draw_atom(rng, cum):
    u = rng.random()
    last = cum.shape[0] - 1
    for i in range(last):
        if u < cum[i]:
            return i
    return last


@nb.njit(cache=True)
def _add_individual(rng, count, pts, cum, acc):
    for _ in range(count):
        a = _draw_atom(rng, cum)
        acc[0] += pts[a, 0]
        acc[1] += pts[a, 1]


@nb.njit(cache=True)
def _add_multinomial(rng, count, pts, probs, acc):
    remaining = count
    rest = 1.0
    last = probs.shape[0] - 1
    for i in range(last):
        if remaining == 0:
            return
        p = probs[i] / rest
        if p >= 1.0:
            c = remaining
        else:
            c = rng.binomial(remaining, p)
        acc[0] += c * pts[i, 0]
        acc[1] += c * pts[i, 1]
        remaining -= c
        rest -= probs[i]
    acc[0] += remaining * pts[last, 0]
    acc[1] += remaining * pts[last, 1]


@nb.njit(cache=True)
def _step(rng, x1, x2, p1, c1, q1, p2, c2, q2, pe, ce, method, acc):
    acc[0] = 0
    acc[1] = 0
    if method == 0:
        _add_individual(rng, x1, p1, c1, acc)
        _add_individual(rng, x2, p2, c2, acc)
    else:
        _add_multinomial(rng, x1, p1, q1, acc)
        _add_multinomial(rng, x2, p2, q2, acc)
    # a single immigration vector per generation
    a = _draw_atom(rng, ce)
    acc[0] += pe[a, 0]
    acc[1] += pe[a, 1]


@nb.njit(cache=True)
def _run(rng, out, p1, c1, q1, p2, c2, q2, pe, ce, method, cap):
    acc = np.zeros(2, dtype=np.int64)
    for k in range(1, out.shape[0]):
        _step(rng, out[k - 1, 0], out[k - 1, 1], p1, c1, q1, p2, c2, q2, pe, ce,
              method, acc)
        out[k, 0] = acc[0]
        out[k, 1] = acc[1]
        if acc[0] + acc[1] > cap:
            return k
    return 0


@nb.njit(cache=True)
def _run_onestep(rng, x1, x2, out, p1, c1, q1, p2, c2, q2, pe, ce, method):
    acc = np.zeros(2, dtype=np.int64)
    for r in range(out.shape[0]):
        _step(rng, x1, x2, p1, c1, q1, p2, c2, q2, pe, ce, method, acc)
        out[r, 0] = acc[0]
        out[r, 1] = acc[1]


def _method_code(method: str) -> int:
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    return METHODS.index(method)


def _model_tables(model: GwiModel):
    p1, c1, q1 = _tables(model.offspring1)
    p2, c2, q2 = _tables(model.offspring2)
    pe, ce, _ = _tables(model.immigration)
    return p1, c1, q1, p2, c2, q2, pe, ce


def simulate_from_rng(
    model: GwiModel,
    n: int,
    rng: np.random.Generator,
    method: str = "individual",
    cap: int = DEFAULT_CAP,
) -> np.ndarray:
    """States ``X_0 = 0, X_1, ..., X_n`` drawn from ``rng``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    out = np.zeros((n + 1, 2), dtype=np.int64)
    bad = _run(rng, out, *_model_tables(model), _method_code(method), int(cap))
    if bad:
        raise PopulationCapError(
            f"generation {bad} has {int(out[bad].sum())} individuals, cap is {cap}"
        )
    return out


def simulate_gwi(
    model: GwiModel,
    n: int,
    seed: int,
    method: str = "individual",
    cap: int = DEFAULT_CAP,
) -> Trajectory:
    """Simulate ``n`` generations from ``X_0 = 0``; deterministic in ``seed``."""
    rng = generator(seed, SALT["trajectory"])
    states = simulate_from_rng(model, n, rng, method=method, cap=cap)
    return Trajectory(states, model=model, seed=int(seed))


def one_step(
    model: GwiModel,
    state,
    reps: int,
    rng: np.random.Generator,
    method: str = "individual",
) -> np.ndarray:
    """``reps`` independent draws of ``X_k`` given ``X_{k-1} = state``."""
    x1, x2 = (int(v) for v in state)
    if x1 < 0 or x2 < 0:
        raise ValueError("state must be nonnegative")
    out = np.empty((int(reps), 2), dtype=np.int64)
    _run_onestep(rng, x1, x2, out, *_model_tables(model), _method_code(method))
    return out


def martingale_differences(traj: Trajectory, model: GwiModel | None = None) -> np.ndarray:
    """Rows ``M_k = X_k - m X_{k-1} - m_eps`` for ``k = 1..n``."""
    model = model if model is not None else traj.model
    if model is None:
        raise ValueError("a model is required to form martingale differences")
    x = traj.states.astype(float)
    return x[1:] - x[:-1] @ model.offspring_means.T - model.m_eps


def uv_decompose(traj: Trajectory, spec: SpectralData, tol: float = 1e-9) -> DerivedSeries:
    """``U_k = <u_L, X_k>`` and ``V_k = <v_L, X_k>`` for a critical model."""
    if abs(spec.lambda_plus - 1) > tol:
        raise ValueError(
            f"U/V decomposition needs lambda_plus = 1, got {spec.lambda_plus:.12g}"
        )
    x = traj.states.astype(float)
    M = martingale_differences(traj) if traj.model is not None else None
    return DerivedSeries(
        states=traj.states, M=M, U=x @ spec.u_left, V=x @ spec.v_left, spectral=spec
    )


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Write ``k,x1,x2`` rows, one per generation."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "x1", "x2"])
        for k, (a, b) in enumerate(traj.states.tolist()):
            w.writerow([k, a, b])


def read_trajectory_csv(path) -> Trajectory:
    with open(Path(path), newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(rows[0]) != {"k", "x1", "x2"}:
        raise ValueError(f"{path}: expected a 'k,x1,x2' header")
    ks = [int(r["k"]) for r in rows]
    if ks != list(range(len(ks))):
        raise ValueError(f"{path}: generations must be numbered 0, 1, 2, ...")
    states = np.array([[int(r["x1"]), int(r["x2"])] for r in rows], dtype=np.int64)
    if np.any(states < 0):
        raise ValueError(f"{path}: states must be nonnegative")
    return Trajectory(states)
