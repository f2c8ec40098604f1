"""
Finite-support laws on Z_+^2 and the moment objects derived from them.

Every law here has finitely many atoms, so all moments exist and are
computed exactly by summation over the atoms.  A :class:`GwiModel` bundles
the two offspring laws with the immigration law.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .model import (
    DEFAULT_TOL,
    MeanMatrix,
    ModelError,
    classify,
    eigen_decompose,
    spectral_radius,
)

__all__ = [
    "FiniteLaw",
    "GwiModel",
    "MomentSummary",
    "DegeneracyIndicators",
    "exact_moments",
    "mean_matrix",
    "mixed_variance",
    "tilde_variance",
    "degeneracy_indicators",
    "make_degenerate_offspring",
    "stationary_mean",
    "stationary_second_moment",
    "preset",
    "PRESETS",
]

MAX_MOMENT_ORDER = 8


@dataclass(frozen=True, eq=False)
class FiniteLaw:
    """Probability law with finitely many atoms in Z_+^2.

    Parameters
    ----------
    points : array_like, shape (k, 2)
        Distinct nonnegative integer atoms.
    probs : array_like, shape (k,)
        Positive weights summing to one (within 1e-12).
    """

    points: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points)
        prb = np.asarray(self.probs, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] == 0:
            raise ModelError("law needs a nonempty (k, 2) array of atoms")
        if prb.shape != (pts.shape[0],):
            raise ModelError("one probability per atom is required")
        if not np.all(np.equal(np.mod(pts, 1), 0)) or np.any(pts < 0):
            raise ModelError("atoms must be nonnegative integer pairs")
        pts = pts.astype(np.int64)
        if not np.all(prb > 0):
            raise ModelError("atom probabilities must be > 0")
        if abs(prb.sum() - 1.0) > 1e-12:
            raise ModelError(f"probabilities sum to {prb.sum()!r}, not 1")
        if len({tuple(p) for p in pts.tolist()}) != len(pts):
            raise ModelError("atoms must be distinct")
        pts.setflags(write=False)
        prb = prb.copy()
        prb.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "probs", prb)

    @classmethod
    def from_mapping(cls, atoms: Mapping) -> "FiniteLaw":
        """Build from ``{(x1, x2): p, ...}``."""
        pts = [tuple(k) for k in atoms]
        return cls(np.array(pts, dtype=np.int64), np.array(list(atoms.values())))

    @classmethod
    def point_mass(cls, x1: int, x2: int) -> "FiniteLaw":
        return cls(np.array([[x1, x2]]), np.array([1.0]))

    @classmethod
    def from_json(cls, obj) -> "FiniteLaw":
        """Parse ``{"atoms": [{"x": [i, j], "p": prob}, ...]}``."""
        if isinstance(obj, str):
            obj = json.loads(obj)
        try:
            atoms = obj["atoms"]
            pts = [list(a["x"]) for a in atoms]
            prb = [float(a["p"]) for a in atoms]
        except (KeyError, TypeError) as exc:
            raise ModelError(f"malformed law JSON: {exc!r}") from None
        if any(len(p) != 2 for p in pts):
            raise ModelError("each atom 'x' must have two coordinates")
        return cls(np.array(pts), np.array(prb))

    def to_json(self) -> dict:
        return {
            "atoms": [
                {"x": [int(p[0]), int(p[1])], "p": float(q)}
                for p, q in zip(self.points, self.probs)
            ]
        }

    @property
    def mean(self) -> np.ndarray:
        return self.probs @ self.points

    @property
    def cov(self) -> np.ndarray:
        d = self.points - self.mean
        c = (d * self.probs[:, None]).T @ d
        return 0.5 * (c + c.T)

    @property
    def is_deterministic(self) -> bool:
        return len(self.probs) == 1

    def __repr__(self):
        atoms = ", ".join(
            f"({p[0]},{p[1]}):{q:g}" for p, q in zip(self.points, self.probs)
        )
        return f"FiniteLaw({{{atoms}}})"


@dataclass(frozen=True)
class MomentSummary:
    """Mean, covariance and central moments of orders up to ``max_order``.

    ``central[r][a]`` holds ``E[(x1 - mu1)**(r - a) * (x2 - mu2)**a]``; the
    full symmetric tensor is available through :meth:`tensor`.
    """

    mean: np.ndarray
    cov: np.ndarray
    central: dict = field(repr=False)

    @property
    def max_order(self) -> int:
        return max(self.central)

    def tensor(self, order: int) -> np.ndarray:
        """``E[(x - mu)^{(x) order}]`` as an array of shape ``(2,) * order``."""
        c = self.central[order]
        out = np.empty((2,) * order)
        for idx in np.ndindex(*out.shape):
            out[idx] = c[sum(idx)]
        return out

    def flat_tensor(self, order: int) -> np.ndarray:
        """Kronecker-power layout: a vector of length ``2**order``."""
        return self.tensor(order).reshape(-1)

    def directional(self, w, order: int) -> float:
        """``E[<w, x - mu>**order]``."""
        w1, w2 = float(w[0]), float(w[1])
        c = self.central[order]
        return float(
            sum(
                math.comb(order, a) * w1 ** (order - a) * w2**a * c[a]
                for a in range(order + 1)
            )
        )


def exact_moments(law: FiniteLaw, max_order: int = 4) -> MomentSummary:
    """Exact central moments of ``law`` up to ``max_order`` (at most 8)."""
    if not 1 <= max_order <= MAX_MOMENT_ORDER:
        raise ValueError(f"max_order must lie in 1..{MAX_MOMENT_ORDER}")
    mean = law.mean
    d = law.points - mean
    central = {}
    for r in range(1, max_order + 1):
        central[r] = np.array(
            [np.sum(law.probs * d[:, 0] ** (r - a) * d[:, 1] ** a) for a in range(r + 1)]
        )
    return MomentSummary(mean=mean, cov=law.cov, central=central)


@dataclass(frozen=True, eq=False)
class GwiModel:
    """Two offspring laws (type 1, type 2) and an immigration law.

    The mean matrix is not validated here; :func:`mean_matrix` does that, so
    that degenerate test models (identity or zero means) can still be
    simulated.
    """

    offspring1: FiniteLaw
    offspring2: FiniteLaw
    immigration: FiniteLaw
    name: str = ""

    def __post_init__(self):
        if not np.any(self.immigration.mean != 0):
            raise ModelError("immigration mean must be nonzero")

    @property
    def offspring_means(self) -> np.ndarray:
        """Raw mean matrix (columns are the offspring means), unvalidated."""
        return np.column_stack([self.offspring1.mean, self.offspring2.mean])

    @property
    def m_eps(self) -> np.ndarray:
        return self.immigration.mean

    @property
    def v_xi(self) -> tuple[np.ndarray, np.ndarray]:
        return self.offspring1.cov, self.offspring2.cov

    @property
    def v_eps(self) -> np.ndarray:
        return self.immigration.cov

    @property
    def laws(self) -> tuple[FiniteLaw, FiniteLaw, FiniteLaw]:
        return self.offspring1, self.offspring2, self.immigration

    @classmethod
    def from_json(cls, obj, name: str = "") -> "GwiModel":
        if isinstance(obj, str):
            obj = json.loads(obj)
        missing = [k for k in ("offspring1", "offspring2", "immigration") if k not in obj]
        if missing:
            raise ModelError(f"model JSON lacks field(s): {', '.join(missing)}")
        return cls(
            FiniteLaw.from_json(obj["offspring1"]),
            FiniteLaw.from_json(obj["offspring2"]),
            FiniteLaw.from_json(obj["immigration"]),
            name=name,
        )

    def to_json(self) -> dict:
        return {
            "offspring1": self.offspring1.to_json(),
            "offspring2": self.offspring2.to_json(),
            "immigration": self.immigration.to_json(),
        }


def mean_matrix(model: GwiModel) -> MeanMatrix:
    """Validated offspring mean matrix; raises ``ModelError`` if not regular."""
    return MeanMatrix.from_array(model.offspring_means)


def _require_critical(model: GwiModel, tol: float) -> MeanMatrix:
    m = mean_matrix(model)
    crit = classify(m, tol)
    if not crit.is_critical:
        raise ModelError(
            f"operation needs a critical model, got rho={crit.rho:.12g} "
            f"({crit.kind.value})"
        )
    return m


def mixed_variance(model: GwiModel, tol: float = DEFAULT_TOL) -> np.ndarray:
    """``sum_i <e_i, u_R> V_xi_i`` for a critical model."""
    m = _require_critical(model, tol)
    u_r = eigen_decompose(m).u_right
    v1, v2 = model.v_xi
    return u_r[0] * v1 + u_r[1] * v2


def tilde_variance(model: GwiModel, tol: float = DEFAULT_TOL) -> np.ndarray:
    """``sum_i <e_i, v_R> V_xi_i`` for a critical model."""
    m = _require_critical(model, tol)
    v_r = eigen_decompose(m).v_right
    v1, v2 = model.v_xi
    return v_r[0] * v1 + v_r[1] * v2


@dataclass(frozen=True)
class DegeneracyIndicators:
    vbar_v: float
    vbar_u: float
    veps_v: float
    vl_meps: float
    lam: float
    M: float
    full_degenerate: bool


def degeneracy_indicators(
    model: GwiModel, tol: float = DEFAULT_TOL, zero_tol: float = 1e-12
) -> DegeneracyIndicators:
    """Quadratic forms that select the limit regime of a critical model.

    ``full_degenerate`` flags the case where every generation lies on the
    line ``(1 - alpha) x1 = beta x2`` and the CLS estimator is not unique.
    """
    m = _require_critical(model, tol)
    s = eigen_decompose(m)
    vbar = mixed_variance(model, tol)
    lam = s.lambda_minus
    vl, ul = s.v_left, s.u_left
    vbar_v = float(vl @ vbar @ vl)
    vbar_u = float(ul @ vbar @ ul)
    veps_v = float(vl @ model.v_eps @ vl)
    vl_meps = float(vl @ model.m_eps)
    M = vl_meps**2 / (1 - lam) ** 2 + veps_v / (1 - lam**2)
    full = abs(vbar_v + veps_v + vl_meps**2) <= zero_tol
    return DegeneracyIndicators(vbar_v, vbar_u, veps_v, vl_meps, lam, M, full)


def make_degenerate_offspring(
    alpha: float, delta: float, laws: tuple[FiniteLaw, FiniteLaw] | None = None
) -> tuple[FiniteLaw, FiniteLaw]:
    """Offspring laws on the diagonal ``{(k, k)}`` with the given means.

    A diagonal law has equal coordinate means, so the mean matrix is
    ``[[alpha, delta], [alpha, delta]]``; criticality then forces
    ``alpha + delta = 1``.  ``<v_L, xi>`` is a.s. zero for such laws.  When
    ``laws`` is omitted, Bernoulli laws on ``{(0, 0), (1, 1)}`` are built;
    otherwise the supplied pair is validated against the constraints.
    """
    if not (0 < alpha < 1 and 0 < delta < 1):
        raise ModelError("alpha and delta must lie in (0, 1)")
    if abs(alpha + delta - 1) > DEFAULT_TOL:
        raise ModelError(
            f"diagonal-support laws need gamma = alpha and beta = delta; with "
            f"beta = 1 - alpha this requires alpha + delta = 1, got {alpha + delta:g}"
        )
    if laws is None:
        laws = (
            FiniteLaw(np.array([[0, 0], [1, 1]]), np.array([1 - alpha, alpha])),
            FiniteLaw(np.array([[0, 0], [1, 1]]), np.array([1 - delta, delta])),
        )
    for i, (law, target) in enumerate(zip(laws, (alpha, delta)), start=1):
        if np.any(law.points[:, 0] != law.points[:, 1]):
            raise ModelError(f"offspring law {i} is not supported on the diagonal")
        if np.any(np.abs(law.mean - target) > 1e-12):
            raise ModelError(
                f"offspring law {i} has mean {law.mean.tolist()}, "
                f"expected ({target:g}, {target:g})"
            )
    return laws[0], laws[1]


def _require_subcritical(model: GwiModel) -> MeanMatrix:
    m = mean_matrix(model)
    rho = spectral_radius(m)
    if rho >= 1:
        raise ModelError(f"stationary moments need rho < 1, got rho={rho:.12g}")
    return m


def stationary_mean(model: GwiModel) -> np.ndarray:
    """``(I - m)^{-1} m_eps`` for a subcritical model."""
    m = _require_subcritical(model).array
    return np.linalg.solve(np.eye(2) - m, model.m_eps)


def stationary_second_moment(
    model: GwiModel, tol: float = 1e-12, max_terms: int = 10**6
) -> np.ndarray:
    """``E[X X^T]`` under the stationary law of a subcritical model.

    Sums ``m^i C (m^T)^i`` with ``C = E X_1 V_xi_1 + E X_2 V_xi_2 + V_eps``
    until the increment's norm drops below ``tol``.
    """
    m = _require_subcritical(model).array
    mu = stationary_mean(model)
    v1, v2 = model.v_xi
    term = mu[0] * v1 + mu[1] * v2 + model.v_eps
    total = np.zeros((2, 2))
    for _ in range(max_terms):
        total += term
        if np.linalg.norm(term) < tol:
            break
        term = m @ term @ m.T
    else:
        raise ModelError("stationary series did not converge within max_terms")
    return total + np.outer(mu, mu)


def _law(atoms: Mapping) -> FiniteLaw:
    return FiniteLaw.from_mapping(atoms)


def _model_a() -> GwiModel:
    # critical symmetric: alpha = delta = 0.3, beta = gamma = 0.7
    return GwiModel(
        _law({(0, 0): 0.2, (0, 1): 0.5, (1, 1): 0.2, (1, 0): 0.1}),
        _law({(0, 0): 0.2, (1, 0): 0.5, (1, 1): 0.2, (0, 1): 0.1}),
        _law({(1, 0): 0.5, (0, 1): 0.25, (1, 1): 0.25}),
        name="modelA",
    )


def _model_c() -> GwiModel:
    # subcritical (0.2, 0.3, 0.3, 0.2), immigration mean (1, 1), V_eps invertible
    return GwiModel(
        _law({(0, 0): 0.6, (1, 0): 0.1, (0, 1): 0.2, (1, 1): 0.1}),
        _law({(0, 0): 0.6, (0, 1): 0.1, (1, 0): 0.2, (1, 1): 0.1}),
        _law({(0, 1): 0.25, (1, 0): 0.25, (1, 1): 0.25, (2, 2): 0.25}),
        name="modelC",
    )


def _model_d() -> GwiModel:
    # degenerate critical: diagonal offspring, <v_L, m_eps> = 0
    o1, o2 = make_degenerate_offspring(0.5, 0.5)
    return GwiModel(o1, o2, _law({(1, 0): 0.5, (0, 1): 0.5}), name="modelD")


PRESETS = {"modelA": _model_a, "modelC": _model_c, "modelD": _model_d}


def preset(name: str) -> GwiModel:
    """One of the shipped models: ``modelA``, ``modelC`` or ``modelD``."""
    try:
        return PRESETS[name]()
    except KeyError:
        raise ModelError(
            f"unknown preset {name!r}; choose from {sorted(PRESETS)}"
        ) from None
