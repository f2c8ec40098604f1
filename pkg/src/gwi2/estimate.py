"""
Conditional least squares (CLS) estimation of the offspring mean matrix.

With the immigration mean known, the CLS estimator based on ``X_1..X_n`` is

    m_hat = B_n A_n^{-1},   A_n = sum X_{k-1} X_{k-1}^T,
                            B_n = sum (X_k - m_eps) X_{k-1}^T,

defined on the event ``det(A_n) > 0``.  The criticality estimator is the
spectral radius of ``m_hat`` whenever its discriminant is nonnegative.
Non-existence is reported through flags, never raised, so that Monte Carlo
campaigns can tally it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .laws import GwiModel, mean_matrix
from .model import grad_spectral_radius, kron2
from .simulate import DerivedSeries, Trajectory

__all__ = [
    "NormalEquations",
    "ClsEstimate",
    "StationaryTensors",
    "SubcriticalCovariance",
    "normal_equations",
    "cls_offspring_mean",
    "cls_criticality",
    "cls_estimate",
    "det_identity_check",
    "stationary_tensors_from_path",
    "subcritical_limit_covariance",
    "vec_covariance",
]

# integer Gram sums are exact in int64 while n * max|X|^2 stays below this
_INT_SAFE = 2**62


def adjugate(a: np.ndarray) -> np.ndarray:
    return np.array([[a[1, 1], -a[0, 1]], [-a[1, 0], a[0, 0]]])


@dataclass(frozen=True)
class NormalEquations:
    A: np.ndarray
    B: np.ndarray
    adjugate_A: np.ndarray
    det_A: float
    n: int
    # det_A was evaluated in exact integer arithmetic
    exact: bool

    def D(self, m_true) -> np.ndarray:
        """``D_n = sum M_k X_{k-1}^T = B_n - m A_n`` for the true ``m``."""
        return self.B - np.asarray(m_true, dtype=float) @ self.A

    @property
    def on_omega(self) -> bool:
        if self.exact:
            return self.det_A > 0
        scale = float(np.max(np.abs(self.A))) ** 2
        return self.det_A > 1e-9 * scale


def normal_equations(traj: Trajectory | np.ndarray, m_eps) -> NormalEquations:
    """Gram matrices of the CLS problem for a trajectory ``X_0..X_n``."""
    states = traj.states if isinstance(traj, Trajectory) else np.asarray(traj)
    if states.ndim != 2 or states.shape[1] != 2 or len(states) < 2:
        raise ValueError("need states of shape (n + 1, 2) with n >= 1")
    prev, nxt = states[:-1], states[1:]
    n = len(prev)
    m_eps = np.asarray(m_eps, dtype=float)
    big = int(np.max(np.abs(states))) if states.size else 0
    integral = np.issubdtype(states.dtype, np.integer)
    if integral and n * big * big < _INT_SAFE:
        g = prev.astype(np.int64)
        a11, a12, a22 = (int(v) for v in (g[:, 0] @ g[:, 0], g[:, 0] @ g[:, 1], g[:, 1] @ g[:, 1]))
        det = a11 * a22 - a12 * a12
        A = np.array([[a11, a12], [a12, a22]], dtype=float)
        exact = True
    else:
        p = prev.astype(float)
        A = p.T @ p
        det = float(A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0])
        exact = False
    B = (nxt.astype(float) - m_eps).T @ prev.astype(float)
    return NormalEquations(A=A, B=B, adjugate_A=adjugate(A), det_A=det, n=n, exact=exact)


@dataclass(frozen=True)
class ClsEstimate:
    m_hat: np.ndarray | None
    rho_hat: float | None
    det_A: float
    discriminant: float
    on_omega_n: bool
    on_omega_tilde_n: bool


def cls_criticality(m_hat) -> float | None:
    """Spectral radius of ``m_hat``, or ``None`` if its spectrum is complex."""
    if m_hat is None:
        return None
    a, b, c, d = np.asarray(m_hat, dtype=float).ravel()
    disc = (a - d) ** 2 + 4 * b * c
    if disc < 0:
        return None
    return (a + d + math.sqrt(disc)) / 2


def cls_offspring_mean(ne: NormalEquations) -> ClsEstimate:
    """``m_hat = B_n A_n^{-1}`` on ``det(A_n) > 0``, flags otherwise."""
    if not ne.on_omega:
        return ClsEstimate(None, None, float(ne.det_A), math.nan, False, False)
    m_hat = ne.B @ ne.adjugate_A / float(ne.det_A)
    a, b, c, d = m_hat.ravel()
    disc = float((a - d) ** 2 + 4 * b * c)
    rho = cls_criticality(m_hat)
    return ClsEstimate(m_hat, rho, float(ne.det_A), disc, True, rho is not None)


def cls_estimate(traj: Trajectory | np.ndarray, m_eps) -> ClsEstimate:
    return cls_offspring_mean(normal_equations(traj, m_eps))


@dataclass(frozen=True)
class DetIdentity:
    det_direct: float
    det_uv: float

    @property
    def rel_diff(self) -> float:
        return abs(self.det_direct - self.det_uv) / max(1.0, abs(self.det_direct))


def det_identity_check(series: DerivedSeries) -> DetIdentity:
    """``det(A_n)`` directly and from the (U, V) Gram determinant."""
    ne = normal_equations(series.states, np.zeros(2))
    u, v = series.U[:-1], series.V[:-1]
    det_uv = float((u @ u) * (v @ v) - (u @ v) ** 2)
    return DetIdentity(float(ne.det_A), det_uv)


@dataclass(frozen=True)
class StationaryTensors:
    """Moments of the stationary law that enter the subcritical limit.

    ``third[i]`` is ``E[X_i (X^T)^{(x)2}]`` (a length-4 row), ``second_vec``
    is ``E[(X^T)^{(x)2}]`` and ``second`` is ``E[X X^T]``.
    """

    mean: np.ndarray
    second: np.ndarray
    second_vec: np.ndarray
    third: np.ndarray


def stationary_tensors_from_path(states, burn_in: int = 0) -> StationaryTensors:
    """Time averages over ``X_{k-1}``, ``k = burn_in + 1..n``."""
    x = np.asarray(states, dtype=float)[burn_in:-1]
    kr = np.einsum("ki,kj->kij", x, x).reshape(len(x), 4)
    return StationaryTensors(
        mean=x.mean(axis=0),
        second=(x.T @ x) / len(x),
        second_vec=kr.mean(axis=0),
        third=(x.T @ kr) / len(x),
    )


@dataclass(frozen=True)
class SubcriticalCovariance:
    EZ2: np.ndarray
    var_rho: float

    @property
    def vec_cov(self) -> np.ndarray:
        return vec_covariance(self.EZ2)


def vec_covariance(ez2: np.ndarray) -> np.ndarray:
    """Covariance of ``(Z11, Z12, Z21, Z22)`` from ``E(Z (x) Z)``.

    ``(Z (x) Z)[2i + k, 2j + l] = Z[i, j] Z[k, l]``.
    """
    c = np.empty((4, 4))
    for i, j, k, l in np.ndindex(2, 2, 2, 2):
        c[2 * i + j, 2 * k + l] = ez2[2 * i + k, 2 * j + l]
    return c


def subcritical_limit_covariance(model: GwiModel, tensors: StationaryTensors) -> SubcriticalCovariance:
    """``E(Z (x) Z)`` and ``Tr[R (x) R E(Z (x) Z)]`` for a subcritical model."""
    m = mean_matrix(model)
    sigma = np.asarray(tensors.second, dtype=float)
    if abs(np.linalg.det(sigma)) <= 1e-12 * max(1.0, np.max(np.abs(sigma))) ** 2:
        named = {"V_xi_1": model.offspring1.cov, "V_xi_2": model.offspring2.cov, "V_eps": model.v_eps}
        singular = [k for k, v in named.items() if not _invertible(v)]
        if len(singular) == 3:
            reason = "none of V_xi_1, V_xi_2, V_eps is invertible"
        else:
            reason = "some variance matrix is invertible, so the supplied tensors are inconsistent"
        raise np.linalg.LinAlgError(f"stationary E[X X^T] is singular: {reason}")
    v1, v2 = model.v_xi
    third = np.asarray(tensors.third, dtype=float)
    inner = (
        np.outer(v1.reshape(-1), third[0])
        + np.outer(v2.reshape(-1), third[1])
        + np.outer(model.v_eps.reshape(-1), np.asarray(tensors.second_vec, dtype=float))
    )
    ez2 = inner @ np.linalg.inv(kron2(sigma, sigma))
    r = grad_spectral_radius(m)
    var_rho = float(np.trace(kron2(r, r) @ ez2))
    return SubcriticalCovariance(EZ2=ez2, var_rho=var_rho)


def _invertible(v: np.ndarray) -> bool:
    return abs(np.linalg.det(v)) > 1e-12
