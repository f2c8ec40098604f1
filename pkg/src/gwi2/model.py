"""
Spectral algebra of the 2x2 offspring mean matrix.

The mean matrix of a positively regular 2-type process is written

    m = [[alpha, beta],
         [gamma, delta]]

where column ``i`` holds the expected offspring vector of a type-``i``
individual.  Positive regularity (some power of ``m`` strictly positive) is
equivalent to ``beta, gamma > 0``, ``alpha, delta >= 0`` and
``alpha + delta > 0``; under it the eigenvalues are real and distinct, so
every quantity here has a closed form.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ModelError",
    "MeanMatrix",
    "SpectralData",
    "CriticalityKind",
    "Criticality",
    "DEFAULT_TOL",
    "MAX_POWER",
    "spectral_radius",
    "eigen_decompose",
    "matrix_power_putzer",
    "classify",
    "grad_spectral_radius",
    "sqrt_psd_2x2",
    "kron2",
]

DEFAULT_TOL = 1e-9
MAX_POWER = 10**6


class ModelError(ValueError):
    """Raised when model parameters violate a structural requirement."""


@dataclass(frozen=True)
class MeanMatrix:
    """Offspring mean matrix ``[[alpha, beta], [gamma, delta]]``."""

    alpha: float
    beta: float
    gamma: float
    delta: float

    def __post_init__(self):
        vals = (self.alpha, self.beta, self.gamma, self.delta)
        if not all(math.isfinite(v) for v in vals):
            raise ModelError(f"mean matrix entries must be finite, got {vals}")
        if self.alpha < 0 or self.delta < 0:
            raise ModelError("alpha and delta must be nonnegative")
        if not (self.beta > 0 and self.gamma > 0):
            raise ModelError(
                f"beta={self.beta}, gamma={self.gamma}: both must be > 0 "
                "for positive regularity"
            )
        if not self.alpha + self.delta > 0:
            raise ModelError("alpha + delta must be > 0 for positive regularity")

    @classmethod
    def from_array(cls, m) -> "MeanMatrix":
        m = np.asarray(m, dtype=float)
        if m.shape != (2, 2):
            raise ModelError(f"expected a 2x2 matrix, got shape {m.shape}")
        return cls(float(m[0, 0]), float(m[0, 1]), float(m[1, 0]), float(m[1, 1]))

    @classmethod
    def critical(cls, alpha: float, delta: float, beta: float) -> "MeanMatrix":
        """Critical matrix with ``gamma = (1 - alpha)(1 - delta) / beta``.

        Criticality then holds by construction rather than up to round-off
        in user-supplied parameters.
        """
        if not (0 <= alpha < 1 and 0 <= delta < 1):
            raise ModelError("critical construction needs alpha, delta in [0, 1)")
        if not beta > 0:
            raise ModelError("beta must be > 0")
        return cls(alpha, beta, (1 - alpha) * (1 - delta) / beta, delta)

    @property
    def array(self) -> np.ndarray:
        return np.array([[self.alpha, self.beta], [self.gamma, self.delta]])

    @property
    def discriminant(self) -> float:
        return (self.alpha - self.delta) ** 2 + 4 * self.beta * self.gamma


@dataclass(frozen=True)
class SpectralData:
    """Eigenvalues and normalised Perron vectors of a mean matrix.

    ``u_right`` sums to one, ``<u_right, u_left> = 1``, and the pair
    ``(v_right, v_left)`` belongs to ``lambda_minus`` with
    ``det[u_right v_right] = 1``.
    """

    lambda_plus: float
    lambda_minus: float
    u_right: np.ndarray
    u_left: np.ndarray
    v_right: np.ndarray
    v_left: np.ndarray

    @property
    def basis(self) -> np.ndarray:
        """Matrix ``[u_right v_right]`` mapping (U, V) coordinates to X."""
        return np.column_stack([self.u_right, self.v_right])


def _as_mean_matrix(m) -> MeanMatrix:
    if isinstance(m, MeanMatrix):
        return m
    return MeanMatrix.from_array(m)


def spectral_radius(m) -> float:
    """Largest eigenvalue ``(alpha + delta + sqrt(D)) / 2``."""
    m = _as_mean_matrix(m)
    return (m.alpha + m.delta + math.sqrt(m.discriminant)) / 2


def eigen_decompose(m) -> SpectralData:
    """Closed-form eigenvalues and Perron vectors of ``m``."""
    m = _as_mean_matrix(m)
    a, b, c, d = m.alpha, m.beta, m.gamma, m.delta
    root = math.sqrt(m.discriminant)
    lp = (a + d + root) / 2
    lm = (a + d - root) / 2
    gap = lp - lm
    norm_u = b + lp - a
    return SpectralData(
        lambda_plus=lp,
        lambda_minus=lm,
        u_right=np.array([b, lp - a]) / norm_u,
        u_left=np.array([c + lp - d, b + lp - a]) / gap,
        v_right=np.array([-b - lp + a, c + lp - d]) / gap,
        v_left=np.array([-lp + a, b]) / norm_u,
    )


def matrix_power_putzer(m, k: int) -> np.ndarray:
    """``m**k`` as ``lp**k u_R u_L^T + lm**k v_R v_L^T``.

    ``k = 0`` returns the identity exactly.
    """
    k = int(k)
    if k < 0:
        raise ValueError("k must be nonnegative")
    if k > MAX_POWER:
        raise ValueError(f"matrix powers beyond k={MAX_POWER} are not supported")
    if k == 0:
        return np.eye(2)
    s = eigen_decompose(m)
    return (s.lambda_plus**k) * np.outer(s.u_right, s.u_left) + (
        s.lambda_minus**k
    ) * np.outer(s.v_right, s.v_left)


class CriticalityKind(enum.Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"


@dataclass(frozen=True)
class Criticality:
    kind: CriticalityKind
    rho: float
    # beta*gamma == (1-alpha)(1-delta) within tol
    critical_identity: bool

    @property
    def is_critical(self) -> bool:
        return self.kind is CriticalityKind.CRITICAL


def classify(m, tol: float = DEFAULT_TOL) -> Criticality:
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    m = _as_mean_matrix(m)
    rho = spectral_radius(m)
    if rho < 1 - tol:
        kind = CriticalityKind.SUBCRITICAL
    elif rho > 1 + tol:
        kind = CriticalityKind.SUPERCRITICAL
    else:
        kind = CriticalityKind.CRITICAL
    ident = abs(m.beta * m.gamma - (1 - m.alpha) * (1 - m.delta)) <= tol
    return Criticality(kind, rho, ident)


def grad_spectral_radius(m) -> np.ndarray:
    """The delta-method matrix ``R``, the *transpose* of the gradient of rho.

    ``R[i, j]`` is the derivative of rho with respect to ``m[j, i]``, so that
    ``trace(R @ dm)`` is the first-order change of rho.
    """
    m = _as_mean_matrix(m)
    a, b, c, d = m.alpha, m.beta, m.gamma, m.delta
    root = math.sqrt(m.discriminant)
    return 0.5 * np.eye(2) + np.array([[a - d, 2 * b], [2 * c, d - a]]) / (2 * root)


def sqrt_psd_2x2(v, sym_tol: float = 1e-10, neg_tol: float = 1e-12) -> np.ndarray:
    """Symmetric square root of a 2x2 positive semidefinite matrix.

    Eigenvalues in ``[-neg_tol, 0)`` are clamped to zero.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("matrix has non-finite entries")
    if abs(v[0, 1] - v[1, 0]) > sym_tol:
        raise ValueError("matrix is not symmetric")
    p, q, r = v[0, 0], 0.5 * (v[0, 1] + v[1, 0]), v[1, 1]
    half_tr = 0.5 * (p + r)
    rad = math.hypot(0.5 * (p - r), q)
    l1, l2 = half_tr + rad, half_tr - rad
    if l2 < -neg_tol:
        raise ValueError(f"matrix is not positive semidefinite (eigenvalue {l2:g})")
    l1, l2 = max(l1, 0.0), max(l2, 0.0)
    if rad == 0.0:
        return math.sqrt(l1) * np.eye(2)
    # projector onto the l1-eigenspace, (V - l2 I) / (l1 - l2) before clamping
    proj = 0.5 * np.eye(2) + (np.array([[p, q], [q, r]]) - half_tr * np.eye(2)) / (2 * rad)
    return math.sqrt(l1) * proj + math.sqrt(l2) * (np.eye(2) - proj)


def kron2(a, b) -> np.ndarray:
    """4x4 Kronecker product of two 2x2 matrices."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != (2, 2) or b.shape != (2, 2):
        raise ValueError("kron2 expects two 2x2 matrices")
    return np.kron(a, b)
