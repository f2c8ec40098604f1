"""
Euler-Maruyama sampling of the critical-regime limit laws.

The 2-dimensional process ``Mvec`` solves

    dMvec_t = (Y_t^+)^{1/2} Vbar^{1/2} dW_t,   Mvec_0 = 0,
    Y_t     = <u_L, Mvec_t + t m_eps>,

so ``Y`` is a squared-Bessel-type diffusion with drift ``<u_L, m_eps>``.
The limit functionals of the CLS estimators are Ito integrals along ``Y``
against ``W``, ``Mvec`` and an independent Wiener process ``W_tilde``; all
integrals are left-point sums on the grid ``t_i = i * dt`` of ``[0, 1]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .estimate import cls_estimate
from .laws import GwiModel, degeneracy_indicators, mean_matrix, mixed_variance
from .model import DEFAULT_TOL, SpectralData, eigen_decompose, sqrt_psd_2x2
from .rng import SALT, generator
from .simulate import Trajectory

__all__ = [
    "DegeneratePathError",
    "LimitConstants",
    "SdeConfig",
    "SdePath",
    "ScaledStatistics",
    "DEFAULT_DT",
    "SCALES",
    "simulate_limit_path",
    "functional_mxi",
    "functional_rho",
    "functional_mxi_degenerate",
    "scaled_statistics",
]

DEFAULT_DT = 5e-4
# the constant multiplying functional_mxi: sqrt(1 - lam^2) or sqrt(1 - lam)
SCALES = ("1-lam^2", "1-lam")
_EPS = 1e-12


class DegeneratePathError(ValueError):
    """A path integral in a denominator vanished (e.g. ``Y`` identically 0)."""


@dataclass(frozen=True)
class LimitConstants:
    """Model constants entering the critical limit theorems."""

    u_left: np.ndarray
    v_left: np.ndarray
    m_eps: np.ndarray
    vbar: np.ndarray
    vbar_sqrt: np.ndarray
    lam: float
    vbar_u: float
    vbar_v: float
    veps_v: float
    vl_meps: float

    @property
    def drift(self) -> float:
        return float(self.u_left @ self.m_eps)

    @property
    def M(self) -> float:
        return self.vl_meps**2 / (1 - self.lam) ** 2 + self.veps_v / (1 - self.lam**2)

    @classmethod
    def from_model(cls, model: GwiModel, tol: float = DEFAULT_TOL) -> "LimitConstants":
        s = eigen_decompose(mean_matrix(model))
        vbar = mixed_variance(model, tol)
        ind = degeneracy_indicators(model, tol)
        return cls(
            u_left=s.u_left,
            v_left=s.v_left,
            m_eps=model.m_eps.astype(float),
            vbar=vbar,
            vbar_sqrt=sqrt_psd_2x2(vbar),
            lam=s.lambda_minus,
            vbar_u=ind.vbar_u,
            vbar_v=ind.vbar_v,
            veps_v=ind.veps_v,
            vl_meps=ind.vl_meps,
        )


@dataclass(frozen=True)
class SdeConfig:
    constants: LimitConstants
    dt: float = DEFAULT_DT
    seed: int = 0
    # seed of the W_tilde stream; defaults to ``seed`` under its own label
    tilde_seed: int | None = None

    def __post_init__(self):
        if not 0 < self.dt <= 0.01:
            raise ValueError("dt must lie in (0, 0.01]")
        steps = round(1.0 / self.dt)
        if abs(steps * self.dt - 1.0) > 1e-9:
            raise ValueError(f"dt={self.dt} does not divide [0, 1] into whole steps")

    @property
    def steps(self) -> int:
        return round(1.0 / self.dt)


@dataclass(frozen=True, eq=False)
class SdePath:
    t: np.ndarray
    Y: np.ndarray
    Mvec: np.ndarray
    dW: np.ndarray
    dW_tilde: np.ndarray
    dt: float
    # grid points where Y < 0 was clamped under the square root
    clamp_events: int = 0
    extra: dict = field(default_factory=dict, repr=False)


@nb.njit(cache=True)
def _euler(dW, S, ul, m_eps, dt, M, Y):
    clamps = 0
    for i in range(dW.shape[0]):
        y = Y[i]
        if y < 0.0:
            clamps += 1
            y = 0.0
        sy = math.sqrt(y)
        M[i + 1, 0] = M[i, 0] + sy * (S[0, 0] * dW[i, 0] + S[0, 1] * dW[i, 1])
        M[i + 1, 1] = M[i, 1] + sy * (S[1, 0] * dW[i, 0] + S[1, 1] * dW[i, 1])
        t = (i + 1) * dt
        Y[i + 1] = ul[0] * (M[i + 1, 0] + t * m_eps[0]) + ul[1] * (M[i + 1, 1] + t * m_eps[1])
    return clamps


def simulate_limit_path(cfg: SdeConfig, dW=None, dW_tilde=None) -> SdePath:
    """One Euler-Maruyama path of ``(Y, Mvec)`` plus the ``W_tilde`` increments.

    ``dW`` / ``dW_tilde`` override the drawn increments (shape ``(steps, 2)``);
    this is how common-random-number and forced-path experiments are run.
    """
    c = cfg.constants
    steps, dt = cfg.steps, cfg.dt
    if dW is None:
        dW = generator(cfg.seed, SALT["limit"]).standard_normal((steps, 2)) * math.sqrt(dt)
    if dW_tilde is None:
        tseed = cfg.seed if cfg.tilde_seed is None else cfg.tilde_seed
        dW_tilde = generator(tseed, SALT["limit_tilde"]).standard_normal((steps, 2)) * math.sqrt(dt)
    dW = np.ascontiguousarray(dW, dtype=float)
    dW_tilde = np.ascontiguousarray(dW_tilde, dtype=float)
    if dW.shape != (steps, 2) or dW_tilde.shape != (steps, 2):
        raise ValueError(f"increments must have shape ({steps}, 2)")
    M = np.zeros((steps + 1, 2))
    Y = np.zeros(steps + 1)
    clamps = _euler(dW, np.ascontiguousarray(c.vbar_sqrt), c.u_left, c.m_eps, dt, M, Y)
    return SdePath(
        t=np.arange(steps + 1) * dt, Y=Y, Mvec=M, dW=dW, dW_tilde=dW_tilde,
        dt=dt, clamp_events=int(clamps),
    )


def _mxi_coefficient(c: LimitConstants, scale: str) -> float:
    if scale == "1-lam^2":
        return math.sqrt(1 - c.lam**2) / math.sqrt(c.vbar_v)
    if scale == "1-lam":
        return math.sqrt(1 - c.lam) / math.sqrt(c.vbar_v)
    raise ValueError(f"scale must be one of {SCALES}, got {scale!r}")


def functional_mxi(path: SdePath, c: LimitConstants, scale: str = "1-lam^2") -> np.ndarray:
    """Limit of ``n^{1/2} (m_hat - m)`` when ``<Vbar v_L, v_L> > 0``.

    ``scale="1-lam"`` swaps the ``(1 - lam^2)^{1/2}`` factor for
    ``(1 - lam)^{1/2}``.
    """
    if not c.vbar_v > 0:
        raise ValueError("functional_mxi needs <Vbar v_L, v_L> > 0")
    y = path.Y[:-1]
    den = float(y.sum() * path.dt)
    if den <= _EPS:
        raise DegeneratePathError("integral of Y vanishes on this path")
    stoch = c.vbar_sqrt @ (y @ path.dW_tilde)
    return _mxi_coefficient(c, scale) * np.outer(stoch, c.v_left) / den


def functional_rho(path: SdePath, drift: float) -> float:
    """Limit of ``n (rho_hat - 1)``: ``int Y d(Y - t drift) / int Y^2 dt``."""
    y = path.Y[:-1]
    den = float((y * y).sum() * path.dt)
    if den <= _EPS:
        raise DegeneratePathError("integral of Y^2 vanishes on this path")
    num = float(y @ (np.diff(path.Y) - drift * path.dt))
    return num / den


def functional_mxi_degenerate(path: SdePath, c: LimitConstants, zero_tol: float = 1e-12) -> np.ndarray:
    """Limit of ``m_hat - m`` (unscaled) when ``<Vbar v_L, v_L> = 0``, ``M > 0``."""
    if abs(c.vbar_v) > zero_tol:
        raise ValueError("functional_mxi_degenerate needs <Vbar v_L, v_L> = 0")
    if not c.M > zero_tol:
        raise ValueError("M = 0: the CLS estimator is not unique in this regime")
    y = path.Y[:-1]
    dt = path.dt
    iy = float(y.sum() * dt)
    iy2 = float((y * y).sum() * dt)
    i1 = c.vl_meps**2 / (1 - c.lam) ** 2 * (iy2 - iy * iy)
    i2 = c.veps_v / (1 - c.lam**2) * iy2
    if i1 + i2 <= _EPS:
        raise DegeneratePathError("I1 + I2 vanishes on this path")
    y_dm = y @ np.diff(path.Mvec, axis=0)
    i3 = c.vl_meps / (1 - c.lam) * (iy2 * path.Mvec[-1] - iy * y_dm)
    i4 = math.sqrt(c.veps_v) / math.sqrt(1 - c.lam**2) * iy2 * (c.vbar_sqrt @ (y @ path.dW_tilde))
    return np.outer(i3 + i4, c.v_left) / (i1 + i2)


@dataclass(frozen=True)
class ScaledStatistics:
    n: int
    sum_u2_n3: float
    sum_v2_n2: float
    sum_uv_n52: float
    sum_v2_n1: float
    sum_uv_n2: float
    det_n5: float
    det_n4: float
    # None off the existence events
    mxi_scaled: np.ndarray | None
    mxi_diff: np.ndarray | None
    rho_scaled: float | None
    rho_hat: float | None


def scaled_statistics(traj: Trajectory, model: GwiModel, spec: SpectralData | None = None) -> ScaledStatistics:
    """Finite-``n`` versions of the quantities whose limits the theorems identify."""
    if spec is None:
        spec = eigen_decompose(mean_matrix(model))
    if abs(spec.lambda_plus - 1) > DEFAULT_TOL:
        raise ValueError("scaled statistics are defined for critical models")
    n = traj.n
    x = traj.states[:-1].astype(float)
    u, v = x @ spec.u_left, x @ spec.v_left
    su2, sv2, suv = float(u @ u), float(v @ v), float(u @ v)
    est = cls_estimate(traj, model.m_eps)
    m_true = model.offspring_means
    diff = est.m_hat - m_true if est.m_hat is not None else None
    return ScaledStatistics(
        n=n,
        sum_u2_n3=su2 / n**3,
        sum_v2_n2=sv2 / n**2,
        sum_uv_n52=suv / n**2.5,
        sum_v2_n1=sv2 / n,
        sum_uv_n2=suv / n**2,
        det_n5=est.det_A / n**5,
        det_n4=est.det_A / n**4,
        mxi_scaled=None if diff is None else math.sqrt(n) * diff,
        mxi_diff=diff,
        rho_scaled=None if est.rho_hat is None else n * (est.rho_hat - 1),
        rho_hat=est.rho_hat,
    )
