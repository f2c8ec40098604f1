"""Simulate a critical 2-type process and fit its offspring mean matrix.

Run with ``python3 demos/simulate_and_estimate.py``.
"""
import numpy as np

from gwi2 import eigen_decompose, preset
from gwi2.estimate import cls_estimate
from gwi2.laws import mean_matrix
from gwi2.simulate import simulate_gwi, uv_decompose

model = preset("modelA")
m = mean_matrix(model)
spec = eigen_decompose(m)
print("offspring means (columns):\n", model.offspring_means)
print("eigenvalues:", spec.lambda_plus, spec.lambda_minus)

# the population grows linearly along u_R with a random slope whose mean is <u_L, m_eps>
traj = simulate_gwi(model, 5000, seed=1, method="multinomial")
print("X_n / n on this path:", traj.states[-1] / traj.n)
print("E X_n / n -> <u_L, m_eps> u_R =", (spec.u_left @ model.m_eps) * spec.u_right)

series = uv_decompose(traj, spec)
print("max |V_k| =", np.max(np.abs(series.V)), " while U_n =", series.U[-1])

for n in (100, 1000, 5000):
    est = cls_estimate(traj.states[: n + 1], model.m_eps)
    err = np.abs(est.m_hat - model.offspring_means).max()
    print(f"n={n:5d}  rho_hat={est.rho_hat:.5f}  max|m_hat - m|={err:.4f}")
