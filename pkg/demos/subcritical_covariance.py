"""Asymptotic normality of the CLS estimator for a subcritical model.

The limit covariance of sqrt(n) (m_hat - m) is built from stationary moments
estimated along one long path, then checked against the spread of many
independent estimates.

Run with ``python3 demos/subcritical_covariance.py``.
"""
import numpy as np

from gwi2 import preset, spectral_radius
from gwi2.estimate import stationary_tensors_from_path, subcritical_limit_covariance
from gwi2.laws import mean_matrix, stationary_mean
from gwi2.mcharness import McConfig, estimator_samples
from gwi2.simulate import simulate_gwi

model = preset("modelC")
print("rho(m) =", spectral_radius(mean_matrix(model)))

long_path = simulate_gwi(model, 10**6, seed=0, method="multinomial").states
tensors = stationary_tensors_from_path(long_path)
print("stationary mean: path", tensors.mean, " exact", stationary_mean(model))

cov = subcritical_limit_covariance(model, tensors)
print("Var of the sqrt(n) (rho_hat - rho) limit:", round(cov.var_rho, 4))

n = 2000
samples, failures = estimator_samples(model, McConfig(reps=2000, n=n, seed=1), "sub_mxi")
emp = np.cov(samples[~np.isnan(samples).any(axis=1)].T)
print("\nlimit covariance of vec(Z):\n", np.round(cov.vec_cov, 3))
print(f"empirical covariance at n={n}:\n", np.round(emp, 3))
rho, _ = estimator_samples(model, McConfig(reps=2000, n=n, seed=1), "sub_rho")
print("empirical var of rho statistic:", round(float(np.nanvar(rho)), 4), " failures:", failures)
