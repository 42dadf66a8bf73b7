"""Recover viscous Burgers from noisy samples, one stage at a time.

Run with ``python demos/burgers_walkthrough.py [sigma]``. Takes about half a
minute on one core.
"""
import sys

import numpy as np

from pdestride.denoise import denoise_field
from pdestride.dictionary import assemble_design, preset_terms, standardize
from pdestride.field import add_noise, sample_points
from pdestride.simulate import simulate_burgers
from pdestride.stability import run_stride, stable_support

sigma = float(sys.argv[1]) if len(sys.argv) > 1 else 0.02
seed = 1

# Ground truth: u_t = -u u_x + 0.1 u_xx on [-8, 8), 256 points, 1000 steps.
clean = simulate_burgers()
print(f"simulated {clean.name}: grid {clean.dims}, spacing {clean.spacing}")

# Gaussian noise scaled by the field's standard deviation.
noisy = add_noise(clean, sigma, seed)

# Truncated SVD of the space-time matrix, cut at the elbow of the spectrum.
smooth, svd = denoise_field(noisy)
err = np.linalg.norm(smooth.values - clean.values) / np.linalg.norm(clean.values)
print(f"denoised at rank {svd.chosen_rank}, relative error to clean data {err:.4f}")

# 19 candidate terms: monomials in u up to cubic times derivatives up to order 4.
terms = preset_terms("burgers-p19")
print("dictionary:", ", ".join(t.label for t in terms))

# 250 interior sample points; finite differences use the denoised field.
margin = max(t.halfwidth for t in terms)
samples = sample_points(smooth, None, 250, seed, margin)
design = assemble_design([smooth], 0, terms, samples, {"sigma": sigma})
std = standardize(design)
print(f"design: {std.theta.shape[0]} rows x {std.theta.shape[1]} standardized columns")

# Stability selection with the IHT-d solver over a 20-point penalty path.
model, profile = run_stride(design, "ihtd", B=250, seed=seed)
print("\nimportance at the smallest penalty:")
order = np.argsort(profile.pi_min)[::-1]
for k in order[:6]:
    print(f"  {profile.labels[k]:>10s}  {profile.pi_min[k]:.3f}")
print("stable at pi_th = 0.8:", stable_support(profile, 0.8))

print("\nrecovered model (least-squares refit on the stable support):")
for lab in model.stable_support:
    print(f"  {lab:>10s}  {model.coefficients[lab]:+.4f}")
if model.intercept is not None:
    print(f"  {'intercept':>10s}  {model.intercept:+.4f}")
print("truth: u*u_x -1.0, u_xx +0.1")

# Same design, STRidge instead: the joint ridge solve keeps u_xx in play.
model, _ = run_stride(design, "stridge", B=250, seed=seed)
print("\nSTRidge stable support:", {lab: round(model.coefficients[lab], 4) for lab in model.stable_support})
