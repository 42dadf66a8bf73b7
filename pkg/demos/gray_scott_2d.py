"""Learn both Gray-Scott equations from a small 2-D simulation.

The 3-D reference setup is expensive, so this demo runs a 96 x 96 grid with
the same parameters and uses the 46-term two-field dictionary. Takes a few
minutes on one core.
"""
from pdestride.dictionary import preset_terms
from pdestride.field import add_noise, central_box
from pdestride.simulate import GrayScottConfig, simulate_gray_scott
from pdestride.stability import pde_stride

config = GrayScottConfig(n=96, dims=2)
u, v = simulate_gray_scott(config)
print(f"simulated {config.dims}-D Gray-Scott on {config.shape}, {u.nt} saved slices")

sigma = 0.01
u_obs = add_noise(u, sigma, 11)
v_obs = add_noise(v, sigma, 12)

# Sample from a centred square where the pattern has formed.
region = central_box(u_obs, 0.5 * config.side)
terms = preset_terms("gray-scott-2d-p46", names=("u", "v"))

truth = {
    "u": "u_t = 2e-5 (u_xx + u_yy) - u v^2 + 0.014 (1 - u)",
    "v": "v_t = 1e-5 (v_xx + v_yy) + u v^2 - 0.067 v",
}
for target in ("u", "v"):
    model, _, _ = pde_stride([u_obs, v_obs], target, terms, 400, region=region, seed=5, sigma=sigma)
    print(f"\n{target}_t, stable terms:")
    for lab in model.stable_support:
        print(f"  {lab:>10s}  {model.coefficients[lab]:+.6g}  (importance {model.importances[lab]:.2f})")
    if model.intercept is not None:
        print(f"  {'intercept':>10s}  {model.intercept:+.6g}")
    print("truth:", truth[target])
