"""Compare sparse solvers on the same Burgers trials.

For each design every solver sees identical noise and sample points, and a
trial counts as a success when some penalty on the path selects exactly
{u*u_x, u_xx}. Takes a couple of minutes on one core.
"""
from pdestride.experiments import burgers_source, compare_solvers

grid = [(n, "burgers-p11", 0.0) for n in (50, 100, 250)]
grid += [(n, "burgers-p19", 0.02) for n in (100, 250, 400)]
solvers = ("lasso", "stridge", "ihtd", "htp")
table = compare_solvers(grid, solvers, reps=10, master_seed=3, source=burgers_source())

print(f"{'N':>5s} {'preset':>12s} {'sigma':>6s} " + " ".join(f"{s:>8s}" for s in solvers))
for i, (n, preset, sigma) in enumerate(grid):
    row = " ".join(f"{table[s][i].frequency:8.2f}" for s in solvers)
    print(f"{n:5d} {preset:>12s} {sigma:6.2f} {row}")
