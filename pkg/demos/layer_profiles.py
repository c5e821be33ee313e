"""Solve a small expansion hierarchy and look at what the layer correctors do.

Run from the repository root:  python3 demos/layer_profiles.py
"""
import numpy as np

from bllab.expansion import ApproxSolution, PipelineConfig, compute_f_g0, run_pipeline
from bllab.grid import Grid

g = Grid(n_x=32, n_y=192, n_z=192)
cfg = PipelineConfig(T=0.1, dt=1e-3, n_out=5, grid=g)
prof = run_pipeline(cfg)

print("stage diagnostics")
for k, v in prof.diagnostics.items():
    print(f"  {k}: {v}")

# each corrector lives in z = y / eps and should die off well before Z_max
z = g.z_nodes
T = prof.times[-1]
print(f"\nlayer correctors at t = {T}")
print("  order   max|u|      |u| at z=1   |u| at z=4   |u| at Z_max")
for k, h in sorted(prof.layers.items()):
    u = np.abs(h.u[prof.step(T)])
    at = lambda zz: u[:, np.searchsorted(z, zz)].max()  # noqa: E731
    print(f"  {k:>5}   {u.max():.3e}   {at(1.0):.3e}    {at(4.0):.3e}    {u[:, -1].max():.1e}")

# the composite flow at two viscosities: the layer shrinks with eps, the outer part does not
for eps in (0.2, 0.05):
    a = ApproxSolution(prof, eps)
    ids = a.boundary_identities(T)
    f, _, g0 = compute_f_g0(prof, eps)
    print(f"\neps = {eps}: wall flux |f|max = {np.abs(f).max():.3e}, |g0|max = {np.abs(g0).max():.3e}")
    print("  identity defects: " + ", ".join(f"{k} {v:.1e}" for k, v in ids.items()))
