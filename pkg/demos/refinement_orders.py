"""Observed orders of the three time steppers on manufactured solutions.

Each study halves the step (and for Navier-Stokes also the vertical spacing)
and reports log2 of the error ratio.
"""
from bllab.grid import Grid
from bllab.mms import euler_error, layer_error, ns_error, observed_order

print("Euler (RK4), n_y = 256")
g = Grid(n_x=16, n_y=256, n_z=64)
# dt = 0.05 trips the CFL guard; by dt = 0.005 the spatial error starts to show
steps = (0.02, 0.01, 0.005)
errs = [euler_error(g, dt) for dt in steps]
for dt, e in zip(steps, errs):
    print(f"  dt={dt:<6} err={e:.3e}")
print("  orders:", ", ".join(f"{observed_order(a, b):.2f}" for a, b in zip(errs, errs[1:])))

print("\nNavier-Stokes (CN + AB2), dt and h halved together")
errs = [ns_error(Grid(n_x=16, n_y=ny, n_z=32), dt)[0] for ny, dt in ((64, 0.02), (128, 0.01))]
print(f"  errors {errs[0]:.3e} -> {errs[1]:.3e}, order {observed_order(*errs):.2f}")

print("\nlayer IMEX with the wall friction row")
lg = Grid(n_x=16, n_y=32, n_z=128)
errs = [layer_error(lg, dt)[0] for dt in (0.02, 0.01, 0.005)]
print("  orders:", ", ".join(f"{observed_order(a, b):.2f}" for a, b in zip(errs, errs[1:])))
