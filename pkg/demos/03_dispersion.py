"""Late-time decay of a subcritical solution in physical coordinates.

Run:  python demos/03_dispersion.py [t_end]

With data a = 2.3 in d = 7 the solution disperses and u(t, 0) decays like a
power of t.  The envelope slope over the final decade is printed; at
t_end = 100 it is close to -8.  Extended precision (18 digits) keeps
roundoff below the tail.
"""

import sys

from cubic_blowup.evolution_phys import PhysParams, decay_exponent, domain_for, evolve_phys, from_computational

t_end = float(sys.argv[1]) if len(sys.argv) > 1 else 40.0
grid = domain_for(t_end, 2.3)
run = evolve_phys(7, from_computational("2.3", grid, digits=18), t_end, PhysParams(stride=4, digits=18))
p, t_env, u_env = decay_exponent(run)
print(f"grid: {grid.n_cells} cells to r = {float(grid.y_max):.1f}")
print(f"envelope slope over [{t_end / 10:g}, {t_end:g}]: {p:.3f}")
for t, u in list(zip(t_env, u_env))[:: max(1, len(t_env) // 8)]:
    print(f"  t = {t:7.2f}  |u(t,0)| = {u:.3e}")
