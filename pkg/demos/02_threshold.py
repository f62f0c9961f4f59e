"""Bisection for the critical amplitude and the near-critical mode fit at d = 7.

Run:  python demos/02_threshold.py

A coarse grid keeps this to a few minutes.  The bracket narrows around the
amplitude where evolutions switch from dispersing to blowing up; the two
endpoints shadow the self-similar solution, with P(s, 0) close to 1/4, before
they separate.
"""

from fractions import Fraction

import numpy as np

from cubic_blowup.evolution_ss import EvolutionParams, Grid
from cubic_blowup.threshold import bisect, estimate_blowup_time, refine_blowup_time, sign_check

params = EvolutionParams(grid=Grid.from_extent(20, Fraction(1, 16)))
rec = bisect(7, "2", "3", "1e-10", params)
lo, hi = rec.bracket
print(f"a* in [{float(lo):.12f}, {float(hi):.12f}] after {len(rec.probes)} probes")

for side, a in (("sub", lo), ("super", hi)):
    P0 = np.asarray(rec.outcomes[a].P0, float)
    print(f"{side}: P(s,0) closest approach to 1/4 is {np.min(np.abs(P0 - 0.25)):.2e}")

T0 = estimate_blowup_time(rec, "super")
outcomes = {"sub": rec.outcomes[lo], "super": rec.outcomes[hi]}
T, fits, window = refine_blowup_time(outcomes, T0, 3.0, 4.0)
print(f"T = {float(T):.12f}, fit window tau in [{window[0]:.2f}, {window[1]:.2f}]")
for side, f in fits.items():
    print(f"{side}: c={f.c:.5f} a1={f.a1:.2e} lambda_-1={f.lambda_minus1:.4f} a_-1={f.a_minus1:.4f}")
print("opposite a1 signs:", sign_check(fits["sub"], fits["super"])["opposite"])
