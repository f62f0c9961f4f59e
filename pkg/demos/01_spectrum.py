"""Spectrum of the linearised flow around the self-similar profile.

Run:  python demos/01_spectrum.py

Shooting gives the eigenvalues in low dimensions; the continued fraction
handles d >= 7 and the d -> infinity limit.  Both methods should agree
where they overlap.
"""

from mpmath import mp

from cubic_blowup.spectrum_cf import find_cf_eigenvalues, heun_cf_eigenvalues
from cubic_blowup.spectrum_shoot import find_eigenvalues

mp.dps = 30

# Shooting at d = 5.  The coarse settings below take under a minute.
rep = find_eigenvalues(5, window=(-3.5, 4.5), N=120, digits=30, grid_step="0.02")
print("d=5, shooting:", [mp.nstr(x, 8) for x in rep.values()])

# The same problem at d = 8 through the continued fraction.
cf = heun_cf_eigenvalues(8, window=(-3.6, 3), depth=256, digits=30, grid_step="0.02")
sh = find_eigenvalues(8, window=(-3.6, 3), N=120, digits=30, grid_step="0.02")
for a, b in zip(cf.values(), sh.values()):
    print(f"d=8: cf {mp.nstr(a, 10)}  shooting {mp.nstr(b, 10)}  diff {mp.nstr(abs(a - b), 2)}")

# Limiting spectrum.  lambda = 2 and 1 terminate the series and come out exact;
# the anomalous values (poles of the fraction) are listed separately.
inf = find_cf_eigenvalues(window=("-4.5", "3"), depth=256, digits=30, grid_step="0.02")
print("d=inf:", [mp.nstr(x, 8) for x in inf.values()])
print("poles:", [mp.nstr(x, 6) for x in inf.poles])
