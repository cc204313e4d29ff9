"""
From the ground state to the reduced-model coefficients
=======================================================

A walk through the stationary part of the library: the radial ground
state, its corrections, and the numbers that feed the scaling-factor ODE.
"""

import numpy as np

from qzlab import coeffs_2d, solve_corrections_2d, solve_ground_state_2d, solve_vortex_ground_state

# The 2D ground state solves -R + Delta R + R^3 = 0 with R'(0) = 0 and
# R -> 0 at infinity.  The default grid spans [0, 30] with 3001 nodes.
base = solve_ground_state_2d()
R = base["R"].values
print("R(0)          =", R[0])
print("mass int R^2  =", base.grid.integrate(R**2))

# The bundle keeps the shooting guess, the Newton-polished value of R(0)
# and the final residual.
print(base.summary())

# The first-order corrections are linear problems around R.
corr = solve_corrections_2d(base, "scalar2d")
cs = coeffs_2d(base, corr)
for name in ("m1", "m2", "m3"):
    print(f"{name} = {cs[name]:.5f}")

# The charged (vortex) profile is a second, independent check of the solver.
vortex = solve_vortex_ground_state()
print("vortex mass   =", vortex.grid.integrate(vortex["R1"].values ** 2))

# Where does the mass sit?
cumulative = np.cumsum(R**2 * base.grid.nodes) * base.grid.h
print("half-mass radius ~", base.grid.nodes[np.searchsorted(cumulative, cumulative[-1] / 2)])
