"""
Arrested collapse in two dimensions
===================================

The reduced dynamics of the width ``lambda`` with and without the
quantum correction ``Gamma``.
"""

from qzlab import ReducedParams2D, integrate_lambda_2d, oscillation_period, threshold_gamma, turning_points

# Coefficients of the scalar model and one set of initial data.
p = ReducedParams2D(H=-0.0430, N_tilde=0.240, Gamma=5e-3, m1=0.727, m2=0.553, m3=10.785)

# The orbit in y = lambda^2 is confined between the two positive roots of Q.
y_min, y_max = turning_points(p)
print(f"lambda oscillates in [{y_min**0.5:.4f}, {y_max**0.5:.4f}]")
print(f"period = {float(oscillation_period(p)):.3f}")

traj = integrate_lambda_2d(p, 1.0, 60.0)
print(f"integrated extrema: {traj.lam_min:.4f} .. {traj.lam_max:.4f}")
print(f"worst first-integral residual: {traj.diagnostics['first_integral_max']:.1e}")

# Without Gamma the same data collapse in finite time.
classic = integrate_lambda_2d(p.with_gamma(0.0), 1.0, 60.0)
print(f"Gamma = 0: lambda reaches the floor at t = {classic.event:.4f}")

# Bounded orbits only exist below a threshold in Gamma.
gmax = threshold_gamma(p)
print(f"Gamma_max = {gmax:.5f}")
for factor in (0.5, 0.9, 0.99):
    q = p.with_gamma(factor * gmax)
    print(f"  Gamma = {factor:4.2f} Gamma_max -> period {float(oscillation_period(q)):7.3f}")
