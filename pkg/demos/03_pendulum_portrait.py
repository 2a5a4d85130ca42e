"""Look at the pendulum-like reduction at the resonance point.

For the example system the torque b = 2 dominates the phase dependence of
H1, so F(phi) = b phi + H1 is monotone: no equilibria, no oscillatory
domains, and the pseudophase can be inverted uniquely.  Doubling the H1
amplitude gives F' = 2 + 3 cos(phi), which creates a saddle and a centre;
phases inside the resulting oscillatory domain are unreachable by a
trajectory coming from above the resonance.
"""

import numpy as np

from resphase import example_system
from resphase.experiments import analyze_point
from resphase.resonance import critical_points_of_F, frac, invert_pseudophase, pseudophase

y, x = [0.5], [1.0]  # where the averaged flow from (I, y, x) = (1, 0, 0) meets resonance

for scale in (1.0, 2.0):
    sys_ = example_system(h1_scale=scale)
    pc = critical_points_of_F(sys_, y, x)
    print(f"h1_scale = {scale:g}: b = {pc.b:g}, {len(pc.critical_points)} critical points")
    for c in pc.critical_points:
        print(f"    {c.kind:9s} at phi = {c.phi_c:.9f}, F'' = {c.F_second_derivative:+.4f}")

sys2 = example_system(h1_scale=2.0)
rep = analyze_point(sys2, y, x, epsilon=1e-4)
for centre, half in rep.exclusion_bands:
    print(f"pseudophases within {half:.4f} of {centre:.6f} are excluded at eps = 1e-4")

# Round trip through the pseudophase for the monotone case.
sys1 = example_system()
phi_e = 1.234
xi = float(frac(pseudophase(sys1, phi_e, 1.0, y, x)))
inv = invert_pseudophase(sys1, xi, y, x, 1.0)
print(f"monotone case: phi_e = {phi_e} -> Xi mod 1 = {xi:.9f} -> phi_e = {inv.phases[0]:.12f}")

# With a saddle present and I0 below the resonant action, a band of pseudophase
# values has no preimage outside the oscillatory domain (count 0 below).
counts = [len(invert_pseudophase(sys2, v, y, x, 0.3).candidates) for v in np.linspace(0, 1, 40, endpoint=False)]
print(f"saddle case, I0 = 0.3: candidate counts over a grid of Xi values: {counts}")
