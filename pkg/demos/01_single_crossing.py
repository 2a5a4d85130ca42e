"""Follow one trajectory of the example system through resonance.

The fast frequency omega0 = I - x^2 decreases as x drifts upward with slow
time, so a trajectory started at I = 1, x = 0 reaches omega0 = 0 near tau = 1.
We locate that crossing, evaluate the pseudophase there and compare it with
the asymptotic prediction built from the improved adiabatic flow.
"""

import numpy as np

from resphase import detect_crossing, example_system, pseudophase_theory
from resphase.averaging import state_with_invariant, to_improved

sys_ = example_system()
eps = 1e-3

# Choose I0 so that the improved action J equals 1 exactly.
state0 = state_with_invariant(sys_, 1.0, 0.0, [0.0], [0.0], eps)
print(f"initial state: I0 = {state0.I:.12f}, improved action J0 = {to_improved(sys_, state0).J:.12f}")

rep = detect_crossing(sys_, state0)
print(f"exact crossing at t_e = {rep.t_e:.3f}  (tau_e = {rep.tau_e:.6f})")
print(f"  omega0 there: {sys_.omega0(rep.state_e.I, rep.state_e.y, rep.state_e.x):.2e}")
print(f"  arrival phase (unwrapped): {rep.phi_e:.6f} rad, about {rep.phi_e / (2 * np.pi):.1f} turns")
print(f"  energy drift along the way: {rep.energy_drift:.1e}")

theory = pseudophase_theory(sys_, state0)
print(f"pseudophase measured {rep.xi_value:.6f}, predicted {theory:.6f}")
print(f"difference {rep.xi_value - theory:+.2e}; sqrt(eps) = {np.sqrt(eps):.2e}")

# Halving eps should roughly shrink the difference by sqrt(2) on average; a
# single phase is noisy, so look at a handful.
for e in (1e-3, 5e-4, 2.5e-4):
    diffs = []
    for phi0 in np.linspace(0, 2 * np.pi, 8, endpoint=False):
        s = state_with_invariant(sys_, 1.0, phi0, [0.0], [0.0], e)
        diffs.append(detect_crossing(sys_, s).xi_value - pseudophase_theory(sys_, s))
    print(f"eps = {e:8.2e}: rms difference over 8 phases {np.sqrt(np.mean(np.square(diffs))):.2e}")

