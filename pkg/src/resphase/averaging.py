"""Near-identity canonical change to improved adiabatic variables.

Old variables ``(I, phi, y, x)`` and new ones ``(J, psi, eta, xi)`` are tied
together by the generating function ``J phi + eta x / eps + eps S1(J, phi, eta, x)``:

    I   = J   + eps    dS1/dphi        psi = phi + eps    dS1/dJ
    y   = eta + eps**2 dS1/dx          xi  = x   + eps**2 dS1/deta

Both directions are solved by fixed-point iteration; the contraction factor
is ``O(eps / omega0**2)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EventNotFound, NoCrossing, PreconditionViolation, TooCloseToResonance, TransformDiverged
from .integrate import (
    EventSpec, IntegratorConfig, averaged_field, improved_field, improved_field_parametric,
    integrate_ensemble_to_event, integrate_to_event,
)
from .model import OMEGA_FLOOR, ROOT_TOL, PhaseState, S1_and_partials, SystemSpec, _vec

FIXED_POINT_TOL = 1e-14
FIXED_POINT_MAXITER = 50


@dataclass(frozen=True)
class ImprovedState:
    J: float
    psi: float
    eta: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "eta", _vec(self.eta))
        object.__setattr__(self, "xi", _vec(self.xi))


@dataclass(frozen=True)
class ImprovedCrossing:
    tau_star_a: float
    Phi_star: float
    eta_star: np.ndarray
    xi_star: np.ndarray
    trajectory: object = field(default=None, repr=False, compare=False)


def _rel_change(new, old):
    return np.max(np.abs(new - old) / np.maximum(1.0, np.abs(old)), initial=0.0)


def _eps_vec(eps):
    return np.asarray(eps, dtype=float)[..., None]


def to_improved_arrays(sys: SystemSpec, I, phi, y, x, eps, omega_floor=OMEGA_FLOOR):
    """Vectorised :func:`to_improved`; returns ``(J, psi, eta, xi)`` arrays."""
    I = np.asarray(I, dtype=float)
    phi = np.asarray(phi, dtype=float)
    y, x = np.asarray(y, dtype=float), np.asarray(x, dtype=float)
    e = np.asarray(eps, dtype=float)
    if np.any(np.abs(sys.omega0(I, y, x)) <= omega_floor):
        raise TooCloseToResonance("state is on or too near the resonant surface")
    J, eta = I.copy(), y.copy()
    for _ in range(FIXED_POINT_MAXITER):
        p = S1_and_partials(sys, J, phi, eta, x, omega_floor)
        J_new = I - e * p.dphi
        eta_new = y - _eps_vec(e) ** 2 * p.dx
        change = max(_rel_change(J_new, J), _rel_change(eta_new, eta))
        J, eta = J_new, eta_new
        if change < FIXED_POINT_TOL:
            break
    else:
        raise TransformDiverged(f"no convergence in {FIXED_POINT_MAXITER} iterations (last change {change:.3g})")
    p = S1_and_partials(sys, J, phi, eta, x, omega_floor)
    return J, phi + e * p.dI, eta, x + _eps_vec(e) ** 2 * p.dy


def from_improved_arrays(sys: SystemSpec, J, psi, eta, xi, eps, omega_floor=OMEGA_FLOOR):
    """Vectorised :func:`from_improved`; returns ``(I, phi, y, x)`` arrays."""
    J = np.asarray(J, dtype=float)
    psi = np.asarray(psi, dtype=float)
    eta, xi = np.asarray(eta, dtype=float), np.asarray(xi, dtype=float)
    e = np.asarray(eps, dtype=float)
    if np.any(np.abs(sys.omega0(J, eta, xi)) <= omega_floor):
        raise TooCloseToResonance("improved state is on or too near the resonant surface")
    phi, x = psi.copy(), xi.copy()
    for _ in range(FIXED_POINT_MAXITER):
        p = S1_and_partials(sys, J, phi, eta, x, omega_floor)
        phi_new = psi - e * p.dI
        x_new = xi - _eps_vec(e) ** 2 * p.dy
        change = max(_rel_change(phi_new, phi), _rel_change(x_new, x))
        phi, x = phi_new, x_new
        if change < FIXED_POINT_TOL:
            break
    else:
        raise TransformDiverged(f"no convergence in {FIXED_POINT_MAXITER} iterations (last change {change:.3g})")
    p = S1_and_partials(sys, J, phi, eta, x, omega_floor)
    return J + e * p.dphi, phi, eta + _eps_vec(e) ** 2 * p.dx, x


def to_improved(sys: SystemSpec, state: PhaseState) -> ImprovedState:
    J, psi, eta, xi = to_improved_arrays(sys, state.I, state.phi, state.y, state.x, state.epsilon)
    return ImprovedState(float(J), float(psi), eta, xi)


def from_improved(sys: SystemSpec, istate: ImprovedState, epsilon: float) -> PhaseState:
    I, phi, y, x = from_improved_arrays(sys, istate.J, istate.psi, istate.eta, istate.xi, epsilon)
    return PhaseState(float(I), float(phi), y, x, epsilon)


def state_with_invariant(sys: SystemSpec, J0: float, phi0: float, eta0, x0, epsilon: float) -> PhaseState:
    """Exact initial state whose improved invariant is ``J0``.

    Uses the mixed form of the transformation, which is explicit in ``(J, phi, eta, x)``.
    """
    eta0, x0 = _vec(eta0), _vec(x0)
    p = S1_and_partials(sys, J0, phi0, eta0, x0)
    I0 = J0 + epsilon * float(p.dphi)
    y0 = eta0 + epsilon**2 * p.dx
    return PhaseState(I0, phi0, y0, x0, epsilon)


def states_with_invariant(sys: SystemSpec, J0, phi0, eta0, x0, epsilon):
    """Vectorised :func:`state_with_invariant` returning ``(I0, y0)`` arrays."""
    p = S1_and_partials(sys, J0, phi0, eta0, x0)
    return J0 + np.asarray(epsilon) * p.dphi, np.asarray(eta0) + _eps_vec(epsilon) ** 2 * p.dx


def _resonance_event(sys: SystemSpec, J_of, slices):
    s_eta, s_xi = slices

    def g(t, Y):
        return sys.omega0(J_of(Y), Y[..., s_eta], Y[..., s_xi])

    # resonance crossings are reported with |omega0| below ROOT_TOL
    return EventSpec(g, direction="decreasing", event_tol=0.1 * ROOT_TOL, vectorized=True)


def improved_crossing(sys: SystemSpec, J0: float, eta0, xi0, epsilon: float,
                      horizon_tau: float = 10.0, config: IntegratorConfig | None = None) -> ImprovedCrossing:
    """First arrival of the improved adiabatic flow at the resonant surface."""
    eta0, xi0 = _vec(eta0), _vec(xi0)
    n = sys.n
    if not sys.omega0(J0, eta0, xi0) > 0:
        raise PreconditionViolation("improved flow must start where omega0 > 0")
    ev = _resonance_event(sys, lambda Y: J0, (slice(0, n), slice(n, 2 * n)))
    y0 = np.concatenate([eta0, xi0, [0.0]])
    try:
        tau, ye, traj = integrate_to_event(improved_field(sys, epsilon, J0), y0, 0.0, horizon_tau, ev, config)
    except EventNotFound as exc:
        raise NoCrossing(f"improved flow does not reach resonance within tau = {horizon_tau}") from exc
    return ImprovedCrossing(tau, float(ye[2 * n]), ye[:n], ye[n:2 * n], traj)


def improved_crossings(sys: SystemSpec, J0, eta0, xi0, epsilon, horizon_tau: float = 10.0,
                       config: IntegratorConfig | None = None):
    """Batched improved crossings.

    Returns ``(tau_star_a, Phi_star, eta_star, xi_star, ok)``; members that do
    not cross have ``ok`` False and NaN data.
    """
    n = sys.n
    J0 = np.asarray(J0, dtype=float)
    B = len(J0)
    eps = np.broadcast_to(np.asarray(epsilon, dtype=float), (B,))
    eta0 = np.asarray(eta0, dtype=float).reshape(B, n)
    xi0 = np.asarray(xi0, dtype=float).reshape(B, n)
    Y0 = np.column_stack([eta0, xi0, np.zeros(B), J0, eps])
    ev = _resonance_event(sys, lambda Y: Y[..., 2 * n + 1], (slice(0, n), slice(n, 2 * n)))
    res = integrate_ensemble_to_event(improved_field_parametric(sys), Y0, 0.0, horizon_tau, ev, config)
    Ye = res.state_event
    return res.t_event, Ye[:, 2 * n], Ye[:, :n], Ye[:, n:2 * n], res.ok


def averaged_crossing(sys: SystemSpec, I0: float, y0, x0, horizon_tau: float = 10.0,
                      config: IntegratorConfig | None = None):
    """First arrival ``(tau_star, y_star, x_star)`` of the averaged flow at resonance."""
    y0, x0 = _vec(y0), _vec(x0)
    n = sys.n
    if not sys.omega0(I0, y0, x0) > 0:
        raise PreconditionViolation("averaged flow must start where omega0 > 0")
    ev = _resonance_event(sys, lambda Y: Y[..., 0], (slice(1, 1 + n), slice(1 + n, 1 + 2 * n)))
    state0 = np.concatenate([[I0], y0, x0])
    try:
        tau, ye, _ = integrate_to_event(averaged_field(sys), state0, 0.0, horizon_tau, ev, config)
    except EventNotFound as exc:
        raise NoCrossing(f"averaged flow does not reach resonance within tau = {horizon_tau}") from exc
    return tau, ye[1:1 + n], ye[1 + n:1 + 2 * n]


def averaged_crossings(sys: SystemSpec, I0, y0, x0, horizon_tau: float = 10.0,
                       config: IntegratorConfig | None = None):
    """Batched :func:`averaged_crossing`; returns ``(tau_star, y_star, x_star, ok)``."""
    n = sys.n
    I0 = np.asarray(I0, dtype=float)
    B = len(I0)
    Y0 = np.column_stack([I0, np.asarray(y0, dtype=float).reshape(B, n), np.asarray(x0, dtype=float).reshape(B, n)])
    ev = _resonance_event(sys, lambda Y: Y[..., 0], (slice(1, 1 + n), slice(1 + n, 1 + 2 * n)))
    res = integrate_ensemble_to_event(averaged_field(sys), Y0, 0.0, horizon_tau, ev, config)
    Ye = res.state_event
    return res.t_event, Ye[:, 1:1 + n], Ye[:, 1 + n:1 + 2 * n], res.ok
