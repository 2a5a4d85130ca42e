"""Resonance crossing of the exact flow and the pseudophase at arrival.

The pseudophase of a crossing at phase ``phi_e`` is

    Xi = (phi_e + H1_tilde(I0, phi_e, y*, x*) / b(y*, x*)) / (2 pi)

with ``(y*, x*)`` the point where the averaged flow reaches the resonant
surface.  Its asymptotic prediction is ``(phi0 + Phi*/eps) / (2 pi)`` where
``Phi*`` integrates ``omega0 + eps*omega1`` along the improved adiabatic flow
up to its own arrival at resonance.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from ._roots import scan_roots
from .averaging import averaged_crossings, improved_crossing, to_improved
from .errors import ConditionEViolated, NoCrossing, PreconditionViolation
from .integrate import EventSpec, IntegratorConfig, OdeProblem, exact_field_parametric, integrate_ensemble_to_event
from .model import (
    ROOT_TOL, PhaseState, SystemSpec, _vec, alpha, critical_phases, hamiltonian, resonant_action, torque_b,
)

TWO_PI = 2.0 * np.pi


def frac(v):
    """Fractional part in [0, 1)."""
    f = np.asarray(v, dtype=float) - np.floor(v)
    return np.where(f >= 1.0, 0.0, f)


def _circular(d, period):
    d = np.mod(np.abs(d), period)
    return np.minimum(d, period - d)


# ---------------------------------------------------------------------------
# pendulum-like reduction

@dataclass(frozen=True)
class CriticalPoint:
    phi_c: float
    kind: str  # "local_max" (saddle of the pendulum energy) or "local_min" (center)
    F_value: float
    F_second_derivative: float


@dataclass(frozen=True)
class PortraitClass:
    oscillatory: bool
    critical_points: tuple = ()
    b: float = float("nan")
    H1_mean: float = 0.0

    @property
    def local_maxima(self) -> tuple:
        return tuple(c for c in self.critical_points if c.kind == "local_max")

    def critical_pseudophases(self) -> np.ndarray:
        """Fractional pseudophase values attached to the saddles (local maxima of F)."""
        return np.array([
            float(frac((c.F_value - self.H1_mean) / (TWO_PI * self.b))) for c in self.local_maxima
        ])


def critical_points_of_F(sys: SystemSpec, y, x, n_grid: int = 1024,
                         degeneracy_tol: float = 1e-8) -> PortraitClass:
    """Critical points of ``F(., y, x)`` on [0, 2 pi) and the phase-portrait class.

    The sign scan resolves trigonometric polynomials of degree up to ``n_grid/4``.
    """
    y, x = _vec(y), _vec(x)
    roots, second, values = critical_phases(sys, y, x, n_grid)
    points = []
    for r, s, v in zip(roots, second, values):
        if abs(s) <= degeneracy_tol:
            raise ConditionEViolated(f"degenerate critical point of F at phi = {r:.12g} (F'' = {s:.3g})")
        points.append(CriticalPoint(float(r), "local_max" if s < 0 else "local_min", float(v), float(s)))
    a = resonant_action(sys, y, x)
    return PortraitClass(
        oscillatory=bool(points), critical_points=tuple(points),
        b=torque_b(sys, y, x), H1_mean=float(sys.H1.mean(a, y, x, 0.0)),
    )


def pendulum_energy(sys: SystemSpec, P, phi, y, x):
    """``alpha P^2 / 2 + F(phi)`` at frozen slow variables."""
    y, x = _vec(y), _vec(x)
    a = resonant_action(sys, y, x)
    b = torque_b(sys, y, x)
    al = alpha(sys, y, x)
    P = np.asarray(P, dtype=float)
    return 0.5 * al * P**2 + b * np.asarray(phi, dtype=float) + sys.H1(a, phi, y, x, 0.0)


def pendulum_field(sys: SystemSpec, y, x) -> OdeProblem:
    """Hamiltonian flow of the pendulum energy on ``[P, phi]``."""
    y, x = _vec(y), _vec(x)
    a = resonant_action(sys, y, x)
    b = torque_b(sys, y, x)
    al = alpha(sys, y, x)

    def field(t, Y):
        out = np.empty(Y.shape)
        out[..., 0] = -(b + sys.H1.dphi(a, Y[..., 1], y, x, 0.0))
        out[..., 1] = al * Y[..., 0]
        return out

    return OdeProblem(2, field, name="pendulum", vectorized=True)


def nu_of(phi_e: float, portrait: PortraitClass, epsilon: float) -> float:
    """``min(1/2, nu1 + eps)`` with nu1 the arc distance from phi_e to the nearest local max of F."""
    maxima = portrait.local_maxima
    if not maxima:
        return 0.5
    nu1 = min(float(_circular(phi_e - c.phi_c, TWO_PI)) for c in maxima)
    return min(0.5, nu1 + epsilon)


def exclusion_margin(xi_theor_frac: float, portrait: PortraitClass, b_star: float | None = None,
                     epsilon: float = 0.0, c_a: float = 1.0):
    """Distance of a fractional pseudophase from the saddle values.

    Returns ``(safe, margin)``; ``safe`` requires the circular distance to every
    saddle value to exceed ``c_a sqrt(eps) |ln eps|`` strictly.  Without saddles
    the margin is ``inf``.
    """
    if b_star is not None and portrait.local_maxima:
        portrait = PortraitClass(portrait.oscillatory, portrait.critical_points, b_star, portrait.H1_mean)
    hats = portrait.critical_pseudophases()
    if len(hats) == 0:
        return True, float("inf")
    margin = float(np.min(_circular(xi_theor_frac - hats, 1.0)))
    threshold = c_a * np.sqrt(epsilon) * abs(np.log(epsilon)) if epsilon > 0 else 0.0
    return margin > threshold, margin


# ---------------------------------------------------------------------------
# pseudophase

def pseudophase(sys: SystemSpec, phi_e, I0, y_star, x_star):
    """Pseudophase Xi for the unwrapped arrival phase ``phi_e``; vectorised over phi_e and I0."""
    y, x = _vec(y_star), _vec(x_star)
    b = torque_b(sys, y, x)
    phi_e = np.asarray(phi_e, dtype=float)
    Ht = sys.H1(I0, phi_e, y, x, 0.0) - sys.H1.mean(I0, y, x, 0.0)
    return (phi_e + Ht / b) / TWO_PI


def pseudophase_theory(sys: SystemSpec, state0: PhaseState, horizon_tau: float = 10.0,
                       config: IntegratorConfig | None = None) -> float:
    """Leading-order prediction of Xi from the improved adiabatic flow."""
    ist = to_improved(sys, state0)
    cross = improved_crossing(sys, ist.J, ist.eta, ist.xi, state0.epsilon, horizon_tau, config)
    return (state0.phi + cross.Phi_star / state0.epsilon) / TWO_PI


def pseudophase_theory_closed_example(J0: float, phi0: float, epsilon: float) -> float:
    """Closed form of :func:`pseudophase_theory` for :func:`~resphase.model.example_system`."""
    return (phi0 + 2.0 * J0**1.5 / (3.0 * epsilon)) / TWO_PI


@dataclass(frozen=True)
class Inversion:
    """Candidate arrival phases in [0, 2 pi) with ``dXi/dphi`` * 2 pi at each."""

    candidates: tuple = ()
    excluded: bool = False

    @property
    def phases(self) -> np.ndarray:
        return np.array([c[0] for c in self.candidates])


def _in_oscillatory_domain(phi, portrait: PortraitClass, F, tol=1e-12):
    for c in portrait.local_maxima:
        # the copy of the maximum lying in (phi - 2 pi, phi)
        shift = np.floor((phi - c.phi_c) / TWO_PI)
        pj = c.phi_c + TWO_PI * shift
        if pj >= phi:
            pj -= TWO_PI
        if F(pj) > F(phi) + tol:
            return True
    return False


def invert_pseudophase(sys: SystemSpec, xi_frac: float, y_star, x_star, I0: float,
                       n_grid: int = 1024) -> Inversion:
    """Solve the pseudophase relation for the arrival phase mod 2 pi.

    The relation is solved on every monotonicity interval of
    ``G(phi) = phi + H1_tilde(I0, phi)/b``; solutions inside oscillatory
    domains of the pendulum portrait are discarded.  ``excluded`` is set when
    nothing survives.
    """
    y, x = _vec(y_star), _vec(x_star)
    b = torque_b(sys, y, x)

    def G(p):
        p = np.asarray(p, dtype=float)
        return p + (sys.H1(I0, p, y, x, 0.0) - sys.H1.mean(I0, y, x, 0.0)) / b

    def dG(p):
        return 1.0 + sys.H1.dphi(I0, p, y, x, 0.0) / b

    turns = scan_roots(dG, 0.0, TWO_PI, n_grid)
    if len(turns) == 0:
        edges = [(0.0, TWO_PI)]
    else:
        edges = [(turns[i], turns[i + 1]) for i in range(len(turns) - 1)]
        edges.append((turns[-1], turns[0] + TWO_PI))

    portrait = critical_points_of_F(sys, y, x, n_grid)
    a = resonant_action(sys, y, x)

    def F(p):
        return float(b * p + sys.H1(a, p, y, x, 0.0))

    target0 = TWO_PI * float(xi_frac)
    found = []
    for lo, hi in edges:
        glo, ghi = float(G(lo)), float(G(hi))
        gmin, gmax = min(glo, ghi), max(glo, ghi)
        k0 = int(np.ceil((gmin - target0) / TWO_PI))
        k1 = int(np.floor((gmax - target0) / TWO_PI))
        for k in range(k0, k1 + 1):
            target = target0 + TWO_PI * k
            fl, fh = glo - target, ghi - target
            if fl == 0.0:
                root = lo
            elif fh == 0.0:
                root = hi
            else:
                root = brentq(lambda p: float(G(p)) - target, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
            root = float(np.mod(root, TWO_PI))
            if any(abs(_circular(root - f[0], TWO_PI)) < 1e-12 for f in found):
                continue
            if _in_oscillatory_domain(root, portrait, F):
                continue
            found.append((root, float(dG(root))))
    found.sort()
    return Inversion(tuple(found), excluded=not found)


# ---------------------------------------------------------------------------
# crossing of the exact flow

@dataclass(frozen=True)
class ResonanceReport:
    t_e: float
    tau_e: float
    state_e: PhaseState
    phi_e: float
    xi_value: float
    xi_frac: float
    nu: float
    near_exclusion: bool
    exclusion_margin: float
    tau_star: float = float("nan")
    y_star: np.ndarray = field(default=None, repr=False)
    x_star: np.ndarray = field(default=None, repr=False)
    energy_drift: float = float("nan")


@dataclass
class CrossingBatch:
    """Arrays describing the crossings of many trajectories; see :func:`detect_crossings`."""

    status: np.ndarray
    t_e: np.ndarray
    state_e: np.ndarray
    tau_star: np.ndarray
    y_star: np.ndarray
    x_star: np.ndarray
    xi: np.ndarray
    nu: np.ndarray
    margin: np.ndarray
    energy_drift: np.ndarray
    epsilon: np.ndarray
    n_steps: np.ndarray

    @property
    def ok(self) -> np.ndarray:
        return self.status == "event"

    @property
    def xi_frac(self) -> np.ndarray:
        return frac(self.xi)


def detect_crossings(sys: SystemSpec, I0, phi0, y0, x0, epsilon, horizon_tau: float = 10.0,
                     config: IntegratorConfig | None = None, track_energy: bool = True,
                     c_a: float = 1.0) -> CrossingBatch:
    """Integrate many exact trajectories to their first resonance crossing.

    Members are independent; failures are reported in ``status`` rather than raised.
    """
    n = sys.n
    I0 = np.atleast_1d(np.asarray(I0, dtype=float))
    B = len(I0)
    phi0 = np.broadcast_to(np.asarray(phi0, dtype=float), (B,))
    y0 = np.broadcast_to(np.asarray(y0, dtype=float).reshape(-1, n), (B, n))
    x0 = np.broadcast_to(np.asarray(x0, dtype=float).reshape(-1, n), (B, n))
    eps = np.broadcast_to(np.asarray(epsilon, dtype=float), (B,)).copy()
    if np.any(eps <= 0):
        raise PreconditionViolation("epsilon must be positive")
    if np.any(sys.omega0(I0, y0, x0) <= 0):
        raise PreconditionViolation("trajectories must start where omega0 > 0")
    dim = 2 + 2 * n
    Y0 = np.column_stack([I0, phi0, y0, x0, eps])

    drift = np.zeros(B)
    observer = None
    if track_energy:
        H_start = hamiltonian(sys, Y0[:, :dim], eps)

        def observer(idx, t, Y):
            dH = np.abs(hamiltonian(sys, Y[:, :dim], Y[:, dim]) - H_start[idx])
            drift[idx] = np.maximum(drift[idx], dH)

    ev = EventSpec(lambda t, Y: sys.omega0(Y[..., 0], Y[..., 2:2 + n], Y[..., 2 + n:dim]),
                   direction="decreasing", event_tol=0.1 * ROOT_TOL, vectorized=True)
    res = integrate_ensemble_to_event(exact_field_parametric(sys), Y0, 0.0, horizon_tau / eps, ev,
                                      config, observer=observer)
    ok = res.ok
    state_e = res.state_event[:, :dim]
    if track_energy:
        He = hamiltonian(sys, state_e, eps)
        drift = np.where(ok, np.maximum(drift, np.abs(He - H_start)), np.nan)
    else:
        drift[:] = np.nan

    tau_s, y_s, x_s, ok_avg = averaged_crossings(sys, I0, y0, x0, horizon_tau)
    status = np.where(ok & ~ok_avg, "no_averaged_crossing", res.status)
    xi = np.full(B, np.nan)
    nu = np.full(B, np.nan)
    margin = np.full(B, np.nan)
    cache = {}
    for i in np.flatnonzero(status == "event"):
        key = (tuple(y_s[i]), tuple(x_s[i]))
        if key not in cache:
            cache[key] = critical_points_of_F(sys, y_s[i], x_s[i])
        portrait = cache[key]
        xi[i] = float(pseudophase(sys, state_e[i, 1], I0[i], y_s[i], x_s[i]))
        nu[i] = nu_of(state_e[i, 1], portrait, eps[i])
        margin[i] = exclusion_margin(float(frac(xi[i])), portrait, epsilon=eps[i], c_a=c_a)[1]
    return CrossingBatch(status, res.t_event, state_e, tau_s, y_s, x_s, xi, nu, margin, drift, eps,
                         res.n_steps)


def detect_crossing(sys: SystemSpec, state0: PhaseState, horizon_tau: float = 10.0,
                    config: IntegratorConfig | None = None, c_a: float = 1.0) -> ResonanceReport:
    """First crossing of the resonant surface by the exact trajectory from ``state0``."""
    if not sys.omega0(state0.I, state0.y, state0.x) > 0:
        raise PreconditionViolation("trajectory must start where omega0 > 0")
    cb = detect_crossings(sys, [state0.I], state0.phi, state0.y, state0.x, state0.epsilon,
                          horizon_tau, config, c_a=c_a)
    if cb.status[0] != "event":
        raise NoCrossing(f"no resonance crossing within tau = {horizon_tau} ({cb.status[0]})")
    eps = state0.epsilon
    st = PhaseState.from_array(cb.state_e[0], eps)
    threshold = c_a * np.sqrt(eps) * abs(np.log(eps))
    return ResonanceReport(
        t_e=float(cb.t_e[0]), tau_e=float(eps * cb.t_e[0]), state_e=st, phi_e=st.phi,
        xi_value=float(cb.xi[0]), xi_frac=float(frac(cb.xi[0])), nu=float(cb.nu[0]),
        near_exclusion=bool(cb.margin[0] <= threshold), exclusion_margin=float(cb.margin[0]),
        tau_star=float(cb.tau_star[0]), y_star=cb.y_star[0], x_star=cb.x_star[0],
        energy_drift=float(cb.energy_drift[0]),
    )
