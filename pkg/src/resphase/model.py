"""Slow-fast Hamiltonian systems and the quantities attached to their resonant surface.

The Hamiltonian is ``H = H0(I, y, x) + eps * H1(I, phi, y, x, eps)`` with one
fast phase ``phi``.  ``H0`` and its partials are supplied analytically by the
user; ``H1`` is a :class:`~resphase.fourier.FourierSeries` in ``phi``.

Array conventions follow :mod:`resphase.fourier`: ``I`` and ``phi`` share a
batch shape ``S`` and ``y``, ``x`` carry a trailing axis of length ``n``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from ._roots import safeguarded_newton, scan_roots
from .errors import ConditionEViolated, DomainError, TooCloseToResonance
from .fourier import Coefficient, FourierSeries

OMEGA_FLOOR = 1e-8
ROOT_TOL = 1e-12


@dataclass(frozen=True)
class SystemSpec:
    """A slow-fast Hamiltonian with ``n`` pairs of slow variables."""

    n: int
    H0: Callable
    omega0: Callable  # dH0/dI
    dH0_dy: Callable
    dH0_dx: Callable
    domega0_dI: Callable  # d2H0/dI2
    domega0_dy: Callable
    domega0_dx: Callable
    H1: FourierSeries
    action_bracket: tuple[float, float]
    d2omega0_dI2: Callable | None = None
    name: str = "system"
    # optional hand-vectorised exact field (eps, state) -> d(state)/dt; must
    # agree with the field assembled from H0 and H1
    exact_rhs: Callable | None = None


@dataclass(frozen=True)
class PhaseState:
    """Exact-system state.  ``phi`` is unwrapped, never reduced mod 2*pi."""

    I: float
    phi: float
    y: np.ndarray
    x: np.ndarray
    epsilon: float

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "I", float(self.I))
        object.__setattr__(self, "phi", float(self.phi))
        if y.shape != x.shape or y.ndim != 1:
            raise ValueError(f"y and x must be matching vectors, got {y.shape} and {x.shape}")
        if not (self.epsilon >= 0):
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")
        vals = np.concatenate([[self.I, self.phi, self.epsilon], y, x])
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite PhaseState")

    @property
    def n(self) -> int:
        return len(self.y)

    def as_array(self) -> np.ndarray:
        return np.concatenate([[self.I, self.phi], self.y, self.x])

    @classmethod
    def from_array(cls, arr, epsilon: float) -> "PhaseState":
        arr = np.asarray(arr, dtype=float)
        n = (len(arr) - 2) // 2
        return cls(arr[0], arr[1], arr[2:2 + n], arr[2 + n:2 + 2 * n], epsilon)


@dataclass(frozen=True)
class SlowState:
    I_bar: float
    y_bar: np.ndarray
    x_bar: np.ndarray


def _vec(v) -> np.ndarray:
    return np.atleast_1d(np.asarray(v, dtype=float))


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise DomainError("non-finite argument")


# ---------------------------------------------------------------------------
# frequency and resonant surface

def omega0(sys: SystemSpec, I, y, x):
    """Frequency of the fast phase, dH0/dI."""
    y, x = _vec(y), _vec(x)
    _check_finite(I, y, x)
    return sys.omega0(I, y, x)


def resonant_action(sys: SystemSpec, y, x, root_tol: float = ROOT_TOL, bracket=None) -> float:
    """The action ``a(y, x)`` on the resonant surface, where omega0 vanishes."""
    y, x = _vec(y), _vec(x)
    _check_finite(y, x)
    lo, hi = bracket if bracket is not None else sys.action_bracket
    return float(safeguarded_newton(
        lambda I: float(sys.omega0(I, y, x)),
        lambda I: float(sys.domega0_dI(I, y, x)),
        lo, hi, tol=root_tol,
    ))


def resonant_action_gradient(sys: SystemSpec, y, x):
    """``(a, da/dy, da/dx)`` with the partials from implicit differentiation."""
    y, x = _vec(y), _vec(x)
    a = resonant_action(sys, y, x)
    wI = sys.domega0_dI(a, y, x)
    return a, -np.asarray(sys.domega0_dy(a, y, x)) / wI, -np.asarray(sys.domega0_dx(a, y, x)) / wI


def alpha(sys: SystemSpec, y, x) -> float:
    y, x = _vec(y), _vec(x)
    a = resonant_action(sys, y, x)
    return float(sys.domega0_dI(a, y, x))


def torque_b(sys: SystemSpec, y, x) -> float:
    """Transversality coefficient ``b = a_x . H0_y - a_y . H0_x`` on the surface."""
    y, x = _vec(y), _vec(x)
    a, a_y, a_x = resonant_action_gradient(sys, y, x)
    return float(np.dot(a_x, sys.dH0_dy(a, y, x)) - np.dot(a_y, sys.dH0_dx(a, y, x)))


def F_of_phi(sys: SystemSpec, phi, y, x):
    """``F(phi) = b * phi + H1(a, phi, y, x, 0)``; accepts an array of phases."""
    y, x = _vec(y), _vec(x)
    a = resonant_action(sys, y, x)
    b = torque_b(sys, y, x)
    return b * np.asarray(phi, dtype=float) + sys.H1(a, phi, y, x, 0.0)


def dF_dphi(sys: SystemSpec, phi, y, x):
    y, x = _vec(y), _vec(x)
    a = resonant_action(sys, y, x)
    return torque_b(sys, y, x) + sys.H1.dphi(a, phi, y, x, 0.0)


def d2F_dphi2(sys: SystemSpec, phi, y, x):
    y, x = _vec(y), _vec(x)
    a = resonant_action(sys, y, x)
    return sys.H1.d2phi(a, phi, y, x, 0.0)


# ---------------------------------------------------------------------------
# averaging quantities

def H1_mean(sys: SystemSpec, I, y, x):
    """Phase average of H1 at eps = 0."""
    return sys.H1.mean(I, _vec(y), _vec(x), 0.0)


def H1_tilde(sys: SystemSpec, I, phi, y, x):
    """Zero-mean part of H1 at eps = 0."""
    y, x = _vec(y), _vec(x)
    return sys.H1(I, phi, y, x, 0.0) - sys.H1.mean(I, y, x, 0.0)


def omega1(sys: SystemSpec, I, y, x):
    """Frequency correction, the I-derivative of the phase-averaged H1."""
    return sys.H1.mean_gradient(I, _vec(y), _vec(x), 0.0)[0]


class S1Partials(NamedTuple):
    S1: np.ndarray
    dphi: np.ndarray
    dI: np.ndarray
    dy: np.ndarray
    dx: np.ndarray


def S1_and_partials(sys: SystemSpec, I, phi, y, x, omega_floor: float = OMEGA_FLOOR) -> S1Partials:
    """First-order generating function and its partials.

    ``S1 = A / omega0`` where ``A`` is the zero-mean phi-antiderivative of
    ``mean(H1) - H1``; everything is exact term by term on the harmonics.
    Vectorised over the batch shape.
    """
    y, x = _vec(y), _vec(x)
    w = np.asarray(sys.omega0(I, y, x), dtype=float)
    if np.any(np.abs(w) <= omega_floor):
        raise TooCloseToResonance(f"|omega0| = {np.min(np.abs(w)):.3g} <= {omega_floor:g}")
    A, AI, Ay, Ax = sys.H1.antiderivative_gradient(I, phi, y, x, 0.0)
    A, AI = -A, -AI
    Ay, Ax = -Ay, -Ax
    wI = np.asarray(sys.domega0_dI(I, y, x), dtype=float)
    wy = np.asarray(sys.domega0_dy(I, y, x), dtype=float)
    wx = np.asarray(sys.domega0_dx(I, y, x), dtype=float)
    S1 = A / w
    dphi = -(sys.H1(I, phi, y, x, 0.0) - sys.H1.mean(I, y, x, 0.0)) / w
    dI = AI / w - A * wI / w**2
    dy = Ay / w[..., None] - (A / w**2)[..., None] * wy
    dx = Ax / w[..., None] - (A / w**2)[..., None] * wx
    return S1Partials(S1, dphi, dI, dy, dx)


# ---------------------------------------------------------------------------
# genericity conditions

def critical_phases(sys: SystemSpec, y, x, n_grid: int = 1024):
    """Roots of dF/dphi on [0, 2*pi) with F'' and F at each root."""
    y, x = _vec(y), _vec(x)
    a = resonant_action(sys, y, x)
    b = torque_b(sys, y, x)
    roots = scan_roots(lambda p: b + sys.H1.dphi(a, p, y, x, 0.0), 0.0, 2 * np.pi, n_grid)
    if len(roots) == 0:
        return roots, np.array([]), np.array([])
    second = np.asarray(sys.H1.d2phi(a, roots, y, x, 0.0))
    values = b * roots + np.asarray(sys.H1(a, roots, y, x, 0.0))
    return roots, second, values


@dataclass(frozen=True)
class ConditionReport:
    alpha: float
    b: float
    condition_B: bool
    condition_C: bool
    condition_E: bool
    critical_phases: tuple = ()
    second_derivatives: tuple = ()
    critical_values: tuple = ()
    witnesses: tuple = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return self.condition_B and self.condition_C and self.condition_E


def check_conditions(sys: SystemSpec, y_star, x_star, degeneracy_tol: float = 1e-8,
                     value_tol: float = 1e-8, n_grid: int = 1024) -> ConditionReport:
    """Check the nondegeneracy (B), transversality (C) and genericity (E) conditions."""
    y, x = _vec(y_star), _vec(x_star)
    al = alpha(sys, y, x)
    b = torque_b(sys, y, x)
    notes = []
    okB = al != 0.0
    okC = b != 0.0
    if not okB:
        notes.append(f"B: alpha = {al:g}")
    if not okC:
        notes.append(f"C: b = {b:g}")
    roots, second, values = critical_phases(sys, y, x, n_grid)
    okE = True
    for r, s in zip(roots, second):
        if abs(s) <= degeneracy_tol:
            okE = False
            notes.append(f"E: degenerate critical point phi = {r:.12g}, F'' = {s:.3g}")
    for i in range(len(values)):
        for j in range(i + 1, len(values)):
            if abs(values[i] - values[j]) <= value_tol:
                okE = False
                notes.append(f"E: equal critical values at phi = {roots[i]:.12g}, {roots[j]:.12g}")
    return ConditionReport(
        alpha=al, b=b, condition_B=okB, condition_C=okC, condition_E=okE,
        critical_phases=tuple(roots), second_derivatives=tuple(second),
        critical_values=tuple(values), witnesses=tuple(notes),
    )


def require_condition_E(sys: SystemSpec, y, x, degeneracy_tol: float = 1e-8, n_grid: int = 1024):
    roots, second, values = critical_phases(sys, y, x, n_grid)
    bad = np.abs(second) <= degeneracy_tol
    if np.any(bad):
        raise ConditionEViolated(f"degenerate critical point at phi = {roots[bad][0]:.12g}")
    return roots, second, values


# ---------------------------------------------------------------------------
# built-in systems

def _bshape(I, v):
    return np.broadcast_shapes(np.shape(I), np.shape(v)[:-1])


def example_system(h1_scale: float = 1.0, action_bracket=(-2.0, 10.0)) -> SystemSpec:
    """``H = y + (I - x^2)^2 / 2 + eps * h1_scale * (1/2 + I) sin(phi)``.

    ``h1_scale = 1`` is the standard numerical test case.  At ``x = 1`` the
    torque is ``b = 2`` and the sine amplitude is ``1.5 * h1_scale``, so F has
    critical points once ``h1_scale > 4/3``.
    """

    def H0(I, y, x):
        return y[..., 0] + 0.5 * (I - x[..., 0] ** 2) ** 2

    def w(I, y, x):
        return I - x[..., 0] ** 2

    def dH0_dy(I, y, x):
        return np.ones(_bshape(I, x) + (1,))

    def dH0_dx(I, y, x):
        return (-2.0 * x[..., 0] * (I - x[..., 0] ** 2))[..., None]

    def w_I(I, y, x):
        return np.ones(_bshape(I, x))

    def w_y(I, y, x):
        return np.zeros(_bshape(I, x) + (1,))

    def w_x(I, y, x):
        return np.broadcast_to(-2.0 * x, _bshape(I, x) + (1,)).copy()

    def w_II(I, y, x):
        return np.zeros(_bshape(I, x))

    s = float(h1_scale)

    def exact_rhs(eps, Y):
        I, phi, x = Y[..., 0], Y[..., 1], Y[..., 3]
        e = np.asarray(eps, dtype=float)
        w = I - x * x
        out = np.empty(np.broadcast_shapes(Y.shape[:-1], e.shape) + (4,))
        out[..., 0] = -e * s * (0.5 + I) * np.cos(phi)
        out[..., 1] = w + e * s * np.sin(phi)
        out[..., 2] = 2.0 * e * x * w
        out[..., 3] = e
        return out

    H1 = FourierSeries(
        cos_coeffs=(Coefficient.zero(), Coefficient.zero()),
        sin_coeffs=(Coefficient.polynomial_in_I([0.5 * s, s]),),
    )
    return SystemSpec(
        n=1, H0=H0, omega0=w, dH0_dy=dH0_dy, dH0_dx=dH0_dx,
        domega0_dI=w_I, domega0_dy=w_y, domega0_dx=w_x, H1=H1,
        action_bracket=tuple(action_bracket), d2omega0_dI2=w_II,
        name=f"example(h1_scale={s:g})", exact_rhs=exact_rhs,
    )


def hamiltonian(sys: SystemSpec, state, epsilon):
    """Full Hamiltonian on a packed state array ``[I, phi, y(n), x(n)]``."""
    state = np.asarray(state, dtype=float)
    n = sys.n
    I, phi = state[..., 0], state[..., 1]
    y, x = state[..., 2:2 + n], state[..., 2 + n:2 + 2 * n]
    return sys.H0(I, y, x) + epsilon * sys.H1(I, phi, y, x, epsilon)
