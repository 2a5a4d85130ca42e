"""Adaptive DOP853 integration with dense output and event location.

The stepper advances a whole ensemble of independent trajectories at once.
Every member keeps its own time, step size and accept/reject history, so a
member's path is the same as if it were integrated alone; batching only
amortises the Python overhead of evaluating the vector field.

The Butcher tableau, error estimator and dense-output coefficients are those
of Hairer's DOP853, taken from SciPy.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate._ivp import dop853_coefficients as _dop

from .errors import BudgetExceeded, EventNotFound, FieldBlowup, PreconditionViolation
from .model import SystemSpec

_NS = _dop.N_STAGES
_A = _dop.A[:_NS, :_NS]
_B = _dop.B
_C = _dop.C[:_NS]
_E3 = _dop.E3
_E5 = _dop.E5
_D = _dop.D
_A_EXTRA = _dop.A[_NS + 1:]
_C_EXTRA = _dop.C[_NS + 1:]

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
_ERR_EXP = -1.0 / 8.0

_DIRECTIONS = ("decreasing", "increasing", "any")


@dataclass(frozen=True)
class OdeProblem:
    """An autonomous or time-dependent first order system.

    ``field(t, state)`` returns the derivative.  With ``vectorized=True`` it
    must accept ``t`` of shape ``(B,)`` and ``state`` of shape ``(B, dim)``.
    The last ``n_params`` components are constant parameters carried in the
    state; they are excluded from error control.  Components listed in
    ``angular`` are phases: their error scale uses ``min(|y|, 2 pi)`` so the
    accepted local error does not grow with the number of turns.
    """

    dimension: int
    field: Callable
    name: str = "ode"
    vectorized: bool = False
    n_params: int = 0
    angular: tuple = ()


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-12
    abs_tol: float = 1e-12
    initial_step: float | None = None
    max_step: float = np.inf
    max_steps: int = 10**9
    method_order: int = 8

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.method_order != 8:
            raise ValueError("only the order-8 DOP853 pair is available")

    def scaled(self, factor: float) -> "IntegratorConfig":
        """Same configuration with both tolerances multiplied by ``factor``."""
        return IntegratorConfig(self.rel_tol * factor, self.abs_tol * factor, self.initial_step,
                                self.max_step, self.max_steps, self.method_order)


@dataclass(frozen=True)
class EventSpec:
    """Zero crossing of a scalar ``g(t, state)``.

    ``t_tol=None`` means ``1e-13`` times the integration span.
    """

    g: Callable
    direction: str = "decreasing"
    event_tol: float = 1e-11
    t_tol: float | None = None
    vectorized: bool = False

    def __post_init__(self):
        if self.direction not in _DIRECTIONS:
            raise ValueError(f"direction must be one of {_DIRECTIONS}")


def _as_batched(fun, vectorized):
    if vectorized:
        return fun

    def batched(t, Y):
        t = np.broadcast_to(t, Y.shape[:1])
        return np.array([np.asarray(fun(ti, yi), dtype=float) for ti, yi in zip(t, Y)])

    return batched


def _dense_eval(F, t_old, h, y_old, t):
    x = (t - t_old) / h
    y = np.zeros_like(y_old)
    for i, f in enumerate(F[::-1]):
        y = y + f
        y = y * (x if i % 2 == 0 else 1.0 - x)
    return y + y_old


class Trajectory:
    """Accepted step endpoints plus the per-step DOP853 interpolants."""

    def __init__(self, t, y, dense=None):
        self.t = np.asarray(t, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self._dense = dense  # array (steps, 7, dim) or None

    def __len__(self):
        return len(self.t)

    @property
    def has_dense_output(self) -> bool:
        return self._dense is not None

    def query(self, t):
        """State at time(s) ``t`` inside the span; exact at sample times."""
        scalar = np.ndim(t) == 0
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        lo, hi = self.t[0], self.t[-1]
        if np.any((ts < lo) | (ts > hi)):
            raise ValueError(f"query outside trajectory span [{lo}, {hi}]")
        out = np.empty((len(ts), self.y.shape[1]))
        k = np.searchsorted(self.t, ts)
        for j, (tj, kj) in enumerate(zip(ts, k)):
            if kj < len(self.t) and self.t[kj] == tj:
                out[j] = self.y[kj]
                continue
            if self._dense is None:
                raise ValueError("trajectory was integrated without dense output")
            s = kj - 1
            h = self.t[s + 1] - self.t[s]
            out[j] = _dense_eval(self._dense[s], self.t[s], h, self.y[s], tj)
        return out[0] if scalar else out


@dataclass
class EnsembleResult:
    """Per-member outcome of :func:`integrate_ensemble_to_event`.

    ``status`` is ``"event"``, ``"not_found"``, ``"blowup"``, ``"budget"`` or
    ``"precondition"``.
    """

    t_event: np.ndarray
    state_event: np.ndarray
    status: np.ndarray
    n_steps: np.ndarray

    @property
    def ok(self) -> np.ndarray:
        return self.status == "event"


class _Stepper:
    """DOP853 state for the currently active members of an ensemble."""

    def __init__(self, fun, t0, Y0, config: IntegratorConfig, n_params: int, t_bound, angular=()):
        self.fun = fun
        self.angular = list(angular)
        self.cfg = config
        self.t = np.array(t0, dtype=float)
        self.y = np.array(Y0, dtype=float)
        self.comp = np.zeros_like(self.y)
        self.bound = np.array(t_bound, dtype=float)
        self.cols = self.y.shape[1] - n_params
        self.f = self._eval(self.t, self.y)
        if config.initial_step is not None:
            self.h = np.full(len(self.t), float(config.initial_step))
        else:
            self.h = self._initial_step()
        self.h = np.minimum(self.h, config.max_step)
        self.rejected = np.zeros(len(self.t), dtype=bool)

    def _eval(self, t, Y):
        return np.asarray(self.fun(t, Y), dtype=float)

    def _scale(self, *ys):
        mag = np.abs(ys[0][:, :self.cols])
        for y in ys[1:]:
            mag = np.maximum(mag, np.abs(y[:, :self.cols]))
        if self.angular:
            mag[:, self.angular] = np.minimum(mag[:, self.angular], 2 * np.pi)
        return self.cfg.abs_tol + self.cfg.rel_tol * mag

    def _initial_step(self):
        # Hairer, Norsett & Wanner, II.4, per member
        c = self.cols
        scale = self._scale(self.y)
        d0 = np.sqrt(np.mean((self.y[:, :c] / scale) ** 2, axis=1))
        d1 = np.sqrt(np.mean((self.f[:, :c] / scale) ** 2, axis=1))
        h0 = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6, 0.01 * d0 / np.maximum(d1, 1e-300))
        h0 = np.minimum(h0, np.maximum(self.bound - self.t, 1e-300))
        f1 = self._eval(self.t + h0, self.y + h0[:, None] * self.f)
        d2 = np.sqrt(np.mean(((f1 - self.f)[:, :c] / scale) ** 2, axis=1)) / h0
        big = np.maximum(d1, d2)
        h1 = np.where(big <= 1e-15, np.maximum(1e-6, h0 * 1e-3), (0.01 / np.maximum(big, 1e-300)) ** (1 / 8))
        return np.minimum(100 * h0, h1)

    def keep(self, mask):
        for name in ("t", "y", "comp", "bound", "f", "h", "rejected"):
            setattr(self, name, getattr(self, name)[mask])

    def attempt(self):
        """One step attempt for every member.

        Returns ``(accepted, blown, y_old, t_old, h, K)``; members flagged as
        accepted have already been advanced.
        """
        t, y = self.t, self.y
        B = len(t)
        min_step = 10 * np.abs(np.nextafter(t, np.inf) - t)
        h = np.maximum(np.minimum(self.h, self.cfg.max_step), min_step)
        h = np.minimum(h, self.bound - t)
        hc = h[:, None]
        K = np.empty((_NS + 4, B, y.shape[1]))
        K[0] = self.f
        flat = K.reshape(_NS + 4, -1)
        shape = y.shape
        for s in range(1, _NS):
            dy = (_A[s, :s] @ flat[:s]).reshape(shape) * hc
            K[s] = self._eval(t + _C[s] * h, y + dy)
        d = (_B @ flat[:_NS]).reshape(shape) * hc - self.comp
        y_new = y + d
        f_new = self._eval(t + h, y_new)
        K[_NS] = f_new

        blown = ~np.all(np.isfinite(K[:_NS + 1]), axis=(0, 2))
        scale = self._scale(y, y_new)
        err5 = (_E5 @ flat[:_NS + 1]).reshape(shape)[:, :self.cols] / scale
        err3 = (_E3 @ flat[:_NS + 1]).reshape(shape)[:, :self.cols] / scale
        e5 = np.sum(err5 ** 2, axis=1)
        e3 = np.sum(err3 ** 2, axis=1)
        denom = e5 + 0.01 * e3
        with np.errstate(divide="ignore", invalid="ignore"):
            norm = np.where(denom > 0, h * e5 / np.sqrt(denom * self.cols), 0.0)
            grow = np.where(norm == 0, MAX_FACTOR, np.minimum(MAX_FACTOR, SAFETY * norm ** _ERR_EXP))
            shrink = np.maximum(MIN_FACTOR, SAFETY * norm ** _ERR_EXP)
        accepted = (norm < 1) & ~blown
        # rejected at the smallest representable step: the solution is escaping
        blown |= ~accepted & (h <= min_step)
        grow = np.where(self.rejected, np.minimum(1.0, grow), grow)

        y_old, t_old = self.y, self.t
        self.comp = np.where(accepted[:, None], (y_new - y) - d, self.comp)
        self.y = np.where(accepted[:, None], y_new, y)
        self.f = np.where(accepted[:, None], f_new, self.f)
        t_new = np.where(h == self.bound - t, self.bound, t + h)
        self.t = np.where(accepted, t_new, t)
        self.h = np.where(accepted, h * grow, h * np.where(blown, MIN_FACTOR, shrink))
        self.rejected = ~accepted
        return accepted, blown, y_old, t_old, h, K

    def dense(self, idx, y_old, t_old, h, K):
        """DOP853 interpolant coefficients ``(len(idx), 7, dim)`` for members ``idx``."""
        Ks = np.empty((_NS + 4, len(idx), y_old.shape[1]))
        Ks[:_NS + 1] = K[:_NS + 1, idx]
        hs, yo, to = h[idx], y_old[idx], t_old[idx]
        for s, (a, c) in enumerate(zip(_A_EXTRA, _C_EXTRA), start=_NS + 1):
            dy = np.tensordot(a[:s], Ks[:s], axes=1) * hs[:, None]
            Ks[s] = self._eval(to + c * hs, yo + dy)
        delta = self.y[idx] - yo
        F = np.empty((7, len(idx), yo.shape[1]))
        F[0] = delta
        F[1] = hs[:, None] * Ks[0] - delta
        F[2] = 2 * delta - hs[:, None] * (Ks[_NS] + Ks[0])
        F[3:] = hs[None, :, None] * np.tensordot(_D, Ks, axes=1)
        return np.transpose(F, (1, 0, 2))


def _crossed(g_old, g_new, direction):
    if direction == "decreasing":
        return (g_old > 0) & (g_new <= 0)
    if direction == "increasing":
        return (g_old < 0) & (g_new >= 0)
    return (np.sign(g_old) != np.sign(g_new)) | (g_new == 0)


def _refine(g, F, t_old, t_new, y_old, g_old, g_new, event_tol, t_tol):
    """Bisect the dense interpolant of one step for the zero of ``g``."""
    h = t_new - t_old

    def state(t):
        return _dense_eval(F, t_old, h, y_old, t)

    if g_new == 0.0:
        return t_new, state(t_new)
    lo, hi, glo = t_old, t_new, g_old
    t_best, y_best, g_best = t_new, state(t_new), abs(g_new)
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        ym = state(mid)
        gm = float(g(np.array([mid]), ym[None, :])[0])
        if abs(gm) <= g_best:
            t_best, y_best, g_best = mid, ym, abs(gm)
        if gm == 0.0:
            break
        if np.sign(gm) == np.sign(glo):
            lo, glo = mid, gm
        else:
            hi = mid
        if g_best < event_tol and hi - lo <= t_tol:
            break
    return t_best, y_best


def _run(problem: OdeProblem, Y0, t0, t_bound, config, event=None, record=False,
         observer=None, strict=True):
    config = config or IntegratorConfig()
    fun = _as_batched(problem.field, problem.vectorized)
    Y0 = np.atleast_2d(np.asarray(Y0, dtype=float))
    B, dim = Y0.shape
    if dim != problem.dimension:
        raise ValueError(f"state has dimension {dim}, problem {problem.name!r} expects {problem.dimension}")
    t0 = np.broadcast_to(np.asarray(t0, dtype=float), (B,)).copy()
    t_bound = np.broadcast_to(np.asarray(t_bound, dtype=float), (B,)).copy()
    if np.any(t_bound <= t0):
        raise PreconditionViolation("end time must exceed start time")
    if not np.all(np.isfinite(Y0)):
        raise PreconditionViolation("non-finite initial state")

    status = np.full(B, "not_found", dtype=object)
    t_event = np.full(B, np.nan)
    y_event = np.full((B, dim), np.nan)
    n_steps = np.zeros(B, dtype=np.int64)
    active = np.arange(B)

    g = None
    if event is not None:
        g = _as_batched(event.g, event.vectorized)
        g_old = np.asarray(g(t0, Y0), dtype=float)
        if event.direction == "any":
            bad = g_old == 0
        elif event.direction == "decreasing":
            bad = ~(g_old > 0)
        elif event.direction == "increasing":
            bad = ~(g_old < 0)
        if np.any(bad):
            if strict:
                raise PreconditionViolation(f"event function has the wrong sign at the start: g = {g_old[bad][0]:.6g}")
            status[bad] = "precondition"
            active = active[~bad]
            g_old = g_old[~bad]
        span = t_bound - t0
        t_tol = event.t_tol if event.t_tol is not None else 1e-13 * span

    ts, ys, dense = ([t0[0]], [Y0[0].copy()], []) if record else (None, None, None)
    if len(active) == 0:
        return EnsembleResult(t_event, y_event, status, n_steps), None
    st = _Stepper(fun, t0[active], Y0[active], config, problem.n_params, t_bound[active], problem.angular)

    while len(active):
        acc, blown, y_old, t_old, h, K = st.attempt()
        n_steps[active[acc]] += 1
        done = np.zeros(len(active), dtype=bool)
        if np.any(blown):
            if strict:
                raise FieldBlowup(f"non-finite derivative or step size underflow in {problem.name!r} "
                                  f"near t = {t_old[blown][0]:.6g}")
            status[active[blown]] = "blowup"
            done |= blown
        over = n_steps[active] > config.max_steps
        if np.any(over):
            if strict:
                raise BudgetExceeded(f"more than {config.max_steps} steps in {problem.name!r}")
            status[active[over]] = "budget"
            done |= over
        bad = acc & ~np.all(np.isfinite(st.y), axis=1)
        if np.any(bad):
            if strict:
                raise FieldBlowup(f"non-finite state in {problem.name!r}")
            status[active[bad]] = "blowup"
            done |= bad
        if record and acc[0]:
            ts.append(st.t[0])
            ys.append(st.y[0].copy())
            dense.append(st.dense(np.array([0]), y_old, t_old, h, K)[0])
        if observer is not None and np.any(acc):
            observer(active[acc], st.t[acc], st.y[acc])

        if g is not None:
            g_new = g_old.copy()
            if np.any(acc):
                g_new[acc] = np.asarray(g(st.t[acc], st.y[acc]), dtype=float)
            hit = acc & _crossed(g_old, g_new, event.direction) & ~done
            if np.any(hit):
                idx = np.flatnonzero(hit)
                F = st.dense(idx, y_old, t_old, h, K)
                for j, i in enumerate(idx):
                    gi = active[i]
                    te, ye = _refine(g, F[j], t_old[i], st.t[i], y_old[i], g_old[i], g_new[i],
                                     event.event_tol, t_tol[gi])
                    t_event[gi], y_event[gi] = te, ye
                    status[gi] = "event"
                done |= hit
            g_old = g_new

        finished = acc & (st.t >= st.bound) & ~done
        if np.any(finished):
            if g is None:
                status[active[finished]] = "end"
                t_event[active[finished]] = st.t[finished]
                y_event[active[finished]] = st.y[finished]
            done |= finished
        if np.any(done):
            keep = ~done
            st.keep(keep)
            active = active[keep]
            if g is not None:
                g_old = g_old[keep]

    traj = Trajectory(np.array(ts), np.array(ys), np.array(dense) if dense else None) if record else None
    return EnsembleResult(t_event, y_event, status, n_steps), traj


def integrate(problem: OdeProblem, state0, t0: float, t_end: float,
              config: IntegratorConfig | None = None) -> Trajectory:
    """Integrate one trajectory from ``t0`` to ``t_end`` with dense output."""
    _, traj = _run(problem, state0, t0, t_end, config, record=True)
    return traj


def integrate_to_event(problem: OdeProblem, state0, t0: float, t_max: float, event: EventSpec,
                       config: IntegratorConfig | None = None):
    """Integrate until the first crossing of ``event``.

    Returns ``(t_event, state_event, trajectory)``; the trajectory ends at the
    last accepted step, which lies at or just past the crossing.
    """
    res, traj = _run(problem, state0, t0, t_max, config, event=event, record=True)
    if res.status[0] != "event":
        raise EventNotFound(f"no crossing of the event in {problem.name!r} before t = {t_max}")
    return float(res.t_event[0]), res.state_event[0], traj


def integrate_ensemble_to_event(problem: OdeProblem, states0, t0, t_max, event: EventSpec,
                                config: IntegratorConfig | None = None,
                                observer=None) -> EnsembleResult:
    """Event integration for many independent members; failures are reported per member.

    ``t0`` and ``t_max`` may be scalars or per-member arrays.  ``observer``,
    if given, is called as ``observer(indices, t, states)`` after every step
    attempt with the members that accepted it.
    """
    if problem.vectorized is False:
        raise ValueError("ensemble integration needs a vectorized field")
    res, _ = _run(problem, states0, t0, t_max, config, event=event, observer=observer, strict=False)
    return res


# ---------------------------------------------------------------------------
# vector fields of the slow-fast system

def _unpack(sys: SystemSpec, Y):
    n = sys.n
    return Y[..., 0], Y[..., 1], Y[..., 2:2 + n], Y[..., 2 + n:2 + 2 * n]


def _exact_rhs(sys: SystemSpec, eps, Y):
    if sys.exact_rhs is not None:
        return sys.exact_rhs(eps, Y)
    return generic_exact_rhs(sys, eps, Y)


def generic_exact_rhs(sys: SystemSpec, eps, Y):
    """Exact vector field assembled from the Fourier representation of H1."""
    I, phi, y, x = _unpack(sys, Y)
    g = sys.H1.gradient(I, phi, y, x, eps)
    e = np.asarray(eps, dtype=float)
    ev = e[..., None]
    n = sys.n
    out = np.empty(np.broadcast_shapes(Y.shape, np.shape(I) + (2 + 2 * n,)))
    out[..., 0] = -e * g.dphi
    out[..., 1] = sys.omega0(I, y, x) + e * g.dI
    out[..., 2:2 + n] = -ev * sys.dH0_dx(I, y, x) - ev**2 * g.dx
    out[..., 2 + n:2 + 2 * n] = ev * sys.dH0_dy(I, y, x) + ev**2 * g.dy
    return out


def exact_field(sys: SystemSpec, epsilon: float) -> OdeProblem:
    """Full equations of motion in fast time; state ``[I, phi, y(n), x(n)]``."""
    eps = float(epsilon)
    return OdeProblem(2 + 2 * sys.n, lambda t, Y: _exact_rhs(sys, eps, Y),
                      name=f"exact[{sys.name}, eps={eps:g}]", vectorized=True, angular=(1,))


def exact_field_parametric(sys: SystemSpec) -> OdeProblem:
    """Exact field with eps carried as a trailing constant state component."""
    dim = 2 + 2 * sys.n

    def field(t, Y):
        out = np.zeros_like(Y)
        out[..., :dim] = _exact_rhs(sys, Y[..., dim], Y[..., :dim])
        return out

    return OdeProblem(dim + 1, field, name=f"exact[{sys.name}, eps in state]", vectorized=True,
                      n_params=1, angular=(1,))


def averaged_field(sys: SystemSpec) -> OdeProblem:
    """Averaged slow flow in slow time; state ``[I_bar, y_bar(n), x_bar(n)]``."""
    n = sys.n

    def field(t, Y):
        I, y, x = Y[..., 0], Y[..., 1:1 + n], Y[..., 1 + n:1 + 2 * n]
        out = np.zeros(Y.shape)
        out[..., 1:1 + n] = -sys.dH0_dx(I, y, x)
        out[..., 1 + n:] = sys.dH0_dy(I, y, x)
        return out

    return OdeProblem(1 + 2 * n, field, name=f"averaged[{sys.name}]", vectorized=True)


def _improved_rhs(sys: SystemSpec, eps, J, Y):
    n = sys.n
    eta, xi = Y[..., :n], Y[..., n:2 * n]
    e = np.asarray(eps, dtype=float)
    mI, my, mx = sys.H1.mean_gradient(J, eta, xi, 0.0)
    out = np.empty(np.broadcast_shapes(Y.shape[:-1], np.shape(J)) + (2 * n + 1,))
    out[..., :n] = -(sys.dH0_dx(J, eta, xi) + e[..., None] * mx)
    out[..., n:2 * n] = sys.dH0_dy(J, eta, xi) + e[..., None] * my
    out[..., 2 * n] = sys.omega0(J, eta, xi) + e * mI
    return out


def improved_field(sys: SystemSpec, epsilon: float, J0: float) -> OdeProblem:
    """Improved adiabatic flow at fixed ``J0`` in slow time.

    State ``[eta(n), xi(n), Phi]`` where ``Phi`` accumulates the integral of
    ``omega0 + eps * omega1`` along the flow.
    """
    eps, J = float(epsilon), float(J0)
    return OdeProblem(2 * sys.n + 1, lambda t, Y: _improved_rhs(sys, eps, J, Y),
                      name=f"improved[{sys.name}, eps={eps:g}, J0={J:g}]", vectorized=True)


def improved_field_parametric(sys: SystemSpec) -> OdeProblem:
    """Improved field with ``(J0, eps)`` carried as trailing constant components."""
    dim = 2 * sys.n + 1

    def field(t, Y):
        out = np.zeros_like(Y)
        out[..., :dim] = _improved_rhs(sys, Y[..., dim + 1], Y[..., dim], Y[..., :dim])
        return out

    return OdeProblem(dim + 2, field, name=f"improved[{sys.name}, params in state]",
                      vectorized=True, n_params=2)
