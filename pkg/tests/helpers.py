"""Test systems beyond the built-in example."""
import numpy as np

from resphase.fourier import Coefficient, FourierSeries
from resphase.model import SystemSpec


def _shape(I, y, x):
    return np.broadcast_shapes(np.shape(I), np.shape(y)[:-1], np.shape(x)[:-1])


def coef(value, dI, dy, dx):
    """Coefficient from callables of ``(I, y1, y2, x1, x2)``; ``dy``/``dx`` are pairs."""

    def scalar(f):
        def g(I, y, x, eps):
            I = np.asarray(I, dtype=float)
            return np.broadcast_to(f(I, y[..., 0], y[..., 1], x[..., 0], x[..., 1]), _shape(I, y, x)).astype(float)
        return g

    def vector(fs):
        def g(I, y, x, eps):
            I = np.asarray(I, dtype=float)
            sh = _shape(I, y, x)
            parts = [np.broadcast_to(f(I, y[..., 0], y[..., 1], x[..., 0], x[..., 1]), sh) for f in fs]
            return np.stack(parts, axis=-1).astype(float)
        return g

    return Coefficient(scalar(value), scalar(dI), vector(dy), vector(dx))


def _zero(*a):
    return 0.0


def rich_system() -> SystemSpec:
    """Two degrees of slow freedom, coefficients depending on every variable.

    ``H0 = y1 + 0.3 y2 + u^2/2 + 0.1 u^3`` with ``u = I - g(y, x)`` and
    ``g = x1^2 + x2^2/2 + 0.2 y2 x1``; the resonant action is ``a = g``.
    """

    def g_parts(y, x):
        g = x[..., 0] ** 2 + 0.5 * x[..., 1] ** 2 + 0.2 * y[..., 1] * x[..., 0]
        gy = np.stack(np.broadcast_arrays(0.0 * x[..., 0], 0.2 * x[..., 0]), axis=-1)
        gx = np.stack(np.broadcast_arrays(2 * x[..., 0] + 0.2 * y[..., 1], x[..., 1]), axis=-1)
        return g, gy, gx

    def u_of(I, y, x):
        g, gy, gx = g_parts(y, x)
        return np.asarray(I, dtype=float) - g, gy, gx

    def H0(I, y, x):
        u, _, _ = u_of(I, y, x)
        return y[..., 0] + 0.3 * y[..., 1] + 0.5 * u**2 + 0.1 * u**3

    def w(I, y, x):
        u, _, _ = u_of(I, y, x)
        return u + 0.3 * u**2

    def w_I(I, y, x):
        u, _, _ = u_of(I, y, x)
        return 1.0 + 0.6 * u

    def w_y(I, y, x):
        u, gy, _ = u_of(I, y, x)
        return -(1.0 + 0.6 * u)[..., None] * gy

    def w_x(I, y, x):
        u, _, gx = u_of(I, y, x)
        return -(1.0 + 0.6 * u)[..., None] * gx

    def H0_y(I, y, x):
        u, gy, _ = u_of(I, y, x)
        return np.array([1.0, 0.3]) - (u + 0.3 * u**2)[..., None] * gy

    def H0_x(I, y, x):
        u, _, gx = u_of(I, y, x)
        return -(u + 0.3 * u**2)[..., None] * gx

    c0 = coef(lambda I, y1, y2, x1, x2: 0.2 * I * y1 + 0.1 * x2,
              lambda I, y1, y2, x1, x2: 0.2 * y1,
              (lambda I, y1, y2, x1, x2: 0.2 * I, _zero),
              (_zero, lambda I, y1, y2, x1, x2: 0.1))
    c1 = coef(lambda I, y1, y2, x1, x2: (0.5 + I) * (1 + 0.1 * x1),
              lambda I, y1, y2, x1, x2: 1 + 0.1 * x1,
              (_zero, _zero),
              (lambda I, y1, y2, x1, x2: 0.1 * (0.5 + I), _zero))
    s1 = coef(lambda I, y1, y2, x1, x2: 0.3 * I**2 + 0.5 * y2,
              lambda I, y1, y2, x1, x2: 0.6 * I,
              (_zero, lambda I, y1, y2, x1, x2: 0.5),
              (_zero, _zero))
    c2 = coef(lambda I, y1, y2, x1, x2: 0.05 * I * x2,
              lambda I, y1, y2, x1, x2: 0.05 * x2,
              (_zero, _zero),
              (_zero, lambda I, y1, y2, x1, x2: 0.05 * I))
    s2 = coef(lambda I, y1, y2, x1, x2: 0.2 * (1 + I) * y1,
              lambda I, y1, y2, x1, x2: 0.2 * y1,
              (lambda I, y1, y2, x1, x2: 0.2 * (1 + I), _zero),
              (_zero, _zero))
    return SystemSpec(
        n=2, H0=H0, omega0=w, dH0_dy=H0_y, dH0_dx=H0_x, domega0_dI=w_I, domega0_dy=w_y,
        domega0_dx=w_x, H1=FourierSeries((c0, c1, c2), (s1, s2)), action_bracket=(-1.5, 10.0),
        name="rich",
    )


def rich_point(rng):
    """Random slow point where the rich system's resonant action is well inside its bracket."""
    return rng.uniform(-1, 1, 2), rng.uniform(-0.8, 0.8, 2)


def simple_system(H1: FourierSeries, scale: float = 0.5, flat: bool = False, name: str = "simple") -> SystemSpec:
    """``H0 = y + scale (I - x^2)^2`` or, with ``flat``, ``y + (I - 1)^2 / 2`` (constant resonant action)."""

    def shape(I, x):
        return np.broadcast_shapes(np.shape(I), np.shape(x)[:-1])

    if flat:
        def H0(I, y, x):
            return y[..., 0] + 0.5 * (I - 1.0) ** 2

        def w(I, y, x):
            return np.broadcast_to(np.asarray(I, dtype=float) - 1.0, shape(I, x))

        def w_I(I, y, x):
            return np.ones(shape(I, x))

        def w_x(I, y, x):
            return np.zeros(shape(I, x) + (1,))

        def H0_x(I, y, x):
            return np.zeros(shape(I, x) + (1,))
    else:
        def H0(I, y, x):
            return y[..., 0] + scale * (I - x[..., 0] ** 2) ** 2

        def w(I, y, x):
            return 2 * scale * (I - x[..., 0] ** 2)

        def w_I(I, y, x):
            return np.full(shape(I, x), 2 * scale)

        def w_x(I, y, x):
            return (-4 * scale * x[..., 0] + 0 * np.asarray(I))[..., None]

        def H0_x(I, y, x):
            return (-4 * scale * x[..., 0] * (I - x[..., 0] ** 2))[..., None]

    def w_y(I, y, x):
        return np.zeros(shape(I, x) + (1,))

    def H0_y(I, y, x):
        return np.ones(shape(I, x) + (1,))

    return SystemSpec(n=1, H0=H0, omega0=w, dH0_dy=H0_y, dH0_dx=H0_x, domega0_dI=w_I, domega0_dy=w_y,
                      domega0_dx=w_x, H1=H1, action_bracket=(-2.0, 10.0), name=name)


def series(cos=(0.0,), sin=()):
    """Constant-coefficient series; entries may also be I-polynomial coefficient lists."""
    def make(c):
        return Coefficient.polynomial_in_I(c if isinstance(c, (list, tuple)) else [c])
    return FourierSeries(tuple(make(c) for c in cos), tuple(make(s) for s in sin))


def central_diff(f, x0, h=1e-6):
    """Central difference of ``f`` along each component of ``x0``."""
    x0 = np.asarray(x0, dtype=float)
    out = []
    for i in range(x0.size):
        e = np.zeros_like(x0)
        e.flat[i] = h
        out.append((f(x0 + e) - f(x0 - e)) / (2 * h))
    return np.array(out)
