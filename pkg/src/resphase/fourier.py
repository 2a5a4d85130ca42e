"""Finite Fourier series in the fast phase with slow-variable coefficients.

A series is

    sum_{m=0}^{M} c_m(I, y, x, eps) cos(m phi) + sum_{m=1}^{M} s_m(I, y, x, eps) sin(m phi)

All callables follow one broadcasting convention: ``I``, ``phi`` and ``eps``
have a common batch shape ``S`` (after broadcasting) and ``y``, ``x`` have
shape ``S + (n,)``.  Scalar returns are shape ``S``; gradients with respect to
``y`` or ``x`` are shape ``S + (n,)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

ScalarFn = Callable[..., np.ndarray]


def _batch_shape(I, y, x, eps, phi=0.0) -> tuple:
    return np.broadcast_shapes(
        np.shape(I), np.shape(phi), np.shape(eps), np.shape(y)[:-1], np.shape(x)[:-1]
    )


def _vec_zeros(I, y, x):
    return np.zeros(np.broadcast_shapes(np.shape(I) + (1,), np.shape(y), np.shape(x)))


@dataclass(frozen=True)
class Coefficient:
    """A coefficient function of (I, y, x, eps) together with its first partials."""

    value: ScalarFn
    dI: ScalarFn
    dy: ScalarFn
    dx: ScalarFn
    deps: ScalarFn | None = None

    @classmethod
    def polynomial_in_I(cls, coeffs: Sequence[float]) -> "Coefficient":
        """``sum_k coeffs[k] * I**k`` with no dependence on y, x or eps."""
        c = np.asarray(coeffs, dtype=float)
        dc = c[1:] * np.arange(1, len(c))

        def value(I, y, x, eps):
            return np.polynomial.polynomial.polyval(np.asarray(I, dtype=float), c)

        def dI(I, y, x, eps):
            if len(dc) == 0:
                return np.zeros(np.shape(I))
            return np.polynomial.polynomial.polyval(np.asarray(I, dtype=float), dc)

        def zeros_vec(I, y, x, eps):
            return _vec_zeros(I, y, x)

        def deps(I, y, x, eps):
            return np.zeros(np.shape(I))

        return cls(value, dI, zeros_vec, zeros_vec, deps)

    @classmethod
    def constant(cls, c: float) -> "Coefficient":
        return cls.polynomial_in_I([c])

    @classmethod
    def zero(cls) -> "Coefficient":
        return cls.polynomial_in_I([0.0])


class SeriesGradient(NamedTuple):
    value: np.ndarray
    dI: np.ndarray
    dphi: np.ndarray
    dy: np.ndarray
    dx: np.ndarray


@dataclass(frozen=True)
class FourierSeries:
    """Truncated Fourier series in phi; see the module docstring for conventions."""

    cos_coeffs: tuple[Coefficient, ...]
    sin_coeffs: tuple[Coefficient, ...]

    def __post_init__(self):
        object.__setattr__(self, "cos_coeffs", tuple(self.cos_coeffs))
        object.__setattr__(self, "sin_coeffs", tuple(self.sin_coeffs))
        if len(self.cos_coeffs) < 1:
            raise ValueError("need at least the harmonic-0 cosine coefficient")
        if len(self.sin_coeffs) != len(self.cos_coeffs) - 1:
            raise ValueError("sin_coeffs must cover harmonics 1..M")

    @property
    def max_harmonic(self) -> int:
        return len(self.sin_coeffs)

    # -- coefficient tables -------------------------------------------------

    def _stack(self, attr: str, I, y, x, eps, vector: bool):
        shape = _batch_shape(I, y, x, eps)
        if vector:
            shape = shape + (np.shape(y)[-1],)

        def table(coeffs):
            if not coeffs:
                return np.zeros(shape + (0,)) if not vector else np.zeros(shape[:-1] + (0, shape[-1]))
            cols = [np.broadcast_to(getattr(c, attr)(I, y, x, eps), shape) for c in coeffs]
            return np.stack(cols, axis=-2 if vector else -1)

        return table(self.cos_coeffs), table(self.sin_coeffs)

    def coefficients(self, I, y, x, eps):
        """Return ``(C, S)`` with shapes ``S+(M+1,)`` and ``S+(M,)``."""
        return self._stack("value", I, y, x, eps, vector=False)

    def _trig(self, phi):
        m = np.arange(1, self.max_harmonic + 1)
        arg = np.asarray(phi, dtype=float)[..., None] * m
        return m, np.cos(arg), np.sin(arg)

    # -- evaluation ---------------------------------------------------------

    def evaluate(self, I, phi, y, x, eps):
        C, S = self.coefficients(I, y, x, eps)
        _, cs, sn = self._trig(phi)
        return C[..., 0] + np.sum(C[..., 1:] * cs + S * sn, axis=-1)

    __call__ = evaluate

    def mean(self, I, y, x, eps):
        """Average over one period in phi, i.e. the harmonic-0 cosine coefficient."""
        shape = _batch_shape(I, y, x, eps)
        return np.broadcast_to(self.cos_coeffs[0].value(I, y, x, eps), shape).astype(float)

    def mean_gradient(self, I, y, x, eps):
        """``(d/dI, d/dy, d/dx)`` of the harmonic-0 coefficient."""
        c0 = self.cos_coeffs[0]
        shape = _batch_shape(I, y, x, eps)
        vshape = shape + (np.shape(y)[-1],)
        return (
            np.broadcast_to(c0.dI(I, y, x, eps), shape),
            np.broadcast_to(c0.dy(I, y, x, eps), vshape),
            np.broadcast_to(c0.dx(I, y, x, eps), vshape),
        )

    def dphi(self, I, phi, y, x, eps):
        C, S = self.coefficients(I, y, x, eps)
        m, cs, sn = self._trig(phi)
        return np.sum(m * (S * cs - C[..., 1:] * sn), axis=-1)

    def d2phi(self, I, phi, y, x, eps):
        C, S = self.coefficients(I, y, x, eps)
        m, cs, sn = self._trig(phi)
        return -np.sum(m * m * (C[..., 1:] * cs + S * sn), axis=-1)

    def gradient(self, I, phi, y, x, eps) -> SeriesGradient:
        """Value and all first partials, sharing one trig table."""
        m, cs, sn = self._trig(phi)
        C, S = self.coefficients(I, y, x, eps)
        CI, SI = self._stack("dI", I, y, x, eps, vector=False)
        Cy, Sy = self._stack("dy", I, y, x, eps, vector=True)
        Cx, Sx = self._stack("dx", I, y, x, eps, vector=True)
        value = C[..., 0] + np.sum(C[..., 1:] * cs + S * sn, axis=-1)
        dI = CI[..., 0] + np.sum(CI[..., 1:] * cs + SI * sn, axis=-1)
        dphi = np.sum(m * (S * cs - C[..., 1:] * sn), axis=-1)
        dy = Cy[..., 0, :] + np.einsum("...m,...mn->...n", cs, Cy[..., 1:, :]) + np.einsum(
            "...m,...mn->...n", sn, Sy
        )
        dx = Cx[..., 0, :] + np.einsum("...m,...mn->...n", cs, Cx[..., 1:, :]) + np.einsum(
            "...m,...mn->...n", sn, Sx
        )
        return SeriesGradient(value, dI, dphi, dy, dx)

    def zero_mean_antiderivative(self, I, phi, y, x, eps):
        """Antiderivative in phi of (series - mean) that itself has zero mean."""
        C, S = self.coefficients(I, y, x, eps)
        m, cs, sn = self._trig(phi)
        return np.sum((C[..., 1:] * sn - S * cs) / m, axis=-1)

    def antiderivative_gradient(self, I, phi, y, x, eps):
        """``(A, dA/dI, dA/dy, dA/dx)`` for ``A = zero_mean_antiderivative``."""
        m, cs, sn = self._trig(phi)
        C, S = self.coefficients(I, y, x, eps)
        CI, SI = self._stack("dI", I, y, x, eps, vector=False)
        Cy, Sy = self._stack("dy", I, y, x, eps, vector=True)
        Cx, Sx = self._stack("dx", I, y, x, eps, vector=True)
        A = np.sum((C[..., 1:] * sn - S * cs) / m, axis=-1)
        AI = np.sum((CI[..., 1:] * sn - SI * cs) / m, axis=-1)
        sm, cm = sn / m, cs / m
        Ay = np.einsum("...m,...mn->...n", sm, Cy[..., 1:, :]) - np.einsum("...m,...mn->...n", cm, Sy)
        Ax = np.einsum("...m,...mn->...n", sm, Cx[..., 1:, :]) - np.einsum("...m,...mn->...n", cm, Sx)
        return A, AI, Ay, Ax
