"""Manufactured test problems for ``-Laplace^3 u = f``.

Each factory returns a :class:`~grfem.fem.ProblemSpec` with the exact solution
and its first three derivatives.
"""
from __future__ import annotations

import enum

import numpy as np

from .fem import BoundaryData, ProblemSpec

__all__ = ["Example", "example1", "example2", "example3", "example4", "get_example"]


def _stack2(a, b):
    return np.stack([a, b], axis=-1)


def _sym3(xxx, xxy, xyy, yyy):
    """Symmetric 2x2x2 tensor from its four distinct entries."""
    t = np.empty(np.shape(xxx) + (2, 2, 2))
    t[..., 0, 0, 0] = xxx
    t[..., 0, 0, 1] = t[..., 0, 1, 0] = t[..., 1, 0, 0] = xxy
    t[..., 0, 1, 1] = t[..., 1, 0, 1] = t[..., 1, 1, 0] = xyy
    t[..., 1, 1, 1] = yyy
    return t


def _separable(px, py, derivs=None):
    """Exact callbacks for ``u = p(x) p(y)`` given ``p`` and its derivatives.

    ``px[k]`` is the k-th derivative of the 1D factor, ``k = 0..3``.
    """

    def u(x, y):
        return px[0](x) * py[0](y)

    def grad(x, y):
        return _stack2(px[1](x) * py[0](y), px[0](x) * py[1](y))

    def hess(x, y):
        xy = px[1](x) * py[1](y)
        return np.stack(
            [_stack2(px[2](x) * py[0](y), xy), _stack2(xy, px[0](x) * py[2](y))], axis=-2
        )

    def d3(x, y):
        return _sym3(
            px[3](x) * py[0](y),
            px[2](x) * py[1](y),
            px[1](x) * py[2](y),
            px[0](x) * py[3](y),
        )

    return u, grad, hess, d3


# Example 1: u = p(x) p(y), p(s) = s^3 (1 - s)^3
def _p(s):
    return s**3 * (1 - s) ** 3


def _p1(s):
    return 3 * s**2 * (1 - s) ** 2 * (1 - 2 * s)


def _p2(s):
    return 6 * s * (1 - s) * (5 * s**2 - 5 * s + 1)


def _p3(s):
    return -6 * (20 * s**3 - 30 * s**2 + 12 * s - 1)


def _p4(s):
    return -72 * (5 * s**2 - 5 * s + 1)


_P6 = -720.0


def _f1(x, y):
    # -Laplace^3 (p(x) p(y)) expanded by the product rule
    return -(
        _P6 * _p(y)
        + 3 * _p4(x) * _p2(y)
        + 3 * _p2(x) * _p4(y)
        + _p(x) * _P6
    )


def example1() -> ProblemSpec:
    """Unit square, ``u = x^3 (1-x)^3 y^3 (1-y)^3``, homogeneous data."""
    u, grad, hess, d3 = _separable((_p, _p1, _p2, _p3), (_p, _p1, _p2, _p3))
    return ProblemSpec(_f1, u, grad, hess, d3, BoundaryData.HOMOGENEOUS, "example1")


def example2() -> ProblemSpec:
    """Unit square, ``u = sin(2 pi x) cos(2 pi y) / (512 pi^6)``, data from u."""
    w = 2 * np.pi
    c = 1.0 / (512 * np.pi**6)
    sx = (
        lambda s: c * np.sin(w * s),
        lambda s: c * w * np.cos(w * s),
        lambda s: -c * w**2 * np.sin(w * s),
        lambda s: -c * w**3 * np.cos(w * s),
    )
    cy = (
        lambda s: np.cos(w * s),
        lambda s: -w * np.sin(w * s),
        lambda s: -(w**2) * np.cos(w * s),
        lambda s: w**3 * np.sin(w * s),
    )
    u, grad, hess, d3 = _separable(sx, cy)

    def f(x, y):
        return np.sin(w * x) * np.cos(w * y)

    return ProblemSpec(f, u, grad, hess, d3, BoundaryData.FROM_EXACT, "example2")


def example3() -> ProblemSpec:
    """Unit disk, ``u = exp(x + y)``, data from u.

    Here ``Laplace^3 u = 8 u``, so the consistent right-hand side is
    ``f = -8 exp(x + y)``.
    """

    def u(x, y):
        return np.exp(x + y)

    def grad(x, y):
        e = np.exp(x + y)
        return _stack2(e, e)

    def hess(x, y):
        e = np.exp(x + y)[..., None, None]
        return e * np.ones((2, 2))

    def d3(x, y):
        e = np.exp(x + y)[..., None, None, None]
        return e * np.ones((2, 2, 2))

    def f(x, y):
        return -8.0 * np.exp(x + y)

    return ProblemSpec(f, u, grad, hess, d3, BoundaryData.FROM_EXACT, "example3")


def example4() -> ProblemSpec:
    """L-shaped domain, ``u = x^6 - y^6``, ``f = 0``, data from u."""

    def u(x, y):
        return x**6 - y**6

    def grad(x, y):
        return _stack2(6 * x**5, -6 * y**5)

    def hess(x, y):
        z = np.zeros(np.shape(x))
        return np.stack([_stack2(30 * x**4, z), _stack2(z, -30 * y**4)], axis=-2)

    def d3(x, y):
        z = np.zeros(np.shape(x))
        return _sym3(120 * x**3, z, z, -120 * y**3)

    def f(x, y):
        return np.zeros(np.shape(x))

    return ProblemSpec(f, u, grad, hess, d3, BoundaryData.FROM_EXACT, "example4")


class Example(enum.IntEnum):
    EXAMPLE1 = 1
    EXAMPLE2 = 2
    EXAMPLE3 = 3
    EXAMPLE4 = 4

    @property
    def spec(self) -> ProblemSpec:
        return _FACTORIES[self]()

    @property
    def default_pattern(self) -> str:
        return {1: "regular", 2: "chevron", 3: "disk", 4: "lshape"}[int(self)]


_FACTORIES = {
    Example.EXAMPLE1: example1,
    Example.EXAMPLE2: example2,
    Example.EXAMPLE3: example3,
    Example.EXAMPLE4: example4,
}


def get_example(k) -> ProblemSpec:
    return Example(int(k)).spec
