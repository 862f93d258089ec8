"""
Poincaré ball and Klein disk primitives with curvature -1.

All functions operate on the last axis and broadcast over leading axes. They
are built from :mod:`HyperAspect.diffgraph` primitives, so they accept numpy
arrays (and return numpy arrays) or graph nodes (and return nodes).
"""

import numpy as np

from . import diffgraph as dg
from .diffgraph import value_of
from .exceptions import DomainError

BALL_EPS = 1e-5
MIN_NORM = 1e-15


def _require_finite(x, what):
    if not np.all(np.isfinite(value_of(x))):
        raise DomainError(f"{what} has non-finite coordinates")


def _require_inside(x, what):
    _require_finite(x, what)
    norms = np.linalg.norm(value_of(x), axis=-1)
    if np.any(norms >= 1.0):
        raise DomainError(
            f"{what} must lie strictly inside the unit ball (max norm {norms.max():.6g})"
        )


def _squared_norm(x):
    return dg.sum_(x * x, axis=-1, keepdims=True)


def project_to_ball(v, eps=BALL_EPS):
    """
    Pull ``v`` back to norm ``1 - eps`` if it lies on or beyond that radius.

    Points already inside are returned unchanged (the scale factor is exactly
    one for them).
    """
    _require_finite(v, "project_to_ball() input")
    radius = 1.0 - eps
    n = dg.norm(v, keepdims=True)
    return v * (radius / dg.clamp(n, lo=radius))


def poincare_distance(x, y):
    """Geodesic distance between two points of the Poincaré ball."""
    _require_inside(x, "poincare_distance() x")
    _require_inside(y, "poincare_distance() y")
    diff = x - y
    num = 2.0 * dg.sum_(diff * diff, axis=-1)
    den = (1.0 - dg.sum_(x * x, axis=-1)) * (1.0 - dg.sum_(y * y, axis=-1))
    return dg.arcosh(dg.clamp(1.0 + num / den, lo=1.0))


def exp_map_0(v):
    """
    Exponential map at the origin: tanh(|v|) v / |v|.

    Below MIN_NORM the factor tanh(|v|) / |v| is taken at MIN_NORM, where it
    rounds to 1, so the map is the identity to first order at the origin.
    """
    _require_finite(v, "exp_map_0() input")
    n = dg.clamp(dg.norm(v, keepdims=True), lo=MIN_NORM)
    return dg.tanh(n) / n * v


def log_map_0(x):
    """Logarithmic map at the origin, the inverse of :func:`exp_map_0`."""
    _require_inside(x, "log_map_0() input")
    n = dg.clamp(dg.norm(x, keepdims=True), lo=MIN_NORM)
    return dg.artanh(n) / n * x


def to_ball(v, eps=BALL_EPS):
    """Tangent vector at the origin to a ball point, kept strictly inside."""
    return project_to_ball(exp_map_0(v), eps)


def poincare_to_klein(x):
    _require_inside(x, "poincare_to_klein() input")
    return 2.0 * x / (1.0 + _squared_norm(x))


def klein_to_poincare(x):
    _require_inside(x, "klein_to_poincare() input")
    return x / (1.0 + dg.sqrt(1.0 - _squared_norm(x)))


def lorentz_factor(x):
    """gamma(x) = 1 / sqrt(1 - |x|^2) for a Klein point."""
    _require_inside(x, "lorentz_factor() input")
    return dg.power(1.0 - dg.sum_(x * x, axis=-1), -0.5)


def einstein_midpoint(points, weights):
    """
    Lorentz-weighted midpoint of Klein points.

    Args:
        points: Klein points, shape (..., n, d)
        weights: Nonnegative weights, shape (..., n)

    Returns:
        The midpoint, shape (..., d)

    Raises:
        DomainError: On mismatched shapes, negative or all-zero weights, or
            points outside the disk
    """
    point_shape = value_of(points).shape
    weight_values = value_of(weights)
    if weight_values.shape[-1:] != point_shape[-2:-1]:
        raise DomainError(
            f"einstein_midpoint() got {point_shape[-2]} points and "
            f"{weight_values.shape[-1]} weights"
        )
    if np.any(weight_values < 0):
        raise DomainError("einstein_midpoint() weights must be nonnegative")
    if np.any(np.all(weight_values == 0, axis=-1)):
        raise DomainError("einstein_midpoint() needs at least one positive weight")
    weighted = weights * lorentz_factor(points)
    coef = weighted / dg.sum_(weighted, axis=-1, keepdims=True)
    return dg.sum_(dg.expand_dims(coef, -1) * points, axis=-2)


def dist_exp(u, v, eps=BALL_EPS):
    """Poincaré distance between the exponential-map images of ``u`` and ``v``."""
    return poincare_distance(to_ball(u, eps), to_ball(v, eps))


def euclidean_distance(u, v):
    return dg.norm(u - v, axis=-1)
