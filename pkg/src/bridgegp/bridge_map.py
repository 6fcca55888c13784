"""Maps between an lq-ball of radius r, the unit l2 ball and the upper hemisphere.

A parameter vector ``v`` with ``||v||_q <= r`` is sent to the unit ball by the
sign-power map ``theta_i = sgn(v_i) |v_i / r|^(q/2)`` (so ``||theta||_2^2 =
(||v||_q / r)^q``) and then lifted to ``S^d`` by appending
``sqrt(1 - ||theta||^2)``.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

LOG_FLOOR = 1e-12


def lq_norm(v, q):
    v = np.abs(np.asarray(v, dtype=float))
    if v.size == 0:
        return 0.0
    m = v.max()
    if m == 0.0:
        return 0.0
    # scaled to avoid overflow for small q
    return float(m * np.sum((v / m) ** q) ** (1.0 / q))


@dataclass
class BallPoint:
    theta: np.ndarray
    radius_param: float
    q: float

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float).ravel()
        if not self.radius_param > 0:
            raise DomainError(f"radius must be positive, got {self.radius_param}")
        if not 0 < self.q <= 2:
            raise DomainError(f"q must lie in (0, 2], got {self.q}")
        if float(self.theta @ self.theta) > (1.0 + 1e-12) ** 2:
            raise DomainError(f"ball point has norm {np.linalg.norm(self.theta)} > 1")


@dataclass
class SpherePoint:
    theta_tilde: np.ndarray

    def __post_init__(self):
        self.theta_tilde = np.asarray(self.theta_tilde, dtype=float).ravel()
        nrm = np.linalg.norm(self.theta_tilde)
        if abs(nrm - 1.0) > 1e-12:
            raise DomainError(f"sphere point has norm {nrm}")


def sign_power(v, power):
    """Elementwise ``sgn(v) |v|^power``."""
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.abs(v) ** power


def param_to_ball(v, r, q):
    v = np.asarray(v, dtype=float).ravel()
    norm = lq_norm(v, q)
    if norm > r * (1.0 + 1e-12):
        raise DomainError(f"||v||_q = {norm!r} exceeds radius r = {r!r}")
    theta = sign_power(v / r, q / 2.0)
    nrm2 = float(theta @ theta)
    if nrm2 > 1.0:
        theta = theta / np.sqrt(nrm2)
    return BallPoint(theta, r, q)


def ball_to_param(b):
    return b.radius_param * sign_power(b.theta, 2.0 / b.q)


def lift_to_sphere(b, hemisphere_sign=1):
    theta = b.theta if isinstance(b, BallPoint) else np.asarray(b, dtype=float).ravel()
    last = np.sqrt(max(0.0, 1.0 - float(theta @ theta)))
    s = np.append(theta, hemisphere_sign * last)
    return SpherePoint(s / np.linalg.norm(s))


def drop_from_sphere(s):
    tt = s.theta_tilde if isinstance(s, SpherePoint) else np.asarray(s, dtype=float)
    return tt[:-1].copy()


def log_coordinate_jacobian(theta, r, q):
    """``log |d v / d theta|`` for the sign-power map, |theta_i| floored at 1e-12."""
    theta = np.asarray(theta, dtype=float)
    a = np.maximum(np.abs(theta), LOG_FLOOR)
    return float(np.sum(np.log(2.0 / q) + np.log(r) + (2.0 / q - 1.0) * np.log(a)))


def log_sphere_weight(last):
    """``log |theta_{d+1}|`` with the floor; returns (value, floored?)."""
    a = abs(float(last))
    return float(np.log(max(a, LOG_FLOOR))), a < LOG_FLOOR


def log_jacobian_weight(b, last=None):
    """Log importance weight of a sphere draw for the original parameter.

    The weight is the coordinate Jacobian of the ball-to-parameter map times
    ``|theta_{d+1}|`` (the inverse of the sphere-to-ball Jacobian).  ``last``
    defaults to the upper-hemisphere coordinate.
    """
    if last is None:
        last = np.sqrt(max(0.0, 1.0 - float(b.theta @ b.theta)))
    lw_sphere, _ = log_sphere_weight(last)
    return log_coordinate_jacobian(b.theta, b.radius_param, b.q) + lw_sphere


def dparam_dtheta(theta, r, q):
    """Diagonal of ``d v / d theta``: ``(2/q) r |theta_i|^(2/q - 1)``."""
    a = np.maximum(np.abs(np.asarray(theta, dtype=float)), LOG_FLOOR)
    return (2.0 / q) * r * a ** (2.0 / q - 1.0)
