"""Spherical HMC: geodesic leapfrog on the unit sphere ``S^d``.

A point of the unit ball ``theta`` is lifted to the sphere by appending
``sqrt(1 - ||theta||^2)``.  The potential depends on the first ``d``
coordinates only; its gradient is zero-extended and projected onto the
tangent space before every velocity kick.
"""
from dataclasses import dataclass

import numpy as np

from .bridge_map import (
    LOG_FLOOR,
    BallPoint,
    dparam_dtheta,
    log_jacobian_weight,
    log_sphere_weight,
    sign_power,
)
from .errors import NumericError
from .hmc import TargetFunctions, _evaluate

TANGENCY_TOL = 1e-10


@dataclass
class SphState:
    theta_tilde: np.ndarray
    v_tilde: np.ndarray

    def __post_init__(self):
        self.theta_tilde = np.asarray(self.theta_tilde, dtype=float)
        self.v_tilde = np.asarray(self.v_tilde, dtype=float)


def project_tangent(theta_tilde, grad):
    """Apply ``I - theta_tilde theta_tilde^T`` to ``grad``."""
    theta_tilde = np.asarray(theta_tilde, dtype=float)
    grad = np.asarray(grad, dtype=float)
    return grad - theta_tilde * float(theta_tilde @ grad)


def geodesic_update(state, eps):
    """Rotate ``(theta_tilde, v_tilde)`` along the great circle for time ``eps``."""
    th, v = state.theta_tilde, state.v_tilde
    speed = float(np.linalg.norm(v))
    if speed == 0.0:
        return SphState(th.copy(), v.copy())
    c, s = np.cos(speed * eps), np.sin(speed * eps)
    th_new = th * c + v * (s / speed)
    v_new = -th * (speed * s) + v * c
    # remove drift from rounding: unit norm, tangency and speed
    th_new /= np.linalg.norm(th_new)
    v_new = project_tangent(th_new, v_new)
    nv = np.linalg.norm(v_new)
    if nv > 0.0:
        v_new *= speed / nv
    return SphState(th_new, v_new)


def ball_target(param_target, radius, q, jacobian_in_potential=False, smoothing=0.0):
    """Express a parameter-space target in ball coordinates ``theta``.

    ``param_target(v)`` returns ``(U, grad_v U)`` for ``v = r sgn(theta)
    |theta|^(2/q)``.  With ``jacobian_in_potential`` the term
    ``-(2/q - 1) sum log|theta_i|`` is added to the potential so that the
    chain targets the parameter-space density directly.

    A positive ``smoothing`` ``delta`` replaces ``log|theta_i|`` by
    ``log(theta_i^2 + delta^2) / 2``, which removes the barrier at
    ``theta_i = 0``; :func:`sphere_log_weight` with the same ``delta``
    restores the exact target.
    """
    c = 2.0 / q - 1.0

    def value_and_grad(theta):
        v = radius * sign_power(theta, 2.0 / q)
        U, g = param_target(v)
        grad = dparam_dtheta(theta, radius, q) * np.asarray(g, dtype=float)
        if jacobian_in_potential and c != 0.0:
            if smoothing > 0.0:
                s2 = theta * theta + smoothing * smoothing
                U = U - 0.5 * c * float(np.sum(np.log(s2)))
                grad = grad - c * theta / s2
            else:
                a = np.abs(theta)
                U = U - c * float(np.sum(np.log(np.maximum(a, LOG_FLOOR))))
                inv = np.where(a > LOG_FLOOR, 1.0 / np.where(a > LOG_FLOOR, theta, 1.0), 0.0)
                grad = grad - c * inv
        return U, grad

    return TargetFunctions(
        neg_log_density=lambda t: value_and_grad(t)[0],
        grad_neg_log_density=lambda t: value_and_grad(t)[1],
        value_and_grad=value_and_grad,
    )


def sphere_log_weight(theta_tilde, q=2.0, radius=1.0, jacobian_in_potential=False, smoothing=0.0):
    """Log importance weight of a sphere point for the parameter-space target."""
    theta_tilde = np.asarray(theta_tilde, dtype=float)
    last = theta_tilde[-1]
    if jacobian_in_potential:
        lw = log_sphere_weight(last)[0]
        c = 2.0 / q - 1.0
        if smoothing > 0.0 and c != 0.0:
            th = theta_tilde[:-1]
            a = np.maximum(np.abs(th), LOG_FLOOR)
            lw += c * float(np.sum(np.log(a) - 0.5 * np.log(th * th + smoothing * smoothing)))
        return lw
    return log_jacobian_weight(BallPoint(theta_tilde[:-1], radius, q), last=last)


def _kick(theta_tilde, v, g_ball, eps):
    g = np.append(g_ball, 0.0)
    return v - 0.5 * eps * project_tangent(theta_tilde, g)


def sph_hmc_iteration(
    theta_tilde,
    target_on_ball,
    config,
    rng,
    step_size=None,
    q=2.0,
    radius=1.0,
    jacobian_in_potential=False,
    n_steps=None,
    prev_log_weight=None,
    smoothing=0.0,
):
    """One spherical HMC transition.

    Parameters
    ----------
    theta_tilde : ndarray, shape (d + 1,)
        Current unit vector.
    target_on_ball : TargetFunctions
        Potential and gradient as functions of the first ``d`` coordinates.
    config : HmcConfig
    rng : numpy.random.Generator
    step_size : float, optional
        Overrides ``config.step_size``.
    q, radius : float
        Used only for the returned importance weight.
    jacobian_in_potential : bool
        If the coordinate Jacobian is already part of the potential, only the
        sphere factor ``|theta_{d+1}|`` enters the weight.
    prev_log_weight : float, optional
        Re-emitted on rejection.
    smoothing : float
        Barrier smoothing used in the potential (see :func:`ball_target`).

    Returns
    -------
    theta_tilde_next : ndarray
        The input object itself on rejection.
    accepted : bool
    log_weight : float
    stats : dict
    """
    eps = config.step_size if step_size is None else step_size
    th0 = np.asarray(theta_tilde, dtype=float)
    U0, g = _evaluate(target_on_ball, th0[:-1])
    if g is None:
        raise NumericError("potential is not finite at the current state")
    v = rng.standard_normal(th0.shape)
    v = project_tangent(th0, v)
    H0 = U0 + 0.5 * float(v @ v)
    L = int(rng.integers(1, config.L_max_upper + 1)) if n_steps is None else int(n_steps)

    state = SphState(th0, v)
    path = [th0]
    U = U0
    divergent = False
    fired = False
    for _ in range(L):
        v_half = _kick(state.theta_tilde, state.v_tilde, g, eps)
        state = geodesic_update(SphState(state.theta_tilde, v_half), eps)
        U, g = _evaluate(target_on_ball, state.theta_tilde[:-1])
        if g is None:
            divergent = True
            break
        state = SphState(state.theta_tilde, _kick(state.theta_tilde, state.v_tilde, g, eps))
        path.append(state.theta_tilde)
        if config.u_turn and float(th0 @ state.theta_tilde) < 0.0:
            fired = True
            break
    steps = len(path) - 1
    symmetric = divergent or not config.u_turn or _reverse_stops_at_start(path, L, fired)

    if divergent:
        dH = np.inf
    else:
        dH = U + 0.5 * float(state.v_tilde @ state.v_tilde) - H0
        if not np.isfinite(dH) or abs(dH) > config.divergence_threshold:
            divergent = True
    accept_prob = 0.0 if divergent else float(min(1.0, np.exp(-dH)))
    accepted = bool(symmetric and accept_prob > 0.0 and rng.random() < accept_prob)
    stats = {
        "accept_prob": accept_prob,
        "delta_H": float(dH),
        "n_steps": steps,
        "divergent": divergent,
        "asymmetric": not symmetric,
        "step_size": eps,
        "potential": U if accepted else U0,
    }
    if accepted:
        nxt = state.theta_tilde
        lw = sphere_log_weight(nxt, q, radius, jacobian_in_potential, smoothing)
        return nxt, True, lw, stats
    if prev_log_weight is None:
        prev_log_weight = sphere_log_weight(th0, q, radius, jacobian_in_potential, smoothing)
    return theta_tilde, False, float(prev_log_weight), stats


def _reverse_stops_at_start(path, L, fired):
    """Time-reversal check for the great-circle u-turn rule.

    Running backwards from the endpoint must not stop before reaching the
    start point, and must stop there whenever the forward run did.
    """
    tau = len(path) - 1
    end = path[-1]
    for j in range(1, tau):
        if float(end @ path[tau - j]) < 0.0:
            return False
    if tau == L:
        return True
    return float(end @ path[0]) < 0.0


def heuristic_initial_step_sphere(theta_tilde, target_on_ball, rng, max_step=2.0**10, min_step=2.0**-20):
    """Doubling/halving search for a step with one-step acceptance near 1/2."""
    th0 = np.asarray(theta_tilde, dtype=float)
    U0, g0 = _evaluate(target_on_ball, th0[:-1])
    if g0 is None:
        raise NumericError("potential is not finite at the initial state")
    v = project_tangent(th0, rng.standard_normal(th0.shape))
    nv = np.linalg.norm(v)
    if nv > 0:
        v *= np.sqrt(th0.size - 1) / nv
    H0 = U0 + 0.5 * float(v @ v)

    def log_accept(eps):
        s = geodesic_update(SphState(th0, _kick(th0, v, g0, eps)), eps)
        U, g = _evaluate(target_on_ball, s.theta_tilde[:-1])
        if g is None:
            return -np.inf
        v1 = _kick(s.theta_tilde, s.v_tilde, g, eps)
        return min(0.0, H0 - U - 0.5 * float(v1 @ v1))

    eps = 1.0
    direction = 1.0 if log_accept(eps) > np.log(0.5) else -1.0
    while True:
        nxt = eps * 2.0**direction
        if nxt > max_step or nxt < min_step:
            return float(min(max(eps, min_step), max_step))
        eps = nxt
        la = log_accept(eps)
        if (la <= np.log(0.5)) if direction > 0 else (la > np.log(0.5)):
            return float(eps)
