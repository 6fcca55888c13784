"""Euclidean Hamiltonian Monte Carlo with an identity mass matrix.

Trajectories run for a random number of leapfrog steps ``L ~ U{1..L_max}``
and stop early once the displacement from the start point turns against the
momentum.  Step sizes are tuned during warmup by dual averaging.
"""
from dataclasses import dataclass, replace

import numpy as np

from .errors import NumericError


@dataclass
class TargetFunctions:
    """Potential energy ``U = -log density`` and its gradient.

    ``value_and_grad`` may be supplied when both are cheaper to compute
    together (e.g. they share a matrix factorization).
    """

    neg_log_density: object
    grad_neg_log_density: object
    value_and_grad: object = None

    def __call__(self, theta):
        if self.value_and_grad is not None:
            return self.value_and_grad(theta)
        return self.neg_log_density(theta), self.grad_neg_log_density(theta)


@dataclass
class HmcConfig:
    step_size: float = 0.1
    L_max_upper: int = 10
    target_accept: float = 0.8
    adapt_iters: int = 0
    max_step: float = 2.0**10
    min_step: float = 2.0**-20
    divergence_threshold: float = 1000.0
    u_turn: bool = True


@dataclass
class DualAveragingState:
    log_eps: float
    log_eps_bar: float = 0.0
    H_bar: float = 0.0
    mu: float = 0.0
    iteration: int = 0
    target_accept: float = 0.8
    gamma: float = 0.05
    t0: float = 10.0
    kappa: float = 0.75

    @classmethod
    def start(cls, eps0, target_accept=0.8, **kw):
        return cls(log_eps=np.log(eps0), mu=np.log(10.0 * eps0), target_accept=target_accept, **kw)

    @property
    def step_size(self):
        return float(np.exp(self.log_eps))

    @property
    def final_step_size(self):
        return float(np.exp(self.log_eps_bar))


def adapt_step_size(state, accept_prob):
    """One dual-averaging update toward ``state.target_accept``."""
    t = state.iteration + 1
    w = 1.0 / (t + state.t0)
    H_bar = (1.0 - w) * state.H_bar + w * (state.target_accept - accept_prob)
    log_eps = state.mu - np.sqrt(t) / state.gamma * H_bar
    eta = t ** (-state.kappa)
    log_eps_bar = eta * log_eps + (1.0 - eta) * state.log_eps_bar
    return replace(state, log_eps=log_eps, log_eps_bar=log_eps_bar, H_bar=H_bar, iteration=t)


def leapfrog_step(theta, phi, eps, target, grad=None):
    """One leapfrog step; returns ``(theta', phi')``.

    ``target`` is a :class:`TargetFunctions` or a bare gradient callable.
    """
    gradient = target.grad_neg_log_density if isinstance(target, TargetFunctions) else target
    g0 = gradient(theta) if grad is None else grad
    phi_half = phi - 0.5 * eps * g0
    theta_new = theta + eps * phi_half
    g1 = gradient(theta_new)
    return theta_new, phi_half - 0.5 * eps * g1


def _evaluate(target, theta):
    try:
        U, g = target(theta)
    except NumericError:
        return np.inf, None
    U = float(U)
    if not np.isfinite(U) or not np.all(np.isfinite(g)):
        return np.inf, None
    return U, np.asarray(g, dtype=float)


def hmc_iteration(theta, target, config, rng, step_size=None, n_steps=None):
    """One HMC transition.

    Returns ``(theta_next, accepted, stats)``; on rejection ``theta_next`` is
    the very object passed in.
    """
    eps = config.step_size if step_size is None else step_size
    theta0 = np.asarray(theta, dtype=float)
    U0, g = _evaluate(target, theta0)
    if g is None:
        raise NumericError("potential is not finite at the current state")
    phi = rng.standard_normal(theta0.shape)
    H0 = U0 + 0.5 * float(phi @ phi)
    L = int(rng.integers(1, config.L_max_upper + 1)) if n_steps is None else int(n_steps)

    x, U = theta0, U0
    path = [theta0]
    momenta = [phi]
    divergent = False
    fired = False
    for _ in range(L):
        phi = phi - 0.5 * eps * g
        x = x + eps * phi
        U, g = _evaluate(target, x)
        if g is None:
            divergent = True
            break
        phi = phi - 0.5 * eps * g
        path.append(x)
        momenta.append(phi)
        if config.u_turn and float((x - theta0) @ phi) < 0.0:
            fired = True
            break
    steps = len(path) - 1
    symmetric = divergent or not config.u_turn or _reverse_stops_at_start(path, momenta, L, fired)

    if divergent:
        dH = np.inf
    else:
        dH = U + 0.5 * float(phi @ phi) - H0
        if not np.isfinite(dH) or abs(dH) > config.divergence_threshold:
            divergent = True
    # accept_prob measures integration error only; it drives step-size adaptation
    accept_prob = 0.0 if divergent else float(min(1.0, np.exp(-dH)))
    u = rng.random()
    accepted = bool(symmetric and accept_prob > 0.0 and u < accept_prob)
    stats = {
        "accept_prob": accept_prob,
        "delta_H": float(dH),
        "n_steps": steps,
        "divergent": divergent,
        "asymmetric": not symmetric,
        "step_size": eps,
        "potential": U if accepted else U0,
    }
    return (x if accepted else theta), accepted, stats


def _reverse_stops_at_start(path, momenta, L, fired):
    """Would the time-reversed trajectory stop exactly at the start point?

    The u-turn test is not symmetric in time, so a proposal is only kept when
    running backwards from it (momentum flipped) terminates after the same
    number of steps; this keeps the transition reversible.
    """
    tau = len(path) - 1
    end = path[-1]
    for j in range(1, tau):
        # reversed state after j steps: position path[tau - j], momentum -momenta[tau - j]
        if float((path[tau - j] - end) @ (-momenta[tau - j])) < 0.0:
            return False
    if tau == L:
        return True
    return float((path[0] - end) @ (-momenta[0])) < 0.0


def heuristic_initial_step(theta0, target, rng, max_step=2.0**10, min_step=2.0**-20):
    """Find a step size where one leapfrog step has acceptance near 1/2.

    Starts at 1 and doubles (or halves) until the one-step acceptance
    probability crosses 0.5.  The momentum is drawn then rescaled to norm
    ``sqrt(dim)`` so the result depends only weakly on the draw.
    """
    theta0 = np.asarray(theta0, dtype=float)
    U0, g0 = _evaluate(target, theta0)
    if g0 is None:
        raise NumericError("potential is not finite at the initial state")
    phi = rng.standard_normal(theta0.shape)
    phi *= np.sqrt(theta0.size) / max(np.linalg.norm(phi), 1e-300)
    H0 = U0 + 0.5 * float(phi @ phi)

    def log_accept(eps):
        half = phi - 0.5 * eps * g0
        x = theta0 + eps * half
        U, g = _evaluate(target, x)
        if g is None:
            return -np.inf
        p1 = half - 0.5 * eps * g
        return min(0.0, H0 - U - 0.5 * float(p1 @ p1))

    eps = 1.0
    direction = 1.0 if log_accept(eps) > np.log(0.5) else -1.0
    while True:
        nxt = eps * 2.0**direction
        if nxt > max_step or nxt < min_step:
            return float(min(max(eps, min_step), max_step))
        eps = nxt
        crossed = log_accept(eps) <= np.log(0.5) if direction > 0 else log_accept(eps) > np.log(0.5)
        if crossed:
            return float(eps)


def check_gradient(target, theta, h=1e-6):
    """Relative error between the analytic gradient and central differences."""
    theta = np.asarray(theta, dtype=float)
    _, g = target(theta)
    fd = np.empty_like(theta)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        fd[k] = (target(theta + e)[0] - target(theta - e)[0]) / (2 * h)
    return float(np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-300))
