"""Posterior samplers for bridge-regularized GP regression.

Two variants share the tau2 and eta updates:

``sph``
    beta and omega live in lq balls of radii ``r_beta`` and ``r_omega``;
    each ball is mapped to a hemisphere and sampled by spherical HMC.  The
    radii get random-walk Metropolis updates on the log scale.
``hmc``
    beta has a conjugate Gaussian prior with covariance ``nu_beta2 * R``,
    omega a Gaussian prior with variance ``nu_omega2`` and is sampled by
    Euclidean HMC; both variances are inverse-gamma.
"""
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .bridge_map import lift_to_sphere, lq_norm, param_to_ball, sign_power
from .errors import ChainAbort, ConfigurationError, DomainError, NumericError
from .gp_core import LOG_2PI, build_kernel_bundle, gls_moments, omega_gradient, quad_form
from .hmc import (
    DualAveragingState,
    HmcConfig,
    TargetFunctions,
    adapt_step_size,
    heuristic_initial_step,
    hmc_iteration,
)
from .sph_hmc import ball_target, heuristic_initial_step_sphere, sph_hmc_iteration

VARIANTS = ("sph", "hmc")
SPH_ORDER = ("beta", "r_beta", "omega", "r_omega", "tau2", "eta")
HMC_ORDER = ("beta", "nu_beta2", "omega", "nu_omega2", "tau2", "eta")


@dataclass
class PriorConfig:
    q: float = 1.0
    a_eta: float = 0.5
    b_eta: float = 0.5
    df_tau2: float = 4.0
    a_beta: float = 1.0
    b_beta: float = 1.0
    a_omega: float = 1.0
    b_omega: float = 1.0
    rho: float = 0.5

    def __post_init__(self):
        if not 0 < self.q <= 2:
            raise DomainError(f"q must lie in (0, 2], got {self.q}")
        if not 0 < self.rho < 1:
            raise DomainError(f"rho must lie in (0, 1), got {self.rho}")
        for name in ("a_eta", "b_eta", "df_tau2", "a_beta", "b_beta", "a_omega", "b_omega"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")


@dataclass
class McmcConfig:
    """Run-length, tuning and stopping settings.

    ``check_every`` is the spacing (in post-burn-in iterations) of the
    two-chain convergence checks.  ``omega_smoothing`` softens the Jacobian
    barrier at zero for the omega ball coordinates; the difference is
    carried by the importance weights.
    """

    burnin: int = 1600
    iters: int = 3000
    target_accept: float = 0.8
    L_max_upper: int = 10
    mh_initial_step: float = 0.1
    mh_target_accept: float = 0.4
    jacobian_in_potential: bool = True
    check_every: int = 500
    rhat_threshold: float = 1.1
    omega_smoothing: float = 0.05

    def __post_init__(self):
        if self.burnin < 0 or self.iters < self.burnin:
            raise ConfigurationError(f"need 0 <= burnin <= iters, got {self.burnin}, {self.iters}")
        if self.check_every < 1:
            raise ConfigurationError("check_every must be >= 1")


@dataclass
class ShrinkageLadder:
    """Diagonal prior scaling ``R_jj = rho ** order_j`` for the beta terms."""

    diag: np.ndarray

    @classmethod
    def from_basis(cls, spec, rho=0.5):
        return cls(rho ** spec.term_orders().astype(float))

    @property
    def R(self):
        return np.diag(self.diag)


@dataclass
class SphChainState:
    beta: np.ndarray
    theta_beta: np.ndarray
    r_beta: float
    omega: np.ndarray
    theta_omega: np.ndarray
    r_omega: float
    tau2: float
    eta: float
    log_weight: float = 0.0


@dataclass
class HmcChainState:
    beta: np.ndarray
    nu_beta2: float
    omega: np.ndarray
    nu_omega2: float
    tau2: float
    eta: float

    def __post_init__(self):
        for name in ("nu_beta2", "nu_omega2", "tau2", "eta"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")


class GPModel:
    """Training arrays plus a small cache of kernel factorizations.

    Parameters
    ----------
    X : ndarray, shape (n, d)
        Inputs (normally scaled to the unit cube).
    y : ndarray, shape (n,)
    spec : BasisSpec
    """

    def __init__(self, X, y, spec, cache_size=16):
        self.X = np.ascontiguousarray(X, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.spec = spec
        self.G = spec.design_matrix(self.X)
        self.n, self.d = self.X.shape
        self.p = self.G.shape[1]
        self._cache = OrderedDict()
        self._cache_size = cache_size

    @classmethod
    def from_dataset(cls, data, spec):
        return cls(data.X, data.y, spec)

    def bundle(self, omega, eta):
        omega = np.asarray(omega, dtype=float)
        key = (omega.tobytes(), float(eta))
        hit = self._cache.get(key)
        if hit is not None:
            self._cache.move_to_end(key)
            return hit
        entry = {"bundle": build_kernel_bundle(self.X, omega, eta)}
        self._cache[key] = entry
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return entry

    def beta_stats(self, omega, eta):
        """``(G^T A G, G^T A y, y^T A y)`` with ``A = (K + eta I)^{-1}``."""
        entry = self.bundle(omega, eta)
        if "GtAG" not in entry:
            b = entry["bundle"]
            AG = b.solve(self.G)
            Ay = b.solve(self.y)
            GtAG = self.G.T @ AG
            entry["GtAG"] = 0.5 * (GtAG + GtAG.T)
            entry["GtAy"] = self.G.T @ Ay
            entry["yAy"] = float(self.y @ Ay)
        return entry["GtAG"], entry["GtAy"], entry["yAy"]

    def resid_terms(self, beta, omega, eta):
        """``(logdet, S^2, alpha, bundle)`` for residual ``y - G beta``."""
        entry = self.bundle(omega, eta)
        b = entry["bundle"]
        S2, alpha = quad_form(b, self.y - self.G @ beta)
        return b.logdet, S2, alpha, b

    def loglik(self, beta, omega, tau2, eta):
        logdet, S2, _, _ = self.resid_terms(beta, omega, eta)
        return -0.5 * self.n * (LOG_2PI + np.log(tau2)) - 0.5 * logdet - 0.5 * S2 / tau2


class AdaptiveScale:
    """Log-scale random-walk proposal whose step is tuned by Robbins-Monro."""

    def __init__(self, step=0.1, target=0.4):
        self.log_step = float(np.log(step))
        self.target = target
        self.t = 0
        self.n_accept = 0
        self.n_total = 0

    @property
    def step(self):
        return float(np.exp(self.log_step))

    def propose(self, x, rng):
        z = rng.standard_normal()
        return float(x * np.exp(self.step * z))

    def record(self, accepted, accept_prob, adapt):
        self.n_total += 1
        self.n_accept += int(accepted)
        if adapt:
            self.t += 1
            self.log_step += (accept_prob - self.target) / (self.t + 1) ** 0.6

    @property
    def acceptance_rate(self):
        return self.n_accept / self.n_total if self.n_total else float("nan")


def _mh_log_scale(x, log_target, tuner, rng, adapt):
    """One Metropolis step on ``log x``; returns ``(x_next, accepted)``.

    The log-scale proposal contributes the Jacobian ``log x' - log x``.
    ``log_target`` may raise :class:`NumericError`, which rejects.
    """
    prop = tuner.propose(x, rng)
    try:
        lp_new = log_target(prop)
        lp_old = log_target(x)
    except NumericError:
        tuner.record(False, 0.0, adapt)
        return x, False
    log_ratio = lp_new - lp_old + np.log(prop) - np.log(x)
    if not np.isfinite(log_ratio):
        log_ratio = -np.inf
    accept_prob = float(np.exp(min(0.0, log_ratio)))
    accepted = bool(rng.random() < accept_prob)
    tuner.record(accepted, accept_prob, adapt)
    return (prop if accepted else x), accepted


class StepTuner:
    """Dual-averaging step size for one HMC block; frozen once adaptation stops."""

    def __init__(self, target_accept=0.8):
        self.target_accept = target_accept
        self.state = None
        self.frozen = None
        self.n_accept = 0
        self.n_total = 0
        self.n_divergent = 0

    def start(self, eps0):
        self.state = DualAveragingState.start(eps0, self.target_accept)

    @property
    def started(self):
        return self.state is not None

    def step_size(self):
        if self.frozen is not None:
            return self.frozen
        return self.state.step_size

    def record(self, accepted, stats, adapt):
        self.n_total += 1
        self.n_accept += int(accepted)
        self.n_divergent += int(stats["divergent"])
        if adapt:
            self.state = adapt_step_size(self.state, stats["accept_prob"])
        elif self.frozen is None:
            self.frozen = self.state.final_step_size if self.state.iteration else self.state.step_size

    @property
    def acceptance_rate(self):
        return self.n_accept / self.n_total if self.n_total else float("nan")


# ----------------------------------------------------------------------------
# conditional updates


def sample_tau2(S2, n, df, rng):
    """Draw ``tau2 = (1 + S^2) / chi2_{df + n}``."""
    return float((1.0 + S2) / rng.chisquare(df + n))


def sample_nu_beta2(beta, R_diag, a, b, rng):
    beta = np.asarray(beta, dtype=float)
    shape = a + beta.size / 2.0
    rate = float(beta @ (beta / R_diag)) / 2.0 + b
    return float(rate / rng.gamma(shape))


def sample_nu_omega2(omega, a, b, rng):
    omega = np.asarray(omega, dtype=float)
    shape = a + omega.size / 2.0
    rate = float(omega @ omega) / 2.0 + b
    return float(rate / rng.gamma(shape))


def eta_log_target(model, beta, omega, tau2, prior):
    def f(eta):
        logdet, S2, _, _ = model.resid_terms(beta, omega, eta)
        return (prior.a_eta - 1.0) * np.log(eta) - prior.b_eta * eta - 0.5 * logdet - 0.5 * S2 / tau2

    return f


def sample_eta(model, beta, omega, tau2, eta, prior, tuner, rng, adapt=False):
    return _mh_log_scale(eta, eta_log_target(model, beta, omega, tau2, prior), tuner, rng, adapt)


def r_beta_log_target(model, theta_beta, omega, tau2, eta, q):
    """Log conditional of ``r_beta`` (flat prior) given the ball point."""
    GtAG, GtAy, yAy = model.beta_stats(omega, eta)
    u = sign_power(theta_beta, 2.0 / q)
    a = float(u @ GtAy)
    c = float(u @ GtAG @ u)

    def f(r):
        return -0.5 / tau2 * (yAy - 2.0 * r * a + r * r * c)

    return f


def sample_r_beta(model, state, prior, tuner, rng, adapt=False):
    f = r_beta_log_target(model, state.theta_beta, state.omega, state.tau2, state.eta, prior.q)
    r, acc = _mh_log_scale(state.r_beta, f, tuner, rng, adapt)
    if not acc:
        return state, False
    beta = r * sign_power(state.theta_beta, 2.0 / prior.q)
    return replace(state, r_beta=r, beta=beta), True


def r_omega_log_target(model, theta_omega, beta, tau2, eta, q):
    u = sign_power(theta_omega, 2.0 / q)

    def f(r):
        logdet, S2, _, _ = model.resid_terms(beta, r * u, eta)
        return -0.5 * logdet - 0.5 * S2 / tau2

    return f


def sample_r_omega(model, state, prior, tuner, rng, adapt=False):
    f = r_omega_log_target(model, state.theta_omega, state.beta, state.tau2, state.eta, prior.q)
    r, acc = _mh_log_scale(state.r_omega, f, tuner, rng, adapt)
    if not acc:
        return state, False
    omega = r * sign_power(state.theta_omega, 2.0 / prior.q)
    return replace(state, r_omega=r, omega=omega), True


def beta_potential(model, omega, tau2, eta):
    """``U(beta) = (beta^T G^T A G beta - 2 beta^T G^T A y) / (2 tau2)`` and its gradient."""
    GtAG, GtAy, _ = model.beta_stats(omega, eta)

    def value_and_grad(beta):
        Hb = GtAG @ beta
        return 0.5 / tau2 * float(beta @ Hb - 2.0 * beta @ GtAy), (Hb - GtAy) / tau2

    return value_and_grad


def omega_potential_fn(model, beta, tau2, eta, nu_omega2=None):
    """``U(omega) = logdet/2 + S^2/(2 tau2)`` (plus a Gaussian prior term) and its gradient."""
    resid_beta = np.asarray(beta, dtype=float)

    def value_and_grad(omega):
        logdet, S2, alpha, b = model.resid_terms(resid_beta, omega, eta)
        U = 0.5 * logdet + 0.5 * S2 / tau2
        g = omega_gradient(model.X, b, alpha, omega, tau2)
        if nu_omega2 is not None:
            U += 0.5 * float(omega @ omega) / nu_omega2
            g = g + omega / nu_omega2
        return U, g

    return value_and_grad


def _as_target(value_and_grad):
    return TargetFunctions(
        neg_log_density=lambda x: value_and_grad(x)[0],
        grad_neg_log_density=lambda x: value_and_grad(x)[1],
        value_and_grad=value_and_grad,
    )


def _sph_block(theta, radius, q, param_vg, tuner, mcmc, rng, adapt, smoothing=0.0):
    """Spherical HMC update of one ball block; returns ``(theta, accepted, log_weight)``."""
    target = ball_target(param_vg, radius, q, mcmc.jacobian_in_potential, smoothing)
    th_tilde = lift_to_sphere(theta).theta_tilde
    if not tuner.started:
        tuner.start(heuristic_initial_step_sphere(th_tilde, target, rng))
    cfg = HmcConfig(step_size=tuner.step_size(), L_max_upper=mcmc.L_max_upper, target_accept=mcmc.target_accept)
    nxt, acc, lw, stats = sph_hmc_iteration(
        th_tilde,
        target,
        cfg,
        rng,
        q=q,
        radius=1.0,
        jacobian_in_potential=mcmc.jacobian_in_potential,
        smoothing=smoothing,
    )
    tuner.record(acc, stats, adapt)
    new_theta = nxt[:-1].copy() if acc else np.asarray(theta, dtype=float)
    nrm2 = float(new_theta @ new_theta)
    if nrm2 > 1.0:
        new_theta /= np.sqrt(nrm2)
    return new_theta, acc, lw


def sample_beta_sph(model, state, prior, tuner, mcmc, rng, adapt=False):
    vg = beta_potential(model, state.omega, state.tau2, state.eta)
    theta, acc, lw = _sph_block(state.theta_beta, state.r_beta, prior.q, vg, tuner, mcmc, rng, adapt)
    beta = state.r_beta * sign_power(theta, 2.0 / prior.q) if acc else state.beta
    return replace(state, theta_beta=theta, beta=beta), acc, lw


def sample_omega_sph(model, state, prior, tuner, mcmc, rng, adapt=False):
    vg = omega_potential_fn(model, state.beta, state.tau2, state.eta)
    theta, acc, lw = _sph_block(
        state.theta_omega, state.r_omega, prior.q, vg, tuner, mcmc, rng, adapt, mcmc.omega_smoothing
    )
    omega = state.r_omega * sign_power(theta, 2.0 / prior.q) if acc else state.omega
    return replace(state, theta_omega=theta, omega=omega), acc, lw


def sample_beta_hmc(model, omega, tau2, eta, nu_beta2, R_diag, rng):
    """Exact draw from the Gaussian beta conditional under the ridge-type prior."""
    GtAG, GtAy, _ = model.beta_stats(omega, eta)
    P = GtAG / tau2 + np.diag(1.0 / (nu_beta2 * R_diag))
    L = scipy.linalg.cholesky(P, lower=True, check_finite=False)
    mean = scipy.linalg.cho_solve((L, True), GtAy / tau2, check_finite=False)
    z = rng.standard_normal(mean.size)
    return mean + scipy.linalg.solve_triangular(L.T, z, lower=False, check_finite=False)


def sample_omega_hmc(model, state, tuner, mcmc, rng, adapt=False):
    target = _as_target(omega_potential_fn(model, state.beta, state.tau2, state.eta, state.nu_omega2))
    if not tuner.started:
        tuner.start(heuristic_initial_step(state.omega, target, rng))
    cfg = HmcConfig(step_size=tuner.step_size(), L_max_upper=mcmc.L_max_upper, target_accept=mcmc.target_accept)
    nxt, acc, stats = hmc_iteration(state.omega, target, cfg, rng)
    tuner.record(acc, stats, adapt)
    return replace(state, omega=np.asarray(nxt, dtype=float)), acc


# ----------------------------------------------------------------------------
# chains


def trace_columns(variant, p, d):
    """Trace field names in declaration order."""
    b = [f"beta_{j}" for j in range(p)]
    w = [f"omega_{k + 1}" for k in range(d)]
    if variant == "sph":
        return b + ["r_beta"] + w + ["r_omega", "tau2", "eta", "log_weight", "loglik"]
    return b + ["nu_beta2"] + w + ["nu_omega2", "tau2", "eta", "loglik"]


@dataclass
class ChainTrace:
    """Per-iteration draws of one chain.

    ``values`` holds every completed iteration; ``retained`` drops burn-in.
    """

    variant: str
    columns: list
    values: np.ndarray
    burnin: int
    diagnostics: dict = field(default_factory=dict)
    order_log: list = None

    @property
    def n_iter(self):
        return self.values.shape[0]

    @property
    def retained(self):
        return self.values[self.burnin :]

    def column(self, name, retained=True):
        arr = self.retained if retained else self.values
        return arr[:, self.columns.index(name)]

    def block(self, prefix, retained=True):
        idx = [i for i, c in enumerate(self.columns) if c.startswith(prefix + "_") and c[len(prefix) + 1 :].isdigit()]
        arr = self.retained if retained else self.values
        return arr[:, idx]

    @property
    def log_weights(self):
        if "log_weight" in self.columns:
            return self.column("log_weight")
        return np.zeros(self.retained.shape[0])

    def to_csv(self, path, retained=True):
        arr = self.retained if retained else self.values
        np.savetxt(path, arr, delimiter=",", header=",".join(self.columns), comments="", fmt="%.17g")

    def to_binary(self, path, retained=True):
        """Raw little-endian float64 values, column-major, no header."""
        arr = self.retained if retained else self.values
        with open(path, "wb") as fh:
            fh.write(np.asfortranarray(arr, dtype="<f8").tobytes(order="F"))

    @staticmethod
    def read_binary(path, n_columns):
        raw = np.fromfile(path, dtype="<f8")
        if n_columns == 0 or raw.size % n_columns:
            raise ValueError("binary trace size is not a multiple of the column count")
        return raw.reshape((raw.size // n_columns, n_columns), order="F")


def _initial_guess(model):
    """GLS beta at omega = 1, eta = 1e-3."""
    omega0 = np.ones(model.d)
    eta0 = 1e-3
    tau0 = float(np.var(model.y, ddof=1)) if model.n > 1 else 1.0
    if not tau0 > 0:
        tau0 = 1.0
    b = model.bundle(omega0, eta0)["bundle"]
    beta, _ = gls_moments(model.G, model.y, b, tau0)
    return beta, omega0, tau0, eta0


def initial_sph_state(model, q):
    beta0, omega0, tau0, eta0 = _initial_guess(model)
    r_beta = 2.0 * lq_norm(beta0, q)
    if not r_beta > 0:
        r_beta = 1.0
    r_omega = 2.0 * lq_norm(omega0, q)
    tb = param_to_ball(beta0, r_beta, q).theta
    tw = param_to_ball(omega0, r_omega, q).theta
    return SphChainState(
        beta=ball_to_param_arr(tb, r_beta, q),
        theta_beta=tb,
        r_beta=r_beta,
        omega=ball_to_param_arr(tw, r_omega, q),
        theta_omega=tw,
        r_omega=r_omega,
        tau2=tau0,
        eta=eta0,
    )


def ball_to_param_arr(theta, r, q):
    return r * sign_power(theta, 2.0 / q)


def initial_hmc_state(model, R_diag):
    beta0, omega0, tau0, eta0 = _initial_guess(model)
    nu_beta2 = float(np.mean(beta0**2 / R_diag)) + 1.0
    return HmcChainState(beta=beta0, nu_beta2=nu_beta2, omega=omega0, nu_omega2=1.0, tau2=tau0, eta=eta0)


class Chain:
    """One Gibbs chain that can be advanced an iteration at a time.

    Parameters
    ----------
    variant : {"sph", "hmc"}
    model : GPModel
    prior : PriorConfig
    mcmc : McmcConfig
    rng : numpy.random.Generator
    state : SphChainState or HmcChainState, optional
        Defaults to the data-driven initialization.
    record_order : bool
        Keep a log of the update names executed, for testing.
    """

    def __init__(self, variant, model, prior, mcmc, rng, state=None, record_order=False):
        if variant not in VARIANTS:
            raise ConfigurationError(f"variant must be one of {VARIANTS}, got {variant!r}")
        self.variant = variant
        self.model = model
        self.prior = prior
        self.mcmc = mcmc
        self.rng = rng
        self.R_diag = ShrinkageLadder.from_basis(model.spec, prior.rho).diag
        if state is None:
            state = initial_sph_state(model, prior.q) if variant == "sph" else initial_hmc_state(model, self.R_diag)
        self.state = state
        self.columns = trace_columns(variant, model.p, model.d)
        self.values = np.empty((mcmc.iters, len(self.columns)))
        self.iteration = 0
        self.order_log = [] if record_order else None
        ta = mcmc.target_accept
        self.tuners = {"beta": StepTuner(ta), "omega": StepTuner(ta)}
        self.scales = {
            name: AdaptiveScale(mcmc.mh_initial_step, mcmc.mh_target_accept) for name in ("r_beta", "r_omega", "eta")
        }
        self.n_floored = 0

    def _log(self, name):
        if self.order_log is not None:
            self.order_log.append((self.iteration, name))

    def step(self):
        """Run one full sweep and record it; raises :class:`ChainAbort` on failure."""
        adapt = self.iteration < self.mcmc.burnin
        try:
            if self.variant == "sph":
                row = self._sweep_sph(adapt)
            else:
                row = self._sweep_hmc(adapt)
        except NumericError as exc:
            raise ChainAbort(
                f"numeric failure at iteration {self.iteration}: {exc}",
                iteration=self.iteration,
                last_state=self.state,
                diagnostics=getattr(exc, "diagnostics", {}),
            ) from exc
        self.values[self.iteration] = row
        self.iteration += 1

    def _sweep_sph(self, adapt):
        m, pr, mc, rng = self.model, self.prior, self.mcmc, self.rng
        s = self.state
        self._log("beta")
        s, _, lw_b = sample_beta_sph(m, s, pr, self.tuners["beta"], mc, rng, adapt)
        self._log("r_beta")
        s, _ = sample_r_beta(m, s, pr, self.scales["r_beta"], rng, adapt)
        self._log("omega")
        s, _, lw_w = sample_omega_sph(m, s, pr, self.tuners["omega"], mc, rng, adapt)
        self._log("r_omega")
        s, _ = sample_r_omega(m, s, pr, self.scales["r_omega"], rng, adapt)
        s = self._tau2_eta(s, adapt)
        s = replace(s, log_weight=lw_b + lw_w)
        self.state = s
        ll = m.loglik(s.beta, s.omega, s.tau2, s.eta)
        return np.concatenate(
            [s.beta, [s.r_beta], s.omega, [s.r_omega, s.tau2, s.eta, s.log_weight, ll]]
        )

    def _sweep_hmc(self, adapt):
        m, pr, mc, rng = self.model, self.prior, self.mcmc, self.rng
        s = self.state
        self._log("beta")
        s = replace(s, beta=sample_beta_hmc(m, s.omega, s.tau2, s.eta, s.nu_beta2, self.R_diag, rng))
        self._log("nu_beta2")
        s = replace(s, nu_beta2=sample_nu_beta2(s.beta, self.R_diag, pr.a_beta, pr.b_beta, rng))
        self._log("omega")
        s, _ = sample_omega_hmc(m, s, self.tuners["omega"], mc, rng, adapt)
        self._log("nu_omega2")
        s = replace(s, nu_omega2=sample_nu_omega2(s.omega, pr.a_omega, pr.b_omega, rng))
        s = self._tau2_eta(s, adapt)
        self.state = s
        ll = m.loglik(s.beta, s.omega, s.tau2, s.eta)
        return np.concatenate([s.beta, [s.nu_beta2], s.omega, [s.nu_omega2, s.tau2, s.eta, ll]])

    def _tau2_eta(self, s, adapt):
        m, pr, rng = self.model, self.prior, self.rng
        self._log("tau2")
        _, S2, _, _ = m.resid_terms(s.beta, s.omega, s.eta)
        s = replace(s, tau2=sample_tau2(S2, m.n, pr.df_tau2, rng))
        self._log("eta")
        eta, _ = sample_eta(m, s.beta, s.omega, s.tau2, s.eta, pr, self.scales["eta"], rng, adapt)
        return replace(s, eta=eta)

    def diagnostics(self):
        out = {
            "iterations": self.iteration,
            "hmc_acceptance": {k: t.acceptance_rate for k, t in self.tuners.items() if t.n_total},
            "divergences": {k: t.n_divergent for k, t in self.tuners.items() if t.n_total},
            "step_size": {k: t.step_size() for k, t in self.tuners.items() if t.started},
        }
        if self.variant == "sph":
            out["mh_acceptance"] = {k: s.acceptance_rate for k, s in self.scales.items()}
            out["mh_step"] = {k: s.step for k, s in self.scales.items()}
        else:
            out["mh_acceptance"] = {"eta": self.scales["eta"].acceptance_rate}
            out["mh_step"] = {"eta": self.scales["eta"].step}
        return out

    def trace(self, stop=None):
        stop = self.iteration if stop is None else stop
        return ChainTrace(
            self.variant,
            list(self.columns),
            self.values[:stop].copy(),
            min(self.mcmc.burnin, stop),
            self.diagnostics(),
            list(self.order_log) if self.order_log is not None else None,
        )


def run_chain(variant, model, prior=None, mcmc=None, seed=0, rng=None, state=None, record_order=False):
    """Run one chain for ``mcmc.iters`` iterations and return its :class:`ChainTrace`."""
    prior = PriorConfig() if prior is None else prior
    mcmc = McmcConfig() if mcmc is None else mcmc
    rng = np.random.default_rng(seed) if rng is None else rng
    chain = Chain(variant, model, prior, mcmc, rng, state=state, record_order=record_order)
    for _ in range(mcmc.iters):
        chain.step()
    return chain.trace()


def split_rhat(chains):
    """Split potential scale reduction factor for a list of equal-length 1-D traces."""
    halves = []
    for c in chains:
        c = np.asarray(c, dtype=float)
        h = c.size // 2
        if h < 2:
            return float("inf")
        halves += [c[:h], c[h : 2 * h]]
    x = np.vstack(halves)
    n = x.shape[1]
    means = x.mean(axis=1)
    W = float(np.mean(x.var(axis=1, ddof=1)))
    B = n * float(means.var(ddof=1))
    if W == 0.0:
        return 1.0 if B == 0.0 else float("inf")
    var_plus = (n - 1) / n * W + B / n
    return float(np.sqrt(var_plus / W))


@dataclass
class TwoChainResult:
    traces: list
    converged_at: int
    rhat: float
    degraded: bool = False
    abort: dict = None


def run_two_chains(variant, model, prior=None, mcmc=None, seeds=(1, 2), jobs=1, states=(None, None), record_order=False):
    """Run two chains in lockstep with periodic split-R-hat checks.

    After burn-in, every ``mcmc.check_every`` iterations the split R-hat of
    the log-likelihood traces is computed; both chains stop once it falls
    below ``mcmc.rhat_threshold`` (or at ``mcmc.iters``).

    Returns
    -------
    TwoChainResult
        ``converged_at`` is the iteration count at which the chains stopped
        early, or ``mcmc.iters`` if they never did.
    """
    prior = PriorConfig() if prior is None else prior
    mcmc = McmcConfig() if mcmc is None else mcmc
    chains = [
        Chain(variant, model, prior, mcmc, np.random.default_rng(sd), state=st, record_order=record_order)
        for sd, st in zip(seeds, states)
    ]
    if len(chains) != 2:
        raise ConfigurationError("exactly two seeds are required")

    def advance(chain, upto):
        while chain.iteration < upto:
            chain.step()

    checkpoints = list(range(mcmc.burnin + mcmc.check_every, mcmc.iters, mcmc.check_every)) + [mcmc.iters]
    stop = mcmc.iters
    rhat = float("nan")
    executor = ThreadPoolExecutor(max_workers=2) if jobs > 1 else None
    ll_col = chains[0].columns.index("loglik")
    try:
        for cp in [mcmc.burnin] + checkpoints:
            errors = []
            if executor is not None:
                futs = [executor.submit(advance, c, cp) for c in chains]
                for i, f in enumerate(futs):
                    try:
                        f.result()
                    except ChainAbort as exc:
                        errors.append((i, exc))
            else:
                for i, c in enumerate(chains):
                    try:
                        advance(c, cp)
                    except ChainAbort as exc:
                        errors.append((i, exc))
            if errors:
                return _degraded(chains, errors)
            if cp <= mcmc.burnin:
                continue
            rhat = split_rhat([c.values[mcmc.burnin : cp, ll_col] for c in chains])
            if rhat < mcmc.rhat_threshold:
                stop = cp
                break
    finally:
        if executor is not None:
            executor.shutdown()
    return TwoChainResult([c.trace(stop) for c in chains], stop, rhat)


def _degraded(chains, errors):
    failed = {i for i, _ in errors}
    survivors = [c for i, c in enumerate(chains) if i not in failed] or chains
    traces = [c.trace() for c in survivors]
    exc = errors[0][1]
    return TwoChainResult(
        traces,
        max(t.n_iter for t in traces),
        float("nan"),
        degraded=True,
        abort={"iteration": exc.iteration, "message": str(exc), "diagnostics": exc.diagnostics},
    )
