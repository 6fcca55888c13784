"""Posterior summaries, predictions and replicated benchmark experiments."""
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .benchmarks import get_benchmark, pad_inert_dimensions, simulate_benchmark, simulate_prespecified_gp
from .errors import ChainAbort, DomainError, NumericError
from .gibbs import GPModel, McmcConfig, PriorConfig, run_two_chains
from .gp_core import BasisSpec, GPParams, PredictiveResult, _predict_with_bundle

REPORT_SCHEMA_VERSION = 1


def standardized_rmse(y_true, y_pred):
    """RMSE divided by the (1/n) standard deviation of ``y_true``."""
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if y_true.shape != y_pred.shape:
        raise DomainError(f"length mismatch: {y_true.size} vs {y_pred.size}")
    if y_true.size < 2:
        raise DomainError("need at least two test points")
    sd = float(np.std(y_true))
    if sd == 0.0:
        raise DomainError("standardized RMSE is undefined for constant y_true")
    return float(np.sqrt(np.mean((y_true - y_pred) ** 2)) / sd)


def normalized_weights(log_weights):
    lw = np.asarray(log_weights, dtype=float)
    if lw.size == 0:
        raise DomainError("no draws")
    if not np.any(np.isfinite(lw)):
        raise DomainError("all importance weights are zero")
    w = np.exp(lw - np.max(lw[np.isfinite(lw)]))
    w[~np.isfinite(w)] = 0.0
    total = w.sum()
    if total <= 0:
        raise DomainError("all importance weights are zero")
    return w / total


def weighted_quantile(values, weights, probs):
    """Quantiles by inverting the cumulative normalized weights.

    Returns the smallest value whose cumulative weight reaches each
    probability.
    """
    values = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if w.sum() <= 0:
        raise DomainError("all importance weights are zero")
    order = np.argsort(values, kind="stable")
    cw = np.cumsum(w[order]) / w.sum()
    probs = np.atleast_1d(np.asarray(probs, dtype=float))
    idx = np.searchsorted(cw, probs - 1e-12, side="left")
    idx = np.minimum(idx, values.size - 1)
    return values[order][idx]


def pooled_draws(traces, align_omega=False):
    """Concatenate retained draws across chains; returns ``(values, log_weights, columns)``.

    With ``align_omega`` each chain's omega draws are sign-flipped per
    coordinate so that the chain's weighted median is nonnegative.  The
    likelihood depends on omega only through ``omega**2`` and both priors
    are symmetric, so every coordinate-wise sign flip maps posterior draws
    to posterior draws; aligning removes the arbitrary mode a chain settled
    in before pooling.
    """
    traces = [t for t in traces if t.retained.shape[0]]
    if not traces:
        raise DomainError("no retained draws")
    blocks = []
    for t in traces:
        vals = t.retained.copy()
        if align_omega:
            w = normalized_weights(t.log_weights)
            for j, c in enumerate(t.columns):
                if c.startswith("omega_") and weighted_quantile(vals[:, j], w, 0.5)[0] < 0:
                    vals[:, j] = -vals[:, j]
        blocks.append(vals)
    lw = np.concatenate([t.log_weights for t in traces])
    return np.vstack(blocks), lw, traces[0].columns


@dataclass
class PosteriorSummary:
    names: list
    mean: np.ndarray
    median: np.ndarray
    q025: np.ndarray
    q975: np.ndarray
    significant: np.ndarray
    n_draws: int
    effective_draws: float
    diagnostics: dict = field(default_factory=dict)

    def get(self, name):
        i = self.names.index(name)
        return {
            "mean": float(self.mean[i]),
            "median": float(self.median[i]),
            "q025": float(self.q025[i]),
            "q975": float(self.q975[i]),
            "significant": bool(self.significant[i]),
        }

    def to_dict(self):
        return {
            "n_draws": self.n_draws,
            "effective_draws": self.effective_draws,
            "parameters": {n: self.get(n) for n in self.names},
            "diagnostics": self.diagnostics,
        }


def summarize(traces, weighted=None, align_omega=True):
    """Weighted (sph) or plain (hmc) medians, means and 95% intervals.

    Chains are pooled after omega sign alignment (see :func:`pooled_draws`).
    The log-likelihood and log-weight columns are not summarized.
    """
    vals, lw, cols = pooled_draws(traces, align_omega)
    if weighted is None:
        weighted = "log_weight" in cols
    w = normalized_weights(lw) if weighted else np.full(vals.shape[0], 1.0 / vals.shape[0])
    keep = [i for i, c in enumerate(cols) if c not in ("log_weight", "loglik")]
    names = [cols[i] for i in keep]
    V = vals[:, keep]
    qs = np.array([weighted_quantile(V[:, j], w, [0.025, 0.5, 0.975]) for j in range(V.shape[1])])
    q025, med, q975 = qs[:, 0], qs[:, 1], qs[:, 2]
    return PosteriorSummary(
        names=names,
        mean=w @ V,
        median=med,
        q025=q025,
        q975=q975,
        significant=(q025 > 0) | (q975 < 0),
        n_draws=int(V.shape[0]),
        effective_draws=float(1.0 / np.sum(w**2)),
        diagnostics={f"chain_{k + 1}": t.diagnostics for k, t in enumerate(traces)},
    )


def posterior_predict(traces, model, Xquery, thin=5):
    """Posterior-averaged prediction at ``Xquery`` (inputs on the model's scale).

    Every ``thin``-th pooled retained draw is used; the (weighted) mean of
    the per-draw means is the point prediction, and the variance follows the
    law of total variance.
    """
    if thin < 1:
        raise DomainError("thin must be >= 1")
    vals, lw, cols = pooled_draws(traces)
    sel = np.arange(0, vals.shape[0], thin)
    weighted = "log_weight" in cols
    w = normalized_weights(lw[sel]) if weighted else np.full(sel.size, 1.0 / sel.size)
    bidx = [i for i, c in enumerate(cols) if c.startswith("beta_")]
    widx = [i for i, c in enumerate(cols) if c.startswith("omega_")]
    ti, ei = cols.index("tau2"), cols.index("eta")
    Xq = np.atleast_2d(np.asarray(Xquery, dtype=float))
    if Xq.shape[1] != model.d:
        raise DomainError(f"query points need {model.d} columns, got {Xq.shape[1]}")
    m1 = np.zeros(Xq.shape[0])
    m2 = np.zeros(Xq.shape[0])
    clamped = 0
    for wt, row in zip(w, vals[sel]):
        if wt == 0.0:
            continue
        params = GPParams(row[bidx], row[widx], row[ti], row[ei])
        bundle = model.bundle(params.omega, params.eta)["bundle"]
        pr = _predict_with_bundle(bundle, model.X, model.G, model.y, model.spec, params, Xq)
        m1 += wt * pr.mean
        m2 += wt * (pr.variance + pr.mean**2)
        clamped += pr.n_clamped
    var = m2 - m1**2
    neg = var < 0
    var[neg] = 0.0
    return PredictiveResult(m1, var, clamped + int(np.count_nonzero(neg)), "posterior_average")


@dataclass
class ExperimentConfig:
    benchmark: str = "prespecified_gp"
    d_padded: int = None
    n_train: int = 200
    n_test: int = 1000
    replicates: int = 1
    variant: str = "sph"
    q: float = 1.0
    basis: str = None
    burnin: int = 1600
    iters: int = 3000
    seed: int = 0
    check_every: int = 500
    rhat_threshold: float = 1.1
    noise_frac: float = 0.01
    thin: int = 5
    jobs: int = 1
    jacobian_in_potential: bool = True

    def resolved_basis(self):
        """Linear for the prespecified GP and padded problems, quadratic otherwise."""
        if self.basis is not None:
            return self.basis
        if self.benchmark == "prespecified_gp" or self.d_padded:
            return "linear"
        return "quadratic"


def make_data(cfg, seed):
    """Training and test :class:`Dataset` for one replicate."""
    if cfg.benchmark == "prespecified_gp":
        if cfg.d_padded not in (None, 5):
            raise DomainError("the prespecified GP has fixed dimension 5")
        return simulate_prespecified_gp(cfg.n_train, cfg.n_test, seed)
    f = get_benchmark(cfg.benchmark)
    if cfg.d_padded:
        f = pad_inert_dimensions(f, cfg.d_padded)
    return simulate_benchmark(f, cfg.n_train, cfg.n_test, seed, noise_frac=cfg.noise_frac)


def fit_and_score(train, test, cfg, chain_seeds, jobs=1):
    """Fit two chains on scaled training data and score on the test set."""
    spec = BasisSpec(cfg.resolved_basis(), train.d)
    model = GPModel(train.scale(), train.y, spec)
    prior = PriorConfig(q=cfg.q)
    mcmc = McmcConfig(
        burnin=cfg.burnin,
        iters=cfg.iters,
        check_every=cfg.check_every,
        rhat_threshold=cfg.rhat_threshold,
        jacobian_in_potential=cfg.jacobian_in_potential,
    )
    result = run_two_chains(cfg.variant, model, prior, mcmc, seeds=chain_seeds, jobs=jobs)
    pred = posterior_predict(result.traces, model, train.scale(test.X), thin=cfg.thin)
    rmse = standardized_rmse(test.y, pred.mean)
    return result, summarize(result.traces), rmse


def _replicate_seeds(master, k):
    out = []
    for ss in np.random.SeedSequence(master).spawn(k):
        s = ss.generate_state(3, dtype=np.uint32)
        out.append((int(s[0]), int(s[1]), int(s[2])))
    return out


def _run_replicate(cfg, seeds):
    data_seed, c1, c2 = seeds
    train, test = make_data(cfg, data_seed)
    try:
        result, summary, rmse = fit_and_score(train, test, cfg, (c1, c2))
    except (ChainAbort, NumericError) as exc:
        return {"seed": data_seed, "ok": False, "error": str(exc)}
    rec = {
        "seed": data_seed,
        "ok": not result.degraded and np.isfinite(rmse),
        "rmse": rmse,
        "converged_at": result.converged_at,
        "diagnostics": {
            "chain_seeds": [c1, c2],
            "rhat": result.rhat,
            "degraded": result.degraded,
            "abort": result.abort,
            "chains": [t.diagnostics for t in result.traces],
        },
        "summary": summary.to_dict(),
    }
    if cfg.benchmark != "prespecified_gp":
        rec["input_names"] = list(_input_names(cfg))
    return rec


def _input_names(cfg):
    f = get_benchmark(cfg.benchmark)
    if cfg.d_padded:
        f = pad_inert_dimensions(f, cfg.d_padded)
    return f.names


def replicate_experiment(cfg):
    """Run ``cfg.replicates`` independent replicates and aggregate their RMSE.

    Returns a JSON-serializable report dictionary.
    """
    seeds = _replicate_seeds(cfg.seed, cfg.replicates)
    if cfg.jobs > 1 and cfg.replicates > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as ex:
            per = list(ex.map(lambda s: _run_replicate(cfg, s), seeds))
    else:
        per = [_run_replicate(cfg, s) for s in seeds]
    ok = [r["rmse"] for r in per if r.get("ok")]
    aggregate = {
        "mean": float(np.mean(ok)) if ok else None,
        "sd": float(np.std(ok, ddof=1)) if len(ok) > 1 else None,
        "n_ok": len(ok),
        "n_excluded": len(per) - len(ok),
    }
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "config_echo": asdict(cfg),
        "per_replicate": per,
        "aggregate": aggregate,
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps_report(report):
    """Deterministic JSON text for a report (non-finite floats become null)."""
    return json.dumps(_jsonable(report), indent=2, sort_keys=False) + "\n"
