import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bridgegp.errors import DomainError
from bridgegp.evaluation import (
    ExperimentConfig,
    dumps_report,
    normalized_weights,
    posterior_predict,
    replicate_experiment,
    standardized_rmse,
    summarize,
    weighted_quantile,
)
from bridgegp.gibbs import ChainTrace, GPModel, trace_columns
from bridgegp.gp_core import BasisSpec, Dataset, GPParams, predict


def test_rmse_hand_cases():
    y = np.array([0.0, 2.0, 5.0])
    assert standardized_rmse(y, y) == 0.0
    assert standardized_rmse(y, np.full(3, y.mean())) == pytest.approx(1.0)
    assert standardized_rmse([0.0, 2.0], [1.0, 1.0]) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        standardized_rmse([1.0, 1.0], [1.0, 2.0])
    with pytest.raises(DomainError):
        standardized_rmse([1.0, 2.0], [1.0])


def test_weighted_quantile_hand_case():
    v = np.array([3.0, 1.0, 5.0, 2.0, 4.0])
    w = np.array([0.3, 0.1, 0.2, 0.2, 0.2])
    # sorted 1..5 with cumulative weights 0.1, 0.3, 0.6, 0.8, 1.0
    got = weighted_quantile(v, w, [0.025, 0.1, 0.3, 0.5, 0.61, 0.975])
    assert got.tolist() == [1.0, 1.0, 2.0, 3.0, 4.0, 5.0]


@given(
    st.lists(st.floats(-100, 100), min_size=1, max_size=30),
    st.floats(0, 1),
    st.floats(0, 1),
    st.integers(0, 1000),
)
@settings(max_examples=60, deadline=None)
def test_weighted_quantile_monotone(vals, p1, p2, seed):
    w = np.random.default_rng(seed).random(len(vals)) + 1e-3
    a, b = sorted((p1, p2))
    qa, qb = weighted_quantile(vals, w, [a, b])
    assert qa <= qb


def test_zero_weights_rejected():
    with pytest.raises(DomainError):
        normalized_weights([-np.inf, -np.inf])
    with pytest.raises(DomainError):
        weighted_quantile([1.0, 2.0], [0.0, 0.0], 0.5)


def _trace(values, variant="hmc", p=1, d=1):
    cols = trace_columns(variant, p, d)
    return ChainTrace(variant, cols, np.asarray(values, dtype=float), 0)


def _hmc_rows(beta, omega, tau2=1.0, eta=0.1):
    return np.column_stack(
        [beta, np.ones_like(beta), omega, np.ones_like(beta), np.full_like(beta, tau2), np.full_like(beta, eta), np.zeros_like(beta)]
    )


def test_summary_symmetric_and_point_mass():
    b = np.r_[np.linspace(-1, 1, 201)]
    tr = _trace(_hmc_rows(b, np.full(b.size, 2.5)))
    s = summarize([tr])
    beta = s.get("beta_0")
    assert abs(beta["median"]) < 1e-12 and not beta["significant"]
    om = s.get("omega_1")
    assert om["median"] == 2.5 and om["q025"] == 2.5 and om["significant"]
    assert s.n_draws == 201 and s.effective_draws == pytest.approx(201)
    for name in s.names:
        g = s.get(name)
        assert g["q025"] <= g["median"] <= g["q975"]


def test_summary_uses_weights_for_sph():
    cols = trace_columns("sph", 1, 1)
    vals = np.zeros((2, len(cols)))
    vals[:, cols.index("beta_0")] = [1.0, 3.0]
    vals[:, cols.index("omega_1")] = [1.0, 1.0]
    vals[:, cols.index("log_weight")] = [np.log(3.0), 0.0]
    s = summarize([ChainTrace("sph", cols, vals, 0)])
    assert s.get("beta_0")["mean"] == pytest.approx(1.5)


def test_omega_sign_alignment_per_chain():
    a = _trace(_hmc_rows(np.zeros(50), np.full(50, -2.0)))
    b = _trace(_hmc_rows(np.zeros(50), np.full(50, 2.0)))
    s = summarize([a, b])
    assert s.get("omega_1")["mean"] == pytest.approx(2.0)
    s_raw = summarize([a, b], align_omega=False)
    assert s_raw.get("omega_1")["mean"] == pytest.approx(0.0)


def _model():
    rng = np.random.default_rng(0)
    X = rng.random((8, 1))
    y = np.sin(4 * X[:, 0])
    spec = BasisSpec("linear", 1)
    return Dataset(X, y, np.array([[0.0, 1.0]])), GPModel(X, y, spec), spec


def test_predict_single_draw_matches_plugin():
    data, model, spec = _model()
    Xq = np.linspace(0, 1, 7)[:, None]
    row = [0.2, -0.3, 1.0, 3.0, 1.0, 0.7, 0.05, 0.0]
    cols = trace_columns("hmc", 2, 1)
    tr = ChainTrace("hmc", cols, np.array([row]), 0)
    got = posterior_predict([tr], model, Xq, thin=1)
    ref = predict(data, spec, GPParams(np.array([0.2, -0.3]), np.array([3.0]), 0.7, 0.05), Xq)
    assert np.allclose(got.mean, ref.mean, rtol=1e-12) and np.allclose(got.variance, ref.variance, rtol=1e-12)


def test_predict_law_of_total_variance():
    data, model, spec = _model()
    Xq = np.array([[0.15], [0.62]])
    cols = trace_columns("sph", 2, 1)
    draws = [
        ([0.1, 0.5], 2.0, 0.5, 0.01, np.log(0.2)),
        ([-0.2, 1.0], 3.0, 1.2, 0.05, np.log(0.5)),
        ([0.0, 0.0], 1.0, 0.8, 0.10, np.log(0.3)),
    ]
    rows, means, variances, ws = [], [], [], []
    for beta, om, tau2, eta, lw in draws:
        row = np.zeros(len(cols))
        row[cols.index("beta_0")], row[cols.index("beta_1")] = beta
        row[cols.index("omega_1")] = om
        row[cols.index("tau2")], row[cols.index("eta")] = tau2, eta
        row[cols.index("log_weight")] = lw
        rows.append(row)
        r = predict(data, spec, GPParams(np.array(beta), np.array([om]), tau2, eta), Xq)
        means.append(r.mean)
        variances.append(r.variance)
        ws.append(np.exp(lw))
    ws = np.array(ws) / np.sum(ws)
    means, variances = np.array(means), np.array(variances)
    mu = ws @ means
    var = ws @ (variances + means**2) - mu**2
    got = posterior_predict([ChainTrace("sph", cols, np.array(rows), 0)], model, Xq, thin=1)
    assert np.allclose(got.mean, mu, rtol=1e-12)
    assert np.allclose(got.variance, var, rtol=1e-10)


def test_predict_identical_draws_keep_variance():
    data, model, spec = _model()
    row = [0.2, -0.3, 1.0, 3.0, 1.0, 0.7, 0.05, 0.0]
    tr = ChainTrace("hmc", trace_columns("hmc", 2, 1), np.array([row, row]), 0)
    Xq = np.array([[0.3], [0.9]])
    one = posterior_predict([ChainTrace("hmc", tr.columns, np.array([row]), 0)], model, Xq, thin=1)
    two = posterior_predict([tr], model, Xq, thin=1)
    assert np.allclose(one.mean, two.mean) and np.allclose(one.variance, two.variance)


def test_predict_empty_trace_rejected():
    _, model, _ = _model()
    tr = ChainTrace("hmc", trace_columns("hmc", 2, 1), np.zeros((0, 8)), 0)
    with pytest.raises(DomainError):
        posterior_predict([tr], model, np.zeros((1, 1)))


TINY = dict(benchmark="borehole", n_train=25, n_test=40, burnin=30, iters=60, check_every=30, q=0.8, basis="linear")


def test_replicate_experiment_report():
    rep = replicate_experiment(ExperimentConfig(replicates=1, **TINY))
    assert rep["schema_version"] == 1
    assert rep["aggregate"]["sd"] is None and rep["aggregate"]["n_ok"] == 1
    r = rep["per_replicate"][0]
    assert np.isfinite(r["rmse"]) and r["converged_at"] <= 60
    assert {"seed", "rmse", "converged_at", "diagnostics"} <= set(r)


def test_replicate_experiment_reproducible():
    cfg = ExperimentConfig(replicates=2, variant="hmc", **TINY)
    a, b = dumps_report(replicate_experiment(cfg)), dumps_report(replicate_experiment(cfg))
    assert a == b
