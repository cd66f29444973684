import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gammanet.analysis import DEParams, check_convergence, overhead_dense, overhead_improved
from gammanet.codespec import DegreeDistribution, Robust, SpecError, builtin
from gammanet.optimize import (
    InfeasibleError,
    OptimizeConfig,
    inner_search,
    margin_profile,
    optimize_distribution,
    project_simplex,
)

X2 = DegreeDistribution({2: 1.0})


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=12))
def test_projection_lands_on_simplex(v):
    p = project_simplex(v)
    assert np.all(p >= 0) and p.sum() == pytest.approx(1.0)
    # idempotent, and no simplex point is closer to v
    assert np.allclose(project_simplex(p), p)
    rng = np.random.default_rng(len(v))
    for w in rng.dirichlet(np.ones(len(v)), 20):
        assert np.linalg.norm(w - v) >= np.linalg.norm(p - v) - 1e-9


def test_projection_rejects_nan():
    with pytest.raises(ValueError):
        project_simplex([0.5, np.nan])


def _check_result(res, P, mode):
    params = DEParams(25, res.R, P, res.x0, delta=res.delta)
    assert check_convergence(params).ok
    eps = overhead_improved(params)[1] if mode == "packet-level" else overhead_dense(params)
    assert eps == pytest.approx(res.epsilon, rel=1e-6)
    assert 1 - res.delta >= 0.5


def test_inner_search_dense_degree_two():
    res = inner_search(X2)
    _check_result(res, X2, "dense")
    assert 100 * res.epsilon == pytest.approx(11.40, abs=0.3)


def test_inner_search_packet_level_degree_two():
    res = inner_search(X2, mode="packet-level")
    _check_result(res, X2, "packet-level")
    assert 100 * res.epsilon == pytest.approx(6.74, abs=0.3)
    assert res.R_prime > 1 - res.delta


def test_inner_search_on_tabulated_distribution():
    spec = builtin("c3")
    res = inner_search(spec.P)
    _check_result(res, spec.P, "dense")
    # the tabulated design point is on (or next to) the grid, so the search does at least as well
    assert res.epsilon <= spec.extra["epsilon"] + 1e-3


def test_rate_near_one_never_opens_the_chart():
    for x0 in np.linspace(0.01, 0.3, 30):
        assert not check_convergence(DEParams(25, 0.99, X2, x0, delta=0.5)).ok
    cfg = OptimizeConfig(R_range=(0.98, 0.99), R_step=0.0001)
    with pytest.raises(InfeasibleError):
        inner_search(X2, config=cfg)


def test_config_validation():
    with pytest.raises(SpecError):
        OptimizeConfig(D=1)
    with pytest.raises(SpecError):
        OptimizeConfig(mode="sparse")
    with pytest.raises(SpecError):
        OptimizeConfig(robust=Robust(0.75, 0.01))


def test_degree_two_only_is_trivial():
    res = optimize_distribution(OptimizeConfig(D=2))
    assert res.spec.P.as_array().tolist() == [1.0]
    assert 100 * res.epsilon == pytest.approx(11.40, abs=0.3)


def test_margin_profile_reports():
    c4 = margin_profile(builtin("c4"))
    assert not c4.ok and abs(c4.min_margin) < 1e-4
    c6 = margin_profile(builtin("c6"))
    assert c6.ok and c6.min_margin > 0 and c6.min_upper_margin is None
    c9 = margin_profile(builtin("c9"))
    assert c9.min_upper_margin == pytest.approx(0.0286, abs=5e-4)


def test_small_optimization_beats_degree_two():
    cfg = OptimizeConfig(D=5, starts=3, max_iter=40, taus=(0.01, 0.0))
    res = optimize_distribution(cfg)
    base = inner_search(X2, config=cfg)
    assert res.epsilon < base.epsilon - 0.01
    w = res.spec.P.as_array()
    assert np.argmax(w) == 0
    assert margin_profile(res.spec).ok
    assert len(res.history) == 3 and min(res.history) <= res.epsilon + 1e-3


@pytest.mark.slow
def test_robust_design_overhead():
    cfg = OptimizeConfig(D=15, robust=Robust(0.2, 0.03), starts=12)
    res = optimize_distribution(cfg)
    assert res.epsilon <= 0.10
    report = margin_profile(res.spec)
    assert report.ok and report.min_upper_margin > 0.03
