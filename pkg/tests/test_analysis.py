import io
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import gammaincc

from gammanet.analysis import (
    DEParams,
    check_convergence,
    de_map,
    de_step,
    evolution_chart,
    expected_rank_counts,
    gamma_reg,
    gamma_reg_inv,
    heuristic_px,
    improved_rate,
    overhead,
    overhead_dense,
    overhead_improved,
    rank_pmf_binomial,
    rank_pmf_poisson,
    trajectory,
    write_chart,
)
from gammanet.codespec import DegreeDistribution, Robust, SpecError, builtin

X2 = DegreeDistribution({2: 1.0})


def corner(name, **kw):
    # the printed (x0, R) are rounded; this is the edge of their rounding cell
    spec = builtin(name)
    return DEParams.from_spec(spec, x0=spec.x0 + 5e-5, R=spec.R - 5e-5, **kw)


@pytest.mark.parametrize("g", [1, 2, 25, 50, 75, 300])
def test_gamma_reg_matches_scipy(g):
    x = np.linspace(0, 3 * g + 10, 200)
    assert np.allclose(gamma_reg(g, x), gammaincc(g, x), rtol=1e-11, atol=1e-300)


def test_gamma_reg_matches_poisson_sum():
    mpmath.mp.dps = 40
    for g, x in [(25, 20.5), (25, 31.0), (75, 60.0), (3, 0.01)]:
        want = mpmath.exp(-x) * mpmath.fsum(mpmath.mpf(x) ** i / mpmath.factorial(i) for i in range(g))
        assert gamma_reg(g, x) == pytest.approx(float(want), rel=1e-12)


def test_gamma_reg_edges():
    assert gamma_reg(25, 0.0) == 1.0
    assert gamma_reg(1, 2.0) == pytest.approx(math.exp(-2))
    assert gamma_reg(25, 1e4) < 1e-300
    with pytest.raises(ValueError):
        gamma_reg(25, -1.0)
    with pytest.raises(ValueError):
        gamma_reg(0, 1.0)


@given(st.integers(1, 100), st.floats(1e-12, 1.0))
def test_gamma_inverse_roundtrip(g, y):
    x = gamma_reg_inv(g, y)
    if y == 1.0:
        assert x == 0.0
    else:
        assert gamma_reg(g, x) == pytest.approx(y, rel=1e-9, abs=1e-13)


def test_gamma_inverse_domain():
    for y in (0.0, -0.1, 1.5, float("nan")):
        with pytest.raises(ValueError):
            gamma_reg_inv(25, y)
    ys = np.array([0.9, 0.5, 0.1])
    assert np.all(np.diff(gamma_reg_inv(25, ys)) > 0)


@pytest.mark.parametrize("r", [0.0, 0.4, 1.0, 25.0, 40.0])
def test_rank_pmfs(r):
    p = rank_pmf_poisson(r, 25)
    assert len(p) == 26 and p.sum() == pytest.approx(1.0) and np.all(p >= 0)
    b = rank_pmf_binomial(r, 10_000, 25)
    assert b.sum() == pytest.approx(1.0)
    assert 0.5 * np.abs(p - b).sum() <= 1e-3
    assert expected_rank_counts(r, 10_000, 25).sum() == pytest.approx(10_000)


def test_rank_pmf_binomial_small_cases():
    assert rank_pmf_binomial(3, 1, 5).tolist() == [0, 0, 0, 1, 0, 0]
    assert rank_pmf_binomial(0, 7, 5)[0] == 1.0
    with pytest.raises(ValueError):
        rank_pmf_binomial(0.3, 7, 5)
    with pytest.raises(ValueError):
        rank_pmf_poisson(-1, 5)


def test_heuristic_px():
    P = heuristic_px(33)
    assert sum(P.weights) == pytest.approx(1.0)
    assert P.max_degree == 34
    assert heuristic_px(2).as_array().tolist() == pytest.approx([0.5, 0.5])
    with pytest.raises(ValueError):
        heuristic_px(1)


def test_de_step_basics():
    p = DEParams(25, 0.6, X2, 0.05)
    assert de_step(p, 0.0) == pytest.approx(0.05, abs=1e-12)
    xs = np.linspace(0, 1, 200)
    assert np.all(np.diff(de_map(p, xs)) >= 0)
    # more parity means more help per round
    assert de_step(DEParams(25, 0.5, X2, 0.05), 0.5) > de_step(p, 0.5)


def test_params_validation():
    with pytest.raises(SpecError):
        DEParams(25, 0.6, X2, 0.0)
    with pytest.raises(SpecError):
        DEParams(25, 0.6, X2, 0.1, delta=0.95)
    with pytest.raises(SpecError):
        DEParams(25, 0.6, X2, 0.1, robust=Robust(0.95, 0.01))
    assert DEParams(25, 0.6, X2, 0.1, delta=0.0).upper == 1.0


@pytest.mark.parametrize("name", ["c1", "c4", "c6", "c8"])
def test_trajectory_agrees_with_convergence_check(name):
    p = DEParams.from_spec(builtin(name))
    conv = check_convergence(p)
    tr = trajectory(p)
    assert conv.ok == tr.converged
    if not conv.ok:
        assert tr.closing_point == pytest.approx(conv.closing_point, abs=1e-6)


def test_trajectory_of_a_stuck_chart():
    p = DEParams(25, 0.99, X2, 0.05)
    conv, tr = check_convergence(p), trajectory(p)
    assert not conv.ok and not tr.converged
    assert tr.closing_point == pytest.approx(conv.closing_point, abs=1e-6)
    assert conv.closing_point < 0.2


@pytest.mark.parametrize("name,want", [("c1", 11.43), ("c6", 2.60), ("c7", 2.17)])
def test_tabulated_overheads(name, want):
    spec = builtin(name)
    p = DEParams.from_spec(spec)
    if not check_convergence(p).ok:
        p = corner(name)
    assert check_convergence(p).ok
    assert 100 * overhead_dense(p) == pytest.approx(want, abs=0.1)
    assert 100 * spec.extra["epsilon"] == pytest.approx(want)


def test_robust_margin_of_c10():
    p = corner("c10")
    conv = check_convergence(p)
    assert conv.ok
    assert conv.margin_profile.min(0.9, p.upper) > 0.01


def test_improved_design():
    p = DEParams.from_spec(builtin("c1_packet"))
    Rp, eps = overhead_improved(p)
    assert Rp == pytest.approx(0.9658, abs=5e-5)
    assert 100 * eps == pytest.approx(6.77, abs=0.05)
    assert eps < overhead_dense(p)
    assert overhead(p, "packet-level") == eps and overhead(p) == overhead_dense(p)
    # with nothing left to recover the two coincide
    p0 = DEParams(p.g, p.R, p.P, p.x0, delta=0.0)
    assert improved_rate(p0) == 1.0
    assert overhead_improved(p0)[1] == pytest.approx(overhead_dense(p0))


def test_improved_rate_degree_bound():
    P = DegreeDistribution({2: 0.1, 20: 0.9})
    with pytest.raises(SpecError):
        improved_rate(DEParams(25, 0.9, P, 0.05, delta=0.1))


def test_chart_rows_and_csv(tmp_path):
    p = DEParams.from_spec(builtin("c4"))
    rows = evolution_chart(p, grid=101, path=tmp_path / "c.csv")
    assert len(rows) == 101 and rows[0][0] == 0.0 and rows[-1][0] == 1.0
    assert all(d == x for x, _, d in rows)
    text = (tmp_path / "c.csv").read_text().splitlines()
    assert text[0] == "x,f_x,diag" and len(text) == 102
    buf = io.StringIO()
    write_chart(rows[:2], buf)
    assert buf.getvalue().splitlines()[1].startswith("0.000000,")


def test_high_rate_code_closes_sooner():
    # C1 is designed to stop at 1 - delta = 0.9433; C6 stays open up to 0.9911
    c1, c6 = DEParams.from_spec(builtin("c1")), DEParams.from_spec(builtin("c6"))
    xs = np.array([0.97, 0.99])
    assert np.all(de_map(c1, xs) - xs < 0)
    assert np.all(de_map(c6, xs) - xs > 0)


def test_rate_one_never_converges():
    for x0 in (0.05, 0.2, 0.3):
        assert not check_convergence(DEParams(25, 1.0, X2, x0)).ok


def test_heuristic_design_point_behaviour():
    # at the stated x0 the chart of the heuristic code touches the diagonal early
    p = DEParams.from_spec(builtin("heuristic"))
    conv = check_convergence(p)
    assert not conv.ok
    assert conv.closing_point == pytest.approx(0.2489, abs=1e-3)
    assert 100 * overhead_dense(p) == pytest.approx(18.686, abs=0.01)
