"""One check per acceptance criterion; each prints a PASS/FAIL line in the terminal summary."""

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from gammanet.analysis import DEParams, check_convergence, overhead, overhead_improved
from gammanet.code import GammaCode
from gammanet.codespec import DegreeDistribution, CodeSpec, builtin
from gammanet.decoder import Decoder, run_until_success
from gammanet.field import GenerationSystem, batch_rank, field_for_q, rank_oracle
from gammanet.optimize import OptimizeConfig, margin_profile, optimize_distribution
from gammanet.sim import ExperimentConfig, run_experiment, validate_rank_model

pytestmark = pytest.mark.slow

ROUNDING = 5e-5
_cache = {}


def report(n, ok, detail):
    ACCEPTANCE.append(f"CRITERION {n}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, detail


def experiment(spec, trials, seed=0):
    key = (spec.name, spec.q, spec.n, trials, seed)
    if key not in _cache:
        _cache[key] = run_experiment(ExperimentConfig(spec, trials, seed, payload=1))
    return _cache[key]


def test_criterion_1_heuristic_overhead():
    t = time.perf_counter()
    eps = 100 * overhead(DEParams.from_spec(builtin("heuristic")))
    dt = time.perf_counter() - t
    report(1, abs(eps - 18.83) <= 0.1 and dt < 1, f"epsilon {eps:.3f}% vs 18.83 +- 0.1, {dt:.2f} s")


def test_criterion_2_tabulated_codes():
    t = time.perf_counter()
    lines, ok = [], True
    for i in range(1, 11):
        spec = builtin(f"c{i}")
        # the robust margin is not part of this criterion, only (P, R, x0, delta)
        params = DEParams.from_spec(spec, robust=None)
        where = "printed"
        if not check_convergence(params).ok:
            params = DEParams.from_spec(spec, robust=None, x0=spec.x0 + ROUNDING, R=spec.R - ROUNDING)
            where = "cell edge"
        conv = check_convergence(params).ok
        eps = 100 * overhead(params, spec.mode)
        want = 100 * spec.extra["epsilon"]
        good = conv and abs(eps - want) <= 0.1
        ok &= good
        lines.append(f"C{i} {where} {eps:.2f}/{want:.2f}{'' if good else ' X'}")
    dt = time.perf_counter() - t
    report(2, ok and dt < 10, f"{'; '.join(lines)}; {dt:.1f} s")


def test_criterion_3_improved_design():
    t = time.perf_counter()
    p = DEParams(25, 0.68, builtin("c1_packet").P, 0.0540, delta=1 - 0.9172)
    Rp, eps = overhead_improved(p)
    dt = time.perf_counter() - t
    ok = abs(100 * Rp - 96.58) <= 0.1 and abs(100 * eps - 6.77) <= 0.1 and dt < 1
    report(3, ok, f"R' {Rp:.5f}, epsilon {100 * eps:.3f}%, {dt:.3f} s")


def test_criterion_4_finite_length_overhead():
    small = experiment(builtin("c4_1675"), 200)
    large = experiment(builtin("c4_8375"), 100)
    m1, m2 = 100 * small.mean_overhead, 100 * large.mean_overhead
    ok = 9.3 <= m1 <= 12.3 and 5.1 <= m2 <= 8.1 and small.failures == large.failures == 0
    report(
        4,
        ok,
        f"N=1675 mean {m1:.2f}% +- {100 * small.stderr:.2f} (200 trials); "
        f"N=8375 mean {m2:.2f}% +- {100 * large.stderr:.2f} (100 trials)",
    )


def test_criterion_5_field_size_ordering():
    base = builtin("c4_1675")
    s = {q: experiment(base.replace(q=q), 200) for q in (2, 16, 256)}
    m = {q: s[q].mean_overhead for q in s}
    gap = m[2] - m[256]
    sigma = np.hypot(s[2].stderr, s[256].stderr)
    ok = m[2] > m[16] > m[256] and gap > 3 * sigma
    report(
        5,
        ok,
        f"q=2 {100 * m[2]:.2f}%, q=16 {100 * m[16]:.2f}%, q=256 {100 * m[256]:.2f}%; "
        f"q=2 minus q=256 is {gap / sigma:.1f} sigma",
    )


def test_criterion_6_rank_law():
    t = time.perf_counter()
    tvs = {r: validate_rank_model(67, 25, 256, r, 10_000, seed=6)[0] for r in (20, 25, 30)}
    dt = time.perf_counter() - t
    ok = max(tvs.values()) <= 0.02 and dt < 60 * len(tvs)
    report(6, ok, ", ".join(f"r={r}: TV {tv:.4f}" for r, tv in tvs.items()) + f"; {dt:.1f} s")


def test_criterion_7_rank_deficiency_bound():
    ctx = field_for_q(16)
    rng = np.random.default_rng(7)
    q, trials = 16, 1_000_000
    parts, ok = [], True
    for m, n in ((6, 4), (8, 8)):
        deficient = 0
        for _ in range(10):
            mats = ctx.random(rng, (trials // 10, m, n))
            deficient += int((batch_rank(ctx, mats) < n).sum())
        rate = deficient / trials
        bound = 1.0 / ((q - 1) * q ** (m - n))
        slack = 3 * np.sqrt(bound * (1 - bound) / trials)
        ok &= rate <= bound + slack
        parts.append(f"{m}x{n}: {rate:.3e} vs bound {bound:.3e} + {slack:.1e}")
    report(7, ok, "; ".join(parts))


def test_criterion_8_elimination_matches_oracle():
    rng = np.random.default_rng(8)
    sizes = [(1, 1), (2, 3), (3, 7), (4, 4), (6, 4), (5, 8), (8, 5), (8, 8)]
    checked = mismatches = 0
    for q in (2, 16, 256):
        ctx = field_for_q(q)
        for rows, cols in sizes:
            mats = ctx.random(rng, (1000, rows, cols))
            # a third of them get a dependent last row
            for k in range(0, 1000, 3):
                if rows > 1:
                    mats[k, -1] = ctx.combine(ctx.random(rng, rows - 1), mats[k, :-1])
            batch = batch_rank(ctx, mats)
            for k in range(1000):
                sysm = GenerationSystem(ctx, cols, 0)
                for r in mats[k]:
                    sysm.add_equation(r, np.zeros(0, dtype=np.uint8))
                want = rank_oracle(ctx, mats[k])
                mismatches += (sysm.rank != want) + (batch[k] != want)
                checked += 1
    report(8, mismatches == 0, f"{checked} matrices, {mismatches} mismatches")


def test_criterion_9_loopback():
    P = DegreeDistribution({2: 0.7, 3: 0.3})
    combos = [(mode, q) for mode in ("dense", "packet-level") for q in (2, 16, 256)]
    failures = 0
    for t in range(1000):
        mode, q = combos[t % len(combos)]
        spec = CodeSpec(4, 8, q, 0.75, 0.9, P, mode)
        code = GammaCode.build(spec, seed=t)
        info = code.random_info(3, t)
        dec = Decoder(code, 3)
        run_until_success(dec, code.source(code.encode(info), t), max_factor=40)
        failures += not np.array_equal(dec.decoded(), info)
    report(9, failures == 0, f"1000 instances over {len(combos)} mode/q pairs, {failures} mismatches")


def test_criterion_10_optimizer():
    t = time.perf_counter()
    res = optimize_distribution(OptimizeConfig(D=10))
    dt = time.perf_counter() - t
    open_chart = margin_profile(res.spec).ok
    ok = res.epsilon <= 0.045 and open_chart and dt <= 1800
    report(10, ok, f"epsilon {100 * res.epsilon:.3f}% (chart open: {open_chart}), {dt:.0f} s")
