import numpy as np
import pytest

from gammanet.precode import PrecodeError, build_precode, encode_precode, peel_step, verify_precode


def naive_peel(checks, known, values):
    """Sweep every check until nothing changes."""
    changed = True
    while changed:
        changed = False
        for members in checks:
            miss = [p for p in members if not known[p]]
            if len(miss) == 1:
                p = miss[0]
                values[p] = np.bitwise_xor.reduce(values[[q for q in members if q != p]], axis=0)
                known[p] = True
                changed = True
    return known, values


def test_structure(rng):
    G = build_precode(1164, 1200, rng)
    assert G.num_checks == 36
    assert G.rate == pytest.approx(0.97)
    assert sorted(np.concatenate([G.info_positions, G.parity_positions]).tolist()) == list(range(1200))
    for j, members in enumerate(G.checks):
        assert len(set(members.tolist())) == len(members)
        want = G.check_degree - (0 if j else 1)
        assert len(members) == want
    deg = np.bincount(np.concatenate([c[: G.check_degree - 2] for c in G.checks]), minlength=1200)
    assert deg[G.info_positions].max() - deg[G.info_positions].min() <= 1


def test_encode_satisfies_every_check(rng):
    G = build_precode(300, 330, rng)
    info = rng.integers(0, 256, (300, 5), dtype=np.uint8)
    block = encode_precode(info, G)
    assert np.array_equal(block[G.info_positions], info)
    assert verify_precode(block, G)
    block[G.parity_positions[4], 0] ^= 1
    assert not verify_precode(block, G)
    with pytest.raises(PrecodeError):
        encode_precode(info[:-1], G)


def test_peeling_matches_naive_oracle(rng):
    G = build_precode(400, 440, rng)
    block = encode_precode(rng.integers(0, 256, (400, 2), dtype=np.uint8), G)
    for trial in range(20):
        known = rng.random(440) > 0.06
        values = np.where(known[:, None], block, 0).astype(np.uint8)
        before = known.copy()
        k2, v2 = naive_peel(G.checks, known.copy(), values.copy())
        out = peel_step(G, known, values)
        assert np.array_equal(known, k2)
        assert np.array_equal(values[known], block[known])
        assert sorted(p for p, _ in out) == np.flatnonzero(known & ~before).tolist()


def test_peeling_recovers_small_erasure_sets(rng):
    G = build_precode(1000, 1100, rng)
    block = encode_precode(rng.integers(0, 2, (1000, 1), dtype=np.uint8), G)
    known = np.ones(1100, dtype=bool)
    known[rng.choice(1100, 15, replace=False)] = False
    values = np.where(known[:, None], block, 0).astype(np.uint8)
    peel_step(G, known, values)
    assert known.all()
    assert np.array_equal(values, block)


def test_inconsistent_state_detected(rng):
    G = build_precode(50, 60, rng)
    block = encode_precode(rng.integers(0, 256, (50, 1), dtype=np.uint8), G)
    known = np.ones(60, dtype=bool)
    block[G.checks[3][0]] ^= 1
    with pytest.raises(PrecodeError, match="inconsistent"):
        peel_step(G, known, block)


def test_degenerate_sizes(rng):
    with pytest.raises(PrecodeError):
        build_precode(10, 10, rng)
    with pytest.raises(PrecodeError):
        build_precode(0, 10, rng)
