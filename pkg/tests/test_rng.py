import numpy as np
import pytest

from voxaug.rng import MASK64, PCG_INC, PCG_MULT, Rng, seed_for

MULT = 6364136223846793005


def reference_pcg32(seed, inc, n):
    """Scalar reference implementation of the documented PCG32 XSH-RR stream."""
    state = 0
    state = (state * MULT + inc) & MASK64
    state = (state + seed) & MASK64
    state = (state * MULT + inc) & MASK64
    out = []
    for _ in range(n):
        old = state
        state = (old * MULT + inc) & MASK64
        xs = (((old >> 18) ^ old) >> 27) & 0xFFFFFFFF
        rot = old >> 59
        out.append(((xs >> rot) | (xs << ((32 - rot) & 31))) & 0xFFFFFFFF)
    return out


def test_canonical_reference_vector():
    # pcg32-demo, seed 42 / seq 54, round 1
    inc = ((54 << 1) | 1) & MASK64
    expected = [0xA15C02B7, 0x7B47F409, 0xBA1D3330, 0x83D2F293, 0xBFA4784B, 0xCBED606E]
    assert reference_pcg32(42, inc, 6) == expected


def test_stream_matches_reference():
    ref = reference_pcg32(42, PCG_INC, 200)
    rng = Rng(42)
    assert [rng.next_u32() for _ in range(200)] == ref


def test_constants():
    assert PCG_MULT == MULT
    assert PCG_INC % 2 == 1


@pytest.mark.parametrize("n", [1, 2, 3, 17, 1000])
def test_u32_block_equals_scalar(n):
    a, b = Rng(7), Rng(7)
    block = a.u32_block(n)
    scalars = [b.next_u32() for _ in range(n)]
    assert block.tolist() == scalars
    # streams stay aligned after the block
    assert a.next_u32() == b.next_u32()


def test_u32_block_chunking(monkeypatch):
    import voxaug.rng as rngmod

    monkeypatch.setattr(rngmod, "_CHUNK", 7)
    a, b = Rng(123), Rng(123)
    assert a.u32_block(50).tolist() == [b.next_u32() for _ in range(50)]


def test_uniform_block_equals_scalar():
    a, b = Rng(99), Rng(99)
    assert a.uniform_block(37).tolist() == [b.uniform() for _ in range(37)]


def test_uniform_range():
    rng = Rng(3)
    u = rng.uniform_block(10000)
    assert np.all(u >= 0.0) and np.all(u < 1.0)
    lo = rng.uniform_block(1000, -2.0, 5.0)
    assert np.all(lo >= -2.0) and np.all(lo < 5.0)


def test_determinism_and_seed_sensitivity():
    assert Rng(5).u32_block(64).tolist() == Rng(5).u32_block(64).tolist()
    assert Rng(5).u32_block(64).tolist() != Rng(6).u32_block(64).tolist()


def test_normal_block_statistics():
    z = Rng(11).normal_block(200_000)
    assert abs(z.mean()) < 0.01
    assert abs(z.std() - 1.0) < 0.01
    z2 = Rng(11).normal_block(199_999, mean=3.0, std=0.5)
    assert abs(z2.mean() - 3.0) < 0.01
    assert abs(z2.std() - 0.5) < 0.01


def test_int_in_bounds_and_coverage():
    rng = Rng(1)
    draws = [rng.int_in(2, 5) for _ in range(2000)]
    assert set(draws) == {2, 3, 4, 5}


def test_shuffle_is_permutation():
    rng = Rng(8)
    items = list(range(50))
    shuffled = items[:]
    rng.shuffle(shuffled)
    assert sorted(shuffled) == items
    assert shuffled != items  # astronomically unlikely to be identity


# -- seed_for ---------------------------------------------------------------


def _mix_oracle(seed, subject, epoch):
    """Independent reimplementation of the documented mixing function."""
    x = (seed + 0x9E3779B97F4A7C15 * (subject + 1) + 0xD1B54A32D192ED03 * (epoch + 1)) & MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & MASK64
    x ^= x >> 31
    return x


def test_seed_for_golden():
    # the chosen mix evaluated once and frozen
    assert seed_for(0, 0, 0) == 3246858695411730098
    assert seed_for(0, 0, 0) == _mix_oracle(0, 0, 0)


def test_seed_for_deterministic_and_sensitive():
    assert seed_for(5, 17, 2) == seed_for(5, 17, 2)
    assert seed_for(5, 17, 2) != seed_for(5, 17, 3)
    assert seed_for(5, 17, 2) != seed_for(5, 18, 2)
    assert seed_for(5, 17, 2) != seed_for(6, 17, 2)


def test_seed_for_no_collisions_over_grid():
    values = {
        seed_for(s, i, e) for s in range(10) for i in range(100) for e in range(10)
    }
    assert len(values) == 10 * 100 * 10
    for s in range(10):
        for i in range(100):
            for e in range(10):
                assert seed_for(s, i, e) == _mix_oracle(s, i, e)
