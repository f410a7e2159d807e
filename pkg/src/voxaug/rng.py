"""Deterministic, platform-independent random number generation.

All randomness in the engine flows through :class:`Rng`, a PCG32 generator
(O'Neill's permuted congruential generator, XSH-RR output variant). The
constants are fixed here so the stream is identical on every platform and
numpy version:

    state'   = state * 6364136223846793005 + 1442695040888963407   (mod 2^64)
    output   = rotr32(((state >> 18) ^ state) >> 27, state >> 59)

Seeding follows the PCG reference: state = 0, step, state += seed, step.

Derived draws are built from the u32 stream in a documented order:

* ``next_u64`` = high 32 bits first, then low.
* ``uniform`` in [0, 1) = ``(next_u64 >> 11) * 2**-53``.
* normals use Box-Muller on uniform pairs (all radii drawn before all angles
  within one block call).

Block methods produce exactly the same values as repeated scalar calls; they
vectorize the LCG jump ``state_i = a^i * s0 + c * (a^(i-1) + ... + 1)`` with
numpy uint64 wraparound arithmetic.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
PCG_MULT = 6364136223846793005
# default stream: reference initseq 0xda3e39cb94b95bdb -> inc = (seq << 1) | 1
PCG_INC = ((0xDA3E39CB94B95BDB << 1) | 1) & MASK64

_CHUNK = 1 << 20  # block generation chunk, bounds temp memory at ~24 MiB


def _mix64(x: int) -> int:
    """splitmix64 finalizer; full-avalanche 64-bit mix."""
    x &= MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & MASK64
    x ^= x >> 31
    return x


def seed_for(global_seed: int, subject_index: int, epoch: int) -> int:
    """Derive a per-subject, per-epoch seed from one global seed.

    The mix is ``splitmix64(seed + K1*(subject_index+1) + K2*(epoch+1))``
    with K1 = 0x9E3779B97F4A7C15 and K2 = 0xD1B54A32D192ED03, so parallel
    workers reproduce single-threaded results no matter how subjects are
    scheduled.
    """
    x = (
        global_seed
        + 0x9E3779B97F4A7C15 * (subject_index + 1)
        + 0xD1B54A32D192ED03 * (epoch + 1)
    ) & MASK64
    return _mix64(x)


class Rng:
    """Seedable PCG32 stream. Single-owner: never share one instance across threads."""

    def __init__(self, seed: int):
        self._state = 0
        self._step()
        self._state = (self._state + (int(seed) & MASK64)) & MASK64
        self._step()

    def _step(self) -> int:
        """Advance one step, returning the pre-advance state."""
        old = self._state
        self._state = (old * PCG_MULT + PCG_INC) & MASK64
        return old

    @staticmethod
    def _output(old_state: int) -> int:
        xorshifted = (((old_state >> 18) ^ old_state) >> 27) & 0xFFFFFFFF
        rot = old_state >> 59
        return ((xorshifted >> rot) | (xorshifted << ((32 - rot) & 31))) & 0xFFFFFFFF

    def next_u32(self) -> int:
        return self._output(self._step())

    def next_u64(self) -> int:
        hi = self.next_u32()
        lo = self.next_u32()
        return (hi << 32) | lo

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        """One float64 uniform in [low, high)."""
        u = (self.next_u64() >> 11) * 2.0**-53
        return low + (high - low) * u

    def int_in(self, low: int, high: int) -> int:
        """Uniform integer in [low, high] inclusive (53-bit scaled draw)."""
        if high < low:
            raise ValueError("empty integer range")
        return low + int(self.uniform() * (high - low + 1))

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle driven by this stream."""
        for i in range(len(items) - 1, 0, -1):
            j = self.int_in(0, i)
            items[i], items[j] = items[j], items[i]

    def derive_seed(self) -> int:
        """Draw a 64-bit seed for an independent child stream."""
        return self.next_u64()

    # -- vectorized blocks ---------------------------------------------------

    def u32_block(self, n: int) -> np.ndarray:
        """n u32 draws, identical to n calls of next_u32()."""
        out = np.empty(n, dtype=np.uint32)
        filled = 0
        while filled < n:
            m = min(_CHUNK, n - filled)
            out[filled : filled + m] = self._u32_chunk(m)
            filled += m
        return out

    def _u32_chunk(self, n: int) -> np.ndarray:
        mult = np.full(n, PCG_MULT, dtype=np.uint64)
        mult[0] = 1
        powers = np.multiply.accumulate(mult)  # a^0 .. a^(n-1), wrapping
        geo = np.zeros(n, dtype=np.uint64)  # sum_{k<i} a^k
        if n > 1:
            geo[1:] = np.add.accumulate(powers)[:-1]
        states = powers * np.uint64(self._state) + geo * np.uint64(PCG_INC)
        # advance the scalar state past the block
        self._state = (int(states[-1]) * PCG_MULT + PCG_INC) & MASK64
        xorshifted = (((states >> np.uint64(18)) ^ states) >> np.uint64(27)).astype(
            np.uint32
        )
        rot = (states >> np.uint64(59)).astype(np.uint32)
        return (xorshifted >> rot) | (
            xorshifted << ((np.uint32(32) - rot) & np.uint32(31))
        )

    def uniform_block(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """n float64 uniforms in [low, high), matching n scalar uniform() calls."""
        raw = self.u32_block(2 * n).astype(np.uint64)
        u64 = (raw[0::2] << np.uint64(32)) | raw[1::2]
        u = (u64 >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return low + (high - low) * u

    def normal_block(self, n: int, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        """n Gaussian draws via Box-Muller (pairs; radii uniforms before angles)."""
        m = (n + 1) // 2
        u1 = self.uniform_block(m)
        u2 = self.uniform_block(m)
        r = np.sqrt(-2.0 * np.log1p(-u1))
        theta = (2.0 * np.pi) * u2
        z = np.empty(2 * m, dtype=np.float64)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        return mean + std * z[:n]
