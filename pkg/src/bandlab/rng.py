"""Vectorized Philox4x32-10 counter-based generator.

Every random word is a pure function of (key, counter), so any entry of any
trial can be regenerated in isolation.  Keys come from (master_seed, trial)
via numpy's SeedSequence; counters carry (i, j, subtrial, lane).
"""

from __future__ import annotations

import numpy as np

PHILOX_M0 = np.uint64(0xD2511F53)
PHILOX_M1 = np.uint64(0xCD9E8D57)
PHILOX_W0 = np.uint32(0x9E3779B9)
PHILOX_W1 = np.uint32(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
ROUNDS = 10


def philox4x32(counter, key, rounds: int = ROUNDS):
    """Apply Philox4x32 to counters of shape (4, ...) under a 2-word key.

    Key words may be arrays broadcastable against the counters.  Returns four
    uint32 arrays.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint32) for c in counter)
    k0 = np.asarray(key[0], dtype=np.uint32)
    k1 = np.asarray(key[1], dtype=np.uint32)
    with np.errstate(over="ignore"):
        for r in range(rounds):
            if r:
                k0 = k0 + PHILOX_W0
                k1 = k1 + PHILOX_W1
            p0 = c0.astype(np.uint64) * PHILOX_M0
            p1 = c2.astype(np.uint64) * PHILOX_M1
            hi0 = (p0 >> _SHIFT32).astype(np.uint32)
            lo0 = (p0 & _MASK32).astype(np.uint32)
            hi1 = (p1 >> _SHIFT32).astype(np.uint32)
            lo1 = (p1 & _MASK32).astype(np.uint32)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


def trial_key(master_seed: int, trial: int) -> tuple[int, int]:
    """Two 32-bit key words derived from (master_seed, trial)."""
    state = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, int(trial)]).generate_state(2, np.uint32)
    return int(state[0]), int(state[1])


def _unit_open(hi: np.ndarray, lo: np.ndarray) -> np.ndarray:
    """53-bit uniform on the open interval (0, 1)."""
    bits = (hi.astype(np.uint64) >> np.uint64(5)) * np.uint64(1 << 26) + (lo.astype(np.uint64) >> np.uint64(6))
    return (bits.astype(np.float64) + 0.5) / float(1 << 53)


def standard_draws(kind: str, key, i, j, subtrial) -> np.ndarray:
    """Mean-zero, unit-variance draws, one per counter (i, j, subtrial)."""
    k0 = np.asarray(key[0], dtype=np.uint32)
    k1 = np.asarray(key[1], dtype=np.uint32)
    i, j, subtrial = (np.asarray(a, dtype=np.uint32) for a in (i, j, subtrial))
    shape = np.broadcast(i, j, subtrial, k0).shape
    ctr = [np.broadcast_to(a, shape) for a in (i, j, subtrial, np.uint32(0))]
    w0, w1, w2, w3 = philox4x32(ctr, (k0, k1))
    if kind == "gaussian":
        u1 = _unit_open(w0, w1)
        u2 = _unit_open(w2, w3)
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
    if kind == "rademacher":
        return np.where(w0 >> np.uint32(31), 1.0, -1.0)
    if kind == "uniform":
        return np.sqrt(3.0) * (2.0 * _unit_open(w0, w1) - 1.0)
    raise ValueError(f"unknown ensemble kind {kind!r}")
