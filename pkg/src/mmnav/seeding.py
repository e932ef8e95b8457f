"""Deterministic 64-bit seed derivation.

A single global seed fans out to per-stream seeds through splitmix64 so
that adding streams (environments, episodes, noise sources) never perturbs
existing ones.  The mix is specified bit-exactly so that scenes reproduce
across platforms and implementations:

    derive(seed, index) = splitmix64(splitmix64(seed) XOR
                                     splitmix64(index * 0x9E3779B97F4A7C15))

with splitmix64 the standard finalizer (Steele et al. output mix).
"""

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """One splitmix64 output step on a 64-bit state."""
    x = (x + _GOLDEN) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def derive_seed(seed: int, index: int) -> int:
    """Derive the seed of stream `index` from a global seed."""
    a = splitmix64(seed & MASK64)
    b = splitmix64((index * _GOLDEN) & MASK64)
    return splitmix64(a ^ b)


def derive_seed_chain(seed: int, *indices: int) -> int:
    """Derive a seed along a path of stream indices (env, episode, ...)."""
    s = seed & MASK64
    for idx in indices:
        s = derive_seed(s, idx)
    return s
