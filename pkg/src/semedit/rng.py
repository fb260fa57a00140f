"""Seedable, platform-independent random number generation.

Every stochastic operation in this package draws from numpy's PCG64
(O'Neill's permuted congruential generator, 128-bit state / 64-bit output,
recurrence ``state = state * 0x2360ed051fc65da44385df649fccf645 + inc`` with
XSL-RR output permutation). PCG64 produces an identical stream for a given
seed on every platform numpy supports, which is what makes sampling, training
and the test oracles reproducible across machines.

Sub-streams (per shape, per training step, ...) are derived with
``numpy.random.SeedSequence.spawn`` semantics via `derive`, so two different
purposes never share a stream even when their user-facing seeds collide.
"""

import numpy as np

__all__ = ["make_rng", "derive"]


def make_rng(seed: int) -> np.random.Generator:
    """Return a PCG64 generator seeded deterministically from `seed`."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def derive(seed: int, *keys: int) -> np.random.Generator:
    """Return a generator for the sub-stream identified by (seed, *keys).

    `keys` typically encode things like (example index, training step) so
    that every consumer gets an independent, reproducible stream.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *keys])))
