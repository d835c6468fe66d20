"""Deterministic sub-seed derivation.

All randomness flows from one master seed through named domains so that any
stage can be reproduced in isolation. Domains are fixed small integers; extra
parts (fold index, config index, participant) extend the tuple.
"""

import numpy as np

DOMAIN_GENERATE = 0
DOMAIN_SPLIT = 1
DOMAIN_INIT = 2
DOMAIN_TRAIN = 3
DOMAIN_BACKGROUND = 4


def derive_seed(*parts):
    """Collapse a tuple of integers into one independent 64-bit seed."""
    return int(np.random.SeedSequence(tuple(int(p) for p in parts)).generate_state(1)[0])
