"""Deterministic seed derivation.

Every random draw is keyed by ``(master_seed, *keys)`` through numpy's
``SeedSequence`` so results do not depend on execution order or thread count.
"""

import numpy as np

STAGES = {"generate": 0, "split": 1, "select": 2, "random_order": 3, "refit": 4}


def derive_seed(master_seed: int, *keys) -> int:
    """63-bit seed from a master seed and integer (or stage-name) keys."""
    spawn = tuple(STAGES[k] if isinstance(k, str) else int(k) for k in keys)
    if any(k < 0 for k in spawn):
        raise ValueError(f"seed keys must be non-negative, got {keys}")
    ss = np.random.SeedSequence(int(master_seed), spawn_key=spawn)
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
