import random
from typing import List, Optional
import numpy as np
import torch


def set_seed(seed: Optional[int]):
    """Function that sets the seed for pseudo-random number generators."""
    if seed is not None:
        random.seed(seed)
        np.random.seed(seed)
        torch.manual_seed(seed)


def spawn_generators(seed: int, count: int, *key: int) -> List[np.random.Generator]:
    """
    Independent rng streams, one per episode or trajectory.

    The optional key selects a sub-tree of the seed sequence so that
    different phases of a run never share a stream.
    """
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=tuple(key))
    return [np.random.default_rng(child) for child in sequence.spawn(count)]
