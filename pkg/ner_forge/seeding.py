import numpy as np

from ner_forge.config import RNG_STREAMS


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named use of the run seed."""
    return np.random.default_rng([int(seed), RNG_STREAMS[name]])
