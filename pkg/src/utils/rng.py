"""
Counter-based random streams

Every random draw in the repository comes from a Philox generator keyed by the
run seed. The high words of the 256-bit counter carry a block index and a
stream id, so each (stream, index) pair owns a disjoint, reproducible sequence
regardless of how work is split across workers.
"""
import numpy as np

# Stream ids; never renumber, persisted datasets depend on them
STREAMS = {
    "direction": 1,
    "data/train": 2,
    "data/test": 3,
    "init": 4,
    "shuffle": 5,
    "subsample": 6,
    "vanish": 7,
    "gradcheck": 8,
}


def derive_rng(seed: int, stream: str, index: int = 0) -> np.random.Generator:
    """
    Get the generator for one labeled stream block

    Args:
        seed: Run seed (nonnegative, < 2**128)
        stream: Stream label, one of STREAMS
        index: Block index within the stream (bag id, epoch, chunk, ...)

    Returns:
        Fresh numpy Generator positioned at the start of the block
    """
    if stream not in STREAMS:
        raise ValueError(f"Unknown random stream '{stream}'")
    if seed < 0 or index < 0:
        raise ValueError(f"seed and index must be nonnegative, got {seed}, {index}")
    counter = np.array([0, 0, index, STREAMS[stream]], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=seed, counter=counter))
