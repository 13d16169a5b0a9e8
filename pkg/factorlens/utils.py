"""Some utils functions."""
import logging
import multiprocessing

import numpy as np
from tqdm import tqdm

L = logging.getLogger(__name__)


def parallel_map(worker, items, n_workers=1, desc=None, chunksize=1):
    """Apply a picklable worker to items, in order.

    With n_workers == 1 this is a plain map, otherwise a multiprocessing pool with a progress
    bar. Results are always returned in the order of items.

    Args:
        worker (callable): picklable callable
        items (list): inputs
        n_workers (int): number of processes
        desc (str): progress bar label
        chunksize (int): chunk size of imap
    """
    items = list(items)
    if n_workers == 1 or len(items) <= 1:
        return list(map(worker, items))

    L.debug("Running %s items on %s workers", len(items), n_workers)
    with multiprocessing.Pool(n_workers) as pool:
        return list(
            tqdm(pool.imap(worker, items, chunksize=chunksize), total=len(items), desc=desc)
        )


def derive_seed(seed, *keys):
    """Integer seed derived from a base seed and replication keys."""
    sequence = np.random.SeedSequence([int(seed), *[int(key) for key in keys]])
    return int(sequence.generate_state(1, dtype=np.uint32)[0])


def derive_rng(seed, *keys):
    """PCG64 generator derived from a base seed and replication keys."""
    sequence = np.random.SeedSequence([int(seed), *[int(key) for key in keys]])
    return np.random.Generator(np.random.PCG64(sequence))
