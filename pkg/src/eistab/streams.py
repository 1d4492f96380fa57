"""Counter-based random streams.

Every random draw in a run is addressed by ``(master_seed, purpose, trial)`` and,
for matrix rows, additionally by ``row``.  The Philox key is derived from the
first three through :class:`numpy.random.SeedSequence`; the row index occupies
the top word of the 256-bit Philox counter, so row streams never overlap
(each owns 2**192 counter blocks) and a row's values do not depend on which
worker draws it or in what order.
"""
from __future__ import annotations

from enum import IntEnum

import numpy as np


class Purpose(IntEnum):
    MATRIX = 1
    INITIAL = 2
    BATCH = 3
    PROBE = 4


def _key(master_seed: int, purpose: int, trial: int) -> np.ndarray:
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(purpose), int(trial)))
    return ss.generate_state(2, dtype=np.uint64)


def stream(master_seed: int, purpose: int, trial: int, row: int = 0) -> np.random.Generator:
    """Generator for one (seed, purpose, trial, row) address."""
    counter = np.array([0, 0, 0, int(row)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=_key(master_seed, purpose, trial), counter=counter))


def stream_key_hex(master_seed: int, purpose: int, trial: int) -> str:
    return "".join(f"{int(w):016x}" for w in _key(master_seed, purpose, trial))


class TrialStream:
    """Random source for one trial.

    ``rows(n_rows, n_cols)`` returns standard normals where row ``i`` comes from
    its own counter-addressed substream; ``generator(purpose)`` gives a
    trial-level generator for other draws (initial conditions, probes).
    """

    def __init__(self, master_seed: int, trial: int):
        self.master_seed = int(master_seed)
        self.trial = int(trial)

    def rows(self, n_rows: int, n_cols: int) -> np.ndarray:
        out = np.empty((n_rows, n_cols))
        for i in range(n_rows):
            out[i] = stream(self.master_seed, Purpose.MATRIX, self.trial, row=i).standard_normal(n_cols)
        return out

    def generator(self, purpose: int = Purpose.INITIAL) -> np.random.Generator:
        return stream(self.master_seed, purpose, self.trial)

    def __repr__(self):
        return f"TrialStream(master_seed={self.master_seed}, trial={self.trial})"


def batch_generator(master_seed: int, batch: int) -> np.random.Generator:
    """Stream for bulk validation draws (many small matrices at once)."""
    return stream(master_seed, Purpose.BATCH, batch)
