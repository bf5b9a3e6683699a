"""Named random substreams derived from one master seed."""

import numpy as np

from .anchor_chain import CoordinateStreams

STREAMS = {
    "anchors": 0,
    "init": 1,
    "batches": 2,
    "data": 3,
    "predictive": 4,
    "oracle": 5,
}


def substream(seed: int, name: str, *index: int) -> np.random.Generator:
    key = (STREAMS[name], *(int(i) for i in index))
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


def anchor_streams(seed: int, chain: int, size: int) -> CoordinateStreams:
    return CoordinateStreams(seed, size, key=(STREAMS["anchors"], int(chain)))
