"""Counter-based Gaussian sampling.

All randomness in the package flows through Philox streams keyed by
(seed, space, stream_id).  A stream is fully determined by its key, so any
number of workers can draw from disjoint streams in any order and still
reproduce bit-for-bit.  Each consumer class gets its own key space; in
particular initial data and driving noise never share a stream, which is what
makes initial data independent of the noise by construction.
"""

import numpy as np

BROWNIAN_SPACE = 0
INITIAL_DATUM_SPACE = 1
GAUSSIAN_AUDIT_SPACE = 2

_MASK64 = (1 << 64) - 1
_STREAM_BITS = 48


def philox_generator(seed, space, stream_id):
    """Generator over an isolated Philox stream for (seed, space, stream_id)."""
    if not 0 <= stream_id < (1 << _STREAM_BITS):
        raise ValueError(f"stream_id must be in [0, 2^{_STREAM_BITS}): {stream_id}")
    key = np.array(
        [
            np.uint64(int(seed) & _MASK64),
            np.uint64((int(space) << _STREAM_BITS) | int(stream_id)),
        ],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))


def normal_draws(seed, space, stream_id, shape):
    """Standard normals, bitwise reproducible from the key and the shape.

    Values are consumed in fixed row-major order, so a (step, channel) entry
    of the returned array is a pure function of (seed, space, stream_id,
    step, channel).
    """
    return philox_generator(seed, space, stream_id).standard_normal(shape)
