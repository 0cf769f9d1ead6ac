import numpy as np

from .tensor import Parameter


def snap_float32(a):
    """Round to the nearest float32 so checkpoints reproduce values bit-exactly."""
    return np.asarray(a, dtype=np.float32).astype(np.float64)


def glorot_uniform(name, shape, fan_in, fan_out, rng) -> Parameter:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Parameter(name, snap_float32(rng.uniform(-limit, limit, size=shape)))


def zeros(name, shape) -> Parameter:
    return Parameter(name, np.zeros(shape))


def constant(name, shape, value) -> Parameter:
    return Parameter(name, snap_float32(np.full(shape, value)))
