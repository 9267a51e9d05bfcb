import hashlib
import math
import random

import numpy as np
import torch


class ContractViolation(ValueError):
    """Raised when an operation is called outside of its documented contract."""


def require(condition: bool, message: str):
    """Raise a ContractViolation with `message` unless `condition` holds."""
    if not condition:
        raise ContractViolation(message)


def is_power_of_two(value: int) -> bool:
    return value >= 1 and (value & (value - 1)) == 0


def log2_int(value: int) -> int:
    """
    Integer base-2 logarithm of a power of two.

    Raises:
        ContractViolation if `value` is not a power of two.
    """
    require(is_power_of_two(int(value)), f"Expected a power of two, got: {value}")
    return int(math.log2(value))


def digest(tensor: torch.Tensor) -> str:
    """SHA-256 of the raw bytes of a tensor (dtype and shape included)."""
    array = tensor.detach().cpu().contiguous().numpy()
    h = hashlib.sha256()
    h.update(str(array.dtype).encode('utf-8'))
    h.update(str(array.shape).encode('utf-8'))
    h.update(array.tobytes())
    return h.hexdigest()


def seed_everything(seed: int):
    """Seed python, numpy and torch generators."""
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)


def item_rng(seed: int, *keys: int) -> np.random.Generator:
    """
    Independent generator for one work item.

    The stream depends only on `seed` and `keys` (e.g. step and batch index),
    so results do not depend on the order items are processed in.
    """
    entropy = [int(seed)] + [int(k) for k in keys]
    require(all(value >= 0 for value in entropy), f"Seeds and keys must be non-negative, got {entropy}")
    return np.random.default_rng(entropy)
