"""Seed derivation so a single config seed pins every random stream."""
import hashlib
import random

import numpy as np
import torch


def derive_seed(seed: int, name: str) -> int:
    """
    Derive a named sub-seed from the run seed.

    Args:
        seed: Run-level seed
        name: Name of the random stream (e.g. ``"init.refiner"``)

    Returns:
        A 31-bit integer seed, stable across platforms and Python versions
    """
    digest = hashlib.sha256(f"{seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big") & 0x7FFFFFFF


def seed_everything(seed: int):
    """Seed the global Python, NumPy and torch generators."""
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)
