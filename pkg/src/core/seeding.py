# core/seeding.py
"""Named random substreams hanging off one root seed.

Every consumer asks for its own stream by name ("mask", "distractor", ...),
so adding a stage or a draw in one place never shifts the draws of another.
"""
import hashlib

import numpy as np
import torch


def _name_key(name: str) -> list[int]:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


def seed_sequence(root_seed: int, name: str, *ordinals: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(
        entropy=int(root_seed), spawn_key=(*_name_key(name), *map(int, ordinals))
    )


def substream(root_seed: int, name: str, *ordinals: int) -> np.random.Generator:
    """numpy Generator for (root seed, stream name, optional ordinals)"""
    return np.random.default_rng(seed_sequence(root_seed, name, *ordinals))


def derive_seed(root_seed: int, name: str, *ordinals: int) -> int:
    """63-bit integer seed, for torch generators and serialized records"""
    state = seed_sequence(root_seed, name, *ordinals).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


def torch_generator(root_seed: int, name: str, *ordinals: int) -> torch.Generator:
    generator = torch.Generator()
    generator.manual_seed(derive_seed(root_seed, name, *ordinals))
    return generator


def round_half_up(value: float) -> int:
    """Count rounding used by every proportion rule (0.5 rounds up)"""
    return int(np.floor(value + 0.5))
