"""Stream key derivation shared by both kernel backends."""

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
M1 = 0xBF58476D1CE4E5B9
M2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    z &= MASK
    z = ((z ^ (z >> 30)) * M1) & MASK
    z = ((z ^ (z >> 27)) * M2) & MASK
    return z ^ (z >> 31)


def stream_key(seed: int, stream: int, round_index: int) -> int:
    """Key for the per-device counter stream ``(seed, stream, round)``."""
    return mix64(mix64(seed) ^ mix64(((stream & 0xFFFF) << 40) + (round_index & 0xFFFFFFFFFF) + GOLDEN))
