import functools

import pytest

import wavecast as wc


@functools.lru_cache(maxsize=None)
def scene(kind: str, n: int, qbits: int, seed: int = 3):
    """Cached (volume, compressed, grids, decoded) tuple for test scenes."""
    vol = wc.synthesize(kind, (n, n, n), seed=seed)
    cv = wc.compress_volume(vol, qbits)
    grids = wc.build_grids(cv)
    dec = wc.decode_full(cv)
    return vol, cv, grids, dec


@pytest.fixture(scope="session")
def sphere64():
    return scene("sphere", 64, 16)


@pytest.fixture(scope="session")
def noise64():
    return scene("value_noise", 64, 16)


@pytest.fixture(scope="session")
def ml41():
    return scene("marschner_lobb", 41, 16)
